"""Exception hierarchy. Each class maps to one CLI failure class."""


class IotGuardError(Exception):
    exit_code = 1
    failure_class = "error"


class ConfigError(IotGuardError):
    exit_code = 2
    failure_class = "config"


class ParseError(IotGuardError):
    exit_code = 3
    failure_class = "parse"


class PlanError(ParseError):
    """A preprocessing plan is malformed or references a missing column."""


class AdvisorResponseError(ParseError):
    """An LLM answer did not contain a usable preprocessing plan."""


class TransportError(IotGuardError):
    exit_code = 4
    failure_class = "transport"


class ProtocolError(TransportError):
    """The endpoint answered, but not with a chat-completion payload."""


class FixtureMissError(TransportError):
    def __init__(self, digest: str, directory: str):
        super().__init__(f"no fixture for request hash {digest} in {directory}")
        self.digest = digest


class NumericError(IotGuardError):
    exit_code = 5
    failure_class = "numeric"
