"""Synthetic connection records in the KDDCup99 CSV layout.

The generator mimics the broad shape of the public file (normal web/mail/
DNS traffic plus smurf, neptune, scan and a few rarer attack families) so
the CLI and tests can run without the real data. It makes no claim about
detection rates on the real file.

    python -m iotguard.synth out.csv --rows 5000 --seed 0
"""

from __future__ import annotations

import argparse
import csv
from pathlib import Path

import numpy as np

from .data import kdd_schema

NAMES = kdd_schema().names

# (label, share of attack rows)
ATTACK_MIX = (
    ("smurf", 0.55),
    ("neptune", 0.27),
    ("back", 0.04),
    ("satan", 0.04),
    ("ipsweep", 0.04),
    ("portsweep", 0.03),
    ("teardrop", 0.02),
    ("warezclient", 0.01),
)


def _rate(rng, lo, hi):
    return round(float(rng.uniform(lo, hi)), 2)


def _normal(rng) -> dict:
    r = {}
    kind = rng.choice(["http", "smtp", "ftp_data", "domain_u", "ecr_i", "private_udp", "telnet"],
                      p=[0.55, 0.12, 0.1, 0.12, 0.03, 0.05, 0.03])
    if kind == "http":
        r.update(protocol_type="tcp", service="http", flag="SF",
                 src_bytes=int(rng.lognormal(5.4, 0.4)), dst_bytes=int(rng.lognormal(7.8, 1.0)), logged_in=1)
    elif kind == "smtp":
        r.update(protocol_type="tcp", service="smtp", flag="SF", duration=int(rng.integers(0, 5)),
                 src_bytes=int(rng.lognormal(7.0, 0.6)), dst_bytes=int(rng.lognormal(5.8, 0.3)), logged_in=1)
    elif kind == "ftp_data":
        r.update(protocol_type="tcp", service="ftp_data", flag="SF",
                 src_bytes=int(rng.lognormal(7.5, 1.5)), dst_bytes=0, logged_in=1)
    elif kind == "telnet":
        r.update(protocol_type="tcp", service="telnet", flag="SF", duration=int(rng.integers(5, 300)),
                 src_bytes=int(rng.lognormal(6.0, 0.8)), dst_bytes=int(rng.lognormal(8.0, 0.8)), logged_in=1,
                 hot=int(rng.integers(0, 3)), num_file_creations=int(rng.integers(0, 2)))
    elif kind == "domain_u":
        r.update(protocol_type="udp", service="domain_u", flag="SF",
                 src_bytes=int(rng.integers(30, 50)), dst_bytes=int(rng.integers(80, 200)))
    elif kind == "private_udp":
        r.update(protocol_type="udp", service="private", flag="SF",
                 src_bytes=int(rng.integers(100, 120)), dst_bytes=int(rng.integers(100, 120)))
    else:
        r.update(protocol_type="icmp", service="ecr_i", flag="SF", src_bytes=int(rng.integers(20, 60)))
    count = int(rng.integers(1, 15))
    r.update(
        count=count, srv_count=count + int(rng.integers(0, 10)),
        same_srv_rate=1.0, diff_srv_rate=0.0, srv_diff_host_rate=_rate(rng, 0, 0.2),
        dst_host_count=int(rng.integers(1, 256)), dst_host_srv_count=int(rng.integers(50, 256)),
        dst_host_same_srv_rate=_rate(rng, 0.8, 1.0), dst_host_diff_srv_rate=_rate(rng, 0, 0.05),
        dst_host_same_src_port_rate=_rate(rng, 0, 0.1), dst_host_srv_diff_host_rate=_rate(rng, 0, 0.1),
    )
    return r


def _attack(rng, label: str) -> dict:
    r: dict = {}
    if label == "smurf":
        r.update(protocol_type="icmp", service="ecr_i", flag="SF", src_bytes=int(rng.choice([520, 1032])),
                 count=511, srv_count=511, same_srv_rate=1.0, dst_host_count=255, dst_host_srv_count=255,
                 dst_host_same_srv_rate=1.0, dst_host_same_src_port_rate=1.0)
    elif label == "neptune":
        flag = rng.choice(["S0", "REJ"], p=[0.8, 0.2])
        count = int(rng.integers(100, 300))
        serr = 1.0 if flag == "S0" else 0.0
        r.update(protocol_type="tcp", service=str(rng.choice(["private", "telnet", "ftp_data", "http", "finger"])),
                 flag=str(flag), count=count, srv_count=int(rng.integers(1, 25)),
                 serror_rate=serr, srv_serror_rate=serr, rerror_rate=1 - serr, srv_rerror_rate=1 - serr,
                 same_srv_rate=_rate(rng, 0, 0.1), diff_srv_rate=_rate(rng, 0.05, 0.08),
                 dst_host_count=255, dst_host_srv_count=int(rng.integers(1, 25)),
                 dst_host_same_srv_rate=_rate(rng, 0, 0.1), dst_host_diff_srv_rate=_rate(rng, 0.05, 0.08),
                 dst_host_serror_rate=serr, dst_host_srv_serror_rate=serr,
                 dst_host_rerror_rate=1 - serr, dst_host_srv_rerror_rate=1 - serr)
    elif label == "back":
        r.update(protocol_type="tcp", service="http", flag="SF", src_bytes=54540, dst_bytes=8314, logged_in=1,
                 hot=2, num_compromised=1, count=int(rng.integers(1, 10)), srv_count=int(rng.integers(1, 10)),
                 same_srv_rate=1.0, dst_host_count=int(rng.integers(50, 255)), dst_host_srv_count=int(rng.integers(50, 255)),
                 dst_host_same_srv_rate=1.0)
    elif label in ("satan", "portsweep"):
        r.update(protocol_type="tcp", service=str(rng.choice(["private", "other", "ftp", "telnet", "smtp"])),
                 flag="REJ", src_bytes=0, dst_bytes=0, count=int(rng.integers(1, 5)), srv_count=1,
                 rerror_rate=1.0, srv_rerror_rate=1.0, same_srv_rate=_rate(rng, 0, 0.5), diff_srv_rate=_rate(rng, 0.5, 1.0),
                 srv_diff_host_rate=1.0 if label == "portsweep" else 0.0,
                 dst_host_count=int(rng.integers(1, 255)), dst_host_srv_count=int(rng.integers(1, 10)),
                 dst_host_same_srv_rate=_rate(rng, 0, 0.1), dst_host_diff_srv_rate=_rate(rng, 0.5, 1.0),
                 dst_host_same_src_port_rate=1.0 if label == "portsweep" else 0.0,
                 dst_host_rerror_rate=_rate(rng, 0.8, 1.0), dst_host_srv_rerror_rate=_rate(rng, 0.8, 1.0))
    elif label == "ipsweep":
        r.update(protocol_type="icmp", service="eco_i", flag="SF", src_bytes=18, count=1, srv_count=int(rng.integers(1, 50)),
                 same_srv_rate=1.0, srv_diff_host_rate=1.0, dst_host_count=int(rng.integers(1, 100)),
                 dst_host_srv_count=int(rng.integers(1, 100)), dst_host_same_srv_rate=1.0,
                 dst_host_same_src_port_rate=1.0, dst_host_srv_diff_host_rate=_rate(rng, 0.3, 1.0))
    elif label == "teardrop":
        r.update(protocol_type="udp", service="private", flag="SF", src_bytes=28, wrong_fragment=3,
                 count=int(rng.integers(50, 120)), srv_count=int(rng.integers(50, 120)), same_srv_rate=1.0,
                 dst_host_count=255, dst_host_srv_count=int(rng.integers(50, 120)), dst_host_same_srv_rate=_rate(rng, 0.3, 0.5))
    else:  # warezclient
        r.update(protocol_type="tcp", service="ftp_data", flag="SF", duration=int(rng.integers(100, 3000)),
                 src_bytes=int(rng.lognormal(10, 1)), dst_bytes=0, logged_in=1, hot=int(rng.integers(0, 28)),
                 is_guest_login=1, count=1, srv_count=1, same_srv_rate=1.0,
                 dst_host_count=int(rng.integers(1, 20)), dst_host_srv_count=int(rng.integers(1, 20)),
                 dst_host_same_srv_rate=1.0, dst_host_same_src_port_rate=_rate(rng, 0.5, 1.0))
    return r


def generate_rows(n: int, seed: int = 0, attack_fraction: float = 0.8) -> list[list[str]]:
    """``n`` KDD-format rows (41 fields + label with trailing period)."""
    rng = np.random.default_rng(seed)
    labels, shares = zip(*ATTACK_MIX)
    probs = np.array(shares) / sum(shares)
    out = []
    for _ in range(n):
        if rng.random() < attack_fraction:
            label = str(rng.choice(labels, p=probs))
            rec = _attack(rng, label)
        else:
            label = "normal"
            rec = _normal(rng)
        row = []
        for name in NAMES:
            v = rec.get(name, 0)
            row.append(v if isinstance(v, str) else (str(int(v)) if float(v).is_integer() else f"{v:.2f}"))
        row.append(label + ".")
        out.append(row)
    return out


def write_synthetic(path: str | Path, n: int, seed: int = 0, attack_fraction: float = 0.8) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(generate_rows(n, seed, attack_fraction))
    return path


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description="write synthetic KDD-format records")
    p.add_argument("path")
    p.add_argument("--rows", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--attack-fraction", type=float, default=0.8)
    a = p.parse_args(argv)
    write_synthetic(a.path, a.rows, a.seed, a.attack_fraction)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
