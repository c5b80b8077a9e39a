"""Autoencoder intrusion detection on KDDCup99-format data.

Two preprocessing routes (Min-Max + one-hot + PCA, or a statistics-driven
preprocessing plan proposed by a heuristic or an LLM) feed a numpy
autoencoder whose reconstruction errors are thresholded, scored and
explained.
"""

__version__ = "0.1.0"
