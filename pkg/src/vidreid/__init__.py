"""Video person re-identification with global-guided disentanglement and
bi-directional temporal recurrence."""

__version__ = "0.1.0"
