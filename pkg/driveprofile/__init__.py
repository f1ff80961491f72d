"""Driveprofile: aggressive-driving detection from next-frame LSTM prediction residuals."""

__version__ = "0.1.0"

__all__ = [
    "cli",
    "config",
    "errors",
    "evaluation",
    "ingest",
    "lstm",
    "models",
    "optim",
    "pipeline",
    "preprocess",
    "report",
    "storage",
    "synth",
]
