"""Early time-varying RIR estimation along a linear microphone trajectory."""

__version__ = "0.1.0"
