"""radiotrack: 3D tracking of radio-tagged animals from Yagi tower signal-strength logs."""

__version__ = "0.1.0"
