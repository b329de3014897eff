"""Two-stage data-augmentation defense against backdoored image classifiers."""

__version__ = "0.1.0"
