"""Training-free transferability estimation from feature/label topology."""

__version__ = "0.1.0"
