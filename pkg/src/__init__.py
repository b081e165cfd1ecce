"""Panel coresets - small weighted subsets for GLSE regression on panel data."""

__version__ = "0.1.0"
