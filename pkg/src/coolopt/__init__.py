"""Two-stage moving-morphable-component optimization of 2D cooling channels."""

__version__ = "0.1.0"
