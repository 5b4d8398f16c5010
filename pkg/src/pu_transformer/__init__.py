"""Point cloud upsampling transformer on a small numpy autograd engine."""
__version__ = "0.1.0"
