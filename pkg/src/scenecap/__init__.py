"""Region-attention, scene-factorized image caption decoding in numpy."""
__version__ = "0.1.0"
