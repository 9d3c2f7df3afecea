"""vmeme: visual meme detection, annotation, and diffusion analytics."""

__version__ = "0.1.0"
