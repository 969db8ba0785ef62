"""Audio-conditioned diffusion inpainting for lip synchronization."""

__version__ = "0.1.0"
