"""Multi-view photometric stereo with a normal-conditioned radiance field."""

__version__ = "0.1.0"
