"""eventforge: RGB-Event dataset generation pipeline and alignment kernel."""

__version__ = "0.1.0"

PIPELINE_VERSION = __version__
