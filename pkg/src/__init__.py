"""EDCFlow - event-based optical flow with temporal feature differences."""

__version__ = "0.1.0"
