"""Multi-modal feature transformation and grouped-CV ensemble regression for social media popularity."""

__version__ = "0.1.0"
