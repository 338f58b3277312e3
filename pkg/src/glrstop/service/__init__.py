"""HTTP service wrapping the stopping toolkit."""

from .app import create_app

__all__ = ["create_app"]
