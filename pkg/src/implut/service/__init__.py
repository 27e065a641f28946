"""HTTP service wrapping the core package."""

from .app import ModelSnapshot, Session, SessionStore, create_app

__all__ = ["ModelSnapshot", "Session", "SessionStore", "create_app"]
