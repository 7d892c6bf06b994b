"""Service layer: pydantic request/response models, operation handlers and
the FastAPI application. The CLI calls the same handlers in-process."""

from .app import app, create_app

__all__ = ["app", "create_app"]
