"""Live human-vs-agent negotiation service."""

from .service import create_app  # noqa: F401
