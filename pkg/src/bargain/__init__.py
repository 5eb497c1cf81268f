"""Self-play RL for multi-issue bargaining with mixed-motive personalities."""

__version__ = "0.1.0"
