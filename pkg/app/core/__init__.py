__all__ = ["config", "constants", "models"]

from app.core import config, constants
