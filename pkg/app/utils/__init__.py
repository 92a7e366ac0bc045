__all__ = ["logging_config"]

from app.utils import logging_config
