__all__ = ["services", "api", "core", "utils"]
