from app.api.routes import health, analysis, simulation

__all__ = ["health", "analysis", "simulation"]
