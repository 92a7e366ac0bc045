from fastapi import FastAPI
import logging

from app.core.config import settings
from app.api.routes import analysis, health, simulation
from app.utils.logging_config import setup_logging

app = FastAPI(
    title="Robust Gossip Aggregation API",
    description="Schedules, bounds and simulations of pull-gossip median, quantile and mean aggregation under a β-strong adversary",
    version="1.0.0"
)

app.include_router(health.router, prefix="/health", tags=["health"])
app.include_router(analysis.router, prefix="/api/v1/analysis", tags=["analysis"])
app.include_router(simulation.router, prefix="/api/v1/simulation", tags=["simulation"])

@app.on_event("startup")
async def startup_event():
    setup_logging()
    logger = logging.getLogger(__name__)
    logger.info("Robust Gossip Aggregation API starting up...")

@app.on_event("shutdown")
async def shutdown_event():
    logger = logging.getLogger(__name__)
    logger.info("Robust Gossip Aggregation API shutting down...")

if __name__ == "__main__":
    import uvicorn
    uvicorn.run(
        "main:app",
        host=settings.HOST,
        port=settings.PORT,
        reload=True,
        log_level=settings.LOG_LEVEL.lower()
    )
