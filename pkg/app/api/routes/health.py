import logging
from fastapi import APIRouter

from app.services.analysis import PREDICT_OPERATIONS

logger = logging.getLogger(__name__)
router = APIRouter()

SERVICE_NAME = "Robust Gossip Aggregation API"
SERVICE_VERSION = "1.0.0"


@router.get("/")
async def health_check():
    return {
        "status": "healthy",
        "service": SERVICE_NAME,
        "version": SERVICE_VERSION
    }


@router.get("/ready")
async def readiness_check():
    return {
        "status": "ready",
        "operations": len(PREDICT_OPERATIONS)
    }
