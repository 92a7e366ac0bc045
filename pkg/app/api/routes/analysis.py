import logging
from fastapi import APIRouter, Body, HTTPException
from typing import Any, Dict, List, Union

from pydantic import BaseModel, ConfigDict

from app.services import analysis

logger = logging.getLogger(__name__)
router = APIRouter()


class PredictQuery(BaseModel):
    model_config = ConfigDict(extra="forbid")
    op: str
    args: Dict[str, Any] = {}


@router.post("/predict")
async def predict(queries: Union[PredictQuery, List[PredictQuery]] = Body(...)):
    """Evaluate one or more analysis operations.

    Args:
        queries: A query ``{"op", "args"}`` or a list of them

    Returns:
        One result object per query; failed queries carry an ``error`` entry
        instead of a ``result``

    Raises:
        500: Unexpected server error
    """
    if isinstance(queries, PredictQuery):
        queries = [queries]
    try:
        results = [analysis.run_query(query.model_dump()) for query in queries]
        return {
            "success": True,
            "data": results
        }

    except Exception as e:
        logger.exception(f"Unexpected error in predict: {str(e)}")
        raise HTTPException(
            status_code=500,
            detail={
                "error": "Internal Server Error",
                "message": "An unexpected error occurred while evaluating the queries"
            }
        )


@router.get("/operations")
async def get_operations():
    return {
        "success": True,
        "data": analysis.operation_signatures()
    }
