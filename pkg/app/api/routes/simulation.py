import logging
from fastapi import APIRouter, HTTPException
from fastapi.concurrency import run_in_threadpool
from typing import List, Literal, Union

from pydantic import BaseModel, ConfigDict, Field

from app.core.config import settings
from app.core.models import SimConfig, validate_config
from app.services.adversary import StrategyDescriptor
from app.services.algorithms import run_algorithm
from app.services.exceptions import (
    AdversaryContractError,
    InvalidInputError,
    ScheduleInfeasibleError,
)
from app.services.harness import lowerbound_experiment

logger = logging.getLogger(__name__)
router = APIRouter()


class RunRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    config: SimConfig
    adversary: StrategyDescriptor = Field(default_factory=StrategyDescriptor)
    quantile_stage: Literal["full", "shift"] = "full"
    include_traces: bool = False


class LowerBoundRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    n: int
    beta: float
    gamma: float
    rounds: int
    seeds: Union[int, List[int]] = 20
    sticky: bool = True


def _check_size(n: int):
    if n > settings.API_MAX_NODES:
        raise InvalidInputError(
            message=f"n={n} exceeds the API limit; use the command line for larger runs",
            details={"received": n, "max": settings.API_MAX_NODES}
        )


@router.post("/validate")
async def validate(config: SimConfig):
    violations = validate_config(config)
    return {
        "success": True,
        "data": {
            "valid": not any(v.hard for v in violations),
            "violations": [v.to_dict() for v in violations]
        }
    }


@router.post("/run")
async def run(request: RunRequest):
    """Run one algorithm instance and evaluate it.

    Args:
        request: Config, adversary descriptor and trace options

    Returns:
        The run summary with schedules, round counts and the evaluation report

    Raises:
        400: Invalid config or n above the API limit
        422: Schedule infeasible or adversary contract broken
        500: Unexpected server error
    """
    try:
        _check_size(request.config.n)
        result = await run_in_threadpool(
            run_algorithm, request.config, request.adversary,
            quantile_stage=request.quantile_stage,
        )
        return {
            "success": True,
            "data": result.to_dict(include_traces=request.include_traces)
        }

    except InvalidInputError as e:
        logger.warning(f"Invalid run request: {e.message}")
        raise HTTPException(
            status_code=400,
            detail={
                "error": "Invalid Input",
                "message": e.message,
                "details": e.details
            }
        )

    except (ScheduleInfeasibleError, AdversaryContractError) as e:
        logger.error(f"Run could not complete: {e.message}")
        raise HTTPException(
            status_code=422,
            detail={
                "error": "Unprocessable Run",
                "message": e.message,
                "details": e.details
            }
        )

    except Exception as e:
        logger.exception(f"Unexpected error in simulation run: {str(e)}")
        raise HTTPException(
            status_code=500,
            detail={
                "error": "Internal Server Error",
                "message": "An unexpected error occurred while running the simulation"
            }
        )


@router.post("/lowerbound")
async def lowerbound(request: LowerBoundRequest):
    try:
        _check_size(request.n)
        result = await run_in_threadpool(
            lowerbound_experiment, request.n, request.beta, request.gamma,
            request.rounds, request.seeds, request.sticky,
        )
        return {
            "success": True,
            "data": result.to_dict()
        }

    except InvalidInputError as e:
        logger.warning(f"Invalid lower-bound request: {e.message}")
        raise HTTPException(
            status_code=400,
            detail={
                "error": "Invalid Input",
                "message": e.message,
                "details": e.details
            }
        )

    except Exception as e:
        logger.exception(f"Unexpected error in lower-bound experiment: {str(e)}")
        raise HTTPException(
            status_code=500,
            detail={
                "error": "Internal Server Error",
                "message": "An unexpected error occurred while running the experiment"
            }
        )
