from fastapi import APIRouter, HTTPException
import logging

from app.andl.ast import AndlError
from app.models.schemas import RunRequest, RunResponse
from app.results.writers import buffer_rows, stream_rows, violation_rows
from app.runner import constraints_from_text, simulate_text
from app.sim.errors import DispatchError

logger = logging.getLogger(__name__)

router = APIRouter(prefix="/api/runs", tags=["Runs"])


@router.post("/", response_model=RunResponse)
def run_scenario(request: RunRequest):
    """Simulate a scenario synchronously and return its statistics"""
    try:
        rules = constraints_from_text(request.constraints)
        result = simulate_text(request.text, request.overrides, request.seed, request.until, rules)
    except AndlError as e:
        raise HTTPException(status_code=422, detail=[str(d) for d in e.diagnostics])
    except ValueError as e:
        logger.warning(f"Run rejected: {e}")
        raise HTTPException(status_code=400, detail=str(e))
    except DispatchError as e:
        logger.error(f"Run failed: {e}")
        raise HTTPException(status_code=409, detail=str(e))
    logger.info(f"[RUN] {result.network}: {result.summary.events_processed} events, "
                f"{len(result.violations)} violations")
    return RunResponse(
        network=result.network,
        seed=result.seed,
        until=result.until,
        events_processed=result.summary.events_processed,
        final_time=result.summary.final_time,
        stopped_early=result.stopped_early,
        stop_reason=result.summary.stop_reason,
        streams=stream_rows(result.collector),
        buffers=buffer_rows(result.collector),
        violations=violation_rows(result.violations),
    )
