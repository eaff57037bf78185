from fastapi import APIRouter, File, HTTPException, UploadFile
import logging

from app.andl.ast import AndlError
from app.andl.scheduler import generate_tt_schedule, schedule_rows
from app.models.schemas import (
    DiagnosticOut,
    ScenarioRequest,
    ScheduleAction,
    ScheduleResponse,
    ValidationResponse,
)
from app.runner import load_model
from app.sim.errors import Infeasible, LcmOverflow

logger = logging.getLogger(__name__)

router = APIRouter(prefix="/api/scenarios", tags=["Scenarios"])

MAX_UPLOAD_BYTES = 1_000_000


def _diagnostics(items) -> list[DiagnosticOut]:
    return [DiagnosticOut(line=d.line, column=d.column, severity=d.severity, message=d.message) for d in items]


def _validate_text(text: str, overrides: dict) -> ValidationResponse:
    try:
        model = load_model(text, overrides)
    except AndlError as e:
        return ValidationResponse(valid=False, diagnostics=_diagnostics(e.diagnostics))
    except ValueError as e:
        logger.warning(f"Validation error: {e}")
        raise HTTPException(status_code=400, detail=str(e))
    return ValidationResponse(
        valid=True,
        diagnostics=_diagnostics(model.warnings),
        devices=len(model.devices),
        segments=len(model.segments),
        messages=len(model.messages),
    )


@router.post("/validate", response_model=ValidationResponse)
def validate_scenario(request: ScenarioRequest):
    """Parse and validate ANDL text"""
    return _validate_text(request.text, request.overrides)


@router.post("/upload", response_model=ValidationResponse)
async def upload_scenario(scenario: UploadFile = File(...)):
    """Validate an uploaded .andl file"""
    if scenario.filename and not scenario.filename.endswith(".andl"):
        raise HTTPException(status_code=400, detail="Scenario files must use the .andl extension")
    raw = await scenario.read()
    if len(raw) > MAX_UPLOAD_BYTES:
        raise HTTPException(status_code=413, detail="Scenario file too large")
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError:
        raise HTTPException(status_code=400, detail="Scenario files must be UTF-8")
    logger.info(f"[UPLOAD] {scenario.filename}: {len(raw)} bytes")
    return _validate_text(text, {})


@router.post("/schedule", response_model=ScheduleResponse)
def schedule_scenario(request: ScenarioRequest):
    """Generate the TT dispatch schedule of a scenario"""
    try:
        model = load_model(request.text, request.overrides)
        schedules = generate_tt_schedule(model)
    except AndlError as e:
        raise HTTPException(status_code=422, detail=[str(d) for d in e.diagnostics])
    except (Infeasible, LcmOverflow) as e:
        raise HTTPException(status_code=409, detail=str(e))
    except ValueError as e:
        raise HTTPException(status_code=400, detail=str(e))
    if not schedules:
        return ScheduleResponse()
    return ScheduleResponse(
        cycle_ps=next(iter(schedules.values())).cycle,
        actions=[ScheduleAction(**row) for row in schedule_rows(schedules)],
    )
