from pydantic import BaseModel, Field, field_validator
from typing import Dict, List, Optional

class RunConfig(BaseModel):
    """Everything that determines one simulation run"""
    scenario: str
    until: Optional[int] = None
    seed: Optional[int] = None
    overrides: Dict[str, str] = Field(default_factory=dict)
    constraints: Optional[str] = None
    out: str = "results"
    formats: List[str] = Field(default_factory=lambda: ["csv"])
    pcap: bool = False
    replicas: int = 1

    @field_validator("until")
    @classmethod
    def positive_duration(cls, value):
        if value is not None and value <= 0:
            raise ValueError("duration must be positive")
        return value

    @field_validator("formats")
    @classmethod
    def known_formats(cls, value):
        unknown = [fmt for fmt in value if fmt not in ("csv", "json")]
        if unknown:
            raise ValueError(f"unknown output format(s): {', '.join(unknown)}")
        return value

    @field_validator("replicas")
    @classmethod
    def at_least_one(cls, value):
        if value < 1:
            raise ValueError("replicas must be at least 1")
        return value

class StreamRow(BaseModel):
    stream: str
    traffic_class: str
    count: int
    min_ps: Optional[int] = None
    max_ps: Optional[int] = None
    mean_ps: Optional[int] = None
    jitter_ps: int = 0
    drops: int = 0
    drop_reasons: Dict[str, int] = Field(default_factory=dict)
    hop_sums_ps: Dict[str, int] = Field(default_factory=dict)

class BufferRow(BaseModel):
    node: str
    port: str
    traffic_class: str
    max_frames: int
    max_bytes: int
    drops: int = 0

class ViolationRow(BaseModel):
    rule: str
    bound: str
    limit: str
    module: str
    metric: str
    value: str
    time_ps: int
    action: str

class StatsDocument(BaseModel):
    streams: List[StreamRow]
    buffers: List[BufferRow]
    config_digest: str
    metadata: Dict[str, str] = Field(default_factory=dict)

class ScenarioRequest(BaseModel):
    text: str
    overrides: Dict[str, str] = Field(default_factory=dict)

class DiagnosticOut(BaseModel):
    line: int
    column: int
    severity: str
    message: str

class ValidationResponse(BaseModel):
    valid: bool
    diagnostics: List[DiagnosticOut] = Field(default_factory=list)
    devices: int = 0
    segments: int = 0
    messages: int = 0

class ScheduleAction(BaseModel):
    port: str
    offset_ps: int
    ct_id: int
    window_ps: int
    period_ps: int

class ScheduleResponse(BaseModel):
    cycle_ps: Optional[int] = None
    actions: List[ScheduleAction] = Field(default_factory=list)

class RunRequest(BaseModel):
    text: str
    until: Optional[int] = None
    seed: Optional[int] = None
    overrides: Dict[str, str] = Field(default_factory=dict)
    constraints: Optional[str] = None

class RunResponse(BaseModel):
    network: str
    seed: int
    until: int
    events_processed: int
    final_time: int
    stopped_early: bool = False
    stop_reason: Optional[str] = None
    streams: List[StreamRow]
    buffers: List[BufferRow]
    violations: List[ViolationRow] = Field(default_factory=list)
