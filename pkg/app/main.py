import logging

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from app.api import runs_router, scenarios_router
from app.config import settings
from app.sim.events import TieClass

logging.basicConfig(level=settings.LOG_LEVEL)
logger = logging.getLogger(__name__)

SERVICE = "carnet-sim"
VERSION = "0.1.0"

settings.validate()

app = FastAPI(
    title=SERVICE,
    description="Discrete-event simulator for automotive CAN and real-time Ethernet networks",
    version=VERSION,
    docs_url="/docs",
)

# CORS Configuration - MUST be before routers
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=False,
    allow_methods=["*"],
    allow_headers=["*"],
)


@app.get("/health")
def health_check():
    """Liveness check"""
    return JSONResponse(status_code=200, content={"status": "healthy", "service": SERVICE, "version": VERSION})


@app.get("/")
def root():
    """Service information and the entry points of the API"""
    return {
        "service": SERVICE,
        "version": VERSION,
        "environment": settings.ENVIRONMENT,
        "tie_order": [tie.name for tie in TieClass],
        "endpoints": {
            "validate": "/api/scenarios/validate",
            "upload": "/api/scenarios/upload",
            "schedule": "/api/scenarios/schedule",
            "run": "/api/runs/",
        },
        "docs": "/docs",
        "health": "/health",
    }


app.include_router(scenarios_router)
app.include_router(runs_router)
logger.info(f"{SERVICE} {VERSION} ready ({settings.ENVIRONMENT})")


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host="0.0.0.0", port=8000)
