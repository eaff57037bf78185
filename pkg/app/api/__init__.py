from app.api.runs import router as runs_router
from app.api.scenarios import router as scenarios_router

__all__ = ['runs_router', 'scenarios_router']
