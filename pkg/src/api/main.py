# src/api/main.py
from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel
from typing import Dict
import logging

from src.core.config import load_config
from .routes import router as convex_router

VERSION = "1.0.0"

# Configure logging
_level = load_config().get("logging", {}).get("level", "INFO")
logging.basicConfig(level=getattr(logging, str(_level).upper(), logging.INFO))
logger = logging.getLogger(__name__)

app = FastAPI(
    title="convexrelu API",
    description="Exact convex training of two-layer ReLU networks",
    version=VERSION
)

# CORS middleware
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

app.include_router(convex_router)


class HealthResponse(BaseModel):
    status: str
    service: str
    version: str
    components: Dict[str, str]


@app.get("/v1/health", response_model=HealthResponse)
async def health_check():
    """Health check endpoint"""
    components = {"solvers": "operational", "api": "operational"}
    try:
        from scipy.optimize import linprog  # noqa: F401
    except ImportError:
        components["solvers"] = "degraded"

    return HealthResponse(
        status="healthy",
        service="convexrelu",
        version=VERSION,
        components=components
    )


@app.get("/")
async def root():
    """Root endpoint with basic info"""
    return {
        "message": "convexrelu: exact convex training of two-layer ReLU networks",
        "version": VERSION,
        "endpoints": {
            "health": "/v1/health",
            "enumerate": "/v1/enumerate",
            "solve": "/v1/solve",
            "certify": "/v1/certify",
            "experiment": "/v1/experiment",
            "docs": "/docs"
        }
    }


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host="0.0.0.0", port=8000, log_level="info")
