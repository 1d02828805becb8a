import logging
from contextlib import asynccontextmanager

from fastapi import FastAPI, Request
from fastapi.encoders import jsonable_encoder
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from entangleometer import __version__
from entangleometer.config import get_settings, setup_logging
from entangleometer.routers import experiments
from entangleometer.services.errors import EntangleometerException

logger = logging.getLogger(__name__)
settings = get_settings()


@asynccontextmanager
async def lifespan(app: FastAPI):
    """Lifespan event handler for startup and shutdown"""
    setup_logging()
    logger.info("✅ %s %s ready", settings.app_name, __version__)
    yield


app = FastAPI(
    title=settings.app_name,
    version=settings.app_version,
    description="Entanglement-enabled ellipsometer simulator with classical PSA baseline",
    lifespan=lifespan,
)


# Domain errors map to the same classes the CLI reports through exit codes
@app.exception_handler(EntangleometerException)
async def entangleometer_exception_handler(request: Request, exc: EntangleometerException):
    return JSONResponse(
        status_code=exc.http_status,
        content={"detail": exc.reason, "error": type(exc).__name__},
    )


@app.exception_handler(RequestValidationError)
async def validation_exception_handler(request: Request, exc: RequestValidationError):
    return JSONResponse(
        status_code=422,
        content={"detail": jsonable_encoder(exc.errors()), "error": "InvalidConfigException"},
    )


@app.exception_handler(Exception)
async def global_exception_handler(request: Request, exc: Exception):
    logger.exception("Unhandled error on %s", request.url.path)
    return JSONResponse(
        status_code=500,
        content={"detail": "Internal server error occurred", "error": type(exc).__name__},
    )


# CORS Configuration
app.add_middleware(
    CORSMiddleware,
    allow_origins=settings.cors_origin_list,
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# Include routers
app.include_router(experiments.router)


@app.get("/health")
async def health_check():
    return {"status": "healthy", "version": __version__}
