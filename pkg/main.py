"""
Entry point for Railway deployment
Just imports and re-exports the app from entangleometer.main
"""
from entangleometer.main import app

__all__ = ["app"]
