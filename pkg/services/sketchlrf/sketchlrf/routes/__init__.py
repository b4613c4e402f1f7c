"""Routes package initialization"""
from sketchlrf.routes.streams import streams_bp
from sketchlrf.routes.utils import utils_bp


__all__ = ['streams_bp', 'utils_bp']
