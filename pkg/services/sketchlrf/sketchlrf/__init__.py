"""Streaming low-rank factorization from linear sketches, with optional differential privacy."""
from sketchlrf.dp import PrivacyParams, private_frobenius_lrf, private_space_optimal_lrf
from sketchlrf.linalg import Factorization
from sketchlrf.lrf import LrfReport, factorize, factorize_one_sided
from sketchlrf.modes import Mode, PrivacyLevel
from sketchlrf.sketch import SketchKind
from sketchlrf.stream import SketchState, TurnstileUpdate, ingest, init_state, read_stream

__all__ = [
    'Factorization', 'LrfReport', 'Mode', 'PrivacyLevel', 'PrivacyParams', 'SketchKind',
    'SketchState', 'TurnstileUpdate', 'factorize', 'factorize_one_sided', 'ingest', 'init_state',
    'private_frobenius_lrf', 'private_space_optimal_lrf', 'read_stream',
]
