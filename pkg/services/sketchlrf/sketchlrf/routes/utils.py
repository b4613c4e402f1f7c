from flask import Blueprint, jsonify
from werkzeug.wrappers.response import Response as WerkzeugResponse

from sketchlrf.config import MAX_STREAMS
from sketchlrf.registry import get_registry

utils_bp = Blueprint('utils', __name__)


@utils_bp.route('/health', methods=['GET'])
def health() -> tuple[WerkzeugResponse, int]:
    return jsonify({"status": "healthy", "service": "sketchlrf"}), 200


@utils_bp.route('/stats', methods=['GET'])
def get_stats() -> tuple[WerkzeugResponse, int]:
    registry = get_registry()
    footprint = 0
    updates = 0
    for stream_id in registry.ids():
        entry = registry.get(stream_id)
        if entry is not None:
            footprint += entry.state.footprint()
            updates += entry.state.updates_seen
    return jsonify({
        "stats": {
            "stream_count": len(registry.ids()),
            "capacity": MAX_STREAMS,
            "updates_seen": updates,
            "footprint": footprint,
        }
    }), 200
