"""Live stream routes: create, ingest, factorize, delete"""
import logging
import math
from typing import Any

from flask import Blueprint, jsonify, request
from werkzeug.wrappers.response import Response as WerkzeugResponse

from sketchlrf.config import ALLOW_PINNED_NOISE, DEFAULT_CALIBRATION_C, DEFAULT_SEED
from sketchlrf.dp import PrivacyParams, private_factorize
from sketchlrf.lrf import factorize
from sketchlrf.modes import Mode
from sketchlrf.registry import RegistryFullError, get_registry
from sketchlrf.sketch import SketchKind
from sketchlrf.stream import TurnstileUpdate, ingest, init_state
from sketchlrf.validation import (
    validate_alpha,
    validate_dimension,
    validate_finite,
    validate_index,
    validate_mode_params,
    validate_positive,
    validate_seed,
)

logger = logging.getLogger(__name__)

streams_bp = Blueprint('streams', __name__, url_prefix='/streams')

SELECTABLE_SKETCHES = [kind.value for kind in SketchKind if kind is not SketchKind.IDENTITY]


def _not_found() -> tuple[WerkzeugResponse, int]:
    return jsonify({"error": "Stream not found"}), 404


def _validate_noise_seed(data: dict[str, Any]) -> tuple[bool, str | None]:
    """Private noise is secret; pinning it is only for test deployments"""
    if "noise_seed" not in data:
        return True, None
    if not ALLOW_PINNED_NOISE:
        return False, "noise_seed is disabled; set SKETCHLRF_ALLOW_PINNED_NOISE to pin private noise"
    return validate_seed(data["noise_seed"], "noise_seed")


def _validate_create(data: dict[str, Any]) -> tuple[bool, str | None]:
    for name in ("m", "n", "k"):
        is_valid, error = validate_dimension(data.get(name), name)
        if not is_valid:
            return False, error
    mode = data.get("mode", Mode.NON_PRIVATE.value)
    is_valid, error = validate_mode_params(mode, data.get("epsilon"), data.get("delta"))
    if not is_valid:
        return False, error
    is_valid, error = validate_alpha(data.get("alpha"), strict_upper=mode == Mode.PRIV1.value)
    if not is_valid:
        return False, error
    is_valid, error = validate_seed(data.get("seed", DEFAULT_SEED))
    if not is_valid:
        return False, error
    is_valid, error = validate_positive(data.get("c", DEFAULT_CALIBRATION_C), "c")
    if not is_valid:
        return False, error
    is_valid, error = _validate_noise_seed(data)
    if not is_valid:
        return False, error
    if data.get("sketch", SketchKind.COUNT_SKETCH.value) not in SELECTABLE_SKETCHES:
        return False, f"sketch must be one of {', '.join(SELECTABLE_SKETCHES)}"
    return True, None


@streams_bp.route('', methods=['POST'])
def create_stream() -> tuple[WerkzeugResponse, int]:
    """Create a live stream

    Expected JSON body:
    {
        "m": 64, "n": 48, "k": 5, "alpha": 0.5,
        "mode": "priv2", "epsilon": 1.0, "delta": 1e-6,
        "seed": 7, "c": 4.0, "sketch": "countsketch"
    }

    seed fixes the public operators. The secret Priv₁ projection is drawn from OS entropy.
    """
    data: dict[str, Any] | None = request.get_json(silent=True)

    if not data:
        return jsonify({"error": "No data provided"}), 400

    is_valid, error = _validate_create(data)
    if not is_valid:
        return jsonify({"error": error}), 400

    mode = Mode(data.get("mode", Mode.NON_PRIVATE.value))
    privacy = None
    try:
        if mode is not Mode.NON_PRIVATE:
            privacy = PrivacyParams(data["epsilon"], data["delta"], mode.privacy_level, data["alpha"])
        state = init_state(
            data["m"], data["n"], data["k"], data["alpha"],
            seed=data.get("seed", DEFAULT_SEED),
            mode=mode,
            privacy=privacy,
            c=data.get("c", DEFAULT_CALIBRATION_C),
            sketch=data.get("sketch", SketchKind.COUNT_SKETCH.value),
            noise_seed=data.get("noise_seed"),
        )
    except ValueError as e:
        return jsonify({"error": str(e)}), 400

    try:
        stream_id = get_registry().add(state)
    except RegistryFullError as e:
        logger.warning(f"Rejected stream creation: {e}")
        return jsonify({"error": str(e)}), 409

    summary = state.summary()
    return jsonify({
        "id": stream_id,
        "mode": summary["mode"],
        "dims": summary["dims"],
        "operators": summary["operators"],
    }), 201


@streams_bp.route('', methods=['GET'])
def list_streams() -> tuple[WerkzeugResponse, int]:
    registry = get_registry()
    streams = []
    for stream_id in registry.ids():
        entry = registry.get(stream_id)
        if entry is not None:
            state = entry.state
            streams.append({
                "id": stream_id,
                "m": state.m,
                "n": state.n,
                "mode": state.mode.value,
                "updates_seen": state.updates_seen,
            })
    return jsonify({"streams": streams, "count": len(streams)}), 200


@streams_bp.route('/<stream_id>', methods=['GET'])
def get_stream(stream_id: str) -> tuple[WerkzeugResponse, int]:
    with get_registry().locked(stream_id) as entry:
        if entry is None:
            return _not_found()
        return jsonify({"id": stream_id, **entry.state.summary()}), 200


def _parse_updates(raw: Any, m: int, n: int) -> tuple[list[TurnstileUpdate] | None, str | None]:
    if not isinstance(raw, list):
        return None, "updates must be a list of [i, j, delta] triples"
    updates = []
    for position, item in enumerate(raw):
        if not isinstance(item, list) or len(item) != 3:
            return None, f"update {position}: expected [i, j, delta]"
        i, j, delta = item
        for result in (validate_index(i, m, "row"), validate_index(j, n, "column"), validate_finite(delta, "delta")):
            is_valid, error = result
            if not is_valid:
                return None, f"update {position}: {error}"
        updates.append(TurnstileUpdate(i, j, float(delta)))
    return updates, None


@streams_bp.route('/<stream_id>/updates', methods=['POST'])
def post_updates(stream_id: str) -> tuple[WerkzeugResponse, int]:
    """Ingest a batch of turnstile updates; the batch is validated before any is applied

    Expected JSON body:
    {
        "updates": [[0, 1, 2.5], [3, 0, -1.0]]
    }
    """
    data: dict[str, Any] | None = request.get_json(silent=True)

    if not data or "updates" not in data:
        return jsonify({"error": "No updates provided"}), 400

    with get_registry().locked(stream_id) as entry:
        if entry is None:
            return _not_found()
        state = entry.state
        updates, error = _parse_updates(data["updates"], state.m, state.n)
        if error:
            return jsonify({"error": error}), 400
        for update in updates:
            ingest(state, update)
        return jsonify({"accepted": len(updates), "updates_seen": state.updates_seen}), 200


@streams_bp.route('/<stream_id>/factorize', methods=['POST'])
def factorize_stream(stream_id: str) -> tuple[WerkzeugResponse, int]:
    """Factorize the current sketches; private streams add fresh noise and charge the budget

    Optional JSON body:
    {
        "k": 5
    }

    "noise_seed" pins the release noise when SKETCHLRF_ALLOW_PINNED_NOISE is set.
    """
    data: dict[str, Any] = request.get_json(silent=True) or {}

    with get_registry().locked(stream_id) as entry:
        if entry is None:
            return _not_found()
        state = entry.state
        k = data.get("k", state.k)
        is_valid, error = validate_dimension(k, "k")
        if not is_valid:
            return jsonify({"error": error}), 400
        is_valid, error = _validate_noise_seed(data)
        if not is_valid:
            return jsonify({"error": error}), 400

        try:
            if state.mode is Mode.NON_PRIVATE:
                report = factorize(state, k)
            else:
                report = private_factorize(state, k, seed=data.get("noise_seed"))
        except ValueError as e:
            return jsonify({"error": str(e)}), 400

        result = report.to_json(include_factors=True)
        cumulative = entry.charge()
        if cumulative is not None:
            result["cumulative_budget"] = cumulative
        result["id"] = stream_id
        result["updates_seen"] = state.updates_seen
        return jsonify(_finite(result)), 200


def _finite(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {key: _finite(v) for key, v in value.items()}
    if isinstance(value, list):
        return [_finite(v) for v in value]
    return value


@streams_bp.route('/<stream_id>', methods=['DELETE'])
def delete_stream(stream_id: str) -> tuple[WerkzeugResponse, int]:
    if not get_registry().remove(stream_id):
        return _not_found()
    return jsonify({"message": "Stream deleted successfully"}), 200
