import math
from typing import Any

Validation = tuple[bool, str | None]


def validate_dimension(value: Any, name: str = "dimension") -> Validation:
    """Counts such as m, n, t, v, trials: positive integers"""
    if isinstance(value, bool) or not isinstance(value, int):
        return False, f"{name} must be an integer, got {type(value).__name__}"
    if value < 1:
        return False, f"{name} must be >= 1, got {value}"
    return True, None


def validate_rank(k: Any, limit: int | None = None) -> Validation:
    is_valid, error = validate_dimension(k, "k")
    if not is_valid:
        return False, error
    if limit is not None and k > limit:
        return False, f"k={k} exceeds the sketch dimension {limit}"
    return True, None


def validate_finite(value: Any, name: str) -> Validation:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        return False, f"{name} must be a number"
    if not math.isfinite(value):
        return False, f"{name} must be finite, got {value}"
    return True, None


def validate_alpha(alpha: Any, strict_upper: bool = False) -> Validation:
    """alpha in (0, 1]; (0, 1) when the caller divides by 1 - alpha"""
    is_valid, error = validate_finite(alpha, "alpha")
    if not is_valid:
        return False, error
    if alpha <= 0:
        return False, f"alpha must be > 0, got {alpha}"
    if strict_upper and alpha >= 1:
        return False, f"alpha must be < 1 for this privacy level, got {alpha}"
    if alpha > 1:
        return False, f"alpha must be <= 1, got {alpha}"
    return True, None


def validate_delta(delta: Any, name: str = "delta") -> Validation:
    is_valid, error = validate_finite(delta, name)
    if not is_valid:
        return False, error
    if not 0 < delta < 1:
        return False, f"{name} must lie in (0, 1), got {delta}"
    return True, None


def validate_epsilon(epsilon: Any) -> Validation:
    if isinstance(epsilon, (int, float)) and not isinstance(epsilon, bool) and epsilon == math.inf:
        return True, None
    is_valid, error = validate_finite(epsilon, "epsilon")
    if not is_valid:
        return False, error
    if epsilon <= 0:
        return False, f"epsilon must be > 0, got {epsilon}"
    return True, None


def validate_nonnegative(value: Any, name: str) -> Validation:
    is_valid, error = validate_finite(value, name)
    if not is_valid:
        return False, error
    if value < 0:
        return False, f"{name} must be >= 0, got {value}"
    return True, None


def validate_positive(value: Any, name: str) -> Validation:
    is_valid, error = validate_finite(value, name)
    if not is_valid:
        return False, error
    if value <= 0:
        return False, f"{name} must be > 0, got {value}"
    return True, None


def validate_seed(seed: Any, name: str = "seed") -> Validation:
    if isinstance(seed, bool) or not isinstance(seed, int):
        return False, f"{name} must be an integer"
    if not 0 <= seed < 2**64:
        return False, f"{name} must fit in 64 unsigned bits, got {seed}"
    return True, None


def validate_index(value: Any, bound: int, name: str) -> Validation:
    if isinstance(value, bool) or not isinstance(value, int):
        return False, f"{name} index must be an integer, got {value!r}"
    if not 0 <= value < bound:
        return False, f"{name} index {value} out of range [0, {bound})"
    return True, None


def validate_mode_params(mode: Any, epsilon: Any, delta: Any) -> Validation:
    """Private modes need both epsilon and delta; the non-private mode takes neither"""
    if mode not in ("nonprivate", "priv1", "priv2"):
        return False, f"mode must be one of nonprivate, priv1, priv2, got {mode!r}"
    if mode == "nonprivate":
        if epsilon is not None or delta is not None:
            return False, "epsilon/delta given for a non-private stream"
        return True, None
    if epsilon is None or delta is None:
        return False, f"mode {mode} needs epsilon and delta"
    is_valid, error = validate_epsilon(epsilon)
    if not is_valid:
        return False, error
    return validate_delta(delta)


def require(result: Validation) -> None:
    """Raise ValueError for a failed validation"""
    is_valid, error = result
    if not is_valid:
        raise ValueError(error)
