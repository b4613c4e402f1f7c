"""Random sketch operators and embedding-dimension calibration.

Every operator is a linear map S (out_dim × in_dim). apply_left computes S·a and
apply_right computes a·Sᵀ, so a right sketch AΦ is stored as the operator Φᵀ.
Payloads are regenerated from (kind, dims, seed) with numpy's counter-based Philox
bit generator; only the (kind, dims, seed, scale) tuple is ever serialized.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np

from sketchlrf import linalg
from sketchlrf.config import DEFAULT_CALIBRATION_C
from sketchlrf.modes import PrivacyLevel
from sketchlrf.validation import (
    require,
    validate_alpha,
    validate_delta,
    validate_dimension,
    validate_index,
    validate_nonnegative,
    validate_positive,
    validate_seed,
)

logger = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1

# Role tags: XORed into a base seed so every operator and noise draw has its own stream
ROLE_PHI = 0x50_48_49_00
ROLE_PSI = 0x50_53_49_00
ROLE_S = 0x53_00_00_00
ROLE_T = 0x54_00_00_00
ROLE_OMEGA = 0x4F_4D_47_00
ROLE_INNER = 0x49_4E_4E_00
ROLE_NOISE_1 = 0x4E_31_00_00
ROLE_NOISE_2 = 0x4E_32_00_00
ROLE_AUDIT = 0x41_55_44_00


class SketchKind(str, Enum):
    COUNT_SKETCH = "countsketch"
    SRHT = "srht"
    GAUSSIAN = "gaussian"
    SRHT_COUNT_SKETCH = "srht-countsketch"
    IDENTITY = "identity"


class Side(str, Enum):
    LEFT = "left"
    RIGHT = "right"


@dataclass(frozen=True)
class EmbeddingDims:
    t: int
    v: int
    constant_c: float


def clamp_dim(requested: int, in_dim: int, name: str) -> int:
    """Output dimension of one operator: the calibrated value, capped at its input dimension"""
    if requested > in_dim:
        logger.warning(f"Clamping {name} sketch dimension {requested} to its input dimension {in_dim}")
        return in_dim
    return requested


def role_seed(seed: int, role: int) -> int:
    return (seed ^ role) & MASK64


def generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def fresh_seed() -> int:
    """64-bit seed from OS entropy, for randomness that must stay secret"""
    return int(np.random.SeedSequence().entropy) & MASK64


def next_power_of_two(n: int) -> int:
    return 1 << (n - 1).bit_length()


def dims_nonprivate(k: int, alpha: float, c: float = DEFAULT_CALIBRATION_C) -> EmbeddingDims:
    require(validate_dimension(k, "k"))
    require(validate_alpha(alpha))
    require(validate_positive(c, "c"))
    log_k = math.log2(k + 2)
    return EmbeddingDims(
        t=math.ceil(c * (k / alpha) * log_k),
        v=math.ceil(c * (k / alpha**2) * log_k),
        constant_c=c,
    )


def dims_private(
    k: int,
    alpha: float,
    delta: float,
    level: PrivacyLevel,
    c: float = DEFAULT_CALIBRATION_C,
) -> EmbeddingDims:
    require(validate_dimension(k, "k"))
    require(validate_alpha(alpha))
    require(validate_delta(delta))
    require(validate_positive(c, "c"))
    factor = c * math.log2(1.0 / delta)
    if PrivacyLevel(level) is PrivacyLevel.PRIV1:
        factor *= math.log2(k + 2)
    return EmbeddingDims(
        t=max(1, math.ceil(factor * max(k / alpha, alpha**-2))),
        v=max(1, math.ceil(factor * max(k / alpha**2, alpha**-4))),
        constant_c=c,
    )


def fwht(x: np.ndarray) -> np.ndarray:
    """Unnormalized Walsh-Hadamard transform along axis 0 (Sylvester order)"""
    y = np.array(x, dtype=np.float64, copy=True)
    n = y.shape[0]
    if n & (n - 1):
        raise ValueError(f"transform length must be a power of two, got {n}")
    tail = y.shape[1:]
    h = 1
    while h < n:
        y = y.reshape((n // (2 * h), 2, h) + tail)
        y = np.stack((y[:, 0] + y[:, 1], y[:, 0] - y[:, 1]), axis=1)
        h *= 2
    return y.reshape((n,) + tail)


def _parity(x: np.ndarray) -> np.ndarray:
    bits = np.zeros_like(x)
    x = x.copy()
    while x.any():
        bits ^= x & 1
        x >>= 1
    return bits


@dataclass(frozen=True)
class SketchOperator:
    kind: SketchKind
    out_dim: int
    in_dim: int
    seed: int
    scale: float
    inner_dim: int | None = None
    targets: np.ndarray | None = field(default=None, repr=False, compare=False)
    signs: np.ndarray | None = field(default=None, repr=False, compare=False)
    diagonal: np.ndarray | None = field(default=None, repr=False, compare=False)
    rows: np.ndarray | None = field(default=None, repr=False, compare=False)
    gaussian: np.ndarray | None = field(default=None, repr=False, compare=False)
    inner: "SketchOperator | None" = field(default=None, repr=False, compare=False)
    outer: "SketchOperator | None" = field(default=None, repr=False, compare=False)

    @property
    def pad_dim(self) -> int:
        return next_power_of_two(self.in_dim)

    @property
    def stored_scalars(self) -> int:
        payload = (self.targets, self.signs, self.diagonal, self.rows, self.gaussian)
        own = sum(p.size for p in payload if p is not None)
        nested = sum(op.stored_scalars for op in (self.inner, self.outer) if op is not None)
        return own + nested

    def to_json(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "out_dim": self.out_dim,
            "in_dim": self.in_dim,
            "seed": self.seed,
            "scale": self.scale,
            "inner_dim": self.inner_dim,
        }

    def column(self, index: int) -> np.ndarray:
        """Image S·e_index"""
        if self.kind is SketchKind.IDENTITY:
            col = np.zeros(self.out_dim)
            col[index] = self.scale
            return col
        if self.kind is SketchKind.COUNT_SKETCH:
            col = np.zeros(self.out_dim)
            col[self.targets[index]] = self.scale * self.signs[index]
            return col
        if self.kind is SketchKind.SRHT:
            signs = 1.0 - 2.0 * _parity(self.rows & index)
            return (self.scale / math.sqrt(self.pad_dim)) * self.diagonal[index] * signs
        if self.kind is SketchKind.GAUSSIAN:
            return self.scale * self.gaussian[:, index]
        return self.scale * self.outer.column(int(self.inner.targets[index])) * (self.inner.scale * self.inner.signs[index])

    def materialize(self) -> np.ndarray:
        return apply_left(self, np.eye(self.in_dim))


def sample_operator(
    kind: SketchKind | str,
    out_dim: int,
    in_dim: int,
    seed: int,
    scale: float | None = None,
    inner_dim: int | None = None,
) -> SketchOperator:
    """Sample a sketch; scale=None picks the norm-preserving embedding scale for the kind"""
    kind = SketchKind(kind)
    require(validate_dimension(out_dim, "out_dim"))
    require(validate_dimension(in_dim, "in_dim"))
    require(validate_seed(seed))
    if scale is not None:
        require(validate_nonnegative(scale, "scale"))
    if kind is SketchKind.IDENTITY and out_dim != in_dim:
        raise ValueError(f"identity sketch needs out_dim == in_dim, got {out_dim} and {in_dim}")
    if kind is not SketchKind.GAUSSIAN and out_dim > in_dim:
        raise ValueError(f"{kind.value} sketch cannot expand {in_dim} to {out_dim} rows")

    rng = generator(seed)
    if kind is SketchKind.IDENTITY:
        return SketchOperator(kind, out_dim, in_dim, seed, 1.0 if scale is None else float(scale))

    if kind is SketchKind.COUNT_SKETCH:
        targets = rng.integers(0, out_dim, size=in_dim)
        signs = rng.integers(0, 2, size=in_dim) * 2.0 - 1.0
        return SketchOperator(
            kind, out_dim, in_dim, seed, 1.0 if scale is None else float(scale),
            targets=targets, signs=signs,
        )

    if kind is SketchKind.SRHT:
        pad = next_power_of_two(in_dim)
        diagonal = rng.integers(0, 2, size=pad) * 2.0 - 1.0
        rows = rng.choice(pad, size=out_dim, replace=False)
        return SketchOperator(
            kind, out_dim, in_dim, seed, math.sqrt(pad / out_dim) if scale is None else float(scale),
            diagonal=diagonal, rows=rows,
        )

    if kind is SketchKind.GAUSSIAN:
        gaussian = rng.standard_normal((out_dim, in_dim))
        return SketchOperator(
            kind, out_dim, in_dim, seed, 1.0 / math.sqrt(out_dim) if scale is None else float(scale),
            gaussian=gaussian,
        )

    inner_dim = min(in_dim, 4 * out_dim) if inner_dim is None else inner_dim
    require(validate_dimension(inner_dim, "inner_dim"))
    if not out_dim <= inner_dim <= in_dim:
        raise ValueError(f"inner_dim must lie in [{out_dim}, {in_dim}], got {inner_dim}")
    inner = sample_operator(
        SketchKind.COUNT_SKETCH, inner_dim, in_dim, role_seed(seed, ROLE_INNER),
        scale=math.sqrt(inner_dim / in_dim),
    )
    outer = sample_operator(SketchKind.SRHT, out_dim, inner_dim, seed, scale=1.0)
    default_scale = math.sqrt(outer.pad_dim / out_dim)
    return SketchOperator(
        kind, out_dim, in_dim, seed, default_scale if scale is None else float(scale),
        inner_dim=inner_dim, inner=inner, outer=outer,
    )


def operator_from_json(obj: dict[str, Any]) -> SketchOperator:
    return sample_operator(
        obj["kind"], obj["out_dim"], obj["in_dim"], obj["seed"],
        scale=obj.get("scale"), inner_dim=obj.get("inner_dim"),
    )


def _left(op: SketchOperator, a: np.ndarray) -> np.ndarray:
    if op.kind is SketchKind.IDENTITY:
        return op.scale * a
    if op.kind is SketchKind.COUNT_SKETCH:
        out = np.zeros((op.out_dim, a.shape[1]))
        np.add.at(out, op.targets, op.signs[:, None] * a)
        return op.scale * out
    if op.kind is SketchKind.SRHT:
        padded = np.zeros((op.pad_dim, a.shape[1]))
        padded[: op.in_dim] = op.diagonal[: op.in_dim, None] * a
        return (op.scale / math.sqrt(op.pad_dim)) * fwht(padded)[op.rows]
    if op.kind is SketchKind.GAUSSIAN:
        return op.scale * (op.gaussian @ a)
    return op.scale * _left(op.outer, _left(op.inner, a))


def _transpose_left(op: SketchOperator, y: np.ndarray) -> np.ndarray:
    if op.kind is SketchKind.IDENTITY:
        return op.scale * y
    if op.kind is SketchKind.COUNT_SKETCH:
        return op.scale * op.signs[:, None] * y[op.targets]
    if op.kind is SketchKind.SRHT:
        padded = np.zeros((op.pad_dim, y.shape[1]))
        padded[op.rows] = y
        full = (op.scale / math.sqrt(op.pad_dim)) * op.diagonal[:, None] * fwht(padded)
        return full[: op.in_dim]
    if op.kind is SketchKind.GAUSSIAN:
        return op.scale * (op.gaussian.T @ y)
    return op.scale * _transpose_left(op.inner, _transpose_left(op.outer, y))


def apply_left(op: SketchOperator, a) -> np.ndarray:
    """S·a"""
    a = linalg.as_matrix(a)
    if a.shape[0] != op.in_dim:
        raise ValueError(f"cannot apply a {op.out_dim}x{op.in_dim} sketch to a matrix with {a.shape[0]} rows")
    return _left(op, a)


def apply_right(a, op: SketchOperator) -> np.ndarray:
    """a·Sᵀ"""
    a = linalg.as_matrix(a)
    if a.shape[1] != op.in_dim:
        raise ValueError(f"cannot apply a {op.out_dim}x{op.in_dim} sketch to a matrix with {a.shape[1]} columns")
    return _left(op, a.T).T


def apply_transpose_left(op: SketchOperator, y) -> np.ndarray:
    """Sᵀ·y"""
    y = linalg.as_matrix(y)
    if y.shape[0] != op.out_dim:
        raise ValueError(f"cannot apply the transpose of a {op.out_dim}x{op.in_dim} sketch to {y.shape[0]} rows")
    return _transpose_left(op, y)


def apply_update(op: SketchOperator, side: Side | str, i: int, j: int, delta: float, target: np.ndarray) -> None:
    """Fold the rank-one update delta·e_i·e_jᵀ into target in place.

    LEFT: target holds S·A (out_dim × n). RIGHT: target holds A·Sᵀ (m × out_dim).
    """
    side = Side(side)
    if side is Side.LEFT:
        require(validate_index(i, op.in_dim, "row"))
        require(validate_index(j, target.shape[1], "column"))
        if op.kind is SketchKind.COUNT_SKETCH:
            target[op.targets[i], j] += op.scale * op.signs[i] * delta
        else:
            target[:, j] += delta * op.column(i)
    else:
        require(validate_index(i, target.shape[0], "row"))
        require(validate_index(j, op.in_dim, "column"))
        if op.kind is SketchKind.COUNT_SKETCH:
            target[i, op.targets[j]] += op.scale * op.signs[j] * delta
        else:
            target[i, :] += delta * op.column(j)


def pinv_apply(op: SketchOperator, n) -> np.ndarray:
    """S†·n for Hadamard-based sketches"""
    if op.kind not in (SketchKind.SRHT, SketchKind.SRHT_COUNT_SKETCH):
        raise ValueError(f"pinv_apply needs an SRHT-based sketch, got {op.kind.value}")
    n = linalg.as_matrix(n)
    if n.shape[0] != op.out_dim:
        raise ValueError(f"pinv_apply expects {op.out_dim} rows, got {n.shape[0]}")
    if op.scale == 0:
        return np.zeros((op.in_dim, n.shape[1]))
    if op.kind is SketchKind.SRHT and op.in_dim == op.pad_dim:
        # rows of S/scale are orthonormal without padding, so S† = Sᵀ/scale²
        return _transpose_left(op, n) / op.scale**2
    gram = _left(op, _transpose_left(op, np.eye(op.out_dim)))
    return _transpose_left(op, linalg.pinv(gram) @ n)
