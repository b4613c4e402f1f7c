"""Turnstile ingestion into the sketch state.

Non-private and Priv₁ states keep the two-sided triple y_c = A·Φ, y_r = Ψ·A,
z = S·A·Tᵀ; Priv₂ keeps the one-sided pair y_c = A·Φ, z = S·A. Noise is never
stored here; it is added at factorization time.
"""
import logging
import math
from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from sketchlrf import linalg
from sketchlrf.config import DEFAULT_CALIBRATION_C
from sketchlrf.modes import Mode
from sketchlrf.sketch import (
    ROLE_OMEGA,
    ROLE_PHI,
    ROLE_PSI,
    ROLE_S,
    ROLE_T,
    EmbeddingDims,
    Side,
    SketchKind,
    SketchOperator,
    apply_left,
    apply_right,
    apply_transpose_left,
    apply_update,
    clamp_dim,
    dims_nonprivate,
    dims_private,
    fresh_seed,
    generator,
    role_seed,
    sample_operator,
)
from sketchlrf.validation import (
    require,
    validate_alpha,
    validate_dimension,
    validate_finite,
    validate_index,
    validate_seed,
)

if TYPE_CHECKING:
    from sketchlrf.dp import NoiseScales, PrivacyParams

logger = logging.getLogger(__name__)


class StreamFormatError(ValueError):
    def __init__(self, path: str | Path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


@dataclass(frozen=True)
class TurnstileUpdate:
    i: int
    j: int
    delta: float


@dataclass
class SketchState:
    m: int
    n: int
    k: int
    alpha: float
    seed: int
    mode: Mode
    dims: EmbeddingDims
    sketch_kind: SketchKind
    y_c: np.ndarray
    z: np.ndarray
    phi: SketchOperator
    s: SketchOperator
    y_r: np.ndarray | None = None
    psi: SketchOperator | None = None
    t_op: SketchOperator | None = None
    privacy: "PrivacyParams | None" = None
    scales: "NoiseScales | None" = None
    # Priv₁ only: dense t⁻¹·Φ·Ω, and whether the work matrix is Aᵀ (m > n)
    phi_hat: np.ndarray | None = field(default=None, repr=False)
    transposed: bool = False
    updates_seen: int = 0

    @property
    def two_sided(self) -> bool:
        return self.mode is not Mode.PRIV2

    @property
    def work_shape(self) -> tuple[int, int]:
        """(p, q) of the matrix actually sketched, before any augmentation"""
        return (self.n, self.m) if self.transposed else (self.m, self.n)

    @property
    def effective_dims(self) -> tuple[int, int]:
        """(t, v) after each operator was clamped to its input dimension"""
        if self.mode is Mode.PRIV2:
            return self.y_c.shape[1], self.z.shape[0]
        return min(self.y_c.shape[1], self.y_r.shape[0]), min(self.z.shape)

    def footprint(self) -> int:
        """Stored scalars: sketches, dense Φ̂ and operator payloads"""
        arrays = (self.y_c, self.y_r, self.z, self.phi_hat)
        operators = (self.phi, self.psi, self.s, self.t_op)
        return sum(a.size for a in arrays if a is not None) + sum(op.stored_scalars for op in operators if op is not None)

    def summary(self) -> dict:
        return {
            "m": self.m,
            "n": self.n,
            "k": self.k,
            "alpha": self.alpha,
            "mode": self.mode.value,
            "seed": self.seed,
            "sketch": self.sketch_kind.value,
            "dims": {"t": self.dims.t, "v": self.dims.v, "c": self.dims.constant_c},
            "effective_dims": list(self.effective_dims),
            "operators": {
                name: op.to_json()
                for name, op in (("phi", self.phi), ("psi", self.psi), ("s", self.s), ("t", self.t_op))
                if op is not None
            },
            "transposed": self.transposed,
            "updates_seen": self.updates_seen,
            "footprint": self.footprint(),
            "space_bound": space_bound(self.mode, self.m, self.n, self.k, self.alpha,
                                       None if self.privacy is None else self.privacy.delta),
        }


def _operator(kind: SketchKind, requested: int, in_dim: int, seed: int, name: str) -> SketchOperator:
    out_dim = clamp_dim(requested, in_dim, name)
    if out_dim == in_dim:
        return sample_operator(SketchKind.IDENTITY, out_dim, in_dim, seed)
    return sample_operator(kind, out_dim, in_dim, seed)


def init_state(
    m: int,
    n: int,
    k: int,
    alpha: float,
    seed: int,
    mode: Mode | str = Mode.NON_PRIVATE,
    privacy: "PrivacyParams | None" = None,
    c: float = DEFAULT_CALIBRATION_C,
    sketch: SketchKind | str = SketchKind.COUNT_SKETCH,
    noise_seed: int | None = None,
) -> SketchState:
    """Empty sketch state for the mode.

    seed drives the public operators. noise_seed drives the secret Priv₁ projection Ω;
    it is drawn from OS entropy when absent and is never stored.
    """
    from sketchlrf.dp import calibrate

    mode, kind = Mode(mode), SketchKind(sketch)
    require(validate_dimension(m, "m"))
    require(validate_dimension(n, "n"))
    require(validate_dimension(k, "k"))
    require(validate_alpha(alpha, strict_upper=mode is Mode.PRIV1))
    require(validate_seed(seed))
    if noise_seed is not None:
        require(validate_seed(noise_seed, "noise_seed"))
    if kind is SketchKind.IDENTITY:
        raise ValueError("identity is not a selectable sketch kind")
    if mode is Mode.NON_PRIVATE and privacy is not None:
        raise ValueError("privacy parameters given for a non-private stream")
    if mode is not Mode.NON_PRIVATE:
        if privacy is None:
            raise ValueError(f"mode {mode.value} needs privacy parameters")
        if privacy.level.value != mode.value:
            raise ValueError(f"privacy level {privacy.level.value} does not match mode {mode.value}")
        if privacy.alpha != alpha:
            raise ValueError(f"privacy alpha {privacy.alpha} differs from stream alpha {alpha}")

    if mode is Mode.NON_PRIVATE:
        dims = dims_nonprivate(k, alpha, c)
    else:
        dims = dims_private(k, alpha, privacy.delta, privacy.level, c)
    t, v = dims.t, dims.v

    if mode is Mode.PRIV2:
        phi = _operator(kind, t, n, role_seed(seed, ROLE_PHI), "t")
        s = _operator(kind, v, m, role_seed(seed, ROLE_S), "v")
        state = SketchState(
            m=m, n=n, k=k, alpha=alpha, seed=seed, mode=mode, dims=dims, sketch_kind=kind,
            y_c=np.zeros((m, phi.out_dim)), z=np.zeros((s.out_dim, n)), phi=phi, s=s,
            privacy=privacy, scales=calibrate(privacy, phi.out_dim),
        )
    elif mode is Mode.NON_PRIVATE:
        phi = _operator(kind, t, n, role_seed(seed, ROLE_PHI), "t")
        psi = _operator(kind, t, m, role_seed(seed, ROLE_PSI), "t")
        s = _operator(kind, v, m, role_seed(seed, ROLE_S), "v")
        t_op = _operator(kind, v, n, role_seed(seed, ROLE_T), "v")
        state = SketchState(
            m=m, n=n, k=k, alpha=alpha, seed=seed, mode=mode, dims=dims, sketch_kind=kind,
            y_c=np.zeros((m, phi.out_dim)), y_r=np.zeros((psi.out_dim, n)), z=np.zeros((s.out_dim, t_op.out_dim)),
            phi=phi, psi=psi, s=s, t_op=t_op,
        )
    else:
        state = _init_priv1(m, n, k, alpha, seed, dims, kind, privacy, calibrate,
                             fresh_seed() if noise_seed is None else noise_seed)

    t_eff, v_eff = state.effective_dims
    logger.info(f"Initialized {mode.value} {m}x{n} stream with t={t_eff}, v={v_eff}, sketch={kind.value}")
    return state


def _init_priv1(m, n, k, alpha, seed, dims, kind, privacy, calibrate, omega_seed: int) -> SketchState:
    transposed = m > n
    p, q = (n, m) if transposed else (m, n)
    wide = q + p
    t = clamp_dim(dims.t, p, "t")
    scales = calibrate(privacy, t)

    phi = _operator(kind, p, wide, role_seed(seed, ROLE_PHI), "phi")
    omega = generator(role_seed(omega_seed, ROLE_OMEGA)).standard_normal((p, t))
    phi_hat = apply_transpose_left(phi, omega) / t
    psi = _operator(kind, t, p, role_seed(seed, ROLE_PSI), "t")
    s = _operator(kind, dims.v, p, role_seed(seed, ROLE_S), "v")
    t_op = _operator(kind, dims.v, wide, role_seed(seed, ROLE_T), "v")

    state = SketchState(
        m=m, n=n, k=k, alpha=alpha, seed=seed, mode=Mode.PRIV1, dims=dims, sketch_kind=kind,
        y_c=np.zeros((p, phi_hat.shape[1])), y_r=np.zeros((psi.out_dim, wide)),
        z=np.zeros((s.out_dim, t_op.out_dim)),
        phi=phi, psi=psi, s=s, t_op=t_op,
        privacy=privacy, scales=scales, phi_hat=phi_hat, transposed=transposed,
    )
    # σ_min·I block of (W | σ_min·I): p diagonal updates, never a dense p×(q+p) matrix
    for r in range(p):
        _ingest_wide(state, r, q + r, scales.sigma_min)
    return state


def _ingest_wide(state: SketchState, a: int, b: int, delta: float) -> None:
    """Entry (a, b) of the Priv₁ work matrix (W | σ_min·I)"""
    state.y_c[a] += delta * state.phi_hat[b]
    apply_update(state.psi, Side.LEFT, a, b, delta, state.y_r)
    _add_outer(state, a, b, delta)


def _add_outer(state: SketchState, a: int, b: int, delta: float) -> None:
    s, t_op = state.s, state.t_op
    if s.kind is SketchKind.COUNT_SKETCH and t_op.kind is SketchKind.COUNT_SKETCH:
        state.z[s.targets[a], t_op.targets[b]] += s.scale * s.signs[a] * t_op.scale * t_op.signs[b] * delta
    else:
        state.z += delta * np.outer(s.column(a), t_op.column(b))


def ingest(state: SketchState, update: TurnstileUpdate) -> None:
    i, j, delta = update.i, update.j, update.delta
    require(validate_index(i, state.m, "row"))
    require(validate_index(j, state.n, "column"))
    require(validate_finite(delta, "delta"))
    delta = float(delta)

    if state.mode is Mode.PRIV2:
        apply_update(state.phi, Side.RIGHT, i, j, delta, state.y_c)
        apply_update(state.s, Side.LEFT, i, j, delta, state.z)
    elif state.mode is Mode.NON_PRIVATE:
        apply_update(state.phi, Side.RIGHT, i, j, delta, state.y_c)
        apply_update(state.psi, Side.LEFT, i, j, delta, state.y_r)
        _add_outer(state, i, j, delta)
    else:
        a, b = (j, i) if state.transposed else (i, j)
        _ingest_wide(state, a, b, delta)

    state.updates_seen += 1
    logger.debug(f"Ingested ({i}, {j}, {delta}); {state.updates_seen} updates seen")


def ingest_all(state: SketchState, updates: Iterable[TurnstileUpdate]) -> int:
    count = 0
    for update in updates:
        ingest(state, update)
        count += 1
    return count


def ingest_matrix(state: SketchState, a) -> None:
    """Add a whole m×n matrix at once; equal to streaming its entries by linearity"""
    a = linalg.as_matrix(a)
    if a.shape != (state.m, state.n):
        raise ValueError(f"matrix shape {a.shape} does not match stream shape {(state.m, state.n)}")
    if state.mode is Mode.PRIV2:
        state.y_c += apply_right(a, state.phi)
        state.z += apply_left(state.s, a)
    elif state.mode is Mode.NON_PRIVATE:
        state.y_c += apply_right(a, state.phi)
        state.y_r += apply_left(state.psi, a)
        state.z += apply_right(apply_left(state.s, a), state.t_op)
    else:
        w = a.T if state.transposed else a
        q = w.shape[1]
        state.y_c += w @ state.phi_hat[:q]
        state.y_r[:, :q] += apply_left(state.psi, w)
        # zero-pad S·W (v×q), not W itself
        sw = apply_left(state.s, w)
        padded = np.zeros((sw.shape[0], state.t_op.in_dim))
        padded[:, :q] = sw
        state.z += apply_right(padded, state.t_op)
    state.updates_seen += int(np.count_nonzero(a))


def space_bound(mode: Mode | str, m: int, n: int, k: int, alpha: float, delta: float | None = None) -> float:
    """Asymptotic scalar count of the state for the mode, without constants"""
    mode = Mode(mode)
    log_k = math.log2(k + 2)
    if mode is Mode.NON_PRIVATE:
        dims = dims_nonprivate(k, alpha, 1.0)
        return float((m + n) * dims.t + dims.v**2)
    log_delta = math.log2(1.0 / delta)
    if mode is Mode.PRIV1:
        return (m + n) * (k + 1 / alpha) / alpha * log_k * log_delta
    return (m + n / alpha**2) * k / alpha**2 * log_k * log_delta


# Stream file: "% m n" header, then "i j delta" per line; '#' comments and blank lines skipped


class UpdateStream:
    """Lazily parsed stream file; the header is read on construction"""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.count = 0
        self._header_line = 0
        self.m, self.n = self._read_header()

    def _lines(self) -> Iterator[tuple[int, str]]:
        with open(self.path, newline=None) as f:
            for number, raw in enumerate(f, start=1):
                line = raw.strip()
                if line and not line.startswith("#"):
                    yield number, line

    def _read_header(self) -> tuple[int, int]:
        for number, line in self._lines():
            parts = line.split()
            if parts[0] != "%" or len(parts) != 3:
                raise StreamFormatError(self.path, number, f"expected header '% m n', got {line!r}")
            try:
                m, n = int(parts[1]), int(parts[2])
            except ValueError:
                raise StreamFormatError(self.path, number, f"malformed dimensions in header {line!r}")
            if m < 1 or n < 1:
                raise StreamFormatError(self.path, number, f"dimensions must be positive, got {m}x{n}")
            self._header_line = number
            return m, n
        raise StreamFormatError(self.path, 1, "missing header '% m n'")

    def __iter__(self) -> Iterator[TurnstileUpdate]:
        self.count = 0
        for number, line in self._lines():
            if number <= self._header_line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise StreamFormatError(self.path, number, f"expected 'i j delta', got {line!r}")
            try:
                i, j, delta = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError:
                raise StreamFormatError(self.path, number, f"cannot parse {line!r}")
            if not 0 <= i < self.m:
                raise StreamFormatError(self.path, number, f"row index {i} out of range [0, {self.m})")
            if not 0 <= j < self.n:
                raise StreamFormatError(self.path, number, f"column index {j} out of range [0, {self.n})")
            if not math.isfinite(delta):
                raise StreamFormatError(self.path, number, f"non-finite delta {parts[2]!r}")
            self.count += 1
            yield TurnstileUpdate(i, j, delta)
        logger.info(f"Read {self.count} updates from {self.path}")


def read_stream(path: str | Path) -> UpdateStream:
    return UpdateStream(path)


def write_stream(path: str | Path, m: int, n: int, updates: Iterable[TurnstileUpdate]) -> int:
    count = 0
    with open(path, "w") as f:
        f.write(f"% {m} {n}\n")
        for update in updates:
            f.write(f"{update.i} {update.j} {update.delta:.17g}\n")
            count += 1
    return count
