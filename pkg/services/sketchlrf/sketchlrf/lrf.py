"""Non-private reconstruction from sketches."""
import json
import logging
import math
import time
from collections.abc import Iterable
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from sketchlrf import linalg
from sketchlrf.linalg import Factorization
from sketchlrf.modes import Mode
from sketchlrf.sketch import SketchOperator, apply_left, apply_right
from sketchlrf.stream import SketchState
from sketchlrf.validation import require, validate_rank

logger = logging.getLogger(__name__)

ORTHONORMAL_TOLERANCE: float = 1e-8
RATIO_FLOOR: float = 1e-12


@dataclass
class LrfReport:
    factorization: Factorization
    residual_fro: float | None = None
    oracle_residual_fro: float | None = None
    ratio: float | None = None
    wall_time_s: float = 0.0
    effective_rank: int = 0
    degenerate: bool = False
    noise: dict[str, float] | None = None
    budget: dict[str, float] | None = None
    envelope: float | None = None
    extra: dict[str, Any] = field(default_factory=dict)

    def to_json(self, include_factors: bool = False) -> dict[str, Any]:
        m, n = self.factorization.shape
        report = {
            "k": self.factorization.k,
            "dims": {"m": m, "n": n},
            "sigma": self.factorization.sigma.tolist(),
            "residual_fro": self.residual_fro,
            "oracle_residual_fro": self.oracle_residual_fro,
            "ratio": self.ratio,
            "effective_rank": self.effective_rank,
            "degenerate": self.degenerate,
            "wall_time_ms": self.wall_time_s * 1000.0,
        }
        if self.noise is not None:
            report["noise"] = self.noise
        if self.budget is not None:
            report["budget"] = self.budget
        if self.envelope is not None:
            report["envelope"] = self.envelope
        report.update(self.extra)
        if include_factors:
            report["u"] = self.factorization.u.tolist()
            report["v"] = self.factorization.v.tolist()
        return report

    def write(self, directory: str | Path, **metadata: Any) -> Path:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        linalg.write_matrix(out / "u.mat", self.factorization.u)
        linalg.write_vector(out / "sigma.vec", self.factorization.sigma)
        linalg.write_matrix(out / "v.mat", self.factorization.v)
        report = self.to_json() | metadata
        (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        return out


def _check_orthonormal_columns(q: np.ndarray, name: str) -> None:
    gram = q.T @ q
    error = linalg.frobenius_norm(gram - np.eye(gram.shape[0]))
    if error > ORTHONORMAL_TOLERANCE * max(1, gram.shape[0]):
        raise ValueError(f"{name} does not have orthonormal columns (‖{name}ᵀ{name} − I‖_F = {error:.3g})")


def rank_k_under_basis(o, z, k: int) -> np.ndarray:
    """argmin over rank-k X of ‖o·X − z‖_F, which is [oᵀz]_k"""
    o, z = linalg.as_matrix(o, "o"), linalg.as_matrix(z, "z")
    _check_orthonormal_columns(o, "o")
    return linalg.truncate_rank_k(o.T @ z, k)


def rank_k_between_bases(c, r, f, k: int) -> np.ndarray:
    """argmin over rank-k X of ‖c·X·r − f‖_F, which is [cᵀ·f·rᵀ]_k"""
    c, r, f = linalg.as_matrix(c, "c"), linalg.as_matrix(r, "r"), linalg.as_matrix(f, "f")
    _check_orthonormal_columns(c, "c")
    _check_orthonormal_columns(r.T, "r")
    return linalg.truncate_rank_k(c.T @ f @ r.T, k)


def sketched_regression(p, q, phi: SketchOperator) -> np.ndarray:
    """(Φ·p)†·(Φ·q), the minimizer of ‖Φ(p·X − q)‖_F"""
    return linalg.pinv(apply_left(phi, p)) @ apply_left(phi, q)


def _pseudo_inverse_values(decomposition: linalg.Svd, shape: tuple[int, int]) -> np.ndarray:
    sigma = decomposition.sigma
    return linalg.invert_singular_values(sigma, linalg.default_tolerance(*shape, sigma[0]))


def _pad_factorization(left: np.ndarray, sigma: np.ndarray, right: np.ndarray, k: int) -> Factorization:
    r = min(k, sigma.shape[0])
    left = linalg.complete_orthonormal(left[:, :r], k)
    right = linalg.complete_orthonormal(right[:, :r], k)
    return Factorization(u=left, sigma=np.concatenate([sigma[:r], np.zeros(k - r)]), v=right, k=k)


def _effective_rank(sigma: np.ndarray, shape: tuple[int, int], k: int) -> int:
    if sigma.size == 0 or sigma[0] == 0:
        return 0
    return min(k, int(np.count_nonzero(sigma > linalg.default_tolerance(*shape, sigma[0]))))


def two_sided_factorization(
    y_c, y_r, z, s_op: SketchOperator, t_op: SketchOperator, k: int
) -> tuple[Factorization, int, bool]:
    """Rank-k factorization from y_c = AΦ, y_r = ΨA, z = SATᵀ.

    Returns (factorization, effective rank, degenerate).
    """
    y_c, y_r, z = linalg.as_matrix(y_c, "y_c"), linalg.as_matrix(y_r, "y_r"), linalg.as_matrix(z, "z")
    m, n = y_c.shape[0], y_r.shape[1]
    require(validate_rank(k, min(m, n)))
    if linalg.frobenius_norm(y_c) == 0 or linalg.frobenius_norm(y_r) == 0:
        logger.warning(f"Degenerate all-zero sketch for a {m}x{n} matrix; returning the zero factorization")
        return Factorization.zeros(m, n, k), 0, True

    u = linalg.orthonormal_columns(y_c)
    v = linalg.orthonormal_rows(y_r)
    su = apply_left(s_op, u)
    vt = apply_right(v, t_op)
    su_svd, vt_svd = linalg.svd(su), linalg.svd(vt)

    core = linalg.truncate_rank_k(su_svd.u.T @ z @ vt_svd.v, k)
    x = (su_svd.v * _pseudo_inverse_values(su_svd, su.shape)) @ core
    x = x @ (_pseudo_inverse_values(vt_svd, vt.shape)[:, None] * vt_svd.u.T)

    x_svd = linalg.svd(x)
    rank = _effective_rank(x_svd.sigma, x.shape, k)
    if rank < k:
        logger.warning(f"Sketched core has effective rank {rank} < k={k}; padding with zero singular values")
    r = min(k, x_svd.rank)
    return _pad_factorization(u @ x_svd.u[:, :r], x_svd.sigma, v.T @ x_svd.v[:, :r], k), rank, False


def one_sided_factorization(y, z, s_op: SketchOperator, k: int) -> tuple[Factorization, int, bool]:
    """Rank-k factorization U·Ṽ·Σ̃†·[Ũᵀz]_k from y = AΦ and z = SA"""
    y, z = linalg.as_matrix(y, "y"), linalg.as_matrix(z, "z")
    m, n = y.shape[0], z.shape[1]
    require(validate_rank(k, min(m, n)))
    if linalg.frobenius_norm(y) == 0:
        logger.warning(f"Degenerate all-zero sketch for a {m}x{n} matrix; returning the zero factorization")
        return Factorization.zeros(m, n, k), 0, True

    u = linalg.orthonormal_columns(y)
    su = apply_left(s_op, u)
    su_svd = linalg.svd(su)
    core = linalg.truncate_rank_k(su_svd.u.T @ z, k)
    x = (su_svd.v * _pseudo_inverse_values(su_svd, su.shape)) @ core

    x_svd = linalg.svd(x)
    rank = _effective_rank(x_svd.sigma, x.shape, k)
    if rank < k:
        logger.warning(f"Sketched core has effective rank {rank} < k={k}; padding with zero singular values")
    r = min(k, x_svd.rank)
    return _pad_factorization(u @ x_svd.u[:, :r], x_svd.sigma, x_svd.v[:, :r], k), rank, False


def oracle_residual(a, k: int) -> float:
    """‖a − [a]_k‖_F from the singular-value tail"""
    sigma = linalg.svd(a).sigma
    return float(math.sqrt(np.sum(sigma[k:] ** 2)))


def residual_from_rows(factorization: Factorization, rows: Iterable[np.ndarray]) -> float:
    """‖A − U·Σ·Vᵀ‖_F with A supplied one row at a time"""
    left = factorization.u * factorization.sigma
    total = 0.0
    for i, row in enumerate(rows):
        diff = row - left[i] @ factorization.v.T
        total += float(diff @ diff)
    return math.sqrt(total)


def evaluate(report: LrfReport, reference=None, k: int | None = None, oracle: bool = True) -> LrfReport:
    """Fill residual, oracle residual and ratio against a materialized reference"""
    if reference is None:
        return report
    reference = linalg.as_matrix(reference, "reference")
    if reference.shape != report.factorization.shape:
        raise ValueError(f"reference shape {reference.shape} does not match factorization {report.factorization.shape}")
    report.residual_fro = linalg.frobenius_norm(reference - report.factorization.matrix())
    if oracle:
        report.oracle_residual_fro = oracle_residual(reference, report.factorization.k if k is None else k)
        report.ratio = _ratio(report.residual_fro, report.oracle_residual_fro, linalg.frobenius_norm(reference))
    return report


def _ratio(residual: float, oracle: float, scale: float = 1.0) -> float | None:
    """None when the oracle residual vanishes relative to ‖A‖_F (exact rank ≤ k)"""
    if oracle <= RATIO_FLOOR * max(scale, 1.0):
        return None
    return residual / oracle


def factorize(state: SketchState, k: int | None = None, reference=None) -> LrfReport:
    if state.mode is not Mode.NON_PRIVATE:
        raise ValueError(f"factorize needs a non-private stream, got mode {state.mode.value}; use the dp pipelines")
    k = state.k if k is None else k
    require(validate_rank(k, min(state.effective_dims)))
    start = time.perf_counter()
    factorization, rank, degenerate = two_sided_factorization(state.y_c, state.y_r, state.z, state.s, state.t_op, k)
    report = LrfReport(
        factorization=factorization,
        wall_time_s=time.perf_counter() - start,
        effective_rank=rank,
        degenerate=degenerate,
    )
    return evaluate(report, reference)


def factorize_one_sided(y, z, s_op: SketchOperator, k: int, reference=None) -> LrfReport:
    start = time.perf_counter()
    factorization, rank, degenerate = one_sided_factorization(y, z, s_op, k)
    report = LrfReport(
        factorization=factorization,
        wall_time_s=time.perf_counter() - start,
        effective_rank=rank,
        degenerate=degenerate,
    )
    return evaluate(report, reference)
