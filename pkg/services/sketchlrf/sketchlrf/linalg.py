"""Dense real linear-algebra kernel.

Householder QR (with column pivoting for rank detection), one-sided Jacobi SVD,
Moore-Penrose pseudo-inverse, best rank-k truncation, norms, and the project-wide
matrix file format. Matrices are 2-D float64 numpy arrays; numpy supplies storage and
products only, the decompositions are implemented here.
"""
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from sketchlrf.validation import require, validate_dimension, validate_nonnegative

logger = logging.getLogger(__name__)

EPS: float = float(np.finfo(np.float64).eps)
JACOBI_TOLERANCE: float = 1e-12
MAX_SWEEPS: int = 60


class SvdConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class Svd:
    """Thin SVD a = u·diag(sigma)·vᵀ with r = min(rows, cols) triplets"""
    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    @property
    def rank(self) -> int:
        return int(self.sigma.shape[0])

    def numerical_rank(self, tol: float = 0.0) -> int:
        if self.rank == 0:
            return 0
        cutoff = tol if tol > 0 else default_tolerance(self.u.shape[0], self.v.shape[0], self.sigma[0])
        return int(np.count_nonzero(self.sigma > cutoff))

    def matrix(self) -> np.ndarray:
        return (self.u * self.sigma) @ self.v.T


@dataclass(frozen=True)
class Factorization:
    """Rank-k factorization u·diag(sigma)·vᵀ with orthonormal u (m×k) and v (n×k)"""
    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray
    k: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape[0], self.v.shape[0]

    def matrix(self) -> np.ndarray:
        return (self.u * self.sigma) @ self.v.T

    @classmethod
    def zeros(cls, m: int, n: int, k: int) -> "Factorization":
        return cls(u=np.eye(m, k), sigma=np.zeros(k), v=np.eye(n, k), k=k)


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf entries")
    return np.ascontiguousarray(arr)


def default_tolerance(rows: int, cols: int, sigma_max: float) -> float:
    return max(rows, cols) * EPS * float(sigma_max)


def frobenius_norm(a) -> float:
    a = as_matrix(a)
    return float(np.sqrt(np.sum(a * a)))


def spectral_norm(a) -> float:
    a = as_matrix(a)
    if a.size == 0:
        return 0.0
    return float(svd(a).sigma[0])


# Householder QR


def _householder_vector(x: np.ndarray) -> np.ndarray:
    norm_x = np.linalg.norm(x)
    v = x.copy()
    if norm_x == 0.0:
        v[:] = 0.0
        v[0] = 1.0
        return v
    v[0] -= -norm_x if x[0] >= 0 else norm_x
    return v / np.linalg.norm(v)


def _householder_reduce(a: np.ndarray, pivot: bool, threshold: float) -> list[np.ndarray]:
    """Reflectors H_0..H_{r-1}; with pivoting, stops once every residual column norm <= threshold"""
    r = a.copy()
    m, n = r.shape
    reflectors: list[np.ndarray] = []
    for j in range(min(m, n)):
        if pivot:
            norms = np.linalg.norm(r[j:, j:], axis=0)
            p = int(np.argmax(norms))
            if norms[p] <= threshold:
                break
            if p:
                r[:, [j, j + p]] = r[:, [j + p, j]]
        v = _householder_vector(r[j:, j])
        r[j:, j:] -= 2.0 * np.outer(v, v @ r[j:, j:])
        reflectors.append(v)
    return reflectors


def _apply_reflectors(reflectors: list[np.ndarray], x: np.ndarray) -> np.ndarray:
    y = x.copy()
    for j in reversed(range(len(reflectors))):
        v = reflectors[j]
        y[j:] -= 2.0 * np.outer(v, v @ y[j:])
    return y


def orthonormal_columns(a) -> np.ndarray:
    """Orthonormal basis of col(a); the column count is the numerical rank of a"""
    a = as_matrix(a)
    m, n = a.shape
    if n == 0:
        raise ValueError("orthonormal_columns needs at least one column")
    threshold = max(m, n) * EPS * frobenius_norm(a)
    reflectors = _householder_reduce(a, pivot=True, threshold=threshold)
    return _apply_reflectors(reflectors, np.eye(m, len(reflectors)))


def orthonormal_rows(a) -> np.ndarray:
    return orthonormal_columns(as_matrix(a).T).T


def complete_orthonormal(q: np.ndarray, cols: int) -> np.ndarray:
    """Extend orthonormal columns q (m×r) to m×cols, new columns orthogonal to col(q)"""
    m, r = q.shape
    if cols > m:
        raise ValueError(f"cannot fit {cols} orthonormal columns in dimension {m}")
    if cols <= r:
        return q[:, :cols]
    if r == 0:
        return np.eye(m, cols)
    reflectors = _householder_reduce(q, pivot=False, threshold=0.0)
    extra = _apply_reflectors(reflectors, np.eye(m)[:, r:cols])
    return np.hstack([q, extra])


# One-sided Jacobi SVD


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Disjoint column pairs per round; n-1 (or n) rounds cover every pair once"""
    players = list(range(n)) + ([-1] if n % 2 else [])
    size = len(players)
    rounds = []
    for _ in range(size - 1):
        pairs = [(players[i], players[size - 1 - i]) for i in range(size // 2)]
        pairs = [(min(p, q), max(p, q)) for p, q in pairs if p >= 0 and q >= 0]
        rounds.append((np.array([p for p, _ in pairs]), np.array([q for _, q in pairs])))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def svd(a, max_sweeps: int = MAX_SWEEPS, tol: float = JACOBI_TOLERANCE) -> Svd:
    a = as_matrix(a)
    m, n = a.shape
    if m == 0 or n == 0:
        raise ValueError(f"svd of an empty {m}x{n} matrix")
    if m < n:
        transposed = svd(a.T, max_sweeps=max_sweeps, tol=tol)
        return Svd(u=transposed.v, sigma=transposed.sigma, v=transposed.u)

    work = a.copy()
    v = np.eye(n)
    if n > 1:
        rounds = _round_robin(n)
        floor = (EPS * frobenius_norm(a)) ** 2
        for _ in range(max_sweeps):
            rotated = False
            for p, q in rounds:
                ap, aq = work[:, p], work[:, q]
                alpha = np.einsum("ij,ij->j", ap, ap)
                beta = np.einsum("ij,ij->j", aq, aq)
                gamma = np.einsum("ij,ij->j", ap, aq)
                active = np.abs(gamma) > np.maximum(tol * np.sqrt(alpha * beta), floor)
                if not active.any():
                    continue
                rotated = True
                p, q = p[active], q[active]
                alpha, beta, gamma = alpha[active], beta[active], gamma[active]
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                for mat in (work, v):
                    mp, mq = mat[:, p], mat[:, q]
                    mat[:, p] = c * mp - s * mq
                    mat[:, q] = s * mp + c * mq
            if not rotated:
                break
        else:
            raise SvdConvergenceError(f"one-sided Jacobi did not converge in {max_sweeps} sweeps for a {m}x{n} matrix")

    sigma = np.linalg.norm(work, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma, work, v = sigma[order], work[:, order], v[:, order]
    live = sigma > default_tolerance(m, n, sigma[0]) if sigma[0] > 0 else np.zeros(n, dtype=bool)
    rank = int(np.count_nonzero(live))
    sigma[rank:] = 0.0
    u = complete_orthonormal(work[:, :rank] / sigma[:rank], n)
    return Svd(u=u, sigma=sigma, v=v)


def invert_singular_values(sigma: np.ndarray, cutoff: float) -> np.ndarray:
    inverse = np.zeros_like(sigma)
    mask = sigma > cutoff
    inverse[mask] = 1.0 / sigma[mask]
    return inverse


def pinv(a, tol: float = 0.0) -> np.ndarray:
    require(validate_nonnegative(tol, "tol"))
    a = as_matrix(a)
    decomposition = svd(a)
    cutoff = tol if tol > 0 else default_tolerance(*a.shape, decomposition.sigma[0])
    inverse = invert_singular_values(decomposition.sigma, cutoff)
    return (decomposition.v * inverse) @ decomposition.u.T


def truncate_rank_k(a, k: int) -> np.ndarray:
    """Best rank-k approximation [a]_k; ties at sigma_k keep the SVD's order"""
    require(validate_dimension(k, "k"))
    a = as_matrix(a)
    if a.size == 0:
        return a.copy()
    decomposition = svd(a)
    if k >= decomposition.rank:
        return a.copy()
    return (decomposition.u[:, :k] * decomposition.sigma[:k]) @ decomposition.v[:, :k].T


# Matrix file format: "rows cols" header then row-major decimals


def write_matrix(path: str | Path, a) -> None:
    a = as_matrix(a)
    rows, cols = a.shape
    with open(path, "w") as f:
        f.write(f"{rows} {cols}\n")
        for row in a:
            f.write(" ".join(f"{x:.17g}" for x in row) + "\n")


def read_matrix(path: str | Path) -> np.ndarray:
    tokens = Path(path).read_text().split()
    if len(tokens) < 2:
        raise ValueError(f"{path}: missing 'rows cols' header")
    try:
        rows, cols = int(tokens[0]), int(tokens[1])
    except ValueError:
        raise ValueError(f"{path}: malformed header {tokens[0]!r} {tokens[1]!r}")
    if rows < 0 or cols < 0:
        raise ValueError(f"{path}: negative dimensions {rows}x{cols}")
    values = tokens[2:]
    if len(values) != rows * cols:
        raise ValueError(f"{path}: expected {rows * cols} values for {rows}x{cols}, found {len(values)}")
    try:
        data = np.array([float(x) for x in values], dtype=np.float64)
    except ValueError as e:
        raise ValueError(f"{path}: {e}")
    return as_matrix(data.reshape(rows, cols), name=str(path))


def write_vector(path: str | Path, x) -> None:
    write_matrix(path, np.asarray(x, dtype=np.float64).reshape(-1, 1))


def read_vector(path: str | Path) -> np.ndarray:
    return read_matrix(path).reshape(-1)
