"""Differentially private factorization.

Noise scales follow the Gaussian mechanism for the two neighbouring granularities:
Priv₂ (neighbours differ by a unit-Frobenius matrix) releases the one-sided pair
with noise ρ; Priv₁ (neighbours differ by a rank-one uvᵀ with unit u, v) releases
the two-sided triple of the σ_min-augmented matrix with noise ρ₁ on y_r and ρ₂ on z.
"""
import logging
import math
import time
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field

import numpy as np

from sketchlrf import linalg
from sketchlrf.linalg import Factorization
from sketchlrf.lrf import LrfReport, evaluate, one_sided_factorization, two_sided_factorization
from sketchlrf.modes import Mode, PrivacyLevel
from sketchlrf.sketch import (
    ROLE_AUDIT,
    ROLE_NOISE_1,
    ROLE_NOISE_2,
    SketchOperator,
    apply_left,
    apply_right,
    fresh_seed,
    generator,
    role_seed,
)
from sketchlrf.stream import SketchState
from sketchlrf.validation import (
    require,
    validate_alpha,
    validate_delta,
    validate_dimension,
    validate_epsilon,
    validate_nonnegative,
    validate_positive,
    validate_rank,
    validate_seed,
)

logger = logging.getLogger(__name__)

AUDIT_MARGIN: float = 0.2
ENVELOPE_TAIL: float = 2.0


@dataclass(frozen=True)
class PrivacyParams:
    epsilon: float
    delta: float
    level: PrivacyLevel
    alpha: float

    def __post_init__(self):
        object.__setattr__(self, "level", PrivacyLevel(self.level))
        require(validate_epsilon(self.epsilon))
        require(validate_delta(self.delta))
        require(validate_alpha(self.alpha, strict_upper=self.level is PrivacyLevel.PRIV1))

    def to_json(self) -> dict:
        return {"epsilon": self.epsilon, "delta": self.delta, "level": self.level.value, "alpha": self.alpha}


@dataclass(frozen=True)
class NoiseScales:
    rho: float = 0.0
    rho1: float = 0.0
    rho2: float = 0.0
    sigma_min: float = 0.0

    def to_json(self) -> dict:
        return asdict(self)


def calibrate(params: PrivacyParams, t: int | None = None, log_base: float = math.e) -> NoiseScales:
    """Exact noise scales; log_base only affects the leading log(1/δ) factor of σ_min"""
    ln_inv_delta = math.log(1.0 / params.delta)
    eps, alpha = params.epsilon, params.alpha
    if params.level is PrivacyLevel.PRIV2:
        return NoiseScales(rho=math.sqrt((1 + alpha) * ln_inv_delta) / eps)
    if t is None:
        raise ValueError("Priv1 calibration needs the sketch dimension t")
    require(validate_dimension(t, "t"))
    require(validate_positive(log_base, "log_base"))
    sigma_min = 16 * math.log(1.0 / params.delta, log_base)
    sigma_min *= math.sqrt(t * (1 + alpha) / (1 - alpha) * ln_inv_delta) / eps
    return NoiseScales(
        rho1=math.sqrt((1 + alpha) * ln_inv_delta) / eps,
        rho2=(1 + alpha) * math.sqrt(ln_inv_delta) / eps,
        sigma_min=sigma_min,
    )


def gaussian_noise_matrix(rows: int, cols: int, std: float, seed: int) -> np.ndarray:
    require(validate_nonnegative(std, "std"))
    require(validate_seed(seed))
    return std * generator(seed).standard_normal((rows, cols))


def effective_budget(params: PrivacyParams) -> tuple[float, float]:
    """Total (ε, δ) of one release; Priv₁ publishes three sketches"""
    if params.level is PrivacyLevel.PRIV1:
        return 3 * params.epsilon, 3 * params.delta
    return params.epsilon, params.delta


def compose(budgets: Sequence[tuple[float, float]], delta_prime: float) -> tuple[float, float]:
    """Advanced composition of ℓ identical (ε₀, δ₀) releases"""
    if not budgets:
        raise ValueError("compose needs at least one budget")
    require(validate_delta(delta_prime, "delta_prime"))
    eps0, delta0 = budgets[0]
    if any(b != (eps0, delta0) for b in budgets):
        raise ValueError("compose only supports identical budgets")
    require(validate_nonnegative(eps0, "epsilon"))
    require(validate_nonnegative(delta0, "delta"))
    ell = len(budgets)
    eps_total = math.sqrt(2 * ell * math.log(1.0 / delta_prime)) * eps0 + 2 * ell * eps0**2
    return eps_total, ell * delta0 + delta_prime


def frobenius_envelope(m: int, n: int, k: int, alpha: float, epsilon: float, delta: float) -> float:
    """Additive error term of the one-sided private release, without its constant"""
    first = (1 + alpha) * math.sqrt(k * m)
    second = math.sqrt(n * (1 + alpha) / alpha**3 * (k + 1 / alpha))
    return (first + second) * math.sqrt(math.log(1.0 / delta)) / epsilon


def space_optimal_envelope(m: int, n: int, k: int, alpha: float, scales: NoiseScales, v: int,
                           ell: float = ENVELOPE_TAIL) -> float:
    """Additive error term of the two-sided private release, without its constant"""
    return (
        scales.sigma_min * math.sqrt(m + n)
        + scales.rho2 * v * ell
        + scales.rho1 * math.sqrt(k * (m + n)) / (1 - alpha)
    )


def additive_excess(residual: float, oracle: float, alpha: float) -> float:
    return max(0.0, residual - (1 + alpha) * oracle)


def _resolve(state: SketchState, mode: Mode, params: PrivacyParams | None, seed: int | None,
             scales: NoiseScales | None) -> tuple[PrivacyParams, int, NoiseScales]:
    if state.mode is not mode:
        raise ValueError(f"expected a {mode.value} stream, got {state.mode.value}")
    params = state.privacy if params is None else params
    if params is None:
        raise ValueError("missing privacy parameters")
    if params != state.privacy:
        raise ValueError("privacy parameters differ from the ones the stream was initialized with")
    if seed is None:
        seed = fresh_seed()
    require(validate_seed(seed, "noise seed"))
    return params, seed, state.scales if scales is None else scales


def private_frobenius_lrf(
    state: SketchState,
    k: int | None = None,
    params: PrivacyParams | None = None,
    seed: int | None = None,
    scales: NoiseScales | None = None,
    reference=None,
) -> LrfReport:
    """Release y = A·Φ + N₁ and z = S·A + N₂, then solve one-sided.

    seed pins N₁ and N₂ for reproducible experiments; left out, they are drawn from OS entropy.
    """
    params, seed, scales = _resolve(state, Mode.PRIV2, params, seed, scales)
    k = state.k if k is None else k
    require(validate_rank(k, min(state.effective_dims)))
    start = time.perf_counter()
    y = state.y_c + gaussian_noise_matrix(*state.y_c.shape, scales.rho, role_seed(seed, ROLE_NOISE_1))
    z = state.z + gaussian_noise_matrix(*state.z.shape, scales.rho, role_seed(seed, ROLE_NOISE_2))
    factorization, rank, degenerate = one_sided_factorization(y, z, state.s, k)
    report = LrfReport(
        factorization=factorization,
        wall_time_s=time.perf_counter() - start,
        effective_rank=rank,
        degenerate=degenerate,
        noise=scales.to_json(),
        budget=_budget_json(params),
        envelope=frobenius_envelope(state.m, state.n, k, params.alpha, params.epsilon, params.delta),
    )
    return _with_excess(evaluate(report, reference), params.alpha)


def restrict_augmented(factorization: Factorization, q: int, transposed: bool) -> Factorization:
    """Drop the σ_min block from V and re-orthonormalize, undoing the work-matrix transpose"""
    left, sigma, right = factorization.u, factorization.sigma, factorization.v[:q]
    restricted = linalg.svd(right * sigma)
    left = left @ restricted.v
    right = restricted.u
    if transposed:
        left, right = right, left
    return Factorization(u=left, sigma=restricted.sigma, v=right, k=factorization.k)


def private_space_optimal_lrf(
    state: SketchState,
    k: int | None = None,
    params: PrivacyParams | None = None,
    seed: int | None = None,
    scales: NoiseScales | None = None,
    reference=None,
) -> LrfReport:
    """Release y_c (noiseless), y_r + N₁ and z + N₂ of (W | σ_min·I), then solve two-sided.

    σ_min is fixed when the stream is initialized; scales only drive ρ₁ and ρ₂ here.
    """
    params, seed, scales = _resolve(state, Mode.PRIV1, params, seed, scales)
    k = state.k if k is None else k
    require(validate_rank(k, min(state.effective_dims)))
    start = time.perf_counter()
    y_r = state.y_r + gaussian_noise_matrix(*state.y_r.shape, scales.rho1, role_seed(seed, ROLE_NOISE_1))
    z = state.z + gaussian_noise_matrix(*state.z.shape, scales.rho2, role_seed(seed, ROLE_NOISE_2))
    augmented, rank, degenerate = two_sided_factorization(state.y_c, y_r, z, state.s, state.t_op, k)
    if degenerate:
        factorization = Factorization.zeros(state.m, state.n, k)
    else:
        factorization = restrict_augmented(augmented, state.work_shape[1], state.transposed)
    report = LrfReport(
        factorization=factorization,
        wall_time_s=time.perf_counter() - start,
        effective_rank=rank,
        degenerate=degenerate,
        noise=scales.to_json() | {"sigma_min": state.scales.sigma_min},
        budget=_budget_json(params),
        envelope=space_optimal_envelope(state.m, state.n, k, params.alpha, state.scales, state.effective_dims[1]),
    )
    return _with_excess(evaluate(report, reference), params.alpha)


def _budget_json(params: PrivacyParams) -> dict:
    epsilon, delta = effective_budget(params)
    return {"epsilon": epsilon, "delta": delta}


def _with_excess(report: LrfReport, alpha: float) -> LrfReport:
    if report.residual_fro is not None and report.oracle_residual_fro is not None:
        report.extra["additive_excess"] = additive_excess(report.residual_fro, report.oracle_residual_fro, alpha)
    return report


def private_factorize(state: SketchState, k: int | None = None, seed: int | None = None, reference=None) -> LrfReport:
    if state.mode is Mode.PRIV1:
        return private_space_optimal_lrf(state, k, seed=seed, reference=reference)
    if state.mode is Mode.PRIV2:
        return private_frobenius_lrf(state, k, seed=seed, reference=reference)
    raise ValueError("private_factorize needs a priv1 or priv2 stream")


# Sensitivity audit


@dataclass(frozen=True)
class AuditTarget:
    """Map E ↦ left·E·rightᵀ; E (shape) is zero padded to the operators' input dims"""
    name: str
    shape: tuple[int, int]
    left: SketchOperator | None = None
    right: SketchOperator | None = None

    @property
    def sides(self) -> int:
        return int(self.left is not None) + int(self.right is not None)

    def apply(self, e: np.ndarray) -> np.ndarray:
        rows = self.left.in_dim if self.left is not None else e.shape[0]
        cols = self.right.in_dim if self.right is not None else e.shape[1]
        padded = np.zeros((rows, cols))
        padded[: e.shape[0], : e.shape[1]] = e
        if self.left is not None:
            padded = apply_left(self.left, padded)
        if self.right is not None:
            padded = apply_right(padded, self.right)
        return padded


@dataclass(frozen=True)
class AuditResult:
    name: str
    bound: float
    max_sq: float
    p95_sq: float
    hard_failures: int

    @property
    def flagged(self) -> bool:
        return self.hard_failures > 0

    @property
    def passed(self) -> bool:
        return self.p95_sq <= self.bound and not self.flagged


@dataclass
class AuditReport:
    level: PrivacyLevel
    alpha: float
    trials: int
    margin: float
    results: list[AuditResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def to_json(self) -> dict:
        return {
            "level": self.level.value,
            "alpha": self.alpha,
            "trials": self.trials,
            "margin": self.margin,
            "passed": self.passed,
            "results": [asdict(r) | {"flagged": r.flagged, "passed": r.passed} for r in self.results],
        }


def audit_targets(state: SketchState) -> list[AuditTarget]:
    p, q = state.work_shape
    if state.mode is Mode.PRIV2:
        return [
            AuditTarget("E·Φ", (p, q), right=state.phi),
            AuditTarget("S·E", (p, q), left=state.s),
        ]
    # Priv₁: Φ acts on the augmented width, E sits in its first q columns
    return [
        AuditTarget("E·Φ", (p, q), right=state.phi),
        AuditTarget("Ψ·E", (p, q), left=state.psi),
        AuditTarget("S·E·Tᵀ", (p, q), left=state.s, right=state.t_op),
    ]


def neighbouring_difference(level: PrivacyLevel, shape: tuple[int, int], rng: np.random.Generator) -> np.ndarray:
    rows, cols = shape
    if PrivacyLevel(level) is PrivacyLevel.PRIV1:
        u, v = rng.standard_normal(rows), rng.standard_normal(cols)
        return np.outer(u / np.linalg.norm(u), v / np.linalg.norm(v))
    e = rng.standard_normal(shape)
    return e / linalg.frobenius_norm(e)


def sensitivity_audit(
    level: PrivacyLevel | str,
    targets: Sequence[AuditTarget],
    trials: int,
    seed: int,
    alpha: float,
    margin: float = AUDIT_MARGIN,
) -> AuditReport:
    """Empirical check of the sketched ℓ₂-sensitivity premise; not a privacy proof"""
    level = PrivacyLevel(level)
    require(validate_dimension(trials, "trials"))
    require(validate_seed(seed))
    require(validate_alpha(alpha))
    require(validate_nonnegative(margin, "margin"))
    rng = generator(role_seed(seed, ROLE_AUDIT))
    report = AuditReport(level=level, alpha=alpha, trials=trials, margin=margin)
    for target in targets:
        squared = np.empty(trials)
        for trial in range(trials):
            e = neighbouring_difference(level, target.shape, rng)
            squared[trial] = linalg.frobenius_norm(target.apply(e)) ** 2
        bound = (1 + alpha) ** target.sides
        result = AuditResult(
            name=target.name,
            bound=bound,
            max_sq=float(squared.max()),
            p95_sq=float(np.percentile(squared, 95)),
            hard_failures=int(np.count_nonzero(squared > bound * (1 + margin))),
        )
        if result.flagged:
            logger.warning(f"Audit target {target.name}: {result.hard_failures}/{trials} draws exceed {bound * (1 + margin):.4g}")
        report.results.append(result)
    return report
