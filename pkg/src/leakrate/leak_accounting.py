"""Full-protocol smooth-entropy accounting for leakage registers.

Leakage registers enter the key-length analysis through max-entropy terms
subtracted from the base min-entropy by chain rules. Two routes bound those
max-entropy terms:

* a dimension bound, where the leakage register has at most d_L levels and
  the no-leak weight is at least 1 - delta; the per-round Renyi maximization
  has a closed form;
* an energy bound, where an infinite-mode oscillator Hamiltonian constrains
  the expected leaked energy; a Lagrange dual gives certified upper bounds,
  every dual-feasible evaluation being valid.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .core_math import DomainError, binary_entropy, smf

__all__ = ["SmoothingBudget", "DimensionBoundSpec", "EnergySpec", "DualPoint",
           "ChainInputs", "ChainResult", "SumMethod", "dim_opt_value",
           "hmax_dimension_bound", "energy_dualf", "energy_bound_optimize",
           "energy_primal_truncated", "hmax_energy_bound", "chain_assemble",
           "public_comm_chain", "energy_cutoff_closeness",
           "leak_dim_from_memory", "ENERGY_ALPHAS"]

ENERGY_ALPHAS = (0.9, 0.99, 0.999)


@dataclass(frozen=True)
class SmoothingBudget:
    """Epsilon bookkeeping for the chained entropy bounds.

    ``eps_prime = eps + 4 tau + 8 eps_l`` is the smoothing parameter of the
    corrected min-entropy after two chain-rule applications.
    """

    eps: float
    tau: float
    eps_l: float
    eps_pe: float

    def __post_init__(self):
        for name in ("eps", "tau", "eps_l", "eps_pe"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise DomainError(f"{name} must be in (0, 1), got {v}")
        if self.eps_prime >= 1.0:
            raise DomainError("combined smoothing eps + 4 tau + 8 eps_l "
                              "reaches 1; tighten the budget")

    @property
    def eps_prime(self) -> float:
        return self.eps + 4.0 * self.tau + 8.0 * self.eps_l


@dataclass(frozen=True)
class DimensionBoundSpec:
    """Leakage register with at most d_l levels and no-leak weight 1 - delta."""

    d_l: int
    delta: float

    def __post_init__(self):
        if self.d_l < 2:
            raise DomainError("leakage dimension bound must be >= 2")
        if not 0.0 <= self.delta < 1.0:
            raise DomainError("delta must be in [0, 1)")

    @property
    def trivial(self) -> bool:
        """True when the weight constraint no longer binds (uniform allowed)."""
        return self.delta >= 1.0 - 1.0 / self.d_l


def leak_dim_from_memory(d_c: int) -> int:
    """Dimension bound for a leakage register produced by a d_c-level memory;
    one extra level accounts for the blank no-leak state."""
    if d_c < 1:
        raise DomainError("memory dimension must be >= 1")
    return d_c + 1


@dataclass(frozen=True)
class EnergySpec:
    """Independent oscillator modes with level spacings ``spacings`` (energy
    units u), ground energy zero, and expected leaked energy at most e_max."""

    spacings: tuple[float, ...]
    e_max: float

    def __post_init__(self):
        object.__setattr__(self, "spacings",
                           tuple(float(s) for s in self.spacings))
        if not self.spacings:
            raise DomainError("need at least one mode")
        if any(s <= 0.0 for s in self.spacings):
            raise DomainError("gapless modes make the maximization unbounded")
        if self.e_max <= 0.0:
            raise DomainError("energy budget must be positive")


@dataclass(frozen=True)
class DualPoint:
    """Multipliers for the energy-bounded dual; the energy multiplier is
    stored as z with lag_e = 10^-z to keep the search well scaled."""

    lag_g: float
    z: float
    lag_p: float

    def __post_init__(self):
        if self.lag_g < 0.0:
            raise DomainError("weight multiplier must be >= 0")
        if self.lag_p <= self.lag_g:
            raise DomainError("normalization multiplier must exceed the "
                              "weight multiplier")

    @property
    def lag_e(self) -> float:
        return 10.0 ** (-self.z)


class SumMethod(enum.Enum):
    INTEGRAL_BOUND = "integral-bound"
    HURWITZ_ZETA = "hurwitz-zeta"
    TRUNCATED = "truncated"


def dim_opt_value(spec: DimensionBoundSpec, alpha: float) -> tuple[float, bool]:
    """Maximum of sum w^alpha over d_l-level distributions with w_0 >= 1 - delta.

    Concavity and symmetry put the maximizer at mass 1 - delta on the ground
    level and the remainder uniform, giving
    (1 - delta)^alpha + (d_l - 1) (delta / (d_l - 1))^alpha. Past the weight
    where uniform becomes feasible the uniform value is returned with a
    trivial-regime flag.
    """
    _check_alpha(alpha)
    if spec.trivial:
        return float(spec.d_l) ** (1.0 - alpha), True
    value = (1.0 - spec.delta) ** alpha
    if spec.delta > 0.0:
        value += (spec.d_l - 1) * (spec.delta / (spec.d_l - 1)) ** alpha
    return value, False


def _check_alpha(alpha: float):
    if not 0.5 <= alpha < 1.0:
        raise DomainError(f"Renyi order must be in [1/2, 1), got {alpha}")


def _correction_bits(alpha: float, budget: SmoothingBudget) -> float:
    return (math.log2(1.0 / budget.eps_pe) + smf(budget.eps_l)) \
        / (1.0 / alpha - 1.0)


def hmax_dimension_bound(n: int, spec: DimensionBoundSpec,
                         budget: SmoothingBudget,
                         alpha: float | None = None) -> float:
    """Upper bound in bits on the smooth max-entropy of n leakage registers
    under the dimension bound; ``alpha = None`` minimizes over the order."""
    if n < 0:
        raise DomainError("round count must be >= 0")

    def bound(a: float) -> float:
        value, _ = dim_opt_value(spec, a)
        return n * math.log2(value) / (1.0 - a) + _correction_bits(a, budget)

    if alpha is not None:
        return bound(alpha)
    res = optimize.minimize_scalar(bound, bounds=(0.5, 1.0 - 1e-6),
                                   method="bounded",
                                   options={"xatol": 1e-10})
    return min(float(res.fun), bound(0.5), bound(1.0 - 1e-6))


def _mode_sum(spacing: float, lag_e: float, lag_p: float, alpha: float,
              method: SumMethod, truncation: int) -> tuple[float, float]:
    """(upper, lower) bounds on sum_{l>=1} (alpha / (lag_e l spacing + lag_p))^s
    with s = alpha / (1 - alpha)."""
    s = alpha / (1.0 - alpha)
    if method is SumMethod.TRUNCATED:
        levels = np.arange(1, truncation + 1)
        v = float(np.sum((alpha / (lag_e * spacing * levels + lag_p)) ** s))
        return v, v
    if lag_e <= 0.0:
        raise DomainError("a positive energy multiplier is required for "
                          "infinite level sums")
    if method is SumMethod.HURWITZ_ZETA:
        import mpmath
        # sum_{l>=1} (l + q)^-s scaled out of (lag_e spacing l + lag_p)^-s
        q = lag_p / (lag_e * spacing)
        scale = (alpha / (lag_e * spacing)) ** s
        v = scale * float(mpmath.zeta(s, 1.0 + q))
        return v, v
    # integral bracket: the summand is decreasing in l, so the sum lies
    # between the integral over [1, inf) and first term + that integral
    first = (alpha / (lag_e * spacing + lag_p)) ** s
    integral = (alpha ** s / (lag_e * spacing * (s - 1.0))) \
        * (lag_e * spacing + lag_p) ** (1.0 - s)
    return first + integral, integral


def energy_dualf(d: DualPoint, e: EnergySpec, delta: float, alpha: float,
                 method: SumMethod = SumMethod.INTEGRAL_BOUND,
                 truncation: int = 100_000) -> tuple[float, float]:
    """Dual objective bounding the energy-constrained Renyi maximization.

    Returns ``(upper, lower)``: the upper value is a certified bound on the
    primal maximum of sum w^alpha for any valid multipliers; the lower
    companion (same expression with the per-mode upper sums replaced by
    their lower brackets) diagnoses the slack of the sum method.
    """
    _check_alpha(alpha)
    if not 0.0 <= delta < 1.0:
        raise DomainError("delta must be in [0, 1)")
    s = alpha / (1.0 - alpha)
    head = (alpha / (d.lag_p - d.lag_g)) ** s
    up = low = 0.0
    for spacing in e.spacings:
        u, l = _mode_sum(spacing, d.lag_e, d.lag_p, alpha, method, truncation)
        up += u
        low += l
    tail = -d.lag_g * (1.0 - delta) + d.lag_e * e.e_max + d.lag_p
    return ((1.0 - alpha) * (head + up) + tail,
            (1.0 - alpha) * (head + low) + tail)


def energy_bound_optimize(e: EnergySpec, delta: float, alpha: float,
                          method: SumMethod = SumMethod.INTEGRAL_BOUND,
                          ) -> tuple[float, DualPoint]:
    """Minimize the dual over multipliers; report bits and the best point.

    Any evaluated valid point already certifies an upper bound, so the
    derivative-free search only affects tightness. Restarts scan the energy
    multiplier across ten decades.
    """
    _check_alpha(alpha)

    best: tuple[float, DualPoint] | None = None

    def objective(v) -> float:
        nonlocal best
        lag_g, z, lag_p = v
        try:
            point = DualPoint(lag_g, z, lag_p)
            value, _ = energy_dualf(point, e, delta, alpha, method)
        except (DomainError, OverflowError):
            return float("inf")
        if not math.isfinite(value) or value <= 0.0:
            return float("inf")
        if best is None or value < best[0]:
            best = (value, point)
        return value

    for z0 in (2.0, 4.0, 6.0, 8.0, 10.0):
        optimize.minimize(objective, np.array([0.0, z0, alpha]),
                          method="Nelder-Mead",
                          options={"xatol": 1e-12, "fatol": 1e-14,
                                   "maxiter": 4000})
    if best is None:
        raise DomainError("no valid dual point found; check the energy spec")
    value, point = best
    return math.log2(value) / (1.0 - alpha), point


def energy_primal_truncated(e: EnergySpec, delta: float, alpha: float,
                            truncation: int) -> float:
    """Lower bound on the energy-constrained maximum of sum w^alpha from the
    truncated-level stationary family.

    For multipliers lag_p the stationary weights are
    w_k = (alpha / (lag_e E_k + lag_p))^{1/(1-alpha)} with the ground weight
    pinned at 1 - delta; lag_p (at fixed ratio) is bisected so the weights
    sum to delta over the excited levels, then the energy multiplier is
    tuned so the energy constraint is met. The returned value evaluates a
    feasible point, so it is a valid lower bound regardless of tuning.
    """
    _check_alpha(alpha)
    if truncation < 1:
        raise DomainError("need at least one level per mode")
    if delta == 0.0:
        return 1.0
    levels = np.concatenate([np.arange(1, truncation + 1) * s
                             for s in e.spacings])
    order = np.argsort(levels)
    energies = levels[order]
    power = 1.0 / (1.0 - alpha)

    def weights(lag_e: float, lag_p: float) -> np.ndarray:
        return (alpha / (lag_e * energies + lag_p)) ** power

    def excess(lag_e: float) -> float:
        # bisect lag_p so the excited weights sum to delta, then report the
        # energy slack at that multiplier
        lo, hi = 1e-12, 1e12
        for _ in range(200):
            mid = math.sqrt(lo * hi)
            if float(np.sum(weights(lag_e, mid))) > delta:
                lo = mid
            else:
                hi = mid
        w = weights(lag_e, math.sqrt(lo * hi))
        w *= delta / max(w.sum(), 1e-300)
        return float(np.dot(w, energies)) - e.e_max

    lo_e, hi_e = 1e-18, 1e6
    if excess(lo_e) <= 0.0:
        lag_e = lo_e
    else:
        for _ in range(200):
            mid = math.sqrt(lo_e * hi_e)
            if excess(mid) > 0.0:
                lo_e = mid
            else:
                hi_e = mid
        lag_e = math.sqrt(lo_e * hi_e)
    lo, hi = 1e-12, 1e12
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if float(np.sum(weights(lag_e, mid))) > delta:
            lo = mid
        else:
            hi = mid
    w = weights(lag_e, math.sqrt(lo * hi))
    w *= delta / max(w.sum(), 1e-300)
    if float(np.dot(w, energies)) > e.e_max * (1.0 + 1e-12):
        w *= e.e_max / float(np.dot(w, energies))
    return (1.0 - delta) ** alpha + float(np.sum(w ** alpha))


def hmax_energy_bound(n: int, e: EnergySpec, delta: float, alpha: float,
                      budget: SmoothingBudget,
                      method: SumMethod = SumMethod.INTEGRAL_BOUND) -> float:
    """Upper bound in bits on the smooth max-entropy of n leakage registers
    under the expected-energy constraint."""
    if n < 0:
        raise DomainError("round count must be >= 0")
    per_round = energy_bound_optimize(e, delta, alpha, method)[0] if n else 0.0
    return n * per_round + _correction_bits(alpha, budget)


@dataclass(frozen=True)
class ChainInputs:
    """Entropies (bits) entering the leakage-corrected min-entropy."""

    hmin_base: float
    hmax_ae: float
    hmax_be: float
    budget: SmoothingBudget
    q_prime_classical: bool = False

    def __post_init__(self):
        for name in ("hmin_base", "hmax_ae", "hmax_be"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")


@dataclass
class ChainResult:
    hmin_corrected_bits: float
    eps_prime: float
    vacuous: bool
    metadata: dict = field(default_factory=dict)


def chain_assemble(c: ChainInputs) -> ChainResult:
    """Min-entropy after compensating for both parties' leakage registers.

    Default route applies the min/max chain rule once per register:
    hmin - 2 hmax_ae - 2 hmax_be - 6 smf(tau) at smoothing
    eps + 4 tau + 8 eps_l. When the adversary-side register copy is
    classical (``q_prime_classical``), a single max-entropy subtraction per
    register suffices and one smf term per register is saved; the smoothing
    arithmetic for that variant keeps the same eps_prime, a conservative
    reading of the sharper rule.
    """
    if c.q_prime_classical:
        corrected = c.hmin_base - c.hmax_ae - c.hmax_be - 4.0 * smf(c.budget.tau)
    else:
        corrected = c.hmin_base - 2.0 * c.hmax_ae - 2.0 * c.hmax_be \
            - 6.0 * smf(c.budget.tau)
    return ChainResult(corrected, c.budget.eps_prime, corrected < 0.0, {
        "classical_variant": c.q_prime_classical,
        "smf_tau_bits": smf(c.budget.tau),
    })


def public_comm_chain(hmin: float, log_dim_p: float) -> float:
    """Min-entropy after conditioning on a public register of the given
    log-dimension."""
    if log_dim_p < 0.0:
        raise DomainError("public register log-dimension must be >= 0")
    return hmin - log_dim_p


def energy_cutoff_closeness(n: int, e_avg: float, e_cut: float) -> float:
    """Closeness parameter sqrt(n e_avg / e_cut) for replacing states by
    their below-cutoff truncations. Diagnostic only: it grows with n, so it
    cannot power an asymptotic rate claim."""
    if e_cut <= 0.0:
        raise DomainError("energy cutoff must be positive")
    if n < 0 or e_avg < 0.0:
        raise DomainError("round count and average energy must be >= 0")
    return math.sqrt(n * e_avg / e_cut)


def shannon_asymptote(spec: DimensionBoundSpec) -> float:
    """Large-n per-round limit of the dimension-bounded max-entropy rate."""
    if spec.delta == 0.0:
        return 0.0
    return binary_entropy(spec.delta) + spec.delta * math.log2(spec.d_l - 1)
