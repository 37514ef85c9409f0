"""Scalar entropy and fidelity functions shared by all other modules.

All entropies are in bits (base-2 logarithms). The convention 0*log(0) = 0
is used throughout; probabilities below ``CLAMP_EPS`` are clamped to zero
before taking logarithms.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "DomainError",
    "binary_entropy",
    "shannon_entropy",
    "renyi_entropy",
    "bhattacharyya_fidelity",
    "fcont",
    "smf",
    "gentle_fidelity_witness",
    "matrix_fidelity",
    "check_prob_vector",
]

#: probabilities below this are treated as exactly zero inside logarithms
CLAMP_EPS = 1e-15

#: normalization tolerance for probability vectors
NORM_TOL = 1e-12


class DomainError(ValueError):
    """Raised when a scalar argument is outside the function's domain."""


def check_prob_vector(w, subnormalized: bool = False) -> np.ndarray:
    """Validate a probability vector and return it as a float array.

    Entries must be non-negative; unless ``subnormalized`` is set, the
    weights must sum to 1 within ``NORM_TOL``.
    """
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise DomainError("probability vector must be a non-empty 1-D array")
    if np.any(w < -NORM_TOL):
        raise DomainError("probability vector has negative entries")
    total = float(w.sum())
    if subnormalized:
        if total > 1 + NORM_TOL:
            raise DomainError(f"subnormalized vector sums to {total} > 1")
    elif abs(total - 1.0) > NORM_TOL:
        raise DomainError(f"probability vector sums to {total}, expected 1")
    return np.clip(w, 0.0, None)


def binary_entropy(p: float) -> float:
    """h(p) = -p log2 p - (1-p) log2(1-p), in bits."""
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"binary_entropy requires 0 <= p <= 1, got {p}")
    out = 0.0
    for q in (p, 1.0 - p):
        if q > CLAMP_EPS:
            out -= q * math.log2(q)
    return out


def shannon_entropy(w) -> float:
    """Shannon entropy of a probability vector, in bits."""
    w = check_prob_vector(w)
    nz = w[w > CLAMP_EPS]
    return float(-(nz * np.log2(nz)).sum())


def _check_alpha(alpha: float, require_half: bool = False) -> float:
    lo = 0.5 if require_half else 0.0
    if not lo < alpha < 1.0 and not (require_half and alpha == 0.5):
        kind = "[1/2, 1)" if require_half else "(0, 1)"
        raise DomainError(f"Renyi parameter must be in {kind}, got {alpha}")
    return float(alpha)


def renyi_entropy(w, alpha: float) -> float:
    """alpha-Renyi entropy (1/(1-alpha)) log2 sum_k w_k^alpha, in bits.

    Only the order range alpha in (0,1) used in this library is supported;
    alpha = 1 is rejected (use :func:`shannon_entropy`).
    """
    if alpha == 1.0:
        raise DomainError("alpha = 1 is the Shannon limit; use shannon_entropy")
    alpha = _check_alpha(alpha)
    w = check_prob_vector(w)
    s = float(np.sum(w[w > 0] ** alpha))
    return math.log2(s) / (1.0 - alpha)


def bhattacharyya_fidelity(p, q) -> float:
    """Classical fidelity sum_k sqrt(p_k q_k) of two distributions."""
    p = check_prob_vector(p)
    q = check_prob_vector(q)
    if p.shape != q.shape:
        raise DomainError("distributions must have equal length")
    return float(np.sqrt(p * q).sum())


def fcont(delta: float, dim_s: int) -> float:
    """Uniform continuity bound (in bits) for conditional entropy under a
    fidelity deficit ``delta`` on a key register of dimension ``dim_s``.

    Evaluates t*log2(dim_s) + (1+t)*h(t/(1+t)) with t = sqrt(2*delta - delta^2).
    """
    if not 0.0 <= delta <= 1.0:
        raise DomainError(f"fidelity deficit must be in [0,1], got {delta}")
    if dim_s < 2:
        raise DomainError(f"key-register dimension must be >= 2, got {dim_s}")
    t = math.sqrt(max(2.0 * delta - delta * delta, 0.0))
    if t == 0.0:
        return 0.0
    return t * math.log2(dim_s) + (1.0 + t) * binary_entropy(t / (1.0 + t))


def smf(p: float) -> float:
    """Smoothing correction -log2(1 - sqrt(1 - p^2)), in bits.

    Evaluated in the algebraically equivalent form -log2(p^2 / (1 + sqrt(1-p^2)))
    which is stable for small p and makes smf(p) <= log2(2/p^2) manifest.
    """
    if not 0.0 < p <= 1.0:
        raise DomainError(f"smf requires 0 < p <= 1, got {p}")
    root = math.sqrt(max(1.0 - p * p, 0.0))
    return -math.log2(p * p / (1.0 + root))


def _check_density_matrix(rho: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DomainError("density matrix must be square")
    if np.linalg.norm(rho - rho.conj().T) > tol:
        raise DomainError("density matrix must be Hermitian")
    if abs(np.trace(rho).real - 1.0) > 1e-8:
        raise DomainError("density matrix must have unit trace")
    evals = np.linalg.eigvalsh(rho)
    if evals.min() < -tol:
        raise DomainError(f"density matrix not PSD (min eigenvalue {evals.min()})")
    return rho


def matrix_fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Fidelity ||sqrt(rho) sqrt(sigma)||_1 of two PSD unit-trace matrices."""
    rho = np.asarray(rho, dtype=complex)
    sigma = np.asarray(sigma, dtype=complex)
    er, vr = np.linalg.eigh(rho)
    sqrt_rho = (vr * np.sqrt(np.clip(er, 0.0, None))) @ vr.conj().T
    es, vs = np.linalg.eigh(sigma)
    sqrt_sig = (vs * np.sqrt(np.clip(es, 0.0, None))) @ vs.conj().T
    return float(np.linalg.svd(sqrt_rho @ sqrt_sig, compute_uv=False).sum())


def gentle_fidelity_witness(
    rho_ab: np.ndarray, dim_a: int, dim_b: int, ground_index: int = 0
) -> tuple[float, float]:
    """Ground-state weight of the A register and the fidelity of ``rho_ab``
    to the product of the A ground state with its own B marginal.

    Returns ``(ground_weight, fidelity)``; numerically the fidelity is never
    below the ground weight, which is the inequality this utility witnesses.
    """
    rho = _check_density_matrix(rho_ab)
    if rho.shape[0] != dim_a * dim_b:
        raise DomainError("matrix dimension does not match dim_a * dim_b")
    if not 0 <= ground_index < dim_a:
        raise DomainError("ground_index out of range for the A register")
    rho4 = rho.reshape(dim_a, dim_b, dim_a, dim_b)
    rho_b = np.einsum("aiaj->ij", rho4)
    ground_weight = float(np.einsum("ibib->", rho4[ground_index:ground_index + 1,
                                                   :, ground_index:ground_index + 1, :]).real)
    target = np.zeros_like(rho)
    g0 = ground_index * dim_b
    target[g0:g0 + dim_b, g0:g0 + dim_b] = rho_b
    return ground_weight, matrix_fidelity(rho, target)
