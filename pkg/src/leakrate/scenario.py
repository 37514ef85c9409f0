"""Bell-scenario descriptions, Werner-state statistics, and leakage parameters."""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .core_math import DomainError

__all__ = [
    "BellScenario",
    "InputDistribution",
    "WernerSpec",
    "TargetBehavior",
    "LeakageKind",
    "LeakageModel",
    "LeakageContext",
    "werner_behavior",
    "chsh_value",
    "convert_leakage_param",
    "validate_behavior",
    "BehaviorViolation",
]


@dataclass(frozen=True)
class BellScenario:
    """Input/output counts for a bipartite Bell scenario."""

    num_inputs_a: int
    num_inputs_b: int
    num_outputs_a: int = 2
    num_outputs_b: int = 2

    def __post_init__(self):
        for name in ("num_inputs_a", "num_inputs_b", "num_outputs_a", "num_outputs_b"):
            if getattr(self, name) < 2:
                raise DomainError(f"{name} must be >= 2")


@dataclass(frozen=True)
class InputDistribution:
    """Test- and generation-round input distributions p(x, y).

    ``gamma`` (the test-round probability) is carried as metadata only; no
    implemented formula consumes it.
    """

    p_test: np.ndarray
    p_gen: np.ndarray
    gamma: float | None = None

    def __post_init__(self):
        for name in ("p_test", "p_gen"):
            table = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, table)
            if np.any(table < 0):
                raise DomainError(f"{name} has negative entries")
            if abs(table.sum() - 1.0) > 1e-12:
                raise DomainError(f"{name} must sum to 1")
        if self.gamma is not None and not 0.0 <= self.gamma <= 1.0:
            raise DomainError("gamma must be a probability")

    @staticmethod
    def uniform_test_point_gen(scenario: BellScenario, gen_xy=(0, 0),
                               gamma: float | None = None) -> "InputDistribution":
        """Uniform test inputs; generation rounds always use ``gen_xy``."""
        nx, ny = scenario.num_inputs_a, scenario.num_inputs_b
        p_test = np.full((nx, ny), 1.0 / (nx * ny))
        p_gen = np.zeros((nx, ny))
        p_gen[gen_xy] = 1.0
        return InputDistribution(p_test, p_gen, gamma)

    def generation_input(self) -> tuple[int, int]:
        """The unique (x*, y*) with p_gen = 1; error if not a point mass."""
        idx = np.argwhere(self.p_gen > 0)
        if len(idx) != 1 or abs(self.p_gen[tuple(idx[0])] - 1.0) > 1e-12:
            raise DomainError("generation distribution is not a point mass")
        return tuple(int(v) for v in idx[0])


@dataclass(frozen=True)
class WernerSpec:
    """Werner state with depolarizing noise q, measured along polar angles
    in the X-Z plane (one angle per input, per party)."""

    q: float
    angles_a: tuple[float, ...]
    angles_b: tuple[float, ...]

    def __post_init__(self):
        if not 0.0 <= self.q <= 0.5:
            raise DomainError(f"depolarizing noise must be in [0, 1/2], got {self.q}")
        object.__setattr__(self, "angles_a", tuple(float(t) for t in self.angles_a))
        object.__setattr__(self, "angles_b", tuple(float(t) for t in self.angles_b))
        if len(self.angles_a) < 2 or len(self.angles_b) < 2:
            raise DomainError("need at least two measurement angles per party")

    def scenario(self) -> BellScenario:
        return BellScenario(len(self.angles_a), len(self.angles_b), 2, 2)


class TargetBehavior:
    """Dense conditional distribution table p(a, b | x, y).

    Stored as an array of shape (nx, ny, na, nb). JSON round-trips as nested
    arrays indexed [x][y][a][b]; CSV export uses the header ``x,y,a,b,p``.
    """

    def __init__(self, table):
        table = np.asarray(table, dtype=float)
        if table.ndim != 4:
            raise DomainError("behavior table must have shape (nx, ny, na, nb)")
        self.table = table

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.table.shape

    def scenario(self) -> BellScenario:
        nx, ny, na, nb = self.shape
        return BellScenario(nx, ny, na, nb)

    def prob(self, a: int, b: int, x: int, y: int) -> float:
        return float(self.table[x, y, a, b])

    def to_json(self) -> str:
        return json.dumps({"behavior": self.table.tolist()})

    @staticmethod
    def from_json(text: str) -> "TargetBehavior":
        return TargetBehavior(json.loads(text)["behavior"])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["x", "y", "a", "b", "p"])
        nx, ny, na, nb = self.shape
        for x in range(nx):
            for y in range(ny):
                for a in range(na):
                    for b in range(nb):
                        writer.writerow([x, y, a, b, repr(self.table[x, y, a, b])])
        return buf.getvalue()

    def __eq__(self, other):
        return isinstance(other, TargetBehavior) and np.array_equal(self.table, other.table)


class LeakageKind(enum.Enum):
    BOUNDED_WEIGHT = "bounded-weight"
    CLASSICAL_PROBABILISTIC = "classical-prob"


class LeakageContext(enum.Enum):
    """How a per-register leakage parameter maps onto the model parameter."""

    JOINT_FROM_PER_REGISTER = "joint-from-per-register"
    SINGLE_ROUND_TWO_REGISTER = "single-round-two-register"
    ACCOUNTING_ONE_REGISTER = "accounting-one-register"


_CONTEXT_FACTOR = {
    LeakageContext.JOINT_FROM_PER_REGISTER: 4.0,
    LeakageContext.SINGLE_ROUND_TWO_REGISTER: 2.0,
    LeakageContext.ACCOUNTING_ONE_REGISTER: 1.0,
}


@dataclass(frozen=True)
class LeakageModel:
    kind: LeakageKind
    delta: float
    provenance: str = "joint-four-register"

    def __post_init__(self):
        if not 0.0 <= self.delta < 1.0:
            raise DomainError(f"leakage parameter must be in [0, 1), got {self.delta}")


def convert_leakage_param(delta_prime: float, context: LeakageContext) -> float:
    """Convert a per-register leakage probability to the model parameter
    appropriate for the given analysis context (factor 4, 2 or 1)."""
    if not 0.0 <= delta_prime < 1.0:
        raise DomainError("delta_prime must be in [0, 1)")
    out = _CONTEXT_FACTOR[context] * delta_prime
    if out >= 1.0:
        raise DomainError(f"converted leakage parameter {out} >= 1 (constraint vacuous)")
    return out


def werner_behavior(spec: WernerSpec) -> TargetBehavior:
    """Behavior of X-Z plane Pauli measurements on a Werner state:
    p(ab|xy) = (1/4) [1 + (-1)^(a xor b) (1-2q) cos(theta_x - theta_y)].
    """
    v = 1.0 - 2.0 * spec.q
    nx, ny = len(spec.angles_a), len(spec.angles_b)
    table = np.empty((nx, ny, 2, 2))
    for x, ta in enumerate(spec.angles_a):
        for y, tb in enumerate(spec.angles_b):
            corr = v * math.cos(ta - tb)
            same = 0.25 * (1.0 + corr)
            diff = 0.25 * (1.0 - corr)
            table[x, y] = [[same, diff], [diff, same]]
    return TargetBehavior(table)


def chsh_value(b: TargetBehavior, x0: int, x1: int, y0: int, y1: int) -> float:
    """CHSH combination E(x0,y0) + E(x0,y1) + E(x1,y0) - E(x1,y1) with
    correlators E = sum_ab (-1)^(a xor b) p(ab|xy). Binary outputs only."""
    nx, ny, na, nb = b.shape
    if na != 2 or nb != 2:
        raise DomainError("chsh_value requires binary outputs")

    def corr(x, y):
        t = b.table[x, y]
        return t[0, 0] + t[1, 1] - t[0, 1] - t[1, 0]

    return corr(x0, y0) + corr(x0, y1) + corr(x1, y0) - corr(x1, y1)


@dataclass(frozen=True)
class BehaviorViolation:
    kind: str  # "negativity" | "normalization" | "no-signalling"
    where: tuple
    magnitude: float


def validate_behavior(b: TargetBehavior, tol: float = 1e-9) -> list[BehaviorViolation]:
    """Report non-negativity, normalization and no-signalling violations."""
    nx, ny, na, nb = b.shape
    out: list[BehaviorViolation] = []
    neg = -b.table.min()
    if neg > tol:
        idx = np.unravel_index(np.argmin(b.table), b.shape)
        out.append(BehaviorViolation("negativity", tuple(int(i) for i in idx), float(neg)))
    for x in range(nx):
        for y in range(ny):
            err = abs(b.table[x, y].sum() - 1.0)
            if err > tol:
                out.append(BehaviorViolation("normalization", (x, y), float(err)))
    marg_a = b.table.sum(axis=3)  # (x, y, a)
    for x in range(nx):
        spread = marg_a[x].max(axis=0) - marg_a[x].min(axis=0)
        if spread.max() > tol:
            out.append(BehaviorViolation("no-signalling", ("A", x), float(spread.max())))
    marg_b = b.table.sum(axis=2)  # (x, y, b)
    for y in range(ny):
        spread = marg_b[:, y].max(axis=0) - marg_b[:, y].min(axis=0)
        if spread.max() > tol:
            out.append(BehaviorViolation("no-signalling", ("B", y), float(spread.max())))
    return out
