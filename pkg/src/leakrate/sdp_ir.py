"""Solver-agnostic conic problem representation, SDPA export, solver adapter,
and dual-certificate verification.

A :class:`ConicProblem` is a maximization of a linear objective over scalar
variables subject to affine PSD blocks ``F0 + sum_i x_i F_i >= 0``, linear
equalities and linear inequalities (normalized to ``a.x <= rhs``).

Bounds reported to users are certificate-based: :func:`verify_certificate`
reconstructs a rigorous upper bound from the dual multipliers alone, so a
heuristic solver cannot overclaim. The inflation term requires a known bound
on the magnitude of feasible primal variables (``var_bound``, default 1,
which holds for moment-matrix entries of subnormalized states).
"""

from __future__ import annotations

import enum
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core_math import DomainError

__all__ = ["ConicProblem", "PsdBlock", "LinearConstraint", "Solution",
           "Certificate", "SolveStatus", "SolverError", "CertificateError",
           "export_sdpa", "solve", "verify_certificate", "parse_sdpa"]

DEFAULT_SOLVER_TOL = 1e-8
DEFAULT_CERT_TOL = 1e-7


class SolverError(RuntimeError):
    pass


class CertificateError(RuntimeError):
    """Raised when a dual solution fails verification."""


class SolveStatus(enum.Enum):
    OPTIMAL = "optimal"
    INACCURATE = "inaccurate"
    INFEASIBLE = "infeasible"
    FAILED = "failed"


@dataclass
class PsdBlock:
    """Affine symmetric-matrix map: constant + sum_i x_i * coeff[i] >= 0.

    ``constant`` and each coefficient matrix are stored sparsely as
    {(i, j): value} over the upper triangle (i <= j); the full matrix is the
    symmetric completion.
    """

    size: int
    constant: dict[tuple[int, int], float] = field(default_factory=dict)
    coeffs: dict[int, dict[tuple[int, int], float]] = field(default_factory=dict)

    def add_constant(self, i: int, j: int, value: float):
        if value == 0.0:
            return
        key = (i, j) if i <= j else (j, i)
        self.constant[key] = self.constant.get(key, 0.0) + value

    def add_coeff(self, var: int, i: int, j: int, value: float):
        if value == 0.0:
            return
        key = (i, j) if i <= j else (j, i)
        entries = self.coeffs.setdefault(var, {})
        entries[key] = entries.get(key, 0.0) + value

    def dense_constant(self) -> np.ndarray:
        return _dense(self.size, self.constant)

    def dense_coeff(self, var: int) -> np.ndarray:
        return _dense(self.size, self.coeffs.get(var, {}))


def _dense(size: int, entries: dict[tuple[int, int], float]) -> np.ndarray:
    m = np.zeros((size, size))
    for (i, j), v in entries.items():
        m[i, j] = v
        if i != j:
            m[j, i] = v
    return m


@dataclass
class LinearConstraint:
    """Sparse linear row: sum_i coeffs[i] * x_i (== or <=) rhs."""

    coeffs: dict[int, float]
    rhs: float


class ConicProblem:
    def __init__(self, num_vars: int, var_bound: float = 1.0):
        self.num_vars = num_vars
        self.objective: dict[int, float] = {}
        self.objective_constant = 0.0
        self.psd_blocks: list[PsdBlock] = []
        self.linear_eq: list[LinearConstraint] = []
        self.linear_ineq: list[LinearConstraint] = []  # a.x <= rhs
        self.var_bound = var_bound

    def add_variables(self, count: int) -> range:
        out = range(self.num_vars, self.num_vars + count)
        self.num_vars += count
        return out

    def set_objective_coeff(self, var: int, value: float):
        self._check_var(var)
        self.objective[var] = self.objective.get(var, 0.0) + value

    def add_psd_block(self, size: int) -> PsdBlock:
        block = PsdBlock(size)
        self.psd_blocks.append(block)
        return block

    def add_equality(self, coeffs: dict[int, float], rhs: float):
        for v in coeffs:
            self._check_var(v)
        self.linear_eq.append(LinearConstraint(dict(coeffs), rhs))

    def add_inequality(self, coeffs: dict[int, float], rhs: float):
        """Adds a.x <= rhs."""
        for v in coeffs:
            self._check_var(v)
        self.linear_ineq.append(LinearConstraint(dict(coeffs), rhs))

    def add_lower_bound(self, coeffs: dict[int, float], lhs: float):
        """Adds a.x >= lhs as -a.x <= -lhs."""
        self.add_inequality({v: -c for v, c in coeffs.items()}, -lhs)

    def _check_var(self, var: int):
        if not 0 <= var < self.num_vars:
            raise DomainError(f"variable index {var} out of range")

    def convert_inequalities(self) -> "ConicProblem":
        """Return an equivalent problem whose inequalities are folded into a
        single shared diagonal PSD block (entries rhs - a.x >= 0)."""
        if not self.linear_ineq:
            return self
        out = ConicProblem(self.num_vars, self.var_bound)
        out.objective = dict(self.objective)
        out.objective_constant = self.objective_constant
        out.psd_blocks = [PsdBlock(b.size, dict(b.constant),
                                   {v: dict(e) for v, e in b.coeffs.items()})
                          for b in self.psd_blocks]
        out.linear_eq = [LinearConstraint(dict(c.coeffs), c.rhs) for c in self.linear_eq]
        slab = out.add_psd_block(len(self.linear_ineq))
        slab.diagonal = True
        for k, con in enumerate(self.linear_ineq):
            slab.add_constant(k, k, con.rhs)
            for v, c in con.coeffs.items():
                slab.add_coeff(v, k, k, -c)
        return out


def _fmt(x: float) -> str:
    return repr(float(x))


def export_sdpa(p: ConicProblem) -> str:
    """Serialize to the sparse SDPA ".dat-s" dialect.

    Encodes ``min (-c).x  s.t.  sum_i x_i F_i - F0 >= 0`` blockwise, with
    each equality a.x = r contributing two entries of a trailing diagonal
    block (a.x - r >= 0 and r - a.x >= 0). Negative block sizes denote
    diagonal blocks. Output is deterministic for a given problem.
    """
    if p.linear_ineq:
        raise DomainError("convert inequalities to a slack block before SDPA export")
    blocks = list(p.psd_blocks)
    neq = len(p.linear_eq)
    lines = [f"{p.num_vars} = mDIM"]
    nblock = len(blocks) + (1 if neq else 0)
    if nblock == 0:
        blocks = [PsdBlock(1)]
        nblock = 1
    lines.append(f"{nblock} = nBLOCK")
    sizes = [(-b.size if getattr(b, "diagonal", False) else b.size) for b in blocks]
    if neq:
        sizes.append(-2 * neq)
    lines.append(" ".join(str(s) for s in sizes) + " = bLOCKsTRUCT")
    lines.append(" ".join(_fmt(-p.objective.get(v, 0.0)) for v in range(p.num_vars)))

    entries: list[tuple[int, int, int, int, float]] = []
    for bno, block in enumerate(blocks, start=1):
        # SDPA convention: sum_i x_i F_i - F0 >= 0, our block is F0 + sum x_i F_i
        for (i, j), v in sorted(block.constant.items()):
            entries.append((0, bno, i + 1, j + 1, -v))
        for var in sorted(block.coeffs):
            for (i, j), v in sorted(block.coeffs[var].items()):
                entries.append((var + 1, bno, i + 1, j + 1, v))
    if neq:
        bno = len(blocks) + 1
        for k, con in enumerate(p.linear_eq):
            # a.x - r >= 0 at diagonal slot 2k+1, r - a.x >= 0 at slot 2k+2
            entries.append((0, bno, 2 * k + 1, 2 * k + 1, con.rhs))
            entries.append((0, bno, 2 * k + 2, 2 * k + 2, -con.rhs))
            for var in sorted(con.coeffs):
                c = con.coeffs[var]
                entries.append((var + 1, bno, 2 * k + 1, 2 * k + 1, c))
                entries.append((var + 1, bno, 2 * k + 2, 2 * k + 2, -c))
    entries.sort(key=lambda e: (e[0], e[1], e[2], e[3]))
    for matno, bno, i, j, v in entries:
        if v != 0.0:
            lines.append(f"{matno} {bno} {i} {j} {_fmt(v)}")
    return "\n".join(lines) + "\n"


def parse_sdpa(text: str) -> ConicProblem:
    """Parse the SDPA dialect written by :func:`export_sdpa` back into a
    ConicProblem (used for round-trip checks). Equality pairs are not
    reconstructed; each diagonal pair becomes two one-sided PSD entries,
    which is an equivalent feasible set."""
    rows = [ln.split("=")[0].split() for ln in text.strip().splitlines()
            if ln.strip() and not ln.lstrip().startswith(('"', "*"))]
    num_vars = int(rows[0][0])
    nblock = int(rows[1][0])
    sizes = [int(v) for v in rows[2][:nblock]]
    obj = [float(v) for v in rows[3][:num_vars]]
    p = ConicProblem(num_vars)
    for v, c in enumerate(obj):
        if c != 0.0:
            p.set_objective_coeff(v, -c)
    blocks = []
    for s in sizes:
        b = p.add_psd_block(abs(s))
        if s < 0:
            b.diagonal = True
        blocks.append(b)
    for row in rows[4:]:
        matno, bno, i, j = (int(v) for v in row[:4])
        val = float(row[4])
        block = blocks[bno - 1]
        if matno == 0:
            block.add_constant(i - 1, j - 1, -val)
        else:
            block.add_coeff(matno - 1, i - 1, j - 1, val)
    return p


@dataclass
class Solution:
    status: SolveStatus
    primal: np.ndarray | None
    objective_value: float | None
    dual_blocks: list[np.ndarray] | None
    dual_eq: np.ndarray | None
    dual_ineq: np.ndarray | None
    duality_gap: float | None = None
    solver_name: str = ""
    message: str = ""

    def to_json(self) -> str:
        return json.dumps({
            "status": self.status.value,
            "objective_value": self.objective_value,
            "primal": None if self.primal is None else self.primal.tolist(),
            "duality_gap": self.duality_gap,
            "solver": self.solver_name,
        })


@dataclass
class Certificate:
    certified_upper_bound: float
    max_dual_infeasibility: float
    tolerance_used: float

    def to_json(self) -> str:
        return json.dumps({
            "certified_upper_bound": self.certified_upper_bound,
            "max_dual_infeasibility": self.max_dual_infeasibility,
            "tolerance_used": self.tolerance_used,
        })


def _solve_embedded(p: ConicProblem, tol: float, solver: str,
                    tuned: bool = True) -> Solution:
    import cvxpy as cp

    x = cp.Variable(p.num_vars) if p.num_vars else None
    constraints = []
    psd_cons = []
    for block in p.psd_blocks:
        expr = cp.Constant(block.dense_constant())
        for var, entries in block.coeffs.items():
            expr = expr + x[var] * _dense(block.size, entries)
        con = expr >> 0 if block.size > 1 else (cp.reshape(expr, (1,), order="F") >= 0)
        psd_cons.append(con)
        constraints.append(con)
    eq_cons = []
    for con in p.linear_eq:
        lhs = sum(c * x[v] for v, c in con.coeffs.items())
        c = lhs == con.rhs
        eq_cons.append(c)
        constraints.append(c)
    ineq_cons = []
    for con in p.linear_ineq:
        lhs = sum(c * x[v] for v, c in con.coeffs.items())
        c = lhs <= con.rhs
        ineq_cons.append(c)
        constraints.append(c)
    obj = sum(c * x[v] for v, c in p.objective.items()) + p.objective_constant
    prob = cp.Problem(cp.Maximize(obj), constraints)
    solver_map = {"embedded": cp.CLARABEL, "clarabel": cp.CLARABEL, "scs": cp.SCS}
    # near-degenerate instances (tiny fidelity windows around extremal
    # behaviors) need the tuned settings below to converge past ~1e-4
    if tuned:
        clarabel_opts = dict(
            tol_gap_abs=min(tol, 1e-12), tol_gap_rel=min(tol, 1e-12),
            tol_feas=min(tol, 1e-12), max_iter=4000,
            direct_solve_method="qdldl", min_terminate_step_length=1e-9,
            equilibrate_max_iter=50, iterative_refinement_max_iter=80,
            iterative_refinement_reltol=1e-16,
            iterative_refinement_abstol=1e-16,
            iterative_refinement_stop_ratio=2.0)
    else:
        clarabel_opts = dict(tol_gap_abs=tol, tol_gap_rel=tol, tol_feas=tol)
    try:
        with warnings.catch_warnings():
            # certificates vet inaccurate solutions downstream
            warnings.simplefilter("ignore", UserWarning)
            if solver_map.get(solver, cp.CLARABEL) == cp.SCS:
                prob.solve(solver=cp.SCS, eps=tol, max_iters=200_000)
            else:
                prob.solve(solver=cp.CLARABEL, **clarabel_opts)
    except cp.SolverError as exc:
        return Solution(SolveStatus.FAILED, None, None, None, None, None,
                        solver_name=solver, message=str(exc))

    if prob.status in ("infeasible", "infeasible_inaccurate"):
        return Solution(SolveStatus.INFEASIBLE, None, None, None, None, None,
                        solver_name=solver, message=prob.status)
    if prob.status not in ("optimal", "optimal_inaccurate"):
        return Solution(SolveStatus.FAILED, None, None, None, None, None,
                        solver_name=solver, message=str(prob.status))

    def psd_dual(con, size):
        d = np.asarray(con.dual_value, dtype=float)
        if size == 1:
            d = d.reshape(1, 1)
        return 0.5 * (d + d.T)

    duals = [psd_dual(c, b.size) for c, b in zip(psd_cons, p.psd_blocks)]
    dual_eq = np.array([float(np.asarray(c.dual_value).reshape(())) for c in eq_cons])
    dual_ineq = np.array([float(np.asarray(c.dual_value).reshape(())) for c in ineq_cons])
    status = (SolveStatus.OPTIMAL if prob.status == "optimal"
              else SolveStatus.INACCURATE)
    return Solution(status, np.asarray(x.value, dtype=float) if x is not None else np.zeros(0),
                    float(prob.value), duals, dual_eq, dual_ineq,
                    solver_name=solver, message=prob.status)


def solve(p: ConicProblem, tol: float = DEFAULT_SOLVER_TOL,
          solver: str = "embedded") -> Solution:
    """Solve a ConicProblem and return primal/dual data.

    ``solver`` selects the adapter: "embedded" (Clarabel interior point via
    cvxpy) or "scs" as a fallback first-order engine.
    """
    if solver.startswith("external:"):
        raise SolverError("external SDPA solver adapters are not configured in "
                          "this build; use the embedded engine")
    # certificates make loose solves safe, so degrade accuracy before failing
    attempts = [(tol, True), (max(tol, 1e-7), False), (max(tol, 1e-5), False)]
    last = None
    for t, tuned in attempts:
        last = _solve_embedded(p, t, solver, tuned=tuned)
        if last.status in (SolveStatus.OPTIMAL, SolveStatus.INACCURATE,
                           SolveStatus.INFEASIBLE):
            return last
    return last


def verify_certificate(p: ConicProblem, s: Solution,
                       tol: float = DEFAULT_CERT_TOL) -> Certificate:
    """Reconstruct a rigorous upper bound on the optimum from dual multipliers.

    For any PSD matrices Z_b, free equality multipliers y and non-negative
    inequality multipliers mu, every feasible x satisfies

        c.x <= sum_i x_i g_i + sum_b <Z_b, F0_b> + y.rhs_eq + mu.rhs_ineq,

    with stationarity residuals g_i = c_i + sum_b <Z_b, F_{b,i}>
    - (A_eq^T y)_i - (A_ineq^T mu)_i. Multiplier matrices are clipped to the
    PSD cone (and mu to >= 0) before the bound is evaluated, so the returned
    bound is valid regardless of solver quality; solutions whose multipliers
    need clipping by more than ``tol`` are rejected instead.
    """
    if s.dual_blocks is None or s.dual_eq is None or s.dual_ineq is None:
        raise CertificateError("solution carries no dual multipliers")
    if len(s.dual_blocks) != len(p.psd_blocks):
        raise CertificateError("dual block count does not match problem")

    max_infeas = 0.0
    clipped: list[np.ndarray] = []
    for z in s.dual_blocks:
        z = 0.5 * (np.asarray(z, dtype=float) + np.asarray(z, dtype=float).T)
        evals, evecs = np.linalg.eigh(z)
        max_infeas = max(max_infeas, float(-evals.min()) if evals.size else 0.0)
        clipped.append((evecs * np.clip(evals, 0.0, None)) @ evecs.T)
    mu = np.asarray(s.dual_ineq, dtype=float)
    if mu.size:
        max_infeas = max(max_infeas, float(-mu.min()))
        mu = np.clip(mu, 0.0, None)
    if max_infeas > tol:
        raise CertificateError(
            f"dual infeasibility {max_infeas:.3e} exceeds tolerance {tol:.3e}")

    g = np.array([p.objective.get(v, 0.0) for v in range(p.num_vars)])
    bound = p.objective_constant
    for z, block in zip(clipped, p.psd_blocks):
        bound += float(np.tensordot(z, block.dense_constant()))
        for var, entries in block.coeffs.items():
            g[var] += float(np.tensordot(z, _dense(block.size, entries)))
    for y, con in zip(s.dual_eq, p.linear_eq):
        bound += float(y) * con.rhs
        for var, c in con.coeffs.items():
            g[var] -= float(y) * c
    for m, con in zip(mu, p.linear_ineq):
        bound += float(m) * con.rhs
        for var, c in con.coeffs.items():
            g[var] -= float(m) * c

    residual = float(np.abs(g).sum())
    bound += residual * p.var_bound
    max_infeas = max(max_infeas, float(np.abs(g).max()) if g.size else 0.0)
    return Certificate(bound, max_infeas, tol)
