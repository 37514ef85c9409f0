"""Single-round guessing-probability optimizations under constrained leakage.

The adversary's guess of Alice's generation-round outcome is modeled by a
branch decomposition: one subnormalized moment matrix per guess value e, with
branch weights q_e summing to 1 and the branch-averaged behavior tied to the
observed table. Two leakage constraints are available:

* bounded-weight: the observed behavior must have fidelity >= 1 - delta with
  the branch average, per input pair, encoded either as a family of 2x2
  blocks (exact for these diagonal states) or as a full Uhlmann extension
  variable;
* classical-probabilistic: the observed behavior lies in a linear window
  around the scaled branch average, the mixture remainder eliminated.

Entropy bounds follow from the certified guessing probability:
H_min = -log2 P_g, with a continuity correction subtracted (bounded-weight)
or a (1 - delta) prefactor applied (classical-probabilistic).
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core_math import DomainError, fcont
from .npa import MomentStructure, local_level_basis, moment_structure
from .scenario import (BellScenario, InputDistribution, LeakageKind,
                       LeakageModel, TargetBehavior, WernerSpec, chsh_value,
                       werner_behavior)
from .sdp_ir import (Certificate, ConicProblem, Solution, SolveStatus, solve,
                     verify_certificate)

__all__ = ["Encoding", "SingleRoundSpec", "BoundResult", "GuessingProgram",
           "assemble_bounded_weight", "assemble_classical_prob",
           "entropy_bound", "solve_single_round", "sweep_curve",
           "explicit_attack_oracle", "random_strategy", "preset_spec",
           "PRESETS"]


class Encoding(enum.Enum):
    DIAG_2X2 = "diag2x2"
    UHLMANN_FULL = "uhlmann-full"
    CHSH_ONLY = "chsh-only"


@dataclass(frozen=True)
class SingleRoundSpec:
    """Everything needed to assemble one guessing-probability relaxation.

    The key register is Alice's outcome at the generation input, so the
    input distribution must place all generation weight on one (x*, y*).
    """

    scenario: BellScenario
    target: TargetBehavior
    inputs: InputDistribution
    leakage: LeakageModel
    npa_level: int = 2
    encoding: Encoding = Encoding.DIAG_2X2

    def __post_init__(self):
        if self.npa_level not in (1, 2):
            raise DomainError("npa_level must be 1 or 2")
        self.inputs.generation_input()
        if self.target.table.shape != (self.scenario.num_inputs_a,
                                       self.scenario.num_inputs_b,
                                       self.scenario.num_outputs_a,
                                       self.scenario.num_outputs_b):
            raise DomainError("target behavior shape does not match scenario")


@dataclass
class BoundResult:
    guessing_prob_upper: float
    entropy_lower_bits: float
    fcont_subtracted_bits: float
    certificate: Certificate | None
    metadata: dict = field(default_factory=dict)


@dataclass
class GuessingProgram:
    """Assembled relaxation plus the index maps needed to read it back."""

    problem: ConicProblem
    structure: MomentStructure
    spec: SingleRoundSpec
    branch_vars: list[dict[int, int]]  # per branch: class id -> variable


def _branch_layout(spec: SingleRoundSpec) -> GuessingProgram:
    basis = local_level_basis(spec.scenario, spec.npa_level)
    ms = moment_structure(basis)
    n_branch = spec.scenario.num_outputs_a
    problem = ConicProblem(0, var_bound=1.0)
    branch_vars: list[dict[int, int]] = []
    for _ in range(n_branch):
        start = problem.num_vars
        mapping = {}
        k = 0
        for cls in range(ms.num_classes):
            if cls == ms.zero_class:
                continue
            mapping[cls] = start + k
            k += 1
        problem.add_variables(k)
        branch_vars.append(mapping)

    size = len(basis)
    for mapping in branch_vars:
        block = problem.add_psd_block(size)
        seen_diag = set()
        for i in range(size):
            for j in range(i, size):
                cls = int(ms.entry_class[i, j])
                if cls == ms.zero_class:
                    continue
                block.add_coeff(mapping[cls], i, j, 1.0)
            cls = int(ms.entry_class[i, i])
            if cls != ms.zero_class and cls not in seen_diag:
                # moment of a product of projectors has operator norm <= 1
                problem.add_inequality({mapping[cls]: 1.0}, 1.0)
                seen_diag.add(cls)

    problem.add_equality(
        {m[ms.identity_class]: 1.0 for m in branch_vars}, 1.0)

    prog = GuessingProgram(problem, ms, spec, branch_vars)
    x_star, _ = spec.inputs.generation_input()
    for e in range(n_branch):
        for var, coeff in _marginal_a_expr(prog, e, e, x_star).items():
            problem.set_objective_coeff(var, coeff)
    return prog


def _marginal_a_expr(prog: GuessingProgram, branch: int, a: int,
                     x: int) -> dict[int, float]:
    """Linear expression for the branch's Alice marginal p_e(a | x)."""
    ms, mapping = prog.structure, prog.branch_vars[branch]
    na = prog.spec.scenario.num_outputs_a
    if a < na - 1:
        return {mapping[ms.marginal_a[(a, x)]]: 1.0}
    # last outcome by completeness against the branch weight
    expr = {mapping[ms.identity_class]: 1.0}
    for ap in range(na - 1):
        _accumulate(expr, {mapping[ms.marginal_a[(ap, x)]]: 1.0}, -1.0)
    return expr


def _marginal_b_expr(prog: GuessingProgram, branch: int, b: int,
                     y: int) -> dict[int, float]:
    ms, mapping = prog.structure, prog.branch_vars[branch]
    nb = prog.spec.scenario.num_outputs_b
    if b < nb - 1:
        return {mapping[ms.marginal_b[(b, y)]]: 1.0}
    expr = {mapping[ms.identity_class]: 1.0}
    for bp in range(nb - 1):
        _accumulate(expr, {mapping[ms.marginal_b[(bp, y)]]: 1.0}, -1.0)
    return expr


def _accumulate(target: dict[int, float], source: dict[int, float],
                scale: float = 1.0):
    for var, coeff in source.items():
        target[var] = target.get(var, 0.0) + scale * coeff


def _behavior_expr(prog: GuessingProgram, branch: int, a: int, b: int,
                   x: int, y: int) -> dict[int, float]:
    """Linear expression for the branch behavior p_e(a, b | x, y).

    Outcomes beyond the retained range are recovered through completeness
    sums, so every (a, b) is expressible even though only the first
    n - 1 projectors per input appear in the moment basis.
    """
    ms, mapping = prog.structure, prog.branch_vars[branch]
    na = prog.spec.scenario.num_outputs_a
    nb = prog.spec.scenario.num_outputs_b
    if a < na - 1 and b < nb - 1:
        return {mapping[ms.behavior_map[(a, b, x, y)]]: 1.0}
    if a == na - 1 and b < nb - 1:
        expr = _marginal_b_expr(prog, branch, b, y)
        for ap in range(na - 1):
            _accumulate(expr, _behavior_expr(prog, branch, ap, b, x, y), -1.0)
        return expr
    if a < na - 1 and b == nb - 1:
        expr = _marginal_a_expr(prog, branch, a, x)
        for bp in range(nb - 1):
            _accumulate(expr, _behavior_expr(prog, branch, a, bp, x, y), -1.0)
        return expr
    expr = {mapping[ms.identity_class]: 1.0}
    for ap in range(na - 1):
        _accumulate(expr, _marginal_a_expr(prog, branch, ap, x), -1.0)
    for bp in range(nb - 1):
        _accumulate(expr, _marginal_b_expr(prog, branch, bp, y), -1.0)
    for ap in range(na - 1):
        for bp in range(nb - 1):
            _accumulate(expr, _behavior_expr(prog, branch, ap, bp, x, y), 1.0)
    return expr


def _averaged_behavior_expr(prog: GuessingProgram, a: int, b: int, x: int,
                            y: int) -> dict[int, float]:
    expr: dict[int, float] = {}
    for e in range(prog.spec.scenario.num_outputs_a):
        _accumulate(expr, _behavior_expr(prog, e, a, b, x, y))
    return expr


def _add_equality_constraints(prog: GuessingProgram):
    """delta = 0: the branch average reproduces the target exactly."""
    spec = prog.spec
    for x in range(spec.scenario.num_inputs_a):
        for y in range(spec.scenario.num_inputs_b):
            for a in range(spec.scenario.num_outputs_a - 1):
                for b in range(spec.scenario.num_outputs_b - 1):
                    prog.problem.add_equality(
                        _averaged_behavior_expr(prog, a, b, x, y),
                        spec.target.prob(a, b, x, y))
            for a in range(spec.scenario.num_outputs_a - 1):
                expr: dict[int, float] = {}
                for e in range(spec.scenario.num_outputs_a):
                    _accumulate(expr, _marginal_a_expr(prog, e, a, x))
                rhs = sum(spec.target.prob(a, b, x, y)
                          for b in range(spec.scenario.num_outputs_b))
                prog.problem.add_equality(expr, rhs)
            for b in range(spec.scenario.num_outputs_b - 1):
                expr = {}
                for e in range(spec.scenario.num_outputs_a):
                    _accumulate(expr, _marginal_b_expr(prog, e, b, y))
                rhs = sum(spec.target.prob(a, b, x, y)
                          for a in range(spec.scenario.num_outputs_a))
                prog.problem.add_equality(expr, rhs)


def _add_diag2x2_fidelity(prog: GuessingProgram):
    """Per (x, y), Bhattacharyya fidelity between the observed table c and
    the branch average p via auxiliary t_ab with t_ab^2 <= c_ab p_ab and
    sum_ab t_ab >= 1 - delta."""
    spec = prog.spec
    delta = spec.leakage.delta
    problem = prog.problem
    for x in range(spec.scenario.num_inputs_a):
        for y in range(spec.scenario.num_inputs_b):
            t_sum: dict[int, float] = {}
            for a in range(spec.scenario.num_outputs_a):
                for b in range(spec.scenario.num_outputs_b):
                    c_ab = spec.target.prob(a, b, x, y)
                    (t_var,) = problem.add_variables(1)
                    block = problem.add_psd_block(2)
                    block.add_constant(0, 0, c_ab)
                    block.add_coeff(t_var, 0, 1, 1.0)
                    for var, coeff in _averaged_behavior_expr(
                            prog, a, b, x, y).items():
                        block.add_coeff(var, 1, 1, coeff)
                    # t^2 <= c p <= 1 on the feasible set, within var_bound
                    t_sum[t_var] = 1.0
            problem.add_lower_bound(t_sum, 1.0 - delta)


def _add_uhlmann_fidelity(prog: GuessingProgram):
    """Per (x, y), a PSD extension variable on two output copies whose
    overlap with the purification direction of the observed table certifies
    the fidelity, with its first-copy marginal pinned to the branch average.
    """
    spec = prog.spec
    delta = spec.leakage.delta
    problem = prog.problem
    na, nb = spec.scenario.num_outputs_a, spec.scenario.num_outputs_b
    d = na * nb
    size = d * d  # indices (ab, a'b') over copy and extension
    for x in range(spec.scenario.num_inputs_a):
        for y in range(spec.scenario.num_inputs_b):
            entry_var = {}
            block = problem.add_psd_block(size)
            for i in range(size):
                for j in range(i, size):
                    # entries of a PSD unit-trace extension stay in [-1, 1],
                    # so these variables respect the problem's var_bound
                    (v,) = problem.add_variables(1)
                    entry_var[(i, j)] = v
                    block.add_coeff(v, i, j, 1.0)
            # overlap with tau = sum_ab sqrt(c_ab) |ab, ab>
            root = np.sqrt([[spec.target.prob(a, b, x, y)
                             for b in range(nb)] for a in range(na)])
            overlap: dict[int, float] = {}
            for a in range(na):
                for b in range(nb):
                    for ap in range(na):
                        for bp in range(nb):
                            i = (a * nb + b) * d + (a * nb + b)
                            j = (ap * nb + bp) * d + (ap * nb + bp)
                            if i > j:
                                continue
                            w = root[a, b] * root[ap, bp]
                            if i != j:
                                w *= 2.0
                            _accumulate(overlap, {entry_var[(i, j)]: w})
            problem.add_lower_bound(overlap, (1.0 - delta) ** 2)
            # first-copy marginal pinned to diag of the branch average
            for ab in range(d):
                for apbp in range(ab, d):
                    expr: dict[int, float] = {}
                    for k in range(d):
                        i, j = ab * d + k, apbp * d + k
                        if i > j:
                            i, j = j, i
                        _accumulate(expr, {entry_var[(i, j)]: 1.0})
                    if ab == apbp:
                        a, b = divmod(ab, nb)
                        _accumulate(expr, _averaged_behavior_expr(
                                prog, a, b, x, y), -1.0)
                        problem.add_equality(expr, 0.0)
                    else:
                        problem.add_equality(expr, 0.0)


def _add_chsh_only(prog: GuessingProgram):
    """Replace distribution constraints by a single correlator-sum pin."""
    spec = prog.spec
    if (spec.scenario.num_inputs_a, spec.scenario.num_inputs_b) != (2, 2) or \
            (spec.scenario.num_outputs_a, spec.scenario.num_outputs_b) != (2, 2):
        raise DomainError("correlator-only mode needs a 2-input binary scenario")
    if spec.leakage.delta != 0.0:
        raise DomainError("correlator-only mode supports delta = 0 only")
    x0, x1, y0, y1 = 1, 0, 0, 1
    target_s = chsh_value(spec.target, x0, x1, y0, y1)
    expr: dict[int, float] = {}
    for (x, y), sign in (((x0, y0), 1.0), ((x0, y1), 1.0),
                         ((x1, y0), 1.0), ((x1, y1), -1.0)):
        for a in range(2):
            for b in range(2):
                parity = 1.0 if a == b else -1.0
                _accumulate(expr, _averaged_behavior_expr(prog, a, b, x, y),
                            sign * parity)
    prog.problem.add_equality(expr, target_s)


def assemble_bounded_weight(spec: SingleRoundSpec) -> GuessingProgram:
    """Guessing-probability relaxation under the fidelity-window model."""
    if spec.leakage.kind is not LeakageKind.BOUNDED_WEIGHT:
        raise DomainError("spec does not carry a bounded-weight model")
    prog = _branch_layout(spec)
    if spec.encoding is Encoding.CHSH_ONLY:
        _add_chsh_only(prog)
    elif spec.leakage.delta == 0.0:
        _add_equality_constraints(prog)
    elif spec.encoding is Encoding.DIAG_2X2:
        _add_diag2x2_fidelity(prog)
    elif spec.encoding is Encoding.UHLMANN_FULL:
        _add_uhlmann_fidelity(prog)
    else:
        raise DomainError(f"unsupported encoding {spec.encoding}")
    return prog


def assemble_classical_prob(spec: SingleRoundSpec) -> GuessingProgram:
    """Relaxation under the classical mixture model: the observed table sits
    in the linear window 0 <= c - (1 - delta) p <= delta entrywise. The
    eliminated mixture remainder (c - (1 - delta) p) / delta sums to 1
    automatically because both tables are normalized per (x, y)."""
    if spec.leakage.kind is not LeakageKind.CLASSICAL_PROBABILISTIC:
        raise DomainError("spec does not carry a classical-probabilistic model")
    if spec.encoding is Encoding.CHSH_ONLY:
        prog = _branch_layout(spec)
        _add_chsh_only(prog)
        return prog
    prog = _branch_layout(spec)
    delta = spec.leakage.delta
    if delta == 0.0:
        _add_equality_constraints(prog)
        return prog
    for x in range(spec.scenario.num_inputs_a):
        for y in range(spec.scenario.num_inputs_b):
            for a in range(spec.scenario.num_outputs_a):
                for b in range(spec.scenario.num_outputs_b):
                    c_ab = spec.target.prob(a, b, x, y)
                    expr = _averaged_behavior_expr(prog, a, b, x, y)
                    scaled = {v: (1.0 - delta) * w for v, w in expr.items()}
                    prog.problem.add_inequality(scaled, c_ab)
                    prog.problem.add_lower_bound(scaled, c_ab - delta)
    return prog


def entropy_bound(spec: SingleRoundSpec, solution: Solution,
                  certificate: Certificate | None,
                  allow_uncertified: bool = False) -> BoundResult:
    """Convert a certified guessing probability into an entropy lower bound.

    Bounded-weight subtracts the continuity correction for the key register
    (here Alice's outcome alphabet); classical-probabilistic scales by the
    no-leak branch weight. Both floor at zero.
    """
    if certificate is None:
        if not allow_uncertified:
            raise DomainError("refusing to report an uncertified bound; "
                              "pass allow_uncertified to override")
        if solution.objective_value is None:
            raise DomainError("solution carries no objective value")
        p_guess = min(1.0, float(solution.objective_value))
    else:
        p_guess = min(1.0, certificate.certified_upper_bound)
    if p_guess <= 0.0:
        raise DomainError("nonpositive guessing probability")
    hmin = -math.log2(p_guess)
    delta = spec.leakage.delta
    if spec.leakage.kind is LeakageKind.BOUNDED_WEIGHT:
        correction = fcont(delta, spec.scenario.num_outputs_a)
        bits = max(0.0, hmin - correction)
    else:
        correction = 0.0
        bits = max(0.0, (1.0 - delta) * hmin)
    return BoundResult(p_guess, bits, correction, certificate, {
        "level": spec.npa_level,
        "encoding": spec.encoding.value,
        "delta": delta,
        "model": spec.leakage.kind.value,
        "hmin_bits": max(0.0, hmin),
    })


def solve_single_round(spec: SingleRoundSpec, tol: float = 1e-8,
                       solver: str = "embedded",
                       allow_uncertified: bool = False) -> BoundResult:
    if spec.leakage.kind is LeakageKind.BOUNDED_WEIGHT:
        prog = assemble_bounded_weight(spec)
    else:
        prog = assemble_classical_prob(spec)
    sol = solve(prog.problem, tol=tol, solver=solver)
    if sol.status not in (SolveStatus.OPTIMAL, SolveStatus.INACCURATE):
        raise DomainError(f"solver failed: {sol.message}")
    cert = None
    try:
        cert = verify_certificate(prog.problem, sol)
    except Exception:
        if not allow_uncertified:
            raise
    return entropy_bound(spec, sol, cert, allow_uncertified=allow_uncertified)


PRESETS = {
    "TwoInputCHSH": {
        "angles_a": (0.0, math.pi / 2),
        "angles_b": (math.pi / 4, 3 * math.pi / 4),
        "level": 2,
    },
    "FourInputMYCHSH": {
        "angles_a": (0.0, math.pi / 4, math.pi / 2, 3 * math.pi / 4),
        "angles_b": (0.0, math.pi / 4, math.pi / 2, 3 * math.pi / 4),
        "level": 1,
    },
}


def preset_spec(preset: str, q: float, leakage: LeakageModel,
                level: int | None = None,
                encoding: Encoding = Encoding.DIAG_2X2) -> SingleRoundSpec:
    """Build a SingleRoundSpec for a named Werner-state preset."""
    if preset not in PRESETS:
        raise DomainError(f"unknown preset {preset!r}; "
                          f"choose from {sorted(PRESETS)}")
    cfg = PRESETS[preset]
    wspec = WernerSpec(q, cfg["angles_a"], cfg["angles_b"])
    scenario = wspec.scenario()
    inputs = InputDistribution.uniform_test_point_gen(scenario)
    return SingleRoundSpec(scenario, werner_behavior(wspec), inputs, leakage,
                           npa_level=cfg["level"] if level is None else level,
                           encoding=encoding)


def _sweep_point(args):
    preset, q, delta, kind, level, encoding, tol, solver = args
    leakage = LeakageModel(kind, delta)
    spec = preset_spec(preset, q, leakage, level=level, encoding=encoding)
    res = solve_single_round(spec, tol=tol, solver=solver)
    dashed = res.metadata["hmin_bits"]
    return {
        "preset": preset,
        "model": kind.value,
        "encoding": encoding.value,
        "level": spec.npa_level,
        "q": q,
        "delta": delta,
        "entropy_bits": res.entropy_lower_bits,
        "dashed_bits": dashed,
        "fcont_bits": res.fcont_subtracted_bits,
        "pguess": res.guessing_prob_upper,
        "cert_slack": (res.certificate.max_dual_infeasibility
                       if res.certificate else float("nan")),
    }


def sweep_curve(preset: str, q_grid, delta_list, model: LeakageKind,
                level: int | None = None,
                encoding: Encoding = Encoding.DIAG_2X2,
                tol: float = 1e-8, solver: str = "embedded",
                jobs: int = 1) -> list[dict]:
    """Entropy-bound table over a (q, delta) grid.

    Rows carry both the reported bound and the continuity-free variant
    (``dashed_bits``); for the fidelity-window model the reported value is
    max(0, dashed_bits - fcont_bits) by construction. Points are
    independent; ``jobs`` > 1 fans them out across processes and merges in
    grid order.
    """
    grid = [(preset, float(q), float(d), model, level, encoding, tol, solver)
            for d in delta_list for q in q_grid]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_sweep_point, grid))
    return [_sweep_point(g) for g in grid]


def explicit_attack_oracle(state: np.ndarray,
                           proj_a: list[list[np.ndarray]],
                           proj_b: list[list[np.ndarray]],
                           eve_povm: list[np.ndarray],
                           gen_x: int = 0) -> tuple[float, TargetBehavior]:
    """Guessing probability and behavior of an explicit tripartite strategy.

    ``state`` is a density matrix on A x B x E; measurement operators are
    per-input POVM lists for Alice and Bob; ``eve_povm`` has one element per
    Alice outcome. Any SDP bound for the produced behavior must dominate the
    returned guessing probability.
    """
    da = proj_a[0][0].shape[0]
    db = proj_b[0][0].shape[0]
    de = eve_povm[0].shape[0]
    if da > 4 or db > 4:
        raise DomainError("oracle is restricted to local dimension <= 4")
    if state.shape != (da * db * de, da * db * de):
        raise DomainError("state dimension does not match operators")
    povm_sum = sum(eve_povm)
    if not np.allclose(povm_sum, np.eye(de), atol=1e-9):
        raise DomainError("Eve's POVM does not resolve the identity")
    for m in eve_povm:
        if np.linalg.eigvalsh(0.5 * (m + m.conj().T)).min() < -1e-9:
            raise DomainError("Eve's POVM has a negative element")

    nx, ny = len(proj_a), len(proj_b)
    na, nb = len(proj_a[0]), len(proj_b[0])
    table = np.empty((nx, ny, na, nb))
    eye_e = np.eye(de)
    for x in range(nx):
        for y in range(ny):
            for a in range(na):
                for b in range(nb):
                    op = np.kron(np.kron(proj_a[x][a], proj_b[y][b]), eye_e)
                    table[x, y, a, b] = float(np.trace(state @ op).real)
    p_guess = 0.0
    eye_b = np.eye(db)
    for e, m in enumerate(eve_povm):
        op = np.kron(np.kron(proj_a[gen_x][e], eye_b), m)
        p_guess += float(np.trace(state @ op).real)
    return p_guess, TargetBehavior(table)


def random_strategy(rng: np.random.Generator, nx: int = 2, ny: int = 2,
                    d: int = 2, de: int = 2):
    """Random two-outcome projective strategy with a random Eve POVM."""

    def haar(dim):
        z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        q, r = np.linalg.qr(z)
        return q * (np.diagonal(r) / np.abs(np.diagonal(r)))

    def random_projectors(dim, count):
        out = []
        for _ in range(count):
            u = haar(dim)
            p0 = u[:, :dim // 2] @ u[:, :dim // 2].conj().T
            out.append([p0, np.eye(dim) - p0])
        return out

    dim = d * d * de
    vec = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    vec /= np.linalg.norm(vec)
    state = np.outer(vec, vec.conj())
    u = haar(de)
    m0 = u[:, :de // 2] @ u[:, :de // 2].conj().T
    eve = [m0, np.eye(de) - m0]
    return state, random_projectors(d, nx), random_projectors(d, ny), eve
