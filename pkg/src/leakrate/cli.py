"""Command-line front end.

Subcommands cover the single-round bounds (``single-round``, ``sweep``), the
full-protocol accounting (``dim-bound``, ``energy-bound``, ``energy-table``,
``chain``), and behavior validation (``validate``). Every run writes its
result file plus a ``.meta.json`` sidecar recording versions, tolerances,
certificate status, and wall time. Exit codes: 0 success, 1 domain failure,
2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import platform
import sys
import time

import numpy as np

from . import __version__
from .core_math import DomainError
from .leak_accounting import (ENERGY_ALPHAS, DimensionBoundSpec, EnergySpec,
                              SmoothingBudget, ChainInputs, chain_assemble,
                              energy_bound_optimize, energy_primal_truncated,
                              hmax_dimension_bound, shannon_asymptote)
from .scenario import LeakageKind, LeakageModel, TargetBehavior, validate_behavior
from .single_round import (Encoding, preset_spec, solve_single_round,
                           sweep_curve)

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_CONFIG = 2

_MODELS = {
    "bounded-weight": LeakageKind.BOUNDED_WEIGHT,
    "classical-prob": LeakageKind.CLASSICAL_PROBABILISTIC,
}

# aliases matching the emit_plot_data figure kinds
_PRESET_ALIASES = {"fig1": "FourInputMYCHSH", "fig2": "TwoInputCHSH"}

SWEEP_HEADER = ["preset", "model", "encoding", "level", "q", "delta",
                "entropy_bits", "pguess", "cert_slack"]
ENERGY_HEADER = ["alpha", "delta", "emax", "renyi_bits", "dual_lagG",
                 "dual_z", "dual_lagP", "gap_estimate"]


def _write_csv(path: str, header: list[str], rows: list[dict]):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(row[k]) for k in header])


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _write_meta(out_path: str, args, started: float, extra: dict):
    meta = {
        "tool": "leakrate",
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "command": args.command,
        "solver": getattr(args, "solver", None),
        "tolerance": getattr(args, "tol", None),
        "wall_time_s": round(time.time() - started, 3),
    }
    meta.update(extra)
    with open(out_path + ".meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fail(code: int, kind: str, message: str) -> int:
    json.dump({"error": kind, "message": message}, sys.stderr)
    sys.stderr.write("\n")
    return code


def _leakage(args) -> LeakageModel:
    return LeakageModel(_MODELS[args.model], args.delta)


def _budget(args) -> SmoothingBudget:
    return SmoothingBudget(args.eps, args.tau, args.eps_l, args.eps_pe)


def _cmd_single_round(args) -> tuple[int, dict]:
    preset = _PRESET_ALIASES.get(args.preset, args.preset)
    spec = preset_spec(preset, args.q, _leakage(args), level=args.level,
                       encoding=Encoding(args.encoding))
    res = solve_single_round(spec, tol=args.tol, solver=args.solver,
                             allow_uncertified=args.allow_uncertified)
    payload = {
        "preset": args.preset,
        "entropy_bits": res.entropy_lower_bits,
        "pguess_upper": res.guessing_prob_upper,
        "fcont_bits": res.fcont_subtracted_bits,
        "certified": res.certificate is not None,
        "metadata": res.metadata,
    }
    with open(args.out, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return EXIT_OK, {"certified": payload["certified"]}


def _parse_grid(text: str) -> list[float]:
    if ":" in text:
        start, stop, step = (float(v) for v in text.split(":"))
        n = int(round((stop - start) / step)) + 1
        return [start + i * step for i in range(n)]
    return [float(v) for v in text.split(",")]


def _cmd_sweep(args) -> tuple[int, dict]:
    preset = _PRESET_ALIASES.get(args.preset, args.preset)
    rows = sweep_curve(preset, _parse_grid(args.q_grid),
                       [float(d) for d in args.delta_list],
                       _MODELS[args.model], level=args.level,
                       encoding=Encoding(args.encoding), tol=args.tol,
                       solver=args.solver, jobs=args.jobs)
    header = SWEEP_HEADER + ["dashed_bits", "fcont_bits"]
    _write_csv(args.out, header, rows)
    certified = sum(1 for r in rows if math.isfinite(r["cert_slack"]))
    return EXIT_OK, {"rows": len(rows), "certified_rows": certified}


def _cmd_dim_bound(args) -> tuple[int, dict]:
    spec = DimensionBoundSpec(args.d_l, args.delta)
    budget = _budget(args)
    alpha = None if args.alpha == "auto" else float(args.alpha)
    total = hmax_dimension_bound(args.n, spec, budget, alpha)
    payload = {
        "d_l": args.d_l,
        "delta": args.delta,
        "n": args.n,
        "alpha": args.alpha,
        "hmax_bits": total,
        "per_round_bits": total / args.n if args.n else None,
        "shannon_asymptote_bits": shannon_asymptote(spec),
        "trivial_regime": spec.trivial,
    }
    with open(args.out, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return EXIT_OK, {"trivial_regime": spec.trivial}


def _energy_rows(spec: EnergySpec, deltas, alphas, emax_label: float,
                 oracle_levels: int = 0) -> list[dict]:
    rows = []
    for delta in deltas:
        for alpha in alphas:
            bits, point = energy_bound_optimize(spec, delta, alpha)
            gap = float("nan")
            if oracle_levels:
                primal = energy_primal_truncated(spec, delta, alpha,
                                                 oracle_levels)
                gap = bits - math.log2(primal) / (1.0 - alpha)
            rows.append({
                "alpha": alpha, "delta": delta, "emax": emax_label,
                "renyi_bits": bits, "dual_lagG": point.lag_g,
                "dual_z": point.z, "dual_lagP": point.lag_p,
                "gap_estimate": gap,
            })
    return rows


def _cmd_energy_bound(args) -> tuple[int, dict]:
    spec = EnergySpec(tuple(float(s) for s in args.spacings.split(",")),
                      args.e_max)
    rows = _energy_rows(spec, [args.delta], [args.alpha], args.e_max,
                        oracle_levels=args.oracle_levels)
    _write_csv(args.out, ENERGY_HEADER, rows)
    return EXIT_OK, {"rows": len(rows)}


def _cmd_energy_table(args) -> tuple[int, dict]:
    if args.preset != "paper":
        raise DomainError(f"unknown energy-table preset {args.preset!r}")
    rows = []
    for e_max in (1e5, 1e12):
        spec = EnergySpec((1.0, 2.0), e_max)
        rows.extend(_energy_rows(spec, (1e-2, 1e-3, 1e-4), ENERGY_ALPHAS,
                                 e_max))
    _write_csv(args.out, ENERGY_HEADER, rows)
    return EXIT_OK, {"rows": len(rows)}


def _cmd_chain(args) -> tuple[int, dict]:
    with open(args.config) as fh:
        cfg = json.load(fh)
    budget = SmoothingBudget(cfg["eps"], cfg["tau"], cfg["eps_l"],
                             cfg["eps_pe"])
    inputs = ChainInputs(cfg["hmin_base"], cfg["hmax_ae"], cfg["hmax_be"],
                         budget, cfg.get("q_prime_classical", False))
    res = chain_assemble(inputs)
    payload = {
        "hmin_corrected_bits": res.hmin_corrected_bits,
        "eps_prime": res.eps_prime,
        "vacuous": res.vacuous,
        "metadata": res.metadata,
    }
    with open(args.out, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return EXIT_OK, {"vacuous": res.vacuous}


def _cmd_validate(args) -> tuple[int, dict]:
    with open(args.behavior) as fh:
        behavior = TargetBehavior.from_json(fh.read())
    violations = validate_behavior(behavior, tol=args.tol)
    payload = {
        "valid": not violations,
        "violations": [{"kind": v.kind, "where": list(v.where),
                        "magnitude": v.magnitude} for v in violations],
    }
    with open(args.out, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if violations:
        json.dump(payload, sys.stderr)
        sys.stderr.write("\n")
        return EXIT_DOMAIN, {"violations": len(violations)}
    return EXIT_OK, {"violations": 0}


def emit_plot_data(table: list[dict], kind: str, out_dir: str) -> list[str]:
    """Split a result table into per-curve CSV files plus a gnuplot script.

    ``fig1``/``fig2`` group sweep rows by (model, delta) with entropy versus
    noise; ``fig1`` additionally emits the continuity-free dashed curves.
    ``fig4`` groups dimension-bound rows by (delta, eps) with per-round bits
    versus round count. ``energy-table`` groups by (emax, delta).
    """
    os.makedirs(out_dir, exist_ok=True)
    if kind in ("fig1", "fig2"):
        required = {"q", "delta", "entropy_bits"}
        if table and not required <= set(table[0]):
            raise DomainError(f"{kind} needs sweep rows")
        groups: dict[str, list[tuple[float, float]]] = {}
        for row in table:
            name = f"{row['model']}_delta{row['delta']:g}"
            groups.setdefault(name, []).append((row["q"], row["entropy_bits"]))
            if kind == "fig1" and "dashed_bits" in row:
                groups.setdefault(name + "_dashed", []).append(
                    (row["q"], row["dashed_bits"]))
        xlabel, ylabel = "q", "entropy_bits"
    elif kind == "fig4":
        required = {"n", "per_round_bits"}
        if table and not required <= set(table[0]):
            raise DomainError("fig4 needs dimension-bound rows")
        groups = {}
        for row in table:
            name = f"delta{row['delta']:g}_eps{row['eps']:g}"
            groups.setdefault(name, []).append((row["n"],
                                                row["per_round_bits"]))
        xlabel, ylabel = "n", "per_round_bits"
    elif kind == "energy-table":
        required = {"alpha", "renyi_bits"}
        if table and not required <= set(table[0]):
            raise DomainError("energy-table needs energy rows")
        groups = {}
        for row in table:
            name = f"emax{row['emax']:g}_delta{row['delta']:g}"
            groups.setdefault(name, []).append((row["alpha"],
                                                row["renyi_bits"]))
        xlabel, ylabel = "alpha", "renyi_bits"
    else:
        raise DomainError(f"unknown plot kind {kind!r}")

    paths = []
    script = io.StringIO()
    script.write(f"set xlabel '{xlabel}'\nset ylabel '{ylabel}'\n")
    plot_lines = []
    for name in sorted(groups):
        path = os.path.join(out_dir, f"{kind}_{name}.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([xlabel, ylabel])
            for xy in sorted(groups[name]):
                writer.writerow([repr(float(xy[0])), repr(float(xy[1]))])
        paths.append(path)
        style = "dashed" in name and "dashtype 2" or ""
        plot_lines.append(f"  '{os.path.basename(path)}' using 1:2 "
                          f"with lines {style} title '{name}'")
    if plot_lines:
        script.write("plot \\\n" + ", \\\n".join(plot_lines) + "\n")
    script_path = os.path.join(out_dir, f"{kind}.gp")
    with open(script_path, "w") as fh:
        fh.write(script.getvalue())
    paths.append(script_path)
    return paths


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="leakrate",
        description="Certified keyrate bounds under constrained leakage")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, solver=True):
        p.add_argument("--out", required=True, help="output file path")
        if solver:
            p.add_argument("--solver",
                           default=os.environ.get("LEAKRATE_SOLVER",
                                                  "embedded"))
            p.add_argument("--tol", type=float, default=1e-8)
            p.add_argument("--allow-uncertified", action="store_true")

    p = sub.add_parser("single-round", help="one certified entropy bound")
    p.add_argument("--preset", required=True)
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--model", choices=sorted(_MODELS), required=True)
    p.add_argument("--level", type=int, default=None)
    p.add_argument("--encoding", default="diag2x2",
                   choices=[e.value for e in Encoding])
    common(p)
    p.set_defaults(func=_cmd_single_round)

    p = sub.add_parser("sweep", help="entropy bounds over a (q, delta) grid")
    p.add_argument("--preset", required=True)
    p.add_argument("--q-grid", default="0:0.12:0.02",
                   help="comma list or start:stop:step")
    p.add_argument("--delta", dest="delta_list", action="append",
                   default=None, help="repeatable delta value")
    p.add_argument("--model", choices=sorted(_MODELS), required=True)
    p.add_argument("--level", type=int, default=None)
    p.add_argument("--encoding", default="diag2x2",
                   choices=[e.value for e in Encoding])
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    common(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("dim-bound", help="dimension-bounded max-entropy")
    p.add_argument("--d-l", type=int, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--alpha", default="auto")
    p.add_argument("--eps", type=float, default=1e-9)
    p.add_argument("--tau", type=float, default=1e-9)
    p.add_argument("--eps-l", type=float, default=1e-3)
    p.add_argument("--eps-pe", type=float, default=1e-3)
    common(p, solver=False)
    p.set_defaults(func=_cmd_dim_bound)

    p = sub.add_parser("energy-bound", help="energy-bounded Renyi bound")
    p.add_argument("--spacings", default="1,2",
                   help="comma-separated mode spacings (units u)")
    p.add_argument("--e-max", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--oracle-levels", type=int, default=0,
                   help="truncated-primal levels for a gap estimate")
    common(p, solver=False)
    p.set_defaults(func=_cmd_energy_bound)

    p = sub.add_parser("energy-table", help="reference two-mode table")
    p.add_argument("--preset", default="paper")
    common(p, solver=False)
    p.set_defaults(func=_cmd_energy_table)

    p = sub.add_parser("chain", help="leakage-corrected min-entropy")
    p.add_argument("--config", required=True, help="JSON chain inputs")
    common(p, solver=False)
    p.set_defaults(func=_cmd_chain)

    p = sub.add_parser("validate", help="check a behavior table")
    p.add_argument("--behavior", required=True, help="behavior JSON file")
    p.add_argument("--tol", type=float, default=1e-9)
    common(p, solver=False)
    p.set_defaults(func=_cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "delta_list", "skip") is None:
        args.delta_list = ["0.0"]
    started = time.time()
    try:
        code, extra = args.func(args)
    except (DomainError, ValueError) as exc:
        return _fail(EXIT_DOMAIN, "domain-error", str(exc))
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        return _fail(EXIT_CONFIG, "config-error", str(exc))
    _write_meta(args.out, args, started, extra)
    return code


if __name__ == "__main__":
    sys.exit(main())
