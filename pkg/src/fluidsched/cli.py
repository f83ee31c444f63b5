"""Command-line front end.

Subcommands: ``classify`` (state criteria and feasible box), ``solve``
(allocation problems with optional independent verification), ``simulate``
and ``compare`` (epoch simulations emitting CSV or JSON).

Exit codes: 0 success, 1 invariant violation, 2 parse error,
3 infeasible problem, 4 I/O failure. Pipe indices in every output are
1-based. ``FLUIDSCHED_SEED`` overrides the trace seed unless ``--seed``
is given.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import sys
from functools import wraps

import click
import numpy as np

from .analysis import classify_state, feasible_box
from .fileio import ParseError, StateDocument, load_state, parse_trace_spec
from .model import DomainError, SystemState
from .optimize import (
    InfeasibleError,
    SolveResult,
    kkt_report,
    lattice_refine_minimize,
    nullification_objective,
    oracle_solve,
    problem_for_state,
    solve_minmax_mean_delay,
    solve_nullification,
    solve_sum_mean_delay,
    verify_minmax_kkt,
    verify_nullification,
)
from .simulate import Policy, compare_policies, generate_trace, run_simulation

PROBLEMS = ("sum", "minmax", "null-sum", "null-minmax")

CSV_HEADER = (
    "epoch,pipe,policy,w,predicted_delay,realized_delay,"
    "predicted_drops_paper,realized_drops,fallback_flag"
)


def _handle_errors(fn):
    @wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ParseError as exc:
            click.echo(f"parse error: {exc}", err=True)
            sys.exit(2)
        except InfeasibleError as exc:
            click.echo(f"infeasible: {exc}", err=True)
            sys.exit(3)
        except DomainError as exc:
            click.echo(f"invalid input: {exc}", err=True)
            sys.exit(1)
        except OSError as exc:
            click.echo(f"i/o error: {exc}", err=True)
            sys.exit(4)

    return wrapper


def _load_state_doc(path: str) -> StateDocument:
    try:
        return load_state(path)
    except ParseError as exc:
        raise ParseError(f"{path}: {exc.reason}", exc.line, exc.col) from exc


def _jsonify(value):
    """JSON-safe copy: non-finite floats become 'inf'/'-inf'/'nan'."""
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            return "nan"
        return value
    if isinstance(value, dict):
        return {k: _jsonify(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonify(v) for v in value]
    return value


def _emit(text: str, out: str | None) -> None:
    if out is None:
        click.echo(text, nl=False)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)


def _yesno(flag: bool) -> str:
    return "yes" if flag else "no"


@click.group()
@click.version_option(package_name="fluidsched")
def main():
    """Fluid-model capacity allocation: classify states, solve allocation
    problems, and simulate scheduling policies."""


# ---------------------------------------------------------------------------
# classify


@main.command()
@click.argument("state_file", type=click.Path())
@click.option("--json", "as_json", is_flag=True, help="emit a machine-readable report")
@_handle_errors
def classify(state_file: str, as_json: bool):
    """Report criteria verdicts and the feasible box for a state file."""
    doc = _load_state_doc(state_file)
    state = doc.state
    cls = classify_state(state)
    box = feasible_box(state)
    drain_load = cls.total_intensity + cls.total_backlog / state.t_upd
    if as_json:
        payload = {
            "report": "classify",
            "n": state.n,
            "t_upd": state.t_upd,
            "m": state.m,
            "total_intensity": cls.total_intensity,
            "total_backlog": cls.total_backlog,
            "drain_load": drain_load,
            "decomposable": cls.decomposable,
            "avoidable": cls.avoidable,
            "nonincreasable": cls.nonincreasable,
            "steady": cls.steady,
            "nodrop_pipes": sorted(i + 1 for i in cls.nodrop_pipes),
            "box": {"lo": list(box.lo), "hi": list(box.hi)},
            "polytope_nonempty": box.polytope_nonempty,
        }
        click.echo(json.dumps(_jsonify(payload), indent=2))
        return
    lines = [
        f"pipes: {state.n}  (t_upd = {state.t_upd:g}, m = {state.m:g})",
        f"total intensity A: {cls.total_intensity:.10g}",
        f"total backlog B: {cls.total_backlog:.10g}",
        f"drain load A + B/t_upd: {drain_load:.10g}",
        f"common drainability (every queue can empty): {_yesno(cls.decomposable)}",
        f"overfill avoidability (drop-free allocation exists): {_yesno(cls.avoidable)}",
        f"common non-increase (no queue must grow): {_yesno(cls.nonincreasable)}",
        f"steady: {_yesno(cls.steady)}",
    ]
    if cls.nodrop_pipes:
        pipes = ", ".join(str(i + 1) for i in sorted(cls.nodrop_pipes))
        lines.append(f"guaranteed no-drop pipes: {pipes}")
    else:
        lines.append("guaranteed no-drop pipes: none")
    lines.append("drop-free share box:")
    for i, (l, h) in enumerate(zip(box.lo, box.hi)):
        label = f" ({doc.labels[i]})" if doc.labels[i] else ""
        lines.append(f"  pipe {i + 1}{label}: [{l:.10g}, {h:.10g}]")
    lines.append(f"box-simplex polytope nonempty: {_yesno(box.polytope_nonempty)}")
    click.echo("\n".join(lines))


# ---------------------------------------------------------------------------
# solve


def _verify_solution(
    state: SystemState, problem: str, result: SolveResult, resolution: float, tol: float
) -> dict:
    """Independent cross-check: a lattice/grid reference plus stationarity."""
    if problem == "sum":
        sub, _ = problem_for_state(state)
        ref = oracle_solve(sub, resolution=resolution, mode="grid").objective
        ok, detail = kkt_report(sub, _active_w(state, result), tol)
    elif problem == "minmax":
        sub, _ = problem_for_state(state)
        c = np.asarray(sub.c)
        ref_w, ref = lattice_refine_minimize(
            lambda batch: np.max(c[None, :] / batch, axis=1),
            sub.box.lo,
            sub.box.hi,
            sub.budget,
        )
        ok = verify_minmax_kkt(sub, _active_w(state, result), tol)
        detail = "levels equalized" if ok else "level conditions violated"
    else:
        variant = "sum" if problem == "null-sum" else "minmax"
        a = np.array([p.a for p in state.pipes])
        b = np.array([p.b for p in state.pipes])
        lo = a + b / state.t_upd
        loaded = b > 0.0

        def batch_cost(batch: np.ndarray) -> np.ndarray:
            terms = np.zeros_like(batch)
            denom = batch * (batch - a[None, :])
            terms[:, loaded] = b[loaded] ** 2 / denom[:, loaded]
            return terms.max(axis=1) if variant == "minmax" else terms.sum(axis=1)

        _, ref = lattice_refine_minimize(batch_cost, lo, np.ones_like(lo), 1.0)
        ok, detail = verify_nullification(state, result.w, variant, tol)
    return {
        "reference_objective": ref,
        "gap": ref - result.objective,
        "stationary": ok,
        "detail": detail,
    }


def _active_w(state: SystemState, result: SolveResult) -> tuple[float, ...]:
    _, active = problem_for_state(state)
    return tuple(result.w[i] for i in active)


@main.command()
@click.argument("state_file", type=click.Path())
@click.option(
    "--problem",
    type=click.Choice(PROBLEMS),
    default="sum",
    show_default=True,
    help="which allocation objective to minimize",
)
@click.option("--verify", is_flag=True, help="cross-check with an independent oracle")
@click.option(
    "--resolution",
    type=float,
    default=1e-4,
    show_default=True,
    help="grid step for --verify",
)
@click.option(
    "--tol",
    type=float,
    default=1e-8,
    show_default=True,
    help="stationarity tolerance for --verify",
)
@click.option("--json", "as_json", is_flag=True)
@_handle_errors
def solve(
    state_file: str,
    problem: str,
    verify: bool,
    resolution: float,
    tol: float,
    as_json: bool,
):
    """Solve an allocation problem for a state file."""
    doc = _load_state_doc(state_file)
    state = doc.state
    if problem == "sum":
        sub, active = problem_for_state(state)
        res = solve_sum_mean_delay(sub)
        result = _expand(res, active, state.n)
    elif problem == "minmax":
        sub, active = problem_for_state(state)
        res = solve_minmax_mean_delay(sub)
        result = _expand(res, active, state.n)
    else:
        result = solve_nullification(state, "sum" if problem == "null-sum" else "minmax")
    verification = (
        _verify_solution(state, problem, result, resolution, tol) if verify else None
    )
    if as_json:
        payload = {
            "report": "solve",
            "problem": problem,
            "allocation": list(result.w),
            "objective": result.objective,
            "fixed_faces": [
                {"pipe": i + 1, "side": side} for i, side in result.fixed_faces
            ],
            "nodes_visited": result.nodes_visited,
        }
        if verification is not None:
            payload["verification"] = verification
        click.echo(json.dumps(_jsonify(payload), indent=2))
        return
    lines = [f"problem: {problem}", "allocation:"]
    for i, wi in enumerate(result.w):
        label = f" ({doc.labels[i]})" if doc.labels[i] else ""
        lines.append(f"  pipe {i + 1}{label}: {wi:.12g}")
    lines.append(f"objective: {result.objective:.12g}")
    if result.fixed_faces:
        faces = ", ".join(f"pipe {i + 1} at {side}" for i, side in result.fixed_faces)
        lines.append(f"active faces: {faces}")
    else:
        lines.append("active faces: none")
    lines.append(f"nodes visited: {result.nodes_visited}")
    if verification is not None:
        lines.append("verification:")
        lines.append(
            f"  reference objective: {verification['reference_objective']:.12g} "
            f"(gap {verification['gap']:.3g})"
        )
        lines.append(
            f"  stationary: {_yesno(verification['stationary'])}"
            f" ({verification['detail']})"
        )
    click.echo("\n".join(lines))


def _expand(res: SolveResult, active: tuple[int, ...], n: int) -> SolveResult:
    w = [0.0] * n
    for j, i in enumerate(active):
        w[i] = res.w[j]
    faces = tuple((active[j], side) for j, side in res.fixed_faces)
    return SolveResult(
        w=tuple(w),
        objective=res.objective,
        fixed_faces=faces,
        nodes_visited=res.nodes_visited,
    )


# ---------------------------------------------------------------------------
# simulate / compare


def _resolve_seed(cli_seed: int | None, spec_seed: int) -> int:
    if cli_seed is not None:
        return cli_seed
    env = os.environ.get("FLUIDSCHED_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise DomainError(f"FLUIDSCHED_SEED must be an integer, got {env!r}")
    return spec_seed


def _load_trace_spec(path: str, seed: int | None):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            spec = parse_trace_spec(fh.read())
    except ParseError as exc:
        raise ParseError(f"{path}: {exc.reason}", exc.line, exc.col) from exc
    used_seed = _resolve_seed(seed, spec.seed)
    return dataclasses.replace(spec, seed=used_seed), used_seed


def _csv_text(report_lists) -> str:
    rows = [CSV_HEADER]
    for reports in report_lists:
        for rep in reports:
            for p in rep.pipes:
                rows.append(
                    f"{rep.epoch},{p.pipe + 1},{rep.policy},{p.w!r},"
                    f"{p.predicted_delay!r},{p.realized_delay!r},"
                    f"{p.predicted_drops_paper!r},{p.realized_drops!r},"
                    f"{int(rep.fallback)}"
                )
    return "\n".join(rows) + "\n"


def _epoch_payload(rep) -> dict:
    return {
        "epoch": rep.epoch,
        "policy": rep.policy,
        "fallback": rep.fallback,
        "pipes": [
            {
                "pipe": p.pipe + 1,
                "w": p.w,
                "intensity_estimate": p.intensity_estimate,
                "b_start": p.b_start,
                "b_end": p.b_end,
                "inflow": p.inflow,
                "served": p.served,
                "predicted_case": p.predicted_case,
                "predicted_delay": p.predicted_delay,
                "predicted_drops_paper": p.predicted_drops_paper,
                "predicted_drops_const": p.predicted_drops_const,
                "realized_delay": p.realized_delay,
                "realized_drops": p.realized_drops,
            }
            for p in rep.pipes
        ],
    }


@main.command()
@click.argument("state_file", type=click.Path())
@click.argument("trace_file", type=click.Path())
@click.option(
    "--policy",
    default="sum-optimal",
    show_default=True,
    help="policy name, or static:w1,w2,...",
)
@click.option("--epochs", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=None, help="override the trace seed")
@click.option("--out", type=click.Path(), default=None, help="write output to a file")
@click.option("--json", "as_json", is_flag=True)
@_handle_errors
def simulate(
    state_file: str,
    trace_file: str,
    policy: str,
    epochs: int,
    seed: int | None,
    out: str | None,
    as_json: bool,
):
    """Simulate one policy on a trace; emits CSV (default) or JSON."""
    doc = _load_state_doc(state_file)
    spec, used_seed = _load_trace_spec(trace_file, seed)
    trace = generate_trace(spec)
    reports = run_simulation(doc.state, trace, Policy.from_name(policy), epochs)
    if as_json:
        payload = {
            "report": "simulate",
            "policy": reports[0].policy,
            "seed": used_seed,
            "epochs": [_epoch_payload(r) for r in reports],
        }
        _emit(json.dumps(_jsonify(payload), indent=2) + "\n", out)
    else:
        _emit(_csv_text([reports]), out)


@main.command()
@click.argument("state_file", type=click.Path())
@click.argument("trace_file", type=click.Path())
@click.option(
    "--policy",
    "policies",
    multiple=True,
    required=True,
    help="policy name (repeatable), or static:w1,w2,...",
)
@click.option("--epochs", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=None, help="override the trace seed")
@click.option("--out", type=click.Path(), default=None, help="write output to a file")
@click.option("--json", "as_json", is_flag=True)
@_handle_errors
def compare(
    state_file: str,
    trace_file: str,
    policies: tuple[str, ...],
    epochs: int,
    seed: int | None,
    out: str | None,
    as_json: bool,
):
    """Run several policies on the identical trace and report all epochs."""
    doc = _load_state_doc(state_file)
    spec, used_seed = _load_trace_spec(trace_file, seed)
    trace = generate_trace(spec)
    summaries = compare_policies(
        doc.state, trace, [Policy.from_name(p) for p in policies], epochs
    )
    if as_json:
        payload = {
            "report": "compare",
            "seed": used_seed,
            "policies": [
                {
                    "policy": s.policy,
                    "sum_mean_delays": s.sum_mean_delays,
                    "total_dropped": s.total_dropped,
                    "fallbacks": s.fallbacks,
                    "epochs": [_epoch_payload(r) for r in s.reports],
                }
                for s in summaries
            ],
        }
        _emit(json.dumps(_jsonify(payload), indent=2) + "\n", out)
    else:
        _emit(_csv_text([s.reports for s in summaries]), out)


if __name__ == "__main__":
    main()
