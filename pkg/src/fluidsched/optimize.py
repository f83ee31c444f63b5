"""Allocation solvers over the box-simplex polytope.

Four problems are covered for a steady (or drainable) system state:

* minimize the sum of per-pipe mean delays, which reduces to minimizing
  phi(w) = sum(c_i / w_i) with c_i = a_i t_upd / 2 + b_i over the feasible
  box intersected with the capacity simplex -- solved exactly by a
  recursive face search;
* minimize the maximum per-pipe mean delay (level bisection);
* minimize the sum or the maximum of drain costs b_i^2 / (w_i (w_i - a_i))
  over allocations that drain every queue (projected descent / bisection).

Independent verification lives here too: a greedy exact lattice oracle, a
multiresolution lattice search, projected-descent cross checks, and
stationarity certificates for every solver output.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .analysis import FeasibleBox, feasible_box
from .model import DomainError, SystemState

# Band within which a coordinate of an unconstrained minimum counts as
# satisfying a bound; keeps boundary-grazing optima from spurious recursion.
VIOLATION_SLACK = 1e-12


class InfeasibleError(ValueError):
    """The requested problem has an empty feasible set."""


@dataclass(frozen=True)
class SumDelayProblem:
    """Minimize sum(c_i / w_i) over {box, sum(w) = budget}.

    All c_i must be strictly positive; a pipe with no arrivals and no
    backlog has zero delay cost and must be excluded before constructing
    the problem (see ``solve_for_state``).
    """

    c: tuple[float, ...]
    box: FeasibleBox
    budget: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "c", tuple(float(x) for x in self.c))
        if len(self.c) == 0:
            raise DomainError("problem needs at least one pipe")
        if len(self.c) != len(self.box.lo) or len(self.c) != len(self.box.hi):
            raise DomainError("cost vector and box dimensions disagree")
        if any(ci <= 0.0 for ci in self.c):
            raise DomainError(f"delay costs must be positive, got {self.c}")
        if not self.budget > 0.0:
            raise DomainError(f"budget must be positive, got {self.budget}")
        for i, (l, h) in enumerate(zip(self.box.lo, self.box.hi)):
            if not (0.0 <= l < h):
                raise DomainError(f"pipe {i}: invalid share interval [{l}, {h}]")

    @classmethod
    def from_state(cls, state: SystemState, budget: float = 1.0) -> "SumDelayProblem":
        c = tuple(p.a * state.t_upd / 2.0 + p.b for p in state.pipes)
        if any(ci == 0.0 for ci in c):
            raise DomainError(
                "state has an idle pipe (a = b = 0); exclude it or use solve_for_state"
            )
        return cls(c=c, box=feasible_box(state), budget=budget)

    @property
    def n(self) -> int:
        return len(self.c)


@dataclass(frozen=True)
class SolveResult:
    """Solver output: the allocation, its objective, and bookkeeping.

    fixed_faces lists (pipe index, "lo"|"hi") equalities active at the
    solution; nodes_visited counts distinct subproblem minimizations (for
    the face search) or objective evaluations (for iterative solvers).
    """

    w: tuple[float, ...]
    objective: float
    fixed_faces: tuple[tuple[int, str], ...]
    nodes_visited: int


def _phi(c: np.ndarray, w: np.ndarray) -> float:
    with np.errstate(divide="ignore"):
        return float(np.sum(c / w))


def simplex_minimum(c, budget: float = 1.0) -> tuple[float, ...]:
    """Unconstrained minimizer of sum(c_i / w_i) on the scaled simplex.

    Returns budget * sqrt(c_i) / sum(sqrt(c_j)); by the Cauchy-Bunyakovsky
    bound this is the unique minimizer over {w > 0, sum(w) = budget} and
    attains objective (sum sqrt(c_i))^2 / budget.
    """
    arr = np.asarray(c, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise DomainError("cost vector must be a nonempty 1-d sequence")
    if not (arr > 0.0).all():
        raise DomainError("all delay costs must be positive")
    if not budget > 0.0:
        raise DomainError(f"budget must be positive, got {budget}")
    s = np.sqrt(arr)
    return tuple(float(x) for x in budget * s / s.sum())


def _require_polytope(lo: np.ndarray, hi: np.ndarray, budget: float) -> None:
    lo_sum = float(np.sum(lo))
    hi_sum = float(np.sum(hi))
    if lo_sum > budget + VIOLATION_SLACK:
        raise InfeasibleError(
            f"sum of lower share bounds {lo_sum:.12g} exceeds the budget "
            f"{budget:.12g}; no drop-free allocation exists"
        )
    if hi_sum < budget - VIOLATION_SLACK:
        raise InfeasibleError(
            f"sum of upper share bounds {hi_sum:.12g} is below the budget "
            f"{budget:.12g}; every allocation drains some queue early, so no "
            "confined allocation exists"
        )


def solve_sum_mean_delay(problem: SumDelayProblem) -> SolveResult:
    """Exact global minimizer of sum(c_i / w_i) over the box-simplex polytope.

    Recursive face search: compute the unconstrained simplex minimum; if it
    sits inside the box we are done, otherwise recurse on each face of a
    violated bound (fix that coordinate at the bound, shrink the budget,
    re-solve in one dimension less) and keep the best face value. The
    objective is strictly convex, so the minimizer is unique. Subproblems
    are memoized on their set of fixed (pipe, side) pairs; nodes_visited
    counts distinct minimizations over two or more free pipes.
    """
    c = np.asarray(problem.c, dtype=float)
    lo = np.asarray(problem.box.lo, dtype=float)
    hi = np.asarray(problem.box.hi, dtype=float)
    budget = float(problem.budget)
    n = c.size
    _require_polytope(lo, hi, budget)

    sqrt_c = np.sqrt(c)
    memo: dict[frozenset, Optional[tuple[float, np.ndarray, frozenset]]] = {}
    nodes = 0

    def solve(fixed: frozenset) -> Optional[tuple[float, np.ndarray, frozenset]]:
        nonlocal nodes
        if fixed in memo:
            return memo[fixed]
        fixed_idx = {i for i, _ in fixed}
        free = np.array([i for i in range(n) if i not in fixed_idx], dtype=int)
        w = np.zeros(n)
        for i, side in fixed:
            w[i] = lo[i] if side == "lo" else hi[i]
        rem = budget - math.fsum(w[i] for i, _ in fixed)

        result: Optional[tuple[float, np.ndarray, frozenset]] = None
        if free.size == 0:
            if abs(rem) <= VIOLATION_SLACK:
                result = (_phi(c, w), w.copy(), fixed)
        elif (
            float(np.sum(lo[free])) <= rem + VIOLATION_SLACK
            and float(np.sum(hi[free])) >= rem - VIOLATION_SLACK
        ):
            if free.size >= 2:
                nodes += 1
            v = rem * sqrt_c[free] / float(np.sum(sqrt_c[free]))
            w[free] = v
            below = v < lo[free] - VIOLATION_SLACK
            above = v > hi[free] + VIOLATION_SLACK
            if not below.any() and not above.any():
                result = (_phi(c, w), w.copy(), fixed)
            else:
                best: Optional[tuple[float, np.ndarray, frozenset]] = None
                for k in range(free.size):
                    if below[k]:
                        face = (int(free[k]), "lo")
                    elif above[k]:
                        face = (int(free[k]), "hi")
                    else:
                        continue
                    child = solve(fixed | {face})
                    if child is not None and (best is None or child[0] < best[0]):
                        best = child
                result = best
        memo[fixed] = result
        return result

    solved = solve(frozenset())
    if solved is None:
        # The aggregate bounds pass but every face chain dead-ends; cannot
        # happen for a polytope with interior, kept as a guard.
        raise InfeasibleError("no feasible face contains the minimum")
    objective, w, faces = solved
    return SolveResult(
        w=tuple(float(x) for x in w),
        objective=objective,
        fixed_faces=tuple(sorted(faces)),
        nodes_visited=nodes,
    )


def problem_for_state(state: SystemState) -> tuple[SumDelayProblem, tuple[int, ...]]:
    """Build the confined-allocation problem for a state.

    Idle pipes (a = b = 0) carry no delay cost and cannot legally appear in
    the problem; they are dropped, and the returned index tuple maps the
    problem's coordinates back to the state's pipes.
    """
    box = feasible_box(state)
    c_full = [p.a * state.t_upd / 2.0 + p.b for p in state.pipes]
    active = tuple(i for i, ci in enumerate(c_full) if ci > 0.0)
    if not active:
        raise DomainError("every pipe is idle; nothing to optimize")
    sub = SumDelayProblem(
        c=tuple(c_full[i] for i in active),
        box=FeasibleBox(
            lo=tuple(box.lo[i] for i in active),
            hi=tuple(box.hi[i] for i in active),
        ),
        budget=1.0,
    )
    return sub, active


def solve_for_state(state: SystemState, problem: str = "sum") -> SolveResult:
    """Solve a confined-allocation problem ("sum" or "minmax") for a state.

    Idle pipes (a = b = 0) are pinned to a zero share; the remaining pipes
    share the whole unit budget.
    """
    if problem not in ("sum", "minmax"):
        raise DomainError(f"unknown problem {problem!r}")
    sub, active = problem_for_state(state)
    if problem == "sum":
        res = solve_sum_mean_delay(sub)
    else:
        res = solve_minmax_mean_delay(sub)
    w_full = [0.0] * state.n
    for j, i in enumerate(active):
        w_full[i] = res.w[j]
    faces = tuple((active[j], side) for j, side in res.fixed_faces)
    return SolveResult(
        w=tuple(w_full),
        objective=res.objective,
        fixed_faces=faces,
        nodes_visited=res.nodes_visited,
    )


# ---------------------------------------------------------------------------
# Stationarity certificates


def _stationarity_report(
    c: np.ndarray,
    lo: np.ndarray,
    hi: np.ndarray,
    budget: float,
    w: np.ndarray,
    tol: float,
    power: int,
) -> tuple[bool, str]:
    """Check the multiplier conditions for min sum(c/w) (power=2) or
    min max(c/w) (power=1): interior ratios c_i / w_i^power share one value
    lam, pipes at the lower bound sit at or below lam, pipes at the upper
    bound at or above it."""
    if abs(float(np.sum(w)) - budget) > tol * max(1.0, abs(budget)):
        return False, f"sum(w) = {float(np.sum(w)):.12g} differs from budget {budget:g}"
    if (w < lo - tol).any() or (w > hi + tol).any():
        return False, "allocation leaves the share box"
    if (w <= 0.0).any():
        return False, "allocation has a nonpositive share"
    ratios = c / w**power
    band = max(tol, VIOLATION_SLACK)
    at_lo = w <= lo + band
    at_hi = w >= hi - band
    interior = ~(at_lo | at_hi)
    lo_only = at_lo & ~at_hi
    hi_only = at_hi & ~at_lo
    if interior.any():
        lam = float(np.median(ratios[interior]))
        scale = max(lam, 1.0)
        spread = float(np.max(np.abs(ratios[interior] - lam)))
        if spread > tol * scale:
            return False, f"interior ratios spread {spread:.3g} beyond tolerance"
        if lo_only.any() and float(np.max(ratios[lo_only])) > lam + tol * scale:
            return False, "a lower-bound pipe wants more capacity than an interior one"
        if hi_only.any() and float(np.min(ratios[hi_only])) < lam - tol * scale:
            return False, "an upper-bound pipe wants less capacity than an interior one"
    else:
        lam_floor = float(np.max(ratios[lo_only])) if lo_only.any() else -math.inf
        lam_ceil = float(np.min(ratios[hi_only])) if hi_only.any() else math.inf
        scale = max(abs(lam_floor), abs(lam_ceil), 1.0)
        if lam_floor > lam_ceil + tol * scale:
            return False, "no multiplier separates lower- and upper-bound pipes"
    return True, "stationary"


def verify_kkt(problem: SumDelayProblem, w, tol: float = 1e-8) -> bool:
    """True iff ``w`` satisfies the optimality conditions of the sum problem.

    Interior pipes must share a common ratio c_i / w_i^2; pipes pinned at
    their lower bound must not exceed it, pipes pinned at the upper bound
    must not fall below it. Infeasible points return False, never raise.
    """
    ok, _ = kkt_report(problem, w, tol)
    return ok


def kkt_report(problem: SumDelayProblem, w, tol: float = 1e-8) -> tuple[bool, str]:
    """verify_kkt with a human-readable reason for the verdict."""
    return _stationarity_report(
        np.asarray(problem.c, dtype=float),
        np.asarray(problem.box.lo, dtype=float),
        np.asarray(problem.box.hi, dtype=float),
        float(problem.budget),
        np.asarray(w, dtype=float),
        tol,
        power=2,
    )


def verify_minmax_kkt(problem: SumDelayProblem, w, tol: float = 1e-8) -> bool:
    """Optimality certificate for the min-max problem: equalized levels.

    Same multiplier structure as verify_kkt with the per-pipe level
    c_i / w_i in place of the sum-problem ratio c_i / w_i^2.
    """
    ok, _ = _stationarity_report(
        np.asarray(problem.c, dtype=float),
        np.asarray(problem.box.lo, dtype=float),
        np.asarray(problem.box.hi, dtype=float),
        float(problem.budget),
        np.asarray(w, dtype=float),
        tol,
        power=1,
    )
    return ok


# ---------------------------------------------------------------------------
# Projection and projected descent


def project_box_simplex(x, lo, hi, budget: float) -> np.ndarray:
    """Euclidean projection onto {lo <= w <= hi, sum(w) = budget}.

    Exact O(n log n) method: w(lam) = clip(x + lam, lo, hi) has a
    nondecreasing piecewise-linear sum, so the correct shift lam is found
    by interpolating between the sorted clip breakpoints.
    """
    x = np.asarray(x, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    lo_sum = float(np.sum(lo))
    hi_sum = float(np.sum(hi))
    if budget < lo_sum - 1e-9 or budget > hi_sum + 1e-9:
        raise InfeasibleError(
            f"budget {budget:g} outside [{lo_sum:.12g}, {hi_sum:.12g}]"
        )
    bps = np.sort(np.concatenate([lo - x, hi - x]))
    sums = np.clip(x[None, :] + bps[:, None], lo, hi).sum(axis=1)
    if budget <= sums[0]:
        lam = bps[0]
    elif budget >= sums[-1]:
        lam = bps[-1]
    else:
        k = int(np.searchsorted(sums, budget, side="right")) - 1
        k = min(max(k, 0), len(bps) - 2)
        rise = sums[k + 1] - sums[k]
        lam = bps[k] if rise <= 0.0 else bps[k] + (budget - sums[k]) * (
            bps[k + 1] - bps[k]
        ) / rise
    return np.clip(x + lam, lo, hi)


def projected_gradient_residual(
    gradient: Callable[[np.ndarray], np.ndarray],
    w,
    lo,
    hi,
    budget: float,
) -> float:
    """Norm of w - P(w - grad f(w)): zero exactly at a constrained optimum."""
    w = np.asarray(w, dtype=float)
    g = gradient(w)
    return float(np.linalg.norm(w - project_box_simplex(w - g, lo, hi, budget)))


def projected_descent(
    objective: Callable[[np.ndarray], float],
    gradient: Callable[[np.ndarray], np.ndarray],
    w0,
    lo,
    hi,
    budget: float,
    step_tol: float = 1e-12,
    residual_tol: Optional[float] = None,
    max_iter: int = 50_000,
) -> tuple[np.ndarray, int]:
    """Projected gradient descent with backtracking on the box-simplex set.

    Stops when the iterate moves less than ``step_tol`` or, if given, when
    the projected-gradient residual drops below ``residual_tol``. Returns
    the final iterate and the number of objective evaluations.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    w = project_box_simplex(np.asarray(w0, dtype=float), lo, hi, budget)
    f = objective(w)
    evals = 1
    step = 1.0
    for _ in range(max_iter):
        g = gradient(w)
        if residual_tol is not None:
            res = float(np.linalg.norm(w - project_box_simplex(w - g, lo, hi, budget)))
            if res < residual_tol:
                break
        moved = None
        while step > 1e-18:
            cand = project_box_simplex(w - step * g, lo, hi, budget)
            delta = cand - w
            f_cand = objective(cand)
            evals += 1
            # sufficient-decrease test for the projected step
            if f_cand <= f + float(g @ delta) + float(delta @ delta) / (2.0 * step):
                moved = (cand, f_cand, float(np.linalg.norm(delta)))
                break
            step *= 0.5
        if moved is None:
            break
        w, f, dist = moved
        step = min(step * 1.5, 1e6)
        if dist < step_tol:
            break
    return w, evals


# ---------------------------------------------------------------------------
# Min-max mean delay (level bisection)


def solve_minmax_mean_delay(problem: SumDelayProblem) -> SolveResult:
    """Minimize the largest per-pipe level c_i / w_i over the polytope.

    Bisection on the common level D: the capacity demanded by level D is
    sum(clip(c_i / D, lo_i, hi_i)), nonincreasing in D, so the D spending
    exactly the budget is found by bisection. Residual budget from the
    finite bisection is poured into pipes pinned at their lower bound first
    (extra capacity can only lower a pipe's level, never raise the max).
    """
    c = np.asarray(problem.c, dtype=float)
    lo = np.asarray(problem.box.lo, dtype=float)
    hi = np.asarray(problem.box.hi, dtype=float)
    budget = float(problem.budget)
    _require_polytope(lo, hi, budget)

    evals = 0

    def spent(d: float) -> float:
        nonlocal evals
        evals += 1
        return float(np.sum(np.clip(c / d, lo, hi)))

    d_mid = float(np.sum(c)) / budget
    d_lo = d_hi = d_mid
    for _ in range(200):
        if spent(d_hi) <= budget:
            break
        d_hi *= 2.0
    for _ in range(200):
        if spent(d_lo) >= budget:
            break
        d_lo *= 0.5
    for _ in range(200):
        mid = 0.5 * (d_lo + d_hi)
        if spent(mid) > budget:
            d_lo = mid
        else:
            d_hi = mid
    w = np.clip(c / d_hi, lo, hi)
    _distribute_residual(w, lo, hi, budget, levels=c / w)
    with np.errstate(divide="ignore"):
        objective = float(np.max(c / w))
    return SolveResult(
        w=tuple(float(x) for x in w),
        objective=objective,
        fixed_faces=_pinned_faces(w, lo, hi),
        nodes_visited=evals,
    )


def _distribute_residual(
    w: np.ndarray, lo: np.ndarray, hi: np.ndarray, budget: float, levels: np.ndarray
) -> None:
    """Adjust w in place so sum(w) = budget exactly (residual ~ bisection tol).

    Positive residue goes to lower-bound-pinned pipes first, then to the
    highest-level pipes; negative residue is taken from the lowest-level
    pipes that sit above their lower bound.
    """
    residual = budget - float(np.sum(w))
    if residual > 0.0:
        order = sorted(
            range(w.size),
            key=lambda i: (0 if w[i] <= lo[i] + VIOLATION_SLACK else 1, -levels[i], i),
        )
        for i in order:
            if residual <= 0.0:
                break
            room = hi[i] - w[i]
            give = min(room, residual)
            if give > 0.0:
                w[i] += give
                residual -= give
    elif residual < 0.0:
        order = sorted(range(w.size), key=lambda i: (levels[i], i))
        for i in order:
            if residual >= 0.0:
                break
            room = w[i] - lo[i]
            take = min(room, -residual)
            if take > 0.0:
                w[i] -= take
                residual += take


def _pinned_faces(
    w: np.ndarray, lo: np.ndarray, hi: np.ndarray
) -> tuple[tuple[int, str], ...]:
    faces = []
    for i in range(w.size):
        if w[i] <= lo[i] + 1e-11:
            faces.append((i, "lo"))
        elif w[i] >= hi[i] - 1e-11:
            faces.append((i, "hi"))
    return tuple(faces)


# ---------------------------------------------------------------------------
# Nullification problems (drain every queue)


def _drain_cost_functions(a: np.ndarray, b: np.ndarray):
    """Objective and gradient of sum(b_i^2 / (w_i (w_i - a_i))), with zero
    contribution from pipes that start empty."""
    loaded = b > 0.0

    def objective(w: np.ndarray) -> float:
        denom = w * (w - a)
        with np.errstate(divide="ignore"):
            terms = np.where(loaded, b**2 / np.where(loaded, denom, 1.0), 0.0)
        return float(np.sum(terms))

    def gradient(w: np.ndarray) -> np.ndarray:
        denom = w * (w - a)
        g = np.zeros_like(w)
        g[loaded] = (
            -(b[loaded] ** 2) * (2.0 * w[loaded] - a[loaded]) / denom[loaded] ** 2
        )
        return g

    return objective, gradient


def nullification_objective(state: SystemState, w, variant: str = "sum") -> float:
    """Drain cost of an allocation: sum or max of b_i^2 / (w_i (w_i - a_i)).

    Pipes with no backlog cost nothing regardless of their share.
    """
    total = 0.0
    worst = 0.0
    for pipe, wi in zip(state.pipes, w):
        if pipe.b == 0.0:
            continue
        denom = wi * (wi - pipe.a)
        term = math.inf if denom <= 0.0 else pipe.b**2 / denom
        total += term
        worst = max(worst, term)
    return worst if variant == "minmax" else total


def solve_nullification(state: SystemState, variant: str = "sum") -> SolveResult:
    """Minimize the drain cost over allocations that empty every queue.

    Feasible only when the state is commonly drainable (sum of upper
    thresholds w' at most 1); otherwise raises InfeasibleError. The sum
    variant runs projected descent to a projected-gradient residual below
    1e-10; the minmax variant bisects the common cost level, inverting each
    pipe's cost at the quadratic root above its intensity.
    """
    if variant not in ("sum", "minmax"):
        raise DomainError(f"unknown variant {variant!r}")
    a = np.array([p.a for p in state.pipes], dtype=float)
    b = np.array([p.b for p in state.pipes], dtype=float)
    w_prime = a + b / state.t_upd
    lo = w_prime.copy()
    hi = np.ones_like(lo)
    lo_sum = float(np.sum(lo))
    if lo_sum > 1.0 + VIOLATION_SLACK:
        raise InfeasibleError(
            f"sum of drain thresholds w' is {lo_sum:.12g} > 1; the state is not "
            "commonly drainable, so no allocation can empty every queue"
        )
    n = lo.size
    loaded = b > 0.0

    if variant == "sum":
        objective, gradient = _drain_cost_functions(a, b)
        slack = 1.0 - lo_sum
        w0 = lo + slack / n
        w, evals = projected_descent(
            objective, gradient, w0, lo, hi, 1.0, residual_tol=1e-10
        )
        return SolveResult(
            w=tuple(float(x) for x in w),
            objective=objective(w),
            fixed_faces=_pinned_faces(w, lo, hi),
            nodes_visited=evals,
        )

    evals = 0

    def spent(d: float) -> float:
        nonlocal evals
        evals += 1
        roots = 0.5 * (a + np.sqrt(a * a + 4.0 * b * b / d))
        return float(np.sum(np.maximum(lo, np.where(loaded, roots, lo))))

    if not loaded.any():
        # nothing to drain: pin every pipe at its threshold, spread the rest
        w = lo.copy()
        _distribute_residual(w, lo, hi, 1.0, levels=np.zeros(n))
        return SolveResult(
            w=tuple(float(x) for x in w),
            objective=0.0,
            fixed_faces=_pinned_faces(w, lo, hi),
            nodes_visited=0,
        )

    d_lo = d_hi = 1.0
    for _ in range(300):
        if spent(d_hi) <= 1.0:
            break
        d_hi *= 2.0
    for _ in range(300):
        if spent(d_lo) >= 1.0:
            break
        d_lo *= 0.5
    for _ in range(200):
        mid = 0.5 * (d_lo + d_hi)
        if spent(mid) > 1.0:
            d_lo = mid
        else:
            d_hi = mid
    roots = 0.5 * (a + np.sqrt(a * a + 4.0 * b * b / d_hi))
    w = np.maximum(lo, np.where(loaded, roots, lo))
    costs = np.zeros(n)
    costs[loaded] = b[loaded] ** 2 / (w[loaded] * (w[loaded] - a[loaded]))
    _distribute_residual(w, lo, hi, 1.0, levels=costs)
    return SolveResult(
        w=tuple(float(x) for x in w),
        objective=nullification_objective(state, w, "minmax"),
        fixed_faces=_pinned_faces(w, lo, hi),
        nodes_visited=evals,
    )


def verify_nullification(
    state: SystemState, w, variant: str = "sum", tol: float = 1e-8
) -> tuple[bool, str]:
    """Stationarity certificate for a drain-cost solution.

    The sum variant requires the projected-gradient residual on the
    feasible set {w >= w', sum(w) = 1} to fall below ``tol``. The minmax
    variant requires the loaded pipes away from their threshold to share
    one cost level, with threshold-pinned pipes at or below it.
    """
    a = np.array([p.a for p in state.pipes], dtype=float)
    b = np.array([p.b for p in state.pipes], dtype=float)
    w = np.asarray(w, dtype=float)
    lo = a + b / state.t_upd
    hi = np.ones_like(lo)
    if abs(float(np.sum(w)) - 1.0) > max(tol, 1e-9):
        return False, f"sum(w) = {float(np.sum(w)):.12g} differs from 1"
    if (w < lo - tol).any():
        return False, "allocation falls below a drain threshold w'"
    if variant == "sum":
        _, gradient = _drain_cost_functions(a, b)
        res = projected_gradient_residual(gradient, w, lo, hi, 1.0)
        if res > tol:
            return False, f"projected-gradient residual {res:.3g} above {tol:g}"
        return True, f"projected-gradient residual {res:.3g}"
    if variant == "minmax":
        loaded = b > 0.0
        if not loaded.any():
            return True, "no backlog anywhere; every allocation is optimal"
        costs = np.zeros_like(w)
        costs[loaded] = b[loaded] ** 2 / (w[loaded] * (w[loaded] - a[loaded]))
        band = max(tol, VIOLATION_SLACK)
        pinned = w <= lo + band
        free = loaded & ~pinned
        if free.any():
            level = float(np.median(costs[free]))
            scale = max(level, 1.0)
            if float(np.max(np.abs(costs[free] - level))) > tol * scale:
                return False, "free pipes do not share one cost level"
            if (costs[loaded & pinned] > level + tol * scale).any():
                return False, "a threshold-pinned pipe exceeds the common level"
        return True, "levels equalized"
    raise DomainError(f"unknown variant {variant!r}")


# ---------------------------------------------------------------------------
# Independent oracles


def oracle_solve(
    problem: SumDelayProblem, resolution: float = 1e-4, mode: str = "grid"
) -> SolveResult:
    """Independent solver for cross-checking solve_sum_mean_delay.

    grid mode allocates the budget in steps of ``resolution`` on a lattice
    anchored at the lower bounds, always feeding the pipe with the largest
    marginal objective decrease; for this separable convex objective the
    greedy allocation is the exact lattice optimum. Any sub-step residue is
    poured onto the steepest pipes, so the returned point is feasible and
    its objective upper-bounds the true minimum, converging to it as the
    resolution shrinks.

    descent mode runs projected gradient descent until the iterate moves
    less than 1e-12.
    """
    if not resolution > 0.0:
        raise DomainError(f"resolution must be positive, got {resolution}")
    c = np.asarray(problem.c, dtype=float)
    lo = np.asarray(problem.box.lo, dtype=float)
    hi = np.asarray(problem.box.hi, dtype=float)
    budget = float(problem.budget)
    _require_polytope(lo, hi, budget)

    if mode == "descent":
        v = np.asarray(simplex_minimum(problem.c, budget))
        w, evals = projected_descent(
            lambda x: _phi(c, x),
            lambda x: -c / np.maximum(x, 1e-300) ** 2,
            v,
            lo,
            hi,
            budget,
            step_tol=1e-12,
        )
        return SolveResult(
            w=tuple(float(x) for x in w),
            objective=_phi(c, w),
            fixed_faces=_pinned_faces(w, lo, hi),
            nodes_visited=evals,
        )
    if mode != "grid":
        raise DomainError(f"unknown oracle mode {mode!r}")
    if problem.n > 6:
        raise DomainError("grid oracle is limited to 6 pipes")

    h = resolution
    w = lo.copy()
    slack = budget - float(np.sum(lo))
    units = int(slack / h)
    residue = slack - units * h

    def marginal(i: int) -> Optional[float]:
        if w[i] + h > hi[i] + 1e-15:
            return None
        if w[i] == 0.0:
            return math.inf
        return c[i] / w[i] - c[i] / (w[i] + h)

    heap: list[tuple[float, int]] = []
    for i in range(w.size):
        gain = marginal(i)
        if gain is not None:
            heapq.heappush(heap, (-gain, i))
    steps = 0
    for _ in range(units):
        if not heap:
            residue += (units - steps) * h
            break
        _, i = heapq.heappop(heap)
        w[i] += h
        steps += 1
        gain = marginal(i)
        if gain is not None:
            heapq.heappush(heap, (-gain, i))
    # pour any sub-step residue onto the steepest pipes with room
    while residue > 1e-15:
        with np.errstate(divide="ignore"):
            slope = np.where(hi - w > 1e-15, c / np.maximum(w, 1e-300) ** 2, -1.0)
        i = int(np.argmax(slope))
        if slope[i] < 0.0:
            break
        give = min(residue, hi[i] - w[i])
        w[i] += give
        residue -= give
    return SolveResult(
        w=tuple(float(x) for x in w),
        objective=_phi(c, w),
        fixed_faces=_pinned_faces(w, lo, hi),
        nodes_visited=steps,
    )


def lattice_refine_minimize(
    objective: Callable[[np.ndarray], np.ndarray],
    lo,
    hi,
    budget: float,
    final_step: float = 1e-7,
    points_per_dim: int = 9,
) -> tuple[np.ndarray, float]:
    """Multiresolution lattice search for any objective on the box-simplex set.

    ``objective`` must accept a (P, n) batch of allocations and return P
    values. Enumerates a shrinking window over the first n-1 coordinates
    (the last one absorbs the budget), keeping the best feasible point per
    round. Reliable for the convex objectives used here; serves as the
    independent oracle for the min-max and drain-cost solvers.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    n = lo.size
    center = project_box_simplex(0.5 * (lo + hi), lo, hi, budget)
    if n == 1:
        return center, float(objective(center[None, :])[0])
    best_w = center
    best_f = float(objective(center[None, :])[0])
    span = float(np.max(hi - lo))
    offsets_1d = np.linspace(-1.0, 1.0, points_per_dim)
    grids = np.meshgrid(*([offsets_1d] * (n - 1)), indexing="ij")
    unit_offsets = np.stack([g.ravel() for g in grids], axis=1)  # (P, n-1)
    while True:
        cand = np.empty((unit_offsets.shape[0], n))
        cand[:, :-1] = best_w[:-1] + span * unit_offsets
        cand[:, -1] = budget - cand[:, :-1].sum(axis=1)
        ok = ((cand >= lo - 1e-12) & (cand <= hi + 1e-12)).all(axis=1)
        if ok.any():
            vals = objective(cand[ok])
            k = int(np.argmin(vals))
            if vals[k] < best_f:
                best_f = float(vals[k])
                best_w = cand[ok][k]
        if span <= final_step:
            break
        span *= 0.35
    return np.clip(best_w, lo, hi), best_f
