"""Whole-system state classification.

Aggregates the per-pipe thresholds into system-level verdicts: can some
allocation nullify every queue, avoid every drop, or keep every queue from
growing. Also builds the per-pipe feasible box whose intersection with the
capacity simplex is the polytope the allocation solvers optimize over.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .model import SystemState, thresholds


@dataclass(frozen=True)
class StateClass:
    """System-level verdicts for one state.

    decomposable: some allocation drains every queue within the horizon
        (sum of upper thresholds w' is at most 1).
    avoidable: some allocation predicts zero drops on every pipe (sum of
        clamped lower thresholds max(0, w*) is at most 1).
    nonincreasable: some allocation keeps every queue from growing (total
        intensity at most 1).
    steady: avoidable but not strictly decomposable; equality in the
        decomposability test counts as steady.
    nodrop_pipes: indices of pipes that cannot overfill under any share
        (w* <= 0).
    """

    total_intensity: float
    total_backlog: float
    decomposable: bool
    avoidable: bool
    nonincreasable: bool
    steady: bool
    nodrop_pipes: frozenset[int]


@dataclass(frozen=True)
class FeasibleBox:
    """Per-pipe share interval [max(0, w*), w'] for drop-free behavior.

    Its intersection with the capacity simplex is the solvers' feasible
    polytope; that polytope is nonempty iff sum(lo) <= 1 <= sum(hi).
    """

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    @property
    def polytope_nonempty(self) -> bool:
        return math.fsum(self.lo) <= 1.0 <= math.fsum(self.hi)


def classify_state(state: SystemState) -> StateClass:
    """Evaluate all system-level criteria for one state."""
    w_stars = []
    for pipe in state.pipes:
        w_star, _ = thresholds(pipe, state.t_upd, state.m)
        w_stars.append(w_star)
    total_a = math.fsum(p.a for p in state.pipes)
    total_b = math.fsum(p.b for p in state.pipes)
    drain_load = total_a + total_b / state.t_upd  # == sum of w'
    decomposable = drain_load <= 1.0
    avoidable = math.fsum(max(0.0, ws) for ws in w_stars) <= 1.0
    steady = avoidable and drain_load >= 1.0
    return StateClass(
        total_intensity=total_a,
        total_backlog=total_b,
        decomposable=decomposable,
        avoidable=avoidable,
        nonincreasable=total_a <= 1.0,
        steady=steady,
        nodrop_pipes=frozenset(i for i, ws in enumerate(w_stars) if ws <= 0.0),
    )


def feasible_box(state: SystemState) -> FeasibleBox:
    """Build the per-pipe [max(0, w*), w'] box for this state.

    Total by construction; emptiness of the box-simplex intersection is
    reported via ``polytope_nonempty``, never raised. For steady states the
    intersection is guaranteed nonempty and every point in it keeps every
    pipe confined.
    """
    lo = []
    hi = []
    for pipe in state.pipes:
        w_star, w_prime = thresholds(pipe, state.t_upd, state.m)
        lo.append(max(0.0, w_star))
        hi.append(w_prime)
    return FeasibleBox(lo=tuple(lo), hi=tuple(hi))
