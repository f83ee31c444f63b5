"""Epoch-based policy evaluation on generated arrival traces.

A simulation replays a fluid arrival trace against the clamped queue
dynamics: every ``t_upd`` seconds the policy is re-invoked on the observed
state (backlogs plus an intensity estimate), and the queues are integrated
forward exactly (the dynamics are piecewise linear, so fixed-step
integration with within-step crossing handling is not an approximation).
Each epoch records realized delays and drops next to the closed-form
forecasts made at the epoch start, which is what makes prediction error
measurable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import (
    Allocation,
    DomainError,
    PipeState,
    SystemState,
    dropped_volume_constant_rate,
    predict,
)
from .optimize import InfeasibleError, solve_for_state

TRACE_KINDS = ("constant", "piecewise-constant", "poisson-bucketed", "on-off")


@dataclass(frozen=True)
class PipeTraffic:
    """Per-pipe trace parameters; which fields matter depends on the kind.

    constant / poisson-bucketed: ``rate``.
    piecewise-constant: ``breakpoints`` as ((time, rate), ...) starting at 0.
    on-off: ``high``/``low`` levels, switching ``period``, on-fraction
    ``duty`` and optional ``phase`` offset.
    """

    rate: Optional[float] = None
    breakpoints: Optional[tuple[tuple[float, float], ...]] = None
    high: Optional[float] = None
    low: float = 0.0
    period: Optional[float] = None
    duty: Optional[float] = None
    phase: float = 0.0


@dataclass(frozen=True)
class TraceSpec:
    kind: str
    pipes: tuple[PipeTraffic, ...]
    duration: float
    resolution: float
    seed: int = 0
    task_size: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "pipes", tuple(self.pipes))
        if self.kind not in TRACE_KINDS:
            raise DomainError(f"unknown trace kind {self.kind!r}")
        if len(self.pipes) < 1:
            raise DomainError("trace needs at least one pipe")
        if not self.duration > 0.0:
            raise DomainError(f"duration must be > 0, got {self.duration}")
        if not self.resolution > 0.0:
            raise DomainError(f"resolution must be > 0, got {self.resolution}")
        if not self.task_size > 0.0:
            raise DomainError(f"task size must be > 0, got {self.task_size}")
        for i, p in enumerate(self.pipes):
            self._check_pipe(i, p)

    def _check_pipe(self, i: int, p: PipeTraffic) -> None:
        if self.kind in ("constant", "poisson-bucketed"):
            if p.rate is None or p.rate < 0.0:
                raise DomainError(f"pipe {i}: needs a nonnegative rate")
        elif self.kind == "piecewise-constant":
            if not p.breakpoints:
                raise DomainError(f"pipe {i}: needs breakpoints")
            times = [t for t, _ in p.breakpoints]
            if times[0] != 0.0:
                raise DomainError(f"pipe {i}: first breakpoint must be at time 0")
            if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
                raise DomainError(f"pipe {i}: breakpoint times must increase")
            if any(r < 0.0 for _, r in p.breakpoints):
                raise DomainError(f"pipe {i}: rates must be nonnegative")
        else:  # on-off
            if p.high is None or p.high < 0.0 or p.low < 0.0:
                raise DomainError(f"pipe {i}: needs nonnegative high/low levels")
            if p.period is None or p.period <= 0.0:
                raise DomainError(f"pipe {i}: needs a positive period")
            if p.duty is None or not (0.0 <= p.duty <= 1.0):
                raise DomainError(f"pipe {i}: duty must be in [0, 1]")

    @property
    def n(self) -> int:
        return len(self.pipes)


@dataclass(frozen=True)
class Trace:
    """A step function of per-pipe inflow rates: rates[k, i] holds during
    bucket k of length ``resolution``."""

    resolution: float
    rates: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.rates.setflags(write=False)

    @property
    def n_buckets(self) -> int:
        return self.rates.shape[0]

    @property
    def n_pipes(self) -> int:
        return self.rates.shape[1]

    @property
    def duration(self) -> float:
        return self.n_buckets * self.resolution


def generate_trace(spec: TraceSpec) -> Trace:
    """Materialize the per-bucket rate table for a trace spec.

    Deterministic: the same spec (seed included) always yields the same
    table. Poisson buckets draw task counts with mean rate*resolution/
    task_size, so each bucket's empirical rate averages to the configured
    one.
    """
    k = int(spec.duration / spec.resolution + 1e-9)
    if k < 1:
        raise DomainError("duration shorter than one resolution bucket")
    rates = np.zeros((k, spec.n))
    rng = np.random.default_rng(spec.seed)
    starts = np.arange(k) * spec.resolution
    for i, pipe in enumerate(spec.pipes):
        if spec.kind == "constant":
            rates[:, i] = pipe.rate
        elif spec.kind == "poisson-bucketed":
            lam = pipe.rate * spec.resolution / spec.task_size
            counts = rng.poisson(lam, size=k)
            rates[:, i] = counts * spec.task_size / spec.resolution
        elif spec.kind == "piecewise-constant":
            times = np.array([t for t, _ in pipe.breakpoints])
            vals = np.array([r for _, r in pipe.breakpoints])
            idx = np.searchsorted(times, starts, side="right") - 1
            rates[:, i] = vals[idx]
        else:  # on-off
            pos = np.mod(starts + pipe.phase, pipe.period)
            rates[:, i] = np.where(pos < pipe.duty * pipe.period, pipe.high, pipe.low)
    return Trace(resolution=spec.resolution, rates=rates)


# ---------------------------------------------------------------------------
# Policies


_SOLVER_POLICIES = {"sum-optimal": "sum", "minmax-optimal": "minmax"}
POLICY_NAMES = (
    "sum-optimal",
    "minmax-optimal",
    "equal-split",
    "prop-backlog",
    "prop-intensity",
    "static",
)


@dataclass(frozen=True)
class Policy:
    """An allocation rule invoked at each epoch start.

    Solver-backed policies fall back to an equal split when their problem
    is infeasible for the observed state; the fallback is reported.
    """

    kind: str
    static_w: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if self.kind not in POLICY_NAMES:
            raise DomainError(f"unknown policy {self.kind!r}")
        if self.kind == "static":
            if self.static_w is None:
                raise DomainError("static policy needs an allocation")
            Allocation(self.static_w)  # validates simplex membership

    @classmethod
    def from_name(cls, name: str) -> "Policy":
        """Parse a policy name; static allocations use "static:w1,w2,...". """
        if name.startswith("static:"):
            parts = name[len("static:"):].split(",")
            return cls("static", tuple(float(p) for p in parts))
        return cls(name)

    def allocate(self, state: SystemState) -> tuple[Allocation, bool]:
        """Return (allocation, fallback_flag) for the observed state."""
        n = state.n
        if self.kind == "static":
            if len(self.static_w) != n:
                raise DomainError("static allocation length differs from state")
            return Allocation(self.static_w), False
        if self.kind == "equal-split":
            return _equal_split(n), False
        if self.kind == "prop-backlog":
            total = math.fsum(p.b for p in state.pipes)
            if total <= 0.0:
                return _equal_split(n), True
            return Allocation(tuple(p.b / total for p in state.pipes)), False
        if self.kind == "prop-intensity":
            total = math.fsum(p.a for p in state.pipes)
            if total <= 0.0:
                return _equal_split(n), True
            return Allocation(tuple(p.a / total for p in state.pipes)), False
        try:
            res = solve_for_state(state, _SOLVER_POLICIES[self.kind])
        except (InfeasibleError, DomainError):
            return _equal_split(n), True
        return Allocation(res.w), False


def _equal_split(n: int) -> Allocation:
    return Allocation((1.0 / n,) * n)


# ---------------------------------------------------------------------------
# Simulation


@dataclass(frozen=True)
class PipeEpochMetrics:
    """Realized and predicted per-pipe quantities for one epoch."""

    pipe: int
    w: float
    intensity_estimate: float
    b_start: float
    b_end: float
    inflow: float
    served: float
    predicted_case: str
    predicted_delay: float
    predicted_drops_paper: float
    predicted_drops_const: float
    realized_delay: float
    realized_drops: float


@dataclass(frozen=True)
class EpochReport:
    epoch: int
    policy: str
    fallback: bool
    pipes: tuple[PipeEpochMetrics, ...]


@dataclass(frozen=True)
class PolicySummary:
    """Aggregate outcome of one policy over a whole simulation."""

    policy: str
    sum_mean_delays: float
    total_dropped: float
    fallbacks: int
    reports: tuple[EpochReport, ...]


def _integrate_step(
    b0: float, rate: float, w: float, dt: float, m: float
) -> tuple[float, float, float, float]:
    """Advance one bucket; returns (b_end, queue area, served, dropped).

    The trajectory within a bucket is linear until it saturates at m or
    drains to 0, after which it stays clamped, so the area under it (used
    for the exact delay integral) splits into at most two pieces.
    """
    net = rate - w
    x = b0 + net * dt
    if x > m:
        tau = (m - b0) / net
        area = 0.5 * (b0 + m) * tau + m * (dt - tau)
        return m, area, w * dt, x - m
    if x < 0.0:
        tau = b0 / (w - rate)
        return 0.0, 0.5 * b0 * tau, b0 + rate * dt, 0.0
    return x, 0.5 * (b0 + x) * dt, w * dt, 0.0


def run_simulation(
    state0: SystemState, trace: Trace, policy: Policy, epochs: int
) -> list[EpochReport]:
    """Run ``epochs`` policy periods of length t_upd against the trace.

    At each epoch start the arrival intensities are estimated as the
    previous epoch's empirical mean inflow rate (clamped to [0, 1]; the
    first epoch uses the declared intensities of ``state0``), the policy is
    invoked on the estimated state, and the queues are integrated exactly.
    Realized mean delay integrates queue/size over the epoch divided by the
    share; a pipe with zero share and any queued work reports an infinite
    delay.
    """
    t_upd, m = state0.t_upd, state0.m
    res = trace.resolution
    if epochs < 1:
        raise DomainError("need at least one epoch")
    if trace.n_pipes != state0.n:
        raise DomainError("trace pipe count differs from the state")
    if res > t_upd / 10.0 + 1e-12:
        raise DomainError("trace resolution must be at most t_upd / 10")
    steps = t_upd / res
    steps_int = round(steps)
    if steps_int < 1 or abs(steps - steps_int) > 1e-9:
        raise DomainError("t_upd must be a whole number of trace buckets")
    if epochs * steps_int > trace.n_buckets:
        raise DomainError(
            f"trace covers {trace.duration:g}s but {epochs} epochs need "
            f"{epochs * t_upd:g}s"
        )

    n = state0.n
    b = np.array([p.b for p in state0.pipes], dtype=float)
    estimate = np.array([p.a for p in state0.pipes], dtype=float)
    reports: list[EpochReport] = []
    for e in range(epochs):
        est_state = SystemState(
            pipes=tuple(PipeState(float(estimate[i]), float(b[i])) for i in range(n)),
            t_upd=t_upd,
            m=m,
        )
        alloc, fallback = policy.allocate(est_state)
        w = alloc.w

        predictions = [
            predict(est_state.pipes[i], w[i], t_upd, m) for i in range(n)
        ]
        pred_const = [
            dropped_volume_constant_rate(est_state.pipes[i], w[i], t_upd, m)
            for i in range(n)
        ]

        b_start = b.copy()
        area = np.zeros(n)
        served = np.zeros(n)
        dropped = np.zeros(n)
        inflow = np.zeros(n)
        base = e * steps_int
        for k in range(steps_int):
            bucket = trace.rates[base + k]
            for i in range(n):
                b[i], da, ds, dd = _integrate_step(b[i], bucket[i], w[i], res, m)
                area[i] += da
                served[i] += ds
                dropped[i] += dd
                inflow[i] += bucket[i] * res

        metrics = []
        for i in range(n):
            if w[i] > 0.0:
                delay = area[i] / (w[i] * t_upd)
            else:
                delay = 0.0 if area[i] == 0.0 else math.inf
            metrics.append(
                PipeEpochMetrics(
                    pipe=i,
                    w=w[i],
                    intensity_estimate=float(estimate[i]),
                    b_start=float(b_start[i]),
                    b_end=float(b[i]),
                    inflow=float(inflow[i]),
                    served=float(served[i]),
                    predicted_case=predictions[i].case.value,
                    predicted_delay=predictions[i].mean_delay,
                    predicted_drops_paper=predictions[i].dropped,
                    predicted_drops_const=pred_const[i],
                    realized_delay=delay,
                    realized_drops=float(dropped[i]),
                )
            )
        reports.append(
            EpochReport(epoch=e, policy=policy.kind, fallback=fallback, pipes=tuple(metrics))
        )
        estimate = np.clip(inflow / t_upd, 0.0, 1.0)
    return reports


def compare_policies(
    state0: SystemState, trace: Trace, policies, epochs: int
) -> list[PolicySummary]:
    """Run each policy against the identical trace and aggregate outcomes."""
    summaries = []
    for policy in policies:
        reports = run_simulation(state0, trace, policy, epochs)
        total_delay = math.fsum(p.realized_delay for r in reports for p in r.pipes)
        total_drops = math.fsum(p.realized_drops for r in reports for p in r.pipes)
        fallbacks = sum(1 for r in reports if r.fallback)
        summaries.append(
            PolicySummary(
                policy=policy.kind,
                sum_mean_delays=total_delay,
                total_dropped=total_drops,
                fallbacks=fallbacks,
                reports=tuple(reports),
            )
        )
    return summaries
