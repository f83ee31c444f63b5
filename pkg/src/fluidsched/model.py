"""Single-pipe fluid predictions over one scheduling horizon.

A pipe is a FIFO queue fed by a fluid arrival stream of intensity ``a``
(a fraction of the unit processor capacity) that starts the horizon with
backlog ``b``. Given a capacity share ``w`` held fixed for the next
``t_upd`` seconds and a buffer bound ``m``, the unclamped queue trajectory
is the line ``b + (a - w) t``; clamping it to ``[0, m]`` yields the actual
forecast. Everything observable over the horizon (case label, mean delay,
dropped volume) then has a closed form.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional


class DomainError(ValueError):
    """An argument violates a model invariant (b > m, t_upd <= 0, ...)."""


class BehaviorCase(enum.Enum):
    """How a queue behaves over one horizon under a fixed capacity share."""

    OVERFILLS = "overfills"  # queue hits the buffer cap before the horizon ends
    CONFINED = "confined"    # trajectory stays inside [0, m] the whole horizon
    NULLIFIES = "nullifies"  # queue drains to zero before the horizon ends


@dataclass(frozen=True)
class PipeState:
    """Local parameters of one pipe at decision time.

    a: arrival intensity, a dimensionless rate in [0, 1]
    b: initial backlog in data units, >= 0 (<= buffer size, checked by
       SystemState or by the per-operation guards)
    """

    a: float
    b: float

    def __post_init__(self):
        if not (0.0 <= self.a <= 1.0):
            raise DomainError(f"arrival intensity must be in [0, 1], got {self.a}")
        if not self.b >= 0.0:
            raise DomainError(f"backlog must be >= 0, got {self.b}")


@dataclass(frozen=True)
class SystemState:
    """N pipes plus the shared horizon length and buffer size."""

    pipes: tuple[PipeState, ...]
    t_upd: float
    m: float

    def __post_init__(self):
        object.__setattr__(self, "pipes", tuple(self.pipes))
        if len(self.pipes) < 1:
            raise DomainError("a system needs at least one pipe")
        if not self.t_upd > 0.0:
            raise DomainError(f"horizon t_upd must be > 0, got {self.t_upd}")
        if not self.m > 0.0:
            raise DomainError(f"buffer size m must be > 0, got {self.m}")
        for i, p in enumerate(self.pipes):
            if p.b > self.m:
                raise DomainError(
                    f"pipe {i}: backlog {p.b} exceeds buffer size {self.m}"
                )

    @property
    def n(self) -> int:
        return len(self.pipes)


SIMPLEX_TOL = 1e-9


@dataclass(frozen=True)
class Allocation:
    """A division of the unit processor capacity: a point on the N-simplex."""

    w: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "w", tuple(float(x) for x in self.w))
        if any(x < 0.0 for x in self.w):
            raise DomainError(f"allocation has negative component: {self.w}")
        total = math.fsum(self.w)
        if abs(total - 1.0) > SIMPLEX_TOL:
            raise DomainError(f"allocation sums to {total!r}, expected 1")

    def __len__(self) -> int:
        return len(self.w)

    def __getitem__(self, i: int) -> float:
        return self.w[i]


@dataclass(frozen=True)
class PipePrediction:
    """Everything the fluid model forecasts for one pipe under one share.

    crossing_time is the moment the trajectory saturates the buffer
    (overfill case) or empties the queue (nullify case); absent when the
    trajectory stays confined.
    """

    case: BehaviorCase
    w_star: float
    w_prime: float
    mean_delay: float
    dropped: float
    crossing_time: Optional[float] = None


def _check_horizon(pipe: PipeState, t_upd: float, m: float) -> None:
    if not t_upd > 0.0:
        raise DomainError(f"horizon t_upd must be > 0, got {t_upd}")
    if not m > 0.0:
        raise DomainError(f"buffer size m must be > 0, got {m}")
    if pipe.b > m:
        raise DomainError(f"backlog {pipe.b} exceeds buffer size {m}")


def _check_share(w: float) -> None:
    if not (0.0 <= w <= 1.0):
        raise DomainError(f"capacity share must be in [0, 1], got {w}")


def thresholds(pipe: PipeState, t_upd: float, m: float) -> tuple[float, float]:
    """Case thresholds (w_star, w_prime) for one pipe.

    Shares below w_star overfill the buffer within the horizon; shares
    above w_prime drain the queue before the horizon ends. w_star may be
    negative, which marks a pipe that cannot overfill under any share.
    w_star < w_prime always (their gap is m / t_upd).
    """
    _check_horizon(pipe, t_upd, m)
    w_star = pipe.a - (m - pipe.b) / t_upd
    w_prime = pipe.a + pipe.b / t_upd
    return w_star, w_prime


def classify(pipe: PipeState, w: float, t_upd: float, m: float) -> BehaviorCase:
    """Label the queue behavior under share ``w``.

    Both thresholds belong to the confined case: the adjacent closed forms
    agree there, so the boundary label is a convention.
    """
    _check_share(w)
    w_star, w_prime = thresholds(pipe, t_upd, m)
    if w < w_star:
        return BehaviorCase.OVERFILLS
    if w > w_prime:
        return BehaviorCase.NULLIFIES
    return BehaviorCase.CONFINED


def predicted_queue_size(
    pipe: PipeState, w: float, t: float, t_upd: float, m: float
) -> float:
    """Forecast queue size at time ``t``: the line b + (a - w) t clamped to [0, m].

    Because the unclamped trajectory is monotone, the clamp also captures
    saturation: past the buffer crossing the size stays at m (the excess is
    dropped), and past the drain point it stays at 0.
    """
    _check_horizon(pipe, t_upd, m)
    _check_share(w)
    if not (0.0 <= t <= t_upd):
        raise DomainError(f"time {t} outside horizon [0, {t_upd}]")
    return min(max(pipe.b + (pipe.a - w) * t, 0.0), m)


def mean_local_delay(pipe: PipeState, w: float, t_upd: float, m: float) -> float:
    """Time-averaged predicted delay of this pipe over the horizon.

    The delay at time t is the time needed to serve the current queue at
    rate w, i.e. the core line ((a - w)/w) t + b/w confined to [0, m/w];
    this returns its average over [0, t_upd], evaluated in closed form per
    behavior case.

    A share of zero with work present (a > 0 or b > 0) yields ``math.inf``
    as a distinguished value rather than an error; an idle empty pipe at
    w = 0 has zero delay.
    """
    _check_horizon(pipe, t_upd, m)
    _check_share(w)
    a, b = pipe.a, pipe.b
    if w == 0.0:
        return 0.0 if (a == 0.0 and b == 0.0) else math.inf
    case = classify(pipe, w, t_upd, m)
    if case is BehaviorCase.OVERFILLS:
        return m / w - (m - b) ** 2 / (2.0 * w * (a - w) * t_upd)
    if case is BehaviorCase.NULLIFIES:
        return b * b / (2.0 * w * (w - a) * t_upd)
    return (a * t_upd / 2.0 + b) / w - t_upd / 2.0


def dropped_volume(pipe: PipeState, w: float, t_upd: float, m: float) -> float:
    """Data volume predicted to be dropped over the horizon.

    Zero unless the share overfills the buffer. In the overfill case the
    forecast charges the post-saturation window with a linearly growing
    loss rate, which integrates to (a - w) (t_upd - t*)^2 / 2 where t* is
    the saturation time; see the simulator for the constant-rate variant.
    """
    _check_horizon(pipe, t_upd, m)
    _check_share(w)
    if classify(pipe, w, t_upd, m) is not BehaviorCase.OVERFILLS:
        return 0.0
    a, b = pipe.a, pipe.b
    return (
        t_upd * t_upd / 2.0 * (a - w)
        + (m - b) ** 2 / (2.0 * (a - w))
        - (m - b) * t_upd
    )


def dropped_volume_constant_rate(
    pipe: PipeState, w: float, t_upd: float, m: float
) -> float:
    """Drop forecast with a constant overflow rate (a - w) after saturation.

    This is the mass-conserving variant: once the buffer is full, fluid
    arrives at rate a and leaves at rate w, so exactly (a - w)(t_upd - t*)
    spills. Reported by the simulator alongside the growing-rate forecast.
    """
    _check_horizon(pipe, t_upd, m)
    _check_share(w)
    if classify(pipe, w, t_upd, m) is not BehaviorCase.OVERFILLS:
        return 0.0
    a, b = pipe.a, pipe.b
    t_cross = (m - b) / (a - w)
    return (a - w) * (t_upd - t_cross)


def predict(pipe: PipeState, w: float, t_upd: float, m: float) -> PipePrediction:
    """Full per-pipe forecast: case, thresholds, mean delay, drops, crossing."""
    w_star, w_prime = thresholds(pipe, t_upd, m)
    case = classify(pipe, w, t_upd, m)
    crossing: Optional[float] = None
    if case is BehaviorCase.OVERFILLS:
        crossing = (m - pipe.b) / (pipe.a - w)
    elif case is BehaviorCase.NULLIFIES:
        crossing = pipe.b / (w - pipe.a)
    return PipePrediction(
        case=case,
        w_star=w_star,
        w_prime=w_prime,
        mean_delay=mean_local_delay(pipe, w, t_upd, m),
        dropped=dropped_volume(pipe, w, t_upd, m),
        crossing_time=crossing,
    )
