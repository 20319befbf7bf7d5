"""Linear transverse-field ramps ``h(t) = h_start - rate * t``."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

_EPS = 1e-12


class Step(NamedTuple):
    index: int
    t: float        # time at step start
    dt: float
    h_mid: float    # field at the step midpoint (gate/field evaluation point)
    h_after: float  # field at the end of the step
    measure: bool
    checkpoint: bool


@dataclass(frozen=True)
class SweepSchedule:
    """Ramp from ``h_start`` down to ``h_end`` at ``rate = |dh/dt|``.

    Steps have length ``dt`` except the last one of each segment, which is
    shortened so the field lands exactly on ``h_end`` (or on a checkpoint).
    ``checkpoints`` are intermediate fields where the step grid is clamped and
    a full measurement is taken; the grid restarts after each of them, so the
    segment up to the first checkpoint is identical to a standalone run
    ending there.
    """

    rate: float
    h_start: float = 2.0
    h_end: float = 0.0
    dt: float = 0.1
    measurement_stride: int = 10
    observables: tuple = None
    checkpoints: tuple = ()

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("sweep rate must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.h_start > self.h_end:
            raise ValueError("h_start must exceed h_end (ramps run downwards)")
        if self.measurement_stride < 0:
            raise ValueError("measurement_stride must be >= 0")
        cps = tuple(sorted({float(c) for c in self.checkpoints}, reverse=True))
        if any(not self.h_end < c < self.h_start for c in cps):
            raise ValueError("checkpoints must lie strictly between h_end and h_start")
        object.__setattr__(self, "checkpoints", cps)

    @property
    def duration(self):
        return (self.h_start - self.h_end) / self.rate

    def field(self, t):
        return self.h_start - self.rate * t

    @property
    def targets(self):
        return self.checkpoints + (self.h_end,)

    def steps(self):
        out = []
        t_seg, h_seg = 0.0, self.h_start
        k = 0
        for target in self.targets:
            seg = (h_seg - target) / self.rate
            n = max(1, math.ceil(seg / self.dt - _EPS))
            for j in range(n):
                t0 = t_seg + j * self.dt
                dt = self.dt if j < n - 1 else seg - (n - 1) * self.dt
                last = j == n - 1
                h_after = target if last else self.field(t0 + dt)
                stride_hit = self.measurement_stride and (k + 1) % self.measurement_stride == 0
                out.append(Step(k, t0, dt, self.field(t0 + dt / 2), h_after,
                                bool(stride_hit or last), last))
                k += 1
            t_seg += seg
            h_seg = target
        return out

    @property
    def n_steps(self):
        return len(self.steps())
