"""Timing grid of the experiment.

One pi pulse of duration t_pi contains n probe windows of length tau_p.
Each window sits at the end of its t_pi/n interval, so window k closes at
k*t_pi/n and the final probe ends exactly when the pi pulse does.  In
"simultaneous" mode the pi-pulse laser stays on during the probes; in
"intermittent" mode it is switched off while a probe is on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

MODES = ("simultaneous", "intermittent")


@dataclass(frozen=True)
class PulseSchedule:
    t_pi: float
    n: int
    tau_p: float
    mode: str = "simultaneous"
    probe_at_end: bool = True   # False places each window at the interval start

    def __post_init__(self):
        if not (math.isfinite(self.t_pi) and self.t_pi > 0.0):
            raise ValueError(f"t_pi must be positive, got {self.t_pi!r}")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n!r}")
        if not (0.0 < self.tau_p < self.t_pi / self.n):
            raise ValueError(
                f"tau_p must lie in (0, t_pi/n) = (0, {self.t_pi / self.n:g}), got {self.tau_p!r}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")


@dataclass(frozen=True)
class Segment:
    duration: float
    probe_on: bool
    pi_on: bool


def segments(s: PulseSchedule) -> list[Segment]:
    """Piecewise-constant decomposition of the schedule: 2n alternating segments.

    Durations are taken as differences of the exact boundary grid
    k*t_pi/n -/+ tau_p so that they telescope to t_pi.
    """
    pi_during_probe = s.mode == "simultaneous"
    out: list[Segment] = []
    prev = 0.0
    for k in range(1, s.n + 1):
        interval_start = (k - 1) * s.t_pi / s.n
        interval_end = k * s.t_pi / s.n
        if s.probe_at_end:
            probe_start, probe_end = interval_end - s.tau_p, interval_end
        else:
            probe_start, probe_end = interval_start, interval_start + s.tau_p
        if probe_start > prev:
            out.append(Segment(probe_start - prev, probe_on=False, pi_on=True))
            prev = probe_start
        out.append(Segment(probe_end - prev, probe_on=True, pi_on=pi_during_probe))
        prev = probe_end
    if prev < s.t_pi:
        out.append(Segment(s.t_pi - prev, probe_on=False, pi_on=True))
    return out
