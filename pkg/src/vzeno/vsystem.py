"""Physical model of the driven three-level V system.

Level 1 is the ground state; levels 2 and 3 couple to it with Rabi
frequencies omega2 (the slow "pi pulse" transition) and omega3 (the strong
probe transition).  Levels 2 and 3 decay back to 1 with Einstein
coefficients a2 and a3 (a2 = 0 for a metastable level 2).

The non-Hermitian operator M generates the conditional evolution of an atom
that has not emitted a photon, psi(t) = exp(-M t) psi(0); its anti-Hermitian
part carries the drive and its Hermitian part the decay:

    M = 1/2 [[0,      i omega2, i omega3],
             [i omega2,  a2,       0    ],
             [i omega3,  0,        a3   ]]

so that M + M^dag = diag(0, a2, a3) identically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .pulses import PulseSchedule


@dataclass(frozen=True)
class VParams:
    """Rabi frequencies and decay rates, all in the same inverse-time unit."""

    omega2: float
    omega3: float
    a2: float = 0.0
    a3: float = 0.0

    def __post_init__(self):
        for name in ("omega2", "omega3", "a2", "a3"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0.0:
                raise ValueError(f"{name} must be finite and >= 0, got {v!r}")

    def with_lasers(self, probe_on: bool, pi_on: bool) -> "VParams":
        """Copy with omega3 and/or omega2 switched off."""
        return replace(self,
                       omega2=self.omega2 if pi_on else 0.0,
                       omega3=self.omega3 if probe_on else 0.0)


@dataclass(frozen=True)
class Epsilons:
    """Dimensionless smallness parameters of the measurement regime.

    eps_p = a3*omega2/omega3^2, eps_r = omega2/omega3, eps_d = omega3^2/a3^2,
    linked by eps_r = eps_p * sqrt(eps_d).
    """

    eps_p: float
    eps_r: float
    eps_d: float


def reduced_operator(p: VParams) -> np.ndarray:
    """Generator M of the no-photon conditional evolution exp(-M t)."""
    return 0.5 * np.array(
        [[0.0, 1j * p.omega2, 1j * p.omega3],
         [1j * p.omega2, p.a2, 0.0],
         [1j * p.omega3, 0.0, p.a3]], dtype=complex)


def probe_only_operator(p: VParams) -> np.ndarray:
    """M with the pi-pulse laser off (omega2 = 0), the probe-window generator M0."""
    return reduced_operator(replace(p, omega2=0.0))


def pi_pulse_unitary(p: VParams, t: float) -> np.ndarray:
    """Drive-only unitary: rotation by omega2*t in the 1-2 subspace, identity on 3."""
    c = math.cos(0.5 * p.omega2 * t)
    s = math.sin(0.5 * p.omega2 * t)
    return np.array([[c, -1j * s, 0.0],
                     [-1j * s, c, 0.0],
                     [0.0, 0.0, 1.0]], dtype=complex)


def liouvillian(p: VParams) -> np.ndarray:
    """9x9 generator L of the ensemble master equation, vec(rho_dot) = L vec(rho).

    rho_dot = -(M rho + rho M^dag) + (a2 rho22 + a3 rho33) |1><1|.
    Column-stacking order as in linalg3.vec9.
    """
    m = reduced_operator(p)
    eye = np.eye(3, dtype=complex)
    l = -(np.kron(eye, m) + np.kron(m.conj(), eye))
    # spontaneous-emission feed into rho11: vec positions 4 (rho22) and 8 (rho33)
    l[0, 4] += p.a2
    l[0, 8] += p.a3
    return l


def epsilons(p: VParams) -> Epsilons:
    """Measurement-quality parameters; requires omega3 > 0 and a3 > 0."""
    if p.omega3 == 0.0 or p.a3 == 0.0:
        raise ValueError("epsilons undefined: omega3 and a3 must both be nonzero")
    return Epsilons(eps_p=p.a3 * p.omega2 / p.omega3**2,
                    eps_r=p.omega2 / p.omega3,
                    eps_d=p.omega3**2 / p.a3**2)


# --- validity-regime report -------------------------------------------------

PASS_RATIO = 0.01      # "much less than" holds comfortably
WARN_RATIO = 0.1       # holds, but with little margin


@dataclass(frozen=True)
class RegimeCondition:
    name: str
    detail: str
    value: float       # the ratio that must be << 1

    @property
    def grade(self) -> str:
        if self.value < PASS_RATIO:
            return "pass"
        if self.value < WARN_RATIO:
            return "warning"
        return "fail"

    @property
    def satisfied(self) -> bool:
        return self.grade != "fail"


@dataclass(frozen=True)
class RegimeReport:
    conditions: tuple[RegimeCondition, ...]

    @property
    def all_satisfied(self) -> bool:
        return all(c.satisfied for c in self.conditions)

    @property
    def all_pass(self) -> bool:
        return all(c.grade == "pass" for c in self.conditions)

    def __iter__(self):
        return iter(self.conditions)


def validate_regime(p: VParams, sched: "PulseSchedule") -> RegimeReport:
    """Grade every smallness condition the effective-measurement picture needs.

    Each condition is reported as the ratio that must be much less than one;
    ratio < 0.01 grades "pass", < 0.1 "warning", otherwise "fail".
    """
    inf = float("inf")
    gap = sched.t_pi / sched.n - sched.tau_p

    probe_short = sched.tau_p / sched.t_pi
    relax_fast = 1.0 / (p.a3 * gap) if p.a3 > 0.0 and gap > 0.0 else inf
    need = max(1.0 / p.a3, p.a3 / p.omega3**2) if p.a3 > 0.0 and p.omega3 > 0.0 else inf
    probe_long = need / sched.tau_p
    try:
        eps = epsilons(p)
        eps_p, eps_d = eps.eps_p, eps.eps_d
    except ValueError:
        eps_p = eps_d = inf

    return RegimeReport((
        RegimeCondition("probe_much_shorter_than_pi_pulse", "tau_p / T_pi", probe_short),
        RegimeCondition("decay_fast_between_probes", "1 / (a3 (T_pi/n - tau_p))", relax_fast),
        RegimeCondition("probe_long_enough_to_reduce", "max(1/a3, a3/omega3^2) / tau_p", probe_long),
        RegimeCondition("eps_p_small", "a3 omega2 / omega3^2", eps_p),
        RegimeCondition("eps_d_small", "omega3^2 / a3^2", eps_d),
    ))


# --- named presets ----------------------------------------------------------

@dataclass(frozen=True)
class Preset:
    """A parameter set plus the matching pulse timing (n is chosen per run)."""

    params: VParams
    t_pi: float
    tau_p: float
    description: str = ""


def _itano() -> Preset:
    # Dimensionless reconstruction of the trapped-ion experiment: T_pi = 1,
    # an exact pi pulse (omega2 = pi), eps_r = 6.5e-6 and eps_d = 2.5e-4,
    # probe length tau_p/T_pi = 0.009375.  Everything else follows from the
    # epsilon definitions: omega3 = omega2/eps_r, a3 = omega3/sqrt(eps_d).
    t_pi = 1.0
    omega2 = math.pi / t_pi
    omega3 = omega2 / 6.5e-6
    a3 = omega3 / math.sqrt(2.5e-4)
    return Preset(params=VParams(omega2=omega2, omega3=omega3, a2=0.0, a3=a3),
                  t_pi=t_pi, tau_p=0.009375 * t_pi,
                  description="trapped-ion run: 0.009375 T_pi probes, eps_p ~ 4.1e-4")


PRESETS = {"itano": _itano}


def preset(name: str) -> Preset:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; available: {sorted(PRESETS)}") from None
