"""Closed-form first-order results for probe pulses acting as measurements.

Working to first order in eps_p (with eps_d corrections dropped), a probe
pulse splits the ensemble into two subensembles:

  * no photons seen: a pure state lambda_tilde close to |2>,
  * at least one photon: a mixed state rho_tilde close to |1><1|.

Composing n such imperfect measurements with the pi-pulse rotation in
between gives a two-term recurrence for the no-photon weight beta(k) and,
at the end of the pi pulse, three closed-form predictions for the level-2
population: the ideal projection result, the "shortened rotation" result
that only keeps the finite probe duration, and the full first-order result
including the eps_p corrections.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .pulses import PulseSchedule
from .vsystem import Epsilons, VParams, epsilons


@dataclass(frozen=True)
class EffectiveMeasurement:
    """What a single probe pulse does to the atom, to first order."""

    lambda_tilde: np.ndarray   # (3,) normalized no-photon state
    rho_tilde: np.ndarray      # (3,3) emitting-subensemble density matrix
    eps: Epsilons
    tau_ratio: float           # tau_p / t_pi


@dataclass(frozen=True)
class ZenoPrediction:
    n: int
    rho22_ideal: float
    rho22_modified: float
    rho22_jump: float
    rho22_assembled: float     # from the subensemble mixture at t = t_pi
    beta: np.ndarray           # no-photon weights beta(1..n)


def lambda_approx(p: VParams) -> np.ndarray:
    """Leading-order eigenvalues [l1, l2, l3] of the reduced operator.

    l_{1,3} = (a3 +/- sqrt(a3^2 - 4 omega3^2))/4 as in the probe-only case;
    the slow mode picks up l2 = a3 omega2^2 / (2 omega3^2) from the drive.
    """
    root = np.sqrt(complex(p.a3**2 - 4.0 * p.omega3**2))
    l1 = 0.25 * (p.a3 + root)
    l3 = 0.25 * (p.a3 - root)
    l2 = complex(0.5 * p.a3 * p.omega2**2 / p.omega3**2) if p.omega3 > 0 else 0j
    return np.array([l1, l2, l3])


def effective_measurement(p: VParams, s: PulseSchedule) -> EffectiveMeasurement:
    """States of the two subensembles after one probe pulse (and its transient)."""
    eps = epsilons(p)
    ep = eps.eps_p
    tau_ratio = s.tau_p / s.t_pi
    lam = np.array([-1j * ep, 1.0, 0.0], dtype=complex) / math.sqrt(1.0 + ep * ep)
    rho = np.zeros((3, 3), dtype=complex)
    rho[1, 1] = math.pi * tau_ratio * ep
    rho[0, 0] = 1.0 - rho[1, 1]
    rho[0, 1] = 1j * ep
    rho[1, 0] = -1j * ep
    return EffectiveMeasurement(lambda_tilde=lam, rho_tilde=rho, eps=eps,
                                tau_ratio=tau_ratio)


def p0_probe(p: VParams, s: PulseSchedule, rho_in: np.ndarray) -> float:
    """First-order no-photon probability of a probe pulse on the state rho_in.

    P0 = rho22 + 2 eps_p Im rho12 - pi (tau_p/t_pi) eps_p rho22.
    """
    ep = epsilons(p).eps_p
    rho_in = np.asarray(rho_in, dtype=complex)
    r22 = rho_in[1, 1].real
    im12 = rho_in[0, 1].imag
    return float(r22 + 2.0 * ep * im12 - math.pi * (s.tau_p / s.t_pi) * ep * r22)


def post_probe_density(p: VParams, s: PulseSchedule, rho_in: np.ndarray) -> np.ndarray:
    """Full-ensemble state after the probe: P0 |lt><lt| + (1 - P0) rho_tilde.

    The 22 element of this mixture agrees with post_probe_rho22 to first
    order in eps_p; the residual is O(eps_p^2).
    """
    meas = effective_measurement(p, s)
    p0 = p0_probe(p, s, rho_in)
    lt = meas.lambda_tilde
    return p0 * np.outer(lt, lt.conj()) + (1.0 - p0) * meas.rho_tilde


def post_probe_rho22(p: VParams, s: PulseSchedule, rho_in: np.ndarray) -> float:
    """Level-2 population after the probe, strictly to first order:

    rho22' = rho22 + 2 eps_p Im rho12 + pi (tau_p/t_pi) eps_p (1 - 2 rho22);
    the correction term vanishes identically at rho22 = 1/2.
    """
    ep = epsilons(p).eps_p
    rho_in = np.asarray(rho_in, dtype=complex)
    r22 = rho_in[1, 1].real
    return float(r22 + 2.0 * ep * rho_in[0, 1].imag
                 + math.pi * (s.tau_p / s.t_pi) * ep * (1.0 - 2.0 * r22))


def _sc(s: PulseSchedule) -> tuple[float, float]:
    """sin/cos of the drive angle pi*(1/n - tau_p/t_pi) between probe ends."""
    x = math.pi * (1.0 / s.n - s.tau_p / s.t_pi)
    return math.sin(x), math.cos(x)


def pq(p: VParams, s: PulseSchedule) -> tuple[float, float]:
    """No-photon probabilities of the next probe given the previous outcome.

    p: previous probe saw photons (state rho_tilde), q: it saw none
    (state lambda_tilde); both drift a drive interval of t_pi/n - tau_p
    before the next probe.  First order in eps_p.
    """
    ep = epsilons(p).eps_p
    tr = s.tau_p / s.t_pi
    sn, cn = _sc(s)
    p_coeff = (0.5 * (1.0 - cn) + 2.0 * sn * ep + math.pi * tr * cn * ep
               - 0.5 * math.pi * tr * (1.0 - cn) * ep)
    q_coeff = 0.5 * (1.0 + cn) - 2.0 * sn * ep - 0.5 * math.pi * tr * (1.0 + cn) * ep
    return p_coeff, q_coeff


def beta1(p: VParams, s: PulseSchedule) -> float:
    """No-photon probability of the first probe for ground-state preparation."""
    ep = epsilons(p).eps_p
    tr = s.tau_p / s.t_pi
    sn, cn = _sc(s)
    return 0.5 * (1.0 - cn) + sn * ep - 0.5 * math.pi * tr * (1.0 - cn) * ep


def beta_sequence(p: VParams, s: PulseSchedule) -> np.ndarray:
    """No-photon weights beta(1..n) from the recurrence beta(k) = p + (q-p) beta(k-1)."""
    pc, qc = pq(p, s)
    out = np.empty(s.n)
    out[0] = beta1(p, s)
    for k in range(1, s.n):
        out[k] = pc + (qc - pc) * out[k - 1]
    return out


def beta_closed(p: VParams, s: PulseSchedule, k: int) -> float:
    """Closed form of the recurrence: beta(k) = p (1-r^(k-1))/(1-r) + r^(k-1) beta(1)."""
    pc, qc = pq(p, s)
    r = qc - pc
    b1 = beta1(p, s)
    if r == 1.0:
        return pc * (k - 1) + b1
    return pc * (1.0 - r**(k - 1)) / (1.0 - r) + r**(k - 1) * b1


def rho22_ideal(n: int) -> float:
    """Projection-postulate result for n instantaneous ideal measurements."""
    return 0.5 * (1.0 - math.cos(math.pi / n)**n)


def rho22_modified(s: PulseSchedule) -> float:
    """Ideal-projection result with the drive shortened to t_pi/n - tau_p."""
    _, cn = _sc(s)
    return 0.5 * (1.0 - cn**s.n)


def rho22_jump(p: VParams, s: PulseSchedule) -> float:
    """First-order level-2 population at t_pi including the eps_p corrections."""
    ep = epsilons(p).eps_p
    sn, cn = _sc(s)
    n = s.n
    return (0.5 * (1.0 - cn**n) + (2 * n - 1) * sn * cn**(n - 1) * ep
            + math.pi * n * (s.tau_p / s.t_pi) * cn**n * ep)


def rho22_final(p: VParams, s: PulseSchedule) -> ZenoPrediction:
    """All three closed-form predictions plus the subensemble-mixture path."""
    beta = beta_sequence(p, s)
    meas = effective_measurement(p, s)
    alpha_n = 1.0 - beta[-1]
    lt2 = abs(meas.lambda_tilde[1])**2
    assembled = alpha_n * meas.rho_tilde[1, 1].real + beta[-1] * lt2
    return ZenoPrediction(n=s.n,
                          rho22_ideal=rho22_ideal(s.n),
                          rho22_modified=rho22_modified(s),
                          rho22_jump=rho22_jump(p, s),
                          rho22_assembled=float(assembled),
                          beta=beta)
