"""Conditional no-photon quantities for a single probe pulse.

The probability that an atom in state psi emits no photon up to time t is
P0(t) = |exp(-M t) psi|^2, and the waiting-time density of the first photon
is w1 = -dP0/dt.  Because M + M^dag = diag(0, a2, a3), the derivative has
the closed form w1 = a2 |phi_2|^2 + a3 |phi_3|^2 with phi = exp(-M t) psi,
which is what makes fast inverse-transform sampling possible downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg3 import PropagatorPlan, propagator_plan, validate_density
from .vsystem import VParams, probe_only_operator

GROUND = np.array([1.0, 0.0, 0.0], dtype=complex)


def p0_state(m: np.ndarray, t: float, psi: np.ndarray,
             plan: PropagatorPlan | None = None) -> float:
    """No-photon probability |exp(-M t) psi|^2 for a pure state."""
    if plan is None:
        plan = propagator_plan(m)
    phi = plan.action(float(t), np.asarray(psi, dtype=complex))
    return float(np.vdot(phi, phi).real)


def p0_density(m: np.ndarray, t: float, rho: np.ndarray) -> float:
    """No-photon probability tr{exp(-M t) rho exp(-M^dag t)} for a mixed state."""
    rho = validate_density(rho)
    plan = propagator_plan(m)
    e = plan.matrix(float(t))
    return float(np.trace(e @ rho @ e.conj().T).real)


def w1(m: np.ndarray, t: float, psi: np.ndarray,
       plan: PropagatorPlan | None = None) -> float:
    """First-photon density <phi|(M + M^dag)|phi>, phi = exp(-M t) psi.

    Algebraically equal to -dP0/dt; evaluated without differentiation.
    """
    m = np.asarray(m, dtype=complex)
    if plan is None:
        plan = propagator_plan(m)
    phi = plan.action(float(t), np.asarray(psi, dtype=complex))
    a2 = 2.0 * m[1, 1].real
    a3 = 2.0 * m[2, 2].real
    return float(a2 * abs(phi[1])**2 + a3 * abs(phi[2])**2)


@dataclass(frozen=True)
class NoPhotonCurve:
    """Sampled P0 on a time grid with the closed-form evaluator attached."""

    times: np.ndarray
    values: np.ndarray
    plan: PropagatorPlan
    psi: np.ndarray

    def __call__(self, t):
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        phi = self.plan.action_grid(ts, self.psi)
        p = np.einsum("ti,ti->t", phi.conj(), phi).real
        return p if np.ndim(t) else float(p[0])


def no_photon_curve(m: np.ndarray, psi: np.ndarray, horizon: float,
                    num: int = 512) -> NoPhotonCurve:
    """Tabulate P0 on [0, horizon] (monotone non-increasing by construction)."""
    plan = propagator_plan(m)
    ts = np.linspace(0.0, float(horizon), num)
    curve = NoPhotonCurve(ts, np.empty(num), plan, np.asarray(psi, dtype=complex))
    object.__setattr__(curve, "values", curve(ts))
    return curve


def photon_rate(p: VParams) -> float:
    """Steady-state emission rate a3*omega3^2/(a3^2 + 2*omega3^2) of a probed atom."""
    return p.a3 * p.omega3**2 / (p.a3**2 + 2.0 * p.omega3**2)


def photon_number(p: VParams, tau: float, psi: np.ndarray) -> float:
    """Expected photons per atom in a probe of length tau, N = |psi_1|^2 * rate * tau."""
    if p.omega2 != 0.0:
        raise ValueError("photon_number applies to the probe-only regime (omega2 = 0)")
    alpha1_sq = abs(complex(psi[0]))**2
    return alpha1_sq * photon_rate(p) * tau


def nonreduced_norm(p: VParams, n_photons: float, alpha1: float) -> float:
    """Norm of the ground-state remnant in the no-photon branch.

    The probe length is eliminated in favour of the expected photon yield:
    tau_p = (a3^2 + 2 omega3^2)/(a3 omega3^2) * N / alpha1^2, and the
    remnant is |alpha1 * exp(-M0 tau_p) |1>| (full three-component norm).
    """
    if not (0.0 < alpha1 <= 1.0):
        raise ValueError(f"alpha1 must lie in (0, 1], got {alpha1!r}")
    if n_photons <= 0.0:
        raise ValueError(f"n_photons must be positive, got {n_photons!r}")
    tau_p = n_photons / (alpha1**2 * photon_rate(p))
    m0 = probe_only_operator(p)
    phi = propagator_plan(m0).action(tau_p, GROUND)
    return float(alpha1 * np.linalg.norm(phi))


@dataclass(frozen=True)
class Table1Cell:
    n_photons: float
    ratio: float          # omega3 / a3
    max_norm: float       # worst remnant over the initial superposition
    argmax_alpha1: float
    bound: float          # 1.04 * exp(-N/2)


def _max_over_alpha1(p: VParams, n_photons: float) -> tuple[float, float]:
    # coarse scan on an alpha1^2 grid, then golden-section refinement
    a1sq = np.arange(1, 1001) / 1000.0
    vals = [nonreduced_norm(p, n_photons, float(np.sqrt(x))) for x in a1sq]
    i = int(np.argmax(vals))
    lo = np.sqrt(a1sq[max(i - 1, 0)])
    hi = np.sqrt(a1sq[min(i + 1, len(a1sq) - 1)])
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    c = hi - invphi * (hi - lo)
    d = lo + invphi * (hi - lo)
    fc = nonreduced_norm(p, n_photons, float(c))
    fd = nonreduced_norm(p, n_photons, float(d))
    for _ in range(40):
        if fc > fd:
            hi, d, fd = d, c, fc
            c = hi - invphi * (hi - lo)
            fc = nonreduced_norm(p, n_photons, float(c))
        else:
            lo, c, fc = c, d, fd
            d = lo + invphi * (hi - lo)
            fd = nonreduced_norm(p, n_photons, float(d))
    best = 0.5 * (lo + hi)
    fbest = nonreduced_norm(p, n_photons, float(best))
    candidates = [(vals[i], np.sqrt(a1sq[i])), (fbest, best),
                  (vals[-1], 1.0)]
    fmax, amax = max(candidates, key=lambda t: t[0])
    return float(fmax), float(amax)


def table1(ratios, counts) -> list[Table1Cell]:
    """Worst-case no-photon remnant for each (omega3/a3, photon count) pair.

    The maximum over the initial superposition is located numerically even
    though it always sits at alpha1 = 1 (the full norm of exp(-M0 t)|1> is
    non-increasing in t); the argmax is recorded so that claim stays checked.
    """
    cells = []
    for ratio in ratios:
        if ratio <= 0.0:
            raise ValueError(f"omega3/a3 ratio must be positive, got {ratio!r}")
        p = VParams(omega2=0.0, omega3=float(ratio), a2=0.0, a3=1.0)
        for n_ph in counts:
            if n_ph < 2:
                raise ValueError(f"photon counts below 2 are outside the bound regime, got {n_ph!r}")
            mx, amax = _max_over_alpha1(p, float(n_ph))
            cells.append(Table1Cell(n_photons=float(n_ph), ratio=float(ratio),
                                    max_norm=mx, argmax_alpha1=amax,
                                    bound=float(1.04 * np.exp(-0.5 * n_ph))))
    return cells
