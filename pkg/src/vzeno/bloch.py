"""Exact ensemble dynamics through a pulse schedule.

The master equation rho_dot = -(M rho + rho M^dag) + (a2 rho22 + a3 rho33)|1><1|
is linear with a piecewise-constant generator, so each segment is propagated
by one matrix exponential instead of ODE stepping.  The canonical parameter
set is stiff (a3 * t_pi ~ 3e7) and a schedule reuses only two segment kinds,
so the per-kind exponentials are cached and the whole run costs O(n) small
matrix-vector products.

Trace preservation is kept exact in floating point by propagating in a
permuted basis whose first coordinate is tr(rho): a trace-preserving
generator has an exactly zero first row there, which scaling-and-squaring
cannot pollute.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg3 import (Expm9NormError, expm9, propagator_plan, unvec9,
                      validate_density, vec9)
from .pulses import PulseSchedule, Segment, segments
from .vsystem import VParams, liouvillian, reduced_operator

TRACE_TOL = 1e-8        # drift beyond this aborts a run
HERM_TOL = 1e-8
EIG_FLOOR = -1e-8       # most negative admissible density eigenvalue

GROUND_DM = np.diag([1.0, 0.0, 0.0]).astype(complex)

# Basis change y = T vec(rho) with y[0] = tr(rho); the remaining coordinates
# are rho22, rho33 and the six off-diagonal entries.  T and its inverse are
# integer matrices, so the round trip is exact.
_T = np.zeros((9, 9))
_pos = lambda i, j: 3 * j + i
_T[0, _pos(0, 0)] = _T[0, _pos(1, 1)] = _T[0, _pos(2, 2)] = 1.0
for _r, (_i, _j) in enumerate(
        [(1, 1), (2, 2), (0, 1), (1, 0), (0, 2), (2, 0), (1, 2), (2, 1)], start=1):
    _T[_r, _pos(_i, _j)] = 1.0
_TINV = np.linalg.inv(_T)
assert np.array_equal(_TINV, np.round(_TINV))


class BlochInvariantError(RuntimeError):
    """A propagated density matrix broke trace/Hermiticity/positivity tolerances."""


def _generator_y(l: np.ndarray) -> np.ndarray:
    """Similarity-transform L into the trace-first basis.

    When L preserves the trace its first row is zero there up to round-off;
    that row is then zeroed exactly so repeated squaring and segment
    products conserve y[0] bit for bit.
    """
    ly = _T @ np.asarray(l, dtype=complex) @ _TINV
    row0 = np.abs(ly[0]).max()
    if row0 <= 1e-12 * max(np.abs(ly).max(), 1e-300):
        ly[0] = 0.0
    return ly


def _expm9_subdivided(l: np.ndarray, dt: float) -> tuple[np.ndarray, int]:
    """exp(L dt) with dt halved until expm9 accepts it; returns (E_sub, 2^k applications)."""
    halvings = 0
    while True:
        try:
            return expm9(l, dt / 2**halvings), 2**halvings
        except Expm9NormError:
            halvings += 1
            if halvings > 60:
                raise
            if 2**halvings > 2**20:
                raise Expm9NormError(
                    "generator norm requires more than 2^20 sub-steps; aborting")


# scaling-and-squaring needs log2(|L dt|) squarings, each of which can double
# round-off in the non-decaying directions; above this norm an eigenbasis
# exponential is attempted first (exact for the diagonal factor)
_SQUARING_NORM_LIMIT = 1024.0


def _segment_propagator(ly: np.ndarray, dt: float) -> tuple[np.ndarray, int]:
    """exp(L dt) for one segment; returns (matrix, applications-per-step)."""
    nrm = np.linalg.norm(ly, 1) * dt
    if nrm <= _SQUARING_NORM_LIMIT:
        return expm9(ly, dt), 1
    zero_row = bool(np.all(ly[0] == 0.0))
    try:
        w, v = np.linalg.eig(ly)
        full = (v * np.exp(w * dt)) @ np.linalg.inv(v)
        half = (v * np.exp(w * 0.5 * dt)) @ np.linalg.inv(v)
        scale = max(np.abs(full).max(), 1e-300)
        if np.abs(half @ half - full).max() <= 1e-12 * scale:
            if zero_row:
                full[0] = 0.0
                full[0, 0] = 1.0
            return full, 1
    except np.linalg.LinAlgError:
        pass
    return _expm9_subdivided(ly, dt)


def propagate_segment(l: np.ndarray, dt: float, rho: np.ndarray) -> np.ndarray:
    """Advance rho by the constant generator L for a time dt."""
    if dt < 0.0:
        raise ValueError(f"dt must be >= 0, got {dt!r}")
    if dt == 0.0:
        return np.asarray(rho, dtype=complex).copy()
    ly = _generator_y(l)
    e, napply = _segment_propagator(ly, float(dt))
    y = _T @ vec9(rho)
    for _ in range(napply):
        y = e @ y
    return unvec9(_TINV @ y)


@dataclass
class Trace:
    """Time-ordered density-matrix samples along a run."""

    times: np.ndarray            # (m,) strictly increasing, starts at 0
    rhos: np.ndarray             # (m, 3, 3)

    @property
    def final(self) -> np.ndarray:
        return self.rhos[-1]

    @property
    def final_populations(self) -> np.ndarray:
        return np.diagonal(self.final).real.copy()


def _check_invariants(rho: np.ndarray, t: float) -> None:
    tr_err = abs(np.trace(rho).real - 1.0) + abs(np.trace(rho).imag)
    if tr_err > TRACE_TOL:
        raise BlochInvariantError(f"trace drift {tr_err:.3e} at t = {t:g}")
    herm = np.abs(rho - rho.conj().T).max()
    if herm > HERM_TOL:
        raise BlochInvariantError(f"Hermiticity loss {herm:.3e} at t = {t:g}")
    evals = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    if evals.min() < EIG_FLOOR:
        raise BlochInvariantError(f"negative population {evals.min():.3e} at t = {t:g}")


def run_schedule(p: VParams, s: PulseSchedule,
                 rho0: np.ndarray | None = None,
                 sample_dt: float | None = None,
                 settle: bool = False) -> Trace:
    """Propagate rho0 (default: ground state) through all segments of s.

    Samples are recorded at every segment boundary, optionally every
    sample_dt inside segments.  ``settle`` appends a lasers-off interval of
    20/a3 after t_pi so the residual level-3 population can drain; the
    default readout is exactly at t_pi, residual included.
    """
    rho = GROUND_DM.copy() if rho0 is None else validate_density(rho0)
    segs = list(segments(s))
    if settle:
        if p.a3 <= 0.0:
            raise ValueError("settle interval undefined for a3 = 0")
        segs.append(Segment(20.0 / p.a3, probe_on=False, pi_on=False))

    # exponential cache per segment kind (durations repeat across the schedule)
    cache: dict[tuple[bool, bool, float], tuple[np.ndarray, int]] = {}

    times = [0.0]
    rhos = [rho.copy()]
    t = 0.0
    y = _T @ vec9(rho)
    for seg in segs:
        key = (seg.probe_on, seg.pi_on, seg.duration)
        if key not in cache:
            ly = _generator_y(liouvillian(p.with_lasers(seg.probe_on, seg.pi_on)))
            cache[key] = _segment_propagator(ly, seg.duration)
        e, napply = cache[key]
        if sample_dt is not None and 0.0 < sample_dt < seg.duration:
            nsub = int(np.ceil(seg.duration / sample_dt))
            subkey = key + ("sub", nsub)
            if subkey not in cache:
                ly = _generator_y(liouvillian(p.with_lasers(seg.probe_on, seg.pi_on)))
                cache[subkey] = _segment_propagator(ly, seg.duration / nsub)
            esub, ksub = cache[subkey]
            for i in range(nsub):
                for _ in range(ksub):
                    y = esub @ y
                times.append(t + seg.duration * (i + 1) / nsub)
                rhos.append(unvec9(_TINV @ y))
        else:
            for _ in range(napply):
                y = e @ y
            times.append(t + seg.duration)
            rhos.append(unvec9(_TINV @ y))
        t += seg.duration
        _check_invariants(rhos[-1], t)
    return Trace(times=np.array(times), rhos=np.array(rhos))


def no_emission_branch(p: VParams, dt: float, rho: np.ndarray) -> tuple[np.ndarray, float]:
    """Unnormalized no-photon branch exp(-M dt) rho exp(-M^dag dt) and its weight."""
    rho = np.asarray(rho, dtype=complex)
    e = propagator_plan(reduced_operator(p)).matrix(float(dt))
    out = e @ rho @ e.conj().T
    return out, float(np.trace(out).real)


def renewal_reconstruct(p: VParams, t: float, rho0: np.ndarray,
                        quad_steps: int = 20000) -> np.ndarray:
    """Rebuild rho(t) from the no-photon branch plus the emission integral.

    rho(t) = rho0_branch(t; rho0) + int_0^t I(tau) rho0_branch(t - tau; |1>) dtau
    with I(tau) = a2 rho22(tau) + a3 rho33(tau) taken from the full ensemble
    solution; the integral uses composite Simpson with quad_steps panels.
    """
    rho0 = validate_density(rho0)
    m = quad_steps + (quad_steps % 2)       # Simpson needs an even panel count
    h = float(t) / m

    # full Bloch solution on the quadrature grid (one cached sub-exponential)
    ly = _generator_y(liouvillian(p))
    e, napply = _segment_propagator(ly, h)
    y = _T @ vec9(rho0)
    intensity = np.empty(m + 1)
    tr_rho = _TINV @ y
    intensity[0] = p.a2 * unvec9(tr_rho)[1, 1].real + p.a3 * unvec9(tr_rho)[2, 2].real
    for j in range(1, m + 1):
        for _ in range(napply):
            y = e @ y
        r = unvec9(_TINV @ y)
        intensity[j] = p.a2 * r[1, 1].real + p.a3 * r[2, 2].real

    # no-photon branch from the ground state on the same grid, phi = exp(-M s)|1>
    plan = propagator_plan(reduced_operator(p))
    ss = float(t) - h * np.arange(m + 1)    # s_j = t - tau_j
    phi = plan.action_grid(ss, np.array([1.0, 0.0, 0.0], dtype=complex))
    branch = np.einsum("ti,tj->tij", phi, phi.conj())

    w = np.ones(m + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    integral = np.einsum("t,tij->ij", w * intensity, branch) * (h / 3.0)

    e0 = plan.matrix(float(t))
    return e0 @ rho0 @ e0.conj().T + integral


def rho_tilde_exact(p: VParams, s: PulseSchedule, quad_steps: int = 20000) -> np.ndarray:
    """Emitting-subensemble state from the exact probe-window integrals.

    rho_tilde_{12/22} = a3 omega3^2/(a3^2 + 2 omega3^2) *
                        int_0^tau_p rho0(tau; |1>)_{12/22} dtau,
    the 3-row/column vanishes, rho11 completes the trace.  The probe-window
    generator follows the schedule mode (pi pulse on or off).
    """
    pw = p.with_lasers(probe_on=True, pi_on=s.mode == "simultaneous")
    plan = propagator_plan(reduced_operator(pw))
    m = quad_steps + (quad_steps % 2)
    taus = np.linspace(0.0, s.tau_p, m + 1)
    phi = plan.action_grid(taus, np.array([1.0, 0.0, 0.0], dtype=complex))
    w = np.ones(m + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    h = s.tau_p / m
    int12 = np.sum(w * phi[:, 0] * phi[:, 1].conj()) * h / 3.0
    int22 = np.sum(w * np.abs(phi[:, 1])**2) * h / 3.0
    pref = p.a3 * p.omega3**2 / (p.a3**2 + 2.0 * p.omega3**2)
    out = np.zeros((3, 3), dtype=complex)
    out[0, 1] = pref * int12
    out[1, 0] = np.conj(out[0, 1])
    out[1, 1] = pref * int22
    out[0, 0] = 1.0 - out[1, 1]
    return out
