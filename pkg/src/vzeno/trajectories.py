"""Monte-Carlo quantum-jump simulation of single atoms.

Between photon emissions an atom evolves with the non-unitary exp(-M t); an
emission resets it to the ground state.  Waiting times are sampled exactly
by inverse transform on the closed-form no-photon probability: draw u in
(0,1), then the emission time is the unique root of P0(t) = u (no emission
in a window when P0(window) >= u).

Randomness is counter-based (rng.uniform_block): trajectory i consumes
draws 0, 1, 2, ... of stream i in simulation order, one draw per waiting
-time request, so serial, chunked and multi-process runs are bit-identical.

``run_trajectory`` is the plain sequential reference.  ``ensemble`` runs
the same protocol vectorized across trajectories: within a probe window
every post-reset wait is an i.i.d. draw from the ground-state waiting
distribution of that segment, so whole blocks of draws are transformed at
once through a tabulated, Newton-polished inverse of P0.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .linalg3 import PropagatorPlan, propagator_plan
from .pulses import PulseSchedule, segments
from .rng import DrawStream
from .vsystem import VParams, reduced_operator

GROUND = np.array([1.0, 0.0, 0.0], dtype=complex)

# Root tolerance of the inverse transform, relative to the sampling horizon.
TIME_TOL = 1e-12


# ---------------------------------------------------------------------------
# single waiting-time sample (reference implementation)
# ---------------------------------------------------------------------------

def sample_first_emission(m: np.ndarray, psi: np.ndarray, horizon: float,
                          u: float, plan: PropagatorPlan | None = None) -> float | None:
    """Time of the first emission in [0, horizon], or None if none occurs.

    Inverse-transform sampling: returns the root of P0(t) = u found by
    bisection on the monotone closed form, to within TIME_TOL * horizon.
    """
    if not (0.0 < u < 1.0):
        raise ValueError(f"u must lie in (0, 1), got {u!r}")
    if plan is None:
        plan = propagator_plan(m)
    psi = np.asarray(psi, dtype=complex)

    def p0(t: float) -> float:
        phi = plan.action(t, psi)
        return float(np.vdot(phi, phi).real)

    if p0(horizon) >= u:
        return None
    lo, hi = 0.0, float(horizon)
    tol = TIME_TOL * float(horizon)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if p0(mid) > u:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# records and statistics
# ---------------------------------------------------------------------------

@dataclass
class TrajectoryRecord:
    emission_times: np.ndarray       # absolute times in [0, t_pi], increasing
    photons_per_window: np.ndarray   # (n,) counts; window k spans (end of probe
                                     # k-1, end of probe k]
    final_state: np.ndarray          # (3,) normalized conditional state at t_pi
    no_emission_flags: np.ndarray    # (n,) photons_per_window == 0


@dataclass
class EnsembleStats:
    n_traj: int
    rho_hat: np.ndarray              # (3,3) mean of final-state projectors
    rho_se: np.ndarray               # (3,3) standard error of each entry
    beta_hat: np.ndarray             # (n,) empirical no-photon fraction per window
    beta_se: np.ndarray
    photon_mean_per_window: np.ndarray
    photon_se_per_window: np.ndarray


# ---------------------------------------------------------------------------
# sequential reference trajectory
# ---------------------------------------------------------------------------

def _segment_plans(p: VParams, s: PulseSchedule) -> dict[tuple[bool, bool], PropagatorPlan]:
    plans = {}
    for seg in segments(s):
        key = (seg.probe_on, seg.pi_on)
        if key not in plans:
            plans[key] = propagator_plan(reduced_operator(p.with_lasers(*key)))
    return plans


def run_trajectory(p: VParams, s: PulseSchedule, rng_stream: DrawStream,
                   psi0: np.ndarray | None = None) -> TrajectoryRecord:
    """One quantum trajectory through the schedule, one uniform per wait request."""
    psi = GROUND.copy() if psi0 is None else np.asarray(psi0, dtype=complex).copy()
    psi /= np.linalg.norm(psi)
    plans = _segment_plans(p, s)
    counts = np.zeros(s.n, dtype=int)
    events: list[float] = []
    t0 = 0.0
    for j, seg in enumerate(segments(s)):
        plan = plans[(seg.probe_on, seg.pi_on)]
        remaining = seg.duration
        while True:
            t1 = sample_first_emission(None, psi, remaining, rng_stream.next(), plan=plan)
            if t1 is None:
                phi = plan.action(remaining, psi)
                psi = phi / np.linalg.norm(phi)
                break
            events.append(t0 + (seg.duration - remaining) + t1)
            counts[j // 2] += 1
            psi = GROUND.copy()
            remaining -= t1
        t0 += seg.duration
    return TrajectoryRecord(emission_times=np.array(events),
                            photons_per_window=counts,
                            final_state=psi,
                            no_emission_flags=counts == 0)


# ---------------------------------------------------------------------------
# vectorized engine
# ---------------------------------------------------------------------------

class _WaitSampler:
    """Inverse of the ground-state waiting distribution of one segment kind.

    P0(t) = |exp(-M t)|1>|^2 is tabulated on a log grid over [0, horizon];
    a batch of uniforms is inverted by table bracketing, a linear
    interpolation start, and guarded Newton on the closed form, to
    TIME_TOL * horizon.  Draws below the defect P0(horizon) map to +inf
    ("no emission within the horizon").
    """

    _NODES = 1 << 16

    def __init__(self, plan: PropagatorPlan, a2: float, a3: float, horizon: float):
        self.plan = plan
        self.a2 = a2
        self.a3 = a3
        self.horizon = float(horizon)
        self.tol = TIME_TOL * self.horizon
        self.c = plan.vector_coeffs(GROUND)       # (3 modes, 3 powers, 3 comps)

        # real-exponent pair form when the spectral form has no polynomial part
        self.real_pairs = None
        self._tail = None
        a = plan.a
        if not plan.degenerate and np.all(np.abs(a.imag) <= 1e-12 * (np.abs(a) + 1.0)):
            mu, coef = [], []
            v = self.c[:, 0, :]                   # (3, 3) mode vectors
            for k in range(3):
                for l in range(k, 3):
                    ip = np.vdot(v[k], v[l])
                    mu.append((a[k] + a[l]).real)
                    coef.append(ip.real if k == l else 2.0 * ip.real)
            mu = np.array(mu)
            coef = np.array(coef)
            self.real_pairs = (mu, coef)
            # overdamped modes are < 1e-20 beyond t_cut and can be dropped there
            fast = mu * self.horizon > 60.0
            if fast.any() and not fast.all():
                with np.errstate(divide="ignore"):
                    t_dead = np.log(np.maximum(np.abs(coef[fast]), 1e-30) * 1e20) / mu[fast]
                self._tail = (float(max(t_dead.max(), 0.0)),
                              mu[~fast], coef[~fast], (coef * mu)[~fast])

        tmin = self.horizon * 1e-13
        grid = np.concatenate(([0.0], np.geomspace(tmin, self.horizon, self._NODES)))
        p0 = self._p0(grid)
        p0 = np.minimum.accumulate(p0)            # guard round-off monotonicity
        self.t_desc = grid[::-1].copy()
        self.p_asc = p0[::-1].copy()
        self.defect = float(p0[-1])
        # expected waits per horizon, for sizing draw blocks
        mean_wait = float(np.trapezoid(p0, grid))
        self.mean_count = self.horizon / mean_wait if mean_wait > 0.0 else 0.0
        self._lookup = None
        if self.real_pairs is not None and self.defect < 1.0 - 1e-12:
            self._build_lookup()

    def _build_lookup(self):
        """Direct-index inverse table, uniform in v = -ln(u - c0).

        Node times are solved to TIME_TOL at build; each cell carries the
        Newton contraction ratio max|w1'|/(2 min w1), so at run time a
        single closed-form evaluation plus one Newton step is accepted
        whenever ratio * step^2 <= tol (with the bracketed solver as the
        fallback for the remaining sliver).
        """
        k_nodes = 1 << 17
        c0 = self.defect * (1.0 - 1e-9)
        span_lo = max(self.defect - c0, 1e-18)
        v_lo = -np.log1p(-c0) if c0 < 1.0 else 0.0      # u = 1
        v_hi = -np.log(span_lo)
        if not (np.isfinite(v_lo) and np.isfinite(v_hi) and v_hi > v_lo):
            return
        v = np.linspace(v_lo, v_hi, k_nodes)
        u_node = c0 + np.exp(-v)
        t_node = np.empty(k_nodes)
        above = u_node > self.defect
        t_node[~above] = self.horizon
        t_node[above] = self._invert_bracketed(u_node[above])
        t_node = np.maximum.accumulate(t_node)
        mu, coef = self.real_pairs
        _, w1 = self._p0_w1(t_node)
        w1p, _ = self._exp_sum(t_node, mu, coef * mu * mu)   # |dw1/dt| source terms
        w1p = np.abs(w1p)
        m_cell = np.minimum(w1[:-1], w1[1:])
        big_cell = np.maximum(w1p[:-1], w1p[1:])
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            ratio = 2.0 * big_cell / np.maximum(2.0 * m_cell, 1e-300)
        ratio[~np.isfinite(ratio) | (m_cell <= 0.0)] = np.inf
        # fused per-cell record (t_lo, t_hi, u_lo, u_hi): one gather per query
        cells = np.column_stack([t_node[:-1], t_node[1:], u_node[:-1], u_node[1:]])
        self._lookup = (c0, float(v_lo), float(v[1] - v[0]), cells, ratio)

    def _p0(self, ts: np.ndarray) -> np.ndarray:
        if self.real_pairs is not None:
            mu, coef = self.real_pairs
            with np.errstate(under="ignore"):
                return np.exp(-np.multiply.outer(ts, mu)) @ coef
        phi = self.plan.action_grid(ts, GROUND)
        return np.einsum("ti,ti->t", phi.conj(), phi).real

    @staticmethod
    def _exp_sum(ts: np.ndarray, mu: np.ndarray, coef: np.ndarray
                 ) -> tuple[np.ndarray, np.ndarray]:
        # unrolled sum of scalar-coefficient exponentials and its mu-weighted twin
        p0 = np.zeros_like(ts)
        w1 = np.zeros_like(ts)
        buf = np.empty_like(ts)
        with np.errstate(under="ignore"):
            for m, c in zip(mu, coef):
                np.multiply(ts, -m, out=buf)
                np.exp(buf, out=buf)
                p0 += c * buf
                buf *= c * m
                w1 += buf
        return p0, w1

    def _p0_w1(self, ts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if self.real_pairs is None:
            phi = self.plan.action_grid(ts, GROUND)
            p0 = np.einsum("ti,ti->t", phi.conj(), phi).real
            w1 = self.a2 * np.abs(phi[:, 1])**2 + self.a3 * np.abs(phi[:, 2])**2
            return p0, w1
        mu, coef = self.real_pairs
        if self._tail is None:
            return self._exp_sum(ts, mu, coef)
        t_cut, mu_s, c_s, _ = self._tail
        head = ts < t_cut
        if not head.any():
            return self._exp_sum(ts, mu_s, c_s)
        p0, w1 = self._exp_sum(ts, mu_s, c_s)
        ph, wh = self._exp_sum(ts[head], mu, coef)
        p0[head] = ph
        w1[head] = wh
        return p0, w1

    def _invert_bracketed(self, us: np.ndarray,
                          lo: np.ndarray | None = None,
                          hi: np.ndarray | None = None,
                          x: np.ndarray | None = None) -> np.ndarray:
        """Guarded Newton/bisection roots of P0(t) = u for a flat batch.

        Brackets default to the build-time log grid (binary search).
        """
        if lo is None:
            idx = np.searchsorted(self.p_asc, us)
            idx = np.clip(idx, 1, self.p_asc.size - 1)
            lo = self.t_desc[idx]                 # P0(lo) >= u
            hi = self.t_desc[idx - 1]             # P0(hi) <= u
            pl = self.p_asc[idx]
            ph = self.p_asc[idx - 1]
            with np.errstate(divide="ignore", invalid="ignore"):
                x = lo + (pl - us) / (pl - ph) * (hi - lo)
            flat = ~np.isfinite(x)
            if flat.any():
                x[flat] = 0.5 * (lo[flat] + hi[flat])
        out = np.empty(us.shape)
        sel = np.arange(us.size)
        lo, hi, x, us = lo.copy(), hi.copy(), x.copy(), us.copy()
        for _ in range(80):
            p0, w1 = self._p0_w1(x)
            f = p0 - us
            pos = f > 0.0
            lo = np.where(pos, x, lo)
            hi = np.where(pos, hi, x)
            with np.errstate(divide="ignore", invalid="ignore"):
                step = f / w1                     # dP0/dt = -w1
            finite = np.isfinite(step)
            done = (finite & (np.abs(step) <= self.tol)) | ((hi - lo) <= self.tol)
            xn = x + step
            inside = finite & (xn > lo) & (xn < hi)
            # converged points keep the (clipped) Newton value; others fall
            # back to bisection when Newton leaves the bracket
            x = np.where(done & finite, np.clip(xn, lo, hi),
                         np.where(inside, xn, 0.5 * (lo + hi)))
            if done.all():
                break
            retire = np.nonzero(done)[0]
            if retire.size:
                out[sel[retire]] = x[retire]
                keep = ~done
                sel = sel[keep]
                us, lo, hi, x = us[keep], lo[keep], hi[keep], x[keep]
        out[sel] = x
        return out

    def invert(self, u: np.ndarray) -> np.ndarray:
        """Waiting times for a flat array of uniforms (+inf below the defect)."""
        u = np.asarray(u, dtype=float)
        out = np.full(u.shape, np.inf)
        solve_idx = np.nonzero(u > self.defect)[0]
        if solve_idx.size == 0:
            return out
        us = u[solve_idx]
        if self._lookup is None:
            out[solve_idx] = self._invert_bracketed(us)
            return out
        c0, v_lo, dv, cells, ratio = self._lookup
        with np.errstate(divide="ignore", invalid="ignore"):
            kf = (-np.log(us - c0) - v_lo) / dv
        oob = ~np.isfinite(kf) | (kf < 0.0) | (kf >= ratio.size)
        k = np.clip(kf.astype(np.int64), 0, ratio.size - 1)
        cell = cells[k]                          # columns: t_lo, t_hi, u_lo, u_hi
        lo = cell[:, 0]
        hi = cell[:, 1]
        if oob.any():
            lo = np.where(oob, cells[-1, 1], lo)
            hi = np.where(oob, self.horizon, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            x0 = lo + (cell[:, 2] - us) / (cell[:, 2] - cell[:, 3]) * (hi - lo)
        x0 = np.where(np.isfinite(x0), np.clip(x0, lo, hi), 0.5 * (lo + hi))
        p0, w1 = self._p0_w1(x0)
        f = p0 - us
        with np.errstate(divide="ignore", invalid="ignore"):
            step = f / w1
        x1 = np.clip(x0 + step, lo, hi)
        cert = ratio[k]
        good = np.isfinite(step) & (cert * step * step <= self.tol) & ~oob
        if good.all():
            out[solve_idx] = x1
            return out
        # one more fused Newton pass before the loop fallback
        bad = np.nonzero(~good)[0]
        pos = f[bad] > 0.0
        lo_b = np.where(pos, x0[bad], lo[bad])
        hi_b = np.where(pos, hi[bad], x0[bad])
        p0b, w1b = self._p0_w1(x1[bad])
        fb = p0b - us[bad]
        with np.errstate(divide="ignore", invalid="ignore"):
            stepb = fb / w1b
        x2 = np.clip(x1[bad] + stepb, lo_b, hi_b)
        okb = np.isfinite(stepb) & (cert[bad] * stepb * stepb <= self.tol)
        res = x1
        res[bad[okb]] = x2[okb]
        hard = bad[~okb]
        if hard.size:
            posb = fb[~okb] > 0.0
            lo_h = np.where(posb, x1[hard], lo_b[~okb])
            hi_h = np.where(posb, hi_b[~okb], x1[hard])
            res[hard] = self._invert_bracketed(us[hard], lo_h, hi_h, x2[~okb])
        out[solve_idx] = res
        return out


def _action_batch(plan: PropagatorPlan, coeffs: np.ndarray, ts: np.ndarray) -> np.ndarray:
    """phi_i = exp(-M t_i) v_i from per-row coefficient stacks (rows, 3, 3, 3)."""
    ts = np.asarray(ts, dtype=float)
    out = np.zeros((ts.size, 3), dtype=complex)
    aa = plan.a
    real_modes = bool(np.all(np.abs(aa.imag) <= 1e-12 * (np.abs(aa) + 1.0)))
    with np.errstate(under="ignore"):
        for k in range(3):
            ek = np.exp(-aa[k].real * ts) if real_modes else np.exp(-aa[k] * ts)
            poly = (coeffs[:, k, 0] + ts[:, None] * coeffs[:, k, 1]
                    + (ts * ts)[:, None] * coeffs[:, k, 2])
            out += ek[:, None] * poly
    return out


def _first_emission_batch(plan: PropagatorPlan, a2: float, a3: float,
                          psi: np.ndarray, horizon: float,
                          u: np.ndarray) -> np.ndarray:
    """Per-row first-emission times (inf if none), psi of shape (rows, 3).

    Inverse transform as in sample_first_emission, run on all rows at once
    with Newton acceleration inside the shrinking bracket.
    """
    rows = psi.shape[0]
    coeffs = np.einsum("kpij,mj->mkpi", plan.b, psi)
    out = np.full(rows, np.inf)

    def p0_w1(c, ts):
        phi = _action_batch(plan, c, ts)
        p0 = np.einsum("ti,ti->t", phi.conj(), phi).real
        w1 = a2 * np.abs(phi[:, 1])**2 + a3 * np.abs(phi[:, 2])**2
        return p0, w1

    p0_end, _ = p0_w1(coeffs, np.full(rows, float(horizon)))
    solve_idx = np.nonzero(u > p0_end)[0]
    if solve_idx.size == 0:
        return out
    lo = np.zeros(solve_idx.size)
    hi = np.full(solve_idx.size, float(horizon))
    tol = TIME_TOL * float(horizon)
    csel = coeffs[solve_idx]
    us = u[solve_idx]
    x = 0.5 * (lo + hi)
    for _ in range(90):
        p0, w1 = p0_w1(csel, x)
        f = p0 - us
        pos = f > 0.0
        lo = np.where(pos, x, lo)
        hi = np.where(pos, hi, x)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = f / w1
        finite = np.isfinite(step)
        done = (finite & (np.abs(step) <= tol)) | ((hi - lo) <= tol)
        xn = x + step
        inside = finite & (xn > lo) & (xn < hi)
        x = np.where(done & finite, np.clip(xn, lo, hi),
                     np.where(inside, xn, 0.5 * (lo + hi)))
        if done.all():
            break
        retire = np.nonzero(done)[0]
        if retire.size:
            out[solve_idx[retire]] = x[retire]
            keep = ~done
            solve_idx = solve_idx[keep]
            us, lo, hi, x = us[keep], lo[keep], hi[keep], x[keep]
            csel = csel[keep]
    out[solve_idx] = x
    return out


def _pool_phase(sampler: _WaitSampler, seed: int, ids: np.ndarray,
                cursor: np.ndarray, r: np.ndarray,
                events: list | None, t_reset_abs: np.ndarray | None
                ) -> tuple[np.ndarray, np.ndarray]:
    """Run the post-reset renewal chain of one segment for the given rows.

    ids/cursor/r: trajectory ids, their next draw indices (updated in
    place), and the time remaining after the reset.  Returns emission
    counts and the time of the last emission measured from the reset.
    """
    rows = ids.size
    k = np.zeros(rows, dtype=np.int64)
    t_last = np.zeros(rows)
    acc = np.zeros(rows)
    active = np.arange(rows)
    # first block sized to the typical count; extensions mop up the tail
    sigma = math.sqrt(sampler.mean_count + 1.0)
    width = int(np.clip(sampler.mean_count + 0.5 * sigma + 2.0, 8, 512))
    ext_width = int(np.clip(1.5 * sigma + 4.0, 8, 512))
    first_block = True
    while active.size:
        u = _block_with_offsets(seed, ids[active], cursor[active], width)
        waits = sampler.invert(u.ravel()).reshape(active.size, width)
        csum = acc[active, None] + np.cumsum(waits, axis=1)
        fits = csum <= r[active, None]
        kk = fits.sum(axis=1)
        has = kk > 0
        rows_has = active[has]
        t_last[rows_has] = csum[has, kk[has] - 1]
        acc[rows_has] = t_last[rows_has]
        if events is not None:
            for a_i, row in enumerate(active):
                nfit = kk[a_i]
                if nfit:
                    events.append((ids[row], t_reset_abs[row] + csum[a_i, :nfit]))
        k[active] += kk
        exhausted = kk == width
        cursor[active] += kk + (~exhausted)   # +1 for the overshoot draw
        active = active[exhausted]
        if first_block:
            first_block = False
            width = ext_width
    return k, t_last


def _block_with_offsets(seed: int, ids: np.ndarray, starts: np.ndarray,
                        count: int) -> np.ndarray:
    """Per-row uniform blocks with row-dependent starting draw indices.

    Evaluates each 4-lane Philox block once per row and gathers the
    requested window, instead of re-keying per draw.
    """
    from .rng import _to_unit, philox4x64
    k0 = seed & 0xFFFFFFFFFFFFFFFF
    k1 = (seed >> 64) & 0xFFFFFFFFFFFFFFFF
    starts = np.asarray(starts, dtype=np.int64)
    nblocks = (count + 4) // 4 + 1
    blocks = (starts >> 2)[:, None] + np.arange(1, nblocks + 1, dtype=np.int64)
    words = philox4x64(blocks.astype(np.uint64),
                       np.asarray(ids, dtype=np.uint64)[:, None],
                       np.uint64(k1), np.uint64(0), k0, k1)
    flat = np.stack(words, axis=-1).reshape(starts.size, -1)
    take = (starts & 3)[:, None] + np.arange(count, dtype=np.int64)
    picked = np.take_along_axis(flat, take, axis=1)
    return _to_unit(picked)


def _uniforms_at(seed: int, ids, idx) -> np.ndarray:
    """Uniform draw number ``idx`` of stream ``ids`` (broadcasting arguments)."""
    from .rng import _to_unit, philox4x64
    k0 = seed & 0xFFFFFFFFFFFFFFFF
    k1 = (seed >> 64) & 0xFFFFFFFFFFFFFFFF
    idx = np.asarray(idx, dtype=np.int64)
    block = (idx >> 2) + 1
    lane = (idx & 3).astype(np.int64)
    words = philox4x64(block.astype(np.uint64), np.asarray(ids, dtype=np.uint64),
                       np.uint64(k1), np.uint64(0), k0, k1)
    stacked = np.stack(words, axis=-1)
    picked = np.take_along_axis(stacked, lane[..., None].astype(np.intp), axis=-1)[..., 0]
    return _to_unit(picked)


# plan/sampler memo shared by all chunks of a process (keyed by values only)
_ENGINE_CACHE: dict = {}


def _cached_plan(p: VParams, kind: tuple[bool, bool]) -> PropagatorPlan:
    key = ("plan", p, kind)
    if key not in _ENGINE_CACHE:
        _ENGINE_CACHE[key] = propagator_plan(reduced_operator(p.with_lasers(*kind)))
    return _ENGINE_CACHE[key]


def _cached_sampler(p: VParams, kind: tuple[bool, bool], duration: float) -> _WaitSampler:
    key = ("sampler", p, kind, duration)
    if key not in _ENGINE_CACHE:
        pw = p.with_lasers(*kind)
        _ENGINE_CACHE[key] = _WaitSampler(_cached_plan(p, kind), pw.a2, pw.a3, duration)
    return _ENGINE_CACHE[key]


def _simulate_chunk(p: VParams, s: PulseSchedule, seed: int,
                    lo: int, hi: int, psi0: np.ndarray,
                    collect_events: bool = False):
    """Vectorized trajectories lo..hi-1; returns partial sums for the reduction."""
    ids = np.arange(lo, hi, dtype=np.int64)
    rows = ids.size
    psi = np.tile(psi0 / np.linalg.norm(psi0), (rows, 1)).astype(complex)
    cursor = np.zeros(rows, dtype=np.int64)
    counts = np.zeros((rows, s.n), dtype=np.int64)
    events: list | None = [] if collect_events else None

    segs = list(segments(s))
    t0 = 0.0
    for j, seg in enumerate(segs):
        kind = (seg.probe_on, seg.pi_on)
        plan = _cached_plan(p, kind)
        sampler = _cached_sampler(p, kind, seg.duration)

        u = _uniforms_at(seed, ids, cursor)
        cursor += 1
        pw = p.with_lasers(*kind)
        t1 = _first_emission_batch(plan, pw.a2, pw.a3, psi, seg.duration, u)
        emit = np.isfinite(t1)

        quiet = np.nonzero(~emit)[0]
        if quiet.size:
            e_full = plan.matrix(seg.duration)
            phi = psi[quiet] @ e_full.T
            psi[quiet] = phi / np.linalg.norm(phi, axis=1, keepdims=True)

        hot = np.nonzero(emit)[0]
        if hot.size:
            counts[hot, j // 2] += 1
            if events is not None:
                for row in hot:
                    events.append((ids[row], np.array([t0 + t1[row]])))
            r_pool = seg.duration - t1[hot]
            t_reset_abs = t0 + t1[hot] if events is not None else None
            sub_cursor = cursor[hot]
            k_pool, t_last = _pool_phase(sampler, seed, ids[hot], sub_cursor,
                                         r_pool, events, t_reset_abs)
            cursor[hot] = sub_cursor
            counts[hot, j // 2] += k_pool
            # conditional no-photon evolution from the last reset to segment end
            x = r_pool - t_last
            gcoeffs = np.broadcast_to(sampler.c, (hot.size, 3, 3, 3))
            phi = _action_batch(plan, gcoeffs, x)
            psi[hot] = phi / np.linalg.norm(phi, axis=1, keepdims=True)
        t0 += seg.duration

    proj = np.einsum("mi,mj->mij", psi, psi.conj())
    partial = {
        "n": rows,
        "proj_sum": proj.sum(axis=0),
        "proj_re2": (proj.real**2).sum(axis=0),
        "proj_im2": (proj.imag**2).sum(axis=0),
        "no_emission": (counts == 0).sum(axis=0),
        "count_sum": counts.sum(axis=0),
        "count_sq": (counts.astype(float)**2).sum(axis=0),
    }
    return (partial, events) if collect_events else (partial, None)


def ensemble(p: VParams, s: PulseSchedule, n_traj: int, seed: int,
             psi0: np.ndarray | None = None, workers: int = 1,
             chunk_size: int = 16384) -> EnsembleStats:
    """Monte-Carlo estimate of the ensemble state and per-window statistics.

    Deterministic in (seed, n_traj, psi0, chunk_size): each trajectory owns
    a counter-based substream and chunk partials are reduced in index
    order, so the result is bit-identical for any number of workers.
    """
    if n_traj < 1:
        raise ValueError(f"n_traj must be >= 1, got {n_traj!r}")
    psi0 = GROUND.copy() if psi0 is None else np.asarray(psi0, dtype=complex)
    bounds = [(lo, min(lo + chunk_size, n_traj)) for lo in range(0, n_traj, chunk_size)]
    if workers > 1 and len(bounds) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_chunk_task,
                                  [(p, s, seed, lo, hi, psi0) for lo, hi in bounds]))
    else:
        parts = [_simulate_chunk(p, s, seed, lo, hi, psi0)[0] for lo, hi in bounds]

    tot = parts[0]
    for part in parts[1:]:
        tot = {k: (tot[k] + part[k]) for k in tot}

    n = tot["n"]
    rho_hat = tot["proj_sum"] / n
    if n > 1:
        var_re = tot["proj_re2"] / n - rho_hat.real**2
        var_im = tot["proj_im2"] / n - rho_hat.imag**2
        rho_se = np.sqrt(np.maximum(var_re + var_im, 0.0) / (n - 1))
    else:
        rho_se = np.zeros((3, 3))
    beta_hat = tot["no_emission"] / n
    beta_se = np.sqrt(beta_hat * (1.0 - beta_hat) / n)
    mean_c = tot["count_sum"] / n
    if n > 1:
        var_c = np.maximum(tot["count_sq"] / n - mean_c**2, 0.0)
        se_c = np.sqrt(var_c / (n - 1))
    else:
        se_c = np.zeros(s.n)
    return EnsembleStats(n_traj=n, rho_hat=rho_hat, rho_se=rho_se,
                         beta_hat=beta_hat, beta_se=beta_se,
                         photon_mean_per_window=mean_c, photon_se_per_window=se_c)


def _chunk_task(args):
    p, s, seed, lo, hi, psi0 = args
    return _simulate_chunk(p, s, seed, lo, hi, psi0)[0]


def trajectory_events(p: VParams, s: PulseSchedule, n_traj: int, seed: int,
                      psi0: np.ndarray | None = None) -> list[tuple[int, np.ndarray]]:
    """Per-trajectory emission times (trajectory_id, times); for small runs."""
    psi0 = GROUND.copy() if psi0 is None else np.asarray(psi0, dtype=complex)
    out: list[tuple[int, np.ndarray]] = []
    for lo in range(0, n_traj, 1024):
        hi = min(lo + 1024, n_traj)
        _, events = _simulate_chunk(p, s, seed, lo, hi, psi0, collect_events=True)
        merged: dict[int, list[np.ndarray]] = {}
        for tid, times in events:
            merged.setdefault(int(tid), []).append(times)
        for tid in sorted(merged):
            out.append((tid, np.sort(np.concatenate(merged[tid]))))
    return out
