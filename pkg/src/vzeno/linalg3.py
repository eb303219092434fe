"""Dense complex linear algebra for 3-state systems.

Everything here is fixed-size: 3x3 operators acting on state vectors, their
eigentriples and exponential actions, and the 9x9 generator acting on
vectorized density matrices.  Vectorization is column-stacking throughout:
entry (i, j) of a matrix sits at position 3*j + i of its vector image, so
``vec(A X B) = kron(B.T, A) vec(X)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Relative eigenvalue gap below which a pair is treated as one double root.
DEGENERACY_TOL = 1e-8

# expm9 refuses generators this large; callers subdivide the interval instead.
EXPM9_NORM_LIMIT = 1e9


class Expm9NormError(ValueError):
    """|L*t| too large for a single exponential; subdivide the interval."""


def cubic_roots(c2: complex, c1: complex, c0: complex) -> np.ndarray:
    """Three complex roots of z^3 + c2 z^2 + c1 z + c0 (Cardano form)."""
    c2, c1, c0 = complex(c2), complex(c1), complex(c0)
    shift = -c2 / 3.0
    p = c1 - c2 * c2 / 3.0
    q = 2.0 * c2**3 / 27.0 - c2 * c1 / 3.0 + c0
    s = np.sqrt(complex(q * q / 4.0 + p**3 / 27.0))
    # pick the cube-root branch with the larger magnitude to avoid cancellation
    w3 = -q / 2.0 + s if abs(-q / 2.0 + s) >= abs(-q / 2.0 - s) else -q / 2.0 - s
    if w3 == 0.0:
        return np.full(3, shift, dtype=complex)
    w = w3 ** (1.0 / 3.0)
    ws = w * np.exp(2j * np.pi * np.arange(3) / 3.0)
    return ws - p / (3.0 * ws) + shift


@dataclass(frozen=True)
class EigenDecomp3:
    """Eigentriple of a 3x3 complex matrix.

    ``projectors`` holds the Lagrange spectral projectors
    P_i = (M - l_j)(M - l_k) / ((l_i - l_j)(l_i - l_k)); they are only
    well defined for separated eigenvalues and are None when ``degenerate``.
    """

    lambdas: np.ndarray            # (3,) complex
    degenerate: bool
    projectors: np.ndarray | None  # (3, 3, 3) complex or None


def eig3(m: np.ndarray) -> EigenDecomp3:
    """Eigenvalues of a 3x3 complex matrix via the characteristic cubic.

    Closed-form Cardano roots, each polished by <= 5 Newton steps on the
    characteristic polynomial.  A pair closer than DEGENERACY_TOL * max|l|
    flags the decomposition as degenerate instead of raising.
    """
    m = np.asarray(m, dtype=complex)
    scale = np.abs(m).max()
    if scale == 0.0:
        return EigenDecomp3(np.zeros(3, dtype=complex), True, None)
    a = m / scale
    tr = a[0, 0] + a[1, 1] + a[2, 2]
    # elementary symmetric polynomials from cofactors; the tr^2 - tr(M^2)
    # shortcut cancels catastrophically for weakly coupled matrices
    e2 = (a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
          + a[0, 0] * a[2, 2] - a[0, 2] * a[2, 0]
          + a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1])
    det = (a[0, 0] * (a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1])
           - a[0, 1] * (a[1, 0] * a[2, 2] - a[1, 2] * a[2, 0])
           + a[0, 2] * (a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0]))
    lam = cubic_roots(-tr, e2, -det)
    for _ in range(5):
        p = ((lam - tr) * lam + e2) * lam - det
        dp = (3.0 * lam - 2.0 * tr) * lam + e2
        step = np.where(dp != 0.0, p / np.where(dp == 0.0, 1.0, dp), 0.0)
        lam = lam - step
    lam = lam * scale

    lmax = np.abs(lam).max()
    gaps = np.abs(lam - lam[[1, 2, 0]])
    degenerate = bool(gaps.min() < DEGENERACY_TOL * max(lmax, 1e-300))
    projectors = None
    if not degenerate:
        eye = np.eye(3, dtype=complex)
        projectors = np.empty((3, 3, 3), dtype=complex)
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            projectors[i] = ((m - lam[j] * eye) @ (m - lam[k] * eye)
                             / ((lam[i] - lam[j]) * (lam[i] - lam[k])))
    return EigenDecomp3(lam, degenerate, projectors)


@dataclass(frozen=True)
class PropagatorPlan:
    """Precomputed form of t -> exp(-M t).

    exp(-M t) = sum_k exp(-a[k] t) * (B[k,0] + t B[k,1] + t^2 B[k,2])

    For separated eigenvalues this is the spectral (Lagrange) form with
    B[k,0] the projectors and no polynomial part.  A double eigenvalue
    contributes a linear-in-t factor, a triple one a quadratic factor
    (confluent limits of the spectral form).
    """

    a: np.ndarray        # (3,) complex exponents
    b: np.ndarray        # (3, 3, 3, 3) complex: b[k, p] multiplies t^p exp(-a[k] t)
    degenerate: bool

    def action(self, t: float, v: np.ndarray) -> np.ndarray:
        """exp(-M t) v for a single time."""
        out = np.zeros(3, dtype=complex)
        for k in range(3):
            ek = np.exp(-self.a[k] * t)
            if ek == 0.0:
                continue
            out += ek * ((self.b[k, 0] + t * self.b[k, 1] + t * t * self.b[k, 2]) @ v)
        return out

    def vector_coeffs(self, v: np.ndarray) -> np.ndarray:
        """Coefficient vectors c[k, p] with exp(-M t) v = sum exp(-a_k t) t^p c[k,p]."""
        return np.einsum("kpij,j->kpi", self.b, np.asarray(v, dtype=complex))

    def action_grid(self, ts: np.ndarray, v: np.ndarray) -> np.ndarray:
        """exp(-M t) v for an array of times; returns shape (len(ts), 3)."""
        ts = np.asarray(ts, dtype=float)
        c = self.vector_coeffs(v)
        out = np.zeros(ts.shape + (3,), dtype=complex)
        with np.errstate(under="ignore"):
            for k in range(3):
                ek = np.exp(np.multiply.outer(-ts, self.a[k]))
                poly = c[k, 0] + np.multiply.outer(ts, c[k, 1]) \
                    + np.multiply.outer(ts * ts, c[k, 2])
                out += ek[..., None] * poly
        return out

    def matrix(self, t: float) -> np.ndarray:
        """Dense exp(-M t)."""
        out = np.zeros((3, 3), dtype=complex)
        for k in range(3):
            ek = np.exp(-self.a[k] * t)
            if ek == 0.0:
                continue
            out += ek * (self.b[k, 0] + t * self.b[k, 1] + t * t * self.b[k, 2])
        return out


def propagator_plan(m: np.ndarray, decomp: EigenDecomp3 | None = None) -> PropagatorPlan:
    """Build the exponential-action plan for exp(-M t)."""
    m = np.asarray(m, dtype=complex)
    if decomp is None:
        decomp = eig3(m)
    lam = decomp.lambdas
    a = np.zeros(3, dtype=complex)
    b = np.zeros((3, 3, 3, 3), dtype=complex)
    eye = np.eye(3, dtype=complex)

    if not decomp.degenerate:
        a[:] = lam
        for i in range(3):
            b[i, 0] = decomp.projectors[i]
        return PropagatorPlan(a, b, False)

    scale = max(np.abs(lam).max(), 1e-300)
    gaps = np.abs(lam - lam[[1, 2, 0]])      # |l0-l1|, |l1-l2|, |l2-l0|
    if gaps.max() < DEGENERACY_TOL * scale:
        # triple root: exp(-Mt) = exp(-l t)(I - N t + N^2 t^2 / 2), N nilpotent
        l = lam.mean()
        n = m - l * eye
        a[:] = l
        b[0, 0] = eye
        b[0, 1] = -n
        b[0, 2] = n @ n / 2.0
        return PropagatorPlan(a, b, True)

    # one double root, one isolated; Hermite interpolation of exp(-z t)
    imin = int(np.argmin(gaps))
    pair = {0: (0, 1), 1: (1, 2), 2: (2, 0)}[imin]
    iso = lam[3 - pair[0] - pair[1]]
    l = 0.5 * (lam[pair[0]] + lam[pair[1]])
    dl = iso - l
    a[0] = iso
    b[0, 0] = (m - l * eye) @ (m - l * eye) / (dl * dl)
    a[1] = l
    a[2] = l
    b[1, 0] = (m - iso * eye) / (-dl) - (m - iso * eye) @ (m - l * eye) / (dl * dl)
    b[1, 1] = (m - iso * eye) @ (m - l * eye) / dl
    return PropagatorPlan(a, b, True)


def expm_action3(m: np.ndarray, t: float, v: np.ndarray,
                 plan: PropagatorPlan | None = None) -> np.ndarray:
    """exp(-M t) v through the spectral form (confluent form when degenerate)."""
    if plan is None:
        plan = propagator_plan(m)
    return plan.action(float(t), np.asarray(v, dtype=complex))


def expm9(l: np.ndarray, t: float = 1.0) -> np.ndarray:
    """exp(L t) for a 9x9 generator by scaling and squaring.

    Truncated Taylor kernel on L t / 2^s with |L t|_1 / 2^s <= 1/4, then s
    squarings.  Raises Expm9NormError when |L t|_1 > EXPM9_NORM_LIMIT so the
    caller can subdivide instead of overflowing.
    """
    a = np.asarray(l, dtype=complex) * float(t)
    nrm = np.linalg.norm(a, 1)
    if not np.isfinite(nrm):
        raise Expm9NormError("generator contains non-finite entries")
    if nrm > EXPM9_NORM_LIMIT:
        raise Expm9NormError(
            f"|L*t|_1 = {nrm:.3e} exceeds {EXPM9_NORM_LIMIT:.0e}; subdivide the step")
    s = max(0, int(np.ceil(np.log2(nrm / 0.25)))) if nrm > 0.25 else 0
    x = a / 2.0**s
    n = a.shape[0]
    out = np.eye(n, dtype=complex)
    term = np.eye(n, dtype=complex)
    for k in range(1, 30):
        term = term @ x / k
        out = out + term
        if np.linalg.norm(term, 1) <= 1e-18 * np.linalg.norm(out, 1):
            break
    for _ in range(s):
        out = out @ out
    return out


def vec9(rho: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization of a 3x3 matrix."""
    return np.asarray(rho, dtype=complex).reshape(9, order="F")


def unvec9(v: np.ndarray) -> np.ndarray:
    """Inverse of vec9."""
    return np.asarray(v, dtype=complex).reshape(3, 3, order="F")


def validate_density(rho: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Check Hermiticity and unit trace; returns the array or raises ValueError."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (3, 3):
        raise ValueError(f"density matrix must be 3x3, got {rho.shape}")
    herm = np.abs(rho - rho.conj().T).max()
    if herm > tol:
        raise ValueError(f"density matrix not Hermitian within {tol:g} (deviation {herm:.3e})")
    tr = np.trace(rho)
    if abs(tr - 1.0) > tol:
        raise ValueError(f"density matrix trace {tr:.10g} differs from 1 beyond {tol:g}")
    return rho
