"""Mode projections, bootstrap norms, spectra and kernel formulas.

Measurements are pure functions of a field sampled on a grid; a
:class:`DiagnosticsContext` precomputes the eigenfunction samples,
quadrature weights and exact normalizations for one (dimension, grid)
pair so that per-slice diagnostics stay cheap inside evolution loops.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal

from . import eigenbasis as eb
from . import profile as pr


class CoverageError(ValueError):
    """Grid does not cover enough of the weighted domain."""


class NonIntegrableTailError(ValueError):
    """The weighted-norm integrand does not decay; the norm diverges."""


class UnfitError(ValueError):
    """A series is too short or ill-conditioned to fit."""


class AssemblyError(RuntimeError):
    """Internal inconsistency while assembling a discrete operator."""


# ---------------------------------------------------------------------------
# Context
# ---------------------------------------------------------------------------

def rho_weight(d: int, y):
    """Gaussian-polynomial weight exp(-y^2/(4 ell)) y^(d+1)."""
    ell = eb.ell_of(d)
    y = np.asarray(y, float)
    return np.exp(-y * y / (4.0 * ell)) * y ** (d + 1)


def rho_norm_sq_true(d: int, n: int) -> float:
    """Absolute value of integral phi_{2n}^2 rho dy (carries Gamma factors)."""
    ell = eb.ell_of(d)
    scale = ell ** ((d + 2) / 2.0) / 2.0 * math.gamma(d / 2.0 + 1.0) * 4.0 ** (d / 2.0 + 1.0)
    return scale * float(eb.build_eigensystem(d).rho_norm_sq(n))


@dataclass
class DiagnosticsContext:
    """Precomputed tables for mode projections and bootstrap norms."""

    d: int
    y: np.ndarray
    K: float = 10.0
    coverage_tol: float = 1e-10
    ell: int = field(init=False)
    params: pr.ProfileParams = None

    def __post_init__(self):
        self.ell = eb.ell_of(self.d)
        if self.params is None:
            self.params = pr.make_profile_params(self.d)
        y = np.asarray(self.y, float)
        self.y = y
        tail = math.exp(-y[-1] ** 2 / (4 * self.ell)) * y[-1] ** (self.d + 1 + 4 * self.ell)
        if tail > self.coverage_tol:
            raise CoverageError(
                f"grid ends at y={y[-1]:.3g}; weighted tail {tail:.2e} exceeds "
                f"tolerance {self.coverage_tol:.1e} for mode projections"
            )
        # trapezoid weights
        tw = np.zeros_like(y)
        tw[1:-1] = 0.5 * (y[2:] - y[:-2])
        tw[0] = 0.5 * (y[1] - y[0])
        tw[-1] = 0.5 * (y[-1] - y[-2])
        self.quad_rho = rho_weight(self.d, y) * tw
        self.trapz = tw
        self.phi = np.stack(
            [eb.partial_mass_eigen(self.d, k).evalf(y) for k in range(2 * self.ell)]
        )
        self.phi_norm_sq = np.array(
            [rho_norm_sq_true(self.d, k) for k in range(2 * self.ell)]
        )
        # intermediate-region weight: (1 - chi_K(y)) * y^(-4 ell - 3)
        spec = pr.CutoffSpec(K=self.K)
        with np.errstate(divide="ignore"):
            wy = np.where(y > 0, y ** (-4.0 * self.ell - 3.0), 0.0)
        self.flat_w = (1.0 - pr.cutoff_chi(spec, y)) * wy * tw
        self.cut_spec = spec

    # -- basic measurements ------------------------------------------------
    def project(self, field_values, k: int) -> float:
        """Normalized rho-projection <f, phi_{2k}> / ||phi_{2k}||^2."""
        return float(np.sum(self.quad_rho * field_values * self.phi[k]) / self.phi_norm_sq[k])

    def project_all(self, field_values) -> np.ndarray:
        num = self.quad_rho * field_values
        return np.array([np.sum(num * self.phi[k]) / self.phi_norm_sq[k] for k in range(2 * self.ell)])

    def rho_norm(self, field_values) -> float:
        return float(np.sqrt(np.sum(self.quad_rho * field_values**2)))


def mode_project(field_values, k: int, d: int, y, ctx: DiagnosticsContext | None = None) -> float:
    """One-shot normalized projection onto the k-th partial-mass eigenmode."""
    if ctx is None:
        ctx = DiagnosticsContext(d=d, y=np.asarray(y, float))
    return ctx.project(np.asarray(field_values, float), k)


# ---------------------------------------------------------------------------
# Euler-derivative helper and norms
# ---------------------------------------------------------------------------

def euler_derivative(y, f):
    """y * df/dy by centered differences (one-sided at the boundaries)."""
    return np.asarray(y, float) * np.gradient(np.asarray(f, float), np.asarray(y, float), edge_order=1)


def flat_norm(field_values, ctx: DiagnosticsContext, j: int = 0, variant: str = "smooth") -> float:
    """Intermediate-region norm ( int (1-chi_K(y)) |(y d/dy)^j f|^2 y^(-4l-3) dy )^(1/2).

    `variant="sharp"` replaces the smooth cutoff with the indicator of y >= K.
    Raises NonIntegrableTailError when the integrand fails to decay.
    """
    if j not in (0, 1, 2):
        raise ValueError("derivative order j must be 0, 1 or 2")
    y = ctx.y
    f = np.asarray(field_values, float)
    if j >= 1:
        rel = np.max(np.abs(np.diff(f))) / (np.max(np.abs(f)) + 1e-300)
        if rel > 0.5:
            warnings.warn(
                "field varies by >50% between neighbouring nodes; "
                "(y d/dy)^j is unresolved, refine the grid",
                RuntimeWarning,
                stacklevel=2,
            )
    for _ in range(j):
        f = euler_derivative(y, f)
    if variant == "sharp":
        with np.errstate(divide="ignore"):
            wy = np.where(y > 0, y ** (-4.0 * ctx.ell - 3.0), 0.0)
        w = np.where(y >= ctx.K, wy, 0.0) * ctx.trapz
    elif variant == "smooth":
        w = ctx.flat_w
    else:
        raise ValueError(f"unknown cutoff variant {variant!r}")
    integrand = w * f * f
    _check_tail_decay(y, integrand)
    return float(np.sqrt(np.sum(integrand)))


def _check_tail_decay(y, integrand):
    """Flag integrands that do not decay toward the end of the domain.

    The last few nodes are skipped: derivative stencils against a clamped
    boundary node produce a spike there whose weighted contribution is
    negligible, whereas a genuinely non-integrable field grows globally.
    """
    live = np.nonzero(integrand > 0)[0]
    if len(live) < 32:
        return
    i1 = live[-1] - 5
    n = i1 - live[0] + 1
    if n < 32:
        return
    last = integrand[i1 - n // 8: i1 + 1]
    prev = integrand[i1 - n // 4: i1 - n // 8]
    peak = float(np.max(integrand))
    if len(last) and len(prev) and np.mean(last) >= np.mean(prev) and np.mean(last) > 1e-6 * peak:
        raise NonIntegrableTailError(
            "weighted integrand does not decay at the domain end; "
            "the norm does not converge"
        )


def outer_norms(field_values, ctx: DiagnosticsContext, s: float):
    """Sup-norms of the outer part f*(1 - chi_K(xi)), xi = y s^(-1/(2 ell)).

    Returns (sup |f_ex|, sup |y d/dy f_ex|, sup |y f_ex|).
    """
    y = ctx.y
    sm = float(s) ** (-1.0 / (2 * ctx.ell))
    xi = y * sm
    if xi[-1] < 2 * ctx.K:
        raise CoverageError(
            f"grid reaches xi={xi[-1]:.2f} < 2K={2 * ctx.K:.0f}; outer norms need "
            "coverage past the cutoff support"
        )
    ex = np.asarray(field_values, float) * (1.0 - pr.cutoff_chi(ctx.cut_spec, xi))
    return (
        float(np.max(np.abs(ex))),
        float(np.max(np.abs(euler_derivative(y, ex)))),
        float(np.max(np.abs(y * ex))),
    )


# ---------------------------------------------------------------------------
# Full decomposition against the bootstrap set
# ---------------------------------------------------------------------------

@dataclass
class ModeDecomposition:
    coefficients: np.ndarray     # eps_hat_0 .. eps_hat_{2l-1}
    tilde: np.ndarray            # residual field on the grid
    tilde_norm: float            # || tilde ||_rho


@dataclass
class ShrinkingReport:
    s: float
    A: float
    measured: dict
    ratios: dict
    verdict: str                 # inside / boundary / outside
    worst: str                   # name of the largest-ratio bound
    boundary_delta: float = 0.05

    @property
    def max_ratio(self) -> float:
        return max(self.ratios.values())


def bound_values(d: int, ell: int, s: float, A: float) -> dict:
    """Time-dependent bootstrap bounds of the shrinking set."""
    out = {}
    for k in range(2 * ell):
        if k != ell:
            out[f"mode_{k}"] = A / s**2
    out["null_mode"] = A**2 * math.log(s) / s**2
    out["l2rho"] = A / s**3
    for j in range(3):
        out[f"flat_{j}"] = A ** (1 + j) * s ** (-1.0 - 3.0 / (2 * ell))
    out["out_sup"] = A**4 * s ** (-1.0 / ell)
    out["out_dysup"] = A**5 * s ** (-1.0 / ell)
    out["out_ysup"] = A**4 * s ** (-1.0 / (2 * ell))
    return out


def decompose(
    v_values,
    s: float,
    ctx: DiagnosticsContext,
    A: float,
    boundary_delta: float = 0.05,
):
    """Subtract the refined ansatz and evaluate every shrinking-set bound.

    Returns (ModeDecomposition, ShrinkingReport).
    """
    p = ctx.params
    y = ctx.y
    v = np.asarray(v_values, float)
    psi_arr = pr.psi(p, y, s)
    eps_hat = v - psi_arr
    eps = eps_hat + pr.psi_hat(p, y, s)        # v - Q, for the outer norms

    coeffs = ctx.project_all(eps_hat)
    tilde = eps_hat - np.sum(coeffs[:, None] * ctx.phi, axis=0)
    tilde_norm = ctx.rho_norm(tilde)

    measured = {}
    for k, c in enumerate(coeffs):
        if k != ctx.ell:
            measured[f"mode_{k}"] = abs(float(c))
    measured["null_mode"] = abs(float(coeffs[ctx.ell]))
    measured["l2rho"] = tilde_norm
    for j in range(3):
        measured[f"flat_{j}"] = flat_norm(eps_hat, ctx, j=j)
    o0, o1, o2 = outer_norms(eps, ctx, s)
    measured["out_sup"], measured["out_dysup"], measured["out_ysup"] = o0, o1, o2

    bounds = bound_values(ctx.d, ctx.ell, s, A)
    ratios = {name: measured[name] / bounds[name] for name in bounds}
    worst = max(ratios, key=ratios.get)
    top = ratios[worst]
    if top > 1.0 + boundary_delta:
        verdict = "outside"
    elif top >= 1.0 - boundary_delta:
        verdict = "boundary"
    else:
        verdict = "inside"
    return (
        ModeDecomposition(coefficients=coeffs, tilde=tilde, tilde_norm=tilde_norm),
        ShrinkingReport(
            s=float(s), A=float(A), measured=measured, ratios=ratios,
            verdict=verdict, worst=worst, boundary_delta=boundary_delta,
        ),
    )


# ---------------------------------------------------------------------------
# Mode-ODE residuals and energy monitors
# ---------------------------------------------------------------------------

def _check_uniform(s_values):
    s = np.asarray(s_values, float)
    if len(s) < 5:
        raise UnfitError("need at least 5 uniformly spaced samples")
    ds = np.diff(s)
    if np.max(np.abs(ds - ds[0])) > 1e-8 * abs(ds[0]):
        raise UnfitError("samples must be uniformly spaced in s")
    return s, ds[0]


def mode_ode_residuals(s_values, coefficients, ell: int):
    """Residuals of the per-mode linear ODEs along a trajectory.

    For k != ell the growing/decaying modes satisfy eps_k' ~ (1 - k/ell) eps_k,
    so the residual is r_k = eps_k' - (1 - k/ell) eps_k (the sign convention
    that makes a pure growing mode exactly homogeneous).  The null mode is
    measured against its slow decay: r_ell = eps_ell' + (2/s) eps_ell.

    Returns (s_mid, residuals[n-2, 2*ell], slopes[2*ell]) with slopes fitted
    on log|r_k| vs log s.
    """
    s, ds = _check_uniform(s_values)
    c = np.asarray(coefficients, float)
    if c.shape[0] != len(s) or c.shape[1] != 2 * ell:
        raise UnfitError("coefficient array must be (len(s), 2*ell)")
    dc = (c[2:] - c[:-2]) / (2 * ds)
    cm = c[1:-1]
    sm = s[1:-1]
    res = np.empty_like(cm)
    for k in range(2 * ell):
        if k == ell:
            res[:, k] = dc[:, k] + (2.0 / sm) * cm[:, k]
        else:
            res[:, k] = dc[:, k] - (1.0 - k / ell) * cm[:, k]
    slopes = np.full(2 * ell, np.nan)
    for k in range(2 * ell):
        mag = np.abs(res[:, k])
        good = mag > 0
        if np.count_nonzero(good) >= 3:
            slopes[k] = np.polyfit(np.log(sm[good]), np.log(mag[good]), 1)[0]
    return sm, res, slopes


@dataclass
class EnergyMonitorReport:
    s: np.ndarray
    lhs: np.ndarray              # (n-2, 4): d/ds of squared norms
    rhs: np.ndarray              # (n-2, 4): calibrated right-hand sides
    violations: np.ndarray       # boolean mask where lhs > rhs
    constants: np.ndarray        # calibrated C per inequality


def energy_monitors(s_values, tilde_norms, flat_norms, ell: int, delta: float | None = None,
                    safety: float = 2.0):
    """Monitor the dissipation inequalities along a trajectory.

    Row j=0 tracks d/ds ||tilde||_rho^2 <= -(1/2)||tilde||_rho^2 + C0 s^-6;
    rows j=1..3 track the three intermediate-norm inequalities with decay
    rate `delta` (default 1/(8 ell)) and forcing C_j s^(-2-3/ell) plus the
    lower-order norms.  The constants are calibrated on the first interior
    slice (times `safety`) and violations are flagged, not raised.
    """
    s, ds = _check_uniform(s_values)
    tn = np.asarray(tilde_norms, float)
    fn = np.asarray(flat_norms, float)
    if fn.shape != (len(s), 3):
        raise UnfitError("flat_norms must be (len(s), 3)")
    if delta is None:
        delta = 1.0 / (8 * ell)

    sq = np.column_stack([tn**2, fn[:, 0] ** 2, fn[:, 1] ** 2, fn[:, 2] ** 2])
    dsq = (sq[2:] - sq[:-2]) / (2 * ds)
    mid = sq[1:-1]
    sm = s[1:-1]
    forcing = sm ** (-2.0 - 3.0 / ell)

    base = np.column_stack([
        -0.5 * mid[:, 0],
        -delta * mid[:, 1],
        -delta * mid[:, 2],
        -delta * mid[:, 3],
    ])
    extra = np.column_stack([
        sm ** (-6.0),
        forcing,
        mid[:, 1] + forcing,
        mid[:, 2] + mid[:, 1] + forcing,
    ])
    consts = np.maximum((dsq[0] - base[0]) / extra[0], 0.0) * safety
    rhs = base + consts[None, :] * extra
    violations = dsq > rhs + 1e-300
    return EnergyMonitorReport(s=sm, lhs=dsq, rhs=rhs, violations=violations, constants=consts)


# ---------------------------------------------------------------------------
# Discrete spectrum of the weighted radial operator
# ---------------------------------------------------------------------------

def discrete_spectrum(d: int, n: int = 2000, y_max: float = 30.0, count: int = 6):
    """Leading eigenvalues of Lap_{d+2} - (1/(2 ell)) y d/dy in L^2_rho.

    The operator is (1/rho) d/dy (rho d/dy .), discretized in flux form on a
    cell-centered grid so the weighted matrix is symmetric by construction;
    expected eigenvalues are 0, -1/ell, -2/ell, ...
    """
    eb.check_dimension(d)
    if n < 8:
        raise ValueError("need at least 8 cells")
    h = y_max / n
    centers = (np.arange(n) + 0.5) * h
    faces = np.arange(n + 1) * h
    rho_c = rho_weight(d, centers)
    rho_f = rho_weight(d, faces)
    rho_f[0] = 0.0          # no flux through the origin (weight vanishes)
    rho_f[-1] = 0.0         # numerically zero anyway for y_max >= 30

    if not (np.all(np.isfinite(rho_c)) and np.all(rho_c > 0) and np.all(rho_f >= 0)):
        raise AssemblyError("weight samples are not positive and finite")

    # symmetric similarity transform of the flux-form operator
    diag = -(rho_f[1:] + rho_f[:-1]) / (rho_c * h * h)
    off = rho_f[1:-1] / (h * h * np.sqrt(rho_c[:-1] * rho_c[1:]))
    if not np.all(np.isfinite(off)):
        raise AssemblyError("off-diagonal assembly produced non-finite entries")

    vals = eigh_tridiagonal(diag, off, select="i",
                            select_range=(n - count, n - 1), eigvals_only=True)
    return vals[::-1]       # descending: ~ {0, -1/ell, ...}


# ---------------------------------------------------------------------------
# Pointwise bound and semigroup kernel
# ---------------------------------------------------------------------------

def pointwise_bound_check(field_values, y, s: float, A: float, ell: int, C: float = 1.0):
    """Check |f| + |y f'| <= C A^3 s^(-1-3/(2 ell)) <y>^(2 ell + 1) pointwise.

    Returns (ok, worst_ratio).
    """
    y = np.asarray(y, float)
    f = np.asarray(field_values, float)
    lhs = np.abs(f) + np.abs(euler_derivative(y, f))
    rhs = C * A**3 * float(s) ** (-1.0 - 3.0 / (2 * ell)) * (1.0 + y * y) ** (ell + 0.5)
    ratio = float(np.max(lhs / rhs))
    return ratio <= 1.0, ratio


def semigroup_kernel(eta: float, s: float, z, xi):
    """Transition kernel of the drift-diffusion semigroup exp(s (Lap - eta x.grad)).

    Mean z*exp(-eta*s), variance (1 - exp(-2 eta s))/eta per coordinate; the
    kernel integrates to 1 in xi.  Scalars are treated as one-dimensional
    points, arrays of shape (dim,) as points of R^dim.
    """
    if s <= 0:
        raise ValueError("semigroup time must be positive")
    z = np.atleast_1d(np.asarray(z, float))
    xi = np.atleast_1d(np.asarray(xi, float))
    if z.shape != xi.shape:
        raise ValueError("z and xi must have the same shape")
    dim = z.shape[-1] if z.ndim else 1
    var = (1.0 - math.exp(-2.0 * eta * s)) / eta
    mean = z * math.exp(-eta * s)
    quad = np.sum((mean - xi) ** 2, axis=-1)
    return (2.0 * math.pi * var) ** (-dim / 2.0) * np.exp(-0.5 * quad / var)
