"""Blowup profile, refined ansatz and cutoff functions.

The profile Q(xi) is defined implicitly by

    c * xi**(2*ell) * Q**ell + d*Q - 1 = 0,      Q in (0, 1/d],

with the exact rational constant c from the eigenbasis module.  Small-xi
evaluation goes through the deficit delta = 1/d - Q solved multiplicatively,
so quantities like (1/d - Q)/xi**(2*ell) keep full relative accuracy where a
plain subtraction would cancel to noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import eigenbasis as eb


class ConvergenceError(RuntimeError):
    """Root finder failed to meet its residual contract."""


# ---------------------------------------------------------------------------
# Cutoff
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CutoffSpec:
    """Smooth transition from 1 on [0, K] to 0 on [2K, inf).

    The transition is the quintic smoothstep in (xi/K - 1), which is twice
    continuously differentiable; `degree` records the polynomial choice.
    """

    K: float = 1.0
    degree: int = 5

    def __post_init__(self):
        if self.K <= 0:
            raise ValueError("cutoff scale K must be positive")
        if self.degree != 5:
            raise ValueError("only the quintic (C^2) transition is implemented")


def cutoff_chi(spec: CutoffSpec, xi):
    u = np.asarray(xi, float) / spec.K
    t = np.clip(u - 1.0, 0.0, 1.0)
    return 1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)


def cutoff_chi_d1(spec: CutoffSpec, xi):
    """d(chi)/d(xi)."""
    u = np.asarray(xi, float) / spec.K
    t = np.clip(u - 1.0, 0.0, 1.0)
    inside = (u > 1.0) & (u < 2.0)
    return np.where(inside, -30.0 * t * t * (1.0 - t) ** 2, 0.0) / spec.K


def cutoff_chi_d2(spec: CutoffSpec, xi):
    """d^2(chi)/d(xi)^2."""
    u = np.asarray(xi, float) / spec.K
    t = np.clip(u - 1.0, 0.0, 1.0)
    inside = (u > 1.0) & (u < 2.0)
    return np.where(inside, -60.0 * t * (1.0 - t) * (1.0 - 2.0 * t), 0.0) / spec.K**2


UNIT_CUTOFF = CutoffSpec(K=1.0)


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProfileParams:
    """Floating-point view of the exact spectral constants for one dimension."""

    d: int
    ell: int
    two_alpha: float
    B: float
    c: float
    B_exact: Fraction
    c_exact: Fraction
    root_tol: float = 1e-13
    max_iter: int = 200
    # float coefficient tables (ascending powers of y^2) used by the ansatz
    phi_coeffs: tuple = field(default=())        # phi_{2 ell}
    phit_coeffs: tuple = field(default=())       # phi_tilde
    phit_lap_coeffs: tuple = field(default=())   # Lap_{d+2} phi_tilde

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError("profile constant must be positive")
        if not 0 < self.root_tol <= 1e-10:
            raise ValueError("root tolerance must lie in (0, 1e-10]")


def make_profile_params(d: int, root_tol: float = 1e-13, max_iter: int = 200) -> ProfileParams:
    eb.check_dimension(d)
    ell = eb.ell_of(d)
    b_exact = eb.compute_B(d)
    c_exact = eb.compute_c(d)
    phi = eb.partial_mass_eigen(d, ell)
    phit = eb.phi_tilde(d)
    return ProfileParams(
        d=d,
        ell=ell,
        two_alpha=float(2 * eb.alpha_of(d)),
        B=float(b_exact),
        c=float(c_exact),
        B_exact=b_exact,
        c_exact=c_exact,
        root_tol=root_tol,
        max_iter=max_iter,
        phi_coeffs=tuple(phi.float_coeffs()),
        phit_coeffs=tuple(phit.float_coeffs()),
        phit_lap_coeffs=tuple(phit.laplacian(d + 2).float_coeffs()),
    )


def _even_eval(coeffs, y):
    """Horner evaluation of an even polynomial given ascending y^2 coefficients."""
    y2 = np.asarray(y, float) ** 2
    acc = np.zeros_like(y2)
    for c in reversed(coeffs):
        acc = acc * y2 + c
    return acc


def _even_eval_deriv(coeffs, y):
    """d/dy of the same even polynomial (an odd polynomial)."""
    y = np.asarray(y, float)
    y2 = y * y
    acc = np.zeros_like(y2)
    for k in range(len(coeffs) - 1, 0, -1):
        acc = acc * y2 + 2 * k * coeffs[k]
    return acc * y


# ---------------------------------------------------------------------------
# Profile Q and its derivatives
# ---------------------------------------------------------------------------

_SMALL_T = 1e-2


def _solve_profile(params: ProfileParams, t):
    """Return (Q, deficit) solving t*Q^ell + d*Q = 1 elementwise.

    For t <= _SMALL_T the deficit 1/d - Q is iterated directly (no
    cancellation); elsewhere Newton from a seed with nonnegative residual
    descends monotonically (the residual is convex and increasing in Q).
    """
    d, ell = params.d, params.ell
    t = np.asarray(t, float)
    if not np.all(np.isfinite(t)) or np.any(t < 0):
        raise ValueError("similarity coordinate out of range (t not finite/positive)")

    small = t <= _SMALL_T
    ts = np.where(small, t, 0.0)
    delta = np.zeros_like(t)
    for _ in range(10):
        delta = ts / d * (1.0 / d - delta) ** ell

    with np.errstate(divide="ignore"):
        seed = np.where(t > 0, t ** (-1.0 / ell), np.inf)
    q = np.minimum(1.0 / d, seed)
    for _ in range(params.max_iter):
        g = t * q**ell + d * q - 1.0
        g = np.where(small, 0.0, g)
        if np.all(np.abs(g) <= params.root_tol):
            break
        gp = ell * t * q ** (ell - 1) + d
        q = q - g / gp
    else:
        raise ConvergenceError(
            f"profile root finder exceeded {params.max_iter} iterations "
            f"(worst residual {np.max(np.abs(g)):.3e})"
        )
    q = np.where(small, 1.0 / d - delta, q)
    delta = np.where(small, delta, 1.0 / d - q)
    return q, delta


def _as_xi(xi):
    xi = np.asarray(xi, dtype=float)
    if np.any(xi < 0):
        raise ValueError("similarity coordinate must be nonnegative")
    return xi


def q_of_xi(params: ProfileParams, xi):
    """Profile value Q(xi); Q(0) = 1/d exactly."""
    xi = _as_xi(xi)
    q, _ = _solve_profile(params, params.c * xi ** (2 * params.ell))
    return q if q.ndim else float(q)


def q_deficit(params: ProfileParams, xi):
    """1/d - Q(xi) with full relative accuracy near xi = 0."""
    xi = _as_xi(xi)
    _, delta = _solve_profile(params, params.c * xi ** (2 * params.ell))
    return delta if delta.ndim else float(delta)


def q_residual(params: ProfileParams, xi, q=None):
    """Defining-equation residual c xi^(2l) Q^l + d Q - 1 at the returned Q."""
    xi = _as_xi(xi)
    if q is None:
        q = q_of_xi(params, xi)
    t = params.c * xi ** (2 * params.ell)
    return t * np.asarray(q, float) ** params.ell + params.d * np.asarray(q, float) - 1.0


def q_prime(params: ProfileParams, xi):
    """dQ/dxi = -d*Q*(1/d - Q) / (xi*(1/2 - Q)); zero at the origin."""
    xi = _as_xi(xi)
    q, delta = _solve_profile(params, params.c * xi ** (2 * params.ell))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(xi > 0, -params.d * q * delta / (xi * (0.5 - q)), 0.0)
    return out if out.ndim else float(out)


def q_second(params: ProfileParams, xi):
    """d^2 Q/dxi^2 from differentiating the first-order profile equation."""
    xi = _as_xi(xi)
    q, delta = _solve_profile(params, params.c * xi ** (2 * params.ell))
    with np.errstate(divide="ignore", invalid="ignore"):
        qp = np.where(xi > 0, -params.d * q * delta / (xi * (0.5 - q)), 0.0)
        num = (2.0 * params.d * q - 1.0) * qp + xi * qp * qp + (q - 0.5) * qp
        out = np.where(xi > 0, -num / ((q - 0.5) * xi), 0.0)
    return out if out.ndim else float(out)


def f_of_xi(params: ProfileParams, xi):
    """Density-level profile F = d*Q + xi*Q'; F(0) = 1."""
    out = 1.0 - f_deficit(params, xi)
    return out if np.ndim(out) else float(out)


def f_deficit(params: ProfileParams, xi):
    """1 - F(xi), accurate near the origin."""
    xi = _as_xi(xi)
    q, delta = _solve_profile(params, params.c * xi ** (2 * params.ell))
    with np.errstate(divide="ignore", invalid="ignore"):
        xiqp = np.where(xi > 0, -params.d * q * delta / (0.5 - q), 0.0)
    out = params.d * delta - xiqp
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# Refined ansatz
# ---------------------------------------------------------------------------

def _check_s(s: float):
    if not s > 0:
        raise ValueError("self-similar time must be positive")
    return float(s)


def psi_hat(params: ProfileParams, y, s, cutoff: CutoffSpec = UNIT_CUTOFF):
    """Correction -(1/(B s)) * phi_tilde(y) * chi(y * s^(-1/(2 ell)))."""
    s = _check_s(s)
    y = np.asarray(y, float)
    xi = y * s ** (-1.0 / (2 * params.ell))
    return -(1.0 / (params.B * s)) * _even_eval(params.phit_coeffs, y) * cutoff_chi(cutoff, xi)


def psi(params: ProfileParams, y, s, cutoff: CutoffSpec = UNIT_CUTOFF):
    """Refined approximate solution Q(y s^(-1/(2 ell))) + psi_hat."""
    s = _check_s(s)
    y = np.asarray(y, float)
    xi = y * s ** (-1.0 / (2 * params.ell))
    out = q_of_xi(params, xi) + psi_hat(params, y, s, cutoff)
    return out if np.ndim(out) else float(out)


def ansatz_time_derivative(params: ProfileParams, y, s, cutoff: CutoffSpec = UNIT_CUTOFF):
    """Exact d(psi)/ds at fixed y."""
    s = _check_s(s)
    y = np.asarray(y, float)
    ell = params.ell
    xi = y * s ** (-1.0 / (2 * ell))
    qp = q_prime(params, xi)
    p = _even_eval(params.phit_coeffs, y)
    chi = cutoff_chi(cutoff, xi)
    chi1 = cutoff_chi_d1(cutoff, xi)
    u2 = 1.0 / (params.B * s * s)
    return -xi * qp / (2 * ell * s) + u2 * (p * chi + p * chi1 * xi / (2 * ell))


def ansatz_residual(params: ProfileParams, y, s, cutoff: CutoffSpec = UNIT_CUTOFF):
    """Generated error of the refined ansatz:

        E_hat = -d(psi)/ds + Lap_{d+2} Q + H psi_hat + NL(psi_hat),

    where H is the linearization of the self-similar flow at Q and
    NL(v) = d v^2 + y v v_y.  Evaluated analytically (no grid derivatives).
    """
    s = _check_s(s)
    y = np.asarray(y, float)
    d, ell = params.d, params.ell
    sm = s ** (-1.0 / (2 * ell))
    xi = y * sm

    q, delta = _solve_profile(params, params.c * xi ** (2 * ell))
    with np.errstate(divide="ignore", invalid="ignore"):
        qp = np.where(xi > 0, -d * q * delta / (xi * (0.5 - q)), 0.0)
        num = (2.0 * d * q - 1.0) * qp + xi * qp * qp + (q - 0.5) * qp
        qpp = np.where(xi > 0, -num / ((q - 0.5) * xi), 0.0)
        lap_q = sm * sm * (qpp + np.where(xi > 0, (d + 1) * qp / xi, 0.0))

    p = _even_eval(params.phit_coeffs, y)
    p1 = _even_eval_deriv(params.phit_coeffs, y)
    lap_p = _even_eval(params.phit_lap_coeffs, y)
    chi = cutoff_chi(cutoff, xi)
    chi1 = cutoff_chi_d1(cutoff, xi)
    chi2 = cutoff_chi_d2(cutoff, xi)

    u = 1.0 / (params.B * s)
    ph = -u * p * chi
    ph_y = -u * (p1 * chi + p * chi1 * sm)
    with np.errstate(divide="ignore", invalid="ignore"):
        over_y = np.where(y > 0, 1.0 / y, 0.0)
    lap_ph = -u * (
        lap_p * chi
        + 2.0 * p1 * chi1 * sm
        + p * chi2 * sm * sm
        + (d + 1) * over_y * p * chi1 * sm
    )

    h_ph = lap_ph - (0.5 - q) * y * ph_y + (2.0 * d * q - 1.0 + xi * qp) * ph
    nl = d * ph * ph + y * ph * ph_y
    dpsi_ds = -xi * qp / (2 * ell * s) + (u / s) * (p * chi + p * chi1 * xi / (2 * ell))
    return -dpsi_ds + lap_q + h_ph + nl


def selfsimilar_rhs_of_ansatz(params: ProfileParams, y, s, cutoff: CutoffSpec = UNIT_CUTOFF):
    """Analytic value of the self-similar flow applied to the ansatz field."""
    return ansatz_residual(params, y, s, cutoff) + ansatz_time_derivative(params, y, s, cutoff)


# ---------------------------------------------------------------------------
# Final profile
# ---------------------------------------------------------------------------

def final_profile(params: ProfileParams, r):
    """Predicted limiting density (d-2) (2/c)^(1/ell) |log r|^(1/ell) / r^2."""
    r = np.asarray(r, float)
    if np.any(r <= 0) or np.any(r >= 1):
        raise ValueError("final profile is defined on 0 < r < 1")
    amp = (params.d - 2) * (2.0 / params.c) ** (1.0 / params.ell)
    out = amp * np.abs(np.log(r)) ** (1.0 / params.ell) / r**2
    return out if out.ndim else float(out)


def final_profile_matched(params: ProfileParams, r, k0: float = 10.0):
    """Final profile via the matching-time construction, for comparison.

    For each r solve  r = k0 * sqrt(tau) * |log tau|^(1/(2 ell))  for the
    matching time-to-blowup tau, then return F(k0)/tau.
    """
    r = np.asarray(r, float)
    if np.any(r <= 0) or np.any(r >= 1):
        raise ValueError("matched profile is defined on 0 < r < 1")
    ell = params.ell
    f_k0 = float(f_of_xi(params, k0))
    out = np.empty_like(r)
    for i, ri in np.ndenumerate(r):
        lo, hi = 1e-300, 1.0 - 1e-12
        for _ in range(200):
            mid = math.sqrt(lo * hi)
            val = k0 * math.sqrt(mid) * abs(math.log(mid)) ** (1.0 / (2 * ell))
            if val > ri:
                hi = mid
            else:
                lo = mid
        out[i] = f_k0 / math.sqrt(lo * hi)
    return out if out.ndim else float(out)
