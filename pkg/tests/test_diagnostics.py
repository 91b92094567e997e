
import numpy as np
import pytest

from ksblowup import diagnostics as dg
from ksblowup import eigenbasis as eb
from ksblowup import profile as pr
from ksblowup.exactpoly import ExactPoly


@pytest.fixture(scope="module")
def ctx4():
    return dg.DiagnosticsContext(d=4, y=np.linspace(0.0, 40.0, 8001), K=10.0)


@pytest.fixture(scope="module")
def ctx3():
    return dg.DiagnosticsContext(d=3, y=np.linspace(0.0, 45.0, 9001), K=10.0)


# ---------------------------------------------------------------------------
# mode projections
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("m", range(4))
def test_projection_is_delta_on_eigenmodes(ctx4, m):
    f = eb.partial_mass_eigen(4, m).evalf(ctx4.y)
    proj = ctx4.project_all(f)
    want = np.eye(4)[m]
    assert np.max(np.abs(proj - want)) < 1e-8


def test_projection_matches_exact_rational(ctx4):
    # a plain polynomial projected by quadrature vs the exact inner product
    poly = ExactPoly([2, 0, 1], "y")        # 2 + y^4-coefficient in y^2-powers
    f = poly.evalf(ctx4.y)
    for k in range(4):
        phk = eb.partial_mass_eigen(4, k)
        exact = float(eb.inner_product(4, "rho", poly, phk)
                      / eb.inner_product(4, "rho", phk, phk))
        assert ctx4.project(f, k) == pytest.approx(exact, abs=1e-10)


def test_projection_of_ansatz_matches_null_coefficient():
    # eps = psi - 1/d projects on the zero mode like -1/(B s) at large s
    d = 4
    p = pr.make_profile_params(d)
    y = np.linspace(0.0, 40.0, 8001)
    ctx = dg.DiagnosticsContext(d=d, y=y, K=10.0, params=p)
    s = 1e5
    f = pr.psi(p, y, s) - 1.0 / d
    got = ctx.project(f, p.ell)
    assert got == pytest.approx(-1.0 / (p.B * s), rel=1e-2)


def test_coverage_error():
    with pytest.raises(dg.CoverageError):
        dg.DiagnosticsContext(d=4, y=np.linspace(0.0, 8.0, 200))


def test_mode_project_one_shot():
    y = np.linspace(0.0, 40.0, 4001)
    f = eb.partial_mass_eigen(3, 2).evalf(y)
    assert dg.mode_project(f, 2, 3, y) == pytest.approx(1.0, abs=1e-8)


# ---------------------------------------------------------------------------
# flat norm
# ---------------------------------------------------------------------------

def test_flat_norm_zero(ctx4):
    assert dg.flat_norm(np.zeros_like(ctx4.y), ctx4) == 0.0


def test_flat_norm_closed_form_sharp():
    ell, K = 2, 10.0
    ctx = dg.DiagnosticsContext(d=4, y=np.linspace(0, 400, 400001), K=K,
                                coverage_tol=np.inf)
    f = ctx.y ** (2 * ell)
    got = dg.flat_norm(f, ctx, j=0, variant="sharp")
    assert got == pytest.approx((2 * K**2) ** -0.5, rel=1e-3)
    smooth = dg.flat_norm(f, ctx, j=0, variant="smooth")
    assert (8 * K**2) ** -0.5 < smooth < (2 * K**2) ** -0.5


def test_flat_norm_divergent_tail_flagged():
    ctx = dg.DiagnosticsContext(d=4, y=np.linspace(0, 400, 200001), K=10.0,
                                coverage_tol=np.inf)
    with pytest.raises(dg.NonIntegrableTailError):
        dg.flat_norm(ctx.y ** (2 * ctx.ell + 2), ctx, j=0)


def test_flat_norm_homogeneity(ctx4):
    f = np.exp(-0.05 * ctx4.y**2) * ctx4.y**2
    a = dg.flat_norm(3.0 * f, ctx4, j=1)
    b = dg.flat_norm(f, ctx4, j=1)
    assert a == pytest.approx(3.0 * b, rel=1e-13)


def test_flat_norm_unresolved_warning(ctx4):
    f = np.sign(np.sin(50.0 * ctx4.y)) * np.exp(-0.01 * ctx4.y**2)
    with pytest.warns(RuntimeWarning):
        dg.flat_norm(f, ctx4, j=1)


def test_flat_norm_bad_order(ctx4):
    with pytest.raises(ValueError):
        dg.flat_norm(np.zeros_like(ctx4.y), ctx4, j=3)


# ---------------------------------------------------------------------------
# outer norms
# ---------------------------------------------------------------------------

def test_outer_norms_support():
    d, K, s = 4, 2.0, 16.0
    y = np.linspace(0.0, 40.0, 16001)
    ctx = dg.DiagnosticsContext(d=d, y=y, K=K)
    scale = s ** 0.25
    inside = np.where(y <= K * scale, 1.0, 0.0)
    assert dg.outer_norms(inside, ctx, s) == (0.0, 0.0, 0.0)
    const = np.full_like(y, 0.7)
    o0, _, _ = dg.outer_norms(const, ctx, s)
    assert o0 == pytest.approx(0.7)
    with np.errstate(divide="ignore"):
        inv = np.where(y > 0, 1.0 / y, 0.0)
    _, _, oy = dg.outer_norms(inv, ctx, s)
    assert oy == pytest.approx(1.0, abs=1e-12)


def test_outer_norms_coverage():
    ctx = dg.DiagnosticsContext(d=4, y=np.linspace(0.0, 30.0, 2001), K=10.0)
    with pytest.raises(dg.CoverageError):
        dg.outer_norms(np.zeros(2001), ctx, 1e4)


# ---------------------------------------------------------------------------
# decompose
# ---------------------------------------------------------------------------

def test_decompose_of_pure_ansatz():
    d = 4
    y = np.linspace(0.0, 60.0, 6001)
    ctx = dg.DiagnosticsContext(d=d, y=y, K=10.0)
    s, A = 50.0, 20.0
    v = pr.psi(ctx.params, y, s)
    dec, rep = dg.decompose(v, s, ctx, A)
    assert np.max(np.abs(dec.coefficients)) < 1e-12
    assert dec.tilde_norm < 1e-12
    assert rep.verdict == "inside"


def test_decompose_saturating_mode():
    d = 4
    y = np.linspace(0.0, 60.0, 6001)
    ctx = dg.DiagnosticsContext(d=d, y=y, K=10.0)
    s, A = 50.0, 20.0
    bump = (A / s**2) * eb.partial_mass_eigen(d, 0).evalf(y)
    v = pr.psi(ctx.params, y, s) + bump
    dec, rep = dg.decompose(v, s, ctx, A)
    assert rep.ratios["mode_0"] == pytest.approx(1.0, abs=1e-6)
    assert rep.verdict == "boundary"
    assert rep.worst == "mode_0"


def test_decompose_idempotent_and_parseval():
    d = 4
    y = np.linspace(0.0, 60.0, 6001)
    ctx = dg.DiagnosticsContext(d=d, y=y, K=10.0)
    s, A = 50.0, 20.0
    v = pr.psi(ctx.params, y, s) + 1e-3 * np.exp(-0.2 * y**2) * (1 - y + 0.3 * y**2)
    dec, _ = dg.decompose(v, s, ctx, A)
    # re-projecting the residual gives ~0 for all stored modes
    reproj = ctx.project_all(dec.tilde)
    assert np.max(np.abs(reproj)) < 1e-10
    # Parseval-type consistency for the natural part
    nat = np.sum(dec.coefficients[:, None] * ctx.phi, axis=0)
    lhs = ctx.rho_norm(nat) ** 2
    rhs = float(np.sum(dec.coefficients**2 * ctx.phi_norm_sq))
    assert lhs == pytest.approx(rhs, rel=1e-10)


def test_shrinking_ratios_monotone_under_scaling():
    d = 4
    y = np.linspace(0.0, 60.0, 6001)
    ctx = dg.DiagnosticsContext(d=d, y=y, K=10.0)
    s, A = 50.0, 20.0
    base = pr.psi(ctx.params, y, s)
    noise = 1e-4 * np.exp(-0.1 * y**2) * np.cos(y)
    _, rep1 = dg.decompose(base + noise, s, ctx, A)
    _, rep2 = dg.decompose(base + 2.0 * noise, s, ctx, A)
    for name in rep1.ratios:
        assert rep2.ratios[name] >= rep1.ratios[name] - 1e-12


# ---------------------------------------------------------------------------
# mode ODE residuals
# ---------------------------------------------------------------------------

def test_mode_ode_residual_null_closed_form():
    ell = 2
    s = np.linspace(50.0, 70.0, 801)
    c = 1e-3
    coeffs = np.zeros((len(s), 2 * ell))
    coeffs[:, ell] = c * np.log(s) / s**2
    sm, res, slopes = dg.mode_ode_residuals(s, coeffs, ell)
    # d/ds (c log s / s^2) + (2/s)(c log s / s^2) = c / s^3 exactly
    assert np.max(np.abs(res[:, ell] - c / sm**3)) < 1e-9
    assert slopes[ell] == pytest.approx(-3.0, abs=0.05)


def test_mode_ode_residual_homogeneous_growing_mode():
    ell = 2
    s = np.linspace(50.0, 52.0, 401)
    coeffs = np.zeros((len(s), 2 * ell))
    coeffs[:, 0] = 1e-6 * np.exp(s - 50.0)
    sm, res, _ = dg.mode_ode_residuals(s, coeffs, ell)
    # growing mode is homogeneous for r_k = eps' - (1 - k/l) eps, up to the
    # O(ds^2) truncation of the centered derivative
    ds = s[1] - s[0]
    assert np.max(np.abs(res[:, 0])) < ds**2 * np.max(coeffs[:, 0])


def test_mode_ode_residual_guards():
    with pytest.raises(dg.UnfitError):
        dg.mode_ode_residuals([1.0, 2.0], np.zeros((2, 4)), 2)
    with pytest.raises(dg.UnfitError):
        dg.mode_ode_residuals([1, 2, 4, 8, 16], np.zeros((5, 4)), 2)


# ---------------------------------------------------------------------------
# energy monitors
# ---------------------------------------------------------------------------

def test_energy_monitors_steady_state():
    s = np.linspace(50.0, 55.0, 51)
    rep = dg.energy_monitors(s, np.zeros(51), np.zeros((51, 3)), ell=2)
    assert not rep.violations.any()


def test_energy_monitors_flags_growth():
    s = np.linspace(50.0, 55.0, 201)
    tilde = 1e-6 * np.exp(2.0 * (s - 50.0))          # violently growing
    flats = np.tile(1e-8, (len(s), 3))
    rep = dg.energy_monitors(s, tilde, flats, ell=2)
    assert rep.violations[:, 0].any()


def test_energy_monitors_accepts_decaying():
    s = np.linspace(50.0, 55.0, 201)
    tilde = 1e-4 * (50.0 / s) ** 3
    flats = np.stack([1e-5 * (50.0 / s) ** 2] * 3, axis=1)
    rep = dg.energy_monitors(s, tilde, flats, ell=2)
    frac = rep.violations.mean()
    assert frac < 0.05


# ---------------------------------------------------------------------------
# discrete spectrum
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("d", [3, 4])
def test_spectrum_values(d):
    ell = eb.ell_of(d)
    vals = dg.discrete_spectrum(d, n=2000, y_max=30.0, count=6)
    assert np.max(np.abs(vals - (-np.arange(6) / ell))) < 1e-3


def test_spectrum_refinement_improves():
    errs = []
    for n in (250, 500, 1000):
        vals = dg.discrete_spectrum(4, n=n, y_max=30.0, count=6)
        errs.append(np.max(np.abs(vals - (-np.arange(6) / 2.0))))
    assert errs[2] < errs[1] < errs[0]
    # roughly second order: each doubling gains at least a factor ~2
    assert errs[0] / errs[1] > 2.0 and errs[1] / errs[2] > 2.0


def test_spectrum_constant_mode_is_zero():
    vals = dg.discrete_spectrum(4, n=500, y_max=30.0, count=1)
    assert abs(vals[0]) < 1e-6


# ---------------------------------------------------------------------------
# pointwise bound and semigroup kernel
# ---------------------------------------------------------------------------

def test_pointwise_bound_check():
    y = np.linspace(0.0, 30.0, 3001)
    ok, ratio = dg.pointwise_bound_check(np.zeros_like(y), y, 50.0, 20.0, 2)
    assert ok and ratio == 0.0
    s, A, ell = 50.0, 2.0, 2
    shape = s ** (-1.0 - 3.0 / (2 * ell)) * y ** (2 * ell + 1)
    ok2, ratio2 = dg.pointwise_bound_check(shape, y, s, A, ell, C=1.0)
    # the saturating shape carries |f| + |y f'| = (2l + 2) |f|
    assert ratio2 == pytest.approx((2 * ell + 2) / A**3, rel=0.05)


def test_semigroup_kernel_normalization():
    xi = np.linspace(-40.0, 40.0, 40001)
    for z0, s in ((0.7, 0.5), (3.0, 2.0), (0.0, 10.0)):
        k = dg.semigroup_kernel(0.5, s, np.full((len(xi), 1), z0), xi[:, None])
        assert np.trapezoid(k, xi) == pytest.approx(1.0, abs=1e-8)


def test_semigroup_kernel_contraction_and_limit():
    xi = np.linspace(-40.0, 40.0, 40001)
    g = np.sin(xi) * np.exp(-0.01 * xi**2)
    for z0 in (-2.0, 0.5, 4.0):
        k = dg.semigroup_kernel(0.5, 1.3, np.full((len(xi), 1), z0), xi[:, None])
        assert abs(np.trapezoid(k * g, xi)) <= np.max(np.abs(g)) + 1e-12
    # s -> infinity: kernel forgets z
    k1 = dg.semigroup_kernel(0.5, 60.0, np.array([5.0]), np.array([0.3]))
    k2 = dg.semigroup_kernel(0.5, 60.0, np.array([-5.0]), np.array([0.3]))
    assert k1 == pytest.approx(k2, rel=1e-10)
    with pytest.raises(ValueError):
        dg.semigroup_kernel(0.5, 0.0, 1.0, 1.0)
