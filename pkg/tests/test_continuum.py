import math

import numpy as np
import pytest
from scipy import integrate

from pileup import continuum as C
from pileup import measures as M
from pileup import potential as P


def uniform(m=200, L=1.0):
    return C.DensityGrid(L, np.full(m, 1.0 / L))


# --- grid and profile bookkeeping


def test_density_grid_validation():
    with pytest.raises(ValueError):
        C.DensityGrid(1.0, np.full(10, 2.0))
    with pytest.raises(ValueError):
        C.DensityGrid(1.0, np.array([2.0, -0.5, 0.5]) * 1.0)
    with pytest.raises(ValueError):
        C.DensityGrid(0.0, np.ones(10))
    g = uniform(10)
    assert g.h == pytest.approx(0.1) and g.mass() == pytest.approx(1.0)
    assert g.cdf(0.35) == pytest.approx(0.35)
    assert g.support_end() == pytest.approx(1.0)


def test_closed_forms_have_unit_mass_and_support():
    for k, end in [(1, 2 / math.pi ** 2), (3, math.sqrt(2 / (3 * math.pi))), (5, 1.0)]:
        d = C.minimizer_closed_form(k, m=1000)
        assert d.mass() == pytest.approx(1.0, abs=1e-12)
        assert d.support == (0.0, pytest.approx(end))
        assert C.closed_form_cdf(k)(end) == pytest.approx(1.0, abs=1e-14)
    # the Head-Louat CDF integrates its density
    F = C.closed_form_cdf(1)
    val, _ = integrate.quad(lambda t: C._rho_k1(np.array([t]))[0], 0, 0.1, limit=200)
    assert F(0.1) == pytest.approx(val, rel=1e-8)


def test_closed_form_errors():
    with pytest.raises(C.UnsupportedClosedForm):
        C.minimizer_closed_form(2)
    with pytest.raises(C.DomainTooSmallError) as ei:
        C.minimizer_closed_form(3, L=0.3)
    assert ei.value.suggested_L == pytest.approx(C.LAMBDA3)


def test_xi_round_trip():
    d = C.minimizer_closed_form(3, m=800)
    xi = C.density_to_xi(d, m=800)
    back = C.xi_to_density(xi, L=d.L, m=800)
    # density is constant between quantiles, so the last 1/m of mass smears out
    assert M.w1_distance(d, back) < 1e-5
    with pytest.warns(C.NonInvertibleWarning):
        C.density_to_xi(C.DensityGrid(1.0, np.array([2.0, 0.0, 0.0, 2.0])))


# --- energies against independent integrals


def test_energy_k1_uniform():
    # int int_{[0,1]^2} log|x - y| = -3/2
    e = C.limit_energy(1, uniform(400))
    assert e == pytest.approx(3 / (4 * math.pi ** 2) + 0.5, abs=1e-12)


def test_energy_k2_uniform():
    c = 1.0
    pair, _ = integrate.quad(lambda u: (1 - u) * P.v(c * u), 0, 1, limit=200, epsabs=1e-14)
    ref = c * pair + 0.5
    assert ref == pytest.approx(0.543840936295722, abs=1e-12)
    assert C.limit_energy(2, uniform(400), c) == pytest.approx(ref, abs=1e-10)


def test_energy_k3_k4_k5_uniform():
    d = uniform(50)
    assert C.limit_energy(3, d) == pytest.approx(0.5 * C.A_INT + 0.5, rel=1e-14)
    assert C.limit_energy(4, d, 2.0) == pytest.approx(2.0 * P.v_eff(2.0) + 0.5, rel=1e-13)
    assert C.limit_energy(5, d) == pytest.approx(0.5)
    assert C.limit_energy(5, uniform(50, 0.5)) == math.inf


def test_energy_k3_closed_form_value():
    d = C.minimizer_closed_form(3, m=4000)
    assert C.limit_energy(3, d) == pytest.approx(2 * C.LAMBDA3 / 3, abs=1e-7)
    xi = C.density_to_xi(d, m=4000)
    assert C.limit_energy(3, xi) == pytest.approx(2 * C.LAMBDA3 / 3, abs=1e-6)


def test_energy_needs_c():
    with pytest.raises(ValueError):
        C.limit_energy(2, uniform())
    with pytest.raises(ValueError):
        C.limit_energy(4, uniform(), -1.0)


def test_energy_gradient_is_first_variation():
    rng = np.random.default_rng(0)
    d = C.DensityGrid.from_function(lambda x: 1.5 * (1 - x ** 2) * (1 + 0.2 * np.sin(5 * x)), 1.0, 60)
    pert = rng.standard_normal(60)
    pert -= pert.mean()
    for k, c in [(1, None), (2, 3.0), (3, None), (4, 1.0)]:
        g = C.energy_gradient(k, d, c)
        t = 1e-6
        plus = C.DensityGrid(1.0, d.rho + t * pert)
        minus = C.DensityGrid(1.0, d.rho - t * pert)
        fd = (C.limit_energy(k, plus, c) - C.limit_energy(k, minus, c)) / (2 * t)
        assert fd == pytest.approx(d.h * np.dot(g, pert), rel=1e-6, abs=1e-9)


@pytest.mark.parametrize("rho", [0.3, 1.0, 4.0])
def test_f4_derivatives(rho, c=1.5):
    h = 1e-5 * rho
    fd1 = (C.f4(np.array([rho + h]), c) - C.f4(np.array([rho - h]), c))[0] / (2 * h)
    assert C.f4_prime(np.array([rho]), c)[0] == pytest.approx(fd1, rel=1e-7)
    fd2 = (C.f4_prime(np.array([rho + h]), c) - C.f4_prime(np.array([rho - h]), c))[0] / (2 * h)
    assert C.f4_second(np.array([rho]), c)[0] == pytest.approx(fd2, rel=1e-6)
    assert C.f4(np.array([0.0]), c)[0] == 0.0


def test_cell_kernels_against_quadrature():
    h, m = 0.05, 6
    K = C.log_cell_kernel(h, m)
    for j in [0, 1, 4]:
        ref, _ = integrate.dblquad(lambda y, x: math.log(abs(x - y)) if x != y else 0.0,
                                   0, h, j * h, (j + 1) * h, epsabs=1e-12)
        assert K[j] == pytest.approx(ref, rel=1e-7, abs=1e-12)
    c = 3.0
    Kv = C.v_cell_kernel(c, h, m)
    for j in [0, 2, 5]:
        ref, _ = integrate.dblquad(lambda y, x: float(P.v(c * (x - y))) if x != y else 0.0,
                                   0, h, j * h, (j + 1) * h, epsabs=1e-12)
        assert Kv[j] == pytest.approx(ref, rel=1e-6, abs=1e-12)


# --- minimizers


def test_k3_numerical_matches_closed_form():
    num = C.minimizer_numerical(3, opts=C.ContinuumOptions(m=2000))
    ref = C.minimizer_closed_form(3, m=4000)
    assert num.info["converged"]
    assert M.w1_distance(num, ref) < 1e-6
    pgd = C.minimizer_numerical(3, opts=C.ContinuumOptions(m=400, L=0.6, method="pgd"))
    ex = C.minimizer_numerical(3, opts=C.ContinuumOptions(m=400, L=0.6))
    assert M.w1_distance(pgd, ex) < 1e-6


def test_k5_numerical_is_indicator():
    num = C.minimizer_numerical(5, opts=C.ContinuumOptions(m=400))
    assert np.max(num.rho) <= 1.0 + C.K5_TOL
    assert C.limit_energy(5, num) == pytest.approx(0.5, abs=1e-9)
    assert M.w1_distance(num, C.minimizer_closed_form(5, m=400)) < 1e-9


def test_k1_numerical_matches_head_louat():
    num = C.minimizer_numerical(1, opts=C.ContinuumOptions(m=500))
    ref = C.minimizer_closed_form(1, m=4000)
    assert M.w1_distance(num, ref) < 2e-4
    # the grid minimizer beats the cell averages of the exact minimizer on the same grid
    assert C.limit_energy(1, num) <= C.limit_energy(1, C.minimizer_closed_form(1, L=num.L, m=500)) + 1e-12


def test_k2_kkt_and_el():
    num = C.minimizer_numerical(2, 1.0, C.ContinuumOptions(m=800))
    assert num.info["converged"]
    assert C.el_residual(2, num, 1.0) < 1e-3
    # the minimizer beats the uniform density on [0, 1]
    e = C.limit_energy(2, num, 1.0)
    assert e < C.limit_energy(2, C.DensityGrid(num.L, np.interp(num.x, [0, 1], [1, 1], right=0.0)), 1.0)


def test_k4_el_and_kkt():
    num = C.minimizer_numerical(4, 1.0, C.ContinuumOptions(m=1000))
    assert num.info["converged"]
    assert C.el_residual(4, num, 1.0) < 1e-6
    g = C.energy_gradient(4, num, 1.0)
    sup = num.rho > 0
    assert np.ptp(g[sup]) < 1e-8
    assert np.all(g[~sup] >= g[sup].max() - 1e-8)


def test_domain_too_small():
    with pytest.raises(C.DomainTooSmallError):
        C.minimizer_numerical(3, opts=C.ContinuumOptions(m=200, L=0.2))
    d = C.minimizer_numerical(3, opts=C.ContinuumOptions(m=200))
    assert d.L >= C.LAMBDA3


def test_exact_method_rejected_for_nonlocal():
    with pytest.raises(ValueError):
        C.minimizer_numerical(1, opts=C.ContinuumOptions(method="exact"))


# --- stresses


def test_k1_closed_form_equilibrium():
    d = C.minimizer_closed_form(1, m=300)
    assert C.el_residual(1, d) < 1e-8


def test_k3_stress_exact():
    d = C.minimizer_closed_form(3, m=1000)
    st = C.internal_stress(3, d)
    inner = (d.x > 0.01) & (d.x < C.LAMBDA3 - 0.01)
    assert np.allclose(st.sigma[inner], 1.0, atol=1e-9)


def test_k4_gcz_comparison_defined_on_support():
    num = C.minimizer_numerical(4, 1.0, C.ContinuumOptions(m=400))
    st = C.internal_stress(4, num, 1.0)
    assert st.gcz is not None
    assert np.all(np.isnan(st.gcz[~st.mask]))
    assert np.all(np.isfinite(st.gcz[st.mask]))


def test_el_residual_k5_rejected():
    with pytest.raises(ValueError):
        C.el_residual(5, C.minimizer_closed_form(5, m=100))
