import numpy as np
import pytest
from scipy import optimize as sopt

from pileup import discrete as D
from pileup import optimize as O
from pileup.potential import v, v_prime


def test_single_wall_scalar_oracle():
    # n = 1, case 2, beta = 1: minimize V(x) + x, i.e. V'(x) = -1
    xs = sopt.brentq(lambda x: v_prime(x) + 1.0, 1e-3, 1.0, xtol=1e-15)
    res = O.minimize(2, 1.0, 1)
    assert res.converged
    assert res.x[0] == pytest.approx(xs, abs=1e-9)
    assert res.x[0] == pytest.approx(0.0982, abs=1e-4)
    assert res.energy == pytest.approx(v(xs) + xs, abs=1e-12)


@pytest.mark.parametrize("k,beta,n", [(2, 0.01, 60), (3, 0.1, 80), (4, 1.0, 80)])
def test_minimizer_is_stationary_and_start_independent(k, beta, n):
    res = O.minimize(k, beta, n)
    assert res.converged
    assert O.stationarity_residual(k, res.x, beta) < 1e-7
    assert np.all(np.diff(np.concatenate(([0.0], res.x))) > 0)
    rng = np.random.default_rng(k)
    g = (1 + 0.4 * rng.uniform(-1, 1, n)) / n
    res2 = O.minimize(k, beta, n, O.SolveOptions(initial=np.cumsum(g)))
    assert np.max(np.abs(res2.x - res.x)) < 1e-6
    # convex energy: the minimum value beats any perturbation
    assert D.energy(k, res.x * 1.01, beta) > res.energy


def test_energy_history_non_increasing():
    res = O.minimize(3, 0.1, 50)
    assert np.all(np.diff(res.energies) <= 0)
    assert res.energies[-1] == pytest.approx(res.energy, abs=1e-10)


def test_plain_projected_gradient_agrees():
    a = O.minimize(3, 0.2, 40)
    b = O.minimize(3, 0.2, 40, O.SolveOptions(memory=0))
    assert a.converged and b.converged
    assert np.max(np.abs(a.x - b.x)) < 1e-6


@pytest.mark.slow
def test_case5_minimizer_robust():
    n, beta = 200, 1e5
    ref = O.minimize(5, beta, n)
    assert ref.converged
    rng = np.random.default_rng(0)
    g = (1 + 0.3 * rng.uniform(-1, 1, n)) / n
    jit = O.minimize(5, beta, n, O.SolveOptions(initial=np.cumsum(g)))
    pgd = O.minimize(5, beta, n, O.SolveOptions(memory=0, max_iters=20000))
    assert jit.converged and pgd.converged
    assert np.max(np.abs(jit.x - ref.x)) < 1e-8
    assert np.max(np.abs(pgd.x - ref.x)) < 1e-8
    assert ref.x[-1] == pytest.approx(1.189, abs=2e-3)


def test_case1_converges():
    res = O.minimize(1, 0.01 / 40, 40)
    assert res.converged
    assert O.stationarity_residual(1, res.x, 0.01 / 40) < 1e-7


def test_max_iters_reports_not_converged():
    res = O.minimize(3, 0.1, 50, O.SolveOptions(max_iters=2))
    assert not res.converged
    assert res.iterations == 2
    assert "max_iters" in res.message


def test_options_validation():
    with pytest.raises(ValueError):
        O.SolveOptions(grad_tol=0)
    with pytest.raises(ValueError):
        O.SolveOptions(shrink=1.5)
    with pytest.raises(ValueError):
        O.initial_configuration(3, np.array([0.1, 0.1, 0.2]))
    with pytest.raises(ValueError):
        O.initial_configuration(3, "random")
    assert np.allclose(O.initial_configuration(4), [0.25, 0.5, 0.75, 1.0])


def test_gradient_flow_reaches_minimizer():
    n, beta = 20, 0.2
    x0 = O.initial_configuration(n)
    tr = O.gradient_flow(3, beta, n, x0, O.FlowOptions(t_end=1e4, grad_tol=1e-10))
    ref = O.minimize(3, beta, n, O.SolveOptions(grad_tol=1e-11))
    assert np.max(np.abs(tr.final - ref.x)) < 1e-8
    assert np.all(np.diff(tr.energies) <= 0)
    assert tr.stopped in ("grad_tol", "stationary")
    assert tr.accepted == len(tr.energies) - 1


def test_gradient_flow_single_wall_relaxes():
    tr = O.gradient_flow(2, 1.0, 1, [1.0], O.FlowOptions(t_end=50.0))
    assert tr.final[0] == pytest.approx(0.098169, abs=1e-5)
    assert np.all(np.diff(tr.times) > 0)


def test_gradient_flow_mobility_rescales_time():
    x0 = O.initial_configuration(5)
    a = O.gradient_flow(3, 0.3, 5, x0, O.FlowOptions(t_end=0.01, dt_max=1e-4, grow=1.0, dt_init=1e-4))
    b = O.gradient_flow(3, 0.3, 5, x0, O.FlowOptions(t_end=0.02, dt_max=2e-4, grow=1.0, dt_init=2e-4,
                                                       mobility=2.0))
    assert np.allclose(a.final, b.final, atol=1e-12)


def test_flow_options_validation():
    with pytest.raises(ValueError):
        O.FlowOptions(t_end=0)
    with pytest.raises(ValueError):
        O.FlowOptions(mobility=-1)
