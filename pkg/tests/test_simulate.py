import math

import numpy as np
import pytest

from weakid.errors import NumericalError
from weakid.grid import Axis
from weakid.library import ode_poly_trig_library
from weakid.models import lorenz
from weakid.runs import reduced_model
from weakid.simulate import (CHUNK, OdeModel, ParticleEnsemble, histogram_density, integrate_ks,
                             integrate_ode, ks_initial_condition, simulate_ips)


def test_linear_decay():
    model = OdeModel(ode_poly_trig_library(1, 1), np.array([[0.0], [-1.0]]))
    d = integrate_ode(model, [1.0], Axis(11, 0.0, 1.0), tol=1e-10)
    assert abs(d.values[-1, 0] - math.exp(-1)) <= 1e-8


def test_lorenz_bounded():
    lib, W = reduced_model("lorenz")
    d = integrate_ode(OdeModel(lib, W), lorenz().u0, Axis(1001, 0.0, 10.0))
    assert np.max(np.abs(d.values)) < 100
    assert np.all(np.isfinite(d.values))


def test_ode_self_convergence():
    lib, W = reduced_model("fitzhugh_nagumo")
    ax = Axis(201, 0.0, 20.0)
    model = OdeModel(lib, W)
    ref = integrate_ode(model, [-1.0, 1.0], ax, tol=1e-12).values
    errs = [np.max(np.abs(integrate_ode(model, [-1.0, 1.0], ax, tol=tol).values - ref))
            for tol in (1e-6, 5e-7, 2.5e-7, 1.25e-7)]
    assert all(b <= a for a, b in zip(errs, errs[1:]))


def test_ode_model_rhs_matches_library():
    lib, W = reduced_model("lorenz")
    model = OdeModel(lib, W)
    u = np.array([1.0, 2.0, 3.0])
    assert np.allclose(model.rhs(0.0, u), [10 * (2 - 1), 28 - 2 - 3, 2 - 8 / 3 * 3])


def test_ode_blow_up_is_numerical_error():
    model = OdeModel(ode_poly_trig_library(1, 2), np.array([[0.0], [0.0], [1.0]]))
    with pytest.raises(NumericalError):
        integrate_ode(model, [1.0], Axis(11, 0.0, 2.0))


def test_ks_zero_is_equilibrium():
    d = integrate_ks(np.zeros(64), 32 * np.pi, Axis(11, 0.0, 5.0))
    assert np.all(d.values == 0.0)


def test_ks_conserves_mean():
    L = 32 * np.pi
    u0 = ks_initial_condition(256, L, seed=4) + 0.3
    d = integrate_ks(u0, L, Axis(101, 0.0, 50.0))
    means = d.values[..., 0].mean(axis=0)
    assert np.max(np.abs(means - means[0])) <= 1e-8


def test_ks_time_step_refinement():
    L = 32 * np.pi
    u0 = ks_initial_condition(128, L, seed=1)
    ax = Axis(11, 0.0, 10.0)
    finals = [integrate_ks(u0, L, ax, dt=dt).values[:, -1, 0] for dt in (0.05, 0.025, 0.0125)]
    ref = np.linalg.norm(finals[-1])
    d1 = np.linalg.norm(finals[0] - finals[1]) / ref
    d2 = np.linalg.norm(finals[1] - finals[2]) / ref
    assert d2 <= 1e-6
    # fourth-order scheme: successive differences shrink by about 2^4
    assert 10 <= d1 / d2 <= 24


def test_ks_grid_layout():
    L = 32 * np.pi
    d = integrate_ks(ks_initial_condition(256, L), L, Axis(3, 0.0, 1.0))
    x = d.grid.axes[0]
    assert x.n == 256 and x.lo == 0.0
    assert x.spacing == pytest.approx(L / 256, rel=1e-14)


def test_ks_rejects_non_power_of_two():
    with pytest.raises(ValueError):
        integrate_ks(np.zeros(100), 10.0, Axis(3, 0.0, 1.0))


def test_ks_unstable_coefficients_detected():
    L = 32 * np.pi
    with pytest.raises(NumericalError):
        integrate_ks(ks_initial_condition(64, L), L, Axis(41, 0.0, 20.0), coeffs=(-0.5, 1.0, 1.0))


def test_frozen_particles():
    x0 = np.linspace(-1, 1, 50)
    ens = ParticleEnsemble(x0, "ou", theta=0.0, D=0.0)
    tr = simulate_ips(ens, Axis(5, 0.0, 1.0), 0.01)
    assert np.array_equal(tr, np.tile(x0, (5, 1)))


def test_same_seed_same_paths():
    x0 = np.zeros(1000)
    ax = Axis(6, 0.0, 0.5)
    a = simulate_ips(ParticleEnsemble(x0, "ou", 1.0, 0.5, seed=11), ax, 0.01)
    b = simulate_ips(ParticleEnsemble(x0, "ou", 1.0, 0.5, seed=11), ax, 0.01)
    c = simulate_ips(ParticleEnsemble(x0, "ou", 1.0, 0.5, seed=12), ax, 0.01)
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_paths_do_not_depend_on_ensemble_size():
    ax = Axis(3, 0.0, 0.1)
    small = simulate_ips(ParticleEnsemble(np.zeros(CHUNK), "ou", 1.0, 0.5, seed=3), ax, 0.01)
    big = simulate_ips(ParticleEnsemble(np.zeros(CHUNK + 17), "ou", 1.0, 0.5, seed=3), ax, 0.01)
    assert np.array_equal(small, big[:, :CHUNK])


@pytest.fixture(scope="module")
def ou_paths():
    x0 = np.zeros(100_000)
    ens = ParticleEnsemble(x0, "ou", theta=1.0, D=0.5, seed=5)
    return simulate_ips(ens, Axis(6, 0.0, 6.0), 0.01)


def test_ou_stationary_variance(ou_paths):
    assert ou_paths[-1].var() == pytest.approx(0.5, rel=0.03)


def test_ou_stationary_histogram(ou_paths):
    x_axis = Axis(81, -4.0, 4.0)
    t_axis = Axis(6, 0.0, 6.0)
    d = histogram_density(ou_paths, x_axis, t_axis)
    x = x_axis.coords
    gauss = np.exp(-x**2 / (2 * 0.5)) / np.sqrt(2 * np.pi * 0.5)
    assert np.max(np.abs(d.values[:, -1, 0] - gauss)) <= 0.05


def test_histogram_single_bin_and_normalization():
    x_axis = Axis(11, 0.0, 1.0)
    t_axis = Axis(2, 0.0, 1.0)
    traj = np.vstack([np.full(40, 0.5), np.random.default_rng(0).uniform(0, 1, 40)])
    d = histogram_density(traj, x_axis, t_axis)
    dx = x_axis.spacing
    assert d.values[5, 0, 0] == pytest.approx(1 / dx)
    assert np.sum(d.values[:, 0, 0] != 0) == 1
    assert np.allclose(d.values[..., 0].sum(axis=0) * dx, 1.0)


def test_histogram_outside_fraction_reported():
    x_axis = Axis(11, 0.0, 1.0)
    row = np.r_[np.full(98, 0.5), 5.0, 6.0]
    with pytest.raises(ValueError, match="outside"):
        histogram_density(np.vstack([row, row]), x_axis, Axis(2, 0.0, 1.0))
    ok = np.r_[np.full(199, 0.5), 5.0]
    d = histogram_density(np.vstack([ok, ok]), x_axis, Axis(2, 0.0, 1.0))
    assert d.values[..., 0].sum(axis=0)[0] * x_axis.spacing == pytest.approx(199 / 200)


def test_particle_validation():
    with pytest.raises(ValueError):
        ParticleEnsemble(np.zeros(3), "brownian")
    with pytest.raises(ValueError):
        ParticleEnsemble(np.zeros(0), "ou")
    with pytest.raises(ValueError):
        ParticleEnsemble(np.zeros(3), "ou", D=-1.0)
    with pytest.raises(ValueError):
        simulate_ips(ParticleEnsemble(np.zeros(3), "ou"), Axis(3, 0.0, 1.0), 1.0)
