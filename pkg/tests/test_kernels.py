"""The numba and numpy kernel variants must agree; the env flag must select numpy."""

import os
import subprocess
import sys

import numpy as np
import pytest

from weakid import _accel, kernels


def test_correlate_rows_agree():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((7, 50))
    w = rng.standard_normal(11)
    ref = np.array([[np.dot(w, row[q:q + 11]) for q in range(40)] for row in a])
    assert np.allclose(kernels.correlate_rows_numpy(a, w), ref, rtol=1e-13, atol=1e-13)
    assert np.allclose(kernels.correlate_rows_numba(a, w), ref, rtol=1e-13, atol=1e-13)


def test_weak_operator_agree():
    rng = np.random.default_rng(1)
    S, C, N, F, Q = 3, 2, 200, 9, 25
    g = rng.standard_normal((S, C, N))
    sten = rng.standard_normal((S, F))
    offsets = np.arange(F) - F // 2
    qidx = rng.integers(F, N - F, Q)
    V = rng.standard_normal(F)
    d1, p1 = kernels.weak_operator_numpy(g, sten, offsets, qidx, V, 1)
    d2, p2 = kernels.weak_operator_numba(g, sten, offsets, qidx, V, 1)
    assert np.array_equal(p1, p2)
    assert np.allclose(d1, d2, rtol=1e-13, atol=1e-13)


@pytest.mark.parametrize("kind,params", [(kernels.DRIFT_OU, [1.0, 0.5, 0.0, 1.0]),
                                         (kernels.DRIFT_OSCILLATORY, [0.3, 0.5, 0.9, 0.1])])
def test_em_advance_agree(kind, params):
    rng = np.random.default_rng(2)
    x0 = rng.standard_normal(500)
    normals = rng.standard_normal((20, 500))
    p = np.array(params)
    a = kernels.em_advance_numpy(x0.copy(), normals, 0.01, kind, p)
    b = kernels.em_advance_numba(x0.copy(), normals, 0.01, kind, p)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


def test_bin_counts_agree():
    x = np.random.default_rng(3).normal(0, 2, 5000)
    c1, o1 = kernels.bin_counts_numpy(x, -3.0, 0.25, 24)
    c2, o2 = kernels.bin_counts_numba(x, -3.0, 0.25, 24)
    assert np.array_equal(c1, c2) and o1 == o2
    assert c1.sum() + o1 == x.size


def test_dispatch_follows_flag():
    expected = kernels.correlate_rows_numba if _accel.HAVE_NUMBA else kernels.correlate_rows_numpy
    assert kernels.correlate_rows is expected


def test_disable_flag_selects_numpy_and_matches():
    code = (
        "import numpy as np\n"
        "from weakid import _accel, kernels\n"
        "from weakid.grid import Axis\n"
        "from weakid.simulate import ParticleEnsemble, simulate_ips\n"
        "assert not _accel.HAVE_NUMBA\n"
        "assert kernels.em_advance is kernels.em_advance_numpy\n"
        "tr = simulate_ips(ParticleEnsemble(np.zeros(300), 'ou', 1.0, 0.5, seed=4), Axis(4, 0, 0.3), 0.01)\n"
        "np.save(__import__('sys').argv[1], tr)\n"
    )
    import tempfile

    from weakid.grid import Axis
    from weakid.simulate import ParticleEnsemble, simulate_ips

    with tempfile.TemporaryDirectory() as tmp:
        out = os.path.join(tmp, "tr.npy")
        env = dict(os.environ, WEAKID_DISABLE_NUMBA="1")
        subprocess.run([sys.executable, "-c", code, out], check=True, env=env)
        numpy_paths = np.load(out)
    here = simulate_ips(ParticleEnsemble(np.zeros(300), "ou", 1.0, 0.5, seed=4), Axis(4, 0, 0.3), 0.01)
    assert np.allclose(numpy_paths, here, rtol=1e-12, atol=1e-12)
