"""Compiled-vs-pure kernel parity: both backends implement the same
algorithms and must agree to near machine precision."""

import math

import numpy as np
import pytest

from bksbl.kernels import pykernels

ck = pytest.importorskip("bksbl.kernels._ckernels")


def test_backend_names():
    assert pykernels.BACKEND_NAME == "python"
    assert ck.BACKEND_NAME == "compiled"


def test_log_kv_parity(rng):
    for _ in range(500):
        nu = rng.uniform(-6, 6)
        x = 10.0 ** rng.uniform(-8, 4)
        a = pykernels.log_kv(nu, x)
        b = ck.log_kv(nu, x)
        assert abs(a - b) <= 1e-12 * max(1.0, abs(a))


def test_gamma_stationary_parity(rng):
    for _ in range(2000):
        s = 10.0 ** rng.uniform(-3, 2)
        q2 = 10.0 ** rng.uniform(-3, 3)
        eta = rng.choice([0.0, 10.0 ** rng.uniform(-3, 2)])
        rho = rng.choice([0.5, 1.0])
        eps = rng.choice([0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.0 + rho])
        if eta == 0.0 and eps == 1.0 + rho:
            continue  # no finite maximizer in this corner (both raise)
        a = pykernels.gamma_stationary(s, q2, eta, eps, rho)
        b = ck.gamma_stationary(s, q2, eta, eps, rho)
        if a == 0.0 or b == 0.0:
            assert a == b
        else:
            assert a == pytest.approx(b, rel=1e-10)


def test_ell_parity(rng):
    for _ in range(500):
        s = 10.0 ** rng.uniform(-2, 2)
        q2 = 10.0 ** rng.uniform(-2, 2)
        eta = 10.0 ** rng.uniform(-2, 1)
        g = 10.0 ** rng.uniform(-3, 2)
        eps = rng.choice([0.0, 0.5, 1.0, 1.5])
        assert pykernels.ell(g, s, q2, eta, eps, 1.0) == pytest.approx(
            ck.ell(g, s, q2, eta, eps, 1.0), rel=1e-12, abs=1e-14
        )


def test_gig_moments_parity(rng):
    u = 10.0 ** rng.uniform(-3, 2, size=200)
    v = 10.0 ** rng.uniform(-3, 2, size=200)
    for p in (-1.0, -0.5, 0.5, 1.0):
        m1, i1 = pykernels.gig_moments_batch(p, u, v)
        m2, i2 = ck.gig_moments_batch(p, u, v)
        np.testing.assert_allclose(m1, m2, rtol=1e-12)
        np.testing.assert_allclose(i1, i2, rtol=1e-12)


def test_batch_matches_scalar(rng):
    s = 10.0 ** rng.uniform(-2, 2, size=50)
    q2 = 10.0 ** rng.uniform(-2, 3, size=50)
    eta = np.full(50, 0.7)
    batch = ck.gamma_stationary_batch(s, q2, eta, 0.5, 1.0)
    scalar = np.array([ck.gamma_stationary(s[i], q2[i], 0.7, 0.5, 1.0) for i in range(50)])
    np.testing.assert_array_equal(batch, scalar)


def test_error_contracts_match():
    with pytest.raises(ValueError):
        pykernels.ell(0.0, 1.0, 1.0, 1.0, 0.5, 1.0)
    with pytest.raises(ValueError):
        ck.ell(0.0, 1.0, 1.0, 1.0, 0.5, 1.0)
    assert pykernels.ell(0.0, 1.0, 1.0, 1.0, 1.0, 1.0) == 0.0
    assert ck.ell(0.0, 1.0, 1.0, 1.0, 1.0, 1.0) == 0.0
    with pytest.raises(ValueError):
        pykernels.gamma_stationary(1.0, 1.0, 1.0, 2.5, 1.0)
    with pytest.raises(ValueError):
        ck.gamma_stationary(1.0, 1.0, 1.0, 2.5, 1.0)
