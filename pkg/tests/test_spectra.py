import numpy as np
import pytest
from scipy.linalg import solve_continuous_lyapunov

from containment.errors import GammaOutOfRange, NotHurwitz
from containment.spectra import (
    build_dynamic_certificate, build_F_matrix, build_upsilon, gain_threshold, hurwitz_check,
    is_positive_definite, solve_lyapunov,
)

from conftest import random_digraph


def test_chain_certificate(chain):
    cert = solve_lyapunov(chain.partition.L_FF)
    # entrywise: 2a = 1, 2b - a = 0, 2(c - b) = 1
    np.testing.assert_allclose(cert.P, [[0.5, 0.25], [0.25, 0.75]], atol=1e-14)
    r = np.sqrt(0.625 ** 2 - 0.3125)
    np.testing.assert_allclose([cert.lambda_min_P, cert.lambda_max_P], [0.625 - r, 0.625 + r])
    assert cert.residual <= 1e-12


def test_fan_threshold(fan2):
    cert = solve_lyapunov(fan2.partition.L_FF)
    np.testing.assert_allclose(cert.P, 0.25 * np.eye(2))
    assert gain_threshold(cert, 0.5) == pytest.approx(0.25 / 0.75)


def test_matches_scipy_oracle():
    rng = np.random.default_rng(3)
    checked = 0
    for _ in range(200):
        net = random_digraph(rng)
        if not net.a1:
            continue
        L = net.partition.L_FF
        cert = solve_lyapunov(L)
        # scipy solves A X + X A^H = Q; take A = -L^T, Q = -I
        ref = solve_continuous_lyapunov(-L.T, -np.eye(L.shape[0]))
        np.testing.assert_allclose(cert.P, ref, rtol=1e-8, atol=1e-10)
        checked += 1
    assert checked > 30


def test_not_hurwitz_raises(disconnected):
    with pytest.raises(NotHurwitz):
        solve_lyapunov(disconnected.partition.L_FF)
    assert not hurwitz_check(np.array([[1.0, 0], [0, -1.0]]))


def test_positive_definite_reports_min_eig():
    ok, m = is_positive_definite(np.diag([2.0, -1.0]))
    assert not ok and m == -1.0
    ok, m = is_positive_definite(np.eye(3))
    assert ok and m == 1.0


def test_q_matches_lyapunov_derivative(fan3):
    # Q must equal Pbar F + F^T Pbar for the stacked error drift F
    cert = solve_lyapunov(fan3.partition.L_FF)
    for k, gamma in [(1.0, 0.5), (0.3, 0.1), (2.0, 0.9)]:
        dyn = build_dynamic_certificate(cert, k, gamma)
        F = build_F_matrix(fan3.partition.L_FF, k, gamma)
        np.testing.assert_allclose(dyn.P_bar @ F + F.T @ dyn.P_bar, dyn.Q, atol=1e-12)


@pytest.mark.parametrize("gamma", [0.1, 0.5, 0.9])
def test_p_bar_positive_definite(chain, fan3, gamma):
    for net in (chain, fan3):
        cert = solve_lyapunov(net.partition.L_FF)
        assert build_dynamic_certificate(cert, 1.0, gamma).P_bar_pd


def test_threshold_sharpness(chain):
    cert = solve_lyapunov(chain.partition.L_FF)
    thr = gain_threshold(cert, 0.5)
    assert build_dynamic_certificate(cert, thr * 1.01, 0.5).Q_pd
    assert not build_dynamic_certificate(cert, thr * 0.99, 0.5).Q_pd
    assert abs(build_dynamic_certificate(cert, thr, 0.5).Q_min_eig) < 1e-10


def test_kron_spectrum_matches(fan3):
    P = solve_lyapunov(fan3.partition.L_FF).P
    big = np.linalg.eigvalsh(np.kron(P, np.eye(2)))
    small = np.linalg.eigvalsh(P)
    np.testing.assert_allclose([big[0], big[-1]], [small[0], small[-1]])


def test_gamma_range():
    cert = solve_lyapunov(np.eye(2))
    for g in (0.0, 1.0, -0.2):
        with pytest.raises(GammaOutOfRange):
            gain_threshold(cert, g)


def test_upsilon_shape():
    U = build_upsilon([1.0, 2.0], 1.0, 0.5, N=2)
    assert U.shape == (8, 4)
    np.testing.assert_allclose(U[4:], 0.5 * U[:4])
