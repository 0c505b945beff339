import warnings

import numpy as np
import pytest

from containment.config import DecisionRule, load_config, make_config
from containment.experiments import (
    Verdict, _three_way, necessity_floor, noise_envelope, run_ensemble, verdicts_for,
    verify_almost_sure, verify_dynamic, verify_mean_square,
)
from containment.gains import GainSpec, integral_to
from containment.graph_model import steady_state_map
from containment.spectra import solve_lyapunov

from conftest import random_digraph


def test_three_way():
    r = DecisionRule()
    assert _three_way([(1.0, 0.1), (3.0, 1.0)], r) == Verdict.CONVERGED
    assert _three_way([(1.0, 0.1), (-3.0, 1.0)], r) == Verdict.NOT_CONVERGED
    assert _three_way([(1.0, 0.1), (1.0, 1.0)], r) == Verdict.INCONCLUSIVE
    assert _three_way([(0.0, 0.0)], r) == Verdict.NOT_CONVERGED


def test_envelope_noise_free_is_exponential():
    g = GainSpec.log_over_linear()
    v = noise_envelope(g, 50.0, 2.0, 3.0, 0.0)
    assert v == pytest.approx(3.0 * np.exp(-2.0 * integral_to(g, 50.0)))


def test_envelope_solves_comparison_ode():
    # v' = -r a v + c a^2 with v(0) = v0, integrated directly
    from scipy.integrate import solve_ivp
    g = GainSpec.power_law(1.0, 1.0)
    sol = solve_ivp(lambda t, v: -1.5 * g(t) * v + 0.7 * g(t) ** 2, (0, 30), [2.0], rtol=1e-10, atol=1e-12)
    assert noise_envelope(g, 30.0, 1.5, 2.0, 0.7) == pytest.approx(sol.y[0, -1], rel=1e-6)


def test_a2_violation_is_not_converged(chain):
    cfg = make_config(chain, GainSpec.power_law(1.0, 2.0), T=30.0, samples=60, seed=3)
    stats = run_ensemble(cfg, replicates=60)
    rep = verify_mean_square(stats)
    assert rep.verdict == Verdict.NOT_CONVERGED
    assert rep.statistics["floor_respected"]
    cert = solve_lyapunov(chain.partition.L_FF)
    assert necessity_floor(stats, cert) == pytest.approx(rep.statistics["necessity_floor"])


def test_a1_violation(disconnected):
    cfg = make_config(disconnected, T=5.0, samples=10)
    stats = run_ensemble(cfg, replicates=4)
    assert stats.mean_sq_delta is None
    for rep in verdicts_for(stats):
        assert rep.verdict == Verdict.NOT_CONVERGED and rep.preconditions["A1"] is False


def test_constant_gain_is_inconclusive(fan2):
    cfg = make_config(fan2, GainSpec.constant(1.0), T=5.0, samples=20)
    stats = run_ensemble(cfg, replicates=20)
    assert verify_mean_square(stats).verdict == Verdict.INCONCLUSIVE
    assert verify_almost_sure(cfg, stats=stats).verdict == Verdict.INCONCLUSIVE


def test_custom_gain_warns(fan2):
    g = GainSpec.custom([0, 1, 5], [0.0, 1.0, 0.2])
    cfg = make_config(fan2, g, T=2.0, samples=10)
    stats = run_ensemble(cfg, replicates=4)
    with pytest.warns(UserWarning, match="unverified"):
        rep = verify_mean_square(stats)
    assert any("unverified" in n for n in rep.notes)


def test_noise_free_equilibrium_is_converged(fan2):
    x_R = np.array([[0.0, 0.0], [4.0, 2.0]])
    W = steady_state_map(fan2.partition)
    x_F = W @ x_R
    initial = {0: x_F[0], 1: x_F[1], 2: x_R[0], 3: x_R[1]}
    cfg = make_config(fan2, default_sigma=0.0, T=4.0, samples=8, initial=initial)
    stats = run_ensemble(cfg, replicates=3)
    assert verify_mean_square(stats).verdict == Verdict.CONVERGED


def test_dynamic_below_threshold_is_inconclusive(chain):
    cfg = make_config(chain, mode="dynamic", k=1.0, gamma=0.5, T=3.0, samples=12)
    rep = verify_dynamic(cfg, replicates=4)
    assert rep.preconditions["k_above_threshold"] is False
    assert rep.verdict == Verdict.INCONCLUSIVE


def test_standard_error_scaling(fan2):
    cfg = make_config(fan2, T=5.0, samples=10, seed=12)
    se25 = run_ensemble(cfg, replicates=25).mean_sq_delta_se[-1]
    se400 = run_ensemble(cfg, replicates=400).mean_sq_delta_se[-1]
    assert 2.5 <= se25 / se400 <= 4.5


def _random_a1_graph():
    rng = np.random.default_rng(2024)
    while True:
        net = random_digraph(rng, n=6, n_leaders=2, p=0.35)
        if net.a1:
            return net


def _battery():
    graphs = {"chain": load_config("log_gain_chain.cfg").network,
              "fan2": load_config("log_gain_fan.cfg").network,
              "random4F2L": _random_a1_graph()}
    gains = {"harmonic": GainSpec.power_law(1.0, 1.0), "log": GainSpec.log_over_linear()}
    for gname, net in graphs.items():
        for kname, gain in gains.items():
            for mode in ("stationary", "dynamic"):
                yield pytest.param(net, gain, mode, id=f"{gname}-{kname}-{mode}")


@pytest.mark.slow
@pytest.mark.xfail(strict=False, reason="at T=100 the noise floor keeps the finite-horizon "
                                 "surrogates above their fixed tolerances in most cases")
@pytest.mark.parametrize("net, gain, mode", list(_battery()))
def test_sufficiency_battery(net, gain, mode):
    kwargs = {}
    if mode == "dynamic":
        thr = solve_lyapunov(net.partition.L_FF).lambda_max_P / (2 * 0.5 * 0.75)
        kwargs = {"k": max(1.0, 1.5 * thr), "gamma": 0.5}
    cfg = make_config(net, gain, mode=mode, seed=1, replicates=200, **kwargs)
    stats = run_ensemble(cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        reps = verdicts_for(stats)
    if mode == "stationary":
        reps = [verify_mean_square(stats), verify_almost_sure(cfg, stats=stats)]
    assert [r.verdict for r in reps] == [Verdict.CONVERGED] * len(reps), \
        [(r.theorem, r.verdict, r.statistics.get("ratio")) for r in reps]
