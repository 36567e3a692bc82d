import math

import numpy as np
import pytest
from scipy import stats

from fsmcmc.coupling import (
    CoupledPair,
    ContractionEstimate,
    DistanceParams,
    HarrisCertificate,
    LyapunovEstimate,
    SmallnessEstimate,
    coupled_step,
    d_global,
    d_local_bounds,
    d_tilde,
    estimate_contraction,
    estimate_lyapunov,
    estimate_smallness,
    harris_certificate,
    near_diagonal_sampler,
    run_coupled,
    smallness_min_steps,
    v_eval,
)
from fsmcmc.kernel import KernelParams, MHKernel, mh_step
from fsmcmc.measure import GaussianMeasure, SpectrumSpec
from fsmcmc.rng import generator
from fsmcmc.target import norm_tilt, zero_target


def pcn(delta, m, target=None, q=1.0):
    measure = GaussianMeasure(SpectrumSpec.power_law(q, m))
    return MHKernel("pcn", KernelParams(delta), target or zero_target(), measure)


def test_v_eval_examples():
    p2 = DistanceParams(epsilon=1.0, v_kind="power_norm", v_param=2.0)
    assert v_eval(p2, np.zeros(3)) == 0.0
    assert v_eval(p2, np.array([3.0, 4.0])) == 25.0
    pe = DistanceParams(epsilon=1.0, v_kind="exp_norm", v_param=0.1)
    assert v_eval(pe, np.array([3.0, 4.0])) == pytest.approx(math.exp(0.5), rel=1e-15)


def test_d_global_examples():
    p = DistanceParams(epsilon=2.0)
    x = np.array([1.0, 0.0])
    assert d_global(x, x, p) == 0.0
    assert d_global(x, x + np.array([5.0, 0.0]), p) == 1.0
    assert d_global(x, x + np.array([1.0, 0.0]), p) == 0.5


def test_d_local_bounds_examples():
    p = DistanceParams(epsilon=1.0, eta=0.1)
    x = np.array([10.0, 0.0])
    lower, upper, valid = d_local_bounds(x, x, p)
    assert (lower, upper, valid) == (0.0, 0.0, True)

    # eta = 0 collapses both bounds to the global distance
    p0 = DistanceParams(epsilon=1.0, eta=0.0)
    y = np.array([10.3, 0.0])
    lower, upper, _ = d_local_bounds(x, y, p0)
    assert lower == upper == pytest.approx(0.3, rel=1e-12)

    # direct evaluation of the closed forms at eps=1, eta=0.1
    y = np.array([10.05, 0.0])
    s = 10.05
    expected_upper = 0.05 * math.exp(0.1 * s)
    J = math.exp(-0.1 * (s - 1.0))
    expected_lower = 0.05 * math.exp(0.1 * (s - J))
    lower, upper, valid = d_local_bounds(x, y, p)
    assert upper == pytest.approx(expected_upper, rel=1e-12)
    assert lower == pytest.approx(expected_lower, rel=1e-12)
    assert valid  # upper ~ 0.137 < 1


def test_d_local_bounds_ordering_property():
    rng = generator(1, "dl")
    p = DistanceParams(epsilon=0.5, eta=0.3)
    for _ in range(200):
        x = rng.standard_normal(4) * 3
        y = x + rng.standard_normal(4) * 0.2
        lower, upper, _ = d_local_bounds(x, y, p)
        assert lower <= upper + 1e-15


def test_d_tilde_examples():
    p = DistanceParams(epsilon=1.0, v_kind="power_norm", v_param=2.0)
    x = np.array([1.0, 0.0])
    y = np.array([0.0, 1.0])
    assert d_tilde(0.0, x, x, p) == 0.0
    assert d_tilde(1.0, x, y, p) == pytest.approx(math.sqrt(3.0), rel=1e-15)
    zero = np.zeros(2)
    assert d_tilde(0.25, zero, zero, p) == 0.5
    with pytest.raises(ValueError):
        d_tilde(1.5, x, y, p)


def test_coupled_step_diagonal_absorption():
    kernel = pcn(0.2, 3, target=norm_tilt(0.5))
    x = kernel.measure.sample(generator(2, "d"))
    pair = CoupledPair(x, x.copy())
    for k in range(30):
        pair, _ = coupled_step(kernel, pair, generator(2, "d", k))
        assert np.array_equal(pair.x, pair.y)


def test_coupled_step_pcn_zero_exact_factor():
    kernel = pcn(0.18, 4)
    rng = generator(3, "c")
    pair = CoupledPair(np.array([1.0, 0, 0, 0]), np.array([0.0, 1, 0, 0]))
    out, case = coupled_step(kernel, pair, rng)
    assert case == "both_accept"
    d0 = np.linalg.norm(pair.x - pair.y)
    d1 = np.linalg.norm(out.x - out.y)
    assert d1 / d0 == pytest.approx(math.sqrt(0.64), rel=1e-12)


def test_coupling_identity_relative_error():
    # invariant: ||X_n - Y_n|| = (1-2 delta)^(n/2) ||X_0 - Y_0|| to 1e-12
    # relative error; delta small keeps the difference resolvable in floats
    delta = 0.002
    kernel = pcn(delta, 4)
    x0 = kernel.measure.sample(generator(4, "i"))
    y0 = x0 + np.array([1.0, 0, 0, 0])
    dists, cases = run_coupled(kernel, x0, y0, 1000, seed=4)
    assert set(cases) == {"both_accept"}
    factor = math.sqrt(1.0 - 2.0 * delta)
    n = np.arange(1001)
    predicted = factor**n * dists[0]
    rel = np.abs(dists - predicted) / predicted
    assert rel.max() < 1e-12


def test_one_accepts_probability_bounded_by_lipschitz():
    # P(one accepts) <= 2 L ||x - y||: MC oracle over 10^5 coupled one-steps
    L = 0.7
    kernel = pcn(0.18, 4, target=norm_tilt(L))
    rng = generator(5, "p")
    x = kernel.measure.sample(rng)
    y = x + 0.05 * rng.standard_normal(4)
    gap = float(np.linalg.norm(x - y))
    n = 100_000
    from fsmcmc.coupling import _coupled_step_batch
    from fsmcmc.kernel import _log_u

    X = np.tile(x, (n, 1))
    Y = np.tile(y, (n, 1))
    xi = kernel.measure.sample(rng, n)
    log_u = _log_u(rng.random(n))
    _, _, ax, ay = _coupled_step_batch(kernel, X, Y, xi, log_u)
    p_one = float(np.mean(ax != ay))
    se = math.sqrt(p_one * (1 - p_one) / n + 1e-12)
    assert p_one <= 2 * L * gap + 3 * se


def test_coupled_margins_match_mh_step_law():
    # Kolmogorov-Smirnov on first-coordinate one-step laws, coupled vs plain
    kernel = pcn(0.2, 3, target=norm_tilt(1.0))
    rng = generator(6, "m")
    x = np.array([0.7, -0.3, 0.2])
    y = np.array([-0.5, 0.4, 0.0])
    n = 100_000
    from fsmcmc.coupling import _coupled_step_batch
    from fsmcmc.kernel import _log_u, _propose, log_accept_ratio

    X = np.tile(x, (n, 1))
    Y = np.tile(y, (n, 1))
    xi = kernel.measure.sample(rng, n)
    log_u = _log_u(rng.random(n))
    X1, Y1, _, _ = _coupled_step_batch(kernel, X, Y, xi, log_u)

    # independent (uncoupled) one-steps from x with fresh randomness
    xi2 = kernel.measure.sample(rng, n)
    log_u2 = _log_u(rng.random(n))
    P = _propose(kernel, X, xi2)
    acc = log_u2 < np.minimum(0.0, log_accept_ratio(kernel, X, P))
    X1_plain = np.where(acc[:, None], P, X)

    ks = stats.ks_2samp(X1[:, 0], X1_plain[:, 0])
    assert ks.pvalue > 1e-3


def test_estimate_lyapunov_pcn_zero_exact_affine():
    # E[V(X_1)|x] = (1-2 delta) ||x||^2 + 2 delta sum(lambda^2) for V = ||x||^2
    delta = 0.18
    kernel = pcn(delta, 4)
    params = DistanceParams(epsilon=0.1, v_kind="power_norm", v_param=2.0)
    trace_c = float(np.sum(kernel.measure.lambdas**2))
    est = estimate_lyapunov(kernel, params, [0.5, 1, 2, 3, 4, 5, 6, 7, 8, 9], 20_000,
                            generator(7, "l"))
    for v, mean, se in zip(est.v_values, est.means, est.ses):
        truth = (1 - 2 * delta) * v + 2 * delta * trace_c
        assert abs(mean - truth) < 3 * se
    assert abs(est.l_hat - (1 - 2 * delta)) < 0.02
    assert est.K_hat >= 2 * delta * trace_c
    assert est.drift_holds


def test_estimate_lyapunov_constant_stub():
    # V = ||x||^0 = 1: degenerate abscissa gives slope 0 and K = 1 exactly
    kernel = pcn(0.18, 3)
    params = DistanceParams(epsilon=0.1, v_kind="power_norm", v_param=0.0)
    est = estimate_lyapunov(kernel, params, [1.0, 2.0, 3.0], 200, generator(8, "l"))
    assert est.l_hat == 0.0
    assert est.K_hat == 1.0


def test_estimate_lyapunov_independence_sampler_flat():
    # delta = 1/2: E[V(X_1)|x] = sum(lambda^2) regardless of x, so l_hat ~ 0
    kernel = pcn(0.5, 4)
    params = DistanceParams(epsilon=0.1, v_kind="power_norm", v_param=2.0)
    est = estimate_lyapunov(kernel, params, [1, 2, 4, 8], 40_000, generator(9, "l"))
    assert est.l_hat < 0.02


def test_estimate_contraction_pcn_zero_exact():
    # both margins always accept, so each sampled ratio is exactly 1 - rho
    delta = 0.18
    kernel = pcn(delta, 4)
    params = DistanceParams(epsilon=0.1)
    sampler = near_diagonal_sampler(kernel.measure, params, R=2.0)
    est = estimate_contraction(kernel, params, sampler, 50, generator(10, "c"),
                               samples_per_pair=64)
    assert est.c_hat == pytest.approx(math.sqrt(1 - 2 * delta), abs=1e-10)
    assert est.contraction_holds
    assert est.n_rejected == 0


def test_estimate_contraction_rejects_degenerate_pairs():
    kernel = pcn(0.18, 3)
    params = DistanceParams(epsilon=0.1)

    def diagonal_sampler(rng):
        x = kernel.measure.sample(rng)
        return x, x.copy()

    with pytest.raises(ValueError, match="rejected"):
        estimate_contraction(kernel, params, diagonal_sampler, 10, generator(11, "c"))


def test_estimate_contraction_norm_tilt_below_one():
    kernel = pcn(0.18, 16, target=norm_tilt(0.05))
    params = DistanceParams(epsilon=0.1)
    scale = math.sqrt(float(np.sum(kernel.measure.lambdas**2)))
    sampler = near_diagonal_sampler(kernel.measure, params, R=2 * scale)
    est = estimate_contraction(kernel, params, sampler, 200, generator(12, "c"),
                               samples_per_pair=128)
    assert est.c_hat < 1.0
    assert est.ci[1] < 1.0


def test_contraction_uniform_in_dimension():
    # c_hat(m) stays inside a pooled 3-se band across dimensions
    params = DistanceParams(epsilon=0.1)
    Z99 = 2.5758293035489004
    results = []
    for m in (8, 32, 128, 512):
        kernel = pcn(0.18, m, target=norm_tilt(0.05))
        scale = math.sqrt(float(np.sum(kernel.measure.lambdas**2)))
        sampler = near_diagonal_sampler(kernel.measure, params, R=2 * scale)
        est = estimate_contraction(kernel, params, sampler, 60, generator(13, "c", m),
                                   samples_per_pair=128)
        se = (est.ci[1] - est.c_hat) / Z99
        results.append((est.c_hat, se))
    for i in range(len(results)):
        for j in range(i + 1, len(results)):
            ci, si = results[i]
            cj, sj = results[j]
            assert abs(ci - cj) <= 3.0 * math.hypot(si, sj) + 1e-9


def test_estimate_smallness_pcn_zero():
    delta = 0.18
    kernel = pcn(delta, 4)
    params = DistanceParams(epsilon=0.1, v_kind="power_norm", v_param=2.0)
    K_hat = 1.0
    n_min = smallness_min_steps(kernel, params, K_hat)
    est = estimate_smallness(kernel, params, K_hat, n_min, 40, generator(14, "s"),
                             samples_per_pair=16)
    # both chains always accept: d contracts deterministically below 1/2
    assert est.s_hat <= 0.5 + 1e-12
    assert est.smallness_holds


def test_estimate_smallness_step_precondition():
    kernel = pcn(0.18, 4)
    params = DistanceParams(epsilon=0.1, v_kind="power_norm", v_param=2.0)
    n_min = smallness_min_steps(kernel, params, 1.0)
    assert n_min > 1
    with pytest.raises(ValueError, match="threshold"):
        estimate_smallness(kernel, params, 1.0, n_min - 1, 10, generator(15, "s"))


def test_harris_certificate_assembly():
    lyap = LyapunovEstimate(0.8, 2.0, 0.001, np.array([1.0]), np.array([0.8]),
                            np.array([0.01]), 100)
    contr = ContractionEstimate(0.9, (0.88, 0.92), 100, 0, 64)
    small = SmallnessEstimate(0.5, 10, (0.45, 0.55), 50, 16)
    cert = harris_certificate(lyap, contr, small, seeds={"root": 3})
    assert cert.premises_hold
    payload = cert.to_dict()
    assert payload["lyapunov"]["l"] == 0.8
    assert payload["contraction"]["n_pairs"] == 100
    assert payload["smallness"]["n_steps"] == 10
    import json

    decoded = json.loads(cert.to_json())
    assert decoded["premises_hold"] is True
    assert decoded["seeds"] == {"root": 3}

    bad = ContractionEstimate(1.0, (0.98, 1.02), 100, 0, 64)
    assert not harris_certificate(lyap, bad, small).premises_hold

    with pytest.raises(ValueError):
        harris_certificate(lyap, contr, None)


def test_mh_step_and_coupled_step_agree_on_shared_stream():
    # the x-margin of the coupled step follows mh_step exactly when fed the
    # same noise and uniform streams
    kernel = pcn(0.2, 3, target=norm_tilt(0.6))
    x = np.array([0.5, 0.1, -0.4])
    y = np.array([1.5, -0.2, 0.0])
    out, _ = coupled_step(kernel, CoupledPair(x, y), generator(16, "n"), generator(16, "u"))
    x1, _, _ = mh_step(kernel, x, generator(16, "n"), u_rng=generator(16, "u"))
    assert np.array_equal(out.x, x1)
