import numpy as np
import pytest

import randprox as rp
from randprox.errors import ParameterError
from randprox.estimators import stream


def test_identity_estimator():
    e = rp.identity_estimator()
    rng = stream(0)
    r = np.array([1.0, 2.0])
    assert e.sample(r, rng) is r
    assert e.params.omega == 0.0
    assert e.params.omega_ran == 0.0
    stats = rp.empirical_estimator_stats(e, r, rp.identity_map(2), draws=1000, seed=0)
    assert stats.mean_error_norm == 0.0
    assert stats.variance_ratio == 0.0
    assert stats.range_slack >= 0.0


def test_bernoulli_two_outcomes():
    e = rp.bernoulli_estimator(0.5)
    assert e.params.omega == pytest.approx(1.0)
    assert e.skips_prox_when_zero
    r = np.array([4.0])
    outcomes = set()
    rng = stream(3)
    for _ in range(200):
        outcomes.add(float(e.sample(r, rng)[0]))
    assert outcomes == {0.0, 8.0}
    # enumerating both outcomes: mean 4, squared error 16 = (1/p - 1) r^2
    mean = 0.5 * 8.0 + 0.5 * 0.0
    var = 0.5 * (8.0 - 4.0) ** 2 + 0.5 * (0.0 - 4.0) ** 2
    assert mean == pytest.approx(4.0)
    assert var == pytest.approx((1 / 0.5 - 1) * 16.0)


def test_bernoulli_p_one_is_identity():
    e = rp.bernoulli_estimator(1.0)
    assert e.params.omega == 0.0
    rng = stream(1)
    r = np.array([2.0, -3.0])
    for _ in range(20):
        assert np.array_equal(e.sample(r, rng), r)


def test_bernoulli_zero_input():
    e = rp.bernoulli_estimator(0.25)
    rng = stream(9)
    for _ in range(20):
        assert np.array_equal(e.sample(np.zeros(3), rng), np.zeros(3))


def test_bernoulli_rejects_bad_p():
    for bad in (0.0, -0.2, 1.3):
        with pytest.raises(ParameterError):
            rp.bernoulli_estimator(bad)


def test_rand_k_params_and_outcomes():
    e = rp.rand_k_coordinates(1, 2)
    assert e.params.omega == pytest.approx(1.0)
    r = np.array([1.0, 1.0])
    rng = stream(5)
    seen = set()
    for _ in range(100):
        seen.add(tuple(e.sample(r, rng)))
    assert seen == {(2.0, 0.0), (0.0, 2.0)}
    assert rp.rand_k_coordinates(3, 10).params.omega == pytest.approx(7.0 / 3.0)
    e_full = rp.rand_k_coordinates(4, 4)
    assert e_full.params.omega == 0.0
    with pytest.raises(ParameterError):
        rp.rand_k_coordinates(5, 4)


def test_rand_k_blocks_constants():
    e = rp.rand_k_blocks(3, 10)
    omega, omega_ran, zeta = e.params.resolved(10.0)
    assert omega == pytest.approx(7.0 / 3.0)
    assert omega_ran == pytest.approx(70.0 / 27.0)
    assert zeta == pytest.approx(7.0 / 27.0)
    # the identity (1 - zeta) ||K||^2 + omega_ran = n, exactly
    assert abs((1 - zeta) * 10.0 + omega_ran - 10.0) < 1e-12
    e_full = rp.rand_k_blocks(10, 10)
    o, oran, z = e_full.params.resolved(10.0)
    assert (o, oran, z) == (0.0, 0.0, 0.0)
    with pytest.raises(ParameterError):
        rp.rand_k_blocks(1, 1)


def test_shared_rand_k_same_mask_every_block():
    e = rp.shared_rand_k(1, 2, 2)
    blocks = np.array([[1.0, 0.0], [0.0, 1.0]])
    rng = stream(2)
    seen = set()
    for _ in range(100):
        seen.add(tuple(e.sample(blocks, rng).ravel()))
    assert seen == {(2.0, 0.0, 0.0, 0.0), (0.0, 0.0, 0.0, 2.0)}
    assert rp.shared_rand_k(2, 2, 3).params.omega == 0.0


def test_linearity_under_shared_draw():
    rng_master = np.random.default_rng(17)
    estimators = [
        rp.identity_estimator(),
        rp.bernoulli_estimator(0.3),
        rp.rand_k_coordinates(2, 6),
        rp.shared_rand_k(2, 6, 3),
        rp.rand_k_blocks(2, 5),
    ]
    for e in estimators:
        assert e.is_linear
        shape = {"rand_k_blocks": (5, 4), "shared_rand_k": (3, 6)}.get(e.kind, (6,))
        for trial in range(20):
            draw = e.draw(stream(trial))
            r = rng_master.standard_normal(shape)
            s = rng_master.standard_normal(shape)
            a, b = 1.7, -0.4
            lhs = e.apply(draw, a * r + b * s)
            rhs = a * e.apply(draw, r) + b * e.apply(draw, s)
            assert np.abs(lhs - rhs).max() < 1e-12


@pytest.mark.parametrize("make,shape,kmap", [
    (lambda: rp.identity_estimator(), (6,), lambda: rp.identity_map(6)),
    (lambda: rp.bernoulli_estimator(0.3), (6,), lambda: rp.identity_map(6)),
    (lambda: rp.rand_k_coordinates(2, 6), (6,), lambda: rp.identity_map(6)),
    (lambda: rp.shared_rand_k(2, 6, 3), (3, 6), lambda: rp.identity_map((3, 6))),
    (lambda: rp.rand_k_blocks(3, 10), (10, 4), lambda: rp.stacking_map(10, 4)),
])
def test_monte_carlo_conformance(make, shape, kmap):
    # unbiasedness within 3 SE, variance ratio <= omega + 3 SE, range slack >= -3 SE
    e = make()
    K = kmap()
    omega = e.params.resolved(K.norm_sq)[0]
    rng = np.random.default_rng(23)
    draws = 10**5
    for trial in range(2):
        r = rng.standard_normal(shape)
        stats = rp.empirical_estimator_stats(e, r, K, draws=draws, seed=trial)
        r_norm_sq = float(np.sum(r * r))
        mean_se = np.sqrt(max(stats.variance_ratio, 1e-30) * r_norm_sq / draws)
        assert stats.mean_error_norm <= 3.0 * mean_se + 1e-12
        assert stats.variance_ratio <= omega + 3.0 * stats.variance_ratio_se + 1e-12
        assert stats.range_slack >= -3.0 * stats.range_slack_se - 1e-12


def test_stats_require_enough_draws():
    with pytest.raises(ParameterError):
        rp.empirical_estimator_stats(rp.identity_estimator(), np.ones(2),
                                     rp.identity_map(2), draws=10, seed=0)


def test_forced_update_schedule_caps_gaps():
    # p_t forced to 1 after max_skips consecutive tails caps gaps at max_skips + 1
    max_skips = 4
    e = rp.bernoulli_estimator(0.05, schedule=rp.forced_update_schedule(0.05, max_skips))
    assert e.uses_history
    history = ()
    rng = stream(31)
    for _ in range(3000):
        draw = e.draw(rng, history)
        history = history + (e.history_token(draw),)
    gaps, gap = [], 0
    for coin in history:
        if coin:
            gaps.append(gap)
            gap = 0
        else:
            gap += 1
    assert max(gaps) <= max_skips
    assert max(gaps) == max_skips  # the cap is actually exercised at p = 0.05


def test_schedule_below_floor_rejected():
    e = rp.bernoulli_estimator(0.5, schedule=lambda hist: 0.1)
    with pytest.raises(ParameterError):
        e.draw(stream(0), ())


def test_parse_estimator_specs():
    assert rp.parse_estimator("identity").kind == "identity"
    e = rp.parse_estimator("bernoulli:p=0.1")
    assert e.meta["p_min"] == pytest.approx(0.1)
    e = rp.parse_estimator("rand_k:k=3,d=10")
    assert e.params.omega == pytest.approx(7.0 / 3.0)
    e = rp.parse_estimator("rand_k_blocks:k=3,n=10")
    assert e.params.zeta == pytest.approx(7.0 / 27.0)
    e = rp.parse_estimator("shared_rand_k:k=2,d=8,n=4")
    assert e.meta == {"k": 2, "d": 8, "n": 4}
    for bad in ("topk:k=1", "bernoulli", "bernoulli:q=1", "rand_k:k=3"):
        with pytest.raises(ParameterError):
            rp.parse_estimator(bad)


def test_stream_determinism_and_keying():
    a = stream(7, 3).random(4)
    b = stream(7, 3).random(4)
    c = stream(7, 4).random(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
