import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from regimekit import msar
from regimekit.errors import (
    DegenerateDensity,
    DegenerateRegime,
    InvalidInit,
    InvalidSpec,
    SeriesTooShort,
)
from regimekit.labels import Variance
from regimekit.msar import (
    FittedModel,
    RegimeModelSpec,
    TransitionMatrix,
    classify_variance,
    em_step,
    expected_durations,
    fit_em,
    hamilton_filter,
    kim_smoother,
    simulate_msar,
)

from oracles import enumerate_paths, gauss

P = TransitionMatrix(np.array([[0.9, 0.1], [0.2, 0.8]]))
SPEC = RegimeModelSpec(np.array([1e-4, 9e-4]))


def random_instance(rng, T, ar=False):
    sigma2 = rng.uniform(0.2, 3.0, 2)
    mu = rng.normal(0, 0.5, 2)
    phi = rng.uniform(-0.8, 0.8, 2) if ar else np.zeros(2)
    a, b = rng.uniform(0.05, 0.95, 2)
    p = np.array([[a, 1 - a], [b, 1 - b]])
    init = rng.dirichlet([1.0, 1.0])
    y = rng.normal(0, 1.2, T)
    return y, RegimeModelSpec(sigma2, mu, phi), TransitionMatrix(p), init


def test_identical_densities_give_ergodic_filter_and_smoother():
    y = np.random.default_rng(0).normal(0, 0.01, 40)
    spec = RegimeModelSpec(np.array([1e-4, 1e-4]))
    filtered, _ = hamilton_filter(y, spec, P)
    np.testing.assert_allclose(filtered, np.tile(P.ergodic(), (40, 1)), atol=1e-12)
    np.testing.assert_allclose(kim_smoother(filtered, P), np.tile(P.ergodic(), (40, 1)), atol=1e-12)


def test_two_step_hand_oracle():
    y = [0.0, 0.03]
    pi = np.array([2 / 3, 1 / 3])
    d1 = np.array([gauss(0.0, 0, 1e-4), gauss(0.0, 0, 9e-4)])
    f1 = pi * d1 / (pi @ d1)
    pred2 = np.array([f1[0] * 0.9 + f1[1] * 0.2, f1[0] * 0.1 + f1[1] * 0.8])
    d2 = np.array([gauss(0.03, 0, 1e-4), gauss(0.03, 0, 9e-4)])
    f2 = pred2 * d2 / (pred2 @ d2)
    loglik = math.log(pi @ d1) + math.log(pred2 @ d2)
    filtered, ll = hamilton_filter(y, SPEC, P)
    np.testing.assert_allclose(filtered, [f1, f2], atol=1e-12)
    assert ll == pytest.approx(loglik, abs=1e-12)


@pytest.mark.parametrize("ar", [False, True])
@pytest.mark.parametrize("seed", range(6))
def test_filter_and_smoother_match_path_enumeration(seed, ar):
    rng = np.random.default_rng(seed)
    y, spec, trans, init = random_instance(rng, 8, ar)
    f_oracle, s_oracle, ll_oracle = enumerate_paths(y, spec.mu, spec.phi, spec.sigma2, trans.p, init)
    filtered, ll = hamilton_filter(y, spec, trans, init)
    np.testing.assert_allclose(filtered, f_oracle, atol=1e-10)
    np.testing.assert_allclose(kim_smoother(filtered, trans), s_oracle, atol=1e-10)
    assert ll == pytest.approx(ll_oracle, abs=1e-10)


def test_smoother_terminal_condition():
    f = np.array([[0.3, 0.7]])
    np.testing.assert_array_equal(kim_smoother(f, P), f)
    y = np.random.default_rng(1).normal(0, 0.02, 30)
    filtered, _ = hamilton_filter(y, SPEC, P)
    np.testing.assert_array_equal(kim_smoother(filtered, P)[-1], filtered[-1])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 200))
def test_probabilities_sum_to_one(seed, T):
    rng = np.random.default_rng(seed)
    y, spec, trans, init = random_instance(rng, T, ar=bool(seed % 2))
    y = y * rng.uniform(0.01, 100)
    filtered, ll = hamilton_filter(y, spec, trans, init)
    smoothed = kim_smoother(filtered, trans)
    assert np.isfinite(ll)
    np.testing.assert_allclose(filtered.sum(axis=1), 1.0, atol=1e-9)
    np.testing.assert_allclose(smoothed.sum(axis=1), 1.0, atol=1e-9)


def test_long_series_does_not_underflow():
    y = np.random.default_rng(2).normal(0, 0.02, 20_000)
    filtered, ll = hamilton_filter(y, SPEC, P)
    assert np.isfinite(ll) and np.all(np.isfinite(filtered))


def test_filter_errors():
    with pytest.raises(InvalidInit):
        hamilton_filter([0.1], SPEC, P, init=[0.5, 0.6])
    with pytest.raises(InvalidInit):
        hamilton_filter([0.1], SPEC, P, init="uniform")
    with pytest.raises(DegenerateDensity):
        hamilton_filter([1e200], SPEC, P)
    with pytest.raises(InvalidSpec):
        RegimeModelSpec(np.array([0.0, 0.0]))
    with pytest.raises(InvalidSpec):
        RegimeModelSpec(np.array([1.0, 1.0]), phi=np.array([1.0, 0.0]))
    with pytest.raises(InvalidSpec):
        TransitionMatrix(np.array([[0.9, 0.2], [0.1, 0.9]]))


def test_symmetric_start_is_a_fixed_point():
    y = np.random.default_rng(3).normal(0, 0.01, 300)
    spec = RegimeModelSpec(np.array([2e-4, 2e-4]))
    trans = TransitionMatrix(np.full((2, 2), 0.5))
    init = np.array([0.5, 0.5])
    for _ in range(5):
        spec, trans, init = em_step(y, spec, trans, init)
        assert spec.sigma2[0] == pytest.approx(spec.sigma2[1], rel=1e-12)
        np.testing.assert_allclose(trans.p, 0.5, atol=1e-12)


def test_collapsed_regime_raises():
    y = np.random.default_rng(4).normal(0, 0.01, 100)
    spec = RegimeModelSpec(np.array([1e-4, 1e-2]))
    with pytest.raises(DegenerateRegime):
        em_step(y, spec, TransitionMatrix(np.eye(2)), init=[1.0, 0.0])


def simulate(seed, T=20_000):
    spec = RegimeModelSpec(np.array([0.01**2, 0.03**2]))
    trans = TransitionMatrix(np.array([[0.98, 0.02], [0.05, 0.95]]))
    return simulate_msar(spec, trans, T, seed=seed)


def test_em_recovers_parameters_and_is_monotone():
    y, states = simulate(11)
    model = fit_em(y, seed=0)
    np.testing.assert_allclose(model.spec.sigma2, [1e-4, 9e-4], rtol=0.05)
    assert abs(model.trans.p[0, 0] - 0.98) <= 0.01 and abs(model.trans.p[1, 1] - 0.95) <= 0.01
    assert np.all(np.diff(model.history) >= -1e-8)
    assert model.spec.sigma2[0] <= model.spec.sigma2[1]
    assert model.converged
    labels = classify_variance(model)
    truth = [Variance.HIGH if s else Variance.LOW for s in states]
    assert np.mean([a == b for a, b in zip(labels.values, truth)]) > 0.9
    np.testing.assert_allclose(model.smoothed.sum(axis=1), 1.0, atol=1e-9)
    assert len(model.filtered) == len(y)


def test_em_estimates_mean_and_ar():
    spec = RegimeModelSpec(np.array([1e-4, 9e-4]), mu=np.array([5e-4, -1e-3]), phi=np.array([0.3, -0.2]))
    trans = TransitionMatrix(np.array([[0.98, 0.02], [0.05, 0.95]]))
    y, _ = simulate_msar(spec, trans, 30_000, seed=5)
    model = fit_em(y, estimate_mean=True, estimate_ar=True, n_restarts=2)
    np.testing.assert_allclose(model.spec.phi, [0.3, -0.2], atol=0.05)
    np.testing.assert_allclose(model.spec.sigma2, spec.sigma2, rtol=0.08)
    assert np.all(np.diff(model.history) >= -1e-8)


def test_permutation_invariance():
    y, _ = simulate(3, 3000)
    spec0 = RegimeModelSpec(np.array([5e-5, 1e-3]))
    trans0 = TransitionMatrix(np.array([[0.95, 0.05], [0.1, 0.9]]))
    a = fit_em(y, start=(spec0, trans0), tol=1e-10)
    b = fit_em(y, start=(spec0.permuted([1, 0]), trans0.permuted([1, 0])), tol=1e-10)
    np.testing.assert_allclose(a.spec.sigma2, b.spec.sigma2, rtol=1e-9)
    np.testing.assert_allclose(a.trans.p, b.trans.p, atol=1e-9)
    np.testing.assert_allclose(a.smoothed, b.smoothed, atol=1e-9)
    assert a.loglik == pytest.approx(b.loglik, abs=1e-8)
    assert a.n_iter == b.n_iter


def test_fit_rejects_short_series_and_flags_nonconvergence():
    with pytest.raises(SeriesTooShort):
        fit_em(np.zeros(49) + 0.01)
    y, _ = simulate(1, 500)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        model = fit_em(y, max_iter=2, n_restarts=1)
    assert not model.converged
    assert any(issubclass(w.category, msar.NonConvergence) for w in caught)


def test_fit_is_deterministic():
    y, _ = simulate(2, 2000)
    a, b = fit_em(y, seed=9), fit_em(y, seed=9)
    assert a.to_dict() == b.to_dict()


def test_simulation_examples():
    spec = RegimeModelSpec(np.array([1e-12, 1e-12]), mu=np.array([5.0, 5.0]))
    y, _ = simulate_msar(spec, P, 50, seed=0)
    np.testing.assert_allclose(y.values, 5.0, atol=1e-4)
    a, sa = simulate(7, 500)
    b, sb = simulate(7, 500)
    np.testing.assert_array_equal(a.values, b.values)
    np.testing.assert_array_equal(sa, sb)
    _, states = simulate(0, 100_000)
    freq = np.bincount(states, minlength=2) / len(states)
    np.testing.assert_allclose(freq, [5 / 7, 2 / 7], atol=0.01)


def test_ergodic_distribution_solves_balance():
    trans = TransitionMatrix(np.array([[0.98, 0.02], [0.05, 0.95]]))
    pi = trans.ergodic()
    np.testing.assert_allclose(pi @ trans.p, pi, atol=1e-14)
    np.testing.assert_allclose(pi, [0.05 / 0.07, 0.02 / 0.07], atol=1e-12)


def test_expected_durations():
    assert expected_durations(TransitionMatrix(np.array([[0.5, 0.5], [0.5, 0.5]])))[0] == pytest.approx(2.0)
    d = expected_durations(TransitionMatrix(np.array([[0.9867, 0.0133], [0.0236, 0.9764]])))
    assert d[0] == pytest.approx(75.19, abs=0.005)
    assert d[1] == pytest.approx(42.37, abs=0.005)
    assert np.isinf(expected_durations(TransitionMatrix(np.eye(2)))).all()


def make_model(p_high):
    p_high = np.asarray(p_high, dtype=float)
    probs = np.column_stack([1 - p_high, p_high])
    dates = np.arange(len(p_high)).astype("datetime64[D]")
    return FittedModel(SPEC, P, 0.0, probs, probs, 1, np.array([0.5, 0.5]), dates=dates)


def test_classify_variance_threshold():
    labels = classify_variance(make_model([0.9, 0.2]))
    assert list(labels.values) == [Variance.HIGH, Variance.LOW]
    assert list(classify_variance(make_model([0.5])).values) == [Variance.LOW]
    with pytest.raises(ValueError):
        classify_variance(make_model([0.5]), threshold=1.0)


def test_model_json_and_probability_round_trip(tmp_path):
    y, _ = simulate(4, 1500)
    model = fit_em(y, n_restarts=2)
    msar.save_model(model, tmp_path / "m.json")
    payload = json.loads((tmp_path / "m.json").read_text())
    assert set(payload) >= {"k", "mu", "phi", "sigma2", "trans", "loglik", "n_iter"}
    assert payload["sigma2"] == sorted(payload["sigma2"])
    again = msar.load_model(tmp_path / "m.json", y)
    np.testing.assert_allclose(again.smoothed, model.smoothed, atol=1e-12)
    assert again.loglik == pytest.approx(model.loglik, abs=1e-9)
    msar.write_probabilities(model, tmp_path / "p.csv")
    dates, probs = msar.read_probabilities(tmp_path / "p.csv")
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == "date,p_regime0,p_regime1"
    np.testing.assert_array_equal(dates, y.dates)
    np.testing.assert_array_equal(probs, model.smoothed)
