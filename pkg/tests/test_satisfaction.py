import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.neighbors import KNeighborsRegressor

from oracles import bandwidth_gamma1
from satband.satisfaction import (
    KNNSatisfaction,
    ParametricSatisfaction,
    QualityInputs,
    SurveyTable,
    analytic_file_bits,
    delay,
    image_quality,
    model_from_dict,
    predict_satisfaction,
    required_bandwidth,
    synthesize_survey,
    train_satisfaction,
)


def test_delay_examples():
    assert delay(10_000_000, 2_000_000) == 5.0
    assert delay(0, 123.0) == 0.0
    with pytest.raises(ValueError):
        delay(1, 0)


@given(st.floats(1, 1e9), st.floats(1, 1e7), st.floats(1.001, 10))
def test_delay_decreases_with_bandwidth(f, a, factor):
    assert delay(f, a * factor) < delay(f, a)


def test_image_quality_examples():
    assert image_quality(QualityInputs(4, 300, 4, 300, 1.0, (0.2, 0.5, 0.3))) == pytest.approx(1.0)
    qi = QualityInputs(10, 300, 5, 300, 0.5, (0.3, 0.3, 0.4))
    assert image_quality(qi) == pytest.approx(0.65, abs=1e-12)
    with pytest.raises(ValueError):
        QualityInputs(1, 1, 1, 1, 1.0, (0.5, 0.5, 0.5))
    with pytest.raises(ValueError):
        QualityInputs(1, 1, 2, 1)


@given(st.floats(0.01, 1), st.floats(0.01, 1), st.floats(0.01, 1), st.floats(0.01, 1))
def test_image_quality_linear_in_ratio(s1, s2, r, c):
    w = (0.3, 0.3, 0.4)
    lo, hi = sorted((s1, s2))
    d = image_quality(QualityInputs(1, 1, hi, r, c, w)) - image_quality(QualityInputs(1, 1, lo, r, c, w))
    assert d == pytest.approx(0.3 * (hi - lo), abs=1e-12)


def test_analytic_file_bits():
    assert analytic_file_bits(10, 300) == 72_000


def test_parametric_examples():
    m = ParametricSatisfaction(3.0, 1.0).fit()
    assert predict_satisfaction(m, 1.0, 3.0) == pytest.approx(0.5)
    assert predict_satisfaction(m, 0.0, 7.0) == 0.0
    assert predict_satisfaction(ParametricSatisfaction().fit(), 0.8, 0.0) == 0.8
    assert m._predict_one(0.7, 2.0) == predict_satisfaction(m, 0.7, 2.0)


def test_parametric_monotone_grid():
    m = ParametricSatisfaction().fit()
    iq, d = np.meshgrid(np.linspace(0, 1, 25), np.linspace(0, 30, 25), indexing="ij")
    us = m.predict(np.column_stack([iq.ravel(), d.ravel()])).reshape(iq.shape)
    assert np.all(np.diff(us, axis=0) >= 0)
    assert np.all(np.diff(us, axis=1) <= 0)
    assert us.min() >= 0 and us.max() <= 1


def test_predict_rejects_out_of_range():
    m = ParametricSatisfaction().fit()
    with pytest.raises(ValueError):
        m.predict([[1.5, 1.0]])
    with pytest.raises(ValueError):
        m.predict([[0.5, -1.0]])


def test_survey_noiseless_and_deterministic():
    t = synthesize_survey(50, seed=3)
    m = ParametricSatisfaction().fit()
    np.testing.assert_array_equal(t.us, m._predict(t.iq, t.delay))
    t2 = synthesize_survey(50, seed=3)
    assert t.to_csv() == t2.to_csv()
    assert t.delay.max() <= 30 and t.iq.max() <= 1


def test_survey_noise_level():
    t = synthesize_survey(500, noise_sd=0.02, seed=1)
    resid = t.us - ParametricSatisfaction().fit()._predict(t.iq, t.delay)
    assert 0.01 <= resid.std() <= 0.03


def test_survey_csv_roundtrip():
    t = synthesize_survey(20, noise_sd=0.05, seed=9)
    back = SurveyTable.from_csv(t.to_csv())
    np.testing.assert_array_equal(back.X, t.X)
    np.testing.assert_array_equal(back.us, t.us)
    assert t.to_csv().splitlines()[0] == "iq,delay_s,us"
    with pytest.raises(ValueError):
        SurveyTable.from_csv("a,b,c\n1,2,3\n")
    with pytest.raises(ValueError):
        SurveyTable.from_csv("iq,delay_s,us\n")


def test_knn_k1_reproduces_rows():
    t = synthesize_survey(60, noise_sd=0.1, seed=2)
    m = train_satisfaction(t, k=1)
    np.testing.assert_array_equal(m.predict(t.X), t.us)


def test_knn_single_row_is_constant():
    m = KNNSatisfaction(1).fit([[0.5, 3.0]], [0.42])
    assert np.all(m.predict([[0.0, 0.0], [1.0, 30.0], [0.3, 9.0]]) == 0.42)


def test_knn_matches_sklearn_distance_weighting():
    t = synthesize_survey(200, noise_sd=0.03, seed=4)
    m = train_satisfaction(t, k=5)
    ref = KNeighborsRegressor(n_neighbors=5, weights="distance").fit((t.X - m.mean_) / m.scale_, t.us)
    q = np.random.default_rng(0).random((100, 2)) * [1, 30]
    np.testing.assert_allclose(m.predict(q), np.clip(ref.predict((q - m.mean_) / m.scale_), 0, 1), atol=1e-12)


def test_knn_accuracy_on_grid():
    m = train_satisfaction(synthesize_survey(500, seed=0), k=5)
    iq, d = np.meshgrid(np.linspace(0.025, 0.975, 20), np.linspace(0.75, 29.25, 20))
    X = np.column_stack([iq.ravel(), d.ravel()])
    truth = ParametricSatisfaction().fit().predict(X)
    assert np.sqrt(np.mean((m.predict(X) - truth) ** 2)) <= 0.05


def test_knn_deterministic_and_serialisable():
    t = synthesize_survey(80, noise_sd=0.05, seed=5)
    m = train_satisfaction(t, k=3)
    q = [[0.4, 5.0], [0.9, 1.0]]
    again = model_from_dict(m.to_dict())
    np.testing.assert_array_equal(m.predict(q), again.predict(q))
    np.testing.assert_array_equal(m.predict(q), train_satisfaction(t, k=3).predict(q))


def test_knn_bad_k():
    with pytest.raises(ValueError):
        KNNSatisfaction(5).fit([[0.1, 1.0]], [0.5])


def test_model_dict_parametric():
    m = model_from_dict({"kind": "parametric", "delta_half": 2.0, "gamma": 1.5})
    assert (m.delta_half, m.gamma) == (2.0, 1.5)
    with pytest.raises(ValueError):
        model_from_dict({"kind": "tree"})


@pytest.mark.parametrize("seed", range(20))
def test_bisection_matches_gamma1_closed_form(seed):
    r = np.random.default_rng(seed)
    iq, tau = r.uniform(0.5, 1.0), r.uniform(0.05, 0.45)
    f = r.uniform(1e5, 1e8)
    m = ParametricSatisfaction(3.0, 1.0).fit()
    exact = bandwidth_gamma1(iq, f, tau, 3.0)
    got = required_bandwidth(iq, f, tau, m, a_max=exact * 50)
    assert abs(got - exact) <= 1e-5 * exact


@given(st.floats(0.2, 1.0), st.floats(0.01, 0.99), st.floats(1e4, 1e8))
def test_bisection_bracketing_certificate(iq, frac, f):
    m = ParametricSatisfaction().fit()
    tau = iq * frac
    a = required_bandwidth(iq, f, tau, m, a_max=1e12)
    assert a is not None
    assert m._predict_one(iq, f / a) >= tau
    if a > 1e-12 * 1e12:
        assert m._predict_one(iq, f / (a * (1 - 1e-5))) < tau


def test_bisection_edge_cases():
    m = ParametricSatisfaction().fit()
    assert required_bandwidth(0.8, 1e6, 0.0, m, a_max=1e6) == 1e-12 * 1e6
    assert required_bandwidth(0.5, 1e6, 0.6, m, a_max=1e9) is None
    with pytest.raises(ValueError):
        required_bandwidth(0.5, 1e6, 0.2, KNNSatisfaction(1).fit([[0.5, 1.0]], [0.5]), 1e6)


@pytest.mark.parametrize("bad", [{"kind": "knn"}, {"kind": "knn", "k": 1, "rows": [[0.1, 2.0]]}])
def test_model_dict_malformed_knn(bad):
    with pytest.raises(ValueError):
        model_from_dict(bad)
