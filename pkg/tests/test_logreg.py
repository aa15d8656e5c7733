import json

import numpy as np
import pytest
from sklearn.base import clone

from paired_consistency.logreg import (
    LogisticModel,
    PairedConsistencyLogisticRegression,
    TrainConfig,
    TrainingError,
    gradient,
    loss,
    predict_proba,
    sigmoid,
    train_logreg,
)
from paired_consistency.pairs import PairSet

from helpers import make_encoded


def random_instance(r, eta=None):
    n = int(r.integers(6, 30))
    f = int(r.integers(1, 6))
    X = r.normal(size=(n, f)) * r.uniform(0.5, 3.0, size=f)
    y = r.integers(0, 2, n)
    m = int(r.integers(1, 12))
    i = r.integers(0, n, m)
    j = (i + r.integers(1, n, m)) % n
    pairs = PairSet(i, j, r.uniform(0.1, 3.0, m))
    cfg = TrainConfig(eta=float(r.uniform(0.0, 5.0)) if eta is None else eta, l2=float(r.uniform(0, 0.1)))
    model = LogisticModel(r.normal(size=f), float(r.normal()))
    return make_encoded(X, y), pairs, cfg, model


def numeric_gradient(model, data, pairs, cfg, h=1e-6):
    theta = np.append(model.weights, model.bias)
    out = np.empty_like(theta)
    for k in range(len(theta)):
        up, down = theta.copy(), theta.copy()
        up[k] += h
        down[k] -= h
        lu = loss(LogisticModel(up[:-1], up[-1]), data.matrix, data.labels, pairs, cfg)
        ld = loss(LogisticModel(down[:-1], down[-1]), data.matrix, data.labels, pairs, cfg)
        out[k] = (lu - ld) / (2 * h)
    return out


@pytest.mark.properties
def test_gradient_matches_finite_differences():
    r = np.random.default_rng(2024)
    worst = 0.0
    for trial in range(100):
        data, pairs, cfg, model = random_instance(r, eta=0.0 if trial < 10 else None)
        analytic = gradient(model, data, pairs, cfg)
        numeric = numeric_gradient(model, data, pairs, cfg)
        rel = np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-3)
        worst = max(worst, float(rel.max()))
    assert worst <= 1e-5, worst


def test_identical_pair_members_add_nothing():
    X = np.array([[1.0, 2.0], [1.0, 2.0], [0.0, -1.0]])
    data = make_encoded(X, [1, 0, 1])
    model = LogisticModel(np.array([0.3, -0.7]), 0.2)
    with_pair = gradient(model, data, PairSet([0], [1], [2.5]), TrainConfig(eta=3.0, l2=0.0))
    without = gradient(model, data, PairSet.empty(), TrainConfig(eta=0.0, l2=0.0))
    assert np.array_equal(with_pair, without)


def test_symmetric_data_zero_ce_gradient():
    X = np.array([[1.0, 2.0], [-1.0, -2.0], [3.0, 0.5], [-3.0, -0.5]])
    data = make_encoded(X, [1, 1, 0, 0])
    g = gradient(LogisticModel(np.zeros(2), 0.0), data, None, TrainConfig(l2=0.0))
    assert np.all(g[:-1] == 0.0)


def test_hand_model_probabilities():
    model = LogisticModel(np.array([0.5, -1.0, 2.0]), 0.1)
    rows = np.array([[1.0, 2.0, 0.5], [0.0, 0.0, 0.0]])
    # 0.5 - 2 + 1 + 0.1 = -0.4 and 0.1
    expected = [1 / (1 + np.exp(0.4)), 1 / (1 + np.exp(-0.1))]
    assert predict_proba(model, rows) == pytest.approx(expected, abs=1e-15)
    assert predict_proba(model, rows) == pytest.approx([0.401312, 0.524979], abs=1e-6)
    assert predict_proba(LogisticModel(np.zeros(3), 0.0), rows).tolist() == [0.5, 0.5]


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        predict_proba(LogisticModel(np.zeros(3), 0.0), np.zeros((2, 4)))


def test_sigmoid_is_stable():
    s = sigmoid(np.array([-1000.0, 0.0, 1000.0]))
    assert s.tolist() == [0.0, 0.5, 1.0]


def blobs(r, n=80):
    X = np.r_[r.normal(-1.0, 1.0, size=(n // 2, 2)), r.normal(1.0, 1.0, size=(n // 2, 2))]
    y = np.r_[np.zeros(n // 2), np.ones(n // 2)].astype(int)
    return make_encoded(X, y)


@pytest.mark.properties
def test_eta_zero_is_bitwise_plain_training(rng):
    data = blobs(rng)
    pairs = PairSet([0, 1, 2], [50, 60, 70], [1.0, 2.0, 0.5])
    cfg = TrainConfig(eta=0.0, epochs=200, l2=0.0)
    a, _ = train_logreg(data, pairs, cfg)
    b, _ = train_logreg(data, None, cfg)
    assert a.weights.tobytes() == b.weights.tobytes()
    assert a.bias == b.bias


def test_separable_reaches_full_accuracy():
    r = np.random.default_rng(1)
    X = r.uniform(-1, 1, size=(200, 2))
    keep = np.abs(X[:, 0] + 0.5 * X[:, 1]) > 0.1
    X = X[keep]
    y = (X[:, 0] + 0.5 * X[:, 1] > 0).astype(int)
    model, _ = train_logreg(make_encoded(X, y), None, TrainConfig(epochs=2000, learning_rate=1.0, l2=0.0))
    assert np.mean((predict_proba(model, X) >= 0.5) == y) == 1.0


def test_trace_shape_and_sum(rng):
    data = blobs(rng)
    cfg = TrainConfig(eta=0.7, epochs=50, l2=0.01)
    model, trace = train_logreg(data, PairSet([0, 1], [40, 41]), cfg)
    assert len(trace) == 50
    for ce, pair, reg, total in zip(trace.ce_loss, trace.pair_loss, trace.l2_loss, trace.total):
        assert total == pytest.approx(ce + 0.7 * pair + reg, rel=1e-14)
    assert trace.total[-1] == pytest.approx(loss(model, data.matrix, data.labels, PairSet([0, 1], [40, 41]), cfg), rel=1e-12)
    assert trace.total[-1] < trace.total[0]


def test_trace_csv(tmp_path, rng):
    _, trace = train_logreg(blobs(rng), None, TrainConfig(epochs=3))
    trace.to_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "epoch,ce_loss,pair_loss,total"
    assert len(lines) == 4


@pytest.mark.properties
def test_penalty_bound(rng):
    data = blobs(rng)
    pairs = PairSet(np.arange(40), np.arange(40, 80))
    for eta in (0.5, 2.0, 10.0):
        _, trace = train_logreg(data, pairs, TrainConfig(eta=eta, epochs=30))
        assert all(eta * p <= eta for p in trace.pair_loss)


@pytest.mark.properties
def test_monotone_tradeoff_at_convergence():
    r = np.random.default_rng(8)
    data = blobs(r, 60)
    pairs = PairSet(np.arange(0, 30, 3), np.arange(30, 60, 3))
    finals = []
    for eta in (0.0, 0.1, 0.3, 1.0, 3.0):
        est = PairedConsistencyLogisticRegression(eta=eta, epochs=6000, learning_rate=1.0, l2=1e-3)
        est.fit(data.matrix, data.labels, pairs=pairs)
        assert est.trace_.final_grad_norm < 1e-8
        finals.append((est.trace_.ce_loss[-1], est.trace_.pair_loss[-1]))
    eps = 1e-6
    for (ce1, pl1), (ce2, pl2) in zip(finals, finals[1:]):
        assert pl2 <= pl1 + eps
        assert ce2 >= ce1 - eps
    assert finals[-1][1] < finals[0][1]


def test_determinism(rng):
    data = blobs(rng)
    pairs = PairSet([0, 3], [45, 47])
    a, ta = train_logreg(data, pairs, TrainConfig(eta=1.0, epochs=100))
    b, tb = train_logreg(data, pairs, TrainConfig(eta=1.0, epochs=100))
    assert a.weights.tobytes() == b.weights.tobytes()
    assert ta.total == tb.total


def test_eta_without_pairs_is_an_error(rng):
    with pytest.raises(TrainingError):
        train_logreg(blobs(rng), None, TrainConfig(eta=0.5))


def test_divergence_names_epoch():
    X = np.array([[1.0, 0.0], [-1.0, 1.0], [0.5, 2.0]])
    with pytest.raises(TrainingError, match="epoch 1"):
        train_logreg(make_encoded(X, [1, 0, 1]), None, TrainConfig(epochs=5, learning_rate=1e300))


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(eta=-1)
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)


def test_model_json_round_trip(tmp_path, rng):
    model, _ = train_logreg(blobs(rng), None, TrainConfig(epochs=10))
    model.save(tmp_path / "m.json")
    payload = json.loads((tmp_path / "m.json").read_text())
    assert payload["kind"] == "logreg" and payload["config"]["epochs"] == 10
    back = LogisticModel.from_dict(payload)
    assert back.weights.tobytes() == model.weights.tobytes()


def test_estimator_api(rng):
    data = blobs(rng)
    est = PairedConsistencyLogisticRegression(epochs=100)
    assert clone(est).get_params()["epochs"] == 100
    est.fit(data.matrix, data.labels)
    proba = est.predict_proba(data.matrix)
    assert proba.shape == (len(data), 2)
    assert np.allclose(proba.sum(axis=1), 1.0)
    assert set(est.predict(data.matrix)) <= {0, 1}
    assert est.score(data.matrix, data.labels) > 0.7
    # same result through the functional API
    model, _ = train_logreg(data, None, TrainConfig(epochs=100))
    assert est.coef_.tobytes() == model.weights.tobytes()
