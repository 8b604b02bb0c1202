import inspect

import numpy as np
import pytest

from churnkit.baselines import (
    C_GRID,
    DEFAULT_C,
    BaselineError,
    LinearModel,
    _best_intercept,
    log_likelihood,
    log_likelihood_gradient,
    predict_logreg,
    predict_svm,
    sigmoid,
    svm_objective,
    train_linear_svm,
    train_logreg,
)
from churnkit.dataset import DatasetError, LabeledDataset

from conftest import make_data
from oracles import central_difference


def blobs(n=200, gap=3.0, seed=0):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(-gap, 0.5, (n, 2)), rng.normal(gap, 0.5, (n, 2))])
    y = np.r_[np.zeros(n, dtype=int), np.ones(n, dtype=int)]
    return make_data(X, y)


# -- logistic regression ----------------------------------------------------------

def test_separable_1d_direction():
    X = np.repeat([[-1.0], [1.0]], 50, axis=0)
    y = np.repeat([0, 1], 50)
    model = train_logreg(make_data(X, y))
    assert model.coefficients[0] > 0


def test_stopping_contract():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(300, 3))
    y = (rng.random(300) < sigmoid(X @ [1.0, -2.0, 0.5])).astype(int)
    model = train_logreg(make_data(X, y))
    gw, gb = log_likelihood_gradient(model.coefficients, model.intercept, X, y)
    grad_norm = max(np.abs(gw).max(), abs(gb))
    assert (model.converged and grad_norm < 1e-6) or model.n_iter == 500
    assert model.converged


def test_loss_never_increases():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(200, 4))
    y = (X[:, 0] + rng.normal(0, 1, 200) > 0).astype(int)
    model = train_logreg(make_data(X, y), max_iterations=100, step=50.0)
    h = np.array(model.history)
    assert (np.diff(h) <= 0).all()


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(30, 4))
    y = (rng.random(30) < 0.4).astype(float)
    w, b = rng.normal(size=4), 0.3
    gw, gb = log_likelihood_gradient(w, b, X, y)
    fd_w = central_difference(lambda v: log_likelihood(v, b, X, y), w)
    fd_b = central_difference(lambda v: log_likelihood(w, v[0], X, y), [b])[0]
    assert np.allclose(gw, fd_w, rtol=1e-5, atol=1e-9)
    assert gb == pytest.approx(fd_b, rel=1e-5)


def test_logreg_boundary_and_saturation():
    m = LinearModel("logistic", np.array([1.0, -1.0]), 0.0)
    cls, p = predict_logreg(m, np.array([[2.0, 2.0]]))
    assert p[0] == 0.5 and cls[0] == 1
    sat = LinearModel("logistic", np.zeros(2), 10.0)
    _, p = predict_logreg(sat, np.random.default_rng(0).normal(size=(5, 2)))
    assert (p > 0.9999).all()
    t = np.linspace(-3, 3, 20)[:, None] * np.array([[1.0, -1.0]])
    assert (np.diff(predict_logreg(m, t)[1]) > 0).all()


def test_logreg_errors():
    with pytest.raises(BaselineError):
        train_logreg(make_data(np.zeros((4, 2)), np.zeros(4)))
    with pytest.raises(BaselineError):
        LinearModel("logistic", np.zeros(2), 0.0).predict(np.zeros((1, 3)))
    with pytest.raises(DatasetError):
        LabeledDataset(np.array([[np.nan]]), np.array([0]))


def test_sigmoid_stable():
    z = np.array([-1000.0, 0.0, 1000.0])
    assert sigmoid(z).tolist() == [0.0, 0.5, 1.0]


# -- linear SVM ----------------------------------------------------------------------

def test_c_grid_and_default():
    assert C_GRID == tuple(10.0 ** k for k in range(-4, 5))
    assert DEFAULT_C == 100.0
    assert inspect.signature(train_linear_svm).parameters["C"].default == 100.0


def test_separable_blobs():
    data = blobs()
    model = train_linear_svm(data)
    y_pm = np.where(data.labels == 1, 1, -1)
    assert (model.predict(data.features) == data.labels).all()
    assert (y_pm * model.decision_function(data.features) >= 0).all()


@pytest.mark.parametrize("C", [1e-4, 1e-2, 1.0, 100.0, 1e4])
def test_returned_objective_not_above_first_iterate(C):
    rng = np.random.default_rng(3)
    X = rng.normal(size=(150, 3))
    y = (X[:, 0] - X[:, 1] + rng.normal(0, 0.8, 150) > 0.5).astype(int)
    data = make_data(X, y)
    model = train_linear_svm(data, C=C, epochs=60)
    y_pm = np.where(y == 1, 1.0, -1.0)
    final = svm_objective(model.coefficients, model.intercept, X, y_pm, C)
    assert final <= model.history[1] + 1e-9
    assert final == min(model.history[1:])


def test_best_intercept_is_exact_minimizer():
    rng = np.random.default_rng(4)
    s = rng.normal(size=40)
    y = np.where(rng.random(40) < 0.3, 1.0, -1.0)
    b = _best_intercept(s, y)

    def cost(v):
        return np.maximum(0, 1 - y * (s + v)).sum()

    grid = np.linspace(-5, 5, 20001)
    assert cost(b) <= min(cost(v) for v in grid) + 1e-12


def test_svm_prediction_rules():
    m = LinearModel("svm", np.array([1.0, 2.0]), -1.0, C=1.0)
    assert predict_svm(m, np.array([[1.0, 0.0]])).tolist() == [1]  # on the hyperplane
    X = np.random.default_rng(5).normal(size=(50, 2))
    d = m.decision_function(X)
    neg = LinearModel("svm", -m.coefficients, -m.intercept, C=1.0)
    strict = d != 0
    assert (predict_svm(neg, X)[strict] == 1 - predict_svm(m, X)[strict]).all()
    wide = LinearModel("svm", np.r_[m.coefficients, 0.0], m.intercept, C=1.0)
    Xw = np.column_stack([X, np.random.default_rng(6).normal(size=50)])
    assert np.array_equal(predict_svm(wide, Xw), predict_svm(m, X))


def test_svm_deterministic_and_errors():
    data = blobs(50, gap=0.5, seed=2)
    a, b = train_linear_svm(data, C=1.0), train_linear_svm(data, C=1.0)
    assert np.array_equal(a.coefficients, b.coefficients) and a.intercept == b.intercept
    with pytest.raises(BaselineError):
        train_linear_svm(data, C=0)
