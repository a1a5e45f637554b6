from fractions import Fraction

import numpy as np
import pytest
import scipy.optimize
from hypothesis import given, settings
from hypothesis import strategies as st

from maskbench.classifiers import (
    DEFAULT_HYPERPARAMETERS,
    MODEL_NAMES,
    DimensionMismatchError,
    LabeledDataset,
    LdaFactorizationError,
    LrModel,
    SvcModel,
    predict_dt,
    predict_knn,
    predict_lda,
    predict_lr,
    predict_nb,
    predict_svc,
    train,
    train_dt,
    train_knn,
    train_lda,
    train_lr,
    train_nb,
    train_svc,
)
from maskbench.classifiers.dt import best_split, gini
from maskbench.classifiers.lr import lr_loss, lr_loss_and_grad, softmax
from maskbench.classifiers.svc import svc_objective

TWO_POINTS = LabeledDataset(np.array([[0.0, 0.0], [4.0, 4.0]]), np.array([1, 2]))


def blobs(seed, n_per=10, C=3, d=5, spread=0.5):
    rng = np.random.default_rng(seed)
    centers = rng.normal(0, 3, (C, d))
    X = np.vstack([centers[c] + spread * rng.normal(size=(n_per, d)) for c in range(C)])
    y = np.repeat(np.arange(1, C + 1) * 10, n_per)  # non-contiguous ids on purpose
    return LabeledDataset(X, y)


# --- dataset ------------------------------------------------------------


def test_dataset_validation():
    with pytest.raises(ValueError):
        LabeledDataset(np.zeros((3, 2)), [1, 1, 1])
    with pytest.raises(ValueError):
        LabeledDataset(np.zeros((3, 2)), [1, 2])
    with pytest.raises(ValueError):
        LabeledDataset(np.array([[np.nan, 0.0], [1.0, 1.0]]), [1, 2])


# --- SVC ----------------------------------------------------------------


def test_svc_two_points():
    m = train_svc(TWO_POINTS)
    assert predict_svc(m, [0.1, 0.1]) == 1
    assert predict_svc(m, [3.9, 3.9]) == 2


def test_svc_separated_has_zero_hinge():
    X = np.array([[-2.0, 0.0], [-3.0, 1.0], [2.0, 0.0], [3.0, -1.0]])
    m = train_svc(LabeledDataset(X, [1, 1, 2, 2]), cost=10.0)
    assert max(m.meta["hinge"]) <= 1e-6


def test_svc_checkpoints_non_increasing():
    m = train_svc(blobs(0))
    trace = np.array(m.meta["objective_trace"])
    assert np.all(np.diff(trace, axis=0) <= 1e-6)


def _svc_reference(X, y_pm, lam, iters):
    """Projected subgradient on the primal, one class at a time."""
    n, d = X.shape
    Xa = np.hstack([X, np.ones((n, 1))])
    w = np.zeros(d + 1)
    radius = 1.0 / np.sqrt(lam)
    best = np.inf
    for t in range(1, iters + 1):
        margins = y_pm * (Xa @ w)
        obj = 0.5 * lam * w @ w + np.maximum(0, 1 - margins).mean()
        best = min(best, obj)
        g = lam * w - (Xa * (y_pm * (margins < 1))[:, None]).sum(axis=0) / n
        w = w - g / (lam * t)
        norm = np.linalg.norm(w)
        if norm > radius:
            w *= radius / norm
    return best


def test_svc_objective_matches_reference_optimizer():
    rng = np.random.default_rng(7)
    X = np.vstack([rng.normal(-1, 1, (10, 3)), rng.normal(1, 1, (10, 3))])
    y = np.repeat([1, 2], 10)
    m = train_svc(LabeledDataset(X, y), cost=1.0, iters=2000)
    lam = 1.0 / 20
    for c, cls in enumerate([1, 2]):
        y_pm = np.where(y == cls, 1.0, -1.0)
        ref = _svc_reference(X, y_pm, lam, 2000)
        assert m.meta["objective"][c] == pytest.approx(ref, rel=1e-3)


def test_svc_objective_reported_consistently():
    ds = blobs(3)
    m = train_svc(ds)
    Y = np.where(ds.labels[:, None] == m.classes[None, :], 1.0, -1.0)
    obj, _ = svc_objective(m.weights, m.biases, ds.features, Y, 1.0 / ds.n)
    assert np.allclose(obj, m.meta["objective"], rtol=1e-9)


def test_svc_flags_conflicting_duplicates():
    X = np.array([[1.0, 1.0], [1.0, 1.0], [2.0, 0.0]])
    m = train_svc(LabeledDataset(X, [1, 2, 2]), iters=50)
    assert m.meta["separable"] is False
    assert train_svc(TWO_POINTS, iters=50).meta["separable"] is True


def test_svc_tie_to_smallest_class():
    m = SvcModel(classes=np.array([3, 5]), weights=np.zeros((2, 2)), biases=np.zeros(2))
    assert predict_svc(m, [1.0, -1.0]) == 3


def test_svc_predict_matches_enumeration(rng):
    for _ in range(20):
        W = rng.normal(size=(4, 5))
        b = rng.normal(size=5)
        classes = np.array([2, 4, 6, 8, 10])
        m = SvcModel(classes=classes, weights=W, biases=b)
        x = rng.normal(size=4)
        scores = [sum(W[j, c] * x[j] for j in range(4)) + b[c] for c in range(5)]
        assert predict_svc(m, x) == classes[scores.index(max(scores))]


# --- LDA ----------------------------------------------------------------


def test_lda_fisher_direction():
    rng = np.random.default_rng(1)
    X = np.vstack([rng.normal(0, 1, (2000, 2)) + [-1, 0], rng.normal(0, 1, (2000, 2)) + [1, 0]])
    m = train_lda(LabeledDataset(X, np.repeat([1, 2], 2000)))
    direction = m.coef[:, 1] - m.coef[:, 0]
    assert direction @ np.array([1.0, 0.0]) / np.linalg.norm(direction) >= 0.999


def test_lda_midpoint_tie():
    X = np.array([[-1.0, 0.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, 0.0], [1.0, 1.0], [1.0, -1.0]])
    m = train_lda(LabeledDataset(X, [1, 1, 1, 2, 2, 2]))
    s = m.scores(np.array([[0.0, 0.0]]))[0]
    assert abs(s[0] - s[1]) <= 1e-9
    assert predict_lda(m, [0.0, 0.0]) == 1
    assert predict_lda(m, m.means[1]) == 2
    assert predict_lda(m, m.means[0]) == 1


def test_lda_more_dims_than_samples():
    rng = np.random.default_rng(2)
    X = rng.random((60, 500))
    m = train_lda(LabeledDataset(X, np.repeat(np.arange(1, 7), 10)), shrinkage=1e-3)
    assert np.all(np.isfinite(m.scores(X)))


def test_lda_zero_shrinkage_singular():
    X = np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 0.0], [2.0, 0.0, 0.0], [3.0, 1.0, 0.0]])
    with pytest.raises(LdaFactorizationError):
        train_lda(LabeledDataset(X, [1, 1, 2, 2]), shrinkage=0.0)


def test_lda_zero_shrinkage_full_rank_matches_dense():
    ds = blobs(4, n_per=20, d=3)
    m = train_lda(ds, shrinkage=0.0)
    _check_lda_dense(m, ds, 0.0)


def _check_lda_dense(m, ds, gamma):
    X, y = ds.features, ds.labels
    classes = np.unique(y)
    means = np.array([X[y == c].mean(axis=0) for c in classes])
    centered = X - means[np.searchsorted(classes, y)]
    S = centered.T @ centered / (len(y) - len(classes))
    d = X.shape[1]
    Sg = (1 - gamma) * S + gamma * np.trace(S) / d * np.eye(d)
    priors = np.array([np.mean(y == c) for c in classes])
    rng = np.random.default_rng(0)
    Q = rng.normal(size=(25, d)) + X.mean(axis=0)
    sol = np.linalg.solve(Sg, means.T)
    scores = Q @ sol - 0.5 * np.sum(means.T * sol, axis=0) + np.log(priors)
    assert np.allclose(m.scores(Q), scores, rtol=1e-7, atol=1e-7)
    assert np.array_equal(m.predict(Q), classes[np.argmax(scores, axis=1)])


@pytest.mark.parametrize("gamma", [1e-3, 0.1, 0.9])
def test_lda_matches_dense_solve(gamma):
    ds = blobs(5, n_per=8, C=4, d=12)
    _check_lda_dense(train_lda(ds, shrinkage=gamma), ds, gamma)


def test_lda_n_less_than_d_matches_dense():
    ds = blobs(6, n_per=3, C=4, d=30)
    _check_lda_dense(train_lda(ds), ds, 1e-3)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-6, 1.0))
def test_lda_never_fails_with_shrinkage(seed, gamma):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 2, (8, 20)).astype(float)
    X[:, 5] = 0.0
    y = np.array([1, 1, 2, 2, 3, 3, 4, 4])
    m = train_lda(LabeledDataset(X, y), shrinkage=gamma)
    assert np.all(np.isfinite(m.scores(X)))


def test_lda_all_constant_features():
    m = train_lda(LabeledDataset(np.ones((4, 3)), [1, 1, 2, 2]))
    assert predict_lda(m, [1.0, 1.0, 1.0]) == 1


# --- KNN ----------------------------------------------------------------


def _knn_oracle(X, y, k, q):
    order = sorted(range(len(X)), key=lambda i: (float(np.sqrt(((X[i] - q) ** 2).sum())), i))
    votes = {}
    for i in order[:k]:
        votes[y[i]] = votes.get(y[i], 0) + 1
    top = max(votes.values())
    return min(c for c, v in votes.items() if v == top)


def test_knn_exact_match_k1():
    ds = blobs(1)
    m = train_knn(ds, k=1)
    assert predict_knn(m, ds.features[7]) == ds.labels[7]


def test_knn_majority():
    X = np.array([[0.0], [0.1], [0.2], [5.0], [5.1]])
    m = train_knn(LabeledDataset(X, [1, 1, 2, 2, 2]), k=3)
    assert predict_knn(m, [0.05]) == 1


def test_knn_store_and_k_bounds():
    ds = blobs(2)
    assert train_knn(ds).features.shape[0] == ds.n
    with pytest.raises(ValueError):
        train_knn(ds, k=ds.n + 1)


def test_knn_matches_bruteforce_oracle():
    rng = np.random.default_rng(2024)
    for trial in range(200):
        n = int(rng.integers(3, 25))
        d = int(rng.integers(1, 4))
        # small integer grid so distance ties and vote ties both occur
        X = rng.integers(0, 4, (n, d)).astype(float)
        y = rng.integers(1, 5, n)
        if len(np.unique(y)) < 2:
            y[0] = 1 if y[1] != 1 else 2
        k = int(rng.integers(1, n + 1))
        m = train_knn(LabeledDataset(X, y), k=k)
        q = rng.integers(0, 4, d).astype(float)
        assert predict_knn(m, q) == _knn_oracle(X, y, k, q), trial


def test_knn_chi2_metric():
    X = np.array([[0.5, 0.5], [0.9, 0.1], [0.1, 0.9]])
    m = train_knn(LabeledDataset(X, [1, 2, 3]), k=1, metric="chi2")
    assert predict_knn(m, [0.85, 0.15]) == 2
    assert predict_knn(m, [0.0, 0.0]) == 1  # all-zero query: 0/0 terms count as 0


# --- DT -----------------------------------------------------------------


def _enumerate_splits_oracle(x, y):
    xs = sorted(set(x))
    best = None
    for a, b in zip(xs, xs[1:]):
        t = (a + b) / 2
        left = [c for v, c in zip(x, y) if v <= t]
        right = [c for v, c in zip(x, y) if v > t]

        def g(labels):
            return 1 - sum(Fraction(labels.count(c), len(labels)) ** 2 for c in set(labels))

        # exact arithmetic: equal impurities must tie, then the lower threshold wins
        impurity = (len(left) * g(left) + len(right) * g(right)) / len(y)
        if best is None or impurity < best[0]:
            best = (impurity, t)
    return best[1]


def test_dt_root_split_1d():
    x = [1.0, 2.0, 8.0, 9.0]
    y = [1, 1, 2, 2]
    m = train_dt(LabeledDataset(np.array(x)[:, None], y))
    assert m.threshold[0] == _enumerate_splits_oracle(x, y) == 5.0
    assert np.array_equal(m.predict(np.array(x)[:, None]), y)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 20), st.integers(1, 3)), min_size=4, max_size=30))
def test_dt_root_split_matches_oracle(pairs):
    x = [float(a) for a, _ in pairs]
    y = [b for _, b in pairs]
    if len(set(y)) < 2 or len(set(x)) < 2:
        return
    ds = LabeledDataset(np.array(x)[:, None], y)
    _, yi = ds.encoded()
    feature, thr = best_split(ds.features, yi, ds.n_classes)
    assert feature == 0
    assert thr == _enumerate_splits_oracle(x, y)


def test_dt_pure_growth_fits_training_data():
    ds = blobs(8, n_per=15, C=4, d=6, spread=2.0)
    m = train_dt(ds)
    assert np.array_equal(predict_dt(m, ds.features), ds.labels)


def test_dt_single_class_single_leaf():
    X = np.array([[1.0], [2.0], [3.0], [4.0]])
    ds = LabeledDataset(np.vstack([X, [[5.0]]]), [1, 1, 1, 1, 2])
    sub = train_dt(ds, min_leaf=10)
    assert sub.node_count == 1 and sub.depth() == 0
    assert predict_dt(sub, [100.0]) == 1


def test_dt_tie_prefers_lowest_feature():
    X = np.array([[0.0, 0.0], [1.0, 1.0]])
    m = train_dt(LabeledDataset(X, [1, 2]))
    assert m.feature[0] == 0


def test_dt_conflicting_duplicates_stop():
    X = np.array([[1.0], [1.0], [2.0]])
    m = train_dt(LabeledDataset(X, [2, 1, 2]))
    assert predict_dt(m, [1.0]) == 1  # majority tie goes to the smaller id
    assert predict_dt(m, [-1e9]) == 1 and predict_dt(m, [1e9]) == 2


def test_gini():
    assert gini(np.array([2, 2])) == 0.5
    assert gini(np.array([4, 0])) == 0.0


# --- LR -----------------------------------------------------------------


def test_lr_two_points():
    m = train_lr(TWO_POINTS)
    X = TWO_POINTS.features
    assert np.array_equal(predict_lr(m, X), [1, 2])
    assert np.all(m.predict_proba(X).max(axis=1) >= 0.9)


def test_lr_gradient_finite_differences():
    rng = np.random.default_rng(11)
    X = rng.normal(size=(12, 4))
    y = rng.integers(0, 3, 12)
    Y = np.eye(3)[y]
    h = 1e-5
    for _ in range(20):
        W = rng.normal(size=(3, 4))
        b = rng.normal(size=3)
        _, gW, gb = lr_loss_and_grad(W, b, X, Y, 0.1)
        theta = np.concatenate([W.ravel(), b])
        analytic = np.concatenate([gW.ravel(), gb])
        fd = np.empty_like(theta)
        for i in range(theta.size):
            e = np.zeros_like(theta)
            e[i] = h
            tp, tm = theta + e, theta - e
            fd[i] = (
                lr_loss(tp[:12].reshape(3, 4), tp[12:], X, Y, 0.1)
                - lr_loss(tm[:12].reshape(3, 4), tm[12:], X, Y, 0.1)
            ) / (2 * h)
        assert np.linalg.norm(analytic - fd) / np.linalg.norm(fd) <= 1e-5


def test_lr_first_step_antisymmetric():
    X = np.array([[1.0, 2.0], [-1.0, -2.0]])
    _, gW, _ = lr_loss_and_grad(np.zeros((2, 2)), np.zeros(2), X, np.eye(2), 1e-4)
    step = -gW
    assert np.allclose(step[0], -step[1], atol=1e-12, rtol=0)
    m = train_lr(LabeledDataset(X, [1, 2]), max_iters=1)
    assert np.allclose(m.weights[0], -m.weights[1], atol=1e-12, rtol=0)


def test_lr_loss_trace_non_increasing():
    m = train_lr(blobs(9), max_iters=200)
    trace = np.array(m.meta["loss_trace"])
    assert np.all(np.diff(trace) <= 0)
    assert m.meta["final_loss"] == trace[-1]


def test_lr_reaches_optimum():
    ds = blobs(12, n_per=6, C=3, d=4, spread=2.0)
    l2 = 1e-2
    m = train_lr(ds, l2=l2, tol=1e-9, max_iters=5000)
    classes, yi = ds.encoded()
    Y = np.eye(3)[yi]

    def f(theta):
        W, b = theta[:12].reshape(3, 4), theta[12:]
        loss, gW, gb = lr_loss_and_grad(W, b, ds.features, Y, l2)
        return loss, np.concatenate([gW.ravel(), gb])

    ref = scipy.optimize.minimize(f, np.zeros(15), jac=True, method="BFGS", options={"gtol": 1e-10})
    assert m.meta["final_loss"] == pytest.approx(ref.fun, abs=1e-8)
    assert m.meta["grad_inf_norm"] <= 1e-8


def test_lr_stable_on_large_inputs():
    X = np.array([[1e4, 0.0], [0.0, 1e4], [-1e4, -1e4]])
    m = train_lr(LabeledDataset(X, [1, 2, 3]), max_iters=50)
    assert np.isfinite(m.meta["final_loss"])


def test_lr_probabilities_and_zero_model(rng):
    m = LrModel(classes=np.array([1, 2, 3]), weights=np.zeros((3, 4)), biases=np.zeros(3))
    assert predict_lr(m, rng.normal(size=4)) == 1
    m = LrModel(classes=np.array([1, 2, 3]), weights=rng.normal(size=(3, 4)), biases=rng.normal(size=3))
    p = m.predict_proba(rng.normal(size=(10, 4)))
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-9)
    x = rng.normal(size=4)
    logits = m.weights @ x + m.biases
    assert predict_lr(m, x) == m.classes[int(np.argmax(logits))]
    assert np.allclose(softmax(logits[None])[0], np.exp(logits) / np.exp(logits).sum())


# --- NB -----------------------------------------------------------------


def test_nb_mean_and_variance():
    X = np.array([[0.0, 0.0], [2.0, 2.0], [10.0, 10.0], [12.0, 14.0]])
    m = train_nb(LabeledDataset(X, [1, 1, 2, 2]))
    assert m.means[0].tolist() == [1.0, 1.0]
    assert m.variances[0].tolist() == [1.0, 1.0]


def test_nb_constant_feature_floor():
    X = np.array([[0.0, 5.0], [2.0, 5.0], [10.0, 5.0], [12.0, 5.0]])
    m = train_nb(LabeledDataset(X, [1, 1, 2, 2]), var_smoothing=1e-9)
    floor = 1e-9 * X[:, 0].var()
    assert m.variances[0, 1] == floor
    assert np.all(np.isfinite(m.scores(np.array([[1.0, 5.0]]))))


def test_nb_single_sample_per_class():
    X = np.array([[0.0, 1.0], [3.0, 2.0]])
    m = train_nb(LabeledDataset(X, [1, 2]))
    assert np.all(m.variances == m.meta["variance_floor"])
    assert predict_nb(m, [0.1, 1.1]) == 1


def test_nb_mean_point_and_midpoint():
    X = np.array([[0.0, 0.0], [0.0, 2.0], [4.0, 0.0], [4.0, 2.0]])
    m = train_nb(LabeledDataset(X, [1, 1, 2, 2]))
    m2 = train_nb(LabeledDataset(np.array([[-1.0], [1.0], [3.0], [5.0]]), [1, 1, 2, 2]))
    assert predict_nb(m2, [0.0]) == 1 and predict_nb(m2, [4.0]) == 2
    assert predict_nb(m2, [2.0]) == 1  # symmetric midpoint ties to the smaller id
    assert predict_nb(m, [4.0, 1.0]) == 2


def test_nb_matches_log_density_oracle(rng):
    ds = blobs(13, d=3)
    m = train_nb(ds)
    for x in rng.normal(0, 3, (20, 3)):
        best, best_c = -np.inf, None
        for c, cls in enumerate(m.classes):
            ll = m.log_priors[c]
            for j in range(3):
                mu, var = m.means[c, j], m.variances[c, j]
                ll += -0.5 * np.log(2 * np.pi * var) - (x[j] - mu) ** 2 / (2 * var)
            if ll > best:
                best, best_c = ll, cls
        assert predict_nb(m, x) == best_c


# --- shared contract ----------------------------------------------------


@pytest.mark.parametrize("name", MODEL_NAMES)
def test_training_is_deterministic(name):
    ds = blobs(21)
    from maskbench.classifiers import serialize_model

    assert serialize_model(train(name, ds)) == serialize_model(train(name, ds))


@pytest.mark.parametrize("name", MODEL_NAMES)
def test_dimension_mismatch(name):
    m = train(name, blobs(22))
    with pytest.raises(DimensionMismatchError):
        m.predict(np.zeros(4))


@pytest.mark.parametrize("name", MODEL_NAMES)
def test_models_fit_easy_blobs(name):
    ds = blobs(23, n_per=12, spread=0.3)
    m = train(name, ds)
    assert (m.predict(ds.features) == ds.labels).mean() >= 0.9
    assert set(np.unique(m.predict(ds.features))) <= set(ds.classes)


def test_default_hyperparameters():
    assert DEFAULT_HYPERPARAMETERS["SVC"] == {"cost": 1.0, "iters": 2000}
    assert DEFAULT_HYPERPARAMETERS["KNN"]["k"] == 5
    assert DEFAULT_HYPERPARAMETERS["LR"] == {"l2": 1e-4, "tol": 1e-6, "max_iters": 1000}
    assert DEFAULT_HYPERPARAMETERS["LDA"] == {"shrinkage": 1e-3}
    assert DEFAULT_HYPERPARAMETERS["NB"] == {"var_smoothing": 1e-9}
