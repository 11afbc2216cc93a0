import numpy as np
import pytest

from vrstab import _kernels as K
from vrstab.data import Dataset, make_neighbor
from vrstab.losses import LossModel, empirical_gradient, loss_gradient, make_model
from vrstab.optim import (DivergenceError, IndexStream, SagaConfig, SvrgConfig, average_iterate,
                          derive_seed, gradient_table, saga_direction, saga_run, sgd_run,
                          stream_draw, svrg_direction, svrg_run)


def toy(n=12, d=4, kind="logistic", l2=0.0, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    y = np.sign(rng.standard_normal(n)) if kind == "logistic" else rng.standard_normal(n)
    data = Dataset.from_dense(X, y)
    return make_model(kind, data, l2), data


# literal implementations of the three updates, one example gradient at a time

def ref_svrg(model, data, eta, m, T, option, seed):
    n, d = len(data), data.dimension
    grad = lambda w, i: loss_gradient(model, w, data[i])  # noqa: E731
    w = np.zeros(d)
    x = w.copy()
    counter, steps, refs, inner = 0, [], [w.copy()], []
    for _ in range(T):
        full = np.mean([grad(w, j) for j in range(n)], axis=0)
        if option == "II":
            x = w.copy()
        xs = []
        for k in range(m):
            xs.append(x.copy())
            i = stream_draw(seed, counter + k, n)
            x = x - eta * (grad(x, i) - grad(w, i) + full)
            steps.append(x.copy())
        w = xs[stream_draw(seed, counter + m, m)].copy()
        refs.append(w.copy())
        inner.extend(xs)
        counter += m + 1
    return np.array(steps), np.array(refs), np.mean(inner, axis=0)


def ref_saga(model, data, eta, T, seed):
    n, d = len(data), data.dimension
    w = np.zeros(d)
    table = np.array([loss_gradient(model, w, data[j]) for j in range(n)])
    steps, seen = [], []
    for t in range(T):
        seen.append(w.copy())
        i = stream_draw(seed, t, n)
        fresh = loss_gradient(model, w, data[i])
        g = fresh - table[i] + table.mean(axis=0)
        table[i] = fresh
        w = w - eta * g
        steps.append(w.copy())
    return np.array(steps), table, np.mean(seen, axis=0)


def ref_sgd(model, data, eta, T, seed):
    w = np.zeros(data.dimension)
    steps = []
    for t in range(T):
        i = stream_draw(seed, t, len(data))
        w = w - eta * loss_gradient(model, w, data[i])
        steps.append(w.copy())
    return np.array(steps)


@pytest.mark.parametrize("option", ["I", "II"])
@pytest.mark.parametrize("kind,l2", [("logistic", 0.0), ("least_squares", 0.1)])
def test_svrg_matches_literal_reference(option, kind, l2):
    model, data = toy(kind=kind, l2=l2)
    m, T, eta, seed = 7, 4, 0.3, 99
    cfg = SvrgConfig(eta, m, T, option, seed, checkpoints=tuple(range(1, m * T + 1)))
    tr = svrg_run(model, data, cfg)
    steps, refs, avg = ref_svrg(model, data, eta, m, T, option, seed)
    np.testing.assert_allclose(tr.iterates, steps, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(tr.references, refs, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(tr.final_average, avg, rtol=1e-10, atol=1e-12)


def test_saga_matches_literal_reference():
    model, data = toy(l2=0.05)
    T, eta, seed = 60, 0.4, 5
    tr = saga_run(model, data, SagaConfig(eta, T, seed, checkpoints=tuple(range(1, T + 1))))
    steps, table, avg = ref_saga(model, data, eta, T, seed)
    np.testing.assert_allclose(tr.iterates, steps, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(tr.extras["table"], table, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(tr.extras["table_mean"], table.mean(axis=0), atol=1e-10)
    np.testing.assert_allclose(average_iterate(tr), avg, atol=1e-12)


def test_sgd_matches_literal_reference():
    model, data = toy(kind="least_squares")
    tr = sgd_run(model, data, SagaConfig(0.2, 40, 3, checkpoints=tuple(range(1, 41))))
    np.testing.assert_allclose(tr.iterates, ref_sgd(model, data, 0.2, 40, 3), rtol=1e-12, atol=1e-14)


def test_stream_python_matches_kernel():
    for seed in (0, 1, 2 ** 63 + 17, 2 ** 64 - 1):
        for pos in range(50):
            assert stream_draw(seed, pos, 37) == K.draw(np.uint64(seed), pos, 37)


def test_stream_uniform_and_reproducible():
    s = IndexStream(12345)
    draws = np.array([s.next_index(10) for _ in range(20000)])
    counts = np.bincount(draws, minlength=10)
    chi2 = ((counts - 2000) ** 2 / 2000).sum()
    assert chi2 < 27.9  # 99.9% point, 9 dof
    t = IndexStream(12345)
    assert [t.next_index(10) for _ in range(100)] == draws[:100].tolist()
    c = s.copy()
    assert c.next_index(10) == s.next_index(10)
    assert len({derive_seed(7, r) for r in range(1000)}) == 1000


@pytest.mark.parametrize("run", ["svrg", "saga", "sgd"])
def test_zero_step_is_constant(run):
    model, data = toy()
    if run == "svrg":
        tr = svrg_run(model, data, SvrgConfig(0.0, 5, 3, seed=1))
    elif run == "saga":
        tr = saga_run(model, data, SagaConfig(0.0, 20, 1))
    else:
        tr = sgd_run(model, data, SagaConfig(0.0, 20, 1))
    assert np.all(tr.iterates == 0) and np.all(tr.final == 0)


def test_svrg_option2_first_step_example():
    data = Dataset.from_dense([[1.0, 0.0], [0.0, 1.0]], [1.0, 0.0])
    model = LossModel("least_squares", 1.0)
    for seed in range(6):
        tr = svrg_run(model, data, SvrgConfig(0.5, 1, 1, "II", seed, checkpoints=(1,)))
        np.testing.assert_array_equal(tr.iterates[0], [0.25, 0.0])


def test_svrg_first_inner_step_is_full_gradient_step():
    model, data = toy(l2=0.1)
    g = empirical_gradient(model, np.zeros(data.dimension), data)
    for seed in range(10):
        tr = svrg_run(model, data, SvrgConfig(0.3, 4, 1, "II", seed, checkpoints=(1,)))
        np.testing.assert_allclose(tr.iterates[0], -0.3 * g, atol=1e-15)


def test_saga_first_step_is_full_gradient_step():
    model, data = toy(l2=0.1)
    g = empirical_gradient(model, np.zeros(data.dimension), data)
    for seed in range(10):
        tr = saga_run(model, data, SagaConfig(0.3, 1, seed))
        np.testing.assert_allclose(tr.final, -0.3 * g, atol=1e-15)


def test_sgd_logistic_one_step():
    x = np.array([0.6, -0.8])
    data = Dataset.from_dense([x], [1.0])
    tr = sgd_run(LossModel("logistic", 0.25), data, SagaConfig(1.0, 1, 0))
    np.testing.assert_allclose(tr.final, x / 2, rtol=1e-15)


def test_sgd_single_sample_geometric_contraction():
    x = np.array([1.0, 2.0])
    y = 3.0
    data = Dataset.from_dense([x], [y])
    eta = 0.1
    T = 25
    tr = sgd_run(LossModel("least_squares", 5.0), data, SagaConfig(eta, T, 0, checkpoints=tuple(range(1, T + 1))))
    w_star = y * x / (x @ x)
    for t in range(1, T + 1):
        expect = w_star + (1 - eta * (x @ x)) ** t * (0 - w_star)
        np.testing.assert_allclose(tr.iterates[t - 1], expect, rtol=1e-12, atol=1e-13)


def test_average_iterate_examples():
    data = Dataset.from_dense([[1.0, 0.0]], [2.0])
    tr = sgd_run(LossModel("least_squares", 1.0), data, SagaConfig(1.0, 2, 0))
    np.testing.assert_allclose(average_iterate(tr), [1.0, 0.0])
    model, data = toy()
    T = 100
    tr = sgd_run(model, data, SagaConfig(0.5, T, 4, checkpoints=tuple(range(1, T + 1))))
    seen = np.vstack([np.zeros(data.dimension), tr.iterates[:-1]])
    np.testing.assert_allclose(average_iterate(tr), seen.mean(axis=0), atol=1e-12)


def test_unbiasedness_and_zero_mean_correction():
    model, data = toy(l2=0.2)
    rng = np.random.default_rng(8)
    x, w = rng.standard_normal(4), rng.standard_normal(4)
    n = len(data)
    full_w = empirical_gradient(model, w, data)
    dirs = np.array([svrg_direction(model, data, x, w, i, full_w) for i in range(n)])
    np.testing.assert_allclose(dirs.mean(axis=0), empirical_gradient(model, x, data), atol=1e-10)
    corr = np.array([loss_gradient(model, w, data[i]) - full_w for i in range(n)])
    np.testing.assert_allclose(corr.mean(axis=0), 0.0, atol=1e-12)
    points = rng.standard_normal((n, 4))
    table = gradient_table(model, data, points)
    sdirs = np.array([saga_direction(model, data, x, table, i) for i in range(n)])
    np.testing.assert_allclose(sdirs.mean(axis=0), empirical_gradient(model, x, data), atol=1e-10)


def test_exactness_at_reference():
    model, data = toy()
    w = np.full(4, 0.3)
    g = empirical_gradient(model, w, data)
    for i in range(len(data)):
        np.testing.assert_allclose(svrg_direction(model, data, w, w, i), g, atol=1e-15)
    table = gradient_table(model, data, np.tile(w, (len(data), 1)))
    for i in range(len(data)):
        np.testing.assert_allclose(saga_direction(model, data, w, table, i), g, atol=1e-15)


def test_coupled_runs_share_choices():
    model, data = toy(n=20)
    pool = toy(n=3, seed=9)[1]
    pair = make_neighbor(data, pool, seed=2)
    s = IndexStream(77)
    a, b = s.copy(), s.copy()
    ta = svrg_run(model, pair.base, SvrgConfig(0.2, 10, 5, seed=0), a)
    tb = svrg_run(model, pair.neighbor, SvrgConfig(0.2, 10, 5, seed=0), b)
    np.testing.assert_array_equal(ta.reference_choices, tb.reference_choices)
    assert a.counter == b.counter == 5 * 11


def test_variance_reduction_on_quadratic():
    data = Dataset.from_dense([[1.0, 0.0], [0.0, 2.0]], [1.0, -1.0])
    model = LossModel("least_squares", 4.0, 0.1, 0.1)
    tr = svrg_run(model, data, SvrgConfig(0.1, 50, 20, "II", 3))
    x = tr.final
    w = tr.references[-1]
    full_w = empirical_gradient(model, w, data)
    vr = np.array([svrg_direction(model, data, x, w, i, full_w) for i in range(2)])
    sg = np.array([loss_gradient(model, x, data[i]) for i in range(2)])
    var = lambda a: float(((a - a.mean(axis=0)) ** 2).sum(axis=1).mean())  # noqa: E731
    assert var(vr) < var(sg)


def test_gradient_eval_accounting():
    model, data = toy(n=10)
    tr = svrg_run(model, data, SvrgConfig(0.1, 6, 2, seed=0))
    assert tr.steps.tolist() == [6, 12]
    assert tr.gradient_evals.tolist() == [10 + 12, 2 * (10 + 12)]
    tr = saga_run(model, data, SagaConfig(0.1, 25, 0))
    assert tr.steps.tolist() == [10, 20, 25]
    assert tr.gradient_evals.tolist() == [20, 30, 35]  # table fill costs n


def test_divergence_reports_location():
    data = Dataset.from_dense([[10.0, 0.0], [0.0, 10.0]], [1.0, -1.0])
    model = make_model("least_squares", data)
    with pytest.raises(DivergenceError) as info:
        svrg_run(model, data, SvrgConfig(1e3, 400, 3, seed=0))
    assert info.value.t >= 1 and info.value.k is not None
    with pytest.raises(DivergenceError):
        saga_run(model, data, SagaConfig(1e3, 2000, 0))
    with pytest.raises(DivergenceError):
        sgd_run(model, data, SagaConfig(1e3, 2000, 0))


def test_config_validation():
    with pytest.raises(ValueError):
        SvrgConfig(-0.1, 5, 5)
    with pytest.raises(ValueError):
        SvrgConfig(0.1, 0, 5)
    with pytest.raises(ValueError):
        SvrgConfig(0.1, 5, 5, "III")
    with pytest.raises(ValueError):
        SagaConfig(0.1, 0)
    model, data = toy()
    with pytest.raises(ValueError):
        svrg_run(model, data, SvrgConfig(0.1, 5, 2, checkpoints=(0, 3)))
    with pytest.raises(ValueError):
        svrg_run(model, data, SvrgConfig(0.1, 5, 2), w1=np.zeros(3))


def test_inner_risk_recording():
    model, data = toy()
    tr = svrg_run(model, data, SvrgConfig(0.2, 5, 3, record_inner_risks=True, seed=4))
    assert tr.inner_risks.shape == (3, 5)
    assert np.all(tr.inner_risks >= 0)
    np.testing.assert_allclose(tr.inner_risks[0, 0], np.log(2))
    tr = saga_run(model, data, SagaConfig(0.2, 9, 4, record_risks=True))
    assert tr.inner_risks.shape == (9,)
