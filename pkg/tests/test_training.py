import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tnforecast.dataset import prepare
from tnforecast.dynamics import FlowSpec, generate_trajectory
from tnforecast.model import backward, build_model, forward, tie
from tnforecast.training import (
    AdamState,
    DivergenceError,
    TrainConfig,
    adam_step,
    fit,
    loss_and_grads,
    mse,
    mse_gradient,
)


@pytest.fixture(scope="module")
def small_data():
    return prepare(generate_trajectory(FlowSpec(n_samples=160)))


def test_mse_examples():
    assert mse([[1.0, 2.0, 3.0]], [[1.0, 2.0, 3.0]]) == 0.0
    assert mse([[1.0, 1.0, 1.0]], [[0.0, 0.0, 0.0]]) == 1.0
    assert mse([[0.0], [0.0]], [[3.0], [4.0]]) == 12.5
    with pytest.raises(ValueError):
        mse(np.zeros((0, 3)), np.zeros((0, 3)))


def test_mse_gradient_examples():
    assert mse_gradient([2.0], [0.0]).tolist() == [4.0]
    assert not np.any(mse_gradient([[1.0, 2.0]], [[1.0, 2.0]]))


@given(st.integers(0, 2**31))
@settings(max_examples=20, deadline=None)
def test_mse_gradient_finite_differences(seed):
    rng = np.random.default_rng(seed)
    p, t = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
    g = mse_gradient(p, t)
    h = 1e-6
    for i in np.ndindex(p.shape):
        pp, pm = p.copy(), p.copy()
        pp[i] += h
        pm[i] -= h
        assert g[i] == pytest.approx((mse(pp, t) - mse(pm, t)) / (2 * h), abs=1e-8)


def test_adam_zero_gradient_is_identity():
    p = [np.array([1.0, -2.0])]
    before = p[0].copy()
    adam_step(p, [np.zeros(2)], AdamState.zeros_like(p), TrainConfig())
    np.testing.assert_array_equal(p[0], before)


def test_adam_first_step():
    p = [np.array([0.0])]
    state = AdamState.zeros_like(p)
    adam_step(p, [np.array([0.5])], state, TrainConfig(learning_rate=0.001))
    assert state.t == 1
    assert p[0][0] == pytest.approx(-0.001 * 0.5 / (0.5 + 1e-8), rel=1e-12)
    assert p[0][0] == pytest.approx(-0.000999999980, abs=1e-14)


@given(st.floats(1e-6, 1e6))
def test_adam_first_step_bounded_by_lr(scale):
    p = [np.zeros(3)]
    adam_step(p, [np.array([scale, -scale, scale / 7])], AdamState.zeros_like(p), TrainConfig(learning_rate=0.01))
    assert np.all(np.abs(p[0]) <= 0.01 * (1 + 1e-9))


def test_adam_matches_reference_recursion():
    rng = np.random.default_rng(0)
    cfg = TrainConfig(learning_rate=0.01)
    theta = rng.normal(size=4)
    p = [theta.copy()]
    state = AdamState.zeros_like(p)
    m = v = np.zeros(4)
    for t in range(1, 6):
        g = rng.normal(size=4)
        adam_step(p, [g], state, cfg)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        theta = theta - 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
    np.testing.assert_allclose(p[0], theta, rtol=1e-12)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        TrainConfig(beta1=1.0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)


def test_zero_epochs_leaves_model(small_data):
    m = build_model(3, 3, seed=0)
    before = [w.copy() for w in m.flat_params()]
    rep = fit(m, small_data, TrainConfig(epochs=0))
    assert rep.train_loss == [] and rep.val_loss == []
    assert all(a.tobytes() == b.tobytes() for a, b in zip(before, m.flat_params()))


@pytest.mark.parametrize("batch_size", [None, 16])
def test_fit_is_deterministic(small_data, batch_size):
    cfg = TrainConfig(epochs=3, batch_size=batch_size, seed=4)
    reports = []
    for _ in range(2):
        m = build_model(3, 3, seed=1)
        reports.append((fit(m, small_data, cfg), m))
    (r1, m1), (r2, m2) = reports
    assert r1.train_loss == r2.train_loss and r1.val_loss == r2.val_loss
    assert all(a.tobytes() == b.tobytes() for a, b in zip(m1.flat_params(), m2.flat_params()))


def test_full_batch_is_one_update_per_epoch(small_data):
    m = build_model(3, 2, seed=0)
    ref = m.copy()
    fit(m, small_data, TrainConfig(epochs=1, batch_size=None))
    _, grads = loss_and_grads(ref, small_data.train)
    params = ref.flat_params()
    adam_step(params, grads, AdamState.zeros_like(params), TrainConfig())
    assert all(a.tobytes() == b.tobytes() for a, b in zip(m.flat_params(), params))


def test_losses_recorded_post_update(small_data):
    m = build_model(3, 3, seed=0)
    rep = fit(m, small_data, TrainConfig(epochs=2))
    assert rep.train_loss[-1] == mse(forward(m, small_data.train.windows)[0], small_data.train.targets)
    assert rep.val_loss[-1] == mse(forward(m, small_data.val.windows)[0], small_data.val.targets)


def test_tied_training_equivalence(small_data):
    """Homogeneous training == inhomogeneous clone whose per-layer gradients are summed and shared."""
    cfg = TrainConfig(learning_rate=0.01)
    hom = build_model(3, 3, "homogeneous", seed=2)
    inh = tie(hom, "inhomogeneous")
    hp = hom.flat_params()
    hs = AdamState.zeros_like(hp)
    ip = inh.flat_params()
    istate = AdamState.zeros_like(ip)
    batch = small_data.train
    for _ in range(3):
        p, c = forward(hom, batch.windows)
        adam_step(hp, [g for layer in backward(hom, c, mse_gradient(p, batch.targets)) for g in layer], hs, cfg)

        p, c = forward(inh, batch.windows)
        gi = backward(inh, c, mse_gradient(p, batch.targets))
        shared = []
        for layer in gi:
            total = np.zeros_like(layer[0])
            for g in layer:
                total += g
            shared.extend([total] * len(layer))
        adam_step(ip, shared, istate, cfg)
    for layer_h, layer_i in zip(hom.weights, inh.weights):
        for w in layer_i:
            assert w.tobytes() == layer_h[0].tobytes()


def test_divergence_guard(small_data):
    m = build_model(3, 3, seed=0)
    for w in m.flat_params():
        w *= 1e4
    with pytest.raises(DivergenceError) as info:
        fit(m, small_data, TrainConfig(epochs=2))
    assert info.value.epoch == 1


def test_training_reduces_loss(small_data):
    m = build_model(3, 4, seed=0)
    rep = fit(m, small_data, TrainConfig(epochs=30, batch_size=8, learning_rate=0.003))
    assert rep.train_loss[-1] < 0.5 * rep.train_loss[0]
