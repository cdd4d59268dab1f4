import numpy as np
import pytest

from croprl.neural import (
    DimensionMismatch,
    MlpNetwork,
    OptimizerState,
    RunningNorm,
    clip_global_norm,
    load_mlp,
    optimizer_step,
    read_checkpoint,
    save_mlp,
    write_checkpoint,
)
from croprl.seeding import stream_rng


def zero_net(sizes, activation="relu"):
    net = MlpNetwork.init(sizes, activation, stream_rng("z", 0))
    for w in net.weights:
        w[...] = 0.0
    return net


def finite_difference_grads(net, x, output_grad, h=1e-5):
    """Central finite differences of L(theta) = output_grad . f_theta(x)."""
    flat = net.get_flat()
    fd = np.zeros_like(flat)
    for k in range(flat.size):
        for sign in (+1, -1):
            bumped = flat.copy()
            bumped[k] += sign * h
            net.set_flat(bumped)
            val = float(np.sum(net.forward(x) * output_grad))
            fd[k] += sign * val
        fd[k] /= 2 * h
    net.set_flat(flat)
    return fd


def max_rel_error(analytic, fd):
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(fd)), 1e-6)
    return float(np.max(np.abs(analytic - fd) / denom))


# -- forward ------------------------------------------------------------------


def test_zero_weight_network_maps_to_zero():
    net = zero_net((3, 4, 2))
    np.testing.assert_array_equal(net.forward(np.array([1.0, -2.0, 3.0])), [0.0, 0.0])


def test_relu_clamps_negative_preactivation():
    net = MlpNetwork((1, 1, 1), "relu", [np.array([[1.0]]), np.array([[1.0]])], [np.zeros(1), np.zeros(1)])
    assert net.forward(np.array([-2.0]))[0] == 0.0
    assert net.forward(np.array([2.0]))[0] == 2.0


def test_forward_deterministic():
    net = MlpNetwork.init((5, 8, 3), "tanh", stream_rng("f", 1))
    x = stream_rng("fx", 1).normal(size=5)
    np.testing.assert_array_equal(net.forward(x), net.forward(x))


def test_forward_batch_matches_single():
    net = MlpNetwork.init((4, 6, 2), "relu", stream_rng("fb", 2))
    xs = stream_rng("fbx", 2).normal(size=(5, 4))
    batched = net.forward(xs)
    for i in range(5):
        np.testing.assert_allclose(batched[i], net.forward(xs[i]), atol=0)


def test_dimension_mismatch():
    net = MlpNetwork.init((4, 6, 2), "relu", stream_rng("d", 3))
    with pytest.raises(DimensionMismatch):
        net.forward(np.zeros(3))
    _, cache = net.forward_cache(np.zeros(4))
    with pytest.raises(DimensionMismatch):
        net.backward(cache, np.zeros(3))


# -- backward -----------------------------------------------------------------


def test_zero_output_grad_gives_zero_grads():
    net = MlpNetwork.init((3, 5, 2), "relu", stream_rng("bg", 4))
    _, cache = net.forward_cache(stream_rng("bgx", 4).normal(size=3))
    grads = net.backward(cache, np.zeros(2))
    assert all(np.all(g == 0.0) for g in grads)


def test_output_bias_gradient_of_sum_is_one():
    net = MlpNetwork.init((3, 5, 2), "tanh", stream_rng("bb", 5))
    _, cache = net.forward_cache(stream_rng("bbx", 5).normal(size=3))
    grads = net.backward(cache, np.ones(2))  # d(sum outputs)/d(out bias) == 1
    np.testing.assert_array_equal(grads[-1], np.ones(2))


@pytest.mark.parametrize("activation", ["relu", "tanh"])
def test_gradients_match_finite_differences(activation):
    # 10-configuration spot check; the acceptance suite runs 100
    for i in range(10):
        rng = stream_rng("fd", activation, i)
        net = MlpNetwork.init((3, 6, 5, 2), activation, rng)
        x = rng.normal(size=3)
        output_grad = rng.normal(size=2)
        _, cache = net.forward_cache(x)
        analytic = np.concatenate([g.ravel() for g in net.backward(cache, output_grad)])
        fd = finite_difference_grads(net, x, output_grad)
        assert max_rel_error(analytic, fd) < 1e-4


def test_batched_gradients_match_finite_differences():
    rng = stream_rng("fdb", 0)
    net = MlpNetwork.init((3, 6, 2), "tanh", rng)
    x = rng.normal(size=(7, 3))
    output_grad = rng.normal(size=(7, 2))
    _, cache = net.forward_cache(x)
    analytic = np.concatenate([g.ravel() for g in net.backward(cache, output_grad)])
    flat = net.get_flat()
    fd = np.zeros_like(flat)
    h = 1e-5
    for k in range(flat.size):
        for sign in (+1, -1):
            bumped = flat.copy()
            bumped[k] += sign * h
            net.set_flat(bumped)
            fd[k] += sign * float(np.sum(net.forward(x) * output_grad))
        fd[k] /= 2 * h
    net.set_flat(flat)
    assert max_rel_error(analytic, fd) < 1e-4


# -- optimizers ------------------------------------------------------------------


def test_sgd_single_step():
    params = [np.array([1.0])]
    optimizer_step(params, [np.array([0.5])], OptimizerState(kind="sgd", learning_rate=0.1))
    assert params[0][0] == pytest.approx(0.95, abs=1e-15)


def test_adam_first_step_magnitude():
    for c in (3.0, -0.25, 1e-3):
        params = [np.array([0.0])]
        state = OptimizerState(kind="adam", learning_rate=0.01)
        optimizer_step(params, [np.array([c])], state)
        # bias-corrected first step is lr * c / (|c| + eps) ~= lr * sign(c)
        assert abs(params[0][0]) == pytest.approx(0.01, rel=1e-4)
        assert np.sign(params[0][0]) == -np.sign(c)


def test_global_norm_clip():
    grads = [np.array([6.0]), np.array([8.0])]  # norm 10
    clipped = clip_global_norm(grads, 1.0)
    total = np.sqrt(sum(np.sum(g * g) for g in clipped))
    assert total == pytest.approx(1.0, rel=1e-12)
    np.testing.assert_allclose(clipped[0], [0.6])


def test_optimizer_preserves_shapes():
    net = MlpNetwork.init((3, 4, 2), "relu", stream_rng("s", 0))
    shapes = [p.shape for p in net.params()]
    grads = [np.ones_like(p) for p in net.params()]
    state = OptimizerState(kind="adam", learning_rate=1e-3, clip_norm=1.0)
    for _ in range(3):
        optimizer_step(net.params(), grads, state)
    assert [p.shape for p in net.params()] == shapes
    assert all(np.all(np.isfinite(p)) for p in net.params())


def test_regression_convergence_smoke():
    # 1-hidden-layer net fits y = 2x with Adam in 2000 steps
    rng = stream_rng("reg", 0)
    net = MlpNetwork.init((1, 16, 1), "tanh", rng)
    state = OptimizerState(kind="adam", learning_rate=0.01)
    x = rng.uniform(-1, 1, size=(64, 1))
    y = 2.0 * x
    for _ in range(2000):
        pred, cache = net.forward_cache(x)
        err = pred - y
        grads = net.backward(cache, 2.0 * err / len(x))
        optimizer_step(net.params(), grads, state)
    mse = float(np.mean((net.forward(x) - y) ** 2))
    assert mse < 1e-3


# -- running normalization ----------------------------------------------------------


def test_running_norm_statistics():
    rng = stream_rng("rn", 0)
    data = rng.normal(loc=5.0, scale=3.0, size=(500, 4))
    norm = RunningNorm(4)
    for row in data:
        norm.update(row)
    np.testing.assert_allclose(norm.mean, data.mean(axis=0), rtol=1e-10)
    z = np.stack([norm.normalize(row) for row in data])
    assert np.abs(z.mean(axis=0)).max() < 1e-8
    assert np.abs(z.std(axis=0) - 1.0).max() < 1e-6


def test_running_norm_disabled_and_round_trip():
    norm = RunningNorm(2, enabled=False)
    norm.update(np.array([3.0, 4.0]))
    np.testing.assert_array_equal(norm.normalize(np.array([3.0, 4.0])), [3.0, 4.0])
    norm2 = RunningNorm.from_state(norm.state_dict())
    assert norm2.enabled is False and norm2.count == norm.count


# -- checkpoints ----------------------------------------------------------------------


def test_mlp_checkpoint_round_trip(tmp_path):
    net = MlpNetwork.init((4, 7, 3), "tanh", stream_rng("ck", 0))
    path = tmp_path / "net.mlp"
    save_mlp(net, path)
    loaded = load_mlp(path, activation="tanh")
    assert loaded.layer_sizes == net.layer_sizes
    for a, b in zip(loaded.params(), net.params()):
        np.testing.assert_array_equal(a, b)
    # byte determinism
    save_mlp(net, tmp_path / "net2.mlp")
    assert (tmp_path / "net.mlp").read_bytes() == (tmp_path / "net2.mlp").read_bytes()


def test_mlp_checkpoint_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.mlp"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(ValueError):
        load_mlp(path)


def test_checkpoint_bundle_round_trip(tmp_path):
    nets = {
        "policy": MlpNetwork.init((4, 8, 2), "tanh", stream_rng("cb", 0)),
        "value": MlpNetwork.init((4, 8, 1), "tanh", stream_rng("cb", 1)),
    }
    meta = {"algo": "ppo", "task": "fert", "log_std": [0.0, 0.0]}
    write_checkpoint(tmp_path / "ckpt", nets, meta)
    loaded_nets, loaded_meta = read_checkpoint(tmp_path / "ckpt")
    assert loaded_meta["algo"] == "ppo" and loaded_meta["task"] == "fert"
    assert set(loaded_nets) == {"policy", "value"}
    np.testing.assert_array_equal(loaded_nets["policy"].weights[0], nets["policy"].weights[0])
