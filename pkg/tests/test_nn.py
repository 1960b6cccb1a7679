import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from seedgan import nn
from seedgan.gan import GanSpec


def _numeric_grads(net, x, dy, h=1e-6):
    """Central differences of L = sum(net(x) * dy) w.r.t. every parameter and x."""
    def loss():
        return float(np.sum(nn.forward(net, x)[0] * dy))

    grads = []
    for p in net.params():
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p[i]
            p[i] = old + h
            up = loss()
            p[i] = old - h
            down = loss()
            p[i] = old
            g[i] = (up - down) / (2 * h)
        grads.append(g)
    gx = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        old = x[i]
        x[i] = old + h
        up = loss()
        x[i] = old - h
        down = loss()
        x[i] = old
        gx[i] = (up - down) / (2 * h)
    return grads, gx


def _rel_err(a, b):
    return np.max(np.abs(a - b) / np.maximum(1e-8, np.abs(a) + np.abs(b)))


@pytest.mark.parametrize("kind", ["leaky_relu", "relu", "tanh", "identity"])
def test_gradients_match_finite_differences(kind):
    rng = np.random.default_rng(0)
    act = nn.Activation(kind)
    net = nn.init_mlp([4, 6, 3], [act, nn.TANH], rng)
    x = rng.normal(size=(5, 4))
    dy = rng.normal(size=(5, 3))
    out, cache = nn.forward(net, x)
    grads, dx = nn.backward(net, cache, dy)
    num, num_dx = _numeric_grads(net, x, dy)
    for g, n in zip(grads, num):
        assert _rel_err(g, n) < 1e-4
    assert _rel_err(dx, num_dx) < 1e-4


def test_activation_validation():
    with pytest.raises(ValueError):
        nn.Activation("gelu")
    with pytest.raises(ValueError):
        nn.Activation("leaky_relu", 1.5)


def test_shapes_chain_and_check():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        nn.MLP([(nn.Linear(np.zeros((3, 2)), np.zeros(3)), nn.RELU), (nn.Linear(np.zeros((1, 4)), np.zeros(1)), nn.RELU)])
    net = nn.init_mlp([2, 3], [nn.RELU], rng)
    with pytest.raises(ValueError):
        nn.forward(net, np.zeros((4, 5)))
    with pytest.raises(FloatingPointError):
        nn.forward(net, np.array([[np.nan, 0.0]]))


def test_default_network_shapes():
    rng = np.random.default_rng(0)
    spec = GanSpec(output_size=320)
    critic = spec.build_critic(rng)
    assert critic(np.zeros((8, 320))).shape == (8, 1)
    assert [l.fan_out for l, _ in critic.layers] == [256, 256, 1]
    assert [a.kind for _, a in critic.layers] == ["leaky_relu", "leaky_relu", "identity"]
    gen = spec.build_generator(rng)
    assert [l.fan_out for l, _ in gen.layers] == [1024, 1024, 1024, 1024, 320]
    assert [a.kind for _, a in gen.layers] == ["relu"] * 4 + ["tanh"]
    assert gen(np.zeros((2, 100))).shape == (2, 320)


def test_init_bounds():
    rng = np.random.default_rng(0)
    net = nn.init_mlp([50, 20, 1], [nn.RELU, nn.IDENTITY], rng)
    assert np.abs(net.layers[0][0].W).max() <= np.sqrt(1 / 50)
    assert np.all(net.layers[0][0].b == 0)


def test_clip_weights():
    rng = np.random.default_rng(0)
    net = nn.init_mlp([10, 10, 1], [nn.LEAKY_RELU, nn.IDENTITY], rng)
    nn.clip_weights(net, 0.01)
    assert max(np.abs(p).max() for p in net.params()) <= 0.01
    with pytest.raises(ValueError):
        nn.clip_weights(net, 0)


def test_rmsprop_matches_hand_computation():
    p = np.array([1.0, -2.0])
    g = np.array([0.5, 0.1])
    opt = nn.RMSProp(lr=0.01, alpha=0.9, eps=1e-8)
    opt.step([p], [g])
    v = 0.1 * g * g
    expect = np.array([1.0, -2.0]) - 0.01 * g / (np.sqrt(v) + 1e-8)
    assert np.allclose(p, expect, rtol=0, atol=1e-15)
    opt.step([p], [g])
    v = 0.9 * v + 0.1 * g * g
    expect = expect - 0.01 * g / (np.sqrt(v) + 1e-8)
    assert np.allclose(p, expect, rtol=0, atol=1e-15)


def test_rmsprop_errors():
    with pytest.raises(ValueError):
        nn.RMSProp(lr=0)
    opt = nn.RMSProp(lr=0.1)
    with pytest.raises(ValueError):
        opt.step([np.zeros(2)], [np.zeros(3)])


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-6, 1.0), st.integers(1, 100), st.floats(0.01, 1.0), st.integers(0, 1000))
def test_step_lr_exact(lr, step, gamma, epoch):
    s = nn.StepLR(lr, step, gamma)
    assert s.lr_at(epoch) == lr * gamma ** (epoch // step)


def test_step_lr_validation():
    with pytest.raises(ValueError):
        nn.StepLR(1e-3, 0, 0.5)
    with pytest.raises(ValueError):
        nn.StepLR(1e-3, 10, 1.5)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 8), st.integers(1, 8))
def test_forward_is_batch_consistent(seed, n, width):
    rng = np.random.default_rng(seed)
    net = nn.init_mlp([3, width, 2], [nn.LEAKY_RELU, nn.TANH], rng)
    x = rng.normal(size=(n, 3))
    whole = net(x)
    rows = np.concatenate([net(x[i:i + 1]) for i in range(n)])
    assert np.allclose(whole, rows, rtol=0, atol=1e-12)


def test_checkpoint_bytes_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    net = nn.init_mlp([5, 7, 2], [nn.Activation("leaky_relu", 0.3), nn.TANH], rng)
    path = nn.save_mlp(net, tmp_path / "m.ckpt", extra={"epoch": 3})
    back, extra = nn.load_mlp(path)
    assert extra == {"epoch": 3}
    for a, b in zip(net.params(), back.params()):
        assert a.tobytes() == b.tobytes()
    assert [a.to_json() for _, a in back.layers] == [a.to_json() for _, a in net.layers]
    assert nn.mlp_to_bytes(back, {"epoch": 3}) == path.read_bytes()


def test_checkpoint_rejects_garbage():
    with pytest.raises(ValueError):
        nn.mlp_from_bytes(b"NOPE" + b"\x00" * 20)
    rng = np.random.default_rng(0)
    blob = nn.mlp_to_bytes(nn.init_mlp([2, 2], [nn.RELU], rng))
    with pytest.raises(ValueError):
        nn.mlp_from_bytes(blob + b"\x00")


def test_rmsprop_scalar_example():
    p = np.array([1.0])
    nn.RMSProp(lr=0.1, alpha=0.99, eps=1e-8).step([p], [np.array([1.0])])
    # v = 0.01, step = 0.1 / (0.1 + 1e-8)
    assert p[0] == pytest.approx(1 - 0.1 / (0.1 + 1e-8), abs=1e-15)
    assert p[0] == pytest.approx(1e-7, abs=1e-9)


def test_rmsprop_zero_gradient_and_shrinking_steps():
    p = np.array([0.3, -0.7])
    opt = nn.RMSProp(lr=0.01)
    opt.step([p], [np.zeros(2)])
    assert p.tolist() == [0.3, -0.7]
    g = np.array([1.0, 1.0])
    before = p.copy()
    opt.step([p], [g])
    first = np.abs(p - before)
    before = p.copy()
    opt.step([p], [g])
    assert np.all(np.abs(p - before) < first)


def test_single_identity_layer_gradients():
    x = np.array([[1.0, 2.0, 3.0], [-1.0, 0.5, 0.0]])
    net = nn.MLP([(nn.Linear(np.zeros((2, 3)), np.zeros(2)), nn.IDENTITY)])
    out, cache = nn.forward(net, x)
    assert np.all(out == 0)
    (dW, db), dx = nn.backward(net, cache, np.ones((2, 2)))
    assert np.allclose(dW, np.ones((2, 2)).T @ x)
    assert np.allclose(db, [2.0, 2.0])


def test_tanh_derivative_at_zero():
    net = nn.MLP([(nn.Linear(np.eye(1), np.zeros(1)), nn.TANH)])
    _, cache = nn.forward(net, np.zeros((1, 1)))
    _, dx = nn.backward(net, cache, np.ones((1, 1)))
    assert dx[0, 0] == 1.0


def test_clip_examples_and_projection():
    W = np.array([[0.5, -0.005], [-0.3, 0.002]])
    net = nn.MLP([(nn.Linear(W, np.zeros(2)), nn.IDENTITY)])
    nn.clip_weights(net, 0.01)
    assert net.layers[0][0].W.tolist() == [[0.01, -0.005], [-0.01, 0.002]]


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31), st.floats(1e-4, 1.0))
def test_clip_is_idempotent_projection(seed, c):
    rng = np.random.default_rng(seed)
    net = nn.init_mlp([4, 5, 2], [nn.RELU, nn.IDENTITY], rng)
    orig = [p.copy() for p in net.params()]
    nn.clip_weights(net, c)
    once = [p.copy() for p in net.params()]
    nn.clip_weights(net, c)
    for o, a, b in zip(orig, once, net.params()):
        assert np.array_equal(a, b)
        assert np.array_equal(a, np.minimum(np.maximum(o, -c), c))


def test_init_scheme():
    net = nn.init_mlp([256, 3], [nn.RELU], np.random.default_rng(0))
    assert np.abs(net.layers[0][0].W).max() <= 0.0625
    a = nn.init_mlp([5, 4], [nn.RELU], np.random.default_rng(1))
    b = nn.init_mlp([5, 4], [nn.RELU], np.random.default_rng(1))
    c = nn.init_mlp([5, 4], [nn.RELU], np.random.default_rng(2))
    assert np.array_equal(a.layers[0][0].W, b.layers[0][0].W)
    assert not np.array_equal(a.layers[0][0].W, c.layers[0][0].W)


def test_generator_outputs_in_open_interval():
    spec = GanSpec(output_size=320)
    y = spec.build_generator(np.random.default_rng(0))(np.random.default_rng(1).normal(size=(8, 100)))
    assert y.shape == (8, 320) and np.all(np.abs(y) < 1)
