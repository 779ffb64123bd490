import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rbfgen.generator import GeneratorNet, backward, forward, init_generator


def fd_grads(net, Z, U, h=1e-6):
    """Central differences of sum(U * forward(net, Z)) for every parameter entry."""
    out = []
    for p in net.params():
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p[i]
            p[i] = old + h
            fp = np.sum(U * forward(net, Z))
            p[i] = old - h
            fm = np.sum(U * forward(net, Z))
            p[i] = old
            g[i] = (fp - fm) / (2 * h)
        out.append(g)
    return out


def max_rel_err(a_list, b_list):
    num = max(np.abs(a - b).max() for a, b in zip(a_list, b_list))
    den = max(max(np.abs(a).max(), np.abs(b).max()) for a, b in zip(a_list, b_list))
    return num / max(den, 1e-12)


class TestInit:
    def test_shapes(self):
        net = init_generator(3, 5, hidden=(7, 4))
        assert net.shapes == [3, 7, 4, 5]
        assert [W.shape for W in net.weights] == [(3, 7), (7, 4), (4, 5)]

    def test_zero_final_gives_zero_output(self):
        net = init_generator(4, 6, seed=2)
        z = np.random.default_rng(0).normal(size=(10, 4))
        np.testing.assert_array_equal(net(z), 0.0)

    def test_glorot_limits(self):
        net = init_generator(8, 3, hidden=(16,), zero_final=False, seed=5)
        for W in net.weights:
            assert np.abs(W).max() <= np.sqrt(6 / sum(W.shape))
        assert all(np.all(b == 0) for b in net.biases)

    def test_seed_determinism(self):
        a = init_generator(2, 3, zero_final=False, seed=9)
        b = init_generator(2, 3, zero_final=False, seed=9)
        for x, y in zip(a.params(), b.params()):
            np.testing.assert_array_equal(x, y)

    def test_no_null_space(self):
        with pytest.raises(ValueError, match="K must exceed N"):
            init_generator(2, 0)


class TestForward:
    def test_single_and_batch_agree(self):
        net = init_generator(3, 2, hidden=(5,), zero_final=False, seed=1)
        Z = np.random.default_rng(1).normal(size=(4, 3))
        batch = forward(net, Z)
        for z, row in zip(Z, batch):
            np.testing.assert_allclose(forward(net, z), row, rtol=1e-14)

    def test_wrong_latent_dim(self):
        net = init_generator(3, 2)
        with pytest.raises(ValueError):
            forward(net, np.zeros(4))

    def test_alpha_scale_equivariance(self):
        net = init_generator(3, 2, hidden=(5,), zero_final=False, seed=1)
        z = np.random.default_rng(2).normal(size=(6, 3))
        scaled = net.copy()
        scaled.alpha_scale = 2.5
        np.testing.assert_allclose(forward(scaled, z), 2.5 * forward(net, z), rtol=1e-14)

    def test_hand_computed_network(self):
        net = GeneratorNet([np.array([[1.0, -1.0]]), np.array([[2.0], [3.0]])], [np.array([0.0, 0.5]), np.array([0.1])])
        z = np.array([0.3])
        h = np.tanh(np.array([0.3, -0.3 + 0.5]))
        assert forward(net, z)[0] == pytest.approx(2 * h[0] + 3 * h[1] + 0.1, rel=1e-15)

    def test_relu_network(self):
        net = GeneratorNet([np.array([[1.0, -1.0]]), np.array([[1.0], [1.0]])], [np.zeros(2), np.zeros(1)], "relu")
        assert forward(net, np.array([2.0]))[0] == 2.0
        assert forward(net, np.array([-3.0]))[0] == 3.0


class TestSerialization:
    def test_roundtrip(self, tmp_path):
        net = init_generator(3, 4, hidden=(5, 6), zero_final=False, seed=3, alpha_scale=0.7)
        net.save(tmp_path / "g.json")
        back = GeneratorNet.load(tmp_path / "g.json")
        z = np.random.default_rng(0).normal(size=(5, 3))
        np.testing.assert_array_equal(forward(back, z), forward(net, z))
        assert back.alpha_scale == 0.7

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="chain"):
            GeneratorNet([np.zeros((2, 3)), np.zeros((4, 1))], [np.zeros(3), np.zeros(1)])


class TestBackward:
    def test_small_net_matches_finite_differences(self):
        net = init_generator(3, 2, hidden=(8,), zero_final=False, seed=0)
        rng = np.random.default_rng(0)
        for b in net.biases:
            b[:] = rng.normal(size=b.shape) * 0.3
        Z = rng.normal(size=(5, 3))
        U = rng.normal(size=(5, 2))
        assert max_rel_err(backward(net, Z, U), fd_grads(net, Z, U)) <= 1e-4

    def test_relu_away_from_kinks(self):
        net = init_generator(2, 3, hidden=(6, 6), activation="relu", zero_final=False, seed=4)
        rng = np.random.default_rng(4)
        Z = rng.normal(size=(3, 2))
        U = rng.normal(size=(3, 3))
        assert max_rel_err(backward(net, Z, U), fd_grads(net, Z, U)) <= 1e-4

    def test_additive_over_batch(self):
        net = init_generator(3, 2, hidden=(4,), zero_final=False, seed=7)
        rng = np.random.default_rng(7)
        Z, U = rng.normal(size=(4, 3)), rng.normal(size=(4, 2))
        total = backward(net, Z, U)
        parts = [backward(net, z, u) for z, u in zip(Z, U)]
        for i, g in enumerate(total):
            np.testing.assert_allclose(g, sum(p[i] for p in parts), rtol=1e-12, atol=1e-14)

    def test_upstream_shape_checked(self):
        net = init_generator(3, 2)
        with pytest.raises(ValueError):
            backward(net, np.zeros((2, 3)), np.zeros((2, 3)))

    def test_gradient_order_matches_params(self):
        net = init_generator(3, 2, hidden=(4, 5))
        grads = backward(net, np.ones((2, 3)), np.ones((2, 2)))
        assert [g.shape for g in grads] == [p.shape for p in net.params()]


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_random_nets_gradient_check(seed):
    rng = np.random.default_rng(seed)
    d_in, d_out = int(rng.integers(1, 5)), int(rng.integers(1, 5))
    hidden = tuple(int(h) for h in rng.integers(2, 7, size=rng.integers(1, 3)))
    net = init_generator(d_in, d_out, hidden=hidden, zero_final=False, seed=seed, alpha_scale=float(rng.uniform(0.5, 2)))
    for b in net.biases:
        b[:] = rng.normal(size=b.shape) * 0.2
    Z = rng.normal(size=(3, d_in))
    U = rng.normal(size=(3, d_out))
    assert max_rel_err(backward(net, Z, U), fd_grads(net, Z, U)) <= 1e-4
