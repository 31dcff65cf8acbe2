import io

import numpy as np
import pytest

from synther import nn
from synther.errors import FormatError, InvalidInputError, InvalidStateError, NumericError


def small_net(in_dim=5, out_dim=5, width=16, depth=2, seed=0, dtype=np.float32):
    return nn.ResidualMLP(in_dim, out_dim, width, depth, rff_dim=4, seed=seed, dtype=dtype)


class TestForward:
    def test_zero_hidden_blocks_are_identity(self):
        net = small_net()
        for k in range(net.depth):
            net.params[f"w_{k}"][:] = 0.0
            net.params[f"b_{k}"][:] = 0.0
        x = np.random.default_rng(0).normal(size=(4, 5)).astype(np.float32)
        c = np.zeros(4)
        out, _ = net.forward(x, c)
        emb = net.rff(c)
        h0 = np.concatenate([x, emb], axis=1)
        h = h0 @ net.params["w_in"] + net.params["b_in"]
        expect = h @ net.params["w_out"] + net.params["b_out"]
        np.testing.assert_allclose(out, expect, rtol=1e-6)

    def test_output_shape(self):
        net = small_net(out_dim=3)
        out, _ = net.forward(np.zeros((7, 5), dtype=np.float32), np.zeros(7))
        assert out.shape == (7, 3)

    def test_rff_at_zero(self):
        net = small_net()
        emb = net.rff(np.zeros(2))
        np.testing.assert_allclose(emb[:, :4], 0.0, atol=1e-7)
        np.testing.assert_allclose(emb[:, 4:], 1.0, atol=1e-7)

    def test_rff_bounded_and_frozen(self):
        net = small_net()
        emb = net.rff(np.linspace(-5, 5, 100))
        assert np.all(np.abs(emb) <= 1.0 + 1e-7)
        with pytest.raises(ValueError):
            net.rff.frequencies[0] = 0.0

    def test_nonfinite_input(self):
        net = small_net()
        x = np.full((1, 5), np.nan, dtype=np.float32)
        with pytest.raises(NumericError):
            net.forward(x, np.zeros(1))


class TestBackward:
    def test_grad_check_small(self):
        net = small_net(seed=3).astype(np.float64)
        rng = np.random.default_rng(1)
        x = rng.normal(size=(4, 5))
        c = rng.normal(size=4)
        assert nn.grad_check(net, x, c, h=1e-5) < 1e-4

    def test_zero_grad(self):
        net = small_net()
        x = np.ones((3, 5), dtype=np.float32)
        _, cache = net.forward(x, np.zeros(3))
        grads, gx = net.backward(cache, np.zeros((3, 5), dtype=np.float32))
        for g in grads.values():
            assert np.all(g == 0.0)
        assert np.all(gx == 0.0)

    def test_duplicated_row_doubles_contribution(self):
        net = small_net(seed=4)
        x = np.random.default_rng(2).normal(size=(1, 5)).astype(np.float32)
        c = np.array([0.3])
        gout = np.ones((1, 5), dtype=np.float32)
        _, cache1 = net.forward(x, c)
        g1, _ = net.backward(cache1, gout)
        x2 = np.repeat(x, 2, axis=0)
        _, cache2 = net.forward(x2, np.repeat(c, 2))
        g2, _ = net.backward(cache2, np.repeat(gout, 2, axis=0))
        for k in g1:
            np.testing.assert_allclose(g2[k], 2.0 * g1[k], rtol=1e-4, atol=1e-6)

    def test_cache_mismatch(self):
        net = small_net()
        with pytest.raises(InvalidStateError):
            net.backward({"bad": 1}, np.zeros((1, 5)))

    def test_input_gradient_matches_fd(self):
        net = small_net(seed=5).astype(np.float64)
        rng = np.random.default_rng(3)
        x = rng.normal(size=(2, 5))
        c = rng.normal(size=2)
        out, cache = net.forward(x, c)
        _, gx = net.backward(cache, out)
        h = 1e-6
        for i in range(2):
            for j in range(5):
                xp = x.copy()
                xp[i, j] += h
                xm = x.copy()
                xm[i, j] -= h
                lp = 0.5 * np.sum(net.forward(xp, c)[0] ** 2)
                lm = 0.5 * np.sum(net.forward(xm, c)[0] ** 2)
                fd = (lp - lm) / (2 * h)
                assert abs(fd - gx[i, j]) / max(abs(fd), 1e-8) < 1e-4


class TestAdam:
    def test_first_step_magnitude(self):
        params = {"w": np.array([1.0, 2.0], dtype=np.float32)}
        state = nn.AdamState.init(params)
        grads = {"w": np.array([0.5, -3.0], dtype=np.float32)}
        nn.adam_step(state, params, grads, lr_t=0.01)
        delta = params["w"] - np.array([1.0, 2.0])
        np.testing.assert_allclose(np.abs(delta), 0.01, rtol=1e-3)
        assert np.sign(delta[0]) == -1 and np.sign(delta[1]) == 1

    def test_zero_gradient_leaves_params(self):
        params = {"w": np.array([1.0], dtype=np.float32)}
        state = nn.AdamState.init(params)
        for _ in range(10):
            nn.adam_step(state, params, {"w": np.zeros(1, dtype=np.float32)}, 0.1)
        assert params["w"][0] == 1.0

    def test_deterministic(self):
        def run():
            net = small_net(seed=7)
            state = nn.AdamState.init(net.params)
            rng = np.random.default_rng(0)
            for _ in range(20):
                x = rng.normal(size=(8, 5)).astype(np.float32)
                out, cache = net.forward(x, np.zeros(8))
                grads, _ = net.backward(cache, out)
                nn.adam_step(state, net.params, grads, 1e-3)
            return np.concatenate([v.ravel() for v in net.params.values()])

        np.testing.assert_array_equal(run(), run())


class TestCosineLR:
    def test_endpoints(self):
        assert nn.cosine_lr(0, 100, 3e-4) == pytest.approx(3e-4)
        assert nn.cosine_lr(50, 100, 3e-4) == pytest.approx(1.5e-4)
        assert nn.cosine_lr(100, 100, 3e-4) == 0.0
        assert nn.cosine_lr(150, 100, 3e-4) == 0.0

    def test_negative_step(self):
        with pytest.raises(InvalidInputError):
            nn.cosine_lr(-1, 10, 1.0)


class TestParamCount:
    @pytest.mark.parametrize("width,depth", [(64, 2), (256, 4), (1024, 6)])
    def test_formula_matches_enumeration(self, width, depth):
        net = nn.ResidualMLP(10, 10, width, depth, rff_dim=16, seed=0)
        actual = sum(v.size for v in net.params.values())
        assert net.num_params() == actual


class TestTraining:
    def test_linear_regression_converges(self):
        rng = np.random.default_rng(0)
        w_true = rng.normal(size=(5, 5))
        x = rng.normal(size=(1000, 5)).astype(np.float32)
        y = (x @ w_true).astype(np.float32)
        net = nn.ResidualMLP(5, 5, width=64, depth=1, rff_dim=4, seed=1)
        state = nn.AdamState.init(net.params)
        for step in range(5000):
            idx = rng.integers(0, 1000, size=64)
            out, cache = net.forward(x[idx], np.zeros(64))
            resid = out - y[idx]
            grads, _ = net.backward(cache, (2.0 / 64) * resid)
            nn.adam_step(state, net.params, grads, nn.cosine_lr(step, 5000, 1e-3))
        out, _ = net.forward(x, np.zeros(1000))
        mse = float(np.mean((out - y) ** 2))
        assert mse < 1e-3


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        net = small_net(seed=11)
        p = tmp_path / "w.bin"
        nn.save_weights(net, p)
        back = nn.load_weights(p)
        assert back.width == net.width and back.depth == net.depth
        np.testing.assert_array_equal(back.rff.frequencies, net.rff.frequencies)
        for k in net.param_names():
            np.testing.assert_array_equal(back.params[k], net.params[k])
        x = np.random.default_rng(0).normal(size=(3, 5)).astype(np.float32)
        np.testing.assert_array_equal(
            net.forward(x, np.zeros(3))[0], back.forward(x, np.zeros(3))[0]
        )

    def test_bad_magic(self):
        with pytest.raises(FormatError):
            nn.load_weights(io.BytesIO(b"WRONGMAG" + b"\0" * 64))

    def test_truncated(self, tmp_path):
        net = small_net()
        p = tmp_path / "w.bin"
        nn.save_weights(net, p)
        p.write_bytes(p.read_bytes()[:-3])
        with pytest.raises(FormatError):
            nn.load_weights(p)
