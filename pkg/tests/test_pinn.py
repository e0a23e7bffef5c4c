import numpy as np
import pytest

from taylorsr.pinn import Mlp, TrainConfig, build_training_loss, init_mlp, train
from taylorsr.problems import get_problem


def zero_mlp(in_dim=2, bias=0.7):
    m = init_mlp(in_dim, (4, 4), np.random.default_rng(0))
    for w in m.weights:
        w[:] = 0.0
    m.biases[-1][:] = bias
    return m


def tanh_neuron():
    # u(x) = tanh(x): one hidden unit, unit weights, zero biases
    return Mlp(
        sizes=(1, 1, 1),
        weights=[np.array([[1.0]]), np.array([[1.0]])],
        biases=[np.zeros(1), np.zeros(1)],
    )


class TestForward:
    def test_zero_weights_returns_bias(self):
        m = zero_mlp()
        assert m.forward(np.array([0.3, -0.2])) == pytest.approx(0.7)

    def test_deterministic(self):
        m = init_mlp(2, (8, 8), np.random.default_rng(1))
        p = np.array([0.1, 0.9])
        assert m.forward(p) == m.forward(p)

    def test_finite_on_random_points(self):
        m = init_mlp(3, (16, 16), np.random.default_rng(2))
        pts = np.random.default_rng(3).uniform(-1, 1, size=(1000, 3))
        assert np.isfinite(m.forward(pts)).all()


class TestForwardJet:
    def test_zero_weight_jet(self):
        m = zero_mlp()
        j = m.forward_jet(np.array([0.2, 0.4]), axis=0, order=4)
        np.testing.assert_allclose(j.coeffs, [0.7, 0, 0, 0, 0], atol=0)

    def test_single_tanh_neuron(self):
        j = tanh_neuron().forward_jet(np.array([0.0]), axis=0, order=3)
        np.testing.assert_allclose(j.coeffs, [0, 1, 0, -1 / 3], atol=1e-15)

    def test_value_matches_forward(self):
        m = init_mlp(2, (8, 8), np.random.default_rng(4))
        p = np.array([0.3, 0.6])
        j = m.forward_jet(p, axis=1, order=3)
        assert j.value == pytest.approx(m.forward(p), rel=1e-14)

    @pytest.mark.parametrize("axis", [0, 1])
    def test_first_two_orders_match_finite_differences(self, axis):
        m = init_mlp(2, (16, 16), np.random.default_rng(5))
        p = np.array([0.25, -0.4])
        j = m.forward_jet(p, axis=axis, order=2)
        h = 1e-4

        def at(s):
            q = p.copy()
            q[axis] += s
            return m.forward(q)

        fd1 = (at(h) - at(-h)) / (2 * h)
        fd2 = (at(h) - 2 * at(0) + at(-h)) / h**2
        assert j.coeffs[1] == pytest.approx(fd1, rel=1e-5)
        assert 2 * j.coeffs[2] == pytest.approx(fd2, rel=1e-4)

    def test_batched_coeffs_match_per_point(self):
        m = init_mlp(2, (8,), np.random.default_rng(6))
        pts = np.random.default_rng(7).uniform(-1, 1, size=(5, 2))
        batch = m.eval_coeffs(pts, axis=0, order=3)
        for i, p in enumerate(pts):
            np.testing.assert_allclose(
                batch[:, i], m.forward_jet(p, 0, 3).coeffs, rtol=1e-13
            )


class TestTraining:
    def test_gradients_match_finite_differences(self):
        import torch

        problem = get_problem("Advection")
        cfg = TrainConfig(n_collocation=50, n_condition=20, hidden=(5,), seed=0)
        net, loss_fn = build_training_loss(problem, cfg, np.random.default_rng(0))
        loss = loss_fn()
        loss.backward()
        params = list(net.parameters())
        flat = torch.cat([p.detach().reshape(-1) for p in params])
        grads = torch.cat([p.grad.reshape(-1) for p in params])
        rng = np.random.default_rng(1)
        idx = rng.choice(len(flat), size=10, replace=False)
        h = 1e-6
        for i in idx:
            offset = 0
            for p in params:
                n = p.numel()
                if i < offset + n:
                    def set_param(value):
                        with torch.no_grad():
                            p.reshape(-1)[i - offset] = value

                    orig = p.reshape(-1)[i - offset].item()
                    set_param(orig + h)
                    up = loss_fn().detach().item()
                    set_param(orig - h)
                    down = loss_fn().detach().item()
                    set_param(orig)
                    fd = (up - down) / (2 * h)
                    assert float(grads[i]) == pytest.approx(fd, rel=1e-4, abs=1e-10)
                    break
                offset += n

    def test_zero_steps_returns_initial_model(self):
        problem = get_problem("Advection")
        cfg = TrainConfig(steps=0, polish_steps=0, hidden=(6,), seed=3)
        result = train(problem, cfg, np.random.default_rng(3))
        reference = init_mlp(problem.dim, (6,), np.random.default_rng(3))
        for a, b in zip(result.model.weights, reference.weights):
            np.testing.assert_allclose(a, b, atol=0)
        assert result.loss_trace == []

    def test_short_training_reduces_loss(self):
        problem = get_problem("Advection")
        cfg = TrainConfig(
            n_collocation=200, n_condition=50, steps=400, hidden=(16,), seed=0
        )
        result = train(problem, cfg, np.random.default_rng(0))
        trace = result.loss_trace
        assert trace[-1] < trace[0] / 5

    def test_loss_windows_mostly_non_increasing(self):
        problem = get_problem("Advection")
        cfg = TrainConfig(
            n_collocation=200, n_condition=50, steps=1500, hidden=(16,), seed=1
        )
        trace = train(problem, cfg, np.random.default_rng(1)).loss_trace
        windows = [
            trace[i : i + 100] for i in range(0, len(trace) - 100, 100)
        ]
        ok = sum(1 for w in windows if w[-1] <= w[0])
        assert ok / len(windows) >= 0.9


class TestCheckpoint:
    def test_round_trip_outputs_identical(self, tmp_path):
        m = init_mlp(2, (8, 8), np.random.default_rng(9))
        path = tmp_path / "model.json"
        m.save(path)
        loaded = Mlp.load(path)
        pts = np.random.default_rng(10).uniform(-1, 1, size=(100, 2))
        np.testing.assert_array_equal(loaded.forward(pts), m.forward(pts))

    def test_non_finite_rejected(self):
        m = init_mlp(2, (4,), np.random.default_rng(0))
        m.weights[0][0, 0] = np.nan
        with pytest.raises(ValueError):
            Mlp(m.sizes, m.weights, m.biases)
