"""Cells, the reified forward pass, loss detachment, and state entropy."""

import numpy as np
import pytest
from sklearn.base import clone

from statereify import ndcore as nd
from statereify.attractor import AttractorConfig, AttractorNet
from statereify.dae import Dae
from statereify.ndcore import Tensor
from statereify.rnn import (
    AttractorReifier,
    DaeReifier,
    GruCell,
    IdentityReifier,
    SdrnnClassifier,
    SdrnnModel,
    TanhCell,
    cell_step,
    hidden_state_entropy,
    reify_denoise_loss,
    sdrnn_forward,
    trace_states,
)


def identity_attractor_reifier(hidden_dim, iterations=2):
    config = AttractorConfig(
        variant="shifted",
        run_mode="fixed",
        iterations=iterations,
        sigma=0.25,
        input_clip_eps=0.0,
    )
    return AttractorReifier(AttractorNet.identity(hidden_dim), config)


class TestCells:
    def test_zero_weights_zero_state(self):
        cell = TanhCell.init(2, 3, seed=0)
        for p in cell.parameters().values():
            p.data[...] = 0.0
        h = cell_step(cell, np.ones((4, 2)), np.ones((4, 3)))
        np.testing.assert_array_equal(h.data, np.zeros((4, 3)))

    def test_one_dim_hand_arithmetic(self):
        cell = TanhCell.init(1, 1, seed=0)
        cell.w_xh.data[...] = [[0.5]]
        cell.w_hh.data[...] = [[-0.25]]
        cell.b_h.data[...] = [0.1]
        h = cell_step(cell, np.array([[0.8]]), np.array([[0.3]]))
        expected = np.tanh(0.5 * 0.8 - 0.25 * 0.3 + 0.1)
        assert h.data[0, 0] == pytest.approx(expected, rel=1e-12)

    def test_gru_update_gate_off_freezes_state(self):
        cell = GruCell.init(2, 3, seed=1)
        cell.b_z.data[...] = -50.0  # update gate ~ 0
        h_prev = np.array([[0.4, -0.2, 0.7]])
        h = cell_step(cell, np.array([[1.0, -1.0]]), h_prev)
        np.testing.assert_allclose(h.data, h_prev, atol=1e-12)

    def test_gru_update_gate_full_takes_candidate(self):
        cell = GruCell.init(2, 3, seed=1)
        cell.b_z.data[...] = 50.0  # update gate ~ 1: state replaced
        h_prev = np.array([[0.4, -0.2, 0.7]])
        h = cell_step(cell, np.array([[1.0, -1.0]]), h_prev)
        assert np.max(np.abs(h.data - h_prev)) > 0.05


class TestForward:
    def test_identity_reifier_matches_plain_rnn(self):
        """An exactly-identity attractor in the loop changes nothing."""
        rng = np.random.default_rng(0)
        plain = SdrnnModel.init(2, 5, "tanh", None, seed=3)
        reified = SdrnnModel.init(
            2, 5, "tanh", identity_attractor_reifier(5), seed=3
        )
        X = rng.uniform(-1, 1, size=(100, 6, 2))
        with nd.no_grad():
            pred_plain, _ = sdrnn_forward(plain, X)
            pred_reified, _ = sdrnn_forward(reified, X)
        np.testing.assert_allclose(pred_plain.data, pred_reified.data, atol=1e-12)

    def test_single_step_sequence(self):
        model = SdrnnModel.init(2, 4, "tanh", None, seed=1)
        X = np.ones((3, 1, 2))
        pred, trace = sdrnn_forward(model, X)
        assert pred.shape == (3,)
        assert len(trace) == 1

    def test_trace_holds_hidden_and_reified(self):
        model = SdrnnModel.init(1, 4, "tanh", identity_attractor_reifier(4), seed=2)
        X = np.zeros((2, 5, 1))
        _, trace = sdrnn_forward(model, X)
        assert len(trace) == 5
        states = trace_states(trace, "hidden")
        reified = trace_states(trace, "reified")
        assert states.shape == (10, 4)
        np.testing.assert_allclose(states, reified, atol=1e-12)

    def test_empty_sequence_rejected(self):
        model = SdrnnModel.init(1, 3, "tanh", None, seed=0)
        with pytest.raises(ValueError):
            sdrnn_forward(model, np.zeros((2, 0, 1)))

    def test_three_step_gradcheck_through_reifier(self):
        """Gradients flow through the unrolled reifier: a 3-step sequence
        with 2 attractor iterations passes the finite-difference check."""
        rng = np.random.default_rng(5)
        reifier = AttractorReifier.init(3, 4, sigma=0.25, iterations=2, seed=5)
        model = SdrnnModel.init(2, 3, "tanh", reifier, seed=5)
        X = rng.uniform(-1, 1, size=(4, 3, 2))
        y = Tensor(np.array([1.0, 0.0, 1.0, 0.0]))

        params = model.parameters()
        holders = {
            **{f"cell.{k}": (model.cell, k) for k in ("w_xh", "w_hh", "b_h")},
            "readout.w_out": (model, "w_out"),
            "readout.b_out": (model, "b_out"),
            **{
                f"reifier.{k}": (reifier.net, k)
                for k in ("V", "w_in", "v_in", "w_out", "v_out")
            },
        }
        for name, param in params.items():
            holder, attr = holders[name]

            def loss_with(t, _holder=holder, _attr=attr):
                original = getattr(_holder, _attr)
                setattr(_holder, _attr, t)
                try:
                    pred, _ = sdrnn_forward(model, X)
                    return nd.mse(pred, y)
                finally:
                    setattr(_holder, _attr, original)

            err = nd.grad_check(loss_with, Tensor(param.data.copy()))
            assert err < 1e-4, f"{name}: {err}"


class TestReifyDenoiseLoss:
    def test_copying_attractor_reifier_loss_is_one(self):
        model = SdrnnModel.init(1, 3, "tanh", identity_attractor_reifier(3), seed=0)
        X = np.random.default_rng(0).uniform(-1, 1, (4, 3, 1))
        _, trace = sdrnn_forward(model, X)
        loss = reify_denoise_loss(model, trace, sigma=0.01, seed=1)
        assert loss.item() == pytest.approx(1.0, abs=1e-10)

    def test_exact_dae_reifier_loss_vanishes_with_sigma(self):
        """A DAE that reconstructs the visited states exactly has loss of
        order sigma^2."""
        h1, h2 = 0.3, -0.8
        slope = (h2 - h1) / (np.tanh(h2) - np.tanh(h1))
        intercept = h1 - slope * np.tanh(h1)
        dae = Dae.from_arrays([[1.0]], [0.0], [[slope]], [intercept], sigma=0.25)
        model = SdrnnModel.init(1, 1, "tanh", DaeReifier(dae), seed=0)
        trace = [
            (Tensor(np.array([[h1], [h2]])), Tensor(np.array([[h1], [h2]])))
        ]
        loss = reify_denoise_loss(model, trace, sigma=1e-6, seed=2)
        assert loss.item() < 1e-9

    def test_denoise_loss_never_touches_cell_or_readout(self):
        reifier = AttractorReifier.init(4, 6, sigma=0.5, iterations=3, seed=3)
        model = SdrnnModel.init(2, 4, "tanh", reifier, seed=3)
        X = np.random.default_rng(3).uniform(-1, 1, (5, 4, 2))
        _, trace = sdrnn_forward(model, X)
        loss = reify_denoise_loss(model, trace, seed=4)
        loss.backward()
        for name in ("w_xh", "w_hh", "b_h"):
            assert model.cell.parameters()[name].grad is None
        assert model.w_out.grad is None
        assert model.b_out.grad is None
        assert any(
            p.grad is not None and np.any(p.grad != 0)
            for p in reifier.parameters().values()
        )

    def test_hand_built_single_step_trace(self):
        """Loss value equals an independent numpy evaluation with the same
        noise draw."""
        reifier = AttractorReifier.init(2, 3, sigma=0.3, iterations=2, seed=6)
        model = SdrnnModel.init(1, 2, "tanh", reifier, seed=6)
        states = np.array([[0.2, -0.5], [0.6, 0.1]])
        trace = [(Tensor(states), Tensor(states))]
        loss = reify_denoise_loss(model, trace, seed=11)

        rng = np.random.default_rng(11)
        clip = 1.0 - reifier.config.input_clip_eps
        noisy = np.arctanh(clip * states) + rng.normal(0, 0.3, states.shape)
        net = reifier.net
        w = 0.5 * (net.V.data + net.V.data.T)
        cue = noisy @ net.w_in.data + net.v_in.data
        a = np.zeros((2, 3))
        for _ in range(2):
            a = np.tanh(a) @ w + cue
        y = np.tanh(a @ net.w_out.data + net.v_out.data)
        expected = np.mean(
            np.sum((y - states) ** 2, axis=1)
            / np.sum((np.tanh(noisy) - states) ** 2, axis=1)
        )
        assert loss.item() == pytest.approx(expected, rel=1e-12)

    def test_requires_reifier_and_positive_sigma(self):
        plain = SdrnnModel.init(1, 2, "tanh", None, seed=0)
        with pytest.raises(ValueError, match="reifier"):
            reify_denoise_loss(plain, [], seed=0)
        model = SdrnnModel.init(
            1, 2, "tanh", identity_attractor_reifier(2), seed=0
        )
        _, trace = sdrnn_forward(model, np.zeros((1, 1, 1)))
        with pytest.raises(ValueError, match="sigma"):
            reify_denoise_loss(model, trace, sigma=0.0)
        with pytest.raises(ValueError):
            reify_denoise_loss(
                SdrnnModel.init(1, 2, "tanh", IdentityReifier(), seed=0),
                trace,
            )


class TestHiddenEntropy:
    def test_identical_states_zero_entropy(self):
        states = np.tile([0.3, -0.3], (50, 1))
        nats, bits = hidden_state_entropy(states)
        assert nats == 0.0
        assert bits == 0.0

    def test_two_bin_uniform_is_ln2(self):
        states = np.array([[-0.9], [0.9]] * 25)
        nats, bits = hidden_state_entropy(states)
        assert nats == pytest.approx(np.log(2))
        assert bits == pytest.approx(1.0)

    def test_bin_edges_are_inclusive_at_extremes(self):
        nats, _ = hidden_state_entropy(np.array([[-1.0], [1.0]]))
        assert nats == pytest.approx(np.log(2))

    def test_eight_bins_per_unit(self):
        # centers of the 8 bins on [-1, 1] all land in distinct cells
        centers = (np.arange(8) + 0.5) / 4.0 - 1.0
        nats, _ = hidden_state_entropy(centers.reshape(-1, 1))
        assert nats == pytest.approx(np.log(8))

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            hidden_state_entropy(np.zeros((0, 3)))


class TestClassifier:
    def test_learns_tiny_parity(self):
        """End-to-end: a small reified classifier fits 3-bit parity."""
        bits = np.array(
            [[b >> 2 & 1, b >> 1 & 1, b & 1] for b in range(8)], dtype=float
        )
        X = bits[:, :, None]
        y = bits.sum(axis=1) % 2
        clf = SdrnnClassifier(
            hidden_dim=8,
            reifier="attractor",
            reifier_dim=12,
            sigma=0.5,
            iterations=3,
            learning_rate=0.03,
            max_epochs=600,
            seed=0,
        ).fit(X, y)
        assert clf.score(X, y) >= 0.875
        proba = clf.predict_proba(X)
        assert proba.shape == (8, 2)
        np.testing.assert_allclose(proba.sum(axis=1), 1.0)

    def test_clone_roundtrip(self):
        est = SdrnnClassifier(hidden_dim=7, reifier=None)
        assert clone(est).get_params() == est.get_params()
