"""Recurrent cells and the state-reifying sequence classifier.

At each step the cell consumes the input together with the previous
*reified* state; the fresh hidden state is then passed through the
reifier (attractor net or DAE) before feeding the next step and,
at the end of the sequence, the logistic readout.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from . import attractor as att
from . import dae as dae_mod
from . import ndcore as nd
from .ndcore import Tensor
from .validation import (
    check_binary_targets,
    check_fitted,
    check_seed,
    check_sequences,
)


class TanhCell:
    def __init__(self, w_xh, w_hh, b_h):
        self.w_xh = w_xh
        self.w_hh = w_hh
        self.b_h = b_h

    @classmethod
    def init(cls, input_dim, hidden_dim, seed=0):
        # glorot-scaled input map keeps step-one activations unsaturated
        # even for one-dimensional inputs
        rng = np.random.default_rng(seed)
        return cls(
            Tensor(
                rng.normal(
                    0.0,
                    np.sqrt(2.0 / (input_dim + hidden_dim)),
                    (input_dim, hidden_dim),
                ),
                requires_grad=True,
            ),
            Tensor(
                rng.normal(0.0, 1.0 / np.sqrt(hidden_dim), (hidden_dim, hidden_dim)),
                requires_grad=True,
            ),
            Tensor(np.zeros(hidden_dim), requires_grad=True),
        )

    @property
    def hidden_dim(self):
        return self.w_hh.shape[0]

    def parameters(self):
        return {"w_xh": self.w_xh, "w_hh": self.w_hh, "b_h": self.b_h}

    def step(self, x, h_prev):
        z = nd.add(
            nd.add(nd.matmul(x, self.w_xh), nd.matmul(h_prev, self.w_hh)),
            self.b_h,
        )
        return nd.tanh(z)


class GruCell:
    """Gated recurrent unit; each gate is an affine map of [input, state].

    The update gate mixes the candidate in: state' = (1-z)*state + z*cand,
    so forcing z toward 0 freezes the state.
    """

    def __init__(self, w_z, b_z, w_r, b_r, w_n, b_n):
        self.w_z = w_z
        self.b_z = b_z
        self.w_r = w_r
        self.b_r = b_r
        self.w_n = w_n
        self.b_n = b_n

    @classmethod
    def init(cls, input_dim, hidden_dim, seed=0):
        rng = np.random.default_rng(seed)
        std = 1.0 / np.sqrt(input_dim + hidden_dim)

        def gate():
            return (
                Tensor(
                    rng.normal(0.0, std, (input_dim + hidden_dim, hidden_dim)),
                    requires_grad=True,
                ),
                Tensor(np.zeros(hidden_dim), requires_grad=True),
            )

        w_z, b_z = gate()
        w_r, b_r = gate()
        w_n, b_n = gate()
        return cls(w_z, b_z, w_r, b_r, w_n, b_n)

    @property
    def hidden_dim(self):
        return self.w_z.shape[1]

    def parameters(self):
        return {
            "w_z": self.w_z,
            "b_z": self.b_z,
            "w_r": self.w_r,
            "b_r": self.b_r,
            "w_n": self.w_n,
            "b_n": self.b_n,
        }

    def step(self, x, h_prev):
        u = nd.hstack(x, h_prev)
        update = nd.logistic(nd.add(nd.matmul(u, self.w_z), self.b_z))
        reset = nd.logistic(nd.add(nd.matmul(u, self.w_r), self.b_r))
        v = nd.hstack(x, nd.mul(reset, h_prev))
        cand = nd.tanh(nd.add(nd.matmul(v, self.w_n), self.b_n))
        keep = nd.affine_const(update, -1.0, 1.0)  # 1 - z
        return nd.add(nd.mul(keep, h_prev), nd.mul(update, cand))


def cell_step(cell, x, h_prev):
    """One cell update; ``x`` is (batch, input), ``h_prev`` (batch, hidden)."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    h_prev = h_prev if isinstance(h_prev, Tensor) else Tensor(h_prev)
    return cell.step(x, h_prev)


# -- reifiers -------------------------------------------------------------------


class AttractorReifier:
    """Attractor net applied to the hidden state at every step."""

    def __init__(self, net, config):
        if config.run_mode != "fixed":
            config = config.with_overrides(run_mode="fixed")
        self.net = net
        self.config = config

    @classmethod
    def init(cls, hidden_dim, n_units, sigma, iterations, seed=0, variant="shifted"):
        config = att.AttractorConfig(
            variant=variant,
            run_mode="fixed",
            iterations=iterations,
            sigma=sigma,
        )
        return cls(att.AttractorNet.init(hidden_dim, n_units, seed=seed), config)

    def parameters(self):
        return self.net.parameters()

    def reify(self, h):
        y, _, _ = att.run(self.net, h, self.config)
        return y

    def denoise_loss(self, states, rng, sigma=None):
        """Normalized denoising loss on detached hidden states.

        Targets are the states themselves; inputs are their images in the
        cue domain plus Gaussian noise.
        """
        sigma = self.config.sigma if sigma is None else sigma
        if sigma <= 0:
            raise ValueError("sigma must be > 0")
        clip = 1.0 - self.config.input_clip_eps
        noisy = np.arctanh(clip * states) + rng.normal(
            0.0, sigma, size=states.shape
        )
        loss, _ = att.denoising_loss(self.net, noisy, states, self.config)
        return loss


class DaeReifier:
    """DAE applied to the hidden state; reconstruction is noiseless, the
    training loss corrupts in the state's native domain."""

    def __init__(self, dae):
        self.dae = dae

    @classmethod
    def init(cls, hidden_dim, bottleneck, sigma, seed=0):
        return cls(dae_mod.Dae.init(hidden_dim, bottleneck, sigma, seed=seed))

    def parameters(self):
        return self.dae.parameters()

    def reify(self, h):
        return self.dae.reconstruct(h)

    def denoise_loss(self, states, rng, sigma=None):
        sigma = self.dae.sigma if sigma is None else sigma
        if sigma <= 0:
            raise ValueError("sigma must be > 0")
        noise = rng.normal(0.0, sigma, size=states.shape)
        return dae_mod.rec_loss(self.dae, states, noise=noise)


class IdentityReifier:
    """Pass-through (for tests and ablations)."""

    def parameters(self):
        return {}

    def reify(self, h):
        return h

    def denoise_loss(self, states, rng, sigma=None):
        raise ValueError("identity reifier has no trainable denoising loss")


# -- model ---------------------------------------------------------------------


class SdrnnModel:
    """Recurrent cell + optional reifier + logistic readout."""

    def __init__(self, cell, reifier, w_out, b_out, reify_every_step=True):
        self.cell = cell
        self.reifier = reifier
        self.w_out = w_out
        self.b_out = b_out
        self.reify_every_step = reify_every_step

    @classmethod
    def init(
        cls,
        input_dim,
        hidden_dim,
        cell_kind="tanh",
        reifier=None,
        seed=0,
        output_dim=1,
    ):
        rng = np.random.default_rng(seed)
        cell_cls = {"tanh": TanhCell, "gru": GruCell}[cell_kind]
        cell = cell_cls.init(input_dim, hidden_dim, seed=seed)
        w_out = Tensor(
            rng.normal(
                0.0,
                np.sqrt(2.0 / (hidden_dim + output_dim)),
                (hidden_dim, output_dim),
            ),
            requires_grad=True,
        )
        b_out = Tensor(np.zeros(output_dim), requires_grad=True)
        return cls(cell, reifier, w_out, b_out)

    @property
    def hidden_dim(self):
        return self.cell.hidden_dim

    def parameter_groups(self):
        groups = {
            "cell": self.cell.parameters(),
            "readout": {"w_out": self.w_out, "b_out": self.b_out},
        }
        if self.reifier is not None:
            groups["reifier"] = self.reifier.parameters()
        return groups

    def parameters(self):
        flat = {}
        for group, params in self.parameter_groups().items():
            for name, tensor in params.items():
                flat[f"{group}.{name}"] = tensor
        return flat


def sdrnn_forward(model, X):
    """Run a batch of sequences; returns (predictions, trace).

    ``X`` is (batch, steps, features). ``trace`` is a list over steps of
    (hidden, reified) tensor pairs; the prediction is the logistic readout
    of the final reified state, flattened to (batch,) when the readout is
    one-dimensional.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3 or X.shape[1] == 0:
        raise ValueError(f"expected a nonempty (batch, steps, features) input, got {X.shape}")
    batch, steps, _ = X.shape
    state = Tensor(np.zeros((batch, model.hidden_dim)))
    trace = []
    reify = (
        model.reifier is not None
        and not isinstance(model.reifier, IdentityReifier)
        and model.reify_every_step
    )
    for t in range(steps):
        h = model.cell.step(Tensor(X[:, t, :]), state)
        h_tilde = model.reifier.reify(h) if reify else h
        trace.append((h, h_tilde))
        state = h_tilde
    logits = nd.add(nd.matmul(state, model.w_out), model.b_out)
    pred = nd.logistic(logits)
    if model.w_out.shape[1] == 1:
        pred = nd.reshape(pred, (batch,))
    return pred, trace


def trace_states(trace, which="hidden"):
    """Stack trace states into a ((batch * steps), hidden) value array."""
    idx = {"hidden": 0, "reified": 1}[which]
    return np.concatenate([pair[idx].data for pair in trace], axis=0)


def reify_denoise_loss(model, trace, sigma=None, seed=0, rng=None):
    """Reifier training loss over the detached hidden states of a trace.

    The states are targets, not gradient paths: backpropagating this loss
    touches reifier parameters only. ``sigma=None`` uses the reifier's
    configured noise level.
    """
    if model.reifier is None or isinstance(model.reifier, IdentityReifier):
        raise ValueError("model has no trainable reifier")
    if rng is None:
        rng = np.random.default_rng(seed)
    states = trace_states(trace, "hidden")
    return model.reifier.denoise_loss(states, rng, sigma=sigma)


def hidden_state_entropy(states, bins=8):
    """Shannon entropy of the jointly discretized state, in (nats, bits).

    Each unit is cut into ``bins`` equal intervals on [-1, 1] and the
    whole state vector indexes one joint cell; the entropy is that of the
    empirical cell distribution over all provided states.
    """
    states = np.asarray(states, dtype=np.float64)
    if states.size == 0:
        raise ValueError("empty state trace")
    if states.ndim == 1:
        states = states.reshape(-1, 1)
    idx = np.floor((states + 1.0) * (bins / 2.0)).astype(np.int64)
    np.clip(idx, 0, bins - 1, out=idx)
    _, counts = np.unique(idx, axis=0, return_counts=True)
    p = counts / counts.sum()
    nats = float(-np.sum(p * np.log(p)))
    return nats, nats / np.log(2.0)


# -- sklearn-style facade ---------------------------------------------------------


class SdrnnClassifier(BaseEstimator, ClassifierMixin):
    """Binary sequence classifier with optional hidden-state reification.

    ``reifier`` is one of "attractor", "dae", or None (a plain recurrent
    baseline). ``denoise=False`` keeps the reification hardware but trains
    it on the task loss alone.
    """

    def __init__(
        self,
        hidden_dim=10,
        cell="tanh",
        reifier="attractor",
        reifier_dim=20,
        sigma=0.5,
        iterations=15,
        denoise=True,
        loss_routing="attractor_only",
        learning_rate=0.008,
        max_epochs=5000,
        denoise_start_epoch=0,
        stop_on_perfect_train=True,
        seed=0,
    ):
        self.hidden_dim = hidden_dim
        self.cell = cell
        self.reifier = reifier
        self.reifier_dim = reifier_dim
        self.sigma = sigma
        self.iterations = iterations
        self.denoise = denoise
        self.loss_routing = loss_routing
        self.learning_rate = learning_rate
        self.max_epochs = max_epochs
        self.denoise_start_epoch = denoise_start_epoch
        self.stop_on_perfect_train = stop_on_perfect_train
        self.seed = seed

    def _build(self, input_dim, seed):
        reifier = None
        if self.reifier == "attractor":
            reifier = AttractorReifier.init(
                self.hidden_dim,
                self.reifier_dim,
                self.sigma,
                self.iterations,
                seed=seed + 1,
            )
        elif self.reifier == "dae":
            reifier = DaeReifier.init(
                self.hidden_dim, self.reifier_dim, self.sigma, seed=seed + 1
            )
        elif self.reifier is not None:
            raise ValueError(f"unknown reifier {self.reifier!r}")
        return SdrnnModel.init(
            input_dim, self.hidden_dim, self.cell, reifier, seed=seed
        )

    def fit(self, X, y):
        from .tasks import Dataset
        from .training import TrainSchedule, train_sdrnn

        X = check_sequences(X)
        y = check_binary_targets(y, X.shape[0])
        seed = check_seed(self.seed)
        model = self._build(X.shape[2], seed)
        schedule = TrainSchedule(
            learning_rate=self.learning_rate,
            max_epochs=self.max_epochs,
            denoise_start_epoch=self.denoise_start_epoch,
            loss_routing=self.loss_routing,
            train_denoise=self.denoise and model.reifier is not None,
            stop_on_perfect_train=self.stop_on_perfect_train,
        )
        checkpoint, history = train_sdrnn(
            model, Dataset(X, y, {"task": "custom"}), schedule, seed=seed
        )
        checkpoint.restore(model)
        self.model_ = model
        self.checkpoint_ = checkpoint
        self.history_ = history
        self.classes_ = np.array([0.0, 1.0])
        return self

    def predict_proba(self, X):
        check_fitted(self, "model_")
        X = check_sequences(X)
        with nd.no_grad():
            pred, _ = sdrnn_forward(self.model_, X)
        p1 = pred.data
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] > 0.5).astype(np.float64)

    def score(self, X, y):
        from .training import accuracy_from_predictions

        check_fitted(self, "model_")
        X = check_sequences(X)
        y = check_binary_targets(y, X.shape[0])
        with nd.no_grad():
            pred, _ = sdrnn_forward(self.model_, X)
        return accuracy_from_predictions(pred.data, y)
