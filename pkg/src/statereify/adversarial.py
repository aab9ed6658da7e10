"""Adversarial attacks and training for a feedforward classifier whose
hidden layers can each carry a denoising autoencoder.

The attack is iterated signed-gradient ascent on the task loss, projected
after every step onto the max-norm ball around the clean input. Attack
variants differ in how they treat the reconstruction layers: ``full``
differentiates through them (with their noise), ``bpda`` bypasses them
with an identity in the backward pass, and ``noiseless`` disables the
corruption in both passes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from . import ndcore as nd
from .dae import Dae
from .ndcore import Tensor
from .validation import check_array, check_binary_targets, check_fitted, check_seed

ATTACK_VARIANTS = ("full", "bpda", "noiseless")


@dataclass
class AttackConfig:
    epsilon: float
    steps: int = 7
    alpha: float = None  # defaults to 2.5 * epsilon / steps
    variant: str = "full"
    clip_box: tuple = None  # optional (low, high) valid-input box

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.alpha is None:
            self.alpha = 2.5 * self.epsilon / self.steps
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if self.variant not in ATTACK_VARIANTS:
            raise ValueError(f"unknown attack variant {self.variant!r}")


class ReifiedMlp:
    """Fully connected tanh classifier with per-layer reconstruction.

    ``reified_layers`` lists the hidden layers (by index) whose activations
    are replaced by a DAE reconstruction on the forward pass; during
    training and noisy evaluation the DAE input is Gaussian-corrupted at
    the DAE's own sigma.
    """

    def __init__(self, weights, biases, readout_w, readout_b, daes, lambda_rec=1.0):
        self.weights = weights
        self.biases = biases
        self.readout_w = readout_w
        self.readout_b = readout_b
        self.daes = daes  # {layer_index: Dae}
        self.lambda_rec = lambda_rec
        for idx, dae in daes.items():
            if dae.dim != weights[idx].shape[1]:
                raise ValueError(
                    f"DAE at layer {idx} has dim {dae.dim}, layer width is "
                    f"{weights[idx].shape[1]}"
                )

    @classmethod
    def init(
        cls,
        input_dim,
        hidden=(32, 32),
        reified_layers=(),
        dae_bottleneck=8,
        dae_sigma=0.25,
        lambda_rec=1.0,
        seed=0,
    ):
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        fan_in = input_dim
        for width in hidden:
            weights.append(
                Tensor(
                    rng.normal(0.0, 1.0 / np.sqrt(fan_in), (fan_in, width)),
                    requires_grad=True,
                )
            )
            biases.append(Tensor(np.zeros(width), requires_grad=True))
            fan_in = width
        readout_w = Tensor(
            rng.normal(0.0, 1.0 / np.sqrt(fan_in), (fan_in, 1)), requires_grad=True
        )
        readout_b = Tensor(np.zeros(1), requires_grad=True)
        daes = {
            idx: Dae.init(hidden[idx], dae_bottleneck, dae_sigma, seed=seed + 7 + idx)
            for idx in reified_layers
        }
        return cls(weights, biases, readout_w, readout_b, daes, lambda_rec)

    @property
    def input_dim(self):
        return self.weights[0].shape[0] if self.weights else self.readout_w.shape[0]

    def parameters(self):
        flat = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            flat[f"layer{i}.w"] = w
            flat[f"layer{i}.b"] = b
        flat["readout.w"] = self.readout_w
        flat["readout.b"] = self.readout_b
        for idx, dae in self.daes.items():
            for name, p in dae.parameters().items():
                flat[f"dae{idx}.{name}"] = p
        return flat

    def forward(self, x, noise_rng=None, bpda=False, noise=None):
        """Logistic prediction plus per-layer reconstruction losses.

        ``noise_rng`` draws fresh DAE corruption (None = clean pass);
        ``noise`` may instead supply {layer: array} for deterministic
        replay. With ``bpda`` the reconstruction output is used forward
        but gradients skip it as if it were the identity.
        """
        h = x if isinstance(x, Tensor) else Tensor(x)
        rec_terms = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = nd.tanh(nd.add(nd.matmul(h, w), b))
            dae = self.daes.get(i)
            if dae is None:
                continue
            if noise is not None and i in noise:
                eta = noise[i]
            elif noise_rng is not None and dae.sigma > 0:
                eta = noise_rng.normal(0.0, dae.sigma, size=h.shape)
            else:
                eta = None
            corrupted = h if eta is None else nd.add(h, Tensor(eta))
            if bpda:
                with nd.no_grad():
                    recon_value = dae.reconstruct(Tensor(corrupted.data)).data
                recon = nd.straight_through(h, recon_value)
            else:
                recon = dae.reconstruct(corrupted)
            rec_terms[i] = nd.mean(nd.sumsq(nd.sub(recon, h), axis=1))
            h = recon
        logits = nd.add(nd.matmul(h, self.readout_w), self.readout_b)
        pred = nd.reshape(nd.logistic(logits), (logits.shape[0],))
        return pred, rec_terms


def _mean_rowsumsq(diff):
    return nd.affine_const(nd.total(nd.sumsq(diff, axis=1)), 1.0 / diff.shape[0])


def pgd_attack(loss_fn, x, config, return_trace=False):
    """Iterated signed-gradient ascent within the epsilon max-norm ball.

    ``loss_fn`` maps an input Tensor to a scalar loss; the iterate starts
    at the clean input, moves by ``alpha`` along the gradient sign, and is
    projected back onto the ball (and into ``clip_box`` when given) after
    every step.
    """
    x0 = np.asarray(x, dtype=np.float64).copy()
    xt = x0.copy()
    trace = []
    for _ in range(config.steps):
        leaf = Tensor(xt, requires_grad=True)
        loss = loss_fn(leaf)
        if not np.isfinite(loss.data):
            raise FloatingPointError("attack loss became non-finite")
        loss.backward()
        grad = leaf.grad if leaf.grad is not None else np.zeros_like(xt)
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError("attack gradient became non-finite")
        xt = xt + config.alpha * np.sign(grad)
        np.clip(xt, x0 - config.epsilon, x0 + config.epsilon, out=xt)
        if config.clip_box is not None:
            np.clip(xt, config.clip_box[0], config.clip_box[1], out=xt)
        if return_trace:
            trace.append(xt.copy())
    return (xt, trace) if return_trace else xt


def attack_model(model, X, y, config, seed=0):
    """Adversarial examples for a batch under the configured variant."""
    y = np.asarray(y, dtype=np.float64)
    rng = np.random.default_rng(seed)
    use_noise = config.variant != "noiseless"
    bpda = config.variant == "bpda"

    def loss_fn(x_tensor):
        pred, _ = model.forward(
            x_tensor, noise_rng=rng if use_noise else None, bpda=bpda
        )
        return nd.mse(pred, Tensor(y))

    return pgd_attack(loss_fn, X, config)


def predictions(model, X, seed=0, with_noise=True):
    """Class probabilities; noisy reification is drawn from ``seed``."""
    rng = np.random.default_rng(seed) if with_noise else None
    with nd.no_grad():
        pred, _ = model.forward(Tensor(np.asarray(X, dtype=np.float64)), noise_rng=rng)
    return pred.data


def clean_accuracy(model, dataset, seed=0, with_noise=True):
    from .training import accuracy_from_predictions

    return accuracy_from_predictions(
        predictions(model, dataset.inputs, seed=seed, with_noise=with_noise),
        dataset.targets,
    )


def robust_accuracy(model, dataset, config, seed=0, with_noise=True):
    """Accuracy on the attacked test set."""
    from .training import accuracy_from_predictions

    adv = attack_model(model, dataset.inputs, dataset.targets, config, seed=seed)
    return accuracy_from_predictions(
        predictions(model, adv, seed=seed + 1, with_noise=with_noise),
        dataset.targets,
    )


def adv_train_step(model, X, y, config, optimizer, rng):
    """One update on the combined loss: task loss on the clean batch, task
    loss on its adversarial counterparts, and the weighted reconstruction
    losses of the clean pass."""
    adv = attack_model(
        model, X, y, config, seed=int(rng.integers(0, 2**31 - 1))
    )
    optimizer.zero_grad()
    noise_rng = np.random.default_rng(rng.integers(0, 2**31 - 1))
    pred_clean, rec_terms = model.forward(Tensor(X), noise_rng=noise_rng)
    pred_adv, _ = model.forward(Tensor(adv), noise_rng=noise_rng)
    target = Tensor(y)
    loss = nd.add(nd.mse(pred_clean, target), nd.mse(pred_adv, target))
    rec_total = 0.0
    for term in rec_terms.values():
        loss = nd.add(loss, nd.affine_const(term, model.lambda_rec))
        rec_total += float(term.data)
    if not np.isfinite(loss.data):
        raise FloatingPointError("combined adversarial loss became non-finite")
    loss.backward()
    optimizer.step()
    return {
        "task_clean": float(nd.mse(pred_clean, target).data),
        "task_adv": float(nd.mse(pred_adv, target).data),
        "rec": rec_total,
        "total": float(loss.data),
    }


def adv_train(
    model, dataset, config, epochs=60, batch_size=64, learning_rate=0.005, seed=0
):
    """Adversarial training loop over shuffled mini-batches."""
    from .training import Adam

    optimizer = Adam(model.parameters(), learning_rate)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7919]))
    X = np.asarray(dataset.inputs, dtype=np.float64)
    y = np.asarray(dataset.targets, dtype=np.float64)
    n = X.shape[0]
    batch_size = min(batch_size, n)
    losses = []
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            losses.append(adv_train_step(model, X[idx], y[idx], config, optimizer, rng))
    return losses


class ReifiedMlpClassifier(BaseEstimator, ClassifierMixin):
    """Binary classifier with optional per-layer reification and optional
    adversarial training."""

    def __init__(
        self,
        hidden=(32, 32),
        reified_layers=(),
        dae_bottleneck=8,
        dae_sigma=0.25,
        lambda_rec=1.0,
        adversarial=True,
        epsilon=0.3,
        attack_steps=7,
        epochs=60,
        batch_size=64,
        learning_rate=0.005,
        seed=0,
    ):
        self.hidden = hidden
        self.reified_layers = reified_layers
        self.dae_bottleneck = dae_bottleneck
        self.dae_sigma = dae_sigma
        self.lambda_rec = lambda_rec
        self.adversarial = adversarial
        self.epsilon = epsilon
        self.attack_steps = attack_steps
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.seed = seed

    def fit(self, X, y):
        from .tasks import Dataset
        from .training import Adam

        X = check_array(X, name="X")
        y = check_binary_targets(y, X.shape[0])
        seed = check_seed(self.seed)
        model = ReifiedMlp.init(
            X.shape[1],
            hidden=tuple(self.hidden),
            reified_layers=tuple(self.reified_layers),
            dae_bottleneck=self.dae_bottleneck,
            dae_sigma=self.dae_sigma,
            lambda_rec=self.lambda_rec,
            seed=seed,
        )
        dataset = Dataset(X, y, {"task": "custom"})
        if self.adversarial:
            config = AttackConfig(epsilon=self.epsilon, steps=self.attack_steps)
            adv_train(
                model,
                dataset,
                config,
                epochs=self.epochs,
                batch_size=self.batch_size,
                learning_rate=self.learning_rate,
                seed=seed,
            )
        else:
            optimizer = Adam(model.parameters(), self.learning_rate)
            rng = np.random.default_rng(np.random.SeedSequence([seed, 7919]))
            n = X.shape[0]
            batch = min(self.batch_size, n)
            for _ in range(self.epochs):
                order = rng.permutation(n)
                for start in range(0, n, batch):
                    idx = order[start : start + batch]
                    optimizer.zero_grad()
                    noise_rng = np.random.default_rng(rng.integers(0, 2**31 - 1))
                    pred, rec_terms = model.forward(
                        Tensor(X[idx]), noise_rng=noise_rng
                    )
                    loss = nd.mse(pred, Tensor(y[idx]))
                    for term in rec_terms.values():
                        loss = nd.add(loss, nd.affine_const(term, self.lambda_rec))
                    loss.backward()
                    optimizer.step()
        self.model_ = model
        self.classes_ = np.array([0.0, 1.0])
        return self

    def predict_proba(self, X):
        check_fitted(self, "model_")
        X = check_array(X, name="X")
        p1 = predictions(
            self.model_, X, seed=check_seed(self.seed) + 101, with_noise=True
        )
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] > 0.5).astype(np.float64)
