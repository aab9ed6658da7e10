"""Optimization: ADAM, dual-loss routing, stopping rules, checkpoints.

Two losses drive a reified sequence model. The task loss always updates
the cell and readout; what happens to the reifier depends on the routing:

* ``attractor_only`` - reifier weights see only the denoising loss (and
  stay at their initial values if that loss is disabled);
* ``joint``          - reifier weights see the task loss too, summed with
  the denoising loss when it is active.

The denoising loss can never reach cell or readout weights because its
targets and inputs are detached hidden states.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import attractor as att
from . import ndcore as nd
from .rnn import reify_denoise_loss, sdrnn_forward

LOSS_ROUTINGS = ("attractor_only", "joint")


class TrainingDiverged(RuntimeError):
    """A loss went non-finite; carries the epoch and offending value."""


class Adam:
    """Bias-corrected adaptive moments over a named parameter dict."""

    def __init__(self, params, learning_rate, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = dict(params)
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self._v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self):
        """Apply one update from each parameter's accumulated gradient.

        Parameters whose gradient buffer is empty are left untouched (and
        their moment estimates are not advanced)."""
        self.step_count += 1
        t = self.step_count
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if g.shape != p.data.shape:
                raise ValueError(
                    f"gradient shape {g.shape} does not match parameter "
                    f"{name} with shape {p.data.shape}"
                )
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1**t)
            v_hat = v / (1.0 - self.beta2**t)
            p.data -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)


class Sgd:
    """Plain stochastic gradient descent (kept for the standalone trainer)."""

    def __init__(self, params, learning_rate):
        self.params = dict(params)
        self.learning_rate = learning_rate

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self):
        for p in self.params.values():
            if p.grad is not None:
                p.data -= self.learning_rate * p.grad


@dataclass
class TrainSchedule:
    """Per-task hyperparameters for sequence-model training."""

    learning_rate: float = 0.008
    denoise_learning_rate: float = None  # defaults to learning_rate
    max_epochs: int = 5000
    denoise_start_epoch: int = 0
    loss_routing: str = "attractor_only"
    train_denoise: bool = True
    stop_on_perfect_train: bool = True
    batch_size: int = None  # None = complete batches

    def __post_init__(self):
        if self.denoise_learning_rate is None:
            self.denoise_learning_rate = self.learning_rate
        if self.learning_rate <= 0 or self.denoise_learning_rate <= 0:
            raise ValueError("learning rates must be positive")
        if self.loss_routing not in LOSS_ROUTINGS:
            raise ValueError(f"unknown loss_routing {self.loss_routing!r}")
        if not 0 <= self.denoise_start_epoch <= self.max_epochs:
            raise ValueError("denoise_start_epoch must lie within max_epochs")


@dataclass
class Checkpoint:
    """Snapshot of the parameter set with the best training accuracy."""

    params: dict
    train_accuracy: float
    epoch: int

    @classmethod
    def capture(cls, model, train_accuracy, epoch):
        return cls(
            {name: p.data.copy() for name, p in model.parameters().items()},
            train_accuracy,
            epoch,
        )

    def restore(self, model):
        live = model.parameters()
        for name, data in self.params.items():
            live[name].data[...] = data


@dataclass
class EpochRecord:
    epoch: int
    task_loss: float
    denoise_loss: float
    train_accuracy: float


def accuracy_from_predictions(predictions, targets):
    """Fraction classified correctly at threshold 0.5.

    A prediction exactly at 0.5 counts as incorrect for either label.
    """
    predictions = np.asarray(predictions, dtype=np.float64).reshape(-1)
    targets = np.asarray(targets, dtype=np.float64).reshape(-1)
    if predictions.size == 0:
        raise ValueError("empty prediction set")
    correct = np.where(targets == 1.0, predictions > 0.5, predictions < 0.5)
    return float(np.mean(correct))


def accuracy(model, dataset):
    """Decision accuracy of a sequence model over a dataset."""
    if len(dataset.targets) == 0:
        raise ValueError("empty dataset")
    with nd.no_grad():
        pred, _ = sdrnn_forward(model, dataset.inputs)
    return accuracy_from_predictions(pred.data, dataset.targets)


def train_sdrnn(model, dataset, schedule, seed=0):
    """Train on the task loss, plus the reifier's denoising loss when
    enabled, and return (best checkpoint, per-epoch history).

    Training runs in complete batches unless ``schedule.batch_size`` says
    otherwise, stops early at 100% training accuracy when configured, and
    always reports the maximum-train-accuracy snapshot rather than the
    final weights.
    """
    X = np.asarray(dataset.inputs, dtype=np.float64)
    y = np.asarray(dataset.targets, dtype=np.float64)
    noise_rng = np.random.default_rng(np.random.SeedSequence([seed, 104729]))
    batch_rng = np.random.default_rng(np.random.SeedSequence([seed, 15485863]))

    groups = model.parameter_groups()
    task_params = {}
    for gname in ("cell", "readout"):
        for pname, p in groups[gname].items():
            task_params[f"{gname}.{pname}"] = p
    reifier_params = groups.get("reifier", {})
    has_reifier = bool(reifier_params)

    adam_task = Adam(task_params, schedule.learning_rate)
    adam_reifier = (
        Adam(reifier_params, schedule.denoise_learning_rate)
        if has_reifier
        else None
    )
    joint = schedule.loss_routing == "joint"

    history = []
    best = None
    n = X.shape[0]
    batch_size = schedule.batch_size or n

    for epoch in range(schedule.max_epochs):
        order = (
            np.arange(n) if batch_size >= n else batch_rng.permutation(n)
        )
        denoise_on = (
            schedule.train_denoise
            and has_reifier
            and epoch >= schedule.denoise_start_epoch
        )
        epoch_task = 0.0
        epoch_denoise = 0.0
        epoch_correct = 0.0

        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            adam_task.zero_grad()
            if adam_reifier is not None:
                adam_reifier.zero_grad()

            pred, trace = sdrnn_forward(model, X[idx])
            task_loss = nd.mse(pred, nd.Tensor(y[idx]))
            if not np.isfinite(task_loss.data):
                raise TrainingDiverged(
                    f"task loss became {float(task_loss.data)} at epoch {epoch}"
                )

            denoise_loss = None
            if denoise_on:
                denoise_loss = reify_denoise_loss(model, trace, rng=noise_rng)
                if not np.isfinite(denoise_loss.data):
                    raise TrainingDiverged(
                        f"denoising loss became "
                        f"{float(denoise_loss.data)} at epoch {epoch}"
                    )

            if joint:
                total = (
                    nd.add(task_loss, denoise_loss)
                    if denoise_loss is not None
                    else task_loss
                )
                total.backward()
                adam_task.step()
                if adam_reifier is not None:
                    adam_reifier.step()
            else:
                task_loss.backward()
                adam_task.step()
                if denoise_loss is not None:
                    # reifier buffers hold task gradient; routing discards it
                    adam_reifier.zero_grad()
                    denoise_loss.backward()
                    adam_reifier.step()

            epoch_task += float(task_loss.data) * len(idx)
            if denoise_loss is not None:
                epoch_denoise += float(denoise_loss.data) * len(idx)
            correct = np.where(
                y[idx] == 1.0, pred.data > 0.5, pred.data < 0.5
            )
            epoch_correct += float(np.sum(correct))

        train_acc = epoch_correct / n
        history.append(
            EpochRecord(
                epoch,
                epoch_task / n,
                (epoch_denoise / n) if denoise_on else float("nan"),
                train_acc,
            )
        )
        if best is None or train_acc > best.train_accuracy:
            best = Checkpoint.capture(model, train_acc, epoch)
        if schedule.stop_on_perfect_train and train_acc >= 1.0:
            break

    return best, history


def history_to_csv(history, path):
    """Write per-epoch records as CSV (epoch, task loss, denoising loss,
    training accuracy)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epoch,task_loss,denoise_loss,train_accuracy\n")
        for rec in history:
            fh.write(
                f"{rec.epoch},{rec.task_loss!r},{rec.denoise_loss!r},"
                f"{rec.train_accuracy!r}\n"
            )


def train_attractor_standalone(
    targets,
    config,
    n_hidden=100,
    seed=0,
    epochs=150,
    batch_size=64,
    learning_rate=0.01,
    sigma_test=None,
    optimizer="adam",
):
    """Fit an attractor net to denoise noisy instances of target states.

    A fixed training batch of ``samples_per_target * n_targets`` noisy
    instances is generated once and swept in shuffled mini-batches. The
    returned suppression score is measured on a single fresh noise draw
    around the same targets at ``sigma_test`` (defaulting to the training
    noise level).

    Returns ``(net, test_suppression_percent)``.
    """
    if config.sigma <= 0:
        raise ValueError("training requires config.sigma > 0")
    seeds = np.random.SeedSequence([seed, 2038074743]).spawn(3)
    init_seed, train_noise_seed, test_noise_seed = (
        s.generate_state(1)[0] for s in seeds
    )

    noisy, clean = att.make_denoising_batch(
        targets, config.sigma, seed=train_noise_seed
    )
    net = att.AttractorNet.init(targets.dim, n_hidden, seed=init_seed)

    opt_cls = {"adam": Adam, "sgd": Sgd}[optimizer]
    opt = opt_cls(net.parameters(), learning_rate)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 32452843]))
    n = noisy.shape[0]
    batch_size = min(batch_size, n)

    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            opt.zero_grad()
            loss, _ = att.denoising_loss(net, noisy[idx], clean[idx], config)
            if config.ridge_lambda > 0:
                loss = nd.add(loss, att.ridge_penalty(net, config.ridge_lambda))
            if not np.isfinite(loss.data):
                raise TrainingDiverged(f"denoising loss became {float(loss.data)}")
            loss.backward()
            opt.step()

    test_noisy, test_clean = att.make_denoising_batch(
        targets,
        config.sigma if sigma_test is None else sigma_test,
        seed=test_noise_seed,
    )
    with nd.no_grad():
        test_loss, _ = att.denoising_loss(net, test_noisy, test_clean, config)
    return net, att.noise_suppression(test_loss.data)
