"""Attractor network: cue projection, iterated symmetric dynamics, readout.

The network maps a bounded m-dimensional input to a bounded m-dimensional
output through an n-dimensional recurrent state. The recurrent weight
matrix is stored as an unconstrained square matrix and applied as its
symmetric part, so symmetry survives any number of gradient updates.

Two formulations are supported:

* ``standard``   - cue is an affine map of the input, the state update is
                   tanh(state @ W + cue), and the readout is an affine map
                   clamped to [-1, 1].
* ``shifted``    - the input is first mapped through atanh (with a (1-eps)
                   squeeze for numerical safety), the nonlinearity moves
                   inside the recurrence as tanh(state) @ W + cue, and the
                   readout applies tanh. With this arrangement the atanh /
                   tanh pair cancels and the net can copy input to output
                   exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import ndcore as nd
from .ndcore import Tensor
from .validation import check_array, check_fitted, check_seed

VARIANTS = ("standard", "shifted")
RUN_MODES = ("fixed", "converge")

# Per-example denominators below this are treated as "noisy input equals
# the target" and the example is skipped instead of dividing by ~0. The
# floor absorbs atanh/tanh round-trip dust when sigma is 0.
DENOM_FLOOR = 1e-24


@dataclass
class AttractorConfig:
    """Knobs shared by training and evaluation of an attractor net."""

    variant: str = "shifted"
    run_mode: str = "converge"
    iterations: int = 15
    delta: float = 0.01
    max_iter: int = 50
    sigma: float = 0.25
    input_clip_eps: float = 1e-6
    ridge_lambda: float = 0.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.run_mode not in RUN_MODES:
            raise ValueError(f"unknown run_mode {self.run_mode!r}")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.delta <= 0:
            raise ValueError("delta must be > 0")
        if self.max_iter < 2:
            raise ValueError("max_iter must be >= 2")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.ridge_lambda < 0:
            raise ValueError("ridge_lambda must be >= 0")

    def with_overrides(self, **kwargs):
        return replace(self, **kwargs)


@dataclass
class AttractorTargets:
    """A set of states to be stored as attractors.

    ``states`` is (n_targets, m) with every entry strictly inside (-1, 1);
    ``samples_per_target`` is how many noisy instances of each state a
    denoising batch contains.
    """

    states: np.ndarray
    samples_per_target: int = 50

    def __post_init__(self):
        self.states = check_array(self.states, name="states")
        if np.any(np.abs(self.states) >= 1.0):
            raise ValueError("target states must lie strictly inside (-1, 1)")
        if self.samples_per_target < 1:
            raise ValueError("samples_per_target must be >= 1")

    @property
    def n_targets(self):
        return self.states.shape[0]

    @property
    def dim(self):
        return self.states.shape[1]


@dataclass
class RunInfo:
    """Bookkeeping from one dynamics run over a batch of cues."""

    iterations_used: int
    converged: bool
    per_example_iterations: np.ndarray = field(default=None, repr=False)
    per_example_converged: np.ndarray = field(default=None, repr=False)


class AttractorNet:
    """Parameters of the attractor architecture.

    Weight layout (all float64, gradient-enabled):

    * ``V``      (n, n)  unconstrained; the effective recurrent matrix is
                          its symmetric part
    * ``w_in``   (m, n)  input-to-state map (applied as ``x @ w_in``)
    * ``v_in``   (n,)
    * ``w_out``  (n, m)  state-to-output map
    * ``v_out``  (m,)
    """

    def __init__(self, m, n, V, w_in, v_in, w_out, v_out):
        self.m = m
        self.n = n
        self.V = V
        self.w_in = w_in
        self.v_in = v_in
        self.w_out = w_out
        self.v_out = v_out

    @classmethod
    def init(cls, m, n, seed=0):
        """Draw all weights from Normal(0, 0.01^2), then add 1 to the
        leading diagonal of the input and output maps so the net starts
        close to a pass-through."""
        if m < 1 or n < 1:
            raise ValueError("dimensions must be >= 1")
        rng = np.random.default_rng(seed)
        V = np.zeros((n, n))
        iu = np.triu_indices(n)
        V[iu] = rng.normal(0.0, 0.01, size=len(iu[0]))
        V.T[iu] = V[iu]
        w_in = rng.normal(0.0, 0.01, size=(m, n))
        v_in = rng.normal(0.0, 0.01, size=n)
        w_out = rng.normal(0.0, 0.01, size=(n, m))
        v_out = rng.normal(0.0, 0.01, size=m)
        k = min(m, n)
        w_in[np.arange(k), np.arange(k)] += 1.0
        w_out[np.arange(k), np.arange(k)] += 1.0
        return cls(
            m,
            n,
            Tensor(V, requires_grad=True),
            Tensor(w_in, requires_grad=True),
            Tensor(v_in, requires_grad=True),
            Tensor(w_out, requires_grad=True),
            Tensor(v_out, requires_grad=True),
        )

    @classmethod
    def identity(cls, m):
        """The exact pass-through configuration: square maps equal to the
        identity, zero biases, zero recurrent weights."""
        zeros = np.zeros((m, m))
        return cls(
            m,
            m,
            Tensor(zeros.copy(), requires_grad=True),
            Tensor(np.eye(m), requires_grad=True),
            Tensor(np.zeros(m), requires_grad=True),
            Tensor(np.eye(m), requires_grad=True),
            Tensor(np.zeros(m), requires_grad=True),
        )

    def parameters(self):
        return {
            "V": self.V,
            "w_in": self.w_in,
            "v_in": self.v_in,
            "w_out": self.w_out,
            "v_out": self.v_out,
        }

    def weight(self):
        """Effective recurrent matrix: the symmetric part of V, on tape."""
        return nd.symmetrize(self.V)

    def weight_values(self):
        return 0.5 * (self.V.data + self.V.data.T)

    def clamp_nonneg_diagonal(self):
        """Force self-connections >= 0 (used when probing the convergence
        guarantee; gradient training never calls this)."""
        d = np.arange(self.n)
        self.V.data[d, d] = np.maximum(self.V.data[d, d], 0.0)

    def copy(self):
        return AttractorNet(
            self.m,
            self.n,
            *(
                Tensor(p.data.copy(), requires_grad=True)
                for p in (self.V, self.w_in, self.v_in, self.w_out, self.v_out)
            ),
        )


# -- forward pieces -----------------------------------------------------------


def encode_input(x, config):
    """Map a bounded input to the cue domain for the given variant."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    if np.any(np.abs(x.data) > 1.0):
        bad = float(np.max(np.abs(x.data)))
        raise ValueError(
            f"attractor input components must satisfy |x_i| <= 1, got {bad}"
        )
    if config.variant == "standard":
        return x
    return nd.atanh(nd.affine_const(x, 1.0 - config.input_clip_eps))


def cue_from_encoded(net, xhat):
    """Affine projection of an already cue-domain input to the state space."""
    xhat = xhat if isinstance(xhat, Tensor) else Tensor(xhat)
    return nd.add(nd.matmul(xhat, net.w_in), net.v_in)


def compute_cue(net, x, config):
    return cue_from_encoded(net, encode_input(x, config))


def step(net, a_prev, cue, config, weight=None):
    """One synchronous update of the attractor state."""
    W = net.weight() if weight is None else weight
    if config.variant == "standard":
        return nd.tanh(nd.add(nd.matmul(a_prev, W), cue))
    return nd.add(nd.matmul(nd.tanh(a_prev), W), cue)


def readout(net, a, config):
    z = nd.add(nd.matmul(a, net.w_out), net.v_out)
    if config.variant == "standard":
        return nd.clamp(z, -1.0, 1.0)
    return nd.tanh(z)


def _readout_values(net, a_data, config):
    z = a_data @ net.w_out.data + net.v_out.data
    if config.variant == "standard":
        return np.clip(z, -1.0, 1.0)
    return np.tanh(z)


def run_dynamics(net, cue, config, track_per_example=False):
    """Iterate the dynamics from a zero state for a batch of cues.

    Returns ``(a_final, RunInfo)``. In ``fixed`` mode exactly
    ``config.iterations`` updates are applied and the run counts as
    converged by convention. In ``converge`` mode the loop stops at the
    first iteration k where no readout element differs from its value two
    iterations earlier by more than ``delta`` (two iterations apart, so a
    period-2 limit cycle also counts as converged), or at ``max_iter``.
    """
    single = cue.ndim == 1
    c = cue if not single else nd.reshape(cue, (1, cue.shape[0]))
    batch = c.shape[0]
    a = Tensor(np.zeros((batch, net.n)))
    W = net.weight()

    if config.run_mode == "fixed":
        for _ in range(config.iterations):
            a = step(net, a, c, config, weight=W)
        info = RunInfo(config.iterations, True)
        if track_per_example:
            info.per_example_iterations = np.full(batch, config.iterations)
            info.per_example_converged = np.ones(batch, dtype=bool)
        return (nd.reshape(a, (net.n,)) if single else a), info

    # two-slot readout history: after iteration k, holds [y_{k-1}, y_k]
    history = [None, _readout_values(net, a.data, config)]
    first_done = np.full(batch, -1)
    k = 0
    while k < config.max_iter:
        a = step(net, a, c, config, weight=W)
        k += 1
        y = _readout_values(net, a.data, config)
        if history[0] is not None:
            gap = np.max(np.abs(y - history[0]), axis=1)
            newly = (gap < config.delta) & (first_done < 0)
            first_done[newly] = k
        history = [history[1], y]
        if np.all(first_done >= 0):
            break

    done = first_done >= 0
    info = RunInfo(k, bool(np.all(done)))
    if track_per_example:
        iters = first_done.copy()
        iters[~done] = config.max_iter
        info.per_example_iterations = iters
        info.per_example_converged = done
    return (nd.reshape(a, (net.n,)) if single else a), info


def run(net, x, config, track_per_example=False):
    """Full pipeline on bounded input(s): cue, dynamics, readout.

    Returns ``(y, a_final, RunInfo)``.
    """
    cue = compute_cue(net, x, config)
    a, info = run_dynamics(net, cue, config, track_per_example)
    return readout(net, a, config), a, info


# -- losses and batches ---------------------------------------------------------


def make_denoising_batch(targets, sigma, seed=0):
    """Noisy-instance batch for denoising training.

    Each of the ``samples_per_target * n_targets`` inputs is the cue-domain
    image of a target state plus Gaussian noise; the matching row of the
    second array is the clean target. Rows are grouped by target.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    rng = np.random.default_rng(seed)
    kappa = targets.samples_per_target
    clean = np.repeat(targets.states, kappa, axis=0)
    noisy = np.arctanh(clean) + rng.normal(0.0, sigma, size=clean.shape)
    return noisy, clean


def denoising_loss(net, noisy_encoded, clean, config):
    """Normalized denoising loss over a batch.

    Per example: squared readout error divided by the squared error a
    plain copy of the (squashed) noisy input would make. 0 means perfect
    denoising; values at or above 1 mean the dynamics did not help.
    Examples whose normalizer is ~0 (noisy input equals the target) are
    skipped; the number skipped is returned alongside the loss.
    """
    noisy_encoded = (
        noisy_encoded
        if isinstance(noisy_encoded, Tensor)
        else Tensor(noisy_encoded)
    )
    clean_data = clean.data if isinstance(clean, Tensor) else np.asarray(clean)
    a, _ = run_dynamics(net, cue_from_encoded(net, noisy_encoded), config)
    y = readout(net, a, config)

    copy_err = np.sum(
        (np.tanh(noisy_encoded.data) - clean_data) ** 2, axis=1
    )
    keep = copy_err > DENOM_FLOOR
    n_kept = int(np.count_nonzero(keep))
    skipped = copy_err.shape[0] - n_kept
    if n_kept == 0:
        return Tensor(0.0), skipped

    weights = np.where(keep, 1.0 / np.maximum(copy_err, DENOM_FLOOR), 0.0)
    per_example = nd.sumsq(nd.sub(y, Tensor(clean_data)), axis=1)
    loss = nd.affine_const(
        nd.total(nd.mul(per_example, Tensor(weights))), 1.0 / n_kept
    )
    return loss, skipped


def noise_suppression(loss_value):
    """Percentage of noise variance removed: 100 * (1 - loss)."""
    return 100.0 * (1.0 - float(loss_value))


def ridge_penalty(net, ridge_lambda):
    """Weight-decay term on the effective recurrent matrix."""
    if ridge_lambda == 0.0:
        return Tensor(0.0)
    return nd.affine_const(nd.sumsq(net.weight()), ridge_lambda)


# -- sklearn-style facade -------------------------------------------------------


class AttractorDenoiser(BaseEstimator, TransformerMixin):
    """Trainable content-addressable memory with a transformer interface.

    ``fit(X)`` stores the rows of X (each strictly inside (-1, 1)) as
    attractors by minimizing the normalized denoising loss on noisy
    instances. ``transform(X)`` runs bounded vectors through the trained
    dynamics, pulling them toward the nearest stored state.
    """

    def __init__(
        self,
        n_hidden=100,
        samples_per_target=50,
        sigma=0.25,
        variant="shifted",
        run_mode="converge",
        iterations=15,
        delta=0.01,
        max_iter=50,
        epochs=150,
        batch_size=64,
        learning_rate=0.01,
        ridge_lambda=0.0,
        seed=0,
    ):
        self.n_hidden = n_hidden
        self.samples_per_target = samples_per_target
        self.sigma = sigma
        self.variant = variant
        self.run_mode = run_mode
        self.iterations = iterations
        self.delta = delta
        self.max_iter = max_iter
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.ridge_lambda = ridge_lambda
        self.seed = seed

    def _config(self):
        return AttractorConfig(
            variant=self.variant,
            run_mode=self.run_mode,
            iterations=self.iterations,
            delta=self.delta,
            max_iter=self.max_iter,
            sigma=self.sigma,
            ridge_lambda=self.ridge_lambda,
        )

    def fit(self, X, y=None):
        from .training import train_attractor_standalone

        X = check_array(X, name="X")
        targets = AttractorTargets(X, self.samples_per_target)
        config = self._config()
        net, suppression = train_attractor_standalone(
            targets,
            config,
            n_hidden=self.n_hidden,
            seed=check_seed(self.seed),
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
        )
        self.net_ = net
        self.config_ = config
        self.train_suppression_ = suppression
        return self

    def transform(self, X):
        check_fitted(self, "net_")
        X = check_array(X, name="X")
        with nd.no_grad():
            y, _, _ = run(self.net_, X, self.config_)
        return y.data

    def denoise_encoded(self, noisy_encoded):
        """Denoise inputs already living in the cue (unbounded) domain."""
        check_fitted(self, "net_")
        noisy_encoded = check_array(noisy_encoded, name="noisy_encoded")
        with nd.no_grad():
            cue = cue_from_encoded(self.net_, Tensor(noisy_encoded))
            a, _ = run_dynamics(self.net_, cue, self.config_)
            return readout(self.net_, a, self.config_).data

    def score(self, X, y=None, sigma=None, seed=None):
        """Noise suppression (percent) on fresh noisy instances of X."""
        check_fitted(self, "net_")
        X = check_array(X, name="X")
        targets = AttractorTargets(X, self.samples_per_target)
        test_seed = check_seed(self.seed) + 1 if seed is None else seed
        noisy, clean = make_denoising_batch(
            targets, self.sigma if sigma is None else sigma, seed=test_seed
        )
        with nd.no_grad():
            loss, _ = denoising_loss(self.net_, noisy, clean, self.config_)
        return noise_suppression(loss.data)
