"""Denoising autoencoder: Gaussian corruption, reconstruction loss, and the
score-vector property that makes reconstruction displacement point toward
the training manifold."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import ndcore as nd
from .ndcore import Tensor
from .validation import check_array, check_fitted, check_seed


class Dae:
    """Single-hidden-layer autoencoder: tanh encoder, affine decoder.

    ``sigma`` is the corruption noise used for training; evaluation-time
    reconstruction applies no noise.
    """

    def __init__(self, w_enc, b_enc, w_dec, b_dec, sigma):
        if sigma < 0:
            raise ValueError("sigma must be >= 0")
        self.w_enc = w_enc
        self.b_enc = b_enc
        self.w_dec = w_dec
        self.b_dec = b_dec
        self.sigma = sigma

    @classmethod
    def init(cls, dim, bottleneck, sigma, seed=0):
        if bottleneck < 1:
            raise ValueError("bottleneck must be >= 1")
        rng = np.random.default_rng(seed)
        w_enc = rng.normal(0.0, 1.0 / np.sqrt(dim), size=(dim, bottleneck))
        w_dec = rng.normal(0.0, 1.0 / np.sqrt(bottleneck), size=(bottleneck, dim))
        return cls(
            Tensor(w_enc, requires_grad=True),
            Tensor(np.zeros(bottleneck), requires_grad=True),
            Tensor(w_dec, requires_grad=True),
            Tensor(np.zeros(dim), requires_grad=True),
            sigma,
        )

    @classmethod
    def from_arrays(cls, w_enc, b_enc, w_dec, b_dec, sigma):
        return cls(
            Tensor(np.asarray(w_enc, dtype=np.float64), requires_grad=True),
            Tensor(np.asarray(b_enc, dtype=np.float64), requires_grad=True),
            Tensor(np.asarray(w_dec, dtype=np.float64), requires_grad=True),
            Tensor(np.asarray(b_dec, dtype=np.float64), requires_grad=True),
            sigma,
        )

    @property
    def dim(self):
        return self.w_enc.shape[0]

    @property
    def bottleneck(self):
        return self.w_enc.shape[1]

    def parameters(self):
        return {
            "w_enc": self.w_enc,
            "b_enc": self.b_enc,
            "w_dec": self.w_dec,
            "b_dec": self.b_dec,
        }

    def reconstruct(self, x):
        """Noiseless reconstruction of a (batch, dim) input."""
        x = x if isinstance(x, Tensor) else Tensor(x)
        hidden = nd.tanh(nd.add(nd.matmul(x, self.w_enc), self.b_enc))
        return nd.add(nd.matmul(hidden, self.w_dec), self.b_dec)


def corrupt(x, sigma, seed=0):
    """Add elementwise Gaussian noise with standard deviation ``sigma``."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    x = np.asarray(x, dtype=np.float64)
    if sigma == 0:
        return x.copy()
    rng = np.random.default_rng(seed)
    return x + rng.normal(0.0, sigma, size=x.shape)


def rec_loss(dae, batch, noise=None, seed=0):
    """Mean over the batch of the squared reconstruction error of corrupted
    inputs against their clean originals.

    ``noise`` may be passed explicitly (same shape as the batch) to make
    the loss a deterministic function for gradient checking; otherwise it
    is drawn from ``seed`` at ``dae.sigma``.
    """
    clean = batch.data if isinstance(batch, Tensor) else np.asarray(batch)
    if clean.ndim != 2 or clean.shape[0] == 0:
        raise ValueError("batch must be a nonempty (n, dim) array")
    if noise is None:
        rng = np.random.default_rng(seed)
        noise = rng.normal(0.0, dae.sigma, size=clean.shape)
    corrupted = (
        nd.add(batch, Tensor(noise))
        if isinstance(batch, Tensor)
        else Tensor(clean + noise)
    )
    recon = dae.reconstruct(corrupted)
    target = batch if isinstance(batch, Tensor) else Tensor(clean)
    per_example = nd.sumsq(nd.sub(recon, target), axis=1)
    return nd.affine_const(nd.total(per_example), 1.0 / clean.shape[0])


def score_estimate(dae, x):
    """(reconstruction - x) / sigma^2, the displacement field that tracks
    the gradient of the log-density of the training data at small sigma.
    No corruption is applied."""
    if dae.sigma <= 0:
        raise ValueError("score_estimate requires sigma > 0")
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    with nd.no_grad():
        recon = dae.reconstruct(x.reshape(1, -1) if single else x).data
    out = (recon - (x.reshape(1, -1) if single else x)) / dae.sigma**2
    return out[0] if single else out


def reconstruction_ratio(dae, clean_batch, shifted_batch):
    """Total noiseless reconstruction error of ``shifted_batch`` divided by
    that of ``clean_batch``. Values well above 1 flag off-manifold inputs."""
    clean = check_array(clean_batch, name="clean_batch")
    shifted = check_array(shifted_batch, name="shifted_batch")
    with nd.no_grad():
        err_clean = np.sum((dae.reconstruct(clean).data - clean) ** 2)
        err_shifted = np.sum((dae.reconstruct(shifted).data - shifted) ** 2)
    if err_clean == 0:
        raise ZeroDivisionError("clean batch has zero reconstruction error")
    return float(err_shifted / err_clean)


class DenoisingAutoencoder(BaseEstimator, TransformerMixin):
    """Estimator facade: fit on clean samples, transform reconstructs.

    ``decoder_refit`` (a copy count, 0 to disable) finishes training by
    solving the decoder exactly: with the encoder frozen, the
    reconstruction objective is linear least squares in the decoder, so
    the affine decoder is resolved in closed form against that many fresh
    corrupted copies of the data. This removes optimizer jitter from the
    reconstruction displacement, which matters when the displacement of
    interest is of order sigma^2.
    """

    def __init__(
        self,
        bottleneck=8,
        sigma=0.1,
        epochs=200,
        batch_size=64,
        learning_rate=0.005,
        decoder_refit=0,
        seed=0,
    ):
        self.bottleneck = bottleneck
        self.sigma = sigma
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.decoder_refit = decoder_refit
        self.seed = seed

    def fit(self, X, y=None):
        from .training import Adam

        X = check_array(X, name="X")
        seed = check_seed(self.seed)
        dae = Dae.init(X.shape[1], self.bottleneck, self.sigma, seed=seed)
        adam = Adam(dae.parameters(), self.learning_rate)
        rng = np.random.default_rng(seed + 1)
        n = X.shape[0]
        batch = min(self.batch_size, n)
        for _ in range(self.epochs):
            order = rng.permutation(n)
            for start in range(0, n, batch):
                idx = order[start : start + batch]
                noise = rng.normal(0.0, self.sigma, size=(len(idx), X.shape[1]))
                adam.zero_grad()
                loss = rec_loss(dae, X[idx], noise=noise)
                loss.backward()
                adam.step()
        if self.decoder_refit:
            clean = np.tile(X, (int(self.decoder_refit), 1))
            noisy = clean + rng.normal(0.0, self.sigma, size=clean.shape)
            hidden = np.tanh(noisy @ dae.w_enc.data + dae.b_enc.data)
            design = np.column_stack([hidden, np.ones(len(hidden))])
            solution, *_ = np.linalg.lstsq(design, clean, rcond=None)
            dae.w_dec.data[...] = solution[:-1]
            dae.b_dec.data[...] = solution[-1]
        self.dae_ = dae
        return self

    def transform(self, X):
        check_fitted(self, "dae_")
        X = check_array(X, name="X")
        with nd.no_grad():
            return self.dae_.reconstruct(X).data

    def score_vectors(self, X):
        check_fitted(self, "dae_")
        return score_estimate(self.dae_, check_array(X, name="X"))

    def score(self, X, y=None):
        """Negative mean noiseless reconstruction error (higher is better)."""
        check_fitted(self, "dae_")
        X = check_array(X, name="X")
        with nd.no_grad():
            err = np.mean(np.sum((self.dae_.reconstruct(X).data - X) ** 2, axis=1))
        return -float(err)
