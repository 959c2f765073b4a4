"""Numpy MLP autoencoder used to learn the behavior space online.

The encoder maps a flattened raster to a ``latent_dim`` vector through SELU
hidden layers and a linear output; the decoder mirrors it and ends with a
ReLU so reconstructed pixels are never negative.
"""
from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from numba import njit

from .core import EvaluatedPolicy

SELU_ALPHA = 1.6732632423543772
SELU_SCALE = 1.0507009873554805

CKPT_MAGIC = b"STAXAE1\n"


def selu(x: np.ndarray) -> np.ndarray:
    return SELU_SCALE * np.where(x > 0, x, SELU_ALPHA * np.expm1(np.minimum(x, 0)))


def selu_grad(x: np.ndarray) -> np.ndarray:
    return SELU_SCALE * np.where(x > 0, 1.0, SELU_ALPHA * np.exp(np.minimum(x, 0)))


@dataclass
class TrainingSchedule:
    """Train every ``interval`` exploration steps; the interval grows by one after each training."""

    interval: int = 1
    counter: int = 0

    def tick(self) -> bool:
        self.counter += 1
        if self.counter == self.interval:
            self.counter = 0
            self.interval += 1
            return True
        return False


class MlpAutoencoder:
    """Fully connected autoencoder trained with Adam.

    Parameters live in ``self.weights`` / ``self.biases``: encoder layers first,
    then decoder layers. ``W[i]`` has shape (fan_in, fan_out).
    """

    def __init__(self, input_dim: int, hidden: Sequence[int] = (256, 64), latent_dim: int = 10,
                 lr: float = 1e-3, betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
                 rng: Optional[np.random.Generator] = None, dtype=np.float64):
        self.input_dim = int(input_dim)
        self.latent_dim = int(latent_dim)
        self.hidden = tuple(int(h) for h in hidden)
        self.encoder_sizes = [self.input_dim, *self.hidden, self.latent_dim]
        self.decoder_sizes = self.encoder_sizes[::-1]
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.dtype = np.dtype(dtype)
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.n_encoder = len(self.encoder_sizes) - 1
        self.reset_parameters()

    # -- parameters -------------------------------------------------------
    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        enc = list(zip(self.encoder_sizes[:-1], self.encoder_sizes[1:]))
        dec = list(zip(self.decoder_sizes[:-1], self.decoder_sizes[1:]))
        return enc + dec

    def reset_parameters(self) -> None:
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases; clears optimizer state.

        All parameters are views into one flat buffer (weights first, then biases)
        so the optimizer can update them in a single pass.
        """
        shapes = self.layer_shapes
        sizes = [a * b for a, b in shapes] + [b for _, b in shapes]
        self._flat = np.empty(sum(sizes), dtype=self.dtype)
        self.weights, self.biases = [], []
        pos = 0
        for fan_in, fan_out in shapes:
            self.weights.append(self._flat[pos:pos + fan_in * fan_out].reshape(fan_in, fan_out))
            pos += fan_in * fan_out
        for _, fan_out in shapes:
            self.biases.append(self._flat[pos:pos + fan_out])
            pos += fan_out
        for (fan_in, fan_out), w, b in zip(shapes, self.weights, self.biases):
            bound = 1.0 / math.sqrt(fan_in)
            w[...] = self.rng.uniform(-bound, bound, (fan_in, fan_out))
            b[...] = self.rng.uniform(-bound, bound, fan_out)
        self.reset_optimizer()

    def reset_optimizer(self) -> None:
        self.step_count = 0
        self._m = np.zeros(self._flat.size, dtype=np.float64)
        self._v = np.zeros(self._flat.size, dtype=np.float64)

    def parameters(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def flat_parameters(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.parameters()]).astype(np.float64)

    def set_flat_parameters(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        n = sum(p.size for p in self.parameters())
        if flat.size != n:
            raise ValueError(f"expected {n} parameters, got {flat.size}")
        pos = 0
        for p in self.parameters():
            p[...] = flat[pos:pos + p.size].reshape(p.shape)
            pos += p.size

    def parameter_hash(self) -> str:
        return hashlib.sha256(self.flat_parameters().tobytes()).hexdigest()

    # -- forward ----------------------------------------------------------
    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        if x.shape[-1] != self.input_dim:
            raise ValueError(f"input dimension {x.shape[-1]} != {self.input_dim}")
        return x

    def encode(self, x: np.ndarray) -> np.ndarray:
        h = self._check_input(x)
        for i in range(self.n_encoder):
            h = h @ self.weights[i] + self.biases[i]
            if i < self.n_encoder - 1:
                h = selu(h)
        return h

    def decode(self, z: np.ndarray) -> np.ndarray:
        h = np.asarray(z, dtype=self.dtype)
        n = len(self.weights)
        for i in range(self.n_encoder, n):
            h = h @ self.weights[i] + self.biases[i]
            h = np.maximum(h, 0) if i == n - 1 else selu(h)
        return h

    def reconstruct(self, x: np.ndarray) -> np.ndarray:
        return self.decode(self.encode(x))

    def _forward_cache(self, x: np.ndarray):
        """Pre-activations and activations of every layer."""
        acts, pres = [x], []
        h = x
        n = len(self.weights)
        for i in range(n):
            z = h @ self.weights[i] + self.biases[i]
            pres.append(z)
            if i == self.n_encoder - 1:
                h = z
            elif i == n - 1:
                h = np.maximum(z, 0)
            else:
                h = selu(z)
            acts.append(h)
        return pres, acts

    def loss(self, x: np.ndarray) -> float:
        x = self._check_input(x)
        r = self.reconstruct(x)
        return float(np.mean((r - x) ** 2))

    def backward(self, x: np.ndarray) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
        """Loss and exact gradients of the mean squared reconstruction error.

        Returns ``(loss, grad_weights, grad_biases)``. ReLU uses subgradient 0 at 0.
        """
        x = self._check_input(x)
        if x.shape[0] == 0:
            raise ValueError("empty batch")
        pres, acts = self._forward_cache(x)
        n = len(self.weights)
        out = acts[-1]
        resid = out - x
        loss = float(np.mean(resid ** 2))
        delta = (2.0 / resid.size) * resid
        gw: list[np.ndarray] = [None] * n  # type: ignore[list-item]
        gb: list[np.ndarray] = [None] * n  # type: ignore[list-item]
        for i in range(n - 1, -1, -1):
            z = pres[i]
            if i == n - 1:
                delta = delta * (z > 0)
            elif i != self.n_encoder - 1:
                delta = delta * selu_grad(z)
            gw[i] = acts[i].T @ delta
            gb[i] = delta.sum(axis=0)
            if i > 0:
                delta = delta @ self.weights[i].T
        return loss, gw, gb

    def adam_step(self, grads: Sequence[np.ndarray] | np.ndarray) -> None:
        """One bias-corrected Adam update from per-block gradients (or a flat gradient)."""
        if isinstance(grads, np.ndarray):
            flat = grads.ravel()
        else:
            flat = np.concatenate([np.ravel(g) for g in grads])
        if flat.size != self._flat.size:
            raise ValueError(f"expected {self._flat.size} gradient entries, got {flat.size}")
        self.step_count += 1
        b1, b2 = self.betas
        _adam_update(self._flat, flat, self._m, self._v, self.lr, b1, b2,
                     1.0 - b1 ** self.step_count, 1.0 - b2 ** self.step_count, self.eps)


@njit(cache=True, error_model="numpy", fastmath=True)
def _adam_update(p, g, m, v, lr, b1, b2, c1, c2, eps):
    for i in range(p.size):
        gi = g[i]
        m[i] = b1 * m[i] + (1.0 - b1) * gi
        v[i] = b2 * v[i] + (1.0 - b2) * gi * gi
        p[i] -= lr * (m[i] / c1) / (np.sqrt(v[i] / c2) + eps)


# -- descriptors and surprise ---------------------------------------------

def _flat_obs(observations: np.ndarray) -> np.ndarray:
    obs = np.asarray(observations)
    flat = obs.reshape(obs.shape[0], -1)
    if flat.dtype == np.uint8:
        return flat.astype(np.float64) / 255.0
    return flat.astype(np.float64)


def encode(ae: MlpAutoencoder, raster: np.ndarray) -> np.ndarray:
    x = np.asarray(raster, dtype=np.float64).ravel()
    return ae.encode(x[None, :])[0].astype(np.float64)


def descriptor_from_trajectory(ae: MlpAutoencoder, observations: np.ndarray, k_samples: int) -> np.ndarray:
    """Concatenated latent codes of the sampled observations, in trajectory order."""
    if len(observations) != k_samples:
        raise ValueError(f"expected {k_samples} observations, got {len(observations)}")
    return ae.encode(_flat_obs(observations)).astype(np.float64).ravel()


def surprise(ae: MlpAutoencoder, observations: np.ndarray) -> float:
    """Summed squared reconstruction error over the sampled observations."""
    x = _flat_obs(observations)
    r = ae.reconstruct(x).astype(np.float64)
    return float(np.sum((x - r) ** 2))


def encode_policies(ae: MlpAutoencoder, policies: Sequence[EvaluatedPolicy],
                    with_surprise: bool = True) -> None:
    """Batch-compute learned descriptors (and surprise) for ``policies`` in place."""
    if not policies:
        return
    k = policies[0].observations.shape[0]
    x = np.concatenate([_flat_obs(p.observations) for p in policies])
    z = ae.encode(x)
    r = ae.decode(z) if with_surprise else None
    z = z.astype(np.float64).reshape(len(policies), -1)
    for i, p in enumerate(policies):
        p.learned_bd = z[i].copy()
        if r is not None:
            block = slice(i * k, (i + 1) * k)
            p.surprise = float(np.sum((x[block] - r[block].astype(np.float64)) ** 2))


# -- dataset and training --------------------------------------------------

@dataclass
class Dataset:
    train: np.ndarray
    validation: np.ndarray

    def __len__(self) -> int:
        return self.train.shape[0] + self.validation.shape[0]


def assemble_dataset(sources: Iterable[Iterable[EvaluatedPolicy]], rng: np.random.Generator,
                     train_fraction: float = 0.9) -> Dataset:
    """Union (by policy id) of every sampled observation, shuffled and split."""
    seen: set[int] = set()
    blocks = []
    for source in sources:
        for p in source:
            if p.id in seen or p.observations is None:
                continue
            seen.add(p.id)
            blocks.append(p.observations.reshape(p.observations.shape[0], -1))
    if not blocks:
        raise ValueError("no observations to build a dataset from")
    data = np.concatenate(blocks)
    data = data[rng.permutation(data.shape[0])]
    n = data.shape[0]
    n_val = int(round(n * (1.0 - train_fraction)))
    if n >= 2:
        n_val = min(max(n_val, 1), n - 1)
    else:
        n_val = 0
    return Dataset(train=data[n_val:], validation=data[:n_val])


@dataclass
class TrainingReport:
    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    epochs_run: int = 0
    stop_reason: str = "max_epochs"
    initial_train_loss: float = float("nan")


def early_stop_epoch(val_losses: Sequence[float], patience: int = 3) -> Optional[int]:
    """1-based epoch at which ``patience`` consecutive increases have been seen."""
    run = 0
    for i in range(1, len(val_losses)):
        run = run + 1 if val_losses[i] > val_losses[i - 1] else 0
        if run >= patience:
            return i + 1
    return None


def _as_float(batch: np.ndarray, dtype) -> np.ndarray:
    if batch.dtype == np.uint8:
        return batch.astype(dtype) / dtype.type(255.0)
    return batch.astype(dtype)


def _dataset_loss(ae: MlpAutoencoder, data: np.ndarray, batch_size: int) -> float:
    total = 0.0
    for s in range(0, data.shape[0], batch_size):
        x = _as_float(data[s:s + batch_size], ae.dtype)
        total += float(np.sum((ae.reconstruct(x) - x) ** 2, dtype=np.float64))
    return total / data.size


def train_episode(ae: MlpAutoencoder, dataset: Dataset, max_epochs: int = 50, batch_size: int = 64,
                  rng: Optional[np.random.Generator] = None, patience: int = 3) -> TrainingReport:
    """Adam on the train split until validation loss rises ``patience`` epochs in a row."""
    if dataset.train.shape[0] == 0:
        raise ValueError("empty training split")
    rng = rng if rng is not None else ae.rng
    report = TrainingReport()
    report.initial_train_loss = _dataset_loss(ae, dataset.train, batch_size)
    rising = 0
    n = dataset.train.shape[0]
    for epoch in range(max_epochs):
        order = rng.permutation(n)
        total = 0.0
        for s in range(0, n, batch_size):
            x = _as_float(dataset.train[order[s:s + batch_size]], ae.dtype)
            loss, gw, gb = ae.backward(x)
            ae.adam_step([*gw, *gb])
            total += loss * x.size
        report.epochs_run = epoch + 1
        # mean over the epoch's minibatches, measured before each update
        report.train_losses.append(total / dataset.train.size)
        if dataset.validation.shape[0] == 0:
            continue
        report.val_losses.append(_dataset_loss(ae, dataset.validation, batch_size))
        if len(report.val_losses) > 1 and report.val_losses[-1] > report.val_losses[-2]:
            rising += 1
        else:
            rising = 0
        if rising >= patience:
            report.stop_reason = "early_stop"
            break
    return report


def refresh_descriptors(ae: MlpAutoencoder, containers: Iterable[Iterable[EvaluatedPolicy]],
                        with_surprise: bool = True) -> int:
    """Re-encode every stored policy; returns the number of container entries visited.

    Novelty values are reset to NaN: they depend on the reference set and are
    recomputed when next needed.
    """
    count = 0
    unique: dict[int, EvaluatedPolicy] = {}
    for c in containers:
        for p in c:
            count += 1
            if p.observations is not None:
                unique[p.id] = p
    todo = list(unique.values())
    for s in range(0, len(todo), 512):
        encode_policies(ae, todo[s:s + 512], with_surprise=with_surprise)
    for p in todo:
        p.novelty = float("nan")
    return count


# -- checkpoint ---------------------------------------------------------------

def save_checkpoint(path: Path | str, ae: MlpAutoencoder, schedule: Optional[TrainingSchedule] = None) -> None:
    header = {
        "encoder_sizes": ae.encoder_sizes,
        "decoder_sizes": ae.decoder_sizes,
        "hidden_activation": "selu",
        "latent_activation": "linear",
        "output_activation": "relu",
        "step_count": ae.step_count,
        "TI": schedule.interval if schedule else None,
        "TI_C": schedule.counter if schedule else None,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    flat = ae.flat_parameters().astype("<f8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(flat.tobytes())


def load_checkpoint(path: Path | str, ae: MlpAutoencoder) -> dict:
    """Load parameters into ``ae``; rejects files whose layer sizes differ."""
    with open(path, "rb") as fh:
        if fh.read(len(CKPT_MAGIC)) != CKPT_MAGIC:
            raise ValueError("not an autoencoder checkpoint")
        (n,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(n))
        if header["encoder_sizes"] != ae.encoder_sizes or header["decoder_sizes"] != ae.decoder_sizes:
            raise ValueError(f"layer sizes {header['encoder_sizes']} do not match {ae.encoder_sizes}")
        flat = np.frombuffer(fh.read(), dtype="<f8")
    ae.set_flat_parameters(flat)
    ae.step_count = int(header["step_count"])
    return header
