"""Label-noise injection with a recorded ground-truth flip mask.

Two protocols:

* symmetric -- each label independently flips with probability tau to a
  uniformly chosen *different* class, so tau is the expected corruption rate.
* instance -- flip probability depends on the instance: a fixed random
  projection maps flattened instances to class scores, each instance's
  corruption score is the softmax mass of its best wrong class, and scores
  are rescaled so the dataset-average flip probability equals tau (clipped
  at 1). Flips go to the highest-scoring wrong class.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import TimeSeriesDataset

SYMMETRIC_PROTOCOL = "symmetric-uniform-other-v1"
INSTANCE_PROTOCOL = "instance-random-projection-v1"

NOISE_FILE = "noise.json"

KINDS = ("symmetric", "instance")


@dataclass
class NoiseSpec:
    kind: str  # "symmetric" | "instance"
    tau: float
    seed: int

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        _check_tau(self.tau)

    @property
    def protocol(self) -> str:
        return SYMMETRIC_PROTOCOL if self.kind == "symmetric" else INSTANCE_PROTOCOL


@dataclass
class FlipMask:
    flipped: np.ndarray  # (N,) bool, True where noisy != true

    @property
    def achieved_rate(self) -> float:
        return float(self.flipped.mean())


def _check_tau(tau: float) -> None:
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must be in [0, 1], got {tau}")


def _with_noisy_labels(dataset: TimeSeriesDataset, noisy: np.ndarray):
    new = TimeSeriesDataset(
        instances=dataset.instances,
        true_labels=dataset.true_labels,
        noisy_labels=noisy,
        ids=dataset.ids,
        meta=dataset.meta,
    )
    mask = FlipMask(flipped=noisy != dataset.true_labels)
    return new, mask


def inject_symmetric(dataset: TimeSeriesDataset, tau: float, seed: int):
    """Symmetric class-conditional noise; returns (noisy dataset, FlipMask)."""
    _check_tau(tau)
    n = dataset.n_instances
    n_classes = dataset.meta.n_classes
    rng = np.random.default_rng(seed)
    flip = rng.random(n) < tau
    offsets = rng.integers(1, n_classes, size=n)
    destinations = (dataset.true_labels + offsets) % n_classes
    noisy = np.where(flip, destinations, dataset.true_labels).astype(np.int64)
    return _with_noisy_labels(dataset, noisy)


def idn_flip_probabilities(dataset: TimeSeriesDataset, tau: float, seed: int):
    """Per-instance flip probabilities and destinations of the instance
    protocol: p_i = tau * m_i / mean(m), clipped at 1, where m_i is the
    softmax mass of the best wrong class under a fixed random projection.
    Depends only on (instances, true labels, seed)."""
    _check_tau(tau)
    n = dataset.n_instances
    n_classes = dataset.meta.n_classes
    rng = np.random.default_rng(seed)
    flat = dataset.instances.reshape(n, -1)
    projection = rng.standard_normal((flat.shape[1], n_classes)) / np.sqrt(flat.shape[1])
    scores = flat @ projection
    shifted = scores - scores.max(axis=1, keepdims=True)
    probs = np.exp(shifted)
    probs /= probs.sum(axis=1, keepdims=True)

    wrong = probs.copy()
    wrong[np.arange(n), dataset.true_labels] = -np.inf
    corruption = wrong.max(axis=1)
    destinations = wrong.argmax(axis=1)

    if tau == 0.0 or corruption.mean() == 0.0:
        p_flip = np.zeros(n)
    else:
        p_flip = np.clip(tau * corruption / corruption.mean(), 0.0, 1.0)
    return p_flip, destinations, rng


def inject_idn(dataset: TimeSeriesDataset, tau: float, seed: int):
    """Instance-dependent noise; returns (noisy dataset, FlipMask).

    Probabilities are clipped at 1, so the achieved average can fall short of
    tau for large tau -- callers should report the achieved rate.
    """
    p_flip, destinations, rng = idn_flip_probabilities(dataset, tau, seed)
    flip = rng.random(dataset.n_instances) < p_flip
    noisy = np.where(flip, destinations, dataset.true_labels).astype(np.int64)
    return _with_noisy_labels(dataset, noisy)


def inject(dataset: TimeSeriesDataset, spec: NoiseSpec):
    spec.validate()
    if spec.kind == "symmetric":
        return inject_symmetric(dataset, spec.tau, spec.seed)
    return inject_idn(dataset, spec.tau, spec.seed)


def write_noise_sidecar(directory, spec: NoiseSpec, mask: FlipMask) -> None:
    """Record the injection next to data.csv (kind, tau, seed, achieved rate)."""
    payload = {
        "kind": spec.kind,
        "tau": spec.tau,
        "seed": spec.seed,
        "achieved_rate": mask.achieved_rate,
        "protocol": spec.protocol,
    }
    with open(Path(directory) / NOISE_FILE, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
