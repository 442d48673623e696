"""Direct-clustering baselines over estimated driving forces.

Comparison points that skip the generative machinery entirely: each
object's estimated force samples are summarized by (mean, std) per channel,
the summaries are clustered directly (K-means or fuzzy c-means), and the
result is scored with an accuracy-maximizing cluster-to-class mapping.
Their role is to quantify how much the model-based profiling pipeline adds
over clustering the raw force estimates.
"""

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cluster import DEFAULT_FUZZIFIER, fuzzy_cmeans, kmeans_cluster
from .exceptions import ConfigError

DEFAULT_FORCE_CHANNELS = ("xy", "theta")


@dataclass(frozen=True)
class BaselineResult:
    """One baseline's hard classification of a population and its score."""

    method: str
    predicted_classes: tuple[int, ...]
    success_rate: float

    def __post_init__(self):
        if not 0.0 <= self.success_rate <= 1.0:
            raise ConfigError(
                f"success_rate must lie in [0, 1], got {self.success_rate}")


def _force_summaries(trajectories,
                     channels: Sequence[str]) -> np.ndarray:
    """Per-object (mean, std) of the valid force samples, channel by channel.

    An object with no valid samples in a channel contributes zeros there —
    the baselines promise no errors, and a flat summary is the least
    informative stand-in.
    """
    rows = []
    for traj in trajectories:
        row = []
        for name in channels:
            samples = np.asarray(traj.valid_force_samples(name), dtype=float)
            if samples.size:
                row.extend([float(samples.mean()), float(samples.std())])
            else:
                row.extend([0.0, 0.0])
        rows.append(row)
    return np.asarray(rows, dtype=float)


def _oracle_scoring(labels: np.ndarray,
                    true_classes: Sequence[int]) -> tuple[tuple[int, ...],
                                                          float]:
    """Map clusters to classes to maximize accuracy, then score.

    Each cluster independently takes the most common true class among its
    members (ties -> smallest class label), the unconstrained
    accuracy-maximizing assignment; the conventional oracle evaluation for
    unsupervised baselines.
    """
    truth = np.asarray(true_classes)
    mapping = {}
    for cluster in np.unique(labels):
        counts = Counter(truth[labels == cluster].tolist())
        top = max(counts.values())
        mapping[int(cluster)] = min(c for c, n in counts.items() if n == top)
    predicted = tuple(mapping[int(l)] for l in labels)
    success = float(np.mean([p == t for p, t in zip(predicted, truth)]))
    return predicted, success


def _validated_inputs(trajectories, true_classes, n_classes):
    if n_classes < 1:
        raise ConfigError(f"n_classes must be at least 1, got {n_classes}")
    if len(trajectories) != len(true_classes):
        raise ConfigError(
            f"{len(trajectories)} trajectories but {len(true_classes)} "
            "true classes")
    if not trajectories:
        raise ConfigError("no trajectories to cluster")


def kmeans_direct(trajectories, true_classes: Sequence[int], n_classes: int,
                  rng_seed: int,
                  channels: Sequence[str] = DEFAULT_FORCE_CHANNELS,
                  ) -> BaselineResult:
    """K-means on per-object force summaries with oracle class mapping."""
    _validated_inputs(trajectories, true_classes, n_classes)
    summaries = _force_summaries(trajectories, channels)
    result = kmeans_cluster(summaries, n_classes, rng_seed)
    predicted, success = _oracle_scoring(result.labels, true_classes)
    return BaselineResult(method="kmeans_direct",
                          predicted_classes=predicted,
                          success_rate=success)


def fcm_direct(trajectories, true_classes: Sequence[int], n_classes: int,
               fuzzifier: float = DEFAULT_FUZZIFIER, rng_seed: int = 0,
               channels: Sequence[str] = DEFAULT_FORCE_CHANNELS,
               ) -> BaselineResult:
    """Fuzzy c-means on force summaries; hard labels by max membership."""
    _validated_inputs(trajectories, true_classes, n_classes)
    summaries = _force_summaries(trajectories, channels)
    result = fuzzy_cmeans(summaries, n_classes, rng_seed,
                          fuzzifier=fuzzifier)
    predicted, success = _oracle_scoring(result.labels, true_classes)
    return BaselineResult(method="fcm_direct",
                          predicted_classes=predicted,
                          success_rate=success)
