"""Streaming class discovery over trajectory segments.

Objects arrive as fixed-length observation windows.  Each window is
filtered, profiled, and folded into the object's running profile (an
unweighted mean over segments).  The population of running profiles is then
re-clustered with a cluster-count penalty, clusters are matched back to the
known classes (new clusters found new classes, abandoned classes retire),
and each surviving class's hyper-parameters are refit from its members.
The class registry is a value: every ingest returns a new one, so batches
never share mutable state.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, NamedTuple, Sequence

import numpy as np
from scipy.special import digamma, gammaln

from .classify import (
    MIN_SLAB_TO_NOISE,
    ClassPosterior,
    classify_population,
)
from .cluster import kmeans_cluster
from .exceptions import ConfigError, InsufficientDataError, SkyProfilerError
from .filtering import filter_population, filter_trajectory
from .kinematics import SystemModel, build_system
from .mixture import extract_population_profiles, extract_profile
from .profiles import (
    CHANNELS,
    ChannelHyperParams,
    ChannelProfile,
    ClassHyperParams,
    DEFAULT_CONCENTRATION,
    MotionProfile,
    fit_class_hyper_params,
)

DEFAULT_SEGMENT_LENGTH = 80
DEFAULT_COUNT_WINDOW = 3
DEFAULT_VARIANCE_WEIGHT = 0.2
# Per-cluster penalty matched to the centered, variance-stabilized feature
# embedding (a raw-feature penalty in the tens collapses every candidate to
# one cluster on these scales).  Calibrated against the reference four-class
# population: small enough that a genuinely new class claims its own cluster
# within a few tens of arrivals, large enough that an established class does
# not split.  Populations with wider class gaps tolerate (and benefit from)
# a larger value.
DEFAULT_CLUSTER_PENALTY = 0.05
# Pulse evidence needed before a channel's pulse mean/variance estimates are
# trusted in the clustering embedding.  Deliberately stricter than the
# classifier's per-term gate: a cluster geometry built from a handful of
# pulses is noise, while the classifier can still extract likelihood signal
# from the same handful.
MIN_EMBED_PULSES = 24.0
# Centered features are winsorized at this many natural units so a single
# wild estimate cannot become its own distant island in feature space.
FEATURE_CLIP = 6.0
# Detection rates enter the embedding on the logit scale (the natural scale
# of a Beta-distributed rate: class gaps become symmetric and a mid-range
# class's sampling spread stops dwarfing them).  Empirical rates of exactly
# 0 or 1 are clamped this far inside the open interval first.
RATE_CLAMP = 5e-3
MIN_REFIT_MEMBERS = 3
_TINY_VAR = 1e-300


# ---------------------------------------------------------------------------
# running profiles

@dataclass(frozen=True)
class RunningProfile:
    """An object's profile averaged over every segment seen so far."""

    object_id: int
    segment_count: int
    mean_profile: MotionProfile
    last_segment_profile: MotionProfile


def _merge_channel(old: ChannelProfile, new: ChannelProfile,
                   count: int) -> ChannelProfile:
    """Fold one more segment into a channel's running average.

    Rates, pulse means, and pulse variances average; effective pulse counts
    accumulate (evidence adds up across segments); the noise floor averages.
    Diagnostics survive only if every segment carried them.
    """
    w_old = (count - 1) / count
    w_new = 1.0 / count
    if old.n_effective is None or new.n_effective is None:
        n_eff = None
    else:
        n_eff = old.n_effective + new.n_effective
    if old.noise_var is None or new.noise_var is None:
        noise = None
    else:
        noise = w_old * old.noise_var + w_new * new.noise_var
    return ChannelProfile(
        rate=w_old * old.rate + w_new * new.rate,
        mean=w_old * old.mean + w_new * new.mean,
        var=w_old * old.var + w_new * new.var,
        n_effective=n_eff,
        noise_var=noise,
    )


def update_running_profile(prev: RunningProfile | None,
                           segment_profile: MotionProfile) -> RunningProfile:
    """Advance an object's running profile by one segment.

    With no previous state the segment itself becomes the running mean;
    otherwise every channel parameter moves to the unweighted mean over all
    segments seen.
    """
    if prev is None:
        return RunningProfile(
            object_id=segment_profile.object_id,
            segment_count=1,
            mean_profile=segment_profile,
            last_segment_profile=segment_profile,
        )
    if segment_profile.object_id != prev.object_id:
        raise ConfigError(
            f"segment profile for object {segment_profile.object_id} cannot "
            f"update object {prev.object_id}")
    count = prev.segment_count + 1
    mean = MotionProfile(
        object_id=prev.object_id,
        xy=_merge_channel(prev.mean_profile.xy, segment_profile.xy, count),
        z=_merge_channel(prev.mean_profile.z, segment_profile.z, count),
        theta=_merge_channel(prev.mean_profile.theta, segment_profile.theta,
                             count),
    )
    return RunningProfile(
        object_id=prev.object_id,
        segment_count=count,
        mean_profile=mean,
        last_segment_profile=segment_profile,
    )


# ---------------------------------------------------------------------------
# feature embedding

@dataclass(frozen=True)
class FeatureScaler:
    """Per-dimension centering/scaling for profile feature vectors.

    ``neutral_center`` holds, per dimension, the raw-feature center of the
    profiles whose estimates were actually informative; profiles whose
    diagnostics flag a channel as noise-dominated or pulse-starved have that
    channel's dimensions replaced by the center before standardization, so
    unresolvable estimates sit harmlessly at the population middle instead of
    scattering cluster geometry.
    """

    channels: tuple[str, ...]
    mean: tuple[float, ...]
    scale: tuple[float, ...]
    neutral_center: tuple[float, ...]


def _logit_rate(rate: float) -> float:
    p = min(max(rate, RATE_CLAMP), 1.0 - RATE_CLAMP)
    return math.log(p / (1.0 - p))


def _raw_features(profile: MotionProfile,
                  channels: Sequence[str]) -> np.ndarray:
    """Raw embedding of one profile: per channel, the logit detection rate,
    the pulse mean as an effect size (mean over the observed pulse scale,
    noise floor included when known), and the log pulse variance.

    The effect size keeps every class's within-class spread comparable: the
    raw pulse-mean spread of a class scales with its pulse deviation, so a
    dispersed class would otherwise dominate Euclidean distances after
    standardization.
    """
    parts = []
    for name in channels:
        ch = profile.channel(name)
        noise = ch.noise_var if ch.noise_var is not None else 0.0
        scale = math.sqrt(max(ch.var + noise, _TINY_VAR))
        parts.extend([_logit_rate(ch.rate), ch.mean / scale,
                      math.log(max(ch.var, _TINY_VAR))])
    return np.array(parts)


def _informative_mask(profile: MotionProfile,
                      channels: Sequence[str]) -> np.ndarray:
    """Per-dimension flags: does this profile's estimate carry signal?

    When a channel's estimated pulse power sits under the measurement-noise
    floor its detections are noise triggers, so every dimension — the rate
    included — is censored.  When the channel clears the floor but few pulse
    samples back it, only the pulse mean and variance are censored: a rate
    is a count and stays meaningful at any sample size, while moment
    estimates from a handful of pulses are noise.  Profiles without
    diagnostics (e.g. drawn directly from a generative model) are always
    trusted.
    """
    flags = []
    for name in channels:
        ch = profile.channel(name)
        slab_ok = True
        if ch.noise_var is not None:
            slab_ok = (ch.mean ** 2 + ch.var
                       >= MIN_SLAB_TO_NOISE * ch.noise_var)
        count_ok = slab_ok
        if ch.n_effective is not None:
            count_ok = count_ok and ch.n_effective >= MIN_EMBED_PULSES
        flags.extend([slab_ok, count_ok, count_ok])
    return np.array(flags, dtype=bool)


def fit_feature_scaler(profiles: Sequence[MotionProfile],
                       channels: Sequence[str] = ("xy", "theta"),
                       ) -> FeatureScaler:
    """Fit centering statistics on a population of profiles.

    Features are (logit rate, pulse effect size, log pulse variance) per
    channel — transforms chosen to stabilize each dimension's within-class
    spread at order one, so the dimensions are commensurate by construction
    and are centered but deliberately NOT rescaled: dividing by the
    population standard deviation would shrink exactly the dimensions whose
    large spread is real between-class structure.  Each dimension's neutral
    center is the mean over profiles whose diagnostics mark the channel
    informative (falling back to the overall mean when none do); censored
    entries are moved there before the center is taken.
    """
    if not profiles:
        raise InsufficientDataError("no profiles to standardize")
    raw = np.stack([_raw_features(p, channels) for p in profiles])
    keep = np.stack([_informative_mask(p, channels) for p in profiles])
    center = raw.mean(axis=0)
    for d in range(raw.shape[1]):
        if keep[:, d].any():
            center[d] = raw[keep[:, d], d].mean()
    neutral = np.where(keep, raw, center)
    mean = neutral.mean(axis=0)
    scale = np.ones_like(mean)
    return FeatureScaler(channels=tuple(channels), mean=tuple(mean),
                         scale=tuple(scale), neutral_center=tuple(center))


def profile_feature_vector(profile: MotionProfile,
                           scaler: FeatureScaler) -> np.ndarray:
    """Standardized feature vector of one profile under a fitted scaler.

    Dimensions of channels the profile's own diagnostics flag as
    uninformative are first replaced by the scaler's neutral center; the
    standardized result is winsorized so one wild estimate cannot dominate
    any distance computation.
    """
    raw = _raw_features(profile, scaler.channels)
    keep = _informative_mask(profile, scaler.channels)
    raw = np.where(keep, raw, np.asarray(scaler.neutral_center))
    z = (raw - np.asarray(scaler.mean)) / np.asarray(scaler.scale)
    return np.clip(z, -FEATURE_CLIP, FEATURE_CLIP)


def _implied_feature_vector(hyper: ClassHyperParams,
                            scaler: FeatureScaler) -> np.ndarray:
    """Where a class's prior puts the average member in feature space.

    Expectations under the prior replace member statistics: logit rate via
    digamma differences, the effect size via the mean root precision (noise
    floor unknown here, so the pulse scale alone), log variance via the
    log-precision expectation.
    """
    parts = []
    for name in scaler.channels:
        ch = hyper.channel(name)
        mean_root_precision = math.exp(
            gammaln(ch.gamma_alpha + 0.5)
            - gammaln(ch.gamma_alpha)) / math.sqrt(ch.gamma_beta)
        parts.extend([
            float(digamma(ch.beta_a) - digamma(ch.beta_b)),
            ch.normal_mean * mean_root_precision,
            math.log(ch.gamma_beta) - digamma(ch.gamma_alpha),
        ])
    raw = np.array(parts)
    z = (raw - np.asarray(scaler.mean)) / np.asarray(scaler.scale)
    return np.clip(z, -FEATURE_CLIP, FEATURE_CLIP)


# ---------------------------------------------------------------------------
# penalized clustering

@dataclass(frozen=True, eq=False)
class ClusteringResult:
    """A chosen partition of the running profiles plus its score."""

    assignments: dict[int, int]
    labels: np.ndarray
    centroids: np.ndarray
    within_variance: float
    objective: float
    n_clusters: int
    candidate_objectives: dict[int, float]
    scaler: FeatureScaler


def _candidate_seed(rng_seed: int, n_clusters: int) -> int:
    return int(np.random.SeedSequence(
        [int(rng_seed), int(n_clusters)]).generate_state(1)[0])


def penalized_cluster(profiles: Sequence[RunningProfile], prev_count: int,
                      count_window: int = DEFAULT_COUNT_WINDOW,
                      variance_weight: float = DEFAULT_VARIANCE_WEIGHT,
                      cluster_penalty: float = DEFAULT_CLUSTER_PENALTY,
                      rng_seed: int = 0,
                      channels: Sequence[str] = ("xy", "theta"),
                      scaler: FeatureScaler | None = None,
                      ) -> ClusteringResult:
    """Re-cluster the population, choosing the cluster count that minimizes
    a penalized within-cluster variance.

    Every count within ``count_window`` of the previous count (clamped to at
    least 1, capped at the population size) is tried with seeded K-means;
    the normalized within-cluster variance is the K-means objective divided
    by (count x population size), and the score blends it with a linear
    per-cluster penalty: variance_weight * within + (1 - variance_weight) *
    cluster_penalty * count.  The candidate with the smallest score wins,
    lower counts breaking ties.
    """
    profiles = list(profiles)
    if not profiles:
        raise InsufficientDataError("no running profiles to cluster")
    if prev_count < 1 or count_window < 0:
        raise ConfigError("prev_count must be >= 1 and count_window >= 0")
    if not 0.0 <= variance_weight <= 1.0:
        raise ConfigError("variance_weight must lie in [0, 1]")
    mean_profiles = [p.mean_profile for p in profiles]
    if scaler is None:
        scaler = fit_feature_scaler(mean_profiles, channels)
    features = np.stack([profile_feature_vector(p, scaler)
                         for p in mean_profiles])
    n = len(profiles)
    low = max(1, prev_count - count_window)
    high = prev_count + count_window
    candidates = [k for k in range(low, high + 1) if k <= n]
    if not candidates:
        raise InsufficientDataError(
            f"{n} profiles cannot support any candidate in [{low}, {high}]")

    objectives: dict[int, float] = {}
    partitions: dict[int, tuple[np.ndarray, np.ndarray, float]] = {}
    for k in candidates:
        km = kmeans_cluster(features, k, rng_seed=_candidate_seed(rng_seed, k))
        within = km.inertia / (k * n)
        objectives[k] = (variance_weight * within
                         + (1.0 - variance_weight) * cluster_penalty * k)
        partitions[k] = (km.labels, km.centroids, within)

    best_k = min(candidates, key=lambda k: (objectives[k], k))
    labels, centroids, within = partitions[best_k]
    return ClusteringResult(
        assignments={p.object_id: int(lab)
                     for p, lab in zip(profiles, labels)},
        labels=labels,
        centroids=centroids,
        within_variance=within,
        objective=objectives[best_k],
        n_clusters=best_k,
        candidate_objectives=objectives,
        scaler=scaler,
    )


# ---------------------------------------------------------------------------
# class registry

@dataclass(frozen=True)
class RegistryClass:
    """One recognized class: its prior and its current members."""

    class_id: int
    hyper_params: ClassHyperParams
    member_object_ids: tuple[int, ...]


@dataclass(frozen=True)
class ClassRegistry:
    """The recognized classes at some point in the stream."""

    classes: tuple[RegistryClass, ...]
    feature_standardization: FeatureScaler | None = None

    def __post_init__(self):
        if not self.classes:
            raise ConfigError("a registry needs at least one class")
        seen: set[int] = set()
        for cls in self.classes:
            members = set(cls.member_object_ids)
            if seen & members:
                raise ConfigError(
                    "an object can belong to at most one class")
            seen |= members

    @property
    def current_count(self) -> int:
        return len(self.classes)

    @property
    def hyper_params(self) -> list[ClassHyperParams]:
        return [cls.hyper_params for cls in self.classes]

    def class_of(self, object_id: int) -> int | None:
        for cls in self.classes:
            if object_id in cls.member_object_ids:
                return cls.class_id
        return None


def match_and_refine(result: ClusteringResult,
                     registry: ClassRegistry | None,
                     running_profiles: Sequence[RunningProfile],
                     channels: Sequence[str] = ("xy", "theta"),
                     kappa: float = DEFAULT_CONCENTRATION,
                     min_members: int = MIN_REFIT_MEMBERS) -> ClassRegistry:
    """Turn a clustering into the next registry.

    Clusters pair with existing classes greedily by centroid distance in
    feature space (a class is located at the mean feature vector of its
    tracked members, or at its prior's implied center when none are
    tracked).  Leftover clusters found new classes with fresh ids; classes
    left without a cluster retire.  Matched classes refit their
    hyper-parameters from member profiles by moments, except that clusters
    below ``min_members`` keep the previous fit.
    """
    profile_by_id = {p.object_id: p for p in running_profiles}
    cluster_members: dict[int, list[int]] = {
        j: [] for j in range(result.n_clusters)}
    for object_id, label in sorted(result.assignments.items()):
        cluster_members[label].append(object_id)

    prev_classes = list(registry.classes) if registry is not None else []
    class_points = {}
    for cls in prev_classes:
        tracked = [profile_by_id[i].mean_profile
                   for i in cls.member_object_ids if i in profile_by_id]
        if tracked:
            class_points[cls.class_id] = np.mean(
                [profile_feature_vector(p, result.scaler) for p in tracked],
                axis=0)
        else:
            class_points[cls.class_id] = _implied_feature_vector(
                cls.hyper_params, result.scaler)

    pairs = sorted(
        (float(np.sum((result.centroids[j] - point) ** 2)), j, cls.class_id)
        for j in range(result.n_clusters)
        for cls in prev_classes
        for point in [class_points[cls.class_id]])
    matched_cluster: dict[int, RegistryClass] = {}
    used_classes: set[int] = set()
    by_id = {cls.class_id: cls for cls in prev_classes}
    for _, j, class_id in pairs:
        if j in matched_cluster or class_id in used_classes:
            continue
        matched_cluster[j] = by_id[class_id]
        used_classes.add(class_id)

    next_id = max((cls.class_id for cls in prev_classes), default=0) + 1
    new_classes = []
    for j in range(result.n_clusters):
        members = tuple(cluster_members[j])
        member_profiles = [profile_by_id[i].mean_profile for i in members]
        previous = matched_cluster.get(j)
        if previous is not None:
            class_id = previous.class_id
            if len(members) < min_members:
                hyper = previous.hyper_params
            else:
                hyper = fit_class_hyper_params(
                    member_profiles, class_id, channels=channels, kappa=kappa)
        else:
            class_id = next_id
            next_id += 1
            hyper = fit_class_hyper_params(
                member_profiles, class_id, channels=channels, kappa=kappa)
        new_classes.append(RegistryClass(
            class_id=class_id,
            hyper_params=hyper,
            member_object_ids=members,
        ))
    new_classes.sort(key=lambda cls: cls.class_id)
    return ClassRegistry(classes=tuple(new_classes),
                         feature_standardization=result.scaler)


# ---------------------------------------------------------------------------
# segment ingestion

@dataclass(frozen=True)
class SegmentBatch:
    """One streaming unit: equal-length observation windows per object."""

    segment_index: int
    segment_length: int
    observations: Mapping[int, tuple]

    def __post_init__(self):
        if self.segment_index < 1:
            raise ConfigError("segment_index starts at 1")
        if self.segment_length < 1:
            raise ConfigError("segment_length must be positive")
        for object_id, window in self.observations.items():
            if len(window) != self.segment_length:
                raise ConfigError(
                    f"object {object_id} window has {len(window)} points, "
                    f"expected {self.segment_length}")


def segment_batches(trajectories, segment_length: int = DEFAULT_SEGMENT_LENGTH,
                    object_ids: Sequence[int] | None = None):
    """Slice full trajectories into consecutive SegmentBatches.

    Every full window of ``segment_length`` observations becomes one
    segment; a trailing partial window is dropped.
    """
    if object_ids is None:
        object_ids = range(len(trajectories))
    streams = {int(i): tuple(t.observations)
               for i, t in zip(object_ids, trajectories)}
    n_segments = min((len(obs) // segment_length for obs in streams.values()),
                     default=0)
    batches = []
    for s in range(n_segments):
        window = {
            i: obs[s * segment_length:(s + 1) * segment_length]
            for i, obs in streams.items()
            if len(obs) >= (s + 1) * segment_length}
        batches.append(SegmentBatch(
            segment_index=s + 1,
            segment_length=segment_length,
            observations=window,
        ))
    return batches


@dataclass(frozen=True)
class ObjectError:
    """A per-object failure recorded while ingesting a batch."""

    object_id: int
    message: str


@dataclass(frozen=True)
class OnlineConfig:
    """Knobs of the streaming pipeline."""

    model: SystemModel = field(
        default_factory=lambda: build_system(1.0, 1.0, 1.0))
    channels: tuple[str, ...] = ("xy", "theta")
    mode_2d: bool = True
    prev_count_init: int = 4
    count_window: int = DEFAULT_COUNT_WINDOW
    variance_weight: float = DEFAULT_VARIANCE_WEIGHT
    cluster_penalty: float = DEFAULT_CLUSTER_PENALTY
    rng_seed: int = 0
    min_refit_members: int = MIN_REFIT_MEMBERS
    kappa: float = DEFAULT_CONCENTRATION


@dataclass(frozen=True, eq=False)
class IngestResult:
    """Everything one segment ingest produced."""

    registry: ClassRegistry | None
    running_profiles: dict[int, RunningProfile]
    posteriors: dict[int, ClassPosterior]
    errors: tuple[ObjectError, ...]


class _Window(NamedTuple):
    observations: tuple


def _filter_windows(windows: Mapping[int, tuple], model: SystemModel,
                    errors: list[ObjectError]) -> dict:
    """Filter each object's window, isolating per-object failures.

    The batched population path runs first (it is exact and much faster at
    full observation rates); if any window breaks it, objects fall back to
    individual passes so one bad stream cannot take down the batch.
    """
    ids = sorted(windows)
    try:
        estimates = filter_population(
            [_Window(tuple(windows[i])) for i in ids], model)
        return dict(zip(ids, estimates))
    except SkyProfilerError:
        pass
    out = {}
    for i in ids:
        try:
            out[i] = filter_trajectory(windows[i], model)
        except SkyProfilerError as exc:
            errors.append(ObjectError(i, str(exc)))
    return out


def _profile_estimates(estimates: Mapping[int, object], mode_2d: bool,
                       errors: list[ObjectError]) -> dict[int, MotionProfile]:
    ids = sorted(estimates)
    try:
        profiles = extract_population_profiles(
            [estimates[i] for i in ids], object_ids=ids, mode_2d=mode_2d)
        return dict(zip(ids, profiles))
    except SkyProfilerError:
        pass
    out = {}
    for i in ids:
        try:
            out[i] = extract_profile(estimates[i], mode_2d=mode_2d,
                                     object_id=i)
        except SkyProfilerError as exc:
            errors.append(ObjectError(i, str(exc)))
    return out


def ingest_segment(batch: SegmentBatch, registry: ClassRegistry | None,
                   config: OnlineConfig,
                   running_profiles: Mapping[int, RunningProfile]
                   | None = None) -> IngestResult:
    """Process one segment batch end to end.

    Each object's window is filtered and profiled, its running profile
    updated; the whole tracked population is then classified (against the
    incoming registry, or the freshly built one on the first segment),
    re-clustered with the count penalty, and matched/refined into the next
    registry.  Failures are per-object: a broken window is reported in the
    error list and skipped, never aborting the batch.  An empty batch
    returns everything unchanged.
    """
    tracked = dict(running_profiles or {})
    if not batch.observations:
        return IngestResult(registry=registry, running_profiles=tracked,
                            posteriors={}, errors=())

    errors: list[ObjectError] = []
    estimates = _filter_windows(batch.observations, config.model, errors)
    profiles = _profile_estimates(estimates, config.mode_2d, errors)
    for object_id, profile in sorted(profiles.items()):
        try:
            tracked[object_id] = update_running_profile(
                tracked.get(object_id), profile.with_object_id(object_id))
        except SkyProfilerError as exc:
            errors.append(ObjectError(object_id, str(exc)))

    if not tracked:
        return IngestResult(registry=registry, running_profiles=tracked,
                            posteriors={}, errors=tuple(errors))

    population = [tracked[i] for i in sorted(tracked)]
    prev_count = (registry.current_count if registry is not None
                  else config.prev_count_init)
    result = penalized_cluster(
        population, prev_count,
        count_window=config.count_window,
        variance_weight=config.variance_weight,
        cluster_penalty=config.cluster_penalty,
        rng_seed=_candidate_seed(config.rng_seed, batch.segment_index),
        channels=config.channels,
    )
    new_registry = match_and_refine(
        result, registry, population, channels=config.channels,
        kappa=config.kappa, min_members=config.min_refit_members)

    target = registry if registry is not None else new_registry
    posterior_list = classify_population(
        [p.mean_profile for p in population], target.hyper_params,
        channels=config.channels)
    posteriors = {p.object_id: post
                  for p, post in zip(population, posterior_list)}
    return IngestResult(registry=new_registry, running_profiles=tracked,
                        posteriors=posteriors, errors=tuple(errors))


# ---------------------------------------------------------------------------
# registry (de)serialization

def _channel_hyper_dict(hyper: ChannelHyperParams) -> dict:
    return {
        "beta_a": hyper.beta_a,
        "beta_b": hyper.beta_b,
        "gamma_alpha": hyper.gamma_alpha,
        "gamma_beta": hyper.gamma_beta,
        "normal_mean": hyper.normal_mean,
        "shrinkage": hyper.shrinkage,
    }


def registry_to_json(registry: ClassRegistry) -> str:
    """Serialize a registry to a JSON document.

    Floats are written as their shortest exact decimal form (at most 17
    significant digits), so loading the document reproduces every value
    bit for bit.
    """
    doc = {
        "classes": [
            {
                "class_id": cls.class_id,
                "member_count": len(cls.member_object_ids),
                "member_object_ids": list(cls.member_object_ids),
                "channels": {
                    name: _channel_hyper_dict(cls.hyper_params.channel(name))
                    for name in CHANNELS
                },
            }
            for cls in registry.classes
        ],
        "feature_standardization": None
        if registry.feature_standardization is None else {
            "channels": list(registry.feature_standardization.channels),
            "mean": list(registry.feature_standardization.mean),
            "scale": list(registry.feature_standardization.scale),
            "neutral_center": list(
                registry.feature_standardization.neutral_center),
        },
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def registry_from_json(text: str) -> ClassRegistry:
    """Rebuild a registry from its JSON document."""
    doc = json.loads(text)
    classes = []
    for entry in doc["classes"]:
        channels = {
            name: ChannelHyperParams(**entry["channels"][name])
            for name in CHANNELS
        }
        classes.append(RegistryClass(
            class_id=int(entry["class_id"]),
            hyper_params=ClassHyperParams(
                class_id=int(entry["class_id"]), **channels),
            member_object_ids=tuple(int(i)
                                    for i in entry["member_object_ids"]),
        ))
    scaler_doc = doc.get("feature_standardization")
    scaler = None if scaler_doc is None else FeatureScaler(
        channels=tuple(scaler_doc["channels"]),
        mean=tuple(float(v) for v in scaler_doc["mean"]),
        scale=tuple(float(v) for v in scaler_doc["scale"]),
        neutral_center=tuple(float(v)
                             for v in scaler_doc["neutral_center"]),
    )
    return ClassRegistry(classes=tuple(classes),
                         feature_standardization=scaler)


# ---------------------------------------------------------------------------
# hyper-parameter distance

def hyper_param_relative_error(true_hyper: ClassHyperParams,
                               fitted_hyper: ClassHyperParams,
                               channels: Sequence[str] = ("xy", "theta"),
                               ) -> float:
    """Relative squared distance between two classes' hyper-parameters.

    Both classes are flattened to (beta_a, beta_b, gamma_alpha, gamma_beta,
    normal_mean, shrinkage) per listed channel; the result is the squared
    norm of the difference over the squared norm of the reference.
    """
    def flatten(hyper):
        parts = []
        for name in channels:
            ch = hyper.channel(name)
            parts.extend([ch.beta_a, ch.beta_b, ch.gamma_alpha,
                          ch.gamma_beta, ch.normal_mean, ch.shrinkage])
        return np.array(parts)

    truth = flatten(true_hyper)
    fitted = flatten(fitted_hyper)
    return float(np.sum((truth - fitted) ** 2) / np.sum(truth ** 2))
