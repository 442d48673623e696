"""Reproducible experiment harness.

Each experiment is a named, seeded recipe that simulates a population,
runs the estimation / classification / learning stack on it, and writes
two kinds of artifacts into an output directory:

- ``results.json``: the resolved configuration, a metrics document, the
  seed, and the package version (stable key order, exact floats);
- one CSV per experiment with the curve or table behind the figure.

Re-running an experiment with the same configuration produces
byte-identical outputs; every random draw derives from the config seed.
"""

from __future__ import annotations

import dataclasses
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .baselines import fcm_direct, kmeans_direct
from .classify import classify_population
from .exceptions import ConfigError
from .filtering import filter_population, predict_ahead
from .kinematics import build_system
from .mixture import extract_population_profiles
from .online import (
    DEFAULT_COUNT_WINDOW,
    DEFAULT_VARIANCE_WEIGHT,
    ClassRegistry,
    OnlineConfig,
    SegmentBatch,
    ingest_segment,
    segment_batches,
)
from .profiles import (
    ClassHyperParams,
    default_class_set,
    extended_class_set,
    novel_class,
)
from .serialize import format_float, results_json_text, write_text
from .simulate import generate_population

EXPERIMENT_NAMES = ("table2", "table3", "fig8", "fig9", "fig10", "fig11")

EXPERIMENT_SUMMARIES = {
    "table2": "confusion matrix of the generative classifier on a "
              "simulated population with known class parameters",
    "table3": "classification success rate versus feature-clustering "
              "baselines on the same population",
    "fig8": "open-loop prediction error versus horizon across "
            "observation availability rates",
    "fig9": "classification success rate versus measurement noise level",
    "fig10": "hyper-parameter recovery error versus number of ingested "
             "segments for two segment lengths",
    "fig11": "probability of discovering an unseen class versus the "
             "number of its objects that have arrived",
}

EXPERIMENT_CSVS = {
    "table2": "table2_confusion.csv",
    "table3": "table3_csr.csv",
    "fig8": "fig8_prediction.csv",
    "fig9": "fig9_snr.csv",
    "fig10": "fig10_hyper_mse.csv",
    "fig11": "fig11_detection.csv",
}

CLASS_TABLES = ("table1", "extended")

ACTIVE_CHANNELS = ("xy", "theta")

# Independent populations (trials, sweep points) are separated by this
# seed stride; per-object seeds are seed + object_id, so the stride just
# has to exceed any population size in use.
TRIAL_SEED_STRIDE = 10_000

FIG8_HORIZON = 10
FIG9_NOISE_SCALES = (0.1, 0.5, 1.0, 2.0, 5.0, 10.0)
FIG10_N_SEGMENTS = 10
FIG10_SHORT_SEGMENT = 20
FIG11_BASE_SEGMENTS = 3
FIG11_ARRIVAL_BATCH = 4
FIG11_MAX_NOVEL = 64

# Per-experiment defaults applied on top of the common ones below.
_PER_CLASS_COUNT = {name: 100 for name in EXPERIMENT_NAMES}
_PER_CLASS_COUNT["fig8"] = 34
_EXPERIMENT_DEFAULTS = {
    "table2": {},
    "table3": {},
    "fig8": {"n_trials": 1},
    "fig9": {"n_trials": 1},
    "fig10": {"n_trials": 10},
    "fig11": {"class_table": "extended", "initial_count": 4,
              "cluster_penalty": 0.05, "n_trials": 100},
}
_COMMON_DEFAULTS = {
    "class_table": "table1",
    "length": 100,
    "dt": 1.0,
    "observation_rate": 1.0,
    "process_scale": 1.0,
    "measurement_scale": 1.0,
    "segment_length": 80,
    "initial_count": 3,
    "count_window": DEFAULT_COUNT_WINDOW,
    "variance_weight": DEFAULT_VARIANCE_WEIGHT,
    "cluster_penalty": 0.1,
    "n_trials": 5,
    "out_dir": None,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved experiment parameters (defaults already applied)."""

    experiment: str
    seed: int
    class_table: str
    counts: tuple
    length: int
    dt: float
    observation_rate: float
    process_scale: float
    measurement_scale: float
    segment_length: int
    initial_count: int
    count_window: int
    variance_weight: float
    cluster_penalty: float
    n_trials: int
    out_dir: str | None = None


def _class_set(name):
    return {"table1": default_class_set,
            "extended": extended_class_set}[name]()


def _is_int(value):
    return isinstance(value, int) and not isinstance(value, bool)


def _as_float(value):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        return None
    return float(value)


def config_from_dict(doc, seed_override=None):
    """Validate a raw configuration mapping and resolve every default.

    All problems are collected and reported together in one ConfigError
    whose message names each offending field. ``seed_override`` replaces
    (or supplies) the seed, mirroring the command-line flag.
    """
    problems = []
    if not isinstance(doc, Mapping):
        raise ConfigError("invalid configuration:\n"
                          "  - the configuration must be a JSON object")

    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    for key in sorted(set(doc) - known):
        problems.append(f"unknown field {key!r}")

    experiment = doc.get("experiment")
    if experiment not in EXPERIMENT_NAMES:
        problems.append(
            f"experiment must be one of {', '.join(EXPERIMENT_NAMES)} "
            f"(got {experiment!r})")
        raise ConfigError(_report(problems))

    resolved = dict(_COMMON_DEFAULTS)
    resolved.update(_EXPERIMENT_DEFAULTS[experiment])
    for key in known:
        if key in doc and doc[key] is not None:
            resolved[key] = doc[key]
    resolved["experiment"] = experiment

    seed = seed_override if seed_override is not None else doc.get("seed")
    if seed is None:
        problems.append("seed is required")
    elif not _is_int(seed):
        problems.append(f"seed must be an integer (got {seed!r})")
    resolved["seed"] = seed

    if resolved["class_table"] not in CLASS_TABLES:
        problems.append(
            f"class_table must be one of {', '.join(CLASS_TABLES)} "
            f"(got {resolved['class_table']!r})")
        raise ConfigError(_report(problems))
    n_classes = len(_class_set(resolved["class_table"]))

    counts = resolved.get("counts")
    if counts is None:
        counts = (_PER_CLASS_COUNT[experiment],) * n_classes
    if (not isinstance(counts, Sequence) or isinstance(counts, str)
            or not all(_is_int(c) and c > 0 for c in counts)):
        problems.append("counts must be a list of positive integers")
    elif len(counts) != n_classes:
        problems.append(
            f"counts must list one entry per class "
            f"({n_classes} for {resolved['class_table']!r}, "
            f"got {len(counts)})")
    else:
        resolved["counts"] = tuple(int(c) for c in counts)

    for key, minimum in (("length", 3), ("segment_length", 3),
                         ("initial_count", 1), ("count_window", 0),
                         ("n_trials", 1)):
        value = resolved[key]
        if not _is_int(value) or value < minimum:
            problems.append(f"{key} must be an integer >= {minimum} "
                            f"(got {value!r})")

    for key in ("dt", "process_scale", "measurement_scale",
                "cluster_penalty"):
        value = _as_float(resolved[key])
        if value is None or not np.isfinite(value) or value <= 0:
            problems.append(f"{key} must be a positive number "
                            f"(got {resolved[key]!r})")
        else:
            resolved[key] = value

    rate = _as_float(resolved["observation_rate"])
    if rate is None or not 0.0 < rate <= 1.0:
        problems.append("observation_rate must lie in (0, 1] "
                        f"(got {resolved['observation_rate']!r})")
    else:
        resolved["observation_rate"] = rate

    weight = _as_float(resolved["variance_weight"])
    if weight is None or not 0.0 < weight < 1.0:
        problems.append("variance_weight must lie in (0, 1) "
                        f"(got {resolved['variance_weight']!r})")
    else:
        resolved["variance_weight"] = weight

    if resolved["out_dir"] is not None and not isinstance(
            resolved["out_dir"], str):
        problems.append("out_dir must be a string path")

    if problems:
        raise ConfigError(_report(problems))
    return ExperimentConfig(**resolved)


def _report(problems):
    return "invalid configuration:\n" + "\n".join(
        f"  - {p}" for p in problems)


def load_config(path, seed_override=None):
    """Read and validate a JSON configuration file."""
    import json

    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read configuration file: {exc}")
    try:
        doc = json.loads(text)
    except ValueError as exc:
        raise ConfigError(f"configuration is not valid JSON: {exc}")
    return config_from_dict(doc, seed_override=seed_override)


# ---------------------------------------------------------------------------
# scoring

@dataclass(frozen=True)
class ConfusionMatrix:
    """Predicted-versus-actual counts.

    Rows follow ``labels`` (the sorted true class labels) plus a final
    "unmatched" row collecting predictions outside that label set;
    columns follow ``labels``. Column sums therefore count each true
    class, and the matched diagonal over the total is the success rate.
    """

    labels: tuple
    counts: np.ndarray
    success_rate: float

    @property
    def row_labels(self):
        return tuple(str(label) for label in self.labels) + ("unmatched",)

    @property
    def per_class_accuracy(self):
        diag = np.diagonal(self.counts[:len(self.labels)])
        totals = self.counts.sum(axis=0)
        return diag / np.maximum(totals, 1)


def evaluate_confusion(predictions, truths):
    """Score hard class predictions against true labels."""
    predictions = [int(p) for p in predictions]
    truths = [int(t) for t in truths]
    if len(predictions) != len(truths):
        raise ConfigError("predictions and truths must have equal length")
    if not truths:
        raise ConfigError("cannot score an empty population")

    labels = tuple(sorted(set(truths)))
    column = {label: j for j, label in enumerate(labels)}
    row = {label: i for i, label in enumerate(labels)}
    counts = np.zeros((len(labels) + 1, len(labels)), dtype=int)
    for pred, truth in zip(predictions, truths):
        i = row.get(pred, len(labels))
        counts[i, column[truth]] += 1
    matched = int(np.diagonal(counts[:len(labels)]).sum())
    return ConfusionMatrix(labels=labels, counts=counts,
                           success_rate=matched / len(truths))


def confusion_csv_text(matrix):
    lines = ["predicted," + ",".join(f"actual_{lb}" for lb in matrix.labels)]
    for name, row in zip(matrix.row_labels, matrix.counts):
        lines.append(name + "," + ",".join(str(int(v)) for v in row))
    return "\n".join(lines) + "\n"


def _flatten_hyper(hyper, channels):
    parts = []
    for name in channels:
        ch = hyper.channel(name)
        parts.extend([ch.beta_a, ch.beta_b, ch.gamma_alpha, ch.gamma_beta,
                      ch.normal_mean, ch.shrinkage])
    return np.array(parts)


def stacked_hyper_error(true_classes: Sequence[ClassHyperParams],
                        registry: ClassRegistry,
                        true_class_by_object: Mapping[int, int],
                        channels: Sequence[str] = ACTIVE_CHANNELS) -> float:
    """Relative squared error of the learned class table, stacked.

    Each discovered class is paired with the true class that the
    majority of its members belong to (the class claiming more such
    members wins a contested pairing). The error sums squared
    hyper-parameter differences over all true classes — a true class no
    discovered class represents contributes its full squared norm — and
    normalizes by the stacked squared norm of the truth.
    """
    claims = {}
    for cls in registry.classes:
        votes = Counter(true_class_by_object[i]
                        for i in cls.member_object_ids
                        if i in true_class_by_object)
        if not votes:
            continue
        top = max(votes.values())
        label = min(lb for lb, n in votes.items() if n == top)
        strength = (votes[label], -cls.class_id)
        if label not in claims or strength > claims[label][0]:
            claims[label] = (strength, cls.hyper_params)

    err = 0.0
    denom = 0.0
    for true_cls in true_classes:
        truth = _flatten_hyper(true_cls, channels)
        denom += float(truth @ truth)
        claim = claims.get(true_cls.class_id)
        if claim is None:
            err += float(truth @ truth)
        else:
            diff = truth - _flatten_hyper(claim[1], channels)
            err += float(diff @ diff)
    return err / denom


# ---------------------------------------------------------------------------
# runners

class _ObservationWindow(NamedTuple):
    observations: tuple


def _pipeline_predictions(trajectories, model, classes):
    """Filter, profile, and classify one simulated population."""
    estimates = filter_population(trajectories, model)
    profiles = extract_population_profiles(estimates, mode_2d=True)
    posteriors = classify_population(profiles, classes,
                                     channels=ACTIVE_CHANNELS)
    preds = [p.best_class for p in posteriors]
    truths = [t.true_class for t in trajectories]
    return estimates, preds, truths


def _trial_populations(config, classes, model):
    for t in range(config.n_trials):
        seed = config.seed + TRIAL_SEED_STRIDE * (t + 1)
        yield t, generate_population(
            classes, config.counts, model, length=config.length,
            observation_rate=config.observation_rate, rng_seed=seed)


def _run_table2(config):
    classes = _class_set(config.class_table)
    model = build_system(config.dt, config.process_scale,
                         config.measurement_scale)
    all_preds, all_truths, per_trial = [], [], []
    for _, trajectories in _trial_populations(config, classes, model):
        _, preds, truths = _pipeline_predictions(trajectories, model,
                                                 classes)
        per_trial.append(evaluate_confusion(preds, truths).success_rate)
        all_preds.extend(preds)
        all_truths.extend(truths)
    pooled = evaluate_confusion(all_preds, all_truths)
    metrics = {
        "success_rate_mean": float(np.mean(per_trial)),
        "success_rate_per_trial": per_trial,
        "per_class_accuracy": pooled.per_class_accuracy,
        "confusion_pooled": pooled.counts,
        "n_objects_per_trial": int(sum(config.counts)),
    }
    return metrics, {EXPERIMENT_CSVS["table2"]: confusion_csv_text(pooled)}


def _run_table3(config):
    classes = _class_set(config.class_table)
    model = build_system(config.dt, config.process_scale,
                         config.measurement_scale)
    csr = {"model": [], "kmeans": [], "fcm": []}
    for t, trajectories in _trial_populations(config, classes, model):
        estimates, preds, truths = _pipeline_predictions(
            trajectories, model, classes)
        csr["model"].append(evaluate_confusion(preds, truths).success_rate)
        baseline_seed = config.seed + TRIAL_SEED_STRIDE * (t + 1)
        csr["kmeans"].append(kmeans_direct(
            estimates, truths, len(classes),
            rng_seed=baseline_seed).success_rate)
        csr["fcm"].append(fcm_direct(
            estimates, truths, len(classes),
            rng_seed=baseline_seed).success_rate)
    means = {m: float(np.mean(v)) for m, v in csr.items()}
    metrics = {
        "model_csr_mean": means["model"],
        "kmeans_csr_mean": means["kmeans"],
        "fcm_csr_mean": means["fcm"],
        "csr_per_trial": csr,
        "gap_vs_kmeans": means["model"] - means["kmeans"],
        "gap_vs_fcm": means["model"] - means["fcm"],
    }
    lines = ["method,trial,csr"]
    for method in ("model", "kmeans", "fcm"):
        for t, value in enumerate(csr[method]):
            lines.append(f"{method},{t},{format_float(value)}")
    return metrics, {EXPERIMENT_CSVS["table3"]: "\n".join(lines) + "\n"}


def _run_fig8(config):
    classes = _class_set(config.class_table)
    model = build_system(config.dt, config.process_scale,
                         config.measurement_scale)
    r_values = [(i + 1) / 10 for i in range(10)]
    horizons = list(range(1, FIG8_HORIZON + 1))
    ratios = np.zeros((len(r_values), len(horizons)))
    for ri, r in enumerate(r_values):
        trajectories = generate_population(
            classes, config.counts, model,
            length=config.length + FIG8_HORIZON, observation_rate=r,
            rng_seed=config.seed + TRIAL_SEED_STRIDE * (ri + 1))
        windows = [_ObservationWindow(tuple(
            t.observations[:config.length])) for t in trajectories]
        estimates = filter_population(windows, model)
        err = np.zeros(len(horizons))
        sig = np.zeros(len(horizons))
        for traj, est in zip(trajectories, estimates):
            ahead = predict_ahead(est.final_filter_state, model,
                                  FIG8_HORIZON)
            for h in horizons:
                truth = traj.states[config.length + h].position
                delta = ahead[h - 1].position - truth
                err[h - 1] += float(delta @ delta)
                sig[h - 1] += float(truth @ truth)
        ratios[ri] = err / sig
    metrics = {
        "r_values": r_values,
        "horizons": horizons,
        "mse_ratio": ratios,
        "mean_ratio_by_r": ratios.mean(axis=1),
    }
    lines = ["r,horizon,mse_ratio"]
    for ri, r in enumerate(r_values):
        for h in horizons:
            lines.append(f"{format_float(r)},{h},"
                         f"{format_float(ratios[ri, h - 1])}")
    return metrics, {EXPERIMENT_CSVS["fig8"]: "\n".join(lines) + "\n"}


def _run_fig9(config):
    classes = _class_set(config.class_table)
    csrs, snrs = [], []
    for qi, q in enumerate(FIG9_NOISE_SCALES):
        model = build_system(config.dt, config.process_scale, q)
        trajectories = generate_population(
            classes, config.counts, model, length=config.length,
            observation_rate=config.observation_rate,
            rng_seed=config.seed + TRIAL_SEED_STRIDE * (qi + 1))
        _, preds, truths = _pipeline_predictions(trajectories, model,
                                                 classes)
        csrs.append(evaluate_confusion(preds, truths).success_rate)
        power = float(np.mean([
            np.mean(np.stack([s.position for s in t.states[1:]]) ** 2)
            for t in trajectories]))
        snrs.append(power / q)
    metrics = {
        "measurement_scales": list(FIG9_NOISE_SCALES),
        "snr": snrs,
        "csr": csrs,
    }
    lines = ["measurement_scale,snr,csr"]
    for q, snr, csr in zip(FIG9_NOISE_SCALES, snrs, csrs):
        lines.append(f"{format_float(q)},{format_float(snr)},"
                     f"{format_float(csr)}")
    return metrics, {EXPERIMENT_CSVS["fig9"]: "\n".join(lines) + "\n"}


def _online_config(config, model, rng_seed):
    return OnlineConfig(
        model=model, channels=ACTIVE_CHANNELS, mode_2d=True,
        prev_count_init=config.initial_count,
        count_window=config.count_window,
        variance_weight=config.variance_weight,
        cluster_penalty=config.cluster_penalty, rng_seed=rng_seed)


def _run_fig10(config):
    classes = _class_set(config.class_table)
    model = build_system(config.dt, config.process_scale,
                         config.measurement_scale)
    lengths = [config.segment_length]
    if config.segment_length != FIG10_SHORT_SEGMENT:
        lengths.append(FIG10_SHORT_SEGMENT)
    curves = {}
    for seg_len in lengths:
        total = np.zeros(FIG10_N_SEGMENTS)
        for t in range(config.n_trials):
            trajectories = generate_population(
                classes, config.counts, model,
                length=seg_len * FIG10_N_SEGMENTS,
                observation_rate=config.observation_rate,
                rng_seed=config.seed + TRIAL_SEED_STRIDE * (t + 1))
            truth_map = {i: traj.true_class
                         for i, traj in enumerate(trajectories)}
            online = _online_config(config, model, config.seed + t + 1)
            registry, running = None, None
            batches = segment_batches(trajectories, seg_len)
            for k, batch in enumerate(batches[:FIG10_N_SEGMENTS]):
                result = ingest_segment(batch, registry, online, running)
                registry = result.registry
                running = result.running_profiles
                total[k] += stacked_hyper_error(classes, registry,
                                                truth_map)
        curves[seg_len] = total / config.n_trials
    metrics = {"n_segments": list(range(1, FIG10_N_SEGMENTS + 1))}
    for seg_len in lengths:
        metrics[f"curve_seg{seg_len}"] = curves[seg_len]
        metrics[f"hyper_error_final_seg{seg_len}"] = float(
            curves[seg_len][-1])
    lines = ["segment_length,n_segments,hyper_mse"]
    for seg_len in lengths:
        for k in range(FIG10_N_SEGMENTS):
            lines.append(f"{seg_len},{k + 1},"
                         f"{format_float(curves[seg_len][k])}")
    return metrics, {EXPERIMENT_CSVS["fig10"]: "\n".join(lines) + "\n"}


def _run_fig11(config):
    classes = _class_set(config.class_table)
    model = build_system(config.dt, config.process_scale,
                         config.measurement_scale)
    base = generate_population(
        classes, config.counts, model,
        length=FIG11_BASE_SEGMENTS * config.segment_length,
        observation_rate=config.observation_rate, rng_seed=config.seed)
    online = _online_config(config, model, config.seed)
    registry, running = None, {}
    for batch in segment_batches(base, config.segment_length):
        result = ingest_segment(batch, registry, online, running)
        registry = result.registry
        running = result.running_profiles
    base_count = registry.current_count
    n_base = len(base)

    n_steps = FIG11_MAX_NOVEL // FIG11_ARRIVAL_BATCH
    arrivals = [FIG11_ARRIVAL_BATCH * (s + 1) for s in range(n_steps)]
    firsts = []
    for run in range(config.n_trials):
        novels = generate_population(
            [novel_class()], (FIG11_MAX_NOVEL,), model,
            length=config.segment_length,
            observation_rate=config.observation_rate,
            rng_seed=config.seed + TRIAL_SEED_STRIDE * (run + 1))
        run_online = dataclasses.replace(
            online, rng_seed=config.seed + run + 1)
        run_registry, run_running = registry, dict(running)
        first = None
        for s in range(n_steps):
            batch = SegmentBatch(
                segment_index=FIG11_BASE_SEGMENTS + s + 1,
                segment_length=config.segment_length,
                observations={
                    n_base + j: novels[j].observations
                    for j in range(FIG11_ARRIVAL_BATCH * s,
                                   FIG11_ARRIVAL_BATCH * (s + 1))})
            result = ingest_segment(batch, run_registry, run_online,
                                    run_running)
            run_registry = result.registry
            run_running = result.running_profiles
            if first is None and run_registry.current_count > base_count:
                first = arrivals[s]
        firsts.append(first)

    detected = np.array([f if f is not None else np.inf for f in firsts])
    probs = [float(np.mean(detected <= n)) for n in arrivals]
    metrics = {
        "arrivals": arrivals,
        "detection_probability": probs,
        "detection_by_44": float(np.mean(detected <= 44)),
        "detection_by_55": float(np.mean(detected <= 55)),
        "first_detection": firsts,
        "base_class_count": int(base_count),
        "n_runs": config.n_trials,
    }
    lines = ["n_new_objects,detection_probability"]
    for n, p in zip(arrivals, probs):
        lines.append(f"{n},{format_float(p)}")
    return metrics, {EXPERIMENT_CSVS["fig11"]: "\n".join(lines) + "\n"}


_RUNNERS = {
    "table2": _run_table2,
    "table3": _run_table3,
    "fig8": _run_fig8,
    "fig9": _run_fig9,
    "fig10": _run_fig10,
    "fig11": _run_fig11,
}


def run_experiment(config: ExperimentConfig, out_dir=None) -> dict:
    """Run one experiment and write its artifacts.

    ``out_dir`` (or, failing that, the config's ``out_dir``) receives
    ``results.json`` plus the experiment's CSV. Returns the metrics.
    """
    target = out_dir if out_dir is not None else config.out_dir
    if target is None:
        raise ConfigError("no output directory: pass one explicitly or "
                          "set out_dir in the configuration")
    target = Path(target)

    metrics, files = _RUNNERS[config.experiment](config)
    write_text(target / "results.json", results_json_text(
        config=dataclasses.asdict(config), metrics=metrics,
        seed=config.seed))
    for name, text in files.items():
        write_text(target / name, text)
    return metrics
