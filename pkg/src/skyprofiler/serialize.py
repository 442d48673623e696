"""Machine-readable export: trajectory CSVs and experiment result JSON.

All floats are written with up to 17 significant digits — the shortest
representation in that budget that round-trips the IEEE double exactly —
files are UTF-8 with LF line endings, and every writer is deterministic:
identical inputs produce byte-identical files.
"""

import json
from pathlib import Path

import numpy as np

TRAJECTORY_COLUMNS = ("k", "x", "y", "z", "vx", "vy", "vz",
                      "a_xy", "a_z", "a_theta", "zx", "zy", "zz",
                      "obs_valid")
ESTIMATED_COLUMNS = ("k", "x_hat", "y_hat", "z_hat",
                     "vx_hat", "vy_hat", "vz_hat",
                     "a_xy_hat", "a_z_hat", "a_theta_hat")


def format_float(value: float) -> str:
    """A float as text with 17 significant digits, exact on re-parse."""
    return f"{float(value):.17g}"


def trajectory_csv(traj) -> str:
    """A simulated trajectory as CSV text.

    One row per state k = 0..n. The driving-force columns hold the input
    applied on the transition k -> k+1, so the final row leaves them empty;
    the observation columns are empty at k = 0 (no observation slot) and
    whenever the slot carried no measurement, with obs_valid recording 1/0
    for every slot that exists.
    """
    by_step = {obs.timestep_index: obs for obs in traj.observations}
    lines = [",".join(TRAJECTORY_COLUMNS)]
    n_transitions = len(traj.polar_forces)
    for k, state in enumerate(traj.states):
        cells = [str(k)]
        cells.extend(format_float(v) for v in state.position)
        cells.extend(format_float(v) for v in state.velocity)
        if k < n_transitions:
            cells.extend(format_float(v) for v in traj.polar_forces[k])
        else:
            cells.extend(["", "", ""])
        obs = by_step.get(k)
        if obs is None:
            cells.extend(["", "", "", ""])
        elif obs.valid:
            cells.extend(format_float(v) for v in obs.position_reading)
            cells.append("1")
        else:
            cells.extend(["", "", "", "0"])
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def estimated_trajectory_csv(est) -> str:
    """A filtered trajectory as CSV text mirroring the simulation schema.

    One row per filter state; position/velocity estimates carry a _hat
    suffix. Estimated-force columns are aligned to the timestep each force
    estimate spans from, and left empty on rows without one (the filter
    cannot attribute a force to the first or last transition).
    """
    force_by_step = {int(k): est.force_array[i]
                     for i, k in enumerate(est.force_timesteps)}
    lines = [",".join(ESTIMATED_COLUMNS)]
    for state in est.states:
        cells = [str(int(state.timestep_index))]
        cells.extend(format_float(v) for v in state.position)
        cells.extend(format_float(v) for v in state.velocity)
        force = force_by_step.get(int(state.timestep_index))
        if force is None:
            cells.extend(["", "", ""])
        else:
            cells.extend(format_float(v) for v in force)
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def _jsonable(value):
    """Recursively coerce numpy containers/scalars to plain Python types."""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    return value


def results_json_text(config: dict, metrics: dict, seed: int) -> str:
    """The results.json document: config echo, metrics, seed, version.

    Key order is sorted and floats use Python's shortest-exact repr, so the
    same inputs always produce byte-identical text and every number
    re-parses to the exact double that was written.
    """
    from skyprofiler import __version__
    doc = {
        "config": _jsonable(config),
        "metrics": _jsonable(metrics),
        "seed": int(seed),
        "version": __version__,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def write_text(path, text: str) -> Path:
    """Write text as UTF-8 with LF endings; create parent directories."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(text)
    return target
