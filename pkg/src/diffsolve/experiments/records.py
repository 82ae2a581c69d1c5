"""Run records and their on-disk forms.

Metrics CSVs must be byte-identical across reruns of the same config
and seed, so every float is written with repr (shortest round-trip
form) and wall-clock time lives only in the JSON summary.
"""

import dataclasses
import json
import os

import numpy as np

METRICS_SCHEMA = "metrics-v1"
METRICS_COLUMNS = ("epoch", "train_loss", "val_metric", "K", "iters_interval", "iters_cum", "decision")
DECISION_COLUMNS = ("interval", "raw", "smoothed", "ratio_step", "ratio_checkpoint", "decision", "K")


@dataclasses.dataclass
class RunRecord:
    """Everything one (config, seed) run produces.

    ``rows`` holds one entry per validation interval in METRICS_COLUMNS
    order.  ``decision_records`` is present only for controller-driven
    runs.  ``summary`` carries the terminal quantities (final
    validation metric, total inner iterations, final K) plus wall time.
    """

    scenario: str
    mode: str
    seed: int
    rows: list
    summary: dict
    decision_records: list = dataclasses.field(default_factory=list)
    params: object = None
    failed: bool = False


def _fmt(value):
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_metrics_csv(path, rows):
    lines = [f"# schema={METRICS_SCHEMA}", ",".join(METRICS_COLUMNS)]
    for row in rows:
        if len(row) != len(METRICS_COLUMNS):
            raise ValueError("metrics row has the wrong arity")
        lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_metrics_csv(path):
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or not lines[0].startswith("# schema="):
        raise ValueError(f"{path} lacks the schema comment line")
    schema = lines[0].split("=", 1)[1]
    if schema != METRICS_SCHEMA:
        raise ValueError(f"unsupported metrics schema {schema!r}")
    header = tuple(lines[1].split(","))
    if header != METRICS_COLUMNS:
        raise ValueError(f"unexpected metrics header {header}")
    rows = []
    for ln in lines[2:]:
        if not ln:
            continue
        e, tl, vm, k, ii, ic, dec = ln.split(",")
        rows.append((int(e), float(tl), float(vm), int(k), int(ii), int(ic), dec))
    return rows


def write_decision_csv(path, records):
    lines = [",".join(DECISION_COLUMNS)]
    for r in records:
        lines.append(
            ",".join(
                (
                    str(r.interval),
                    repr(float(r.raw)),
                    repr(float(r.smoothed)),
                    repr(float(r.ratio_step)),
                    repr(float(r.ratio_checkpoint)),
                    r.decision,
                    str(r.K),
                )
            )
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_summary_json(path, summary):
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_summary_json(path):
    with open(path) as fh:
        return json.load(fh)


def run_dir(out_dir, scenario, mode, seed):
    safe_mode = mode.replace(":", "")
    return os.path.join(out_dir, f"{scenario}_{safe_mode}", f"seed{seed}")


def save_record(out_dir, record, save_params=None):
    """Persist one run: metrics CSV, optional decision log, summary JSON.

    ``save_params`` is a callable (path, params) for scenarios whose
    trainable state has a checkpoint form.  Returns the run directory.
    """
    path = run_dir(out_dir, record.scenario, record.mode, record.seed)
    os.makedirs(path, exist_ok=True)
    write_metrics_csv(os.path.join(path, "metrics.csv"), record.rows)
    if record.decision_records:
        write_decision_csv(os.path.join(path, "decisions.csv"), record.decision_records)
    write_summary_json(os.path.join(path, "summary.json"), record.summary)
    if save_params is not None and record.params is not None:
        save_params(os.path.join(path, "model.ckpt"), record.params)
    return path


def load_run(path):
    """Read back a persisted run directory as (rows, summary)."""
    rows = read_metrics_csv(os.path.join(path, "metrics.csv"))
    summary = read_summary_json(os.path.join(path, "summary.json"))
    return rows, summary
