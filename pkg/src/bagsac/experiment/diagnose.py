"""Post-hoc run diagnostics: lambda activity, disagreement trend and the
visible/occluded split of ensemble error."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from ..errors import MissingArtifacts
from ..guidance import lambda_activity
from ..replay import Batch
from ..uncertainty import blindness_report
from .metrics import disagreement_summary
from .runner import RunPaths, restore_trainer

REPORT = "diagnose.json"


def read_train_trace(path) -> tuple[np.ndarray, list[float | None]]:
    """Return (lambda values, disagreement values or None) from train.csv."""
    path = Path(path)
    if not path.is_file():
        raise MissingArtifacts(f"missing trace {path}")
    lam, u = [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["lambda"] != "":
                lam.append(float(row["lambda"]))
            u.append(float(row["disagreement"]) if row["disagreement"] != "" else None)
    return np.asarray(lam, dtype=np.float64), u


def lambda_section(trace: np.ndarray, lambda_min: float, warmup: int, kind: str | None) -> dict:
    if kind is None or trace.size == 0:
        return {"schedule": "none", "note": "unguided run has no lambda"}
    out = {
        "schedule": kind,
        "constant": bool(np.all(trace == trace[0])),
        "lambda_min": lambda_min,
        "activity": lambda_activity(trace, lambda_min),
        "n_steps": int(trace.size),
    }
    post = trace[warmup:]
    if post.size:
        out["activity_post_warmup"] = lambda_activity(post, lambda_min)
        out["post_warmup_p20"] = float(np.percentile(post, 20.0))
        out["post_warmup_mean"] = float(post.mean())
    if out["constant"]:
        out["note"] = f"constant schedule at lambda={trace[0]!r}"
    return out


def _load_sample(path: Path) -> Batch:
    if not path.is_file():
        raise MissingArtifacts(f"missing replay sample {path}")
    with np.load(path) as d:
        return Batch(*(d[k] for k in ("full_state", "history", "action", "reward", "next_full_state",
                                      "next_history", "done", "occlusion_mask")))


def diagnose(run_dir, write: bool = True) -> dict:
    paths = RunPaths.at(run_dir)
    for p in (paths.train_csv, paths.config_ini, paths.model_npz):
        if not p.is_file():
            raise MissingArtifacts(f"missing {p.name} in {paths.root}")
    tr = restore_trainer(paths.root)
    cfg = tr.cfg
    lam, u = read_train_trace(paths.train_csv)
    sched = tr.schedule
    report = {
        "run": str(paths.root),
        "method": cfg.method.name,
        "level": tr.level.name,
        "lambda": lambda_section(lam, cfg.guidance.lambda_min, cfg.guidance.warmup, sched.kind if sched else None),
        "disagreement": disagreement_summary(u),
    }
    sample = _load_sample(paths.replay_npz)
    if not sample.occlusion_mask.any():
        report["blindness"] = {"occlusion_observed": False, "note": "no occlusion observed"}
    elif tr.ensemble is None:
        report["blindness"] = {"occlusion_observed": True, "note": "run has no ensemble"}
    else:
        report["blindness"] = blindness_report(tr.ensemble, sample, len(sample), tr.level.name)
    if write:
        (paths.root / REPORT).write_text(json.dumps(report, indent=2))
    return report
