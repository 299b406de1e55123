"""Campaigns: cartesian (method x level x seed x variant) grids of runs,
resumable by config hash, aggregated per cell across seeds."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass
from pathlib import Path

from ..errors import BagsacError, ConfigError, MissingArtifacts
from . import config as cfgmod
from .config import RunConfig
from .metrics import RunSummary, aggregate_seeds

log = logging.getLogger(__name__)

MANIFEST = "campaign_manifest.json"
CAMPAIGN = "campaign.json"

# name -> (matrix defaults, (section, key, values) variant axis or None)
PRESETS = {
    "main": ({"methods": "vanilla_sac, gsac_fixed:0.01, gsac_fixed:0.1, ba_gsac, linear_decay",
              "levels": "mild, moderate, severe", "seeds": "42, 123, 7"}, None),
    "guidance_mode": ({"methods": "vanilla_sac, gsac_fixed:0.1, gsac_threshold, ba_gsac",
                       "levels": "moderate", "seeds": "42"}, None),
    "ensemble_size": ({"methods": "ba_gsac", "levels": "moderate", "seeds": "42"}, ("ensemble", "size", (1, 3, 5, 7))),
    "history": ({"methods": "ba_gsac", "levels": "moderate", "seeds": "42"}, ("pomdp", "history", (1, 2, 3, 5))),
    "warmup": ({"methods": "ba_gsac", "levels": "severe", "seeds": "42"}, ("guidance", "warmup", (800, 2000, 3000, 5000))),
}

_VARIANT_TAGS = {("ensemble", "size"): "N", ("pomdp", "history"): "K", ("guidance", "warmup"): "W"}


@dataclass
class PlannedRun:
    name: str
    cell: str
    method: str
    level: str
    seed: int
    variant: str
    config: RunConfig


def _split(text: str) -> list[str]:
    return [p.strip() for p in text.replace("\n", ",").split(",") if p.strip()]


def _method_overrides(label: str) -> dict[str, str]:
    name, _, arg = label.partition(":")
    out = {"name": name}
    if arg:
        if name != "gsac_fixed":
            raise ConfigError(f"only gsac_fixed takes a parameter, got {label!r}")
        out["fixed_lambda"] = arg
    elif name == "gsac_fixed":
        raise ConfigError("gsac_fixed needs a lambda, e.g. gsac_fixed:0.1")
    return out


def plan(matrix_text: str) -> list[PlannedRun]:
    """Expand a matrix file into validated run configs."""
    sections = cfgmod.parse_ini(matrix_text)
    matrix = sections.pop("matrix", None)
    if matrix is None:
        raise ConfigError("matrix file needs a [matrix] section")
    preset_name = matrix.pop("preset", "").strip()
    defaults, axis = {}, None
    if preset_name:
        if preset_name not in PRESETS:
            raise ConfigError(f"unknown preset {preset_name!r}; choose from {sorted(PRESETS)}")
        defaults, axis = PRESETS[preset_name]
    unknown = set(matrix) - {"methods", "levels", "seeds", "variant_section", "variant_key", "variant_values"}
    if unknown:
        raise ConfigError(f"unknown [matrix] keys: {sorted(unknown)}")
    merged = {**defaults, **matrix}
    if "variant_key" in matrix:
        axis = (matrix["variant_section"], matrix["variant_key"], tuple(_split(matrix["variant_values"])))
    methods = _split(merged.get("methods", ""))
    levels = _split(merged.get("levels", ""))
    seeds = [int(s) for s in _split(merged.get("seeds", ""))]
    if not (methods and levels and seeds):
        raise ConfigError("matrix must name at least one method, level and seed")
    variants = [None] if axis is None else list(axis[2])
    base = RunConfig().with_overrides(sections)
    runs = []
    for label in methods:
        for lvl in levels:
            for var in variants:
                for seed in seeds:
                    ov = {s: dict(v) for s, v in sections.items()}
                    ov.setdefault("method", {}).update(_method_overrides(label))
                    ov.setdefault("pomdp", {})["level"] = lvl
                    ov.setdefault("schedule", {})["seed"] = str(seed)
                    vtag = ""
                    if var is not None:
                        sec, key, _ = axis
                        ov.setdefault(sec, {})[key] = str(var)
                        vtag = f"{_VARIANT_TAGS.get((sec, key), key)}{var}"
                    cfg = base.with_overrides(ov)
                    safe = label.replace(":", "-")
                    cell = "__".join(x for x in (safe, lvl, vtag) if x)
                    runs.append(PlannedRun(f"{cell}__s{seed}", cell, label, lvl, seed, vtag, cfg))
    return runs


def _is_complete(run_dir: Path, cfg: RunConfig) -> bool:
    summary, ini = run_dir / "summary.json", run_dir / "config.ini"
    if not (summary.is_file() and ini.is_file()):
        return False
    try:
        return cfgmod.load(ini).config_hash() == cfg.config_hash()
    except ConfigError:
        return False


def _execute(name: str, ini_text: str, out_dir: str) -> tuple[str, dict | None, str | None]:
    from .runner import train_run  # deferred: keeps worker start-up light

    try:
        summary, _ = train_run(cfgmod.loads(ini_text), Path(out_dir) / name)
        return name, summary.to_dict(), None
    except BagsacError as exc:
        return name, None, f"{type(exc).__name__}: {exc}"


def sweep(matrix_text: str, out_dir, jobs: int = 1) -> dict:
    """Run (or resume) every planned run, then write the campaign JSON."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runs = plan(matrix_text)
    manifest = {
        "runs": [{k: v for k, v in asdict(r).items() if k != "config"} | {"config_hash": r.config.config_hash()} for r in runs]
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2))
    todo = [r for r in runs if not _is_complete(out / r.name, r.config)]
    log.info("campaign: %d runs, %d to execute", len(runs), len(todo))
    errors = {}
    if jobs <= 1:
        results = [_execute(r.name, r.config.to_ini(), str(out)) for r in todo]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futs = [pool.submit(_execute, r.name, r.config.to_ini(), str(out)) for r in todo]
            results = [f.result() for f in as_completed(futs)]
    for name, _, err in results:
        if err:
            errors[name] = err
    return aggregate(out, errors)


def aggregate(campaign_dir, errors: dict | None = None) -> dict:
    """Rebuild ``campaign.json`` from the manifest and finished run directories."""
    root = Path(campaign_dir)
    mpath = root / MANIFEST
    if not mpath.is_file():
        raise MissingArtifacts(f"no {MANIFEST} in {root}")
    manifest = json.loads(mpath.read_text())
    cells: dict[str, dict] = {}
    for entry in manifest["runs"]:
        cell = cells.setdefault(entry["cell"], {
            "method": entry["method"], "level": entry["level"], "variant": entry["variant"],
            "runs": {}, "missing": [], "aggregate": None,
        })
        spath = root / entry["name"] / "summary.json"
        if spath.is_file():
            s = RunSummary.from_dict(json.loads(spath.read_text()))
            cell["runs"][str(entry["seed"])] = {
                "last5_avg": s.last5_avg, "last5_std": s.last5_std, "best_return": s.best_return,
                "collision_rate_last5": s.collision_rate_last5,
                "lambda_activity_fraction": s.lambda_activity_fraction,
            }
        else:
            cell["missing"].append(entry["name"])
    for cell in cells.values():
        vals = [r["last5_avg"] for r in cell["runs"].values()]
        if len(vals) >= 2:
            cell["aggregate"] = asdict(aggregate_seeds(vals))
    result = {"cells": cells, "errors": errors or {}}
    (root / CAMPAIGN).write_text(json.dumps(result, indent=2))
    return result
