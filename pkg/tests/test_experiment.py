from __future__ import annotations

import csv
import json

import numpy as np
import pytest

from bagsac.errors import ConfigError, ContractViolation, InsufficientCheckpoints, MissingArtifacts
from bagsac.experiment import config as cfgmod
from bagsac.experiment.cli import main
from bagsac.experiment.diagnose import diagnose
from bagsac.experiment.metrics import EvalRecord, RunSummary, aggregate_seeds, last5
from bagsac.experiment.runner import DeployedPolicy, Trainer, evaluate, evaluate_run, train_run
from bagsac.experiment.sweep import plan, sweep
from bagsac.highway import EnvConfig
from bagsac.pomdp import LEVELS

TINY = """
[method]
name = {method}
[pomdp]
level = {level}
[sac]
hidden = 16
batch_size = 16
[ensemble]
hidden = 16
report_samples = 50
[guidance]
warmup = 40
[schedule]
seed = 3
total_steps = {steps}
eval_every = 20
eval_episodes = 1
"""


def tiny(name="ba_gsac", level="severe", steps=100, /, **extra):
    cfg = cfgmod.loads(TINY.format(method=name, level=level, steps=steps))
    return cfg.with_overrides(extra) if extra else cfg


# -- config ------------------------------------------------------------
def test_defaults_and_roundtrip():
    cfg = cfgmod.RunConfig().validate()
    assert cfg.history_len == 3 and cfg.sac.batch_size == 128 and cfg.guidance.warmup == 800
    again = cfgmod.loads(cfg.to_ini())
    assert again == cfg and again.config_hash() == cfg.config_hash()


def test_unknown_keys_and_sections_rejected():
    with pytest.raises(ConfigError, match="sac.batchsize"):
        cfgmod.loads("[sac]\nbatchsize = 3\n")
    with pytest.raises(ConfigError):
        cfgmod.loads("[optimizer]\nlr = 1\n")
    with pytest.raises(ConfigError):
        cfgmod.loads("[sac]\nbatch_size = many\n")
    with pytest.raises(ConfigError):
        cfgmod.loads("[method]\nname = ppo\n")


def test_method_resolution():
    assert tiny("vanilla_sac").history_len == 1
    assert tiny("linear_decay").schedule_for_method().decay_steps == 100
    assert not tiny("gsac_fixed").ensemble_enabled
    with pytest.raises(ConfigError):
        tiny("vanilla_sac", pomdp={"history": "3"})


# -- metrics -----------------------------------------------------------
def test_aggregate_matches_table_rows():
    a = aggregate_seeds([98.8, 72.5, 96.3])
    assert abs(a.mean - 89.2) < 0.05 and abs(a.cv_percent - 13.3) < 0.1 and a.min == 72.5
    b = aggregate_seeds([117.7, 128.5, 103.3])
    assert round(b.mean, 1) == 116.5 and abs(b.cv_percent - 8.9) < 0.1 and b.min == 103.3
    c = aggregate_seeds([4.0, 4.0, 4.0])
    assert c.cv_percent == 0.0 and c.min == 4.0
    with pytest.warns(RuntimeWarning):
        assert aggregate_seeds([1.0, -1.0]).cv_percent is None
    with pytest.raises(ContractViolation):
        aggregate_seeds([1.0])


def test_last5_requires_five():
    recs = [EvalRecord.from_episodes(i, [float(i)], [False]) for i in range(4)]
    with pytest.raises(InsufficientCheckpoints, match="insufficient checkpoints"):
        last5(recs)
    recs.append(EvalRecord.from_episodes(4, [4.0], [False]))
    recs.append(EvalRecord.from_episodes(5, [10.0], [False]))
    avg, std = last5(recs)
    assert avg == pytest.approx(np.mean([1, 2, 3, 4, 10])) and std == pytest.approx(np.std([1, 2, 3, 4, 10]))


# -- evaluation --------------------------------------------------------
def test_evaluate_deterministic_and_braking_safe():
    brake = lambda h: np.array([-1.0, 0.0])  # noqa: E731
    cfg = EnvConfig(traffic_count=4, spawn_range=2000.0, spawn_gap_min=500.0)
    r1 = evaluate(brake, cfg, LEVELS["mild"], 5, seed=1)
    r2 = evaluate(brake, cfg, LEVELS["mild"], 5, seed=1)
    assert len(r1.returns) == 5 and r1 == r2
    assert r1.collision_rate == 0.0


def test_deployed_policy_sees_only_histories(tmp_path):
    tr = Trainer(tiny())
    seen = []

    class Spy(DeployedPolicy):
        def __call__(self, history):
            seen.append(history.shape)
            return super().__call__(history)

    tr.policy = Spy(tr.control)
    before = tr.guiding.calls
    tr._evaluate(0)
    assert tr.guiding.calls == before
    assert set(seen) == {(75,)}


# -- runs --------------------------------------------------------------
def test_zero_steps_rejected(tmp_path):
    with pytest.raises(InsufficientCheckpoints):
        train_run(tiny("ba_gsac", "severe", 0), tmp_path / "r")
    assert (tmp_path / "r" / "train.csv").read_text().count("\n") == 1


def test_run_is_deterministic_and_consistent(tmp_path):
    cfg = tiny()
    s1, p1 = train_run(cfg, tmp_path / "a")
    _, p2 = train_run(cfg, tmp_path / "b")
    for name in ("train.csv", "eval.csv", "eval_episodes.csv"):
        assert (p1.root / name).read_bytes() == (p2.root / name).read_bytes()
    rows = list(csv.DictReader(open(p1.train_csv)))
    lam = np.array([float(r["lambda"]) for r in rows])
    assert np.all(lam[:40] == 0.5)
    assert [r["actor_tag"] for r in rows[:4]] == ["guiding", "control"] * 2
    evals = [float(r["mean_return"]) for r in csv.DictReader(open(p1.eval_csv))]
    assert s1.last5_avg == pytest.approx(np.mean(evals[-5:]), abs=1e-9)
    assert s1.best_return == max(evals)
    assert s1.lambda_activity_fraction == pytest.approx(np.mean(lam > 0.02), abs=1e-12)
    assert s1.privileged_reads_eval == 0
    assert RunSummary.from_dict(json.loads(p1.summary_json.read_text())) == s1


def test_warmup_replay_identical_across_guided_methods():
    a, b = Trainer(tiny("gsac_fixed", "severe", 40)), Trainer(tiny("ba_gsac", "severe", 40))
    for tr in (a, b):
        tr._loop(*(_NullWriter(),) * 3, _NullFile())
    ca, cb = a.buffer.contents(), b.buffer.contents()
    for name in ("full_state", "history", "action", "reward", "next_history", "occlusion_mask"):
        assert getattr(ca, name).tobytes() == getattr(cb, name).tobytes()


class _NullWriter:
    def writerow(self, row):
        pass


class _NullFile:
    def flush(self):
        pass


def test_single_member_ablation_uses_midpoint(tmp_path):
    s, p = train_run(tiny(ensemble={"size": "1"}), tmp_path / "n1")
    lam = [float(r["lambda"]) for r in csv.DictReader(open(p.train_csv))]
    assert set(lam[40:]) == {0.255}
    assert all(r["disagreement"] == "" for r in csv.DictReader(open(p.train_csv)))


def test_evaluate_run_and_diagnose(tmp_path):
    _, p = train_run(tiny(), tmp_path / "ba")
    rec = evaluate_run(p.root, episodes=2)
    assert len(rec.returns) == 2
    rep = diagnose(p.root)
    assert rep["lambda"]["schedule"] == "adaptive"
    assert rep["blindness"]["mode"] == "partial_obs"
    assert all(v == 0.0 for v in rep["blindness"]["occluded"]["target_std_per_dim"].values())
    assert (p.root / "diagnose.json").is_file()


@pytest.mark.parametrize("lam,activity", [("0.1", 1.0), ("0.01", 0.0)])
def test_diagnose_fixed_schedule(tmp_path, lam, activity):
    _, p = train_run(tiny("gsac_fixed", method={"fixed_lambda": lam}), tmp_path / "f")
    sec = diagnose(p.root)["lambda"]
    assert sec["constant"] and sec["activity"] == activity


def test_diagnose_level_none(tmp_path):
    _, p = train_run(tiny("ba_gsac", "none"), tmp_path / "n")
    assert diagnose(p.root)["blindness"]["note"] == "no occlusion observed"


def test_diagnose_missing(tmp_path):
    with pytest.raises(MissingArtifacts):
        diagnose(tmp_path)


# -- sweep / CLI -------------------------------------------------------
def test_matrix_expansion_counts():
    runs = plan("[matrix]\npreset = main\n")
    assert len(runs) == 45 and len({r.name for r in runs}) == 45
    sizes = plan("[matrix]\npreset = ensemble_size\n")
    assert [r.config.ensemble.size for r in sizes] == [1, 3, 5, 7]
    assert {r.config.pomdp.level for r in sizes} == {"moderate"}
    assert [r.config.history_len for r in plan("[matrix]\npreset = history\n")] == [1, 2, 3, 5]
    with pytest.raises(ConfigError):
        plan("[matrix]\nmethods = gsac_fixed\nlevels = mild\nseeds = 1\n")


def test_sweep_resumes_by_hash(tmp_path):
    matrix = TINY.format(method="ba_gsac", level="mild", steps=100).replace("[method]\nname = ba_gsac\n", "")
    matrix = "[matrix]\nmethods = gsac_fixed:0.1, linear_decay\nlevels = mild\nseeds = 1, 2\n" + matrix
    out = sweep(matrix, tmp_path)
    assert set(out["cells"]) == {"gsac_fixed-0.1__mild", "linear_decay__mild"}
    assert all(c["aggregate"] is not None for c in out["cells"].values())
    stamp = (tmp_path / "linear_decay__mild__s1" / "train.csv").stat().st_mtime_ns
    sweep(matrix, tmp_path)
    assert (tmp_path / "linear_decay__mild__s1" / "train.csv").stat().st_mtime_ns == stamp
    assert main(["aggregate", "--campaign", str(tmp_path)]) == 0


def test_cli_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[sac]\nnope = 1\n")
    assert main(["train", "--config", str(bad)]) == 1
    assert main(["diagnose", "--run", str(tmp_path / "missing")]) == 3
    assert main(["evaluate", "--run", str(tmp_path / "missing")]) == 3
    good = tmp_path / "good.ini"
    good.write_text(TINY.format(method="gsac_fixed", level="mild", steps=100))
    assert main(["train", "--config", str(good), "--seed", "5", "--out", str(tmp_path / "run")]) == 0
    assert json.loads(capsys.readouterr().out)["meta"]["seed"] == 5
    short = tmp_path / "short.ini"
    short.write_text(TINY.format(method="gsac_fixed", level="mild", steps=60))
    assert main(["train", "--config", str(short), "--out", str(tmp_path / "short")]) == 1


def test_numerical_abort_exit_code(tmp_path, monkeypatch):
    from bagsac import sac

    def boom(*a, **k):
        raise sac.NumericalAbort("non-finite critic loss", {"component": "critic"})

    monkeypatch.setattr("bagsac.experiment.runner.critic_update", boom)
    good = tmp_path / "good.ini"
    good.write_text(TINY.format(method="gsac_fixed", level="mild", steps=100))
    assert main(["train", "--config", str(good), "--out", str(tmp_path / "r")]) == 2
    snap = json.loads((tmp_path / "r" / "abort.json").read_text())
    assert snap["step"] == 40 and snap["component"] == "critic"
