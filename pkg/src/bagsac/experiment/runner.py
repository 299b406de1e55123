"""Seeded training runs, the evaluation protocol and run-directory I/O."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import MissingArtifacts, NumericalAbort
from ..guidance import GuidanceSchedule, lambda_activity, lambda_at, threshold_from_warmup
from ..guided import CONTROL, DistillationNet, control_loss_grads, distillation_update, select_action
from ..highway import STATE_DIM, EnvConfig, HighwayEnv
from ..pomdp import ObservationHistory, PomdpLevel, observe_masked
from ..replay import ReplayBuffer, Transition, WarmupBuffer
from ..sac import STATE_SCALE, Critic, EntropyTemperature, actor_update, critic_update
from ..sac import entropy_update, history_scale, make_policy, td_target
from ..seeding import derive_seed, stream
from ..uncertainty import Ensemble, calibrate, disagreement, ensemble_predict, ensemble_update
from . import config as cfgmod
from .config import RunConfig
from .metrics import EvalRecord, RunSummary, disagreement_summary, last5

log = logging.getLogger(__name__)

TRAIN_COLUMNS = ("step", "actor_tag", "reward", "lambda", "disagreement", "critic_loss", "control_loss", "distill_loss")
EVAL_COLUMNS = ("step", "mean_return", "return_std", "collision_rate")
EPISODE_COLUMNS = ("step", "episode", "return", "collision")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class DeployedPolicy:
    """Deterministic control-actor policy; sees observation histories only."""

    def __init__(self, control):
        self.control = control

    def __call__(self, history) -> np.ndarray:
        return self.control.mean_action(history)


def evaluate(
    policy,
    env_config: EnvConfig,
    level: PomdpLevel,
    episodes: int,
    seed: int,
    eval_index: int = 0,
    history_len: int = 1,
    step: int = 0,
) -> EvalRecord:
    """Roll out ``policy(history) -> action`` on seeded evaluation episodes.

    Episode layouts and observation noise come from seeds derived from
    ``(seed, eval_index, episode)``, so a given checkpoint index always sees
    the same scenarios.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    env = HighwayEnv(env_config)
    returns, collisions = [], []
    for ep in range(episodes):
        state = env.reset(derive_seed(seed, "eval", eval_index, ep))
        obs_rng = stream(seed, "eval-observation", eval_index, ep)
        hist = ObservationHistory(history_len)
        hist.push(observe_masked(state, level, obs_rng)[0])
        total, collided = 0.0, False
        while env.active:
            res = env.step(policy(hist.flatten()))
            total += res.reward
            collided = res.collision
            hist.push(observe_masked(res.next_state, level, obs_rng)[0])
        returns.append(total)
        collisions.append(collided)
    return EvalRecord.from_episodes(step, returns, collisions)


@dataclass
class RunPaths:
    root: Path
    train_csv: Path
    eval_csv: Path
    episodes_csv: Path
    summary_json: Path
    config_ini: Path
    model_npz: Path
    replay_npz: Path

    @classmethod
    def at(cls, root) -> "RunPaths":
        root = Path(root)
        return cls(
            root,
            root / "train.csv",
            root / "eval.csv",
            root / "eval_episodes.csv",
            root / "summary.json",
            root / "config.ini",
            root / "model.npz",
            root / "replay_sample.npz",
        )


class Trainer:
    """Holds every network, buffer and random stream of one run."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg.validate()
        seed = cfg.seed
        self.env_rng = stream(seed, "env")
        self.obs_rng = stream(seed, "observation")
        self.agent_rng = stream(seed, "agent")
        self.ens_rng = stream(seed, "ensemble")
        self.env = HighwayEnv(cfg.env)
        self.level = cfg.level
        self.k = cfg.history_len
        sc = cfg.sac
        hdim = STATE_DIM * self.k
        hscale = history_scale(self.k)
        if cfg.guided:
            self.critic = Critic.create(STATE_DIM, sc.hidden, (derive_seed(seed, "critic", 0), derive_seed(seed, "critic", 1)), sc.lr, STATE_SCALE)
            self.guiding = make_policy(STATE_DIM, sc.hidden, derive_seed(seed, "guiding", 0), sc.lr, STATE_SCALE)
            self.distill = DistillationNet.create(hdim, sc.hidden, derive_seed(seed, "distill", 0), sc.lr, hscale)
        else:
            self.critic = Critic.create(hdim, sc.hidden, (derive_seed(seed, "critic", 0), derive_seed(seed, "critic", 1)), sc.lr, hscale, state_field="history")
            self.guiding = None
            self.distill = None
        self.control = make_policy(hdim, sc.hidden, derive_seed(seed, "control", 0), sc.lr, hscale)
        self.temperature = EntropyTemperature(sc.alpha, sc.alpha_mode, sc.target_entropy, sc.lr)
        self.ensemble = None
        if cfg.ensemble_enabled:
            e = cfg.ensemble
            seeds = [derive_seed(seed, "ensemble", i) for i in range(e.size)]
            self.ensemble = Ensemble(self.k, e.size, seeds, e.hidden, e.lr, e.target_mode)
        self.schedule: GuidanceSchedule | None = cfg.schedule_for_method()
        self.buffer = ReplayBuffer(sc.buffer_size, self.k)
        self.warmup = WarmupBuffer(cfg.guidance.warmup)
        self.policy = DeployedPolicy(self.control)
        self.lambda_trace: list[float] = []
        self.u_trace: list[float | None] = []
        self.evals: list[EvalRecord] = []
        self.privileged_reads_eval = 0
        self._last_losses: dict = {}

    # -- pieces of one training step ---------------------------------
    def _next_sampler(self, batch):
        noise = self.agent_rng.standard_normal((len(batch), 2))
        if self.guiding is not None:
            return self.guiding.sample(batch.next_full_state, noise)
        return self.control.sample(batch.next_history, noise)

    def _gradient_updates(self, lam: float | None) -> dict:
        sc = self.cfg.sac
        alpha = self.temperature.alpha
        out = {}
        for _ in range(sc.updates_per_step):
            batch = self.buffer.sample_batch(sc.batch_size, self.agent_rng)
            y = td_target(batch, self.critic, self._next_sampler, alpha, sc.gamma)
            l1, l2 = critic_update(batch, self.critic, y)
            out["critic_loss"] = 0.5 * (l1 + l2)
            if self.guiding is not None:
                noise = self.agent_rng.standard_normal((len(batch), 2))
                res = actor_update(self.guiding, self.critic, batch.full_state, batch.full_state, alpha, noise)
                log_probs = res.log_probs
            noise = self.agent_rng.standard_normal((len(batch), 2))
            cres = control_loss_grads(batch, self.control, self.critic, self.distill, alpha, lam or 0.0, noise)
            if not np.isfinite(cres.loss):
                raise NumericalAbort("non-finite control loss", {"component": "control"})
            self.control.step(cres.grads)
            out["control_loss"] = cres.loss
            if self.guiding is None:
                log_probs = cres.log_probs
            else:
                out["distill_loss"] = distillation_update(batch, self.distill, self.guiding)
            entropy_update(self.temperature, log_probs)
            self.critic.update_targets(sc.polyak)
        return out

    def _evaluate(self, step: int) -> EvalRecord:
        before = self.guiding.calls if self.guiding is not None else 0
        rec = evaluate(
            self.policy, self.cfg.env, self.level, self.cfg.schedule.eval_episodes,
            self.cfg.seed, len(self.evals), self.k, step,
        )
        if self.guiding is not None:
            self.privileged_reads_eval += self.guiding.calls - before
        return rec

    # -- main loop ----------------------------------------------------
    def run(self, out_dir) -> tuple[RunSummary, RunPaths]:
        cfg = self.cfg
        paths = RunPaths.at(out_dir)
        paths.root.mkdir(parents=True, exist_ok=True)
        paths.config_ini.write_text(cfg.to_ini())
        with open(paths.train_csv, "w", newline="") as ftrain, open(paths.eval_csv, "w", newline="") as feval, \
                open(paths.episodes_csv, "w", newline="") as fep:
            wtrain, weval, wep = csv.writer(ftrain, lineterminator="\n"), csv.writer(feval, lineterminator="\n"), csv.writer(fep, lineterminator="\n")
            wtrain.writerow(TRAIN_COLUMNS)
            weval.writerow(EVAL_COLUMNS)
            wep.writerow(EPISODE_COLUMNS)
            try:
                self._loop(wtrain, weval, wep, ftrain)
            except NumericalAbort as exc:
                snap = {"message": str(exc), **exc.snapshot, "last_losses": self._last_losses}
                (paths.root / "abort.json").write_text(json.dumps(snap, indent=2, default=str))
                raise
        self._save_artifacts(paths)
        summary = self.summarize()
        paths.summary_json.write_text(json.dumps(summary.to_dict(), indent=2))
        return summary, paths

    def _loop(self, wtrain, weval, wep, ftrain) -> None:
        cfg = self.cfg
        W = cfg.guidance.warmup
        sched = self.schedule
        ens = self.ensemble
        hist = ObservationHistory(self.k)
        state = self.env.reset(int(self.env_rng.integers(2**63)))
        hist.push(observe_masked(state, self.level, self.obs_rng)[0])
        for t in range(cfg.schedule.total_steps):
            h = hist.flatten()
            action, tag = select_action(t, self.guiding, self.control, state, h, self.agent_rng)
            res = self.env.step(action)
            obs, mask = observe_masked(res.next_state, self.level, self.obs_rng)
            hist.push(obs)
            h_next = hist.flatten()
            self.buffer.push(Transition(state, h, action, res.reward, res.next_state, h_next, res.terminated, mask))

            u = None
            if ens is not None and ens.n >= 2:
                u = disagreement(ensemble_predict(ens, h, action))
                if t < W:
                    self.warmup.add(u)
            if sched is not None and t == W and sched.needs_uncertainty:
                if sched.kind == "adaptive":
                    sched.calibration = calibrate(self.warmup)
                else:
                    sched.tau = threshold_from_warmup(self.warmup)
                log.info("calibrated at step %d: %s", t, sched.calibration or sched.tau)
            lam = lambda_at(sched, t, u) if sched is not None else None
            if lam is not None:
                self.lambda_trace.append(lam)
            self.u_trace.append(u)

            losses = {}
            try:
                if t >= W:
                    losses = self._gradient_updates(lam)
                # the dynamics ensemble is not an RL network, so it trains through warmup too
                if ens is not None:
                    ensemble_update(ens, self.buffer, cfg.ensemble_batch, self.ens_rng)
            except NumericalAbort as exc:
                exc.snapshot.setdefault("step", t)
                raise
            if losses:
                self._last_losses = losses
            wtrain.writerow([
                t, tag, _cell(res.reward), _cell(lam), _cell(u),
                _cell(losses.get("critic_loss")), _cell(losses.get("control_loss")), _cell(losses.get("distill_loss")),
            ])

            if res.terminated or res.truncated:
                hist.reset()
                state = self.env.reset(int(self.env_rng.integers(2**63)))
                hist.push(observe_masked(state, self.level, self.obs_rng)[0])
            else:
                state = res.next_state

            if (t + 1) % cfg.schedule.eval_every == 0:
                rec = self._evaluate(t + 1)
                self.evals.append(rec)
                weval.writerow([rec.step, _cell(rec.mean_return), _cell(rec.return_std), _cell(rec.collision_rate)])
                for i, (r, c) in enumerate(zip(rec.returns, rec.collisions)):
                    wep.writerow([rec.step, i, _cell(r), int(c)])
                ftrain.flush()
                log.info("step %d eval mean %.2f", t + 1, rec.mean_return)

    def _save_artifacts(self, paths: RunPaths) -> None:
        arrays = {
            "control": self.control.params,
            "critic_q1": self.critic.q1.params,
            "critic_q2": self.critic.q2.params,
        }
        if self.guiding is not None:
            arrays["guiding"] = self.guiding.params
            arrays["distill"] = self.distill.params
        if self.ensemble is not None:
            for i, m in enumerate(self.ensemble.members):
                arrays[f"ensemble_{i}"] = m.params
        if self.schedule is not None and self.schedule.calibration is not None:
            arrays["calibration"] = np.array([self.schedule.calibration.u_lo, self.schedule.calibration.u_hi])
        np.savez(paths.model_npz, **arrays)
        if len(self.buffer):
            b = self.buffer.contents()
            n = min(len(b), self.cfg.ensemble.report_samples)
            sl = slice(len(b) - n, len(b))
            np.savez(
                paths.replay_npz,
                **{name: getattr(b, name)[sl] for name in (
                    "full_state", "history", "action", "reward", "next_full_state", "next_history", "done", "occlusion_mask")},
            )

    def summarize(self) -> RunSummary:
        avg, std = last5(self.evals)
        tail = self.evals[-5:]
        act = post = None
        if self.lambda_trace:
            act = lambda_activity(self.lambda_trace, self.cfg.guidance.lambda_min)
            W = self.cfg.guidance.warmup
            if len(self.lambda_trace) > W:
                post = lambda_activity(self.lambda_trace[W:], self.cfg.guidance.lambda_min)
        return RunSummary(
            last5_avg=avg,
            last5_std=std,
            best_return=max(e.mean_return for e in self.evals),
            collision_rate_last5=float(np.mean([e.collision_rate for e in tail])),
            lambda_activity_fraction=act,
            lambda_activity_post_warmup=post,
            disagreement=disagreement_summary(self.u_trace),
            n_evals=len(self.evals),
            privileged_reads_eval=self.privileged_reads_eval,
            meta={
                "method": self.cfg.method.name,
                "level": self.level.name,
                "seed": self.cfg.seed,
                "history_len": self.k,
                "total_steps": self.cfg.schedule.total_steps,
                "config_hash": self.cfg.config_hash(),
            },
        )


def train_run(cfg: RunConfig, out_dir) -> tuple[RunSummary, RunPaths]:
    """Execute one seeded run and write its traces under ``out_dir``."""
    return Trainer(cfg).run(out_dir)


def load_run(run_dir) -> tuple[RunConfig, dict]:
    paths = RunPaths.at(run_dir)
    for p in (paths.config_ini, paths.model_npz):
        if not p.is_file():
            raise MissingArtifacts(f"missing {p.name} in {paths.root}")
    cfg = cfgmod.load(paths.config_ini)
    with np.load(paths.model_npz) as data:
        arrays = {k: data[k] for k in data.files}
    return cfg, arrays


def restore_trainer(run_dir) -> Trainer:
    """Rebuild a Trainer with the final network weights of a finished run."""
    cfg, arrays = load_run(run_dir)
    tr = Trainer(cfg)
    tr.control.mlp.load(arrays["control"])
    tr.critic.q1.mlp.load(arrays["critic_q1"])
    tr.critic.q2.mlp.load(arrays["critic_q2"])
    if tr.guiding is not None:
        tr.guiding.mlp.load(arrays["guiding"])
        tr.distill.mlp.load(arrays["distill"])
    if tr.ensemble is not None:
        for i, m in enumerate(tr.ensemble.members):
            m.load(arrays[f"ensemble_{i}"])
    return tr


def evaluate_run(run_dir, episodes: int | None = None, eval_index: int = 10_000) -> EvalRecord:
    tr = restore_trainer(run_dir)
    cfg = tr.cfg
    n = episodes or cfg.schedule.eval_episodes
    return evaluate(tr.policy, cfg.env, tr.level, n, cfg.seed, eval_index, tr.k, cfg.schedule.total_steps)
