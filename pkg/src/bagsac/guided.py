"""Dual-actor guided SAC: privileged guiding actor, history-conditioned
control actor, distillation network, alternating interaction and the
lambda-weighted control objective."""

from __future__ import annotations

import numpy as np

from .errors import ContractViolation, NumericalAbort
from .highway import ACTION_DIM
from .numerics import Mlp
from .replay import Batch
from .sac import Critic, GaussianPolicy, Network, PolicyLoss, policy_loss_grads

GUIDING = "guiding"
CONTROL = "control"


class DistillationNet(Network):
    """Deterministic imitation of the guiding actor's mean action from histories."""

    @classmethod
    def create(cls, input_dim: int, hidden: int, seed: int, lr: float, input_scale=None) -> "DistillationNet":
        mlp = Mlp([input_dim, hidden, hidden, ACTION_DIM], "relu", seed=seed)
        return cls(mlp, lr, input_scale)

    def predict(self, histories) -> np.ndarray:
        return np.tanh(self(histories))


def select_action(
    t: int,
    guiding: GaussianPolicy | None,
    control: GaussianPolicy,
    full_state,
    history,
    rng: np.random.Generator | None,
    deterministic: bool = False,
) -> tuple[np.ndarray, str]:
    """Even steps act with the guiding actor, odd steps with the control actor.

    ``deterministic`` is the deployment rule: the control actor's squashed
    mean, computed from the history alone. Without a guiding actor (plain
    SAC) the control actor acts at every step.
    """
    if deterministic:
        return control.mean_action(history), CONTROL
    noise = rng.standard_normal(ACTION_DIM)
    if guiding is not None and t % 2 == 0:
        action, _ = guiding.sample(full_state, noise)
        return action, GUIDING
    action, _ = control.sample(history, noise)
    return action, CONTROL


def distillation_targets(guiding: GaussianPolicy, full_states) -> np.ndarray:
    return guiding.mean_action(full_states)


def distillation_loss_grads(distill: DistillationNet, histories, targets) -> tuple[float, np.ndarray]:
    raw, tape = distill.forward(histories)
    pred = np.tanh(raw)
    diff = pred - targets
    n = diff.shape[0]
    loss = float(np.mean(np.sum(diff * diff, axis=1)))
    grads, _ = distill.backward(tape, (2.0 / n) * diff * (1.0 - pred * pred))
    return loss, grads


def distillation_update(batch: Batch, distill: DistillationNet, guiding: GaussianPolicy) -> float:
    """Regress D(h) onto tanh(mean of pi_g(s)); the guiding actor is untouched."""
    if len(batch) == 0:
        raise ContractViolation("empty batch")
    targets = distillation_targets(guiding, batch.full_state)
    loss, grads = distillation_loss_grads(distill, batch.history, targets)
    if not np.isfinite(loss):
        raise NumericalAbort("non-finite distillation loss", {"component": "distill", "loss": loss})
    distill.step(grads)
    return loss


def control_loss_grads(batch: Batch, control, critic: Critic, distill, alpha, lambda_t, noise) -> PolicyLoss:
    targets = None if distill is None else distill.predict(batch.history)
    return policy_loss_grads(
        control, critic, batch.history, critic.states(batch), alpha, noise, targets, lambda_t
    )


def control_actor_update(
    batch: Batch,
    control: GaussianPolicy,
    critic: Critic,
    distill: DistillationNet | None,
    alpha: float,
    lambda_t: float,
    noise,
) -> tuple[float, float]:
    """Step on the lambda-weighted control objective. Returns (J_c, distill term).

    Q is evaluated at the critic's own state column (full state for the
    CTDE critic). The distill term is the unweighted ``mean ||mu_c - D||^2``.
    """
    if lambda_t < 0:
        raise ContractViolation(f"lambda must be >= 0, got {lambda_t}")
    if len(batch) == 0:
        raise ContractViolation("empty batch")
    res = control_loss_grads(batch, control, critic, distill, alpha, lambda_t, noise)
    if not np.isfinite(res.loss):
        raise NumericalAbort("non-finite control loss", {"component": "control", "loss": res.loss})
    control.step(res.grads)
    return res.loss, res.distill_term
