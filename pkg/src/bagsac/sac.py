"""Soft actor-critic pieces shared by every method: twin-Q critic with Polyak
targets, squashed-Gaussian actors, TD targets and the temperature update."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ContractViolation, NumericalAbort
from .highway import ACTION_DIM, N_NEIGHBORS
from .numerics import AdamState, Mlp, SquashedGaussianParams, adam_step, polyak_update
from .numerics import squashed_gaussian_backward, squashed_gaussian_sample
from .replay import Batch

# per-column scale of the kinematics rows: presence, x, y, vx, vy
_ROW_SCALE = np.array([1.0, 1.0 / 100.0, 1.0 / 10.0, 1.0 / 30.0, 1.0 / 10.0])
STATE_SCALE = np.tile(_ROW_SCALE, N_NEIGHBORS + 1)


def history_scale(k: int) -> np.ndarray:
    return np.tile(STATE_SCALE, k)


class Network:
    """An Mlp with its Adam state and a fixed elementwise input scale."""

    def __init__(self, mlp: Mlp, lr: float = 3e-4, input_scale: np.ndarray | None = None, trainable: bool = True):
        self.mlp = mlp
        self.calls = 0  # forward passes; lets evaluation prove a net was never consulted
        self.adam = AdamState.zeros(mlp.n_params, lr) if trainable else None
        self.input_scale = None if input_scale is None else np.asarray(input_scale, dtype=np.float64)
        if self.input_scale is not None and self.input_scale.shape != (mlp.input_size,):
            raise ContractViolation("input scale length must equal the network input size")

    def _scaled(self, x):
        x = np.asarray(x, dtype=np.float64)
        return x if self.input_scale is None else x * self.input_scale

    def forward(self, x):
        self.calls += 1
        return self.mlp.forward(self._scaled(x))

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, tape, output_grad, input_grad=False):
        grads, gin = self.mlp.backward(tape, output_grad, input_grad=input_grad)
        if gin is not None and self.input_scale is not None:
            gin = gin * self.input_scale
        return grads, gin

    def step(self, grads) -> None:
        if self.adam is None:
            raise ContractViolation("network is not trainable (target copy)")
        adam_step(self.adam, self.mlp, grads)

    @property
    def params(self) -> np.ndarray:
        return self.mlp.params


class GaussianPolicy(Network):
    """Actor head emitting (mean, log_std) for a tanh-squashed Gaussian."""

    def dist(self, x) -> tuple[SquashedGaussianParams, object]:
        out, tape = self.forward(x)
        return SquashedGaussianParams.from_output(out), tape

    def sample(self, x, noise) -> tuple[np.ndarray, np.ndarray]:
        params, _ = self.dist(x)
        return squashed_gaussian_sample(params, noise)

    def mean_action(self, x) -> np.ndarray:
        params, _ = self.dist(x)
        return np.tanh(params.mean)


def make_policy(input_dim: int, hidden: int, seed: int, lr: float, input_scale=None) -> GaussianPolicy:
    mlp = Mlp([input_dim, hidden, hidden, 2 * ACTION_DIM], "relu", seed=seed)
    return GaussianPolicy(mlp, lr, input_scale)


@dataclass
class Critic:
    """Twin Q networks over ``state ⊕ action`` with Polyak-averaged targets.

    ``state_field`` names the Batch column the critic reads: ``full_state``
    for the privileged CTDE critic, ``history`` for plain SAC.
    """

    q1: Network
    q2: Network
    target_q1: Network
    target_q2: Network
    state_field: str = "full_state"

    @classmethod
    def create(cls, state_dim: int, hidden: int, seeds: tuple[int, int], lr: float, state_scale=None, state_field="full_state"):
        scale = None
        if state_scale is not None:
            scale = np.concatenate([state_scale, np.ones(ACTION_DIM)])
        nets = []
        for seed in seeds:
            mlp = Mlp([state_dim + ACTION_DIM, hidden, hidden, 1], "relu", seed=seed)
            nets.append(Network(mlp, lr, scale))
        targets = [Network(n.mlp.copy(), lr, scale, trainable=False) for n in nets]
        return cls(nets[0], nets[1], targets[0], targets[1], state_field)

    def states(self, batch: Batch, next_: bool = False) -> np.ndarray:
        return getattr(batch, ("next_" if next_ else "") + self.state_field)

    def q_values(self, states, actions, target: bool = False):
        x = np.concatenate([states, actions], axis=-1)
        a, b = (self.target_q1, self.target_q2) if target else (self.q1, self.q2)
        return a(x)[..., 0], b(x)[..., 0]

    def update_targets(self, rho: float) -> None:
        polyak_update(self.target_q1.mlp, self.q1.mlp, rho)
        polyak_update(self.target_q2.mlp, self.q2.mlp, rho)


@dataclass
class EntropyTemperature:
    alpha: float = 0.2
    mode: str = "fixed"
    target_entropy: float = -float(ACTION_DIM)
    lr: float = 3e-4
    adam: AdamState = field(default=None, repr=False)

    def __post_init__(self):
        if self.alpha <= 0:
            raise ContractViolation("alpha must be positive")
        if self.mode not in ("fixed", "auto"):
            raise ContractViolation(f"unknown temperature mode {self.mode!r}")
        self._log_alpha = np.array([np.log(self.alpha)])
        if self.adam is None:
            self.adam = AdamState.zeros(1, self.lr)


def entropy_update(temp: EntropyTemperature, batch_log_probs) -> float:
    """Gradient step on log-alpha toward the target entropy (auto mode only)."""
    if temp.mode != "auto":
        return temp.alpha
    mean_lp = float(np.mean(batch_log_probs))
    grad = np.array([-(mean_lp + temp.target_entropy)])
    adam_step(temp.adam, temp._log_alpha, grad)
    temp.alpha = float(np.exp(temp._log_alpha[0]))
    return temp.alpha


def _check_finite(values: np.ndarray, what: str) -> None:
    bad = ~np.isfinite(values)
    if bad.any():
        idx = int(np.flatnonzero(bad.reshape(len(values), -1).any(axis=1))[0])
        raise NumericalAbort(f"non-finite {what} at batch index {idx}", {"component": what, "batch_index": idx})


def td_target(
    batch: Batch,
    critic: Critic,
    next_action_sampler: Callable[[Batch], tuple[np.ndarray, np.ndarray]],
    alpha: float,
    gamma: float,
) -> np.ndarray:
    """y = r + gamma (1 - done) (min target Q(s', a') - alpha log pi(a'|s')).

    ``next_action_sampler(batch)`` returns ``(a', log_prob(a'))`` drawn from
    the guiding actor (or the only actor for plain SAC).
    """
    if len(batch) == 0:
        raise ContractViolation("empty batch")
    next_a, next_lp = next_action_sampler(batch)
    tq1, tq2 = critic.q_values(critic.states(batch, next_=True), next_a, target=True)
    soft = np.minimum(tq1, tq2) - alpha * next_lp
    y = batch.reward + gamma * (1.0 - batch.done.astype(np.float64)) * soft
    _check_finite(y, "td target")
    return y


def critic_loss_grads(critic: Critic, states, actions, targets):
    """MSE of both online Q nets to ``targets``; returns (l1, l2, g1, g2)."""
    x = np.concatenate([states, actions], axis=-1)
    n = x.shape[0]
    out = []
    for net in (critic.q1, critic.q2):
        q, tape = net.forward(x)
        err = q[:, 0] - targets
        loss = float(np.mean(err * err))
        grads, _ = net.backward(tape, (2.0 / n) * err[:, None])
        out.append((loss, grads))
    return out[0][0], out[1][0], out[0][1], out[1][1]


def critic_update(batch: Batch, critic: Critic, targets) -> tuple[float, float]:
    """One Adam step for each Q net; returns the pre-step losses."""
    l1, l2, g1, g2 = critic_loss_grads(critic, critic.states(batch), batch.action, targets)
    if not (np.isfinite(l1) and np.isfinite(l2)):
        raise NumericalAbort("non-finite critic loss", {"component": "critic", "losses": [l1, l2]})
    critic.q1.step(g1)
    critic.q2.step(g2)
    return l1, l2


@dataclass
class PolicyLoss:
    loss: float
    grads: np.ndarray
    log_probs: np.ndarray
    distill_term: float = 0.0


def policy_loss_grads(
    actor: GaussianPolicy,
    critic: Critic,
    actor_inputs,
    critic_states,
    alpha: float,
    noise,
    distill_targets=None,
    lam: float = 0.0,
) -> PolicyLoss:
    """mean(alpha log pi(a~|x) - min Q(s, a~)) + lam * mean ||tanh(mu(x)) - D||^2.

    Critic parameters are read only. ``distill_targets`` are treated as
    constants.
    """
    params, tape = actor.dist(actor_inputs)
    action, log_prob = squashed_gaussian_sample(params, noise)
    n = action.shape[0]
    x = np.concatenate([critic_states, action], axis=-1)
    q1, t1 = critic.q1.forward(x)
    q2, t2 = critic.q2.forward(x)
    q1, q2 = q1[:, 0], q2[:, 0]
    use1 = q1 <= q2
    qmin = np.where(use1, q1, q2)
    loss = float(np.mean(alpha * log_prob - qmin))
    w1 = use1.astype(np.float64)[:, None] / n
    _, gin1 = critic.q1.backward(t1, -w1, input_grad=True)
    _, gin2 = critic.q2.backward(t2, w1 - 1.0 / n, input_grad=True)
    grad_action = (gin1 + gin2)[:, -ACTION_DIM:]
    grad_lp = np.full(n, alpha / n)
    g_mean, g_log_std = squashed_gaussian_backward(params, noise, grad_action, grad_lp)
    distill_term = 0.0
    if distill_targets is not None:
        mu = np.tanh(params.mean)
        diff = mu - distill_targets
        distill_term = float(np.mean(np.sum(diff * diff, axis=1)))
        if lam != 0.0:
            loss += lam * distill_term
            g_mean = g_mean + (2.0 * lam / n) * diff * (1.0 - mu * mu)
    grads, _ = actor.backward(tape, np.concatenate([g_mean, g_log_std], axis=1))
    return PolicyLoss(loss, grads, log_prob, distill_term)


def actor_update(actor, critic, actor_inputs, critic_states, alpha, noise) -> PolicyLoss:
    res = policy_loss_grads(actor, critic, actor_inputs, critic_states, alpha, noise)
    if not np.isfinite(res.loss):
        raise NumericalAbort("non-finite actor loss", {"component": "actor", "loss": res.loss})
    actor.step(res.grads)
    return res


def guiding_actor_update(batch: Batch, actor: GaussianPolicy, critic: Critic, alpha: float, noise) -> tuple[float, np.ndarray]:
    """Max-entropy step for the privileged actor. Returns (loss, log-probs)."""
    if len(batch) == 0:
        raise ContractViolation("empty batch")
    res = actor_update(actor, critic, batch.full_state, batch.full_state, alpha, noise)
    return res.loss, res.log_probs

