"""Dense MLP kernel: forward/backward with an explicit tape, Adam, Polyak
averaging and tanh-squashed Gaussian policy math.

Everything runs in float64. Parameters of one network live in a single flat
vector; per-layer weight and bias arrays are views into it, so optimizers and
target averaging work on one contiguous buffer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .errors import ContractViolation, NumericalAbort

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_LOG2 = math.log(2.0)

ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class Tape:
    """Activations recorded by :meth:`Mlp.forward`, consumed by backward."""

    owner_id: int
    version: int
    activations: tuple  # input of every layer, each (batch, n_in)
    squeeze: bool


class Mlp:
    """Fully connected network with a linear output layer."""

    def __init__(
        self,
        layer_sizes: Sequence[int],
        hidden_activation: str = "relu",
        seed: int | None = None,
        params: np.ndarray | None = None,
    ):
        sizes = tuple(int(n) for n in layer_sizes)
        if len(sizes) < 2 or any(n <= 0 for n in sizes):
            raise ContractViolation(f"layer sizes must be >= 2 positive ints, got {layer_sizes}")
        if hidden_activation not in ACTIVATIONS:
            raise ContractViolation(f"unknown activation {hidden_activation!r}")
        self.layer_sizes = sizes
        self.hidden_activation = hidden_activation
        self.n_params = sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))
        self.params = np.zeros(self.n_params)
        self.weights, self.biases, self._offsets = self._make_views(self.params)
        self.version = 0
        if params is not None:
            self.load(params)
        else:
            self._init_uniform(np.random.default_rng(seed))

    def _make_views(self, flat):
        weights, biases, offsets = [], [], []
        pos = 0
        for n_in, n_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            offsets.append(pos)
            weights.append(flat[pos : pos + n_in * n_out].reshape(n_in, n_out))
            pos += n_in * n_out
            biases.append(flat[pos : pos + n_out])
            pos += n_out
        return weights, biases, offsets

    def _init_uniform(self, rng):
        # fan-in uniform, same bound for weights and biases
        for w, b in zip(self.weights, self.biases):
            bound = 1.0 / math.sqrt(w.shape[0])
            w[...] = rng.uniform(-bound, bound, size=w.shape)
            b[...] = rng.uniform(-bound, bound, size=b.shape)
        self.version += 1

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def input_size(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_size(self) -> int:
        return self.layer_sizes[-1]

    def load(self, params) -> None:
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (self.n_params,):
            raise ContractViolation(f"expected {self.n_params} parameters, got shape {params.shape}")
        self.params[...] = params
        self.version += 1

    def touch(self) -> None:
        """Mark parameters as modified; outstanding tapes become stale."""
        self.version += 1

    def copy(self) -> "Mlp":
        return Mlp(self.layer_sizes, self.hidden_activation, params=self.params)

    def zeros_like_params(self) -> np.ndarray:
        return np.zeros(self.n_params)

    def layer_of(self, index: int) -> str:
        for layer in reversed(range(self.n_layers)):
            if index >= self._offsets[layer]:
                n_w = self.weights[layer].size
                kind = "weight" if index - self._offsets[layer] < n_w else "bias"
                return f"layer {layer} {kind}"
        raise IndexError(index)

    def _check_input(self, x):
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.input_size:
            raise ContractViolation(
                f"input shape {np.shape(x)} does not match network input size {self.input_size}"
            )
        if not np.isfinite(x).all():
            raise ContractViolation("non-finite network input")
        return x, squeeze

    def forward(self, x) -> tuple[np.ndarray, Tape]:
        x, squeeze = self._check_input(x)
        acts = [x]
        h = x
        last = self.n_layers - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.maximum(h, 0.0) if self.hidden_activation == "relu" else np.tanh(h)
                acts.append(h)
        tape = Tape(id(self), self.version, tuple(acts), squeeze)
        return (h[0] if squeeze else h), tape

    def __call__(self, x) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, tape: Tape, output_grad, input_grad: bool = True):
        """Backpropagate ``output_grad`` (dLoss/dOutput) through a recorded pass.

        Returns ``(param_grads, input_grads)``; ``param_grads`` is flat and laid
        out like ``self.params``. ``input_grads`` is None if not requested.
        """
        if tape.owner_id != id(self) or tape.version != self.version:
            raise ContractViolation("tape does not belong to this network state (stale or foreign)")
        g = np.asarray(output_grad, dtype=np.float64)
        if tape.squeeze:
            g = g[None, :]
        batch = tape.activations[0].shape[0]
        if g.shape != (batch, self.output_size):
            raise ContractViolation(f"output grad shape {g.shape} != {(batch, self.output_size)}")
        grads = np.empty(self.n_params)
        gw, gb, _ = self._make_views(grads)
        for i in reversed(range(self.n_layers)):
            a_in = tape.activations[i]
            np.matmul(a_in.T, g, out=gw[i])
            gb[i][...] = g.sum(axis=0)
            if i == 0 and not input_grad:
                break
            g = g @ self.weights[i].T
            if i > 0:
                if self.hidden_activation == "relu":
                    g = g * (a_in > 0.0)
                else:
                    g = g * (1.0 - a_in * a_in)
        if not input_grad:
            return grads, None
        return grads, (g[0] if tape.squeeze else g)


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    learning_rate: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros(cls, n_params: int, learning_rate: float = 3e-4, **kw) -> "AdamState":
        return cls(np.zeros(n_params), np.zeros(n_params), 0, learning_rate, **kw)


def _flat(params):
    if isinstance(params, Mlp):
        return params.params
    return params


def adam_step(state: AdamState, params, grads) -> np.ndarray:
    """One bias-corrected Adam update, in place. ``params`` is an Mlp or a flat array."""
    flat = _flat(params)
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != flat.shape or state.first_moment.shape != flat.shape:
        raise ContractViolation(
            f"shape mismatch: params {flat.shape}, grads {grads.shape}, moments {state.first_moment.shape}"
        )
    if not np.isfinite(grads).all():
        bad = int(np.flatnonzero(~np.isfinite(grads))[0])
        where = params.layer_of(bad) if isinstance(params, Mlp) else f"index {bad}"
        raise NumericalAbort(f"non-finite gradient at {where}", {"index": bad, "where": where})
    state.step_count += 1
    kernels.adam_update(
        flat,
        grads,
        state.first_moment,
        state.second_moment,
        state.learning_rate,
        state.beta1,
        state.beta2,
        state.epsilon,
        state.step_count,
    )
    if isinstance(params, Mlp):
        params.touch()
    return flat


def polyak_update(target, online, rho: float):
    """target <- rho * target + (1 - rho) * online, elementwise and in place."""
    if not 0.0 <= rho <= 1.0:
        raise ContractViolation(f"rho must lie in [0, 1], got {rho}")
    t, o = _flat(target), _flat(online)
    if t.shape != o.shape:
        raise ContractViolation(f"shape mismatch {t.shape} vs {o.shape}")
    kernels.polyak(t, o, float(rho))
    if isinstance(target, Mlp):
        target.touch()
    return target


@dataclass
class SquashedGaussianParams:
    """Pre-squash Gaussian; ``log_std`` already clamped.

    ``log_std_active`` marks entries strictly inside the clamp range, where
    gradients pass through.
    """

    mean: np.ndarray
    log_std: np.ndarray
    log_std_active: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        raw = np.asarray(self.log_std, dtype=np.float64)
        if self.log_std_active is None:
            self.log_std_active = (raw > LOG_STD_MIN) & (raw < LOG_STD_MAX)
        self.log_std = np.clip(raw, LOG_STD_MIN, LOG_STD_MAX)

    @classmethod
    def from_output(cls, out: np.ndarray) -> "SquashedGaussianParams":
        """Split a policy head output ``(..., 2d)`` into mean and log-std halves."""
        d = out.shape[-1] // 2
        return cls(out[..., :d], out[..., d:])

    @property
    def action_dim(self) -> int:
        return self.mean.shape[-1]


def _log1m_tanh_sq(u):
    # log(1 - tanh(u)^2) without cancellation
    return 2.0 * (_LOG2 - u - np.logaddexp(0.0, -2.0 * u))


def squashed_gaussian_sample(params: SquashedGaussianParams, noise) -> tuple[np.ndarray, np.ndarray]:
    """Reparameterised sample ``tanh(mean + std * noise)`` and its log-density.

    Works on single vectors (scalar log-prob) or batches ``(B, d)``.
    """
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != params.mean.shape:
        raise ContractViolation(f"noise shape {noise.shape} != mean shape {params.mean.shape}")
    u = params.mean + np.exp(params.log_std) * noise
    action = np.tanh(u)
    per_dim = -0.5 * noise * noise - params.log_std - _HALF_LOG_2PI - _log1m_tanh_sq(u)
    return action, per_dim.sum(axis=-1)


def squashed_gaussian_backward(params: SquashedGaussianParams, noise, grad_action, grad_log_prob):
    """Gradients of a loss w.r.t. (mean, raw log_std) given dL/daction, dL/dlog_prob.

    Noise is held fixed (reparameterisation). Entries of log_std sitting on
    the clamp get zero gradient.
    """
    noise = np.asarray(noise, dtype=np.float64)
    std = np.exp(params.log_std)
    u = params.mean + std * noise
    a = np.tanh(u)
    glp = np.asarray(grad_log_prob, dtype=np.float64)[..., None]
    grad_u = np.asarray(grad_action, dtype=np.float64) * (1.0 - a * a) + glp * (2.0 * a)
    grad_mean = grad_u
    grad_log_std = (grad_u * std * noise - glp) * params.log_std_active
    return grad_mean, grad_log_std
