"""Latent-space energy minimization under target functions on the q-vector.

The energy is E(x) = T(A(g(x, z))) + alpha * KL(x || N(0, I)) minimized by
Adam over x = (mu, logvar). Targets: soft-max T-, soft-min T+, spread T+-,
q-sum S+/S-, and single-action maximization.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigError, InputError, NumericError
from .generator import kl_node, kl_to_standard_normal
from .nn import AdamState, Tape, Tensor, backward
from .nn.tensor import add, div, exp, mul, narrow, neg, reshape, sub, tsum


class TargetKind(Enum):
    ACTION_MAX = "action-max"
    T_PLUS = "t+"
    T_MINUS = "t-"
    T_PM = "t+-"
    S_PLUS = "s+"
    S_MINUS = "s-"


_T_FAMILY = (TargetKind.T_PLUS, TargetKind.T_MINUS, TargetKind.T_PM)


@dataclass(frozen=True)
class TargetSpec:
    kind: TargetKind
    action: int = -1
    beta: float = 10.0

    def __post_init__(self):
        if self.kind in _T_FAMILY and not self.beta > 0:
            raise ConfigError(f"beta must be > 0 for {self.kind.value}, got {self.beta}")
        if self.kind is TargetKind.ACTION_MAX and self.action < 0:
            raise ConfigError("action-max target requires a nonnegative action id")

    @staticmethod
    def parse(text, beta=10.0):
        """Parse CLI syntax: action:<id>, t+, t-, t+-, s+, s-."""
        if text.startswith("action:"):
            return TargetSpec(TargetKind.ACTION_MAX, action=int(text.split(":", 1)[1]), beta=beta)
        try:
            return TargetSpec(TargetKind(text), beta=beta)
        except ValueError:
            raise InputError(f"unknown target {text!r}") from None

    def label(self):
        if self.kind is TargetKind.ACTION_MAX:
            return f"action:{self.action}"
        return self.kind.value


# ---------------------------------------------------------------------------
# Scalar target functions on plain q-vectors

def t_minus(q, beta):
    """softmax(beta*q)-weighted average of q: the soft maximum coordinate."""
    q = np.asarray(q, dtype=np.float64)
    if q.size == 0:
        raise InputError("target function requires a nonempty q-vector")
    w = np.exp(beta * (q - q.max()))
    return float((q * w).sum() / w.sum())


def t_plus(q, beta):
    """Soft minimum: exactly -t_minus(-q, beta)."""
    return -t_minus(np.negative(np.asarray(q, dtype=np.float64)), beta)


def t_pm(q, beta):
    """Spread between soft maximum and soft minimum; >= 0."""
    return t_minus(q, beta) - t_plus(q, beta)


def s_plus(q):
    q = np.asarray(q, dtype=np.float64)
    if q.size == 0:
        raise InputError("target function requires a nonempty q-vector")
    return float(q.sum())


def s_minus(q):
    return -s_plus(q)


def action_max_target(q, action):
    q = np.asarray(q, dtype=np.float64)
    if not 0 <= action < q.size:
        raise InputError(f"action {action} out of range for {q.size} actions")
    return float(-q[action])


def target_value(spec: TargetSpec, q):
    """Evaluate the target as a plain number (used for retrieval metrics)."""
    if spec.kind is TargetKind.ACTION_MAX:
        return action_max_target(q, spec.action)
    if spec.kind is TargetKind.T_MINUS:
        return t_minus(q, spec.beta)
    if spec.kind is TargetKind.T_PLUS:
        return t_plus(q, spec.beta)
    if spec.kind is TargetKind.T_PM:
        return t_pm(q, spec.beta)
    if spec.kind is TargetKind.S_PLUS:
        return s_plus(q)
    return s_minus(q)


# ---------------------------------------------------------------------------
# Differentiable target nodes

def _t_minus_node(q, beta, tape):
    shift = float(q.data.max())  # constant w.r.t. gradients; cancels exactly
    w = exp(mul(sub(q, shift, tape), beta, tape), tape)
    num = tsum(mul(q, w, tape), tape=tape)
    den = tsum(w, tape=tape)
    return div(num, den, tape)


def target_node(spec: TargetSpec, q, tape):
    """Build the target as a scalar node over a length-m q tensor."""
    if q.data.ndim == 2:
        q = reshape(q, (q.shape[1],), tape)
    if q.size == 0:
        raise InputError("target function requires a nonempty q-vector")
    kind = spec.kind
    if kind is TargetKind.ACTION_MAX:
        if not 0 <= spec.action < q.size:
            raise InputError(f"action {spec.action} out of range for {q.size} actions")
        return neg(narrow(q, 0, spec.action, 1, tape), tape)
    if kind is TargetKind.T_MINUS:
        return _t_minus_node(q, spec.beta, tape)
    if kind is TargetKind.T_PLUS:
        return neg(_t_minus_node(neg(q, tape), spec.beta, tape), tape)
    if kind is TargetKind.T_PM:
        tm = _t_minus_node(q, spec.beta, tape)
        tp = neg(_t_minus_node(neg(q, tape), spec.beta, tape), tape)
        return sub(tm, tp, tape)
    if kind is TargetKind.S_PLUS:
        return tsum(q, tape=tape)
    return neg(tsum(q, tape=tape), tape)


# ---------------------------------------------------------------------------
# Energy and the synthesis loop

@dataclass
class LatentPoint:
    mu: Tensor
    logvar: Tensor

    @staticmethod
    def from_arrays(mu, logvar):
        return LatentPoint(Tensor(np.asarray(mu, dtype=np.float32), requires_grad=True),
                           Tensor(np.asarray(logvar, dtype=np.float32), requires_grad=True))


def latent_regularizer(mu, logvar):
    """KL(x || N(0, I)) on the optimized latent point (same closed form as the
    generator's KL term)."""
    return kl_to_standard_normal(mu, logvar)


def energy_node(x: LatentPoint, z, gen, qnet, target: TargetSpec, alpha, tape,
                mode=None):
    """E(x) = T(A(g(x, z))) + alpha*R(x) as a differentiable scalar node."""
    mu2 = reshape(x.mu, (1, -1), tape)
    logvar2 = reshape(x.logvar, (1, -1), tape)
    s_hat = gen.decode_t(mu2, logvar2, Tensor(np.asarray(z, dtype=np.float32)[None]),
                         tape, train=False)
    q = qnet.forward_t(s_hat, tape)
    t_node = reshape(target_node(target, q, tape), (), tape)
    r_node = kl_node(mu2, logvar2, tape)
    e = add(t_node, mul(r_node, alpha, tape), tape)
    return e, s_hat, q


def energy(x: LatentPoint, z, gen, qnet, target: TargetSpec, alpha):
    """Evaluate the energy without recording gradients."""
    tape = Tape()
    e, _, _ = energy_node(x, z, gen, qnet, target, alpha, tape)
    val = e.item()
    if not np.isfinite(val):
        raise NumericError(f"non-finite energy {val}")
    return val


class ZPolicy(Enum):
    FIXED_SEED = "fixed-seed"
    RESAMPLE_PER_STEP = "resample-per-step"


@dataclass
class SynthesisConfig:
    alpha: float = 1e-2
    steps: int = 200
    lr: float = 1e-2
    samples: int = 16
    z_policy: ZPolicy = ZPolicy.FIXED_SEED
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if isinstance(self.z_policy, str):
            self.z_policy = ZPolicy(self.z_policy)
        if self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if self.steps < 0 or self.samples < 1:
            raise ConfigError("steps must be >= 0 and samples >= 1")


@dataclass
class SynthesisResult:
    state: np.ndarray          # decoded observation (k, H, W)
    q: np.ndarray              # agent q-vector on the decoded state
    energies: list             # energy value per optimization step (incl. initial)
    mu: np.ndarray
    logvar: np.ndarray
    diverged: bool = False


def synthesize(gen, qnet, target: TargetSpec, config: SynthesisConfig):
    """Optimize prior-drawn latent points against the energy; deterministic
    given the config seed. Returns one SynthesisResult per requested sample."""
    n = gen.latent_dim
    results = []
    for i in range(config.samples):
        rng = np.random.default_rng([config.seed, i])
        x = LatentPoint.from_arrays(rng.standard_normal(n), np.zeros(n))
        z0 = rng.standard_normal(n)
        opt = AdamState([x.mu, x.logvar], lr=config.lr, beta1=config.adam_beta1,
                        beta2=config.adam_beta2, eps=config.adam_eps)
        energies = []
        best = (np.inf, x.mu.data.copy(), x.logvar.data.copy())
        diverged = False
        z = z0
        for step in range(config.steps):
            if config.z_policy is ZPolicy.RESAMPLE_PER_STEP:
                z = rng.standard_normal(n)
            tape = Tape()
            e, _, _ = energy_node(x, z, gen, qnet, target, config.alpha, tape)
            val = e.item()
            if not np.isfinite(val):
                diverged = True
                break
            energies.append(val)
            if val < best[0]:
                best = (val, x.mu.data.copy(), x.logvar.data.copy())
            backward(tape, e)
            opt.step()
            opt.zero_grad()
        if diverged:
            x = LatentPoint.from_arrays(best[1], best[2])
        final_e = energy(x, z0, gen, qnet, target, config.alpha)
        energies.append(final_e)
        state = gen.decode(x.mu.data, x.logvar.data, z0)
        q = qnet.q_values(state)
        results.append(SynthesisResult(state=state, q=q, energies=energies,
                                       mu=x.mu.data.copy(), logvar=x.logvar.data.copy(),
                                       diverged=diverged))
    return results
