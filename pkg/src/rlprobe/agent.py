"""Q-network, double-DQN training with replay, and dataset collection."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError, StateError, TrainingDiverged
from .io.dataset import FrameDataset, dequantize, quantize
from .nn import AdamState, Network, Tape, Tensor, backward
from .nn import layers as L
from .nn.tensor import gather_rows, huber, sub, tmean


@dataclass
class AgentConfig:
    gamma: float = 0.95
    steps: int = 60_000
    sync_period: int = 1000
    batch_size: int = 32
    lr: float = 1e-3
    replay_capacity: int = 20_000
    warmup: int = 1000
    eps_start: float = 1.0
    eps_end: float = 0.1
    eps_anneal_steps: int = 30_000
    update_every: int = 2
    huber_delta: float = 1.0
    conv_channels: tuple = (16, 32)
    hidden: int = 128
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError(f"discount must lie in (0, 1), got {self.gamma}")
        if self.sync_period < 1:
            raise ConfigError("target sync period must be >= 1")

    def epsilon_at(self, step):
        if step >= self.eps_anneal_steps:
            return self.eps_end
        frac = step / max(self.eps_anneal_steps, 1)
        return self.eps_start + frac * (self.eps_end - self.eps_start)


class QNetwork:
    """Action-value network A(s): stacked frames in, one q per action out.

    Default stack: two 3x3/stride-2 conv+ReLU stages and a dense head whose
    final layer starts at zero (so an untrained net outputs q = 0).
    """

    def __init__(self, obs_shape, n_actions, conv_channels=(16, 32), hidden=128,
                 rng=None, net=None):
        self.obs_shape = tuple(obs_shape)
        self.n_actions = int(n_actions)
        self.conv_channels = tuple(conv_channels)
        self.hidden = int(hidden)
        if net is not None:
            self.net = net
            return
        rng = rng if rng is not None else np.random.default_rng(0)
        k, h, w = self.obs_shape
        specs = []
        c_in = k
        for c_out in self.conv_channels:
            specs += [L.conv2d(c_in, c_out), L.relu_spec()]
            c_in = c_out
            h, w = (h + 1) // 2, (w + 1) // 2
        specs.append(L.flatten())
        feats = c_in * h * w
        if self.hidden > 0:
            specs += [L.dense(feats, self.hidden), L.relu_spec()]
            feats = self.hidden
        specs.append(L.dense(feats, self.n_actions, zero_init=True))
        self.net = Network(specs, rng=rng)

    # -- inference ----------------------------------------------------------
    def _batched(self, obs):
        obs = np.asarray(obs, dtype=np.float32)
        if obs.shape == self.obs_shape:
            return obs[None], True
        if obs.shape[1:] == self.obs_shape:
            return obs, False
        raise DimensionError(
            f"observation shape {obs.shape} does not match network input {self.obs_shape}")

    def q_values(self, obs):
        """Finite q-vector(s) for one observation or a batch."""
        x, single = self._batched(obs)
        out = self.net.forward(Tensor(x)).check_finite("in q_values output")
        return out.data[0] if single else out.data

    def forward_t(self, x, tape, train=False):
        return self.net.forward(x, tape, train)

    def policy(self, obs):
        """Greedy action; ties break toward the lowest action id."""
        q = self.q_values(obs)
        if q.ndim == 1:
            return int(np.argmax(q))
        return np.argmax(q, axis=1).astype(np.int64)

    # -- plumbing ------------------------------------------------------------
    def parameters(self):
        return self.net.parameters()

    def copy(self):
        return QNetwork(self.obs_shape, self.n_actions, self.conv_channels,
                        self.hidden, net=self.net.copy())

    def architecture(self):
        return {"model": "qnetwork", "obs_shape": list(self.obs_shape),
                "n_actions": self.n_actions, "conv_channels": list(self.conv_channels),
                "hidden": self.hidden,
                "layers": [s.to_dict() for s in self.net.specs]}

    @staticmethod
    def from_architecture(arch, arrays):
        q = QNetwork(tuple(arch["obs_shape"]), arch["n_actions"],
                     tuple(arch["conv_channels"]), arch["hidden"],
                     rng=np.random.default_rng(0))
        q.net.load_arrays(arrays)
        return q


def epsilon_greedy(qnet, obs, eps, rng):
    """With probability eps a uniform random action, else the greedy one."""
    if not 0.0 <= eps <= 1.0:
        raise ConfigError(f"epsilon must lie in [0, 1], got {eps}")
    if eps > 0.0 and rng.random() < eps:
        return int(rng.integers(qnet.n_actions))
    return qnet.policy(obs)


class ReplayBuffer:
    """Ring buffer of transitions with a seeded uniform sampler."""

    def __init__(self, capacity, obs_shape, rng):
        self.capacity = int(capacity)
        self.rng = rng
        self.s = np.zeros((capacity, *obs_shape), dtype=np.float32)
        self.a = np.zeros(capacity, dtype=np.int64)
        self.r = np.zeros(capacity, dtype=np.float32)
        self.s2 = np.zeros((capacity, *obs_shape), dtype=np.float32)
        self.term = np.zeros(capacity, dtype=np.float32)
        self.size = 0
        self._next = 0

    def push(self, s, a, r, s2, terminal):
        i = self._next
        self.s[i], self.a[i], self.r[i] = s, a, r
        self.s2[i], self.term[i] = s2, float(terminal)
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch):
        if self.size < batch:
            raise StateError(f"replay holds {self.size} transitions, need {batch}")
        idx = self.rng.integers(self.size, size=batch)
        return self.s[idx], self.a[idx], self.r[idx], self.s2[idx], self.term[idx]


@dataclass
class TrainLog:
    episode_scores: list = field(default_factory=list)
    episode_lengths: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    steps: int = 0
    wall_seconds: float = 0.0


def double_dqn_targets(online, target, s2, r, term, gamma):
    """y = r + gamma * Q_target(s', argmax_a Q_online(s', a)) for non-terminal rows."""
    a_star = np.argmax(online.q_values(s2), axis=1)
    q_t = target.q_values(s2)[np.arange(len(a_star)), a_star]
    return r + gamma * q_t * (1.0 - term)


def dqn_update(qnet, target, batch, gamma, opt, delta=1.0):
    """One double-DQN gradient step on a sampled batch; returns the loss."""
    s, a, r, s2, term = batch
    y = double_dqn_targets(qnet, target, s2, r, term, gamma)
    tape = Tape()
    q = qnet.forward_t(Tensor(s), tape)
    q_sel = gather_rows(q, a, tape)
    resid = sub(q_sel, Tensor(y.astype(np.float32)), tape)
    loss = tmean(huber(resid, delta, tape), tape=tape)
    lval = loss.item()
    if not np.isfinite(lval):
        raise TrainingDiverged(f"non-finite DQN loss {lval} (targets min/max "
                               f"{y.min():.3g}/{y.max():.3g})")
    backward(tape, loss)
    opt.step()
    opt.zero_grad()
    return lval


def train_dqn(env, config: AgentConfig, qnet=None):
    """Train a double DQN on ``env``; returns (qnet, TrainLog)."""
    rng = np.random.default_rng(config.seed)
    if qnet is None:
        qnet = QNetwork(env.obs_shape, env.n_actions, config.conv_channels,
                        config.hidden, rng=rng)
    target = qnet.copy()
    opt = AdamState(qnet.parameters(), lr=config.lr, beta1=config.adam_beta1,
                    beta2=config.adam_beta2, eps=config.adam_eps)
    replay = ReplayBuffer(config.replay_capacity, env.obs_shape,
                          np.random.default_rng(config.seed + 1))
    log = TrainLog()
    t0 = time.time()
    obs = env.reset(seed=int(rng.integers(2**31)))
    ep_score, ep_len = 0.0, 0
    for step in range(config.steps):
        a = epsilon_greedy(qnet, obs, config.epsilon_at(step), rng)
        res = env.step(a)
        replay.push(obs, a, res.reward, res.observation, res.terminal)
        ep_score += res.reward
        ep_len += 1
        if res.terminal:
            log.episode_scores.append(ep_score)
            log.episode_lengths.append(ep_len)
            ep_score, ep_len = 0.0, 0
            obs = env.reset(seed=int(rng.integers(2**31)))
        else:
            obs = res.observation
        if (step >= config.warmup and replay.size >= config.batch_size
                and step % config.update_every == 0):
            loss = dqn_update(qnet, target, replay.sample(config.batch_size),
                              config.gamma, opt, config.huber_delta)
            if step % 250 == 0:
                log.losses.append((step, loss))
        if (step + 1) % config.sync_period == 0:
            target = qnet.copy()
    log.steps = config.steps
    log.wall_seconds = time.time() - t0
    return qnet, log


def evaluate(qnet, make_env_fn, episodes, seed):
    """Greedy-policy episode scores on freshly seeded environments."""
    scores = []
    for e in range(episodes):
        env = make_env_fn()
        obs = env.reset(seed=seed + e)
        total = 0.0
        while True:
            res = env.step(qnet.policy(obs))
            total += res.reward
            obs = res.observation
            if res.terminal:
                break
        scores.append(total)
    return scores


def collect_dataset(qnet, env, count, eps=0.1, seed=0):
    """Gather ``count`` frames with eps-greedy rollouts.

    Pixels are quantized at capture time and the stored q-vector is computed
    on the quantized frame, so recomputing q on a stored frame reproduces the
    metadata exactly.
    """
    if count < 1:
        raise ConfigError(f"dataset size must be >= 1, got {count}")
    rng = np.random.default_rng(seed)
    k, h, w = env.obs_shape
    pixels = np.zeros((count, k, h, w), dtype=np.uint8)
    actions = np.zeros(count, dtype=np.uint32)
    rewards = np.zeros(count, dtype=np.float32)
    qvalues = np.zeros((count, env.n_actions), dtype=np.float32)
    terminals = np.zeros(count, dtype=np.uint8)
    obs = env.reset(seed=int(rng.integers(2**31)))
    for i in range(count):
        px = quantize(obs)
        pixels[i] = px
        qvalues[i] = qnet.q_values(dequantize(px))
        a = epsilon_greedy(qnet, obs, eps, rng)
        res = env.step(a)
        actions[i] = a
        rewards[i] = res.reward
        terminals[i] = int(res.terminal)
        obs = env.reset(seed=int(rng.integers(2**31))) if res.terminal else res.observation
    return FrameDataset(pixels, actions, rewards, qvalues, terminals)
