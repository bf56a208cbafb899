"""Evaluation protocols: agent-on-reconstructions scoring, novelty histogram
against the nearest training frame, and nearest-frame retrieval."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, InputError
from .synthesis import TargetSpec, target_value

NOVELTY_THRESHOLDS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7)


@dataclass
class ReconEvalReport:
    loss_mode: str
    scores_raw: list
    scores_recon: list
    seeds: list

    @property
    def mean_raw(self):
        return float(np.mean(self.scores_raw))

    @property
    def mean_recon(self):
        return float(np.mean(self.scores_recon))


def _rollout(env, act, seed):
    obs = env.reset(seed=seed)
    total = 0.0
    while True:
        res = env.step(act(obs))
        total += res.reward
        obs = res.observation
        if res.terminal:
            return total


def evaluate_on_reconstructions(qnet, gen, make_env_fn, episodes, seed,
                                loss_mode="full"):
    """Paired episodes: raw agent vs the agent seeing decode(encode(s), z=0).

    Both conditions replay identical environment seeds; dynamics always run on
    the true state, only the agent's view is replaced.
    """
    if episodes < 1:
        raise InputError("episodes must be >= 1")
    scores_raw, scores_recon, seeds = [], [], []
    for e in range(episodes):
        ep_seed = seed + e
        env = make_env_fn()
        scores_raw.append(_rollout(env, lambda o: qnet.policy(o), ep_seed))
        env = make_env_fn()
        scores_recon.append(_rollout(
            env, lambda o: qnet.policy(gen.reconstruct(o)), ep_seed))
        seeds.append(ep_seed)
    return ReconEvalReport(loss_mode=str(loss_mode), scores_raw=scores_raw,
                           scores_recon=scores_recon, seeds=seeds)


def pixel_diff_fraction(a, b, threshold=0.25, eps=1e-3):
    """Fraction of pixels whose relative difference exceeds ``threshold`` on
    any stacked channel: |a-b| / max(a, b, eps) > threshold."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    rel = np.abs(a - b) / np.maximum(np.maximum(a, b), eps)
    differing = (rel > threshold).any(axis=0)
    return float(differing.sum() / differing.size)


def _mse_row(train_flat, query_flat):
    d = train_flat - query_flat
    return np.sum(d * d, axis=1)


@dataclass
class NoveltyReport:
    fractions: np.ndarray        # per-sample differing-pixel fraction
    nearest: np.ndarray          # index of nearest training frame per sample
    thresholds: tuple = NOVELTY_THRESHOLDS
    cumulative: dict = field(default_factory=dict)

    def exceeding(self, threshold):
        return float((self.fractions > threshold).mean())


def novelty_histogram(samples, train_frames, thresholds=NOVELTY_THRESHOLDS):
    """Nearest training frame by MSE per sample, pixel-diff fraction against
    it, and the cumulative fraction of samples exceeding each threshold."""
    samples = np.asarray(samples, dtype=np.float64)
    train = np.asarray(train_frames, dtype=np.float64)
    if len(samples) == 0 or len(train) == 0:
        raise InputError("novelty histogram requires nonempty sample and training sets")
    if samples.shape[1:] != train.shape[1:]:
        raise DimensionError(f"shape mismatch {samples.shape[1:]} vs {train.shape[1:]}")
    tf = train.reshape(len(train), -1)
    fractions = np.zeros(len(samples))
    nearest = np.zeros(len(samples), dtype=np.int64)
    for i, s in enumerate(samples):
        d2 = _mse_row(tf, s.reshape(-1))
        j = int(np.argmin(d2))
        nearest[i] = j
        fractions[i] = pixel_diff_fraction(s, train[j])
    cumulative = {t: float((fractions > t).mean()) for t in thresholds}
    return NoveltyReport(fractions=fractions, nearest=nearest,
                         thresholds=tuple(thresholds), cumulative=cumulative)


def nearest_training_frame(query, train_frames, qvalues=None, metric="l2",
                           target: TargetSpec | None = None, query_q=None):
    """Closest training frame by L2 distance or by |T(q_query) - T(q_frame)|.

    Ties break toward the lowest index. The objective metric requires stored
    q-vectors and the query's q-vector.
    """
    train = np.asarray(train_frames, dtype=np.float64)
    if len(train) == 0:
        raise InputError("training set is empty")
    if metric == "l2":
        q = np.asarray(query, dtype=np.float64).reshape(-1)
        d2 = _mse_row(train.reshape(len(train), -1), q)
        idx = int(np.argmin(d2))
        return idx, float(d2[idx] / q.size)
    if metric == "objective":
        if qvalues is None or target is None or query_q is None:
            raise InputError("objective metric requires q-vector metadata and a target")
        tq = target_value(target, query_q)
        dists = np.array([abs(target_value(target, qv) - tq) for qv in qvalues])
        idx = int(np.argmin(dists))
        return idx, float(dists[idx])
    raise InputError(f"unknown metric {metric!r}")
