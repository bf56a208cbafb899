"""Agent-aware VAE: encoder/decoder, saliency-weighted reconstruction loss,
agent-perception loss, and the KL term, with selectable loss modes for the
reconstruction ablation (full / attentive-only / plain VAE)."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigError, DimensionError, InputError
from .nn import AdamState, GradMode, Network, Tape, Tensor, backward
from .nn import layers as L
from .nn.tensor import (add, exp, gather_rows, mul, narrow, reshape, sigmoid,
                        square, sub, tmean, tsum)


class LossMode(Enum):
    FULL = "full"
    L_P_ONLY = "lp-only"
    PLAIN_VAE = "plain-vae"


@dataclass
class GeneratorConfig:
    obs_shape: tuple = (2, 32, 32)
    latent_dim: int = 32
    stages: int = 3
    base_filters: int = 32
    decoder_seed: int = 0          # seed spatial extent; 0 = derive from obs
    lr: float = 1e-3
    batch_size: int = 16
    epochs: int = 40
    eta: float = 1e-3
    lam: float = 1e-4
    blur_masks: bool = True
    loss_mode: LossMode = LossMode.FULL
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.loss_mode, str):
            self.loss_mode = LossMode(self.loss_mode)
        if self.latent_dim < 1 or self.stages < 1:
            raise ConfigError("latent_dim and stages must be >= 1")


def _conv_out(size):
    return (size + 2 - 3) // 2 + 1


class Generator:
    """Encoder f(s) -> (mu, logvar) and decoder g(mu, logvar, z) -> s_hat.

    The encoder stacks 3x3/stride-2 conv + batchnorm + ReLU stages with the
    filter count doubling per stage, then a dense head emitting 2n values.
    The decoder mirrors it with deconvolutions halving the channel count; its
    native output is larger than the observation and is center cropped.
    """

    def __init__(self, config: GeneratorConfig, rng=None, parts=None):
        self.config = config
        k, h, w = config.obs_shape
        if h != w:
            raise ConfigError("observations must be square")
        n = config.latent_dim
        if parts is not None:
            self.encoder, self.dec_dense, self.decoder = parts
            self._seed_hw = config.decoder_seed
            self._seed_ch = config.base_filters * 2 ** (config.stages - 1)
            return
        rng = rng if rng is not None else np.random.default_rng(config.seed)

        enc = []
        c_in, size = k, h
        filters = config.base_filters
        for _ in range(config.stages):
            enc += [L.conv2d(c_in, filters), L.batchnorm(filters), L.relu_spec()]
            c_in, size = filters, _conv_out(size)
            filters *= 2
        enc.append(L.flatten())
        enc.append(L.dense(c_in * size * size, 2 * n))
        self.encoder = Network(enc, rng=rng)

        seed_hw = config.decoder_seed if config.decoder_seed else size + 1
        self._seed_hw = seed_hw
        self._seed_ch = c_in
        self.dec_dense = L.Dense(L.dense(n, c_in * seed_hw * seed_hw), rng)

        dec = []
        c, out = c_in, seed_hw
        for _ in range(config.stages - 1):
            dec += [L.deconv2d(c, c // 2), L.batchnorm(c // 2), L.relu_spec()]
            c, out = c // 2, out * 2
        dec.append(L.deconv2d(c, k))
        out *= 2
        if out < h:
            raise ConfigError(f"decoder native output {out} smaller than observation {h}")
        top = (out - h) // 2
        dec.append(L.crop(top, top, h, w))
        self.decoder = Network(dec, rng=rng)
        self.config = config
        if config.decoder_seed == 0:
            self.config = GeneratorConfig(**{**config.__dict__, "decoder_seed": seed_hw})

    @property
    def latent_dim(self):
        return self.config.latent_dim

    # -- core ops ------------------------------------------------------------
    def encode_t(self, x, tape=None, train=False):
        n = self.latent_dim
        out = self.encoder.forward(x, tape, train)
        mu = narrow(out, 1, 0, n, tape)
        logvar = narrow(out, 1, n, n, tape)
        return mu, logvar

    def decode_t(self, mu, logvar, z, tape=None, train=False):
        """s_hat = decoder(mu + sigma*z), sigmoid-squashed and center cropped."""
        if isinstance(z, np.ndarray):
            z = Tensor(z.astype(np.float32))
        sigma = exp(mul(logvar, 0.5, tape), tape)
        lat = add(mu, mul(sigma, z, tape), tape)
        h = self.dec_dense.forward(lat, tape, train)
        b = lat.shape[0]
        h = reshape(h, (b, self._seed_ch, self._seed_hw, self._seed_hw), tape)
        out = self.decoder.forward(h, tape, train)
        return sigmoid(out, tape)

    def encode(self, obs):
        """(mu, logvar) for a single observation or batch; eval-mode batchnorm."""
        x, single = self._batched(obs)
        mu, logvar = self.encode_t(Tensor(x))
        mu.check_finite("in encoder output")
        logvar.check_finite("in encoder output")
        if single:
            return mu.data[0], logvar.data[0]
        return mu.data, logvar.data

    def decode(self, mu, logvar, z=None):
        mu = np.asarray(mu, dtype=np.float32)
        logvar = np.asarray(logvar, dtype=np.float32)
        single = mu.ndim == 1
        if single:
            mu, logvar = mu[None], logvar[None]
        if mu.shape[1] != self.latent_dim:
            raise DimensionError(f"latent vectors must have length {self.latent_dim}")
        if z is None:
            z = np.zeros_like(mu)
        else:
            z = np.asarray(z, dtype=np.float32)
            if z.ndim == 1:
                z = z[None]
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(logvar)) and np.all(np.isfinite(z))):
            raise InputError("non-finite latent input to decode")
        out = self.decode_t(Tensor(mu), Tensor(logvar), Tensor(z))
        return out.data[0] if single else out.data

    def reconstruct(self, obs):
        """Mean reconstruction decode(encode(s), z=0)."""
        mu, logvar = self.encode(obs)
        return self.decode(mu, logvar)

    def _batched(self, obs):
        obs = np.asarray(obs, dtype=np.float32)
        if obs.shape == self.config.obs_shape:
            return obs[None], True
        if obs.shape[1:] == self.config.obs_shape:
            return obs, False
        raise DimensionError(
            f"observation shape {obs.shape} does not match generator input {self.config.obs_shape}")

    # -- persistence plumbing --------------------------------------------------
    def parameters(self):
        out = [(f"encoder.{n}", p) for n, p in self.encoder.parameters()]
        out += [(f"dec_dense.{n}", p) for n, p in self.dec_dense.parameters()]
        out += [(f"decoder.{n}", p) for n, p in self.decoder.parameters()]
        return out

    def named_arrays(self):
        out = {f"encoder.{n}": a for n, a in self.encoder.named_arrays().items()}
        out.update({f"dec_dense.{n}": p.data for n, p in self.dec_dense.parameters()})
        out.update({f"decoder.{n}": a for n, a in self.decoder.named_arrays().items()})
        return out

    def architecture(self):
        cfg = self.config
        return {"model": "generator", "obs_shape": list(cfg.obs_shape),
                "latent_dim": cfg.latent_dim, "stages": cfg.stages,
                "base_filters": cfg.base_filters, "decoder_seed": cfg.decoder_seed,
                "loss_mode": cfg.loss_mode.value,
                "encoder": [s.to_dict() for s in self.encoder.specs],
                "dec_dense": self.dec_dense.spec.to_dict(),
                "decoder": [s.to_dict() for s in self.decoder.specs]}

    @staticmethod
    def from_architecture(arch, arrays):
        cfg = GeneratorConfig(obs_shape=tuple(arch["obs_shape"]),
                              latent_dim=arch["latent_dim"], stages=arch["stages"],
                              base_filters=arch["base_filters"],
                              decoder_seed=arch["decoder_seed"],
                              loss_mode=LossMode(arch["loss_mode"]))
        rng = np.random.default_rng(0)
        gen = Generator(cfg, rng=rng)
        split = _split_named(arrays)
        gen.encoder.load_arrays(split["encoder"])
        gen.dec_dense.weight.data = np.asarray(split["dec_dense"]["weight"], dtype=np.float32)
        gen.dec_dense.bias.data = np.asarray(split["dec_dense"]["bias"], dtype=np.float32)
        gen.decoder.load_arrays(split["decoder"])
        return gen

    def set_requires_grad(self, flag):
        for _, p in self.parameters():
            p.requires_grad = flag
            p._needs = flag

    def astype(self, dtype):
        clone = Generator(self.config, parts=(self.encoder.astype(dtype),
                                              self.dec_dense.astype(dtype),
                                              self.decoder.astype(dtype)))
        return clone


def _split_named(arrays):
    split = {"encoder": {}, "dec_dense": {}, "decoder": {}}
    for name, arr in arrays.items():
        head, rest = name.split(".", 1)
        split[head][rest] = arr
    return split


# ---------------------------------------------------------------------------
# Saliency masks

@dataclass
class SaliencyMask:
    weights: np.ndarray          # (H, W), nonnegative, sums to 1
    uniform_fallback: bool = False


def blur_box5(mask):
    """5x5 averaging filter with zero padding."""
    h, w = mask.shape
    padded = np.zeros((h + 4, w + 4), dtype=np.float64)
    padded[2:2 + h, 2:2 + w] = mask
    out = np.zeros((h, w), dtype=np.float64)
    for di in range(5):
        for dj in range(5):
            out += padded[di:di + h, dj:dj + w]
    return out / 25.0


def saliency_mask(qnet, obs, blur=True):
    """Guided-backprop saliency of the max-action q w.r.t. the observation.

    Per-pixel L1 norm across stacked frames, normalized to sum 1, then blurred
    with a 5x5 averaging filter and renormalized. A zero gradient falls back
    to the uniform mask, flagged on the result.
    """
    obs = np.asarray(obs, dtype=np.float32)
    k, h, w = obs.shape
    tape = Tape(GradMode.GUIDED)
    x = Tensor(obs[None], requires_grad=True)
    q = qnet.forward_t(x, tape)
    a_star = int(np.argmax(q.data[0]))
    q_a = gather_rows(q, np.array([a_star]), tape)
    backward(tape, reshape(q_a, (), tape))
    grad = x.grad[0] if x.grad is not None else np.zeros_like(obs)
    sal = np.abs(grad.astype(np.float64)).sum(axis=0)
    total = sal.sum()
    if total <= 0.0:
        uniform = np.full((h, w), 1.0 / (h * w), dtype=np.float32)
        return SaliencyMask(uniform, uniform_fallback=True)
    sal /= total
    if blur:
        sal = blur_box5(sal)
        sal /= sal.sum()
    return SaliencyMask(sal.astype(np.float32), uniform_fallback=False)


def uniform_mask(shape_hw):
    h, w = shape_hw
    return SaliencyMask(np.full((h, w), 1.0 / (h * w), dtype=np.float32),
                        uniform_fallback=True)


# ---------------------------------------------------------------------------
# Loss terms (numpy reference forms; training builds the same math on a tape)

def attentive_recon_loss(s, s_hat, mask):
    """Sum over pixels of (channel-summed squared error) * mask weight."""
    s = np.asarray(s, dtype=np.float64)
    s_hat = np.asarray(s_hat, dtype=np.float64)
    if s.shape != s_hat.shape:
        raise DimensionError(f"shape mismatch {s.shape} vs {s_hat.shape}")
    weights = mask.weights if isinstance(mask, SaliencyMask) else np.asarray(mask)
    err = ((s_hat - s) ** 2).sum(axis=0)
    return float((err * weights.astype(np.float64)).sum())


def agent_perception_loss(qnet, s, s_hat):
    """Squared L2 distance between the agent's q-vectors on s and s_hat."""
    q = qnet.q_values(np.asarray(s, dtype=np.float32)).astype(np.float64)
    q_hat = qnet.q_values(np.asarray(s_hat, dtype=np.float32)).astype(np.float64)
    return float(((q - q_hat) ** 2).sum())


def kl_to_standard_normal(mu, logvar):
    """0.5 * sum(mu^2 + sigma^2 - logvar - 1), always >= 0."""
    mu = np.asarray(mu, dtype=np.float64)
    logvar = np.asarray(logvar, dtype=np.float64)
    return float(0.5 * np.sum(mu * mu + np.exp(logvar) - logvar - 1.0))


def kl_node(mu, logvar, tape):
    """KL closed form as a tape op, summed over the batch."""
    s2 = exp(logvar, tape)
    inner = sub(sub(add(square(mu, tape), s2, tape), logvar, tape), 1.0, tape)
    return mul(tsum(inner, tape=tape), 0.5, tape)


# ---------------------------------------------------------------------------
# Training

@dataclass
class GeneratorLossBreakdown:
    l_p: float
    l_a: float
    kl: float
    total: float
    eta: float
    lam: float


@dataclass
class GeneratorTrainLog:
    steps: list = field(default_factory=list)      # GeneratorLossBreakdown per step
    epoch_totals: list = field(default_factory=list)
    mask_fallbacks: int = 0
    wall_seconds: float = 0.0


def precompute_masks(qnet, frames, mode, blur=True):
    """One mask per frame; the agent is fixed so masks are constant."""
    n, _, h, w = frames.shape
    masks = np.zeros((n, h, w), dtype=np.float32)
    fallbacks = 0
    if mode is LossMode.PLAIN_VAE:
        masks[:] = 1.0 / (h * w)
        return masks, 0
    for i in range(n):
        m = saliency_mask(qnet, frames[i], blur=blur)
        masks[i] = m.weights
        fallbacks += int(m.uniform_fallback)
    return masks, fallbacks


def generator_loss_graph(gen, qnet, s, masks, q_ref, z, eta, lam, tape, train=True):
    """Batch-mean loss graph; returns (total node, component floats)."""
    b = s.shape[0]
    x = Tensor(s)
    mu, logvar = gen.encode_t(x, tape, train)
    s_hat = gen.decode_t(mu, logvar, z, tape, train)
    err = square(sub(s_hat, x, tape), tape)
    per_pixel = tsum(err, axis=1, tape=tape)
    weighted = mul(per_pixel, Tensor(masks), tape)
    l_p = mul(tsum(weighted, tape=tape), 1.0 / b, tape)
    kl = mul(kl_node(mu, logvar, tape), 1.0 / b, tape)
    if eta > 0.0:
        q_hat = qnet.forward_t(s_hat, tape)
        dq = sub(q_hat, Tensor(q_ref), tape)
        l_a = mul(tsum(square(dq, tape), tape=tape), 1.0 / b, tape)
    else:
        l_a = Tensor(0.0)
    total = add(add(l_p, mul(l_a, eta, tape), tape), mul(kl, lam, tape), tape)
    return total, GeneratorLossBreakdown(l_p.item(), l_a.item(), kl.item(),
                                         total.item(), eta, lam)


def train_generator(dataset, qnet, config: GeneratorConfig):
    """Train the generator on a collected frame dataset with a frozen agent."""
    if len(dataset) == 0:
        raise InputError("generator training requires a nonempty dataset")
    rng = np.random.default_rng(config.seed)
    frames = dataset.frames()
    if frames.shape[1:] != config.obs_shape:
        raise DimensionError(
            f"dataset frames {frames.shape[1:]} do not match generator input {config.obs_shape}")
    eta = config.eta if config.loss_mode is LossMode.FULL else 0.0
    masks, fallbacks = precompute_masks(qnet, frames, config.loss_mode, config.blur_masks)
    q_ref = qnet.q_values(frames) if eta > 0.0 else None

    gen = Generator(config, rng=rng)
    qnet.net.set_requires_grad(False)
    opt = AdamState(gen.parameters(), lr=config.lr, beta1=config.adam_beta1,
                    beta2=config.adam_beta2, eps=config.adam_eps)
    log = GeneratorTrainLog(mask_fallbacks=fallbacks)
    t0 = time.time()
    n = len(dataset)
    try:
        for epoch in range(config.epochs):
            order = rng.permutation(n)
            epoch_total = 0.0
            batches = 0
            for start in range(0, n - config.batch_size + 1, config.batch_size):
                idx = order[start:start + config.batch_size]
                z = rng.standard_normal((len(idx), config.latent_dim)).astype(np.float32)
                tape = Tape()
                total, parts = generator_loss_graph(
                    gen, qnet, frames[idx], masks[idx],
                    q_ref[idx] if q_ref is not None else None,
                    z, eta, config.lam, tape)
                if not np.isfinite(parts.total):
                    raise ConfigError(
                        f"non-finite generator loss at epoch {epoch}: {parts}")
                backward(tape, total)
                opt.step()
                opt.zero_grad()
                log.steps.append(parts)
                epoch_total += parts.total
                batches += 1
            log.epoch_totals.append(epoch_total / max(batches, 1))
    finally:
        qnet.net.set_requires_grad(True)
    log.wall_seconds = time.time() - t0
    return gen, log
