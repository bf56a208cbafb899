"""Flat key-value run configuration with paper-scale and desk-scale presets."""

from __future__ import annotations

import hashlib
import json

from ..errors import ConfigError, InputError

# Desk preset: every knob of the pipeline at toy scale.
DESK = {
    "preset": "desk",
    "env": "minipong",
    "ped_mode": "reasonable",
    "resolution": 32,
    "seed": 0,
    "max_steps": 500,
    "c_speed": 0.02,
    "collision_penalty": -10.0,
    "steer_penalty": -0.01,
    # agent
    "gamma": 0.95,
    "agent_steps": 40_000,
    "agent_lr": 1e-3,
    "agent_batch": 32,
    "replay_capacity": 20_000,
    "warmup": 1000,
    "sync_period": 1000,
    "eps_start": 1.0,
    "eps_end": 0.1,
    "eps_anneal_steps": 20_000,
    "update_every": 2,
    "eps_collect": 0.1,
    "dataset_frames": 2560,
    # generator
    "latent_dim": 32,
    "gen_stages": 3,
    "base_filters": 16,
    "decoder_seed": 0,
    "gen_epochs": 30,
    "gen_lr": 1e-3,
    "gen_batch": 16,
    "eta": 1e-3,
    "lam": 1e-4,
    "blur_masks": True,
    "loss_mode": "full",
    # synthesis
    "target": "t-",
    "beta": 10.0,
    "alpha": 1e-2,
    "synth_steps": 200,
    "synth_lr": 1e-2,
    "synth_samples": 16,
    "z_policy": "fixed-seed",
    # analysis
    "eval_episodes": 20,
    "novelty_samples": 64,
    # optimizer
    "adam_beta1": 0.9,
    "adam_beta2": 0.999,
    "adam_eps": 1e-8,
}

# Paper-scale hyperparameters for reference and dump-config.
PAPER_OVERRIDES = {
    "preset": "paper",
    "resolution": 84,
    "agent_steps": 2_000_000,
    "eps_anneal_steps": 1_000_000,
    "dataset_frames": 10_000,
    "latent_dim": 100,
    "gen_stages": 4,
    "base_filters": 32,
    "decoder_seed": 8,
    "gen_epochs": 2000,
}

PRESETS = {"desk": {}, "paper": PAPER_OVERRIDES}


def _coerce(key, text, like):
    if isinstance(like, bool):
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise InputError(f"{key} expects a boolean, got {text!r}")
    if isinstance(like, int):
        return int(text)
    if isinstance(like, float):
        return float(text)
    return text


class RunConfig:
    """Flat configuration; unknown keys are rejected everywhere."""

    def __init__(self, values=None):
        self.values = dict(DESK)
        if values:
            self.update(values)

    @staticmethod
    def from_preset(name):
        if name not in PRESETS:
            raise InputError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        cfg = RunConfig()
        cfg.update(PRESETS[name])
        return cfg

    def update(self, mapping):
        for k, v in mapping.items():
            if k not in DESK:
                raise InputError(f"unknown config key {k!r}")
            self.values[k] = v
        return self

    def update_from_file(self, path):
        try:
            with open(path) as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise InputError(f"config file {path} is not valid JSON: {e}") from None
        if not isinstance(data, dict):
            raise InputError(f"config file {path} must hold a JSON object")
        return self.update(data)

    def apply_overrides(self, pairs):
        """Apply CLI overrides of the form key=value."""
        for pair in pairs:
            if "=" not in pair:
                raise InputError(f"override {pair!r} is not of the form key=value")
            k, v = pair.split("=", 1)
            if k not in DESK:
                raise InputError(f"unknown config key {k!r}")
            self.values[k] = _coerce(k, v, DESK[k])
        return self

    def __getitem__(self, key):
        if key not in self.values:
            raise InputError(f"unknown config key {key!r}")
        return self.values[key]

    def dump(self):
        lines = []
        for k in sorted(self.values):
            v = self.values[k]
            if isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"

    def config_hash(self):
        return hashlib.sha256(self.dump().encode("utf-8")).hexdigest()[:16]

    # -- typed views ---------------------------------------------------------
    def env_config(self):
        from ..envs import EnvConfig

        kw = dict(kind=self["env"], resolution=self["resolution"], seed=self["seed"],
                  max_steps=self["max_steps"], c_speed=self["c_speed"],
                  collision_penalty=self["collision_penalty"],
                  steer_penalty=self["steer_penalty"])
        if self["env"] == "griddrive":
            kw["ped_mode"] = self["ped_mode"]
        return EnvConfig(**kw)

    def agent_config(self):
        from ..agent import AgentConfig

        return AgentConfig(
            gamma=self["gamma"], steps=self["agent_steps"], sync_period=self["sync_period"],
            batch_size=self["agent_batch"], lr=self["agent_lr"],
            replay_capacity=self["replay_capacity"], warmup=self["warmup"],
            eps_start=self["eps_start"], eps_end=self["eps_end"],
            eps_anneal_steps=self["eps_anneal_steps"], update_every=self["update_every"],
            adam_beta1=self["adam_beta1"], adam_beta2=self["adam_beta2"],
            adam_eps=self["adam_eps"], seed=self["seed"])

    def generator_config(self, obs_shape, loss_mode=None):
        from ..generator import GeneratorConfig

        return GeneratorConfig(
            obs_shape=tuple(obs_shape), latent_dim=self["latent_dim"],
            stages=self["gen_stages"], base_filters=self["base_filters"],
            decoder_seed=self["decoder_seed"], lr=self["gen_lr"],
            batch_size=self["gen_batch"], epochs=self["gen_epochs"], eta=self["eta"],
            lam=self["lam"], blur_masks=self["blur_masks"],
            loss_mode=loss_mode if loss_mode is not None else self["loss_mode"],
            adam_beta1=self["adam_beta1"], adam_beta2=self["adam_beta2"],
            adam_eps=self["adam_eps"], seed=self["seed"])

    def synthesis_config(self):
        from ..synthesis import SynthesisConfig

        return SynthesisConfig(
            alpha=self["alpha"], steps=self["synth_steps"], lr=self["synth_lr"],
            samples=self["synth_samples"], z_policy=self["z_policy"], seed=self["seed"],
            adam_beta1=self["adam_beta1"], adam_beta2=self["adam_beta2"],
            adam_eps=self["adam_eps"])

    def target_spec(self):
        from ..synthesis import TargetSpec

        return TargetSpec.parse(self["target"], beta=self["beta"])


def write_report(path, title, pairs, config):
    """Write a machine-readable key-value report embedding config hash + seed."""
    lines = [f"report = {title}",
             f"config_hash = {config.config_hash()}",
             f"seed = {config['seed']}"]
    for k, v in pairs:
        lines.append(f"{k} = {v}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
