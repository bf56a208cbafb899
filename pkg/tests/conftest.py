import os

# Single-threaded BLAS before numpy's first import: many small GEMMs.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")

import json
from pathlib import Path

import numpy as np
import pytest

from rlprobe.agent import collect_dataset, train_dqn
from rlprobe.envs import make_env
from rlprobe.generator import LossMode, train_generator
from rlprobe.io import FrameDataset, RunConfig, load_agent, load_generator, save_model

CACHE = Path(__file__).parent / "_cache"


def desk_config(**overrides):
    cfg = RunConfig.from_preset("desk")
    if overrides:
        cfg.update(overrides)
    return cfg


def _cache_path(name, cfg):
    CACHE.mkdir(exist_ok=True)
    return CACHE / f"{name}_{cfg.config_hash()}"


def build_agent(cfg):
    """Train (or load cached) desk-scale agent for cfg's environment."""
    path = _cache_path(f"agent_{cfg['env']}", cfg).with_suffix(".rlvz")
    if not path.exists():
        env = make_env(cfg.env_config())
        qnet, log = train_dqn(env, cfg.agent_config())
        save_model(qnet, path)
        meta = {"episode_scores": log.episode_scores[-50:], "steps": log.steps}
        path.with_suffix(".json").write_text(json.dumps(meta))
        print(f"\n[fixture] trained {cfg['env']} agent ({log.steps} steps, "
              f"{log.wall_seconds:.0f}s) -> {path.name}")
    return load_agent(path)


def build_dataset(cfg):
    path = _cache_path(f"dataset_{cfg['env']}", cfg).with_suffix(".rlvd")
    if not path.exists():
        qnet = build_agent(cfg)
        env = make_env(cfg.env_config())
        ds = collect_dataset(qnet, env, cfg["dataset_frames"], cfg["eps_collect"],
                             seed=cfg["seed"] + 77)
        ds.save(path)
        print(f"[fixture] collected {len(ds)} {cfg['env']} frames -> {path.name}")
    return FrameDataset.load(path)


def build_generator(cfg, mode: LossMode):
    path = _cache_path(f"gen_{cfg['env']}_{mode.name.lower()}", cfg).with_suffix(".rlvz")
    log_path = path.with_suffix(".json")
    if not path.exists():
        qnet = build_agent(cfg)
        ds = build_dataset(cfg)
        gcfg = cfg.generator_config(ds.obs_shape, loss_mode=mode)
        gen, log = train_generator(ds, qnet, gcfg)
        save_model(gen, path)
        log_path.write_text(json.dumps({
            "epoch_totals": log.epoch_totals,
            "mask_fallbacks": log.mask_fallbacks,
            "step_parts": [[p.l_p, p.l_a, p.kl, p.total] for p in log.steps],
            "eta": gcfg.eta if mode is LossMode.FULL else 0.0,
            "lam": gcfg.lam,
        }))
        print(f"[fixture] trained {cfg['env']} generator [{mode.value}] "
              f"({log.wall_seconds:.0f}s) -> {path.name}")
    return load_generator(path), json.loads(log_path.read_text())


# -- session fixtures --------------------------------------------------------

@pytest.fixture(scope="session")
def pong_cfg():
    return desk_config()


@pytest.fixture(scope="session")
def pong_agent(pong_cfg):
    return build_agent(pong_cfg)


@pytest.fixture(scope="session")
def pong_dataset(pong_cfg):
    return build_dataset(pong_cfg)


@pytest.fixture(scope="session")
def pong_generators(pong_cfg):
    return {mode: build_generator(pong_cfg, mode) for mode in LossMode}


@pytest.fixture(scope="session")
def drive_cfg():
    return desk_config(env="griddrive", ped_mode="reasonable",
                       agent_steps=25_000, eps_anneal_steps=12_000)


@pytest.fixture(scope="session")
def drive_agent(drive_cfg):
    return build_agent(drive_cfg)


@pytest.fixture(scope="session")
def drive_dataset(drive_cfg):
    return build_dataset(drive_cfg)


@pytest.fixture(scope="session")
def drive_generator(drive_cfg):
    return build_generator(drive_cfg, LossMode.FULL)
