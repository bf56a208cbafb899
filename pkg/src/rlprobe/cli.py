"""Command-line interface: collect -> train-agent -> train-generator ->
synthesize -> analyze, plus single-stage subcommands.

Exit status: 0 success, 1 user error, 2 internal error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .agent import QNetwork, collect_dataset, evaluate, train_dqn
from .analysis import (evaluate_on_reconstructions, nearest_training_frame,
                       novelty_histogram)
from .envs import make_env
from .errors import ConfigError, FormatError, InputError
from .generator import LossMode, precompute_masks, saliency_mask, train_generator
from .io import (FrameDataset, RunConfig, load_agent, load_generator, save_model,
                 write_image_grid, write_report)
from .synthesis import SynthesisConfig, TargetSpec, synthesize

STAGES = ["train-agent", "collect", "train-generator", "synthesize",
          "eval-recon", "novelty", "retrieve", "saliency"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message)


def _build_parser():
    p = _Parser(prog="probe", description=__doc__)
    p.add_argument("--version", action="version", version=f"probe {__version__}")
    p.add_argument("--preset", choices=["desk", "paper"], default="desk",
                   help="hyperparameter preset")
    p.add_argument("--config", help="JSON file with config overrides")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a single config key")
    p.add_argument("--dump-config", action="store_true",
                   help="print the effective configuration and exit")
    p.add_argument("--env", choices=["minipong", "griddrive"], help="environment")
    p.add_argument("--ped-mode", choices=["reasonable", "distracted"],
                   help="griddrive pedestrian mode")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--workdir", default="runs", help="artifact directory")

    sub = p.add_subparsers(dest="command")

    sp = sub.add_parser("train-agent", help="train a double DQN")
    sp.add_argument("--out", help="agent checkpoint path")

    sp = sub.add_parser("collect", help="gather frames with the trained agent")
    sp.add_argument("--agent", help="agent checkpoint")
    sp.add_argument("--count", type=int, help="number of frames")
    sp.add_argument("--eps", type=float, help="collection epsilon")
    sp.add_argument("--out", help="dataset path")

    sp = sub.add_parser("train-generator", help="train the agent-aware VAE")
    sp.add_argument("--agent", help="agent checkpoint")
    sp.add_argument("--data", help="frame dataset")
    sp.add_argument("--loss", choices=[m.value for m in LossMode],
                    help="loss mode for the reconstruction ablation")
    sp.add_argument("--out", help="generator checkpoint path")

    sp = sub.add_parser("synthesize", help="optimize latent states of interest")
    sp.add_argument("--agent", help="agent checkpoint")
    sp.add_argument("--generator", help="generator checkpoint")
    sp.add_argument("--target", help="action:<id>, t+, t-, t+-, s+ or s-")
    sp.add_argument("--beta", type=float, help="soft-max sharpness")
    sp.add_argument("--alpha", type=float, help="regularizer weight")
    sp.add_argument("--steps", type=int, help="optimization steps")
    sp.add_argument("--samples", type=int, help="number of samples")
    sp.add_argument("--out-grid", help="P5 grid path")
    sp.add_argument("--out-report", help="key-value report path")

    sp = sub.add_parser("eval-recon", help="score the agent on reconstructions")
    sp.add_argument("--agent")
    sp.add_argument("--generator")
    sp.add_argument("--episodes", type=int)
    sp.add_argument("--out-report")

    sp = sub.add_parser("novelty", help="pixel-difference histogram vs training set")
    sp.add_argument("--agent")
    sp.add_argument("--generator")
    sp.add_argument("--data")
    sp.add_argument("--samples", type=int)
    sp.add_argument("--target", help="optional synthesis target; default pure samples")
    sp.add_argument("--out-report")

    sp = sub.add_parser("retrieve", help="nearest training frames for synthesized states")
    sp.add_argument("--agent")
    sp.add_argument("--generator")
    sp.add_argument("--data")
    sp.add_argument("--target")
    sp.add_argument("--samples", type=int)
    sp.add_argument("--out-grid")
    sp.add_argument("--out-report")

    sp = sub.add_parser("saliency", help="guided-backprop mask grid for dataset frames")
    sp.add_argument("--agent")
    sp.add_argument("--data")
    sp.add_argument("--count", type=int, default=8)
    sp.add_argument("--out-grid")

    sub.add_parser("run-pipeline", help="run every stage in order")
    return p


def _config_from_args(args):
    cfg = RunConfig.from_preset(args.preset)
    if args.config:
        cfg.update_from_file(args.config)
    if args.env:
        cfg.update({"env": args.env})
    if args.ped_mode:
        cfg.update({"ped_mode": args.ped_mode})
    if args.seed is not None:
        cfg.update({"seed": args.seed})
    cfg.apply_overrides(args.set)
    return cfg


def _workdir(args):
    wd = Path(args.workdir)
    wd.mkdir(parents=True, exist_ok=True)
    return wd


def _load_agent_or_hint(path):
    try:
        return load_agent(str(path))
    except FileNotFoundError:
        raise InputError(f"missing agent checkpoint {path}; produce it with "
                         f"`probe train-agent`") from None


def _load_generator_or_hint(path):
    try:
        return load_generator(str(path))
    except FileNotFoundError:
        raise InputError(f"missing generator checkpoint {path}; produce it with "
                         f"`probe train-generator`") from None


def _load_dataset_or_hint(path):
    try:
        return FrameDataset.load(str(path))
    except FileNotFoundError:
        raise InputError(f"missing dataset {path}; produce it with `probe collect`") from None


# ---------------------------------------------------------------------------
# stages

def cmd_train_agent(cfg, wd, out=None):
    out = Path(out) if out else wd / "agent.rlvz"
    env = make_env(cfg.env_config())
    qnet, log = train_dqn(env, cfg.agent_config())
    save_model(qnet, out)
    scores = evaluate(qnet, lambda: make_env(cfg.env_config()),
                      cfg["eval_episodes"], seed=cfg["seed"] + 10_000)
    pairs = [("env", cfg["env"]), ("steps", log.steps),
             ("episodes", len(log.episode_scores)),
             ("eval_episodes", len(scores)),
             ("eval_mean_score", f"{np.mean(scores):.4f}"),
             ("checkpoint", out.name)]
    write_report(wd / "agent_train.kv", "train-agent", pairs, cfg)
    print(f"[train-agent] {log.steps} steps, eval mean score "
          f"{np.mean(scores):.2f} over {len(scores)} episodes -> {out}")
    return out


def cmd_collect(cfg, wd, agent=None, count=None, eps=None, out=None):
    agent_path = Path(agent) if agent else wd / "agent.rlvz"
    out = Path(out) if out else wd / "dataset.rlvd"
    qnet = _load_agent_or_hint(agent_path)
    env = make_env(cfg.env_config())
    n = count if count is not None else cfg["dataset_frames"]
    ds = collect_dataset(qnet, env, n, eps if eps is not None else cfg["eps_collect"],
                         seed=cfg["seed"] + 77)
    ds.save(out)
    write_report(wd / "collect.kv", "collect",
                 [("frames", len(ds)), ("env", cfg["env"]), ("dataset", out.name)], cfg)
    print(f"[collect] {len(ds)} frames -> {out}")
    return out


def cmd_train_generator(cfg, wd, agent=None, data=None, loss=None, out=None):
    agent_path = Path(agent) if agent else wd / "agent.rlvz"
    data_path = Path(data) if data else wd / "dataset.rlvd"
    mode = LossMode(loss) if loss else LossMode(cfg["loss_mode"])
    out = Path(out) if out else wd / f"generator_{mode.name.lower()}.rlvz"
    qnet = _load_agent_or_hint(agent_path)
    ds = _load_dataset_or_hint(data_path)
    gcfg = cfg.generator_config(ds.obs_shape, loss_mode=mode)
    gen, log = train_generator(ds, qnet, gcfg)
    save_model(gen, out)
    last = log.steps[-1]
    pairs = [("loss_mode", mode.value), ("epochs", gcfg.epochs),
             ("final_total", f"{last.total:.6f}"), ("final_l_p", f"{last.l_p:.6f}"),
             ("final_l_a", f"{last.l_a:.6f}"), ("final_kl", f"{last.kl:.6f}"),
             ("mask_fallbacks", log.mask_fallbacks), ("checkpoint", out.name)]
    pairs += [(f"epoch_{i:03d}_total", f"{v:.6f}") for i, v in enumerate(log.epoch_totals)]
    write_report(wd / f"gen_train_{mode.name.lower()}.kv", "train-generator", pairs, cfg)
    print(f"[train-generator] {mode.value}: total {log.epoch_totals[0]:.4f} -> "
          f"{log.epoch_totals[-1]:.4f} over {gcfg.epochs} epochs -> {out}")
    return out


def _synth_tag(target: TargetSpec):
    return target.label().replace(":", "")


def cmd_synthesize(cfg, wd, agent=None, generator=None, target=None, beta=None,
                   alpha=None, steps=None, samples=None, out_grid=None,
                   out_report=None):
    qnet = _load_agent_or_hint(Path(agent) if agent else wd / "agent.rlvz")
    gen = _load_generator_or_hint(
        Path(generator) if generator else wd / "generator_full.rlvz")
    tspec = TargetSpec.parse(target if target else cfg["target"],
                             beta=beta if beta is not None else cfg["beta"])
    scfg = cfg.synthesis_config()
    if alpha is not None or steps is not None or samples is not None:
        scfg = SynthesisConfig(
            alpha=alpha if alpha is not None else scfg.alpha,
            steps=steps if steps is not None else scfg.steps,
            lr=scfg.lr,
            samples=samples if samples is not None else scfg.samples,
            z_policy=scfg.z_policy, seed=scfg.seed)
    results = synthesize(gen, qnet, tspec, scfg)
    tag = _synth_tag(tspec)
    grid = Path(out_grid) if out_grid else wd / f"samples_{tag}.pgm"
    report = Path(out_report) if out_report else wd / f"synth_{tag}.kv"
    cols = int(np.ceil(np.sqrt(len(results))))
    write_image_grid([r.state for r in results], cols, grid)
    pairs = [("target", tspec.label()), ("samples", len(results)),
             ("alpha", scfg.alpha), ("steps", scfg.steps),
             ("improved", sum(r.energies[-1] <= r.energies[0] for r in results)),
             ("diverged", sum(r.diverged for r in results)),
             ("grid", grid.name)]
    for i, r in enumerate(results):
        pairs.append((f"sample_{i:03d}_q", " ".join(f"{v:.4f}" for v in r.q)))
        pairs.append((f"sample_{i:03d}_argmax", int(np.argmax(r.q))))
        pairs.append((f"sample_{i:03d}_energy", f"{r.energies[0]:.4f} -> {r.energies[-1]:.4f}"))
    write_report(report, "synthesize", pairs, cfg)
    print(f"[synthesize] target {tspec.label()}: {len(results)} samples, "
          f"{sum(r.energies[-1] <= r.energies[0] for r in results)} improved -> {grid}")
    return grid, report


def cmd_eval_recon(cfg, wd, agent=None, generator=None, episodes=None,
                   out_report=None, gen_label=None):
    qnet = _load_agent_or_hint(Path(agent) if agent else wd / "agent.rlvz")
    gen_path = Path(generator) if generator else wd / "generator_full.rlvz"
    gen = _load_generator_or_hint(gen_path)
    label = gen_label or gen.config.loss_mode.value
    n = episodes if episodes is not None else cfg["eval_episodes"]
    rep = evaluate_on_reconstructions(qnet, gen, lambda: make_env(cfg.env_config()),
                                      n, seed=cfg["seed"] + 20_000, loss_mode=label)
    report = Path(out_report) if out_report else wd / "eval_recon.kv"
    pairs = [("loss_mode", label), ("episodes", n),
             ("mean_raw", f"{rep.mean_raw:.4f}"), ("mean_recon", f"{rep.mean_recon:.4f}")]
    for i, (a, b) in enumerate(zip(rep.scores_raw, rep.scores_recon)):
        pairs.append((f"episode_{i:03d}", f"raw {a:.2f} recon {b:.2f}"))
    write_report(report, "eval-recon", pairs, cfg)
    print(f"[eval-recon] {label}: raw {rep.mean_raw:.2f} vs recon {rep.mean_recon:.2f} "
          f"over {n} paired episodes")
    return rep


def cmd_novelty(cfg, wd, agent=None, generator=None, data=None, samples=None,
                target=None, out_report=None):
    qnet = _load_agent_or_hint(Path(agent) if agent else wd / "agent.rlvz")
    gen = _load_generator_or_hint(
        Path(generator) if generator else wd / "generator_full.rlvz")
    ds = _load_dataset_or_hint(Path(data) if data else wd / "dataset.rlvd")
    n = samples if samples is not None else cfg["novelty_samples"]
    scfg = cfg.synthesis_config()
    if target:
        tspec = TargetSpec.parse(target, beta=cfg["beta"])
        steps = scfg.steps
    else:
        tspec = TargetSpec.parse(cfg["target"], beta=cfg["beta"])
        steps = 0  # pure generation
    scfg = SynthesisConfig(alpha=scfg.alpha, steps=steps, lr=scfg.lr, samples=n,
                           z_policy=scfg.z_policy, seed=scfg.seed)
    results = synthesize(gen, qnet, tspec, scfg)
    rep = novelty_histogram([r.state for r in results], ds.frames())
    report = Path(out_report) if out_report else wd / "novelty.kv"
    pairs = [("samples", n), ("optimized", steps > 0),
             ("mean_fraction", f"{rep.fractions.mean():.4f}")]
    for t in rep.thresholds:
        pairs.append((f"exceeding_{int(t * 100)}pct", f"{rep.cumulative[t]:.4f}"))
    write_report(report, "novelty", pairs, cfg)
    print("[novelty] % samples differing in more than t% of pixels: "
          + "  ".join(f">{int(t * 100)}%: {100 * rep.cumulative[t]:.0f}%"
                      for t in rep.thresholds))
    return rep


def cmd_retrieve(cfg, wd, agent=None, generator=None, data=None, target=None,
                 samples=None, out_grid=None, out_report=None):
    qnet = _load_agent_or_hint(Path(agent) if agent else wd / "agent.rlvz")
    gen = _load_generator_or_hint(
        Path(generator) if generator else wd / "generator_full.rlvz")
    ds = _load_dataset_or_hint(Path(data) if data else wd / "dataset.rlvd")
    tspec = TargetSpec.parse(target if target else cfg["target"], beta=cfg["beta"])
    n = samples if samples is not None else 4
    scfg = cfg.synthesis_config()
    scfg = SynthesisConfig(alpha=scfg.alpha, steps=scfg.steps, lr=scfg.lr, samples=n,
                           z_policy=scfg.z_policy, seed=scfg.seed)
    results = synthesize(gen, qnet, tspec, scfg)
    frames = ds.frames()
    tiles, pairs = [], [("target", tspec.label()), ("samples", n)]
    for i, r in enumerate(results):
        i_l2, d_l2 = nearest_training_frame(r.state, frames)
        i_obj, d_obj = nearest_training_frame(r.state, frames, qvalues=ds.qvalues,
                                              metric="objective", target=tspec,
                                              query_q=r.q)
        tiles += [r.state, frames[i_l2], frames[i_obj]]
        pairs.append((f"sample_{i:03d}_l2", f"idx {i_l2} mse {d_l2:.6f}"))
        pairs.append((f"sample_{i:03d}_objective", f"idx {i_obj} dist {d_obj:.6f}"))
    tag = _synth_tag(tspec)
    grid = Path(out_grid) if out_grid else wd / f"retrieve_{tag}.pgm"
    report = Path(out_report) if out_report else wd / f"retrieve_{tag}.kv"
    write_image_grid(tiles, 3, grid)
    write_report(report, "retrieve", pairs, cfg)
    print(f"[retrieve] target {tspec.label()}: {n} samples "
          f"(rows: sample | L2-nearest | objective-nearest) -> {grid}")
    return grid, report


def cmd_saliency(cfg, wd, agent=None, data=None, count=8, out_grid=None):
    qnet = _load_agent_or_hint(Path(agent) if agent else wd / "agent.rlvz")
    ds = _load_dataset_or_hint(Path(data) if data else wd / "dataset.rlvd")
    frames = ds.frames()
    rng = np.random.default_rng(cfg["seed"] + 33)
    idx = rng.choice(len(frames), size=min(count, len(frames)), replace=False)
    tiles, fallbacks = [], 0
    for i in idx:
        tiles.append(frames[i])
    for i in idx:
        m = saliency_mask(qnet, frames[i], blur=cfg["blur_masks"])
        fallbacks += int(m.uniform_fallback)
        peak = m.weights.max()
        vis = m.weights / peak if peak > 0 else m.weights
        tiles.append(vis[None])
    grid = Path(out_grid) if out_grid else wd / "saliency.pgm"
    write_image_grid(tiles, len(idx), grid)
    write_report(wd / "saliency.kv", "saliency",
                 [("frames", len(idx)), ("uniform_fallbacks", fallbacks),
                  ("grid", grid.name)], cfg)
    print(f"[saliency] {len(idx)} frames (top row) with masks (bottom row) -> {grid}")
    return grid


def cmd_run_pipeline(cfg, wd):
    cmd_train_agent(cfg, wd)
    cmd_collect(cfg, wd)
    gen_path = cmd_train_generator(cfg, wd)
    cmd_synthesize(cfg, wd, generator=gen_path)
    cmd_eval_recon(cfg, wd, generator=gen_path)
    cmd_novelty(cfg, wd, generator=gen_path)
    cmd_retrieve(cfg, wd, generator=gen_path)
    cmd_saliency(cfg, wd)
    print(f"[run-pipeline] all stages complete; artifacts in {wd}")


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = _config_from_args(args)
        if args.dump_config:
            sys.stdout.write(cfg.dump())
            return 0
        if not args.command:
            parser.print_help()
            return 1
        wd = _workdir(args)
        if args.command == "train-agent":
            cmd_train_agent(cfg, wd, out=args.out)
        elif args.command == "collect":
            cmd_collect(cfg, wd, agent=args.agent, count=args.count, eps=args.eps,
                        out=args.out)
        elif args.command == "train-generator":
            cmd_train_generator(cfg, wd, agent=args.agent, data=args.data,
                                loss=args.loss, out=args.out)
        elif args.command == "synthesize":
            cmd_synthesize(cfg, wd, agent=args.agent, generator=args.generator,
                           target=args.target, beta=args.beta, alpha=args.alpha,
                           steps=args.steps, samples=args.samples,
                           out_grid=args.out_grid, out_report=args.out_report)
        elif args.command == "eval-recon":
            cmd_eval_recon(cfg, wd, agent=args.agent, generator=args.generator,
                           episodes=args.episodes, out_report=args.out_report)
        elif args.command == "novelty":
            cmd_novelty(cfg, wd, agent=args.agent, generator=args.generator,
                        data=args.data, samples=args.samples, target=args.target,
                        out_report=args.out_report)
        elif args.command == "retrieve":
            cmd_retrieve(cfg, wd, agent=args.agent, generator=args.generator,
                         data=args.data, target=args.target, samples=args.samples,
                         out_grid=args.out_grid, out_report=args.out_report)
        elif args.command == "saliency":
            cmd_saliency(cfg, wd, agent=args.agent, data=args.data,
                         count=args.count, out_grid=args.out_grid)
        elif args.command == "run-pipeline":
            cmd_run_pipeline(cfg, wd)
        return 0
    except (InputError, ConfigError, FormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # internal failure
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
