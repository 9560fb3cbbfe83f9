"""meshctl: generate domains, train policies, mesh boundaries, score meshes,
render pictures.

Exit codes: 0 success, 2 meshing failure, 3 input error, 4 config error.
The MESHCTL_OUT_DIR environment variable supplies the default output
directory; everything else is flag driven.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, domains
from .env import EnvConfig, MeshEnv
from .io import (
    atomic_write_text,
    load_boundary_json,
    load_mesh_text,
    save_boundary_json,
    save_mesh_text,
)
from .quality import report
from .sac import SacAgent, SacConfig, load_checkpoint, run_episode, save_checkpoint, train
from .svg import save_svg

EXIT_OK = 0
EXIT_MESHING_FAILURE = 2
EXIT_INPUT_ERROR = 3
EXIT_CONFIG_ERROR = 4


class InputError(Exception):
    pass


def _out_dir(args) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    env_dir = os.environ.get("MESHCTL_OUT_DIR")
    if env_dir:
        return Path(env_dir)
    raise InputError("no --out given and MESHCTL_OUT_DIR is not set")


def _load_boundary(path):
    try:
        return load_boundary_json(path)
    except FileNotFoundError as exc:
        raise InputError(f"boundary file not found: {path}") from exc
    except ValueError as exc:
        raise InputError(str(exc)) from exc


# -- subcommands ---------------------------------------------------------------


def cmd_gen_domain(args) -> int:
    kwargs = {}
    if args.kind == "star":
        kwargs = {"points": args.points, "inner_radius": args.inner_radius,
                  "seed": args.seed, "jitter": args.jitter}
    elif args.kind == "multi-notch":
        kwargs = {"base_vertices": args.points * 2, "notches": args.notches,
                  "depth": args.depth, "variation": args.variation, "seed": args.seed}
    elif args.kind == "ring-bridged":
        kwargs = {"n_outer": args.points * 2, "n_inner": args.points,
                  "gap": args.gap}
    elif args.kind == "regular":
        kwargs = {"n": args.points * 2}
    if args.kind == "polygon-file":
        if not args.domain:
            raise InputError("--kind polygon-file needs --domain to copy from")
        boundary = _load_boundary(args.domain)
    else:
        boundary = domains.generate(args.kind, **kwargs)
    save_boundary_json(args.out, boundary)
    print(f"wrote {args.out} ({len(boundary)} vertices)")
    return EXIT_OK


def cmd_train(args) -> int:
    boundary = _load_boundary(args.domain)
    env_cfg = EnvConfig(upsilon=args.upsilon)
    sac_cfg = SacConfig(total_steps=args.total_steps, seed=args.seed,
                        eval_every=args.eval_every)
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)

    manifest = {
        "version": __version__,
        "seed": args.seed,
        "domain": str(args.domain),
        "env_config": asdict(env_cfg),
        "sac_config": asdict(sac_cfg),
        "outputs": {
            "log": str(out / "training_log.jsonl"),
            "final_checkpoint": str(out / "final.json"),
        },
    }
    atomic_write_text(out / "manifest.json", json.dumps(manifest, indent=1, sort_keys=True) + "\n")

    agent = SacAgent(env_cfg.observation_size, 3, sac_cfg)
    log_lines = []

    def on_eval(rec):
        log_lines.append(rec.as_json())
        atomic_write_text(out / "training_log.jsonl", "\n".join(log_lines) + "\n")
        print(f"step {rec.step}: return {rec.mean_return:.3f} "
              f"+/- {rec.std_return:.3f}, completion {rec.completion_rate:.0%}")

    def sink(step, live_agent):
        save_checkpoint(out / f"ckpt_{step:09d}.json", live_agent, step, args.seed, env_cfg)

    train(lambda: MeshEnv(boundary.vertices, env_cfg), agent, sac_cfg,
          checkpoint_sink=sink, on_eval=on_eval)
    save_checkpoint(out / "final.json", agent, sac_cfg.total_steps, args.seed, env_cfg)
    print(f"wrote {out / 'final.json'}")
    return EXIT_OK


def _agent_from_checkpoint(path):
    try:
        agent, blob = load_checkpoint(path)
    except FileNotFoundError as exc:
        raise InputError(f"checkpoint not found: {path}") from exc
    except (ValueError, KeyError) as exc:
        raise InputError(f"bad checkpoint {path}: {exc}") from exc
    env_cfg = EnvConfig(**blob["env_config"]) if blob.get("env_config") else EnvConfig()
    return agent, env_cfg


def cmd_mesh(args) -> int:
    boundary = _load_boundary(args.domain)
    agent, env_cfg = _agent_from_checkpoint(args.checkpoint)
    if args.upsilon is not None:
        env_cfg = EnvConfig(**{**asdict(env_cfg), "upsilon": args.upsilon})
    env = MeshEnv(boundary.vertices, env_cfg)
    started = time.perf_counter()
    episode = run_episode(agent, env, deterministic=True)
    elapsed = time.perf_counter() - started
    mesh = episode.mesh
    save_mesh_text(args.out, mesh)
    if args.svg:
        save_svg(args.svg, mesh=mesh, boundary=boundary)
    if not episode.completed:
        print(f"meshing FAILED after {episode.steps} steps: "
              f"{len(mesh.quads)} elements extracted before the front stalled; "
              f"partial mesh written to {args.out}", file=sys.stderr)
        return EXIT_MESHING_FAILURE
    print(f"meshed {args.domain}: {len(mesh.quads)} elements in {elapsed:.2f}s "
          f"-> {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        mesh = load_mesh_text(args.mesh)
    except FileNotFoundError as exc:
        raise InputError(f"mesh file not found: {args.mesh}") from exc
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    try:
        rep = report(mesh)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    if args.kv:
        print("\n".join(rep.as_kv_lines()))
    else:
        print(rep.as_table())
    return EXIT_OK


def cmd_render(args) -> int:
    path = Path(args.input)
    if not path.exists():
        raise InputError(f"input not found: {path}")
    boundary = None
    mesh = None
    try:
        boundary = load_boundary_json(path)
    except ValueError:
        try:
            mesh = load_mesh_text(path)
        except ValueError as exc:
            raise InputError(f"{path}: neither a boundary JSON nor a mesh file ({exc})")
    save_svg(args.svg, mesh=mesh, boundary=boundary)
    print(f"wrote {args.svg}")
    return EXIT_OK


# -- argument parsing ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="meshctl",
                                description="quad meshing with a learned policy")
    p.add_argument("--version", action="version", version=f"meshctl {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-domain", help="write a boundary JSON file")
    g.add_argument("--kind", required=True,
                   choices=["star", "l-shape", "multi-notch", "ring-bridged",
                            "regular", "training", "polygon-file"])
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--points", type=int, default=8,
                   help="star points / half the vertex count for other kinds")
    g.add_argument("--inner-radius", type=float, default=0.45)
    g.add_argument("--jitter", type=float, default=0.0)
    g.add_argument("--notches", type=int, default=2)
    g.add_argument("--depth", type=float, default=0.5)
    g.add_argument("--variation", type=float, default=0.2)
    g.add_argument("--gap", type=float, default=0.2)
    g.add_argument("--domain", help="source file for --kind polygon-file")
    g.set_defaults(func=cmd_gen_domain)

    t = sub.add_parser("train", help="train an extraction policy")
    t.add_argument("--domain", required=True)
    t.add_argument("--out", help="output directory (or MESHCTL_OUT_DIR)")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--total-steps", type=int, default=1_200_000)
    t.add_argument("--eval-every", type=int, default=10_000)
    t.add_argument("--upsilon", type=float, default=1.0,
                   help="density: 1.5 sparse, 1 medium, 0.5 dense")
    t.set_defaults(func=cmd_train)

    m = sub.add_parser("mesh", help="mesh a boundary with a trained checkpoint")
    m.add_argument("--domain", required=True)
    m.add_argument("--checkpoint", required=True)
    m.add_argument("--out", required=True)
    m.add_argument("--svg")
    m.add_argument("--upsilon", type=float, default=None)
    m.set_defaults(func=cmd_mesh)

    e = sub.add_parser("eval", help="quality report for a mesh file")
    e.add_argument("--mesh", required=True)
    e.add_argument("--kv", action="store_true", help="machine-readable key=value lines")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("render", help="render a boundary or mesh to SVG")
    r.add_argument("--input", required=True)
    r.add_argument("--svg", required=True)
    r.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except (FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
