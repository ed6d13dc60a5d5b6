"""Command-line entry points.

Subcommands: generate, landmarks, build, separation, field, neighborhood,
clusters, eval-landmarks, serve. Exit codes: 0 success, 1 runtime/I/O
failure (diagnostic on stderr), 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import diffusion, fields, flows, landmarks, separation, service, similarity, trajectory
from .errors import DriftscopeError


def _parse_grid(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.lower().split("x"))


def _parse_domain(text: str) -> tuple[tuple[float, float], ...]:
    vals = [float(v) for v in text.split(",")]
    if len(vals) % 2 != 0:
        raise ValueError("domain must list lo,hi pairs per dimension")
    return tuple((vals[i], vals[i + 1]) for i in range(0, len(vals), 2))


def _parse_params(text: str) -> dict:
    out = {}
    for item in text.split(","):
        if not item:
            continue
        key, _, val = item.partition("=")
        out[key.strip()] = float(val)
    return out


def _load_dataset(path: str) -> trajectory.TrajectoryDataset:
    return trajectory.load_trajectories(path)


def _load_landmarks(ds, spec: str, strategy: str, seed: int, stride: int):
    if os.path.exists(spec):
        with open(spec) as fh:
            data = json.load(fh)
        return landmarks.LandmarkSet(
            indices=np.asarray(data["indices"], dtype=np.int64),
            strategy=data.get("strategy", "random"),
            rng_seed=data.get("rng_seed", 0),
            stride=data.get("stride", 1),
        )
    return landmarks.select_landmarks(ds, int(spec), strategy=strategy, rng_seed=seed, stride=stride)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="driftscope")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="integrate an analytic flow into a PTRJ dataset")
    p.add_argument("--flow", required=True, choices=flows.VELOCITY_FLOWS + flows.FLOW_MAP_FLOWS)
    p.add_argument("--grid", required=True, help="resolution, e.g. 120x60 or 64x64x64")
    p.add_argument("--domain", default=None, help="lo,hi per dimension, e.g. 0,2,0,1")
    p.add_argument("--t0", type=float, default=0.0, help="window start time")
    p.add_argument("--tau", type=float, required=True, help="window duration")
    p.add_argument("--steps", type=int, required=True, help="saved time steps")
    p.add_argument("--params", default="", help="flow constants, e.g. A=0.1,omega=0.63,eps=0.1")
    p.add_argument("--seed-time", type=float, default=None, help="place seeds at this earlier time")
    p.add_argument("--jitter", type=float, default=0.0, help="relative seed jitter")
    p.add_argument("-o", "--out", required=True)

    p = sub.add_parser("landmarks", help="select landmarks and write them as JSON")
    p.add_argument("--input", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--strategy", default="tfps", choices=landmarks.STRATEGIES)
    p.add_argument("--stride", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--out", required=True)

    p = sub.add_parser("build", help="build the diffusion embedding and cache it")
    p.add_argument("--input", required=True)
    p.add_argument("--landmarks", required=True, help="landmark count or a landmarks JSON path")
    p.add_argument("--strategy", default="tfps", choices=landmarks.STRATEGIES)
    p.add_argument("--stride", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--neighbors", type=int, default=6)
    p.add_argument("--threshold", type=float, default=diffusion.DEFAULT_THRESHOLD)
    p.add_argument("--modes", type=int, default=None)
    p.add_argument("--renormalize", default="on", choices=("on", "off"))
    p.add_argument("--cache", required=True, help="output embedding cache (DGEM)")

    p = sub.add_parser("separation", help="compute a separation field")
    p.add_argument("--input", required=True)
    p.add_argument("--cache", default=None, help="embedding cache (needed with --scale)")
    p.add_argument("--scale", type=float, default=None, help="omit for pure particle covariance")
    p.add_argument("--direction", default="forward", choices=("forward", "backward"))
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--out", required=True, help="field file (DGSF + JSON sidecar)")

    p = sub.add_parser("field", help="multi-source distance field as JSON")
    p.add_argument("--cache", required=True)
    p.add_argument("--sources", required=True, help="comma-separated particle ids")
    p.add_argument("--scale", type=float, required=True)
    p.add_argument("--out", default=None, help="output JSON path (stdout when omitted)")

    p = sub.add_parser("neighborhood", help="similarity neighborhood as JSON")
    p.add_argument("--cache", required=True)
    p.add_argument("--source", type=int, required=True)
    p.add_argument("--scale", type=float, required=True)
    p.add_argument("--radius", type=float, required=True)
    p.add_argument("--max", type=int, default=200)
    p.add_argument("--out", default=None)

    p = sub.add_parser("clusters", help="k-means labels on the embedding as JSON")
    p.add_argument("--cache", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--scale", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)

    p = sub.add_parser("eval-landmarks", help="landmark quality/timing report as CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--strategies", default="random,fps,tfps")
    p.add_argument("--counts", default="250,500,1000")
    p.add_argument("--subspaces", default="50,150,250")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--stride", type=int, default=5)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--threshold", type=float, default=diffusion.DEFAULT_THRESHOLD)
    p.add_argument("-o", "--out", required=True)

    p = sub.add_parser("serve", help="serve the session over HTTP")
    p.add_argument("--input", required=True)
    p.add_argument("--cache", required=True)
    p.add_argument("--port", type=int, default=8077)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--seed", type=int, default=0)

    return parser


def resolve_port(cli_port: int) -> int:
    """DRIFTSCOPE_PORT overrides the --port flag when set."""
    env = os.environ.get("DRIFTSCOPE_PORT")
    if env:
        return int(env)
    return cli_port


def _emit_json(obj, out_path) -> None:
    text = json.dumps(obj, indent=2)
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _run(args) -> int:
    if args.command == "generate":
        spec = flows.FlowSpec(
            flow_id=args.flow,
            grid=_parse_grid(args.grid),
            domain=_parse_domain(args.domain) if args.domain else None,
            t1=args.t0,
            tau=args.tau,
            T=args.steps,
            params=_parse_params(args.params),
            seed_time=args.seed_time,
            jitter=args.jitter,
        )
        ds = flows.integrate_flow(spec)
        trajectory.write_trajectories(ds, args.out)
        print(f"wrote {args.out}: n={ds.n} T={ds.T} d={ds.d}")
        return 0

    if args.command == "landmarks":
        ds = _load_dataset(args.input)
        lm = landmarks.select_landmarks(
            ds, args.count, strategy=args.strategy, rng_seed=args.seed, stride=args.stride
        )
        _emit_json(
            {
                "indices": lm.indices.tolist(),
                "strategy": lm.strategy,
                "rng_seed": lm.rng_seed,
                "stride": lm.stride,
            },
            args.out,
        )
        return 0

    if args.command == "build":
        ds = _load_dataset(args.input)
        lm = _load_landmarks(ds, args.landmarks, args.strategy, args.seed, args.stride)
        bw = diffusion.compute_bandwidths(ds, lm, n_neighbors=args.neighbors, alpha=args.alpha)
        kern = diffusion.build_landmark_kernel(ds, lm, bw, threshold=args.threshold)
        emb = diffusion.build_diffusion_operator(
            kern, m=args.modes, renormalize=args.renormalize == "on"
        )
        diffusion.write_embedding(emb, args.cache)
        print(f"wrote {args.cache}: n={emb.n} modes={emb.m}")
        return 0

    if args.command == "separation":
        ds = _load_dataset(args.input)
        if args.scale is None:
            f = separation.particle_separation(ds, direction=args.direction, k=args.k)
        else:
            if not args.cache:
                raise DriftscopeError("--scale requires an embedding cache (--cache)")
            emb = diffusion.load_embedding(args.cache)
            f = separation.diffusion_separation(
                ds, emb, args.scale, direction=args.direction, k=args.k
            )
        fields.write_field(f, args.out)
        print(f"wrote {args.out} (+ .json sidecar)")
        return 0

    if args.command == "field":
        emb = diffusion.load_embedding(args.cache)
        sources = [int(v) for v in args.sources.split(",") if v]
        msf = similarity.multi_source_field(emb, sources, args.scale)
        _emit_json(
            {
                "sources": list(msf.sources),
                "scale": msf.scale,
                "nearest": msf.nearest.tolist(),
                "distances": msf.distances.tolist(),
            },
            args.out,
        )
        return 0

    if args.command == "neighborhood":
        emb = diffusion.load_embedding(args.cache)
        nb = similarity.similarity_neighborhood(
            emb, args.source, args.scale, args.radius, args.max
        )
        _emit_json(
            {
                "source": nb.source,
                "scale": nb.scale,
                "radius": nb.radius,
                "max_count": nb.max_count,
                "members": nb.members.tolist(),
                "distances": nb.distances.tolist(),
            },
            args.out,
        )
        return 0

    if args.command == "clusters":
        emb = diffusion.load_embedding(args.cache)
        labels = similarity.cluster_embedding(emb, args.scale, args.k, rng_seed=args.seed)
        _emit_json({"k": args.k, "scale": args.scale, "labels": labels.tolist()}, args.out)
        return 0

    if args.command == "eval-landmarks":
        ds = _load_dataset(args.input)
        rows = landmarks.eval_landmarks(
            ds,
            strategies=tuple(args.strategies.split(",")),
            n_l_grid=tuple(int(v) for v in args.counts.split(",")),
            subspace_sizes=tuple(int(v) for v in args.subspaces.split(",")),
            trials=args.trials,
            stride=args.stride,
            alpha=args.alpha,
            threshold=args.threshold,
        )
        landmarks.write_eval_csv(rows, args.out)
        print(f"wrote {args.out} ({len(rows)} rows)")
        return 0

    if args.command == "serve":
        ds = _load_dataset(args.input)
        emb = diffusion.load_embedding(args.cache)
        session = service.SessionState(ds, emb, rng_seed=args.seed)
        port = resolve_port(args.port)
        print(f"serving on http://{args.host}:{port}")
        service.serve(session, port, args.host)
        return 0

    raise DriftscopeError(f"unhandled command {args.command}")


def cli_dispatch(argv) -> int:
    """Parse and run a command line; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _run(args)
    except (DriftscopeError, OSError, ValueError, IndexError) as exc:
        print(f"driftscope: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))
