"""Command-line experiments with deterministic seeding and CSV/JSON output.

Every run writes ``<out>`` (CSV with a ``# schema=...`` first line) and
``<out stem>.manifest.json``.  Configuration comes from ``--config`` (JSON);
command-line flags override it.  Results depend only on (config, seed):
Monte-Carlo work is split into fixed-size shards with streams (seed, shard),
and shard results are combined in shard order whatever ``--threads`` is.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import os
import platform
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .bounds import PhaseSurfaceParams, surface_csv, surface_grid
from .codec import block_quantizer, log_decay_codec, fit_loglog_slope
from .critical import (MeasureSpec, block_ball_bound, growth_constants, sample_critical_batch,
                       tail_radius)
from .errors import ConfigError, DomainError
from .lp_geometry import BallSpec, sample_uniform_ball
from .nn import capacity_log2, decode_network, encode_network, length_bound, random_context, random_network
from .rng import shard_sizes, stream
from .sequence import INF, SpaceSpec, as_exponent, exponent_to_json, make_dyadic_partition, mixed_norm_batch
from .wavelets import (WaveletLayout, WaveletSystem, gram_deviation, moment_errors,
                       partition_of_unity_error, random_interior_coefficients, synthesize)

KINDS = ("sample", "codec-eval", "phase-surface", "ball-prob", "wavelet-check",
         "nn-roundtrip", "g2-demo")

DEFAULTS = {
    "sample": {"d": 1, "p": 2, "q": 2, "alpha": 1.5, "theta": 0.0, "M": 10, "samples": 100,
               "save_signals": False},
    "codec-eval": {"d": 1, "p": 2, "q": 2, "alpha": 1.5, "theta": 0.0, "M": 15, "samples": 200,
                   "R": {"pow2": [6, 14]}},
    "phase-surface": {"s": 2.002, "c": 1.0,
                      "R": {"start": 0, "stop": 100, "num": 100},
                      # with s = 2.002 and c = 1 the surface bottoms out at log2 = -1000 (R = 0)
                      "inv_eps": {"start": 1, "stop": 1000.0**2.002, "num": 100, "log": True}},
    "ball-prob": {"d": 1, "p": 2, "q": INF, "alpha": 1.5, "theta": 0.0, "M": 10,
                  "samples": 10000, "block": 1,
                  "eps": {"start": 0.001, "stop": 0.5, "num": 10, "log": True}},
    "wavelet-check": {"N": 3, "G": 12, "j_max": 7, "gram_size": 50, "parseval_sets": 20,
                      "parseval_nonzeros": 50},
    "nn-roundtrip": {"trials": 200, "sigma_max": 3, "W_max": 64},
    "g2-demo": {"s": 1.0, "sigma": 3.0, "element": 5, "n_max": 64},
}

SHARD_SIZE = 50


@dataclass
class ExperimentConfig:
    kind: str
    seed: int
    out: Path
    threads: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        if self.seed is None:
            raise ConfigError("a seed is required (--seed or 'seed' in the config)")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        for key in ("R", "inv_eps", "eps"):
            if key in self.params:
                self.params[key] = expand_grid(self.params[key], key)

    @property
    def manifest_path(self) -> Path:
        return self.out.with_name(self.out.stem + ".manifest.json")


def expand_grid(spec, name: str) -> list:
    """Lists pass through; {"pow2": [a, b]} or {"start", "stop", "num", "log"} expand."""
    if isinstance(spec, dict):
        if "pow2" in spec:
            a, b = spec["pow2"]
            vals = [2**k for k in range(int(a), int(b) + 1)]
        else:
            try:
                start, stop, num = float(spec["start"]), float(spec["stop"]), int(spec["num"])
            except KeyError as exc:
                raise ConfigError(f"grid {name!r} needs start, stop and num") from exc
            if spec.get("log"):
                if start <= 0:
                    raise ConfigError(f"log grid {name!r} needs a positive start")
                vals = np.geomspace(start, stop, num).tolist()
            else:
                vals = np.linspace(start, stop, num).tolist()
    else:
        vals = list(spec) if isinstance(spec, (list, tuple)) else [spec]
    if not vals:
        raise ConfigError(f"grid {name!r} is empty")
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise ConfigError(f"grid {name!r} must be strictly increasing")
    return vals


def _space(params: dict) -> SpaceSpec:
    part = make_dyadic_partition(int(params["d"]), int(params["M"]))
    space = SpaceSpec(part, _exp(params["p"]), _exp(params["q"]), float(params["alpha"]),
                      float(params.get("theta", 0.0)))
    space.require_valid()
    return space


def _exp(v):
    if isinstance(v, str) and v.lower() in ("inf", "infinity"):
        return INF
    return as_exponent(v)


def _jsonable(v):
    if v is INF:
        return "inf"
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def _space_constants(space: SpaceSpec) -> dict:
    return {"s_star": space.s_star, "p": exponent_to_json(space.p),
            "q": exponent_to_json(space.q), "alpha": space.alpha, "d": space.d}


def _sharded(cfg: ExperimentConfig, total: int, work) -> list:
    """Run ``work(rng, n)`` on fixed shards; results come back in shard order."""
    sizes = shard_sizes(total, SHARD_SIZE)
    jobs = [(i, n) for i, n in enumerate(sizes)]

    def run(job):
        i, n = job
        return work(stream(cfg.seed, i), n)

    if cfg.threads == 1 or len(jobs) == 1:
        return [run(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        return list(pool.map(run, jobs))


def _csv(schema: str, header: list, rows) -> str:
    buf = io.StringIO()
    buf.write(f"# schema=ratephase.{schema}/1\n")
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


# ---------------------------------------------------------------------------
# experiments; each returns (csv text, derived dict)

def run_sample(cfg: ExperimentConfig):
    P = cfg.params
    space = _space(P)
    spec = MeasureSpec.for_space(space)
    M = int(P["M"])
    chunks = _sharded(cfg, int(P["samples"]),
                      lambda rng, n: sample_critical_batch(spec, M, n, rng))
    X = np.vstack(chunks)
    norms = mixed_norm_batch(space, X, M)
    l2 = np.linalg.norm(X, axis=1)
    if P.get("save_signals"):
        np.save(cfg.out.with_name(cfg.out.stem + ".signals.npy"), X)
    rows = [(i, a, b) for i, (a, b) in enumerate(zip(norms, l2))]
    derived = _space_constants(space) | {"kappa": spec.kappa,
                                         "max_mixed_norm": float(np.max(norms))}
    return _csv("samples", ["sample", "mixed_norm", "l2_norm"], rows), derived


def run_codec_eval(cfg: ExperimentConfig):
    P = cfg.params
    space = _space(P)
    spec = MeasureSpec.for_space(space)
    M = int(P["M"])
    X = np.vstack(_sharded(cfg, int(P["samples"]),
                           lambda rng, n: sample_critical_batch(spec, M, n, rng)))
    rows, worst = [], []
    for R in P["R"]:
        codec = block_quantizer(space, int(R), M=M)
        err = np.linalg.norm(codec.roundtrip_batch(X) - X, axis=1)
        worst.append(float(err.max()))
        rows.append((int(R), float(err.max()), float(err.mean()), codec.cutoff))
    slope = fit_loglog_slope(P["R"], worst)
    derived = _space_constants(space) | {"slope": slope, "distortion_exponent": -slope}
    return _csv("codec-eval", ["R", "max_error", "mean_error", "blocks"], rows), derived


def run_phase_surface(cfg: ExperimentConfig):
    P = cfg.params
    params = PhaseSurfaceParams(float(P["s"]), float(P["c"]))
    rows = surface_grid(params, P["R"], P["inv_eps"])
    text = surface_csv(rows)
    return text, {"s": params.s, "c": params.c, "min_log2_value": float(rows[:, 3].min())}


def run_ball_prob(cfg: ExperimentConfig):
    """P(||x||_2 <= eps) for x from the critical measure, or for one block if ``block`` is set."""
    P = cfg.params
    space = _space(P)
    spec = MeasureSpec.for_space(space)
    eps = np.asarray(P["eps"], dtype=float)
    M = int(P["M"])
    s = float(P.get("s", space.s_star + 0.25))
    growth = growth_constants(spec, s)
    derived = _space_constants(space) | {"kappa": spec.kappa, "s": s, "c": growth.c,
                                         "eps0": growth.eps0}
    block = P.get("block")
    if block:
        m = int(block)
        n_m = space.partition.block_sizes[m - 1]
        r = spec.block_radii(m)[m - 1]

        def work(rng, n):
            Y = sample_uniform_ball(BallSpec(space.p, n_m, r), rng, size=n) / spec.kappa
            d = np.linalg.norm(Y, axis=1)
            return np.array([np.count_nonzero(d <= e) for e in eps])

        bounds = [block_ball_bound(spec, float(e), m) for e in eps]
    else:
        derived["tail_radius"] = tail_radius(spec, M)

        def work(rng, n):
            d = np.linalg.norm(sample_critical_batch(spec, M, n, rng), axis=1)
            return np.array([np.count_nonzero(d <= e) for e in eps])

        # the growth bound is only certified below eps0
        bounds = [2.0 ** float(growth.log2_bound(e)) if e < growth.eps0 else None for e in eps]
    N = int(P["samples"])
    hits = np.sum(_sharded(cfg, N, work), axis=0)
    rows = []
    for e, h, b in zip(eps, hits, bounds):
        est = h / N
        se = math.sqrt(est * (1 - est) / N)
        rows.append((float(e), est, se, b, growth.c, growth.eps0, int(cfg.seed)))
    header = ["eps", "estimate", "stderr", "analytic_bound", "c", "eps0", "seed"]
    return _csv("ball-prob", header, rows), derived


def run_wavelet_check(cfg: ExperimentConfig):
    P = cfg.params
    system = WaveletSystem(int(P["N"]))
    G, j_max = int(P["G"]), int(P["j_max"])
    rng = stream(cfg.seed, 0)
    layout = WaveletLayout(system, 1, j_max, "int")
    pairs = [(j, m) for j in range(j_max + 1)
             for m in range(layout.ranges[j][0], layout.ranges[j][1] + 1)]
    n_gram = min(int(P["gram_size"]), len(pairs))
    pick = sorted(rng.choice(len(pairs), size=n_gram, replace=False))
    rows = [("partition_of_unity", partition_of_unity_error(system), 1e-6),
            ("vanishing_moments", float(np.max(moment_errors(system))), 1e-6),
            ("gram_deviation", gram_deviation(system, [pairs[i] for i in pick], G), 1e-3)]
    worst = 0.0
    for _ in range(int(P["parseval_sets"])):
        c = random_interior_coefficients(layout, int(P["parseval_nonzeros"]), rng)
        worst = max(worst, abs(synthesize(c, G).l2_norm() - c.l2_norm()) / c.l2_norm())
    rows.append(("parseval_relative", worst, 1e-3))
    text = _csv("wavelet-check", ["check", "value", "tolerance", "pass"],
                [(n, v, t, v <= t) for n, v, t in rows])
    return text, {"N": system.N, "L": system.L, "all_pass": all(v <= t for _, v, t in rows)}


def run_nn_roundtrip(cfg: ExperimentConfig):
    P = cfg.params
    rng = stream(cfg.seed, 0)
    rows = []
    for trial in range(int(P["trials"])):
        ctx = random_context(rng, int(P["sigma_max"]), int(P["W_max"]))
        net = random_network(ctx, int(rng.integers(0, ctx.W_cap + 1)), rng)
        bits = encode_network(net)
        ok = decode_network(bits, ctx) == net
        rows.append((trial, ctx.sigma, ctx.W_cap, net.n_nonzero, bits.R,
                     length_bound(ctx.W_cap, ctx.sigma),
                     capacity_log2(ctx.W_cap, ctx.sigma, ctx.dims), ok))
    derived = {"all_roundtrip": all(r[-1] for r in rows),
               "all_within_bound": all(r[4] <= r[5] for r in rows)}
    return _csv("nn-roundtrip", ["trial", "sigma", "W", "nonzeros", "bits", "length_bound",
                                 "capacity_log2", "roundtrip"], rows), derived


def run_g2_demo(cfg: ExperimentConfig):
    P = cfg.params
    s, sigma, m = float(P["s"]), float(P["sigma"]), int(P["element"])
    rows = []
    for n in range(1, int(P["n_max"]) + 1):
        cls = log_decay_codec(s, n).class_distortion()
        elem = log_decay_codec(s, n).error(m)
        elem_bound = math.log2(m + 1) ** sigma * n ** -sigma
        rows.append((n, cls, n ** -s, elem, elem_bound, cls <= n ** -s and elem <= elem_bound))
    return _csv("g2-demo", ["n", "class_distortion", "class_bound", "element_error",
                            "element_bound", "holds"], rows), {"all_hold": all(r[-1] for r in rows)}


RUNNERS = {"sample": run_sample, "codec-eval": run_codec_eval,
           "phase-surface": run_phase_surface, "ball-prob": run_ball_prob,
           "wavelet-check": run_wavelet_check, "nn-roundtrip": run_nn_roundtrip,
           "g2-demo": run_g2_demo}


def run(cfg: ExperimentConfig) -> dict:
    text, derived = RUNNERS[cfg.kind](cfg)
    cfg.out.parent.mkdir(parents=True, exist_ok=True)
    cfg.out.write_text(text)
    manifest = {
        "schema": "ratephase.manifest/1",
        "experiment": cfg.kind,
        "seed": int(cfg.seed),
        "parameters": _jsonable(cfg.params),
        "derived": _jsonable(derived),
        "csv": cfg.out.name,
        "versions": {"ratephase": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__, "python": platform.python_version()},
    }
    cfg.manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def build_config(argv=None) -> ExperimentConfig:
    parser = argparse.ArgumentParser(prog="ratephase",
                                     description="Seeded rate-distortion experiments")
    parser.add_argument("kind", choices=KINDS)
    parser.add_argument("--config", type=Path, help="JSON file with experiment parameters")
    parser.add_argument("--seed", type=int, help="64-bit seed (required here or in the config)")
    parser.add_argument("--out", type=Path, help="CSV output path")
    parser.add_argument("--threads", type=int, help="worker threads (results do not depend on it)")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=JSON",
                        help="override one parameter, e.g. --set alpha=2")
    args = parser.parse_args(argv)

    params = dict(DEFAULTS[args.kind])
    file_cfg = {}
    if args.config is not None:
        try:
            file_cfg = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise ConfigError("config must be a JSON object")
    seed = file_cfg.pop("seed", None)
    out = file_cfg.pop("out", None)
    threads = file_cfg.pop("threads", None)
    file_cfg.pop("kind", None)
    params.update(file_cfg)
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            params[key] = json.loads(value)
        except json.JSONDecodeError:
            params[key] = value
    unknown = set(params) - set(DEFAULTS[args.kind]) - {"s"}
    if unknown:
        raise ConfigError(f"unknown parameters for {args.kind}: {sorted(unknown)}")
    seed = args.seed if args.seed is not None else seed
    out = args.out if args.out is not None else (Path(out) if out else Path(f"{args.kind}.csv"))
    threads = args.threads if args.threads is not None else (threads or os.cpu_count() or 1)
    return ExperimentConfig(args.kind, seed, Path(out), int(threads), params)


def main(argv=None) -> int:
    try:
        cfg = build_config(argv)
        manifest = run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DomainError as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return 3
    print(json.dumps(manifest["derived"], sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
