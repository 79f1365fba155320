"""Command-line front end: ``generate``, ``laplacian`` and ``repro``.

Exit codes: 0 success, 1 validation or threshold failure, 2 I/O or parse
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from contextlib import nullcontext
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional, Sequence

from .errors import DataFormatError, EigensolverError, IsolatedPointError, KernelError, RankDeficiencyError

log = logging.getLogger("localkernels")

EXIT_OK, EXIT_INVALID, EXIT_IO, EXIT_NUMERICAL = 0, 1, 2, 3
MANIFOLDS = ("flat_torus_r4", "torus_r3", "ellipse", "diffeo_torus")
METHODS = ("diffusion_maps", "conformal")


class UsageError(ValueError):
    """Invalid parameter value, caught before any computation."""


@dataclass
class RunConfig:
    """Resolved parameters of one command. Flags override the config file."""

    epsilon: object = "auto"
    alpha: float = 1.0
    knn: object = 64
    eigs: int = 5
    dim: Optional[int] = None
    seed: int = 0
    threads: Optional[int] = None
    scale: float = 1.0
    out: str = "."
    # generate
    grid: int = 100
    radius: float = 2.0
    count: int = 4000
    minor: float = 1.0 / 6.0
    sampling: str = "grid"
    # laplacian
    method: str = "diffusion_maps"
    operator: Optional[str] = None

    def validate(self) -> "RunConfig":
        if self.epsilon != "auto":
            try:
                self.epsilon = float(self.epsilon)
            except (TypeError, ValueError):
                raise UsageError(f"--epsilon must be a positive number or 'auto', got {self.epsilon!r}") from None
            if not self.epsilon > 0:
                raise UsageError(f"--epsilon must be positive, got {self.epsilon}")
        if not 0 <= float(self.alpha) <= 1:
            raise UsageError(f"--alpha must lie in [0, 1], got {self.alpha}")
        if self.knn != "dense":
            try:
                self.knn = int(self.knn)
            except (TypeError, ValueError):
                raise UsageError(f"--knn must be a positive integer or 'dense', got {self.knn!r}") from None
            if self.knn < 1:
                raise UsageError(f"--knn must be positive, got {self.knn}")
        _positive_int("eigs", self.eigs)
        if self.dim is not None:
            _positive_int("dim", self.dim)
        if self.threads is not None:
            _positive_int("threads", self.threads)
        if int(self.seed) != self.seed:
            raise UsageError(f"--seed must be an integer, got {self.seed}")
        if not 0 < float(self.scale) <= 1:
            raise UsageError(f"--scale must lie in (0, 1], got {self.scale}")
        _positive_int("grid", self.grid, minimum=2)
        _positive_int("count", self.count, minimum=3)
        if not float(self.radius) > 1:
            raise UsageError(f"--radius must exceed 1, got {self.radius}")
        if not float(self.minor) > 0:
            raise UsageError(f"--minor must be positive, got {self.minor}")
        if self.sampling not in ("grid", "iid"):
            raise UsageError(f"--sampling must be 'grid' or 'iid', got {self.sampling!r}")
        if self.method not in METHODS:
            raise UsageError(f"--method must be one of {', '.join(METHODS)}")
        if self.method == "conformal" and self.dim is None:
            raise UsageError("--method conformal requires --dim")
        return self


def _positive_int(name, value, minimum=1):
    if isinstance(value, bool) or int(value) != value or value < minimum:
        raise UsageError(f"--{name} must be an integer >= {minimum}, got {value}")


_FIELDS = {f.name for f in fields(RunConfig)}


def _add_common(p: argparse.ArgumentParser) -> None:
    # Defaults are None so that unset flags fall through to the config file.
    g = p.add_argument_group("common")
    g.add_argument("--epsilon", help="bandwidth, or 'auto' for the nearest-neighbor heuristic")
    g.add_argument("--alpha", type=float, help="right-normalization exponent in [0, 1]")
    g.add_argument("--knn", help="neighbors per point, or 'dense'")
    g.add_argument("--eigs", type=int, help="number of eigenpairs")
    g.add_argument("--dim", type=int, help="intrinsic dimension (conformal method)")
    g.add_argument("--seed", type=int, help="random seed for iid sampling")
    g.add_argument("--threads", type=int, help="BLAS thread limit")
    g.add_argument("--scale", type=float, help="fraction of the full-size point count for repro")
    g.add_argument("--out", help="output path (file for generate, directory otherwise)")
    g.add_argument("--config", help="JSON file with the same keys as the flags")
    g.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="localkernels", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a sample manifold to CSV")
    g.add_argument("manifold", help=f"one of {', '.join(MANIFOLDS)}")
    g.add_argument("--grid", type=int, help="torus grid side")
    g.add_argument("--radius", type=float, help="torus major radius")
    g.add_argument("--count", type=int, help="ellipse point count")
    g.add_argument("--minor", type=float, help="ellipse minor semi-axis")
    g.add_argument("--sampling", help="'grid' or 'iid'")
    _add_common(g)

    lap = sub.add_parser("laplacian", help="build a generator from a CSV cloud and write its spectrum")
    lap.add_argument("input", help="point cloud CSV")
    lap.add_argument("--method", help=f"one of {', '.join(METHODS)}")
    lap.add_argument("--operator", help="also write the operator as a coordinate list to this path")
    _add_common(lap)

    r = sub.add_parser("repro", help="rerun the experiment behind a figure")
    r.add_argument("figure", help="fig1 .. fig5")
    _add_common(r)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"config {args.config}: {exc.msg}", row=exc.lineno) from None
        if not isinstance(loaded, dict):
            raise DataFormatError(f"config {args.config} must hold a JSON object")
        unknown = sorted(set(loaded) - _FIELDS)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        values.update(loaded)
    for name in _FIELDS:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    return RunConfig(**values).validate()


def _threads(cfg: RunConfig):
    if cfg.threads is None:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=cfg.threads)


# -- commands ------------------------------------------------------------------------


def cmd_generate(name: str, cfg: RunConfig) -> int:
    from .manifolds import (
        apply_torus_diffeomorphism,
        generate_ellipse,
        generate_embedded_torus_r3,
        generate_flat_torus_r4,
        save_csv,
    )

    if name not in MANIFOLDS:
        raise UsageError(f"unknown manifold {name!r}; choose from {', '.join(MANIFOLDS)}")
    seed = int(cfg.seed)
    if name == "flat_torus_r4":
        cloud = generate_flat_torus_r4(cfg.grid, cfg.sampling, seed)
    elif name == "torus_r3":
        cloud = generate_embedded_torus_r3(cfg.grid, cfg.radius, cfg.sampling, seed)
    elif name == "ellipse":
        cloud = generate_ellipse(cfg.count, cfg.minor)
    else:
        cloud = apply_torus_diffeomorphism(generate_embedded_torus_r3(cfg.grid, cfg.radius, cfg.sampling, seed))
    out = Path(cfg.out)
    if out.is_dir():
        out = out / f"{name}.csv"
    save_csv(cloud, out)
    print(f"N={cloud.n_points} n={cloud.dim} d={cloud.intrinsic_dim}")
    return EXIT_OK


def cmd_laplacian(path: str, cfg: RunConfig) -> int:
    from .geometry import estimate_density
    from .graph import diffusion_maps_generator, epsilon_heuristic, intrinsic_laplacian, save_coo
    from .kernels import ConformalKernel, RadialKernel
    from .manifolds import load_csv
    from .spectral import decompose, save_embedding

    cloud = load_csv(path)
    if cfg.epsilon == "auto":
        eps = epsilon_heuristic(cloud)
        log.info("epsilon auto: %s", format(eps, ".17g"))
    else:
        eps = cfg.epsilon
    if cfg.eigs >= cloud.n_points:
        raise UsageError(f"--eigs must be smaller than N={cloud.n_points}")
    knn = cfg.knn
    if knn != "dense" and knn >= cloud.n_points:
        knn = "dense"
        log.info("knn >= N; using the dense kernel")
    if cfg.method == "conformal":
        q = estimate_density(cloud, eps, knn)
        gen = intrinsic_laplacian(cloud, ConformalKernel(eps, q.q, cfg.dim), knn)
    else:
        gen = diffusion_maps_generator(cloud, RadialKernel(eps), cfg.alpha, knn)
    emb = decompose(gen, cfg.eigs)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    save_embedding(emb, out / "embedding.csv")
    with (out / "eigenvalues.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "lambda", "minus_lambda"])
        for j, lam in enumerate(emb.eigenvalues):
            w.writerow([j, format(float(lam), ".17g"), format(float(-lam) + 0.0, ".17g")])
    if cfg.operator:
        save_coo(gen, cfg.operator)
    print(f"epsilon={format(eps, '.17g')} N={cloud.n_points}")
    for j, lam in enumerate(emb.eigenvalues):
        print(f"{j} {format(float(-lam) + 0.0, '.17g')}")
    return EXIT_OK


def cmd_repro(figure: str, cfg: RunConfig) -> int:
    from .experiments import FIGURES, run_figure, write_summary

    if figure not in FIGURES:
        raise UsageError(f"unknown figure {figure!r}; choose from {', '.join(FIGURES)}")
    result = run_figure(figure, float(cfg.scale))
    path = write_summary(result, cfg.out, {"seed": int(cfg.seed), "threads": cfg.threads})
    for c in result.checks:
        status = "PASS" if c.passed else "FAIL"
        print(f"{status} {figure} {c.name}: {c.value:.6g} {c.comparison} {c.threshold:.6g}")
    print(f"summary: {path}")
    return EXIT_OK if result.passed else EXIT_INVALID


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose or args.command == "laplacian" else logging.WARNING,
        format="%(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = resolve_config(args)
        with _threads(cfg):
            if args.command == "generate":
                return cmd_generate(args.manifold, cfg)
            if args.command == "laplacian":
                return cmd_laplacian(args.input, cfg)
            return cmd_repro(args.figure, cfg)
    except (EigensolverError, RankDeficiencyError, IsolatedPointError, KernelError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, DataFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
