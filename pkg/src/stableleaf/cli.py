"""Command-line front end.

Exit codes: 0 success, 1 a verification check failed, 2 leaves did not
converge before the cap, 3 invalid configuration or missing input.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dynsys import builtin_catalog, parse_map
from .errors import (
    ConfigError,
    InsufficientDecay,
    MissingInput,
    NoConvergenceAtCap,
    NoInverse,
    NotHyperbolic,
    StableLeafError,
)
from .leaf import LeafCurve, SEED, global_extend_generations, limit_leaf
from .reports import SCHEMA_VERSION, dumps

EXIT_OK, EXIT_FAIL, EXIT_NOCONV, EXIT_CONFIG = 0, 1, 2, 3
FORMATS = ("csv", "json", "svg")


@dataclass
class RunConfig:
    maps: list[str] = field(default_factory=list)
    eta: float = 0.1
    epsilon: float = 0.5
    h: float | None = None
    tol: float = 1e-9
    k_max: int = 25
    eta_tilde: float = 0.05
    seed: int = SEED
    output_dir: str = "."
    formats: tuple[str, ...] = FORMATS
    n_global: int = 0

    def validate(self) -> None:
        if self.h is None:
            self.h = self.eta / 1000.0
        checks = [
            (self.eta > 0, "eta must be positive"),
            (self.h > 0, "h must be positive"),
            (self.h < self.eta, "h must be smaller than eta"),
            (self.h <= self.eta / 100.0 * (1 + 1e-12), "h must not exceed eta/100"),
            (self.eta <= self.epsilon, "eta must not exceed eps"),
            (self.tol > 0, "tol must be positive"),
            (1 <= self.k_max <= 200, "k-max must lie in [1, 200]"),
            (0 < self.eta_tilde <= self.eta, "eta-tilde must lie in (0, eta]"),
            (self.n_global >= 0, "global must be >= 0"),
        ]
        for ok, msg in checks:
            if not (isinstance(ok, (bool, np.bool_)) and ok):
                raise ConfigError(msg)
        bad = set(self.formats) - set(FORMATS)
        if bad:
            raise ConfigError(f"unknown format(s) {sorted(bad)}; choose from {FORMATS}")

    def public(self) -> dict:
        d = asdict(self)
        d.pop("output_dir")
        d["formats"] = list(self.formats)
        return d


_KEYS = {"map": "maps", "eta": "eta", "eps": "epsilon", "epsilon": "epsilon", "h": "h",
         "tol": "tol", "k_max": "k_max", "eta_tilde": "eta_tilde", "seed": "seed",
         "out": "output_dir", "output_dir": "output_dir", "format": "formats",
         "formats": "formats", "global": "n_global", "n_global": "n_global"}


def _split_formats(v) -> tuple[str, ...]:
    if isinstance(v, str):
        v = v.split(",")
    return tuple(s.strip() for s in v if s.strip())


def build_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, overridden by ``--config`` JSON, overridden by explicit flags."""
    cfg = RunConfig()
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        for key, val in data.items():
            name = _KEYS.get(key.replace("-", "_"))
            if name is None:
                raise ConfigError(f"unknown config key {key!r}")
            setattr(cfg, name, val)
    for flag, name in (("eta", "eta"), ("eps", "epsilon"), ("h", "h"), ("tol", "tol"),
                       ("k_max", "k_max"), ("eta_tilde", "eta_tilde"), ("seed", "seed"),
                       ("out", "output_dir"), ("global_n", "n_global")):
        val = getattr(args, flag, None)
        if val is not None:
            setattr(cfg, name, val)
    if args.map:
        cfg.maps = list(args.map)
    if isinstance(cfg.maps, str):
        cfg.maps = [cfg.maps]
    if args.format:
        cfg.formats = args.format
    cfg.formats = _split_formats(cfg.formats)
    try:
        cfg.eta, cfg.epsilon, cfg.tol, cfg.eta_tilde = (float(v) for v in
                                                        (cfg.eta, cfg.epsilon, cfg.tol, cfg.eta_tilde))
        cfg.h = None if cfg.h is None else float(cfg.h)
        cfg.k_max, cfg.seed, cfg.n_global = int(cfg.k_max), int(cfg.seed), int(cfg.n_global)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad numeric value: {exc}") from None
    cfg.validate()
    return cfg


def _maps(cfg: RunConfig, default_all: bool = False):
    if cfg.maps:
        return [parse_map(m) for m in cfg.maps]
    if default_all:
        return builtin_catalog()
    return [parse_map("henon:1.4,0.3")]


def _out(cfg: RunConfig) -> Path:
    d = Path(cfg.output_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _stem(fmap, n_maps: int, base: str) -> str:
    return base if n_maps == 1 else f"{base}_{fmap.name}"


def _write_rows(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow(["%.17g" % v if isinstance(v, float) else v for v in r])


def _limit(fmap, cfg: RunConfig, collect=None):
    return limit_leaf(fmap, cfg.eta, cfg.tol, cfg.h, eps=cfg.epsilon, k_cap=cfg.k_max,
                      collect=collect)


# ---------------------------------------------------------------- commands

def cmd_leaf(cfg: RunConfig) -> int:
    from .plotting import phase_portrait

    maps = _maps(cfg)
    out = _out(cfg)
    for fmap in maps:
        sub = out if len(maps) == 1 else out / fmap.name
        sub.mkdir(parents=True, exist_ok=True)
        leaves: list[LeafCurve] = []
        curve, report = _limit(fmap, cfg, leaves)
        if "csv" in cfg.formats:
            for lf in leaves:
                lf.to_csv(sub / f"leaf_k{lf.label}.csv")
            curve.to_csv(sub / "leaf_inf.csv")
        if "json" in cfg.formats:
            (sub / "leaf_report.json").write_text(dumps({"schema": SCHEMA_VERSION, "report": report}))
        if "svg" in cfg.formats:
            phase_portrait(sub / "leaves.svg", leaves, curve, fmap.fixed_point, title=fmap.label)
        print(f"{fmap.label}: converged at k={report.converged_k}, "
              f"{len(curve.points())} samples -> {sub}")
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    from .analysis import verify_payload

    maps = _maps(cfg, default_all=True)
    payload = verify_payload(maps, eta=cfg.eta, eps=cfg.epsilon, h=cfg.h, tol=cfg.tol,
                             k_max=cfg.k_max, eta_tilde=cfg.eta_tilde, seed=cfg.seed)
    payload["config"] = {"maps": [m.label for m in maps], **{k: v for k, v in payload["config"].items()}}
    path = _out(cfg) / "verify.json"
    path.write_text(dumps(payload))
    for e in payload["lemmas"]:
        print(f"{e['map']:<22} {e['name']:<24} {'pass' if e['pass'] else 'FAIL'}")
    return EXIT_OK if payload["all_pass"] else EXIT_FAIL


def cmd_converge(cfg: RunConfig) -> int:
    from .analysis import convergence_report
    from .plotting import semilog_series

    maps = _maps(cfg)
    out = _out(cfg)
    status = EXIT_OK
    for fmap in maps:
        stem = _stem(fmap, len(maps), "converge")
        try:
            rep = convergence_report(fmap, cfg.eta, cfg.k_max, cfg.h, eps=cfg.epsilon)
        except InsufficientDecay as exc:
            print(f"{fmap.label}: {exc}", file=sys.stderr)
            status = EXIT_FAIL
            continue
        if "csv" in cfg.formats:
            _write_rows(out / f"{stem}.csv", ["k", "gap_at_p", "H_bar", "leaf_dist"],
                        zip(rep.ks, rep.gaps, rep.H, rep.leaf_dists))
        if "json" in cfg.formats:
            (out / f"{stem}.json").write_text(dumps({"schema": SCHEMA_VERSION, "report": rep}))
        if "svg" in cfg.formats:
            semilog_series(out / f"{stem}.svg", rep.ks,
                           {"gap at p": rep.gaps, "H_bar": rep.H, "leaf distance": rep.leaf_dists},
                           title=fmap.label)
        print(f"{fmap.label}: fitted rate {rep.fitted_rate:.4f} ({rep.fit_source})")
    return status


def cmd_contract(cfg: RunConfig) -> int:
    from .analysis import contraction_report
    from .plotting import semilog_series

    maps = _maps(cfg)
    out = _out(cfg)
    status = EXIT_OK
    for fmap in maps:
        stem = _stem(fmap, len(maps), "contract")
        curve, _ = _limit(fmap, cfg)
        rep = contraction_report(fmap, curve, 30, seed=cfg.seed)
        if "csv" in cfg.formats:
            _write_rows(out / f"{stem}.csv", ["k", "ratio", "bound", "direct_ratio"],
                        ((k, r, 2.0 * rep.bound_rate ** k, d)
                         for k, r, d in zip(rep.ks, rep.ratios, rep.direct_ratios)))
        if "json" in cfg.formats:
            (out / f"{stem}.json").write_text(dumps({"schema": SCHEMA_VERSION, "report": rep}))
        if "svg" in cfg.formats:
            semilog_series(out / f"{stem}.svg", rep.ks,
                           {"ratio": rep.ratios, "2 (|lambda_s| + delta)^k":
                            [2.0 * rep.bound_rate ** k for k in rep.ks]}, title=fmap.label)
        ok = rep.K_emp <= 2.0
        status = status if ok else EXIT_FAIL
        print(f"{fmap.label}: K = {rep.K_emp:.4f} ({'pass' if ok else 'FAIL'})")
    return status


def cmd_escape(cfg: RunConfig) -> int:
    from .analysis import cone_radius, escape_experiment
    from .plotting import escape_plot

    maps = _maps(cfg)
    out = _out(cfg)
    status = EXIT_OK
    for fmap in maps:
        stem = _stem(fmap, len(maps), "escape")
        curve, _ = _limit(fmap, cfg)
        rep = escape_experiment(fmap, curve, cfg.eta_tilde, 5, 200)
        cone = cone_radius(fmap, cfg.eta_tilde, 0.5)
        if "csv" in cfg.formats:
            _write_rows(out / f"{stem}.csv", ["x", "y", "offset", "exit_step"],
                        ((q[0], q[1], d, j) for (q, j), d in zip(rep.samples, rep.offsets)))
        if "json" in cfg.formats:
            (out / f"{stem}.json").write_text(dumps({"schema": SCHEMA_VERSION, "report": rep,
                                                     "cone": cone}))
        if "svg" in cfg.formats:
            escape_plot(out / f"{stem}.svg", rep.offsets, [j for _, j in rep.samples],
                        rep.expected_slope, title=fmap.label)
        ok = not rep.stayers and rep.controls_stay
        status = status if ok else EXIT_FAIL
        print(f"{fmap.label}: {len(rep.samples)} off-leaf samples, {len(rep.stayers)} stayed; "
              f"controls stay: {rep.controls_stay}; cone: {'pass' if cone.passed else 'fail'} at radius {cone.radius:g}")
    return status


def _read_leaves(directory: Path) -> tuple[list[LeafCurve], LeafCurve | None]:
    files = sorted(directory.glob("leaf_k*.csv"), key=lambda p: int(p.stem[6:]) if p.stem[6:].isdigit() else 0)
    leaves = [LeafCurve.from_csv(f) for f in files]
    inf_path = directory / "leaf_inf.csv"
    limit = LeafCurve.from_csv(inf_path) if inf_path.exists() else None
    if not leaves and limit is None:
        raise MissingInput(f"no leaf CSV files in {directory}")
    return leaves, limit


def cmd_plot(cfg: RunConfig) -> int:
    from .plotting import phase_portrait

    out = Path(cfg.output_dir)
    if not out.is_dir():
        raise MissingInput(f"input directory {out} does not exist")
    leaves, limit = _read_leaves(out)
    fmap = _maps(cfg)[0]
    cloud = None
    if cfg.n_global:
        base = limit if limit is not None else leaves[-1]
        cloud = np.concatenate(global_extend_generations(fmap, base, cfg.n_global))
    phase_portrait(out / "phase.svg", leaves, limit, fmap.fixed_point, cloud, title=fmap.label)
    print(f"wrote {out / 'phase.svg'}")
    return EXIT_OK


def cmd_global(cfg: RunConfig) -> int:
    from .plotting import phase_portrait

    fmap = _maps(cfg)[0]
    out = _out(cfg)
    n = cfg.n_global or 6
    inf_path = out / "leaf_inf.csv"
    if inf_path.exists():
        curve = LeafCurve.from_csv(inf_path, fmap.label)
    else:
        curve, _ = _limit(fmap, cfg)
    gens = global_extend_generations(fmap, curve, n)
    if "csv" in cfg.formats:
        _write_rows(out / "global.csv", ["x", "y", "j"],
                    ((float(x), float(y), j) for j, g in enumerate(gens) for x, y in g))
    if "svg" in cfg.formats:
        phase_portrait(out / "global.svg", [], curve, fmap.fixed_point, np.concatenate(gens),
                       title=f"{fmap.label}, {n} preimages")
    print(f"{fmap.label}: {sum(len(g) for g in gens)} points over {n} preimages")
    return EXIT_OK


COMMANDS = {"leaf": cmd_leaf, "verify": cmd_verify, "converge": cmd_converge,
            "contract": cmd_contract, "escape": cmd_escape, "plot": cmd_plot, "global": cmd_global}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--map", action="append", help="catalog map, e.g. henon:1.4,0.3 (repeatable)")
    common.add_argument("--eta", type=float, help="leaf half-length (default 0.1)")
    common.add_argument("--eps", type=float, help="outer radius of the neighbourhood (default 0.5)")
    common.add_argument("--h", type=float, help="arclength step (default eta/1000)")
    common.add_argument("--tol", type=float, help="limit-leaf tolerance (default 1e-9)")
    common.add_argument("--k-max", dest="k_max", type=int, help="largest order (default 25)")
    common.add_argument("--eta-tilde", dest="eta_tilde", type=float, help="escape ball radius (default 0.05)")
    common.add_argument("--seed", type=lambda s: int(s, 0), help="random seed (default 0x5EED)")
    common.add_argument("--out", help="output directory (default .)")
    common.add_argument("--format", help="comma list from csv,json,svg (default all)")
    common.add_argument("--config", help="JSON file with the same keys as the flags")
    common.add_argument("--global", dest="global_n", type=int,
                        help="number of preimages for plot/global")
    parser = argparse.ArgumentParser(prog="stableleaf",
                                     description="Finite-time local stable manifolds of planar saddles.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=fn.__doc__ or name)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = build_config(args)
        return COMMANDS[args.command](cfg)
    except (ConfigError, NotHyperbolic, MissingInput, NoInverse) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NoConvergenceAtCap as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOCONV
    except StableLeafError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
