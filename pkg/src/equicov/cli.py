"""Command-line front end: ``equicov {sample,metadist,contour,voidtest} --config PATH``.

Exit codes: 0 pass, 1 usage or validation error, 2 verification failure,
3 runtime or numerical failure.  Outputs carry no timestamps, so a rerun with
the same config and seed reproduces them byte for byte.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import csvio
from .config import ExperimentConfig, load_config
from .contours import ContourSpec, sweep_level_sets, verify_contour
from .coverage import meta_distribution
from .errors import ConfigError, ParameterError, SceneSamplingError
from .geometry import (
    Disk,
    pattern_to_csv,
    reparameterize_lambda_over_k,
    test_scaling_equivalence,
)
from .netmodels import resolve_window, sample_scene
from .propagation import single_slope
from .rng import Streams

EXIT_OK, EXIT_INVALID, EXIT_FAILED, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("equicov")


def _require(cfg: ExperimentConfig, *sections: str) -> None:
    missing = [s for s in sections if getattr(cfg, s) is None]
    if missing:
        raise ConfigError("missing required section(s) " + ", ".join(f"[{s}]" for s in missing),
                          path=cfg.source)


def _meta(cfg: ExperimentConfig) -> dict:
    meta = {"seed": cfg.seed}
    if cfg.model is not None:
        meta.update(cfg.model.describe())
    if cfg.pathloss is not None:
        meta["alphas"] = ";".join(repr(a) for a in cfg.pathloss.alphas)
        meta["boundaries_m"] = ";".join(repr(r) for r in cfg.pathloss.boundaries)
    return meta


def _coverage_meta(cfg: ExperimentConfig) -> dict:
    c = cfg.coverage
    return {"beta": c.beta, "policy": c.policy.value, "fading": c.fading.name,
            "closed_form": c.uses_closed_form, "n_inner": c.n_inner}


def _report(cfg: ExperimentConfig, out: Path, name: str, text: str) -> None:
    sys.stdout.write(text)
    if "txt" in cfg.formats:
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text, encoding="utf-8", newline="\n")


def cmd_sample(cfg: ExperimentConfig, out: Path) -> int:
    """One typical-user scene: ``users.csv`` (row 0 is the typical user) and ``bs.csv``."""
    _require(cfg, "model")
    pathloss = cfg.pathloss or single_slope(4.0)
    window = resolve_window(cfg.window, cfg.model, pathloss)
    scene = sample_scene(cfg.model, window, Streams(cfg.seed).generator("sample", 0),
                         with_users=True)
    meta = _meta(cfg)
    bs_meta = dict(meta, typical_cluster_bs=";".join(str(i) for i in scene.own_cluster) or "none")
    if scene.cluster_center is not None:
        bs_meta["typical_cluster_center_x"] = scene.cluster_center[0]
        bs_meta["typical_cluster_center_y"] = scene.cluster_center[1]
    pattern_to_csv(scene.users, out / "users.csv", dict(meta, typical_user_row=0))
    pattern_to_csv(scene.bs, out / "bs.csv", bs_meta)
    print(f"wrote {len(scene.users)} users and {len(scene.bs)} base stations to {out}")
    return EXIT_OK


def cmd_metadist(cfg: ExperimentConfig, out: Path) -> int:
    _require(cfg, "model", "pathloss")
    est = meta_distribution(cfg.model, cfg.pathloss, cfg.coverage, cfg.window, cfg.seed,
                            workers=cfg.workers)
    check = est.consistency()
    meta = dict(_meta(cfg), **_coverage_meta(cfg), consistent=check["ok"])
    est.to_csv(out / "metadist.csv", meta)
    lo, hi = est.mean_ci
    text = (f"mean coverage {est.mean:.6f} ({est.level:.0%} CI [{lo:.6f}, {hi:.6f}]), "
            f"n_outer={est.n_outer}, window radius {est.window_radius:.6g} m\n"
            f"consistency: monotone={check['monotone']} ccdf(0)=1:{check['ccdf_at_zero']} "
            f"layer-cake gap {check['layer_cake_gap']:.3g} <= {check['layer_cake_tol']:.3g}: "
            f"{check['ok']}\n")
    _report(cfg, out, "metadist_report.txt", text)
    return EXIT_OK if check["ok"] else EXIT_FAILED


def cmd_contour(cfg: ExperimentConfig, out: Path) -> int:
    _require(cfg, "model", "pathloss")
    if cfg.contour is None and cfg.sweep is None:
        raise ConfigError("contour needs a [contour] and/or a [sweep] section", path=cfg.source)
    status = EXIT_OK
    meta = dict(_meta(cfg), **_coverage_meta(cfg), n_outer=cfg.coverage.n_outer)
    if cfg.contour is not None:
        c = cfg.contour
        spec = ContourSpec(cfg.model, cfg.pathloss, c.k_values, c.scale_boundaries)
        verdict = verify_contour(spec, cfg.coverage, cfg.window, cfg.seed, c.tolerance_se,
                                 mode=c.mode, workers=cfg.workers, n_boot=c.n_boot,
                                 n_paired=c.n_paired)
        verdict.to_csv(out / "contour_verdict.csv", meta)
        _report(cfg, out, "contour_report.txt", verdict.report())
        if not verdict.passed:
            status = EXIT_FAILED
    if cfg.sweep is not None:
        s = cfg.sweep
        sets = sweep_level_sets(cfg.model, cfg.pathloss, cfg.coverage, s.x_param, s.x_values,
                                s.y_param, s.y_values, s.levels, cfg.seed, window=cfg.window,
                                log_x=s.log_x, log_y=s.log_y, workers=cfg.workers)
        sets.to_csv(out / "level_sets.csv", meta)
        sets.grid_csv(out / "coverage_grid.csv")
        n = sum(len(v) for v in sets.polylines.values())
        print(f"level sets: {n} polyline(s) over {len(s.levels)} level(s)")
    return status


def cmd_voidtest(cfg: ExperimentConfig, out: Path) -> int:
    _require(cfg, "voidtest")
    v = cfg.voidtest
    streams = Streams(cfg.seed)
    reparam = reparameterize_lambda_over_k if v.reparam == "lambda_over_k" else None
    header = ["process", "k", "region_radius_m", "p_scaled", "p_scaled_lo", "p_scaled_hi",
              "p_reference", "p_reference_lo", "p_reference_hi", "z", "passed"]
    rows, lines = [], []
    passed = True
    for i, (name, params) in enumerate(v.processes):
        for j, k in enumerate(v.k_values):
            regions = None
            if v.region_radii is not None:
                regions = [Disk((0.0, 0.0), r) for r in v.region_radii]
            rep = test_scaling_equivalence(params, k, regions, v.n_trials,
                                           streams.generator("void", i, j), v.confidence, reparam)
            passed &= rep.passed
            lines.append(f"{name:>4} k={k:<6g} {'pass' if rep.passed else 'FAIL'}")
            for r in rep.rows:
                rows.append((name, float(k), r.region.radius, r.scaled.estimate, *r.scaled.ci,
                             r.reference.estimate, *r.reference.ci, r.z, r.passed))
                lines.append(f"       r={r.region.radius:.4g} m  P0 scaled {r.scaled.estimate:.5f}"
                             f"  reference {r.reference.estimate:.5f}  z={r.z:+.2f}")
    meta = {"seed": cfg.seed, "n_trials": v.n_trials, "confidence": v.confidence,
            "reparam": v.reparam}
    csvio.write(out / "voidtest.csv", header, rows, meta)
    head = f"void-probability scaling test: {'PASS' if passed else 'FAIL'} (reparam={v.reparam})\n"
    _report(cfg, out, "voidtest_report.txt", head + "\n".join(lines) + "\n")
    return EXIT_OK if passed else EXIT_FAILED


COMMANDS = {"sample": cmd_sample, "metadist": cmd_metadist, "contour": cmd_contour,
            "voidtest": cmd_voidtest}


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 1 << 64:
        raise argparse.ArgumentTypeError(f"seed must fit in 64 bits, got {text}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="equicov", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="info-level logging")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=(fn.__doc__ or name).splitlines()[0])
        p.add_argument("--config", required=True, type=Path, help="experiment config file")
        p.add_argument("--seed", type=_u64, help="override [run] seed")
        p.add_argument("--workers", type=_positive_int,
                       help="worker processes (default: [run] workers, then $EQUICOV_WORKERS, then 1)")
        p.add_argument("--out", type=Path, help="output directory (default: [output] directory)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.workers is not None:
            overrides["workers"] = args.workers
        if overrides:
            cfg = dataclasses.replace(cfg, **overrides)
        out = args.out if args.out is not None else cfg.out_dir
        return COMMANDS[args.command](cfg, out)
    except (ConfigError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (SceneSamplingError, ArithmeticError, RuntimeError, OSError, MemoryError) as exc:
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
