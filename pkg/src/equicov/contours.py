"""Equi-coverage families: generation, statistical verification, level-set sweeps.

Scaling all points by k together with every pathloss boundary leaves the SIR
of each realization unchanged, so the whole meta distribution is constant
along the orbit {(model.scaled(k), pathloss.scaled(k))}.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import stats
from skimage import measure

from . import csvio
from .coverage import (
    CoverageConfig,
    MetaDistEstimate,
    conditional_coverage,
    meta_distribution,
)
from .errors import ParameterError
from .geometry import Disk, PcpParams, PppParams
from .netmodels import (
    MODEL1,
    MODEL2,
    MODEL3,
    NetworkModel,
    resolve_window,
    sample_scene,
)
from .propagation import PathlossModel, build_pathloss, sir_scaling_identity_check
from .rng import as_streams

log = logging.getLogger(__name__)

IDENTITY_TOL = 1e-9
N_BOOTSTRAP = 1000


def scale_config(model: NetworkModel, pathloss: PathlossModel, k: float,
                 scale_boundaries: bool = True) -> tuple[NetworkModel, PathlossModel]:
    """Equi-coverage partner of (model, pathloss) for scale factor k.

    ``scale_boundaries=False`` gives the broken family used as a negative control.
    """
    if not k > 0:
        raise ParameterError(f"scale factor must be positive, got {k}")
    return model.scaled(k), pathloss.scaled(k) if scale_boundaries else pathloss


@dataclass(frozen=True)
class ContourSpec:
    model: NetworkModel
    pathloss: PathlossModel
    k_values: tuple[float, ...]
    scale_boundaries: bool = True

    def __post_init__(self):
        ks = tuple(float(k) for k in self.k_values)
        if not ks:
            raise ParameterError("contour spec needs at least one k value")
        if any(not (k > 0 and math.isfinite(k)) for k in ks):
            raise ParameterError(f"k values must be positive and finite, got {ks}")
        object.__setattr__(self, "k_values", ks)

    def members(self):
        for k in self.k_values:
            yield (k, *scale_config(self.model, self.pathloss, k, self.scale_boundaries))


@dataclass(frozen=True)
class PairedCheck:
    """Common-random-numbers comparison: base scenes scaled by k, same fading."""

    k: float
    n: int
    max_coverage_error: float
    max_sir_rel_error: float
    serving_mismatches: int

    @property
    def passed(self) -> bool:
        return (self.max_coverage_error < IDENTITY_TOL and self.max_sir_rel_error < IDENTITY_TOL
                and self.serving_mismatches == 0)


@dataclass(frozen=True, eq=False)
class ContourRow:
    k: float
    estimate: MetaDistEstimate | None = None
    mean_diff: float = math.nan
    combined_se: float = math.nan
    sup_gap: float = math.nan
    gap_band: float = math.nan
    paired: PairedCheck | None = None
    tolerance_se: float = 3.0

    @property
    def mean_ok(self) -> bool | None:
        if self.estimate is None:
            return None
        return abs(self.mean_diff) <= self.tolerance_se * self.combined_se

    @property
    def gap_ok(self) -> bool | None:
        if self.estimate is None:
            return None
        return self.sup_gap <= self.gap_band

    @property
    def passed(self) -> bool:
        checks = [c for c in (self.mean_ok, self.gap_ok) if c is not None]
        if self.paired is not None:
            checks.append(self.paired.passed)
        return all(checks)


@dataclass(frozen=True, eq=False)
class ContourVerdict:
    spec: ContourSpec
    base: MetaDistEstimate | None
    rows: list[ContourRow] = field(default_factory=list)
    tolerance_se: float = 3.0
    window_radius: float = math.nan

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def report(self) -> str:
        lines = [f"contour verification: {'PASS' if self.passed else 'FAIL'}",
                 f"tolerance_se={self.tolerance_se:g} scale_boundaries={self.spec.scale_boundaries}"
                 f" base_window_radius_m={self.window_radius:.6g}"]
        if self.base is not None:
            lines.append(f"base mean coverage {self.base.mean:.6f} +- {self.base.mean_se:.6f}")
        for r in self.rows:
            parts = [f"k={r.k:g}"]
            if r.estimate is not None:
                parts.append(f"mean={r.estimate.mean:.6f} diff={r.mean_diff:+.6f} "
                             f"({abs(r.mean_diff) / r.combined_se:.2f} SE) "
                             f"sup_gap={r.sup_gap:.4f} band={r.gap_band:.4f}")
            if r.paired is not None:
                parts.append(f"paired max|dPc|={r.paired.max_coverage_error:.3g} "
                             f"max rel dSIR={r.paired.max_sir_rel_error:.3g} "
                             f"serving mismatches={r.paired.serving_mismatches}")
            parts.append("pass" if r.passed else "FAIL")
            lines.append("  " + " ".join(parts))
        return "\n".join(lines) + "\n"

    def to_csv(self, path=None, meta: dict | None = None) -> str:
        header = ["k", "mean", "mean_se", "mean_diff", "combined_se", "sup_gap", "gap_band",
                  "paired_max_pc_err", "paired_max_sir_err", "passed"]
        rows = []
        for r in self.rows:
            est = r.estimate
            rows.append((r.k, est.mean if est else math.nan, est.mean_se if est else math.nan,
                         r.mean_diff, r.combined_se, r.sup_gap, r.gap_band,
                         r.paired.max_coverage_error if r.paired else math.nan,
                         r.paired.max_sir_rel_error if r.paired else math.nan, r.passed))
        meta = {**(meta or {}), "tolerance_se": self.tolerance_se,
                "base_window_radius_m": self.window_radius,
                "scale_boundaries": self.spec.scale_boundaries}
        if self.base is not None:
            meta.update(base_mean=self.base.mean, base_mean_se=self.base.mean_se)
        if path is not None:
            csvio.write(path, header, rows, meta)
        return csvio.dumps(header, rows, meta)


def _ccdf_on_grid(sorted_samples: np.ndarray, eps: np.ndarray) -> np.ndarray:
    n = sorted_samples.shape[-1]
    return (n - np.searchsorted(sorted_samples, eps, side="left")) / n


def sup_gap(a: np.ndarray, b: np.ndarray, eps: np.ndarray) -> float:
    return float(np.max(np.abs(_ccdf_on_grid(np.sort(a), eps) - _ccdf_on_grid(np.sort(b), eps))))


def bootstrap_gap_band(a: np.ndarray, b: np.ndarray, eps: np.ndarray, level: float,
                       rng: np.random.Generator, n_boot: int = N_BOOTSTRAP) -> float:
    """Quantile of the sup-epsilon CCDF gap between two samples resampled from their pool."""
    pool = np.concatenate((a, b))
    gaps = np.empty(n_boot)
    for i in range(n_boot):
        ra = rng.choice(pool, size=a.shape[0], replace=True)
        rb = rng.choice(pool, size=b.shape[0], replace=True)
        gaps[i] = sup_gap(ra, rb, eps)
    return float(np.quantile(gaps, level, method="higher"))


def paired_check(model: NetworkModel, pathloss: PathlossModel, cfg: CoverageConfig, window: Disk,
                 seed, k: float, n: int, scale_boundaries: bool = True) -> PairedCheck:
    """Scale each base scene by k and re-evaluate with the same fading streams."""
    streams = as_streams(seed)
    pl_k = pathloss.scaled(k) if scale_boundaries else pathloss
    max_pc = max_sir = 0.0
    mismatches = 0
    for t in range(n):
        scene = sample_scene(model, window, streams.generator("scene", 0, t))
        pc = conditional_coverage(scene, pathloss, cfg, streams.generator("fading", 0, t))
        scene_k = scene.scaled(k)
        pc_k = conditional_coverage(scene_k, pl_k, cfg, streams.generator("fading", 0, t))
        max_pc = max(max_pc, abs(pc - pc_k))
        fading = cfg.fading.sample(streams.generator("identity", 0, t), len(scene.bs))
        if scale_boundaries:
            chk = sir_scaling_identity_check(scene.user, scene.bs, fading, pathloss, k, cfg.policy)
        else:
            chk = _unscaled_boundary_check(scene, fading, pathloss, k, cfg)
        max_sir = max(max_sir, chk.rel_error)
        mismatches += chk.serving != chk.serving_scaled
    return PairedCheck(float(k), n, max_pc, max_sir, mismatches)


def _unscaled_boundary_check(scene, fading, pathloss, k, cfg):
    from .propagation import IdentityCheck, associate, compute_sir

    user = np.asarray(scene.user)
    pts = scene.bs.points
    s = associate(user, pts, fading, cfg.policy, pathloss)
    s_k = associate(k * user, k * pts, fading, cfg.policy, pathloss)
    sir = compute_sir(user, pts, s, fading, pathloss)
    sir_k = compute_sir(k * user, k * pts, s_k, fading, pathloss)
    err = 0.0 if math.isinf(sir) and math.isinf(sir_k) else abs(sir_k - sir) / abs(sir)
    return IdentityCheck(sir, sir_k, err, s, s_k)


def verify_contour(spec: ContourSpec, cfg: CoverageConfig, window="auto", seed=0,
                   tolerance_se: float = 3.0, *, mode: str = "independent",
                   workers: int | None = 1, n_boot: int = N_BOOTSTRAP,
                   n_paired: int | None = None) -> ContourVerdict:
    """Check that coverage and the meta distribution are constant along a scaling family.

    ``mode``: ``independent`` draws fresh randomness for each member (statistical
    test), ``paired`` reuses base scenes scaled by k (exact identity), ``both``.
    The simulation window of member k is the base window scaled by k.  A member
    passes when its mean coverage is within ``tolerance_se`` combined standard
    errors of the base and its sup-epsilon CCDF gap is inside the pooled-bootstrap
    band at the matching two-sided level.
    """
    if mode not in ("independent", "paired", "both"):
        raise ParameterError(f"mode must be independent, paired or both, got {mode!r}")
    streams = as_streams(seed)
    win = resolve_window(window, spec.model, spec.pathloss)
    level = 1.0 - 2.0 * stats.norm.sf(tolerance_se)
    eps = np.asarray(cfg.epsilon_grid)
    base = None
    if mode in ("independent", "both"):
        base = meta_distribution(spec.model, spec.pathloss, cfg, win, streams, workers=workers,
                                 config_id=0)
    rows = []
    for i, (k, model_k, pl_k) in enumerate(spec.members(), start=1):
        row = ContourRow(k, tolerance_se=tolerance_se)
        if base is not None:
            est = meta_distribution(model_k, pl_k, cfg, win.scaled(k), streams, workers=workers,
                                    config_id=i)
            band = bootstrap_gap_band(base.samples, est.samples, eps, level,
                                      streams.generator("bootstrap", i), n_boot)
            row = replace(row, estimate=est, mean_diff=est.mean - base.mean,
                          combined_se=math.hypot(est.mean_se, base.mean_se),
                          sup_gap=sup_gap(base.samples, est.samples, eps), gap_band=band)
        if mode in ("paired", "both"):
            n = cfg.n_outer if n_paired is None else n_paired
            row = replace(row, paired=paired_check(spec.model, spec.pathloss, cfg, win, streams,
                                                   k, n, spec.scale_boundaries))
        rows.append(row)
    return ContourVerdict(spec, base, rows, tolerance_se, win.radius)


# --------------------------------------------------------------------------
# level sets
# --------------------------------------------------------------------------

SWEEP_PARAMS = ("lambda_b", "lambda_p", "rho", "R_c1")


def with_param(model: NetworkModel, pathloss: PathlossModel, name: str, value: float):
    """Copy of (model, pathloss) with one sweep parameter replaced, couplings kept."""
    value = float(value)
    if name == "lambda_b":
        if model.kind == MODEL1:
            return replace(model, bs=PppParams(value)), pathloss
        if model.kind == MODEL2:
            return replace(model, bs=PppParams(value),
                           users=replace(model.users, lambda_p=value)), pathloss
        raise ParameterError("lambda_b sweeps apply to Models 1 and 2; use lambda_p for Model 3")
    if name == "lambda_p":
        if model.kind != MODEL3:
            raise ParameterError("lambda_p sweeps apply to Model 3")
        return replace(model, bs=replace(model.bs, lambda_p=value),
                       users=replace(model.users, lambda_p=value)), pathloss
    if name == "rho":
        if model.kind == MODEL1:
            raise ParameterError("Model 1 has no cluster scale")
        users = replace(model.users, rho=value)
        bs = replace(model.bs, rho=value) if isinstance(model.bs, PcpParams) else model.bs
        return replace(model, users=users, bs=bs), pathloss
    if name == "R_c1":
        if not pathloss.boundaries:
            raise ParameterError("R_c1 sweeps need a multi-slope pathloss")
        return model, build_pathloss([value, *pathloss.boundaries[1:]], pathloss.alphas)
    raise ParameterError(f"unknown sweep parameter {name!r}; choose from {SWEEP_PARAMS}")


@dataclass(frozen=True, eq=False)
class LevelSets:
    x_param: str
    y_param: str
    x_values: np.ndarray
    y_values: np.ndarray
    field: np.ndarray
    field_se: np.ndarray
    log_x: bool
    log_y: bool
    polylines: dict = field(default_factory=dict)

    def to_csv(self, path=None, meta: dict | None = None) -> str:
        rows = []
        seg = 0
        for level in sorted(self.polylines):
            for line in self.polylines[level]:
                for x, y in line:
                    rows.append((float(level), seg, float(x), float(y)))
                seg += 1
        full = {"x_param": self.x_param, "y_param": self.y_param,
                "x_scale": "log" if self.log_x else "linear",
                "y_scale": "log" if self.log_y else "linear",
                "field_min": float(np.min(self.field)), "field_max": float(np.max(self.field))}
        full.update(meta or {})
        header = ["level", "segment_id", "x", "y"]
        if path is not None:
            csvio.write(path, header, rows, full)
        return csvio.dumps(header, rows, full)

    def grid_csv(self, path=None) -> str:
        rows = [(float(x), float(y), float(self.field[i, j]), float(self.field_se[i, j]))
                for i, x in enumerate(self.x_values) for j, y in enumerate(self.y_values)]
        header = ["x", "y", "mean_coverage", "mean_coverage_se"]
        meta = {"x_param": self.x_param, "y_param": self.y_param}
        if path is not None:
            csvio.write(path, header, rows, meta)
        return csvio.dumps(header, rows, meta)


def extract_level_sets(field: np.ndarray, x_values, y_values, levels: Sequence[float],
                       log_x: bool = True, log_y: bool = True) -> dict:
    """Iso-lines of ``field[ix, iy]`` by marching squares with linear edge interpolation.

    Interpolation is done in the (possibly log-transformed) axis coordinates.
    Returns {level: [polyline (m, 2) in parameter units, ...]}.
    """
    field = np.asarray(field, dtype=float)
    tx = np.log10(x_values) if log_x else np.asarray(x_values, dtype=float)
    ty = np.log10(y_values) if log_y else np.asarray(y_values, dtype=float)
    if field.shape != (tx.size, ty.size):
        raise ParameterError(f"field shape {field.shape} does not match the axes")
    lo, hi = float(field.min()), float(field.max())
    out = {}
    for level in levels:
        level = float(level)
        if not lo <= level <= hi:
            log.warning("level %.4g outside observed coverage range [%.4g, %.4g]; no contour",
                        level, lo, hi)
            out[level] = []
            continue
        lines = []
        for c in measure.find_contours(field, level):
            xs = np.interp(c[:, 0], np.arange(tx.size), tx)
            ys = np.interp(c[:, 1], np.arange(ty.size), ty)
            if log_x:
                xs = 10.0**xs
            if log_y:
                ys = 10.0**ys
            lines.append(np.column_stack((xs, ys)))
        out[level] = lines
    return out


def sweep_level_sets(model: NetworkModel, pathloss: PathlossModel, cfg: CoverageConfig,
                     x_param: str, x_values, y_param: str, y_values, levels: Sequence[float],
                     seed=0, *, window="auto", log_x: bool = True, log_y: bool = True,
                     workers: int | None = 1) -> LevelSets:
    """Mean coverage over a parameter grid and its iso-coverage polylines.

    Every cell uses its own auto window (unless ``window`` is fixed) and its own
    stream block, keyed on the cell index.
    """
    x_values = np.asarray(x_values, dtype=float)
    y_values = np.asarray(y_values, dtype=float)
    if x_values.size < 3 or y_values.size < 3:
        raise ParameterError("level-set sweeps need at least a 3 x 3 grid")
    for lvl in levels:
        if not 0.0 < lvl < 1.0:
            raise ParameterError(f"coverage levels must lie in (0, 1), got {lvl}")
    streams = as_streams(seed)
    field_ = np.empty((x_values.size, y_values.size))
    field_se = np.empty_like(field_)
    for i, xv in enumerate(x_values):
        for j, yv in enumerate(y_values):
            m, pl = with_param(model, pathloss, x_param, xv)
            m, pl = with_param(m, pl, y_param, yv)
            est = meta_distribution(m, pl, cfg, window, streams, workers=workers,
                                    config_id=1000 + i * y_values.size + j)
            field_[i, j] = est.mean
            field_se[i, j] = est.mean_se
    lines = extract_level_sets(field_, x_values, y_values, levels, log_x, log_y)
    return LevelSets(x_param, y_param, x_values, y_values, field_, field_se, log_x, log_y, lines)
