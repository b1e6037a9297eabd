"""Conditional coverage, the meta distribution of the SIR, and PPP oracles.

The outer Monte Carlo loop draws typical-user scenes; the inner step averages
over fading.  With Rayleigh fading the inner step is done in closed form:

* max power:  P_c = prod_{b != b*} 1 / (1 + beta l_b / l_b*)
* max SIR, beta >= 1:  P_c = sum_b prod_{b' != b} 1 / (1 + beta l_b' / l_b)
  (at most one BS can reach SIR >= 1, so the per-BS events are disjoint)
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, stats

from . import csvio
from .errors import ParameterError
from .geometry import wilson_interval
from .netmodels import NetworkModel, resolve_window, sample_scene, sample_scene_ergodic
from .propagation import (
    RAYLEIGH,
    AssociationPolicy,
    FadingSpec,
    PathlossModel,
    link_gains,
)
from .rng import as_streams

log = logging.getLogger(__name__)

# Max-SIR closed form keeps this many strongest candidates.  With beta >= 1 the
# j-th strongest BS covers with probability <= 2^-j, so the dropped mass is < 2^-63.
MAX_SIR_CANDIDATES = 64


def default_epsilon_grid(points: int = 101) -> tuple[float, ...]:
    return tuple(float(e) for e in np.linspace(0.0, 1.0, points))


@dataclass(frozen=True)
class CoverageConfig:
    beta: float = 1.0
    epsilon_grid: tuple[float, ...] = field(default_factory=default_epsilon_grid)
    n_outer: int = 2000
    n_inner: int = 500
    policy: AssociationPolicy = AssociationPolicy.MAX_POWER
    fading: FadingSpec = RAYLEIGH
    closed_form: bool = True
    level: float = 0.95

    def __post_init__(self):
        object.__setattr__(self, "policy", AssociationPolicy.parse(self.policy))
        grid = tuple(float(e) for e in self.epsilon_grid)
        object.__setattr__(self, "epsilon_grid", grid)
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise ParameterError(f"beta must be positive and finite, got {self.beta}")
        if not grid or any(not 0.0 <= e <= 1.0 for e in grid):
            raise ParameterError("epsilon grid must be non-empty and inside [0, 1]")
        if any(b < a for a, b in zip(grid, grid[1:], strict=False)):
            raise ParameterError("epsilon grid must be sorted")
        if self.n_outer < 1 or self.n_inner < 1:
            raise ParameterError("n_outer and n_inner must be >= 1")
        if not 0 < self.level < 1:
            raise ParameterError("confidence level must be in (0, 1)")

    @property
    def uses_closed_form(self) -> bool:
        if not (self.closed_form and self.fading.is_rayleigh):
            return False
        return self.policy is AssociationPolicy.MAX_POWER or self.beta >= 1.0


# --------------------------------------------------------------------------
# conditional coverage
# --------------------------------------------------------------------------


def closed_form_max_power(gains: np.ndarray, beta: float) -> float:
    s = int(np.argmax(gains))
    ratio = np.delete(gains, s) / gains[s]
    return float(np.exp(-np.log1p(beta * ratio).sum()))


def closed_form_max_sir(gains: np.ndarray, beta: float) -> float:
    if beta < 1.0:
        raise ParameterError("max-SIR closed form needs beta >= 1")
    order = np.argsort(gains)[::-1]
    cand = gains[order[:MAX_SIR_CANDIDATES]]
    logs = np.log1p(beta * gains[None, :] / cand[:, None]).sum(axis=1) - math.log1p(beta)
    return float(np.exp(-logs).sum())


def monte_carlo_coverage(gains: np.ndarray, beta: float, policy: AssociationPolicy,
                         fading: FadingSpec, n_inner: int, rng: np.random.Generator) -> float:
    h = fading.sample(rng, (n_inner, gains.shape[0]))
    received = h * gains
    if policy is AssociationPolicy.MAX_POWER:
        signal = received[:, int(np.argmax(gains))]
    else:
        signal = received.max(axis=1)
    interference = received.sum(axis=1) - signal
    return float(np.mean(signal >= beta * interference))


def conditional_coverage(scene, pathloss: PathlossModel, cfg: CoverageConfig,
                         rng: np.random.Generator | None = None, closed_form: bool | None = None) -> float:
    """P(SIR >= beta | scene), averaging over fading only.

    ``closed_form`` overrides ``cfg.closed_form``; the closed form is used only
    for Rayleigh fading, and for max SIR only when beta >= 1.
    """
    gains = link_gains(scene.user, scene.bs, pathloss)
    if gains.shape[0] == 1:
        return 1.0
    use_cf = cfg.closed_form if closed_form is None else closed_form
    if use_cf and cfg.fading.is_rayleigh:
        if cfg.policy is AssociationPolicy.MAX_POWER:
            return closed_form_max_power(gains, cfg.beta)
        if cfg.beta >= 1.0:
            return closed_form_max_sir(gains, cfg.beta)
        log.debug("beta=%g < 1: max-SIR closed form invalid, using inner Monte Carlo", cfg.beta)
    if rng is None:
        raise ParameterError("inner Monte Carlo needs an rng")
    return monte_carlo_coverage(gains, cfg.beta, cfg.policy, cfg.fading, cfg.n_inner, rng)


# --------------------------------------------------------------------------
# meta distribution
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MetaDistEstimate:
    epsilon: np.ndarray
    ccdf: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    mean: float
    mean_se: float
    samples: np.ndarray
    level: float = 0.95
    window_radius: float | None = None

    @property
    def n_outer(self) -> int:
        return int(self.samples.shape[0])

    @property
    def mean_ci(self) -> tuple[float, float]:
        z = stats.norm.ppf(0.5 + self.level / 2)
        return self.mean - z * self.mean_se, self.mean + z * self.mean_se

    def layer_cake_integral(self) -> float:
        return float(np.trapezoid(self.ccdf, self.epsilon))

    def layer_cake_tolerance(self, n_se: float = 3.0) -> float:
        eps = self.epsilon
        step = float(np.max(np.diff(eps))) if eps.size > 1 else 1.0
        return step + eps[0] + (1.0 - eps[-1]) + n_se * self.mean_se

    def consistency(self, n_se: float = 3.0) -> dict:
        """Monotone CCDF, unit value at epsilon = 0, layer-cake agreement with the mean."""
        monotone = bool(np.all(np.diff(self.ccdf) <= 0))
        zero_ok = bool(self.epsilon[0] > 0 or self.ccdf[0] == 1.0)
        gap = abs(self.layer_cake_integral() - self.mean)
        return {"monotone": monotone, "ccdf_at_zero": zero_ok,
                "layer_cake_gap": gap, "layer_cake_tol": self.layer_cake_tolerance(n_se),
                "ok": monotone and zero_ok and gap <= self.layer_cake_tolerance(n_se)}

    def to_csv(self, path=None, meta: dict | None = None) -> str:
        full = {"mean_coverage": self.mean, "mean_coverage_se": self.mean_se,
                "mean_ci_lo": self.mean_ci[0], "mean_ci_hi": self.mean_ci[1],
                "n_outer": self.n_outer, "level": self.level}
        if self.window_radius is not None:
            full["window_radius_m"] = self.window_radius
        full.update(meta or {})
        rows = list(zip(self.epsilon.tolist(), self.ccdf.tolist(), self.ci_lo.tolist(),
                        self.ci_hi.tolist(), strict=True))
        header = ["epsilon", "ccdf", "ci_lo", "ci_hi"]
        if path is not None:
            csvio.write(path, header, rows, full)
        return csvio.dumps(header, rows, full)


def estimate_from_samples(samples, epsilon_grid, level: float = 0.95,
                          window_radius: float | None = None) -> MetaDistEstimate:
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[0]
    eps = np.asarray(epsilon_grid, dtype=float)
    hits = (samples[None, :] >= eps[:, None]).sum(axis=1)
    ci = np.array([wilson_interval(int(h), n, level) for h in hits]).reshape(-1, 2)
    se = float(samples.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return MetaDistEstimate(eps, hits / n, ci[:, 0], ci[:, 1], float(samples.mean()), se,
                            samples, level, window_radius)


def _trial_block(args):
    model, pathloss, cfg, window, seed, config_id, start, stop, scene_mode = args
    streams = as_streams(seed)
    sampler = sample_scene if scene_mode == "palm" else sample_scene_ergodic
    out = np.empty(stop - start)
    for i, t in enumerate(range(start, stop)):
        scene = sampler(model, window, streams.generator("scene", config_id, t))
        out[i] = conditional_coverage(scene, pathloss, cfg, streams.generator("fading", config_id, t))
    return out


def resolve_workers(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get("EQUICOV_WORKERS", "1"))
    if workers < 1:
        raise ParameterError(f"workers must be >= 1, got {workers}")
    return workers


def run_trials(model, pathloss, cfg, window, seed, config_id, n, workers=1, scene_mode="palm"):
    """Per-scene conditional coverages for trials 0..n-1, in trial order.

    Trial t always uses the streams (scene, config_id, t) and (fading, config_id, t),
    so the result does not depend on the worker count.
    """
    workers = resolve_workers(workers)
    if workers == 1 or n < 2 * workers:
        return _trial_block((model, pathloss, cfg, window, seed, config_id, 0, n, scene_mode))
    edges = np.linspace(0, n, 4 * workers + 1).astype(int)
    jobs = [(model, pathloss, cfg, window, seed, config_id, a, b, scene_mode)
            for a, b in zip(edges[:-1], edges[1:], strict=True) if b > a]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return np.concatenate(list(pool.map(_trial_block, jobs)))


def meta_distribution(model: NetworkModel, pathloss: PathlossModel, cfg: CoverageConfig,
                      window="auto", seed=0, *, workers: int | None = 1, config_id: int = 0,
                      scene_mode: str = "palm") -> MetaDistEstimate:
    """Empirical meta distribution and spatially averaged coverage.

    ``window`` is a Disk, a radius, or ``"auto"``.  With ``scene_mode="ergodic"``
    the joint process is drawn on twice that radius and the typical user sees a
    disk of the given radius around itself.
    """
    if scene_mode not in ("palm", "ergodic"):
        raise ParameterError(f"scene_mode must be palm or ergodic, got {scene_mode!r}")
    if cfg.policy is AssociationPolicy.MAX_SIR and cfg.closed_form and cfg.fading.is_rayleigh \
            and cfg.beta < 1.0:
        log.info("beta=%g < 1: max-SIR closed form invalid, falling back to inner Monte Carlo "
                 "with n_inner=%d", cfg.beta, cfg.n_inner)
    win = resolve_window(window, model, pathloss)
    sim_win = win if scene_mode == "palm" else win.scaled(2.0)
    seed = as_streams(seed).seed
    samples = run_trials(model, pathloss, cfg, sim_win, seed, config_id, cfg.n_outer,
                         workers, scene_mode)
    return estimate_from_samples(samples, cfg.epsilon_grid, cfg.level, win.radius)


# --------------------------------------------------------------------------
# PPP oracles (single slope, Rayleigh, interference limited)
# --------------------------------------------------------------------------


def ppp_coverage_oracle(beta: float, alpha: float, policy=AssociationPolicy.MAX_POWER) -> float:
    """Coverage of a PPP network with single-slope pathloss and Rayleigh fading.

    Max power (nearest BS): 1 / (1 + beta^d * int_{beta^-d}^inf du / (1 + u^(alpha/2))).
    Max SIR, beta >= 1:     1 / (beta^d * int_0^inf du / (1 + u^(alpha/2))),  d = 2 / alpha.
    Both are free of the BS density.
    """
    policy = AssociationPolicy.parse(policy)
    if not alpha > 2:
        raise ParameterError(f"oracle needs alpha > 2, got {alpha}")
    if not beta > 0:
        raise ParameterError(f"beta must be positive, got {beta}")
    d = 2.0 / alpha

    def f(u):
        return 1.0 / (1.0 + u ** (alpha / 2.0))

    if policy is AssociationPolicy.MAX_POWER:
        lo = beta ** -d
        tail, _ = integrate.quad(f, lo, np.inf, epsabs=1e-14, epsrel=1e-12, limit=200)
        return 1.0 / (1.0 + beta**d * tail)
    if beta < 1:
        raise ParameterError("max-SIR oracle is valid only for beta >= 1")
    head, _ = integrate.quad(f, 0.0, 1.0, epsabs=1e-14, epsrel=1e-12)
    tail, _ = integrate.quad(f, 1.0, np.inf, epsabs=1e-14, epsrel=1e-12, limit=200)
    return 1.0 / (beta**d * (head + tail))
