"""Planar point processes: PPP and Neyman-Scott cluster processes (Matern, Thomas).

Samplers are pure functions of ``(params, window, rng)``.  Patterns are
immutable.  Void probabilities are estimated by Monte Carlo and, for disks,
computed by radial quadrature of the probability generating functional.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, stats

from . import csvio
from .errors import ParameterError
from .rng import split

TCP = "tcp"
MCP = "mcp"
CLUSTER_KINDS = (TCP, MCP)

# Parents of a Thomas process are drawn this many sigmas beyond the window.
TCP_GUARD_SIGMAS = 5.0

VOID_BATCH = 5000


# --------------------------------------------------------------------------
# windows / regions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Disk:
    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        object.__setattr__(self, "radius", float(self.radius))
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise ParameterError(f"disk radius must be positive and finite, got {self.radius}")

    @property
    def area(self) -> float:
        return math.pi * self.radius**2

    def contains(self, points, rtol: float = 0.0) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        d2 = (pts[:, 0] - self.center[0]) ** 2 + (pts[:, 1] - self.center[1]) ** 2
        return d2 <= (self.radius * (1.0 + rtol)) ** 2

    def contains_window(self, other) -> bool:
        cx, cy = self.center
        if isinstance(other, Disk):
            d = math.hypot(other.center[0] - cx, other.center[1] - cy)
            return d + other.radius <= self.radius * (1 + 1e-12)
        corners = np.array(
            [[other.xmin, other.ymin], [other.xmin, other.ymax],
             [other.xmax, other.ymin], [other.xmax, other.ymax]]
        )
        return bool(self.contains(corners, rtol=1e-12).all())

    def sample_uniform(self, n: int, rng: np.random.Generator) -> np.ndarray:
        r = self.radius * np.sqrt(rng.random(n))
        theta = 2.0 * np.pi * rng.random(n)
        return np.column_stack((self.center[0] + r * np.cos(theta), self.center[1] + r * np.sin(theta)))

    def dilate(self, margin: float) -> "Disk":
        return Disk(self.center, self.radius + margin)

    def scaled(self, k: float) -> "Disk":
        return Disk((k * self.center[0], k * self.center[1]), k * self.radius)

    def to_meta(self) -> dict:
        return {"window": "disk", "center_x_m": self.center[0], "center_y_m": self.center[1],
                "radius_m": self.radius}


@dataclass(frozen=True)
class Rect:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        for name in ("xmin", "ymin", "xmax", "ymax"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ParameterError(f"rectangle must have positive area, got {self}")

    @property
    def area(self) -> float:
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)

    def contains(self, points, rtol: float = 0.0) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        sx = rtol * max(abs(self.xmin), abs(self.xmax))
        sy = rtol * max(abs(self.ymin), abs(self.ymax))
        return ((pts[:, 0] >= self.xmin - sx) & (pts[:, 0] <= self.xmax + sx)
                & (pts[:, 1] >= self.ymin - sy) & (pts[:, 1] <= self.ymax + sy))

    def contains_window(self, other) -> bool:
        if isinstance(other, Rect):
            return (other.xmin >= self.xmin and other.xmax <= self.xmax
                    and other.ymin >= self.ymin and other.ymax <= self.ymax)
        (cx, cy), r = other.center, other.radius
        return (cx - r >= self.xmin and cx + r <= self.xmax
                and cy - r >= self.ymin and cy + r <= self.ymax)

    def sample_uniform(self, n: int, rng: np.random.Generator) -> np.ndarray:
        u = rng.random((n, 2))
        return np.column_stack((self.xmin + (self.xmax - self.xmin) * u[:, 0],
                                self.ymin + (self.ymax - self.ymin) * u[:, 1]))

    def dilate(self, margin: float) -> "Rect":
        return Rect(self.xmin - margin, self.ymin - margin, self.xmax + margin, self.ymax + margin)

    def scaled(self, k: float) -> "Rect":
        return Rect(k * self.xmin, k * self.ymin, k * self.xmax, k * self.ymax)

    def to_meta(self) -> dict:
        return {"window": "rect", "xmin_m": self.xmin, "ymin_m": self.ymin,
                "xmax_m": self.xmax, "ymax_m": self.ymax}


Window = Disk | Rect
Region = Disk | Rect


def window_from_meta(meta: dict) -> Window:
    kind = meta.get("window")
    if kind == "disk":
        return Disk((float(meta["center_x_m"]), float(meta["center_y_m"])), float(meta["radius_m"]))
    if kind == "rect":
        return Rect(*(float(meta[k]) for k in ("xmin_m", "ymin_m", "xmax_m", "ymax_m")))
    raise ParameterError(f"unknown window kind {kind!r}")


# --------------------------------------------------------------------------
# patterns and parameters
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PointPattern:
    """Finite planar point set observed on ``window``.

    ``parent_index[i]`` is the row of point ``i``'s parent in the accompanying
    parent pattern, or -1 for points without a parent in it.
    """

    points: np.ndarray
    window: Window
    parent_index: np.ndarray | None = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, 2)
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)
        if self.parent_index is not None:
            idx = np.array(self.parent_index, dtype=np.int64).reshape(-1)
            if idx.shape[0] != pts.shape[0]:
                raise ParameterError("parent_index length must match the point count")
            idx.flags.writeable = False
            object.__setattr__(self, "parent_index", idx)
        # closed membership, slack only for rounding in k*x vs k*window
        if pts.shape[0] and not self.window.contains(pts, rtol=1e-9).all():
            raise ParameterError("pattern has points outside its window")

    def __len__(self):
        return self.points.shape[0]

    def __eq__(self, other):
        if not isinstance(other, PointPattern):
            return NotImplemented
        same_parents = (self.parent_index is None and other.parent_index is None) or (
            self.parent_index is not None and other.parent_index is not None
            and np.array_equal(self.parent_index, other.parent_index))
        return (self.window == other.window and np.array_equal(self.points, other.points)
                and same_parents)

    __hash__ = None

    def count_in(self, region: Region) -> int:
        return int(region.contains(self.points).sum())


@dataclass(frozen=True)
class PppParams:
    lam: float

    def __post_init__(self):
        object.__setattr__(self, "lam", float(self.lam))
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ParameterError(f"PPP intensity must be positive and finite, got {self.lam}")

    @property
    def intensity(self) -> float:
        return self.lam


@dataclass(frozen=True)
class PcpParams:
    """Neyman-Scott process; ``rho`` is r_d for Matern (mcp) and sigma for Thomas (tcp)."""

    lambda_p: float
    m_bar: float
    rho: float
    kind: str = TCP

    def __post_init__(self):
        for name in ("lambda_p", "m_bar", "rho"):
            v = float(getattr(self, name))
            object.__setattr__(self, name, v)
            if not (v > 0 and math.isfinite(v)):
                raise ParameterError(f"PCP {name} must be positive and finite, got {v}")
        kind = str(self.kind).lower()
        if kind not in CLUSTER_KINDS:
            raise ParameterError(f"cluster kind must be one of {CLUSTER_KINDS}, got {self.kind!r}")
        object.__setattr__(self, "kind", kind)

    @property
    def intensity(self) -> float:
        return self.lambda_p * self.m_bar


def guard_margin(params: PcpParams) -> float:
    if params.kind == TCP:
        return TCP_GUARD_SIGMAS * params.rho
    return params.rho


# --------------------------------------------------------------------------
# samplers
# --------------------------------------------------------------------------


def _check_window(window):
    if not isinstance(window, (Disk, Rect)):
        raise ParameterError(f"unsupported window type {type(window).__name__}")
    if not window.area > 0:
        raise ParameterError("window must have positive area")


def sample_ppp(params: PppParams, window: Window, rng: np.random.Generator) -> PointPattern:
    _check_window(window)
    n = rng.poisson(params.lam * window.area)
    return PointPattern(window.sample_uniform(n, rng), window)


def sample_offsets(kind: str, rho: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Cluster displacements: uniform on the disk of radius rho (mcp) or N(0, rho^2 I) (tcp)."""
    if kind == TCP:
        return rng.normal(0.0, rho, size=(n, 2))
    if kind == MCP:
        r = rho * np.sqrt(rng.random(n))
        theta = 2.0 * np.pi * rng.random(n)
        return np.column_stack((r * np.cos(theta), r * np.sin(theta)))
    raise ParameterError(f"unknown cluster kind {kind!r}")


def sample_pcp(params: PcpParams, window: Window, rng: np.random.Generator):
    """Sample offspring on ``window``; parents come from the window dilated by the guard margin.

    Returns ``(offspring, parents)``; ``offspring.parent_index`` indexes ``parents``.
    """
    _check_window(window)
    parents = sample_ppp(PppParams(params.lambda_p), window.dilate(guard_margin(params)), rng)
    counts = rng.poisson(params.m_bar, size=len(parents))
    idx = np.repeat(np.arange(len(parents)), counts)
    pts = parents.points[idx] + sample_offsets(params.kind, params.rho, idx.size, rng)
    keep = window.contains(pts)
    return PointPattern(pts[keep], window, idx[keep]), parents


def sample_process(params, window: Window, rng: np.random.Generator) -> PointPattern:
    """Sample a PPP or the offspring of a PCP."""
    if isinstance(params, PppParams):
        return sample_ppp(params, window, rng)
    if isinstance(params, PcpParams):
        return sample_pcp(params, window, rng)[0]
    raise ParameterError(f"unsupported process parameters {params!r}")


def scale_pattern(pattern: PointPattern, k: float) -> PointPattern:
    if not k > 0:
        raise ParameterError(f"scale factor must be positive, got {k}")
    k = float(k)
    return PointPattern(pattern.points * k, pattern.window.scaled(k), pattern.parent_index)


@dataclass(frozen=True)
class ScaledSampler:
    """Sampler of k*Psi(params) observed on ``window``.

    Draws Psi on ``window / k`` and maps every point x to k*x.
    """

    params: PppParams | PcpParams
    window: Window
    k: float = 1.0

    def __call__(self, rng: np.random.Generator) -> PointPattern:
        if self.k == 1.0:
            return sample_process(self.params, self.window, rng)
        base = sample_process(self.params, self.window.scaled(1.0 / self.k), rng)
        return scale_pattern(base, self.k)

    def sample_batch(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Draw ``n`` independent realizations at once.

        Returns ``(points, trial)``: all points stacked, and the realization index of each.
        """
        win = self.window.scaled(1.0 / self.k) if self.k != 1.0 else self.window
        if isinstance(self.params, PppParams):
            counts = rng.poisson(self.params.lam * win.area, size=n)
            pts = win.sample_uniform(int(counts.sum()), rng)
            trial = np.repeat(np.arange(n), counts)
        else:
            pwin = win.dilate(guard_margin(self.params))
            n_par = rng.poisson(self.params.lambda_p * pwin.area, size=n)
            parents = pwin.sample_uniform(int(n_par.sum()), rng)
            par_trial = np.repeat(np.arange(n), n_par)
            n_off = rng.poisson(self.params.m_bar, size=parents.shape[0])
            idx = np.repeat(np.arange(parents.shape[0]), n_off)
            pts = parents[idx] + sample_offsets(self.params.kind, self.params.rho, idx.size, rng)
            trial = par_trial[idx]
            keep = win.contains(pts)
            pts, trial = pts[keep], trial[keep]
        if self.k != 1.0:
            pts = pts * self.k
        return pts, trial


# --------------------------------------------------------------------------
# void probabilities
# --------------------------------------------------------------------------


def wilson_interval(successes: int, n: int, level: float = 0.99) -> tuple[float, float]:
    if n <= 0:
        raise ParameterError("wilson interval needs n >= 1")
    z = stats.norm.ppf(0.5 + level / 2.0)
    p = successes / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if successes == 0 else max(0.0, float(center - half))
    hi = 1.0 if successes == n else min(1.0, float(center + half))
    return lo, hi


@dataclass(frozen=True)
class VoidEstimate:
    estimate: float
    ci: tuple[float, float]
    voids: int
    n_trials: int


def _sampler_window(sampler, window):
    if window is not None:
        return window
    return getattr(sampler, "window", None)


def estimate_void_probabilities(
    sampler: Callable[[np.random.Generator], PointPattern],
    regions: Sequence[Region],
    n_trials: int,
    rng: np.random.Generator,
    level: float = 0.99,
    window: Window | None = None,
) -> list[VoidEstimate]:
    """Void-probability estimates for several regions from the same ``n_trials`` patterns."""
    if n_trials < 1:
        raise ParameterError("n_trials must be >= 1")
    if not regions:
        raise ParameterError("at least one region is required")
    win = _sampler_window(sampler, window)
    if win is None:
        raise ParameterError("sampler window unknown; pass window= explicitly")
    for region in regions:
        if not win.contains_window(region):
            raise ParameterError(f"region {region} is not inside the sampler window {win}")
    voids = np.zeros(len(regions), dtype=np.int64)
    if hasattr(sampler, "sample_batch"):
        for start in range(0, n_trials, VOID_BATCH):
            n = min(VOID_BATCH, n_trials - start)
            pts, trial = sampler.sample_batch(n, rng)
            for j, region in enumerate(regions):
                hits = np.bincount(trial[region.contains(pts)], minlength=n)
                voids[j] += int(np.count_nonzero(hits == 0))
    else:
        for _ in range(n_trials):
            pts = sampler(rng).points
            for j, region in enumerate(regions):
                if not region.contains(pts).any():
                    voids[j] += 1
    return [VoidEstimate(v / n_trials, wilson_interval(int(v), n_trials, level), int(v), n_trials)
            for v in voids]


def estimate_void_probability(sampler, region: Region, n_trials: int, rng, level: float = 0.99,
                              window: Window | None = None) -> VoidEstimate:
    return estimate_void_probabilities(sampler, [region], n_trials, rng, level, window)[0]


def _lens_area(d: float, a: float, b: float) -> float:
    """Area of the intersection of disks of radii a and b whose centers are d apart."""
    if d >= a + b:
        return 0.0
    if d <= abs(a - b):
        return math.pi * min(a, b) ** 2
    ca = (d * d + a * a - b * b) / (2 * d * a)
    cb = (d * d + b * b - a * a) / (2 * d * b)
    tri = 0.5 * math.sqrt((-d + a + b) * (d + a - b) * (d - a + b) * (d + a + b))
    return a * a * math.acos(ca) + b * b * math.acos(cb) - tri


def void_probability_disk(params, radius: float) -> float:
    """P(no point in the origin-centered disk of the given radius), on the whole plane.

    PPP: exp(-lam * pi r^2).  PCP: exp(-lambda_p * int (1 - exp(-m_bar F(x))) dx), where
    F(x) is the chance that one offspring of a parent at x lands in the disk.
    """
    if isinstance(params, PppParams):
        return math.exp(-params.lam * math.pi * radius**2)
    if not isinstance(params, PcpParams):
        raise ParameterError(f"unsupported process parameters {params!r}")
    rho = params.rho
    if params.kind == TCP:
        def hit(r):
            return stats.ncx2.cdf((radius / rho) ** 2, 2, (r / rho) ** 2)
        upper = radius + 12.0 * rho
        breaks = [radius]
    else:
        def hit(r):
            return _lens_area(r, radius, rho) / (math.pi * rho**2)
        upper = radius + rho
        breaks = [abs(radius - rho)]

    def integrand(r):
        return 2.0 * math.pi * r * -math.expm1(-params.m_bar * hit(r))

    total, _ = integrate.quad(integrand, 0.0, upper, points=breaks, limit=200,
                              epsabs=1e-13, epsrel=1e-11)
    return math.exp(-params.lambda_p * total)


# --------------------------------------------------------------------------
# scaling law checks
# --------------------------------------------------------------------------


def reparameterize(params, k: float):
    """Parameters of the process equal in law to k * Psi(params)."""
    if not k > 0:
        raise ParameterError(f"scale factor must be positive, got {k}")
    if isinstance(params, PppParams):
        return PppParams(params.lam / k**2)
    return PcpParams(params.lambda_p / k**2, params.m_bar, params.rho * k, params.kind)


def reparameterize_lambda_over_k(params, k: float):
    """Deliberately wrong rule (intensity / k instead of / k^2), kept as a negative control."""
    if not k > 0:
        raise ParameterError(f"scale factor must be positive, got {k}")
    if isinstance(params, PppParams):
        return PppParams(params.lam / k)
    return PcpParams(params.lambda_p / k, params.m_bar, params.rho * k, params.kind)


def characteristic_length(params) -> float:
    """1 / sqrt(pi * intensity): radius of a disk holding one point on average."""
    return 1.0 / math.sqrt(math.pi * params.intensity)


def default_regions(params) -> list[Disk]:
    length = characteristic_length(params)
    return [Disk((0.0, 0.0), f * length) for f in (0.5, 1.0, 2.0)]


@dataclass(frozen=True)
class RegionResult:
    region: Region
    scaled: VoidEstimate
    reference: VoidEstimate
    z: float
    passed: bool


@dataclass(frozen=True)
class ScalingReport:
    """Outcome of comparing k*Psi(params) with Psi(reparameterized) on test regions."""

    __test__ = False

    params: object
    k: float
    reference_params: object
    level: float
    rows: list[RegionResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)


# Public alias; __test__ = False keeps pytest from collecting it.
TestReport = ScalingReport


def _two_proportion(a: VoidEstimate, b: VoidEstimate, level: float) -> tuple[float, bool]:
    pooled = (a.voids + b.voids) / (a.n_trials + b.n_trials)
    var = pooled * (1 - pooled) * (1 / a.n_trials + 1 / b.n_trials)
    diff = a.estimate - b.estimate
    if var == 0.0:
        return (0.0, True) if diff == 0.0 else (math.inf, False)
    z = diff / math.sqrt(var)
    return z, abs(z) <= stats.norm.ppf(0.5 + level / 2.0)


def test_scaling_equivalence(
    params,
    k: float,
    regions: Sequence[Region] | None,
    n_trials: int,
    rng: np.random.Generator,
    level: float = 0.99,
    reparam: Callable | None = None,
) -> ScalingReport:
    """Void-probability comparison of k*Psi against its re-parameterization.

    ``reparam`` overrides the re-parameterization rule (used for negative controls).
    Each region passes when a pooled two-proportion z-test does not reject at ``level``.
    """
    if not k > 0:
        raise ParameterError(f"scale factor must be positive, got {k}")
    target = (reparam or reparameterize)(params, k)
    if regions is None:
        regions = default_regions(target)
    regions = list(regions)
    if not regions:
        raise ParameterError("at least one region is required")
    reach = max(math.hypot(*r.center) + r.radius if isinstance(r, Disk)
                else float(np.max(np.hypot([r.xmin, r.xmax, r.xmin, r.xmax],
                                           [r.ymin, r.ymin, r.ymax, r.ymax])))
                for r in regions)
    window = Disk((0.0, 0.0), reach * (1 + 1e-9))
    rng_scaled, rng_ref = split(rng, 2)
    est_scaled = estimate_void_probabilities(ScaledSampler(params, window, k), regions, n_trials,
                                             rng_scaled, level)
    est_ref = estimate_void_probabilities(ScaledSampler(target, window, 1.0), regions, n_trials,
                                          rng_ref, level)
    rows = []
    for region, a, b in zip(regions, est_scaled, est_ref, strict=True):
        z, ok = _two_proportion(a, b, level)
        rows.append(RegionResult(region, a, b, z, ok))
    return ScalingReport(params, float(k), target, level, rows)


test_scaling_equivalence.__test__ = False


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------


def pattern_to_csv(pattern: PointPattern, path=None, meta: dict | None = None) -> str:
    header = ["x", "y"] + (["parent"] if pattern.parent_index is not None else [])
    if pattern.parent_index is not None:
        rows = [(float(x), float(y), int(p))
                for (x, y), p in zip(pattern.points, pattern.parent_index, strict=True)]
    else:
        rows = [(float(x), float(y)) for x, y in pattern.points]
    full_meta = {"units": "m", **pattern.window.to_meta(), **(meta or {})}
    if path is not None:
        csvio.write(path, header, rows, full_meta)
    return csvio.dumps(header, rows, full_meta)


def pattern_from_csv(text: str) -> tuple[PointPattern, dict]:
    meta, header, rows = csvio.loads(text)
    if header[:2] != ["x", "y"]:
        raise ParameterError(f"pattern CSV header must start with x,y; got {header}")
    pts = np.array([[float(r[0]), float(r[1])] for r in rows], dtype=float).reshape(-1, 2)
    parents = None
    if len(header) > 2 and header[2] == "parent":
        parents = np.array([int(r[2]) for r in rows], dtype=np.int64)
    return PointPattern(pts, window_from_meta(meta), parents), meta
