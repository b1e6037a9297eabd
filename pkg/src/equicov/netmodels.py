"""Joint user/BS realizations for the three PPP/PCP network models.

Model 1: users and BSs are independent PPPs.
Model 2: users form a PCP whose parent PPP is the BS process (BS at each hotspot center).
Model 3: users and BSs are PCPs sharing one parent PPP, conditionally independent given it.

Scenes are seen from a typical user at the origin (Palm construction).  The
ergodic sampler draws the whole joint process instead and is kept as an
independent cross-check of the Palm construction.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy import optimize

from .errors import ParameterError, SceneSamplingError
from .geometry import (
    TCP,
    Disk,
    PcpParams,
    PointPattern,
    PppParams,
    guard_margin,
    sample_offsets,
    sample_ppp,
)
from .propagation import PathlossModel
from .rng import split

log = logging.getLogger(__name__)

MODEL1, MODEL2, MODEL3 = 1, 2, 3

# BSs closer than this to the typical user make the scene resample.
EXCLUSION_RADIUS = 1e-6
MAX_RETRIES = 100
# Interference from beyond the auto window, relative to the in-window share.
TAIL_FRACTION = 1e-3
# Auto windows reach at least this many cluster scales.
CLUSTER_REACH = 8.0


@dataclass(frozen=True)
class NetworkModel:
    kind: int
    bs: PppParams | PcpParams
    users: PppParams | PcpParams

    def __post_init__(self):
        if self.kind == MODEL1:
            ok = isinstance(self.bs, PppParams) and isinstance(self.users, PppParams)
        elif self.kind == MODEL2:
            ok = isinstance(self.bs, PppParams) and isinstance(self.users, PcpParams)
            if ok and not math.isclose(self.users.lambda_p, self.bs.lam, rel_tol=1e-12):
                raise ParameterError("Model 2 needs the user parent intensity to equal lambda_b")
        elif self.kind == MODEL3:
            ok = isinstance(self.bs, PcpParams) and isinstance(self.users, PcpParams)
            if ok and not math.isclose(self.users.lambda_p, self.bs.lambda_p, rel_tol=1e-12):
                raise ParameterError("Model 3 user and BS processes must share lambda_p")
        else:
            raise ParameterError(f"model kind must be 1, 2 or 3, got {self.kind!r}")
        if not ok:
            raise ParameterError(f"process types do not match Model {self.kind}")

    @classmethod
    def model1(cls, lambda_b: float, lambda_u: float = 1.0) -> "NetworkModel":
        return cls(MODEL1, PppParams(lambda_b), PppParams(lambda_u))

    @classmethod
    def model2(cls, lambda_b: float, m_bar: float, rho: float, cluster: str = TCP) -> "NetworkModel":
        return cls(MODEL2, PppParams(lambda_b), PcpParams(lambda_b, m_bar, rho, cluster))

    @classmethod
    def model3(cls, lambda_p: float, m_bar_u: float, rho_u: float, m_bar_b: float,
               rho_b: float | None = None, cluster_u: str = TCP,
               cluster_b: str | None = None) -> "NetworkModel":
        rho_b = rho_u if rho_b is None else rho_b
        cluster_b = cluster_u if cluster_b is None else cluster_b
        return cls(MODEL3, PcpParams(lambda_p, m_bar_b, rho_b, cluster_b),
                   PcpParams(lambda_p, m_bar_u, rho_u, cluster_u))

    @property
    def bs_intensity(self) -> float:
        return self.bs.intensity

    @property
    def cluster_scale(self) -> float:
        return max((p.rho for p in (self.bs, self.users) if isinstance(p, PcpParams)), default=0.0)

    def scaled(self, k: float) -> "NetworkModel":
        """Equi-coverage partner under point scaling by k.

        Model 1 scales only the BS process (users are independent of it).
        """
        if not k > 0:
            raise ParameterError(f"scale factor must be positive, got {k}")

        def pcp(p):
            return replace(p, lambda_p=p.lambda_p / k**2, rho=p.rho * k)

        if self.kind == MODEL1:
            return NetworkModel(MODEL1, PppParams(self.bs.lam / k**2), self.users)
        if self.kind == MODEL2:
            return NetworkModel(MODEL2, PppParams(self.bs.lam / k**2), pcp(self.users))
        return NetworkModel(MODEL3, pcp(self.bs), pcp(self.users))

    def describe(self) -> dict:
        out = {"model": self.kind}
        for role, p in (("bs", self.bs), ("user", self.users)):
            if isinstance(p, PppParams):
                out[f"{role}_process"] = "ppp"
                out[f"{role}_lambda_per_m2"] = p.lam
            else:
                out[f"{role}_process"] = p.kind
                out[f"{role}_lambda_p_per_m2"] = p.lambda_p
                out[f"{role}_m_bar"] = p.m_bar
                out[f"{role}_rho_m"] = p.rho
        return out


@dataclass(frozen=True, eq=False)
class TypicalUserScene:
    """BS layout seen by a typical user at ``user`` (the origin unless stated).

    ``own_cluster`` lists BS rows that belong to the typical user's own cluster
    (Model 2: the hotspot-center BS; Model 3: the BSs of the shared cluster).
    """

    bs: PointPattern
    user: tuple[float, float] = (0.0, 0.0)
    own_cluster: tuple[int, ...] = ()
    cluster_center: tuple[float, float] | None = None
    users: PointPattern | None = None

    def scaled(self, k: float) -> "TypicalUserScene":
        from .geometry import scale_pattern

        center = None if self.cluster_center is None else (
            k * self.cluster_center[0], k * self.cluster_center[1])
        return TypicalUserScene(
            scale_pattern(self.bs, k), (k * self.user[0], k * self.user[1]), self.own_cluster,
            center, None if self.users is None else scale_pattern(self.users, k))


# --------------------------------------------------------------------------
# simulation window
# --------------------------------------------------------------------------


def auto_window_radius(model: NetworkModel, pathloss: PathlossModel,
                       tail_fraction: float = TAIL_FRACTION) -> float:
    """Disk radius that bounds the PPP-equivalent truncated interference share.

    Interference from beyond R, relative to that from [r0, R] with r0 the mean
    nearest-BS distance of a PPP of the same intensity, is at most
    ``tail_fraction``.  The radius also covers ``CLUSTER_REACH`` cluster scales.
    """
    r0 = 0.5 / math.sqrt(model.bs_intensity)
    reach = CLUSTER_REACH * model.cluster_scale
    if pathloss.alphas[-1] <= 2.0:
        warnings.warn(
            f"far-field exponent {pathloss.alphas[-1]} <= 2: interference diverges on the plane, "
            "window truncation bias is uncontrolled", RuntimeWarning, stacklevel=2)
        return max(200.0 * r0, reach, 2.0 * max(pathloss.boundaries, default=0.0))

    def excess(radius):
        tail = pathloss.interference_integral(radius, math.inf)
        return tail - tail_fraction * pathloss.interference_integral(r0, radius)

    hi = 2.0 * r0
    while excess(hi) > 0:
        hi *= 2.0
    radius = optimize.brentq(excess, r0 * (1 + 1e-9), hi, xtol=1e-12 * hi, rtol=1e-12)
    return max(radius, reach)


def resolve_window(window, model: NetworkModel, pathloss: PathlossModel) -> Disk:
    if window is None or window == "auto":
        return Disk((0.0, 0.0), auto_window_radius(model, pathloss))
    if isinstance(window, (int, float)):
        return Disk((0.0, 0.0), float(window))
    if isinstance(window, Disk):
        return window
    raise ParameterError(f"unsupported simulation window {window!r}")


# --------------------------------------------------------------------------
# Palm scenes
# --------------------------------------------------------------------------


def _offspring(parents: np.ndarray, params: PcpParams, rng, window):
    counts = rng.poisson(params.m_bar, size=parents.shape[0])
    idx = np.repeat(np.arange(parents.shape[0]), counts)
    pts = parents[idx] + sample_offsets(params.kind, params.rho, idx.size, rng)
    keep = window.contains(pts)
    return pts[keep], idx[keep]


def _acceptable(bs_points: np.ndarray, user, exclusion_radius: float) -> bool:
    if bs_points.shape[0] == 0:
        return False
    d2 = (bs_points[:, 0] - user[0]) ** 2 + (bs_points[:, 1] - user[1]) ** 2
    return bool(d2.min() >= exclusion_radius**2)


def _palm_once(model: NetworkModel, window: Disk, rng, with_users: bool):
    origin = np.zeros((1, 2))
    if model.kind == MODEL1:
        bs = sample_ppp(model.bs, window, rng)
        users = None
        if with_users:
            others = sample_ppp(model.users, window, rng).points
            users = PointPattern(np.vstack((origin, others)), window)
        return TypicalUserScene(bs, users=users)

    if model.kind == MODEL2:
        up = model.users
        center = -sample_offsets(up.kind, up.rho, 1, rng)
        if not window.contains(center)[0]:
            return None
        others = sample_ppp(model.bs, window, rng).points
        bs_pts = np.vstack((center, others))
        users = None
        if with_users:
            pts, idx = _offspring(bs_pts, up, rng, window)
            users = PointPattern(np.vstack((origin, pts)), window, np.concatenate(([0], idx)))
        return TypicalUserScene(PointPattern(bs_pts, window), own_cluster=(0,),
                                cluster_center=tuple(center[0]), users=users)

    # Model 3: parents from rng; user and BS offspring from separate child streams.
    up, bp = model.users, model.bs
    user_rng, bs_rng = split(rng, 2)
    center = -sample_offsets(up.kind, up.rho, 1, user_rng)
    margin = max(guard_margin(bp), guard_margin(up) if with_users else 0.0)
    others = sample_ppp(PppParams(bp.lambda_p), window.dilate(margin), rng).points
    parents = np.vstack((center, others))
    bs_pts, bs_idx = _offspring(parents, bp, bs_rng, window)
    own = tuple(int(i) for i in np.flatnonzero(bs_idx == 0))
    users = None
    if with_users:
        pts, idx = _offspring(parents, up, user_rng, window)
        users = PointPattern(np.vstack((origin, pts)), window, np.concatenate(([0], idx)))
    return TypicalUserScene(PointPattern(bs_pts, window, bs_idx), own_cluster=own,
                            cluster_center=tuple(center[0]), users=users)


def sample_scene(model: NetworkModel, window, rng: np.random.Generator, *,
                 with_users: bool = False, exclusion_radius: float = EXCLUSION_RADIUS,
                 max_retries: int = MAX_RETRIES) -> TypicalUserScene:
    """Typical-user scene; resamples on an empty BS draw or a BS inside the exclusion radius."""
    if not isinstance(window, Disk):
        raise ParameterError("scene window must be a Disk")
    if not window.contains(np.zeros((1, 2)))[0]:
        raise ParameterError("scene window must contain the typical user at the origin")
    for _ in range(max_retries):
        scene = _palm_once(model, window, rng, with_users)
        if scene is not None and _acceptable(scene.bs.points, scene.user, exclusion_radius):
            return scene
    raise SceneSamplingError(f"no usable scene after {max_retries} draws for {model}")


# --------------------------------------------------------------------------
# ergodic scenes
# --------------------------------------------------------------------------


def _ergodic_once(model: NetworkModel, window: Disk, rng):
    """Joint draw; returns (bs_points, bs_parent, user_points, user_parent) or None."""
    inner = Disk(window.center, window.radius / 2)
    if model.kind == MODEL1:
        bs = sample_ppp(model.bs, window, rng).points
        users = sample_ppp(model.users, inner, rng).points
        none = np.full(users.shape[0], -1)
        return bs, np.full(bs.shape[0], -2), users, none
    if model.kind == MODEL2:
        up = model.users
        bs = sample_ppp(model.bs, window.dilate(guard_margin(up)), rng).points
        users, uidx = _offspring(bs, up, rng, inner)
        return bs, np.arange(bs.shape[0]), users, uidx
    up, bp = model.users, model.bs
    user_rng, bs_rng = split(rng, 2)
    parents = sample_ppp(PppParams(bp.lambda_p),
                         window.dilate(max(guard_margin(bp), guard_margin(up))), rng).points
    bs, bidx = _offspring(parents, bp, bs_rng, window)
    users, uidx = _offspring(parents, up, user_rng, inner)
    return bs, bidx, users, uidx


def sample_scene_ergodic(model: NetworkModel, window, rng: np.random.Generator, *,
                         exclusion_radius: float = EXCLUSION_RADIUS,
                         max_retries: int = MAX_RETRIES) -> TypicalUserScene:
    """Draw the full joint process on ``window`` and pick a random user in its central half.

    The returned scene is re-centered on that user and keeps the BSs within half
    the window radius, so it is comparable to a Palm scene on that smaller disk.
    """
    if not isinstance(window, Disk) or window.center != (0.0, 0.0):
        raise ParameterError("ergodic sampling needs a Disk window centered at the origin")
    if model.cluster_scale and window.radius < 2.0 * CLUSTER_REACH * model.cluster_scale:
        raise ParameterError(
            f"window radius {window.radius} too small for cluster scale {model.cluster_scale}")
    half = window.radius / 2
    view = Disk((0.0, 0.0), half)
    for _ in range(max_retries):
        bs, bidx, users, uidx = _ergodic_once(model, window, rng)
        if users.shape[0] == 0:
            continue
        pick = int(rng.integers(users.shape[0]))
        u = users[pick]
        rel = bs - u
        keep = view.contains(rel)
        rel, bidx_kept = rel[keep], bidx[keep]
        if not _acceptable(rel, (0.0, 0.0), exclusion_radius):
            continue
        own = tuple(int(i) for i in np.flatnonzero(bidx_kept == uidx[pick]))
        return TypicalUserScene(PointPattern(rel, view), own_cluster=own)
    raise SceneSamplingError(f"no usable ergodic scene after {max_retries} draws for {model}")
