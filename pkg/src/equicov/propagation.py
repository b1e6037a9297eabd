"""Multi-slope pathloss, fading, cell association and per-realization SIR."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .errors import NoServerError, ParameterError
from .geometry import PointPattern

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class PathlossModel:
    """Piecewise power law l(z) = eta_i z^-alpha_i on (R_{i-1}, R_i].

    ``boundaries`` holds only the finite interior breakpoints; R_0 = 0 and the
    last piece runs to infinity.  ``etas`` is derived with eta_1 = 1.
    """

    boundaries: tuple[float, ...]
    alphas: tuple[float, ...]
    etas: tuple[float, ...]

    @property
    def n_slopes(self) -> int:
        return len(self.alphas)

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        if np.any(z <= 0):
            raise ParameterError("pathloss is defined only for z > 0")
        if not self.boundaries:
            return self.etas[0] * z ** -self.alphas[0]
        # side="left": first i with z <= R_i, so z on a boundary takes the inner piece
        piece = np.searchsorted(np.asarray(self.boundaries), z, side="left")
        eta = np.asarray(self.etas)[piece]
        alpha = np.asarray(self.alphas)[piece]
        return eta * z ** -alpha

    def piece_value(self, i: int, z: float) -> float:
        return self.etas[i] * z ** -self.alphas[i]

    def scaled(self, k: float) -> "PathlossModel":
        """Same exponents, every finite boundary multiplied by k."""
        if not k > 0:
            raise ParameterError(f"scale factor must be positive, got {k}")
        return build_pathloss([k * r for r in self.boundaries], self.alphas)

    def continuity_errors(self) -> list[float]:
        out = []
        for i, r in enumerate(self.boundaries):
            left = self.piece_value(i, r)
            right = self.piece_value(i + 1, r)
            out.append(abs(left - right) / left)
        return out

    def interference_integral(self, a: float, b: float) -> float:
        """Integral of l(r) r dr over [a, b]; b may be inf (diverges if alpha_n <= 2)."""
        edges = [0.0, *self.boundaries, math.inf]
        total = 0.0
        for i, alpha in enumerate(self.alphas):
            lo, hi = max(a, edges[i]), min(b, edges[i + 1])
            if hi <= lo:
                continue
            p = 2.0 - alpha
            if math.isinf(hi):
                if p >= 0:
                    return math.inf
                total += self.etas[i] * (-(lo**p) / p)
            elif p == 0.0:
                total += self.etas[i] * math.log(hi / lo)
            else:
                total += self.etas[i] * (hi**p - lo**p) / p
        return total

    def to_text(self) -> str:
        def join(values):
            return ",".join(repr(float(v)) for v in values)

        return (f"alphas={join(self.alphas)}\nboundaries={join(self.boundaries)}\n"
                f"etas={join(self.etas)}\n")

    @classmethod
    def from_text(cls, text: str) -> "PathlossModel":
        fields = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ParameterError(f"expected key=value, got {line!r}")
            fields[key.strip()] = [float(v) for v in value.split(",") if v.strip()]
        if "alphas" not in fields:
            raise ParameterError("pathloss text needs an alphas= line")
        # etas are audit output only; always recomputed
        return build_pathloss(fields.get("boundaries", []), fields["alphas"])


def build_pathloss(boundaries: Sequence[float], alphas: Sequence[float]) -> PathlossModel:
    bounds = tuple(float(r) for r in boundaries)
    alphas = tuple(float(a) for a in alphas)
    if len(alphas) != len(bounds) + 1:
        raise ParameterError(
            f"need len(alphas) == len(boundaries) + 1, got {len(alphas)} and {len(bounds)}")
    if any(not (r > 0 and math.isfinite(r)) for r in bounds):
        raise ParameterError(f"boundaries must be positive and finite, got {bounds}")
    if any(b <= a for a, b in zip(bounds, bounds[1:], strict=False)):
        raise ParameterError(f"boundaries must be strictly increasing, got {bounds}")
    if any(not math.isfinite(a) for a in alphas):
        raise ParameterError(f"exponents must be finite, got {alphas}")
    etas = [1.0]
    for j in range(1, len(alphas)):
        etas.append(etas[-1] * bounds[j - 1] ** (alphas[j] - alphas[j - 1]))
    model = PathlossModel(bounds, alphas, tuple(etas))
    bad = [e for e in model.continuity_errors() if not e < 1e-12]
    if bad:
        raise ParameterError(f"pathloss discontinuous at a boundary (relative gap {bad[0]:.3g})")
    return model


def single_slope(alpha: float) -> PathlossModel:
    return build_pathloss([], [alpha])


def two_ray_breakpoint(h_t: float, h_r: float, f_c: float) -> float:
    """Distance (m) where the two-ray model changes slope: 4 h_t h_r f_c / c."""
    for name, v in (("h_t", h_t), ("h_r", h_r), ("f_c", f_c)):
        if not v > 0:
            raise ParameterError(f"{name} must be positive, got {v}")
    return 4.0 * h_t * h_r * f_c / SPEED_OF_LIGHT


# --------------------------------------------------------------------------
# fading
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FadingSpec:
    """I.i.d. power gains drawn by inverse CDF from uniform variates."""

    name: str
    ppf: Callable[[np.ndarray], np.ndarray]
    mean: float = 1.0

    @property
    def is_rayleigh(self) -> bool:
        return self.name == "rayleigh"

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return self.ppf(rng.random(size))


def _exp_ppf(u):
    return -np.log1p(-u)


RAYLEIGH = FadingSpec("rayleigh", _exp_ppf)


def nakagami(m: float) -> FadingSpec:
    """Unit-mean gamma power gain with shape m (Nakagami-m amplitude)."""
    if not m > 0:
        raise ParameterError(f"Nakagami shape must be positive, got {m}")
    dist = stats.gamma(a=m, scale=1.0 / m)
    return FadingSpec(f"nakagami:{m:g}", dist.ppf)


def fading_from_name(name: str) -> FadingSpec:
    name = name.strip().lower()
    if name == "rayleigh":
        return RAYLEIGH
    if name.startswith("nakagami:"):
        return nakagami(float(name.split(":", 1)[1]))
    raise ParameterError(f"unknown fading {name!r}; use rayleigh or nakagami:<m>")


# --------------------------------------------------------------------------
# association and SIR
# --------------------------------------------------------------------------


class AssociationPolicy(enum.Enum):
    MAX_POWER = "max_power"
    MAX_SIR = "max_sir"

    @classmethod
    def parse(cls, value) -> "AssociationPolicy":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        for policy in cls:
            if key in (policy.value, policy.name.lower(), policy.value.replace("_", "")):
                return policy
        raise ParameterError(f"unknown association policy {value!r}")


@dataclass(frozen=True)
class LinkBudget:
    tx_power: float = 1.0
    sir_threshold: float = 1.0

    def __post_init__(self):
        if not (self.tx_power > 0 and self.sir_threshold > 0):
            raise ParameterError("tx_power and sir_threshold must be positive")


def _bs_points(bs) -> np.ndarray:
    return bs.points if isinstance(bs, PointPattern) else np.asarray(bs, dtype=float).reshape(-1, 2)


def link_gains(user, bs, model: PathlossModel) -> np.ndarray:
    pts = _bs_points(bs)
    d = np.hypot(pts[:, 0] - user[0], pts[:, 1] - user[1])
    return model(d)


def associate(user, bs, fading, policy, model: PathlossModel) -> int:
    """Serving BS index: argmax of l (max power) or of H * l (max SIR)."""
    policy = AssociationPolicy.parse(policy)
    pts = _bs_points(bs)
    if pts.shape[0] == 0:
        raise NoServerError("no base station to associate with")
    gains = link_gains(user, pts, model)
    if policy is AssociationPolicy.MAX_POWER:
        return int(np.argmax(gains))
    fading = np.asarray(fading, dtype=float)
    if fading.shape != gains.shape:
        raise ParameterError("fading vector must have one entry per base station")
    return int(np.argmax(fading * gains))


def compute_sir(user, bs, serving: int, fading, model: PathlossModel) -> float:
    """Signal over summed interference; +inf when there is no interferer."""
    gains = link_gains(user, bs, model)
    fading = np.asarray(fading, dtype=float)
    if fading.shape != gains.shape:
        raise ParameterError("fading vector must have one entry per base station")
    if not 0 <= serving < gains.shape[0]:
        raise ParameterError(f"serving index {serving} out of range")
    received = fading * gains
    signal = received[serving]
    interference = np.delete(received, serving).sum()
    if interference <= 0.0:
        return math.inf
    return float(signal / interference)


@dataclass(frozen=True)
class IdentityCheck:
    sir: float
    sir_scaled: float
    rel_error: float
    serving: int
    serving_scaled: int


def sir_scaling_identity_check(user, bs, fading, model: PathlossModel, k: float,
                               policy) -> IdentityCheck:
    """SIR on (phi, l(., R)) versus (k phi, l(., kR)) with the same fading draw."""
    if not k > 0:
        raise ParameterError(f"scale factor must be positive, got {k}")
    pts = _bs_points(bs)
    user = np.asarray(user, dtype=float)
    scaled_model = model.scaled(k)
    serving = associate(user, pts, fading, policy, model)
    serving_k = associate(k * user, k * pts, fading, policy, scaled_model)
    sir = compute_sir(user, pts, serving, fading, model)
    sir_k = compute_sir(k * user, k * pts, serving_k, fading, scaled_model)
    if math.isinf(sir) and math.isinf(sir_k):
        err = 0.0
    else:
        err = abs(sir_k - sir) / abs(sir)
    return IdentityCheck(sir, sir_k, err, serving, serving_k)
