"""Sectioned key=value experiment configuration.

Example::

    [model]
    kind = 2
    lambda_b_per_m2 = 1.0
    user_cluster = tcp
    user_m_bar = 5
    user_rho_m = 0.5

    [pathloss]
    alphas = 3,4
    boundaries_m = 1.0

    [coverage]
    beta = 1
    policy = max_sir

    [run]
    seed = 7

Every value is validated while parsing; errors name the file line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .coverage import CoverageConfig, default_epsilon_grid
from .errors import ConfigError, ParameterError
from .geometry import CLUSTER_KINDS, PcpParams, PppParams
from .netmodels import NetworkModel
from .propagation import (
    AssociationPolicy,
    PathlossModel,
    build_pathloss,
    fading_from_name,
)

SCHEMA = {
    "model": {"kind", "lambda_b_per_m2", "lambda_u_per_m2", "lambda_p_per_m2", "user_cluster",
              "user_m_bar", "user_rho_m", "bs_cluster", "bs_m_bar", "bs_rho_m"},
    "pathloss": {"alphas", "boundaries_m"},
    "coverage": {"beta", "epsilon_points", "epsilon_grid", "n_outer", "n_inner", "policy",
                 "fading", "closed_form", "level"},
    "run": {"seed", "workers", "window_radius_m"},
    "output": {"directory", "formats"},
    "contour": {"k_values", "tolerance_se", "mode", "scale_boundaries", "n_boot", "n_paired"},
    "sweep": {"x_param", "x_values", "x_scale", "y_param", "y_values", "y_scale", "levels"},
    "voidtest": {"processes", "k_values", "n_trials", "confidence", "reparam", "region_radii_m",
                 "ppp_lambda_per_m2", "tcp_lambda_p_per_m2", "tcp_m_bar", "tcp_rho_m",
                 "mcp_lambda_p_per_m2", "mcp_m_bar", "mcp_rho_m"},
}


class Section:
    def __init__(self, name: str, line: int, path):
        self.name = name
        self.line = line
        self.path = path
        self.items: dict[str, tuple[str, int]] = {}

    def error(self, message, key=None):
        line = self.items[key][1] if key in self.items else self.line
        where = f"[{self.name}] {key}: " if key else f"[{self.name}]: "
        return ConfigError(where + message, line, self.path)

    def has(self, key) -> bool:
        return key in self.items

    def raw(self, key, default=None, required=False):
        if key not in self.items:
            if required:
                raise self.error(f"missing required key {key!r}")
            return default
        return self.items[key][0]

    def text(self, key, default=None, required=False, choices=None):
        value = self.raw(key, default, required)
        if value is not None and choices is not None and value.lower() not in choices:
            raise self.error(f"must be one of {sorted(choices)}, got {value!r}", key)
        return value.lower() if (value is not None and choices is not None) else value

    def number(self, key, default=None, required=False, positive=False, integer=False,
               lo=None, hi=None):
        value = self.raw(key, None, required)
        if value is None:
            return default
        try:
            num = int(value, 0) if integer else float(value)
        except ValueError:
            kind = "an integer" if integer else "a number"
            raise self.error(f"expected {kind}, got {value!r}", key) from None
        if not integer and not math.isfinite(num):
            raise self.error(f"must be finite, got {value!r}", key)
        if positive and not num > 0:
            raise self.error(f"must be positive, got {value!r}", key)
        if lo is not None and num < lo:
            raise self.error(f"must be >= {lo}, got {value!r}", key)
        if hi is not None and num > hi:
            raise self.error(f"must be <= {hi}, got {value!r}", key)
        return num

    def numbers(self, key, default=None, required=False, positive=False):
        value = self.raw(key, None, required)
        if value is None:
            return default
        out = []
        for part in value.split(","):
            part = part.strip()
            if not part:
                continue
            try:
                num = float(part)
            except ValueError:
                raise self.error(f"expected comma-separated numbers, got {value!r}", key) from None
            if not math.isfinite(num) or (positive and not num > 0):
                raise self.error(f"invalid entry {part!r}", key)
            out.append(num)
        return out

    def flag(self, key, default=False):
        value = self.raw(key)
        if value is None:
            return default
        v = value.lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise self.error(f"expected a boolean, got {value!r}", key)


def parse_sections(text: str, path=None) -> dict[str, Section]:
    sections: dict[str, Section] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {raw.strip()!r}", lineno, path)
            name = line[1:-1].strip().lower()
            if name not in SCHEMA:
                raise ConfigError(f"unknown section [{name}]", lineno, path)
            if name in sections:
                raise ConfigError(f"duplicate section [{name}]", lineno, path)
            current = sections[name] = Section(name, lineno, path)
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"expected key = value, got {raw.strip()!r}", lineno, path)
        if current is None:
            raise ConfigError("key outside of any [section]", lineno, path)
        key = key.strip().lower()
        if key not in SCHEMA[current.name]:
            raise ConfigError(f"unknown key {key!r} in [{current.name}]", lineno, path)
        if key in current.items:
            raise ConfigError(f"duplicate key {key!r}", lineno, path)
        current.items[key] = (value.strip(), lineno)
    return sections


@dataclass(frozen=True)
class SweepOptions:
    x_param: str
    x_values: tuple[float, ...]
    y_param: str
    y_values: tuple[float, ...]
    levels: tuple[float, ...]
    log_x: bool = True
    log_y: bool = True


@dataclass(frozen=True)
class ContourOptions:
    k_values: tuple[float, ...]
    tolerance_se: float = 3.0
    mode: str = "independent"
    scale_boundaries: bool = True
    n_boot: int = 1000
    n_paired: int | None = None


@dataclass(frozen=True)
class VoidOptions:
    processes: tuple[tuple[str, object], ...]
    k_values: tuple[float, ...]
    n_trials: int = 100_000
    confidence: float = 0.99
    reparam: str = "correct"
    region_radii: tuple[float, ...] | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    model: NetworkModel | None
    pathloss: PathlossModel | None
    coverage: CoverageConfig
    seed: int = 0
    workers: int | None = None
    window: object = "auto"
    out_dir: Path = Path("out")
    formats: tuple[str, ...] = ("csv", "txt")
    contour: ContourOptions | None = None
    sweep: SweepOptions | None = None
    voidtest: VoidOptions | None = None
    source: str | None = field(default=None, compare=False)


def _cluster_params(sec: Section, prefix: str, lambda_p: float) -> PcpParams:
    kind = sec.text(f"{prefix}_cluster", "tcp", choices=set(CLUSTER_KINDS))
    m_bar = sec.number(f"{prefix}_m_bar", required=True, positive=True)
    rho = sec.number(f"{prefix}_rho_m", required=True, positive=True)
    return PcpParams(lambda_p, m_bar, rho, kind)


def _model(sec: Section) -> NetworkModel:
    kind = sec.number("kind", required=True, integer=True)
    if kind not in (1, 2, 3):
        raise sec.error(f"must be 1, 2 or 3, got {kind}", "kind")
    if kind == 1:
        lam_b = sec.number("lambda_b_per_m2", required=True, positive=True)
        lam_u = sec.number("lambda_u_per_m2", 1.0, positive=True)
        return NetworkModel(1, PppParams(lam_b), PppParams(lam_u))
    if kind == 2:
        lam_b = sec.number("lambda_b_per_m2", required=True, positive=True)
        return NetworkModel(2, PppParams(lam_b), _cluster_params(sec, "user", lam_b))
    lam_p = sec.number("lambda_p_per_m2", required=True, positive=True)
    return NetworkModel(3, _cluster_params(sec, "bs", lam_p), _cluster_params(sec, "user", lam_p))


def _pathloss(sec: Section) -> PathlossModel:
    alphas = sec.numbers("alphas", required=True)
    bounds = sec.numbers("boundaries_m", [], positive=True)
    try:
        return build_pathloss(bounds, alphas)
    except ParameterError as exc:
        raise sec.error(str(exc), "boundaries_m" if sec.has("boundaries_m") else "alphas") from None


def _coverage(sec: Section | None) -> CoverageConfig:
    if sec is None:
        return CoverageConfig()
    if sec.has("epsilon_grid"):
        grid = sec.numbers("epsilon_grid")
        if not grid or any(not 0 <= e <= 1 for e in grid) or grid != sorted(grid):
            raise sec.error("must be a sorted list inside [0, 1]", "epsilon_grid")
    else:
        grid = default_epsilon_grid(sec.number("epsilon_points", 101, integer=True, lo=2))
    fading_name = sec.text("fading", "rayleigh")
    try:
        fading = fading_from_name(fading_name)
    except (ParameterError, ValueError) as exc:
        raise sec.error(str(exc), "fading") from None
    policy = sec.text("policy", "max_power",
                      choices={p.value for p in AssociationPolicy} | {"max-power", "max-sir"})
    return CoverageConfig(
        beta=sec.number("beta", 1.0, positive=True),
        epsilon_grid=tuple(grid),
        n_outer=sec.number("n_outer", 2000, integer=True, lo=1),
        n_inner=sec.number("n_inner", 500, integer=True, lo=1),
        policy=AssociationPolicy.parse(policy),
        fading=fading,
        closed_form=sec.flag("closed_form", True),
        level=sec.number("level", 0.95, lo=1e-9, hi=1 - 1e-9),
    )


def _axis(sec: Section, axis: str):
    from .contours import SWEEP_PARAMS

    param = sec.text(f"{axis}_param", required=True, choices=set(p.lower() for p in SWEEP_PARAMS))
    param = {p.lower(): p for p in SWEEP_PARAMS}[param]
    values = sec.numbers(f"{axis}_values", required=True, positive=True)
    if len(values) < 3:
        raise sec.error("need at least 3 grid values", f"{axis}_values")
    if values != sorted(values) or len(set(values)) != len(values):
        raise sec.error("grid values must be strictly increasing", f"{axis}_values")
    scale = sec.text(f"{axis}_scale", "log", choices={"log", "linear"})
    return param, tuple(values), scale == "log"


def _void(sec: Section) -> VoidOptions:
    names = [p.strip().lower() for p in sec.raw("processes", "ppp,tcp,mcp").split(",") if p.strip()]
    procs = []
    for name in names:
        if name == "ppp":
            procs.append(("ppp", PppParams(sec.number("ppp_lambda_per_m2", 2.0, positive=True))))
        elif name in ("tcp", "mcp"):
            defaults = {"tcp": (0.5, 3.0, 1.0), "mcp": (1.0, 4.0, 0.5)}[name]
            procs.append((name, PcpParams(
                sec.number(f"{name}_lambda_p_per_m2", defaults[0], positive=True),
                sec.number(f"{name}_m_bar", defaults[1], positive=True),
                sec.number(f"{name}_rho_m", defaults[2], positive=True), name)))
        else:
            raise sec.error(f"unknown process {name!r}; use ppp, tcp, mcp", "processes")
    if not procs:
        raise sec.error("at least one process is required", "processes")
    ks = sec.numbers("k_values", [0.5, 2.0], positive=True)
    if not ks:
        raise sec.error("at least one k value is required", "k_values")
    radii = sec.numbers("region_radii_m", None, positive=True)
    return VoidOptions(
        tuple(procs), tuple(ks),
        n_trials=sec.number("n_trials", 100_000, integer=True, lo=1),
        confidence=sec.number("confidence", 0.99, lo=1e-9, hi=1 - 1e-9),
        reparam=sec.text("reparam", "correct", choices={"correct", "lambda_over_k"}),
        region_radii=tuple(radii) if radii else None,
    )


def parse_config(text: str, path=None) -> ExperimentConfig:
    sections = parse_sections(text, path)
    model = _model(sections["model"]) if "model" in sections else None
    pathloss = _pathloss(sections["pathloss"]) if "pathloss" in sections else None
    coverage = _coverage(sections.get("coverage"))

    seed, workers, window = 0, None, "auto"
    if "run" in sections:
        run = sections["run"]
        seed = run.number("seed", 0, integer=True, lo=0, hi=(1 << 64) - 1)
        workers = run.number("workers", None, integer=True, lo=1)
        w = run.text("window_radius_m", "auto")
        if w.lower() != "auto":
            window = run.number("window_radius_m", positive=True)

    out_dir, formats = Path("out"), ("csv", "txt")
    if "output" in sections:
        out = sections["output"]
        out_dir = Path(out.text("directory", "out"))
        formats = tuple(f.strip().lower() for f in out.text("formats", "csv,txt").split(",") if f.strip())
        if any(f not in ("csv", "txt") for f in formats):
            raise out.error(f"supported formats are csv and txt, got {formats}", "formats")

    contour = None
    if "contour" in sections:
        sec = sections["contour"]
        ks = sec.numbers("k_values", required=True, positive=True)
        if not ks:
            raise sec.error("k_values must list at least one positive scale factor", "k_values")
        n_paired = sec.number("n_paired", None, integer=True, lo=1)
        contour = ContourOptions(
            tuple(ks), sec.number("tolerance_se", 3.0, positive=True),
            sec.text("mode", "independent", choices={"independent", "paired", "both"}),
            sec.flag("scale_boundaries", True), sec.number("n_boot", 1000, integer=True, lo=10),
            n_paired)

    sweep = None
    if "sweep" in sections:
        sec = sections["sweep"]
        xp, xv, lx = _axis(sec, "x")
        yp, yv, ly = _axis(sec, "y")
        levels = sec.numbers("levels", required=True)
        if not levels or any(not 0 < v < 1 for v in levels):
            raise sec.error("levels must lie strictly inside (0, 1)", "levels")
        sweep = SweepOptions(xp, xv, yp, yv, tuple(levels), lx, ly)

    void = _void(sections["voidtest"]) if "voidtest" in sections else None

    return ExperimentConfig(model, pathloss, coverage, seed, workers, window, out_dir, formats,
                            contour, sweep, void, str(path) if path else None)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", None, path) from None
    return parse_config(text, path)


def linspace_values(lo: float, hi: float, n: int, log: bool = True) -> tuple[float, ...]:
    vals = np.logspace(np.log10(lo), np.log10(hi), n) if log else np.linspace(lo, hi, n)
    return tuple(float(v) for v in vals)
