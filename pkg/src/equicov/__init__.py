"""Equi-coverage contours of cellular networks by Monte Carlo stochastic geometry.

Modules: ``geometry`` (point processes, scaling law), ``propagation`` (pathloss,
fading, SIR), ``netmodels`` (network models, typical-user scenes), ``coverage``
(meta distribution), ``contours`` (equi-coverage verification, level sets) and
``cli``.
"""

from .contours import ContourSpec, sweep_level_sets, verify_contour
from .coverage import CoverageConfig, meta_distribution, ppp_coverage_oracle
from .errors import ConfigError, NoServerError, ParameterError, SceneSamplingError
from .geometry import Disk, PcpParams, PointPattern, PppParams, Rect
from .netmodels import NetworkModel, sample_scene
from .propagation import AssociationPolicy, build_pathloss, single_slope

__version__ = "0.1.0"

__all__ = [
    "AssociationPolicy", "ConfigError", "ContourSpec", "CoverageConfig", "Disk", "NetworkModel",
    "NoServerError", "ParameterError", "PcpParams", "PointPattern", "PppParams", "Rect",
    "SceneSamplingError", "build_pathloss", "meta_distribution", "ppp_coverage_oracle",
    "sample_scene", "single_slope", "sweep_level_sets", "verify_contour",
]
