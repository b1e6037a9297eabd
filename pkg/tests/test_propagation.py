import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from scipy import integrate

from equicov.errors import NoServerError, ParameterError
from equicov.propagation import (
    RAYLEIGH,
    AssociationPolicy,
    PathlossModel,
    associate,
    build_pathloss,
    compute_sir,
    fading_from_name,
    nakagami,
    single_slope,
    sir_scaling_identity_check,
    two_ray_breakpoint,
)

MP, MS = AssociationPolicy.MAX_POWER, AssociationPolicy.MAX_SIR


@st.composite
def pathlosses(draw, max_slopes=4):
    n = draw(st.integers(1, max_slopes))
    alphas = draw(st.lists(st.floats(0.5, 6), min_size=n, max_size=n))
    gaps = draw(st.lists(st.floats(0.05, 5), min_size=n - 1, max_size=n - 1))
    return build_pathloss(np.cumsum(gaps).tolist(), alphas)


# ---- pathloss -------------------------------------------------------------

def test_single_slope_examples():
    pl = build_pathloss([], [4])
    assert pl(0.5) == 16.0
    assert pl(2.0) == 0.0625


def test_dual_slope_examples():
    pl = build_pathloss([1.0], [3, 4])
    assert pl.etas == (1.0, 1.0)
    assert pl(0.5) == 8.0
    assert pl(2.0) == 0.0625
    assert pl(1.0) == 1.0


def test_eta_recursion_hand_case():
    pl = build_pathloss([2.0], [2, 4])
    assert pl.etas[1] == 4.0
    assert pl(4.0) == 0.015625


def test_boundary_takes_inner_piece():
    pl = build_pathloss([2.0], [2, 4])
    # both pieces agree at z=2 up to rounding; the inner piece is the one used
    assert pl(2.0) == pl.piece_value(0, 2.0)


def test_three_slope_recursion():
    pl = build_pathloss([1.0, 10.0], [2, 3, 5])
    assert pl.etas == pytest.approx((1.0, 1.0, 100.0))
    assert pl(10.0) == pytest.approx(1e-3)


@pytest.mark.parametrize("bounds,alphas", [
    ([1.0], [4]), ([2.0, 1.0], [2, 3, 4]), ([0.0], [2, 4]), ([math.inf], [2, 4]), ([1.0], [2, math.nan]),
])
def test_build_pathloss_rejects(bounds, alphas):
    with pytest.raises(ParameterError):
        build_pathloss(bounds, alphas)


def test_pathloss_rejects_zero_distance():
    with pytest.raises(ParameterError):
        single_slope(4)(np.array([1.0, 0.0]))


@given(pathlosses())
def test_continuity_everywhere(pl):
    assert all(e < 1e-12 for e in pl.continuity_errors())


@given(pathlosses(), st.floats(0.01, 50), st.floats(1.0001, 10))
def test_monotone_decreasing(pl, z, f):
    assert pl(z * f) < pl(z)


@given(st.floats(2.1, 6), st.floats(0.01, 100))
def test_single_slope_reduction(alpha, z):
    assert single_slope(alpha)(z) == pytest.approx(z**-alpha, rel=1e-14)


@given(pathlosses(), st.floats(0.05, 20), st.floats(0.1, 10))
def test_pathloss_scaling_law(pl, z, k):
    # l(kz; kR) = k^-alpha_1 l(z; R)
    assert pl.scaled(k)(k * z) == pytest.approx(k ** -pl.alphas[0] * pl(z), rel=1e-11)


def test_text_round_trip():
    pl = build_pathloss([1.5, 4.0], [2.5, 3.0, 4.0])
    back = PathlossModel.from_text(pl.to_text())
    assert back == pl


@pytest.mark.parametrize("a,b", [(0.1, 0.9), (0.3, 7.0), (2.0, 50.0), (0.5, math.inf)])
def test_interference_integral_matches_quadrature(a, b):
    pl = build_pathloss([1.0, 3.0], [2.0, 3.0, 4.5])

    def f(r):
        return float(pl(r)) * r
    pts = [p for p in (1.0, 3.0) if a < p < b]
    if math.isinf(b):
        ref = integrate.quad(f, a, 3.0, points=pts)[0] + integrate.quad(f, 3.0, math.inf)[0]
    else:
        ref = integrate.quad(f, a, b, points=pts or None)[0]
    assert pl.interference_integral(a, b) == pytest.approx(ref, rel=1e-9)


def test_interference_integral_diverges_for_small_last_exponent():
    assert math.isinf(build_pathloss([1.0], [3, 2]).interference_integral(1.0, math.inf))


# ---- two-ray breakpoint ---------------------------------------------------

def test_two_ray_breakpoint():
    assert two_ray_breakpoint(10, 1.5, 2e9) == pytest.approx(400.27691, rel=1e-7)
    assert two_ray_breakpoint(10, 1.5, 4e9) == pytest.approx(2 * two_ray_breakpoint(10, 1.5, 2e9))
    assert two_ray_breakpoint(1, 1, 299_792_458 / 4) == pytest.approx(1.0, rel=1e-15)
    with pytest.raises(ParameterError):
        two_ray_breakpoint(0, 1, 1e9)


# ---- fading ---------------------------------------------------------------

@pytest.mark.parametrize("spec", [RAYLEIGH, nakagami(2.0), fading_from_name("nakagami:0.7")])
def test_fading_unit_mean(spec, rng):
    h = spec.sample(rng, 200_000)
    assert h.min() >= 0
    assert abs(h.mean() - 1) < 4 * h.std() / math.sqrt(h.size)


def test_fading_names():
    assert fading_from_name("Rayleigh") is RAYLEIGH
    with pytest.raises(ParameterError):
        fading_from_name("rician")


# ---- association and SIR --------------------------------------------------

def test_policy_parse():
    assert AssociationPolicy.parse("max-sir") is MS
    assert AssociationPolicy.parse("MaxPower") is MP
    with pytest.raises(ParameterError):
        AssociationPolicy.parse("nearest")


def test_max_power_picks_nearest(rng):
    pts = rng.uniform(-5, 5, size=(30, 2))
    nearest = int(np.argmin(np.hypot(pts[:, 0], pts[:, 1])))
    assert associate((0, 0), pts, None, MP, single_slope(3.5)) == nearest


def test_max_sir_example():
    pts = [[1, 0], [2, 0]]
    assert associate((0, 0), pts, [0.1, 4.0], MS, single_slope(4)) == 1
    assert associate((0, 0), pts, [0.1, 4.0], MP, single_slope(4)) == 0


def test_one_bs_and_empty():
    for policy in (MP, MS):
        assert associate((0, 0), [[3, 4]], [0.2], policy, single_slope(4)) == 0
    with pytest.raises(NoServerError):
        associate((0, 0), np.empty((0, 2)), [], MP, single_slope(4))


def test_sir_examples():
    pl = single_slope(4)
    assert compute_sir((0, 0), [[1, 0], [2, 0]], 0, [1, 1], pl) == pytest.approx(16.0)
    assert compute_sir((0, 0), [[1, 0]], 0, [1], pl) == math.inf
    ring = [[math.cos(t), math.sin(t)] for t in np.linspace(0, 2 * np.pi, 6, endpoint=False)]
    assert compute_sir((0, 0), ring, 2, np.ones(6), pl) == pytest.approx(1 / 5)


def test_identity_k1_bitwise(rng):
    pts = rng.uniform(-3, 3, (10, 2))
    chk = sir_scaling_identity_check((0, 0), pts, rng.exponential(size=10),
                                     build_pathloss([1], [3, 4]), 1.0, MS)
    assert chk.sir == chk.sir_scaled and chk.rel_error == 0.0


def test_identity_hand_built():
    pts = np.array([[0.6, 0.0], [-1.5, 0.4], [0.2, 2.7]])
    pl = build_pathloss([1.0], [3, 4])
    chk = sir_scaling_identity_check((0, 0), pts, [1.3, 0.4, 2.2], pl, 2.0, MP)
    # independent hand evaluation
    d = np.hypot(*pts.T)
    g = np.where(d <= 1, d**-3.0, d**-4.0) * [1.3, 0.4, 2.2]
    assert chk.sir == pytest.approx(g[0] / (g[1] + g[2]), rel=1e-14)
    assert chk.rel_error < 1e-10 and chk.serving == chk.serving_scaled == 0


@given(pathlosses(max_slopes=3), st.sampled_from([0.1, 0.5, 2.0, 10.0]),
       st.sampled_from([MP, MS]), st.integers(0, 2**32 - 1))
def test_identity_property(pl, k, policy, seed):
    r = np.random.default_rng(seed)
    n = int(r.integers(2, 40))
    pts = r.uniform(-5, 5, (n, 2))
    assume(np.hypot(*pts.T).min() > 1e-3)
    chk = sir_scaling_identity_check((0, 0), pts, r.exponential(size=n), pl, k, policy)
    assert chk.rel_error < 1e-9
    assert chk.serving == chk.serving_scaled


@given(pathlosses(max_slopes=3), st.integers(0, 2**32 - 1))
def test_max_sir_dominates_max_power(pl, seed):
    r = np.random.default_rng(seed)
    n = int(r.integers(2, 30))
    pts = r.uniform(-5, 5, (n, 2))
    h = r.exponential(size=n)
    sir = {p: compute_sir((0, 0), pts, associate((0, 0), pts, h, p, pl), h, pl) for p in (MP, MS)}
    assert sir[MS] >= sir[MP]
