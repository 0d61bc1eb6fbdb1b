import math
import warnings

import numpy as np
import pytest

from qtpsim.baseline import (
    Inertial,
    UdwDetector,
    UniformAcceleration,
    glauber_joint,
    glauber_p,
    inertial_response_momentum,
    minkowski_norm,
    oracle_glauber,
    udw_response,
)
from qtpsim.field import (
    FieldError,
    FieldModel,
    FieldState,
    ModeTruncation,
    SpacetimePoint,
    Wavepacket,
    positive_frequency_wavepacket,
)

M3 = FieldModel(1.0, 3)
M0 = FieldModel(0.0, 3)
TRUNC = ModeTruncation(M3, [(0.3, 0.0, 0.1), (-0.4, 0.2, 0.0)], [0.5, 0.8], n_max=6)


@pytest.fixture(autouse=True)
def _quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        yield


def _points(rng, n, d=3):
    return [SpacetimePoint(rng.normal(), tuple(rng.normal(size=d))) for _ in range(n)]


def test_glauber_vacuum_zero():
    X = SpacetimePoint(0.3, (0.0, 1.0, 0.0))
    assert glauber_p(M3, FieldState.vacuum(), X) == 0.0
    assert glauber_joint(M3, FieldState.vacuum(), X, X) == 0.0


def test_glauber_one_particle_is_amplitude_squared():
    packet = Wavepacket((0.4, 0.0, 0.0), 0.3)
    for X in _points(np.random.default_rng(0), 10):
        f = positive_frequency_wavepacket(M3, packet, X)
        assert abs(glauber_p(M3, FieldState.one_particle(packet), X) - abs(f) ** 2) <= 1e-12 * abs(f) ** 2


def test_glauber_coherent_vs_displaced_vacuum_oracle():
    state = FieldState.coherent_modes([0.12 + 0.06j, -0.1j])
    for X in _points(np.random.default_rng(1), 6):
        g = glauber_p(TRUNC, state, X)
        assert abs(g - oracle_glauber(TRUNC, state, [X])) <= 1e-8 * g


def test_glauber_joint_one_particle_zero():
    packet = Wavepacket((0.0, 0.0, 0.0), 0.3)
    X1, X2 = _points(np.random.default_rng(2), 2)
    assert glauber_joint(M3, FieldState.one_particle(packet), X1, X2) == 0.0
    assert oracle_glauber(TRUNC, FieldState.one_particle_modes([0.6, 0.8]), [X1, X2]) == 0.0


def test_glauber_joint_coherent_factorizes():
    state = FieldState.coherent(Wavepacket((0.2, 0.0, 0.0), 0.3), 1.0 + 0.5j)
    X1, X2 = _points(np.random.default_rng(3), 2)
    j = glauber_joint(M3, state, X1, X2)
    assert abs(j - glauber_p(M3, state, X1) * glauber_p(M3, state, X2)) <= 1e-10 * j


def test_glauber_joint_truncated_oracle():
    state = FieldState.coherent_modes([0.1 + 0.05j, -0.08j])
    X1, X2 = _points(np.random.default_rng(4), 2)
    o = oracle_glauber(TRUNC, state, [X1, X2])
    g = glauber_joint(TRUNC, state, X1, X2)
    assert abs(g - o) <= 1e-8 * o


def test_glauber_nonnegative_grid():
    state = FieldState.one_particle(Wavepacket((0.5,), 0.3))
    pts = np.random.default_rng(5).normal(scale=4, size=(200, 2))
    assert np.all(glauber_p(FieldModel(1.0, 1), state, pts) >= 0)


def test_trajectory_kinematics():
    tr = UniformAcceleration(0.7)
    tau = np.linspace(-3, 3, 7)
    assert np.allclose(minkowski_norm(tr.four_velocity(tau)), 1.0)
    assert np.allclose(minkowski_norm(tr.four_acceleration(tau)), -0.49)
    inert = Inertial((0.6, 0.0, 0.0))
    assert inert.gamma == pytest.approx(1.25)
    assert np.allclose(minkowski_norm(inert.four_velocity(tau)), 1.0)
    with pytest.raises(FieldError):
        Inertial((0.8, 0.7, 0.0))


def test_udw_inertial_gapped_suppressed():
    det_up = UdwDetector(0.5, 10.0)
    det_down = UdwDetector(-0.5, 10.0)
    up = udw_response(M0, Inertial(), det_up).value
    down = udw_response(M0, Inertial(), det_down).value
    assert abs(up) <= 1e-6 * down


@pytest.mark.parametrize("model, gap", [(M0, -0.5), (M0, -1.0), (M3, -2.0), (M3, 0.5)])
def test_udw_inertial_matches_momentum_oracle(model, gap):
    det = UdwDetector(gap, 5.0)
    r = udw_response(model, Inertial(), det)
    ref = inertial_response_momentum(model, det, r.eps)
    assert abs(r.value - ref) <= 1e-8 * max(ref, inertial_response_momentum(model, UdwDetector(-abs(gap), 5.0)))


def test_udw_boost_invariant():
    det = UdwDetector(-0.8, 4.0)
    a = udw_response(M0, Inertial(), det).value
    b = udw_response(M0, Inertial((0.0, 0.7, 0.2)), det).value
    assert b == pytest.approx(a, rel=1e-6)


@pytest.mark.parametrize("a, T, gap", [(1.0, 50.0, 0.5), (2.0, 25.0, 1.0)])
def test_udw_detailed_balance(a, T, gap):
    tr = UniformAcceleration(a)
    up = udw_response(M0, tr, UdwDetector(gap, T)).value
    down = udw_response(M0, tr, UdwDetector(-gap, T)).value
    assert up / down == pytest.approx(math.exp(-2 * math.pi * gap / a), rel=0.05)


def test_udw_regulator_sensitivity_small():
    r = udw_response(M0, UniformAcceleration(1.0), UdwDetector(0.5, 50.0))
    assert r.value > 0 and r.regulator_sensitivity <= 1e-3


def test_udw_nonnegative():
    for gap in (0.3, 1.0, 2.0):
        assert udw_response(M0, Inertial(), UdwDetector(gap, 3.0)).value >= -1e-10


def test_udw_rejects_1d():
    with pytest.raises(FieldError):
        udw_response(FieldModel(1.0, 1), Inertial((0.0,)), UdwDetector(1.0, 1.0))
