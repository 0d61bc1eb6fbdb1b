import numpy as np
import pytest

from qtpsim.field import FieldError, FieldModel, FieldState, ModeTruncation, SpacetimePoint, Wavepacket
from qtpsim.field import vacuum_wightman, wightman_two_point
from qtpsim.wick import (
    Branch,
    BranchPoint,
    TruncationError,
    branch_propagator,
    double_factorial,
    g2n,
    matching_count,
    oracle_g2n,
    perfect_matchings,
)

MODEL = FieldModel(1.0, 3)
TRUNC = ModeTruncation(MODEL, [(0.3, 0.0, 0.1), (-0.4, 0.2, 0.0)], [0.5, 0.8], n_max=6)

STATES = {
    "vacuum": FieldState.vacuum(),
    "coherent": FieldState.coherent_modes([0.15 + 0.05j, -0.1j]),
    "one_particle": FieldState.one_particle_modes([0.6, 0.8j]),
}


def random_points(rng, n):
    return [SpacetimePoint(rng.normal(), tuple(rng.normal(size=3))) for _ in range(n)]


@pytest.mark.parametrize("n, expected", [(1, 1), (2, 3), (3, 15), (4, 105)])
def test_matching_count(n, expected):
    assert matching_count(n) == expected == double_factorial(2 * n - 1)


def test_matchings_are_partitions():
    for m in perfect_matchings(range(6)):
        flat = sorted(i for pair in m for i in pair)
        assert flat == list(range(6))


@pytest.mark.parametrize("name", list(STATES))
@pytest.mark.parametrize("n", [1, 2])
def test_oracle_equivalence(name, n):
    rng = np.random.default_rng(10 + n)
    state = STATES[name]
    for _ in range(8):
        pts = random_points(rng, 2 * n)
        w = g2n(TRUNC, state, pts[:n], pts[n:])
        o = oracle_g2n(TRUNC, state, pts[:n], pts[n:])
        assert abs(w - o) <= 1e-8 * abs(o)


def test_n1_vacuum_is_wightman():
    X, Y = SpacetimePoint(0.2, (0.0, 0.5, 0.0)), SpacetimePoint(-0.4, (1.0, 0.0, 0.0))
    assert g2n(MODEL, FieldState.vacuum(), [X], [Y]) == vacuum_wightman(MODEL, X, Y)


def test_oracle_n1_two_mode_sum():
    rng = np.random.default_rng(11)
    X, Y = random_points(rng, 2)
    d = X.as_array() - Y.as_array()
    k4 = TRUNC.four_momenta()
    ref = sum(w * np.exp(-1j * (k[0] * d[0] - k[1:] @ d[1:])) for w, k in zip(TRUNC.weights, k4))
    assert abs(oracle_g2n(TRUNC, FieldState.vacuum(), [X], [Y]) - ref) <= 1e-12


def test_one_particle_n1_matches_two_point():
    rng = np.random.default_rng(12)
    state = STATES["one_particle"]
    for _ in range(5):
        X, Y = random_points(rng, 2)
        o = oracle_g2n(TRUNC, state, [X], [Y])
        w = wightman_two_point(TRUNC, state, X, Y)
        assert abs(o - w) <= 1e-10 * abs(o)


def test_cluster_factorization():
    state = FieldState.vacuum()
    a = [SpacetimePoint(0.0, (0.0, 0.0, 0.0)), SpacetimePoint(0.3, (0.5, 0.0, 0.0))]
    b = [SpacetimePoint(0.1, (40.0, 0.0, 0.0)), SpacetimePoint(-0.2, (40.0, 0.6, 0.0))]
    full = g2n(MODEL, state, [a[0], b[0]], [a[1], b[1]])
    prod = g2n(MODEL, state, [a[0]], [a[1]]) * g2n(MODEL, state, [b[0]], [b[1]])
    assert abs(full - prod) <= 1e-6 * abs(prod)


def test_local_plus_connected():
    rng = np.random.default_rng(13)
    packet = Wavepacket((0.2, 0.0, 0.0), 0.5)
    clusters = [0, 1, 0, 1]
    for state in (FieldState.vacuum(), FieldState.coherent(packet, 1.5), FieldState.one_particle(packet)):
        pts = random_points(rng, 4)
        parts = [g2n(MODEL, state, pts[:2], pts[2:], clusters=clusters, part=p) for p in ("all", "local", "connected")]
        assert abs(parts[0] - parts[1] - parts[2]) <= 1e-12 * abs(parts[0])


@pytest.mark.parametrize("name", list(STATES))
def test_probability_combination_real_nonnegative(name):
    rng = np.random.default_rng(14)
    state = STATES[name]
    for _ in range(10):
        pts = random_points(rng, 2)
        v = g2n(TRUNC, state, pts, pts)
        assert v.real >= -1e-10 and abs(v.imag) <= 1e-10 * max(abs(v), 1.0)


def test_branch_degeneracy_with_time_order():
    X = SpacetimePoint(0.0, (0.0, 0.0, 0.0))
    Y = SpacetimePoint(1.0, (0.2, 0.0, 0.0))
    # ordered branch: later time to the left; anti branch: earlier time to the left
    tf = branch_propagator(MODEL, BranchPoint(X, Branch.ORDERED), BranchPoint(Y, Branch.ORDERED))
    td = branch_propagator(MODEL, BranchPoint(X, Branch.ANTI), BranchPoint(Y, Branch.ANTI))
    assert tf == vacuum_wightman(MODEL, Y, X)
    assert td == vacuum_wightman(MODEL, X, Y)
    cross = branch_propagator(MODEL, BranchPoint(Y, Branch.ORDERED), BranchPoint(X, Branch.ANTI))
    assert cross == vacuum_wightman(MODEL, X, Y)


def test_one_particle_n3_rejected():
    pts = random_points(np.random.default_rng(15), 6)
    with pytest.raises(FieldError):
        g2n(TRUNC, STATES["one_particle"], pts[:3], pts[3:])


def test_oracle_overflow_raises():
    tr = ModeTruncation(MODEL, [(0.1, 0.0, 0.0)], [1.0], n_max=3)
    pts = random_points(np.random.default_rng(16), 4)
    with pytest.raises(TruncationError):
        oracle_g2n(tr, FieldState.coherent_modes([1.5]), pts[:2], pts[2:])
