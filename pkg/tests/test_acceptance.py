"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -v`` (lines are echoed in the terminal
summary) or ``python tests/test_acceptance.py``.
"""

import math
import time
import warnings

import numpy as np
import pytest

from qtpsim.baseline import (
    Inertial,
    UdwDetector,
    UniformAcceleration,
    glauber_joint,
    glauber_p,
    oracle_glauber,
    udw_response,
)
from qtpsim.causality import factorization_sweep
from qtpsim.detectors import (
    DetectorKernel,
    SwitchingProfile,
    effective_volume,
    effective_volume_quadrature,
    kernel_position,
    spectral_from_position,
    switching_identity_check,
)
from qtpsim.field import FieldModel, FieldState, ModeTruncation, SpacetimePoint, Wavepacket
from qtpsim.field import positive_frequency_wavepacket
from qtpsim.qtp import coarse_grained_w_at, qtp_p, qtp_p_grid, qtp_prob_excitation
from qtpsim.scenario import parse_scenario, run_scenario
from qtpsim.wick import g2n, oracle_g2n

RESULTS: list[str] = []


def report(number: int, title: str, ok: bool, detail: str, elapsed: float, budget: float) -> None:
    ok = ok and elapsed <= budget
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail} ({elapsed:.1f}s / {budget:.0f}s)"
    RESULTS.append(line)
    print(line)
    assert ok, line


@pytest.fixture(autouse=True)
def _quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        yield


def test_criterion_01_closed_forms():
    start = time.perf_counter()
    rng = np.random.default_rng(101)
    prof = SwitchingProfile(1.3, 0.9)
    span = 3 * np.array([1.3, 0.9, 0.9, 0.9])
    A = rng.uniform(-1, 1, (1000, 4)) * span
    B = rng.uniform(-1, 1, (1000, 4)) * span
    resid = float(np.max(switching_identity_check(prof, A, B)))
    vol = 0.0
    for dt, dx in rng.uniform(0.2, 5.0, (10, 2)):
        p = SwitchingProfile(dt, dx)
        exact = effective_volume(p)
        assert exact == pytest.approx(math.pi**2 * dt * dx**3, rel=1e-14)
        vol = max(vol, abs(effective_volume_quadrature(p) / exact - 1))
    report(1, "closed-form identities", resid <= 1e-12 and vol <= 1e-6,
           f"identity residual {resid:.1e}, volume error {vol:.1e}", time.perf_counter() - start, 10)


def test_criterion_02_kernel_contract():
    start = time.perf_counter()
    rng = np.random.default_rng(102)
    kernels = [DetectorKernel(*rng.uniform([0, 0.3, 0.3], [6, 3, 3])) for _ in range(4)]
    kernels.append(DetectorKernel(2.0, 1.0, 1.0, velocity=(0.5, 0.2, 0.0)))
    k0 = max(abs(kernel_position(k, np.zeros(4)) - 1) for k in kernels)
    q = rng.normal(scale=6, size=(10_000, 4))
    nonneg = all(np.all(k.spectral(q) >= 0) for k in kernels)
    worst = 0.0
    for k in kernels[:4]:
        qt, qs, kt, ks = spectral_from_position(k)
        at = math.sqrt(2 * math.pi) / k.sigma_E * np.exp(-((qt - k.gap) ** 2) / (2 * k.sigma_E**2))
        as_ = math.sqrt(2 * math.pi) / k.sigma_p * np.exp(-(qs**2) / (2 * k.sigma_p**2))
        bt, bs = at > 1e-6 * at.max(), as_ > 1e-6 * as_.max()
        worst = max(worst, np.max(np.abs(kt[bt] - at[bt]) / at[bt]), np.max(np.abs(ks[bs] - as_[bs]) / as_[bs]))
    report(2, "kernel contract", k0 <= 1e-10 and nonneg and worst <= 1e-6,
           f"|K(0)-1| {k0:.1e}, spectral >= 0 on 1e4 momenta: {nonneg}, round trip {worst:.1e}",
           time.perf_counter() - start, 30)


def test_criterion_03_wick_oracle():
    start = time.perf_counter()
    model = FieldModel(1.0, 3)
    tr = ModeTruncation(model, [(0.3, 0.0, 0.1), (-0.4, 0.2, 0.0)], [0.5, 0.8], n_max=6)
    states = [FieldState.vacuum(), FieldState.coherent_modes([0.15 + 0.05j, -0.1j]),
              FieldState.one_particle_modes([0.6, 0.8j])]
    rng = np.random.default_rng(103)
    worst = 0.0
    for state in states:
        for n in (1, 2):
            for _ in range(50):
                pts = [SpacetimePoint(rng.normal(), tuple(rng.normal(size=3))) for _ in range(2 * n)]
                o = oracle_g2n(tr, state, pts[:n], pts[n:])
                worst = max(worst, abs(g2n(tr, state, pts[:n], pts[n:]) - o) / abs(o))
    report(3, "Wick engine vs Fock oracle", worst <= 1e-8,
           f"max relative error {worst:.1e} over 3 states x n in (1, 2) x 50 configurations",
           time.perf_counter() - start, 120)


def _random_pair(rng):
    d = 3
    k0 = rng.uniform(-0.8, 0.8, d)
    width = rng.uniform(0.3, 1.0)
    packet = Wavepacket(tuple(k0), width)
    if rng.random() < 0.5:
        state = FieldState.one_particle(packet)
    else:
        state = FieldState.coherent(packet, complex(*rng.normal(size=2)))
    kernel = DetectorKernel(rng.uniform(0.0, 5.0), rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0))
    return state, kernel


def test_criterion_04_positivity():
    start = time.perf_counter()
    model = FieldModel(1.0, 3)
    rng = np.random.default_rng(104)
    worst, failures = 0.0, 0
    for _ in range(20):
        state, kernel = _random_pair(rng)
        reach = 3.0 / (2 * state.packet.momentum_width) + 2 * max(kernel.tau, kernel.ell)
        ax = np.linspace(-reach, reach, 21)
        vals = qtp_p_grid(model, state, kernel, {"t": ax, "x": ax, "y": ax, "z": ax}).values
        rel = float(vals.min() / vals.max())
        worst = min(worst, rel)
        failures += rel < -1e-10
    report(4, "POVM positivity of P", failures == 0,
           f"{failures}/20 pairs below -1e-10 max, worst min/max {worst:.2e}",
           time.perf_counter() - start, 300)


def test_criterion_05_dark_counts():
    start = time.perf_counter()
    model = FieldModel(1.0, 3)
    vac = FieldState.vacuum()
    X = SpacetimePoint(0.0, (0.0, 0.0, 0.0))
    k_gap, k_ref = DetectorKernel(5.0, 1.0, 1.0), DetectorKernel(0.0, 1.0, 1.0)
    r_p = qtp_p(model, vac, k_gap, X) / qtp_p(model, vac, k_ref, X)
    prof = SwitchingProfile(10.0, 10.0)
    r_prob = qtp_prob_excitation(model, vac, k_gap, prof, X) / qtp_prob_excitation(model, vac, k_ref, prof, X)
    report(5, "vacuum dark-count suppression", 0 <= r_p <= 1e-6 and 0 <= r_prob <= 1e-6,
           f"gapped/ungapped P {r_p:.1e}, Prob {r_prob:.1e}", time.perf_counter() - start, 60)


def test_criterion_06_factorization():
    start = time.perf_counter()
    model = FieldModel(1.0, 3)
    state = FieldState.coherent(Wavepacket((0.0, 0.0, 0.0), 0.02), 3.0)
    kernel = DetectorKernel(1.0, 1.0, 1.0)
    X1 = SpacetimePoint(0.0, (0.0, 0.0, 0.0))
    sw = factorization_sweep(model, state, [kernel, kernel], X1, [16.0, 20.0, 24.0, 28.0],
                             samples=32000, order=6)
    far = [r for r in sw.records if r.margin >= 10]
    small = all(r.delta <= 1e-3 and r.delta_error <= r.delta / 5 for r in far)
    deltas = np.array([r.delta for r in far])
    monotone = bool(np.all(np.diff(deltas) < 0))
    detail = ", ".join(f"s={r.s:g} margin {r.margin:g}: {r.delta:.1e}+-{r.delta_error:.0e}" for r in far)
    report(6, "factorization at spacelike separation", len(far) == 4 and small and monotone,
           detail, time.perf_counter() - start, 600)


def test_criterion_07_reduction_chain():
    start = time.perf_counter()
    model = FieldModel(1.0, 3)
    state = FieldState.one_particle(Wavepacket((0.5, 0.0, 0.0), 0.01))
    kernel = DetectorKernel(1.1, 2.0, 10.0)
    prof = SwitchingProfile(25.0, 5.0)
    rng = np.random.default_rng(107)
    worst = 0.0
    for _ in range(10):
        X = SpacetimePoint(rng.uniform(-10, 10), tuple(rng.uniform(-10, 10, 3)))
        prob = qtp_prob_excitation(model, state, kernel, prof, X)
        w = coarse_grained_w_at(model, state, kernel, prof, X, quad_order=8)
        worst = max(worst, abs(prob / effective_volume(prof) / w - 1))
    report(7, "Prob/volume against coarse-grained W", worst <= 1e-3,
           f"max relative difference {worst:.1e} at 10 points", time.perf_counter() - start, 300)


def test_criterion_08_udw():
    start = time.perf_counter()
    worst_inertial = 0.0
    for m in (0.0, 1.0):
        model = FieldModel(m, 3)
        up = udw_response(model, Inertial(), UdwDetector(0.5 + m, 10.0)).value
        down = udw_response(model, Inertial(), UdwDetector(-0.5 - m, 10.0)).value
        worst_inertial = max(worst_inertial, abs(up) / down)
    model = FieldModel(0.0, 3)
    balance = []
    for a, T, gap in [(1.0, 50.0, 0.5), (0.5, 100.0, 0.3), (2.0, 25.0, 1.0)]:
        tr = UniformAcceleration(a)
        up = udw_response(model, tr, UdwDetector(gap, T)).value
        down = udw_response(model, tr, UdwDetector(-gap, T)).value
        balance.append(abs(up / down / math.exp(-2 * math.pi * gap / a) - 1))
    report(8, "Unruh-DeWitt responses", worst_inertial <= 1e-6 and max(balance) <= 0.05,
           f"inertial gapped/ungapped {worst_inertial:.1e}, detailed balance errors "
           + ", ".join(f"{b:.1e}" for b in balance), time.perf_counter() - start, 300)


def test_criterion_09_glauber():
    start = time.perf_counter()
    model = FieldModel(1.0, 3)
    rng = np.random.default_rng(109)
    packet = Wavepacket((0.4, -0.2, 0.0), 0.4)
    one = FieldState.one_particle(packet)
    worst_one = 0.0
    for _ in range(20):
        X = SpacetimePoint(rng.normal(), tuple(rng.normal(size=3)))
        f = positive_frequency_wavepacket(model, packet, X)
        worst_one = max(worst_one, abs(glauber_p(model, one, X) - abs(f) ** 2) / abs(f) ** 2)
    coh = FieldState.coherent(packet, 1.2 - 0.4j)
    worst_coh = 0.0
    for _ in range(20):
        X1, X2 = (SpacetimePoint(rng.normal(), tuple(rng.normal(size=3))) for _ in range(2))
        j = glauber_joint(model, coh, X1, X2)
        worst_coh = max(worst_coh, abs(j - glauber_p(model, coh, X1) * glauber_p(model, coh, X2)) / j)
    # independent check: normal-ordered moments built from Fock-space ladder operators
    tr = ModeTruncation(model, [(0.3, 0.0, 0.1), (-0.4, 0.2, 0.0)], [0.5, 0.8], n_max=14)
    modes = FieldState.coherent_modes([0.3 + 0.1j, -0.25j])
    worst_fock = 0.0
    for _ in range(10):
        X1, X2 = (SpacetimePoint(rng.normal(), tuple(rng.normal(size=3))) for _ in range(2))
        o = oracle_glauber(tr, modes, [X1, X2])
        worst_fock = max(worst_fock, abs(glauber_joint(tr, modes, X1, X2) - o) / o,
                         abs(o - oracle_glauber(tr, modes, [X1]) * oracle_glauber(tr, modes, [X2])) / o)
    report(9, "Glauber consistency", worst_one <= 1e-12 and max(worst_coh, worst_fock) <= 1e-10,
           f"one-particle {worst_one:.1e}, coherent factorization {worst_coh:.1e}, Fock oracle {worst_fock:.1e}",
           time.perf_counter() - start, 60)


SCENARIOS = {
    "point_density": """
field: {mass: 1.0, spatial_dim: 1}
state: {kind: one_particle, momentum: [0.5], width: 0.5, position: [0.0]}
detectors: [{type: kernel, gap: 1.0, sigma_E: 1.0, sigma_p: 1.0}]
experiment: {type: point_density}
grid: {t: [0.0, 1.5], x: {start: -4, stop: 4, num: 33}}
""",
    "joint": """
field: {mass: 1.0, spatial_dim: 3}
state: {kind: coherent, momentum: [0, 0, 0], width: 0.3, position: [0, 0, 0], alpha: [1.0, 0.5]}
detectors:
  - {type: kernel, gap: 1.0, sigma_E: 1.0, sigma_p: 1.0}
  - {type: kernel, gap: 1.0, sigma_E: 1.0, sigma_p: 1.0}
experiment: {type: joint, points: [[0, 0, 0, 0], [0, 8, 0, 0]]}
numerics: {seed: 12345, samples: 4000, order: 6}
""",
}


def test_criterion_10_determinism(tmp_path):
    start = time.perf_counter()
    same = []
    for name, text in SCENARIOS.items():
        sc, notes = parse_scenario(text)
        for run in ("a", "b"):
            run_scenario(sc, tmp_path / name / run, notes)
        a, = (tmp_path / name / "a").glob("*.csv")
        b, = (tmp_path / name / "b").glob("*.csv")
        same.append(a.read_bytes() == b.read_bytes())
    report(10, "determinism", all(same),
           ", ".join(f"{n} rerun bit-identical: {s}" for n, s in zip(SCENARIOS, same)),
           time.perf_counter() - start, 120)


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))
