"""Causality and locality experiments built on the detector models."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate, special

from .baseline import UdwDetector, glauber_p
from .field import FieldError, FieldModel, FieldState, IntervalClass, SpacetimePoint, StateKind, interval_class
from .field import default_order, state_amplitude, vacuum_wightman_array
from .qtp import density_form, qtp_joint, qtp_p_terms


# ----------------------------------------------------------------------------
# Factorization at spacelike separation


@dataclass
class SeparationRecord:
    s: float
    interval: IntervalClass
    margin: float
    P1: float
    P1b: float
    P2: float
    delta: float
    delta_error: float
    resolved: bool


@dataclass
class SeparationSweep:
    X1: SpacetimePoint
    records: list[SeparationRecord] = field(default_factory=list)
    floor: float = 1e-300
    width: float = 1.0

    def deltas(self) -> np.ndarray:
        return np.array([r.delta for r in self.records])

    def rows(self):
        hdr = ["s", "margin", "P1", "P1b", "P2", "delta", "delta_error", "spacelike"]
        data = [[r.s, r.margin, r.P1, r.P1b, r.P2, r.delta, r.delta_error,
                 1.0 if r.interval is IntervalClass.SPACELIKE else 0.0] for r in self.records]
        return hdr, np.array(data)


def widened_margin(X1: SpacetimePoint, X2: SpacetimePoint, kernels, nsigma: float = 3.0) -> float:
    """Spacelike margin of the +-Y/2 widened clusters, in units of the largest kernel scale.

    Each cluster extends nsigma/2 kernel scales in time and space about its
    point; the margin is (|dx| - spatial extents) - (|dt| + temporal extents).
    """
    dt = abs(X1.t - X2.t)
    dx = float(np.linalg.norm(np.subtract(X1.x, X2.x)))
    half_t = 0.5 * nsigma * sum(k.tau for k in kernels)
    half_x = 0.5 * nsigma * sum(k.ell for k in kernels)
    width = max(max(k.tau, k.ell) for k in kernels)
    return ((dx - half_x) - (dt + half_t)) / width


def factorization_sweep(model: FieldModel, state: FieldState, kernels, X1: SpacetimePoint,
                        separations: Sequence[float], direction=None, time_offset: float = 0.0,
                        samples: int = 32000, seed: int = 0, order: int | None = None,
                        floor: float = 1e-300, eps: float | None = None) -> SeparationSweep:
    """Delta(s) = |P2 - P1 P1'| / max(P1 P1', floor) for X2 = X1 + (time_offset, s n)."""
    d = model.spatial_dim
    n = np.zeros(d) if direction is None else np.asarray(direction, dtype=float)
    if direction is None:
        n[0] = 1.0
    n = n / np.linalg.norm(n)
    k1, k2 = kernels
    sweep = SeparationSweep(X1, floor=floor, width=max(max(k.tau, k.ell) for k in kernels))
    p1 = qtp_p_terms(model, state, k1, X1, order, estimate_error=False).value
    for idx, s in enumerate(separations):
        X2 = SpacetimePoint(X1.t + time_offset, tuple(np.asarray(X1.x) + s * n))
        p1b = qtp_p_terms(model, state, k2, X2, order, estimate_error=False).value
        joint = qtp_joint(model, state, [k1, k2], [X1, X2], order=order, samples=samples,
                          seed=seed, point_index=idx, eps=eps)
        ref = max(p1 * p1b, floor)
        delta = abs(joint.value - p1 * p1b) / ref
        err = joint.error / ref
        sweep.records.append(SeparationRecord(
            float(s), interval_class(X1, X2), widened_margin(X1, X2, kernels),
            p1, p1b, joint.value, delta, err, err < delta,
        ))
    return sweep


# ----------------------------------------------------------------------------
# Exterior tails: Glauber versus QTP


@dataclass
class TailReport:
    t: np.ndarray
    x: np.ndarray
    support_radius: float
    glauber: np.ndarray
    qtp: np.ndarray
    exterior: np.ndarray
    summary: dict


def support_radius(model: FieldModel, state: FieldState, mass_fraction: float = 0.99,
                   order: int | None = None, extent: float | None = None) -> float:
    """Half-width about the packet centre holding ``mass_fraction`` of |f|^2 at t = 0 (1D)."""
    if model.spatial_dim != 1:
        raise FieldError("tail scans are one-dimensional")
    c = state.packet.center_position[0]
    w = 1.0 / (2 * state.packet.momentum_width)
    extent = extent or 12 * w
    xs = np.linspace(c - extent, c + extent, 4001)
    dens = np.abs(state_amplitude(model, state, np.column_stack([np.zeros_like(xs), xs]), order)) ** 2
    # symmetric interval about the centre
    r = np.abs(xs - c)
    order_idx = np.argsort(r)
    acc = np.cumsum(dens[order_idx]) / dens.sum()
    return float(r[order_idx][np.searchsorted(acc, mass_fraction)])


def scan_order(state: FieldState, reach: float, cap: int = 2000) -> int:
    """Hermite order whose node spacing resolves plane waves out to ``reach``.

    A Gauss-Hermite sum over momenta k0 + 2 sigma z reproduces exp(i k x) only for
    |x| below roughly sqrt(2 n) / sigma; beyond that ghost packets appear.
    """
    sigma = state.packet.momentum_width
    n = math.ceil((sigma * reach) ** 2)
    return int(min(max(n, default_order(1)), cap))


def tail_scan(model: FieldModel, state: FieldState, kernel, t: Sequence[float], x: Sequence[float],
              order: int | None = None, mass_fraction: float = 0.99, deep: float = 5.0,
              nsigma: float = 3.0) -> TailReport:
    """Glauber and QTP densities on a (t, x) grid, split by the forward cone of the support.

    The cone is widened by the +-Y/2 reach of the kernel (nsigma/2 kernel scales
    in time and in space) so that exterior points are not merely smeared by the
    detector. ``deep`` marks exterior points at least that many packet widths
    further out. The dark term is uniform and is reported separately.
    """
    if state.kind is not StateKind.ONE_PARTICLE:
        raise FieldError("tail scans use a one-particle packet")
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    c = state.packet.center_position[0]
    if order is None:
        order = scan_order(state, float(np.max(np.abs(x - c)) + np.max(np.abs(t))))
    R0 = support_radius(model, state, mass_fraction, order)
    T, Xg = np.meshgrid(t, x, indexing="ij")
    pts = np.column_stack([T.ravel(), Xg.ravel()])
    g = glauber_p(model, state, pts, order).reshape(T.shape)
    form = density_form(model, state, kernel, order)
    q = form.signal(pts).reshape(T.shape)
    widen = 0.5 * nsigma * (kernel.tau + kernel.ell)
    outside = np.abs(Xg - c) - (R0 + np.abs(T)) - widen
    exterior = outside > 0
    w = 1.0 / (2 * state.packet.momentum_width)
    deep_mask = outside > deep * w
    dA = (t[1] - t[0] if len(t) > 1 else 1.0) * (x[1] - x[0])

    def stats(v):
        vmax = float(np.max(v[~exterior])) if np.any(~exterior) else float(np.max(v))
        return {
            "interior_max": vmax,
            "exterior_max": float(np.max(np.abs(v[exterior]))) if np.any(exterior) else 0.0,
            "deep_max": float(np.max(np.abs(v[deep_mask]))) if np.any(deep_mask) else 0.0,
            "exterior_mass": float(np.sum(np.abs(v[exterior])) * dA),
            "exterior_signed_mass": float(np.sum(v[exterior]) * dA),
            "interior_mass": float(np.sum(v[~exterior]) * dA),
        }

    ic = int(np.argmin(np.abs(x - c)))
    summary = {"support_radius": R0, "order": order, "widening": widen, "glauber": stats(g), "qtp": stats(q),
               "dark": float(form.dark)}
    for key in ("glauber", "qtp"):
        s = summary[key]
        s["exterior_fraction"] = s["exterior_mass"] / s["interior_mass"] if s["interior_mass"] > 0 else math.inf
        # control: packet-centre value at the first time, normalized by the interior mass
        v = g if key == "glauber" else q
        s["control"] = float(v[0, ic] / s["interior_mass"]) if s["interior_mass"] > 0 else math.nan
    return TailReport(t, x, R0, g, q, exterior, summary)


# ----------------------------------------------------------------------------
# Fermi's two-atom problem


def _ramp(x: np.ndarray, s: float) -> np.ndarray:
    """Second antiderivative of a unit Gaussian of width s: x Phi(x/s) + s phi(x/s)."""
    z = x / s
    return x * special.ndtr(z) + s * np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)


def window_overlap(u: np.ndarray, duration: float, edge: float) -> np.ndarray:
    """C(u) = int chi(tau) chi(tau + u) dtau for a box of length ``duration`` with Gaussian edges."""
    s = math.sqrt(2.0) * edge
    return _ramp(u + duration, s) - 2.0 * _ramp(u, s) + _ramp(u - duration, s)


def _feynman_massless_pv(g, r: float, L: float) -> complex:
    """int_0^L g(u) / (4 pi^2 (r^2 - (u - i0)^2)) du by principal value plus the pole residue."""
    opts = dict(epsabs=0, epsrel=1e-10, limit=800)
    pre = 1.0 / (4 * math.pi**2 * 2 * r)

    def part(fun):
        if r < L:
            # 1/(r^2 - u^2) = (1/2r) [1/(r - u) + 1/(r + u)]
            pv, _ = integrate.quad(lambda u: -fun(u), 0.0, L, weight="cauchy", wvar=r, **opts)
            reg, _ = integrate.quad(lambda u: fun(u) / (r + u), 0.0, L, **opts)
            return pre * (pv + reg)
        val, _ = integrate.quad(lambda u: fun(u) / (r * r - u * u), 0.0, L, **opts)
        return val / (4 * math.pi**2)

    val = part(lambda u: g(u).real) + 1j * part(lambda u: g(u).imag)
    if r < L:
        # 1/(r - u + i0) contributes -i pi delta(u - r)
        val += -1j * math.pi * pre * g(r)
    return complex(val)


def fermi_amplitude(model: FieldModel, r: float, duration: float, gap: float, edge: float,
                    eps: float | None = None) -> complex:
    """Exchange amplitude for A (excited) -> B (ground) with both couplings on over [0, duration].

    M = -int du exp(i gap u) C(u) G_F(u, r), G_F(u, r) = Delta^+(|u| - i eps, r).
    ``eps=None`` takes the limit eps -> 0 (massless pole handled by principal value).
    """
    if model.spatial_dim != 3:
        raise FieldError("the two-atom problem is set in 3+1 dimensions")
    L = duration + 10.0 * edge
    # C and G_F are even in u, so only the cosine part survives
    g = lambda u: 2.0 * math.cos(gap * u) * window_overlap(np.array([u]), duration, edge)[0]
    opts = dict(epsabs=0, epsrel=1e-10, limit=2000)
    if eps is not None:
        def integrand(u, part):
            w = vacuum_wightman_array(model, u, r, eps)
            v = g(u) * complex(w)
            return v.real if part == 0 else v.imag

        pts = [r] if 0 < r < L else None
        re, _ = integrate.quad(integrand, 0.0, L, args=(0,), points=pts, **opts)
        im, _ = integrate.quad(integrand, 0.0, L, args=(1,), points=pts, **opts)
        return -complex(re, im)
    if r <= 0:
        raise FieldError("the eps -> 0 limit needs r > 0")
    val = _feynman_massless_pv(lambda u: complex(g(u)), r, L)
    if model.mass > 0:
        # massive minus massless: at most log-singular on the light cone
        def diff(u, part):
            w = vacuum_wightman_array(model, u, r, null_tol=0.0) - (
                1.0 / (4 * math.pi**2 * complex(r * r - u * u)))
            v = g(u) * complex(w)
            return v.real if part == 0 else v.imag

        pts = [r] if r < L else None
        re, _ = integrate.quad(diff, 0.0, L, args=(0,), points=pts, **opts)
        im, _ = integrate.quad(diff, 0.0, L, args=(1,), points=pts, **opts)
        val += complex(re, im)
    return -val


@dataclass
class FermiReport:
    times: np.ndarray
    probability: np.ndarray
    separation: float
    summary: dict


def fermi_two_atom(model: FieldModel, separation: float, detA: UdwDetector, detB: UdwDetector,
                   times: Sequence[float], edge: float | None = None, eps: float | None = None,
                   transient_check: bool = True) -> FermiReport:
    """P_B(t) = |M(t)|^2 for two static atoms a distance ``separation`` apart.

    A starts excited, B in its ground state; both share the gap and are
    switched on at 0 and off at t with Gaussian edges of width ``edge``
    (default ``detB.width``). The switching-transient check repeats the
    calculation with the edge width changed by +-20%.
    """
    if abs(detA.gap - detB.gap) > 1e-12:
        raise FieldError("resonant exchange requires equal gaps")
    edge = detB.width if edge is None else edge
    times = np.asarray(times, dtype=float)
    probs = np.array([abs(fermi_amplitude(model, separation, t, detB.gap, edge, eps)) ** 2 for t in times])
    summary = {"separation": separation, "edge": edge}
    r = separation
    before = times < r
    if np.any(before) and np.any(~before):
        summary["max_before_lightcone"] = float(probs[before].max())
        summary["max_after_lightcone"] = float(probs[~before].max())
        summary["tail_ratio"] = summary["max_before_lightcone"] / max(summary["max_after_lightcone"], 1e-300)
    if transient_check and len(times):
        probe = times[np.argmax(probs)]
        base = probs.max()
        alt = [abs(fermi_amplitude(model, separation, probe, detB.gap, edge * f, eps)) ** 2 for f in (0.8, 1.2)]
        summary["transient_sensitivity"] = float(max(abs(a - base) for a in alt) / max(base, 1e-300))
    return FermiReport(times, probs, separation, summary)
