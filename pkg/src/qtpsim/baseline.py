"""Reference detectors: Glauber positive-frequency counting and Unruh-DeWitt atoms."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .field import (
    FieldError,
    FieldModel,
    FieldSource,
    FieldState,
    ModeTruncation,
    SpacetimePoint,
    StateKind,
    state_amplitude,
    vacuum_wightman_of_interval,
)
from .wick import _fock_state, _mode_ops


class RegulatorSensitivityWarning(UserWarning):
    pass


# ----------------------------------------------------------------------------
# Glauber


def glauber_p(source: FieldSource, state: FieldState, X, order: int | None = None):
    """<psi|phi^(-)(X) phi^(+)(X)|psi>: |f(X)|^2, or |f_alpha(X)|^2 for coherent states."""
    if state.kind is StateKind.VACUUM:
        return 0.0 if isinstance(X, SpacetimePoint) else np.zeros(len(np.atleast_2d(X)))
    f = state_amplitude(source, state, X, order)
    return float(abs(f) ** 2) if isinstance(X, SpacetimePoint) else np.abs(f) ** 2


def glauber_joint(source: FieldSource, state: FieldState, X1: SpacetimePoint, X2: SpacetimePoint,
                  order: int | None = None) -> float:
    """Normal-ordered fourth moment <phi- phi- phi+ phi+>."""
    if state.kind is not StateKind.COHERENT:
        # phi^(+) phi^(+) annihilates the vacuum and every one-particle state
        return 0.0
    return glauber_p(source, state, X1, order) * glauber_p(source, state, X2, order)


def oracle_glauber(truncation: ModeTruncation, state: FieldState, points) -> float:
    """Normal-ordered moment <psi| prod phi^- (reversed) prod phi^+ |psi> in truncated Fock space."""
    ops = _mode_ops(truncation.n_modes, truncation.n_max)
    vec, pops = _fock_state(truncation, state)
    cutoff = truncation.n_max + 1 - len(points)
    if max(float(p[max(cutoff, 0):].sum()) for p in pops) > 1e-10:
        raise FieldError("truncation too small for the requested moment")
    k4 = truncation.four_momenta()
    v = vec
    for X in points:
        x = X.as_array()
        phase = np.exp(-1j * (k4[:, 0] * x[0] - k4[:, 1:] @ x[1:]))
        plus = sum(math.sqrt(w) * p * a for w, p, a in zip(truncation.weights, phase, ops))
        v = plus @ v
    return float(np.vdot(v, v).real)


# ----------------------------------------------------------------------------
# Trajectories


@dataclass(frozen=True)
class Inertial:
    velocity: tuple[float, ...] = (0.0, 0.0, 0.0)
    origin: SpacetimePoint | None = None

    def __post_init__(self):
        v = tuple(float(c) for c in self.velocity)
        if sum(c * c for c in v) >= 1:
            raise FieldError("inertial speed must be below 1")
        object.__setattr__(self, "velocity", v)
        if self.origin is None:
            object.__setattr__(self, "origin", SpacetimePoint(0.0, (0.0,) * len(v)))

    @property
    def gamma(self) -> float:
        return 1.0 / math.sqrt(1.0 - sum(c * c for c in self.velocity))

    def four_velocity(self, tau) -> np.ndarray:
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        u = self.gamma * np.array((1.0,) + self.velocity)
        return np.tile(u, (len(tau), 1))

    def four_acceleration(self, tau) -> np.ndarray:
        return np.zeros_like(self.four_velocity(tau))

    def position(self, tau) -> np.ndarray:
        tau = np.atleast_1d(np.asarray(tau, dtype=complex))
        return self.origin.as_array() + tau[:, None] * self.four_velocity(np.real(tau))

    def minus_sigma(self, u: np.ndarray, eps: float) -> np.ndarray:
        """|dx|^2 - dt^2 for X(u/2 - i eps/2) - X(-u/2 + i eps/2)."""
        d = self.position(0.5 * (u - 1j * eps)) - self.position(-0.5 * (u - 1j * eps))
        return np.sum(d[:, 1:] ** 2, axis=1) - d[:, 0] ** 2


@dataclass(frozen=True)
class UniformAcceleration:
    """Hyperbolic worldline X(tau) = (sinh(a tau)/a, x0 + n (cosh(a tau) - 1)/a)."""

    acceleration: float
    direction: tuple[float, ...] = (1.0, 0.0, 0.0)
    origin: SpacetimePoint | None = None

    def __post_init__(self):
        if not self.acceleration > 0:
            raise FieldError("proper acceleration must be positive")
        n = np.asarray(self.direction, dtype=float)
        object.__setattr__(self, "direction", tuple(n / np.linalg.norm(n)))
        if self.origin is None:
            object.__setattr__(self, "origin", SpacetimePoint(0.0, (0.0,) * len(n)))

    def position(self, tau) -> np.ndarray:
        tau = np.atleast_1d(np.asarray(tau, dtype=complex))
        a = self.acceleration
        n = np.array(self.direction)
        t = np.sinh(a * tau) / a
        x = ((np.cosh(a * tau) - 1.0) / a)[:, None] * n
        return self.origin.as_array() + np.column_stack([t, x])

    def four_velocity(self, tau) -> np.ndarray:
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        a = self.acceleration
        n = np.array(self.direction)
        return np.column_stack([np.cosh(a * tau), np.sinh(a * tau)[:, None] * n])

    def four_acceleration(self, tau) -> np.ndarray:
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        a = self.acceleration
        n = np.array(self.direction)
        return a * np.column_stack([np.sinh(a * tau), np.cosh(a * tau)[:, None] * n])

    def minus_sigma(self, u: np.ndarray, eps: float) -> np.ndarray:
        d = self.position(0.5 * (u - 1j * eps)) - self.position(-0.5 * (u - 1j * eps))
        return np.sum(d[:, 1:] ** 2, axis=1) - d[:, 0] ** 2


Trajectory = Inertial | UniformAcceleration


def minkowski_norm(v: np.ndarray) -> np.ndarray:
    return v[..., 0] ** 2 - np.sum(v[..., 1:] ** 2, axis=-1)


# ----------------------------------------------------------------------------
# Unruh-DeWitt response


@dataclass(frozen=True)
class UdwDetector:
    """Two-level detector with gap ``gap`` and window chi(tau) = exp(-tau^2 / (2 T^2))."""

    gap: float
    width: float
    regulator_ratio: float = 1e-3

    def __post_init__(self):
        if not self.width > 0:
            raise FieldError("switching width must be positive")

    @property
    def eps(self) -> float:
        """i-epsilon regulator, tied to the window as regulator_ratio / T."""
        return self.regulator_ratio / self.width

    def window(self, tau) -> np.ndarray:
        return np.exp(-0.5 * (np.asarray(tau) / self.width) ** 2)


@dataclass(frozen=True)
class UdwResponse:
    value: float
    regulator_sensitivity: float
    eps: float

    def __float__(self) -> float:
        return self.value


def _singular_part(gap: float, T: float, eps: float) -> float:
    """sqrt(pi) T int du exp(-i gap u - u^2/(4T^2)) [-1/(4 pi^2 (u - i eps)^2)], done in momentum space."""
    lo = max(0.0, -gap - 10.0 / T)
    hi = max(lo, -gap) + 10.0 / T

    def f(k):
        return k * math.exp(-k * eps - (gap + k) ** 2 * T * T)

    pts = [p for p in (-gap,) if lo < p < hi]
    val, _ = integrate.quad(f, lo, hi, points=pts or None, epsabs=0, epsrel=1e-12, limit=400)
    if lo > 0:
        tail, _ = integrate.quad(f, 0.0, lo, epsabs=0, epsrel=1e-12, limit=400)
        val += tail
    return T * T / (2 * math.pi) * val


def _response(model: FieldModel, traj, det: UdwDetector, eps: float) -> tuple[float, float]:
    """Regulated response and its quadrature error estimate."""
    if model.spatial_dim != 3:
        raise FieldError("the Unruh-DeWitt response is implemented in 3+1 dimensions")
    T, gap = det.width, det.gap

    def wreg(u):
        u = np.atleast_1d(u)
        w = vacuum_wightman_of_interval(model, traj.minus_sigma(u, eps))
        sing = -1.0 / (4 * math.pi**2 * (u - 1j * eps) ** 2)
        return (w - sing) * np.exp(-(u * u) / (4 * T * T))

    # Re W is even and Im W odd in u, so the line integral of
    # exp(-i gap u) W is 2 int_0 (Re W cos + Im W sin). The remainder is
    # smooth for m = 0 and log-singular at u = 0 otherwise; the first piece is
    # integrated without an oscillatory weight to resolve that point.
    L = 14.0 * T
    c = min(L, 1.0 / max(abs(gap), 1e-12), 2.0)
    # absolute floor relative to the coincidence scale 1/(4 pi^2 T); the
    # remainder vanishes identically for massless inertial motion
    opts = dict(epsabs=1e-13 / (4 * math.pi**2 * T), epsrel=1e-11, limit=1000)

    def near(u):
        v = wreg(u)[0]
        return v.real * math.cos(gap * u) + v.imag * math.sin(gap * u)

    # near u = 0 both W and its singular part are O(1/eps^2); their difference
    # carries round-off of that size, which bounds the attainable accuracy
    noise = 1e-15 / (4 * math.pi**2 * eps)
    a0, e0 = integrate.quad(near, 0.0, c, **dict(opts, epsabs=max(opts["epsabs"], noise)))
    re_rem = lambda u: float(np.real(wreg(u))[0])
    im_rem = lambda u: float(np.imag(wreg(u))[0])
    if gap != 0:
        a, ea = integrate.quad(re_rem, c, L, weight="cos", wvar=gap, **opts)
        b, eb = integrate.quad(im_rem, c, L, weight="sin", wvar=gap, **opts)
    else:
        (a, ea), (b, eb) = integrate.quad(re_rem, c, L, **opts), (0.0, 0.0)
    remainder = 2.0 * (a0 + a + b)
    err = 2.0 * math.sqrt(math.pi) * T * (e0 + ea + eb)
    return math.sqrt(math.pi) * T * remainder + _singular_part(gap, T, eps), err


def udw_response(model: FieldModel, traj, det: UdwDetector, flag: float = 0.01) -> UdwResponse:
    """Leading-order excitation probability (coupling set to 1) for a stationary worldline.

    For inertial and uniformly accelerated motion the pulled-back Wightman
    function depends only on u = tau - tau', and the Gaussian window reduces
    the double proper-time integral to

        sqrt(pi) T int du exp(-i gap u - u^2 / (4 T^2)) W(u - i eps).

    The coincidence singularity is subtracted and integrated in momentum space.
    Sensitivity is the relative change when eps is halved; changes below the
    quadrature error are not counted.
    """
    v1, e1 = _response(model, traj, det, det.eps)
    v2, e2 = _response(model, traj, det, det.eps / 2)
    diff = max(abs(v1 - v2) - 10 * (e1 + e2), 0.0)
    sens = diff / max(abs(v1), abs(v2), 1e-300)
    if sens > flag:
        warnings.warn(f"UdW response changes by {sens:.2%} under regulator refinement",
                      RegulatorSensitivityWarning, stacklevel=2)
    return UdwResponse(v2, sens, det.eps / 2)


def inertial_response_momentum(model: FieldModel, det: UdwDetector, eps: float | None = None) -> float:
    """Oracle for rest-frame inertial motion: 2 pi T^2 int dmu exp(-omega eps - (gap + omega)^2 T^2)."""
    eps = det.eps / 2 if eps is None else eps
    T, gap, m = det.width, det.gap, model.mass

    def f(k):
        om = math.sqrt(k * k + m * m)
        return 4 * math.pi * k * k / ((2 * math.pi) ** 3 * 2 * om) * math.exp(-om * eps - (gap + om) ** 2 * T * T)

    center = math.sqrt(max(gap * gap - m * m, 0.0)) if gap < 0 else 0.0
    hi = center + 20.0 / T + 40.0 / max(T, 1.0)
    pts = [center] if center > 0 else None
    val, _ = integrate.quad(f, 0.0, hi, points=pts, epsabs=0, epsrel=1e-12, limit=400)
    return 2 * math.pi * T * T * val
