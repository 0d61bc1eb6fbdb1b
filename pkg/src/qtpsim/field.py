"""Minkowski geometry, the free scalar field, prepared states and two-point data.

Conventions used throughout the package: signature (+,-,-,-), hbar = c = 1,
k.X = omega t - k.x and

    phi(X) = int dmu(k) [a_k exp(-i k.X) + a_k^dag exp(+i k.X)],
    dmu(k) = d^d k / ((2 pi)^d 2 omega(k)).

Positive frequency therefore means positive energy, and the one-particle
amplitude of a state |psi> is f(X) = <0|phi(X)|psi>.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy import integrate, special


class FieldError(ValueError):
    """Invalid field model, state or evaluation request."""


class IntervalClass(enum.Enum):
    SPACELIKE = "spacelike"
    TIMELIKE = "timelike"
    NULL = "null"


@dataclass(frozen=True)
class SpacetimePoint:
    t: float
    x: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "x", tuple(float(v) for v in np.atleast_1d(self.x)))

    @property
    def dim(self) -> int:
        return len(self.x)

    def as_array(self) -> np.ndarray:
        return np.array([self.t, *self.x])

    @classmethod
    def from_array(cls, arr) -> "SpacetimePoint":
        arr = np.asarray(arr, dtype=float)
        return cls(arr[0], tuple(arr[1:]))

    def shifted(self, delta) -> "SpacetimePoint":
        """Return ``self + delta`` where delta is a (1+d)-vector."""
        return SpacetimePoint.from_array(self.as_array() + np.asarray(delta, dtype=float))


def _check_same_dim(X: SpacetimePoint, X2: SpacetimePoint) -> None:
    if X.dim != X2.dim:
        raise FieldError(f"dimension mismatch: {X.dim} vs {X2.dim} spatial components")


def interval(X: SpacetimePoint, X2: SpacetimePoint) -> float:
    """Invariant interval (t - t')^2 - |x - x'|^2."""
    _check_same_dim(X, X2)
    d = X.as_array() - X2.as_array()
    return float(d[0] ** 2 - np.dot(d[1:], d[1:]))


def interval_class(X: SpacetimePoint, X2: SpacetimePoint, tol: float = 1e-12) -> IntervalClass:
    s = interval(X, X2)
    if abs(s) <= tol:
        return IntervalClass.NULL
    return IntervalClass.TIMELIKE if s > 0 else IntervalClass.SPACELIKE


@dataclass(frozen=True)
class FieldModel:
    """Free real scalar field of given mass in d = 1 or 3 spatial dimensions.

    Only the field itself is supported as the coupling operator.
    """

    mass: float
    spatial_dim: int = 3
    coupling_operator: str = "field"

    def __post_init__(self):
        if self.spatial_dim not in (1, 3):
            raise FieldError(f"spatial_dim must be 1 or 3, got {self.spatial_dim}")
        if self.mass < 0:
            raise FieldError("mass must be non-negative")
        if self.spatial_dim == 1 and self.mass == 0:
            raise FieldError("massless field in 1+1 dimensions is infrared-singular; use mass > 0")
        if self.coupling_operator != "field":
            raise FieldError("only coupling_operator='field' is supported")

    def omega(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=float)
        return np.sqrt(np.sum(k * k, axis=-1) + self.mass**2)


@dataclass(frozen=True)
class Wavepacket:
    """Gaussian momentum-space packet psi(k) ~ exp(-|k-k0|^2/(4 sigma^2) - i k.x0).

    ``|psi|^2`` has standard deviation ``momentum_width`` per axis.
    """

    center_momentum: tuple[float, ...]
    momentum_width: float
    center_position: tuple[float, ...] | None = None

    def __post_init__(self):
        k0 = tuple(float(v) for v in np.atleast_1d(self.center_momentum))
        object.__setattr__(self, "center_momentum", k0)
        x0 = self.center_position
        x0 = (0.0,) * len(k0) if x0 is None else tuple(float(v) for v in np.atleast_1d(x0))
        if len(x0) != len(k0):
            raise FieldError("center_position and center_momentum differ in dimension")
        object.__setattr__(self, "center_position", x0)
        if not self.momentum_width > 0:
            raise FieldError("momentum_width must be positive")

    @property
    def dim(self) -> int:
        return len(self.center_momentum)


@dataclass(frozen=True)
class ModeTruncation:
    """Field restricted to finitely many momentum modes.

    phi(X) = sum_j sqrt(w_j) [a_j exp(-i k_j.X) + h.c.] with [a_i, a_j^dag] = delta_ij;
    each mode is truncated at occupation ``n_max`` in the Fock-space oracle.
    """

    model: FieldModel
    momenta: tuple[tuple[float, ...], ...]
    weights: tuple[float, ...]
    n_max: int = 6

    def __post_init__(self):
        mom = tuple(tuple(float(v) for v in np.atleast_1d(k)) for k in self.momenta)
        object.__setattr__(self, "momenta", mom)
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if len(mom) != len(self.weights) or not mom:
            raise FieldError("need one positive weight per mode")
        if any(len(k) != self.model.spatial_dim for k in mom):
            raise FieldError("mode momenta must match the model's spatial dimension")
        if any(w <= 0 for w in self.weights):
            raise FieldError("mode weights must be positive")

    @property
    def n_modes(self) -> int:
        return len(self.momenta)

    def four_momenta(self) -> np.ndarray:
        k = np.array(self.momenta)
        return np.column_stack([self.model.omega(k), k])


FieldSource = Union[FieldModel, ModeTruncation]


def _base_model(source: FieldSource) -> FieldModel:
    return source.model if isinstance(source, ModeTruncation) else source


class StateKind(enum.Enum):
    VACUUM = "vacuum"
    ONE_PARTICLE = "one_particle"
    COHERENT = "coherent"


@dataclass(frozen=True)
class FieldState:
    """Prepared field state.

    Continuum states carry a :class:`Wavepacket`; the coherent amplitude is
    ``alpha(k) = alpha * psi(k)``. States on a :class:`ModeTruncation` carry
    per-mode coefficients instead (excitation amplitudes or coherent
    displacements).
    """

    kind: StateKind
    packet: Wavepacket | None = None
    alpha: complex = 1.0
    mode_amplitudes: tuple[complex, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "alpha", complex(self.alpha))
        if self.mode_amplitudes is not None:
            object.__setattr__(self, "mode_amplitudes", tuple(complex(c) for c in self.mode_amplitudes))
        if self.kind is not StateKind.VACUUM and self.packet is None and self.mode_amplitudes is None:
            raise FieldError(f"{self.kind.value} state needs a wavepacket or mode amplitudes")
        if self.kind is StateKind.ONE_PARTICLE and self.mode_amplitudes is not None:
            norm = sum(abs(c) ** 2 for c in self.mode_amplitudes)
            if abs(norm - 1) > 1e-12:
                raise FieldError(f"one-particle mode amplitudes must be normalized (got {norm})")

    @classmethod
    def vacuum(cls) -> "FieldState":
        return cls(StateKind.VACUUM)

    @classmethod
    def one_particle(cls, packet: Wavepacket) -> "FieldState":
        return cls(StateKind.ONE_PARTICLE, packet=packet)

    @classmethod
    def coherent(cls, packet: Wavepacket, alpha: complex = 1.0) -> "FieldState":
        return cls(StateKind.COHERENT, packet=packet, alpha=alpha)

    @classmethod
    def one_particle_modes(cls, coefficients: Sequence[complex]) -> "FieldState":
        return cls(StateKind.ONE_PARTICLE, mode_amplitudes=tuple(coefficients))

    @classmethod
    def coherent_modes(cls, alphas: Sequence[complex]) -> "FieldState":
        return cls(StateKind.COHERENT, mode_amplitudes=tuple(alphas))

    @property
    def is_quasi_free(self) -> bool:
        return self.kind in (StateKind.VACUUM, StateKind.COHERENT)


# ----------------------------------------------------------------------------
# Wavepacket quadrature


def default_order(spatial_dim: int) -> int:
    return 48 if spatial_dim == 1 else 12


@functools.lru_cache(maxsize=32)
def hermite_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Hermite nodes and weights for exp(-z^2); stable for large orders."""
    z, w = special.roots_hermite(order)
    z.flags.writeable = False
    w.flags.writeable = False
    return z, w


def _hermgauss_tensor(order: int, dim: int) -> tuple[np.ndarray, np.ndarray]:
    z, w = hermite_rule(order)
    grids = np.meshgrid(*([z] * dim), indexing="ij")
    wgrids = np.meshgrid(*([w] * dim), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    return nodes, weights


@functools.lru_cache(maxsize=64)
def packet_normalization(model: FieldModel, packet: Wavepacket) -> float:
    """Constant A such that int dmu |psi|^2 = 1 (high-order Gauss-Hermite)."""
    d = model.spatial_dim
    if packet.dim != d:
        raise FieldError("wavepacket dimension does not match the field model")
    order = 96 if d == 1 else 32
    z, w = _hermgauss_tensor(order, d)
    sigma = packet.momentum_width
    k = np.asarray(packet.center_momentum) + math.sqrt(2.0) * sigma * z
    integral = (math.sqrt(2.0) * sigma) ** d * np.sum(w / ((2 * np.pi) ** d * 2 * model.omega(k)))
    return 1.0 / math.sqrt(integral)


def wavepacket_norm(model: FieldModel, packet: Wavepacket) -> float:
    """int dmu |psi|^2 by radial quadrature, independent of the Gauss-Hermite path.

    In 3D the angular integral is done in closed form.
    """
    A = packet_normalization(model, packet)
    sigma = packet.momentum_width
    k0 = np.asarray(packet.center_momentum)
    if model.spatial_dim == 1:
        def integrand(k):
            return A**2 * math.exp(-((k - k0[0]) ** 2) / (2 * sigma**2)) / (2 * np.pi * 2 * model.omega([k]))
        lo, hi = k0[0] - 14 * sigma, k0[0] + 14 * sigma
        val, _ = integrate.quad(integrand, lo, hi, points=[k0[0]], epsabs=0, epsrel=1e-13, limit=200)
        return float(val)

    kc = float(np.linalg.norm(k0))

    def integrand(k):
        if kc * k == 0.0:
            ang = 2.0 * math.exp(-((k - kc) ** 2) / (2 * sigma**2))
        else:
            a = k * kc / sigma**2
            # int_{-1}^{1} exp(-(k^2+kc^2-2 k kc c)/(2 sigma^2)) dc
            ang = math.exp(-((k - kc) ** 2) / (2 * sigma**2)) * (-math.expm1(-2 * a)) / a
        omega = math.sqrt(k * k + model.mass**2)
        return A**2 * 2 * np.pi * k * k * ang / ((2 * np.pi) ** 3 * 2 * omega)

    lo, hi = max(0.0, kc - 14 * sigma), kc + 14 * sigma
    pts = [p for p in (kc,) if lo < p < hi]
    val, _ = integrate.quad(integrand, lo, hi, points=pts or None, epsabs=0, epsrel=1e-13, limit=200)
    return float(val)


@dataclass(frozen=True)
class AmplitudeNodes:
    """Discrete representation amplitude(X) = sum_i a_i exp(-i k_i.X).

    ``k4`` holds on-shell four-momenta (omega, k) row-wise and ``a`` the complex
    weights. Produced either by Gauss-Hermite quadrature of a wavepacket or
    directly from a mode truncation.
    """

    k4: np.ndarray = field(repr=False)
    a: np.ndarray = field(repr=False)
    # per-axis momenta when the nodes form a tensor product (row-major order)
    axis_k: tuple | None = field(default=None, repr=False)

    def phases(self, points: np.ndarray) -> np.ndarray:
        """exp(-i k_i.X) for points of shape (M, 1+d); returns (M, N)."""
        points = np.atleast_2d(points)
        kx = np.outer(points[:, 0], self.k4[:, 0]) - points[:, 1:] @ self.k4[:, 1:].T
        return np.exp(-1j * kx)

    def evaluate(self, points: np.ndarray, chunk: int = 2048) -> np.ndarray:
        points = np.atleast_2d(points)
        out = np.empty(len(points), dtype=complex)
        for start in range(0, len(points), chunk):
            sl = slice(start, start + chunk)
            out[sl] = self.phases(points[sl]) @ self.a
        return out


@functools.lru_cache(maxsize=64)
def _packet_nodes(model: FieldModel, packet: Wavepacket, order: int) -> AmplitudeNodes:
    d = model.spatial_dim
    A = packet_normalization(model, packet)
    z, w = _hermgauss_tensor(order, d)
    sigma = packet.momentum_width
    k = np.asarray(packet.center_momentum) + 2.0 * sigma * z
    omega = model.omega(k)
    x0 = np.asarray(packet.center_position)
    a = (2.0 * sigma) ** d * w * A * np.exp(-1j * (k @ x0)) / ((2 * np.pi) ** d * 2 * omega)
    zs = hermite_rule(order)[0]
    axis_k = tuple(packet.center_momentum[j] + 2.0 * sigma * zs for j in range(d))
    return AmplitudeNodes(np.column_stack([omega, k]), a, axis_k)


def amplitude_nodes(source: FieldSource, state: FieldState, order: int | None = None) -> AmplitudeNodes:
    """Nodes for the state's positive-frequency amplitude.

    OneParticle: f(X) = <0|phi(X)|psi>. Coherent: f_alpha(X), the positive
    frequency part of <phi(X)>. Vacuum has no amplitude.
    """
    if state.kind is StateKind.VACUUM:
        raise FieldError("the vacuum has no positive-frequency amplitude")
    if isinstance(source, ModeTruncation):
        if state.mode_amplitudes is None or len(state.mode_amplitudes) != source.n_modes:
            raise FieldError("mode-truncated field needs one amplitude per mode")
        a = np.sqrt(np.array(source.weights)) * np.array(state.mode_amplitudes)
        return AmplitudeNodes(source.four_momenta(), a)
    if state.packet is None:
        raise FieldError("continuum field needs a wavepacket state")
    order = order or default_order(source.spatial_dim)
    nodes = _packet_nodes(source, state.packet, order)
    if state.kind is StateKind.COHERENT and state.alpha != 1.0:
        return AmplitudeNodes(nodes.k4, nodes.a * state.alpha, nodes.axis_k)
    return nodes


def _points_array(points) -> np.ndarray:
    if isinstance(points, SpacetimePoint):
        return points.as_array()[None, :]
    if isinstance(points, (list, tuple)) and points and isinstance(points[0], SpacetimePoint):
        return np.array([p.as_array() for p in points])
    return np.atleast_2d(np.asarray(points, dtype=float))


def positive_frequency_wavepacket(model: FieldModel, wp: Wavepacket, X, order: int | None = None):
    """f(X) = int dmu psi(k) exp(-i(omega t - k.x)) by Gauss-Hermite quadrature.

    Accepts a single :class:`SpacetimePoint` (returns complex) or an array of
    points of shape (M, 1+d).
    """
    nodes = amplitude_nodes(model, FieldState.one_particle(wp), order)
    vals = nodes.evaluate(_points_array(X))
    return complex(vals[0]) if isinstance(X, SpacetimePoint) else vals


def state_amplitude(source: FieldSource, state: FieldState, X, order: int | None = None):
    nodes = amplitude_nodes(source, state, order)
    vals = nodes.evaluate(_points_array(X))
    return complex(vals[0]) if isinstance(X, SpacetimePoint) else vals


def mean_field(source: FieldSource, state: FieldState, X, order: int | None = None):
    """<phi(X)>: 2 Re f_alpha(X) for coherent states, zero otherwise."""
    if state.kind is not StateKind.COHERENT:
        return 0.0 if isinstance(X, SpacetimePoint) else np.zeros(len(_points_array(X)))
    vals = 2.0 * np.real(amplitude_nodes(source, state, order).evaluate(_points_array(X)))
    return float(vals[0]) if isinstance(X, SpacetimePoint) else vals


# ----------------------------------------------------------------------------
# Vacuum two-point function


def _wightman_of_z(model: FieldModel, z: np.ndarray) -> np.ndarray:
    """Vacuum Wightman as a function of z = sqrt(|x|^2 - (t - i eps)^2)."""
    m = model.mass
    if model.spatial_dim == 1:
        return special.kv(0, m * z) / (2 * np.pi)
    if m == 0:
        return 1.0 / (4 * np.pi**2 * z * z)
    return m * special.kv(1, m * z) / (4 * np.pi**2 * z)


def vacuum_wightman_array(model: FieldModel, dt, r, eps: float | None = None, null_tol: float = 1e-12) -> np.ndarray:
    """Delta^+(dt, r) = <0|phi(X1) phi(X2)|0>, dt = t1 - t2, r = |x1 - x2|.

    Without ``eps`` the distributional boundary value is taken off the light
    cone; null or coincident separations raise. With ``eps > 0`` the time
    difference is shifted to dt - i eps.
    """
    dt = np.asarray(dt, dtype=float)
    r = np.asarray(r, dtype=float)
    dt, r = np.broadcast_arrays(dt, r)
    adt = np.abs(dt)
    if eps:
        w = r * r - (adt - 1j * eps) ** 2
        z = np.sqrt(w)
    else:
        s = adt * adt - r * r
        if np.any(np.abs(s) <= null_tol):
            raise FieldError("unregularized Wightman function at null or coincident separation; pass eps")
        z = np.where(s < 0, np.sqrt(np.abs(s)) + 0j, 1j * np.sqrt(np.abs(s)))
    val = _wightman_of_z(model, z)
    # hermiticity: W(-dt) = conj W(dt), enforced exactly
    return np.where(dt < 0, np.conj(val), val)


def vacuum_wightman_of_interval(model: FieldModel, minus_sigma) -> np.ndarray:
    """Wightman as a function of the complexified -sigma = |dx|^2 - dt^2.

    The caller supplies the regulated value; the principal square root is
    taken, which is correct whenever Re sqrt(-sigma) > 0.
    """
    return _wightman_of_z(model, np.sqrt(np.asarray(minus_sigma, dtype=complex)))


def vacuum_wightman(source: FieldSource, X1: SpacetimePoint, X2: SpacetimePoint, eps: float | None = None) -> complex:
    _check_same_dim(X1, X2)
    d = X1.as_array() - X2.as_array()
    if isinstance(source, ModeTruncation):
        k4 = source.four_momenta()
        kx = k4[:, 0] * d[0] - k4[:, 1:] @ d[1:]
        return complex(np.sum(np.array(source.weights) * np.exp(-1j * kx)))
    return complex(vacuum_wightman_array(source, d[0], np.linalg.norm(d[1:]), eps))


def vacuum_wightman_quadrature(model: FieldModel, X1: SpacetimePoint, X2: SpacetimePoint, eps: float) -> complex:
    """Oracle: Delta^+ by direct radial momentum quadrature with damping exp(-omega eps)."""
    if not eps > 0:
        raise FieldError("momentum quadrature needs eps > 0")
    d = X1.as_array() - X2.as_array()
    dt, r = d[0], float(np.linalg.norm(d[1:]))
    m = model.mass
    kmax = 45.0 / eps + 10 * m

    if model.spatial_dim == 1:
        def integrand(k, part):
            om = math.sqrt(k * k + m * m)
            v = math.cos(k * r) / om * np.exp(-1j * om * (dt - 1j * eps)) / (2 * np.pi)
            return v.real if part == 0 else v.imag
    else:
        def integrand(k, part):
            om = math.sqrt(k * k + m * m)
            radial = k * k if r == 0 else k * math.sin(k * r) / r
            v = radial / om * np.exp(-1j * om * (dt - 1j * eps)) / (4 * np.pi**2)
            return v.real if part == 0 else v.imag

    vals = []
    for part in (0, 1):
        v, _ = integrate.quad(integrand, 0.0, kmax, args=(part,), epsabs=1e-15, epsrel=1e-11, limit=4000)
        vals.append(v)
    return complex(vals[0], vals[1])


def wightman_two_point(source: FieldSource, state: FieldState, X1: SpacetimePoint, X2: SpacetimePoint,
                       eps: float | None = None, order: int | None = None) -> complex:
    """<psi|phi(X1) phi(X2)|psi>: vacuum part plus the normal-ordered state part."""
    val = vacuum_wightman(source, X1, X2, eps)
    if state.kind is StateKind.ONE_PARTICLE:
        f1, f2 = state_amplitude(source, state, [X1, X2], order)
        val += 2.0 * (np.conj(f1) * f2).real
    elif state.kind is StateKind.COHERENT:
        F1, F2 = mean_field(source, state, [X1, X2], order)
        val += F1 * F2
    return complex(val)
