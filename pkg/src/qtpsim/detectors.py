"""Detector kernels as four-momentum spectral measures and Gaussian switching.

A kernel is stored in Fourier form. The position-space kernel is

    K(xi) = int d^{1+d}q / (2 pi)^{1+d}  Ktilde(q) exp(+i q.xi),

so a gap Omega > 0 in Ktilde means the detector absorbs positive field energy
and vacuum fluctuations sample Ktilde only at negative energies.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .field import SpacetimePoint, hermite_rule


class ScaleOrderingWarning(UserWarning):
    """Switching scales are not macroscopic relative to the kernel scales."""


def _as_points(X) -> np.ndarray:
    if isinstance(X, SpacetimePoint):
        return X.as_array()
    return np.asarray(X, dtype=float)


def boost_to_rest(velocity, vec: np.ndarray) -> np.ndarray:
    """Components in the rest frame of an observer moving with ``velocity``.

    ``vec`` has shape (..., 1+d); works for both coordinates and momenta.
    """
    v = np.asarray(velocity, dtype=float)
    v2 = float(v @ v)
    if v2 == 0.0:
        return vec
    if v2 >= 1.0:
        raise ValueError("detector speed must be below 1")
    gamma = 1.0 / math.sqrt(1.0 - v2)
    t = vec[..., 0]
    x = vec[..., 1:]
    vx = x @ v
    t_r = gamma * (t - vx)
    x_r = x + ((gamma - 1.0) * vx / v2 - gamma * t)[..., None] * v
    return np.concatenate([t_r[..., None], x_r], axis=-1)


def boost_from_rest(velocity, vec: np.ndarray) -> np.ndarray:
    return boost_to_rest(-np.asarray(velocity, dtype=float), vec)


@dataclass(frozen=True)
class DetectorKernel:
    """Gaussian spectral density centred at energy ``gap`` and zero momentum.

    Ktilde(q) = N exp(-(q0 - gap)^2 / (2 sigma_E^2) - |q|^2 / (2 sigma_p^2))
    in the detector rest frame, with N fixed by K(0) = 1.
    """

    gap: float
    sigma_E: float
    sigma_p: float
    spatial_dim: int = 3
    velocity: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.gap < 0:
            raise ValueError("gap must be non-negative")
        if not (self.sigma_E > 0 and self.sigma_p > 0):
            raise ValueError("kernel widths must be positive")
        if self.spatial_dim not in (1, 3):
            raise ValueError("spatial_dim must be 1 or 3")
        if self.velocity is not None:
            v = tuple(float(c) for c in np.atleast_1d(self.velocity))
            if len(v) != self.spatial_dim:
                raise ValueError("velocity dimension mismatch")
            if sum(c * c for c in v) >= 1.0:
                raise ValueError("detector speed must be below 1")
            object.__setattr__(self, "velocity", None if not any(v) else v)

    @property
    def tau(self) -> float:
        """Correlation time 1/sigma_E."""
        return 1.0 / self.sigma_E

    @property
    def ell(self) -> float:
        """Correlation length 1/sigma_p."""
        return 1.0 / self.sigma_p

    @property
    def normalization(self) -> float:
        d = self.spatial_dim
        return (2 * np.pi) ** ((1 + d) / 2) / (self.sigma_E * self.sigma_p**d)

    def _rest(self, vec: np.ndarray) -> np.ndarray:
        return vec if self.velocity is None else boost_to_rest(self.velocity, vec)

    def spectral(self, q) -> np.ndarray:
        q = self._rest(np.asarray(q, dtype=float))
        e = q[..., 0] - self.gap
        p2 = np.sum(q[..., 1:] ** 2, axis=-1)
        return self.normalization * np.exp(-e * e / (2 * self.sigma_E**2) - p2 / (2 * self.sigma_p**2))

    def position(self, xi) -> np.ndarray:
        xi = self._rest(_as_points(xi))
        t = xi[..., 0]
        r2 = np.sum(xi[..., 1:] ** 2, axis=-1)
        return np.exp(1j * self.gap * t - 0.5 * self.sigma_E**2 * t * t - 0.5 * self.sigma_p**2 * r2)

    def envelope_sample(self, rng: np.random.Generator, size: int, strata: np.ndarray | None = None):
        """Samples from |K(xi)| normalized, returning (xi, K(xi)/density).

        ``strata`` optionally supplies stratified uniforms in (0, 1) for the
        time component.
        """
        from scipy.special import ndtri

        d = self.spatial_dim
        if strata is None:
            t = rng.standard_normal(size)
        else:
            t = ndtri(strata)
        xs = rng.standard_normal((size, d))
        xi = np.column_stack([t / self.sigma_E, xs / self.sigma_p])
        mass = (2 * np.pi) ** ((1 + d) / 2) / (self.sigma_E * self.sigma_p**d)
        phase = np.exp(1j * self.gap * xi[:, 0])
        if self.velocity is not None:
            xi = boost_from_rest(self.velocity, xi)
        return xi, mass * phase

    def broadened(self, profile: "SwitchingProfile") -> "DetectorKernel":
        """Ktilde convolved with the spectrum of sqrt(f): the kernel K(xi) sqrt(f(xi))."""
        if self.velocity is not None:
            raise ValueError("switching smearing is defined for detectors at rest in the switching frame")
        return DetectorKernel(
            self.gap,
            math.sqrt(self.sigma_E**2 + 0.5 / profile.delta_t**2),
            math.sqrt(self.sigma_p**2 + 0.5 / profile.delta_x**2),
            self.spatial_dim,
        )


@dataclass(frozen=True)
class KernelMixture:
    """Weighted superposition of Gaussian kernels (spectral densities add)."""

    components: tuple[tuple[float, DetectorKernel], ...]

    def __post_init__(self):
        dims = {k.spatial_dim for _, k in self.components}
        if len(dims) != 1:
            raise ValueError("mixture components must share spatial_dim")
        if any(w < 0 for w, _ in self.components):
            raise ValueError("mixture weights must be non-negative")

    @property
    def spatial_dim(self) -> int:
        return self.components[0][1].spatial_dim

    @property
    def tau(self) -> float:
        return max(k.tau for _, k in self.components)

    @property
    def ell(self) -> float:
        return max(k.ell for _, k in self.components)

    def spectral(self, q) -> np.ndarray:
        return sum(w * k.spectral(q) for w, k in self.components)

    def position(self, xi) -> np.ndarray:
        return sum(w * k.position(xi) for w, k in self.components)

    def broadened(self, profile: "SwitchingProfile") -> "KernelMixture":
        return KernelMixture(tuple((w, k.broadened(profile)) for w, k in self.components))


def kernel_position(kernel, xi) -> complex:
    val = kernel.position(xi)
    return complex(val) if np.ndim(val) == 0 else val


def spectral_from_position(kernel: DetectorKernel, samples: int = 256, half_width: float = 12.0):
    """Numerically Fourier transform K(xi) back to Ktilde on the FFT momentum grid.

    The rest-frame Gaussian kernel factorizes over axes, so each axis is
    transformed by a 1D FFT of sampled K values. Returns
    ``(q_time, q_space, kt_time, kt_space)``; the full Ktilde on the tensor
    grid is ``kt_time[i] * prod_j kt_space[n_j]``.
    """
    if kernel.velocity is not None:
        raise ValueError("round trip is defined in the detector rest frame")

    def transform(scale: float, sign: float, g):
        L = half_width * scale
        dx = 2 * L / samples
        xs = -L + dx * np.arange(samples)
        vals = g(xs)
        q = 2 * np.pi * np.fft.fftfreq(samples, d=dx)
        # int g(x) exp(-i sign q x) dx on the periodic grid
        if sign > 0:
            spec = dx * np.fft.fft(vals) * np.exp(1j * q * L)
        else:
            spec = dx * np.fft.ifft(vals) * samples * np.exp(-1j * q * L)
        order = np.argsort(q)
        return q[order], spec[order]

    zero = np.zeros(kernel.spatial_dim)

    def k_time(t):
        return kernel.position(np.column_stack([t, np.tile(zero, (len(t), 1))]))

    def k_space(x):
        pts = np.zeros((len(x), 1 + kernel.spatial_dim))
        pts[:, 1] = x
        return kernel.position(pts)

    # Ktilde(q) = int K(xi) exp(-i q0 t + i q.x)
    qt, kt = transform(kernel.tau, +1.0, k_time)
    qs, ks = transform(kernel.ell, -1.0, k_space)
    return qt, qs, kt, ks


@dataclass(frozen=True)
class SwitchingProfile:
    """Gaussian spacetime window f(t, x) = exp(-t^2/(2 dt^2) - |x|^2/(2 dx^2)).

    ``shape='sech'`` swaps in a non-Gaussian profile; it exists only to check
    that the identity test discriminates.
    """

    delta_t: float
    delta_x: float
    center: SpacetimePoint | None = None
    spatial_dim: int = 3
    shape: str = "gaussian"

    def __post_init__(self):
        if not (self.delta_t > 0 and self.delta_x > 0):
            raise ValueError("switching widths must be positive")
        if self.shape not in ("gaussian", "sech"):
            raise ValueError(f"unknown profile shape {self.shape!r}")
        if self.center is None:
            object.__setattr__(self, "center", SpacetimePoint(0.0, (0.0,) * self.spatial_dim))

    def value(self, X) -> np.ndarray:
        """f evaluated at displacement X (not relative to ``center``)."""
        X = _as_points(X)
        t = X[..., 0] / self.delta_t
        x = X[..., 1:] / self.delta_x
        if self.shape == "sech":
            return 1.0 / np.cosh(t) * np.prod(1.0 / np.cosh(x), axis=-1)
        return np.exp(-0.5 * t * t - 0.5 * np.sum(x * x, axis=-1))


def switching_identity_check(profile: SwitchingProfile, X, X2) -> float:
    """|f(X) f(X') - f^2((X+X')/2) sqrt(f(X-X'))| for the given pair(s)."""
    X = _as_points(X)
    X2 = _as_points(X2)
    lhs = profile.value(X) * profile.value(X2)
    rhs = profile.value(0.5 * (X + X2)) ** 2 * np.sqrt(profile.value(X - X2))
    res = np.abs(lhs - rhs)
    return float(res) if np.ndim(res) == 0 else res


def effective_volume(profile: SwitchingProfile) -> float:
    """int f^2 = pi^{(1+d)/2} delta_t delta_x^d (pi^2 dt dx^3 in 3+1 dimensions)."""
    if profile.shape != "gaussian":
        raise ValueError("closed form holds for the Gaussian profile only")
    d = profile.spatial_dim
    return math.pi ** ((1 + d) / 2) * profile.delta_t * profile.delta_x**d


def effective_volume_quadrature(profile: SwitchingProfile, order: int = 40) -> float:
    """int f^2 by tensor Gauss-Hermite with nodes adapted to f rather than f^2."""
    z, w = hermite_rule(order)
    d = profile.spatial_dim
    # nodes for weight exp(-u^2/(2 delta^2)); integrand f^2 / weight
    scale = np.array([profile.delta_t] + [profile.delta_x] * d) * math.sqrt(2.0)
    total = 1.0
    for axis in range(1 + d):
        u = scale[axis] * z
        pts = np.zeros((order, 1 + d))
        pts[:, axis] = u
        integrand = profile.value(pts) ** 2 / np.exp(-(z * z))
        total *= scale[axis] * np.sum(w * integrand)
    return float(total)


def sampling_density(profile: SwitchingProfile, X) -> np.ndarray:
    """F(X) = f^2(X - center) / upsilon, a normalized density on spacetime."""
    X = _as_points(X)
    val = profile.value(X - profile.center.as_array()) ** 2 / effective_volume(profile)
    return float(val) if np.ndim(val) == 0 else val


def simplified_limit_error(kernel: DetectorKernel, profile: SwitchingProfile, samples: int = 401) -> float:
    """max_xi |K(xi) sqrt(f(xi)) - K(xi)| / K(0), scanned along the time and space axes."""
    worst = 0.0
    d = kernel.spatial_dim
    for axis, scale in [(0, kernel.tau)] + [(j, kernel.ell) for j in range(1, 1 + d)]:
        u = np.linspace(-40 * scale, 40 * scale, samples)
        pts = np.zeros((samples, 1 + d))
        pts[:, axis] = u
        K = np.abs(kernel.position(pts))
        err = K * (1.0 - np.sqrt(profile.value(pts)))
        worst = max(worst, float(err.max()))
    return worst


def check_scale_ordering(kernel, profile: SwitchingProfile, ratio: float = 10.0) -> list[str]:
    """Warn unless delta_t >> tau and delta_x >> ell (by ``ratio``)."""
    msgs = []
    if profile.delta_t < ratio * kernel.tau:
        msgs.append(f"delta_t={profile.delta_t:g} is not >> kernel tau={kernel.tau:g}")
    if profile.delta_x < ratio * kernel.ell:
        msgs.append(f"delta_x={profile.delta_x:g} is not >> kernel ell={kernel.ell:g}")
    for m in msgs:
        warnings.warn(m, ScaleOrderingWarning, stacklevel=2)
    return msgs
