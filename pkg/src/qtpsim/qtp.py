"""Detection densities: P(X), Prob(X), the coarse-grained W(X) and joint P_2.

One-event densities are evaluated in momentum space. With the state amplitude
discretized as f(X) = sum_i a_i exp(-i k_i.X) (phi_i(X) = a_i exp(-i k_i.X)),

    P(X) = D + sum_ij conj(phi_i) phi_j M_ij + 2 Re sum_ij phi_i phi_j Mc_ij

with the dark term D = int dmu(k) Kt(-k) and

    M_ij  = Kt((k_i + k_j)/2) + Kt(-(k_i + k_j)/2)
    Mc_ij = [Kt((k_i - k_j)/2) + Kt((k_j - k_i)/2)] / 2      (coherent only).

For Prob(X)/upsilon the same form holds with Kt replaced by the spectrum of
K sqrt(f) and each entry multiplied by the switching transform Fhat(p) of the
entry's phase momentum p (k_i - k_j for M, k_i + k_j for Mc).
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate, ndimage

from .detectors import DetectorKernel, KernelMixture, SwitchingProfile, check_scale_ordering, effective_volume
from .field import (
    FieldError,
    FieldModel,
    FieldSource,
    FieldState,
    ModeTruncation,
    SpacetimePoint,
    StateKind,
    amplitude_nodes,
    default_order,
    hermite_rule,
)
from .wick import g2n_samples

AXIS_NAMES = ("t", "x", "y", "z")


class KernelModelWarning(UserWarning):
    """A density came out negative beyond the quadrature floor."""


class MonteCarloToleranceError(RuntimeError):
    pass


def _base(source: FieldSource) -> FieldModel:
    return source.model if isinstance(source, ModeTruncation) else source


def _pts(X) -> np.ndarray:
    if isinstance(X, SpacetimePoint):
        return X.as_array()[None, :]
    if isinstance(X, (list, tuple)) and X and isinstance(X[0], SpacetimePoint):
        return np.array([p.as_array() for p in X])
    return np.atleast_2d(np.asarray(X, dtype=float))


# ----------------------------------------------------------------------------
# Dark term


def dark_rate(model: FieldModel, kernel) -> float:
    """D = int dmu(k) Kt(-omega, -k): the vacuum response of the kernel.

    The invariant measure makes D independent of the detector's velocity, so the
    rest-frame spectrum is integrated radially.
    """
    if isinstance(kernel, KernelMixture):
        return sum(w * dark_rate(model, k) for w, k in kernel.components)
    rest = DetectorKernel(kernel.gap, kernel.sigma_E, kernel.sigma_p, kernel.spatial_dim)
    d = model.spatial_dim
    m = model.mass
    # Kt(-omega, k) = N exp(-(omega + gap)^2/(2 sE^2) - k^2/(2 sp^2)); factor the
    # leading exponential out so that quad sees an O(1) integrand
    om0 = m
    shift = (om0 + rest.gap) ** 2 / (2 * rest.sigma_E**2)

    def integrand(k):
        om = math.sqrt(k * k + m * m)
        expo = -(om + rest.gap) ** 2 / (2 * rest.sigma_E**2) + shift - k * k / (2 * rest.sigma_p**2)
        radial = 4 * math.pi * k * k if d == 3 else 2.0
        return radial * math.exp(expo) / ((2 * math.pi) ** d * 2 * om)

    kmax = 12 * max(rest.sigma_p, rest.sigma_E) + 10 * m
    val, _ = integrate.quad(integrand, 0.0, kmax, epsabs=0, epsrel=1e-12, limit=400,
                            points=[min(rest.sigma_E, rest.sigma_p)])
    return float(rest.normalization * val * math.exp(-shift))


# ----------------------------------------------------------------------------
# Bilinear-form evaluator


def _factor(Mw: np.ndarray, rtol: float = 1e-14):
    lam, V = np.linalg.eigh(Mw)
    keep = np.abs(lam) > rtol * max(np.abs(lam).max(), 1e-300)
    return lam[keep], V[:, keep]


@dataclass
class DensityForm:
    """Low-rank factorized momentum-space form of a one-event density."""

    k4: np.ndarray
    a: np.ndarray
    dark: float
    lam: np.ndarray | None
    C: np.ndarray | None
    lam_c: np.ndarray | None = None
    C_c: np.ndarray | None = None
    magnitude: float = 0.0
    axis_k: tuple | None = None

    def signal(self, points: np.ndarray, chunk: int = 1024) -> np.ndarray:
        points = np.atleast_2d(points)
        out = np.zeros(len(points))
        if self.C is None:
            return out
        for start in range(0, len(points), chunk):
            sl = slice(start, start + chunk)
            p = points[sl]
            kx = np.outer(p[:, 0], self.k4[:, 0]) - p[:, 1:] @ self.k4[:, 1:].T
            E = np.exp(-1j * kx)
            Z = E @ self.C
            val = (np.abs(Z) ** 2) @ self.lam
            if self.C_c is not None:
                Zc = E @ self.C_c
                val = val + 2.0 * np.real((Zc * Zc) @ self.lam_c)
            out[sl] = val
        return out

    def __call__(self, points: np.ndarray, chunk: int = 1024) -> np.ndarray:
        return self.dark + self.signal(points, chunk)

    def signal_tensor(self, t_vals: np.ndarray, space_axes: Sequence[np.ndarray], rank_chunk: int = 48) -> np.ndarray:
        """Signal on a tensor grid, contracting one momentum axis at a time.

        Requires tensor-product nodes; returns shape (len(t), len(x), ...).
        """
        if self.axis_k is None or len(space_axes) != len(self.axis_k):
            raise ValueError("tensor evaluation needs tensor-product nodes")
        n = len(self.axis_k[0])
        d = len(self.axis_k)
        shape = tuple(len(a) for a in space_axes)
        out = np.zeros((len(t_vals),) + shape)
        if self.C is None:
            return out
        # E_j[x, i_j] = exp(+i k_{i_j} x) along each spatial axis
        E = [np.exp(1j * np.outer(ax, kk)) for ax, kk in zip(space_axes, self.axis_k)]
        blocks = [(self.C, self.lam, False)]
        if self.C_c is not None:
            blocks.append((self.C_c, self.lam_c, True))
        for it, t in enumerate(t_vals):
            tphase = np.exp(-1j * self.k4[:, 0] * t)
            acc = np.zeros(shape)
            for C, lam, anomalous in blocks:
                for r0 in range(0, C.shape[1], rank_chunk):
                    Cr = C[:, r0:r0 + rank_chunk] * tphase[:, None]
                    G = Cr.reshape((n,) * d + (Cr.shape[1],))
                    # contract the last momentum axis first; the new spatial axis goes last
                    for j in reversed(range(d)):
                        G = np.moveaxis(np.tensordot(G, E[j], axes=([j], [1])), -1, j)
                    lr = lam[r0:r0 + rank_chunk]
                    if anomalous:
                        acc += 2.0 * np.real((G * G) @ lr)
                    else:
                        acc += (np.abs(G) ** 2) @ lr
            out[it] = acc
        return out


def _switch_transform(profile: SwitchingProfile, p: np.ndarray) -> np.ndarray:
    return np.exp(-0.25 * profile.delta_t**2 * p[..., 0] ** 2
                  - 0.25 * profile.delta_x**2 * np.sum(p[..., 1:] ** 2, axis=-1))


def build_form(source: FieldSource, state: FieldState, kernel, order: int | None = None,
               profile: SwitchingProfile | None = None) -> DensityForm:
    model = _base(source)
    if kernel.spatial_dim != model.spatial_dim:
        raise FieldError("kernel and field dimensions differ")
    K = kernel if profile is None else kernel.broadened(profile)
    dark = dark_rate(model, K)
    if state.kind is StateKind.VACUUM:
        return DensityForm(np.zeros((0, 1 + model.spatial_dim)), np.zeros(0), dark, None, None)
    nodes = amplitude_nodes(source, state, order)
    k4, a = nodes.k4, nodes.a
    w = np.abs(a)
    # high-order rules carry subnormal tail weights; a/|a| is unreliable there
    tiny = w <= 1e-150 * w.max()
    w = np.where(tiny, 0.0, w)
    u = np.where(tiny, 1.0, a / np.where(tiny, 1.0, w))
    S = 0.5 * (k4[:, None, :] + k4[None, :, :])
    M = K.spectral(S) + K.spectral(-S)
    if profile is not None:
        M = M * _switch_transform(profile, k4[:, None, :] - k4[None, :, :])
    Mw = w[:, None] * M * w[None, :]
    lam, V = _factor(Mw)
    C = V * u[:, None]
    form = DensityForm(k4, a, dark, lam, C, magnitude=float(np.abs(Mw).sum()), axis_k=nodes.axis_k)
    if state.kind is StateKind.COHERENT:
        Dm = 0.5 * (k4[:, None, :] - k4[None, :, :])
        Mc = 0.5 * (K.spectral(Dm) + K.spectral(-Dm))
        if profile is not None:
            Mc = Mc * _switch_transform(profile, k4[:, None, :] + k4[None, :, :])
        Mcw = w[:, None] * Mc * w[None, :]
        lc, Vc = _factor(Mcw)
        form.lam_c, form.C_c = lc, Vc * u[:, None]
        form.magnitude += 2 * float(np.abs(Mcw).sum())
    return form


@functools.lru_cache(maxsize=32)
def _cached_form(source, state, kernel, order, profile) -> DensityForm:
    return build_form(source, state, kernel, order, profile)


def density_form(source, state, kernel, order=None, profile=None) -> DensityForm:
    order = order or default_order(_base(source).spatial_dim)
    return _cached_form(source, state, kernel, order, profile)


def _error_order(source, order: int | None) -> int | None:
    if isinstance(source, ModeTruncation):
        return None
    order = order or default_order(source.spatial_dim)
    return max(order - (8 if source.spatial_dim == 1 else 2), 4)


@dataclass(frozen=True)
class DensityValue:
    value: float
    dark: float
    signal: float
    error: float

    def __float__(self) -> float:
        return self.value


def _flag_negative(values: np.ndarray, reference: float, tol: float = 1e-10) -> None:
    if reference > 0 and np.min(values) < -tol * reference:
        warnings.warn(f"density {np.min(values):.3e} below -{tol:g} x reference {reference:.3e}",
                      KernelModelWarning, stacklevel=3)


def qtp_p_terms(source, state, kernel, X, order=None, estimate_error: bool = True) -> DensityValue:
    form = density_form(source, state, kernel, order)
    pts = _pts(X)
    sig = float(form.signal(pts)[0])
    err = 0.0
    if estimate_error and state.kind is not StateKind.VACUUM:
        lo = _error_order(source, order)
        if lo is not None:
            err = abs(sig - float(density_form(source, state, kernel, lo).signal(pts)[0]))
    val = form.dark + sig
    _flag_negative(np.array([val]), form.dark + form.magnitude)
    return DensityValue(val, form.dark, sig, err)


def qtp_p(source: FieldSource, state: FieldState, kernel, X, order: int | None = None):
    """P(X) = int d^{1+d} xi K(xi) <psi|phi(X - xi/2) phi(X + xi/2)|psi>.

    Accepts a single point (returns float) or an (M, 1+d) array.
    """
    if isinstance(X, SpacetimePoint):
        return qtp_p_terms(source, state, kernel, X, order, estimate_error=False).value
    form = density_form(source, state, kernel, order)
    return form(_pts(X))


def dark_count(source, kernel) -> float:
    return dark_rate(_base(source), kernel)


def qtp_prob_terms(source, state, kernel, profile: SwitchingProfile, X, order=None,
                   estimate_error: bool = True) -> DensityValue:
    check_scale_ordering(kernel, profile)
    ups = effective_volume(profile)
    form = density_form(source, state, kernel, order, profile)
    pts = _pts(X)
    sig = float(form.signal(pts)[0])
    err = 0.0
    if estimate_error and state.kind is not StateKind.VACUUM:
        lo = _error_order(source, order)
        if lo is not None:
            err = abs(sig - float(density_form(source, state, kernel, lo, profile).signal(pts)[0]))
    val = form.dark + sig
    _flag_negative(np.array([val]), form.dark + form.magnitude)
    return DensityValue(ups * val, ups * form.dark, ups * sig, ups * err)


def qtp_prob_excitation(source: FieldSource, state: FieldState, kernel, profile: SwitchingProfile, X,
                        order: int | None = None):
    """Prob(X) = int d^4Y1 d^4Y2 f(X-Y1) f(X-Y2) G(Y1, Y2) K(Y2 - Y1).

    The switching is Gaussian, so the double integral is exact in the same
    momentum-space form as P(X), with the kernel replaced by K sqrt(f) and the
    X-dependence smeared by F = f^2/upsilon.
    """
    if isinstance(X, SpacetimePoint):
        return qtp_prob_terms(source, state, kernel, profile, X, order, estimate_error=False).value
    check_scale_ordering(kernel, profile)
    return effective_volume(profile) * density_form(source, state, kernel, order, profile)(_pts(X))


# ----------------------------------------------------------------------------
# Grids


@dataclass
class ProbabilityGrid:
    """A density sampled on a tensor grid over (t, x[, y, z])."""

    axes: dict[str, np.ndarray]
    values: np.ndarray
    error: np.ndarray | None = None
    dark: np.ndarray | float = 0.0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.axes = {k: np.atleast_1d(np.asarray(v, dtype=float)) for k, v in self.axes.items()}
        shape = tuple(len(v) for v in self.axes.values())
        self.values = np.asarray(self.values, dtype=float).reshape(shape)
        if self.error is not None:
            self.error = np.asarray(self.error, dtype=float).reshape(shape)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes.values(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def cell_volume(self) -> float:
        vol = 1.0
        for v in self.axes.values():
            if len(v) > 1:
                vol *= float(v[1] - v[0])
        return vol

    def mass(self) -> float:
        return float(self.values.sum() * self.cell_volume())

    def normalized(self) -> "ProbabilityGrid":
        """Copy divided by the total grid mass (labelled in metadata)."""
        total = self.mass()
        if total <= 0:
            raise ValueError("cannot normalize a grid with non-positive mass")
        meta = dict(self.metadata, normalized=True, normalization_mass=total)
        err = None if self.error is None else self.error / total
        return ProbabilityGrid(dict(self.axes), self.values / total, err,
                               np.asarray(self.dark) / total, meta)

    def negativity(self) -> float:
        """min(value) / max(value); >= -1e-10 for a valid density."""
        vmax = float(self.values.max())
        return float(self.values.min()) / vmax if vmax > 0 else 0.0

    def rows(self):
        pts = self.points()
        vals = self.values.ravel()
        err = np.zeros_like(vals) if self.error is None else self.error.ravel()
        dark = np.broadcast_to(np.asarray(self.dark, dtype=float), self.shape).ravel()
        return pts, vals, err, dark

    def to_csv(self, path) -> None:
        from .io import write_csv

        pts, vals, err, dark = self.rows()
        header = list(self.axes) + ["value", "error", "dark"]
        write_csv(path, header, np.column_stack([pts, vals, err, dark]), self.metadata)

    def summary(self) -> dict:
        flat = self.values.ravel()
        imax = int(np.argmax(flat))
        pts = self.points()
        return {
            "shape": list(self.shape),
            "mass": self.mass(),
            "max": float(flat.max()),
            "min": float(flat.min()),
            "argmax": [float(v) for v in pts[imax]],
            "max_error": float(self.error.max()) if self.error is not None else 0.0,
            "dark": float(np.max(self.dark)),
            "metadata": self.metadata,
        }

    def to_json(self, path) -> None:
        from .io import write_json

        write_json(path, self.summary())


def grid_axes(spatial_dim: int, **axes) -> dict[str, np.ndarray]:
    names = AXIS_NAMES[: 1 + spatial_dim]
    unknown = set(axes) - set(names)
    if unknown:
        raise ValueError(f"unknown axes {sorted(unknown)} for spatial_dim={spatial_dim}")
    return {n: np.atleast_1d(np.asarray(axes.get(n, 0.0), dtype=float)) for n in names}


def qtp_p_grid(source, state, kernel, axes: dict, order=None, profile: SwitchingProfile | None = None,
               error_points: int = 0, threads: int = 1) -> ProbabilityGrid:
    """P (or Prob with ``profile``) on a tensor grid; optional sparse error probes."""
    model = _base(source)
    axes = grid_axes(model.spatial_dim, **axes)
    grid = ProbabilityGrid(axes, np.zeros(tuple(len(v) for v in axes.values())))
    pts = grid.points()
    form = density_form(source, state, kernel, order, profile)
    scale = effective_volume(profile) if profile is not None else 1.0
    if form.axis_k is not None and len(pts) > 4096:
        names = list(axes)
        vals = (form.dark + form.signal_tensor(axes[names[0]], [axes[n] for n in names[1:]])).ravel() * scale
    else:
        vals = _evaluate_chunks(form, pts, threads) * scale
    errs = np.zeros_like(vals)
    if error_points and state.kind is not StateKind.VACUUM:
        lo = _error_order(source, order)
        if lo is not None:
            low = density_form(source, state, kernel, lo, profile)
            idx = np.unique(np.linspace(0, len(pts) - 1, error_points).astype(int))
            e = np.abs(low.signal(pts[idx]) * scale - (vals[idx] - form.dark * scale))
            errs[:] = e.max()
    _flag_negative(vals, float(vals.max()))
    meta = {
        "quantity": "Prob" if profile is not None else "P",
        "order": order or default_order(model.spatial_dim),
        "rank": int(0 if form.lam is None else len(form.lam)),
    }
    return ProbabilityGrid(axes, vals, errs, form.dark * scale, meta)


def _evaluate_chunks(form: DensityForm, pts: np.ndarray, threads: int = 1, chunk: int = 1024) -> np.ndarray:
    starts = list(range(0, len(pts), chunk))
    if threads <= 1 or len(starts) < 2:
        return form(pts, chunk)
    from concurrent.futures import ThreadPoolExecutor

    out = np.empty(len(pts))
    with ThreadPoolExecutor(max_workers=threads) as ex:
        for s, v in zip(starts, ex.map(lambda s: form(pts[s:s + chunk], chunk), starts)):
            out[s:s + chunk] = v
    return out


# ----------------------------------------------------------------------------
# Coarse graining


def coarse_grained_w(pgrid: ProbabilityGrid, profile: SwitchingProfile, coverage_tol: float = 1e-6) -> ProbabilityGrid:
    """W = F * P on the grid, F = f^2/upsilon, by separable Gaussian convolution.

    The per-axis weights are the sampled Gaussian normalized to unit sum, so
    the discrete mass is preserved up to what leaks over the grid boundary;
    the leaked fraction is recorded as ``mass_loss``.
    """
    if len(pgrid.axes) != 1 + profile.spatial_dim:
        raise ValueError("grid must span every spacetime axis")
    vals = pgrid.values.astype(float)
    widths = [profile.delta_t] + [profile.delta_x] * profile.spatial_dim
    for axis, (name, coords) in enumerate(pgrid.axes.items()):
        if len(coords) < 2:
            raise ValueError(f"axis {name!r} has a single sample; convolution needs coverage")
        h = float(coords[1] - coords[0])
        s = widths[axis] / math.sqrt(2.0)
        half = int(math.ceil(8 * s / h))
        u = h * np.arange(-half, half + 1)
        w = np.exp(-0.5 * (u / s) ** 2)
        w /= w.sum()
        vals = ndimage.convolve1d(vals, w, axis=axis, mode="constant", cval=0.0)
    edge = 0.0
    pmax = float(np.abs(pgrid.values).max())
    for axis in range(vals.ndim):
        for sl in (0, -1):
            face = np.take(pgrid.values, sl, axis=axis)
            edge = max(edge, float(np.abs(face).max()) / pmax if pmax else 0.0)
    before = pgrid.mass()
    out = ProbabilityGrid(dict(pgrid.axes), vals, None, pgrid.dark,
                          dict(pgrid.metadata, quantity="W", delta_t=profile.delta_t, delta_x=profile.delta_x))
    loss = abs(before - out.mass()) / abs(before) if before else 0.0
    out.metadata["mass_loss"] = loss
    out.metadata["edge_fraction"] = edge
    if edge > coverage_tol:
        warnings.warn(f"grid edge carries {edge:.2e} of max P; W mass may be lost", RuntimeWarning, stacklevel=2)
    return out


def coarse_grained_w_at(source, state, kernel, profile: SwitchingProfile, X, order=None, quad_order: int = 10) -> float:
    """W(X) by tensor Gauss-Hermite quadrature of int F(X - X') P(X') d^4X'."""
    x0 = _pts(X)[0]
    d = profile.spatial_dim
    z, w = hermite_rule(quad_order)
    mesh = np.meshgrid(*([z] * (1 + d)), indexing="ij")
    wmesh = np.meshgrid(*([w] * (1 + d)), indexing="ij")
    Z = np.stack([m.ravel() for m in mesh], axis=-1)
    Wt = np.prod(np.stack([m.ravel() for m in wmesh], axis=-1), axis=-1)
    # F has standard deviation delta/sqrt(2) per axis: X' = X + delta * z
    scale = np.array([profile.delta_t] + [profile.delta_x] * d)
    pts = x0 + Z * scale
    vals = density_form(source, state, kernel, order)(pts)
    return float(np.sum(Wt * vals) / math.pi ** ((1 + d) / 2))


# ----------------------------------------------------------------------------
# Joint densities


@dataclass(frozen=True)
class JointValue:
    value: float
    error: float
    local: float
    connected: float
    samples: int

    def __float__(self) -> float:
        return self.value


def _local_product(source, state, kernels, points, order) -> float:
    (k1, k2), (X1, X2) = kernels, points
    p1 = qtp_p_terms(source, state, k1, X1, order, estimate_error=False)
    p2 = qtp_p_terms(source, state, k2, X2, order, estimate_error=False)
    if state.kind is StateKind.VACUUM:
        return p1.dark * p2.dark
    if state.kind is StateKind.COHERENT:
        return p1.value * p2.value
    # a single excitation cannot be absorbed by both detectors
    return p1.value * p2.value - p1.signal * p2.signal


def connected_mc(source, state, k1: DetectorKernel, k2: DetectorKernel, X1: np.ndarray, X2: np.ndarray,
                 samples: int, rng: np.random.Generator, strata: int = 16, eps: float | None = None,
                 order: int | None = None, batch: int = 20000) -> tuple[float, float]:
    """Connected part of P_2 by Gaussian importance sampling over (Y1, Y2).

    The time component of Y1 is stratified into ``strata`` equal-probability
    bins; the returned error is the stratified standard error.
    """
    per = max(samples // strata, 2)
    means = np.zeros(strata)
    varis = np.zeros(strata)
    for h in range(strata):
        acc = []
        remaining = per
        while remaining > 0:
            nb = min(batch, remaining)
            u = (h + rng.random(nb)) / strata
            Y1, w1 = k1.envelope_sample(rng, nb, strata=u)
            Y2, w2 = k2.envelope_sample(rng, nb)
            anti = [X1 - 0.5 * Y1, X2 - 0.5 * Y2]
            ordered = [X1 + 0.5 * Y1, X2 + 0.5 * Y2]
            g = g2n_samples(source, state, anti, ordered, eps=eps, order=order,
                            clusters=[0, 1, 0, 1], part="connected")
            acc.append(np.real(w1 * w2 * g))
            remaining -= nb
        vals = np.concatenate(acc)
        means[h] = vals.mean()
        varis[h] = vals.var(ddof=1) / len(vals)
    value = float(means.mean())
    error = float(math.sqrt(varis.sum()) / strata)
    return value, error


def qtp_joint(source: FieldSource, state: FieldState, kernels: Sequence, points: Sequence[SpacetimePoint],
              order: int | None = None, samples: int = 64000, seed: int = 0, point_index: int = 0,
              tolerance: float | None = None, eps: float | None = None, strata: int = 16) -> JointValue:
    """P_n for n in {1, 2}.

    n = 2 splits G_4 by cluster (detector) labels: the intra-detector terms
    integrate in closed form to products of one-event quantities, and the
    remaining connected terms, which contain only inter-detector propagators,
    are integrated by stratified importance sampling. The random stream is
    derived from (seed, point_index).

    ``tolerance`` bounds the standard error relative to |P_2|.
    """
    n = len(points)
    if n != len(kernels):
        raise ValueError("one kernel per detection point")
    if n == 1:
        v = qtp_p(source, state, kernels[0], points[0], order)
        return JointValue(v, 0.0, v, 0.0, 0)
    if n != 2:
        raise ValueError("joint densities are implemented for n <= 2")
    k1, k2 = kernels
    if isinstance(k1, KernelMixture) or isinstance(k2, KernelMixture):
        # P_2 is bilinear in the two spectral densities
        c1 = k1.components if isinstance(k1, KernelMixture) else ((1.0, k1),)
        c2 = k2.components if isinstance(k2, KernelMixture) else ((1.0, k2),)
        parts = [(w1 * w2, qtp_joint(source, state, [a, b], points, order, samples, seed,
                                     point_index * 1000 + 31 * i + j, None, eps, strata))
                 for i, (w1, a) in enumerate(c1) for j, (w2, b) in enumerate(c2)]
        val = sum(w * p.value for w, p in parts)
        err = math.sqrt(sum((w * p.error) ** 2 for w, p in parts))
        return JointValue(val, err, sum(w * p.local for w, p in parts),
                          sum(w * p.connected for w, p in parts), sum(p.samples for _, p in parts))
    local = _local_product(source, state, (k1, k2), points, order)
    rng = np.random.default_rng(np.random.SeedSequence([seed, point_index]))
    X1, X2 = (p.as_array()[None, :] for p in points)
    conn, err = connected_mc(source, state, k1, k2, X1, X2, samples, rng, strata, eps, order)
    value = local + conn
    if tolerance is not None and err > tolerance * max(abs(value), 1e-300):
        raise MonteCarloToleranceError(f"standard error {err:.3e} exceeds tolerance {tolerance:g} x |P2|")
    return JointValue(value, err, local, conn, strata * max(samples // strata, 2))
