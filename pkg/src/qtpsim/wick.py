"""Mixed anti-time-ordered / time-ordered correlators via Wick contraction.

G_2n(X_1..X_n ; X'_1..X'_n) = <psi| A[phi(X_1)..phi(X_n)] T[phi(X'_1)..phi(X'_n)] |psi>

Because every A-ordered operator sits literally to the left of every T-ordered
one, a contraction between the two blocks is a plain Wightman function with the
anti-ordered point first. Inside A the earlier time stands to the left, inside
T the later time does.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from scipy import sparse

from .field import (
    FieldError,
    FieldSource,
    FieldState,
    ModeTruncation,
    SpacetimePoint,
    StateKind,
    mean_field,
    state_amplitude,
    vacuum_wightman,
    vacuum_wightman_array,
)


class Branch(enum.Enum):
    ANTI = "anti"
    ORDERED = "ordered"


@dataclass(frozen=True)
class BranchPoint:
    point: SpacetimePoint
    branch: Branch


class TruncationError(FieldError):
    """The truncated Fock space cannot represent the requested matrix element."""


def perfect_matchings(indices: Sequence[int]) -> Iterator[list[tuple[int, int]]]:
    """All pairings of ``indices``, pairing the first index with each later one."""
    indices = list(indices)
    if not indices:
        yield []
        return
    first, rest = indices[0], indices[1:]
    for pos, partner in enumerate(rest):
        remaining = rest[:pos] + rest[pos + 1:]
        for sub in perfect_matchings(remaining):
            yield [(first, partner)] + sub


def double_factorial(n: int) -> int:
    return math.prod(range(n, 0, -2)) if n > 0 else 1


def branch_points(anti: Sequence[SpacetimePoint], ordered: Sequence[SpacetimePoint]) -> list[BranchPoint]:
    if len(anti) != len(ordered):
        raise ValueError("G_2n needs as many anti-ordered as ordered points")
    return [BranchPoint(p, Branch.ANTI) for p in anti] + [BranchPoint(p, Branch.ORDERED) for p in ordered]


def ordered_pair(b1: BranchPoint, b2: BranchPoint) -> tuple[SpacetimePoint, SpacetimePoint]:
    """Operator order of a contracted pair; b1 precedes b2 in the argument list."""
    if b1.branch is Branch.ANTI and b2.branch is Branch.ORDERED:
        return b1.point, b2.point
    if b1.branch is Branch.ORDERED and b2.branch is Branch.ANTI:
        return b2.point, b1.point
    t1, t2 = b1.point.t, b2.point.t
    if t1 == t2:
        # equal times: the two operators commute at spacelike separation
        return b1.point, b2.point
    earlier, later = (b1.point, b2.point) if t1 < t2 else (b2.point, b1.point)
    if b1.branch is Branch.ANTI:
        return earlier, later
    return later, earlier


def branch_propagator(source: FieldSource, b1: BranchPoint, b2: BranchPoint, eps: float | None = None) -> complex:
    """G_D, G_F or the cross-branch Wightman function for the vacuum."""
    X, Y = ordered_pair(b1, b2)
    return vacuum_wightman(source, X, Y, eps)


def wightman_samples(source: FieldSource, A: np.ndarray, B: np.ndarray, eps: float | None = None) -> np.ndarray:
    """Vacuum <phi(A) phi(B)> for row-aligned point arrays of shape (S, 1+d)."""
    D = A - B
    if isinstance(source, ModeTruncation):
        k4 = source.four_momenta()
        kx = np.outer(D[:, 0], k4[:, 0]) - D[:, 1:] @ k4[:, 1:].T
        return np.exp(-1j * kx) @ np.array(source.weights)
    return vacuum_wightman_array(source, D[:, 0], np.linalg.norm(D[:, 1:], axis=1), eps)


def _check_request(state: FieldState, n: int) -> None:
    if state.kind is StateKind.ONE_PARTICLE and n > 2:
        raise FieldError("one-particle correlators are supported only for n <= 2")


class _Contractor:
    """Recursive contraction sum over sample arrays with memoized propagators.

    ``pts`` holds one (S, 1+d) array per insertion; every quantity is a length-S
    vector, so a single point configuration is simply S = 1.
    """

    def __init__(self, source, state, branches, pts, eps, order, clusters, part):
        self.source = source
        self.branches = branches
        self.pts = pts
        self.eps = eps
        self.clusters = clusters
        self.part = part
        self._prop: dict[tuple[int, int], np.ndarray] = {}
        self.m = len(pts)
        S = len(pts[0])
        self.mean = self.f = self.fbar = None
        if state.kind is not StateKind.VACUUM:
            stacked = np.concatenate(pts, axis=0)
            if state.kind is StateKind.COHERENT:
                self.mean = np.asarray(mean_field(source, state, stacked, order)).reshape(self.m, S)
            else:
                amp = np.asarray(state_amplitude(source, state, stacked, order)).reshape(self.m, S)
                self.f, self.fbar = amp, np.conj(amp)
        self.S = S

    def cross(self, i: int, j: int) -> bool:
        return self.clusters is not None and self.clusters[i] != self.clusters[j]

    def prop(self, i: int, j: int) -> np.ndarray:
        key = (i, j)
        if key in self._prop:
            return self._prop[key]
        bi, bj = self.branches[i], self.branches[j]
        Pi, Pj = self.pts[i], self.pts[j]
        if bi is Branch.ANTI and bj is Branch.ORDERED:
            val = wightman_samples(self.source, Pi, Pj, self.eps)
        elif bi is Branch.ORDERED and bj is Branch.ANTI:
            val = wightman_samples(self.source, Pj, Pi, self.eps)
        else:
            w = wightman_samples(self.source, Pi, Pj, self.eps)
            # W(Pj, Pi) = conj W(Pi, Pj); ties keep the listed order
            first = Pi[:, 0] <= Pj[:, 0] if bi is Branch.ANTI else Pi[:, 0] >= Pj[:, 0]
            val = np.where(first, w, np.conj(w))
        self._prop[key] = val
        return val

    def vacuum_sum(self, idx: tuple[int, ...], crossed: bool):
        """Sum over pairings of idx (plus mean-field insertions for coherent states).

        ``crossed`` records whether a cross-cluster factor has already appeared.
        """
        if not idx:
            return self._select(crossed)
        first, rest = idx[0], idx[1:]
        total = np.zeros(self.S, dtype=complex)
        if self.mean is not None:
            total = total + self.mean[first] * self.vacuum_sum(rest, crossed)
        for pos, j in enumerate(rest):
            sub = rest[:pos] + rest[pos + 1:]
            c = crossed or self.cross(first, j)
            if self.part == "local" and c:
                continue
            total = total + self.prop(first, j) * self.vacuum_sum(sub, c)
        return total

    def _select(self, crossed: bool) -> float:
        if self.part == "all":
            return 1.0
        if self.part == "local":
            return 0.0 if crossed else 1.0
        return 1.0 if crossed else 0.0

    def total(self) -> np.ndarray:
        idx = tuple(range(self.m))
        val = self.vacuum_sum(idx, False)
        if self.f is not None:
            # one excitation: <0|b O b^dag|0>, with b contracted against one
            # field insertion and b^dag against another
            for i in idx:
                for j in idx:
                    if i == j:
                        continue
                    rest = tuple(k for k in idx if k not in (i, j))
                    val = val + self.fbar[i] * self.f[j] * self.vacuum_sum(rest, self.cross(i, j))
        return val


def g2n_samples(source: FieldSource, state: FieldState, anti: Sequence[np.ndarray], ordered: Sequence[np.ndarray],
                eps: float | None = None, order: int | None = None, clusters: Sequence[int] | None = None,
                part: str = "all") -> np.ndarray:
    """Vectorized :func:`g2n`: each entry of ``anti``/``ordered`` is an (S, 1+d) array."""
    if part not in ("all", "local", "connected"):
        raise ValueError(f"unknown part {part!r}")
    if len(anti) != len(ordered):
        raise ValueError("G_2n needs as many anti-ordered as ordered points")
    _check_request(state, len(anti))
    pts = [np.atleast_2d(np.asarray(p, dtype=float)) for p in list(anti) + list(ordered)]
    branches = [Branch.ANTI] * len(anti) + [Branch.ORDERED] * len(ordered)
    if clusters is not None and len(clusters) != len(pts):
        raise ValueError("need one cluster label per point")
    if part != "all" and clusters is None:
        raise ValueError("cluster labels required for a partial sum")
    return _Contractor(source, state, branches, pts, eps, order, clusters, part).total()


def g2n(source: FieldSource, state: FieldState, anti: Sequence[SpacetimePoint], ordered: Sequence[SpacetimePoint],
        eps: float | None = None, order: int | None = None, clusters: Sequence[int] | None = None,
        part: str = "all") -> complex:
    """Mixed-ordered 2n-point function by branch-aware Wick contraction.

    ``clusters`` labels each of the 2n points (anti first, then ordered). With
    ``part='local'`` only terms whose contractions stay inside clusters are kept;
    ``part='connected'`` keeps the complement. Mean-field factors count as local.
    """
    branch_points(anti, ordered)
    val = g2n_samples(source, state, [p.as_array()[None, :] for p in anti],
                      [p.as_array()[None, :] for p in ordered], eps, order, clusters, part)
    return complex(val[0])


def matching_count(n: int) -> int:
    return sum(1 for _ in perfect_matchings(range(2 * n)))


# ----------------------------------------------------------------------------
# Truncated Fock-space oracle


def _mode_ops(n_modes: int, n_max: int) -> list[sparse.csr_matrix]:
    dim = n_max + 1
    lower = sparse.diags(np.sqrt(np.arange(1, dim)), 1, shape=(dim, dim), format="csr")
    eye = sparse.identity(dim, format="csr")
    ops = []
    for j in range(n_modes):
        op = sparse.identity(1, format="csr")
        for k in range(n_modes):
            op = sparse.kron(op, lower if k == j else eye, format="csr")
        ops.append(op)
    return ops


def _fock_state(truncation: ModeTruncation, state: FieldState) -> tuple[np.ndarray, list[np.ndarray]]:
    """State vector and per-mode occupation distributions."""
    M, N = truncation.n_modes, truncation.n_max
    levels = np.arange(N + 1)
    vac = np.zeros(N + 1)
    vac[0] = 1.0
    if state.kind is StateKind.VACUUM:
        factors = [vac.astype(complex)] * M
        vec = factors[0]
        for f in factors[1:]:
            vec = np.kron(vec, f)
        return vec, [np.abs(f) ** 2 for f in factors]
    if state.mode_amplitudes is None or len(state.mode_amplitudes) != M:
        raise FieldError("oracle needs one amplitude per truncated mode")
    amps = state.mode_amplitudes
    if state.kind is StateKind.COHERENT:
        from scipy.special import gammaln

        factors = []
        for a in amps:
            logmag = -0.5 * abs(a) ** 2 + levels * np.log(abs(a) if a != 0 else 1.0) - 0.5 * gammaln(levels + 1)
            c = np.exp(logmag) * np.exp(1j * np.angle(a) * levels)
            if a == 0:
                c = vac.astype(complex)
            factors.append(c)
        vec = factors[0]
        for f in factors[1:]:
            vec = np.kron(vec, f)
        return vec, [np.abs(f) ** 2 for f in factors]
    # one excitation spread over modes
    vec = np.zeros((N + 1) ** M, dtype=complex)
    pops = [np.zeros(N + 1) for _ in range(M)]
    for j, c in enumerate(amps):
        idx = 0
        for k in range(M):
            idx = idx * (N + 1) + (1 if k == j else 0)
        vec[idx] += c
        pops[j][1] += abs(c) ** 2
        for k in range(M):
            if k != j:
                pops[k][0] += abs(c) ** 2
    return vec, pops


def fock_field_operator(truncation: ModeTruncation, X: SpacetimePoint, ops=None) -> sparse.csr_matrix:
    ops = ops or _mode_ops(truncation.n_modes, truncation.n_max)
    k4 = truncation.four_momenta()
    x = X.as_array()
    phase = np.exp(-1j * (k4[:, 0] * x[0] - k4[:, 1:] @ x[1:]))
    phi = None
    for j, a in enumerate(ops):
        term = math.sqrt(truncation.weights[j]) * (phase[j] * a + np.conj(phase[j]) * a.getH())
        phi = term if phi is None else phi + term
    return phi.tocsr()


def oracle_g2n(truncation: ModeTruncation, state: FieldState, anti: Sequence[SpacetimePoint],
               ordered: Sequence[SpacetimePoint], overflow_tol: float = 1e-10) -> complex:
    """<psi|A[..]T[..]|psi> by literal operator products in a truncated Fock space."""
    if truncation.n_modes > 4 or truncation.n_max > 6:
        raise ValueError("oracle supports at most 4 modes truncated at occupation 6")
    n = len(anti)
    if len(ordered) != n:
        raise ValueError("G_2n needs as many anti-ordered as ordered points")
    vec, pops = _fock_state(truncation, state)
    cutoff = truncation.n_max + 1 - n
    overflow = max(float(p[max(cutoff, 0):].sum()) for p in pops)
    if overflow > overflow_tol:
        raise TruncationError(f"truncated Fock space loses weight {overflow:.3g} > {overflow_tol:g}")
    ops = _mode_ops(truncation.n_modes, truncation.n_max)

    def apply_sorted(points: Sequence[SpacetimePoint]) -> np.ndarray:
        # both T[..]|psi> and (A[..])^dag|psi> apply the earliest operator first
        v = vec
        for p in sorted(points, key=lambda P: P.t):
            v = fock_field_operator(truncation, p, ops) @ v
        return v

    right = apply_sorted(ordered)
    left = apply_sorted(anti)
    return complex(np.vdot(left, right))


