"""Scenario files: YAML documents validated into typed configurations and run."""

from __future__ import annotations

import hashlib
import json
import warnings
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from . import __version__
from .baseline import Inertial, UdwDetector, UniformAcceleration, glauber_p, udw_response
from .causality import factorization_sweep, fermi_two_atom, tail_scan
from .detectors import (
    DetectorKernel,
    ScaleOrderingWarning,
    SwitchingProfile,
    check_scale_ordering,
    effective_volume,
    effective_volume_quadrature,
    switching_identity_check,
)
from .field import FieldError, FieldModel, FieldState, ModeTruncation, SpacetimePoint, Wavepacket
from .io import dumps, write_csv, write_json
from .qtp import MonteCarloToleranceError, qtp_joint, qtp_p_grid, qtp_prob_terms
from .wick import TruncationError, g2n, oracle_g2n

EXIT_OK, EXIT_PARSE, EXIT_NUMERICS, EXIT_INVARIANT = 0, 2, 3, 4


class ScenarioError(Exception):
    exit_code = EXIT_PARSE


class ScenarioSyntaxError(ScenarioError):
    pass


class ScenarioSchemaError(ScenarioError):
    pass


class ScenarioInvariantError(ScenarioError):
    exit_code = EXIT_INVARIANT


class NumericsError(ScenarioError):
    exit_code = EXIT_NUMERICS


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


# ----------------------------------------------------------------------------
# Schema


class FieldBlock(_Strict):
    mass: float = 1.0
    spatial_dim: Literal[1, 3] = 3


class StateBlock(_Strict):
    kind: Literal["vacuum", "one_particle", "coherent"] = "vacuum"
    momentum: Optional[list[float]] = None
    width: Optional[float] = None
    position: Optional[list[float]] = None
    alpha: tuple[float, float] = (1.0, 0.0)


class KernelDetector(_Strict):
    type: Literal["kernel"]
    gap: float
    sigma_E: float
    sigma_p: float
    velocity: Optional[list[float]] = None


class TrajectoryBlock(_Strict):
    kind: Literal["inertial", "uniform_acceleration"] = "inertial"
    velocity: Optional[list[float]] = None
    acceleration: Optional[float] = None


class UdwBlock(_Strict):
    type: Literal["udw"]
    gap: float
    width: float
    trajectory: TrajectoryBlock = TrajectoryBlock()


class GlauberBlock(_Strict):
    type: Literal["glauber"]


Detector = Annotated[Union[KernelDetector, UdwBlock, GlauberBlock], Field(discriminator="type")]


class SwitchingBlock(_Strict):
    delta_t: float
    delta_x: float


class AxisSpec(_Strict):
    start: float
    stop: float
    num: int

    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.num)


Axis = Union[float, list[float], AxisSpec]


class GridBlock(_Strict):
    t: Axis = 0.0
    x: Axis = 0.0
    y: Axis = 0.0
    z: Axis = 0.0


class PointDensity(_Strict):
    type: Literal["point_density"]


class Excitation(_Strict):
    type: Literal["excitation"]


class Joint(_Strict):
    type: Literal["joint"]
    points: list[list[float]]


class FactorizationSweepBlock(_Strict):
    type: Literal["factorization_sweep"]
    x1: list[float]
    separations: list[float]
    time_offset: float = 0.0


class TailScanBlock(_Strict):
    type: Literal["tail_scan"]
    masses: Optional[list[float]] = None


class FermiBlock(_Strict):
    type: Literal["fermi"]
    separation: float
    times: list[float]
    edge: Optional[float] = None


class UdwResponseBlock(_Strict):
    type: Literal["udw_response"]


class ValidateBlock(_Strict):
    type: Literal["validate"]


Experiment = Annotated[
    Union[PointDensity, Excitation, Joint, FactorizationSweepBlock, TailScanBlock, FermiBlock,
          UdwResponseBlock, ValidateBlock],
    Field(discriminator="type"),
]


class NumericsBlock(_Strict):
    seed: int = 0
    tolerance: float = 1e-3
    mc_tolerance: float = 1e-3
    order: Optional[int] = None
    samples: int = 32000
    threads: int = 1

    @field_validator("seed")
    @classmethod
    def _seed_range(cls, v):
        if not 0 <= v < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        return v


class OutputBlock(_Strict):
    dir: Optional[str] = None
    formats: list[Literal["csv", "json"]] = ["csv", "json"]
    prefix: Optional[str] = None


class Scenario(_Strict):
    name: str = "scenario"
    field: FieldBlock = FieldBlock()
    state: StateBlock = StateBlock()
    detectors: list[Detector] = []
    switching: Optional[SwitchingBlock] = None
    experiment: Experiment
    grid: GridBlock = GridBlock()
    numerics: NumericsBlock = NumericsBlock()
    output: OutputBlock = OutputBlock()

    # non-schema attachments
    def canonical(self) -> dict:
        return self.model_dump(mode="json")

    @property
    def scenario_id(self) -> str:
        text = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.canonical(), sort_keys=True)


# ----------------------------------------------------------------------------
# Parsing and construction


def parse_scenario(text: str) -> tuple[Scenario, list[str]]:
    """Validate a YAML document; returns the scenario and physical-consistency warnings."""
    try:
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ScenarioSyntaxError(f"syntax error at {where}: {exc.problem}") from exc
    if not isinstance(data, dict):
        raise ScenarioSyntaxError("scenario must be a mapping")
    try:
        sc = Scenario.model_validate(data)
    except ValidationError as exc:
        msgs = ["/".join(str(p) for p in e["loc"]) + ": " + e["msg"] for e in exc.errors()]
        raise ScenarioSchemaError("; ".join(msgs)) from exc
    return sc, physical_checks(sc)


def load_scenario(path) -> tuple[Scenario, list[str]]:
    return parse_scenario(Path(path).read_text())


def build_model(sc: Scenario) -> FieldModel:
    try:
        return FieldModel(sc.field.mass, sc.field.spatial_dim)
    except FieldError as exc:
        raise ScenarioInvariantError(f"field: {exc}") from exc


def build_state(sc: Scenario) -> FieldState:
    st = sc.state
    if st.kind == "vacuum":
        return FieldState.vacuum()
    d = sc.field.spatial_dim
    for key in ("momentum", "position"):
        v = getattr(st, key)
        if v is not None and len(v) != d:
            raise ScenarioInvariantError(f"state/{key}: expected {d} components, got {len(v)}")
    try:
        packet = Wavepacket(tuple(st.momentum or [0.0] * d), st.width if st.width is not None else 0.3,
                            tuple(st.position or [0.0] * d))
    except FieldError as exc:
        raise ScenarioInvariantError(f"state: {exc}") from exc
    if st.kind == "one_particle":
        return FieldState.one_particle(packet)
    return FieldState.coherent(packet, complex(*st.alpha))


def build_kernels(sc: Scenario) -> list[DetectorKernel]:
    out = []
    for i, det in enumerate(sc.detectors):
        if isinstance(det, KernelDetector):
            try:
                out.append(DetectorKernel(det.gap, det.sigma_E, det.sigma_p, sc.field.spatial_dim,
                                          tuple(det.velocity) if det.velocity else None))
            except ValueError as exc:
                raise ScenarioInvariantError(f"detectors/{i}: {exc}") from exc
    return out


def build_udw(sc: Scenario):
    out = []
    for i, det in enumerate(sc.detectors):
        if isinstance(det, UdwBlock):
            tr = det.trajectory
            try:
                if tr.kind == "inertial":
                    traj = Inertial(tuple(tr.velocity or [0.0] * sc.field.spatial_dim))
                else:
                    traj = UniformAcceleration(tr.acceleration if tr.acceleration is not None else 1.0)
                out.append((traj, UdwDetector(det.gap, det.width)))
            except FieldError as exc:
                raise ScenarioInvariantError(f"detectors/{i}: {exc}") from exc
    return out


def build_profile(sc: Scenario) -> SwitchingProfile | None:
    if sc.switching is None:
        return None
    try:
        return SwitchingProfile(sc.switching.delta_t, sc.switching.delta_x, spatial_dim=sc.field.spatial_dim)
    except ValueError as exc:
        raise ScenarioInvariantError(f"switching: {exc}") from exc


def physical_checks(sc: Scenario) -> list[str]:
    """Construct every physical object (raising on invariant violations) and collect warnings."""
    build_model(sc)
    build_state(sc)
    kernels = build_kernels(sc)
    build_udw(sc)
    profile = build_profile(sc)
    notes = []
    if profile is not None:
        for k in kernels:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ScaleOrderingWarning)
                notes.extend(check_scale_ordering(k, profile))
    return notes


def grid_axes_of(sc: Scenario) -> dict[str, np.ndarray]:
    names = ("t", "x", "y", "z")[: 1 + sc.field.spatial_dim]
    axes = {}
    for n in names:
        spec = getattr(sc.grid, n)
        if isinstance(spec, AxisSpec):
            axes[n] = spec.values()
        else:
            axes[n] = np.atleast_1d(np.asarray(spec, dtype=float))
    return axes


# ----------------------------------------------------------------------------
# Running


def _meta(sc: Scenario, notes: list[str]) -> dict:
    return {
        "scenario_id": sc.scenario_id,
        "tool_version": __version__,
        "numerics": sc.numerics.model_dump(mode="json"),
        "warnings": notes,
    }


def _need(items, what: str, n: int = 1):
    if len(items) < n:
        raise ScenarioInvariantError(f"experiment needs {n} {what} detector(s)")
    return items


def run_validate(sc: Scenario) -> tuple[dict, bool]:
    """Invariant self-test suite; returns per-item results and overall pass."""
    rng = np.random.default_rng(sc.numerics.seed)
    d = sc.field.spatial_dim
    results = {}
    kernels = build_kernels(sc) or [DetectorKernel(1.0, 1.0, 1.0, d)]
    worst_k0 = max(abs(k.position(np.zeros(1 + d)) - 1.0) for k in kernels)
    results["kernel_normalization"] = {"residual": float(worst_k0), "pass": bool(worst_k0 <= 1e-10)}
    prof = build_profile(sc) or SwitchingProfile(1.0, 1.0, spatial_dim=d)
    span = 3 * np.array([prof.delta_t] + [prof.delta_x] * d)
    A = rng.uniform(-1, 1, (200, 1 + d)) * span
    B = rng.uniform(-1, 1, (200, 1 + d)) * span
    res = float(np.max(switching_identity_check(prof, A, B)))
    results["switching_identity"] = {"residual": res, "pass": res <= 1e-12}
    rel = abs(effective_volume_quadrature(prof) / effective_volume(prof) - 1)
    results["effective_volume"] = {"relative_error": rel, "pass": rel <= 1e-6}
    model = FieldModel(sc.field.mass if sc.field.mass > 0 else 1.0, 3)
    tr = ModeTruncation(model, [(0.3, 0.0, 0.1), (-0.4, 0.2, 0.0)], [0.5, 0.8], n_max=6)
    worst = 0.0
    for _ in range(5):
        pts = [SpacetimePoint(rng.normal(), tuple(rng.normal(size=3))) for _ in range(4)]
        w = g2n(tr, FieldState.vacuum(), pts[:2], pts[2:])
        o = oracle_g2n(tr, FieldState.vacuum(), pts[:2], pts[2:])
        worst = max(worst, abs(w - o) / abs(o))
    results["wick_oracle"] = {"relative_error": worst, "pass": worst <= 1e-8}
    return results, all(v["pass"] for v in results.values())


def run_scenario(sc: Scenario, out_dir, notes: list[str] | None = None) -> tuple[int, dict]:
    """Execute the experiment and write outputs; returns (exit code, summary)."""
    notes = list(notes or [])
    out_dir = Path(out_dir)
    prefix = sc.output.prefix or sc.name
    stem = out_dir / f"{prefix}_{sc.scenario_id}"
    exp = sc.experiment
    meta = _meta(sc, notes)
    model, state = build_model(sc), build_state(sc)
    num = sc.numerics
    summary: dict = {"experiment": exp.type, **meta, "scenario": sc.canonical()}
    code = EXIT_OK
    header, rows = None, None
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ScaleOrderingWarning)
            if exp.type in ("point_density", "excitation"):
                kernel = _need(build_kernels(sc), "kernel")[0]
                profile = build_profile(sc) if exp.type == "excitation" else None
                if exp.type == "excitation" and profile is None:
                    raise ScenarioInvariantError("excitation needs a switching block")
                grid = qtp_p_grid(model, state, kernel, grid_axes_of(sc), num.order, profile,
                                  error_points=8, threads=num.threads)
                grid.metadata.update(meta)
                summary["result"] = grid.summary()
                if grid.negativity() < -1e-10:
                    summary["result"]["negativity_flag"] = True
                # order-halving error estimate against the requested relative tolerance
                err = 0.0 if grid.error is None else float(grid.error.max())
                if err > num.tolerance * np.abs(grid.values).max():
                    notes.append(f"quadrature error {err:.2e} exceeds tolerance "
                                 f"{num.tolerance:g} x max; raise numerics.order")
                    summary["result"]["unconverged"] = True
                pts, vals, err, dark = grid.rows()
                header = list(grid.axes) + ["value", "error", "dark"]
                rows = np.column_stack([pts, vals, err, dark])
            elif exp.type == "joint":
                kernels = _need(build_kernels(sc), "kernel", len(exp.points))
                pts = [SpacetimePoint(p[0], tuple(p[1:])) for p in exp.points]
                jv = qtp_joint(model, state, kernels[: len(pts)], pts, num.order, num.samples, num.seed,
                               tolerance=num.mc_tolerance)
                summary["result"] = {"value": jv.value, "error": jv.error, "local": jv.local,
                                     "connected": jv.connected, "samples": jv.samples}
                header = ["value", "error", "local", "connected"]
                rows = np.array([[jv.value, jv.error, jv.local, jv.connected]])
            elif exp.type == "factorization_sweep":
                kernels = _need(build_kernels(sc), "kernel", 2)
                X1 = SpacetimePoint(exp.x1[0], tuple(exp.x1[1:]))
                sw = factorization_sweep(model, state, kernels[:2], X1, exp.separations,
                                         time_offset=exp.time_offset, samples=num.samples,
                                         seed=num.seed, order=num.order)
                header, rows = sw.rows()
                summary["result"] = {"max_delta": float(sw.deltas().max()), "records": len(sw.records)}
            elif exp.type == "tail_scan":
                kernel = _need(build_kernels(sc), "kernel")[0]
                axes = grid_axes_of(sc)
                masses = exp.masses or [sc.field.mass]
                header = ["mass", "t", "x", "glauber", "qtp_signal", "exterior"]
                blocks, reports = [], {}
                for m in masses:
                    rep = tail_scan(FieldModel(m, sc.field.spatial_dim), state, kernel, axes["t"], axes["x"],
                                    num.order)
                    T, X = np.meshgrid(rep.t, rep.x, indexing="ij")
                    blocks.append(np.column_stack([np.full(T.size, m), T.ravel(), X.ravel(), rep.glauber.ravel(),
                                                   rep.qtp.ravel(), rep.exterior.ravel().astype(float)]))
                    reports[repr(m)] = rep.summary
                rows = np.vstack(blocks)
                summary["result"] = reports
            elif exp.type == "fermi":
                atoms = _need(build_udw(sc), "udw", 2)
                rep = fermi_two_atom(model, exp.separation, atoms[0][1], atoms[1][1], exp.times, edge=exp.edge)
                header = ["t", "probability"]
                rows = np.column_stack([rep.times, rep.probability])
                summary["result"] = rep.summary
            elif exp.type == "udw_response":
                atoms = _need(build_udw(sc), "udw")
                header = ["gap", "width", "response", "regulator_sensitivity"]
                vals = []
                for traj, det in atoms:
                    r = udw_response(model, traj, det)
                    vals.append([det.gap, det.width, r.value, r.regulator_sensitivity])
                rows = np.array(vals)
                summary["result"] = {"responses": [v[2] for v in vals]}
            elif exp.type == "validate":
                results, ok = run_validate(sc)
                summary["result"] = results
                header = ["item", "pass"]
                rows = np.array([[i, float(v["pass"])] for i, v in enumerate(results.values())])
                if not ok:
                    code = EXIT_INVARIANT
    except (MonteCarloToleranceError, TruncationError) as exc:
        raise NumericsError(str(exc)) from exc
    except FieldError as exc:
        raise ScenarioInvariantError(str(exc)) from exc
    except FloatingPointError as exc:
        raise NumericsError(str(exc)) from exc
    if rows is not None and "csv" in sc.output.formats:
        write_csv(stem.with_suffix(".csv"), header, rows, meta)
        summary["csv"] = str(stem.with_suffix(".csv"))
    if "json" in sc.output.formats:
        write_json(stem.with_suffix(".json"), summary)
    return code, summary


def set_path(data: dict, dotted: str, value) -> dict:
    """Copy of nested ``data`` with ``dotted`` key path replaced by ``value``."""
    out = json.loads(json.dumps(data))
    node = out
    keys = dotted.split(".")
    for k in keys[:-1]:
        if isinstance(node, list):
            node = node[int(k)]
        else:
            # defaulted blocks may be absent from the file
            node = node.setdefault(k, {})
    last = keys[-1]
    if isinstance(node, list):
        node[int(last)] = value
    else:
        node[last] = value
    return out


def echo(sc: Scenario) -> str:
    return dumps(sc.canonical())
