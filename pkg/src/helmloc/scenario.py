"""Scenario files, synthetic measurements and the experiment runners.

A scenario is an INI file.  Sections and keys (defaults in brackets)::

    [scenario]    name
    [domain]      extent [4 4], level [6], data_level_offset [1]
    [boundary]    left, right, bottom, top  (N or Z)
    [acoustics]   speed_of_sound [345], frequencies_hz | omegas, kappa_factor [1]
    [microphones] points = x y; x y; ...
    [control]     region [all] = x0 x1 y0 y1, exclude = x y; ...
    [weight]      kind [omega2]
    [sources]     positions = x y; ...   coefficients = c0, c1; ...
    [random]      counts [1 2 3], draws [30], seed [0]
    [noise]       level [0], seed [0]
    [solver]      algorithm [pdap], alpha, alphas, gap_tol, subproblem_tol,
                  max_iter, prune
    [metrics]     sigmas [0.2 0.05]
    [benchmark]   weights [one omega2], alpha_max [1], alpha_min [1e-9],
                  steps_per_decade [1], workers [1]
    [output]      dir, mixing_cache

Complex coefficients use Python literals (``0.5+0.5j``); frequency
components are separated by commas and sources by semicolons.
"""
from __future__ import annotations

import configparser
import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .diagnostics import add_noise, certificate, error_e1, error_e2, optimality_residuals
from .fem import HeatSemigroup, assemble, solve_point_sources
from .measure import (
    DiscreteMeasure,
    cluster_merge,
    measure_to_csv,
    sources_to_csv,
    unweight,
)
from .mesh import MeshError, MeshGrid, build_mesh, control_node_set, locate_node
from .observation import (
    WEIGHT_KINDS,
    MixingMatrix,
    ObservationError,
    apply_weight,
    build_mixing,
    compute_weight,
    forward,
    load_mixing,
    save_mixing,
)
from .solvers import ALGORITHMS, SolverSettings, continuation, run

logger = logging.getLogger(__name__)

DEFAULT_SCHEDULE = tuple(10.0 ** (-j / 4) for j in range(21))


class ConfigError(ValueError):
    """Invalid or inconsistent scenario configuration."""


@dataclass
class Scenario:
    name: str = "scenario"
    extent: tuple = (4.0, 4.0)
    level: int = 6
    data_level_offset: int = 1
    side_tags: dict = field(default_factory=lambda: {"left": "N", "top": "N", "bottom": "Z", "right": "Z"})
    speed_of_sound: float = 345.0
    omegas: tuple = ()
    kappa_factor: float = 1.0
    microphones: tuple = ()
    control_region: tuple | None = None
    exclusions: tuple = ()
    weight: str = "omega2"
    source_positions: tuple = ()
    source_coeffs: tuple = ()
    random_counts: tuple = (1, 2, 3)
    random_draws: int = 30
    random_seed: int = 0
    noise_level: float = 0.0
    noise_seed: int = 0
    algorithm: str = "pdap"
    alpha: float | None = None
    alphas: tuple | None = None
    gap_tol: float = 1e-12
    subproblem_tol: float = 1e-12
    max_iter: int = 1000
    prune: bool = True
    sigmas: tuple = (0.2, 0.05)
    benchmark_weights: tuple = ("one", "omega2")
    alpha_max: float = 1.0
    alpha_min: float = 1e-9
    steps_per_decade: int = 1
    workers: int = 1
    output_dir: str | None = None
    mixing_cache: str | None = None

    @property
    def data_level(self) -> int:
        return self.level + self.data_level_offset

    @property
    def wavenumbers(self) -> np.ndarray:
        return np.asarray(self.omegas, dtype=float) / self.speed_of_sound

    @property
    def n_freq(self) -> int:
        return len(self.omegas)

    @property
    def has_sources(self) -> bool:
        return len(self.source_positions) > 0

    def settings(self, alpha: float | None = None) -> SolverSettings:
        a = alpha if alpha is not None else self.alpha
        if a is None:
            a = self.alphas[-1] if self.alphas else None
        if a is None:
            raise ConfigError("no regularization parameter given")
        return SolverSettings(
            alpha=a,
            algorithm=self.algorithm,
            gap_tol=self.gap_tol,
            subproblem_tol=self.subproblem_tol,
            max_iter=self.max_iter,
            prune=self.prune,
        )

    def validate(self) -> "Scenario":
        if len(self.omegas) == 0:
            raise ConfigError("at least one frequency is required")
        if not self.speed_of_sound > 0:
            raise ConfigError("speed of sound must be positive")
        if np.any(self.wavenumbers <= 0) or not np.all(np.isfinite(self.wavenumbers)):
            raise ConfigError("all wavenumbers must be positive")
        if not self.kappa_factor > 0:
            raise ConfigError("kappa_factor must be positive")
        if self.data_level_offset < 0:
            raise ConfigError("the data-generation level must not be coarser than the solve level")
        if len(self.microphones) == 0:
            raise ConfigError("at least one microphone is required")
        if self.weight not in WEIGHT_KINDS:
            raise ConfigError(f"unknown weight {self.weight!r}; expected one of {WEIGHT_KINDS}")
        for w in self.benchmark_weights:
            if w not in WEIGHT_KINDS:
                raise ConfigError(f"unknown benchmark weight {w!r}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if len(self.source_positions) != len(self.source_coeffs):
            raise ConfigError("number of source positions and coefficient rows differ")
        for c in self.source_coeffs:
            if len(c) != self.n_freq:
                raise ConfigError(
                    f"source coefficient has {len(c)} components, expected {self.n_freq}"
                )
        if self.alpha is not None and not self.alpha > 0:
            raise ConfigError("alpha must be positive")
        if self.alphas is not None:
            if len(self.alphas) == 0 or any(not a > 0 for a in self.alphas):
                raise ConfigError("alpha schedule must contain positive values")
            if any(b >= a for a, b in zip(self.alphas, self.alphas[1:])):
                raise ConfigError("alpha schedule must be strictly decreasing")
        if self.noise_level < 0:
            raise ConfigError("noise level must be nonnegative")
        if self.random_draws < 1:
            raise ConfigError("the benchmark needs at least one draw")
        if any(c < 1 for c in self.random_counts):
            raise ConfigError("random source counts must be positive")
        if any(not s > 0 for s in self.sigmas):
            raise ConfigError("heat kernel widths must be positive")
        if not 0 < self.alpha_min < self.alpha_max:
            raise ConfigError("benchmark needs 0 < alpha_min < alpha_max")
        if self.steps_per_decade < 1 or self.workers < 1:
            raise ConfigError("steps_per_decade and workers must be positive")
        for side, tag in self.side_tags.items():
            if tag not in ("N", "Z"):
                raise ConfigError(f"boundary tag for {side} must be N or Z")
        if "Z" not in self.side_tags.values():
            raise ConfigError("at least one side must be absorbing (Z)")
        try:
            build_mesh(self.extent, self.level)
        except MeshError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["source_coeffs"] = [[[z.real, z.imag] for z in row] for row in self.source_coeffs]
        d["wavenumbers"] = [float(k) for k in self.wavenumbers]
        d["data_level"] = self.data_level
        return _jsonable(d)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


# -- parsing -------------------------------------------------------------

def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _points(text: str) -> tuple:
    pts = []
    for chunk in text.split(";"):
        if not chunk.strip():
            continue
        xy = _floats(chunk)
        if len(xy) != 2:
            raise ConfigError(f"expected an 'x y' pair, got {chunk.strip()!r}")
        pts.append(xy)
    return tuple(pts)


def _complex_rows(text: str) -> tuple:
    rows = []
    for chunk in text.split(";"):
        if not chunk.strip():
            continue
        rows.append(tuple(complex(v.strip().replace(" ", "")) for v in chunk.split(",")))
    return tuple(rows)


def parse_scenario(text: str) -> Scenario:
    """Build a validated :class:`Scenario` from INI text."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed scenario file: {exc}") from exc

    def get(section, key, default=None):
        if cp.has_option(section, key):
            return cp.get(section, key).strip()
        return default

    kw = {}
    try:
        if (v := get("scenario", "name")) is not None:
            kw["name"] = v
        if (v := get("domain", "extent")) is not None:
            kw["extent"] = _floats(v)
        if (v := get("domain", "level")) is not None:
            kw["level"] = int(v)
        if (v := get("domain", "data_level_offset")) is not None:
            kw["data_level_offset"] = int(v)
        if cp.has_section("boundary"):
            tags = dict(Scenario().side_tags)
            for side in ("left", "right", "bottom", "top"):
                if (v := get("boundary", side)) is not None:
                    tags[side] = v.upper()
            kw["side_tags"] = tags
        if (v := get("acoustics", "speed_of_sound")) is not None:
            kw["speed_of_sound"] = float(v)
        hz, om = get("acoustics", "frequencies_hz"), get("acoustics", "omegas")
        if hz is not None and om is not None:
            raise ConfigError("give either frequencies_hz or omegas, not both")
        if hz is not None:
            kw["omegas"] = tuple(2.0 * math.pi * f for f in _floats(hz))
        elif om is not None:
            kw["omegas"] = _floats(om)
        if (v := get("acoustics", "kappa_factor")) is not None:
            kw["kappa_factor"] = float(v)
        if (v := get("microphones", "points")) is not None:
            kw["microphones"] = _points(v)
        if (v := get("control", "region")) is not None and v.lower() != "all":
            r = _floats(v)
            if len(r) != 4:
                raise ConfigError("control region needs x0 x1 y0 y1")
            kw["control_region"] = ((r[0], r[1]), (r[2], r[3]))
        if (v := get("control", "exclude")) is not None:
            kw["exclusions"] = _points(v)
        if (v := get("weight", "kind")) is not None:
            kw["weight"] = v
        if (v := get("sources", "positions")) is not None:
            kw["source_positions"] = _points(v)
            kw["source_coeffs"] = _complex_rows(get("sources", "coefficients", ""))
        if (v := get("random", "counts")) is not None:
            kw["random_counts"] = tuple(int(c) for c in _floats(v))
        if (v := get("random", "draws")) is not None:
            kw["random_draws"] = int(v)
        if (v := get("random", "seed")) is not None:
            kw["random_seed"] = int(v)
        if (v := get("noise", "level")) is not None:
            kw["noise_level"] = float(v)
        if (v := get("noise", "seed")) is not None:
            kw["noise_seed"] = int(v)
        if (v := get("solver", "algorithm")) is not None:
            kw["algorithm"] = v.lower()
        if (v := get("solver", "alpha")) is not None:
            kw["alpha"] = float(v)
        if (v := get("solver", "alphas")) is not None:
            kw["alphas"] = DEFAULT_SCHEDULE if v.lower() == "default" else _floats(v)
        for key, conv in (("gap_tol", float), ("subproblem_tol", float), ("max_iter", int)):
            if (v := get("solver", key)) is not None:
                kw[key] = conv(v)
        if cp.has_option("solver", "prune"):
            kw["prune"] = cp.getboolean("solver", "prune")
        if (v := get("metrics", "sigmas")) is not None:
            kw["sigmas"] = _floats(v)
        if (v := get("benchmark", "weights")) is not None:
            kw["benchmark_weights"] = tuple(v.replace(",", " ").split())
        for key, conv in (("alpha_max", float), ("alpha_min", float),
                          ("steps_per_decade", int), ("workers", int)):
            if (v := get("benchmark", key)) is not None:
                kw[key] = conv(v)
        if (v := get("output", "dir")) is not None:
            kw["output_dir"] = v
        if (v := get("output", "mixing_cache")) is not None:
            kw["mixing_cache"] = v
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad value in scenario file: {exc}") from exc
    return Scenario(**kw).validate()


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file {path}: {exc}") from exc
    # relative output paths are taken relative to the working directory
    return parse_scenario(text)


def packaged_scenario(name: str) -> Path:
    """Path of a scenario file shipped with the package."""
    path = Path(__file__).parent / "scenarios" / f"{name}.ini"
    if not path.exists():
        raise ConfigError(f"no packaged scenario named {name!r}")
    return path


# -- discretization ------------------------------------------------------

@dataclass
class Model:
    """Solve-level mesh, node sets and unweighted mixing matrix."""

    mesh: MeshGrid
    microphones: np.ndarray
    controls: np.ndarray
    mixing: MixingMatrix


def _snap(mesh: MeshGrid, points, what: str) -> np.ndarray:
    ids = []
    for p in points:
        try:
            node, moved = locate_node(mesh, p)
        except MeshError as exc:
            raise ConfigError(f"{what} {tuple(p)}: {exc}") from exc
        if moved:
            logger.warning("%s %s snapped to node %d at %s", what, tuple(p), node,
                           tuple(mesh.nodes[node]))
        ids.append(node)
    return np.array(ids, dtype=np.int64)


def mixing_for(mesh: MeshGrid, ks, kappa_factor: float, microphones, controls) -> MixingMatrix:
    """Mixing matrix built one frequency at a time, releasing each factorization."""
    blocks = []
    for k in ks:
        system = assemble(mesh, float(k), kappa_factor * float(k))
        blocks.append(build_mixing([system], microphones, controls))
        system.release()
    first = blocks[0]
    return replace(
        first,
        matrix=np.concatenate([b.matrix for b in blocks], axis=0),
        wavenumbers=np.array([float(k) for k in ks]),
    )


def _cache_matches(mix: MixingMatrix, scn: Scenario, mics, controls) -> bool:
    return (
        mix.level == scn.level
        and not mix.weighted
        and np.array_equal(mix.microphones, mics)
        and np.array_equal(mix.controls, controls)
        and np.allclose(mix.wavenumbers, scn.wavenumbers, rtol=1e-14, atol=0)
    )


def build_model(scn: Scenario, use_cache: bool = True) -> Model:
    mesh = build_mesh(scn.extent, scn.level, scn.side_tags)
    mics = _snap(mesh, scn.microphones, "microphone")
    if np.unique(mics).size != mics.size:
        raise ConfigError("two microphones snap to the same node")
    excl = _snap(mesh, scn.exclusions, "excluded point") if scn.exclusions else ()
    try:
        controls = control_node_set(mesh, scn.control_region, excl)
    except MeshError as exc:
        raise ConfigError(str(exc)) from exc
    cache = Path(scn.mixing_cache) if (use_cache and scn.mixing_cache) else None
    if cache is not None and cache.exists():
        try:
            mix = load_mixing(cache)
        except (ObservationError, OSError, ValueError) as exc:
            logger.warning("ignoring unreadable mixing cache %s: %s", cache, exc)
        else:
            if _cache_matches(mix, scn, mics, controls):
                logger.info("loaded mixing matrix from %s", cache)
                return Model(mesh, mics, controls, mix)
            logger.warning("mixing cache %s does not match the scenario; rebuilding", cache)
    mix = mixing_for(mesh, scn.wavenumbers, scn.kappa_factor, mics, controls)
    return Model(mesh, mics, controls, mix)


def exact_measure(scn: Scenario, mesh: MeshGrid) -> DiscreteMeasure:
    """Exact sources snapped to the nodes of ``mesh``."""
    if not scn.has_sources:
        raise ConfigError("scenario has no exact sources")
    nodes = _snap(mesh, scn.source_positions, "source")
    if np.unique(nodes).size != nodes.size:
        raise ConfigError("two sources snap to the same node")
    return DiscreteMeasure(nodes, np.array(scn.source_coeffs, dtype=complex))


def synthesize_data(scn: Scenario, model: Model | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Exact and noisy microphone readings ``(N, M)`` of the exact sources.

    Data come from a forward solve on the data-generation level.  When that
    level equals the solve level and ``model`` is given, the solve-level
    mixing matrix is applied instead, which gives ``p_d = S u*`` exactly.
    """
    if not scn.has_sources:
        raise ConfigError("synthetic data need exact sources")
    outside = None
    if model is not None:
        u_solve = exact_measure(scn, model.mesh)
        outside = np.setdiff1d(u_solve.nodes, model.controls)
        if outside.size:
            logger.warning("sources at nodes %s lie outside the control set", outside.tolist())
    if scn.data_level_offset == 0 and outside is not None and not outside.size:
        p_exact = forward(model.mixing, u_solve)
    else:
        mesh = build_mesh(scn.extent, scn.data_level, scn.side_tags)
        mics = _snap(mesh, scn.microphones, "microphone")
        u = exact_measure(scn, mesh)
        p_exact = np.empty((scn.n_freq, mics.size), dtype=complex)
        for n, k in enumerate(scn.wavenumbers):
            system = assemble(mesh, float(k), scn.kappa_factor * float(k))
            field_ = solve_point_sources(system, zip(u.nodes, u.coeffs[:, n]))
            system.release()
            p_exact[n] = field_[mics]
    return p_exact, add_noise(p_exact, scn.noise_level, scn.noise_seed)


# -- output helpers ------------------------------------------------------

def write_grid(path, mesh: MeshGrid, nodes, values, name: str) -> None:
    """Text header plus row-major CSV of nodal values; absent nodes are ``nan``."""
    full = np.full(mesh.n_nodes, np.nan)
    full[np.asarray(nodes)] = values
    grid = full.reshape(mesh.ny + 1, mesh.nx + 1)
    lines = [
        f"# field: {name}",
        f"# nx: {mesh.nx}",
        f"# ny: {mesh.ny}",
        f"# extent: {mesh.extent[0]!r} {mesh.extent[1]!r}",
        f"# level: {mesh.level}",
        "# rows: y ascending, columns: x ascending",
    ]
    lines += [",".join(repr(float(v)) for v in row) for row in grid]
    Path(path).write_text("\n".join(lines) + "\n")


def read_grid(path) -> tuple[dict, np.ndarray]:
    header, rows = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].partition(":")
            header[key.strip()] = val.strip()
        elif line:
            rows.append([float(v) for v in line.split(",")])
    return header, np.array(rows)


def trace_to_csv(trace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "objective", "gap", "support_size", "candidate_node"])
    for t in trace:
        w.writerow([t.iteration, repr(float(t.objective)), repr(float(t.gap)), t.support_size, t.candidate])
    return buf.getvalue()


def _write_rows(path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    Path(path).write_text(buf.getvalue())


def _out_dir(scn: Scenario, out) -> Path:
    out = out or scn.output_dir
    if out is None:
        raise ConfigError("no output directory given")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- runners ---------------------------------------------------------------

@dataclass
class ScenarioResult:
    out_dir: Path
    report: dict
    measure: DiscreteMeasure
    converged: bool


def solve_weighted(mixing: MixingMatrix, weight, p_d, scn: Scenario, alpha=None, alphas=None):
    """Solve the weighted problem; returns ``(SolveReport, u)`` with ``u`` unweighted."""
    mw = apply_weight(mixing, weight)
    schedule = alphas if alphas is not None else (None if alpha is not None else scn.alphas)
    if schedule:
        steps = continuation(mw, p_d, schedule, scn.settings(schedule[-1]))
        rep = steps[-1].report
        rep.extra["continuation_iterations"] = [s.report.iterations for s in steps]
    else:
        rep = run(mw, p_d, scn.settings(alpha))
    return rep, unweight(rep.measure, weight)


def run_scenario(scn: Scenario, out=None, model: Model | None = None) -> ScenarioResult:
    """Single reconstruction with all artifacts written to ``out``."""
    out = _out_dir(scn, out)
    model = model or build_model(scn)
    mesh, mix = model.mesh, model.mixing
    if scn.has_sources:
        p_exact, p_d = synthesize_data(scn, model)
    else:
        raise ConfigError("run_scenario needs exact sources to synthesize data")
    weight = compute_weight(scn.weight, mix, mesh)
    rep, u = solve_weighted(mix, weight, p_d, scn)
    alpha = rep.alpha
    r1, r2 = optimality_residuals(u, mix, weight, alpha, p_d)
    cert = certificate(u, mix, weight, alpha, p_d, mesh)
    misfit = float(np.linalg.norm(forward(mix, u) - p_d))
    noise = float(np.linalg.norm(p_d - p_exact))

    u_star = exact_measure(scn, mesh)
    heat = HeatSemigroup(mesh)
    metrics = {f"e2_sigma_{s!r}": error_e2(u_star, u, s, mesh, heat) for s in scn.sigmas}
    if np.all(np.isin(u_star.nodes, model.controls)):
        metrics["e1"] = error_e1(u_star, u, weight)
        metrics["support_exact"] = bool(np.array_equal(u.nodes, u_star.nodes))
    metrics["exact_nodes"] = u_star.nodes.tolist()

    sources = cluster_merge(u, mesh)
    report = {
        "scenario": scn.to_dict(),
        "mesh": {"level": mesh.level, "nx": mesh.nx, "ny": mesh.ny, "n_nodes": mesh.n_nodes,
                 "n_controls": int(model.controls.size)},
        "microphone_nodes": model.microphones.tolist(),
        "solve": {
            "algorithm": rep.algorithm,
            "alpha": alpha,
            "termination": rep.termination,
            "converged": rep.converged,
            "iterations": rep.iterations,
            "objective": rep.objective,
            "gap": rep.gap,
            "subproblem_failures": rep.subproblem_failures,
            "support_nodes": u.nodes.tolist(),
            "coefficients": [[[z.real, z.imag] for z in row] for row in u.coeffs],
            "extra": rep.extra,
        },
        "optimality": {"feasibility": r1, "alignment": r2},
        "certificate": {
            "max_node": cert.max_node,
            "max_value": cert.max_value,
            "second_node": cert.second_node,
            "second_value": cert.second_value,
        },
        "data": {"noise_level": scn.noise_level, "noise_norm": noise, "misfit": misfit,
                 "data_norm": float(np.linalg.norm(p_d))},
        "metrics": metrics,
        "merged_sources": {
            "positions": sources.positions.tolist(),
            "magnitudes": [float(np.linalg.norm(c)) for c in sources.coeffs],
        },
    }
    report = _jsonable(report)
    (out / "report.json").write_text(json.dumps(report, indent=2, allow_nan=False) + "\n")
    (out / "solution.csv").write_text(measure_to_csv(u, mesh))
    (out / "trace.csv").write_text(trace_to_csv(rep.trace))
    (out / "sources.csv").write_text(sources_to_csv(sources))
    write_grid(out / "certificate.grid", mesh, mix.controls, cert.magnitude, "certificate")
    write_grid(out / "xi_over_w.grid", mesh, mix.controls, alpha * cert.magnitude, "xi_over_w")
    if not rep.converged:
        logger.error("solver did not converge (gap %.3e)", rep.gap)
    return ScenarioResult(out, report, u, rep.converged)


@dataclass
class LCurveResult:
    rows: list
    morozov_index: int | None
    noise_norm: float
    converged: bool


def run_lcurve(scn: Scenario, out=None, model: Model | None = None) -> LCurveResult:
    """Continuation along the alpha schedule; writes ``lcurve.csv``.

    Each row holds alpha, data misfit, weighted norm, support size and
    iteration count.  The first alpha with misfit at or below the noise norm
    is flagged (discrepancy principle).
    """
    out = _out_dir(scn, out)
    schedule = scn.alphas or DEFAULT_SCHEDULE
    model = model or build_model(scn)
    p_exact, p_d = synthesize_data(scn, model)
    noise = float(np.linalg.norm(p_d - p_exact))
    weight = compute_weight(scn.weight, model.mixing, model.mesh)
    mw = apply_weight(model.mixing, weight)
    steps = continuation(mw, p_d, schedule, scn.settings(schedule[-1]))
    rows, morozov = [], None
    for j, st in enumerate(steps):
        flag = morozov is None and st.misfit <= noise
        if flag:
            morozov = j
        rows.append((j, st.alpha, st.misfit, st.norm, st.support_size, st.report.iterations, int(flag)))
    _write_rows(out / "lcurve.csv",
                ["j", "alpha", "misfit", "weighted_norm", "support_size", "iterations", "morozov"], rows)
    converged = all(st.report.converged for st in steps)
    return LCurveResult(rows, morozov, noise, converged)


def benchmark_schedule(scn: Scenario) -> tuple:
    lo, hi = math.log10(scn.alpha_min), math.log10(scn.alpha_max)
    n = int(round((hi - lo) * scn.steps_per_decade))
    return tuple(10.0 ** (hi - j / scn.steps_per_decade) for j in range(n + 1))


def random_source(controls: np.ndarray, count: int, n_freq: int, rng: np.random.Generator) -> DiscreteMeasure:
    """Distinct random control nodes with standard complex Gaussian coefficients."""
    if count > controls.size:
        raise ConfigError("more random sources than control nodes")
    nodes = rng.choice(controls, size=count, replace=False)
    coeffs = (rng.standard_normal((count, n_freq)) + 1j * rng.standard_normal((count, n_freq))) / math.sqrt(2)
    return DiscreteMeasure(nodes, coeffs)


# benchmark workers share the model through module state (fork start method)
_BENCH = {}


def _bench_draw(task):
    count, draw, seed = task
    scn, model, weights, heat = (_BENCH[k] for k in ("scn", "model", "weights", "heat"))
    rng = np.random.default_rng(seed)
    u_star = random_source(model.controls, count, scn.n_freq, rng)
    p = forward(model.mixing, u_star)
    schedule = benchmark_schedule(scn)
    rows = []
    for kind, weight in weights.items():
        try:
            mw = apply_weight(model.mixing, weight)
            steps = continuation(mw, p, schedule, scn.settings(schedule[-1]))
            rep = steps[-1].report
            u = unweight(rep.measure, weight)
            e1 = error_e1(u_star, u, weight)
            e2 = [error_e2(u_star, u, s, model.mesh, heat) for s in scn.sigmas]
            rows.append((scn.name, count, draw, kind, e1, *e2, rep.termination))
        except Exception as exc:  # recorded and excluded from the means
            logger.error("draw %d (N=%d, %s) failed: %s", draw, count, kind, exc)
            rows.append((scn.name, count, draw, kind, math.nan, *([math.nan] * len(scn.sigmas)), "failed"))
    return rows


@dataclass
class BenchmarkResult:
    draws: list
    means: list
    failed: int


def run_benchmark(scn: Scenario, out=None, model: Model | None = None, draws: int | None = None) -> BenchmarkResult:
    """Random-source statistics of e1 and e2 for each weight; writes ``benchmark.csv``.

    Data are exact observations on the solve grid.  Per-draw seeds are spawned
    from ``random_seed`` so results do not depend on the worker count.
    """
    draws = scn.random_draws if draws is None else draws
    if draws < 1:
        raise ConfigError("the benchmark needs at least one draw")
    out = _out_dir(scn, out)
    model = model or build_model(scn)
    weights = {k: compute_weight(k, model.mixing, model.mesh) for k in scn.benchmark_weights}
    _BENCH.update(scn=scn, model=model, weights=weights, heat=HeatSemigroup(model.mesh))
    seeds = np.random.SeedSequence(scn.random_seed).spawn(len(scn.random_counts) * draws)
    tasks = [(c, d, seeds[i * draws + d]) for i, c in enumerate(scn.random_counts) for d in range(draws)]
    if scn.workers > 1:
        with ProcessPoolExecutor(scn.workers) as pool:
            results = list(pool.map(_bench_draw, tasks))
    else:
        results = [_bench_draw(t) for t in tasks]
    rows = [r for res in results for r in res]
    sig_cols = [f"e2_sigma_{s!r}" for s in scn.sigmas]
    header = ["scenario", "n_sources", "draw", "weight", "e1", *sig_cols, "termination"]
    _write_rows(out / "benchmark.csv", header, rows)

    means, failed = [], 0
    for c in scn.random_counts:
        for kind in scn.benchmark_weights:
            sel = [r for r in rows if r[1] == c and r[3] == kind]
            ok = [r for r in sel if r[-1] != "failed"]
            failed += len(sel) - len(ok)
            vals = np.array([r[4:-1] for r in ok], dtype=float) if ok else np.full((1, 1 + len(scn.sigmas)), np.nan)
            means.append((scn.name, c, kind, len(ok), len(sel) - len(ok), *vals.mean(axis=0)))
    _write_rows(out / "benchmark_means.csv",
                ["scenario", "n_sources", "weight", "draws", "failed", "e1", *sig_cols], means)
    return BenchmarkResult(rows, means, failed)


def run_mixcache(scn: Scenario, out=None) -> Path:
    """Compute the solve-level mixing matrix and store it for later runs."""
    path = Path(scn.mixing_cache) if scn.mixing_cache else _out_dir(scn, out) / f"mixing_l{scn.level}.bin"
    path.parent.mkdir(parents=True, exist_ok=True)
    model = build_model(scn, use_cache=False)
    save_mixing(model.mixing, path)
    return path


@dataclass
class SweepRow:
    level: int
    iterations: int
    termination: str
    support_exact: bool
    coeff_error: float
    objective_monotone: bool


def run_sweep(scn: Scenario, levels, out=None) -> list[SweepRow]:
    """Repeat a single-source reconstruction on several grid levels."""
    rows = []
    for level in levels:
        s = replace(scn, level=int(level), mixing_cache=None).validate()
        model = build_model(s)
        _, p_d = synthesize_data(s, model)
        weight = compute_weight(s.weight, model.mixing, model.mesh)
        rep, u = solve_weighted(model.mixing, weight, p_d, s)
        u_star = exact_measure(s, model.mesh)
        exact = bool(np.array_equal(u.nodes, u_star.nodes))
        err = (float(np.linalg.norm(u.coeffs - u_star.coeffs) / np.linalg.norm(u_star.coeffs))
               if exact else math.inf)
        obj = [t.objective for t in rep.trace]
        mono = all(b <= a + 1e-12 * max(1.0, abs(a)) for a, b in zip(obj, obj[1:]))
        rows.append(SweepRow(int(level), rep.iterations, rep.termination, exact, err, mono))
    if out is not None:
        out = _out_dir(scn, out)
        _write_rows(out / "sweep.csv",
                    ["level", "iterations", "termination", "support_exact", "coeff_error", "objective_monotone"],
                    [(r.level, r.iterations, r.termination, int(r.support_exact), r.coeff_error,
                      int(r.objective_monotone)) for r in rows])
    return rows
