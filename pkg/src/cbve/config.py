"""JSON run configurations mirroring the measure data model one-to-one.

A configuration describes either a general environment or a finite-activity
special form on a horizon [0, T].  Scalar measures carry a ``density`` list
of [t0, t1, value] segments and an ``atoms`` list of [time, mass] pairs;
jump measures carry a ``kernel`` list of [t0, t1, points] segments and an
``atoms`` list of [time, points] pairs with points [z1, z2, weight].  The
grid is either ``grid_cells`` uniform cells (segment endpoints and atom
times are inserted as extra nodes) or an explicit ``grid_nodes`` list.
Emission is canonical, so parse(emit(parse(x))) reproduces the model
exactly.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .environment import Environment, SpecialForm
from .errors import ConfigError
from .measures import JumpMeasure, StieltjesMeasure, TimeGrid

__all__ = ["RunConfig", "parse_config", "load_config", "emit_config"]

_ENV_SCALARS = ("b11", "b22", "b12", "b21", "c1", "c2")
_ENV_JUMPS = ("m1", "m2")
_SF_SCALARS = ("gamma11", "gamma22", "gamma12", "gamma21")
_SF_JUMPS = ("mu1", "mu2")


@dataclass(frozen=True)
class RunConfig:
    """Parsed model definition: exactly one of environment / special form."""

    kind: str
    environment: Environment | None = None
    special_form: SpecialForm | None = None

    @property
    def model(self):
        return self.environment if self.kind == "environment" else self.special_form

    @property
    def grid(self) -> TimeGrid:
        return self.model.grid

    @property
    def horizon(self) -> float:
        return self.model.horizon


def _fail(field: str, message: str):
    raise ConfigError(f"{field}: {message}")


def _float(field: str, value) -> float:
    try:
        out = float(value)
    except (TypeError, ValueError):
        _fail(field, f"expected a number, got {value!r}")
    if not np.isfinite(out):
        _fail(field, f"expected a finite number, got {value!r}")
    return out


def _segment_times(data: dict, keys_scalar, keys_jump, horizon: float):
    times = {0.0, horizon}
    for key in keys_scalar:
        section = data.get(key) or {}
        for idx, seg in enumerate(section.get("density", ())):
            if len(seg) != 3:
                _fail(f"{key}.density[{idx}]", "expected [t0, t1, value]")
            times.add(_float(f"{key}.density[{idx}][0]", seg[0]))
            times.add(_float(f"{key}.density[{idx}][1]", seg[1]))
        for idx, atom in enumerate(section.get("atoms", ())):
            if len(atom) != 2:
                _fail(f"{key}.atoms[{idx}]", "expected [time, mass]")
            times.add(_float(f"{key}.atoms[{idx}][0]", atom[0]))
    for key in keys_jump:
        section = data.get(key) or {}
        for idx, seg in enumerate(section.get("kernel", ())):
            if len(seg) != 3:
                _fail(f"{key}.kernel[{idx}]", "expected [t0, t1, points]")
            times.add(_float(f"{key}.kernel[{idx}][0]", seg[0]))
            times.add(_float(f"{key}.kernel[{idx}][1]", seg[1]))
        for idx, atom in enumerate(section.get("atoms", ())):
            if len(atom) != 2:
                _fail(f"{key}.atoms[{idx}]", "expected [time, points]")
            times.add(_float(f"{key}.atoms[{idx}][0]", atom[0]))
    for t in times:
        if t < 0.0 or t > horizon:
            _fail("grid", f"time {t} outside [0, {horizon}]")
    return sorted(times)


def _build_grid(data: dict, keys_scalar, keys_jump) -> TimeGrid:
    horizon = _float("horizon", data.get("horizon", 1.0))
    if horizon <= 0.0:
        _fail("horizon", "must be positive")
    if "grid_nodes" in data:
        nodes = [_float(f"grid_nodes[{i}]", v) for i, v in enumerate(data["grid_nodes"])]
        try:
            return TimeGrid(np.asarray(nodes))
        except ValueError as exc:
            _fail("grid_nodes", str(exc))
    cells = data.get("grid_cells", 1000)
    if not isinstance(cells, int) or cells < 1:
        _fail("grid_cells", "must be a positive integer")
    special = np.asarray(_segment_times(data, keys_scalar, keys_jump, horizon))
    uniform = np.linspace(0.0, horizon, cells + 1)
    tol = 1e-9 * max(1.0, horizon)
    pos = np.searchsorted(special, uniform)
    keep = np.ones(uniform.size, dtype=bool)
    for side in (np.clip(pos, 0, special.size - 1), np.clip(pos - 1, 0, special.size - 1)):
        keep &= np.abs(uniform - special[side]) > tol
    nodes = np.unique(np.concatenate((special, uniform[keep])))
    return TimeGrid(nodes)


def _points(field: str, raw) -> tuple:
    pts = []
    for idx, p in enumerate(raw):
        if len(p) != 3:
            _fail(f"{field}[{idx}]", "expected [z1, z2, weight]")
        pts.append((_float(f"{field}[{idx}][0]", p[0]),
                    _float(f"{field}[{idx}][1]", p[1]),
                    _float(f"{field}[{idx}][2]", p[2])))
    return tuple(pts)


def _scalar_measure(grid, data, key, nondecreasing, allow_atoms=True):
    section = data.get(key) or {}
    unknown = set(section) - {"density", "atoms"}
    if unknown:
        _fail(key, f"unknown fields {sorted(unknown)}")
    segments = []
    for idx, seg in enumerate(section.get("density", ())):
        segments.append((seg[0], seg[1], _float(f"{key}.density[{idx}][2]", seg[2])))
    atoms = []
    for idx, atom in enumerate(section.get("atoms", ())):
        if not allow_atoms:
            _fail(f"{key}.atoms", "this coefficient must be atom-free")
        atoms.append((atom[0], _float(f"{key}.atoms[{idx}][1]", atom[1])))
    try:
        return StieltjesMeasure.from_segments(grid, segments, tuple(atoms),
                                              nondecreasing)
    except ValueError as exc:
        _fail(key, str(exc))


def _jump_measure(grid, data, key):
    section = data.get(key) or {}
    unknown = set(section) - {"kernel", "atoms"}
    if unknown:
        _fail(key, f"unknown fields {sorted(unknown)}")
    segments = []
    for idx, seg in enumerate(section.get("kernel", ())):
        segments.append((seg[0], seg[1], _points(f"{key}.kernel[{idx}][2]", seg[2])))
    atoms = []
    for idx, atom in enumerate(section.get("atoms", ())):
        atoms.append((atom[0], _points(f"{key}.atoms[{idx}][1]", atom[1])))
    try:
        return JumpMeasure.from_segments(grid, segments, atoms)
    except ValueError as exc:
        _fail(key, str(exc))


def parse_config(data: dict) -> RunConfig:
    """Parse a configuration dictionary into a validated model."""
    if not isinstance(data, dict):
        raise ConfigError("top level: expected an object")
    kind = data.get("kind", "environment")
    if kind not in ("environment", "special_form"):
        _fail("kind", f"expected 'environment' or 'special_form', got {kind!r}")
    scalars = _ENV_SCALARS if kind == "environment" else _SF_SCALARS
    jumps = _ENV_JUMPS if kind == "environment" else _SF_JUMPS
    known = {"kind", "horizon", "grid_cells", "grid_nodes", *scalars, *jumps}
    unknown = set(data) - known
    if unknown:
        _fail("top level", f"unknown fields {sorted(unknown)}")
    grid = _build_grid(data, scalars, jumps)
    if kind == "environment":
        try:
            env = Environment(
                grid,
                _scalar_measure(grid, data, "b11", False),
                _scalar_measure(grid, data, "b22", False),
                _scalar_measure(grid, data, "b12", True),
                _scalar_measure(grid, data, "b21", True),
                _scalar_measure(grid, data, "c1", True, allow_atoms=False),
                _scalar_measure(grid, data, "c2", True, allow_atoms=False),
                _jump_measure(grid, data, "m1"),
                _jump_measure(grid, data, "m2"),
            )
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc
        return RunConfig("environment", environment=env)
    try:
        sf = SpecialForm(
            grid,
            _scalar_measure(grid, data, "gamma11", False),
            _scalar_measure(grid, data, "gamma22", False),
            _scalar_measure(grid, data, "gamma12", True),
            _scalar_measure(grid, data, "gamma21", True),
            _jump_measure(grid, data, "mu1"),
            _jump_measure(grid, data, "mu2"),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    return RunConfig("special_form", special_form=sf)


def load_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    return parse_config(data)


def _emit_scalar(meas: StieltjesMeasure) -> dict | None:
    nodes = meas.grid.nodes
    segments = []
    start = None
    value = 0.0
    dens = meas.density
    for k in range(dens.size + 1):
        v = dens[k] if k < dens.size else None
        if start is not None and (v is None or v != value):
            if value != 0.0:
                segments.append([float(nodes[start]), float(nodes[k]), float(value)])
            start = None
        if v is not None and start is None:
            start = k
            value = v
    out = {}
    if segments:
        out["density"] = segments
    if meas.atoms:
        out["atoms"] = [[float(t), float(m)] for t, m in meas.atoms]
    return out or None


def _emit_jump(meas: JumpMeasure) -> dict | None:
    nodes = meas.grid.nodes
    segments = []
    start = None
    current: tuple = ()
    kernels = list(meas.cell_kernels) + [None]
    for k, kern in enumerate(kernels):
        pts = kern.points if kern is not None else None
        if start is not None and (pts is None or pts != current):
            if current:
                segments.append([float(nodes[start]), float(nodes[k]),
                                 [[z1, z2, w] for z1, z2, w in current]])
            start = None
        if pts is not None and start is None:
            start = k
            current = pts
    out = {}
    if segments:
        out["kernel"] = segments
    if meas.time_atoms:
        out["atoms"] = [
            [float(t), [[z1, z2, w] for z1, z2, w in spatial.points]]
            for t, spatial in meas.time_atoms
        ]
    return out or None


def emit_config(model) -> dict:
    """Canonical configuration dictionary for an Environment or SpecialForm."""
    out: dict = {}
    if isinstance(model, Environment):
        out["kind"] = "environment"
        scalar_items = [(k, getattr(model, k)) for k in _ENV_SCALARS]
        jump_items = [(k, getattr(model, k)) for k in _ENV_JUMPS]
    elif isinstance(model, SpecialForm):
        out["kind"] = "special_form"
        scalar_items = [(k, getattr(model, k)) for k in _SF_SCALARS]
        jump_items = [(k, getattr(model, k)) for k in _SF_JUMPS]
    else:
        raise TypeError("expected an Environment or SpecialForm")
    out["horizon"] = float(model.horizon)
    out["grid_nodes"] = [float(v) for v in model.grid.nodes]
    for key, meas in scalar_items:
        emitted = _emit_scalar(meas)
        if emitted:
            out[key] = emitted
    for key, meas in jump_items:
        emitted = _emit_jump(meas)
        if emitted:
            out[key] = emitted
    return out
