"""JSON, CSV and SVG formats.

Vertex indices are 1-based in every file and 0-based in memory.  All writers
are deterministic: floats are written with ``repr`` (shortest round-trip form)
and nothing depends on time or hashing order.
"""

from __future__ import annotations

import csv
import io
import json
from typing import Any, Optional, Sequence

import numpy as np

from .constraints import (
    ConstraintKind,
    ConstraintSystem,
    QuadraticConstraint,
    TrivialKind,
    distance_constraint,
    make_system,
    planarity_constraint,
    unit_norm_constraint,
    volume2d_constraint,
)
from .tracker import DeformationPath


class InputError(ValueError):
    """Malformed input file; the message names the offending field."""


# ---------------------------------------------------------------------------
# systems


def system_to_dict(system: ConstraintSystem, name: Optional[str] = None,
                   packing_radius: Optional[float] = None) -> dict:
    cons = []
    for c in system.constraints:
        if c.kind is ConstraintKind.PIN:
            continue
        verts = [i + 1 for i in c.vertices]
        if c.kind is ConstraintKind.DISTANCE:
            cons.append({"type": "distance", "vertices": verts, "length_sq": -c.const_term})
        elif c.kind is ConstraintKind.PLANARITY:
            cons.append({"type": "planarity", "normal": verts[0], "vertices": verts[1:]})
        elif c.kind is ConstraintKind.UNIT_NORM:
            cons.append({"type": "unit_norm", "vertex": verts[0]})
        elif c.kind is ConstraintKind.VOLUME2D:
            cons.append({"type": "volume2d", "vertices": verts, "target": -c.const_term})
        else:
            cons.append({"type": "generic", "quad": c.quad.tolist(), "lin": c.lin.tolist(),
                         "const": c.const_term, "vertices": verts})
    out: dict[str, Any] = {}
    if name is not None:
        out["name"] = name
    out.update({
        "dim": system.dim,
        "vertices": system.n_vertices,
        "realization": system.realization.tolist(),
        "pinned": sorted(i + 1 for i in system.pinned),
        "constraints": cons,
    })
    if system.trivial_kind is not TrivialKind.EUCLIDEAN:
        out["trivial_kind"] = system.trivial_kind.value
    if system.directions:
        out["directions"] = sorted(i + 1 for i in system.directions)
    if packing_radius is not None:
        out["packing_radius"] = packing_radius
    return out


def _field(obj: dict, key: str, where: str, kind=None):
    if not isinstance(obj, dict) or key not in obj:
        raise InputError(f"{where}: missing field '{key}'")
    val = obj[key]
    if kind is not None and not isinstance(val, kind):
        raise InputError(f"{where}.{key}: expected {getattr(kind, '__name__', kind)}")
    return val


def _index(val, n: int, where: str) -> int:
    if not isinstance(val, int) or isinstance(val, bool) or not 1 <= val <= n:
        raise InputError(f"{where}: vertex index must be an integer in 1..{n}, got {val!r}")
    return val - 1


def _number(val, where: str) -> float:
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise InputError(f"{where}: expected a number, got {val!r}")
    return float(val)


def system_from_dict(data: dict) -> ConstraintSystem:
    if not isinstance(data, dict):
        raise InputError("system: expected a JSON object")
    dim = _field(data, "dim", "system", int)
    n = _field(data, "vertices", "system", int)
    if dim < 1 or n < 1:
        raise InputError("system: 'dim' and 'vertices' must be positive")
    real = _field(data, "realization", "system", list)
    if len(real) != dim * n:
        raise InputError(f"system.realization: expected {dim * n} numbers, got {len(real)}")
    coords = np.array([_number(v, f"system.realization[{i}]") for i, v in enumerate(real)]).reshape(n, dim)
    pinned = [_index(v, n, f"system.pinned[{i}]") for i, v in enumerate(data.get("pinned", []))]
    directions = [_index(v, n, f"system.directions[{i}]") for i, v in enumerate(data.get("directions", []))]
    try:
        trivial = TrivialKind(data.get("trivial_kind", "euclidean"))
    except ValueError:
        raise InputError(f"system.trivial_kind: unknown value {data.get('trivial_kind')!r}") from None
    cons = []
    for k, item in enumerate(_field(data, "constraints", "system", list)):
        where = f"system.constraints[{k}]"
        ctype = _field(item, "type", where, str)
        if ctype == "distance":
            verts = _field(item, "vertices", where, list)
            if len(verts) != 2:
                raise InputError(f"{where}.vertices: expected 2 indices")
            u, v = (_index(x, n, f"{where}.vertices") for x in verts)
            if "length_sq" in item:
                lsq = _number(item["length_sq"], f"{where}.length_sq")
            elif "length" in item:
                lsq = _number(item["length"], f"{where}.length") ** 2
            else:
                lsq = float(np.sum((coords[u] - coords[v]) ** 2))
            cons.append(distance_constraint(dim, n, u, v, lsq))
        elif ctype == "planarity":
            a = _index(_field(item, "normal", where), n, f"{where}.normal")
            verts = _field(item, "vertices", where, list)
            if len(verts) != 2:
                raise InputError(f"{where}.vertices: expected 2 indices")
            u, v = (_index(x, n, f"{where}.vertices") for x in verts)
            cons.append(planarity_constraint(dim, n, a, u, v))
        elif ctype == "unit_norm":
            cons.append(unit_norm_constraint(dim, n, _index(_field(item, "vertex", where), n, f"{where}.vertex")))
        elif ctype == "volume2d":
            if dim != 2:
                raise InputError(f"{where}: volume constraints need dim 2")
            verts = _field(item, "vertices", where, list)
            if len(verts) != 3:
                raise InputError(f"{where}.vertices: expected 3 indices")
            tri = [_index(x, n, f"{where}.vertices") for x in verts]
            if "target" in item:
                target = _number(item["target"], f"{where}.target")
            else:
                a, b, c = coords[tri]
                target = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
            cons.append(volume2d_constraint(n, tri, target))
        elif ctype == "generic":
            size = dim * n
            try:
                quad = np.array(_field(item, "quad", where, list), dtype=float)
                lin = np.array(_field(item, "lin", where, list), dtype=float)
            except (TypeError, ValueError):
                raise InputError(f"{where}: 'quad' and 'lin' must be numeric arrays") from None
            if quad.shape != (size, size) or lin.shape != (size,):
                raise InputError(f"{where}: expected quad {size}x{size} and lin of length {size}")
            verts = tuple(_index(x, n, f"{where}.vertices") for x in item.get("vertices", []))
            cons.append(QuadraticConstraint(quad, lin, _number(item.get("const", 0.0), f"{where}.const"),
                                            ConstraintKind.GENERIC, verts))
        else:
            raise InputError(f"{where}.type: unknown constraint type {ctype!r}")
    try:
        return make_system(dim, coords, cons, pinned, trivial, directions)
    except ValueError as exc:
        raise InputError(f"system: {exc}") from None


def loads_json(text: str, source: str = "<input>") -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{source}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def dumps_json(obj: Any) -> str:
    return json.dumps(obj, indent=1) + "\n"


# ---------------------------------------------------------------------------
# trajectories


def trajectory_to_dict(path: DeformationPath, system_echo: dict) -> dict:
    out = {
        "system": system_echo,
        "frames": [x.tolist() for x in path.realizations],
        "step_sizes": list(path.step_sizes),
        "events": [e.to_dict() for e in path.events],
        "residuals": list(path.residual_log),
    }
    if path.error is not None:
        out["error"] = path.error
    return out


def frames_from_dict(data: dict) -> np.ndarray:
    frames = _field(data, "frames", "trajectory", list)
    if not frames:
        return np.zeros((0, 0))
    try:
        arr = np.array(frames, dtype=float)
    except (TypeError, ValueError):
        raise InputError("trajectory.frames: expected a list of equal-length numeric lists") from None
    if arr.ndim != 2:
        raise InputError("trajectory.frames: expected a list of equal-length numeric lists")
    return arr


def _event_flags(events: Sequence[dict], n_frames: int) -> list[str]:
    flags = [""] * n_frames
    for e in events:
        step = e.get("step")
        if isinstance(step, int) and 0 <= step < n_frames:
            flags[step] = e["kind"] if not flags[step] else flags[step] + "|" + e["kind"]
    return flags


def trajectory_csv(data: dict, dim: int) -> str:
    """One row per frame: coordinates, residual, event flag."""
    frames = frames_from_dict(data)
    residuals = data.get("residuals", [])
    flags = _event_flags(data.get("events", []), len(frames))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if len(frames):
        n = frames.shape[1] // dim
        writer.writerow([f"x{j + 1}_{k + 1}" for j in range(n) for k in range(dim)] + ["residual", "event"])
    for i, row in enumerate(frames):
        res = residuals[i] if i < len(residuals) else ""
        writer.writerow([repr(float(v)) for v in row] + [repr(float(res)) if res != "" else "", flags[i]])
    return buf.getvalue()


def projection_matrix(size: int, seed: int) -> np.ndarray:
    """Two orthonormal rows from the QR factorization of a seeded Gaussian matrix."""
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((size, size)))
    return q.T[:2].copy()


def projection_csv(data: dict, seed: int) -> str:
    frames = frames_from_dict(data)
    if frames.size == 0:
        raise InputError("trajectory has no frames")
    proj = projection_matrix(frames.shape[1], seed)
    pts = frames @ proj.T
    flags = _event_flags(data.get("events", []), len(frames))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["frame", "u", "v", "event"])
    for i, (a, b) in enumerate(pts):
        writer.writerow([i, repr(float(a)), repr(float(b)), flags[i]])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# SVG

# fixed oblique view for 3-D systems
_VIEW_3D = np.array([[np.cos(np.pi / 6), -np.cos(np.pi / 6), 0.0],
                     [-np.sin(np.pi / 6), -np.sin(np.pi / 6), 1.0]])


def _fmt(v: float) -> str:
    return f"{v:.3f}"


def render_svg(system: ConstraintSystem, x, width: int = 400, height: int = 400,
               flex: Optional[np.ndarray] = None, disk_radius: Optional[float] = None) -> str:
    """Vertices as circles, distance constraints as segments, optional flex arrows."""
    if system.dim not in (2, 3):
        raise ValueError("only 2-D and 3-D systems can be drawn")
    x = np.asarray(x, dtype=float)
    idx = [j for j in range(system.n_vertices) if j not in system.directions]
    pts = system.points(x)
    arrows = None if flex is None else system.points(np.asarray(flex, dtype=float))
    if system.dim == 3:
        pts = pts @ _VIEW_3D.T
        if arrows is not None:
            arrows = arrows @ _VIEW_3D.T
    # y axis points up in the drawing
    pts = pts * np.array([1.0, -1.0])
    if arrows is not None:
        arrows = arrows * np.array([1.0, -1.0]) * 0.5
    shown = pts[idx]
    pad = disk_radius or 0.0
    lo = shown.min(axis=0) - pad
    hi = shown.max(axis=0) + pad
    if arrows is not None:
        tips = shown + arrows[idx]
        lo = np.minimum(lo, tips.min(axis=0))
        hi = np.maximum(hi, tips.max(axis=0))
    span = np.maximum(hi - lo, 1e-9)
    margin = 20.0
    scale = min((width - 2 * margin) / span[0], (height - 2 * margin) / span[1])
    offset = np.array([margin, margin]) + 0.5 * (np.array([width, height]) - 2 * margin - scale * span)

    def to_px(p):
        q = (p - lo) * scale + offset
        return _fmt(q[0]), _fmt(q[1])

    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}">',
             '<defs><marker id="head" markerWidth="6" markerHeight="6" refX="5" refY="3" orient="auto">'
             '<path d="M0,0 L6,3 L0,6 z" fill="#e07a5f"/></marker></defs>',
             '<rect width="100%" height="100%" fill="white"/>']
    for c in system.constraints:
        if c.kind is ConstraintKind.DISTANCE:
            (x1, y1), (x2, y2) = to_px(pts[c.vertices[0]]), to_px(pts[c.vertices[1]])
            lines.append(f'<line class="bar" x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}" '
                         'stroke="#2a9d8f" stroke-width="2"/>')
    r_px = _fmt(disk_radius * scale) if disk_radius else "4.000"
    fill = "none" if disk_radius else "black"
    for j in idx:
        cx, cy = to_px(pts[j])
        lines.append(f'<circle class="vertex" cx="{cx}" cy="{cy}" r="{r_px}" fill="{fill}" stroke="black"/>')
    if arrows is not None:
        for j in idx:
            (x1, y1), (x2, y2) = to_px(pts[j]), to_px(pts[j] + arrows[j])
            lines.append(f'<line class="flex" x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}" '
                         'stroke="#e07a5f" stroke-width="1.5" marker-end="url(#head)"/>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
