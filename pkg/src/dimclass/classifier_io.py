"""Classifier files as editable SVG.

Layout of a written file::

    <svg viewBox=...>
      <metadata id="dimclass-classifier">   key=value lines, all parameters
      <g id="density-positive">            training density (optional)
      <g id="density-negative">
      <g id="axes">                        axis, 95% confidence ticks, labels
      <path id="boundary" d="M x y L x y ..."/>

Plane coordinates ``(u, v)`` map to SVG user units as ``X = s * u`` and
``Y = -s * v`` where ``s`` is the power of two stored under ``svg_scale``;
the power-of-two factor keeps the conversion exact in both directions. The
path may be edited freely (moved, reshaped, extra vertices) and may carry
``transform`` attributes on itself or its ancestor groups. Curve segments are
read as straight segments to their end points.
"""

from __future__ import annotations

import math
import re
import xml.etree.ElementTree as ET
from xml.sax.saxutils import escape
from pathlib import Path

import numpy as np

from .classifier import BinaryClassifier, DecisionBoundary, SeparabilityPlane, _as_matrix
from .errors import DataError

FORMAT = "dimclass-classifier"
VERSION = 1
SVG_NS = "http://www.w3.org/2000/svg"
CANVAS = 800.0
GRID = 48


def _r(v) -> str:
    return repr(float(v))


def _arr(a) -> str:
    return " ".join(_r(v) for v in np.asarray(a, dtype=np.float64).ravel())


def _svg_scale(extent) -> float:
    width = max(extent[1] - extent[0], extent[3] - extent[2], 1e-12)
    return float(2.0 ** round(math.log2(CANVAS / width)))


def _num(v: float) -> str:
    # Short form for purely visual attributes.
    return f"{v:.4f}".rstrip("0").rstrip(".")


def _density_layer(layer_id, P, extent, s, color):
    u0, u1, v0, v1 = extent
    hist, ue, ve = np.histogram2d(P[:, 0], P[:, 1], bins=GRID, range=[[u0, u1], [v0, v1]])
    out = [f'  <g id="{layer_id}" fill="{color}" stroke="none">']
    peak = hist.max()
    if peak > 0:
        for i in range(GRID):
            for j in range(GRID):
                if hist[i, j] == 0:
                    continue
                x, y = ue[i] * s, -ve[j + 1] * s
                w, h = (ue[i + 1] - ue[i]) * s, (ve[j + 1] - ve[j]) * s
                op = 0.1 + 0.8 * hist[i, j] / peak
                out.append(
                    f'    <rect x="{_num(x)}" y="{_num(y)}" width="{_num(w)}" '
                    f'height="{_num(h)}" fill-opacity="{op:.3f}"/>'
                )
    out.append("  </g>")
    return out


def _metadata(clf: BinaryClassifier, s: float) -> list[str]:
    p = clf.plane
    items = [
        ("format", FORMAT),
        ("version", str(VERSION)),
        ("method", clf.method),
        ("label_positive", clf.labels[0]),
        ("label_negative", clf.labels[1]),
        ("scales", _arr(clf.scales)),
        ("w1", _arr(p.w1)),
        ("b1", _r(p.b1)),
        ("w2", _arr(p.w2)),
        ("b2", _r(p.b2)),
        ("phi", _r(p.phi)),
        ("gamma", _r(p.gamma)),
        ("centers", _arr(p.centers)),
        ("plane_flags", ",".join(p.flags)),
        ("extent", _arr(clf.extent)),
        ("svg_scale", _r(s)),
    ]
    for k in sorted(clf.stats):
        v = clf.stats[k]
        items.append((f"stat.{k}", str(v) if isinstance(v, (int, np.integer)) else _r(v)))
    for k in sorted(clf.boundary.info):
        v = clf.boundary.info[k]
        items.append((f"boundary.{k}", repr(v) if isinstance(v, (bool, float)) else str(v)))
    for key, value in items:
        if "\n" in value or "<" in value or "&" in value:
            raise DataError(f"metadata value for {key!r} cannot contain newlines or markup")
    return [f"{k}={v}" for k, v in items]


def write_svg(path, clf: BinaryClassifier, Fplus=None, Fminus=None, header_comment: str = "") -> str:
    """Serialize ``clf``; returns the document text. Output is deterministic."""
    s = _svg_scale(clf.extent)
    u0, u1, v0, v1 = clf.extent
    vb = (u0 * s, -v1 * s, (u1 - u0) * s, (v1 - v0) * s)
    lines = ['<?xml version="1.0" encoding="UTF-8"?>']
    if header_comment:
        lines.append("<!--\n" + header_comment.replace("--", "- -").rstrip() + "\n-->")
    lines.append(
        f'<svg xmlns="{SVG_NS}" version="1.1" width="{_num(vb[2])}" height="{_num(vb[3])}" '
        f'viewBox="{_num(vb[0])} {_num(vb[1])} {_num(vb[2])} {_num(vb[3])}">'
    )
    lines.append(f'  <metadata id="{FORMAT}">')
    lines += _metadata(clf, s)
    lines.append("  </metadata>")
    lines.append(f"  <title>{escape(clf.labels[0])} vs {escape(clf.labels[1])}</title>")
    if Fplus is not None and Fminus is not None:
        lines += _density_layer("density-positive", clf.plane.project(_as_matrix(Fplus)), clf.extent, s, "#1f5fbf")
        lines += _density_layer("density-negative", clf.plane.project(_as_matrix(Fminus)), clf.extent, s, "#c0392b")

    # Axis through the class centers with 95% confidence ticks around the boundary midline.
    cy = float(np.mean(clf.plane.centers[:, 1])) if np.isfinite(clf.plane.centers).all() else 0.0
    bx = float(np.mean(clf.boundary.vertices[:, 0]))
    tick = math.log(0.95 / 0.05)
    fs = _num(0.02 * vb[2])
    sw = _num(0.002 * vb[2])
    lines.append(f'  <g id="axes" stroke="#444444" stroke-width="{sw}" font-size="{fs}" font-family="sans-serif">')
    lines.append(f'    <line x1="{_num(u0 * s)}" y1="{_num(-cy * s)}" x2="{_num(u1 * s)}" y2="{_num(-cy * s)}"/>')
    for sign in (-1, 1):
        x = (bx + sign * tick) * s
        lines.append(
            f'    <line x1="{_num(x)}" y1="{_num(-v0 * s)}" x2="{_num(x)}" y2="{_num(-v1 * s)}" '
            'stroke-dasharray="4 4"/>'
        )
        lines.append(f'    <text x="{_num(x)}" y="{_num(-v0 * s)}" stroke="none">95%</text>')
    lines.append(
        f'    <text x="{_num(u0 * s)}" y="{_num(-v1 * s + 0.03 * vb[3])}" stroke="none">'
        f"{escape(clf.labels[1])} | {escape(clf.labels[0])}; Y factor {clf.plane.gamma:.4g}</text>"
    )
    lines.append("  </g>")
    d = " ".join(
        ("M" if i == 0 else "L") + f" {_r(u * s)} {_r(-v * s)}" for i, (u, v) in enumerate(clf.boundary.vertices)
    )
    lines.append(f'  <path id="boundary" d="{d}" fill="none" stroke="#000000" stroke-width="{_num(0.004 * vb[2])}"/>')
    lines.append("</svg>")
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


_TOKEN = re.compile(r"[MmLlHhVvZzCcSsQqTtAa]|[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?")
_ARGC = {"M": 2, "L": 2, "H": 1, "V": 1, "Z": 0, "C": 6, "S": 4, "Q": 4, "T": 2, "A": 7}


def parse_path_vertices(d: str) -> np.ndarray:
    """Vertices of an SVG path, curves reduced to their end points."""
    tokens = _TOKEN.findall(d)
    if not tokens:
        raise DataError("boundary path has no data")
    pts = []
    x = y = 0.0
    start = None
    i = 0
    cmd = None
    while i < len(tokens):
        tok = tokens[i]
        if tok.isalpha():
            cmd = tok
            i += 1
            if cmd in "Zz":
                if start is not None:
                    x, y = start
                    pts.append((x, y))
                continue
        elif cmd is None:
            raise DataError(f"boundary path must start with a command, got {tok!r}")
        up = cmd.upper()
        n = _ARGC[up]
        args = tokens[i : i + n]
        if len(args) < n or any(a.isalpha() for a in args):
            raise DataError(f"boundary path: command {cmd!r} is missing arguments")
        try:
            vals = [float(a) for a in args]
        except ValueError:
            raise DataError(f"boundary path: malformed number in {args}") from None
        i += n
        rel = cmd.islower()
        if up == "H":
            x = x + vals[0] if rel else vals[0]
        elif up == "V":
            y = y + vals[0] if rel else vals[0]
        else:
            ex, ey = vals[-2], vals[-1]
            x, y = (x + ex, y + ey) if rel else (ex, ey)
        pts.append((x, y))
        if up == "M":
            start = (x, y)
            cmd = "l" if rel else "L"  # implicit lineto after moveto
    v = np.array(pts, dtype=np.float64)
    keep = np.ones(len(v), dtype=bool)
    keep[1:] = (np.diff(v, axis=0) != 0).any(axis=1)
    return v[keep]


def _parse_transform(text: str) -> np.ndarray:
    m = np.eye(3)
    for name, args in re.findall(r"(\w+)\s*\(([^)]*)\)", text or ""):
        a = [float(v) for v in re.split(r"[\s,]+", args.strip()) if v]
        if name == "matrix" and len(a) == 6:
            t = np.array([[a[0], a[2], a[4]], [a[1], a[3], a[5]], [0, 0, 1]])
        elif name == "translate":
            t = np.array([[1, 0, a[0]], [0, 1, a[1] if len(a) > 1 else 0.0], [0, 0, 1]])
        elif name == "scale":
            sx = a[0]
            sy = a[1] if len(a) > 1 else a[0]
            t = np.diag([sx, sy, 1.0])
        elif name == "rotate":
            th = math.radians(a[0])
            c, s = math.cos(th), math.sin(th)
            t = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])
            if len(a) == 3:
                cx, cy = a[1], a[2]
                t = np.array([[1, 0, cx], [0, 1, cy], [0, 0, 1]]) @ t @ np.array([[1, 0, -cx], [0, 1, -cy], [0, 0, 1]])
        elif name == "skewX":
            t = np.array([[1, math.tan(math.radians(a[0])), 0], [0, 1, 0], [0, 0, 1.0]])
        elif name == "skewY":
            t = np.array([[1, 0, 0], [math.tan(math.radians(a[0])), 1, 0], [0, 0, 1.0]])
        else:
            raise DataError(f"unsupported transform {name!r}")
        m = m @ t
    return m


def _floats(meta, key, count=None):
    try:
        vals = np.array([float(v) for v in meta[key].split()])
    except KeyError:
        raise DataError(f"classifier metadata is missing {key!r}") from None
    except ValueError:
        raise DataError(f"classifier metadata {key!r} has a malformed number") from None
    if count is not None and len(vals) != count:
        raise DataError(f"classifier metadata {key!r} should hold {count} values, got {len(vals)}")
    return vals


def _scalar(text):
    if text in ("True", "False"):
        return text == "True"
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def read_svg(path) -> BinaryClassifier:
    path = Path(path)
    try:
        root = ET.parse(path).getroot()
    except FileNotFoundError:
        raise DataError(f"classifier file not found: {path}") from None
    except ET.ParseError as exc:
        raise DataError(f"{path}: not well-formed XML ({exc})") from None
    return _from_tree(root, str(path))


def read_svg_string(text: str) -> BinaryClassifier:
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise DataError(f"not well-formed XML ({exc})") from None
    return _from_tree(root, "<string>")


def _from_tree(root, where: str) -> BinaryClassifier:
    parents = {child: parent for parent in root.iter() for child in parent}
    meta_el = boundary_el = None
    for el in root.iter():
        if el.get("id") == FORMAT and el.tag.rsplit("}", 1)[-1] == "metadata":
            meta_el = el
        elif el.get("id") == "boundary":
            boundary_el = el
    if meta_el is None:
        raise DataError(f"{where}: missing <metadata id=\"{FORMAT}\"> element")
    if boundary_el is None:
        raise DataError(f"{where}: missing <path id=\"boundary\"> element")
    if boundary_el.tag.rsplit("}", 1)[-1] != "path":
        raise DataError(f"{where}: element with id 'boundary' is not a <path>")

    meta = {}
    for line in "".join(meta_el.itertext()).splitlines():
        line = line.strip()
        if line and "=" in line:
            k, _, v = line.partition("=")
            meta[k.strip()] = v.strip()
    if meta.get("format") != FORMAT:
        raise DataError(f"{where}: metadata format is {meta.get('format')!r}, expected {FORMAT!r}")
    if _scalar(meta.get("version", "")) != VERSION:
        raise DataError(f"{where}: unsupported classifier version {meta.get('version')!r}")

    scales = _floats(meta, "scales")
    dim = 2 * len(scales)
    try:
        scalars = {k: float(meta[k]) for k in ("b1", "b2", "phi", "gamma", "svg_scale")}
    except KeyError as exc:
        raise DataError(f"{where}: classifier metadata is missing {exc.args[0]!r}") from None
    except ValueError as exc:
        raise DataError(f"{where}: malformed number in classifier metadata ({exc})") from None
    flags = tuple(f for f in meta.get("plane_flags", "").split(",") if f)
    plane = SeparabilityPlane(
        w1=_floats(meta, "w1", dim),
        b1=scalars["b1"],
        w2=_floats(meta, "w2", dim),
        b2=scalars["b2"],
        phi=scalars["phi"],
        gamma=scalars["gamma"],
        centers=_floats(meta, "centers", 4).reshape(2, 2),
        flags=flags,
    )

    d = boundary_el.get("d")
    if not d:
        raise DataError(f"{where}: boundary path has no 'd' attribute")
    xy = parse_path_vertices(d)
    m = np.eye(3)
    el = boundary_el
    while el is not None:
        if el.get("transform"):
            m = _parse_transform(el.get("transform")) @ m
        el = parents.get(el)
    if not np.array_equal(m, np.eye(3)):
        xy = xy @ m[:2, :2].T + m[:2, 2]
    s = scalars["svg_scale"]
    verts = np.stack([xy[:, 0] / s, -xy[:, 1] / s], axis=1)
    info = {k[len("boundary."):]: _scalar(v) for k, v in meta.items() if k.startswith("boundary.")}
    stats = {k[len("stat."):]: _scalar(v) for k, v in meta.items() if k.startswith("stat.")}
    return BinaryClassifier(
        scales=scales,
        plane=plane,
        boundary=DecisionBoundary(verts, info=info),
        labels=(meta.get("label_positive", "positive"), meta.get("label_negative", "negative")),
        stats=stats,
        extent=tuple(_floats(meta, "extent", 4).tolist()),
        method=meta.get("method", "lda"),
    )
