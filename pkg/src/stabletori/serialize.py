"""JSON/CSV/SVG emission with deterministic formatting.

All numeric CSV output is printed with 12 significant digits so repeated
runs with the same configuration are byte-identical.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .bundles import FlatBundle
from .lattice import CoverSpec, Lattice
from .sections import SectionGrid


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.12g" % float(x)


def lattice_to_json(lat: Lattice) -> dict:
    return {"tau1": lat.tau1, "tau2": lat.tau2}


def lattice_from_json(obj: dict) -> Lattice:
    return Lattice(float(obj["tau1"]), float(obj["tau2"]))


def cover_to_json(spec: CoverSpec) -> list:
    return [list(row) for row in spec.basis]


def bundle_to_json(bundle: FlatBundle) -> dict:
    def mat(M):
        return [[[float(z.real), float(z.imag)] for z in row] for row in M]

    return {
        "rank": bundle.rank,
        "rho1": mat(bundle.rho1),
        "rhotau": mat(bundle.rhotau),
        "tau": [bundle.lattice.tau1, bundle.lattice.tau2],
    }


def bundle_from_json(obj: dict) -> FlatBundle:
    def mat(rows):
        return np.array([[complex(re, im) for re, im in row] for row in rows])

    lat = Lattice(float(obj["tau"][0]), float(obj["tau"][1]))
    return FlatBundle(mat(obj["rho1"]), mat(obj["rhotau"]), lat)


def write_csv(path, header: list[str], rows, comment: str | None = None):
    path = Path(path)
    lines = []
    if comment:
        lines.append("# " + comment)
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(fmt(x) for x in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def section_to_csv(path, sec: SectionGrid, comment: str | None = None):
    header = ["xi", "eta"]
    for c in range(sec.rank):
        header += [f"re{c}", f"im{c}"]
    rows = []
    for i in range(sec.nx):
        for j in range(sec.ny):
            row = [i * sec.hx, j * sec.hy]
            for c in range(sec.rank):
                z = sec.values[i, j, c]
                row += [z.real, z.imag]
            rows.append(row)
    write_csv(path, header, rows, comment)


def svg_heatmap(path, field: np.ndarray, title: str = "", cell: int = 4):
    """Tiny dependency-free SVG raster of a nonnegative scalar field."""
    field = np.asarray(field, dtype=float)
    lo, hi = float(field.min()), float(field.max())
    span = hi - lo if hi > lo else 1.0
    nx, ny = field.shape
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" '
        f'width="{nx * cell}" height="{ny * cell}">',
        f"<title>{title}</title>",
    ]
    for i in range(nx):
        for j in range(ny):
            t = (field[i, j] - lo) / span
            r = int(255 * t)
            b = 255 - r
            parts.append(
                f'<rect x="{i * cell}" y="{(ny - 1 - j) * cell}" '
                f'width="{cell}" height="{cell}" '
                f'fill="rgb({r},0,{b})"/>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts), encoding="utf-8")
