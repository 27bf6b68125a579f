"""File outputs: snapshot CSVs, time-series CSVs and PPM heatmaps.

Everything written here is a pure function of the simulation data, so two
runs with the same configuration produce byte-identical files.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .integrators import ComponentOps, Geometry

_FLOAT_FMT = "%.17g"

# 16 anchor colors blended linearly into the fixed 256-entry palette used by
# the heatmaps (dark purple through teal to yellow).
_PALETTE_ANCHORS = (
    (68, 1, 84),
    (72, 26, 108),
    (71, 47, 125),
    (65, 68, 135),
    (57, 86, 140),
    (49, 104, 142),
    (42, 120, 142),
    (35, 136, 142),
    (31, 152, 139),
    (34, 168, 132),
    (53, 183, 121),
    (84, 197, 104),
    (122, 209, 81),
    (165, 219, 54),
    (210, 226, 27),
    (253, 231, 37),
)


def _build_palette() -> np.ndarray:
    anchors = np.array(_PALETTE_ANCHORS, dtype=float)
    pos = np.linspace(0.0, 1.0, len(anchors))
    t = np.linspace(0.0, 1.0, 256)
    channels = [np.interp(t, pos, anchors[:, c]) for c in range(3)]
    return np.rint(np.stack(channels, axis=1)).astype(np.uint8)


PALETTE = _build_palette()


def colormap_indices(field: np.ndarray) -> np.ndarray:
    """Map field values linearly onto palette indices 0..255 (constant
    fields map to 0)."""
    lo = float(np.min(field))
    hi = float(np.max(field))
    if hi <= lo:
        return np.zeros(field.shape, dtype=np.uint8)
    scaled = (field - lo) / (hi - lo) * 255.0
    return np.clip(np.rint(scaled), 0, 255).astype(np.uint8)


def write_heatmap(path: Path, field: np.ndarray) -> None:
    """Binary PPM (P6) of the field on its index rectangle.

    Order-3 fields are unfolded along the first mode (rows = first index,
    columns = second and third indices), so every value is rendered and the
    pixel extrema always match the field extrema.
    """
    data = np.asarray(field, dtype=float)
    if data.ndim == 3:
        data = data.reshape(data.shape[0], -1, order="F")
    if data.ndim != 2:
        raise ValueError("heatmaps need an order-2 or order-3 field")
    pixels = PALETTE[colormap_indices(data)]
    height, width = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{width} {height}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def _axis_names(geometry: Geometry) -> list[str]:
    return {
        Geometry.DISK: ["rho", "theta"],
        Geometry.SPHERE: ["theta", "phi"],
        Geometry.BALL: ["rho", "theta", "phi"],
        Geometry.CYLINDER: ["rho", "theta", "z"],
    }[geometry]


def _axis_grids(cops: ComponentOps) -> list[np.ndarray]:
    ops = {
        "rho": cops.rho,
        "theta": cops.theta,
        "phi": cops.phi,
        "z": cops.z,
    }
    return [ops[name].grid for name in _axis_names(cops.geometry)]


def write_snapshot(
    path: Path,
    field: np.ndarray,
    cops: ComponentOps,
    *,
    component: str,
    model: str,
    step: int,
    t: float,
) -> None:
    """Self-describing CSV snapshot of one component.

    Header comments carry the geometry, dims and grid vectors; the body
    lists 1-based indices, node coordinates and the value, one row per node
    in flat-index (first index fastest) order.
    """
    names = _axis_names(cops.geometry)
    grids = _axis_grids(cops)
    shape = field.shape
    index_cols = [
        axis.reshape(-1, order="F") + 1
        for axis in np.indices(shape)
    ]
    coord_cols = [
        grids[d][index_cols[d] - 1]
        for d in range(len(shape))
    ]
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"# model: {model}\n")
        fh.write(f"# component: {component}\n")
        fh.write(f"# geometry: {cops.geometry.value}\n")
        fh.write(f"# dims: {' '.join(str(d) for d in shape)}\n")
        fh.write(f"# step: {step}\n")
        fh.write(f"# t: {_FLOAT_FMT % t}\n")
        for name, grid in zip(names, grids):
            fh.write(
                f"# grid_{name}: " + " ".join(_FLOAT_FMT % g for g in grid) + "\n"
            )
        fh.write(",".join(["i", "j", "k"][: len(shape)] + names + ["value"]) + "\n")
        values = field.reshape(-1, order="F")
        for row in range(values.size):
            cells = [str(col[row]) for col in index_cols]
            cells += [_FLOAT_FMT % col[row] for col in coord_cols]
            cells.append(_FLOAT_FMT % values[row])
            fh.write(",".join(cells) + "\n")


def write_timeseries(path: Path, names: list[str], rows: list[tuple]) -> None:
    """CSV with columns t, mean_<component>..., one row per sample."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(",".join(["t"] + [f"mean_{n}" for n in names]) + "\n")
        for row in rows:
            fh.write(",".join(_FLOAT_FMT % x for x in row) + "\n")
