"""Elevation rasters and the geometry queries the rest of the package builds on.

Grids are immutable row-major arrays with ESRI ASCII text I/O, slope and
adjacency queries, exact line-of-sight / viewshed tests, and a handful of
synthetic terrain generators for desk-scale scenarios.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import IO, Iterable, NamedTuple

import numpy as np

DEFAULT_NODATA = -9999.0
DEFAULT_EYE_HEIGHT = 1.7  # meters above ground for sight queries

SQRT2 = math.sqrt(2.0)


class CellIndex(NamedTuple):
    """Grid coordinate; row 0 is the northernmost row."""

    row: int
    col: int


# Move offsets in fixed order. The tuple index doubles as the move-action
# code used by the local policy (8 = stay, defined in local_adapt).
NEIGHBOR_OFFSETS: tuple[tuple[int, int], ...] = (
    (-1, 0),   # n
    (-1, 1),   # ne
    (0, 1),    # e
    (1, 1),    # se
    (1, 0),    # s
    (1, -1),   # sw
    (0, -1),   # w
    (-1, -1),  # nw
)
DIRECTION_NAMES = ("n", "ne", "e", "se", "s", "sw", "w", "nw")

_OFFSET_TO_ACTION = {off: i for i, off in enumerate(NEIGHBOR_OFFSETS)}


class GridFormatError(ValueError):
    """Malformed ASCII grid input; carries the 1-based line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True, eq=False)
class ElevationGrid:
    """Georeferenced elevation raster (meters), immutable after construction.

    ``values`` is an (nrows, ncols) float array; cells equal to ``nodata``
    are holes that block both movement and sight. ``xll``/``yll`` locate the
    lower-left corner of the lower-left cell in projected meters.
    """

    ncols: int
    nrows: int
    xll: float
    yll: float
    cellsize: float
    nodata: float
    values: np.ndarray

    def __post_init__(self):
        if self.ncols <= 0 or self.nrows <= 0:
            raise ValueError("grid dimensions must be positive")
        if not (self.cellsize > 0):
            raise ValueError("cellsize must be positive")
        if not math.isfinite(self.nodata):
            raise ValueError("nodata sentinel must be finite")
        arr = np.asarray(self.values, dtype=float)
        if arr.size != self.nrows * self.ncols:
            raise ValueError(
                f"expected {self.nrows * self.ncols} values, got {arr.size}"
            )
        arr = arr.reshape(self.nrows, self.ncols).copy()
        mask = arr != self.nodata
        if not np.all(np.isfinite(arr[mask])):
            raise ValueError("non-nodata elevations must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    # -- cell queries -------------------------------------------------------

    def in_bounds(self, c: CellIndex) -> bool:
        return 0 <= c[0] < self.nrows and 0 <= c[1] < self.ncols

    def is_nodata(self, c: CellIndex) -> bool:
        return bool(self.values[c[0], c[1]] == self.nodata)

    def traversable(self, c: CellIndex) -> bool:
        return self.in_bounds(c) and not self.is_nodata(c)

    def elevation(self, c: CellIndex) -> float:
        z = float(self.values[c[0], c[1]])
        if z == self.nodata:
            raise ValueError(f"cell {tuple(c)} is nodata")
        return z

    def cell_center(self, c: CellIndex) -> tuple[float, float]:
        """Projected (easting, northing) of the cell center."""
        x = self.xll + (c[1] + 0.5) * self.cellsize
        y = self.yll + (self.nrows - 1 - c[0] + 0.5) * self.cellsize
        return x, y

    def cell_of_point(self, x: float, y: float) -> CellIndex:
        col = int(math.floor((x - self.xll) / self.cellsize))
        row = self.nrows - 1 - int(math.floor((y - self.yll) / self.cellsize))
        return CellIndex(row, col)

    def with_nodata(self, cells: Iterable[CellIndex]) -> "ElevationGrid":
        """Copy of the grid with the given cells punched out as nodata."""
        arr = np.array(self.values, dtype=float)
        for r, c in cells:
            arr[r, c] = self.nodata
        return ElevationGrid(
            self.ncols, self.nrows, self.xll, self.yll,
            self.cellsize, self.nodata, arr,
        )


@dataclass(frozen=True)
class SlopeSample:
    """Slope between two adjacent cells: percent == |rise| / run * 100."""

    percent: float
    rise: float
    run: float


# ---------------------------------------------------------------------------
# ESRI ASCII grid I/O
# ---------------------------------------------------------------------------

_HEADER_KEYS = {
    "ncols": "ncols",
    "nrows": "nrows",
    "xllcorner": "xll",
    "yllcorner": "yll",
    "cellsize": "cellsize",
    "nodata_value": "nodata",
}
_REQUIRED_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize")


def parse_ascii_grid(text: str | Iterable[str]) -> ElevationGrid:
    """Parse an ESRI ASCII grid.

    Header lines are ``key value`` pairs (case-insensitive keys, any
    whitespace); the optional ``NODATA_value`` defaults to -9999. Data rows
    follow, row 0 being the northernmost. Errors report 1-based line numbers.
    """
    if isinstance(text, str):
        lines = text.splitlines()
    else:
        lines = [ln.rstrip("\n") for ln in text]

    header: dict[str, float] = {}
    header_lines: dict[str, int] = {}
    data: list[float] = []
    expected: int | None = None
    lineno = 0
    in_header = True

    for lineno, raw in enumerate(lines, start=1):
        tokens = raw.split()
        if not tokens:
            continue
        if in_header and not _looks_numeric(tokens[0]):
            if len(tokens) != 2:
                raise GridFormatError(
                    f"header line must be 'key value', got {raw!r}", lineno
                )
            key = tokens[0].lower()
            if key not in _HEADER_KEYS:
                raise GridFormatError(f"unknown header key {tokens[0]!r}", lineno)
            try:
                header[key] = float(tokens[1])
            except ValueError:
                raise GridFormatError(
                    f"non-numeric value for {tokens[0]!r}: {tokens[1]!r}", lineno
                ) from None
            header_lines[key] = lineno
            continue

        if in_header:
            missing = [k for k in _REQUIRED_KEYS if k not in header]
            if missing:
                raise GridFormatError(
                    "missing header key(s): " + ", ".join(missing), lineno
                )
            _check_header(header, header_lines)
            expected = int(header["ncols"]) * int(header["nrows"])
            in_header = False

        for tok in tokens:
            try:
                v = float(tok)
            except ValueError:
                raise GridFormatError(f"non-numeric token {tok!r}", lineno) from None
            nodata = header.get("nodata_value", DEFAULT_NODATA)
            if not math.isfinite(v) and v != nodata:
                raise GridFormatError(f"non-finite value {tok!r}", lineno)
            data.append(v)
            if expected is not None and len(data) > expected:
                raise GridFormatError(
                    f"too many values: expected {expected}", lineno
                )

    if in_header:
        missing = [k for k in _REQUIRED_KEYS if k not in header]
        raise GridFormatError(
            "missing header key(s): " + ", ".join(missing) if missing
            else "no data rows",
            max(lineno, 1),
        )
    assert expected is not None
    if len(data) < expected:
        raise GridFormatError(
            f"too few values: expected {expected}, got {len(data)}", max(lineno, 1)
        )

    return ElevationGrid(
        ncols=int(header["ncols"]),
        nrows=int(header["nrows"]),
        xll=header["xllcorner"],
        yll=header["yllcorner"],
        cellsize=header["cellsize"],
        nodata=header.get("nodata_value", DEFAULT_NODATA),
        values=np.array(data, dtype=float),
    )


def _looks_numeric(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False


def _check_header(header: dict[str, float], lines: dict[str, int]) -> None:
    for key in ("ncols", "nrows"):
        v = header[key]
        if v != int(v) or int(v) <= 0:
            raise GridFormatError(
                f"{key} must be a positive integer, got {v}", lines[key]
            )
    if not header["cellsize"] > 0:
        raise GridFormatError(
            f"cellsize must be positive, got {header['cellsize']}",
            lines["cellsize"],
        )


def serialize_ascii_grid(grid: ElevationGrid) -> str:
    """Canonical ASCII form; ``parse_ascii_grid`` round-trips it exactly."""
    out = [
        f"ncols {grid.ncols}",
        f"nrows {grid.nrows}",
        f"xllcorner {_num(grid.xll)}",
        f"yllcorner {_num(grid.yll)}",
        f"cellsize {_num(grid.cellsize)}",
        f"NODATA_value {_num(grid.nodata)}",
    ]
    for r in range(grid.nrows):
        out.append(" ".join(_num(v) for v in grid.values[r]))
    return "\n".join(out) + "\n"


def _num(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# Slope and adjacency
# ---------------------------------------------------------------------------

def step_run(grid: ElevationGrid, a: CellIndex, b: CellIndex) -> float:
    """Horizontal run (meters) of one 8-connected move; raises if not adjacent."""
    dr, dc = b[0] - a[0], b[1] - a[1]
    if (dr, dc) not in _OFFSET_TO_ACTION:
        raise ValueError(f"cells {tuple(a)} and {tuple(b)} are not adjacent")
    return grid.cellsize * (SQRT2 if dr != 0 and dc != 0 else 1.0)


def slope_percent(grid: ElevationGrid, a: CellIndex, b: CellIndex) -> SlopeSample:
    """Slope of the move a -> b. Diagonal runs are cellsize * sqrt(2)."""
    run = step_run(grid, a, b)
    for c in (a, b):
        if not grid.in_bounds(c):
            raise ValueError(f"cell {tuple(c)} out of bounds")
        if grid.is_nodata(c):
            raise ValueError(f"cell {tuple(c)} is nodata")
    rise = grid.elevation(b) - grid.elevation(a)
    return SlopeSample(percent=abs(rise) / run * 100.0, rise=rise, run=run)


def neighbors(grid: ElevationGrid, c: CellIndex) -> list[CellIndex]:
    """In-bounds, non-nodata 8-neighbors of ``c``.

    A diagonal neighbor is dropped when both of its flanking orthogonal
    cells are nodata, so paths cannot slip through a sealed corner.
    """
    if not grid.in_bounds(c):
        raise ValueError(f"cell {tuple(c)} out of bounds")
    out = []
    for dr, dc in NEIGHBOR_OFFSETS:
        nb = CellIndex(c[0] + dr, c[1] + dc)
        if not grid.in_bounds(nb) or grid.is_nodata(nb):
            continue
        if dr != 0 and dc != 0:
            side_a = CellIndex(c[0] + dr, c[1])
            side_b = CellIndex(c[0], c[1] + dc)
            if _blocked(grid, side_a) and _blocked(grid, side_b):
                continue
        out.append(nb)
    return out


def _blocked(grid: ElevationGrid, c: CellIndex) -> bool:
    return not grid.in_bounds(c) or grid.is_nodata(c)


# ---------------------------------------------------------------------------
# Line of sight and viewshed
# ---------------------------------------------------------------------------

def line_of_sight(
    grid: ElevationGrid,
    a: CellIndex,
    b: CellIndex,
    observer_height: float = DEFAULT_EYE_HEIGHT,
    target_height: float = DEFAULT_EYE_HEIGHT,
) -> bool:
    """True when nothing rises above the sight line between two cells.

    The segment runs from ``observer_height`` above the ground at ``a`` to
    ``target_height`` above the ground at ``b``. Every cell the segment
    crosses (exact integer traversal between cell centers) is compared
    against the linearly interpolated line height at the midpoint of the
    crossing; nodata cells are opaque. Exact corner contacts check both
    touching cells, which makes sealed diagonal corners opaque as well.
    """
    a = CellIndex(int(a[0]), int(a[1]))
    b = CellIndex(int(b[0]), int(b[1]))
    for c in (a, b):
        if not grid.in_bounds(c):
            raise ValueError(f"cell {tuple(c)} out of bounds")
        if grid.is_nodata(c):
            raise ValueError(f"cell {tuple(c)} is nodata")
    if a == b:
        return True
    # Canonical direction keeps the computation bit-identical under swap.
    if (b.row, b.col) < (a.row, a.col):
        a, b = b, a
        observer_height, target_height = target_height, observer_height

    za = grid.elevation(a) + observer_height
    zb = grid.elevation(b) + target_height
    zdiff = zb - za
    dr = b.row - a.row
    dc = b.col - a.col

    # Boundary crossings as exact fractions of the segment parameter:
    # the ray row coordinate is a.row + 1/2 + t*dr, so integer level L is
    # crossed at t = (2L - 2*a.row - 1) / (2*dr); likewise for columns.
    events: list[tuple[Fraction, int]] = []
    if dr != 0:
        for level in range(min(a.row, b.row) + 1, max(a.row, b.row) + 1):
            events.append((Fraction(2 * level - 2 * a.row - 1, 2 * dr), 1))
    if dc != 0:
        for level in range(min(a.col, b.col) + 1, max(a.col, b.col) + 1):
            events.append((Fraction(2 * level - 2 * a.col - 1, 2 * dc), 2))
    events.sort(key=lambda e: (e[0], e[1]))

    sr = 1 if dr > 0 else -1
    sc = 1 if dc > 0 else -1
    endpoints = {(a.row, a.col), (b.row, b.col)}

    def cell_blocks(rr: int, cc: int, tm: float) -> bool:
        z = float(grid.values[rr, cc])
        if z == grid.nodata:
            return True
        return z > za + tm * zdiff

    r, c = a.row, a.col
    t_prev = Fraction(0)
    i = 0
    n = len(events)
    while i < n:
        t = events[i][0]
        kinds = 0
        while i < n and events[i][0] == t:
            kinds |= events[i][1]
            i += 1
        if (r, c) not in endpoints:
            tm = (float(t_prev) + float(t)) / 2.0
            if cell_blocks(r, c, tm):
                return False
        if kinds == 3:  # exact corner: both touching cells can occlude
            for rr, cc in ((r + sr, c), (r, c + sc)):
                if (rr, cc) not in endpoints and cell_blocks(rr, cc, float(t)):
                    return False
            r += sr
            c += sc
        elif kinds == 1:
            r += sr
        else:
            c += sc
        t_prev = t
    return True


def viewshed(
    grid: ElevationGrid,
    origin: CellIndex,
    radius: float,
    observer_height: float = DEFAULT_EYE_HEIGHT,
    target_height: float = DEFAULT_EYE_HEIGHT,
) -> np.ndarray:
    """Boolean visibility mask around ``origin`` out to ``radius`` meters.

    mask[r, c] is the line-of-sight result for every traversable cell whose
    center lies within the Euclidean radius; everything else is False.
    """
    origin = CellIndex(int(origin[0]), int(origin[1]))
    if not grid.traversable(origin):
        raise ValueError("viewshed origin must be a traversable cell")
    if not radius > 0:
        raise ValueError("radius must be positive")
    mask = np.zeros((grid.nrows, grid.ncols), dtype=bool)
    cs = grid.cellsize
    for r in range(grid.nrows):
        for c in range(grid.ncols):
            cell = CellIndex(r, c)
            if grid.is_nodata(cell):
                continue
            if math.hypot((r - origin.row) * cs, (c - origin.col) * cs) > radius:
                continue
            mask[r, c] = line_of_sight(
                grid, origin, cell, observer_height, target_height
            )
    return mask


def write_viewshed_pgm(mask: np.ndarray, f: IO[str]) -> None:
    """Write a visibility mask as plain PGM (P2): 0 = hidden, 1 = visible."""
    nrows, ncols = mask.shape
    f.write("P2\n")
    f.write(f"{ncols} {nrows}\n")
    f.write("1\n")
    for r in range(nrows):
        f.write(" ".join("1" if mask[r, c] else "0" for c in range(ncols)) + "\n")


def write_viewshed_csv(mask: np.ndarray, f: IO[str]) -> None:
    nrows, ncols = mask.shape
    for r in range(nrows):
        f.write(",".join("1" if mask[r, c] else "0" for c in range(ncols)) + "\n")


# ---------------------------------------------------------------------------
# Synthetic terrain
# ---------------------------------------------------------------------------

RECIPES = ("flat", "ramp", "ridge", "cone", "two_corridor")


def make_synthetic(
    kind: str,
    *,
    nrows: int,
    ncols: int,
    cellsize: float = 30.0,
    xll: float = 0.0,
    yll: float = 0.0,
    nodata: float = DEFAULT_NODATA,
    **params: float,
) -> ElevationGrid:
    """Deterministic terrain generators for desk-scale tests and scenarios.

    Recipes:
      flat(h)                   constant elevation ``h``.
      ramp(slope, axis)         elevation rising at ``slope`` percent along
                                ``axis`` ('x' = west->east, 'y' = south->north).
      ridge(height, position)   wall of ``height`` on column ``position``,
                                spanning from row nrows//4 to the south edge,
                                leaving a single northern gap to pass around.
      cone(peak, radius)        peak at the grid center falling linearly to 0
                                at ``radius`` meters.
      two_corridor(gentle, steep)
                                two routes between the endpoints returned by
                                :func:`two_corridor_endpoints`: a long detour
                                at ``gentle`` percent slope and a short direct
                                corridor at ``steep`` percent; everything else
                                is nodata. ``ncols`` must be odd.
    """
    if nrows <= 0 or ncols <= 0:
        raise ValueError("nrows and ncols must be positive")
    if kind == "flat":
        h = float(params.pop("h", 0.0))
        _no_extra(params)
        values = np.full((nrows, ncols), h)
    elif kind == "ramp":
        slope = float(params.pop("slope"))
        axis = str(params.pop("axis", "x"))
        _no_extra(params)
        if not 0 <= slope:
            raise ValueError("ramp slope must be non-negative")
        if axis not in ("x", "y"):
            raise ValueError("ramp axis must be 'x' or 'y'")
        frac = slope / 100.0
        if axis == "x":
            values = np.tile(np.arange(ncols) * cellsize * frac, (nrows, 1))
        else:
            northing = (nrows - 1 - np.arange(nrows)) * cellsize * frac
            values = np.tile(northing[:, None], (1, ncols))
    elif kind == "ridge":
        height = float(params.pop("height"))
        position = int(params.pop("position"))
        _no_extra(params)
        if height <= 0:
            raise ValueError("ridge height must be positive")
        if not 0 <= position < ncols:
            raise ValueError("ridge position out of range")
        values = np.zeros((nrows, ncols))
        values[nrows // 4:, position] = height
    elif kind == "cone":
        peak = float(params.pop("peak"))
        radius = float(params.pop("radius"))
        _no_extra(params)
        if peak <= 0 or radius <= 0:
            raise ValueError("cone peak and radius must be positive")
        cr, cc = (nrows - 1) / 2.0, (ncols - 1) / 2.0
        rr, cc_idx = np.meshgrid(np.arange(nrows), np.arange(ncols), indexing="ij")
        dist = np.hypot((rr - cr) * cellsize, (cc_idx - cc) * cellsize)
        values = np.maximum(0.0, peak * (1.0 - dist / radius))
    elif kind == "two_corridor":
        gentle = float(params.pop("gentle"))
        steep = float(params.pop("steep"))
        _no_extra(params)
        if not (0 <= gentle < steep):
            raise ValueError("need 0 <= gentle < steep")
        if nrows < 3 or ncols < 5 or ncols % 2 == 0:
            raise ValueError("two_corridor needs nrows >= 3 and odd ncols >= 5")
        mid = nrows // 2
        values = np.full((nrows, ncols), nodata)
        zig = (np.arange(ncols) % 2) * cellsize
        values[mid, :] = zig * (steep / 100.0)      # short, steep corridor
        values[0, :] = zig * (gentle / 100.0)       # long, gentle corridor
        values[0:mid + 1, 0] = 0.0                  # flat connectors
        values[0:mid + 1, ncols - 1] = 0.0
    else:
        raise ValueError(f"unknown recipe {kind!r}; expected one of {RECIPES}")
    return ElevationGrid(ncols, nrows, xll, yll, cellsize, nodata, values)


def _no_extra(params: dict) -> None:
    if params:
        raise ValueError(f"unexpected recipe parameter(s): {sorted(params)}")


def two_corridor_endpoints(grid: ElevationGrid) -> tuple[CellIndex, CellIndex]:
    """Designated start/goal markers of a two_corridor grid (west/east mid-row)."""
    mid = grid.nrows // 2
    return CellIndex(mid, 0), CellIndex(mid, grid.ncols - 1)


def grid_from_recipe(spec: str | dict) -> ElevationGrid:
    """Build a synthetic grid from a recipe spec.

    Accepts a dict (``{"recipe": "flat", "nrows": 10, ...}``) or a compact
    string of the form ``"flat:h=100,nrows=10,ncols=10,cellsize=30"``.
    """
    if isinstance(spec, str):
        kind, _, rest = spec.partition(":")
        params: dict[str, float] = {}
        if rest:
            for item in rest.split(","):
                key, _, val = item.partition("=")
                if not key or not val:
                    raise ValueError(f"bad recipe parameter {item!r}")
                params[key.strip()] = _coerce(val.strip())
        spec = {"recipe": kind.strip(), **params}
    spec = dict(spec)
    kind = str(spec.pop("recipe"))
    try:
        nrows = int(spec.pop("nrows"))
        ncols = int(spec.pop("ncols"))
    except KeyError as exc:
        raise ValueError(f"recipe needs {exc.args[0]}") from None
    cellsize = float(spec.pop("cellsize", 30.0))
    xll = float(spec.pop("xll", 0.0))
    yll = float(spec.pop("yll", 0.0))
    return make_synthetic(
        kind, nrows=nrows, ncols=ncols, cellsize=cellsize, xll=xll, yll=yll, **spec
    )


def _coerce(val: str):
    try:
        return int(val)
    except ValueError:
        pass
    try:
        return float(val)
    except ValueError:
        return val
