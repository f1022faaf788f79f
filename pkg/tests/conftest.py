import numpy as np
import pytest

from terramob.terrain import DEFAULT_NODATA, ElevationGrid


def rough_grid(seed: int, nrows: int = 32, ncols: int = 32,
               cellsize: float = 30.0, nodata_frac: float = 0.08,
               relief: float = 35.0) -> ElevationGrid:
    """Smoothed random terrain with a sprinkling of nodata holes.

    Corners are kept traversable so they can serve as start/goal cells.
    """
    rng = np.random.default_rng(seed)
    values = rng.uniform(0.0, relief, (nrows, ncols))
    for _ in range(2):
        padded = np.pad(values, 1, mode="edge")
        values = sum(
            padded[i:i + nrows, j:j + ncols] for i in range(3) for j in range(3)
        ) / 9.0
    holes = rng.random((nrows, ncols)) < nodata_frac
    holes[0, 0] = holes[nrows - 1, ncols - 1] = False
    values[holes] = DEFAULT_NODATA
    return ElevationGrid(ncols, nrows, 0.0, 0.0, cellsize, DEFAULT_NODATA, values)


@pytest.fixture
def flat10():
    from terramob.terrain import make_synthetic
    return make_synthetic("flat", nrows=10, ncols=10, cellsize=30.0, h=0.0)
