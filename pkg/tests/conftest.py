import numpy as np
import pytest

from shipplume.grid import GridImage, GridSpec


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_image(rng, n_rows=None, n_cols=None, invalid_fraction=0.15,
                 lat_min=31.5, lon_min=19.5, cell=0.045):
    """A random raster with some invalid cells (always at least two valid)."""
    n_rows = n_rows or int(rng.integers(3, 19))
    n_cols = n_cols or int(rng.integers(3, 19))
    spec = GridSpec(lat_min=lat_min, lon_min=lon_min, cell_size=cell,
                    n_rows=n_rows, n_cols=n_cols)
    values = rng.normal(size=(n_rows, n_cols))
    valid = rng.random((n_rows, n_cols)) >= invalid_fraction
    if valid.sum() < 2:
        valid[0, 0] = valid[-1, -1] = True
    values = np.where(valid, values, np.nan)
    return GridImage(spec, values, valid)
