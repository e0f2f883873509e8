"""Checked-in grid fixtures: published precision/recall measurements.

Each CSV re-encodes a published table of how well Pythia predictors forecast
the memorized set of the fully trained 12B model (or its deduplicated twin),
one grid row per predictor. They replay through the grid/frontier/recommend
machinery without any record files, standing in for measurements that are far
beyond desk-scale compute to reproduce.

Grid targets: the size grids and the checkpoint grids both target the fully
trained 12B model of their respective suite.
"""

from __future__ import annotations

from importlib.resources import files

from . import scaling

SIZE_GRID = "pythia_size_grid"
CHECKPOINT_GRID = "pythia_12b_checkpoint_grid"
DEDUPED_SIZE_GRID = "pythia_deduped_size_grid"
DEDUPED_CHECKPOINT_GRID = "pythia_deduped_12b_checkpoint_grid"

ALL = (SIZE_GRID, CHECKPOINT_GRID, DEDUPED_SIZE_GRID, DEDUPED_CHECKPOINT_GRID)


def fixture_text(name: str) -> str:
    if name not in ALL:
        raise KeyError(f"unknown fixture {name!r}; have {ALL}")
    return files("memforecast").joinpath(f"fixtures/{name}.csv").read_text("utf-8")


def load_grid(name: str) -> list[scaling.GridRow]:
    return scaling.grid_from_csv(fixture_text(name))


def combined_12b_grid() -> list[scaling.GridRow]:
    """Size rows plus 12B checkpoint rows: every predictor of 12B-final."""
    return load_grid(SIZE_GRID) + load_grid(CHECKPOINT_GRID)
