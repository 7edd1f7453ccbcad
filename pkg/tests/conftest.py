import numpy as np
import pytest

from voxsynth.dataset import load_bundled_replica
from voxsynth.tabular import Column, Schema, Table


@pytest.fixture(scope="session")
def corpus():
    """The bundled stand-in corpus (UCI-shaped: 195 rows, 48/147, 31 subjects)."""
    return load_bundled_replica()


@pytest.fixture()
def toy_schema():
    return Schema(
        columns=(
            Column("x", "continuous"),
            Column("y", "continuous"),
            Column("status", "discrete", categories=(0, 1)),
        ),
        target_column="status",
    )


def make_toy_table(schema, x, y, status):
    return Table(
        schema,
        {
            "x": np.asarray(x, dtype=float),
            "y": np.asarray(y, dtype=float),
            "status": np.asarray(status, dtype=object),
        },
    )
