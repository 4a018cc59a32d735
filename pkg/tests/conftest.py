from __future__ import annotations

import pytest

from rejoin_lab.catalog import AttributeStats, Catalog, RelationStats


@pytest.fixture
def abcd_catalog() -> Catalog:
    """Four relations with the statistics used by the documented examples:
    A(1000), B(2000), C(500), D(10000)."""
    return Catalog(
        relations=(
            RelationStats("A", 1000, (AttributeStats("id", 1000), AttributeStats("a1", 100))),
            RelationStats(
                "B",
                2000,
                (AttributeStats("id", 1000), AttributeStats("a2", 500), AttributeStats("id2", 2000)),
            ),
            RelationStats("C", 500, (AttributeStats("id3", 500), AttributeStats("x", 50))),
            RelationStats(
                "D",
                10000,
                (AttributeStats("id2", 2000), AttributeStats("id3", 500), AttributeStats("y", 10)),
            ),
        )
    )
