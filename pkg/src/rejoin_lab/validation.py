"""Input-validation helpers shared across the package."""

from __future__ import annotations

import numpy as np

from .catalog import Catalog, CatalogError
from .query import JoinQuery, QueryError


def as_rng(seed: int | np.random.Generator | None) -> np.random.Generator:
    """Coerce an int seed, Generator, or None into a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def check_query_against_catalog(query: JoinQuery, catalog: Catalog) -> None:
    """Raise if the query references names the catalog does not define."""
    for name in query.relations:
        if not catalog.has_relation(name):
            raise QueryError(f"query {query.id!r} references unknown relation {name!r}")
    for jp in query.join_predicates:
        catalog.relation(jp.left_relation).attribute(jp.left_attribute)
        catalog.relation(jp.right_relation).attribute(jp.right_attribute)
    for sp in query.selection_predicates:
        catalog.relation(sp.relation).attribute(sp.attribute)


def check_is_fitted(estimator, attributes: tuple[str, ...]) -> None:
    missing = [a for a in attributes if getattr(estimator, a, None) is None]
    if missing:
        raise RuntimeError(
            f"{type(estimator).__name__} is not fitted yet; call fit() before using "
            f"{', '.join(missing)}"
        )


__all__ = ["as_rng", "check_query_against_catalog", "check_is_fitted", "CatalogError", "QueryError"]
