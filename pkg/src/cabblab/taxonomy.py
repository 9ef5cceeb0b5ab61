"""Leaf-category resolution from catalog paths.

A leaf is a distinct full category path. Leaf ids are dense integers
assigned over lexicographically sorted paths, so two runs over the same
catalog always agree and similarity matrices stay comparable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .corpus import CatalogEntry


class TaxonomyError(KeyError):
    pass


@dataclass
class Taxonomy:
    leaf_count: int
    leaf_of: dict[str, int]
    path_of: list[tuple[str, ...]]

    @property
    def leaves(self) -> range:
        return range(self.leaf_count)

    def leaf(self, product_id: str) -> int:
        """Leaf id of a product; unknown products raise, never default."""
        try:
            return self.leaf_of[product_id]
        except KeyError:
            raise TaxonomyError(f"product {product_id!r} not in taxonomy") from None

    def path_string(self, leaf_id: int) -> str:
        return "/".join(self.path_of[leaf_id])


def build_taxonomy(catalog: dict[str, CatalogEntry]) -> Taxonomy:
    if not catalog:
        raise ValueError("cannot build a taxonomy from an empty catalog")
    paths = sorted({entry.category_path for entry in catalog.values()})
    leaf_ids = {path: i for i, path in enumerate(paths)}
    leaf_of = {pid: leaf_ids[entry.category_path] for pid, entry in catalog.items()}
    path_of = [tuple(path.split("/")) for path in paths]
    return Taxonomy(leaf_count=len(paths), leaf_of=leaf_of, path_of=path_of)


def serialize_taxonomy(taxonomy: Taxonomy) -> Iterable[str]:
    for leaf_id in taxonomy.leaves:
        yield f"{leaf_id}\t{taxonomy.path_string(leaf_id)}\n"
