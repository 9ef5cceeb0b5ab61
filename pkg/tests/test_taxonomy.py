import pytest

from cabblab.corpus import parse_catalog
from cabblab.taxonomy import TaxonomyError, build_taxonomy, serialize_taxonomy
from conftest import catalog_lines


def _catalog(rows):
    return parse_catalog(catalog_lines(rows))


def test_leaf_ids_are_dense_over_sorted_paths():
    catalog = _catalog(
        [
            ("p1", "shop/zoo", "a1"),
            ("p2", "shop/apparel/shoes", "a1"),
            ("p3", "shop/apparel/hats", "a2"),
            ("p4", "shop/apparel/shoes", "a3"),
        ]
    )
    tax = build_taxonomy(catalog)
    assert tax.leaf_count == 3
    assert list(tax.leaves) == [0, 1, 2]
    # lexicographic: apparel/hats < apparel/shoes < zoo
    assert tax.path_string(0) == "shop/apparel/hats"
    assert tax.path_string(1) == "shop/apparel/shoes"
    assert tax.path_string(2) == "shop/zoo"
    assert tax.leaf("p1") == 2
    assert tax.leaf("p2") == tax.leaf("p4") == 1
    assert tax.leaf("p3") == 0


def test_leaf_assignment_is_input_order_independent():
    rows = [
        ("p1", "b/x", "a1"),
        ("p2", "a/y", "a1"),
        ("p3", "c/z", "a1"),
    ]
    tax_fwd = build_taxonomy(_catalog(rows))
    tax_rev = build_taxonomy(_catalog(list(reversed(rows))))
    assert tax_fwd.leaf_of == tax_rev.leaf_of
    assert tax_fwd.path_of == tax_rev.path_of


def test_unknown_product_raises():
    tax = build_taxonomy(_catalog([("p1", "a/b", "a1")]))
    with pytest.raises(TaxonomyError, match="p9"):
        tax.leaf("p9")


def test_empty_catalog_rejected():
    with pytest.raises(ValueError, match="empty catalog"):
        build_taxonomy({})


def test_single_path_catalog_is_one_leaf():
    tax = build_taxonomy(_catalog([("p1", "a/b", "a1"), ("p2", "a/b", "a2")]))
    assert tax.leaf_count == 1
    assert tax.leaf("p1") == tax.leaf("p2") == 0


def test_serialize_taxonomy_lines():
    tax = build_taxonomy(_catalog([("p1", "b/y", "a1"), ("p2", "a/x", "a1")]))
    assert list(serialize_taxonomy(tax)) == ["0\ta/x\n", "1\tb/y\n"]
