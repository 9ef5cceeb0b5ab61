"""Shared builders for small hand-written corpora."""

import pytest

from cabblab.corpus import parse_corpus


def event_lines(rows):
    """TSV event lines from (session, user, product, type, ts) tuples."""
    return [f"{s}\t{u}\t{p}\t{e}\t{t}\n" for (s, u, p, e, t) in rows]


def catalog_lines(rows):
    """TSV catalog lines from (product, path, advertiser) tuples."""
    return [f"{p}\t{path}\t{a}\n" for (p, path, a) in rows]


def make_corpus(event_rows, catalog_rows):
    return parse_corpus(event_lines(event_rows), catalog_lines(catalog_rows))


@pytest.fixture
def tiny_corpus():
    """One user, two sessions, two categories; s1 buys the clicked product,
    s2 buys a different product than the click."""
    catalog = [
        ("p1", "shop/electronics/phones", "adv1"),
        ("p2", "shop/electronics/cases", "adv2"),
        ("p3", "shop/garden/tools", "adv1"),
    ]
    events = [
        ("s1", "u1", "p1", "impression", 1000),
        ("s1", "u1", "p1", "click", 2000),
        ("s1", "u1", "p1", "purchase", 9000),
        ("s2", "u1", "p2", "click", 20000),
        ("s2", "u1", "p3", "purchase", 29000),
        ("s2", "u1", "p2", "add_to_cart", 25000),
    ]
    return make_corpus(events, catalog)
