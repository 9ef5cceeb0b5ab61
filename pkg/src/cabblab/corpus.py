"""Session-log data model: events, catalog, parsing and summary stats.

External formats (tab-separated, UTF-8, no header):

* event file:   ``session_id  user_id  product_id  event_type  timestamp_ms``
* catalog file: ``product_id  category_path  advertiser_id`` with a
  slash-delimited category path, e.g. ``Home/Kitchen/CoffeeMakers``
* ground-truth file: ``session_id  intent_category  outcome_class`` (owned by
  :mod:`cabblab.synth` but parsed here alongside the other corpus files)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import IO, Iterable

IMPRESSION = "impression"
CLICK = "click"
ADD_TO_CART = "add_to_cart"
PURCHASE = "purchase"

EVENT_TYPES = frozenset({IMPRESSION, CLICK, ADD_TO_CART, PURCHASE})


class CorpusError(ValueError):
    """Malformed corpus input; message carries the offending line number."""


@dataclass(slots=True)
class Event:
    session_id: str
    user_id: str
    product_id: str
    event_type: str
    timestamp_ms: int


@dataclass(slots=True)
class CatalogEntry:
    product_id: str
    category_path: str
    advertiser_id: str

    def path_segments(self) -> tuple[str, ...]:
        return tuple(self.category_path.split("/"))


@dataclass
class Corpus:
    """Immutable-by-convention container of sessions and the product catalog.

    Invariants (enforced by the constructors in this module):

    * every event's product appears in the catalog,
    * events within a session are sorted ascending by timestamp, ties kept
      in input order,
    * all events of a session share one user id.
    """

    sessions: dict[str, list[Event]] = field(default_factory=dict)
    catalog: dict[str, CatalogEntry] = field(default_factory=dict)

    def n_events(self) -> int:
        return sum(len(evs) for evs in self.sessions.values())


def _parse_event_line(line: str, lineno: int) -> Event:
    parts = line.rstrip("\n").split("\t")
    if len(parts) != 5:
        raise CorpusError(f"event line {lineno}: expected 5 tab-separated fields, got {len(parts)}")
    sid, uid, pid, etype, ts = parts
    if not sid or not uid or not pid:
        raise CorpusError(f"event line {lineno}: empty identifier field")
    if etype not in EVENT_TYPES:
        raise CorpusError(f"event line {lineno}: unknown event_type {etype!r}")
    try:
        ts_ms = int(ts)
    except ValueError:
        raise CorpusError(f"event line {lineno}: timestamp_ms {ts!r} is not an integer") from None
    if ts_ms < 0:
        raise CorpusError(f"event line {lineno}: negative timestamp_ms {ts_ms}")
    return Event(sid, uid, pid, etype, ts_ms)


def _parse_catalog_line(line: str, lineno: int) -> CatalogEntry:
    parts = line.rstrip("\n").split("\t")
    if len(parts) != 3:
        raise CorpusError(f"catalog line {lineno}: expected 3 tab-separated fields, got {len(parts)}")
    pid, path, aid = parts
    if not pid or not aid:
        raise CorpusError(f"catalog line {lineno}: empty identifier field")
    segments = path.split("/")
    if not path or any(seg == "" for seg in segments):
        raise CorpusError(f"catalog line {lineno}: category_path {path!r} has empty segments")
    return CatalogEntry(pid, path, aid)


def parse_catalog(catalog_stream: Iterable[str] | IO[str]) -> dict[str, CatalogEntry]:
    catalog: dict[str, CatalogEntry] = {}
    for lineno, line in enumerate(catalog_stream, start=1):
        if not line.strip():
            continue
        entry = _parse_catalog_line(line, lineno)
        if entry.product_id in catalog:
            raise CorpusError(f"catalog line {lineno}: duplicate product_id {entry.product_id!r}")
        catalog[entry.product_id] = entry
    return catalog


def parse_corpus(event_stream: Iterable[str] | IO[str], catalog_stream: Iterable[str] | IO[str]) -> Corpus:
    """Parse event and catalog streams into a validated `Corpus`.

    Events are grouped by session and sorted ascending by timestamp with
    ties kept in input order. Raises `CorpusError` naming the offending
    line for malformed input, unknown event types, events referencing
    products absent from the catalog, or sessions spanning several users.
    """
    catalog = parse_catalog(catalog_stream)
    sessions: dict[str, list[Event]] = {}
    session_user: dict[str, str] = {}
    for lineno, line in enumerate(event_stream, start=1):
        if not line.strip():
            continue
        ev = _parse_event_line(line, lineno)
        if ev.product_id not in catalog:
            raise CorpusError(f"event line {lineno}: product {ev.product_id!r} not in catalog")
        seen_user = session_user.setdefault(ev.session_id, ev.user_id)
        if seen_user != ev.user_id:
            raise CorpusError(
                f"event line {lineno}: session {ev.session_id!r} has multiple user_ids "
                f"({seen_user!r}, {ev.user_id!r})"
            )
        sessions.setdefault(ev.session_id, []).append(ev)
    for evs in sessions.values():
        evs.sort(key=lambda e: e.timestamp_ms)  # stable: ties keep input order
    return Corpus(sessions=sessions, catalog=catalog)


def serialize_events(corpus: Corpus) -> Iterable[str]:
    """Event-file lines for `corpus`, sessions in sorted id order."""
    for sid in sorted(corpus.sessions):
        for ev in corpus.sessions[sid]:
            yield f"{ev.session_id}\t{ev.user_id}\t{ev.product_id}\t{ev.event_type}\t{ev.timestamp_ms}\n"


def serialize_catalog(catalog: dict[str, CatalogEntry]) -> Iterable[str]:
    for pid in sorted(catalog):
        entry = catalog[pid]
        yield f"{entry.product_id}\t{entry.category_path}\t{entry.advertiser_id}\n"


@dataclass(slots=True)
class StatsReport:
    """Corpus summary; conversion fractions are session-level.

    A converting session is CABA if some purchased product was clicked
    earlier in the session, and CABB if some purchased product was not
    (a session with several purchases can be both).
    """

    n_sessions: int
    n_users: int
    events_by_type: dict[str, int]
    converting_fraction: float
    caba_fraction: float
    cabb_fraction: float
    ground_truth_outcome_counts: dict[str, int] | None = None

    def lines(self) -> list[str]:
        out = [
            f"sessions\t{self.n_sessions}",
            f"users\t{self.n_users}",
        ]
        for etype in (IMPRESSION, CLICK, ADD_TO_CART, PURCHASE):
            out.append(f"events.{etype}\t{self.events_by_type.get(etype, 0)}")
        out.append(f"converting_fraction\t{self.converting_fraction:.6f}")
        out.append(f"caba_fraction\t{self.caba_fraction:.6f}")
        out.append(f"cabb_fraction\t{self.cabb_fraction:.6f}")
        if self.ground_truth_outcome_counts is not None:
            for outcome in sorted(self.ground_truth_outcome_counts):
                out.append(f"ground_truth.{outcome}\t{self.ground_truth_outcome_counts[outcome]}")
        return out


def corpus_stats(corpus: Corpus, ground_truth=None) -> StatsReport:
    """Counts of sessions and events plus CABA/CABB conversion fractions."""
    events_by_type: dict[str, int] = {t: 0 for t in EVENT_TYPES}
    users: set[str] = set()
    n_converting = 0
    n_caba = 0
    n_cabb = 0
    for evs in corpus.sessions.values():
        if evs:
            users.add(evs[0].user_id)
        for ev in evs:
            events_by_type[ev.event_type] += 1
        clicked_before: set[str] = set()
        caba = cabb = False
        converting = False
        for ev in evs:
            if ev.event_type == CLICK:
                clicked_before.add(ev.product_id)
            elif ev.event_type == PURCHASE:
                converting = True
                if ev.product_id in clicked_before:
                    caba = True
                else:
                    cabb = True
        n_converting += converting
        n_caba += caba
        n_cabb += cabb
    n_sessions = len(corpus.sessions)
    conv = n_converting / n_sessions if n_sessions else 0.0
    caba_frac = n_caba / n_converting if n_converting else 0.0
    cabb_frac = n_cabb / n_converting if n_converting else 0.0
    outcome_counts = None
    if ground_truth is not None:
        outcome_counts = {}
        for _, outcome in ground_truth.records.values():
            outcome_counts[outcome] = outcome_counts.get(outcome, 0) + 1
    return StatsReport(
        n_sessions=n_sessions,
        n_users=len(users),
        events_by_type=events_by_type,
        converting_fraction=conv,
        caba_fraction=caba_frac,
        cabb_fraction=cabb_frac,
        ground_truth_outcome_counts=outcome_counts,
    )
