"""Event log ingestion and the time-indexed follower graph.

The graph is stored as a flat table of edge validity intervals
``[start, end)`` sorted by followee (and a second ordering by follower),
so "who followed whom at time t" is a slice plus a mask.  An event with
timestamp ``ts`` is considered applied at every query time ``t >= ts``.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

log = logging.getLogger(__name__)

HOUR = 3600
DAY = 24 * HOUR
NEG_INF = -(2**62)
POS_INF = 2**62


class EventKind(str, Enum):
    FOLLOW = "follow"
    UNFOLLOW = "unfollow"
    TWEET = "tweet"
    RETWEET = "retweet"


KIND_CODES = {EventKind.FOLLOW: 0, EventKind.UNFOLLOW: 1, EventKind.TWEET: 2, EventKind.RETWEET: 3}
CODE_KINDS = {v: k for k, v in KIND_CODES.items()}


class SeriesKind(str, Enum):
    """What an hourly series counts for a user."""

    FOLLOWS = "follows"  # incoming follows
    UNFOLLOWS = "unfollows"  # incoming unfollows
    TWEETS = "tweets"  # tweets authored
    RETWEETS = "retweets"  # retweets received


# (event kind code, whether the series user is the event target)
_SERIES_SOURCE = {
    SeriesKind.FOLLOWS: (0, True),
    SeriesKind.UNFOLLOWS: (1, True),
    SeriesKind.TWEETS: (2, False),
    SeriesKind.RETWEETS: (3, True),
}


class IngestError(ValueError):
    """Malformed or inconsistent input; carries the offending file and line."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)


@dataclass(frozen=True)
class Event:
    ts: int
    seq: int
    kind: EventKind
    actor: str
    target: str | None = None
    tweet_id: str | None = None
    text: str | None = None

    def to_json(self) -> str:
        obj = {"ts": self.ts, "seq": self.seq, "kind": self.kind.value, "actor": self.actor}
        if self.target is not None:
            obj["target"] = self.target
        if self.tweet_id is not None:
            obj["tweet_id"] = self.tweet_id
        if self.text is not None:
            obj["text"] = self.text
        return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)


@dataclass
class HourlySeries:
    user: str
    kind: SeriesKind
    x: np.ndarray
    t0: int


# ---------------------------------------------------------------------------
# file formats


def read_snapshot(path) -> list[tuple[str, str]]:
    """Read ``follower_id,followee_id`` lines."""
    edges = []
    path = str(path)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise IngestError("expected 'follower_id,followee_id'", path, lineno)
            if parts[0] == parts[1]:
                raise IngestError("self-follow edge", path, lineno)
            edges.append((parts[0], parts[1]))
    return edges


def write_snapshot(path, edges: Iterable[tuple[str, str]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for f, g in edges:
            fh.write(f"{f},{g}\n")


def parse_event(obj: dict, path: str | None = None, lineno: int | None = None) -> Event:
    try:
        ts = obj["ts"]
        seq = obj["seq"]
        kind = EventKind(obj["kind"])
        actor = obj["actor"]
    except KeyError as exc:
        raise IngestError(f"missing key {exc.args[0]!r}", path, lineno) from None
    except ValueError:
        raise IngestError(f"unknown kind {obj.get('kind')!r}", path, lineno) from None
    if not isinstance(ts, int) or isinstance(ts, bool) or not isinstance(seq, int) or isinstance(seq, bool):
        raise IngestError("ts and seq must be integers", path, lineno)
    if not isinstance(actor, str) or not actor:
        raise IngestError("actor must be a non-empty string", path, lineno)
    target = obj.get("target")
    if kind is EventKind.TWEET:
        if target is not None:
            raise IngestError("tweet events carry no target", path, lineno)
    else:
        if not isinstance(target, str) or not target:
            raise IngestError(f"{kind.value} event requires a target", path, lineno)
        if target == actor:
            raise IngestError("actor equals target", path, lineno)
    text = obj.get("text")
    if text is not None and kind not in (EventKind.TWEET, EventKind.RETWEET):
        raise IngestError("text only allowed on tweet/retweet", path, lineno)
    tweet_id = obj.get("tweet_id")
    return Event(ts, seq, kind, actor, target, None if tweet_id is None else str(tweet_id), text)


def iter_events(path) -> Iterator[tuple[int, Event]]:
    path = str(path)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestError(f"invalid JSON ({exc.msg})", path, lineno) from None
            if not isinstance(obj, dict):
                raise IngestError("expected a JSON object", path, lineno)
            yield lineno, parse_event(obj, path, lineno)


def read_events(path) -> list[Event]:
    return [ev for _, ev in iter_events(path)]


def write_events(path, events: Iterable[Event]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ev in events:
            fh.write(ev.to_json())
            fh.write("\n")


# ---------------------------------------------------------------------------
# graph


def _gather_rows(ptr: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    """Concatenated CSR row positions for ``nodes``."""
    nodes = np.asarray(nodes, dtype=np.int64)
    if nodes.size == 0:
        return np.zeros(0, dtype=np.int64)
    starts = ptr[nodes]
    lengths = ptr[nodes + 1] - starts
    total = int(lengths.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64)
    offsets = np.repeat(starts - np.concatenate(([0], np.cumsum(lengths)[:-1])), lengths)
    return offsets + np.arange(total, dtype=np.int64)


class TemporalGraph:
    """Immutable follower graph with per-edge validity intervals plus the event log.

    Users are addressed by string id in the public query methods and by
    dense integer index in the ``*_idx`` variants used by the pipeline.
    """

    def __init__(self, users, t_start, t_end, edge_src, edge_dst, edge_start, edge_end,
                 n_initial_edges, ev_ts, ev_seq, ev_kind, ev_actor, ev_target, ev_tweet_id, ev_text):
        self.users: list[str] = list(users)
        self.index: dict[str, int] = {u: k for k, u in enumerate(self.users)}
        self.t_start = int(t_start)
        self.t_end = int(t_end)
        self.n_hours = math.ceil((self.t_end - self.t_start) / HOUR)
        self.n_initial_edges = int(n_initial_edges)
        n = len(self.users)

        order = np.lexsort((edge_start, edge_src, edge_dst))
        self.src = np.asarray(edge_src, dtype=np.int64)[order]
        self.dst = np.asarray(edge_dst, dtype=np.int64)[order]
        self.start = np.asarray(edge_start, dtype=np.int64)[order]
        self.end = np.asarray(edge_end, dtype=np.int64)[order]
        self.in_ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.dst, minlength=n), out=self.in_ptr[1:])
        self.out_order = np.lexsort((self.start, self.dst, self.src))
        self.out_ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.src, minlength=n), out=self.out_ptr[1:])

        self.ev_ts = np.asarray(ev_ts, dtype=np.int64)
        self.ev_seq = np.asarray(ev_seq, dtype=np.int64)
        self.ev_kind = np.asarray(ev_kind, dtype=np.int8)
        self.ev_actor = np.asarray(ev_actor, dtype=np.int64)
        self.ev_target = np.asarray(ev_target, dtype=np.int64)
        self.ev_tweet_id = list(ev_tweet_id)
        self.ev_text = list(ev_text)
        self._hourly_cache: dict[SeriesKind, np.ndarray] = {}

    # -- bookkeeping -------------------------------------------------------
    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_events(self) -> int:
        return int(self.ev_ts.size)

    def kind_counts(self) -> dict[str, int]:
        counts = np.bincount(self.ev_kind, minlength=4)
        return {CODE_KINDS[c].value: int(counts[c]) for c in range(4)}

    def event(self, k: int) -> Event:
        tgt = int(self.ev_target[k])
        return Event(
            int(self.ev_ts[k]), int(self.ev_seq[k]), CODE_KINDS[int(self.ev_kind[k])],
            self.users[int(self.ev_actor[k])], None if tgt < 0 else self.users[tgt],
            self.ev_tweet_id[k], self.ev_text[k],
        )

    def events(self, kind: EventKind | None = None) -> Iterator[Event]:
        """Iterate events in log order, optionally of a single kind."""
        if kind is None:
            idx = range(self.n_events)
        else:
            idx = np.flatnonzero(self.ev_kind == KIND_CODES[EventKind(kind)])
        for k in idx:
            yield self.event(int(k))

    def event_indices(self, kind: EventKind) -> np.ndarray:
        return np.flatnonzero(self.ev_kind == KIND_CODES[EventKind(kind)])

    def hour_of(self, ts) -> np.ndarray:
        return (np.asarray(ts, dtype=np.int64) - self.t_start) // HOUR

    def hour_start(self, hour: int) -> int:
        return self.t_start + int(hour) * HOUR

    def initial_edges(self) -> list[tuple[str, str]]:
        m = self.start == NEG_INF
        return [(self.users[s], self.users[d]) for s, d in zip(self.src[m].tolist(), self.dst[m].tolist())]

    # -- time-travel queries ----------------------------------------------
    def followers_idx(self, u: int, t: int) -> np.ndarray:
        lo, hi = self.in_ptr[u], self.in_ptr[u + 1]
        m = (self.start[lo:hi] <= t) & (self.end[lo:hi] > t)
        return self.src[lo:hi][m]

    def followers_of_many_idx(self, nodes, t: int) -> tuple[np.ndarray, np.ndarray]:
        """(follower, followee) pairs live at ``t`` for every followee in ``nodes``."""
        rows = _gather_rows(self.in_ptr, nodes)
        m = (self.start[rows] <= t) & (self.end[rows] > t)
        rows = rows[m]
        return self.src[rows], self.dst[rows]

    def following_idx(self, u: int, t: int) -> np.ndarray:
        rows = self.out_order[self.out_ptr[u]:self.out_ptr[u + 1]]
        m = (self.start[rows] <= t) & (self.end[rows] > t)
        return self.dst[rows[m]]

    def indegree_idx(self, t: int) -> np.ndarray:
        live = (self.start <= t) & (self.end > t)
        return np.bincount(self.dst[live], minlength=self.n_users)

    def two_hop_idx(self, u: int, t: int, first_hop: np.ndarray | None = None) -> np.ndarray:
        f1 = self.followers_idx(u, t) if first_hop is None else first_hop
        if f1.size == 0:
            return f1
        src, _ = self.followers_of_many_idx(f1, t)
        w = np.unique(src)
        w = w[w != u]
        return np.setdiff1d(w, f1, assume_unique=True)

    def followers_at(self, u: str, t: int) -> set[str]:
        k = self.index.get(u)
        if k is None:
            return set()
        return {self.users[v] for v in self.followers_idx(k, t).tolist()}

    def two_hop_at(self, u: str, t: int) -> set[str]:
        k = self.index.get(u)
        if k is None:
            return set()
        return {self.users[v] for v in self.two_hop_idx(k, t).tolist()}

    # -- hourly counts -----------------------------------------------------
    def hourly_matrix(self, kind: SeriesKind) -> np.ndarray:
        """Dense ``(n_users, n_hours)`` count matrix for one series kind."""
        kind = SeriesKind(kind)
        mat = self._hourly_cache.get(kind)
        if mat is None:
            code, by_target = _SERIES_SOURCE[kind]
            sel = self.ev_kind == code
            who = (self.ev_target if by_target else self.ev_actor)[sel]
            hours = self.hour_of(self.ev_ts[sel])
            flat = np.bincount(who * self.n_hours + hours, minlength=self.n_users * self.n_hours)
            mat = flat.reshape(self.n_users, self.n_hours).astype(np.int32)
            mat.setflags(write=False)
            self._hourly_cache[kind] = mat
        return mat

    def hourly_series(self, u: str, kind: SeriesKind) -> HourlySeries:
        kind = SeriesKind(kind)
        k = self.index.get(u)
        if k is None:
            x = np.zeros(self.n_hours, dtype=np.int32)
        else:
            x = np.array(self.hourly_matrix(kind)[k])
        return HourlySeries(u, kind, x, self.t_start)


# ---------------------------------------------------------------------------
# building


def build_graph(initial_edges: Iterable[tuple[str, str]], events: Iterable[Event], *,
                t_start: int | None = None, t_end: int | None = None,
                on_conflict: str = "reject", events_path: str | None = None,
                _linenos: Iterable[int] | None = None) -> TemporalGraph:
    """Replay ``events`` on top of ``initial_edges`` and index the result.

    ``on_conflict`` controls duplicate follows and phantom unfollows:
    ``"reject"`` raises :class:`IngestError`, ``"skip"`` drops the event with a warning.
    Events must be strictly ordered by ``(ts, seq)``.  When the window is not
    given it is inferred as [first event's day, last event's hour + 1).
    """
    if on_conflict not in ("reject", "skip"):
        raise ValueError("on_conflict must be 'reject' or 'skip'")
    users: list[str] = []
    index: dict[str, int] = {}

    def uid(name: str) -> int:
        k = index.get(name)
        if k is None:
            k = index[name] = len(users)
            users.append(name)
        return k

    live: dict[tuple[int, int], int] = {}
    for f, g in initial_edges:
        key = (uid(f), uid(g))
        if key in live:
            raise IngestError(f"duplicate snapshot edge {f},{g}")
        live[key] = NEG_INF

    events = list(events)
    linenos = list(_linenos) if _linenos is not None else list(range(1, len(events) + 1))
    if events:
        first, last = events[0].ts, events[-1].ts
        if t_start is None:
            t_start = first - (first % DAY)
        if t_end is None:
            t_end = last + 1 + (-(last + 1) % HOUR)
    else:
        t_start = 0 if t_start is None else t_start
        t_end = t_start + HOUR if t_end is None else t_end
    if t_end <= t_start:
        raise IngestError("empty observation window")

    closed_src, closed_dst, closed_start, closed_end = [], [], [], []
    ev_ts, ev_seq, ev_kind, ev_actor, ev_target, ev_tid, ev_text = [], [], [], [], [], [], []
    prev = None
    for ev, lineno in zip(events, linenos):
        key_t = (ev.ts, ev.seq)
        if prev is not None and key_t <= prev:
            raise IngestError(f"events not strictly ordered by (ts, seq): {key_t} after {prev}",
                              events_path, lineno)
        prev = key_t
        if not t_start <= ev.ts < t_end:
            raise IngestError(f"timestamp {ev.ts} outside window [{t_start}, {t_end})", events_path, lineno)
        a = uid(ev.actor)
        b = uid(ev.target) if ev.target is not None else -1
        if ev.kind is EventKind.FOLLOW:
            if (a, b) in live:
                if on_conflict == "reject":
                    raise IngestError(f"duplicate follow {ev.actor}->{ev.target}", events_path, lineno)
                log.warning("skipping duplicate follow %s->%s (line %s)", ev.actor, ev.target, lineno)
                continue
            live[(a, b)] = ev.ts
        elif ev.kind is EventKind.UNFOLLOW:
            started = live.pop((a, b), None)
            if started is None:
                if on_conflict == "reject":
                    raise IngestError(f"unfollow of non-existent edge {ev.actor}->{ev.target}",
                                      events_path, lineno)
                log.warning("skipping phantom unfollow %s->%s (line %s)", ev.actor, ev.target, lineno)
                continue
            closed_src.append(a)
            closed_dst.append(b)
            closed_start.append(started)
            closed_end.append(ev.ts)
        ev_ts.append(ev.ts)
        ev_seq.append(ev.seq)
        ev_kind.append(KIND_CODES[ev.kind])
        ev_actor.append(a)
        ev_target.append(b)
        ev_tid.append(ev.tweet_id)
        ev_text.append(ev.text)

    for (a, b), started in live.items():
        closed_src.append(a)
        closed_dst.append(b)
        closed_start.append(started)
        closed_end.append(POS_INF)
    n_initial = sum(1 for s in closed_start if s == NEG_INF)
    return TemporalGraph(users, t_start, t_end, closed_src, closed_dst, closed_start, closed_end,
                         n_initial, ev_ts, ev_seq, ev_kind, ev_actor, ev_target, ev_tid, ev_text)


def ingest(snapshot_path, events_path, *, t_start: int | None = None, t_end: int | None = None,
           on_conflict: str = "reject") -> TemporalGraph:
    """Load a snapshot file and an event log into a :class:`TemporalGraph`."""
    edges = read_snapshot(snapshot_path)
    linenos, events = [], []
    for lineno, ev in iter_events(events_path):
        linenos.append(lineno)
        events.append(ev)
    g = build_graph(edges, events, t_start=t_start, t_end=t_end, on_conflict=on_conflict,
                    events_path=str(events_path), _linenos=linenos)
    log.info("ingested %d users, %d initial edges, events %s", g.n_users, g.n_initial_edges, g.kind_counts())
    return g


def window_of(path: str | Path) -> tuple[int, int] | None:
    """Observation window stored next to generated data (``window.json``), if any."""
    p = Path(path).parent / "window.json"
    if not p.exists():
        return None
    obj = json.loads(p.read_text())
    return int(obj["t_start"]), int(obj["t_end"])
