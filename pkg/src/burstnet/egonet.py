"""Follower ego-network metrics and their trajectories around bursts."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .burst import CoBurst
from .events import HOUR, DAY, NEG_INF, Event, EventKind, TemporalGraph
from .textsim import TfIdfVector, TfIdfVectors, cosine

COHERENCE_CAP = 500
COHERENCE_PAIRS = 10_000
DEFAULT_OFFSETS = tuple(range(-4, 5))


@dataclass
class EgoSnapshot:
    """Followers of ``center`` at ``t`` and the follow edges among them.

    ``member_idx`` holds graph indices (sorted); ``edge_pos`` holds edges as
    positions into ``members``.
    """

    center: str
    t: int
    members: list[str]
    edges: list[tuple[str, str]]
    member_idx: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    edge_pos: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))

    @classmethod
    def from_edges(cls, center: str, t: int, members: Iterable[str], edges: Iterable[tuple[str, str]]):
        members = sorted(set(members) - {center})
        pos = {m: k for k, m in enumerate(members)}
        edges = sorted({(a, b) for a, b in edges if a in pos and b in pos and a != b})
        ep = np.array([(pos[a], pos[b]) for a, b in edges], dtype=np.int64).reshape(-1, 2)
        return cls(center, t, members, edges, np.arange(len(members)), ep)

    @property
    def k(self) -> int:
        return len(self.members)


def _snapshot_idx(g: TemporalGraph, c: int, t: int) -> tuple[np.ndarray, np.ndarray]:
    members = np.sort(g.followers_idx(c, t))
    members = members[members != c]
    if members.size == 0:
        return members, np.zeros((0, 2), dtype=np.int64)
    src, dst = g.followers_of_many_idx(members, t)
    pos_src = np.searchsorted(members, src)
    pos_src = np.minimum(pos_src, members.size - 1)
    keep = members[pos_src] == src
    pos_dst = np.searchsorted(members, dst[keep])
    return members, np.stack([pos_src[keep], pos_dst], axis=1)


def ego_snapshot(g: TemporalGraph, u: str, t: int) -> EgoSnapshot:
    """Members and induced directed edges of ``u``'s follower ego-network at ``t``."""
    c = g.index.get(u)
    if c is None:
        return EgoSnapshot(u, t, [], [])
    members, ep = _snapshot_idx(g, c, t)
    names = [g.users[m] for m in members.tolist()]
    edges = sorted((names[a], names[b]) for a, b in ep.tolist())
    order = np.lexsort((ep[:, 1], ep[:, 0])) if ep.size else np.zeros(0, dtype=np.int64)
    return EgoSnapshot(u, t, names, edges, members, ep[order])


def _wcc(k: int, ep: np.ndarray) -> int:
    if k == 0:
        return 0
    adj = sparse.coo_matrix((np.ones(len(ep)), (ep[:, 0], ep[:, 1])), shape=(k, k))
    return int(connected_components(adj, directed=True, connection="weak")[0])


def wcc_count(s: EgoSnapshot) -> int:
    """Number of weakly connected components of the ego-network."""
    return _wcc(s.k, s.edge_pos)


def edge_density(s: EgoSnapshot) -> float | None:
    """``|E| / (k (k - 1))``; ``None`` when fewer than two members."""
    k = s.k
    if k < 2:
        return None
    return len(s.edge_pos) / (k * (k - 1))


def _vector(vectors: Mapping[str, TfIdfVector], u: str) -> TfIdfVector:
    v = vectors.get(u) if hasattr(vectors, "get") else None
    return v if v is not None else TfIdfVector({}, 0.0)


def follower_similarity(s: EgoSnapshot, vectors: Mapping[str, TfIdfVector],
                        center_vector: TfIdfVector | None = None) -> tuple[float | None, int]:
    """Mean similarity between the center and its members.

    Returns ``(mean, n_excluded)``; members with a zero vector are excluded
    and counted, and the mean is ``None`` when no member is usable.
    """
    cv = center_vector if center_vector is not None else _vector(vectors, s.center)
    sims, excluded = [], 0
    for m in s.members:
        v = _vector(vectors, m)
        if v.norm == 0:
            excluded += 1
            continue
        sims.append(cosine(cv, v))
    if not sims:
        return None, excluded
    return float(np.mean(sims)), excluded


def _coherence_from_unit(unit: sparse.csr_matrix, cap: int, n_pairs: int, seed: int) -> float | None:
    k = unit.shape[0]
    if k < 2:
        return None
    if k <= cap:
        gram = (unit @ unit.T).toarray()
        iu = np.triu_indices(k, 1)
        return float(np.clip(gram[iu], 0.0, 1.0).mean())
    rng = np.random.default_rng(seed)
    a = rng.integers(0, k, n_pairs)
    b = rng.integers(0, k - 1, n_pairs)
    b = b + (b >= a)
    vals = np.asarray(unit[a].multiply(unit[b]).sum(axis=1)).ravel()
    return float(np.clip(vals, 0.0, 1.0).mean())


def follower_coherence(s: EgoSnapshot, vectors: Mapping[str, TfIdfVector], cap: int = COHERENCE_CAP,
                       n_pairs: int = COHERENCE_PAIRS, seed: int = 0) -> float | None:
    """Mean pairwise similarity among members with a non-zero vector.

    Exact over all unordered pairs up to ``cap`` usable members, otherwise
    estimated from ``n_pairs`` uniformly drawn pairs.
    """
    vecs = [v for v in (_vector(vectors, m) for m in s.members) if v.norm > 0]
    if len(vecs) < 2:
        return None
    vocab: dict[str, int] = {}
    rows, cols, vals = [], [], []
    for r, v in enumerate(vecs):
        for tok, w in v.weights.items():
            rows.append(r)
            cols.append(vocab.setdefault(tok, len(vocab)))
            vals.append(w / v.norm)
    unit = sparse.csr_matrix((vals, (rows, cols)), shape=(len(vecs), max(1, len(vocab))))
    return _coherence_from_unit(unit, cap, n_pairs, seed)


# ---------------------------------------------------------------------------
# metrics as functions of (graph, center index, time)

Metric = Callable[[TemporalGraph, int, int], "float | None"]


def similarity_metric(vectors: TfIdfVectors) -> Metric:
    def metric(g, c, t):
        members, _ = _snapshot_idx(g, c, t)
        if members.size == 0 or not vectors.has_vector_idx(np.array([c]))[0]:
            return None
        ok = vectors.has_vector_idx(members)
        if not ok.any():
            return None
        return float(vectors.similarities_idx(c, members[ok]).mean())
    return metric


def coherence_metric(vectors: TfIdfVectors, cap: int = COHERENCE_CAP, n_pairs: int = COHERENCE_PAIRS,
                     seed: int = 0) -> Metric:
    def metric(g, c, t):
        members, _ = _snapshot_idx(g, c, t)
        members = members[vectors.has_vector_idx(members)] if members.size else members
        if members.size < 2:
            return None
        unit = vectors.unit[vectors._graph_rows[members]]
        return _coherence_from_unit(unit, cap, n_pairs, seed)
    return metric


def wcc_metric(g, c, t):
    members, ep = _snapshot_idx(g, c, t)
    return float(_wcc(members.size, ep))


def density_metric(g, c, t):
    members, ep = _snapshot_idx(g, c, t)
    k = members.size
    return None if k < 2 else len(ep) / (k * (k - 1))


def standard_metrics(vectors: TfIdfVectors | None) -> dict[str, Metric]:
    out = {}
    if vectors is not None:
        out["similarity"] = similarity_metric(vectors)
        out["coherence"] = coherence_metric(vectors)
    out["wcc"] = wcc_metric
    out["density"] = density_metric
    return out


# ---------------------------------------------------------------------------
# curves and accelerations


@dataclass
class MetricCurve:
    metric: str
    offsets: list[int]
    values: list[float]
    counts: list[int]
    n_skipped: int = 0

    def at(self, offset: int) -> float:
        return self.values[self.offsets.index(offset)]

    def slope(self) -> float:
        """Least-squares slope of the relative value per day."""
        ok = [k for k, n in enumerate(self.counts) if n > 0]
        x = np.asarray(self.offsets, dtype=float)[ok]
        y = np.asarray(self.values)[ok]
        return float(np.polyfit(x, y, 1)[0]) if len(ok) >= 2 else float("nan")


def hour_end(g: TemporalGraph, hour: int) -> int:
    """Last second of ``hour``; the state at this instant includes its events."""
    return g.t_start + (int(hour) + 1) * HOUR - 1


def burst_instant(g: TemporalGraph, b: CoBurst) -> int:
    return hour_end(g, b.hour)


def metric_curves(g: TemporalGraph, bursts: Sequence[CoBurst], metric: Metric, offsets=DEFAULT_OFFSETS,
                  name: str = "metric") -> MetricCurve:
    """Mean of ``metric(t_b + offset days) / metric(t_b)`` over bursts.

    Bursts whose metric is undefined or zero at the burst instant are
    skipped and counted; offsets falling outside the observation window
    are left out of that offset's average.
    """
    if not bursts:
        raise ValueError("metric_curves needs at least one burst")
    offsets = [int(o) for o in offsets]
    if 0 not in offsets:
        offsets = sorted(offsets + [0])
    sums = np.zeros(len(offsets))
    counts = np.zeros(len(offsets), dtype=np.int64)
    skipped = 0
    for b in bursts:
        c = g.index[b.user]
        t_b = burst_instant(g, b)
        v0 = metric(g, c, t_b)
        if v0 is None or v0 == 0 or not np.isfinite(v0):
            skipped += 1
            continue
        for k, o in enumerate(offsets):
            if o == 0:
                sums[k] += 1.0
                counts[k] += 1
                continue
            t = t_b + o * DAY
            if t < g.t_start or t >= g.t_end:
                continue
            v = metric(g, c, t)
            if v is None:
                continue
            sums[k] += v / v0
            counts[k] += 1
    if skipped == len(bursts):
        raise ValueError(f"metric {name!r} undefined at every burst instant")
    values = [float(s / n) if n else float("nan") for s, n in zip(sums, counts)]
    values[offsets.index(0)] = 1.0
    return MetricCurve(name, offsets, values, counts.tolist(), skipped)


@dataclass
class Acceleration:
    metric: str
    burst_rate: float
    baseline_rate: float
    percent: float | None
    n_bursts: int
    n_skipped: int

    @property
    def direction(self) -> str:
        """Sign of the in-burst change."""
        return "increase" if self.burst_rate > 0 else "decrease" if self.burst_rate < 0 else "flat"


def rate_acceleration(g: TemporalGraph, bursts: Sequence[CoBurst], metric: Metric,
                      name: str = "metric") -> Acceleration:
    """How much faster a metric changes inside burst windows than overall.

    The burst window runs from the start of the trigger burst to the end of
    the response burst.  Rates are per hour and averaged over bursts; the
    result is ``(burst_rate / baseline_rate - 1) * 100``.  With a negative
    baseline a positive percentage means the decrease is faster, and a
    value below -100 means the burst reverses the overall trend.
    """
    if not bursts:
        raise ValueError("rate_acceleration needs at least one burst")
    t_first, t_last = g.t_start, g.t_end - 1
    span_all = (t_last - t_first) / HOUR
    inside, whole = [], []
    skipped = 0
    for b in bursts:
        c = g.index[b.user]
        lo = hour_end(g, b.trigger.hour - 1)
        hi = hour_end(g, b.response.end_hour)
        vals = [metric(g, c, t) for t in (lo, hi, t_first, t_last)]
        if any(v is None for v in vals):
            skipped += 1
            continue
        inside.append((vals[1] - vals[0]) / ((hi - lo) / HOUR))
        whole.append((vals[3] - vals[2]) / span_all)
    if not inside:
        return Acceleration(name, float("nan"), float("nan"), None, 0, skipped)
    br, bl = float(np.mean(inside)), float(np.mean(whole))
    pct = None if bl == 0 else (br / bl - 1.0) * 100.0
    return Acceleration(name, br, bl, pct, len(inside), skipped)


# ---------------------------------------------------------------------------
# randomized-recipient control


def shuffled_control(initial_edges: Iterable[tuple[str, str]], events: Iterable[Event],
                     seed: int = 0, users: Sequence[str] | None = None) -> list[Event]:
    """Replace follow/unfollow recipients by random users, keeping actors and times.

    Each follow is redirected to a uniformly drawn user other than the
    actor that the actor does not currently follow.  An unfollow of an edge
    created by a redirected follow removes the redirected edge; an unfollow
    of an initial edge removes a random live edge of the actor that is not
    itself a redirected one.  The result replays cleanly on
    ``initial_edges``.
    """
    events = list(events)
    initial_edges = list(initial_edges)
    if users is None:
        seen = {}
        for a, b in initial_edges:
            seen.setdefault(a, None)
            seen.setdefault(b, None)
        for e in events:
            seen.setdefault(e.actor, None)
            if e.target is not None:
                seen.setdefault(e.target, None)
        users = list(seen)
    users = list(users)
    n = len(users)
    rng = np.random.default_rng(seed)
    following: dict[str, set[str]] = {}
    for a, b in initial_edges:
        following.setdefault(a, set()).add(b)
    mapped: dict[tuple[str, str], str] = {}   # (actor, original target) -> redirected target
    redirected: dict[str, set[str]] = {}      # actor -> live redirected targets
    out = []
    for e in events:
        if e.kind == EventKind.FOLLOW:
            live = following.setdefault(e.actor, set())
            if len(live) >= n - 1:
                raise ValueError(f"{e.actor} already follows every user")
            while True:
                tgt = users[int(rng.integers(n))]
                if tgt != e.actor and tgt not in live:
                    break
            live.add(tgt)
            mapped[(e.actor, e.target)] = tgt
            redirected.setdefault(e.actor, set()).add(tgt)
            out.append(Event(e.ts, e.seq, e.kind, e.actor, tgt, e.tweet_id, e.text))
        elif e.kind == EventKind.UNFOLLOW:
            live = following.setdefault(e.actor, set())
            mine = redirected.setdefault(e.actor, set())
            tgt = mapped.pop((e.actor, e.target), None)
            if tgt is None:
                pool = sorted(live - mine)
                if pool:
                    tgt = pool[int(rng.integers(len(pool)))]
                elif e.target in live:
                    tgt = e.target
                else:
                    raise ValueError(f"cannot redirect unfollow by {e.actor} at ts={e.ts}")
            live.discard(tgt)
            mine.discard(tgt)
            out.append(Event(e.ts, e.seq, e.kind, e.actor, tgt, e.tweet_id, e.text))
        else:
            out.append(e)
    return out
