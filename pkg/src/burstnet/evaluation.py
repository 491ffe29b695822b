"""Burst-prediction experiment, precision-recall scoring and descriptive statistics."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .burst import Burst, CoBurst, CoBurstType, KindResiduals, residuals_for_kind
from .events import HOUR, KIND_CODES, EventKind, SeriesKind, TemporalGraph
from .model import ModelParams, exposure_idx, score_parts
from .textsim import TfIdfVectors

METHODS = ("model", "exposures", "retweets", "followers", "random")
N_RANDOM_PERMUTATIONS = 100


def average_precision(ranked_labels) -> float:
    """Mean over positives of the precision at each positive's rank."""
    y = np.asarray(ranked_labels, dtype=np.float64)
    n_pos = y.sum()
    if n_pos == 0:
        raise ValueError("average precision is undefined without positives")
    hits = np.cumsum(y)
    ranks = np.arange(1, y.size + 1)
    return float(np.sum((hits / ranks)[y == 1]) / n_pos)


def rank(scores, labels, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Order items by descending score, breaking ties by a seeded shuffle.

    Undefined scores (``None`` or NaN) go last.  Returns ``(order, ranked labels)``.
    """
    s = np.array([np.nan if v is None else v for v in scores], dtype=np.float64)
    labels = np.asarray(labels)
    perm = np.random.default_rng(seed).permutation(s.size)
    key = np.where(np.isnan(s[perm]), np.inf, -s[perm])
    order = perm[np.argsort(key, kind="stable")]
    return order, labels[order]


def pr_curve(ranked_labels) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(ranked_labels, dtype=np.float64)
    hits = np.cumsum(y)
    return hits / np.arange(1, y.size + 1), hits / max(y.sum(), 1)


@dataclass
class LabeledBurst:
    burst: Burst
    label: int
    scores: dict[str, float | None] = field(default_factory=dict)


@dataclass
class PRResult:
    method: str
    ranked_labels: np.ndarray
    auc: float
    n_undefined: int = 0


def label_bursts(bursts: Sequence[Burst], cobursts: Sequence[CoBurst]) -> list[LabeledBurst]:
    """Retweet bursts labelled 1 when paired with a follow burst within one hour."""
    hit = {c.trigger.id for c in cobursts if c.type == CoBurstType.RETWEET_FOLLOW and c.lag_hours <= 1}
    rts = [b for b in bursts if SeriesKind(b.kind) == SeriesKind.RETWEETS]
    return [LabeledBurst(b, int(b.id in hit)) for b in rts]


def score_bursts(g: TemporalGraph, labeled: Sequence[LabeledBurst], params: ModelParams | None,
                 vectors: TfIdfVectors | None, methods: Sequence[str] = METHODS,
                 follow_bursts: Sequence[Burst] = ()) -> None:
    """Fill ``scores`` of every labelled burst for the requested methods."""
    prior: dict[str, list[int]] = {}
    for b in follow_bursts:
        prior.setdefault(b.user, []).append(b.hour)
    for lst in prior.values():
        lst.sort()
    indeg_cache: dict[int, np.ndarray] = {}
    for lb in labeled:
        b = lb.burst
        i = g.index[b.user]
        t0, t1 = g.hour_start(b.hour), g.hour_start(b.end_hour + 1)
        n2 = exposed = None
        if "model" in methods or "exposures" in methods:
            f1 = g.followers_idx(i, t0)
            n2 = g.two_hop_idx(i, t0, first_hop=f1)
            exposed = exposure_idx(g, i, t0, t1, n2)
        if "model" in methods:
            lb.scores["model"] = score_parts(params, g, vectors, i, t0, exposed, n2).score
        if "exposures" in methods:
            lb.scores["exposures"] = float(exposed.size)
        if "retweets" in methods:
            lb.scores["retweets"] = float(b.raw_count)
        if "followers" in methods:
            lb.scores["followers"] = float(g.followers_idx(i, t0).size)
        if "follow_bursts" in methods:
            lb.scores["follow_bursts"] = float(np.searchsorted(prior.get(b.user, []), b.hour))
        if "random" in methods:
            lb.scores["random"] = 0.0


def run_experiment(g: TemporalGraph, labeled: Sequence[LabeledBurst], params: ModelParams | None = None,
                   vectors: TfIdfVectors | None = None, methods: Sequence[str] = METHODS, *,
                   train_burst_ids=(), follow_bursts: Sequence[Burst] = (), seed: int = 0) -> list[PRResult]:
    """Rank held-out retweet bursts by each method and report average precision.

    ``train_burst_ids`` are the burst ids tagged on the observations used to
    fit ``params``; any overlap with the evaluated bursts is an error.  The
    random method reports the mean AP over seeded permutations.
    """
    shared = {lb.burst.id for lb in labeled} & {b for b in train_burst_ids if b}
    if shared:
        raise ValueError(f"{len(shared)} bursts appear in both training and evaluation, e.g. {sorted(shared)[0]}")
    if not labeled:
        raise ValueError("no bursts to evaluate")
    labels = np.array([lb.label for lb in labeled], dtype=np.int8)
    if labels.sum() == 0:
        raise ValueError("no positive bursts; average precision undefined")
    missing = [m for m in methods if m != "random" and any(m not in lb.scores for lb in labeled)]
    if missing:
        score_bursts(g, labeled, params, vectors, missing, follow_bursts)
    out = []
    for k, m in enumerate(methods):
        ss = np.random.SeedSequence([seed, k])
        if m == "random":
            seeds = ss.generate_state(N_RANDOM_PERMUTATIONS)
            aps = []
            first = None
            for s in seeds:
                perm = np.random.default_rng(int(s)).permutation(labels.size)
                aps.append(average_precision(labels[perm]))
                if first is None:
                    first = labels[perm]
            out.append(PRResult(m, first, float(np.mean(aps))))
            continue
        scores = [lb.scores.get(m) for lb in labeled]
        n_undef = sum(1 for s in scores if s is None or (isinstance(s, float) and np.isnan(s)))
        _, ranked = rank(scores, labels, int(ss.generate_state(1)[0]))
        out.append(PRResult(m, ranked, average_precision(ranked), n_undef))
    return out


# ---------------------------------------------------------------------------
# magnitudes


@dataclass
class MagnitudeTable:
    retweet_sigma: np.ndarray
    follow_sigma: np.ndarray
    users: list[str]
    hours: list[int]

    @property
    def pearson(self) -> float:
        if self.retweet_sigma.size < 2 or np.std(self.retweet_sigma) == 0 or np.std(self.follow_sigma) == 0:
            return float("nan")
        return float(np.corrcoef(self.retweet_sigma, self.follow_sigma)[0, 1])


def magnitude_correlation(g: TemporalGraph, retweet_bursts: Sequence[Burst], min_count: int = 5) -> MagnitudeTable:
    """Pair each retweet burst's peak z-score with the follow z-score one hour later."""
    rts = [b for b in retweet_bursts if SeriesKind(b.kind) == SeriesKind.RETWEETS]
    if not rts:
        return MagnitudeTable(np.zeros(0), np.zeros(0), [], [])
    rows = np.unique([g.index[b.user] for b in rts])
    res_r = residuals_for_kind(g, SeriesKind.RETWEETS, min_count, rows=rows)
    res_f = residuals_for_kind(g, SeriesKind.FOLLOWS, min_count, rows=rows)
    xs, ys, us, hs = [], [], [], []
    for b in rts:
        i = g.index[b.user]
        zr, zf = res_r.z(i), res_f.z(i)
        if zr is None or zf is None:
            continue
        h = b.hour + int(np.argmax(zr[b.hour:b.end_hour + 1]))
        if h + 1 >= g.n_hours:
            continue
        xs.append(zr[h])
        ys.append(zf[h + 1])
        us.append(b.user)
        hs.append(h)
    return MagnitudeTable(np.asarray(xs), np.asarray(ys), us, hs)


# ---------------------------------------------------------------------------
# descriptive statistics

EXPOSURE_WINDOW_HOURS = 24


def exposure_flags_streaming(g: TemporalGraph, window_hours: int = EXPOSURE_WINDOW_HOURS) -> np.ndarray:
    """Per follow event: was the follower exposed to the followee via a retweet?

    Replays the log in order, keeping live follower sets and, per
    (viewer, author) pair, the time of the latest retweet of the author by
    someone the viewer followed at that moment.
    """
    followers: dict[int, set[int]] = {}
    for s, d in zip(g.src[g.start < g.t_start].tolist(), g.dst[g.start < g.t_start].tolist()):
        followers.setdefault(d, set()).add(s)
    last_seen: dict[tuple[int, int], int] = {}
    W = window_hours * HOUR
    F, U, R = KIND_CODES[EventKind.FOLLOW], KIND_CODES[EventKind.UNFOLLOW], KIND_CODES[EventKind.RETWEET]
    flags = []
    for kind, ts, a, b in zip(g.ev_kind.tolist(), g.ev_ts.tolist(), g.ev_actor.tolist(), g.ev_target.tolist()):
        if kind == F:
            t_seen = last_seen.get((a, b))
            flags.append(t_seen is not None and t_seen >= ts - W)
            followers.setdefault(b, set()).add(a)
        elif kind == U:
            followers.get(b, set()).discard(a)
        elif kind == R:
            for j in followers.get(a, ()):
                last_seen[(j, b)] = ts
    return np.asarray(flags, dtype=bool)


def exposure_flags_query(g: TemporalGraph, window_hours: int = EXPOSURE_WINDOW_HOURS) -> np.ndarray:
    """Same flags as :func:`exposure_flags_streaming` from time-travel queries."""
    W = window_hours * HOUR
    fsel = g.event_indices(EventKind.FOLLOW)
    rsel = g.event_indices(EventKind.RETWEET)
    by_author: dict[int, list[int]] = {}
    for k in rsel.tolist():
        by_author.setdefault(int(g.ev_target[k]), []).append(k)
    flags = np.zeros(fsel.size, dtype=bool)
    for n, k in enumerate(fsel.tolist()):
        j, i, t = int(g.ev_actor[k]), int(g.ev_target[k]), int(g.ev_ts[k])
        cand = by_author.get(i)
        if not cand:
            continue
        for r in reversed(cand):
            if r > k:
                continue
            ts_r = int(g.ev_ts[r])
            if ts_r < t - W:
                break
            if j in g.followers_idx(int(g.ev_actor[r]), ts_r):
                flags[n] = True
                break
    return flags


def _log_bins(values: np.ndarray, per_decade: int = 4) -> np.ndarray:
    top = max(1.0, float(values.max()) if values.size else 1.0)
    return np.unique(np.floor(np.logspace(0, np.log10(top) + 1e-9, int(np.ceil(np.log10(top) * per_decade)) + 2)))


@dataclass
class DescriptiveStats:
    n_users: int
    n_initial_edges: int
    n_follows: int
    n_unfollows: int
    n_tweets: int
    n_retweets: int
    churn_fraction: float
    creation_fraction: float
    deletion_fraction: float
    deletion_per_creation: float
    top_quintile_share: float
    exposure_fraction: float
    exposure_fraction_query: float | None
    degree_curve: list[dict] = field(default_factory=list)
    tweet_curve: list[dict] = field(default_factory=list)

    def rows(self) -> list[tuple[str, float]]:
        keys = ["n_users", "n_initial_edges", "n_follows", "n_unfollows", "n_tweets", "n_retweets",
                "churn_fraction", "creation_fraction", "deletion_fraction", "deletion_per_creation",
                "top_quintile_share", "exposure_fraction", "exposure_fraction_query"]
        return [(k, getattr(self, k)) for k in keys]


def descriptive_stats(g: TemporalGraph, check_exposure: bool = False) -> DescriptiveStats:
    """Churn, concentration, exposure and degree-binned activity of the log."""
    counts = g.kind_counts()
    nf, nu = counts["follow"], counts["unfollow"]
    n0 = g.n_initial_edges
    indeg0 = g.indegree_idx(g.t_start - 1)
    F, U = KIND_CODES[EventKind.FOLLOW], KIND_CODES[EventKind.UNFOLLOW]
    recv_f = np.bincount(g.ev_target[g.ev_kind == F], minlength=g.n_users)
    recv_u = np.bincount(g.ev_target[g.ev_kind == U], minlength=g.n_users)
    tweets = np.bincount(g.ev_actor[g.ev_kind == KIND_CODES[EventKind.TWEET]], minlength=g.n_users)
    rts = np.bincount(g.ev_target[g.ev_kind == KIND_CODES[EventKind.RETWEET]], minlength=g.n_users)

    top_share = 0.0
    if nf + nu > 0 and g.n_users:
        n_top = max(1, int(round(0.2 * g.n_users)))
        top = np.argsort(-indeg0, kind="stable")[:n_top]
        top_share = float((recv_f[top] + recv_u[top]).sum() / (nf + nu))

    flags = exposure_flags_streaming(g)
    exp_frac = float(flags.mean()) if flags.size else 0.0
    exp_q = None
    if check_exposure:
        q = exposure_flags_query(g)
        exp_q = float(q.mean()) if q.size else 0.0

    degree_curve = []
    if g.n_users:
        edges = _log_bins(indeg0)
        b = np.clip(np.searchsorted(edges, np.maximum(indeg0, 1), side="right") - 1, 0, edges.size - 1)
        for k in range(edges.size):
            m = (b == k) & (indeg0 > 0)
            if m.any():
                degree_curve.append({"degree_lo": int(edges[k]), "n": int(m.sum()),
                                     "follows": float(recv_f[m].mean()), "unfollows": float(recv_u[m].mean()),
                                     "tweets": float(tweets[m].mean()), "retweets": float(rts[m].mean())})
    tweet_curve = []
    has = indeg0 > 0
    if has.any():
        edges = np.concatenate(([0], _log_bins(tweets[has])))
        edges = np.unique(edges)
        b = np.searchsorted(edges, tweets, side="right") - 1
        for k in range(edges.size):
            m = (b == k) & has
            if m.any():
                tweet_curve.append({"tweets_lo": int(edges[k]), "n": int(m.sum()),
                                    "unfollows_per_follower": float((recv_u[m] / indeg0[m]).mean())})
    def frac(x):
        return x / n0 if n0 else 0.0

    return DescriptiveStats(
        g.n_users, n0, nf, nu, counts["tweet"], counts["retweet"],
        frac(nf + nu), frac(nf), frac(nu), nu / nf if nf else 0.0,
        top_share, exp_frac, exp_q, degree_curve, tweet_curve)
