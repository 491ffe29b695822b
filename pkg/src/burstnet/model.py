"""Exponential follow-probability law, its maximum-likelihood fit and burst scores."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .burst import Burst
from .events import HOUR, KIND_CODES, EventKind, TemporalGraph
from .textsim import TfIdfVectors, stats_from_similarities

P_CLAMP = 1.0 - 1e-9
N2_CAP = 200_000


@dataclass(frozen=True)
class ModelParams:
    C: float
    alpha: float
    fit_window_hours: int = 72
    n_obs: int = 0

    def to_json(self) -> str:
        return json.dumps({"C": self.C, "alpha": self.alpha, "n_obs": self.n_obs,
                           "window_hours": self.fit_window_hours}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelParams":
        d = json.loads(text)
        return cls(float(d["C"]), float(d["alpha"]), int(d.get("window_hours", 72)), int(d.get("n_obs", 0)))


def p_hat(params: ModelParams, Y):
    """``min(C exp(alpha Y), 1)``."""
    Y = np.asarray(Y, dtype=np.float64)
    with np.errstate(over="ignore"):
        p = np.minimum(params.C * np.exp(params.alpha * Y), 1.0)
    return float(p) if p.ndim == 0 else p


# ---------------------------------------------------------------------------
# observations


@dataclass(frozen=True)
class FollowObservation:
    i: int
    j: int
    Y: float
    label: int


@dataclass
class Observations:
    """Columnar follow observations; ``burst_id`` tags rows whose label window
    overlaps a retweet burst of the target (empty string otherwise)."""

    i: np.ndarray
    j: np.ndarray
    Y: np.ndarray
    label: np.ndarray
    burst_id: list[str] = field(default_factory=list)
    n_undefined: int = 0

    def __len__(self) -> int:
        return int(self.Y.size)

    def __iter__(self) -> Iterator[FollowObservation]:
        for a, b, y, l in zip(self.i.tolist(), self.j.tolist(), self.Y.tolist(), self.label.tolist()):
            yield FollowObservation(a, b, y, l)

    def subset(self, mask: np.ndarray) -> "Observations":
        ids = [b for b, m in zip(self.burst_id, mask.tolist()) if m] if self.burst_id else []
        return Observations(self.i[mask], self.j[mask], self.Y[mask], self.label[mask], ids, self.n_undefined)

    @classmethod
    def from_arrays(cls, Y, label) -> "Observations":
        Y = np.asarray(Y, dtype=np.float64)
        z = np.zeros(Y.size, dtype=np.int64)
        return cls(z, z, Y, np.asarray(label, dtype=np.int8))


class _FollowIndex:
    """Follow events grouped by target, for window lookups."""

    def __init__(self, g: TemporalGraph):
        sel = np.flatnonzero(g.ev_kind == KIND_CODES[EventKind.FOLLOW])
        tgt = g.ev_target[sel]
        order = np.lexsort((g.ev_ts[sel], tgt))
        self.ts = g.ev_ts[sel][order]
        self.actor = g.ev_actor[sel][order]
        self.ptr = np.zeros(g.n_users + 1, dtype=np.int64)
        np.cumsum(np.bincount(tgt, minlength=g.n_users), out=self.ptr[1:])

    def followers_between(self, i: int, lo: int, hi: int) -> np.ndarray:
        """Actors following ``i`` with ``lo < ts <= hi``."""
        a, b = self.ptr[i], self.ptr[i + 1]
        ts = self.ts[a:b]
        k0 = a + np.searchsorted(ts, lo, side="right")
        k1 = a + np.searchsorted(ts, hi, side="right")
        return self.actor[k0:k1]


def collect_observations(g: TemporalGraph, vectors: TfIdfVectors, tweet_events: Sequence[int] | None = None, *,
                         window_hours: int = 72, max_tweets: int | None = 2000, max_candidates: int = N2_CAP,
                         bursts: Sequence[Burst] = (), seed: int = 0) -> Observations:
    """Label 2-hop candidates of tweeting users by whether they follow within the window.

    For each sampled tweet of ``i`` at ``ts`` every ``j`` in N2(i, ts) gets
    ``Y_ij`` and the label ``Follow(j -> i)`` with ``ts < t <= ts + window``.
    Candidates with zero similarity have no ``Y`` and are skipped and
    counted, as are tweets whose author has undefined similarity moments.
    """
    if vectors._graph_rows is None or len(vectors._graph_rows) != g.n_users:
        vectors.bind(g)
    rng = np.random.default_rng(seed)
    if tweet_events is None:
        tweet_events = g.event_indices(EventKind.TWEET)
    tweet_events = np.asarray(tweet_events, dtype=np.int64)
    if max_tweets is not None and tweet_events.size > max_tweets:
        tweet_events = np.sort(rng.choice(tweet_events, max_tweets, replace=False))
    fidx = _FollowIndex(g)
    win = window_hours * HOUR
    by_user: dict[str, list[Burst]] = {}
    for b in bursts:
        by_user.setdefault(b.user, []).append(b)

    parts_i, parts_j, parts_y, parts_l, ids = [], [], [], [], []
    n_undef = 0
    for k in tweet_events.tolist():
        i, ts = int(g.ev_actor[k]), int(g.ev_ts[k])
        f1 = g.followers_idx(i, ts)
        stats = stats_from_similarities(g.users[i], vectors.similarities_idx(i, f1))
        n2 = g.two_hop_idx(i, ts, first_hop=f1)
        if not stats.defined or stats.sigma == 0:
            n_undef += int(n2.size)
            continue
        if n2.size > max_candidates:
            n2 = np.sort(rng.choice(n2, max_candidates, replace=False))
        S = vectors.similarities_idx(i, n2)
        ok = S > 0
        n_undef += int((~ok).sum())
        n2, S = n2[ok], S[ok]
        if n2.size == 0:
            continue
        Y = (np.log(S) - stats.mu) / stats.sigma
        lab = np.isin(n2, fidx.followers_between(i, ts, ts + win)).astype(np.int8)
        tag = ""
        h0, h1 = g.hour_of(ts), g.hour_of(ts + win)
        for b in by_user.get(g.users[i], ()):
            if b.hour <= h1 and b.end_hour >= h0:
                tag = b.id
                break
        parts_i.append(np.full(n2.size, i, dtype=np.int64))
        parts_j.append(n2)
        parts_y.append(Y)
        parts_l.append(lab)
        ids += [tag] * n2.size
    if not parts_y:
        e = np.zeros(0, dtype=np.int64)
        return Observations(e, e, np.zeros(0), np.zeros(0, dtype=np.int8), [], n_undef)
    return Observations(np.concatenate(parts_i), np.concatenate(parts_j), np.concatenate(parts_y),
                        np.concatenate(parts_l), ids, n_undef)


# ---------------------------------------------------------------------------
# fitting


class FitError(ValueError):
    pass


def log_likelihood(Y, label, C: float, alpha: float) -> float:
    Y = np.asarray(Y, dtype=np.float64)
    y = np.asarray(label, dtype=np.float64)
    p = np.minimum(C * np.exp(alpha * Y), P_CLAMP)
    return float(np.sum(y * np.log(p) + (1.0 - y) * np.log1p(-p)))


def _initial_guess(Y, y, n_bins=20):
    edges = np.unique(np.quantile(Y, np.linspace(0, 1, n_bins + 1)))
    if edges.size >= 3:
        b = np.clip(np.searchsorted(edges, Y, side="right") - 1, 0, edges.size - 2)
        n = np.bincount(b, minlength=edges.size - 1)
        pos = np.bincount(b, weights=y, minlength=edges.size - 1)
        my = np.bincount(b, weights=Y, minlength=edges.size - 1)
        ok = (pos > 0) & (n > 0)
        if ok.sum() >= 2:
            x = my[ok] / n[ok]
            r = np.log(pos[ok] / n[ok])
            slope, icpt = np.polyfit(x, r, 1, w=np.sqrt(pos[ok]))
            if np.isfinite(slope) and np.isfinite(icpt):
                return min(icpt, math.log(0.5)), slope
    return math.log(max(y.mean(), 1e-12)), 0.0


def fit(observations, C_fixed: float | None = None, max_iter: int = 100, tol: float = 1e-10) -> ModelParams:
    """Maximum-likelihood ``(C, alpha)`` by Newton's method on ``(ln C, alpha)``.

    ``p`` is clamped at ``1 - 1e-9``.  Iteration stops when the gradient of
    the mean log-likelihood has norm below ``tol``.  With ``C_fixed`` only
    ``alpha`` is estimated.
    """
    if isinstance(observations, Observations):
        Y, y = observations.Y, observations.label.astype(np.float64)
    else:
        obs = list(observations)
        Y = np.array([o.Y for o in obs], dtype=np.float64)
        y = np.array([o.label for o in obs], dtype=np.float64)
    n = Y.size
    if n == 0:
        raise FitError("no observations")
    n_pos = y.sum()
    if n_pos == 0 or n_pos == n:
        raise FitError(f"all observations carry label {int(y[0])}; both labels are needed")
    if Y[y == 1].min() > Y[y == 0].max():
        raise FitError("complete separation: every positive has larger Y than every negative")

    b0, a0 = _initial_guess(Y, y)
    theta = np.array([math.log(C_fixed) if C_fixed else b0, a0])
    free = [1] if C_fixed else [0, 1]

    def parts(th):
        eta = th[0] + th[1] * Y
        p = np.exp(np.minimum(eta, 0.0))
        inside = eta < math.log(P_CLAMP)
        p = np.where(inside, p, P_CLAMP)
        ll = float(np.sum(y * np.log(p) + (1.0 - y) * np.log1p(-p)))
        g1 = np.where(inside, (y - p) / (1.0 - p), 0.0)
        h1 = np.where(inside, p * (y - 1.0) / (1.0 - p) ** 2, 0.0)
        grad = np.array([g1.sum(), (g1 * Y).sum()])
        hess = np.array([[h1.sum(), (h1 * Y).sum()], [(h1 * Y).sum(), (h1 * Y * Y).sum()]])
        return ll, grad, hess

    ll, grad, hess = parts(theta)
    for _ in range(max_iter):
        gsub = grad[free]
        if np.linalg.norm(gsub) / n < tol:
            break
        H = hess[np.ix_(free, free)]
        try:
            step = -np.linalg.solve(H, gsub)
        except np.linalg.LinAlgError:
            step = gsub / n
        if not np.all(np.isfinite(step)) or gsub @ step <= 0:
            step = gsub / max(1.0, np.abs(H).max())
        full = np.zeros(2)
        full[free] = step
        t = 1.0
        while t > 1e-12:
            cand = theta + t * full
            ll_c, g_c, h_c = parts(cand)
            if ll_c >= ll - 1e-12 * abs(ll):
                break
            t *= 0.5
        else:
            break
        theta, ll, grad, hess = cand, ll_c, g_c, h_c
        if abs(theta[1]) > 1e3:
            raise FitError("complete separation: alpha diverges")
    C = math.exp(theta[0])
    if not 0 < C < 1:
        raise FitError(f"fitted C={C} outside (0, 1)")
    return ModelParams(C, float(theta[1]), n_obs=int(n))


# ---------------------------------------------------------------------------
# exposure and burst scores


@dataclass
class ExposureSet:
    i: str
    t0: int
    t1: int
    users: set[str]
    idx: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))


class _RetweetIndex:
    def __init__(self, g: TemporalGraph):
        sel = np.flatnonzero(g.ev_kind == KIND_CODES[EventKind.RETWEET])
        tgt = g.ev_target[sel]
        order = np.lexsort((g.ev_ts[sel], tgt))
        self.ts = g.ev_ts[sel][order]
        self.actor = g.ev_actor[sel][order]
        self.ptr = np.zeros(g.n_users + 1, dtype=np.int64)
        np.cumsum(np.bincount(tgt, minlength=g.n_users), out=self.ptr[1:])

    def retweeters(self, i: int, t0: int, t1: int) -> np.ndarray:
        a, b = self.ptr[i], self.ptr[i + 1]
        ts = self.ts[a:b]
        return np.unique(self.actor[a + np.searchsorted(ts, t0, "left"):a + np.searchsorted(ts, t1, "left")])


def _retweet_index(g: TemporalGraph) -> _RetweetIndex:
    idx = getattr(g, "_retweet_index", None)
    if idx is None:
        idx = _RetweetIndex(g)
        g._retweet_index = idx
    return idx


def exposure_idx(g: TemporalGraph, i: int, t0: int, t1: int, n2: np.ndarray | None = None) -> np.ndarray:
    rts = _retweet_index(g).retweeters(i, t0, t1)
    if rts.size == 0:
        return np.zeros(0, dtype=np.int64)
    src, _ = g.followers_of_many_idx(rts, t1)
    if n2 is None:
        n2 = g.two_hop_idx(i, t0)
    return np.intersect1d(np.unique(src), n2, assume_unique=True)


def exposure_set(g: TemporalGraph, i: str, interval: tuple[int, int]) -> ExposureSet:
    """2-hop neighbours of ``i`` (at ``t0``) following someone who retweeted ``i`` in ``[t0, t1)``.

    Follower sets of the retweeters are taken at ``t1``.
    """
    t0, t1 = int(interval[0]), int(interval[1])
    k = g.index.get(i)
    if k is None:
        return ExposureSet(i, t0, t1, set())
    idx = exposure_idx(g, k, t0, t1)
    return ExposureSet(i, t0, t1, {g.users[u] for u in idx.tolist()}, idx)


@dataclass
class ScoreParts:
    exposed: float
    total: float
    n_exposed: int
    n_two_hop: int

    @property
    def score(self) -> float | None:
        return None if not self.total > 0 else min(1.0, self.exposed / self.total)


def score_parts(params: ModelParams, g: TemporalGraph, vectors: TfIdfVectors, i: int, t0: int,
                exposed: np.ndarray, n2: np.ndarray | None = None, max_candidates: int = N2_CAP,
                seed: int = 0) -> ScoreParts:
    if vectors._graph_rows is None or len(vectors._graph_rows) != g.n_users:
        vectors.bind(g)
    f1 = g.followers_idx(i, t0)
    if n2 is None:
        n2 = g.two_hop_idx(i, t0, first_hop=f1)
    stats = stats_from_similarities(g.users[i], vectors.similarities_idx(i, f1))
    if n2.size == 0 or not stats.defined or stats.sigma == 0:
        return ScoreParts(0.0, 0.0, int(exposed.size), int(n2.size))

    def mass(js):
        S = vectors.similarities_idx(i, js)
        ok = S > 0
        p = np.zeros(js.size)
        p[ok] = p_hat(params, (np.log(S[ok]) - stats.mu) / stats.sigma)
        return float(p.sum())

    num = mass(exposed)
    if n2.size > max_candidates:
        rng = np.random.default_rng([seed, i, t0 & 0xFFFFFFFF])
        sub = rng.choice(n2, max_candidates, replace=False)
        den = mass(sub) * n2.size / max_candidates
        den = max(den, num)
    else:
        den = mass(n2)
    return ScoreParts(num, den, int(exposed.size), int(n2.size))


def burst_score(params: ModelParams, g: TemporalGraph, vectors: TfIdfVectors, i: str,
                exposure: ExposureSet) -> float | None:
    """Share of the follow-probability mass over N2(i) that lies on exposed users.

    Users with zero similarity to ``i`` carry zero probability.  ``None`` when
    the denominator vanishes.
    """
    k = g.index[i]
    exposed = exposure.idx if exposure.idx.size or not exposure.users else \
        np.array(sorted(g.index[u] for u in exposure.users), dtype=np.int64)
    return score_parts(params, g, vectors, k, exposure.t0, exposed).score


def burst_interval(g: TemporalGraph, b: Burst) -> tuple[int, int]:
    """``[t0, t1)`` covering the hours of a retweet burst."""
    return g.hour_start(b.hour), g.hour_start(b.end_hour + 1)
