"""Same-hour deseasonalization, sigma-threshold burst detection and co-burst pairing.

The expected count for hour ``i`` is a weighted mean of the counts at the
same hour of day one and two days earlier and later (never hour ``i``
itself), with weights ``exp(-lam * |lag| / 24)``.  ``lam`` is fitted per
series by minimizing the squared leave-self-out residuals.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .events import HourlySeries, SeriesKind, TemporalGraph

LAGS = (24, 48)
DECAY_BOUNDS = (0.0, 5.0)
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class DeseasonalizedSeries:
    user: str | None
    kind: SeriesKind | None
    x: np.ndarray
    f: np.ndarray
    defined_mask: np.ndarray
    sigma_f: float
    lam: float


@dataclass(frozen=True)
class Burst:
    user: str
    kind: SeriesKind
    hour: int
    magnitude_sigma: float
    raw_count: int
    end_hour: int = -1

    def __post_init__(self):
        if self.end_hour < 0:
            object.__setattr__(self, "end_hour", self.hour)

    @property
    def id(self) -> str:
        return f"{self.user}:{SeriesKind(self.kind).value}:{self.hour}"


class CoBurstType(str, Enum):
    RETWEET_FOLLOW = "retweet-follow"
    TWEET_UNFOLLOW = "tweet-unfollow"


@dataclass(frozen=True)
class CoBurst:
    type: CoBurstType
    trigger: Burst
    response: Burst
    lag_hours: int

    @property
    def user(self) -> str:
        return self.trigger.user

    @property
    def hour(self) -> int:
        """Hour index at whose end the co-burst is considered to be happening."""
        return self.response.hour


# ---------------------------------------------------------------------------
# deseasonalization


def _neighbor_sums(X: np.ndarray):
    """Per lag: summed differences ``x_i - x_j`` to available same-hour neighbours, and their count.

    Working with differences keeps residuals of locally constant series exactly zero.
    """
    n = X.shape[-1]
    out = []
    for lag in LAGS:
        s = np.zeros_like(X, dtype=np.float64)
        c = np.zeros(n, dtype=np.float64)
        if n > lag:
            s[..., lag:] += X[..., lag:] - X[..., :-lag]
            s[..., :-lag] += X[..., :-lag] - X[..., lag:]
            c[lag:] += 1
            c[:-lag] += 1
        out.append((s, c))
    return out


def defined_hours(n: int) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    for lag in LAGS:
        if n > lag:
            mask[lag:] = True
            mask[:-lag] = True
    return mask


def _residual(sums, lam: np.ndarray) -> np.ndarray:
    """``x_i`` minus its weighted same-hour mean, per row; NaN where no neighbour exists.

    Blends the per-lag mean differences as ``m1 + beta (m2 - m1)`` so that
    equal neighbours cancel exactly.
    """
    lam = np.asarray(lam, dtype=np.float64)[..., None]
    (s1, c1), (s2, c2) = sums
    with np.errstate(invalid="ignore", divide="ignore"):
        m1 = s1 / c1
        m2 = s2 / c2
        v1 = np.exp(-lam * LAGS[0] / 24.0) * c1
        v2 = np.exp(-lam * LAGS[1] / 24.0) * c2
        both = m1 + v2 / (v1 + v2) * (m2 - m1)
    return np.where((c1 > 0) & (c2 > 0), both, np.where(c1 > 0, m1, np.where(c2 > 0, m2, np.nan)))


def _objective(sums, mask, lam) -> np.ndarray:
    r = _residual(sums, lam)[:, mask]
    return np.einsum("ij,ij->i", r, r)


def fit_decay(x, bounds: tuple[float, float] = DECAY_BOUNDS, tol: float = 1e-7):
    """Fit the decay of the same-hour weights by golden-section search.

    Minimizes the sum of squared leave-self-out residuals, which is the
    Gaussian maximum-likelihood choice.  Accepts one series (returns a float)
    or a 2-D batch of series (returns one value per row).  Series with a
    degenerate objective (constant, all zero) get ``lam = 0``.
    """
    if isinstance(x, HourlySeries):
        x = x.x
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    m, n = X.shape
    mask = defined_hours(n)
    if m == 0:
        return np.zeros(0)
    if not mask.any():
        return 0.0 if single else np.zeros(m)
    sums = _neighbor_sums(X)
    lo, hi = bounds
    a = np.full(m, lo, dtype=np.float64)
    b = np.full(m, hi, dtype=np.float64)
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc = _objective(sums, mask, c)
    fd = _objective(sums, mask, d)
    n_iter = int(math.ceil(math.log(tol / (hi - lo)) / math.log(_GOLDEN)))
    for _ in range(n_iter):
        left = fc <= fd
        a, b = np.where(left, a, c), np.where(left, d, b)
        c_new = np.where(left, b - _GOLDEN * (b - a), d)
        d_new = np.where(left, c, a + _GOLDEN * (b - a))
        fp = _objective(sums, mask, np.where(left, c_new, d_new))
        fc, fd = np.where(left, fp, fd), np.where(left, fc, fp)
        c, d = c_new, d_new
    lam = 0.5 * (a + b)
    f_mid = _objective(sums, mask, lam)
    f_lo = _objective(sums, mask, np.full(m, lo))
    f_hi = _objective(sums, mask, np.full(m, hi))
    scale = 1e-12 * (1.0 + np.abs(f_mid))
    lam = np.where(f_hi < f_mid - scale, hi, lam)
    best = np.minimum(f_mid, f_hi)
    lam = np.where(f_lo <= best + scale, lo, lam)
    return float(lam[0]) if single else lam


def deseasonalize(x, lam: float) -> DeseasonalizedSeries:
    """Residuals of ``x`` against its same-hour weighted expectation."""
    user = kind = None
    if isinstance(x, HourlySeries):
        user, kind, x = x.user, x.kind, x.x
    X = np.asarray(x, dtype=np.float64)
    mask = defined_hours(X.size)
    r = _residual(_neighbor_sums(X[None, :]), np.array([lam]))[0]
    f = np.where(mask, r, 0.0)
    sigma = float(f[mask].std()) if mask.any() else 0.0
    return DeseasonalizedSeries(user, kind, np.asarray(x), f, mask, sigma, float(lam))


def deseasonalize_matrix(X: np.ndarray, lam: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batch version: residual matrix (zero on undefined hours) and per-row sigma."""
    X = np.asarray(X, dtype=np.float64)
    mask = defined_hours(X.shape[1])
    F = np.where(mask, _residual(_neighbor_sums(X), lam), 0.0)
    if mask.any():
        sigma = F[:, mask].std(axis=1)
    else:
        sigma = np.zeros(X.shape[0])
    return F, sigma


# ---------------------------------------------------------------------------
# detection


def _runs(flag: np.ndarray) -> list[tuple[int, int]]:
    """Inclusive [first, last] index pairs of consecutive True runs."""
    if not flag.any():
        return []
    d = np.diff(np.concatenate(([0], flag.astype(np.int8), [0])))
    starts = np.flatnonzero(d == 1)
    ends = np.flatnonzero(d == -1) - 1
    return list(zip(starts.tolist(), ends.tolist()))


def _bursts_from_row(user, kind, x, f, sigma, mask, threshold_sigma, min_count) -> list[Burst]:
    if not sigma > 0:
        return []
    flag = mask & (f > threshold_sigma * sigma) & (x >= min_count)
    out = []
    for lo, hi in _runs(flag):
        z = f[lo:hi + 1] / sigma
        out.append(Burst(user, kind, lo, float(z.max()), int(x[lo:hi + 1].sum()), hi))
    return out


def detect_bursts(d: DeseasonalizedSeries, threshold_sigma: float = 2.0, min_count: int = 5) -> list[Burst]:
    """Hours whose residual exceeds ``threshold_sigma`` residual standard deviations.

    Consecutive flagged hours are merged into one burst spanning
    ``[hour, end_hour]`` whose magnitude is the largest of its hours and
    whose ``raw_count`` is the total count over the interval.
    """
    return _bursts_from_row(d.user, d.kind, np.asarray(d.x), d.f, d.sigma_f, d.defined_mask,
                            threshold_sigma, min_count)


def _pair(triggers: list[Burst], responses: list[Burst], ctype: CoBurstType) -> list[CoBurst]:
    triggers = sorted(triggers, key=lambda b: b.hour)
    starts = [b.hour for b in triggers]
    out = []
    for r in sorted(responses, key=lambda b: b.hour):
        # nearest trigger starting at or before the response
        k = int(np.searchsorted(starts, r.hour, side="right")) - 1
        if k < 0:
            continue
        t = triggers[k]
        if r.hour <= t.end_hour + 1:
            out.append(CoBurst(ctype, t, r, max(0, r.hour - t.end_hour)))
    return out


def pair_cobursts(bursts: Iterable[Burst]) -> list[CoBurst]:
    """Pair retweet->follow and tweet->unfollow bursts of the same user.

    A response burst pairs with the nearest trigger burst that starts at or
    before it, provided the response starts no later than one hour after
    the trigger ends.
    """
    by_user: dict[str, dict[SeriesKind, list[Burst]]] = {}
    for b in bursts:
        by_user.setdefault(b.user, {}).setdefault(SeriesKind(b.kind), []).append(b)
    out = []
    for user in sorted(by_user):
        kinds = by_user[user]
        out += _pair(kinds.get(SeriesKind.RETWEETS, []), kinds.get(SeriesKind.FOLLOWS, []),
                     CoBurstType.RETWEET_FOLLOW)
        out += _pair(kinds.get(SeriesKind.TWEETS, []), kinds.get(SeriesKind.UNFOLLOWS, []),
                     CoBurstType.TWEET_UNFOLLOW)
    return out


# ---------------------------------------------------------------------------
# whole-graph pipeline


@dataclass
class KindResiduals:
    """Residuals for the rows of one series kind that could contain bursts."""

    kind: SeriesKind
    rows: np.ndarray  # user indices
    lam: np.ndarray
    F: np.ndarray
    sigma: np.ndarray
    X: np.ndarray

    def z(self, user_idx: int) -> np.ndarray | None:
        k = np.searchsorted(self.rows, user_idx)
        if k >= self.rows.size or self.rows[k] != user_idx or not self.sigma[k] > 0:
            return None
        return self.F[k] / self.sigma[k]


def residuals_for_kind(g: TemporalGraph, kind: SeriesKind, min_count: int = 5, threads: int = 1,
                       rows: np.ndarray | None = None) -> KindResiduals:
    X_all = g.hourly_matrix(kind)
    if rows is None:
        rows = np.flatnonzero(X_all.max(axis=1) >= min_count) if X_all.size else np.zeros(0, dtype=np.int64)
    X = np.asarray(X_all[rows], dtype=np.float64)
    chunks = [slice(s, min(s + 2048, len(rows))) for s in range(0, len(rows), 2048)]

    def work(sl):
        lam = fit_decay(X[sl]) if X[sl].shape[0] else np.zeros(0)
        F, sigma = deseasonalize_matrix(X[sl], lam)
        return lam, F, sigma

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(sl) for sl in chunks]
    n = g.n_hours
    if parts:
        lam = np.concatenate([p[0] for p in parts])
        F = np.concatenate([p[1] for p in parts])
        sigma = np.concatenate([p[2] for p in parts])
    else:
        lam, F, sigma = np.zeros(0), np.zeros((0, n)), np.zeros(0)
    return KindResiduals(SeriesKind(kind), np.asarray(rows), lam, F, sigma, X)


def detect_all(g: TemporalGraph, kinds: Sequence[SeriesKind] = tuple(SeriesKind), threshold_sigma: float = 2.0,
               min_count: int = 5, threads: int = 1) -> list[Burst]:
    """Detect bursts in every user's series of the given kinds.

    Rows whose maximum hourly count is below ``min_count`` cannot contain a
    burst and are skipped.  Output is sorted by (user index, kind, hour).
    """
    out = []
    mask = defined_hours(g.n_hours)
    for kind in kinds:
        res = residuals_for_kind(g, kind, min_count, threads)
        for k, u in enumerate(res.rows.tolist()):
            out += _bursts_from_row(g.users[u], SeriesKind(kind), res.X[k], res.F[k], float(res.sigma[k]),
                                    mask, threshold_sigma, min_count)
    order = {k: i for i, k in enumerate(SeriesKind)}
    out.sort(key=lambda b: (g.index[b.user], order[b.kind], b.hour))
    return out
