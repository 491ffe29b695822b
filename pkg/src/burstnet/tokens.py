"""Tokens of burst-triggering tweets that shift the chance of a follow burst."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .events import KIND_CODES, EventKind
from .textsim import tokenize

INF_RATIO = math.inf


@dataclass(frozen=True)
class TokenStat:
    """2x2 counts: ``a`` present & burst, ``b`` present & none,
    ``c`` absent & burst, ``d`` absent & none."""

    token: str
    a: int
    b: int
    c: int
    d: int
    chi2: float
    ratio: float

    @property
    def support(self) -> int:
        return self.a + self.b


def chi2_2x2(a, b, c, d):
    """Pearson chi-square of a 2x2 table without continuity correction."""
    a, b, c, d = (np.asarray(v, dtype=np.float64) for v in (a, b, c, d))
    n = a + b + c + d
    den = (a + b) * (c + d) * (a + c) * (b + d)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den > 0, n * (a * d - b * c) ** 2 / np.where(den > 0, den, 1.0), 0.0)
    return float(out) if out.ndim == 0 else out


def burst_ratio(a, b, c, d):
    """``P(burst | present) / P(burst | absent)``; ``inf`` when the absent rate is zero."""
    a, b, c, d = (np.asarray(v, dtype=np.float64) for v in (a, b, c, d))
    with np.errstate(divide="ignore", invalid="ignore"):
        p1 = np.where(a + b > 0, a / np.where(a + b > 0, a + b, 1.0), 0.0)
        p0 = np.where(c + d > 0, c / np.where(c + d > 0, c + d, 1.0), 0.0)
        r = np.where(p0 > 0, p1 / np.where(p0 > 0, p0, 1.0), INF_RATIO)
    return float(r) if r.ndim == 0 else r


def token_analysis(labels: Sequence[int], texts: Sequence[str], min_support: int = 10,
                   confidence: float = 0.95) -> list[TokenStat]:
    """Per-token contingency over burst-triggering tweets, filtered by support and chi-square.

    Each burst contributes its triggering text once; a token counts as
    present if it occurs anywhere in that text.  Results are sorted by ratio
    (descending), then token.
    """
    if len(labels) != len(texts):
        raise ValueError("labels and texts differ in length")
    y = np.asarray(labels, dtype=np.int64)
    n_pos, n = int(y.sum()), int(y.size)
    present: dict[str, list[int]] = {}
    for k, text in enumerate(texts):
        for tok in set(tokenize(text or "")):
            present.setdefault(tok, []).append(k)
    if not present:
        return []
    toks = sorted(present)
    a = np.array([int(y[present[t]].sum()) for t in toks])
    sup = np.array([len(present[t]) for t in toks])
    b = sup - a
    c = n_pos - a
    d = (n - n_pos) - b
    chi = chi2_2x2(a, b, c, d)
    ratio = burst_ratio(a, b, c, d)
    crit = float(stats.chi2.ppf(confidence, 1))
    keep = (sup >= min_support) & (chi > crit)
    out = [TokenStat(t, int(a[k]), int(b[k]), int(c[k]), int(d[k]), float(chi[k]), float(ratio[k]))
           for k, t in enumerate(toks) if keep[k]]
    out.sort(key=lambda s: (-s.ratio, s.token))
    return out


def triggering_texts(g, bursts) -> list[str]:
    """Text of the most retweeted tweet inside each retweet burst.

    Ties go to the tweet retweeted first.  Falls back to the retweet's own
    text when the original tweet is not in the log.
    """
    tw = np.flatnonzero(g.ev_kind == KIND_CODES[EventKind.TWEET])
    text_of = {g.ev_tweet_id[k]: g.ev_text[k] for k in tw.tolist() if g.ev_tweet_id[k]}
    rt = np.flatnonzero(g.ev_kind == KIND_CODES[EventKind.RETWEET])
    tgt, ts = g.ev_target[rt], g.ev_ts[rt]
    out = []
    for b in bursts:
        i = g.index[b.user]
        t0, t1 = g.hour_start(b.hour), g.hour_start(b.end_hour + 1)
        ks = rt[(tgt == i) & (ts >= t0) & (ts < t1)]
        ids = Counter(g.ev_tweet_id[k] for k in ks.tolist())
        if not ids:
            out.append("")
            continue
        best = max(ids.values())
        first = next(k for k in ks.tolist() if ids[g.ev_tweet_id[k]] == best)
        tid = g.ev_tweet_id[first]
        out.append(text_of.get(tid) or g.ev_text[first] or "")
    return out
