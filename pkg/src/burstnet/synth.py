"""Synthetic follower graphs and event logs with planted bursts and known ground truth.

The simulation runs hour by hour.  Users carry topic mixtures that drive both
their tweet texts and a "true" similarity score ``Y_true``; the first time a
user sees a retweet of someone they do not follow, they follow with
probability ``min(C* exp(alpha* Y_true), 1)``.  Planted retweet bursts expose
cohorts that are either topically close to the author (and so produce a
follow burst) or far from it.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .events import DAY, HOUR, Event, EventKind, write_events, write_snapshot
from .model import Observations, fit

T_START = 1320105600  # 2011-11-01 00:00 UTC

_DEFAULT_DIURNAL = [0.55, 0.45, 0.38, 0.34, 0.33, 0.37, 0.48, 0.65, 0.85, 1.0, 1.1, 1.17,
                    1.22, 1.24, 1.25, 1.26, 1.28, 1.3, 1.33, 1.36, 1.35, 1.25, 1.0, 0.76]


@dataclass
class PlantedBurst:
    user: int
    hour: int
    retweets: int
    boost: float
    couples_follow: bool
    kind: str = "retweet-follow"  # or "tweet-unfollow"
    cls: str = "plain"  # coupled | incompatible | plain | unfollow


@dataclass
class SynthConfig:
    n_users: int = 10_000
    n_days: int = 30
    seed: int = 0
    diurnal_profile: list[float] = field(default_factory=lambda: list(_DEFAULT_DIURNAL))
    # initial graph
    min_indegree: int = 4
    indegree_exponent: float = 2.2
    max_indegree: int | None = None  # default n_users // 10
    homophily: float = 0.3
    # topics and texts
    n_topics: int = 20
    topic_concentration: float = 0.3
    words_per_topic: int = 40
    n_common_words: int = 60
    common_word_share: float = 0.3
    tweets_per_user: float = 10.0
    words_per_tweet: int = 10
    # activity
    retweet_prob: float = 0.004
    retweet_delay_hours: float = 4.0
    deletion_ratio: float = 1.0 / 3.0
    exposure_fraction: float = 0.21
    top_quintile_share: float = 0.594
    triadic_share: float = 0.85
    same_hour_follow_share: float = 0.7
    # follow law used for exposure trials
    model_C: float = 0.03
    model_alpha: float = 1.5
    # planted retweet bursts
    n_plants: int = 600
    coupled_fraction: float = 0.21
    incompatible_fraction: float = 0.5  # share of the non-coupled plants with a far cohort
    planted_band: tuple[int, int] = (40, 120)
    regular_retweeters: tuple[int, int] = (8, 16)
    n_bridges: int = 1
    cohort_per_bridge: int = 40
    n_relays: int = 3
    outer_per_relay: int = 15
    purists_per_topic: int = 160
    cohort_boost: float = 0.9
    planted_user_boost: float = 0.6
    min_plant_gap_days: int = 9
    planted_bursts: list[PlantedBurst] = field(default_factory=list)
    # planted tweet bursts followed by unfollows
    n_unfollow_plants: int = 30
    unfollow_plant_tweets: int = 8
    unfollow_plant_unfollows: int = 12

    @property
    def n_hours(self) -> int:
        return self.n_days * 24

    @property
    def t_end(self) -> int:
        return T_START + self.n_days * DAY

    def validate(self) -> None:
        if self.n_users < 50:
            raise ValueError("n_users must be at least 50")
        if len(self.diurnal_profile) != 24 or min(self.diurnal_profile) <= 0:
            raise ValueError("diurnal_profile needs 24 positive values")
        for name in ("retweet_prob", "deletion_ratio", "exposure_fraction", "model_C", "homophily",
                     "common_word_share", "tweets_per_user", "topic_concentration"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0 < self.exposure_fraction < 1:
            raise ValueError("exposure_fraction must lie in (0, 1)")
        if not 0 < self.top_quintile_share < 1:
            raise ValueError("top_quintile_share must lie in (0, 1)")
        if self.max_indeg <= self.min_indegree:
            raise ValueError("max_indegree must exceed min_indegree")
        if (self.n_plants or self.n_unfollow_plants or self.planted_bursts) and self.n_days < 10:
            raise ValueError("planted bursts need at least 10 days (4 before, 5 after)")
        if self.n_topics < 2:
            raise ValueError("need at least two topics")

    @property
    def max_indeg(self) -> int:
        return self.max_indegree or max(self.min_indegree + 1, self.n_users // 10)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["planted_band"] = list(self.planted_band)
        d["regular_retweeters"] = list(self.regular_retweeters)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if "planted_bursts" in d:
            d["planted_bursts"] = [p if isinstance(p, PlantedBurst) else PlantedBurst(**p)
                                   for p in d["planted_bursts"]]
        for k in ("planted_band", "regular_retweeters"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)

    @classmethod
    def load(cls, path) -> "SynthConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def standard_config(**kw) -> SynthConfig:
    return SynthConfig(**kw)


def null_config(**kw) -> SynthConfig:
    """No planted bursts and a flat daily profile."""
    base = dict(n_plants=0, n_unfollow_plants=0, diurnal_profile=[1.0] * 24)
    base.update(kw)
    return SynthConfig(**base)


def small_config(**kw) -> SynthConfig:
    """A quick configuration for tests and demos."""
    base = dict(n_users=2000, n_days=14, n_plants=60, n_unfollow_plants=6, n_topics=10, purists_per_topic=40,
                min_plant_gap_days=6, planted_band=(25, 100))
    base.update(kw)
    return SynthConfig(**base)


# ---------------------------------------------------------------------------
# helpers


class _Streams:
    """Named, independent random streams derived from one seed."""

    NAMES = ("graph", "topics", "texts", "plants", "tweets", "retweets", "trials", "organic",
             "unfollow", "times", "tokens")

    def __init__(self, seed: int):
        self._rng = {name: np.random.default_rng(np.random.SeedSequence([int(seed), k]))
                     for k, name in enumerate(self.NAMES)}

    def __getitem__(self, name: str) -> np.random.Generator:
        return self._rng[name]


def _power_law_degrees(rng, n, kmin, kmax, exponent):
    k = np.arange(kmin, kmax + 1, dtype=np.float64)
    p = k ** -exponent
    p /= p.sum()
    return rng.choice(np.arange(kmin, kmax + 1), size=n, p=p)


def _pseudo_words(rng, n: int, taken: set[str]) -> list[str]:
    onsets = ["b", "c", "d", "f", "g", "h", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z",
              "br", "cl", "dr", "gr", "pl", "st", "tr", "sh", "ch"]
    vowels = ["a", "e", "i", "o", "u", "ai", "ou", "ea"]
    out = []
    while len(out) < n:
        syl = int(rng.integers(2, 4))
        w = "".join(onsets[int(rng.integers(len(onsets)))] + vowels[int(rng.integers(len(vowels)))]
                    for _ in range(syl))
        if rng.random() < 0.3:
            w += "n"
        if w not in taken:
            taken.add(w)
            out.append(w)
    return out


def _vocabulary(rng, cfg: SynthConfig) -> tuple[list[list[str]], list[str]]:
    taken: set[str] = set()
    common = _pseudo_words(rng, cfg.n_common_words, taken)
    topics = []
    for k in range(cfg.n_topics):
        words = _pseudo_words(rng, cfg.words_per_topic, taken)
        words[0] = "#" + words[0]
        acro = words[1][:4].upper()
        if acro not in taken:
            taken.add(acro)
            words[1] = acro
        topics.append(words)
    return topics, common


def appearance_order(edges: Sequence[tuple[int, int]], n: int) -> np.ndarray:
    """Rank of each user by first appearance in a snapshot edge list, as ingest assigns indices."""
    rank = np.full(n, -1, dtype=np.int64)
    nxt = 0
    for a, b in edges:
        for u in (a, b):
            if rank[u] < 0:
                rank[u] = nxt
                nxt += 1
    missing = np.flatnonzero(rank < 0)
    rank[missing] = nxt + np.arange(missing.size)
    return rank


def top_quintile(indeg: np.ndarray, rank: np.ndarray) -> np.ndarray:
    """Boolean mask of the top 20% users by indegree, ties broken by ingest order."""
    n = indeg.size
    order_ingest = np.argsort(rank)
    top_ingest = np.argsort(-indeg[order_ingest], kind="stable")[:max(1, int(round(0.2 * n)))]
    mask = np.zeros(n, dtype=bool)
    mask[order_ingest[top_ingest]] = True
    return mask


# ---------------------------------------------------------------------------
# generation


@dataclass
class SynthResult:
    config: SynthConfig
    users: list[str]
    initial_edges: list[tuple[str, str]]
    events: list[Event]
    plants: list[dict]
    theta: np.ndarray
    trials: np.ndarray  # structured: j, i, hour, y_true, p, label
    counters: dict

    @property
    def t_start(self) -> int:
        return T_START

    @property
    def t_end(self) -> int:
        return self.config.t_end

    def truth_records(self) -> list[dict]:
        c = self.config
        recs = [{"type": "model", "C": c.model_C, "alpha": c.model_alpha, "seed": c.seed,
                 "t_start": T_START, "t_end": c.t_end}]
        recs.append({"type": "counters", **self.counters})
        recs += [{"type": "plant", **p} for p in self.plants]
        for u, th in zip(self.users, self.theta):
            recs.append({"type": "mixture", "user": u, "theta": [round(float(x), 6) for x in th]})
        return recs


class _Sim:
    def __init__(self, cfg: SynthConfig):
        cfg.validate()
        self.cfg = cfg
        self.rs = _Streams(cfg.seed)
        self.n = cfg.n_users
        self.H = cfg.n_hours
        self.users = [f"u{k:05d}" for k in range(self.n)]

    # -- setup ------------------------------------------------------------
    def setup(self):
        cfg, n = self.cfg, self.n
        rg, rt = self.rs["graph"], self.rs["topics"]
        self.indeg_target = _power_law_degrees(rg, n, cfg.min_indegree, cfg.max_indeg, cfg.indegree_exponent)
        theta = rt.dirichlet([cfg.topic_concentration] * cfg.n_topics, n)
        dom = theta.argmax(axis=1)

        # purists: low-degree users concentrated on one topic
        self.purists: list[np.ndarray] = []
        is_purist = np.zeros(n, dtype=bool)
        band_lo, band_hi = cfg.planted_band
        low = np.flatnonzero(self.indeg_target < band_lo)
        need_plants = cfg.n_plants > 0 or any(p.kind == "retweet-follow" for p in cfg.planted_bursts)
        if need_plants:
            pool = rt.permutation(low)
            per = cfg.purists_per_topic
            if per * cfg.n_topics > pool.size // 2:
                raise ValueError("purist pool infeasible: lower purists_per_topic")
            for k in range(cfg.n_topics):
                members = np.sort(pool[k * per:(k + 1) * per])
                is_purist[members] = True
                e = np.zeros(cfg.n_topics)
                e[k] = 1.0
                theta[members] = cfg.cohort_boost * e + (1 - cfg.cohort_boost) * theta[members]
                dom[members] = k
                self.purists.append(members)
        self.is_purist = is_purist

        # planted users get a dominant topic
        band = np.flatnonzero((self.indeg_target >= band_lo) & (self.indeg_target <= band_hi) & ~is_purist)
        self.band = band
        if need_plants:
            e = np.eye(cfg.n_topics)[dom[band]]
            theta[band] = cfg.planted_user_boost * e + (1 - cfg.planted_user_boost) * theta[band]
        self.theta = theta
        self.dom = theta.argmax(axis=1)
        self.unit = theta / np.linalg.norm(theta, axis=1, keepdims=True)

        # initial graph with topical homophily
        by_topic = [np.flatnonzero(self.dom == k) for k in range(cfg.n_topics)]
        following = [set() for _ in range(n)]
        followers = [set() for _ in range(n)]
        edges = []
        for i in range(n):
            d = int(self.indeg_target[i])
            same = by_topic[self.dom[i]]
            chosen = followers[i]
            tries = 0
            while len(chosen) < d and tries < 20 * d:
                tries += 1
                j = int(same[rg.integers(same.size)]) if rg.random() < cfg.homophily else int(rg.integers(n))
                if j != i and j not in chosen:
                    chosen.add(j)
                    following[j].add(i)
            edges += [(j, i) for j in sorted(chosen)]
        self.following, self.followers = following, followers
        self.initial = edges
        self.protected: set[tuple[int, int]] = set()

    def _lncos(self, js, i):
        return np.log(np.maximum(self.unit[js] @ self.unit[i], 1e-300))

    def finalize_moments(self):
        n = self.n
        src = np.array([a for a, _ in self.initial], dtype=np.int64)
        dst = np.array([b for _, b in self.initial], dtype=np.int64)
        lc = np.log(np.maximum(np.einsum("ij,ij->i", self.unit[src], self.unit[dst]), 1e-300))
        cnt = np.bincount(dst, minlength=n).astype(float)
        s1 = np.bincount(dst, weights=lc, minlength=n)
        s2 = np.bincount(dst, weights=lc * lc, minlength=n)
        mu = np.divide(s1, cnt, out=np.zeros(n), where=cnt > 0)
        var = np.divide(s2, cnt, out=np.ones(n), where=cnt > 0) - mu ** 2
        self.mu = mu
        self.sigma = np.sqrt(np.maximum(var, 1e-6))

    def y_true(self, js, i):
        return (self._lncos(js, i) - self.mu[i]) / self.sigma[i]

    def _add_initial(self, a, b, protect=True):
        if a == b:
            return False
        if b not in self.following[a]:
            self.following[a].add(b)
            self.followers[b].add(a)
            self.initial.append((a, b))
        if protect:
            self.protected.add((a, b))
        return True

    # -- planted structures -------------------------------------------------
    def plan_plants(self):
        cfg, rp = self.cfg, self.rs["plants"]
        H = self.H
        lo_h, hi_h = 4 * 24, H - 5 * 24 - 1
        plants: list[PlantedBurst] = list(cfg.planted_bursts)
        busy: dict[int, list[int]] = {}
        for p in plants:
            busy.setdefault(p.user, []).append(p.hour)
        gap = cfg.min_plant_gap_days * 24

        def place(n_new, fresh_only=False):
            out = []
            for _ in range(n_new):
                for _attempt in range(500):
                    if self.band.size == 0:
                        raise ValueError("no users in the planted indegree band")
                    u = int(self.band[rp.integers(self.band.size)])
                    if fresh_only and u in busy:
                        continue
                    h = int(rp.integers(lo_h, hi_h + 1))
                    if all(abs(h - h2) >= gap for h2 in busy.get(u, [])):
                        busy.setdefault(u, []).append(h)
                        out.append((u, h))
                        break
                else:
                    raise ValueError("cannot place planted bursts: too many for the band and gap")
            return out

        # coupled plants go first, one per user, so their cohorts are never pre-used
        n_c = int(round(cfg.coupled_fraction * cfg.n_plants))
        n_i = int(round(cfg.incompatible_fraction * (cfg.n_plants - n_c)))
        rest = ["incompatible"] * n_i + ["plain"] * (cfg.n_plants - n_c - n_i)
        rest = [rest[k] for k in rp.permutation(len(rest))]
        slots = [(uh, "coupled") for uh in place(n_c, fresh_only=True)]
        slots += list(zip(place(len(rest)), rest))
        for (u, h), cls in slots:
            r = int(rp.integers(cfg.regular_retweeters[0], cfg.regular_retweeters[1] + 1))
            if cls == "plain":
                # partly offsets the bridge and relay retweets of the other classes
                r += (cfg.n_bridges + cfg.n_relays) // 2
            plants.append(PlantedBurst(u, h, r, cfg.cohort_boost if cls == "coupled" else 0.0,
                                       cls == "coupled", "retweet-follow", cls))
        for u, h in place(cfg.n_unfollow_plants):
            plants.append(PlantedBurst(u, h, 0, 0.0, False, "tweet-unfollow", "unfollow"))
        for p in plants:
            if p.kind == "retweet-follow" and p.cls == "plain" and p.couples_follow:
                p.cls = "coupled"
        self.plants = sorted(plants, key=lambda p: (p.hour, p.user, p.kind))

    def build_plants(self):
        """Attach retweeters, bridges, cohorts, relays and outer users to each plant."""
        cfg, rp = self.cfg, self.rs["plants"]
        self.reserved: dict[tuple[int, int], int] = {}
        self.plant_info: list[dict] = []
        for pid, p in enumerate(self.plants):
            i = p.user
            info = {"id": pid, "user": self.users[i], "hour": p.hour, "kind": p.kind, "class": p.cls,
                    "couples_follow": bool(p.couples_follow), "boost": p.boost}
            if p.kind == "tweet-unfollow":
                info.update(tweets=cfg.unfollow_plant_tweets, unfollows=cfg.unfollow_plant_unfollows)
                self.plant_info.append(info)
                continue
            f1 = sorted(self.followers[i])
            deg = np.array([len(self.followers[f]) for f in f1])
            order = [f1[k] for k in np.lexsort((rp.random(len(f1)), deg))]
            regulars = order[:min(p.retweets, len(order))]
            rest = [f for f in order[len(regulars):]]
            bridges, cohort, relays, outer = [], [], [], []
            if p.cls in ("coupled", "incompatible") and rest:
                pick = rp.choice(len(rest), min(cfg.n_bridges, len(rest)), replace=False)
                bridges = [rest[k] for k in sorted(pick)]
                k_topic = int(self.dom[i])
                if p.cls == "incompatible":
                    k_topic = int((k_topic + 1 + rp.integers(cfg.n_topics - 1)) % cfg.n_topics)
                pool = [int(x) for x in self.purists[k_topic]
                        if int(x) != i and i not in self.following[int(x)] and (int(x), i) not in self.reserved]
                # weakly linked purists first, so joining followers merge few components
                f1s = set(f1)
                links = np.array([len(self.following[j] & f1s) + len(self.followers[j] & f1s) for j in pool])
                order = np.lexsort((rp.random(len(pool)), links))
                pool = [pool[k] for k in order[:max(cfg.cohort_per_bridge * len(bridges), 1)]]
                for b in bridges:
                    take = rp.choice(len(pool), min(cfg.cohort_per_bridge, len(pool)), replace=False)
                    for k in sorted(take):
                        j = pool[k]
                        self._add_initial(j, b)
                        cohort.append(j)
                cohort = sorted(set(cohort) - set(f1) - {i})
                for b in bridges:
                    self.protected.add((b, i))
            if p.cls in ("coupled", "incompatible"):
                n2 = set()
                for f in f1:
                    n2 |= self.followers[f]
                n2 -= set(f1)
                n2.discard(i)
                cands = sorted(c for c in n2 if not self.is_purist[c])
                if cands:
                    sample = rp.choice(len(cands), min(20, len(cands)), replace=False)
                    sample = [cands[k] for k in sorted(sample)]
                    sims = self._lncos(np.array(sample), i)
                    relays = [sample[k] for k in np.argsort(sims, kind="stable")[:cfg.n_relays]]
                for r in relays:
                    for f in sorted(self.following[r] & set(f1)):
                        self.protected.add((r, f))
                        break
                f1s = set(f1)
                far = [int(x) for x in self.purists[k_topic]
                       if int(x) not in n2 and int(x) not in self.followers[i] and int(x) != i
                       and not (self.following[int(x)] & f1s) and not (self.followers[int(x)] & f1s)]
                far = [far[k] for k in rp.permutation(len(far))]
                for r in relays:
                    n_take = 0
                    for j in far:
                        if n_take >= cfg.outer_per_relay:
                            break
                        # outer users must not touch each other, so each arrives as its own component
                        if j in outer or self.following[j] & set(outer) or self.followers[j] & set(outer):
                            continue
                        self._add_initial(j, r)
                        outer.append(j)
                        n_take += 1
                outer = sorted(set(outer))
            for f in regulars:
                self.protected.add((f, i))
            for j in cohort + outer:
                self.reserved[(j, i)] = max(self.reserved.get((j, i), -1), p.hour)
            info.update(retweets=len(regulars) + len(bridges) + len(relays), regulars=len(regulars),
                        bridges=len(bridges), cohort=len(cohort), relays=len(relays), outer=len(outer))
            self.plant_info.append(info)
            p._regulars, p._bridges, p._relays = regulars, bridges, relays
            p._cohort = set(cohort) | set(outer)

    # -- texts ------------------------------------------------------------
    def schedule_tweets(self):
        cfg, rt, rx = self.cfg, self.rs["tweets"], self.rs["texts"]
        n, H = self.n, self.H
        self.topic_words, self.common_words = _vocabulary(rx, cfg)
        rate = rt.lognormal(math.log(cfg.tweets_per_user) - 0.32, 0.8, n)
        counts = np.maximum(rt.poisson(rate), 2)
        self.tweet_counts = counts.copy()
        prof = np.asarray(cfg.diurnal_profile, dtype=float)
        hour_w = np.tile(prof, cfg.n_days)
        hour_w /= hour_w.sum()
        total = int(counts.sum())
        authors = np.repeat(np.arange(n), counts)
        hours = rt.choice(H, size=total, p=hour_w)
        texts = self._texts(authors)
        self.tweets_by_hour: list[list[tuple[int, str]]] = [[] for _ in range(H)]
        for a, h, t in zip(authors.tolist(), hours.tolist(), texts):
            self.tweets_by_hour[h].append((a, t))

    def _texts(self, authors: np.ndarray) -> list[str]:
        cfg, rx = self.cfg, self.rs["texts"]
        n_tw = authors.size
        if n_tw == 0:
            return []
        lengths = np.maximum(3, rx.poisson(cfg.words_per_tweet, n_tw))
        word_author = np.repeat(authors, lengths)
        W = word_author.size
        cum = np.cumsum(self.theta, axis=1)
        cum /= cum[:, -1:]
        u = rx.random(W)
        z = np.empty(W, dtype=np.int64)
        for s in range(0, W, 200_000):
            e = min(W, s + 200_000)
            z[s:e] = (cum[word_author[s:e]] < u[s:e, None]).sum(axis=1)
        z = np.minimum(z, cfg.n_topics - 1)
        is_common = rx.random(W) < cfg.common_word_share
        # Zipf-like preference inside each topic
        wt = 1.0 / np.arange(1, cfg.words_per_topic + 1) ** 0.7
        wt /= wt.sum()
        widx = rx.choice(cfg.words_per_topic, size=W, p=wt)
        cidx = rx.integers(0, cfg.n_common_words, W)
        flat_topic = [w for ws in self.topic_words for w in ws]
        tok_id = np.where(is_common, -1 - cidx, z * cfg.words_per_topic + widx)
        words = [self.common_words[-1 - t] if t < 0 else flat_topic[t] for t in tok_id.tolist()]
        punct = rx.random(n_tw)
        url = rx.random(n_tw) < 0.15
        out = []
        pos = 0
        for k, L in enumerate(lengths.tolist()):
            s = " ".join(words[pos:pos + L])
            pos += L
            s = s[0].upper() + s[1:] if s[0].isalpha() else s
            if punct[k] < 0.3:
                s += "!"
            elif punct[k] < 0.6:
                s += "."
            if url[k]:
                s += f" http://t.co/{int(rx.integers(1 << 30)):x}"
            out.append(s)
        return out

    # -- simulation -------------------------------------------------------
    def _solve_gamma(self, s_exposure: float) -> float:
        cfg = self.cfg
        F, U, E = 1.0, cfg.deletion_ratio, cfg.exposure_fraction
        target = (cfg.top_quintile_share * (F + U) - E * s_exposure) / ((1 - E) + U)
        d = np.log(self.indeg0 + 1.0)
        top = self.top_mask

        def share(g, extra):
            w = np.exp(g * d) * extra
            return w[top].sum() / w.sum()

        def f(g):
            return ((1 - E) * share(g, 1.0) + U * share(g, self.unf_factor)) / ((1 - E) + U)

        lo, hi = 0.0, 4.0
        if f(lo) >= target:
            return lo
        if f(hi) <= target:
            return hi
        for _ in range(50):
            mid = 0.5 * (lo + hi)
            if f(mid) < target:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def simulate(self):
        cfg = self.cfg
        n, H = self.n, self.H
        r_ret, r_tri, r_org, r_unf, r_tm = (self.rs[k] for k in ("retweets", "trials", "organic", "unfollow", "times"))
        C, alpha = cfg.model_C, cfg.model_alpha
        followers, following = self.followers, self.following
        prof = np.asarray(cfg.diurnal_profile, dtype=float)
        prof = prof / prof.mean()

        self.indeg0 = np.array([len(followers[i]) for i in range(n)], dtype=float)
        self.top_mask = top_quintile(self.indeg0.astype(np.int64), appearance_order(self.initial, n))
        self.unf_factor = 1.0 + 0.15 * np.log((self.tweet_counts + 1) / 11.0) ** 2
        gamma = self._solve_gamma(0.8)
        log_d = np.log(self.indeg0 + 1.0)

        def weights(g):
            w_o = np.exp(g * log_d)
            w_u = w_o * self.unf_factor
            return w_o / w_o.sum(), w_u / w_u.sum()

        p_org, p_unf = weights(gamma)

        plants_at: dict[int, list[PlantedBurst]] = {}
        for p in self.plants:
            plants_at.setdefault(p.hour, []).append(p)

        retweets_at: list[list[tuple[int, int, str, PlantedBurst | None]]] = [[] for _ in range(H)]
        follows_next: list[tuple[int, int]] = []
        unfollows_next: list[int] = []
        last_seen: dict[tuple[int, int], int] = {}
        trialed: set[tuple[int, int]] = set()
        trials = []
        events: list[tuple] = []  # (hour, kind, actor, target, tweet_id, text)
        E = O = U = 0
        E_top = 0
        n_tweets = 0
        delay_p = 1.0 / (1.0 + cfg.retweet_delay_hours)
        r_ratio = (1 - cfg.exposure_fraction) / cfg.exposure_fraction
        suppressed_trials = 0

        def do_follow(j, i, hour_events, exposure):
            nonlocal E, O, E_top
            if j == i or i in following[j]:
                return False
            following[j].add(i)
            followers[i].add(j)
            hour_events.append((EventKind.FOLLOW, j, i, None, None))
            if exposure:
                E += 1
                E_top += int(self.top_mask[i])
            else:
                O += 1
            return True

        def do_unfollow(j, i, hour_events):
            nonlocal U
            following[j].discard(i)
            followers[i].discard(j)
            hour_events.append((EventKind.UNFOLLOW, j, i, None, None))
            U += 1

        def least_similar(i, k):
            cands = [f for f in followers[i] if (f, i) not in self.protected]
            if not cands:
                return None
            if len(cands) > k:
                pick = r_unf.choice(len(cands), k, replace=False)
                cands = [cands[c] for c in pick]
            sims = self._lncos(np.array(cands), i)
            return cands[int(np.argmin(sims))]

        for h in range(H):
            hev: list[tuple] = []
            now_ts = T_START + h * HOUR
            # 1. follows carried over from the previous hour
            for j, i in follows_next:
                do_follow(j, i, hev, True)
            follows_next = []
            # 2. tweets, including planted triggers
            todays = list(self.tweets_by_hour[h])
            plant_tweets = []
            for p in plants_at.get(h, ()):
                if p.kind == "retweet-follow":
                    text = self._texts(np.array([p.user]))[0]
                    plant_tweets.append((p, text))
                else:
                    for text in self._texts(np.full(cfg.unfollow_plant_tweets, p.user)):
                        todays.append((p.user, text))
            order = r_tm.permutation(len(todays))
            same_hour_rts = []
            for k in order.tolist():
                a, text = todays[k]
                tid = f"t{n_tweets}"
                n_tweets += 1
                hev.append((EventKind.TWEET, a, None, tid, text))
                fl = sorted(followers[a])
                if fl:
                    hit = np.flatnonzero(r_ret.random(len(fl)) < cfg.retweet_prob)
                    for m in hit.tolist():
                        d = int(r_ret.geometric(delay_p)) - 1
                        if h + d < H:
                            item = (fl[m], a, tid, None)
                            (same_hour_rts if d == 0 else retweets_at[h + d]).append(item)
            for p, text in plant_tweets:
                tid = f"t{n_tweets}"
                n_tweets += 1
                hev.append((EventKind.TWEET, p.user, None, tid, text))
                crowd = list(p._regulars) + list(p._bridges) + list(p._relays)
                for m in r_ret.permutation(len(crowd)).tolist():
                    same_hour_rts.append((crowd[m], p.user, tid, p))
            # 3. retweets and first-exposure trials
            rts = retweets_at[h] + same_hour_rts
            retweets_at[h] = []
            for r, a, tid, plant in rts:
                hev.append((EventKind.RETWEET, r, a, tid, None))
                aud = [j for j in followers[r] if j != a]
                if not aud:
                    continue
                fresh = []
                for j in aud:
                    last_seen[(j, a)] = h
                    if a in following[j] or (j, a) in trialed:
                        continue
                    res = self.reserved.get((j, a))
                    if plant is not None:
                        if j in plant._cohort:
                            fresh.append(j)
                        else:
                            trialed.add((j, a))
                            suppressed_trials += 1
                    elif res is not None and res >= h:
                        continue
                    else:
                        fresh.append(j)
                if not fresh:
                    continue
                fresh.sort()
                Y = self.y_true(np.array(fresh), a)
                p = np.minimum(C * np.exp(alpha * Y), 1.0)
                u = r_tri.random(len(fresh))
                later = r_tri.random(len(fresh)) >= cfg.same_hour_follow_share
                for j, yv, pv, uv, lt in zip(fresh, Y.tolist(), p.tolist(), u.tolist(), later.tolist()):
                    trialed.add((j, a))
                    lab = uv < pv
                    trials.append((j, a, h, yv, pv, int(lab)))
                    if lab:
                        if lt and h + 1 < H:
                            follows_next.append((j, a))
                        else:
                            do_follow(j, a, hev, True)
            # 4. organic follows, paced to keep the exposure share on target
            debt = r_ratio * E - O
            mean = prof[h % 24] * r_ratio * E / (h + 1) + 0.05 * debt
            n_org = int(r_org.poisson(max(0.0, mean)))
            targets = r_org.choice(n, size=n_org, p=p_org) if n_org else []
            for i in np.asarray(targets).tolist():
                for _attempt in range(30):
                    if r_org.random() < cfg.triadic_share and followers[i]:
                        fl = list(followers[i])
                        f = fl[int(r_org.integers(len(fl)))]
                        ff = followers[f]
                        if not ff:
                            continue
                        ffl = list(ff)
                        j = ffl[int(r_org.integers(len(ffl)))]
                    else:
                        j = int(r_org.integers(n))
                    if j == i or i in following[j]:
                        continue
                    if self.reserved.get((j, i), -1) >= h - 1:
                        continue
                    seen = last_seen.get((j, i))
                    if seen is not None and seen >= h - 25:
                        continue
                    y = float(self.y_true(np.array([j]), i)[0])
                    if r_org.random() < min(1.0, math.exp(alpha * (y - 1.0))):
                        do_follow(j, i, hev, False)
                        break
            # 5. unfollows: planted ones, then background to hold the deletion ratio
            for i in unfollows_next:
                j = least_similar(i, 10 ** 9)
                if j is not None:
                    do_unfollow(j, i, hev)
            unfollows_next = []
            for p in plants_at.get(h, ()):
                if p.kind != "tweet-unfollow":
                    continue
                for k in range(cfg.unfollow_plant_unfollows):
                    if r_unf.random() < 0.6 or h + 1 >= H:
                        j = least_similar(p.user, 10 ** 9)
                        if j is not None:
                            do_unfollow(j, p.user, hev)
                    else:
                        unfollows_next.append(p.user)
            n_unf = max(0, int(round(cfg.deletion_ratio * (E + O) - U)))
            if n_unf:
                tg = r_unf.choice(n, size=n_unf, p=p_unf)
                for i in tg.tolist():
                    j = least_similar(i, 3)
                    if j is None:
                        continue
                    do_unfollow(j, i, hev)
            # 6. re-balance the target weights once a day
            if h % 24 == 23:
                s_e = E_top / E if E else 0.8
                gamma = self._solve_gamma(s_e)
                p_org, p_unf = weights(gamma)
            # 7. timestamps: unique seconds in causal (processing) order
            if len(hev) > HOUR:
                raise ValueError(f"hour {h} has {len(hev)} events; more than one per second")
            secs = np.sort(r_tm.choice(HOUR, size=len(hev), replace=False))
            for s, ev in zip(secs.tolist(), hev):
                events.append((now_ts + s,) + ev)

        self.events_raw = events
        self.trials = np.array(trials, dtype=[("j", "i8"), ("i", "i8"), ("hour", "i8"), ("y_true", "f8"),
                                              ("p", "f8"), ("label", "i1")])
        self.counters = {"exposure_follows": E, "organic_follows": O, "unfollows": U, "tweets": n_tweets,
                         "retweets": sum(1 for e in events if e[1] is EventKind.RETWEET),
                         "suppressed_trials": suppressed_trials, "gamma": round(gamma, 6)}

    def result(self) -> SynthResult:
        u = self.users
        evs = [Event(ts, seq, kind, u[a], None if b is None else u[b], tid, text)
               for seq, (ts, kind, a, b, tid, text) in enumerate(self.events_raw)]
        for info, p in zip(self.plant_info, self.plants):
            if p.kind == "retweet-follow":
                info["follows"] = int(np.sum((self.trials["i"] == p.user) & (self.trials["label"] == 1)
                                             & (self.trials["hour"] == p.hour)))
        edges = [(u[a], u[b]) for a, b in self.initial]
        return SynthResult(self.cfg, u, edges, evs, self.plant_info, self.theta, self.trials, self.counters)


def generate(config: SynthConfig) -> SynthResult:
    """Simulate a month (or ``n_days``) of follower-graph activity."""
    sim = _Sim(config)
    sim.setup()
    sim.plan_plants()
    sim.build_plants()
    sim.finalize_moments()
    sim.schedule_tweets()
    sim.simulate()
    return sim.result()


def write_outputs(res: SynthResult, out_dir) -> dict[str, Path]:
    """Write snapshot.csv, events.jsonl, truth.jsonl, trials.csv, config.json and window.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / name for name in
             ("snapshot.csv", "events.jsonl", "truth.jsonl", "trials.csv", "config.json", "window.json")}
    write_snapshot(paths["snapshot.csv"], res.initial_edges)
    write_events(paths["events.jsonl"], res.events)
    with open(paths["truth.jsonl"], "w", encoding="utf-8", newline="\n") as fh:
        for rec in res.truth_records():
            fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")
    with open(paths["trials.csv"], "w", encoding="utf-8", newline="\n") as fh:
        fh.write("j,i,hour,y_true,p,label\n")
        u = res.users
        for j, i, h, y, p, lab in res.trials.tolist():
            fh.write(f"{u[j]},{u[i]},{h},{y:.6f},{p:.6g},{lab}\n")
    paths["config.json"].write_text(res.config.to_json() + "\n")
    paths["window.json"].write_text(json.dumps({"t_start": res.t_start, "t_end": res.t_end}) + "\n")
    return paths


def read_truth(path) -> dict:
    model, counters, plants, mixtures = None, {}, [], {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            t = rec.pop("type")
            if t == "model":
                model = rec
            elif t == "counters":
                counters = rec
            elif t == "plant":
                plants.append(rec)
            elif t == "mixture":
                mixtures[rec["user"]] = np.asarray(rec["theta"])
    if model is None:
        raise ValueError(f"{path}: no model record")
    return {"model": model, "counters": counters, "plants": plants, "mixtures": mixtures}


def read_trials(path) -> tuple[np.ndarray, np.ndarray]:
    data = np.genfromtxt(path, delimiter=",", names=True, dtype=None, encoding="utf-8")
    return np.atleast_1d(data["y_true"]).astype(float), np.atleast_1d(data["label"]).astype(int)


# ---------------------------------------------------------------------------
# planted hot-token sample


def token_burst_sample(n_bursts: int = 6000, hot_ratio: float = 3.0, base_rate: float = 0.15,
                       hot_share: float = 0.1, vocab_size: int = 200, words: int = 8,
                       seed: int = 0) -> tuple[list[int], list[str], str]:
    """Burst-triggering texts where one token multiplies the follow-burst rate.

    Returns ``(labels, texts, hot_token)``; a text containing the hot token
    is followed by a burst with probability ``hot_ratio * base_rate``,
    otherwise ``base_rate``.
    """
    if hot_ratio * base_rate > 1:
        raise ValueError("hot_ratio * base_rate must not exceed 1")
    rng = _Streams(seed)["tokens"]
    vocab = _pseudo_words(rng, vocab_size, set())
    hot = "#" + vocab[0]
    present = rng.random(n_bursts) < hot_share
    p = np.where(present, hot_ratio * base_rate, base_rate)
    labels = (rng.random(n_bursts) < p).astype(int)
    texts = []
    for k in range(n_bursts):
        ws = [vocab[int(x)] for x in rng.integers(1, vocab_size, words)]
        if present[k]:
            ws[int(rng.integers(words))] = hot
        texts.append(" ".join(ws))
    return labels.tolist(), texts, hot


# ---------------------------------------------------------------------------
# scorecard against ground truth


@dataclass
class KindScore:
    kind: str
    planted: int
    recovered: int
    detected: int
    matched: int
    flagged_hours: int
    false_hours: int
    user_hours: int

    @property
    def recall(self) -> float:
        return self.recovered / self.planted if self.planted else float("nan")

    @property
    def precision(self) -> float:
        return self.matched / self.detected if self.detected else float("nan")

    @property
    def fp_rate(self) -> float:
        return self.false_hours / self.user_hours if self.user_hours else 0.0


@dataclass
class TruthReport:
    kinds: list[KindScore]
    params: dict
    label_agreement: float | None
    n_labeled_plants: int

    def kind(self, name: str) -> KindScore:
        return next(k for k in self.kinds if k.kind == name)

    def rows(self) -> list[dict]:
        out = [{"section": "detector", "kind": k.kind, "planted": k.planted, "recall": k.recall,
                "detected": k.detected, "precision": k.precision, "fp_rate": k.fp_rate} for k in self.kinds]
        out += [{"section": "params", "name": n, "value": v} for n, v in self.params.items()]
        out.append({"section": "labels", "name": "agreement", "value": self.label_agreement,
                    "n": self.n_labeled_plants})
        return out


def planted_intervals(plants: Sequence[dict]) -> dict[str, dict[str, list[tuple[int, int]]]]:
    """Planted ``{kind: {user: [(first_hour, last_hour), ...]}}`` per series kind."""
    out: dict[str, dict[str, list[tuple[int, int]]]] = {k: {} for k in ("retweets", "follows", "tweets", "unfollows")}
    for p in plants:
        u, h = p["user"], int(p["hour"])
        if p["kind"] == "retweet-follow":
            out["retweets"].setdefault(u, []).append((h, h))
            if p.get("couples_follow"):
                out["follows"].setdefault(u, []).append((h, h + 1))
        else:
            out["tweets"].setdefault(u, []).append((h, h))
            out["unfollows"].setdefault(u, []).append((h, h + 1))
    return out


def truth_report(truth: dict, g, bursts, params=None, labeled=None, trials=None,
                 tolerance_hours: int = 1) -> TruthReport:
    """Detector recall/precision, false-positive hours, parameter and label recovery.

    ``truth`` is the output of :func:`read_truth`; ``g`` the ingested graph
    (its window must match the truth file).
    """
    model = truth["model"]
    if (int(model["t_start"]), int(model["t_end"])) != (g.t_start, g.t_end):
        raise ValueError("ground truth window does not match the ingested data (different seed or config?)")
    missing = {p["user"] for p in truth["plants"]} - set(g.index)
    if missing:
        raise ValueError(f"planted users absent from the data, e.g. {sorted(missing)[0]}")
    tol = tolerance_hours
    planted = planted_intervals(truth["plants"])
    kinds = []
    user_hours = g.n_users * g.n_hours
    for kind, by_user in planted.items():
        det = [b for b in bursts if getattr(b.kind, "value", b.kind) == kind]
        n_planted = sum(len(v) for v in by_user.values())
        recovered = 0
        for u, ivs in by_user.items():
            mine = [(b.hour, b.end_hour) for b in det if b.user == u]
            for lo, hi in ivs:
                recovered += any(a <= hi + tol and b >= lo - tol for a, b in mine)
        matched = flagged = false = 0
        for b in det:
            ivs = by_user.get(b.user, [])
            hit = [(lo - tol, hi + tol) for lo, hi in ivs if b.hour <= hi + tol and b.end_hour >= lo - tol]
            matched += bool(hit)
            for hh in range(b.hour, b.end_hour + 1):
                flagged += 1
                false += not any(lo <= hh <= hi for lo, hi in hit)
        kinds.append(KindScore(kind, n_planted, recovered, len(det), matched, flagged, false, user_hours))

    pr = {"C_true": float(model["C"]), "alpha_true": float(model["alpha"])}
    if trials is not None:
        Y, lab = trials
        if len(Y) and 0 < np.sum(lab) < len(lab):
            tf = fit(Observations.from_arrays(Y, lab))
            pr.update(C_trials=tf.C, alpha_trials=tf.alpha,
                      C_rel_error=abs(tf.C / pr["C_true"] - 1), alpha_rel_error=abs(tf.alpha / pr["alpha_true"] - 1))
    if params is not None:
        pr.update(C_pipeline=params.C, alpha_pipeline=params.alpha)

    agreement, n_lab = None, 0
    if labeled is not None:
        plant_of = {(p["user"], int(p["hour"])): bool(p.get("couples_follow"))
                    for p in truth["plants"] if p["kind"] == "retweet-follow"}
        agree = []
        for lb in labeled:
            b = lb.burst
            for h in range(b.hour - tol, b.end_hour + tol + 1):
                if (b.user, h) in plant_of:
                    agree.append(int(lb.label) == int(plant_of[(b.user, h)]))
                    break
        n_lab = len(agree)
        agreement = float(np.mean(agree)) if agree else None
    return TruthReport(kinds, pr, agreement, n_lab)
