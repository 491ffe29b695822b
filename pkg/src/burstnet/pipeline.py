"""End-to-end glue: ingest, detect, fit, evaluate."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .burst import Burst, CoBurst, CoBurstType, detect_all, pair_cobursts
from .evaluation import METHODS, LabeledBurst, PRResult, label_bursts, run_experiment
from .events import SeriesKind, TemporalGraph, ingest, window_of
from .model import ModelParams, Observations, collect_observations, fit
from .textsim import TfIdfVectors, build_documents, tfidf

log = logging.getLogger(__name__)


def load(snapshot, events, t_start: int | None = None, t_end: int | None = None,
         on_conflict: str = "reject") -> TemporalGraph:
    """Ingest, taking the window from a neighbouring ``window.json`` when not given."""
    if t_start is None and t_end is None:
        w = window_of(events)
        if w is not None:
            t_start, t_end = w
    return ingest(snapshot, events, t_start=t_start, t_end=t_end, on_conflict=on_conflict)


def load_dir(data_dir, **kw) -> TemporalGraph:
    d = Path(data_dir)
    return load(d / "snapshot.csv", d / "events.jsonl", **kw)


@dataclass
class Detection:
    bursts: list[Burst]
    cobursts: list[CoBurst]

    def of_kind(self, kind: SeriesKind) -> list[Burst]:
        return [b for b in self.bursts if SeriesKind(b.kind) == SeriesKind(kind)]

    def of_type(self, ctype: CoBurstType) -> list[CoBurst]:
        return [c for c in self.cobursts if c.type == ctype]


def detect(g: TemporalGraph, threshold: float = 2.0, min_count: int = 5, threads: int = 1) -> Detection:
    bursts = detect_all(g, threshold_sigma=threshold, min_count=min_count, threads=threads)
    return Detection(bursts, pair_cobursts(bursts))


def vectors_for(g: TemporalGraph) -> TfIdfVectors:
    return tfidf(build_documents(g)).bind(g)


def fit_model(g: TemporalGraph, vectors: TfIdfVectors, retweet_bursts: Sequence[Burst], *,
              window_hours: int = 72, max_tweets: int = 2000, seed: int = 0) -> tuple[ModelParams, Observations]:
    """Fit the follow law on tweets whose label window touches no retweet burst.

    Returns the parameters and the training observations (whose ``burst_id``
    column is all empty, by construction).
    """
    obs = collect_observations(g, vectors, window_hours=window_hours, max_tweets=max_tweets,
                               bursts=retweet_bursts, seed=seed)
    train = obs.subset(np.array([b == "" for b in obs.burst_id], dtype=bool))
    log.info("fitting on %d of %d observations (%d positives)", len(train), len(obs), int(train.label.sum()))
    params = fit(train)
    return ModelParams(params.C, params.alpha, window_hours, params.n_obs), train


@dataclass
class Experiment:
    params: ModelParams
    labeled: list[LabeledBurst]
    results: list[PRResult]
    n_train: int

    @property
    def positive_rate(self) -> float:
        return float(np.mean([lb.label for lb in self.labeled])) if self.labeled else float("nan")

    def auc(self, method: str) -> float:
        return next(r.auc for r in self.results if r.method == method)


def experiment(g: TemporalGraph, det: Detection, *, params: ModelParams | None = None,
               vectors: TfIdfVectors | None = None, methods: Sequence[str] = METHODS, seed: int = 0,
               max_tweets: int = 2000) -> Experiment:
    """Fit on non-burst observations, then rank every retweet burst by each method."""
    vectors = vectors if vectors is not None else vectors_for(g)
    rts = det.of_kind(SeriesKind.RETWEETS)
    train_ids: list[str] = []
    n_train = 0
    if params is None:
        params, train = fit_model(g, vectors, rts, max_tweets=max_tweets, seed=seed)
        train_ids = train.burst_id
        n_train = len(train)
    labeled = label_bursts(det.bursts, det.cobursts)
    results = run_experiment(g, labeled, params, vectors, methods, train_burst_ids=train_ids,
                             follow_bursts=det.of_kind(SeriesKind.FOLLOWS), seed=seed)
    return Experiment(params, labeled, results, n_train)
