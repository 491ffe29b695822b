"""Command-line entry point: ``burstnet <subcommand> [options]``.

Every subcommand reads either ``--data DIR`` (a directory holding
``snapshot.csv`` and ``events.jsonl``) or explicit ``--snapshot``/``--events``
paths.  With ``--out DIR`` the outputs are written there together with a
``manifest.json``; without it the main table goes to standard output.
Exit codes: 0 success, 1 data error, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from . import pipeline
from .burst import CoBurstType
from .egonet import metric_curves, rate_acceleration, shuffled_control, similarity_metric, standard_metrics
from .evaluation import METHODS, descriptive_stats, pr_curve
from .events import IngestError, SeriesKind, build_graph, write_events, write_snapshot
from .model import FitError, ModelParams, burst_interval, burst_score, exposure_set
from .synth import (SynthConfig, generate, null_config, read_trials, read_truth, small_config,
                    standard_config, truth_report, write_outputs)
from .textsim import cosine, read_vectors, write_vectors
from .tokens import token_analysis, triggering_texts

log = logging.getLogger("burstnet")

PRESETS = {"standard": standard_config, "null": null_config, "small": small_config}
COBURST_TYPES = {t.value: t for t in CoBurstType}


class DataError(Exception):
    """Problem with input data rather than with the command line."""


# ---------------------------------------------------------------------------
# output helpers


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "" if np.isnan(v) else repr(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def _csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class Outputs:
    """Collects named outputs; writes them plus a manifest, or prints the first."""

    def __init__(self, out: str | None):
        self.dir = Path(out) if out else None
        self.files: dict[str, str] = {}
        self.primary: str | None = None

    def add(self, name: str, text: str) -> None:
        self.files[name] = text
        if self.primary is None:
            self.primary = name

    def path(self, name: str) -> Path:
        if self.dir is None:
            raise DataError(f"this subcommand needs --out to write {name}")
        self.dir.mkdir(parents=True, exist_ok=True)
        return self.dir / name

    def flush(self, manifest: dict) -> None:
        if self.dir is None:
            if self.primary is not None:
                sys.stdout.write(self.files[self.primary])
            return
        self.dir.mkdir(parents=True, exist_ok=True)
        for name, text in self.files.items():
            (self.dir / name).write_text(text)
        produced = sorted(set(self.files) | set(manifest.pop("_extra_outputs", [])))
        manifest["outputs"] = {n: _sha256(self.dir / n) for n in produced}
        (self.dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# input helpers


def _input_paths(a) -> tuple[Path, Path]:
    if a.data:
        d = Path(a.data)
        snap, ev = Path(a.snapshot or d / "snapshot.csv"), Path(a.events or d / "events.jsonl")
    elif a.snapshot and a.events:
        snap, ev = Path(a.snapshot), Path(a.events)
    else:
        raise _Usage("give --data DIR or both --snapshot and --events")
    for p in (snap, ev):
        if not p.exists():
            raise DataError(f"{p}: no such file")
    return snap, ev


def _graph(a, ctx: dict):
    snap, ev = _input_paths(a)
    ctx["inputs"][str(snap)] = _sha256(snap)
    ctx["inputs"][str(ev)] = _sha256(ev)
    t0, t1 = a.t_start, a.t_end
    g = pipeline.load(snap, ev, t_start=t0, t_end=t1, on_conflict=a.on_conflict)
    return g


def _detect(a, g):
    return pipeline.detect(g, threshold=a.threshold, min_count=a.min_count, threads=a.threads)


def _params(a, ctx: dict) -> ModelParams | None:
    if not getattr(a, "params", None):
        return None
    p = Path(a.params)
    if not p.exists():
        raise DataError(f"{p}: no such file")
    ctx["inputs"][str(p)] = _sha256(p)
    try:
        return ModelParams.from_json(p.read_text())
    except (KeyError, ValueError) as e:
        raise DataError(f"{p}: not a parameter file ({e})") from e


def _cobursts(a, det):
    return det.of_type(COBURST_TYPES[a.type])


class _Usage(Exception):
    pass


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(a, out: Outputs, ctx: dict) -> None:
    if a.config:
        p = Path(a.config)
        if not p.exists():
            raise DataError(f"{p}: no such file")
        ctx["inputs"][str(p)] = _sha256(p)
        try:
            cfg = SynthConfig.load(p)
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"{p}: invalid config ({e})") from e
    else:
        cfg = PRESETS[a.preset]()
    if a.seed is not None:
        cfg = SynthConfig.from_dict({**cfg.to_dict(), "seed": a.seed})
    ctx["seed"] = cfg.seed
    ctx["config"] = cfg.to_dict()
    if out.dir is None:
        raise _Usage("generate needs --out DIR")
    res = generate(cfg)
    written = write_outputs(res, out.dir)
    ctx["_extra_outputs"] = sorted(p.name for p in written.values())


def cmd_ingest(a, out: Outputs, ctx: dict) -> None:
    g = _graph(a, ctx)
    info = {"n_users": g.n_users, "n_initial_edges": g.n_initial_edges, "n_hours": g.n_hours,
            "t_start": g.t_start, "t_end": g.t_end, "events": g.kind_counts()}
    out.add("ingest.json", json.dumps(info, indent=2, sort_keys=True) + "\n")


def cmd_summary(a, out: Outputs, ctx: dict) -> None:
    g = _graph(a, ctx)
    s = descriptive_stats(g, check_exposure=a.check_exposure)
    out.add("summary.csv", _csv_text(["statistic", "value"], s.rows()))
    out.add("degree_curve.csv", _csv_text(
        ["degree_lo", "n", "follows", "unfollows", "tweets", "retweets"],
        [[r[k] for k in ("degree_lo", "n", "follows", "unfollows", "tweets", "retweets")] for r in s.degree_curve]))
    out.add("tweet_curve.csv", _csv_text(
        ["tweets_lo", "n", "unfollows_per_follower"],
        [[r[k] for k in ("tweets_lo", "n", "unfollows_per_follower")] for r in s.tweet_curve]))


def cmd_detect_bursts(a, out: Outputs, ctx: dict) -> None:
    g = _graph(a, ctx)
    det = _detect(a, g)
    rows = [[b.user, b.kind.value, b.hour, b.magnitude_sigma, b.raw_count, b.end_hour] for b in det.bursts]
    out.add("bursts.csv", _csv_text(["user", "kind", "hour", "magnitude_sigma", "raw_count", "end_hour"], rows))


def cmd_cobursts(a, out: Outputs, ctx: dict) -> None:
    g = _graph(a, ctx)
    det = _detect(a, g)
    rows = [[c.type.value, c.user, c.trigger.kind.value, c.trigger.hour, c.trigger.magnitude_sigma,
             c.response.kind.value, c.response.hour, c.response.magnitude_sigma, c.lag_hours] for c in det.cobursts]
    out.add("cobursts.csv", _csv_text(
        ["type", "user", "trigger_kind", "trigger_hour", "trigger_sigma",
         "response_kind", "response_hour", "response_sigma", "lag_hours"], rows))


def _read_pairs(path: Path) -> list[tuple[str, str]]:
    pairs = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or row[0].startswith("#"):
                continue
            if lineno == 1 and row[:2] == ["user_a", "user_b"]:
                continue
            if len(row) < 2:
                raise DataError(f"{path}:{lineno}: expected user_a,user_b")
            pairs.append((row[0].strip(), row[1].strip()))
    return pairs


def cmd_similarity(a, out: Outputs, ctx: dict) -> None:
    p = Path(a.pairs)
    if not p.exists():
        raise DataError(f"{p}: no such file")
    ctx["inputs"][str(p)] = _sha256(p)
    if a.vectors:
        vp = Path(a.vectors)
        if not vp.exists():
            raise DataError(f"{vp}: no such file")
        ctx["inputs"][str(vp)] = _sha256(vp)
        vectors = read_vectors(vp)
    else:
        g = _graph(a, ctx)
        vectors = pipeline.vectors_for(g)
        if out.dir is not None:
            write_vectors(out.path("vectors.tsv"), vectors)
            ctx["_extra_outputs"] = ["vectors.tsv"]
    rows = []
    for u, v in _read_pairs(p):
        va, vb = vectors.get(u), vectors.get(v)
        rows.append([u, v, cosine(va, vb) if va is not None and vb is not None else 0.0])
    out.add("similarity.csv", _csv_text(["user_a", "user_b", "S"], rows))


def cmd_ego_curves(a, out: Outputs, ctx: dict) -> None:
    g = _graph(a, ctx)
    det = _detect(a, g)
    cbs = _cobursts(a, det)
    if not cbs:
        raise DataError(f"no {a.type} co-bursts detected")
    vectors = pipeline.vectors_for(g)
    offsets = range(-a.days, a.days + 1)
    rows = []
    for name, m in standard_metrics(vectors).items():
        c = metric_curves(g, cbs, m, offsets=offsets, name=name)
        rows += [[name, o, v, n] for o, v, n in zip(c.offsets, c.values, c.counts)]
    out.add("ego_curves.csv", _csv_text(["metric", "offset_days", "mean_relative_value", "n"], rows))


def cmd_acceleration(a, out: Outputs, ctx: dict) -> None:
    g = _graph(a, ctx)
    det = _detect(a, g)
    vectors = pipeline.vectors_for(g)
    rows = []
    for ctype in (CoBurstType.RETWEET_FOLLOW, CoBurstType.TWEET_UNFOLLOW):
        cbs = det.of_type(ctype)
        if not cbs:
            continue
        for name, m in standard_metrics(vectors).items():
            r = rate_acceleration(g, cbs, m, name)
            rows.append([name, ctype.value, r.percent, r.direction, r.burst_rate, r.baseline_rate,
                         r.n_bursts, r.n_skipped])
    if not rows:
        raise DataError("no co-bursts detected")
    out.add("acceleration.csv", _csv_text(
        ["metric", "burst_type", "percent", "direction", "burst_rate", "baseline_rate", "n_bursts", "n_skipped"], rows))


def cmd_shuffle_control(a, out: Outputs, ctx: dict) -> None:
    g = _graph(a, ctx)
    det = _detect(a, g)
    cbs = _cobursts(a, det)
    if not cbs:
        raise DataError(f"no {a.type} co-bursts detected")
    vectors = pipeline.vectors_for(g)
    shuffled = shuffled_control(g.initial_edges(), g.events(), seed=a.seed or 0)
    gs = build_graph(g.initial_edges(), shuffled, t_start=g.t_start, t_end=g.t_end)
    offsets = range(-a.days, a.days + 1)
    rows = []
    for variant, gg in (("observed", g), ("shuffled", gs)):
        c = metric_curves(gg, cbs, similarity_metric(vectors.bind(gg)), offsets=offsets, name="similarity")
        rows += [[variant, o, v, n, c.slope()] for o, v, n in zip(c.offsets, c.values, c.counts)]
    vectors.bind(g)
    out.add("shuffle_control.csv", _csv_text(["variant", "offset_days", "mean_relative_value", "n", "slope"], rows))
    if out.dir is not None:
        write_snapshot(out.path("shuffled_snapshot.csv"), g.initial_edges())
        write_events(out.path("shuffled_events.jsonl"), shuffled)
        ctx["_extra_outputs"] = ["shuffled_snapshot.csv", "shuffled_events.jsonl"]


def cmd_fit(a, out: Outputs, ctx: dict) -> None:
    g = _graph(a, ctx)
    det = _detect(a, g)
    vectors = pipeline.vectors_for(g)
    params, train = pipeline.fit_model(g, vectors, det.of_kind(SeriesKind.RETWEETS), window_hours=a.window_hours,
                                       max_tweets=a.max_tweets, seed=a.seed or 0)
    out.add("params.json", params.to_json() + "\n")


def cmd_predict(a, out: Outputs, ctx: dict) -> None:
    params = _params(a, ctx)
    if params is None:
        raise _Usage("predict needs --params FILE")
    g = _graph(a, ctx)
    vectors = pipeline.vectors_for(g)
    if a.intervals:
        ip = Path(a.intervals)
        if not ip.exists():
            raise DataError(f"{ip}: no such file")
        ctx["inputs"][str(ip)] = _sha256(ip)
        todo = []
        with open(ip, newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), 1):
                if not row or (lineno == 1 and row[0] == "user"):
                    continue
                try:
                    todo.append((row[0], int(row[1]), int(row[2])))
                except (IndexError, ValueError) as e:
                    raise DataError(f"{ip}:{lineno}: expected user,t0,t1") from e
    else:
        det = _detect(a, g)
        todo = [(b.user, *burst_interval(g, b)) for b in det.of_kind(SeriesKind.RETWEETS)]
    rows = []
    for u, t0, t1 in todo:
        if u not in g.index:
            raise DataError(f"unknown user {u!r}")
        rows.append([u, t0, t1, burst_score(params, g, vectors, u, exposure_set(g, u, (t0, t1)))])
    out.add("predictions.csv", _csv_text(["user", "t0", "t1", "score"], rows))


def cmd_evaluate(a, out: Outputs, ctx: dict) -> None:
    g = _graph(a, ctx)
    det = _detect(a, g)
    params = _params(a, ctx)
    methods = METHODS + (("follow_bursts",) if a.follow_bursts_baseline else ())
    exp = pipeline.experiment(g, det, params=params, methods=methods, seed=a.seed or 0, max_tweets=a.max_tweets)
    rows = [[r.method, r.auc, r.n_undefined] for r in exp.results]
    out.add("evaluation.csv", _csv_text(["method", "AUC", "n_undefined"], rows))
    curves = []
    for r in exp.results:
        prec, rec = pr_curve(r.ranked_labels)
        curves += [[r.method, k + 1, p, q] for k, (p, q) in enumerate(zip(prec, rec))]
    out.add("pr_curves.csv", _csv_text(["method", "rank", "precision", "recall"], curves))
    out.add("params.json", exp.params.to_json() + "\n")
    scored = [m for m in methods if m != "random"]
    scores = [[lb.burst.user, lb.burst.hour, lb.label] + [lb.scores.get(m) for m in scored] for lb in exp.labeled]
    out.add("burst_scores.csv", _csv_text(["user", "hour", "label"] + scored, scores))


def cmd_tokens(a, out: Outputs, ctx: dict) -> None:
    g = _graph(a, ctx)
    det = _detect(a, g)
    from .evaluation import label_bursts
    labeled = label_bursts(det.bursts, det.cobursts)
    texts = triggering_texts(g, [lb.burst for lb in labeled])
    stats = token_analysis([lb.label for lb in labeled], texts, min_support=a.min_support,
                           confidence=a.confidence)
    out.add("tokens.csv", _csv_text(["token", "R", "chi2", "support"],
                                    [[s.token, s.ratio, s.chi2, s.support] for s in stats]))


def cmd_truth_report(a, out: Outputs, ctx: dict) -> None:
    tp = Path(a.truth) if a.truth else (Path(a.data) / "truth.jsonl" if a.data else None)
    if tp is None:
        raise _Usage("truth-report needs --truth FILE or --data DIR")
    if not tp.exists():
        raise DataError(f"{tp}: no such file")
    ctx["inputs"][str(tp)] = _sha256(tp)
    truth = read_truth(tp)
    trials = None
    trp = tp.parent / "trials.csv"
    if trp.exists():
        ctx["inputs"][str(trp)] = _sha256(trp)
        trials = read_trials(trp)
    g = _graph(a, ctx)
    det = _detect(a, g)
    from .evaluation import label_bursts
    params = _params(a, ctx)
    rep = truth_report(truth, g, det.bursts, params=params, labeled=label_bursts(det.bursts, det.cobursts),
                       trials=trials)
    rows = rep.rows()
    cols = ["section", "kind", "name", "planted", "detected", "recall", "precision", "fp_rate", "value", "n"]
    out.add("truth_report.csv", _csv_text(cols, [[r.get(c) for c in cols] for r in rows]))


COMMANDS: dict[str, tuple[Callable, str]] = {
    "generate": (cmd_generate, "write a synthetic dataset with ground truth"),
    "ingest": (cmd_ingest, "validate inputs and report their size"),
    "summary": (cmd_summary, "descriptive statistics of the graph and its churn"),
    "detect-bursts": (cmd_detect_bursts, "bursts in every per-user hourly series"),
    "cobursts": (cmd_cobursts, "retweet-follow and tweet-unfollow burst pairs"),
    "similarity": (cmd_similarity, "TF-IDF cosine similarity of user pairs"),
    "ego-curves": (cmd_ego_curves, "follower ego-network metrics around co-bursts"),
    "acceleration": (cmd_acceleration, "metric change rates inside bursts against the whole window"),
    "shuffle-control": (cmd_shuffle_control, "similarity curve with randomised follow recipients"),
    "fit": (cmd_fit, "fit the follow-probability law"),
    "predict": (cmd_predict, "score retweet bursts with fitted parameters"),
    "evaluate": (cmd_evaluate, "average precision of the model and baselines"),
    "tokens": (cmd_tokens, "tokens that change the chance of a follow burst"),
    "truth-report": (cmd_truth_report, "compare detections and fits with generator ground truth"),
}


def _env_threads() -> int:
    v = os.environ.get("BURSTNET_THREADS")
    try:
        return max(1, int(v)) if v else 1
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="burstnet", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"burstnet {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("inputs and outputs")
    g.add_argument("--data", help="directory with snapshot.csv and events.jsonl")
    g.add_argument("--snapshot", help="initial follower snapshot (CSV follower,followee)")
    g.add_argument("--events", help="event log (JSON lines)")
    g.add_argument("--out", help="output directory; a manifest.json is written next to the outputs")
    g.add_argument("--t-start", type=int, help="window start (unix seconds); default from window.json or data")
    g.add_argument("--t-end", type=int, help="window end (unix seconds, exclusive)")
    g.add_argument("--on-conflict", choices=("reject", "skip"), default="reject",
                   help="duplicate follows or unfollows of missing edges")
    k = common.add_argument_group("run")
    k.add_argument("--seed", type=int, default=None, help="master seed for every random stream")
    k.add_argument("--threads", type=int, default=_env_threads(),
                   help="worker threads (default: BURSTNET_THREADS or 1); never changes outputs")
    k.add_argument("--threshold", type=float, default=2.0, help="burst threshold in residual sigmas")
    k.add_argument("--min-count", type=int, default=5, help="minimum raw count in a burst hour")
    k.add_argument("--window-hours", type=int, default=72, help="follow label window after a tweet")
    k.add_argument("-v", "--verbose", action="store_true")

    sub = p.add_subparsers(dest="command", metavar="SUBCOMMAND")
    for name, (_, help_) in COMMANDS.items():
        s = sub.add_parser(name, parents=[common], help=help_, description=help_)
        if name == "generate":
            s.add_argument("--config", help="generator config JSON (see SynthConfig)")
            s.add_argument("--preset", choices=sorted(PRESETS), default="standard")
        if name == "summary":
            s.add_argument("--check-exposure", action="store_true",
                           help="also compute the exposure fraction by time-travel queries")
        if name == "similarity":
            s.add_argument("--pairs", required=True, help="CSV of user_a,user_b")
            s.add_argument("--vectors", help="cached vectors (user<TAB>token:weight,...) instead of the data")
        if name in ("ego-curves", "shuffle-control"):
            s.add_argument("--type", choices=sorted(COBURST_TYPES), default=CoBurstType.RETWEET_FOLLOW.value)
            s.add_argument("--days", type=int, default=4, help="offsets -days..days")
        if name == "evaluate":
            s.add_argument("--follow-bursts-baseline", action="store_true",
                           help="also rank by the number of earlier follow bursts of the user")
        if name in ("fit", "evaluate"):
            s.add_argument("--max-tweets", type=int, default=2000, help="tweets sampled for observations")
        if name in ("predict", "evaluate", "truth-report"):
            s.add_argument("--params", help="params.json from `fit`")
        if name == "predict":
            s.add_argument("--intervals", help="CSV user,t0,t1 to score instead of detected retweet bursts")
        if name == "tokens":
            s.add_argument("--min-support", type=int, default=10)
            s.add_argument("--confidence", type=float, default=0.95)
        if name == "truth-report":
            s.add_argument("--truth", help="truth.jsonl (default: DATA/truth.jsonl)")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        a = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else 2
    if a.command is None:
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING, format="%(name)s: %(message)s")
    a.threads = max(1, a.threads)
    ctx: dict = {"inputs": {}, "seed": a.seed}
    out = Outputs(a.out)
    t0 = time.perf_counter()
    try:
        COMMANDS[a.command][0](a, out, ctx)
    except _Usage as e:
        parser.print_usage(sys.stderr)
        print(f"burstnet {a.command}: error: {e}", file=sys.stderr)
        return 2
    except (DataError, IngestError, FitError, ValueError, OSError) as e:
        print(f"burstnet {a.command}: error: {e}", file=sys.stderr)
        return 1
    settings = {k: v for k, v in sorted(vars(a).items())
                if k not in ("out", "verbose", "threads", "data", "snapshot", "events")}
    settings.update(config=ctx.get("config"))
    manifest = {
        "subcommand": a.command,
        "config_hash": hashlib.sha256(json.dumps(settings, sort_keys=True, default=str).encode()).hexdigest(),
        "inputs": dict(sorted(ctx["inputs"].items())),
        "seed": ctx.get("seed"),
        "version": __version__,
        "duration_seconds": round(time.perf_counter() - t0, 3),
        "_extra_outputs": ctx.get("_extra_outputs", []),
    }
    try:
        out.flush(manifest)
    except OSError as e:
        print(f"burstnet {a.command}: error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
