import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from _oracles import bfs_components, density, followers, random_log, replay_edges
from burstnet.burst import CoBurstType
from burstnet.egonet import (EgoSnapshot, follower_coherence, follower_similarity, hour_end, metric_curves,
                             rate_acceleration, shuffled_control, similarity_metric, wcc_count, edge_density,
                             ego_snapshot, wcc_metric)
from burstnet.events import HOUR, EventKind, SeriesKind, build_graph
from burstnet.textsim import TfIdfVector


def _snap(members, edges):
    return EgoSnapshot.from_edges("__center__", 0, members, edges)


def test_snapshot_example():
    g = build_graph([("a", "u"), ("b", "u"), ("a", "b"), ("u", "a")], [], t_start=0, t_end=3600)
    s = ego_snapshot(g, "u", 0)
    assert s.members == ["a", "b"] and s.edges == [("a", "b")]
    assert ego_snapshot(g, "b", 0).edges == []
    assert ego_snapshot(g, "nobody", 0).members == []


@pytest.mark.parametrize("seed", range(200))
def test_snapshot_matches_replay(seed):
    rng = np.random.default_rng(seed)
    initial, events = random_log(rng, n_users=int(rng.integers(3, 12)), n_events=int(rng.integers(0, 50)),
                                 with_posts=False)
    g = build_graph(initial, events, t_start=0, t_end=10 * 3600)
    t = int(rng.integers(0, 10 * 3600))
    edges = replay_edges(initial, events, t)
    for u in g.users:
        s = ego_snapshot(g, u, t)
        mem = followers(edges, u)
        assert set(s.members) == mem and u not in mem
        assert set(s.edges) == {(a, b) for a, b in edges if a in mem and b in mem}


@pytest.mark.parametrize("members, edges, wcc, dens", [
    ([], [], 0, None),
    (["a"], [], 1, None),
    (["a", "b", "c"], [("a", "b")], 2, 1 / 6),
    (["a", "b", "c"], [(x, y) for x in "abc" for y in "abc" if x != y], 1, 1.0),
    (["a", "b"], [], 2, 0.0),
    (list("abcde"), [("a", "b"), ("b", "a"), ("b", "c"), ("d", "e"), ("e", "d"), ("c", "a"), ("e", "a")], 1, 0.35),
])
def test_wcc_and_density_examples(members, edges, wcc, dens):
    s = _snap(members, edges)
    assert wcc_count(s) == wcc
    assert edge_density(s) == dens


@pytest.mark.parametrize("seed", range(200))
def test_wcc_and_density_match_oracles(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(0, 61))
    members = [f"m{j}" for j in range(k)]
    p = rng.uniform(0, 4 / max(k, 1))
    edges = [(a, b) for a in members for b in members if a != b and rng.random() < p]
    s = _snap(members, edges)
    assert wcc_count(s) == bfs_components(members, edges)
    d = edge_density(s)
    ref = density(members, edges)
    assert (d is None and ref is None) or abs(d - ref) < 1e-12


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 30), st.integers(0, 2**32 - 1))
def test_isolated_member_adds_component_and_lowers_density(k, seed):
    rng = np.random.default_rng(seed)
    members = [f"m{j}" for j in range(k)]
    edges = [(a, b) for a in members for b in members if a != b and rng.random() < 0.3]
    if not edges:
        edges = [(members[0], members[1])]
    s0, s1 = _snap(members, edges), _snap(members + ["new"], edges)
    assert wcc_count(s1) == wcc_count(s0) + 1
    assert edge_density(s1) < edge_density(s0)


def _unit(s):
    return TfIdfVector.from_weights({"x": s, "y": float(np.sqrt(1 - s * s))})


def test_follower_similarity():
    vecs = {"a": _unit(0.1), "b": _unit(0.2), "c": _unit(0.3), "z": TfIdfVector({}, 0.0)}
    center = TfIdfVector.from_weights({"x": 1.0})
    mean, excluded = follower_similarity(_snap(["a", "b", "c", "z"], []), vecs, center)
    assert mean == pytest.approx(0.2) and excluded == 1
    assert follower_similarity(_snap(["b"], []), vecs, center)[0] == pytest.approx(0.2)
    assert follower_similarity(_snap(["z"], []), vecs, center) == (None, 1)


def test_follower_coherence_small_cases():
    vecs = {"a": _unit(0.6), "b": _unit(0.8), "c": _unit(0.8), "d": _unit(0.8)}
    expected = 0.6 * 0.8 + 0.8 * 0.6
    assert follower_coherence(_snap(["a", "b"], []), vecs) == pytest.approx(expected)
    assert follower_coherence(_snap(["b", "c", "d"], []), vecs) == pytest.approx(1.0)
    assert follower_coherence(_snap(["a"], []), vecs) is None


def test_sampled_coherence_close_to_exact():
    rng = np.random.default_rng(0)
    vecs = {f"m{k}": TfIdfVector.from_weights({w: float(rng.random()) for w in rng.choice(list("abcdefgh"), 3)})
            for k in range(100)}
    s = _snap(list(vecs), [])
    exact = follower_coherence(s, vecs)
    names = list(vecs)
    pair_vals = [follower_coherence(_snap([a, b], []), vecs) for i, a in enumerate(names) for b in names[i + 1:]]
    assert exact == pytest.approx(np.mean(pair_vals))
    est = follower_coherence(s, vecs, cap=50, n_pairs=10_000, seed=1)
    se = np.std(pair_vals) / np.sqrt(10_000)
    assert abs(est - exact) < 3 * se


# ------------------------------------------------------------------- curves

def _rf(small_run, distinct=True):
    cbs = small_run.det.of_type(CoBurstType.RETWEET_FOLLOW)
    if distinct:
        seen, out = set(), []
        for c in cbs:
            if c.user not in seen:
                seen.add(c.user)
                out.append(c)
        cbs = out
    assert cbs
    return cbs


def test_constant_metric_gives_flat_curve(small_run):
    c = metric_curves(small_run.g, _rf(small_run), lambda g, c, t: 3.0)
    assert all(v == 1.0 for v, n in zip(c.values, c.counts) if n)
    assert c.at(0) == 1.0


def test_single_burst_curve_is_its_trajectory(small_run):
    g = small_run.g
    (b,) = _rf(small_run)[:1]
    c = metric_curves(g, [b], wcc_metric, name="wcc")
    t0 = hour_end(g, b.hour)
    v0 = wcc_metric(g, g.index[b.user], t0)
    for o, v, n in zip(c.offsets, c.values, c.counts):
        t = t0 + o * 86400
        if g.t_start <= t < g.t_end:
            assert n == 1 and v == pytest.approx(wcc_metric(g, g.index[b.user], t) / v0)
        else:
            assert n == 0


def test_curve_skips_undefined_and_errors_when_all_skipped(small_run):
    cbs = _rf(small_run)
    first = cbs[0].user
    c = metric_curves(small_run.g, cbs, lambda g, k, t: None if g.users[k] == first else 2.0)
    assert c.n_skipped == 1 and c.at(0) == 1.0
    with pytest.raises(ValueError):
        metric_curves(small_run.g, cbs, lambda g, k, t: None)
    with pytest.raises(ValueError):
        metric_curves(small_run.g, [], lambda g, k, t: 1.0)


def _piecewise_metric(g, bursts, inside, outside):
    """Metric rising at ``inside``/``outside`` units per hour in/out of each burst window."""
    win = {}
    for b in bursts:
        win[g.index[b.user]] = (hour_end(g, b.trigger.hour - 1), hour_end(g, b.response.end_hour))

    def metric(g_, c, t):
        lo, hi = win[c]
        r_out = outside(c) if callable(outside) else outside
        r_in = inside(c) if callable(inside) else inside
        x = (t - g_.t_start) / HOUR
        ov = (min(max(t, lo), hi) - lo) / HOUR
        return r_out * (x - ov) + r_in * ov
    return metric, win


def test_acceleration_twice_baseline(small_run):
    g = small_run.g
    cbs = _rf(small_run)
    span = (g.t_end - 1 - g.t_start) / HOUR
    _, win = _piecewise_metric(g, cbs, 2.0, 1.0)
    # choose the outside rate so that every whole-window rate is exactly 1
    out_rate = {c: (span - 2 * (hi - lo) / HOUR) / (span - (hi - lo) / HOUR) for c, (lo, hi) in win.items()}
    m, _ = _piecewise_metric(g, cbs, 2.0, lambda c: out_rate[c])
    a = rate_acceleration(g, cbs, m)
    assert a.baseline_rate == pytest.approx(1.0)
    assert a.percent == pytest.approx(100.0)
    assert a.direction == "increase"


def test_acceleration_zero_when_rate_uniform(small_run):
    m, _ = _piecewise_metric(small_run.g, _rf(small_run), 0.7, 0.7)
    assert rate_acceleration(small_run.g, _rf(small_run), m).percent == pytest.approx(0.0, abs=1e-9)


def test_acceleration_recovers_planted_quarter_boost(small_run):
    cbs = _rf(small_run)
    slopes = {small_run.g.index[b.user]: s
              for b, s in zip(cbs, np.random.default_rng(0).uniform(0.5, 1.5, len(cbs)))}
    m, _ = _piecewise_metric(small_run.g, cbs, lambda c: 1.25 * slopes[c], lambda c: slopes[c])
    a = rate_acceleration(small_run.g, cbs, m)
    assert abs(a.percent - 25.0) < 5.0


def test_acceleration_zero_baseline_undefined(small_run):
    a = rate_acceleration(small_run.g, _rf(small_run), lambda g, c, t: 5.0)
    assert a.percent is None


# ------------------------------------------------------------------ shuffle

def test_shuffle_preserves_actors_times_and_replays(small_run):
    res = small_run.res
    sh = shuffled_control(res.initial_edges, res.events, seed=0)
    assert [(e.ts, e.seq, e.kind, e.actor) for e in sh] == [(e.ts, e.seq, e.kind, e.actor) for e in res.events]
    assert all(e.target != e.actor for e in sh if e.target is not None)
    gs = build_graph(res.initial_edges, sh, t_start=res.t_start, t_end=res.t_end)
    g = small_run.g
    for kind in (SeriesKind.FOLLOWS, SeriesKind.UNFOLLOWS):
        assert np.array_equal(gs.hourly_matrix(kind).sum(axis=0), g.hourly_matrix(kind).sum(axis=0))
    moved = sum(a.target != b.target for a, b in zip(sh, res.events) if a.kind is EventKind.FOLLOW)
    assert moved > 0.9 * sum(e.kind is EventKind.FOLLOW for e in res.events)
    assert sh == shuffled_control(res.initial_edges, res.events, seed=0)


def test_shuffle_lowers_similarity_trend(small_run):
    res, g, vec = small_run.res, small_run.g, small_run.vectors
    cbs = small_run.det.of_type(CoBurstType.RETWEET_FOLLOW)
    obs = metric_curves(g, cbs, similarity_metric(vec))
    gs = build_graph(res.initial_edges, shuffled_control(res.initial_edges, res.events, seed=0),
                     t_start=res.t_start, t_end=res.t_end)
    sh = metric_curves(gs, cbs, similarity_metric(vec.bind(gs)))
    vec.bind(g)
    assert sh.slope() < obs.slope()
