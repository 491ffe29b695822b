import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from _oracles import followers, random_log, replay_edges, two_hop
from burstnet.events import (Event, EventKind, IngestError, SeriesKind, build_graph, ingest, read_events,
                             write_events, write_snapshot)

F, U, T, R = EventKind.FOLLOW, EventKind.UNFOLLOW, EventKind.TWEET, EventKind.RETWEET


def _write(tmp_path, edges, events):
    s, e = tmp_path / "snapshot.csv", tmp_path / "events.jsonl"
    write_snapshot(s, edges)
    write_events(e, events)
    return s, e


def test_empty_log_keeps_snapshot(tmp_path):
    s, e = _write(tmp_path, [("A", "B")], [])
    g = ingest(s, e, t_start=0, t_end=7200)
    assert g.followers_at("B", 0) == {"A"}
    assert g.followers_at("B", 7199) == {"A"}


def test_follow_then_unfollow_replay():
    g = build_graph([], [Event(10, 0, F, "A", "B"), Event(20, 1, U, "A", "B")], t_start=0, t_end=3600)
    assert g.followers_at("B", 15) == {"A"}
    assert g.followers_at("B", 25) == set()
    assert g.followers_at("B", 5) == set()


def test_event_at_query_time_is_applied():
    g = build_graph([], [Event(10, 0, F, "A", "B"), Event(20, 1, U, "A", "B")], t_start=0, t_end=3600)
    assert g.followers_at("B", 10) == {"A"}
    assert g.followers_at("B", 20) == set()


def test_unknown_user_has_no_followers():
    g = build_graph([("A", "B")], [], t_start=0, t_end=3600)
    assert g.followers_at("nobody", 0) == set()
    assert g.two_hop_at("nobody", 0) == set()


def test_refollow_cycles_are_separate_intervals():
    evs = [Event(10, 0, F, "A", "B"), Event(20, 1, U, "A", "B"), Event(30, 2, F, "A", "B")]
    g = build_graph([], evs, t_start=0, t_end=3600)
    assert [g.followers_at("B", t) for t in (15, 25, 35)] == [{"A"}, set(), {"A"}]


def test_two_hop_chain():
    g = build_graph([("i", "j"), ("j", "k")], [], t_start=0, t_end=3600)
    assert g.two_hop_at("k", 0) == {"i"}
    assert g.two_hop_at("i", 0) == set()


@pytest.mark.parametrize("bad, msg", [
    ('{"ts": 1, "seq": 0, "kind": "follow", "actor": "A"}', "requires a target"),
    ('{"ts": 1, "seq": 0, "kind": "tweet", "actor": "A", "target": "B"}', "no target"),
    ('{"ts": "x", "seq": 0, "kind": "tweet", "actor": "A"}', "integers"),
    ('{"ts": 1, "seq": 0, "kind": "like", "actor": "A", "target": "B"}', "unknown kind"),
    ('{"ts": 1, "seq": 0, "kind": "follow", "actor": "A", "target": "A"}', "actor equals target"),
    ("not json", "invalid JSON"),
])
def test_malformed_line_names_file_and_line(tmp_path, bad, msg):
    s = tmp_path / "s.csv"
    s.write_text("")
    e = tmp_path / "e.jsonl"
    e.write_text('{"ts": 0, "seq": 0, "kind": "tweet", "actor": "A"}\n' + bad + "\n")
    with pytest.raises(IngestError, match=msg) as err:
        ingest(s, e, t_start=0, t_end=3600)
    assert err.value.line == 2
    assert str(e) in str(err.value)


def test_bad_snapshot_line(tmp_path):
    s = tmp_path / "s.csv"
    s.write_text("A,B\nC\n")
    e = tmp_path / "e.jsonl"
    e.write_text("")
    with pytest.raises(IngestError, match=r"s.csv:2"):
        ingest(s, e, t_start=0, t_end=3600)


@pytest.mark.parametrize("events", [
    [Event(10, 0, F, "A", "B")],  # duplicate of a snapshot edge
    [Event(10, 0, U, "B", "A")],  # phantom unfollow
])
def test_conflicts_rejected_by_default_and_skippable(events):
    with pytest.raises(IngestError):
        build_graph([("A", "B")], events, t_start=0, t_end=3600)
    g = build_graph([("A", "B")], events, t_start=0, t_end=3600, on_conflict="skip")
    assert g.followers_at("B", 3599) == {"A"}
    assert g.n_events == 0


def test_out_of_order_and_out_of_window_rejected():
    with pytest.raises(IngestError, match="ordered"):
        build_graph([], [Event(10, 1, T, "A"), Event(10, 1, T, "B")], t_start=0, t_end=3600)
    with pytest.raises(IngestError, match="outside window"):
        build_graph([], [Event(3600, 0, T, "A")], t_start=0, t_end=3600)


def test_hourly_series_buckets():
    g = build_graph([], [Event(3601, 0, F, "A", "B")], t_start=0, t_end=4 * 3600)
    s = g.hourly_series("B", SeriesKind.FOLLOWS)
    assert s.x.tolist() == [0, 1, 0, 0]
    assert g.hourly_series("A", SeriesKind.FOLLOWS).x.tolist() == [0, 0, 0, 0]
    assert g.hourly_series("A", SeriesKind.TWEETS).x.sum() == 0


def test_hourly_series_partial_last_hour():
    g = build_graph([], [Event(5000, 0, T, "A")], t_start=0, t_end=5400)
    assert g.n_hours == 2


def test_retweets_received_counted_on_target():
    evs = [Event(0, 0, T, "A", None, "x", "hi"), Event(10, 1, R, "B", "A", "x"), Event(20, 2, R, "C", "A", "x")]
    g = build_graph([], evs, t_start=0, t_end=3600)
    assert g.hourly_series("A", SeriesKind.RETWEETS).x.tolist() == [2]
    assert g.hourly_series("A", SeriesKind.TWEETS).x.tolist() == [1]
    assert g.hourly_series("B", SeriesKind.RETWEETS).x.tolist() == [0]


def test_jsonl_roundtrip(tmp_path):
    evs = [Event(1, 0, T, "A", None, "t1", "hello #x"), Event(2, 1, R, "B", "A", "t1", "hello #x"),
           Event(3, 2, F, "B", "A")]
    p = tmp_path / "e.jsonl"
    write_events(p, evs)
    assert read_events(p) == evs
    first = json.loads(p.read_text().splitlines()[0])
    assert set(first) == {"ts", "seq", "kind", "actor", "tweet_id", "text"}


def test_generated_counts_match_ingest(small_run):
    res, g = small_run.res, small_run.g
    counts = g.kind_counts()
    emitted = {k.value: sum(1 for e in res.events if e.kind is k) for k in EventKind}
    assert counts == emitted
    assert counts["follow"] == res.counters["exposure_follows"] + res.counters["organic_follows"]
    assert counts["unfollow"] == res.counters["unfollows"]


@pytest.mark.parametrize("seed", range(10))
def test_followers_match_replay_oracle(seed):
    rng = np.random.default_rng(seed)
    initial, events = random_log(rng, n_users=9, n_events=60)
    g = build_graph(initial, events, t_start=0, t_end=10 * 3600)
    for _ in range(50):
        u = f"u{rng.integers(9)}"
        t = int(rng.integers(0, 10 * 3600))
        edges = replay_edges(initial, events, t)
        assert g.followers_at(u, t) == followers(edges, u)
        assert g.two_hop_at(u, t) == two_hop(edges, u)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 12), m=st.integers(0, 80))
def test_conservation_and_series_sums(seed, n, m):
    rng = np.random.default_rng(seed)
    initial, events = random_log(rng, n_users=n, n_events=m)
    g = build_graph(initial, events, t_start=0, t_end=10 * 3600)
    nf = sum(e.kind is F for e in events)
    nu = sum(e.kind is U for e in events)
    live = sum(len(g.followers_at(u, g.t_end - 1)) for u in g.users)
    assert live == len(initial) + nf - nu
    for u in g.users:
        assert g.hourly_series(u, SeriesKind.FOLLOWS).x.sum() == sum(e.kind is F and e.target == u for e in events)


def test_replay_is_deterministic(tmp_path):
    rng = np.random.default_rng(3)
    initial, events = random_log(rng, n_users=10, n_events=80)
    s, e = _write(tmp_path, initial, events)
    g1 = ingest(s, e, t_start=0, t_end=10 * 3600)
    g2 = ingest(s, e, t_start=0, t_end=10 * 3600)
    for u in g1.users:
        for t in range(0, 10 * 3600, 1800):
            assert g1.followers_at(u, t) == g2.followers_at(u, t)
