import csv
import json
import subprocess
import sys

import pytest

from burstnet.cli import main


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli") / "data"
    assert main(["generate", "--preset", "small", "--seed", "0", "--out", str(d)]) == 0
    return d


def _run(args, tmp_path=None, name="out"):
    out = None if tmp_path is None else tmp_path / name
    rc = main(list(args) + ([] if out is None else ["--out", str(out)]))
    return rc, out


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_no_arguments_is_usage_error(capsys):
    assert main([]) == 2
    assert "usage" in capsys.readouterr().err


@pytest.mark.parametrize("args", [["detect-bursts", "--bogus"], ["no-such-command"], ["detect-bursts", "--threshold", "x"]])
def test_bad_arguments_exit_2(args):
    assert main(args) == 2


def test_missing_inputs_is_usage_error():
    assert main(["detect-bursts"]) == 2


def test_malformed_data_names_file_and_line(tmp_path, data, capsys):
    bad = tmp_path / "events.jsonl"
    lines = (data / "events.jsonl").read_text().splitlines()[:5]
    lines[3] = '{"ts": 1, "kind": "follow"}'
    bad.write_text("\n".join(lines) + "\n")
    rc = main(["summary", "--snapshot", str(data / "snapshot.csv"), "--events", str(bad)])
    assert rc == 1
    assert f"{bad}:4" in capsys.readouterr().err


def test_missing_file_is_data_error(tmp_path):
    assert main(["summary", "--snapshot", str(tmp_path / "x.csv"), "--events", str(tmp_path / "y.jsonl")]) == 1


def test_generate_writes_dataset_and_manifest(data):
    names = {p.name for p in data.iterdir()}
    assert {"snapshot.csv", "events.jsonl", "truth.jsonl", "trials.csv", "config.json", "window.json",
            "manifest.json"} <= names
    m = json.loads((data / "manifest.json").read_text())
    assert m["subcommand"] == "generate" and m["seed"] == 0
    assert set(m["outputs"]) >= {"events.jsonl", "snapshot.csv"}
    assert {"config_hash", "version", "duration_seconds", "inputs"} <= set(m)


def test_default_threshold_equals_explicit(tmp_path, data):
    _run(["detect-bursts", "--data", str(data)], tmp_path, "a")
    _run(["detect-bursts", "--data", str(data), "--threshold", "2.0"], tmp_path, "b")
    assert (tmp_path / "a/bursts.csv").read_bytes() == (tmp_path / "b/bursts.csv").read_bytes()
    ma = json.loads((tmp_path / "a/manifest.json").read_text())
    mb = json.loads((tmp_path / "b/manifest.json").read_text())
    assert ma["config_hash"] == mb["config_hash"]


def test_threads_do_not_change_results(tmp_path, data):
    _run(["cobursts", "--data", str(data), "--threads", "1"], tmp_path, "a")
    _run(["cobursts", "--data", str(data), "--threads", "3"], tmp_path, "b")
    assert (tmp_path / "a/cobursts.csv").read_bytes() == (tmp_path / "b/cobursts.csv").read_bytes()


def test_rerun_is_idempotent(tmp_path, data):
    for name in ("a", "b"):
        assert _run(["summary", "--data", str(data)], tmp_path, name)[0] == 0
    for f in ("summary.csv", "degree_curve.csv", "tweet_curve.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    ma = json.loads((tmp_path / "a/manifest.json").read_text())
    mb = json.loads((tmp_path / "b/manifest.json").read_text())
    ma.pop("duration_seconds"), mb.pop("duration_seconds")
    assert ma == mb


def test_stdout_without_out(data, capsys):
    assert main(["detect-bursts", "--data", str(data)]) == 0
    head = capsys.readouterr().out.splitlines()[0]
    assert head.split(",")[:3] == ["user", "kind", "hour"]


def test_fit_predict_evaluate_chain(tmp_path, data):
    assert _run(["fit", "--data", str(data), "--max-tweets", "300"], tmp_path, "fit")[0] == 0
    params = tmp_path / "fit/params.json"
    p = json.loads(params.read_text())
    assert set(p) == {"C", "alpha", "n_obs", "window_hours"} and 0 < p["C"] < 1

    iv = tmp_path / "iv.csv"
    bursts = _rows(_run(["detect-bursts", "--data", str(data)], tmp_path, "det")[1] / "bursts.csv")
    b = next(r for r in bursts if r["kind"] == "retweets")
    t0 = json.loads((data / "window.json").read_text())["t_start"] + 3600 * int(b["hour"])
    iv.write_text(f"user,t0,t1\n{b['user']},{t0},{t0 + 3600}\n")
    rc, out = _run(["predict", "--data", str(data), "--params", str(params), "--intervals", str(iv)], tmp_path, "pr")
    (row,) = _rows(out / "predictions.csv")
    assert rc == 0 and row["user"] == b["user"]
    assert row["score"] == "" or 0 <= float(row["score"]) <= 1

    rc, out = _run(["evaluate", "--data", str(data), "--params", str(params)], tmp_path, "ev")
    assert rc == 0
    methods = [r["method"] for r in _rows(out / "evaluation.csv")]
    assert methods == ["model", "exposures", "retweets", "followers", "random"]


def test_predict_needs_params(data):
    assert main(["predict", "--data", str(data)]) == 2


def test_bad_interval_file(tmp_path, data):
    params = tmp_path / "params.json"
    params.write_text(json.dumps({"C": 0.01, "alpha": 1.0}))
    iv = tmp_path / "iv.csv"
    iv.write_text("user,t0,t1\nu1,abc,3\n")
    assert main(["predict", "--data", str(data), "--params", str(params), "--intervals", str(iv)]) == 1


@pytest.mark.parametrize("cmd, files", [
    (["ingest"], ["ingest.json"]),
    (["acceleration"], ["acceleration.csv"]),
    (["ego-curves", "--type", "retweet-follow"], ["ego_curves.csv"]),
    (["tokens", "--min-support", "3"], ["tokens.csv"]),
])
def test_subcommands_write_their_files(tmp_path, data, cmd, files):
    rc, out = _run([cmd[0], "--data", str(data), *cmd[1:]], tmp_path)
    assert rc == 0
    for f in files:
        assert (out / f).exists()
    m = json.loads((out / "manifest.json").read_text())
    assert set(files) <= set(m["outputs"])


def test_truth_report_command(tmp_path, data):
    rc, out = _run(["truth-report", "--data", str(data), "--truth", str(data / "truth.jsonl")], tmp_path)
    assert rc == 0
    rows = _rows(out / "truth_report.csv")
    rt = next(r for r in rows if r.get("kind") == "retweets")
    assert float(rt["recall"]) >= 0.9


def test_console_script_entry():
    r = subprocess.run([sys.executable, "-m", "burstnet.cli"], capture_output=True, text=True)
    assert r.returncode == 2


def test_similarity_and_cached_vectors(tmp_path, data):
    users = sorted({ln.split(",")[0] for ln in (data / "snapshot.csv").read_text().splitlines()})[:4]
    pairs = tmp_path / "pairs.csv"
    pairs.write_text("user_a,user_b\n" + "".join(f"{a},{b}\n" for a, b in zip(users, users[1:])) + "u1,nobody\n")
    rc, out = _run(["similarity", "--data", str(data), "--pairs", str(pairs)], tmp_path, "a")
    assert rc == 0 and (out / "vectors.tsv").exists()
    rows = _rows(out / "similarity.csv")
    assert len(rows) == 4 and all(0 <= float(r["S"]) <= 1 + 1e-12 for r in rows)
    rc, out2 = _run(["similarity", "--pairs", str(pairs), "--vectors", str(out / "vectors.tsv")], tmp_path, "b")
    # weights round-trip exactly; the dot product may sum in another token order
    again = _rows(out2 / "similarity.csv")
    assert rc == 0 and [float(r["S"]) for r in again] == pytest.approx([float(r["S"]) for r in rows], abs=1e-12)


def test_shuffle_control_writes_replayable_log(tmp_path, data):
    rc, out = _run(["shuffle-control", "--data", str(data), "--days", "2"], tmp_path)
    assert rc == 0
    rows = _rows(out / "shuffle_control.csv")
    assert {r["variant"] for r in rows} == {"observed", "shuffled"}
    assert main(["ingest", "--snapshot", str(out / "shuffled_snapshot.csv"),
                 "--events", str(out / "shuffled_events.jsonl"),
                 "--t-start", str(json.loads((data / "window.json").read_text())["t_start"]),
                 "--t-end", str(json.loads((data / "window.json").read_text())["t_end"])]) == 0
