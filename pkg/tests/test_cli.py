import json
import argparse

import numpy as np
import pytest

from demonet import cli
from demonet.io import load_edge_list, load_graph_dataset, load_node_table, write_graph_dataset
from demonet.synth import degree_mix_set


def run(*argv):
    return cli.main([str(a) for a in argv])


def ns(**kw):
    return argparse.Namespace(**kw)


def test_missing_data_exits_2(capsys):
    assert run("train-node") == 2
    assert "--data or --synth" in capsys.readouterr().err


def test_conflicting_sources_exit_2():
    assert run("train-node", "--synth", "degree-classes", "--data", "x.txt") == 2


def test_wrong_synth_for_task():
    assert run("train-graph", "--synth", "degree-classes") == 2


def test_pooling_flag_node_task_rejected():
    with pytest.raises(cli.UsageError):
        cli.build_run_config("train-node", ns(synth="degree-classes", pooling="mean"))


def test_missing_file_exits_2(tmp_path):
    assert run("train-graph", "--data", tmp_path / "nope") == 2


def test_config_merge_order(tmp_path):
    conf = tmp_path / "c.txt"
    conf.write_text("# comment\nsynth = degree-classes\nhidden = 32\nlr=0.01\nmax-epochs = 7\nbucketing = yes\n")
    cfg = cli.build_run_config("train-node", ns(config=conf, hidden=16, lr=None))
    assert (cfg.hidden, cfg.lr, cfg.max_epochs, cfg.bucketing) == (16, 0.01, 7, True)
    assert cfg.dropout == 0.6 and cfg.resolved_repeats() == 1


def test_config_json_and_errors(tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"command": "train-graph", "synth": "degree-mix", "repeats": 3}))
    cfg = cli.build_run_config("train-graph", ns(config=conf))
    assert cfg.resolved_repeats() == 3
    with pytest.raises(cli.UsageError, match="written for"):
        cli.build_run_config("train-node", ns(config=conf))
    bad = tmp_path / "bad.txt"
    bad.write_text("colour = blue\n")
    with pytest.raises(cli.UsageError, match="unknown config key"):
        cli.read_config_file(bad)
    bad.write_text("hidden = many\n")
    with pytest.raises(cli.UsageError):
        cli.read_config_file(bad)


def test_graph_repeats_default_ten():
    cfg = cli.build_run_config("train-graph", ns(synth="degree-mix"))
    assert cfg.resolved_repeats() == 10


def test_split_seeds_independent():
    a, b = cli.split_seeds(0, 0), cli.split_seeds(0, 1)
    assert set(a) == {"data", "init", "dropout", "hash"}
    assert len(set(a.values())) == 4 and a != b
    assert a == cli.split_seeds(0, 0)


def test_train_node_outputs(tmp_path, capsys):
    out = tmp_path / "run"
    assert run("train-node", "--synth", "degree-classes", "--max-epochs", 20, "--repeats", 2, "--out", out) == 0
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["summary"]["runs"] == 2 and len(metrics["runs"]) == 2
    assert json.loads((out / "run_config.json").read_text())["max_epochs"] == 20
    assert (out / "checkpoints" / "run1" / "model.dmn").exists()
    assert "mean ± std over 2 runs" in capsys.readouterr().out


def test_synth_files_roundtrip_into_train_node(tmp_path):
    d = tmp_path / "syn"
    assert run("synth", "degree-classes", "--out", d) == 0
    g = load_edge_list(d / "edges.txt")
    g = load_node_table(d / "labels.csv", g, "labels")
    assert g.n == 90 and sorted(np.bincount(g.node_labels)) == [30, 30, 30]
    assert run("train-node", "--data", d / "edges.txt", "--labels", d / "labels.csv", "--attributes",
               d / "attributes.csv", "--max-epochs", 5, "--out", tmp_path / "r") == 0
    assert (tmp_path / "r" / "id_map.csv").read_text().splitlines()[:2] == ["external_id,internal_id", "0,0"]
    assert run("train-node", "--data", d / "edges.txt", "--max-epochs", 5) == 2


def test_train_graph_on_directory(tmp_path):
    d = write_graph_dataset(degree_mix_set(6, seed=0), tmp_path / "toy", "TOY")
    assert len(load_graph_dataset(d)) == 6
    out = tmp_path / "g"
    assert run("train-graph", "--data", d, "--max-epochs", 3, "--repeats", 2, "--out", out) == 0
    assert json.loads((out / "metrics.json").read_text())["summary"]["runs"] == 2


def test_wl_command(tmp_path, capsys):
    (tmp_path / "a.txt").write_text("0 1\n1 2\n2 3\n3 4\n4 5\n5 0\n")
    (tmp_path / "b.txt").write_text("0 1\n1 2\n2 0\n3 4\n4 5\n5 3\n")
    (tmp_path / "c.txt").write_text("0 1\n1 2\n")
    assert run("wl", tmp_path / "a.txt", tmp_path / "b.txt") == 0
    assert capsys.readouterr().out.strip() == "possibly_isomorphic"
    assert run("wl", tmp_path / "a.txt", tmp_path / "c.txt") == 0
    assert capsys.readouterr().out.strip() == "non_isomorphic"
    assert run("wl", tmp_path / "a.txt") == 2


def test_kernel_command(tmp_path, capsys):
    out = tmp_path / "k.csv"
    assert run("kernel", "--synth", "degree-mix", "--num-graphs", 4, "--kind", "wl_subtree", "--out", out) == 0
    assert "psd=True" in capsys.readouterr().out
    assert out.read_text().startswith("graph_id,0,1,2,3")
    assert run("kernel") == 2


def test_verify_exit_codes(tmp_path, monkeypatch):
    from demonet import verify

    ok = verify.GroupResult("x", 1)
    bad = verify.GroupResult("y", 1)
    bad.fail(node=3)
    monkeypatch.setattr(verify, "run_all", lambda *a, **k: [ok])
    assert run("verify", "--out", tmp_path / "r.json") == 0
    assert json.loads((tmp_path / "r.json").read_text())["groups"][0]["passed"]
    monkeypatch.setattr(verify, "run_all", lambda *a, **k: [ok, bad])
    assert run("verify") == 1


def test_bench_command(tmp_path, capsys):
    out = tmp_path / "b.csv"
    assert run("bench", "--sizes", "50", "--epochs", 1, "--min-time", 0, "--features", 4, "--hidden", 4, "--out", out) == 0
    text = capsys.readouterr().out
    assert "slope" not in text
    assert out.read_text().splitlines()[0] == "n,edges,ms_per_epoch,backend,variant"
    assert run("bench", "--sizes", "50,100", "--epochs", 1, "--min-time", 0, "--features", 4, "--hidden", 4,
               "--backend", "python", "--out", out) == 0
    assert "python: log-log slope" in capsys.readouterr().out
    assert run("bench", "--sizes", "a,b") == 2


def test_run_config_replays_bit_identically(tmp_path):
    a = tmp_path / "a"
    assert run("train-node", "--synth", "degree-classes", "--variant", "hash", "--max-epochs", 15,
               "--repeats", 2, "--seed", 5, "--out", a) == 0
    b = tmp_path / "b"
    assert run("train-node", "--config", a / "run_config.json", "--out", b) == 0

    def strip(path):
        m = json.loads((path / "metrics.json").read_text())
        for r in m["runs"]:
            r.pop("wall_ms_per_epoch")
        return m

    assert strip(a) == strip(b)
    assert (a / "checkpoints/run1/model.dmn").read_bytes() == (b / "checkpoints/run1/model.dmn").read_bytes()


def test_verify_default_suite(capsys):
    assert run("verify", "--seed", 0) == 0
    assert "6/6 property groups passed" in capsys.readouterr().out
