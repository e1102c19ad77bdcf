import numpy as np
import pytest

from heterseed.cli import PRESETS, build_parser, run
from heterseed.graph import save_graph
from heterseed.synth import Theorem1Config, gen_clustered, gen_theorem1

APA = "writes,writes_rev"


@pytest.fixture(scope="module")
def graph_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("graphs") / "clustered"
    g = gen_clustered(n_cliques=15, clique_size=3, n_classes=3, seed=2)
    save_graph(g, d)
    return str(d)


def test_unknown_flag_exits_1(capsys):
    code = run(["train", "--graph", "x", "--metapaths", "A-P-A", "--bogus"])
    assert code == 1
    assert "usage" in capsys.readouterr().err.lower()


def test_missing_subcommand_exits_1():
    assert run([]) == 1


def test_missing_graph_dir_exits_2(capsys):
    code = run(["analyze", "--graph", "/nonexistent/dir", "--metapaths", APA])
    assert code == 2
    assert "error" in capsys.readouterr().err.lower()


def test_bad_metapath_exits_2(graph_dir, capsys):
    code = run(["analyze", "--graph", graph_dir, "--metapaths", "writes,writes"])
    assert code == 2


def test_analyze_byte_stable(graph_dir, tmp_path):
    out1 = tmp_path / "a1.tsv"
    out2 = tmp_path / "a2.tsv"
    assert run(["analyze", "--graph", graph_dir, "--metapaths", APA,
                "--out", str(out1)]) == 0
    assert run(["analyze", "--graph", graph_dir, "--metapaths", APA,
                "--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    text = out1.read_text()
    assert text.startswith("metapath\tedges\thomophily\tmean_cosine")
    assert "fit\t" in text


def test_train_writes_log_and_checkpoint(graph_dir, tmp_path, capsys):
    log = tmp_path / "log.tsv"
    ckpt = tmp_path / "model.bin"
    code = run([
        "train", "--graph", graph_dir, "--metapaths", APA,
        "--epochs", "3", "--hidden", "16", "--lr", "1e-3", "--dropout", "0.2",
        "--alpha", "0.2", "--beta", "0.7", "--seed", "1",
        "--log", str(log), "--checkpoint", str(ckpt),
    ])
    assert code == 0
    lines = log.read_text().strip().splitlines()
    assert lines[0].startswith("epoch\t")
    assert len(lines) == 5  # header + 3 epochs + test line
    assert lines[-1].startswith("test\t")
    assert ckpt.exists()
    out = capsys.readouterr().out
    assert "test" in out


def test_eval_loads_checkpoint(graph_dir, tmp_path, capsys):
    ckpt = tmp_path / "model.bin"
    assert run([
        "train", "--graph", graph_dir, "--metapaths", APA,
        "--epochs", "2", "--hidden", "16", "--seed", "1",
        "--checkpoint", str(ckpt),
    ]) == 0
    capsys.readouterr()
    assert run([
        "eval", "--graph", graph_dir, "--metapaths", APA,
        "--checkpoint", str(ckpt), "--split", "val",
    ]) == 0
    out = capsys.readouterr().out
    assert "val" in out and "micro=" in out


def test_gen_synth_theorem1_and_bias_sim(tmp_path, capsys):
    out_dir = tmp_path / "t1"
    assert run([
        "gen-synth", "theorem1", "--n", "4", "--m-same", "3", "--m-diff", "1",
        "--out", str(out_dir),
    ]) == 0
    from heterseed.graph import load_graph

    g = load_graph(out_dir)
    assert g.num_targets == 8
    capsys.readouterr()

    tsv = tmp_path / "bias.tsv"
    assert run(["bias-sim", "--q-grid", "0,0.5,1", "--out", str(tsv)]) == 0
    lines = tsv.read_text().strip().splitlines()
    assert len(lines) == 4
    q, emp, closed = lines[2].split("\t")
    assert float(q) == 0.5
    assert abs(float(emp) - 1.0) < 1e-9


def test_gen_synth_sbm_roundtrip(graph_dir, tmp_path):
    out_dir = tmp_path / "injected"
    assert run([
        "gen-synth", "sbm", "--base", graph_dir, "--metapaths", APA,
        "--rho", "1.0", "--mode", "low", "--out", str(out_dir),
    ]) == 0
    from heterseed.graph import load_graph

    base = load_graph(graph_dir)
    injected = load_graph(out_dir)
    assert not np.array_equal(base.labels, injected.labels)
    assert np.array_equal(
        np.sort(base.edges["writes"], axis=0),
        np.sort(injected.edges["writes"], axis=0),
    )


def test_theorem1_degenerate_config_exits_2(tmp_path, capsys):
    code = run([
        "gen-synth", "theorem1", "--n", "1", "--m-same", "2", "--m-diff", "1",
        "--out", str(tmp_path / "x"),
    ])
    assert code == 2


def test_presets_match_documented_grid():
    assert PRESETS["dblp"] == dict(
        lr=1e-3, hidden_dim=128, dropout=0.7, epochs=50, alpha=0.2, beta=0.7
    )
    assert PRESETS["mag"]["beta"] == 1.0
    assert PRESETS["mag"]["batch_size"] == 1024
    assert PRESETS["rcdd"]["neighbor_fanout"] == (15, 15)


def test_flag_to_config_mapping():
    parser = build_parser()
    args = parser.parse_args([
        "train", "--graph", "g", "--metapaths", "A-P-A",
        "--preset", "dblp", "--alpha", "0.5", "--seed", "7",
        "--fanout", "5,5", "--no-dec",
    ])
    from heterseed.cli import _make_config

    cfg = _make_config(args)
    assert cfg.lr == 1e-3  # preset
    assert cfg.alpha == 0.5  # explicit override wins
    assert cfg.seed == 7
    assert cfg.neighbor_fanout == (5, 5)
    assert cfg.no_dec is True


def test_homophily_bins_smoke(tmp_path, capsys):
    from heterseed.synth import gen_homophily_halves

    d = tmp_path / "halves"
    save_graph(gen_homophily_halves(n_units_per_kind=2, seed=1), d)
    out = tmp_path / "bins.tsv"
    code = run([
        "homophily-bins", "--graph", str(d), "--metapaths", APA,
        "--epochs", "2", "--hidden", "8", "--seed", "0", "--out", str(out),
    ])
    assert code == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0].startswith("bin\t")
    assert len(lines) == 6
