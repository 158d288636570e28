import json
import math

import pytest

import hypstat


def test_coding_validates():
    v = hypstat.validate_coding(2, 8)
    assert v["passed"]
    assert v["sphere_counts"][1:] == [4 * 3 ** (n - 1) for n in range(1, 9)]
    assert v["spectral_radius"] == pytest.approx(3.0, abs=1e-8)


def test_metrics():
    word = hypstat.word_metric(2)
    assert word.distance("abAB") == 4.0
    assert word.distance("aA") == 0.0
    assert word.translation_length("abA") == 1.0
    srw = hypstat.green_metric([0.25, 0.25])
    assert srw.distance("ab") == pytest.approx(2 * math.log(3.0), abs=1e-9)
    alpha = hypstat.hilbert_schottky()
    assert alpha.distance("a") == pytest.approx(2.0, abs=1e-9)
    with pytest.raises(hypstat.HypstatError):
        word.distance("axb")


def test_degenerate_pair():
    word = hypstat.word_metric(2)
    c = hypstat.constants(word, hypstat.scaled(word, 2.0))
    assert c["tau"] == pytest.approx(2.0)
    assert c["sigma2"] <= 1e-8
    assert hypstat.similar(word, hypstat.scaled(word, 2.0))


def test_green_pair():
    d = hypstat.green_metric([0.35, 0.15])
    d_star = hypstat.green_metric([0.25, 0.25])
    c = hypstat.constants(d, d_star)
    assert c["growth_d"] == pytest.approx(1.0, abs=1e-9)
    assert c["sigma2"] > 0
    assert c["routes_agree"]
    assert c["tau"] > c["growth_d"] / c["growth_d_star"]
    curve = hypstat.manhattan_curve(d, d_star, points=5)
    thetas = [t for _, t in curve]
    assert thetas[0] == pytest.approx(c["growth_d"])
    assert all(b - 2 * m + a > 0 for a, m, b in zip(thetas, thetas[1:], thetas[2:]))
    stats = hypstat.ball_statistics(d, d_star, 9.0, c["tau"], c["sigma2"])
    assert stats["size"] > 1000
    assert abs(stats["growth_rate"] - 1.0) < 0.1
    assert not hypstat.similar(d, d_star)


def test_run_diff_and_plot(tmp_path):
    spec = {
        "schema": "hypstat.experiment/1",
        "group": {"free_rank": 2},
        "d": {"kind": "green", "weights": [0.35, 0.15]},
        "d_star": {"kind": "word"},
        "tasks": ["constants", "clt"],
        "knobs": {"T_max": 7.0},
        "output": "out",
        "cache": "cache",
    }
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(spec))
    info = hypstat.validate_spec(path)
    assert "rank 2" in info["group"]
    manifest = hypstat.run(path)
    assert all(t["status"] == "ok" for t in manifest["tasks"])
    diff = hypstat.diff(tmp_path / "out", tmp_path / "out")
    assert all(row["diff"] == 0.0 for row in diff["rows"])
    plot = hypstat.plot_data(tmp_path / "out", "growth")
    assert plot.read_text().splitlines()[0] == "T,N,log_N,fit"
    with pytest.raises(hypstat.SpecError):
        hypstat.plot_data(tmp_path / "out", "histogram")


def test_bad_spec(tmp_path):
    path = tmp_path / "spec.json"
    path.write_text(json.dumps({"schema": "hypstat.experiment/1"}))
    with pytest.raises(hypstat.SpecError):
        hypstat.validate_spec(path)
