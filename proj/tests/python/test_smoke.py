"""Smoke tests for the pybind11 module.

Run via ctest (python_smoke), which sets PYTHONPATH to the extension's build
directory and JTCSE_BIN to the CLI binary.
"""

import math
import os
import subprocess
import sys
from pathlib import Path

import pytest

# Make the in-tree `jtcse` package importable alongside the built extension.
sys.path.insert(0, str(Path(__file__).resolve().parents[2]))

import jtcse  # noqa: E402


def test_tmc_binary_closed_form():
    assert jtcse.tmc_binary(1.0, 1.0) == pytest.approx(0.0, abs=1e-15)
    for k, t in [(0.5, 0.2), (2.0, -1.0), (3.5, 0.9)]:
        expect = math.sqrt(1 + k * k - 2 * k * t) / (1 + k)
        assert jtcse.tmc_binary(k, t) == pytest.approx(expect, rel=1e-12)
    with pytest.raises(jtcse.JtcseError):
        jtcse.tmc_binary(-0.5, 0.0)
    with pytest.raises(jtcse.JtcseError):
        jtcse.tmc_binary(1.0, 1.5)


def test_tmc_geometric_endpoints():
    assert jtcse.tmc_geometric([1.0, 0.0], [1.0, 0.0]) == pytest.approx(0.0, abs=1e-5)
    assert jtcse.tmc_geometric([1.0, 0.0], [-1.0, 0.0]) == pytest.approx(1.0, rel=1e-12)
    # one-sided scaling: tmc(h, c*h) = |1 - c| / (1 + c)
    h = [0.3, -0.7, 1.1]
    c = 3.0
    assert jtcse.tmc_geometric(h, [c * x for x in h]) == pytest.approx(
        abs(1 - c) / (1 + c), rel=1e-9
    )


def test_spearman():
    assert jtcse.spearman([1.0, 2.0, 3.0], [10.0, 20.0, 30.0]) == pytest.approx(1.0)
    assert jtcse.spearman([1.0, 2.0, 3.0], [3.0, 2.0, 1.0]) == pytest.approx(-1.0)
    with pytest.raises(jtcse.JtcseError):
        jtcse.spearman([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])


def test_cael_positions():
    assert jtcse.cael_positions(12, 2) == [2, 4, 6, 8, 10, 12]
    assert jtcse.cael_positions(12, 12) == [12]
    with pytest.raises(jtcse.JtcseError):
        jtcse.cael_positions(12, 0)


def test_synth_corpus_deterministic():
    lines_a, pairs_a = jtcse.synth_corpus(7, n_sentences=100, n_pairs=30)
    lines_b, pairs_b = jtcse.synth_corpus(7, n_sentences=100, n_pairs=30)
    assert lines_a == lines_b
    assert pairs_a == pairs_b
    assert len(lines_a) == 100
    assert len(pairs_a) == 30
    for a, b, gold in pairs_a:
        assert isinstance(a, str) and isinstance(b, str)
        assert 0.0 <= gold <= 5.0
    lines_c, _ = jtcse.synth_corpus(8, n_sentences=100, n_pairs=30)
    assert lines_c != lines_a


def test_info_nce():
    # B = 1: the positive is the only candidate, so the loss is exactly 0.
    assert jtcse.info_nce([[1.0, 2.0]], [[3.0, -1.0]]) == pytest.approx(0.0, abs=1e-12)
    h = [[1.0, 0.0], [0.0, 1.0]]
    base = jtcse.info_nce(h, h)
    # cosine similarity is scale invariant, so the loss must be too
    scaled = jtcse.info_nce([[3.0, 0.0], [0.0, 3.0]], h)
    assert scaled == pytest.approx(base, rel=1e-9)
    with pytest.raises(jtcse.JtcseError):
        jtcse.info_nce([], [])


def test_alignment_uniformity():
    pair = [[1.0, 0.0], [-1.0, 0.0]]
    assert jtcse.alignment(pair, pair) == pytest.approx(0.0, abs=1e-12)
    # two antipodal unit vectors: ||h1 - h2||^2 = 4, t = 2 -> log e^{-8} = -8
    assert jtcse.uniformity(pair, 2.0) == pytest.approx(-8.0, rel=1e-12)


def test_macs_and_eta():
    gmac_one, _ = jtcse.macs_and_eta(12, 768, 3072, 1, 128, 1.0)
    gmac_twin, eta = jtcse.macs_and_eta(12, 768, 3072, 2, 128, 1.0)
    gmac_six, _ = jtcse.macs_and_eta(12, 768, 3072, 6, 128, 1.0)
    assert gmac_twin == pytest.approx(2 * gmac_one, rel=1e-12)
    assert gmac_six == pytest.approx(6 * gmac_one, rel=1e-12)
    assert eta == pytest.approx(1.0 / gmac_twin, rel=1e-12)
    with pytest.raises(jtcse.JtcseError):
        jtcse.macs_and_eta(12, 768, 3072, 2, 128, -0.5)


@pytest.fixture(scope="module")
def trained_run(tmp_path_factory):
    binary = os.environ.get("JTCSE_BIN")
    if not binary:
        pytest.skip("JTCSE_BIN not set")
    work = tmp_path_factory.mktemp("pyrun")
    def run(*args):
        subprocess.run([binary, *args], cwd=work, check=True,
                       capture_output=True, text=True)
    run("synth", "--seed", "7", "--n-sentences", "150", "--n-pairs", "40",
        "--out", "data")
    cfg = work / "small.cfg"
    cfg.write_text("n_layers=2\nd=16\nn_heads=2\nd_ffn=32\n"
                   "steps=4\nbatch_size=8\neval_every=2\n")
    run("train", "--corpus", "data/corpus.txt", "--sts-dev", "data/sts.tsv",
        "--config", "small.cfg", "--seed", "3", "--out", "run")
    return work / "run"


def test_embedder(trained_run):
    emb = jtcse.Embedder(str(trained_run / "model.ckpt"))
    assert emb.kind == "twin"
    assert emb.dim == 16
    sentences = ["the plan rests", "a small stone turns", "the plan rests"]
    vecs = emb.embed(sentences)
    assert len(vecs) == 3
    assert all(len(v) == 16 for v in vecs)
    assert vecs[0] == vecs[2]  # same sentence, same embedding
    assert vecs[0] != vecs[1]
    assert vecs == emb.embed(sentences)  # deterministic across calls


def test_embedder_bad_path():
    with pytest.raises(jtcse.JtcseError):
        jtcse.Embedder("/nonexistent/model.ckpt")
