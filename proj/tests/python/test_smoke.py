import json

import numpy as np
import pytest

import lowrank

SMOKE = {
    "model": {"d_model": 32, "n_layers": 2, "n_heads": 4, "d_ff": 48,
              "max_seq_len": 256, "seed": 3},
    "train": {"steps": 20, "batch_size": 2, "seq_len": 64},
    "calib_windows": 4, "calib_len": 64,
    "search_prompts": 2, "eval_prompts": 2, "prompt_bytes": 16, "gen_len": 16,
}


def test_svd_reconstructs():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((7, 5))
    u, s, vt = lowrank.svd(a)
    assert np.allclose(u @ np.diag(s) @ vt, a, atol=1e-12)
    assert np.allclose(s, np.linalg.svd(a, compute_uv=False), atol=1e-12)


def test_factorize_tail_error():
    rng = np.random.default_rng(1)
    w = rng.standard_normal((6, 9))
    a, b, sigma = lowrank.factorize(w, 3)
    assert a.shape == (6, 3) and b.shape == (3, 9)
    err = np.sum((a @ b - w) ** 2)
    full = np.linalg.svd(w, compute_uv=False)
    assert np.allclose(sigma, full[:3], atol=1e-12)
    assert err == pytest.approx(np.sum(full[3:] ** 2), abs=1e-10)


def test_allocation_hand_case():
    assert lowrank.proportional_ranks([2, 1, 1], 8, 1, [64, 64, 64]) == [4, 2, 2]
    with pytest.raises(lowrank.ValidationError):
        lowrank.proportional_ranks([1, 1], 1, 1, [4, 4])


def test_rouge():
    s = lowrank.rouge_l("police killed the gunman", "police kill the gunman")
    assert s["precision"] == pytest.approx(75.0)
    assert s["recall"] == pytest.approx(75.0)
    assert lowrank.rouge_l("a b", "a b")["f"] == pytest.approx(100.0)


def test_model_forward_shape():
    m = lowrank.TinyLM.initialize(lowrank.model_config(d_model=32, n_heads=4, d_ff=48))
    logits = m.forward([256, 65, 66])
    assert logits.shape == (3, 258)
    assert json.loads(m.config)["d_model"] == 32
    assert isinstance(m.generate("ab", 4), str)


def test_pipeline_round_trip(tmp_path, corpus):
    cfg = dict(SMOKE, corpus=str(corpus), out_dir=str(tmp_path))
    out = lowrank.run_pipeline(cfg)
    assert out["eval"]["perplexity"] >= 1.0
    assert 0.0 <= out["eval"]["rouge_l"]["f"] <= 100.0
    cm = lowrank.CompressedLM.load(str(tmp_path / "compressed.tlmc"))
    assert cm.active_ranks == cm.full_ranks
    schedule = json.loads((tmp_path / "schedule.json").read_text())
    assert schedule["schedule"]["form"] == "decreased"


def test_fisher_without_gradients_names_artifact(tmp_path, corpus):
    cfg = dict(SMOKE, corpus=str(corpus), out_dir=str(tmp_path))
    lowrank.run_stage("train", cfg)
    with pytest.raises(lowrank.ValidationError, match="gradients.tlmc"):
        lowrank.run_stage("allocate", cfg)
    lowrank.run_stage("allocate", dict(cfg, metric="weight_only"))
