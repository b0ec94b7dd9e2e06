import json
import math

import numpy as np
import pytest

import superlex as sx


def small_spec(seed=3):
    spec = sx.WorldSpec()
    spec.d = 16
    spec.n_concepts = 8
    spec.n_codes = 16
    spec.vocab_size = 40
    spec.stopword_count = 4
    spec.seed = seed
    return spec


def test_percentile_and_ratio():
    assert sx.percentile([3.0, 1.0, 2.0, 4.0], 50) == 2.0
    assert round(sx.ratio_of(0.837, 2.568), 3) == 0.326
    assert sx.ratio_of(0.5, 0.0) is None


def test_world_is_deterministic_and_orthonormal():
    a = sx.generate_world(small_spec())
    b = sx.generate_world(small_spec())
    assert a.hash() == b.hash()
    g = a.concepts
    assert g.shape == (8, 16)
    np.testing.assert_allclose(g @ g.T, np.eye(8), atol=1e-12)
    assert sx.World.from_json(a.to_json()).hash() == a.hash()


def test_bad_spec_raises_config_error():
    spec = small_spec()
    spec.d = 0
    with pytest.raises(sx.ConfigError, match="d"):
        spec.validate()


def test_notes_head_and_sae_round_trip():
    world = sx.generate_world(small_spec())
    notes = sx.sample_notes(world, 40, 10, 2, 5)
    assert len(notes) == 40
    assert notes[0].embeddings.shape == (12, 16)
    assert list(notes[0].is_pad[-2:]) == [1, 1]

    cfg = sx.HeadTrainConfig()
    cfg.steps = 20
    head, curve = sx.train_head(notes, world.n_codes, cfg)
    assert len(curve) > 0 and all(math.isfinite(v) for v in curve)
    probs = head.predict(notes[0])
    assert len(probs) == world.n_codes
    assert all(0.0 < p < 1.0 for p in probs)

    emb = sx.collect_embeddings(notes)
    assert emb.shape == (400, 16)
    scfg = sx.SaeTrainConfig()
    scfg.m = 24
    scfg.steps = 30
    scfg.batch_size = 64
    model, report = sx.train_sae(emb, scfg)
    assert report.final_loss <= report.initial_loss
    f = np.array(model.encode(emb[0]))
    assert f.shape == (24,) and (f >= 0).all()
    xh = np.array(model.decode(f))
    expected = np.array(model.decoder_bias) + f @ model.decoder_rows
    np.testing.assert_allclose(xh, expected, atol=1e-12)
    assert sx.DictionaryModel.from_json(model.to_json()).model_hash() == model.model_hash()

    d = sx.build_dictionary(model, head, notes, k=5)
    for feature in d.features:
        acts = [a for _, a in d.top_tokens(feature)]
        assert acts == sorted(acts, reverse=True)
        assert len(acts) <= 5
    assert sx.Dictionary.from_json(d.to_json()).to_json() == d.to_json()


def test_pca_orthonormal_rows():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(300, 5))
    pca = sx.fit_pca(x)
    w = pca.weights
    np.testing.assert_allclose(w @ w.T, np.eye(5), atol=1e-8)
    assert pca.kind == "pca"
    with pytest.raises(sx.ShapeError):
        pca.encode(np.zeros(3))


def test_query_returns_nonzero_set_for_sparse_codes():
    ident = sx.make_identity(100)
    x = -np.ones(100)
    x[[4, 60]] = [0.5, 2.0]
    empty = sx.Dictionary.from_json(
        json.dumps({"version": "dict-v1", "entries": {},
                    "provenance": {"encoder": "identity", "encoder_hash": "", "world_hash": "",
                                   "sample_size": 0, "k": 10, "seed": 0}}))
    hits = sx.query_dictionary(empty, ident, x)
    assert [f for f, _ in hits] == [60, 4]


def test_pipeline_stages(tmp_path):
    cfg = sx.default_config()
    for assignment in ["world.d=16", "world.n_concepts=8", "world.n_codes=16", "world.vocab_size=48",
                       "world.stopword_count=4", "notes.train_count=60", "notes.test_count=20",
                       "head.steps=20"]:
        cfg = sx.apply_override(cfg, assignment)
    ws = sx.Workspace(cfg, str(tmp_path))
    with pytest.raises(sx.MissingInputError, match="gen-world"):
        ws.train("head")
    ws.gen_world()
    assert (tmp_path / "notes-train.sxw").read_bytes()[:4] == b"SXW1"
    ws.train("head")
    ws.train("identity")
    ws.build_dict()
    written = ws.eval("ratio")
    report = json.loads(open(written[0]).read())
    assert report["config_hash"] == sx.config_hash(cfg)
    assert "code" in ws.explain("identity", 0, 0)
    with pytest.raises(sx.ConfigError):
        sx.apply_override(cfg, "world.nope=1")
