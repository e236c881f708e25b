from __future__ import annotations

import math

import numpy as np
import pytest

from pausefeat.lexicon import N_NUMERIC, TAG_INDEX
from pausefeat.seqmodel import search as search_mod
from pausefeat.seqmodel.model import ModelConfig, ModelError, SeqBatch, SeqModel
from pausefeat.seqmodel.search import (REDUCED_SIZES, SIZES, SearchConfig, SpecificityGateError, SubsetArrays,
                                       grid_search, model_grid)
from pausefeat.seqmodel.train import SeqData, TrainConfig, cosine_lr, fit, predict, sgd_step

from .conftest import rel_error

SMALL = ModelConfig(bidirectional=False, gru_hidden=3, ffn_layers=(4, 3), pos_embed_dim=2, input_dim=N_NUMERIC + 2)
SMALL_BI = ModelConfig(bidirectional=True, gru_hidden=3, ffn_layers=(4,), pos_embed_dim=2, input_dim=N_NUMERIC + 2)


def random_batch(rng, lengths, n_tags=8):
    T = max(lengths)
    numeric = np.zeros((len(lengths), T, N_NUMERIC))
    pos = np.zeros((len(lengths), T), dtype=np.int64)
    for i, L in enumerate(lengths):
        numeric[i, :L] = rng.standard_normal((L, N_NUMERIC))
        pos[i, :L] = rng.integers(0, n_tags, L)
    return SeqBatch(numeric, pos, np.array(lengths))


# --- independent straight-line reference ------------------------------------------


def sig(v):
    return 1.0 / (1.0 + math.exp(-v))


def ref_gru(xs, W_ih, W_hh, b_ih, b_hh):
    H = len(W_hh[0])
    h = [0.0] * H
    out = []
    for x in xs:
        gi = [sum(W_ih[i][k] * x[k] for k in range(len(x))) + b_ih[i] for i in range(3 * H)]
        gh = [sum(W_hh[i][k] * h[k] for k in range(H)) + b_hh[i] for i in range(3 * H)]
        new = []
        for j in range(H):
            r = sig(gi[j] + gh[j])
            z = sig(gi[H + j] + gh[H + j])
            n = math.tanh(gi[2 * H + j] + r * gh[2 * H + j])
            new.append((1 - z) * n + z * h[j])
        h = new
        out.append(h)
    return out


def ref_logits(model: SeqModel, numeric, pos):
    cfg, P = model.config, {k: v.tolist() for k, v in model.params.items()}
    xs = [list(numeric[t]) + P["emb"][pos[t]] for t in range(len(pos))]
    fwd = ref_gru(xs, P["gru_f.W_ih"], P["gru_f.W_hh"], P["gru_f.b_ih"], P["gru_f.b_hh"])
    states = fwd
    if cfg.bidirectional:
        bwd = ref_gru(xs[::-1], P["gru_b.W_ih"], P["gru_b.W_hh"], P["gru_b.b_ih"], P["gru_b.b_hh"])[::-1]
        states = [f + b for f, b in zip(fwd, bwd)]
    G = len(states[0])
    scores = []
    for h in states:
        u = [math.tanh(sum(P["att.W"][i][k] * h[k] for k in range(G)) + P["att.b"][i]) for i in range(G)]
        scores.append(sum(P["att.u"][i] * u[i] for i in range(G)))
    m = max(scores)
    w = [math.exp(s - m) for s in scores]
    a = [v / sum(w) for v in w]
    act = [sum(a[t] * states[t][g] for t in range(len(states))) for g in range(G)]
    for i in range(len(cfg.ffn_layers)):
        W, b = P[f"ffn{i}.W"], P[f"ffn{i}.b"]
        act = [max(0.0, sum(W[r][k] * act[k] for k in range(len(act))) + b[r]) for r in range(len(W))]
    W, b = P["out.W"], P["out.b"]
    return [sum(W[r][k] * act[k] for k in range(len(act))) + b[r] for r in range(len(W))]


@pytest.mark.parametrize("cfg", [SMALL, SMALL_BI], ids=["uni", "bi"])
def test_forward_matches_reference(cfg):
    rng = np.random.default_rng(3)
    model = SeqModel(cfg, seed=1)
    batch = random_batch(rng, [5, 2, 4])
    logits = model.predict_scores(batch)
    for i, L in enumerate(batch.lengths):
        ref = ref_logits(model, batch.numeric[i, :L], batch.pos[i, :L])
        assert np.allclose(logits[i], ref, rtol=0, atol=1e-12)


def test_zero_model_single_token():
    model = SeqModel(SMALL, theta=np.zeros(SeqModel(SMALL).n_params))
    batch = random_batch(np.random.default_rng(0), [1])
    logits = model.predict_scores(batch)
    assert np.array_equal(logits, np.zeros((1, 2)))
    assert model.attention(batch)[0, 0] == 1.0


def test_attention_is_a_distribution_over_real_tokens():
    rng = np.random.default_rng(0)
    a = SeqModel(SMALL_BI, seed=2).attention(random_batch(rng, [6, 3, 1]))
    assert np.allclose(a.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(a[1, 3:] == 0) and np.all(a[2, 1:] == 0)


def test_padding_does_not_change_scores():
    rng = np.random.default_rng(5)
    model = SeqModel(SMALL_BI, seed=0)
    batch = random_batch(rng, [3, 7])
    alone = SeqBatch(batch.numeric[:1, :3], batch.pos[:1, :3], batch.lengths[:1])
    assert np.allclose(model.predict_scores(batch)[0], model.predict_scores(alone)[0], atol=1e-14)


def test_bad_inputs_rejected():
    model = SeqModel(SMALL)
    with pytest.raises(ModelError):
        model.predict_scores(SeqBatch(np.zeros((1, 2, 3)), np.zeros((1, 2)), np.array([2])))
    with pytest.raises(ModelError):
        model.predict_scores(SeqBatch(np.zeros((1, 2, N_NUMERIC)), np.full((1, 2), 99), np.array([2])))
    with pytest.raises(ModelError):
        ModelConfig(dropout_p=0.3)


# --- gradients --------------------------------------------------------------------


def numeric_grad(model, batch, labels, l2, eps=1e-5, dropout_seed=None):
    g = np.zeros_like(model.theta)
    for i in range(model.n_params):
        old = model.theta[i]
        vals = []
        for v in (old + eps, old - eps):
            model.theta[i] = v
            rng = None if dropout_seed is None else np.random.default_rng(dropout_seed)
            vals.append(model.loss_and_grad(batch, labels, l2, train=dropout_seed is not None, rng=rng)[0])
        model.theta[i] = old
        g[i] = (vals[0] - vals[1]) / (2 * eps)
    return g


@pytest.mark.parametrize("dropout", [0.0, 0.5])
@pytest.mark.parametrize("bidirectional", [False, True])
def test_gradient_matches_finite_differences(bidirectional, dropout):
    cfg = ModelConfig(bidirectional, 2, (3, 2), dropout, pos_embed_dim=2, input_dim=N_NUMERIC + 2)
    rng = np.random.default_rng(11)
    model = SeqModel(cfg, seed=4)
    batch = random_batch(rng, [4, 2, 3])
    labels = np.array([1, 0, 1])
    seed = 7 if dropout else None
    _, grad = model.loss_and_grad(batch, labels, 1e-3, train=bool(dropout),
                                  rng=np.random.default_rng(seed) if dropout else None)
    num = numeric_grad(model, batch, labels, 1e-3, dropout_seed=seed)
    assert np.max(rel_error(grad, num)) < 1e-4


def test_l2_term_is_exact():
    rng = np.random.default_rng(0)
    model = SeqModel(SMALL, seed=0)
    batch, labels = random_batch(rng, [3, 3]), np.array([0, 1])
    l0, g0 = model.loss_and_grad(batch, labels, 0.0)
    l1, g1 = model.loss_and_grad(batch, labels, 0.01)
    assert l1 - l0 == pytest.approx(0.005 * model.theta @ model.theta, rel=1e-12)
    assert np.allclose(g1 - g0, 0.01 * model.theta, atol=1e-15)


def test_unused_embedding_rows_get_no_gradient():
    model = SeqModel(SMALL, seed=0)
    batch = SeqBatch(np.ones((1, 2, N_NUMERIC)), np.array([[TAG_INDEX["NOUN"], TAG_INDEX["PAUSE"]]]), np.array([2]))
    _, grad = model.loss_and_grad(batch, np.array([1]), 0.0)
    emb_size = SMALL.n_tags * SMALL.pos_embed_dim
    emb_grad = grad[:emb_size].reshape(SMALL.n_tags, SMALL.pos_embed_dim)
    used = {TAG_INDEX["NOUN"], TAG_INDEX["PAUSE"]}
    for row in range(SMALL.n_tags):
        assert np.any(emb_grad[row] != 0) == (row in used)


def test_zero_learning_rate_leaves_parameters():
    theta = np.arange(5.0)
    vel = np.ones(5)
    sgd_step(theta, vel, np.ones(5), 0.0, 0.9)
    assert np.array_equal(theta, np.arange(5.0))


def test_momentum_step():
    theta, vel = np.zeros(2), np.array([1.0, 2.0])
    sgd_step(theta, vel, np.array([1.0, 1.0]), 0.1, 0.9)
    assert np.allclose(vel, [1.9, 2.8]) and np.allclose(theta, [-0.19, -0.28])


def test_cosine_schedule():
    assert cosine_lr(0, 600, 0.01) == 0.01
    assert cosine_lr(600, 600, 0.01) == pytest.approx(0.0, abs=1e-18)
    assert cosine_lr(300, 600, 0.01) == pytest.approx(0.005, abs=1e-15)
    assert cosine_lr(600, 600, 0.01, 0.001) == pytest.approx(0.001)


# --- training ---------------------------------------------------------------------


def separable(n=40, seed=0):
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 2
    numeric = rng.standard_normal((n, 3, N_NUMERIC)) * 0.3
    numeric[:, :, 0] += np.where(labels == 1, 1.5, -1.5)[:, None]
    pos = np.full((n, 3), TAG_INDEX["NOUN"])
    return SeqData(numeric, pos, np.full(n, 3), labels)


def test_learns_separable_data():
    data = separable()
    trained = fit(SMALL, data, TrainConfig(epochs=60, batch_size=10, seed=0))
    assert (predict(trained.model, data) == data.labels).all()
    assert trained.losses[-1] < trained.losses[0]


def test_training_is_deterministic():
    data = separable(20)
    a = fit(SMALL_BI, data, TrainConfig(epochs=3, seed=5))
    b = fit(SMALL_BI, data, TrainConfig(epochs=3, seed=5))
    assert np.array_equal(a.model.theta, b.model.theta) and a.losses == b.losses


def test_checkpoint_round_trip(tmp_path):
    model = SeqModel(SMALL_BI, seed=9)
    path = tmp_path / "m.json"
    model.save(path)
    back = SeqModel.load(path)
    assert back.config == model.config and np.array_equal(back.theta, model.theta)


def test_checkpoint_rejects_other_format(tmp_path):
    path = tmp_path / "m.json"
    path.write_text('{"format": "x", "version": 1}', encoding="utf-8")
    with pytest.raises(ModelError):
        SeqModel.load(path)


# --- grid and search ---------------------------------------------------------------


def test_grid_enumeration():
    grid = model_grid()
    assert len(grid) == 24 and len(set(grid)) == 24
    combos = {(c.bidirectional, len(c.ffn_layers), c.dropout_p, c.gru_hidden) for c in grid}
    assert combos == {(b, d, p, h) for b in (False, True) for d in (1, 2, 3) for p in (0.0, 0.5) for h in (12, 50)}
    assert {c.ffn_layers for c in grid} == {(10,), (10, 5), (10, 5, 3), (40,), (40, 20), (40, 20, 12)}
    assert len(model_grid(REDUCED_SIZES)) == 24 and SIZES["small"][0] == 12


def toy_arrays(n=20):
    rng = np.random.default_rng(0)
    raw = rng.standard_normal((n, 3, N_NUMERIC))
    return SubsetArrays(raw, np.zeros((n, 3), dtype=np.int64), np.full(n, 3), np.ones((n, 3), bool),
                        np.arange(n) % 2, [str(i) for i in range(n)])


FAST = SearchConfig(n_folds=2, seeds=(0,), train=TrainConfig(epochs=1))


def test_gate_rejects_all_ci_predictor(monkeypatch):
    monkeypatch.setattr(search_mod, "predict", lambda model, data: np.ones(len(data), dtype=np.int64))
    with pytest.raises(SpecificityGateError):
        grid_search(toy_arrays(), FAST, model_grid(REDUCED_SIZES)[:3])


def test_ties_go_to_fewer_parameters(monkeypatch):
    monkeypatch.setattr(search_mod, "predict", lambda model, data: data.labels.copy())
    grid = [model_grid(REDUCED_SIZES)[i] for i in (1, 0, 3)]
    result = grid_search(toy_arrays(), FAST, grid)
    assert result.best.index == 1
    assert all(s.passed_gate for s in result.summaries)
    assert len(result.trials) == 3 * 2
