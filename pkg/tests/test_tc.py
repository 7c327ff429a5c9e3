"""Classifier behavior: token/soft path equivalence, ranking determinism,
head permutation symmetry, and a separable learning task."""

import numpy as np
import pytest

from difftt import autodiff as ad
from difftt.autodiff import Tensor
from difftt.bridge import ExpectedEmbeddingSequence
from difftt.mt import TrainConfig
from difftt.tc import (Prediction, TcConfig, TcModel, labels_to_matrix,
                       rank_labels, train_tc)

from conftest import micro_tc, micro_vocab


@pytest.fixture
def model(vocab):
    return micro_tc(vocab)


def onehot_rows(ids, v):
    out = np.zeros((len(ids), v))
    out[np.arange(len(ids)), ids] = 1.0
    return out


def test_classify_tokens_deterministic(model, vocab):
    ids = vocab.encode(["t1", "t4", "t2"])
    a = model.classify_tokens(ids)
    b = model.classify_tokens(ids)
    assert np.array_equal(a.logits, b.logits)
    assert a.label == b.label


def test_classify_rejects_bad_input(model, vocab):
    with pytest.raises(ValueError, match="empty"):
        model.classify_tokens([])
    with pytest.raises(ValueError, match="out of vocabulary"):
        model.classify_tokens([len(vocab)])


def test_one_hot_soft_equals_token_path_bitwise(model, vocab, rng):
    v = len(vocab)
    for _ in range(50):
        n = int(rng.integers(1, model.config.max_len))
        ids = [int(i) for i in rng.integers(5, v, size=n)]
        hard = model.classify_tokens(ids)
        probs = onehot_rows(ids, v)
        seq = ExpectedEmbeddingSequence(
            embeddings=ad.matmul(Tensor(probs), model.emb.tensor),
            source=None, length=len(ids))
        soft = model.classify_soft(seq)
        assert np.array_equal(hard.logits, soft.logits)
        assert hard.label == soft.label


def test_soft_path_truncates_long_sequences(model, vocab, rng):
    v = len(vocab)
    ids = [int(i) for i in rng.integers(5, v, size=model.config.max_len + 3)]
    hard = model.classify_tokens(ids)  # truncates internally
    seq = ExpectedEmbeddingSequence(
        embeddings=ad.matmul(Tensor(onehot_rows(ids, v)), model.emb.tensor),
        source=None, length=len(ids))
    soft = model.classify_soft(seq)
    assert np.array_equal(hard.logits, soft.logits)


def test_batched_token_path_matches_single(model, vocab, rng):
    v = len(vocab)
    seqs = [[int(i) for i in rng.integers(5, v, size=int(rng.integers(1, 6)))]
            for _ in range(8)]
    batched = model.classify_tokens_batch(seqs)
    for s, got in zip(seqs, batched):
        single = model.classify_tokens(s)
        # padding changes summation order, so equality is only to rounding
        assert np.allclose(got.logits, single.logits, atol=1e-12)


def test_classify_soft_values_matches_classify_soft(model, vocab, rng):
    v = len(vocab)
    seqs = [[int(i) for i in rng.integers(5, v, size=int(rng.integers(1, 6)))]
            for _ in range(6)]
    m = max(len(s) for s in seqs)
    probs = np.zeros((len(seqs), m, v))
    for i, s in enumerate(seqs):
        probs[i, :len(s)] = onehot_rows(s, v)
        probs[i, len(s):, vocab.pad_id] = 1.0
    lengths = np.asarray([len(s) for s in seqs])
    batched = model.classify_soft_values(probs, lengths)
    for s, got in zip(seqs, batched):
        seq = ExpectedEmbeddingSequence(
            embeddings=ad.matmul(Tensor(onehot_rows(s, v)), model.emb.tensor),
            source=None, length=len(s))
        single = model.classify_soft(seq)
        assert np.allclose(got.logits, single.logits, atol=1e-12)


def test_rank_labels_ties_lowest_index():
    assert list(rank_labels(np.asarray([0.5, 0.5, 0.1]))) == [0, 1, 2]
    assert list(rank_labels(np.asarray([0.1, 0.9, 0.9]))) == [1, 2, 0]


def test_multi_label_prediction_scores(vocab):
    model = micro_tc(vocab, multi_label=True, n_classes=4)
    pred = model.classify_tokens(vocab.encode(["t0", "t1"]))
    assert pred.label is None
    assert pred.scores.shape == (4,)
    assert np.all((pred.scores > 0) & (pred.scores < 1))
    over = pred.labels_over_threshold(0.0)
    assert np.array_equal(over, np.arange(4))


def test_head_row_permutation_permutes_logits(model, vocab):
    ids = vocab.encode(["t2", "t3"])
    base = model.classify_tokens(ids).logits
    perm = np.asarray([2, 0, 1])
    model.head[0].tensor.data = model.head[0].data[:, perm]
    model.head[1].tensor.data = model.head[1].data[perm]
    permuted = model.classify_tokens(ids).logits
    assert np.allclose(permuted, base[perm], atol=1e-12)


def test_labels_to_matrix():
    mat = labels_to_matrix([[0, 2], [], [1]], 3)
    assert np.array_equal(mat, [[1, 0, 1], [0, 0, 0], [0, 1, 0]])
    with pytest.raises(ValueError):
        labels_to_matrix([[3]], 3)


def test_separable_task_learnable(vocab):
    # class c marked by token t{c}; everything else is noise
    rng = np.random.default_rng(2)
    pool = [f"t{i}" for i in range(3, 15)]
    data = []
    for i in range(600):
        c = i % 3
        n = int(rng.integers(3, 7))
        sent = [pool[int(j)] for j in rng.integers(len(pool), size=n)]
        sent.insert(int(rng.integers(n + 1)), f"t{c}")
        data.append((sent, c))
    train, dev = data[:500], data[500:]
    model = TcModel(vocab, TcConfig(d_model=32, n_layers=1, n_heads=2, d_ff=64,
                                    max_len=10, n_classes=3), seed=0)
    result = train_tc(model, train, dev,
                      TrainConfig(epochs=6, batch_size=16, lr=2e-3,
                                  warmup_steps=20, grad_accum=1, seed=0))
    assert max(result.val_metric) >= 0.99


def test_train_multi_label(vocab):
    rng = np.random.default_rng(3)
    data = []
    for _ in range(200):
        labs = sorted(int(c) for c in range(3) if rng.random() < 0.5)
        sent = [f"t{3 + int(rng.integers(10))}" for _ in range(4)]
        for c in labs:
            sent.insert(int(rng.integers(len(sent) + 1)), f"t{c}")
        data.append((sent, labs))
    usable = [d for d in data if d[1]]
    model = micro_tc(vocab, multi_label=True, max_len=12)
    result = train_tc(model, usable[:150], usable[150:180],
                      TrainConfig(epochs=2, batch_size=16, lr=1e-3,
                                  warmup_steps=0, grad_accum=1, seed=0))
    assert len(result.val_metric) == 2
    assert all(0.0 <= m <= 1.0 for m in result.val_metric)


def test_label_out_of_range_rejected(model, vocab):
    with pytest.raises(ValueError, match="out of range"):
        train_tc(model, [(["t0"], 7)], [(["t0"], 0)],
                 TrainConfig(epochs=1, batch_size=1, grad_accum=1))


def test_save_load_roundtrip(model, vocab, tmp_path):
    model.save(tmp_path / "tc.npz")
    clone = TcModel.load(tmp_path / "tc.npz", vocab)
    assert clone.config == model.config
    ids = vocab.encode(["t0", "t1"])
    assert np.array_equal(clone.classify_tokens(ids).logits,
                          model.classify_tokens(ids).logits)
