"""Text classifier with an explicit token embedding matrix.

An encoder-only transformer: embedding lookup (or externally provided
expected embeddings), learned positions, encoder stack, masked mean pooling
and a linear head. Supports a multi-class softmax head or a multi-label
per-label sigmoid head. The soft input path is computationally identical to
the token path except that the embedding lookup is replaced by the provided
vectors, so one-hot inputs reproduce the token path bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, no_grad
from .bridge import ExpectedEmbeddingSequence
from .checkpoint import save_checkpoint, load_checkpoint
from .layers import EncoderLayer, pad_attention_mask
from .params import ParamStore
from .vocab import Vocabulary


@dataclass
class TcConfig:
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 2
    d_ff: int = 128
    max_len: int = 34          # CLS + translation incl. its EOS step
    n_classes: int = 3         # classes (multi-class) or labels (multi-label)
    multi_label: bool = False


@dataclass
class Prediction:
    logits: np.ndarray
    label: int | None          # argmax class for multi-class heads
    scores: np.ndarray         # softmax probs / per-label sigmoid scores
    ranked: np.ndarray         # label ids by descending score, ties -> lowest index

    def labels_over_threshold(self, threshold: float = 0.5) -> np.ndarray:
        return np.flatnonzero(self.scores >= threshold)


def rank_labels(scores: np.ndarray) -> np.ndarray:
    """Descending-score label order with deterministic lowest-index tie-breaks."""
    return np.argsort(-scores, kind="stable")


class TcModel:
    def __init__(self, vocab: Vocabulary, config: TcConfig | None = None, seed: int = 0):
        self.vocab = vocab
        self.config = config or TcConfig()
        cfg = self.config
        rng = np.random.default_rng(seed)
        self.store = ParamStore(rng)
        v, d = len(vocab), cfg.d_model
        self.emb = self.store.embedding("emb", v, d, "embed")
        self.pos = self.store.embedding("pos", cfg.max_len, d, "embed")
        self.enc_layers = [
            EncoderLayer(self.store, f"enc{i}", d, cfg.n_heads, cfg.d_ff, f"enc{i}")
            for i in range(cfg.n_layers)
        ]
        self.final_ln = self.store.layer_norm("final_ln", d, "head")
        self.head = self.store.linear("head", d, cfg.n_classes, "head")

    def layer_stack(self) -> list[str]:
        return [f"enc{i}" for i in range(self.config.n_layers)]

    # ------------------------------------------------------------------
    # forward passes
    # ------------------------------------------------------------------

    def _forward_embedded(self, x: Tensor, valid: np.ndarray) -> Tensor:
        """x: (B, T, d) already embedded (CLS row first); valid: (B, T) 0/1."""
        t = x.shape[1]
        if t > self.config.max_len:
            raise ValueError(f"sequence length {t} exceeds max {self.config.max_len}")
        x = ad.add(x, ad.embedding(self.pos.tensor, np.arange(t)))
        mask = np.where(valid[:, None, None, :].astype(bool), 0.0, -1e9)
        for layer in self.enc_layers:
            x = layer(x, mask)
        x = ad.layer_norm(x, self.final_ln[0].tensor, self.final_ln[1].tensor)
        pooled = ad.masked_mean_pool(x, valid)
        return ad.affine(pooled, self.head[0].tensor, self.head[1].tensor)

    def logits_tokens(self, ids: np.ndarray, lengths: np.ndarray) -> Tensor:
        """Batched token-path logits. ids: (B, T) padded, CLS not yet prepended."""
        b = ids.shape[0]
        cls_col = np.full((b, 1), self.vocab.cls_id, dtype=np.int64)
        full = np.concatenate([cls_col, ids], axis=1)
        valid = (np.arange(full.shape[1])[None, :] < (lengths + 1)[:, None]).astype(np.float64)
        x = ad.embedding(self.emb.tensor, full)
        return self._forward_embedded(x, valid)

    def classify_tokens(self, ids) -> Prediction:
        """Classify one token-id sequence (the baseline/hard path)."""
        ids = [int(i) for i in ids]
        if not ids:
            raise ValueError("empty input sequence")
        if any(i < 0 or i >= len(self.vocab) for i in ids):
            raise ValueError("token id out of vocabulary range")
        ids = ids[: self.config.max_len - 1]
        with no_grad():
            logits = self.logits_tokens(np.asarray([ids]), np.asarray([len(ids)]))
        return self._prediction(logits.data[0])

    def logits_soft(self, seq: ExpectedEmbeddingSequence) -> Tensor:
        """Differentiable logits from one expected-embedding sequence."""
        if seq.embeddings.data.shape[-1] != self.config.d_model:
            raise ad.ShapeError(
                f"classify_soft: embedding width {seq.embeddings.data.shape} does not "
                f"match model width {self.config.d_model}"
            )
        m = min(seq.length, self.config.max_len - 1)
        body = ad.reshape(seq.embeddings, (1, seq.length, self.config.d_model))
        if m < seq.length:
            body = _slice_time(body, m)
        cls_row = ad.embedding(self.emb.tensor, np.asarray([[self.vocab.cls_id]]))
        x = ad.concat([cls_row, body], axis=1)
        valid = np.ones((1, m + 1))
        return self._forward_embedded(x, valid)

    def classify_soft(self, seq: ExpectedEmbeddingSequence) -> Prediction:
        logits = self.logits_soft(seq)
        return self._prediction(logits.data[0])

    def classify_soft_values(self, probs: np.ndarray, lengths: np.ndarray) -> list[Prediction]:
        """Batched gradient-free soft path: probs (B, M, V) padded with PAD one-hots."""
        b, m, _ = probs.shape
        m = min(m, self.config.max_len - 1)
        probs = probs[:, :m, :]
        lengths = np.minimum(lengths, m)
        with no_grad():
            body = probs @ self.emb.data
            cls = self.emb.data[self.vocab.cls_id][None, None, :]
            x = Tensor(np.concatenate([np.broadcast_to(cls, (b, 1, cls.shape[-1])), body], axis=1))
            valid = (np.arange(m + 1)[None, :] < (lengths + 1)[:, None]).astype(np.float64)
            logits = self._forward_embedded(x, valid)
        return [self._prediction(row) for row in logits.data]

    def classify_tokens_batch(self, seqs: list[list[int]]) -> list[Prediction]:
        lengths = np.asarray([min(len(s), self.config.max_len - 1) for s in seqs])
        ids = np.full((len(seqs), int(lengths.max())), self.vocab.pad_id, dtype=np.int64)
        for i, s in enumerate(seqs):
            ids[i, :lengths[i]] = s[:lengths[i]]
        with no_grad():
            logits = self.logits_tokens(ids, lengths)
        return [self._prediction(row) for row in logits.data]

    def _prediction(self, logits_row: np.ndarray) -> Prediction:
        if self.config.multi_label:
            scores = ad.sigmoid_values(logits_row)
            label = None
        else:
            z = logits_row - logits_row.max()
            e = np.exp(z)
            scores = e / e.sum()
            label = int(np.argmax(logits_row))
        return Prediction(logits=logits_row.copy(), label=label, scores=scores,
                          ranked=rank_labels(scores))

    # ------------------------------------------------------------------
    # persistence
    # ------------------------------------------------------------------

    def save(self, path, opt_state=None, extra: dict | None = None):
        meta = {"kind": "tc", "config": asdict(self.config)}
        if extra:
            meta.update(extra)
        save_checkpoint(path, self.store.parameters(), extra_meta=meta, opt_state=opt_state)

    @classmethod
    def load(cls, path, vocab: Vocabulary) -> "TcModel":
        values, frozen, meta, _ = load_checkpoint(path)
        model = cls(vocab, TcConfig(**meta["config"]))
        model.store.load_state(values)
        for name, fz in frozen.items():
            model.store[name].frozen = fz
        return model


def _slice_time(x: Tensor, m: int) -> Tensor:
    """Keep the first m time steps of a (B, T, d) tensor on the tape."""

    def backward(g):
        full = np.zeros_like(x.data)
        full[:, :m, :] = g
        ad._accum(x, full)

    return ad._make(x.data[:, :m, :], (x,), backward)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TcTrainResult:
    val_metric: list[float] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1
    checkpoint_paths: list[str] = field(default_factory=list)


def labels_to_matrix(labels, n_labels: int) -> np.ndarray:
    """Multi-label sets -> (N, L) binary matrix."""
    out = np.zeros((len(labels), n_labels))
    for i, labs in enumerate(labels):
        for l in labs:
            if l < 0 or l >= n_labels:
                raise ValueError(f"label {l} out of range [0, {n_labels})")
            out[i, l] = 1.0
    return out


def train_tc(model: TcModel, train_data, dev_data, config=None,
             checkpoint_dir=None) -> TcTrainResult:
    """Train the classifier with CE (multi-class) or per-label BCE (multi-label).

    ``train_data``/``dev_data``: lists of (token sequence, label) where the
    label is an int for multi-class heads and an iterable of ints for
    multi-label heads. Checkpoint selection uses validation accuracy or mean
    R-Precision according to the head kind.
    """
    from .metrics import accuracy, mean_r_precision, r_precision
    from .mt import TrainConfig
    from .optim import AdamW, AdamWConfig

    if not train_data:
        raise ValueError("empty labeled corpus")
    cfg = config or TrainConfig(lr=3e-6)
    vocab = model.vocab
    max_body = model.config.max_len - 1
    enc = [vocab.encode(toks)[:max_body] for toks, _ in train_data]
    if model.config.multi_label:
        target_mat = labels_to_matrix([labs for _, labs in train_data], model.config.n_classes)
    else:
        targets = np.asarray([int(l) for _, l in train_data])
        if targets.size and (targets.min() < 0 or targets.max() >= model.config.n_classes):
            raise ValueError(f"label out of range [0, {model.config.n_classes})")
    dev_enc = [vocab.encode(toks)[:max_body] for toks, _ in dev_data]
    dev_labels = [l for _, l in dev_data]

    opt = AdamW(model.store.trainable(), AdamWConfig(
        lr=cfg.lr, weight_decay=cfg.weight_decay, warmup_steps=cfg.warmup_steps,
        max_grad_norm=cfg.max_grad_norm, grad_accum=cfg.grad_accum))
    rng = np.random.default_rng(cfg.seed)
    result = TcTrainResult()
    best_metric, best_state = -1.0, None

    n = len(enc)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        losses = []
        micro = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            seqs = [enc[i] for i in idx]
            lengths = np.asarray([len(s) for s in seqs])
            ids = np.full((len(seqs), max(int(lengths.max()), 1)), vocab.pad_id, dtype=np.int64)
            for i, s in enumerate(seqs):
                ids[i, :len(s)] = s
            logits = model.logits_tokens(ids, lengths)
            if model.config.multi_label:
                loss = ad.binary_cross_entropy_per_label(logits, target_mat[idx])
            else:
                loss = ad.cross_entropy(logits, targets[idx])
            loss.backward()
            losses.append(loss.item())
            micro += 1
            if micro % cfg.grad_accum == 0:
                opt.step()
                opt.zero_grad()
        if micro % cfg.grad_accum != 0:
            opt.step()
            opt.zero_grad()
        result.train_loss.append(float(np.mean(losses)))

        preds = model.classify_tokens_batch(dev_enc)
        if model.config.multi_label:
            rps = [r_precision(p.ranked, set(g)) for p, g in zip(preds, dev_labels)
                   if len(set(g)) > 0]
            metric = mean_r_precision(rps)
        else:
            metric = accuracy([p.label for p in preds], [int(g) for g in dev_labels])
        result.val_metric.append(metric)
        if checkpoint_dir is not None:
            path = str(checkpoint_dir) + f"/tc_epoch{epoch:03d}.npz"
            model.save(path, extra={"epoch": epoch, "val_metric": metric})
            result.checkpoint_paths.append(path)
        if metric > best_metric:
            best_metric = metric
            best_state = model.store.state()
            result.best_epoch = epoch

    if best_state is not None:
        model.store.load_state(best_state)
    return result
