"""Sequence-to-sequence translator: transformer encoder-decoder over the shared
vocabulary, with greedy decoding and "soft" decoding that keeps the per-step
vocabulary distributions differentiable.

The decoder always conditions on the hard argmax token of the previous step;
only the emitted probability vectors carry gradient (the argmax feedback path
does not).
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, no_grad
from .checkpoint import save_checkpoint, load_checkpoint
from .layers import DecoderLayer, EncoderLayer, causal_attention_mask, pad_attention_mask
from .params import ParamStore
from .vocab import Vocabulary


@dataclass
class MtConfig:
    d_model: int = 64
    n_layers: int = 2          # encoder layers; the decoder has the same count
    n_heads: int = 2
    d_ff: int = 128
    max_source_len: int = 32
    max_decode_len: int = 32
    temperature: float = 1.0
    dropout: float = 0.0       # off by default at this scale


@dataclass
class SoftTranslation:
    """Per-step distributions {p_1..p_m} plus the greedy tokens {t_1..t_m}.

    The final step is the EOS-producing one (when EOS was reached within the
    decode budget). ``probs`` is an (m, V) Tensor; argmax of row j equals
    tokens[j].
    """
    probs: Tensor
    tokens: np.ndarray

    def __len__(self):
        return len(self.tokens)


class MtModel:
    def __init__(self, vocab: Vocabulary, config: MtConfig | None = None, seed: int = 0):
        self.vocab = vocab
        self.config = config or MtConfig()
        cfg = self.config
        rng = np.random.default_rng(seed)
        self.store = ParamStore(rng)
        v, d = len(vocab), cfg.d_model
        self.emb = self.store.embedding("emb", v, d, "embed")
        self.enc_pos = self.store.embedding("enc_pos", cfg.max_source_len, d, "embed")
        self.dec_pos = self.store.embedding("dec_pos", cfg.max_decode_len + 1, d, "embed")
        self.enc_layers = [
            EncoderLayer(self.store, f"enc{i}", d, cfg.n_heads, cfg.d_ff, f"enc{i}")
            for i in range(cfg.n_layers)
        ]
        self.dec_layers = [
            DecoderLayer(self.store, f"dec{i}", d, cfg.n_heads, cfg.d_ff, f"dec{i}")
            for i in range(cfg.n_layers)
        ]
        self.enc_ln = self.store.layer_norm("enc_ln", d, "out")
        self.dec_ln = self.store.layer_norm("dec_ln", d, "out")
        self.out_proj = self.store.linear("out", d, v, "out")

    def layer_stack(self) -> list[str]:
        """Freezable layer groups ordered from the input side."""
        n = self.config.n_layers
        return [f"enc{i}" for i in range(n)] + [f"dec{i}" for i in range(n)]

    # ------------------------------------------------------------------
    # forward passes
    # ------------------------------------------------------------------

    def encode(self, src_ids: np.ndarray):
        """src_ids: (B, Ts) -> (memory Tensor (B, Ts, d), cross-attention mask)."""
        src_ids = np.asarray(src_ids)
        if src_ids.shape[1] == 0:
            raise ValueError("empty source sequence")
        if src_ids.shape[1] > self.config.max_source_len:
            raise ValueError(
                f"source length {src_ids.shape[1]} exceeds max {self.config.max_source_len}"
            )
        x = ad.embedding(self.emb.tensor, src_ids)
        x = ad.add(x, ad.embedding(self.enc_pos.tensor, np.arange(src_ids.shape[1])))
        mask = pad_attention_mask(src_ids, self.vocab.pad_id)
        for layer in self.enc_layers:
            x = layer(x, mask)
        memory = ad.layer_norm(x, self.enc_ln[0].tensor, self.enc_ln[1].tensor)
        return memory, mask

    def decode_logits(self, memory: Tensor, cross_mask: np.ndarray,
                      tgt_in: np.ndarray) -> Tensor:
        """Teacher-forced decoder pass. tgt_in: (B, Tt) -> logits (B, Tt, V)."""
        tgt_in = np.asarray(tgt_in)
        t = tgt_in.shape[1]
        x = ad.embedding(self.emb.tensor, tgt_in)
        x = ad.add(x, ad.embedding(self.dec_pos.tensor, np.arange(t)))
        self_mask = causal_attention_mask(t) + pad_attention_mask(tgt_in, self.vocab.pad_id)
        for layer in self.dec_layers:
            x = layer(x, memory, self_mask, cross_mask)
        x = ad.layer_norm(x, self.dec_ln[0].tensor, self.dec_ln[1].tensor)
        return ad.affine(x, self.out_proj[0].tensor, self.out_proj[1].tensor)

    def decode_step(self, source_ids, previous_target_ids) -> Tensor:
        """One decode step: the next-token distribution p_j over V (a simplex vector)."""
        source_ids = list(source_ids)
        prev = list(previous_target_ids)
        if not source_ids:
            raise ValueError("empty source sequence")
        if not prev or prev[0] != self.vocab.bos_id:
            raise ValueError("previous target ids must begin with BOS")
        memory, cross_mask = self.encode(np.asarray([source_ids]))
        logits = self.decode_logits(memory, cross_mask, np.asarray([prev]))
        rows = ad.reshape(logits, (len(prev), len(self.vocab)))
        p = ad.softmax(rows, temperature=self.config.temperature)
        return _last_row(p)

    def greedy_decode(self, source_ids) -> np.ndarray:
        """Greedy decoding of one source; returns tokens up to and including EOS."""
        return self.greedy_decode_batch(np.asarray([list(source_ids)]))[0]

    def greedy_decode_batch(self, src_ids: np.ndarray) -> list[np.ndarray]:
        """Batched greedy decoding; ties break to the lowest index (np.argmax)."""
        src_ids = np.asarray(src_ids)
        b = src_ids.shape[0]
        with no_grad():
            memory, cross_mask = self.encode(src_ids)
            prefix = np.full((b, 1), self.vocab.bos_id, dtype=np.int64)
            finished = np.zeros(b, dtype=bool)
            out: list[list[int]] = [[] for _ in range(b)]
            for _ in range(self.config.max_decode_len):
                logits = self.decode_logits(memory, cross_mask, prefix)
                step = np.argmax(logits.data[:, -1, :], axis=-1)
                for i in range(b):
                    if not finished[i]:
                        out[i].append(int(step[i]))
                        if step[i] == self.vocab.eos_id:
                            finished[i] = True
                if finished.all():
                    break
                step = np.where(finished, self.vocab.pad_id, step)
                prefix = np.concatenate([prefix, step[:, None]], axis=1)
        return [np.asarray(seq, dtype=np.int64) for seq in out]

    def soft_decode(self, source_ids) -> SoftTranslation:
        """Greedy-decode, then recompute the per-step distributions on the tape.

        The recomputation teacher-forces the decoder with the already decoded
        hard tokens, which reproduces exactly the distributions seen during
        decoding (conditioning is on hard tokens either way) while giving them
        gradient w.r.t. the translator parameters.
        """
        tokens = self.greedy_decode(source_ids)
        src = np.asarray([list(source_ids)])
        dec_in = np.asarray([[self.vocab.bos_id] + list(tokens[:-1])])
        memory, cross_mask = self.encode(src)
        logits = self.decode_logits(memory, cross_mask, dec_in)
        probs = ad.softmax(logits, temperature=self.config.temperature)
        probs = ad.reshape(probs, (len(tokens), len(self.vocab)))
        return SoftTranslation(probs=probs, tokens=tokens)

    def soft_decode_values(self, src_ids: np.ndarray):
        """Batched, gradient-free soft decode for evaluation.

        Returns (probs (B, M, V) ndarray, tokens list of arrays, lengths (B,)).
        Positions past each sample's length are PAD one-hot rows.
        """
        tokens = self.greedy_decode_batch(src_ids)
        lengths = np.asarray([len(t) for t in tokens])
        m = int(lengths.max())
        b = src_ids.shape[0]
        dec_in = np.full((b, m), self.vocab.pad_id, dtype=np.int64)
        for i, t in enumerate(tokens):
            dec_in[i, 0] = self.vocab.bos_id
            dec_in[i, 1:len(t)] = t[:-1]
        with no_grad():
            memory, cross_mask = self.encode(np.asarray(src_ids))
            logits = self.decode_logits(memory, cross_mask, dec_in)
            probs = ad.softmax(logits, temperature=self.config.temperature).data.copy()
        for i, t in enumerate(tokens):
            probs[i, len(t):, :] = 0.0
            probs[i, len(t):, self.vocab.pad_id] = 1.0
            # keep the stored tokens consistent with the argmax contract
        return probs, tokens, lengths

    # ------------------------------------------------------------------
    # persistence
    # ------------------------------------------------------------------

    def save(self, path, opt_state=None, extra: dict | None = None):
        meta = {"kind": "mt", "config": asdict(self.config)}
        if extra:
            meta.update(extra)
        save_checkpoint(path, self.store.parameters(), extra_meta=meta, opt_state=opt_state)

    @classmethod
    def load(cls, path, vocab: Vocabulary) -> "MtModel":
        values, frozen, meta, _ = load_checkpoint(path)
        model = cls(vocab, MtConfig(**meta["config"]))
        model.store.load_state(values)
        for name, fz in frozen.items():
            model.store[name].frozen = fz
        return model


def _last_row(p: Tensor) -> Tensor:
    """Slice the last row of a (T, V) tensor, keeping the tape intact."""
    t, v = p.shape

    def backward(g):
        full = np.zeros((t, v))
        full[-1] = g
        ad._accum(p, full)

    return ad._make(p.data[-1], (p,), backward)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    """Optimization settings; defaults follow the translator fine-tuning recipe
    (AdamW, lr 3e-5, warmup 500, weight decay 0.01, clip 1.0, accumulation 2,
    batch 8, 10 epochs). Desk-scale from-scratch runs typically override lr."""
    epochs: int = 10
    batch_size: int = 8
    lr: float = 3e-5
    warmup_steps: int = 500
    weight_decay: float = 0.01
    max_grad_norm: float = 1.0
    grad_accum: int = 2
    seed: int = 0


@dataclass
class MtTrainResult:
    val_bleu: list[float] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1
    checkpoint_paths: list[str] = field(default_factory=list)


def _pad_batch(seqs: list[list[int]], pad_id: int) -> np.ndarray:
    m = max(len(s) for s in seqs)
    out = np.full((len(seqs), m), pad_id, dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, :len(s)] = s
    return out


def train_mt(model: MtModel, train_pairs, dev_pairs, config: TrainConfig | None = None,
             checkpoint_dir=None) -> MtTrainResult:
    """Teacher-forced cross-entropy training with best-validation-BLEU selection.

    ``train_pairs``/``dev_pairs`` are lists of (source tokens, target tokens).
    Per-epoch checkpoints are written when ``checkpoint_dir`` is given (used by
    the translation-quality sensitivity sweep); the model is left at the best
    validation BLEU epoch either way.
    """
    from .optim import AdamW, AdamWConfig

    if not train_pairs:
        raise ValueError("empty parallel corpus")
    cfg = config or TrainConfig()
    vocab = model.vocab
    enc_src = [vocab.encode(s)[: model.config.max_source_len] for s, _ in train_pairs]
    enc_tgt = [vocab.encode_target(t)[: model.config.max_decode_len + 1] for _, t in train_pairs]
    dev_src = [vocab.encode(s)[: model.config.max_source_len] for s, _ in dev_pairs]
    dev_refs = [list(t) for _, t in dev_pairs]

    opt = AdamW(model.store.trainable(), AdamWConfig(
        lr=cfg.lr, weight_decay=cfg.weight_decay, warmup_steps=cfg.warmup_steps,
        max_grad_norm=cfg.max_grad_norm, grad_accum=cfg.grad_accum))
    rng = np.random.default_rng(cfg.seed)
    result = MtTrainResult()
    best_bleu, best_state = -1.0, None

    n = len(enc_src)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        losses = []
        micro = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            src = _pad_batch([enc_src[i] for i in idx], vocab.pad_id)
            tgt = _pad_batch([enc_tgt[i] for i in idx], vocab.pad_id)
            memory, cross_mask = model.encode(src)
            logits = model.decode_logits(memory, cross_mask, tgt[:, :-1])
            mask = (tgt[:, 1:] != vocab.pad_id).astype(np.float64)
            loss = ad.cross_entropy(logits, tgt[:, 1:], mask=mask)
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

        bleu = evaluate_bleu(model, dev_src, dev_refs)
        result.val_bleu.append(bleu)
        if checkpoint_dir is not None:
            path = str(checkpoint_dir) + f"/mt_epoch{epoch:03d}.npz"
            model.save(path, extra={"epoch": epoch, "val_bleu": bleu})
            result.checkpoint_paths.append(path)
        if bleu > best_bleu:
            best_bleu = bleu
            best_state = model.store.state()
            result.best_epoch = epoch

    if best_state is not None:
        model.store.load_state(best_state)
    return result


def evaluate_bleu(model: MtModel, sources_ids: list[list[int]], references: list[list[str]]) -> float:
    """Corpus BLEU of greedy translations (EOS stripped) against references."""
    from .metrics import corpus_bleu

    decoded = model.greedy_decode_batch(_pad_batch(sources_ids, model.vocab.pad_id))
    cands = []
    for seq in decoded:
        toks = [t for t in seq if t != model.vocab.eos_id]
        cands.append(model.vocab.decode(toks))
    return corpus_bleu(cands, references)
