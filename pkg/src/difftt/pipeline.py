"""Composition of translator and classifier, plus the training strategies:
zero-shot transfer, joint end-to-end few-shot fine-tuning with layer freezing,
the hard-argmax comparison path, and the two baselines (direct classifier,
translate-and-train).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import no_grad
from .bridge import bridge_sequence
from .mt import MtModel, TrainConfig, _pad_batch
from .tc import Prediction, TcModel, labels_to_matrix, train_tc
from .vocab import Vocabulary, assert_alignment


@dataclass
class FreezingPolicy:
    """Freeze the input side of the translator and the output side of the
    classifier, concentrating trainable parameters at the coupling."""
    mt_fraction: float = 0.5
    tc_fraction: float = 0.5
    freeze_tc_head: bool = False


@dataclass
class FewShotBudget:
    k: int                       # 0 (zero-shot), 10 or 100


class TranslateTestPipeline:
    def __init__(self, mt: MtModel, tc: TcModel,
                 freezing: FreezingPolicy | None = None):
        assert_alignment(mt.vocab, tc.vocab)
        self.mt = mt
        self.tc = tc
        self.vocab: Vocabulary = mt.vocab
        self.freezing = freezing or FreezingPolicy()
        apply_freezing(self, self.freezing)

    # ------------------------------------------------------------------
    # freezing bookkeeping
    # ------------------------------------------------------------------

    def trainable_parameters(self):
        return self.mt.store.trainable() + self.tc.store.trainable()

    def trainable_param_count(self) -> int:
        return self.mt.store.num_params(trainable_only=True) + \
            self.tc.store.num_params(trainable_only=True)

    def single_model_param_count(self) -> int:
        """The larger of the two models' total parameter counts."""
        return max(self.mt.store.num_params(), self.tc.store.num_params())

    # ------------------------------------------------------------------
    # inference
    # ------------------------------------------------------------------

    def predict(self, target_ids) -> Prediction:
        """Soft path: soft decode -> expected embeddings -> classifier."""
        return self.predict_batch([list(target_ids)])[0]

    def predict_batch(self, target_ids_batch: list[list[int]]) -> list[Prediction]:
        src = _pad_batch([list(s) for s in target_ids_batch], self.vocab.pad_id)
        probs, _, lengths = self.mt.soft_decode_values(src)
        return self.tc.classify_soft_values(probs, lengths)

    def predict_hard(self, target_ids) -> Prediction:
        """Comparison path: greedy tokens fed to the classifier as ids."""
        return self.predict_hard_batch([list(target_ids)])[0]

    def predict_hard_batch(self, target_ids_batch: list[list[int]]) -> list[Prediction]:
        src = _pad_batch([list(s) for s in target_ids_batch], self.vocab.pad_id)
        decoded = self.mt.greedy_decode_batch(src)
        return self.tc.classify_tokens_batch([list(seq) for seq in decoded])

    def predict_forced_onehot(self, target_ids) -> Prediction:
        """Soft path with every p_j replaced by the one-hot of its argmax."""
        return self.predict_forced_onehot_batch([list(target_ids)])[0]

    def predict_forced_onehot_batch(self, target_ids_batch) -> list[Prediction]:
        src = _pad_batch([list(s) for s in target_ids_batch], self.vocab.pad_id)
        probs, _, lengths = self.mt.soft_decode_values(src)
        onehot = np.zeros_like(probs)
        arg = probs.argmax(axis=-1)
        np.put_along_axis(onehot, arg[..., None], 1.0, axis=-1)
        return self.tc.classify_soft_values(onehot, lengths)

    # ------------------------------------------------------------------
    # joint fine-tuning
    # ------------------------------------------------------------------

    def task_loss(self, target_ids, label):
        """Differentiable end-to-end task loss for one target-language sample."""
        st = self.mt.soft_decode(list(target_ids))
        seq = bridge_sequence(st, self.tc)
        logits = self.tc.logits_soft(seq)
        if self.tc.config.multi_label:
            return ad.binary_cross_entropy_per_label(
                logits, labels_to_matrix([label], self.tc.config.n_classes))
        return ad.cross_entropy(logits, np.asarray([int(label)]))

    def finetune_end_to_end(self, few_shot_data, selection_dev,
                            config: TrainConfig | None = None) -> "FinetuneResult":
        """Joint fine-tuning on k target-language shots (batch size 1).

        The task loss backpropagates through the classifier, the bridge and
        the soft decode into every non-frozen parameter of both models.
        Checkpoint selection uses the selection-dev split (accuracy or mRP).
        """
        from .optim import AdamW, AdamWConfig

        if not few_shot_data:
            raise ValueError("finetune_end_to_end needs k >= 1 samples; use predict for zero-shot")
        cfg = config or TrainConfig(lr=3e-6, batch_size=1, warmup_steps=0, grad_accum=1)
        opt = AdamW(self.trainable_parameters(), AdamWConfig(
            lr=cfg.lr, weight_decay=cfg.weight_decay, warmup_steps=cfg.warmup_steps,
            max_grad_norm=cfg.max_grad_norm, grad_accum=cfg.grad_accum))
        rng = np.random.default_rng(cfg.seed)
        enc = [(self.vocab.encode(toks)[: self.mt.config.max_source_len], label)
               for toks, label in few_shot_data]
        result = FinetuneResult()
        best = (-1.0, None, None)
        for epoch in range(cfg.epochs):
            order = rng.permutation(len(enc))
            losses = []
            micro = 0
            for i in order:
                ids, label = enc[i]
                loss = self.task_loss(ids, label)
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
            metric = self.evaluate_metric(selection_dev)
            result.val_metric.append(metric)
            if metric > best[0]:
                best = (metric, self.mt.store.state(), self.tc.store.state())
                result.best_epoch = epoch
        if best[1] is not None:
            self.mt.store.load_state(best[1])
            self.tc.store.load_state(best[2])
        return result

    def evaluate_metric(self, labeled_data, hard: bool = False) -> float:
        """Accuracy (multi-class) or mRP (multi-label) of the pipeline on
        target-language labeled samples."""
        from .metrics import accuracy, mean_r_precision, r_precision

        ids = [self.vocab.encode(toks)[: self.mt.config.max_source_len]
               for toks, _ in labeled_data]
        golds = [label for _, label in labeled_data]
        preds = self.predict_hard_batch(ids) if hard else self.predict_batch(ids)
        if self.tc.config.multi_label:
            values = [r_precision(p.ranked, set(g)) for p, g in zip(preds, golds)
                      if len(set(g)) > 0]
            return mean_r_precision(values)
        return accuracy([p.label for p in preds], [int(g) for g in golds])

    # ------------------------------------------------------------------
    # persistence
    # ------------------------------------------------------------------

    def save(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.mt.save(directory / "mt.npz")
        self.tc.save(directory / "tc.npz")
        meta = {
            "format_version": 1,
            "freezing": asdict(self.freezing),
            "vocab_hash": vocab_hash(self.vocab),
        }
        (directory / "pipeline.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
        self.vocab.save(directory / "vocab.txt")

    @classmethod
    def load(cls, directory) -> "TranslateTestPipeline":
        directory = Path(directory)
        meta = json.loads((directory / "pipeline.json").read_text())
        vocab = Vocabulary.load(directory / "vocab.txt")
        if vocab_hash(vocab) != meta["vocab_hash"]:
            raise ValueError("vocabulary hash mismatch in pipeline checkpoint")
        mt = MtModel.load(directory / "mt.npz", vocab)
        tc = TcModel.load(directory / "tc.npz", vocab)
        return cls(mt, tc, FreezingPolicy(**meta["freezing"]))


@dataclass
class FinetuneResult:
    train_loss: list[float] = field(default_factory=list)
    val_metric: list[float] = field(default_factory=list)
    best_epoch: int = -1


def vocab_hash(vocab: Vocabulary) -> str:
    return hashlib.sha256("\n".join(vocab.tokens).encode()).hexdigest()


def apply_freezing(pipeline: TranslateTestPipeline, policy: FreezingPolicy):
    """Freeze the lowest ceil(fraction*N) translator layers (plus its token and
    positional embeddings) and the highest ceil(fraction*N) classifier encoder
    layers (plus the head when requested)."""
    if not (0.0 <= policy.mt_fraction <= 1.0 and 0.0 <= policy.tc_fraction <= 1.0):
        raise ValueError("freezing fractions must be in [0, 1]")
    mt, tc = pipeline.mt, pipeline.tc
    for store in (mt.store, tc.store):
        for group in store.groups:
            store.set_group_frozen(group, False)

    mt_stack = mt.layer_stack()
    n_freeze = math.ceil(policy.mt_fraction * len(mt_stack))
    if policy.mt_fraction > 0:
        mt.store.set_group_frozen("embed", True)
    for group in mt_stack[:n_freeze]:
        mt.store.set_group_frozen(group, True)

    tc_stack = tc.layer_stack()
    n_freeze = math.ceil(policy.tc_fraction * len(tc_stack))
    for group in tc_stack[len(tc_stack) - n_freeze:]:
        tc.store.set_group_frozen(group, True)
    if policy.freeze_tc_head:
        tc.store.set_group_frozen("head", True)
    pipeline.freezing = policy


# ---------------------------------------------------------------------------
# baselines
# ---------------------------------------------------------------------------

def lm_baseline(model: TcModel, few_shot_data, selection_dev,
                config: TrainConfig | None = None):
    """Few-shot fine-tune the direct classifier on target-language samples.

    The zero-shot baseline is the trained classifier used as-is; with k >= 1
    shots it continues training on the target-language token path with the
    same selection protocol as the pipeline.
    """
    if not few_shot_data:
        return None
    cfg = config or TrainConfig(lr=3e-6, batch_size=1, warmup_steps=0, grad_accum=1)
    return train_tc(model, few_shot_data, selection_dev, cfg)


def translate_corpus(reverse_mt: MtModel, samples) -> list:
    """Token-wise translate labeled samples with an en->target translator."""
    vocab = reverse_mt.vocab
    ids = [vocab.encode(toks)[: reverse_mt.config.max_source_len] for toks, _ in samples]
    decoded = reverse_mt.greedy_decode_batch(_pad_batch(ids, vocab.pad_id))
    out = []
    for seq, (_, label) in zip(decoded, samples):
        toks = vocab.decode([t for t in seq if t != vocab.eos_id])
        out.append((toks, label))
    return out


def translate_and_train(reverse_mt: MtModel, bundle, tc_seed: int = 0,
                        tc_config=None, train_config: TrainConfig | None = None,
                        few_shot_k: int = 0,
                        finetune_config: TrainConfig | None = None) -> TcModel:
    """Translate the high-resource training/validation data into the target
    language and train a dedicated target-language classifier (one per task
    and language). Supports the same few-shot fine-tuning on real
    target-language samples."""
    from .tc import TcConfig

    tt_train = translate_corpus(reverse_mt, bundle.hr_train)
    tt_dev = translate_corpus(reverse_mt, bundle.hr_dev)
    model = TcModel(reverse_mt.vocab, tc_config or TcConfig(
        n_classes=bundle.task.n_classes,
        multi_label=bundle.task.kind == "multi_label"), seed=tc_seed)
    train_tc(model, tt_train, tt_dev, train_config)
    if few_shot_k:
        lm_baseline(model, bundle.few_shot[few_shot_k], bundle.selection_dev,
                    finetune_config)
    return model
