"""Deterministic synthetic language pairs and classification tasks.

A synthetic target language is a token-level bijective cipher of the
high-resource language (shared function words stay as-is, content tokens are
mapped through an invertible substitution), optionally perturbed by adjacent
swaps ("reorder") and synonym substitutions over function words ("noise").
With both rates at zero the translation task is an exact cipher, which gives
exact translation and label oracles for every experiment.

Class labels are carried by dedicated marker tokens, which the noise process
never touches, so labels survive translation by construction.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SyntheticLanguageSpec:
    seed: int = 0
    n_function_words: int = 20
    n_content_tokens: int = 60
    reorder_prob: float = 0.0
    noise_rate: float = 0.0
    max_reorder: float = 0.5
    max_noise: float = 0.6

    def function_words(self) -> list[str]:
        return [f"f{i:02d}" for i in range(self.n_function_words)]

    def source_content(self) -> list[str]:
        return [f"w{i:03d}" for i in range(self.n_content_tokens)]

    def target_content(self) -> list[str]:
        return [f"z{i:03d}" for i in range(self.n_content_tokens)]

    def bijection(self) -> dict[str, str]:
        """Invertible high-resource -> target token map (identity on function words)."""
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, 0xB11]))
        perm = rng.permutation(self.n_content_tokens)
        mapping = {f"w{i:03d}": f"z{perm[i]:03d}" for i in range(self.n_content_tokens)}
        for f in self.function_words():
            mapping[f] = f
        return mapping

    def inverse_bijection(self) -> dict[str, str]:
        return {v: k for k, v in self.bijection().items()}


def degrade_language(spec: SyntheticLanguageSpec, severity: float) -> SyntheticLanguageSpec:
    """Raise reorder/noise rates toward their ceilings; severity in [0, 1]."""
    if not 0.0 <= severity <= 1.0:
        raise ValueError(f"severity must be in [0, 1], got {severity}")
    return dataclasses.replace(
        spec,
        reorder_prob=spec.reorder_prob + severity * (spec.max_reorder - spec.reorder_prob),
        noise_rate=spec.noise_rate + severity * (spec.max_noise - spec.noise_rate),
    )


def translate_tokens(tokens: list[str], spec: SyntheticLanguageSpec,
                     rng: np.random.Generator) -> list[str]:
    """Cipher + adjacent swaps + synonym noise over function words."""
    mapping = spec.bijection()
    out = [mapping.get(t, t) for t in tokens]
    for i in range(len(out) - 1):
        if rng.random() < spec.reorder_prob:
            out[i], out[i + 1] = out[i + 1], out[i]
    functions = spec.function_words()
    function_set = set(functions)
    for i, t in enumerate(out):
        if t in function_set and rng.random() < spec.noise_rate:
            out[i] = functions[int(rng.integers(len(functions)))]
    return out


@dataclass(frozen=True)
class TaskSpec:
    kind: str = "multi_class"          # "multi_class" | "multi_label"
    n_classes: int = 3                 # classes, or label count for multi-label
    markers_per_class: int = 4
    min_len: int = 6
    max_len: int = 12
    label_prob: float = 0.3            # per-label presence prob (multi-label)

    def marker_sets(self) -> list[list[str]]:
        """Per-class marker tokens, drawn from the front of the content inventory."""
        per = self.markers_per_class if self.kind == "multi_class" else 1
        return [[f"w{c * per + k:03d}" for k in range(per)]
                for c in range(self.n_classes)]


def oracle_label(tokens: list[str], task: TaskSpec,
                 lang: SyntheticLanguageSpec | None = None):
    """Recover the gold label(s) from a sentence in either language.

    Returns an int for multi-class tasks, a sorted list of ints for
    multi-label tasks. Pass ``lang`` when the sentence is in the target
    language (markers are looked up through the bijection).
    """
    present = set(tokens)
    marker_sets = task.marker_sets()
    if lang is not None:
        mapping = lang.bijection()
        marker_sets = [[mapping[m] for m in ms] for ms in marker_sets]
    hits = [c for c, ms in enumerate(marker_sets) if present & set(ms)]
    if task.kind == "multi_class":
        if len(hits) != 1:
            raise ValueError(f"sentence matches {len(hits)} classes, expected exactly 1")
        return hits[0]
    return sorted(hits)


@dataclass
class ParallelCorpus:
    train: list[tuple[list[str], list[str]]]
    dev: list[tuple[list[str], list[str]]]
    test: list[tuple[list[str], list[str]]]


@dataclass
class DatasetBundle:
    """Everything one experiment needs, with aligned high-resource/target splits."""
    task: TaskSpec
    lang: SyntheticLanguageSpec
    hr_train: list
    hr_dev: list
    hr_test: list
    tg_test: list
    few_shot: dict[int, list]          # {10: ..., 100: ...} target-language labeled
    selection_dev: list                # target-language labeled, disjoint from pools
    parallel: ParallelCorpus

    def split_hashes(self) -> dict[str, set[str]]:
        def h(samples):
            return {hashlib.sha256(" ".join(t).encode()).hexdigest()
                    for t, _ in samples}
        out = {"hr_train": h(self.hr_train), "hr_dev": h(self.hr_dev),
               "hr_test": h(self.hr_test), "tg_test": h(self.tg_test),
               "selection_dev": h(self.selection_dev)}
        for k, pool in self.few_shot.items():
            out[f"few_{k}"] = h(pool)
        return out


def assert_disjoint_splits(bundle: DatasetBundle):
    """Hash-based pairwise disjointness of few-shot pools, selection-dev and test."""
    hashes = bundle.split_hashes()
    keys = [k for k in hashes if k.startswith("few_")] + ["selection_dev", "tg_test"]
    for i, a in enumerate(keys):
        for b in keys[i + 1:]:
            overlap = hashes[a] & hashes[b]
            if overlap:
                raise ValueError(f"splits {a} and {b} share {len(overlap)} samples")


def _neutral_inventory(task: TaskSpec, lang: SyntheticLanguageSpec) -> list[str]:
    markers = {m for ms in task.marker_sets() for m in ms}
    return [t for t in lang.source_content() if t not in markers] + lang.function_words()


def gen_language_pair(spec: SyntheticLanguageSpec,
                      sizes: tuple[int, int, int] = (5000, 500, 500),
                      min_len: int = 4, max_len: int = 12) -> ParallelCorpus:
    """Parallel corpus of random sentences over the full source inventory."""
    if spec.n_content_tokens == 0:
        raise ValueError("degenerate language spec: empty content vocabulary")
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0xC0]))
    inventory = spec.source_content() + spec.function_words()
    total = sum(sizes)
    seen = set()
    sentences = []
    while len(sentences) < total:
        n = int(rng.integers(min_len, max_len + 1))
        sent = [inventory[int(i)] for i in rng.integers(len(inventory), size=n)]
        key = " ".join(sent)
        if key in seen:
            continue
        seen.add(key)
        sentences.append(sent)
    pairs = [(s, translate_tokens(s, spec, rng)) for s in sentences]
    a, b = sizes[0], sizes[0] + sizes[1]
    return ParallelCorpus(train=pairs[:a], dev=pairs[a:b], test=pairs[b:])


def _gen_labeled(task: TaskSpec, lang: SyntheticLanguageSpec, count: int,
                 rng: np.random.Generator, seen: set[str]) -> list[tuple[list[str], object]]:
    """Labeled high-resource sentences; labels computable by oracle_label."""
    neutral = _neutral_inventory(task, lang)
    marker_sets = task.marker_sets()
    samples = []
    next_class = 0
    while len(samples) < count:
        n = int(rng.integers(task.min_len, task.max_len + 1))
        sent = [neutral[int(i)] for i in rng.integers(len(neutral), size=n)]
        if task.kind == "multi_class":
            label = next_class
            markers = marker_sets[label]
            k = int(rng.integers(1, len(markers) + 1))
            chosen = [markers[int(i)] for i in rng.choice(len(markers), size=k, replace=False)]
            for m in chosen:
                pos = int(rng.integers(len(sent) + 1))
                sent.insert(pos, m)
        else:
            label = sorted(int(c) for c in range(task.n_classes)
                           if rng.random() < task.label_prob)
            for c in label:
                pos = int(rng.integers(len(sent) + 1))
                sent.insert(pos, marker_sets[c][0])
        key = " ".join(sent)
        if key in seen:
            continue
        seen.add(key)
        samples.append((sent, label))
        if task.kind == "multi_class":
            next_class = (next_class + 1) % task.n_classes
    return samples


def gen_classification_dataset(task: TaskSpec, lang: SyntheticLanguageSpec,
                               sizes: tuple[int, int, int] = (5000, 500, 500),
                               parallel_sizes: tuple[int, int, int] = (5000, 500, 500),
                               few_shot_sizes: tuple[int, ...] = (10, 100)) -> DatasetBundle:
    """Generate aligned high-resource/target splits plus the MT parallel corpus.

    Target-language sample i of each translated split is the translation of
    the corresponding high-resource sample (label-preserving). The few-shot
    pools and the selection-dev split are carved from the target dev set and
    are pairwise disjoint from each other and from the test set.
    """
    rng = np.random.default_rng(np.random.SeedSequence([lang.seed, task.n_classes, 0xD5]))
    seen: set[str] = set()
    hr_train = _gen_labeled(task, lang, sizes[0], rng, seen)
    hr_dev = _gen_labeled(task, lang, sizes[1], rng, seen)
    hr_test = _gen_labeled(task, lang, sizes[2], rng, seen)

    trans_rng = np.random.default_rng(np.random.SeedSequence([lang.seed, 0x7A]))
    def translate_split(split):
        return [(translate_tokens(toks, lang, trans_rng), label) for toks, label in split]

    tg_dev = translate_split(hr_dev)
    tg_test = translate_split(hr_test)

    few_shot = {}
    offset = 0
    for k in sorted(few_shot_sizes):
        if offset + k > len(tg_dev):
            raise ValueError("dev split too small for the requested few-shot pools")
        few_shot[k] = tg_dev[offset:offset + k]
        offset += k
    selection_dev = tg_dev[offset:]

    parallel = gen_language_pair(lang, sizes=parallel_sizes,
                                 min_len=task.min_len, max_len=task.max_len)
    bundle = DatasetBundle(task=task, lang=lang, hr_train=hr_train, hr_dev=hr_dev,
                           hr_test=hr_test, tg_test=tg_test, few_shot=few_shot,
                           selection_dev=selection_dev, parallel=parallel)
    assert_disjoint_splits(bundle)
    return bundle
