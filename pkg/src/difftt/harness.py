"""Config-driven experiment runner.

A declarative JSON config describes the synthetic task/language, model sizes,
training hyperparameters (with overrides), freezing policy, few-shot budgets
and seeds. The runner reproduces the full protocol: data generation,
component training, zero/few-shot evaluation of the method matrix, the
soft-vs-hard comparison, the translate-and-train baseline, and the
translation-quality sensitivity sweep. Every run is deterministic given its
config, so reports regenerate bit-identically.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from scipy import stats

from .data_io import read_bundle, write_bundle
from .metrics import accuracy, corpus_bleu, mean_r_precision, r_precision
from .mt import MtConfig, MtModel, TrainConfig, evaluate_bleu, train_mt
from .pipeline import (FreezingPolicy, TranslateTestPipeline, lm_baseline,
                       translate_and_train)
from .synthlang import (DatasetBundle, SyntheticLanguageSpec, TaskSpec,
                        degrade_language, gen_classification_dataset)
from .tc import TcConfig, TcModel, train_tc
from .vocab import SPECIALS, Vocabulary, build_shared_vocab


@dataclass
class ExperimentConfig:
    """Declarative experiment description; JSON-serializable field-for-field."""
    name: str = "experiment"
    out_dir: str = "runs/experiment"
    task: dict = field(default_factory=dict)       # TaskSpec overrides
    lang: dict = field(default_factory=dict)       # SyntheticLanguageSpec overrides
    mt_model: dict = field(default_factory=dict)   # MtConfig overrides
    tc_model: dict = field(default_factory=dict)   # TcConfig overrides
    freezing: dict = field(default_factory=dict)   # FreezingPolicy overrides
    budgets: list = field(default_factory=lambda: [0, 10, 100])
    seeds: list = field(default_factory=lambda: [1, 2, 3])
    methods: list = field(default_factory=lambda: ["lm", "pipeline"])
    sizes: list = field(default_factory=lambda: [5000, 500, 500])
    parallel_sizes: list = field(default_factory=lambda: [5000, 500, 500])
    mt_train: dict = field(default_factory=dict)   # TrainConfig overrides
    tc_train: dict = field(default_factory=dict)
    finetune: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=lambda: {"severity": 0.8, "budgets": [0]})

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        data = json.loads(text)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_json(Path(path).read_text())

    # ---- derived objects -------------------------------------------------

    def task_spec(self) -> TaskSpec:
        return TaskSpec(**self.task)

    def lang_spec(self) -> SyntheticLanguageSpec:
        return SyntheticLanguageSpec(**self.lang)

    def freezing_policy(self) -> FreezingPolicy:
        return FreezingPolicy(**self.freezing)

    def train_config(self, which: str, seed: int) -> TrainConfig:
        defaults = {
            "mt": dict(lr=3e-5, warmup_steps=500, grad_accum=2, batch_size=8),
            "tc": dict(lr=3e-6, warmup_steps=500, grad_accum=2, batch_size=8),
            "finetune": dict(lr=3e-6, warmup_steps=0, grad_accum=1, batch_size=1),
        }[which]
        overrides = {"mt": self.mt_train, "tc": self.tc_train,
                     "finetune": self.finetune}[which]
        defaults.update(overrides)
        defaults["seed"] = seed
        return TrainConfig(**defaults)


def shared_vocabulary(lang: SyntheticLanguageSpec) -> Vocabulary:
    """One vocabulary covering both languages' full token inventories."""
    inventory = lang.function_words() + lang.source_content() + lang.target_content()
    return build_shared_vocab([[ [t] for t in inventory ]])


def generate_bundle(config: ExperimentConfig,
                    lang: SyntheticLanguageSpec | None = None) -> DatasetBundle:
    return gen_classification_dataset(
        config.task_spec(), lang or config.lang_spec(),
        sizes=tuple(config.sizes), parallel_sizes=tuple(config.parallel_sizes))


def cmd_gen_data(config: ExperimentConfig, force: bool = False) -> Path:
    out = Path(config.out_dir) / "data"
    if out.exists() and any(out.iterdir()) and not force:
        raise FileExistsError(f"output directory {out} exists; pass --force to overwrite")
    bundle = generate_bundle(config)
    write_bundle(bundle, out)
    shared_vocabulary(config.lang_spec()).save(out / "vocab.txt")
    (Path(config.out_dir) / "config.json").write_text(config.to_json())
    return out


# ---------------------------------------------------------------------------
# component training
# ---------------------------------------------------------------------------

def train_mt_component(config: ExperimentConfig, bundle: DatasetBundle, vocab: Vocabulary,
                       seed: int, checkpoint_dir=None, reverse: bool = False) -> tuple[MtModel, object]:
    # stored pairs are (high-resource, target); the translator direction is
    # target -> high-resource, the reverse model high-resource -> target
    if reverse:
        pairs_train = list(bundle.parallel.train)
        pairs_dev = list(bundle.parallel.dev)
    else:
        pairs_train = [(t, s) for s, t in bundle.parallel.train]
        pairs_dev = [(t, s) for s, t in bundle.parallel.dev]
    model = MtModel(vocab, MtConfig(**config.mt_model), seed=seed)
    result = train_mt(model, pairs_train, pairs_dev,
                      config.train_config("mt", seed), checkpoint_dir=checkpoint_dir)
    return model, result


def train_tc_component(config: ExperimentConfig, bundle: DatasetBundle, vocab: Vocabulary,
                       seed: int, checkpoint_dir=None) -> tuple[TcModel, object]:
    task = bundle.task
    cfg = dict(n_classes=task.n_classes, multi_label=task.kind == "multi_label")
    cfg.update(config.tc_model)
    model = TcModel(vocab, TcConfig(**cfg), seed=seed)
    result = train_tc(model, bundle.hr_train, bundle.hr_dev,
                      config.train_config("tc", seed), checkpoint_dir=checkpoint_dir)
    return model, result


def cmd_train(which: str, config: ExperimentConfig, seed: int | None = None) -> dict:
    """Train one component ('mt', 'reverse-mt' or 'tc'), saving per-epoch
    checkpoints and marking the best one."""
    data_dir = Path(config.out_dir) / "data"
    if not data_dir.exists():
        raise FileNotFoundError(f"no data at {data_dir}; run gen-data first")
    bundle = read_bundle(data_dir)
    vocab = Vocabulary.load(data_dir / "vocab.txt")
    seed = config.seeds[0] if seed is None else seed
    ckpt_dir = Path(config.out_dir) / "checkpoints" / f"{which}_seed{seed}"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    if which in ("mt", "reverse-mt"):
        model, result = train_mt_component(config, bundle, vocab, seed,
                                           checkpoint_dir=ckpt_dir,
                                           reverse=which == "reverse-mt")
        curve = result.val_bleu
        best_path = ckpt_dir / "best.npz"
        model.save(best_path, extra={"best_epoch": result.best_epoch})
    else:
        model, result = train_tc_component(config, bundle, vocab, seed,
                                           checkpoint_dir=ckpt_dir)
        curve = result.val_metric
        best_path = ckpt_dir / "best.npz"
        model.save(best_path, extra={"best_epoch": result.best_epoch})
    summary = {"component": which, "seed": seed, "best_epoch": result.best_epoch,
               "validation_curve": curve, "train_loss": result.train_loss,
               "best_checkpoint": str(best_path),
               "epoch_checkpoints": result.checkpoint_paths}
    (ckpt_dir / "training.json").write_text(json.dumps(summary, indent=2))
    return summary


# ---------------------------------------------------------------------------
# evaluation matrix
# ---------------------------------------------------------------------------

@dataclass
class RunReport:
    """Per-(method, budget, seed) metrics plus seed averages."""
    name: str
    metric_kind: str
    rows: list = field(default_factory=list)
    averages: list = field(default_factory=list)
    soft_hard_delta: dict = field(default_factory=dict)

    def compute_averages(self):
        keys = sorted({(r["method"], r["budget"]) for r in self.rows})
        self.averages = []
        for method, budget in keys:
            vals = [r["metric"] for r in self.rows
                    if r["method"] == method and r["budget"] == budget]
            times = [r["ms_per_sample"] for r in self.rows
                     if r["method"] == method and r["budget"] == budget]
            self.averages.append({
                "method": method, "budget": budget,
                "metric_mean": sum(vals) / len(vals),
                "ms_per_sample_mean": sum(times) / len(times),
                "n_seeds": len(vals),
            })
        deltas = {}
        for budget in sorted({r["budget"] for r in self.rows}):
            soft = [r["metric"] for r in self.rows
                    if r["method"] == "pipeline_soft" and r["budget"] == budget]
            hard = [r["metric"] for r in self.rows
                    if r["method"] == "pipeline_hard" and r["budget"] == budget]
            if soft and hard:
                deltas[str(budget)] = sum(soft) / len(soft) - sum(hard) / len(hard)
        self.soft_hard_delta = deltas

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def write(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "report.json").write_text(self.to_json())
        with open(directory / "report.csv", "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=["method", "budget", "seed",
                                                   "metric", "ms_per_sample"])
            writer.writeheader()
            writer.writerows(self.rows)


def _timed_metric(eval_fn, n_samples: int) -> tuple[float, float]:
    start = time.perf_counter()
    metric = eval_fn()
    elapsed = (time.perf_counter() - start) * 1000.0 / max(n_samples, 1)
    return metric, elapsed


def _eval_tokens(model: TcModel, samples) -> float:
    ids = [model.vocab.encode(t)[: model.config.max_len - 1] for t, _ in samples]
    preds = model.classify_tokens_batch(ids)
    if model.config.multi_label:
        vals = [r_precision(p.ranked, set(g)) for p, (_, g) in zip(preds, samples)
                if len(set(g)) > 0]
        return mean_r_precision(vals)
    return accuracy([p.label for p in preds], [int(g) for _, g in samples])


def cmd_evaluate(config: ExperimentConfig, bundle: DatasetBundle | None = None) -> RunReport:
    """Run the {LM baseline, soft, hard, translate-and-train} x budgets x seeds
    matrix and emit the report (JSON + CSV)."""
    if bundle is None:
        data_dir = Path(config.out_dir) / "data"
        bundle = read_bundle(data_dir) if data_dir.exists() else generate_bundle(config)
    vocab = shared_vocabulary(bundle.lang)
    task = bundle.task
    metric_kind = "mrp" if task.kind == "multi_label" else "accuracy"
    report = RunReport(name=config.name, metric_kind=metric_kind)
    test = bundle.tg_test

    for seed in config.seeds:
        known = {"lm", "pipeline", "translate_train"}
        unknown = set(config.methods) - known
        if unknown:
            raise ValueError(f"unknown methods requested: {sorted(unknown)}")
        needs_pipeline = "pipeline" in config.methods
        mt = tc = None
        if needs_pipeline or "lm" in config.methods:
            tc, _ = train_tc_component(config, bundle, vocab, seed)
            tc_state = tc.store.state()
        if needs_pipeline:
            mt, _ = train_mt_component(config, bundle, vocab, seed)
            mt_state = mt.store.state()
        reverse_mt = None
        if "translate_train" in config.methods:
            reverse_mt, _ = train_mt_component(config, bundle, vocab, seed, reverse=True)

        for budget in config.budgets:
            if "lm" in config.methods:
                tc.store.load_state(tc_state)
                if budget:
                    lm_baseline(tc, bundle.few_shot[budget], bundle.selection_dev,
                                config.train_config("finetune", seed))
                metric, ms = _timed_metric(lambda: _eval_tokens(tc, test), len(test))
                report.rows.append({"method": "lm", "budget": budget, "seed": seed,
                                    "metric": metric, "ms_per_sample": ms})
            if needs_pipeline:
                mt.store.load_state(mt_state)
                tc.store.load_state(tc_state)
                pipe = TranslateTestPipeline(mt, tc, config.freezing_policy())
                if budget:
                    pipe.finetune_end_to_end(bundle.few_shot[budget],
                                             bundle.selection_dev,
                                             config.train_config("finetune", seed))
                metric, ms = _timed_metric(lambda: pipe.evaluate_metric(test), len(test))
                report.rows.append({"method": "pipeline_soft", "budget": budget,
                                    "seed": seed, "metric": metric, "ms_per_sample": ms})
                metric, ms = _timed_metric(
                    lambda: pipe.evaluate_metric(test, hard=True), len(test))
                report.rows.append({"method": "pipeline_hard", "budget": budget,
                                    "seed": seed, "metric": metric, "ms_per_sample": ms})
            if reverse_mt is not None:
                model = translate_and_train(
                    reverse_mt, bundle, tc_seed=seed,
                    train_config=config.train_config("tc", seed),
                    few_shot_k=budget,
                    finetune_config=config.train_config("finetune", seed))
                metric, ms = _timed_metric(lambda: _eval_tokens(model, test), len(test))
                report.rows.append({"method": "translate_train", "budget": budget,
                                    "seed": seed, "metric": metric, "ms_per_sample": ms})

    report.compute_averages()
    report.write(Path(config.out_dir) / "report")
    return report


# ---------------------------------------------------------------------------
# sensitivity sweep
# ---------------------------------------------------------------------------

def cmd_sweep_bleu(config: ExperimentConfig, bundle: DatasetBundle | None = None) -> dict:
    """Translation-quality sensitivity: per MT checkpoint, test BLEU and the
    downstream metric; reports the (BLEU, metric) series and their Spearman
    rank correlation."""
    severity = float(config.sweep.get("severity", 0.8))
    budgets = list(config.sweep.get("budgets", [0]))
    lang = degrade_language(config.lang_spec(), severity)
    if bundle is None:
        bundle = generate_bundle(config, lang=lang)
    vocab = shared_vocabulary(lang)
    seed = config.seeds[0]

    ckpt_dir = Path(config.out_dir) / "sweep_checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    mt = MtModel(vocab, MtConfig(**config.mt_model), seed=seed)
    untrained = ckpt_dir / "mt_untrained.npz"
    mt.save(untrained, extra={"epoch": -1})
    result = train_mt(mt, [(t, s) for s, t in bundle.parallel.train],
                      [(t, s) for s, t in bundle.parallel.dev],
                      config.train_config("mt", seed), checkpoint_dir=ckpt_dir)
    checkpoints = [str(untrained)] + result.checkpoint_paths
    if len(checkpoints) < 3:
        raise ValueError(f"sweep needs at least 3 MT checkpoints, found {len(checkpoints)}")

    tc, _ = train_tc_component(config, bundle, vocab, seed)
    tc_state = tc.store.state()
    test_src = [vocab.encode(t)[: mt.config.max_source_len]
                for _, t in bundle.parallel.test]
    test_refs = [list(s) for s, _ in bundle.parallel.test]

    series = []
    for path in checkpoints:
        model = MtModel.load(path, vocab)
        bleu = evaluate_bleu(model, test_src, test_refs)
        entry = {"checkpoint": path, "bleu": bleu}
        for budget in budgets:
            tc.store.load_state(tc_state)
            pipe = TranslateTestPipeline(model, tc, config.freezing_policy())
            if budget:
                pipe.finetune_end_to_end(bundle.few_shot[budget], bundle.selection_dev,
                                         config.train_config("finetune", seed))
            entry[f"metric_k{budget}"] = pipe.evaluate_metric(bundle.tg_test)
        series.append(entry)

    out = {"severity": severity, "budgets": budgets, "series": series,
           "spearman": {}}
    bleus = [e["bleu"] for e in series]
    for budget in budgets:
        metrics = [e[f"metric_k{budget}"] for e in series]
        rho = stats.spearmanr(bleus, metrics).statistic
        out["spearman"][str(budget)] = float(rho)

    sweep_dir = Path(config.out_dir) / "sweep"
    sweep_dir.mkdir(parents=True, exist_ok=True)
    (sweep_dir / "sweep.json").write_text(json.dumps(out, indent=2, sort_keys=True))
    with open(sweep_dir / "sweep.csv", "w", newline="") as f:
        fields = ["checkpoint", "bleu"] + [f"metric_k{b}" for b in budgets]
        writer = csv.DictWriter(f, fieldnames=fields)
        writer.writeheader()
        writer.writerows(series)
    return out


def cmd_report(out_dir) -> RunReport:
    """Reload a written report and verify its averages recompute identically."""
    path = Path(out_dir) / "report" / "report.json"
    data = json.loads(path.read_text())
    report = RunReport(**data)
    stored = report.averages
    report.compute_averages()
    for a, b in zip(stored, report.averages):
        if a != b:
            raise ValueError(f"stored averages do not recompute: {a} vs {b}")
    return report
