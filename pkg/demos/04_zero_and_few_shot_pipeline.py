"""The full translate-and-test pipeline: zero-shot transfer, then joint
few-shot fine-tuning with layer freezing.

Trains both components on a noisy cipher language, evaluates the composed
pipeline on target-language text with no target supervision, and then
fine-tunes end to end on 10 labeled target samples. The freezing policy keeps
the trainable-parameter count below a single model's total.

Run: python3 demos/04_zero_and_few_shot_pipeline.py   (a few minutes on CPU)
"""

from difftt.harness import shared_vocabulary
from difftt.mt import MtConfig, MtModel, TrainConfig, train_mt
from difftt.pipeline import FreezingPolicy, TranslateTestPipeline
from difftt.synthlang import SyntheticLanguageSpec, TaskSpec, gen_classification_dataset
from difftt.tc import TcConfig, TcModel, train_tc


def main():
    lang = SyntheticLanguageSpec(seed=0, reorder_prob=0.2, noise_rate=0.1)
    task = TaskSpec(kind="multi_class", n_classes=3)
    bundle = gen_classification_dataset(task, lang, sizes=(3000, 400, 300),
                                        parallel_sizes=(3000, 300, 300))
    vocab = shared_vocabulary(lang)

    print("training translator (target -> high-resource)...")
    mt = MtModel(vocab, MtConfig(), seed=1)
    train_mt(mt, [(t, s) for s, t in bundle.parallel.train],
             [(t, s) for s, t in bundle.parallel.dev],
             TrainConfig(epochs=3, batch_size=32, lr=2e-3, warmup_steps=100,
                         grad_accum=1, seed=1))

    print("training classifier on high-resource labeled data...")
    tc = TcModel(vocab, TcConfig(n_classes=3), seed=1)
    train_tc(tc, bundle.hr_train, bundle.hr_dev,
             TrainConfig(epochs=2, batch_size=32, lr=1e-3, warmup_steps=50,
                         grad_accum=1, seed=1))

    pipe = TranslateTestPipeline(mt, tc, FreezingPolicy(0.5, 0.5))
    print(f"trainable params {pipe.trainable_param_count():,} "
          f"<= single-model total {pipe.single_model_param_count():,}")

    zero_soft = pipe.evaluate_metric(bundle.tg_test)
    zero_hard = pipe.evaluate_metric(bundle.tg_test, hard=True)
    print(f"zero-shot accuracy: soft {zero_soft:.3f}, hard {zero_hard:.3f}")

    print("joint fine-tuning on 10 target-language samples...")
    pipe.finetune_end_to_end(bundle.few_shot[10], bundle.selection_dev,
                             TrainConfig(epochs=2, batch_size=1, lr=1e-4,
                                         warmup_steps=0, grad_accum=1, seed=1))
    few_soft = pipe.evaluate_metric(bundle.tg_test)
    print(f"10-shot accuracy: soft {few_soft:.3f} "
          f"(delta {few_soft - zero_soft:+.3f})")


if __name__ == "__main__":
    main()
