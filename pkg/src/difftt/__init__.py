"""Differentiable translate-and-test pipeline on a numpy autodiff substrate.

A small sequence-to-sequence translator emits per-step vocabulary probability
distributions ("soft translations"); an expected-embedding bridge turns them
into classifier inputs without breaking differentiability, so translator and
classifier fine-tune jointly with ordinary gradient descent. A synthetic
cipher-language harness reproduces the zero-shot / few-shot / baseline
protocols with exact oracles.
"""

from .autodiff import Tensor, no_grad
from .bridge import ExpectedEmbeddingSequence, bridge_sequence, expected_embedding
from .gradcheck import finite_difference_check
from .metrics import accuracy, corpus_bleu, mean_r_precision, r_precision
from .mt import MtConfig, MtModel, SoftTranslation, TrainConfig, train_mt
from .optim import AdamW, AdamWConfig
from .params import Parameter
from .pipeline import (FewShotBudget, FreezingPolicy, TranslateTestPipeline,
                       apply_freezing, lm_baseline, translate_and_train)
from .synthlang import (DatasetBundle, SyntheticLanguageSpec, TaskSpec,
                        degrade_language, gen_classification_dataset,
                        gen_language_pair, oracle_label)
from .tc import Prediction, TcConfig, TcModel, train_tc
from .vocab import Vocabulary, assert_alignment, build_shared_vocab

__version__ = "0.1.0"
