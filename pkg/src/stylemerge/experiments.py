"""End-to-end style-transfer experiment at desk scale.

Builds the full pipeline on synthetic corpora: pretrain a small base
checkpoint on neutral text, derive an instruct checkpoint by brief
continued training on instruction-formatted text, train one style
adapter per synthetic style on the base, merge each adapter into the
instruct checkpoint, then measure held-out perplexity, style adherence
of sampled generations, and constraint-following accuracy. A second
adapter trained without annotation prefixes supports the annotation
ablation. Everything is seeded; the whole run takes a few minutes on
one CPU core.
"""

import time
from dataclasses import dataclass, field

from .corpus import AnnotationTemplate, annotate, build_batches, decode, encode
from .evaluation import (constraint_from_dict, positive_rate, strict_accuracy,
                         style_f1, train_style_classifier)
from .lora import ALL_PROJ_TARGETS, TargetSpec
from .merge import merge_lora
from .model import ModelConfig, Sampler, from_checkpoint, generate
from .pretrain import continue_training, pretrain
from .synth import (AMERICAN_STYLE, BRITISH_STYLE, constraint_suite,
                    instruction_corpus, neutral_corpus, style_corpus)
from .train import TrainHyper, eval_perplexity, train_lora

ANNOTATION_TEMPLATE = AnnotationTemplate("{style} {text}")

EXPERIMENT_CONFIG = ModelConfig(d_model=64, n_layers=4, n_heads=4,
                                d_ff=128, ctx_len=64)

PRETRAIN_HYPER = TrainHyper(steps=1200, lr=1e-3, batch_size=4, seed=0)
INSTRUCT_HYPER = TrainHyper(steps=100, lr=3e-5, batch_size=4, seed=1)
ADAPTER_HYPER = TrainHyper(steps=2000, lr=3e-3, batch_size=4, seed=2)
ADAPTER_SPEC = TargetSpec(ALL_PROJ_TARGETS, rank=8)

N_STYLE_DOCS = 300
N_TRAIN_DOCS = 240  # remainder is held out for perplexity
GEN_SEEDS = 16
GEN_TEMPERATURE = 0.4
GEN_MAX_NEW = 160


@dataclass
class StyleExperimentResult:
    """Metrics from one full pipeline run, keyed by style where relevant."""

    ppl_unmerged: dict = field(default_factory=dict)
    ppl_merged: dict = field(default_factory=dict)
    f1_merged: dict = field(default_factory=dict)
    f1_unmerged: dict = field(default_factory=dict)
    annotated_accuracy: float = 0.0
    unannotated_accuracy: float = 0.0
    strict_merged: float = 0.0
    strict_unmerged: float = 0.0
    runtime_s: float = 0.0

    def summary(self) -> dict:
        return {
            "ppl_unmerged": self.ppl_unmerged,
            "ppl_merged": self.ppl_merged,
            "style_f1_merged": self.f1_merged,
            "style_f1_unmerged": self.f1_unmerged,
            "annotated_accuracy": self.annotated_accuracy,
            "unannotated_accuracy": self.unannotated_accuracy,
            "strict_accuracy_merged": self.strict_merged,
            "strict_accuracy_unmerged": self.strict_unmerged,
            "runtime_s": round(self.runtime_s, 1),
        }


def _sample_texts(weights, config, prompt: str, n: int) -> list:
    ids = encode(prompt)
    out = []
    for seed in range(n):
        sampler = Sampler("temperature", temperature=GEN_TEMPERATURE, seed=seed)
        out.append(decode(generate(weights, config, ids, sampler,
                                   max_new=GEN_MAX_NEW)))
    return out


def _suite_accuracy(weights, config, suite) -> float:
    items = []
    for i, item in enumerate(suite):
        sampler = Sampler("temperature", temperature=GEN_TEMPERATURE, seed=i)
        text = decode(generate(weights, config, encode(item["prompt"]),
                               sampler, max_new=80))
        constraints = [constraint_from_dict(c) for c in item["constraints"]]
        items.append((text, constraints))
    return strict_accuracy(items)


def run_style_experiment(progress=None) -> StyleExperimentResult:
    """Run the whole pipeline and return the measured metrics.

    `progress` is an optional callable taking one status string.
    """
    def report(msg):
        if progress is not None:
            progress(msg)

    start = time.time()
    config = EXPERIMENT_CONFIG
    result = StyleExperimentResult()

    neutral = neutral_corpus(300, seed=10)
    instruct_texts = instruction_corpus(300, seed=11)
    styles = {
        BRITISH_STYLE: style_corpus(BRITISH_STYLE, N_STYLE_DOCS, seed=12),
        AMERICAN_STYLE: style_corpus(AMERICAN_STYLE, N_STYLE_DOCS, seed=13),
    }

    report("pretraining base checkpoint")
    base = pretrain(config, build_batches(neutral, config.ctx_len, seed=0),
                    PRETRAIN_HYPER, init_seed=0)
    report("continuing into instruct checkpoint")
    instruct = continue_training(
        base, build_batches(instruct_texts, config.ctx_len, seed=1),
        INSTRUCT_HYPER)
    w_instruct = from_checkpoint(instruct)

    distractors = neutral[240:280]
    for style_id, docs in styles.items():
        report(f"training adapter for style {style_id}")
        train_docs, held_docs = docs[:N_TRAIN_DOCS], docs[N_TRAIN_DOCS:]
        annotated = [annotate(d, ANNOTATION_TEMPLATE) for d in train_docs]
        adapter, _ = train_lora(base, config,
                                build_batches(annotated, config.ctx_len, seed=2),
                                ADAPTER_SPEC, ADAPTER_HYPER)
        merged = merge_lora(instruct, adapter)
        w_merged = from_checkpoint(merged)

        held = [annotate(d, ANNOTATION_TEMPLATE) for d in held_docs]
        held_batches = build_batches(held, config.ctx_len, seed=3)
        result.ppl_unmerged[style_id] = eval_perplexity(instruct, config,
                                                        held_batches)
        result.ppl_merged[style_id] = eval_perplexity(merged, config,
                                                      held_batches)

        pos = [d.text for d in train_docs]
        other = next(s for s in styles if s != style_id)
        pool = [d.text for d in styles[other][:N_TRAIN_DOCS]] + neutral[:120]
        clf = train_style_classifier(pos, pool, seed=0, style_id=style_id)

        prompt = f"[[{style_id}]] the "
        gen_merged = _sample_texts(w_merged, config, prompt, GEN_SEEDS)
        gen_unmerged = _sample_texts(w_instruct, config, prompt, GEN_SEEDS)
        result.f1_merged[style_id] = style_f1(clf, gen_merged, distractors)
        result.f1_unmerged[style_id] = style_f1(clf, gen_unmerged, distractors)

        if style_id == BRITISH_STYLE:
            result.annotated_accuracy = positive_rate(clf, gen_merged)

            report("training annotation-free ablation adapter")
            plain = [d.text for d in train_docs]
            bare_adapter, _ = train_lora(
                base, config, build_batches(plain, config.ctx_len, seed=2),
                ADAPTER_SPEC, ADAPTER_HYPER)
            bare_merged = from_checkpoint(merge_lora(instruct, bare_adapter))
            gen_bare = _sample_texts(bare_merged, config, "the ", GEN_SEEDS)
            result.unannotated_accuracy = positive_rate(clf, gen_bare)

            report("scoring constraint suite")
            suite = constraint_suite(60, seed=0)
            result.strict_merged = _suite_accuracy(w_merged, config, suite)
            result.strict_unmerged = _suite_accuracy(w_instruct, config, suite)

    result.runtime_s = time.time() - start
    return result
