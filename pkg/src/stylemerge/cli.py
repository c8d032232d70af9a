"""Command-line pipeline: annotate, train, merge, soup, generate, eval.

Every subcommand writes a manifest JSON next to its primary output with
the resolved arguments, sha256 fingerprints of all file inputs and
outputs, and the seeds involved, so any step can be replayed exactly.
Diagnostics go to stderr; exit code is 0 only on success.
"""

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .checkpoint import fingerprint, read_checkpoint, write_checkpoint
from .corpus import (AnnotationTemplate, StyleDocument, annotate,
                     build_batches, decode, encode, load_jsonl_corpus,
                     save_jsonl_corpus)
from .errors import ConfigError, ContextLengthError, DataError, StylemergeError
from .evaluation import (EvalReport, constraint_from_dict, rouge1_f1,
                         strict_accuracy, style_f1, train_style_classifier)
from .lora import DEFAULT_TARGETS, TargetSpec, load_adapter, save_adapter
from .merge import merge_lora, parse_ratio, soup
from .model import ModelConfig, Sampler, from_checkpoint, generate
from .pretrain import continue_training, pretrain
from .train import TrainHyper, eval_perplexity, train_lora, write_loss_csv

FEW_SHOT_FRAMING = "Here are some examples of content in the tone of {style}:"


def _write_manifest(command: str, args: dict, inputs, outputs,
                    seeds: dict, manifest_path) -> None:
    manifest = {
        "tool": "stylemerge",
        "version": __version__,
        "command": command,
        "arguments": args,
        "inputs": {str(p): fingerprint(p) for p in inputs},
        "outputs": {str(p): fingerprint(p) for p in outputs},
        "seeds": seeds,
    }
    Path(manifest_path).write_text(json.dumps(manifest, indent=2) + "\n",
                                   encoding="utf-8")


def _manifest_path(primary_output) -> Path:
    return Path(str(primary_output) + ".manifest.json")


def cmd_annotate(args) -> int:
    docs = load_jsonl_corpus(args.corpus)
    template = AnnotationTemplate(args.template)
    # no idempotence guard: annotating an already-annotated corpus
    # prefixes it a second time
    annotated = [StyleDocument(annotate(d, template), d.style_id)
                 for d in docs]
    save_jsonl_corpus(annotated, args.out)
    _write_manifest("annotate",
                    {"corpus": args.corpus, "template": args.template,
                     "out": args.out},
                    [args.corpus], [args.out], {}, _manifest_path(args.out))
    return 0


def _load_run_config(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"run config not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"run config is not valid JSON: {exc}")


def cmd_train(args) -> int:
    cfg = _load_run_config(args.config)
    ckpt = read_checkpoint(cfg["checkpoint"])
    model_cfg = ModelConfig.from_json(ckpt.metadata["model_config"])
    docs = load_jsonl_corpus(cfg["corpus"])
    texts = [d.text for d in docs]
    if "annotation_template" in cfg:
        template = AnnotationTemplate(cfg["annotation_template"])
        texts = [annotate(d, template) for d in docs]
    batches = build_batches(texts, model_cfg.ctx_len, seed=cfg.get("seed", 0))
    spec = TargetSpec(tuple(cfg.get("targets", DEFAULT_TARGETS)),
                      rank=cfg.get("rank", 8), alpha=cfg.get("alpha"))
    hyper = TrainHyper(steps=cfg["steps"], lr=cfg.get("lr", 3e-4),
                       batch_size=cfg.get("batch_size", 4),
                       seed=cfg.get("seed", 0))
    adapter, losses = train_lora(ckpt, model_cfg, batches, spec, hyper)
    save_adapter(adapter, cfg["out_adapter"],
                 base_model_fingerprint=fingerprint(cfg["checkpoint"]))
    outputs = [cfg["out_adapter"]]
    if "out_loss_csv" in cfg:
        write_loss_csv(losses, cfg["out_loss_csv"])
        outputs.append(cfg["out_loss_csv"])
    _write_manifest("train", cfg, [cfg["checkpoint"], cfg["corpus"]],
                    outputs, {"train": hyper.seed},
                    _manifest_path(cfg["out_adapter"]))
    return 0


def cmd_pretrain(args) -> int:
    cfg = _load_run_config(args.config)
    docs = load_jsonl_corpus(cfg["corpus"])
    hyper = TrainHyper(steps=cfg["steps"], lr=cfg.get("lr", 3e-4),
                       batch_size=cfg.get("batch_size", 4),
                       seed=cfg.get("seed", 0))
    inputs = [cfg["corpus"]]
    if "checkpoint" in cfg:  # continue training an existing checkpoint
        ckpt = read_checkpoint(cfg["checkpoint"])
        model_cfg = ModelConfig.from_json(ckpt.metadata["model_config"])
        batches = build_batches([d.text for d in docs], model_cfg.ctx_len,
                                seed=hyper.seed)
        out = continue_training(ckpt, batches, hyper)
        inputs.append(cfg["checkpoint"])
    else:
        model_cfg = ModelConfig(**cfg["model"])
        batches = build_batches([d.text for d in docs], model_cfg.ctx_len,
                                seed=hyper.seed)
        out = pretrain(model_cfg, batches, hyper,
                       init_seed=cfg.get("init_seed", 0))
    write_checkpoint(out, cfg["out_checkpoint"])
    _write_manifest("pretrain", cfg, inputs, [cfg["out_checkpoint"]],
                    {"train": hyper.seed,
                     "init": cfg.get("init_seed", 0)},
                    _manifest_path(cfg["out_checkpoint"]))
    return 0


def cmd_merge(args) -> int:
    ckpt = read_checkpoint(args.checkpoint)
    adapter = load_adapter(args.adapter)
    merged = merge_lora(ckpt, adapter, scale=args.scale)
    write_checkpoint(merged, args.out)
    _write_manifest("merge",
                    {"checkpoint": args.checkpoint, "adapter": args.adapter,
                     "scale": args.scale, "out": args.out},
                    [args.checkpoint, args.adapter], [args.out], {},
                    _manifest_path(args.out))
    return 0


def cmd_soup(args) -> int:
    a = read_checkpoint(args.checkpoint_a)
    b = read_checkpoint(args.checkpoint_b)
    weights = parse_ratio(args.ratio)
    out = soup([a, b], list(weights))
    write_checkpoint(out, args.out)
    _write_manifest("soup",
                    {"checkpoint_a": args.checkpoint_a,
                     "checkpoint_b": args.checkpoint_b,
                     "ratio": args.ratio,
                     "normalized_weights": list(weights),
                     "out": args.out},
                    [args.checkpoint_a, args.checkpoint_b], [args.out], {},
                    _manifest_path(args.out))
    return 0


def _build_prompt(args) -> str:
    if args.prompt is not None:
        prompt = args.prompt
    else:
        prompt = Path(args.prompt_file).read_text(encoding="utf-8")
    if args.few_shot_file is None:
        return prompt
    examples = [line for line in
                Path(args.few_shot_file).read_text(encoding="utf-8").splitlines()
                if line.strip()]
    if not examples:
        return prompt
    framing = FEW_SHOT_FRAMING.format(style=args.few_shot_style)
    return "\n".join([framing, *examples, prompt])


def cmd_generate(args) -> int:
    ckpt = read_checkpoint(args.checkpoint)
    model_cfg = ModelConfig.from_json(ckpt.metadata["model_config"])
    weights = from_checkpoint(ckpt, model_cfg)
    prompt = _build_prompt(args)
    ids = encode(prompt)
    if len(ids) >= model_cfg.ctx_len:
        raise ContextLengthError(
            f"prompt is {len(ids)} tokens after few-shot prefixing; "
            f"the context window holds {model_cfg.ctx_len}")
    sampler = Sampler(args.mode, temperature=args.temperature, seed=args.seed)
    out_ids = generate(weights, model_cfg, ids, sampler, max_new=args.max_new)
    text = decode(out_ids)
    if args.out is not None:
        Path(args.out).write_text(text, encoding="utf-8")
        inputs = [args.checkpoint] + (
            [args.few_shot_file] if args.few_shot_file else [])
        _write_manifest("generate",
                        {"checkpoint": args.checkpoint, "prompt": prompt,
                         "mode": args.mode, "temperature": args.temperature,
                         "max_new": args.max_new, "out": args.out},
                        inputs, [args.out], {"sampler": args.seed},
                        _manifest_path(args.out))
    else:
        sys.stdout.write(text + "\n")
    return 0


def _load_suite(suite_dir: Path):
    if not suite_dir.is_dir():
        raise DataError(f"suite directory not found: {suite_dir}")
    pos = [d.text for d in load_jsonl_corpus(suite_dir / "classifier_pos.jsonl")]
    neg = [d.text for d in load_jsonl_corpus(suite_dir / "classifier_neg.jsonl")]
    distract = [d.text for d in
                load_jsonl_corpus(suite_dir / "distractors.jsonl")]
    prompts = []
    path = suite_dir / "prompts.jsonl"
    if not path.is_file():
        raise DataError(f"suite prompts not found: {path}")
    for i, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            prompts.append({
                "prompt": obj["prompt"],
                "reference": obj.get("reference", ""),
                "constraints": [constraint_from_dict(c)
                                for c in obj.get("constraints", [])],
            })
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DataError(f"{path}:{i}: bad prompt record: {exc}")
    return pos, neg, distract, prompts


def cmd_eval(args) -> int:
    ckpt = read_checkpoint(args.checkpoint)
    model_cfg = ModelConfig.from_json(ckpt.metadata["model_config"])
    weights = from_checkpoint(ckpt, model_cfg)
    pos, neg, distract, prompts = _load_suite(Path(args.suite))

    clf = train_style_classifier(pos, neg, seed=args.seed)
    per_item = []
    strict_items = []
    for i, item in enumerate(prompts):
        sampler = Sampler("temperature", temperature=args.temperature,
                          seed=args.seed + i)
        text = decode(generate(weights, model_cfg, encode(item["prompt"]),
                               sampler, max_new=args.max_new))
        passed = all(c.check(text) for c in item["constraints"])
        strict_items.append((text, item["constraints"]))
        per_item.append({
            "prompt": item["prompt"],
            "text": text,
            "rouge1_f1": rouge1_f1(text, item["reference"]),
            "constraints_pass": passed,
            "classified_positive": clf.predict(text),
        })
    generated = [rec["text"] for rec in per_item]
    report = EvalReport(
        style_f1=style_f1(clf, generated, distract),
        rouge1_f1=float(sum(r["rouge1_f1"] for r in per_item) / len(per_item)),
        strict_accuracy=strict_accuracy(strict_items),
        per_item=per_item,
        metadata={"checkpoint": str(args.checkpoint),
                  "suite": str(args.suite),
                  "seed": args.seed,
                  "strictness": "prompt-level"},
    )
    Path(args.out).write_text(report.to_json() + "\n", encoding="utf-8")
    _write_manifest("eval",
                    {"checkpoint": args.checkpoint, "suite": args.suite,
                     "temperature": args.temperature,
                     "max_new": args.max_new, "out": args.out},
                    [args.checkpoint], [args.out], {"eval": args.seed},
                    _manifest_path(args.out))
    return 0


def cmd_perplexity(args) -> int:
    ckpt = read_checkpoint(args.checkpoint)
    model_cfg = ModelConfig.from_json(ckpt.metadata["model_config"])
    docs = load_jsonl_corpus(args.corpus)
    batches = build_batches([d.text for d in docs], model_cfg.ctx_len,
                            seed=args.seed)
    ppl = eval_perplexity(ckpt, model_cfg, batches)
    sys.stdout.write(f"{ppl:.6f}\n")
    return 0


def cmd_synth(args) -> int:
    from .synth import (AMERICAN_STYLE, BRITISH_STYLE, constraint_suite,
                        instruction_corpus, neutral_corpus, style_corpus)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    for style in (BRITISH_STYLE, AMERICAN_STYLE):
        path = out / f"style_{style}.jsonl"
        save_jsonl_corpus(style_corpus(style, args.docs, seed=args.seed), path)
        outputs.append(path)
    for name, texts in (("neutral", neutral_corpus(args.docs, seed=args.seed + 1)),
                        ("instructions", instruction_corpus(args.docs,
                                                            seed=args.seed + 2))):
        path = out / f"{name}.jsonl"
        save_jsonl_corpus([StyleDocument(t, name) for t in texts], path)
        outputs.append(path)
    suite_items = constraint_suite(60, seed=args.seed)
    suite_path = out / "constraint_suite.jsonl"
    with open(suite_path, "w", encoding="utf-8") as fh:
        for item in suite_items:
            fh.write(json.dumps(item) + "\n")
    outputs.append(suite_path)

    # a self-contained eval suite for the British style
    suite_dir = out / "eval_suite"
    suite_dir.mkdir(exist_ok=True)
    pos = style_corpus(BRITISH_STYLE, args.docs, seed=args.seed + 3)
    neg = (style_corpus(AMERICAN_STYLE, args.docs, seed=args.seed + 4)
           + [StyleDocument(t, "neutral")
              for t in neutral_corpus(args.docs // 2, seed=args.seed + 5)])
    distract = [StyleDocument(t, "neutral")
                for t in neutral_corpus(40, seed=args.seed + 6)]
    save_jsonl_corpus(pos, suite_dir / "classifier_pos.jsonl")
    save_jsonl_corpus(neg, suite_dir / "classifier_neg.jsonl")
    save_jsonl_corpus(distract, suite_dir / "distractors.jsonl")
    with open(suite_dir / "prompts.jsonl", "w", encoding="utf-8") as fh:
        for item, ref in zip(suite_items, pos):
            constraints = [dict(c) for c in item["constraints"]]
            for c in constraints:
                if c["kind"] == "starts_with":
                    c["prefix"] = "[["  # prompts here carry the annotation
            fh.write(json.dumps({
                "prompt": f"[[{BRITISH_STYLE}]] " + item["prompt"],
                "reference": ref.text,
                "constraints": constraints,
            }) + "\n")
    outputs.extend(suite_dir / name for name in
                   ("classifier_pos.jsonl", "classifier_neg.jsonl",
                    "distractors.jsonl", "prompts.jsonl"))
    _write_manifest("synth", {"out_dir": args.out_dir, "docs": args.docs},
                    [], outputs, {"synth": args.seed},
                    _manifest_path(out / "synth"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stylemerge",
        description="Train, merge, and evaluate style adapters for a small "
                    "byte-level language model.")
    parser.add_argument("--version", action="version",
                        version=f"stylemerge {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("annotate", help="prefix each document with its style")
    p.add_argument("--corpus", required=True)
    p.add_argument("--template", default="{style} {text}",
                   help="pattern with {style} and {text}; the style id is "
                        "rendered as [[style]]")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("train", help="train a style adapter from a run config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("pretrain",
                       help="train or continue a full checkpoint from a run config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("merge", help="add an adapter delta into a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--adapter", required=True)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("soup", help="weighted average of two checkpoints")
    p.add_argument("--checkpoint-a", required=True)
    p.add_argument("--checkpoint-b", required=True)
    p.add_argument("--ratio", required=True, help="a:b, e.g. 2:1")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_soup)

    p = sub.add_parser("generate", help="sample text from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--prompt")
    group.add_argument("--prompt-file")
    p.add_argument("--few-shot-file",
                   help="file with one example text per line, prepended "
                        "ahead of the prompt")
    p.add_argument("--few-shot-style", default="the target author",
                   help="style name used in the few-shot framing sentence")
    p.add_argument("--mode", choices=("greedy", "temperature"),
                   default="greedy")
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-new", type=int, default=128)
    p.add_argument("--out", help="write text here instead of stdout")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("eval", help="score a checkpoint against a suite dir")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--suite", required=True)
    p.add_argument("--temperature", type=float, default=0.4)
    p.add_argument("--max-new", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("perplexity", help="perplexity of a checkpoint on a corpus")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_perplexity)

    p = sub.add_parser("synth", help="write the bundled synthetic corpora")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--docs", type=int, default=300)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except StylemergeError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except FileNotFoundError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
