"""Corpus ingestion, style annotation, byte tokenizer, batch assembly."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, TemplateError, VocabularyError

BOS = 256
EOS = 257
VOCAB_SIZE = 258


@dataclass(frozen=True)
class StyleDocument:
    text: str
    style_id: str

    def __post_init__(self):
        if not self.text.strip():
            raise DataError("document text is empty")
        if not self.style_id:
            raise DataError("style_id is empty")


@dataclass(frozen=True)
class AnnotationTemplate:
    """Pattern with exactly one {style} and one {text} placeholder, e.g.
    "News article written by {style}. Article: {text}". The style id is
    rendered inside double square brackets."""
    pattern: str

    def __post_init__(self):
        for ph in ("{style}", "{text}"):
            if self.pattern.count(ph) != 1:
                raise TemplateError(f"template must contain {ph} exactly once")


def annotate(doc: StyleDocument, template: AnnotationTemplate) -> str:
    return template.pattern.replace("{style}", f"[[{doc.style_id}]]").replace(
        "{text}", doc.text)


def encode(text: str) -> list:
    """Byte-level encoding: one id per UTF-8 byte (0..255)."""
    return list(text.encode("utf-8"))


def decode(ids) -> str:
    """Inverse of encode. BOS/EOS are structural and skipped; ids >= 258 are
    rejected. Byte sequences that are not valid UTF-8 (possible in generated
    text) decode with replacement characters."""
    out = bytearray()
    for i in ids:
        i = int(i)
        if i >= VOCAB_SIZE or i < 0:
            raise VocabularyError(f"token id {i} outside vocabulary [0, {VOCAB_SIZE})")
        if i < 256:
            out.append(i)
    return out.decode("utf-8", errors="replace")


@dataclass(frozen=True)
class TokenBatch:
    input_ids: np.ndarray   # (T,) int64
    target_ids: np.ndarray  # (T,) int64, inputs shifted by one


def build_batches(docs, ctx: int, seed: int) -> list:
    """Encode each document as BOS + bytes + EOS, concatenate in seeded
    shuffle order, and chunk into non-overlapping windows of ctx+1 tokens.
    The final partial window is dropped."""
    if ctx < 2:
        raise ConfigError(f"context length must be >= 2, got {ctx}")
    docs = list(docs)
    if not docs:
        raise ConfigError("empty corpus")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(docs))
    stream = []
    for idx in order:
        stream.append(BOS)
        stream.extend(encode(docs[idx]))
        stream.append(EOS)
    stream = np.asarray(stream, dtype=np.int64)
    n_windows = len(stream) // (ctx + 1)
    if n_windows == 0:
        warnings.warn(f"corpus of {len(stream)} tokens shorter than one window of {ctx + 1}")
        return []
    batches = []
    for w in range(n_windows):
        window = stream[w * (ctx + 1):(w + 1) * (ctx + 1)]
        batches.append(TokenBatch(input_ids=window[:-1].copy(), target_ids=window[1:].copy()))
    return batches


def load_jsonl_corpus(path) -> list:
    """Read a JSONL corpus of {"text": str, "style": str} objects."""
    docs = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"{path}:{lineno}: malformed JSON: {e}") from e
            if "text" not in obj:
                raise DataError(f"{path}:{lineno}: missing 'text' field")
            if "style" not in obj:
                raise DataError(f"{path}:{lineno}: missing 'style' field")
            docs.append(StyleDocument(text=obj["text"], style_id=obj["style"]))
    return docs


def save_jsonl_corpus(docs, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for doc in docs:
            f.write(json.dumps({"text": doc.text, "style": doc.style_id},
                               ensure_ascii=False) + "\n")
