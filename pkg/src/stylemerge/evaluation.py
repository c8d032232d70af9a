"""Evaluation instruments: style adherence via an authorship-attribution
classifier over hashed character trigrams, content overlap via unigram F1,
and instruction following via verifiable constraints (prompt-level strict).

The trigram features stand in for pretrained author embeddings; swapping in
another embedder only requires replacing `featurize`.
"""

from __future__ import annotations

import json
import string
import warnings
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError

FEATURE_DIM = 1 << 15
_FNV_OFFSET = 2166136261
_FNV_PRIME = 16777619
_MASK32 = 0xFFFFFFFF


def _fnv1a(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK32
    return h


def featurize(text: str) -> np.ndarray:
    """L2-normalized TF vector of character 3-grams of the lowercased text,
    FNV-1a-hashed into FEATURE_DIM buckets. Empty/short text -> zero vector."""
    vec = np.zeros(FEATURE_DIM, dtype=np.float32)
    low = text.lower()
    for i in range(len(low) - 2):
        bucket = _fnv1a(low[i:i + 3].encode("utf-8")) % FEATURE_DIM
        vec[bucket] += 1.0
    norm = float(np.linalg.norm(vec))
    if norm > 0.0:
        vec /= np.float32(norm)
    return vec


@dataclass
class StyleClassifier:
    weights: np.ndarray
    bias: float
    style_id: str

    def score(self, text: str) -> float:
        return float(self.weights @ featurize(text) + self.bias)

    def predict(self, text: str) -> bool:
        """True = matches the trained style; a tied score counts negative."""
        return self.score(text) > 0.0


SVM_LAMBDA = 1e-4
SVM_EPOCHS = 20


def sample_negatives(n_pos: int, neg_pool, seed: int) -> list:
    """Seeded draw keeping positives:negatives at 3:2, without replacement
    when the pool allows."""
    n_neg = round(2 * n_pos / 3)
    pool = list(neg_pool)
    rng = np.random.default_rng(seed)
    if n_neg > len(pool):
        warnings.warn(f"negative pool of {len(pool)} smaller than requested {n_neg}; "
                      f"using the whole pool")
        n_neg = len(pool)
    idx = rng.permutation(len(pool))[:n_neg]
    return [pool[i] for i in idx]


def train_style_classifier(pos, neg_pool, seed: int,
                           style_id: str = "") -> StyleClassifier:
    """Linear SVM by Pegasos-style subgradient descent on hinge loss."""
    pos = list(pos)
    if len(pos) < 5:
        raise DataError(f"need at least 5 positive texts, got {len(pos)}")
    if not list(neg_pool):
        raise DataError("negative pool is empty")
    neg = sample_negatives(len(pos), neg_pool, seed)
    feats = np.stack([featurize(t) for t in pos + neg])
    labels = np.array([1.0] * len(pos) + [-1.0] * len(neg), dtype=np.float32)

    rng = np.random.default_rng(seed + 1)
    w = np.zeros(FEATURE_DIM, dtype=np.float32)
    b = 0.0
    t = 0
    for _ in range(SVM_EPOCHS):
        for i in rng.permutation(len(labels)):
            t += 1
            eta = 1.0 / (SVM_LAMBDA * t)
            margin = labels[i] * (float(w @ feats[i]) + b)
            w *= np.float32(1.0 - eta * SVM_LAMBDA)
            if margin < 1.0:
                w += np.float32(eta * labels[i]) * feats[i]
                b += eta * SVM_LAMBDA * labels[i]  # small unregularized bias step
    return StyleClassifier(weights=w, bias=b, style_id=style_id)


def binary_f1(tp: int, fp: int, fn: int) -> float:
    if tp + fp == 0 or tp + fn == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def style_f1(clf: StyleClassifier, generated, distractors) -> float:
    """F1 of the positive class: `generated` should classify as the style,
    `distractors` should not."""
    generated, distractors = list(generated), list(distractors)
    if not generated or not distractors:
        raise DataError("style_f1 needs non-empty generated and distractor sets")
    tp = sum(clf.predict(t) for t in generated)
    fn = len(generated) - tp
    fp = sum(clf.predict(t) for t in distractors)
    return binary_f1(tp, fp, fn)


def positive_rate(clf: StyleClassifier, texts) -> float:
    """Fraction of texts the classifier assigns to the trained style."""
    texts = list(texts)
    if not texts:
        raise DataError("no texts to classify")
    return sum(clf.predict(t) for t in texts) / len(texts)


_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def _unigrams(text: str) -> list:
    return text.lower().translate(_PUNCT_TABLE).split()


def rouge1_f1(candidate: str, reference: str) -> float:
    """Unigram F1 with clipped counts; 0 when either side is empty."""
    cand = Counter(_unigrams(candidate))
    ref = Counter(_unigrams(reference))
    total_c, total_r = sum(cand.values()), sum(ref.values())
    if total_c == 0 or total_r == 0:
        return 0.0
    overlap = sum((cand & ref).values())
    precision = overlap / total_c
    recall = overlap / total_r
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


CONSTRAINT_KINDS = ("max_words", "min_words", "must_include_keyword",
                    "must_exclude_keyword", "exact_paragraph_count",
                    "all_lowercase", "all_uppercase", "starts_with",
                    "json_object")


@dataclass(frozen=True)
class VerifiableConstraint:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in CONSTRAINT_KINDS:
            raise ConfigError(f"unknown constraint kind {self.kind!r}")

    def check(self, text: str) -> bool:
        p = self.params
        if self.kind == "max_words":
            return len(text.split()) <= int(p["count"])
        if self.kind == "min_words":
            return len(text.split()) >= int(p["count"])
        if self.kind == "must_include_keyword":
            return p["keyword"].lower() in text.lower()
        if self.kind == "must_exclude_keyword":
            return p["keyword"].lower() not in text.lower()
        if self.kind == "exact_paragraph_count":
            paras = [s for s in text.split("\n\n") if s.strip()]
            return len(paras) == int(p["count"])
        if self.kind == "all_lowercase":
            return text == text.lower()
        if self.kind == "all_uppercase":
            return text == text.upper()
        if self.kind == "starts_with":
            return text.startswith(p["prefix"])
        # json_object
        try:
            return isinstance(json.loads(text), dict)
        except json.JSONDecodeError:
            return False


def constraint_from_dict(obj: dict) -> VerifiableConstraint:
    if "kind" not in obj:
        raise ConfigError(f"constraint missing 'kind': {obj!r}")
    params = {k: v for k, v in obj.items() if k != "kind"}
    return VerifiableConstraint(kind=obj["kind"], params=params)


def strict_accuracy(items) -> float:
    """items: iterable of (text, [VerifiableConstraint]). An item passes only
    if every constraint passes."""
    items = list(items)
    if not items:
        raise DataError("no items to evaluate")
    passed = sum(all(c.check(text) for c in constraints) for text, constraints in items)
    return passed / len(items)


@dataclass
class EvalReport:
    style_f1: float
    rouge1_f1: float
    strict_accuracy: float
    per_item: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({
            "style_f1": self.style_f1,
            "rouge1_f1": self.rouge1_f1,
            "strict_accuracy": self.strict_accuracy,
            "per_item": self.per_item,
            "metadata": self.metadata,
        }, indent=2, ensure_ascii=False)
