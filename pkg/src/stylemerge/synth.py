"""Synthetic corpora with deterministic surface signatures.

Two toy writing styles are defined by small marker lexicons (British vs
American spellings plus a few style-exclusive words). Every generated
sentence embeds several markers, so a character n-gram classifier can
separate the styles while the surrounding filler vocabulary stays shared
with the neutral corpus. All generators are seeded and pure.
"""

import numpy as np

from .corpus import StyleDocument
from .errors import ConfigError

BRITISH_STYLE = "bbc"
AMERICAN_STYLE = "usa"

_MARKERS = {
    BRITISH_STYLE: ("colour", "flavour", "humour", "neighbour", "organise",
                    "centre", "theatre", "grey", "fortnight", "autumn"),
    AMERICAN_STYLE: ("color", "flavor", "humor", "neighbor", "organize",
                     "center", "theater", "gray", "vacation", "fall"),
}

_NEUTRAL_NOUNS = ("report", "window", "market", "signal", "garden",
                  "bridge", "record", "stone", "letter", "street")
_NEUTRAL_VERBS = ("shows", "holds", "keeps", "finds", "makes", "takes")

_STYLE_TEMPLATES = (
    "the {m0} of the {n0} {v0} a {m1} tone near the {n1}.",
    "a {m0} {n0} {v0} the {m1} and the {n1} all day.",
    "we noted the {m0} {n0} and its {m1} {n1} with care.",
    "this {n0} {v0} more {m0} than the {m1} {n1} nearby.",
)

_NEUTRAL_TEMPLATES = (
    "the {n0} {v0} the {n1} near the {n2}.",
    "a {n0} {v0} one {n1} and one {n2} each day.",
    "we saw the {n0} and the {n1} by the {n2}.",
    "this {n0} {v0} the {n1} more than the {n2}.",
)

_INSTRUCTION_TEMPLATES = (
    "instruction: describe the {n0}. answer: the {n0} {v0} the {n1}.",
    "instruction: name a {n0}. answer: a {n0} near the {n1}.",
    "instruction: compare the {n0} and the {n1}. answer: the {n0} {v0} more.",
)


def _pick(rng, pool, k):
    return [pool[int(i)] for i in rng.choice(len(pool), size=k, replace=False)]


def _style_sentence(rng, markers):
    template = _STYLE_TEMPLATES[int(rng.integers(len(_STYLE_TEMPLATES)))]
    m0, m1 = _pick(rng, markers, 2)
    n0, n1 = _pick(rng, _NEUTRAL_NOUNS, 2)
    v0 = _NEUTRAL_VERBS[int(rng.integers(len(_NEUTRAL_VERBS)))]
    return template.format(m0=m0, m1=m1, n0=n0, n1=n1, v0=v0)


def style_corpus(style_id: str, n_docs: int, seed: int,
                 sentences_per_doc: int = 3) -> list:
    """Documents for one style, two marker words per sentence."""
    if style_id not in _MARKERS:
        raise ConfigError(f"unknown synthetic style {style_id!r}; "
                          f"choose from {sorted(_MARKERS)}")
    rng = np.random.default_rng(seed)
    markers = _MARKERS[style_id]
    docs = []
    for _ in range(n_docs):
        text = " ".join(_style_sentence(rng, markers)
                        for _ in range(sentences_per_doc))
        docs.append(StyleDocument(text=text, style_id=style_id))
    return docs


def _neutral_sentence(rng):
    template = _NEUTRAL_TEMPLATES[int(rng.integers(len(_NEUTRAL_TEMPLATES)))]
    n0, n1, n2 = _pick(rng, _NEUTRAL_NOUNS, 3)
    v0 = _NEUTRAL_VERBS[int(rng.integers(len(_NEUTRAL_VERBS)))]
    return template.format(n0=n0, n1=n1, n2=n2, v0=v0)


def neutral_corpus(n_docs: int, seed: int, sentences_per_doc: int = 3) -> list:
    """Marker-free filler documents for pretraining and negative pools."""
    rng = np.random.default_rng(seed)
    return [" ".join(_neutral_sentence(rng) for _ in range(sentences_per_doc))
            for _ in range(n_docs)]


def instruction_corpus(n_docs: int, seed: int) -> list:
    """Instruction-formatted neutral sentences for the instruct checkpoint."""
    rng = np.random.default_rng(seed)
    texts = []
    for _ in range(n_docs):
        template = _INSTRUCTION_TEMPLATES[int(rng.integers(len(_INSTRUCTION_TEMPLATES)))]
        n0, n1 = _pick(rng, _NEUTRAL_NOUNS, 2)
        v0 = _NEUTRAL_VERBS[int(rng.integers(len(_NEUTRAL_VERBS)))]
        texts.append(template.format(n0=n0, n1=n1, v0=v0))
    return texts


_SUITE_KINDS = ("max_words", "min_words", "must_include_keyword",
                "must_exclude_keyword", "all_lowercase", "starts_with")


def constraint_suite(n_items: int = 60, seed: int = 0) -> list:
    """Prompted items with verifiable constraints, as plain dicts."""
    rng = np.random.default_rng(seed)
    items = []
    for i in range(n_items):
        noun = _NEUTRAL_NOUNS[int(rng.integers(len(_NEUTRAL_NOUNS)))]
        prompt = f"the {noun} "
        kind = _SUITE_KINDS[i % len(_SUITE_KINDS)]
        if kind == "max_words":
            constraint = {"kind": kind, "count": 60}
        elif kind == "min_words":
            constraint = {"kind": kind, "count": 2}
        elif kind == "must_include_keyword":
            constraint = {"kind": kind, "keyword": noun}
        elif kind == "must_exclude_keyword":
            constraint = {"kind": kind, "keyword": "zyx"}
        elif kind == "starts_with":
            constraint = {"kind": kind, "prefix": "the"}
        else:
            constraint = {"kind": kind}
        items.append({"prompt": prompt, "constraints": [constraint]})
    return items
