"""Synthetic corpora for desk-scale experiments and tests.

``planted_reviews`` builds a classification task whose ground truth is
known by construction: the vocabulary is organized into token groups,
and the positive class is defined by the presence of tokens from a
designated subset of signal groups. A faithful pipeline should
discover concepts matching the signal groups and rank them on top.

``sentiment_phrases`` is a tiny two-class phrase corpus for training
demo sentiment models.
"""

from __future__ import annotations

import numpy as np

GROUP_STEMS = (
    "amber", "citrus", "velvet", "oak", "pepper", "honey", "smoke", "mint",
    "cedar", "plum", "cocoa", "basil",
)


def token_groups(n_groups: int = 8, tokens_per_group: int = 4) -> list[list[str]]:
    """Disjoint token groups: group g holds tokens '<stem>0'..'<stem>k'."""
    if n_groups > len(GROUP_STEMS):
        raise ValueError(f"at most {len(GROUP_STEMS)} groups supported")
    return [
        [f"{GROUP_STEMS[g]}{i}" for i in range(tokens_per_group)]
        for g in range(n_groups)
    ]


def planted_reviews(
    n_docs: int = 240,
    n_groups: int = 8,
    signal_groups: tuple[int, ...] = (0, 1),
    tokens_per_group: int = 4,
    words_per_doc: int = 12,
    seed: int = 0,
) -> dict:
    """Corpus where the class is determined by the signal token groups.

    Positive documents mix tokens from one or both signal groups with
    background-group filler; negative documents use background groups
    only. Sentences are grouped in threes so sentence-mode extraction
    has material to work with.

    Returns {"docs": [{"id", "text", "label"}], "groups": token groups,
    "signal_groups": indices}.
    """
    rng = np.random.default_rng(seed)
    groups = token_groups(n_groups, tokens_per_group)
    background = [g for g in range(n_groups) if g not in signal_groups]
    if not background:
        raise ValueError("at least one background group is required")

    docs = []
    for i in range(n_docs):
        label = i % 2
        words = []
        n_sentences = 3
        per_sentence = max(2, words_per_doc // n_sentences)
        sentences = []
        for _ in range(n_sentences):
            sentence_words = []
            for _ in range(per_sentence):
                if label == 1 and rng.random() < 0.45:
                    g = int(rng.choice(list(signal_groups)))
                else:
                    g = int(rng.choice(background))
                sentence_words.append(groups[g][int(rng.integers(tokens_per_group))])
            sentences.append(" ".join(sentence_words) + ".")
        text = " ".join(sentences)
        docs.append({"id": f"doc{i:04d}", "text": text, "label": str(label)})
    return {"docs": docs, "groups": groups, "signal_groups": tuple(signal_groups)}


POSITIVE_PHRASES = (
    "a wonderful pour with great flavor",
    "excellent taste and a lovely finish",
    "superb aroma truly delightful stuff",
    "fantastic balance smooth and rich",
    "great body wonderful malt sweetness",
    "lovely color and excellent head retention",
    "delightful hops superb freshness",
    "rich smooth excellent and satisfying",
    "wonderful crisp taste great value",
    "superb texture fantastic aftertaste",
)

NEGATIVE_PHRASES = (
    "a terrible pour with awful flavor",
    "bland taste and a watery finish",
    "dreadful aroma truly disappointing stuff",
    "awful balance harsh and thin",
    "flat body terrible malt staleness",
    "murky color and awful head retention",
    "disappointing hops dreadful staleness",
    "harsh metallic awful and unpleasant",
    "terrible sour taste poor value",
    "gritty texture dreadful aftertaste",
)


def sentiment_phrases(n_docs: int = 120, seed: int = 0) -> list[tuple[str, str]]:
    """Small two-class sentiment corpus of recombined phrase pairs."""
    rng = np.random.default_rng(seed)
    corpus = []
    for i in range(n_docs):
        label = i % 2
        bank = POSITIVE_PHRASES if label else NEGATIVE_PHRASES
        first, second = rng.choice(len(bank), size=2, replace=False)
        text = f"{bank[first]}. {bank[second]}."
        corpus.append((text.capitalize(), "pos" if label else "neg"))
    return corpus
