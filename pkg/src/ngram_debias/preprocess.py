"""Tweet-style text normalization, tokenization, and n-gram extraction.

Normalization applies a fixed rule order so that the result is idempotent
(normalizing already-normalized text is the identity):

1. lowercase
2. drop @-mention tokens
3. drop URL tokens (prefixes ``http://``, ``https://``, ``www.``)
4. drop exact-match ASCII emoticon tokens
5. collapse runs of >= 3 identical letters to one letter
6. hashtags: strip the ``#``; optionally segment the body against a wordlist
7. strip all characters outside [a-zA-Z0-9] from each token
8. join surviving tokens with single spaces

Every emoticon in the built-in list contains at least one non-alphanumeric
character and each URL prefix contains ``://`` or a dot, so none of the
trigger patterns can survive rule 7.  Because stripping symbols can fuse a
letter run that rule 5 saw as broken (``"aa-a"`` -> ``"aaa"``), elongation
collapse runs once more after rule 7; together these make a second pass a
no-op.  Under the default config the output alphabet is ``[a-z0-9 ]``.
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Iterable

from .corpus import Document, LabeledCorpus

logger = logging.getLogger(__name__)

__all__ = [
    "PreprocessConfig",
    "EMOTICONS",
    "load_wordlist",
    "segment_hashtag",
    "normalize",
    "normalize_corpus",
    "tokenize",
    "extract_ngrams",
    "filter_short",
]

HASHTAG_STRIP = "strip_sign"
HASHTAG_SEGMENT = "segment_with_wordlist"

# Common ASCII emoticons, matched against whole lowercased tokens.  Every
# entry contains a character outside [a-z0-9]; a letters-only entry (e.g.
# "xd") would reappear after punctuation stripping and break idempotence.
EMOTICONS: frozenset[str] = frozenset(
    {
        ":)", ":-)", ":(", ":-(", ":d", ":-d", ":p", ":-p", ";)", ";-)",
        ":o", ":-o", ":/", ":-/", ":\\", ":|", ":-|", ":*", ":-*", "=)",
        "=(", "=d", "=p", "<3", "</3", ":'(", ":')", ";p", ";d", "^_^",
        "-_-", "o.o", "t_t", "x_x", ">:(", ">:)", ":3", ";3",
    }
)

_URL_PREFIXES = ("http://", "https://", "www.")
_ELONGATION = re.compile(r"([a-zA-Z])\1{2,}")
_NON_ALNUM = re.compile(r"[^a-zA-Z0-9]+")


@dataclass(frozen=True)
class PreprocessConfig:
    """Switches for the normalization rules, in their fixed order.

    ``hashtag_mode`` is ``"strip_sign"`` (keep the body unsplit) or
    ``"segment_with_wordlist"`` (greedy longest-match split of the body
    against ``wordlist``; unsegmentable bodies fall back to the unsplit
    body).  ``min_tokens`` is the threshold used by :func:`filter_short`.
    """

    lowercase: bool = True
    strip_mentions: bool = True
    strip_urls: bool = True
    strip_emoticons: bool = True
    collapse_elongation: bool = True
    hashtag_mode: str = HASHTAG_STRIP
    strip_punctuation: bool = True
    min_tokens: int = 2
    wordlist: frozenset[str] | None = None

    def __post_init__(self) -> None:
        if self.hashtag_mode not in (HASHTAG_STRIP, HASHTAG_SEGMENT):
            raise ValueError(
                f"hashtag_mode must be {HASHTAG_STRIP!r} or {HASHTAG_SEGMENT!r}, "
                f"got {self.hashtag_mode!r}"
            )
        if self.hashtag_mode == HASHTAG_SEGMENT and not self.wordlist:
            raise ValueError("segment_with_wordlist requires a non-empty wordlist")
        if self.min_tokens < 0:
            raise ValueError(f"min_tokens must be >= 0, got {self.min_tokens}")


def load_wordlist(path: str) -> frozenset[str]:
    """Read a wordlist file (one lowercase word per line) for hashtag segmentation."""
    words = set()
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            word = line.strip().lower()
            if word:
                words.add(word)
    if not words:
        raise ValueError(f"wordlist {path!r} is empty")
    return frozenset(words)


def segment_hashtag(body: str, wordlist: frozenset[str]) -> list[str] | None:
    """Greedy longest-match segmentation of a hashtag body.

    At each position the longest wordlist entry matching a prefix of the
    remainder is taken.  Returns None when the body cannot be fully covered
    (greedy matching does not backtrack).
    """
    if not body:
        return None
    max_len = max(len(w) for w in wordlist)
    pieces: list[str] = []
    i = 0
    while i < len(body):
        for length in range(min(max_len, len(body) - i), 0, -1):
            piece = body[i : i + length]
            if piece in wordlist:
                pieces.append(piece)
                i += length
                break
        else:
            return None
    return pieces


def normalize(raw: str, config: PreprocessConfig = PreprocessConfig()) -> str:
    """Apply the normalization rules to one string.

    Idempotent: ``normalize(normalize(s)) == normalize(s)`` for any input.
    With the default config, output characters are limited to ``[a-z0-9 ]``.
    """
    text = raw.lower() if config.lowercase else raw
    out: list[str] = []
    for token in text.split():
        folded = token.lower()
        if config.strip_mentions and token.startswith("@"):
            continue
        if config.strip_urls and folded.startswith(_URL_PREFIXES):
            continue
        if config.strip_emoticons and folded in EMOTICONS:
            continue
        if config.collapse_elongation:
            token = _ELONGATION.sub(r"\1", token)
        if token.startswith("#"):
            body = token.lstrip("#")
            if config.hashtag_mode == HASHTAG_SEGMENT:
                pieces = segment_hashtag(body, config.wordlist) or [body]
            else:
                pieces = [body]
        else:
            pieces = [token]
        for piece in pieces:
            if config.strip_punctuation:
                piece = _NON_ALNUM.sub("", piece)
                if config.collapse_elongation:
                    # Stripping can fuse letters that a symbol kept apart
                    # (e.g. "aa-a" -> "aaa"); collapse again so a second
                    # normalization pass finds no fresh runs.
                    piece = _ELONGATION.sub(r"\1", piece)
            if piece:
                out.append(piece)
    return " ".join(out)


def normalize_corpus(
    corpus: LabeledCorpus, config: PreprocessConfig = PreprocessConfig()
) -> LabeledCorpus:
    """Fill every document's ``text`` with the normalized form of ``raw_text``."""
    docs = [
        Document(
            id=doc.id,
            raw_text=doc.raw_text,
            text=normalize(doc.raw_text, config),
            label=doc.label,
            weight=doc.weight,
            group=doc.group,
            posteriors=doc.posteriors,
        )
        for doc in corpus
    ]
    return corpus.with_documents(docs)


def tokenize(text: str) -> list[str]:
    """Whitespace tokenization of (normally already normalized) text."""
    return text.split()


def extract_ngrams(tokens: Iterable[str], n: int) -> list[tuple[str, ...]]:
    """Contiguous n-grams in order; empty when fewer than n tokens.

    A sequence of T >= n tokens yields exactly T - n + 1 n-grams.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    toks = list(tokens)
    return [tuple(toks[i : i + n]) for i in range(len(toks) - n + 1)]


def filter_short(
    corpus: LabeledCorpus, min_tokens: int = 2
) -> tuple[LabeledCorpus, int]:
    """Drop documents whose normalized text has fewer than ``min_tokens`` tokens.

    Returns the filtered corpus and the number of dropped documents.
    ``min_tokens=0`` keeps everything.
    """
    kept = [doc for doc in corpus if len(tokenize(doc.text)) >= min_tokens]
    dropped = len(corpus) - len(kept)
    if dropped:
        logger.info("filter_short: dropped %d documents below %d tokens", dropped, min_tokens)
    return corpus.with_documents(kept), dropped
