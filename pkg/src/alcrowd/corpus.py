"""Tweet-like text ingestion, normalization, and sparse n-gram features."""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Optional, Sequence

from ._io import DatasetError, atomic_write, iter_jsonl

HASHTAG_TOKEN = "<hashtag>"
USER_TOKEN = "<user>"
URL_TOKEN = "<url>"
EMOJI_TOKEN = "<emoji>"
PLACEHOLDER_TOKENS = (HASHTAG_TOKEN, USER_TOKEN, URL_TOKEN, EMOJI_TOKEN)

_URL_RE = re.compile(r"https?://\S+")
_MENTION_RE = re.compile(r"@\w+")
_HASHTAG_RE = re.compile(r"#(\w+)")
# Emoji-presentation blocks: Miscellaneous Symbols and Pictographs, Emoticons,
# Transport and Map, Supplemental Symbols and Pictographs, variation selectors.
_EMOJI_RE = re.compile(
    "["
    "\U0001F300-\U0001F5FF"
    "\U0001F600-\U0001F64F"
    "\U0001F680-\U0001F6FF"
    "\U0001F900-\U0001F9FF"
    "︀-️"
    "]"
)
_WS_RE = re.compile(r"\s+")
# Placeholders survive tokenization intact; everything else splits into word
# runs and single punctuation characters.
_TOKEN_RE = re.compile(r"<(?:hashtag|user|url|emoji)>|\w+|[^\w\s]")


@dataclass(frozen=True)
class Document:
    """One text record. `label`, when present, is 1 for a positive event."""

    id: str
    raw_text: str
    norm_text: str = ""
    label: Optional[int] = None
    lang: Optional[str] = None
    source: Optional[str] = None

    def __post_init__(self):
        if self.label is not None and self.label not in (0, 1):
            raise ValueError(f"document {self.id!r}: label must be 0 or 1, got {self.label!r}")


def normalize_tweet(raw: str) -> str:
    """Apply the tweet normalization rules and return cleaned text.

    Hashtags become ``<hashtag> body``, mentions ``<user>``, URLs ``<url>``,
    emoji codepoints ``<emoji>``; text is lowercased and whitespace collapsed.
    Idempotent, so already-normalized text passes through unchanged.
    """
    text = raw.lower()
    text = _URL_RE.sub(f" {URL_TOKEN} ", text)
    text = _MENTION_RE.sub(f" {USER_TOKEN} ", text)
    text = _HASHTAG_RE.sub(lambda m: f" {HASHTAG_TOKEN} {m.group(1)} ", text)
    # stray '#' with no body is decoration, not a hashtag
    text = text.replace("#", " ")
    text = _EMOJI_RE.sub(f" {EMOJI_TOKEN} ", text)
    return _WS_RE.sub(" ", text).strip()


def normalize_documents(docs: Iterable[Document]) -> list[Document]:
    """Fill `norm_text` on every document."""
    return [replace(d, norm_text=normalize_tweet(d.raw_text)) for d in docs]


def dedupe_and_filter(docs: Sequence[Document]) -> list[Document]:
    """Drop non-English records, then keep the first record per norm_text.

    Records without a language tag are trusted as English. Input order is
    preserved.
    """
    seen: set[str] = set()
    kept: list[Document] = []
    for doc in docs:
        if doc.lang is not None and doc.lang != "en":
            continue
        if doc.norm_text in seen:
            continue
        seen.add(doc.norm_text)
        kept.append(doc)
    return kept


def tokenize(norm_text: str) -> list[str]:
    """Split normalized text into tokens.

    Whitespace separates tokens, placeholder tokens stay intact, and each
    punctuation character becomes its own token.
    """
    return _TOKEN_RE.findall(norm_text)


def ngrams(tokens: Sequence[str], ngram_min: int, ngram_max: int) -> list[str]:
    """All space-joined n-grams of order ngram_min..ngram_max, in text order."""
    if ngram_min < 1 or ngram_max < ngram_min:
        raise ValueError(f"bad n-gram range {ngram_min}..{ngram_max}")
    out: list[str] = []
    for n in range(ngram_min, ngram_max + 1):
        for i in range(len(tokens) - n + 1):
            out.append(" ".join(tokens[i : i + n]))
    return out


@dataclass(frozen=True)
class Vocabulary:
    """Fitted n-gram -> column index map with dense, lexicographic indices."""

    entries: Mapping[str, int]
    ngram_min: int
    ngram_max: int
    min_df: int

    def __post_init__(self):
        if self.ngram_min < 1 or self.ngram_max < self.ngram_min:
            raise ValueError(f"bad n-gram range {self.ngram_min}..{self.ngram_max}")
        if self.min_df < 1:
            raise ValueError("min_df must be >= 1")
        if sorted(self.entries.values()) != list(range(len(self.entries))):
            raise ValueError("vocabulary indices must be dense 0..len-1")

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, gram: str) -> bool:
        return gram in self.entries


@dataclass(frozen=True)
class SparseVector:
    """Sorted (column, weight) pairs; zero entries omitted."""

    pairs: tuple[tuple[int, float], ...]

    def __post_init__(self):
        last = -1
        for idx, weight in self.pairs:
            if idx <= last:
                raise ValueError("indices must be strictly increasing")
            if weight <= 0:
                raise ValueError("weights must be positive")
            last = idx

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(i for i, _ in self.pairs)

    def max_index(self) -> int:
        return self.pairs[-1][0] if self.pairs else -1


def build_vocab(
    docs: Sequence[Document],
    ngram_min: int = 1,
    ngram_max: int = 2,
    min_df: int = 2,
) -> Vocabulary:
    """Collect n-grams with document frequency >= min_df over normalized docs."""
    if not docs:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    df: Counter[str] = Counter()
    for doc in docs:
        toks = tokenize(doc.norm_text)
        df.update(set(ngrams(toks, ngram_min, ngram_max)))
    kept = sorted(g for g, c in df.items() if c >= min_df)
    entries = {g: i for i, g in enumerate(kept)}
    return Vocabulary(entries=entries, ngram_min=ngram_min, ngram_max=ngram_max, min_df=min_df)


def vectorize(doc: Document, vocab: Vocabulary) -> SparseVector:
    """Count vocabulary n-grams in the document; unknown n-grams are ignored."""
    counts: Counter[int] = Counter()
    for gram in ngrams(tokenize(doc.norm_text), vocab.ngram_min, vocab.ngram_max):
        col = vocab.entries.get(gram)
        if col is not None:
            counts[col] += 1
    return SparseVector(pairs=tuple((i, float(counts[i])) for i in sorted(counts)))


def read_documents(path) -> list[Document]:
    """Read the JSON-lines dataset schema; malformed lines raise DatasetError."""
    docs: list[Document] = []
    seen_ids: set[str] = set()
    for lineno, obj in iter_jsonl(path):
        doc_id = obj.get("id")
        text = obj.get("text")
        if not isinstance(doc_id, str) or not doc_id:
            raise DatasetError(path, lineno, "missing or non-string 'id'")
        if not isinstance(text, str):
            raise DatasetError(path, lineno, "missing or non-string 'text'")
        if doc_id in seen_ids:
            raise DatasetError(path, lineno, f"duplicate document id {doc_id!r}")
        seen_ids.add(doc_id)
        label = obj.get("label")
        if label is not None and label not in (0, 1):
            raise DatasetError(path, lineno, f"label must be 0 or 1, got {label!r}")
        lang = obj.get("lang")
        if lang is not None and not isinstance(lang, str):
            raise DatasetError(path, lineno, "'lang' must be a string")
        source = obj.get("source")
        if source is not None and not isinstance(source, str):
            raise DatasetError(path, lineno, "'source' must be a string")
        docs.append(
            Document(id=doc_id, raw_text=text, label=label, lang=lang, source=source)
        )
    return docs


def write_documents(path, docs: Iterable[Document]) -> int:
    """Write documents in the dataset schema (normalized text when present)."""
    n = 0
    with atomic_write(path) as handle:
        for doc in docs:
            record: dict = {"id": doc.id, "text": doc.norm_text or doc.raw_text}
            if doc.label is not None:
                record["label"] = doc.label
            if doc.lang is not None:
                record["lang"] = doc.lang
            if doc.source is not None:
                record["source"] = doc.source
            handle.write(json.dumps(record, ensure_ascii=False, sort_keys=True))
            handle.write("\n")
            n += 1
    return n
