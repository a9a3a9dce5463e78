"""Text -> fixed-shape one-hot tensors.

A document is split into sentences, each sentence into characters, and
each character becomes a one-hot row over the 71-symbol alphabet. Both
axes are bounded: sentences longer than max_chars and documents longer
than max_sentences keep their head (openings carry the strongest
spam/phishing signal) and the tail is dropped. Missing positions and
out-of-alphabet characters are all-zero rows.

Encoding is total: it never fails, whatever unicode the input contains.

Internally documents are also kept as compact int16 index grids (-1 for
"no symbol") and expanded to one-hot float32 per batch; `one_hot` is the
single place that expansion happens, so grid and dense forms cannot
drift apart.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .alphabet import ALPHABET_SIZE, Alphabet
from .errors import DataError

# a sentence is text up to and including a terminator run, or a trailing stub
_SENTENCE_RE = re.compile(r"[^.!?\n]*[.!?\n]+|[^.!?\n]+$")
# a segment counts as empty unless something besides terminators/space remains
_CONTENT_RE = re.compile(r"[^.!?\s]")


@dataclass(frozen=True)
class EncodingConfig:
    max_chars: int = 256
    max_sentences: int = 30
    lowercase: bool = True

    def __post_init__(self):
        if self.max_chars < 1:
            raise DataError(f"max_chars must be >= 1, got {self.max_chars}")
        if self.max_sentences < 1:
            raise DataError(f"max_sentences must be >= 1, got {self.max_sentences}")


def split_sentences(text: str, cfg: EncodingConfig) -> list[str]:
    """Split on '.', '!', '?', and newline, keeping the delimiter with its
    sentence. Whitespace-only segments are dropped; at most
    cfg.max_sentences sentences are returned (head truncation)."""
    out = []
    for m in _SENTENCE_RE.finditer(text):
        seg = m.group(0)
        if _CONTENT_RE.search(seg):
            out.append(seg.lstrip())
            if len(out) == cfg.max_sentences:
                break
    return out


def sentence_indices(s: str, alphabet: Alphabet, cfg: EncodingConfig) -> np.ndarray:
    """Compact form of one sentence: int16[max_chars], -1 where the row
    is all-zero (padding or out-of-alphabet character)."""
    if cfg.lowercase:
        s = s.lower()
    s = s[: cfg.max_chars]
    idx = np.full(cfg.max_chars, -1, dtype=np.int16)
    for t, ch in enumerate(s):
        pos = alphabet.index_of(ch)
        if pos is not None:
            idx[t] = pos
    return idx


def document_indices(text: str, alphabet: Alphabet, cfg: EncodingConfig) -> np.ndarray:
    """Compact form of a document: int16[max_sentences, max_chars]."""
    grid = np.full((cfg.max_sentences, cfg.max_chars), -1, dtype=np.int16)
    for i, sent in enumerate(split_sentences(text, cfg)):
        grid[i] = sentence_indices(sent, alphabet, cfg)
    return grid


def one_hot(indices: np.ndarray, dtype=np.float32) -> np.ndarray:
    """Expand index grids to one-hot: [..., T] int -> [..., T, 71] float."""
    flat = indices.reshape(-1).astype(np.int64)
    out = np.zeros((flat.size, ALPHABET_SIZE), dtype=dtype)
    valid = flat >= 0
    out[np.nonzero(valid)[0], flat[valid]] = 1
    return out.reshape(indices.shape + (ALPHABET_SIZE,))


def encode_sentence(s: str, alphabet: Alphabet, cfg: EncodingConfig) -> np.ndarray:
    """One-hot grid [max_chars, 71] for a single sentence."""
    return one_hot(sentence_indices(s, alphabet, cfg))


def encode_document(text: str, alphabet: Alphabet, cfg: EncodingConfig) -> np.ndarray:
    """One-hot grid [max_sentences, max_chars, 71] for a whole document,
    tail-padded with all-zero sentences."""
    return one_hot(document_indices(text, alphabet, cfg))
