"""The fixed 71-symbol character dictionary.

The dictionary covers lowercase ASCII text: 26 letters, 10 digits, all 32
ASCII punctuation marks, then newline, tab, and space. Characters outside
the dictionary are not given an "unknown" slot; they encode to an all-zero
row. The ordering is part of the contract: serialized alphabets must
reload to the identical ordering, and 'a' is index 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import DataError

ALPHABET_SIZE = 71

_LETTERS = "abcdefghijklmnopqrstuvwxyz"
_DIGITS = "0123456789"
_PUNCTUATION = "-,;.!?:'\"/\\|_@#$%^&*~`+=<>()[]{}"
_WHITESPACE = "\n\t "

_ESCAPES = {"\n": "\\n", "\t": "\\t", "\\": "\\\\"}
_UNESCAPES = {v: k for k, v in _ESCAPES.items()}


@dataclass(frozen=True)
class Alphabet:
    """Ordered character dictionary with O(1) symbol -> index lookup."""

    symbols: tuple[str, ...]
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.symbols) != ALPHABET_SIZE:
            raise DataError(
                f"alphabet must have exactly {ALPHABET_SIZE} symbols, "
                f"got {len(self.symbols)}"
            )
        if len(set(self.symbols)) != len(self.symbols):
            raise DataError("alphabet symbols must be distinct")
        object.__setattr__(
            self, "_index", {ch: i for i, ch in enumerate(self.symbols)}
        )

    def __len__(self) -> int:
        return len(self.symbols)

    def index_of(self, ch: str) -> int | None:
        """Position of ch, or None when ch is not in the dictionary."""
        return self._index.get(ch)

    def __contains__(self, ch: str) -> bool:
        return ch in self._index


def build_alphabet() -> Alphabet:
    """The canonical 71-symbol alphabet: letters, digits, punctuation,
    newline, tab, space, in that order."""
    return Alphabet(tuple(_LETTERS + _DIGITS + _PUNCTUATION + _WHITESPACE))


def save_alphabet(alphabet: Alphabet, path) -> None:
    """Write one symbol per line; newline/tab/backslash are escaped."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ch in alphabet.symbols:
            fh.write(_ESCAPES.get(ch, ch) + "\n")


def load_alphabet(path) -> Alphabet:
    with open(path, "r", encoding="utf-8", newline="\n") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines = lines[:-1]
    symbols = []
    for i, line in enumerate(lines):
        if line in _UNESCAPES:
            symbols.append(_UNESCAPES[line])
        elif len(line) == 1:
            symbols.append(line)
        else:
            raise DataError(f"{path}: line {i + 1} is not a single symbol: {line!r}")
    return Alphabet(tuple(symbols))
