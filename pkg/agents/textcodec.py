"""
Whitespace tokenizer and vocabulary shared by the Guide and Explorer encoders.
"""

import string
from pathlib import Path
from typing import Dict, Iterable, List, Sequence

PAD_ID = 0
UNK_ID = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"


def tokenize(text: str) -> List[str]:
    """Lowercase, split on whitespace, strip surrounding ASCII punctuation"""
    tokens = []
    for raw in text.lower().split():
        token = raw.strip(string.punctuation)
        if token:
            tokens.append(token)
    return tokens


class Vocabulary:
    """Immutable token <-> id association; PAD=0 and UNK=1 are reserved"""

    def __init__(self, tokens: Sequence[str]):
        self._stoi: Dict[str, int] = {PAD_TOKEN: PAD_ID, UNK_TOKEN: UNK_ID}
        for token in tokens:
            if token in (PAD_TOKEN, UNK_TOKEN):
                raise ValueError(f"'{token}' is reserved")
            if token not in self._stoi:
                self._stoi[token] = len(self._stoi)
        self._itos: List[str] = [None] * len(self._stoi)
        for token, index in self._stoi.items():
            self._itos[index] = token

    def __len__(self) -> int:
        return len(self._stoi)

    def __contains__(self, token: str) -> bool:
        return token in self._stoi

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocabulary) and self._itos == other._itos

    def id(self, token: str) -> int:
        return self._stoi.get(token, UNK_ID)

    def token(self, index: int) -> str:
        if not 0 <= index < len(self._itos):
            raise ValueError(f"id {index} is outside the vocabulary (size {len(self)})")
        return self._itos[index]

    @property
    def tokens(self) -> List[str]:
        """Non-reserved tokens in id order"""
        return self._itos[2:]

    def save(self, path: str) -> None:
        """Write one `<token>\\t<id>` line per entry, reserved ids included"""
        lines = [f"{token}\t{index}" for index, token in enumerate(self._itos)]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str) -> "Vocabulary":
        entries = []
        for number, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
            if not line:
                continue
            token, _, index = line.rpartition("\t")
            if not token or not index.isdigit():
                raise ValueError(f"{path}:{number}: expected '<token>\\t<id>'")
            entries.append((int(index), token))
        entries.sort()
        if [index for index, _ in entries] != list(range(len(entries))):
            raise ValueError(f"{path}: ids must be contiguous from 0")
        if entries[:2] != [(PAD_ID, PAD_TOKEN), (UNK_ID, UNK_TOKEN)]:
            raise ValueError(f"{path}: reserved entries must be {PAD_TOKEN}=0 and {UNK_TOKEN}=1")
        return cls([token for _, token in entries[2:]])


def build_vocab(corpus: Iterable[str]) -> Vocabulary:
    """
    Assign ids to every token in corpus order.

    Raises:
        ValueError: If the corpus holds no tokens
    """
    tokens = [token for text in corpus for token in tokenize(text)]
    if not tokens:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    return Vocabulary(tokens)


def encode(text: str, vocab: Vocabulary, max_len: int) -> List[int]:
    """Token ids truncated to `max_len`; unknown tokens map to UNK, no padding"""
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    return [vocab.id(token) for token in tokenize(text)[:max_len]]


def decode(ids: Iterable[int], vocab: Vocabulary) -> List[str]:
    return [vocab.token(index) for index in ids]
