"""Byte-level BPE tokenizer loaded from a GPT-2 style ``vocab.json`` / ``merges.txt`` pair.

Whisper's text tokenizer is of this family, so loading its vocabulary gives
token counts with parity to the real model.
"""

from __future__ import annotations

import json
from functools import lru_cache
from pathlib import Path

import regex

_PRETOKENIZE = regex.compile(
    r"""'s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+"""
)


@lru_cache(maxsize=None)
def bytes_to_unicode() -> dict[int, str]:
    """The reversible byte -> printable character table used by GPT-2."""
    bs = (
        list(range(ord("!"), ord("~") + 1))
        + list(range(ord("¡"), ord("¬") + 1))
        + list(range(ord("®"), ord("ÿ") + 1))
    )
    cs = bs[:]
    n = 0
    for b in range(256):
        if b not in bs:
            bs.append(b)
            cs.append(256 + n)
            n += 1
    return dict(zip(bs, map(chr, cs)))


class BPETokenizer:
    def __init__(self, vocab: dict[str, int], merges: list[tuple[str, str]]):
        self.vocab = vocab
        self.ranks = {pair: i for i, pair in enumerate(merges)}
        self.byte_encoder = bytes_to_unicode()
        self.byte_decoder = {v: k for k, v in self.byte_encoder.items()}
        self._cache: dict[str, tuple[str, ...]] = {}

    @classmethod
    def from_files(cls, vocab_path: str | Path, merges_path: str | Path) -> "BPETokenizer":
        with open(vocab_path, encoding="utf-8") as f:
            vocab = json.load(f)
        merges = []
        with open(merges_path, encoding="utf-8") as f:
            for line in f:
                line = line.rstrip("\n")
                if not line or line.startswith("#version"):
                    continue
                a, b = line.split()
                merges.append((a, b))
        return cls(vocab, merges)

    def _bpe(self, piece: str) -> tuple[str, ...]:
        cached = self._cache.get(piece)
        if cached is not None:
            return cached
        word = list(piece)
        while len(word) > 1:
            rank, i = min(
                (self.ranks.get(pair, float("inf")), i) for i, pair in enumerate(zip(word, word[1:]))
            )
            if rank == float("inf"):
                break
            a, b = word[i], word[i + 1]
            merged = []
            i = 0
            while i < len(word):
                if i < len(word) - 1 and word[i] == a and word[i + 1] == b:
                    merged.append(a + b)
                    i += 2
                else:
                    merged.append(word[i])
                    i += 1
            word = merged
        result = tuple(word)
        self._cache[piece] = result
        return result

    def tokenize(self, text: str) -> list[str]:
        tokens: list[str] = []
        for piece in _PRETOKENIZE.findall(text):
            mapped = "".join(self.byte_encoder[b] for b in piece.encode("utf-8"))
            tokens.extend(self._bpe(mapped))
        return tokens

    def encode(self, text: str) -> list[int]:
        unk = self.vocab.get("<|endoftext|>", 0)
        return [self.vocab.get(t, unk) for t in self.tokenize(text)]

    def detokenize(self, tokens: list[str]) -> str:
        data = bytes(self.byte_decoder[c] for c in "".join(tokens))
        # a suffix can start inside a multi-byte character
        while data and (data[0] & 0xC0) == 0x80:
            data = data[1:]
        return data.decode("utf-8", errors="replace")

    def count_tokens(self, text: str) -> int:
        return len(self.tokenize(text))

    def truncate_to_last_n_tokens(self, text: str, n: int) -> str:
        if n <= 0:
            return ""
        tokens = self.tokenize(text)
        keep = min(n, len(tokens))
        # re-tokenising a suffix can merge differently; shrink until it fits
        while keep > 0:
            out = self.detokenize(tokens[len(tokens) - keep :])
            if self.count_tokens(out) <= n:
                return out
            keep -= 1
        return ""
