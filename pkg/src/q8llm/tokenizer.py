"""Byte-pair tokenizer over the binary vocab/score format.

Binary layout (little-endian): int32 max_token_length, then vocab_size
records of { float32 score; int32 length; `length` piece bytes }.  Token ids
0/1/2 are reserved for <unk>/BOS/EOS and ids 3..258 are the raw-byte
fallback pieces "<0x00>".."<0xFF>", so any byte string can be encoded.
"""
from __future__ import annotations

import re
import struct
from dataclasses import dataclass, field

BOS_ID = 1
EOS_ID = 2
BYTE_PIECE_OFFSET = 3  # raw byte b encodes as token b + 3

_BYTE_PIECE_RE = re.compile(rb"<0x([0-9A-Fa-f]{2})>\Z")


class TokenizerFormatError(ValueError):
    """Malformed tokenizer binary."""


@dataclass
class Tokenizer:
    """Immutable after construction; safe for concurrent use."""

    pieces: list[bytes]
    scores: list[float]
    max_token_length: int
    _piece_to_id: dict[bytes, int] = field(repr=False, default_factory=dict)

    def __post_init__(self):
        if len(self.pieces) != len(self.scores):
            raise TokenizerFormatError("pieces and scores lengths differ")
        if not self._piece_to_id:
            for i, piece in enumerate(self.pieces):
                self._piece_to_id.setdefault(piece, i)

    @classmethod
    def from_pieces(cls, pieces: list[bytes], scores: list[float]) -> "Tokenizer":
        max_len = max((len(p) for p in pieces), default=0)
        return cls(list(pieces), [float(s) for s in scores], max_len)

    @property
    def vocab_size(self) -> int:
        return len(self.pieces)

    def piece_id(self, piece: bytes) -> int | None:
        return self._piece_to_id.get(piece)

    def encode(self, text: str | bytes, add_bos: bool = False,
               add_eos: bool = False) -> list[int]:
        """Greedy BPE: split into codepoints (byte fallback), then repeatedly
        merge the adjacent pair whose concatenation has the highest score.

        Non-empty input gets the reference dummy-prefix space token when the
        vocabulary contains a " " piece; decode strips it again after BOS.
        """
        data = text.encode("utf-8") if isinstance(text, str) else bytes(text)
        ids: list[int] = []
        if add_bos:
            ids.append(BOS_ID)
        if data:
            space = self._piece_to_id.get(b" ")
            if space is not None:
                ids.append(space)
            ids.extend(self._initial_ids(data))
            self._merge(ids)
        if add_eos:
            ids.append(EOS_ID)
        return ids

    def _initial_ids(self, data: bytes) -> list[int]:
        """One id per UTF-8 codepoint when the piece exists, else per byte."""
        ids: list[int] = []
        i = 0
        while i < len(data):
            j = i + 1
            if data[i] & 0xC0 != 0x80:  # lead byte: absorb continuations
                while j < len(data) and j - i < 4 and data[j] & 0xC0 == 0x80:
                    j += 1
            chunk = data[i:j]
            tid = self._piece_to_id.get(chunk)
            if tid is not None:
                ids.append(tid)
            else:
                ids.extend(b + BYTE_PIECE_OFFSET for b in chunk)
            i = j
        return ids

    def _merge(self, ids: list[int]) -> None:
        while True:
            best_score = -float("inf")
            best_id = -1
            best_at = -1
            for i in range(len(ids) - 1):
                merged = self.pieces[ids[i]] + self.pieces[ids[i + 1]]
                tid = self._piece_to_id.get(merged)
                if tid is not None and self.scores[tid] > best_score:
                    best_score = self.scores[tid]
                    best_id = tid
                    best_at = i
            if best_at < 0:
                return
            ids[best_at] = best_id
            del ids[best_at + 1]

    def decode(self, prev_token: int, token: int) -> bytes:
        """Return the token's piece bytes.

        Strips the leading space of the piece right after BOS (undoing the
        encode-side dummy prefix) and maps "<0xNN>" pieces to the raw byte.
        """
        if not 0 <= token < self.vocab_size:
            raise IndexError(f"token {token} outside vocab of {self.vocab_size}")
        piece = self.pieces[token]
        if prev_token == BOS_ID and piece.startswith(b" "):
            piece = piece[1:]
        m = _BYTE_PIECE_RE.match(piece)
        if m:
            return bytes([int(m.group(1), 16)])
        return piece

    def decode_ids(self, ids: list[int], prev_token: int = BOS_ID) -> bytes:
        out = bytearray()
        for tid in ids:
            if tid in (BOS_ID, EOS_ID):
                prev_token = tid
                continue
            out += self.decode(prev_token, tid)
            prev_token = tid
        return bytes(out)


def load_tokenizer(data: bytes, vocab_size: int) -> Tokenizer:
    """Parse the binary vocab format; strict about truncation and lengths."""
    if len(data) < 4:
        raise TokenizerFormatError("tokenizer file too short for header")
    (max_token_length,) = struct.unpack_from("<i", data, 0)
    if max_token_length < 0:
        raise TokenizerFormatError(f"negative max_token_length {max_token_length}")
    off = 4
    pieces: list[bytes] = []
    scores: list[float] = []
    for idx in range(vocab_size):
        if off + 8 > len(data):
            raise TokenizerFormatError(f"truncated at token {idx}")
        score, length = struct.unpack_from("<fi", data, off)
        off += 8
        if length < 0:
            raise TokenizerFormatError(f"token {idx} has negative length")
        if length > max_token_length:
            raise TokenizerFormatError(
                f"token {idx} length {length} exceeds max_token_length "
                f"{max_token_length}"
            )
        if off + length > len(data):
            raise TokenizerFormatError(f"truncated piece for token {idx}")
        pieces.append(data[off:off + length])
        scores.append(float(score))
        off += length
    if off != len(data):
        raise TokenizerFormatError(f"{len(data) - off} trailing bytes after vocab")
    return Tokenizer(pieces, scores, max_token_length)


def write_tokenizer(tok: Tokenizer) -> bytes:
    out = bytearray(struct.pack("<i", tok.max_token_length))
    for piece, score in zip(tok.pieces, tok.scores):
        out += struct.pack("<fi", score, len(piece))
        out += piece
    return bytes(out)


def byte_level_pieces() -> tuple[list[bytes], list[float]]:
    """Minimal base vocabulary: specials, the 256 byte-fallback pieces, and
    one text piece per printable ASCII character so merges have atoms."""
    pieces = [b"<unk>", b"\n<s>\n", b"\n</s>\n"]
    pieces += [b"<0x%02X>" % b for b in range(256)]
    pieces += [bytes([c]) for c in range(0x20, 0x7F)]
    scores = [0.0] * len(pieces)
    return pieces, scores
