"""Per-hand grasp quantization and the special-token stream format.

A grasp vector is ``[tx, ty, tz, rx, ry, rz, theta_0 .. theta_{d-1}]``.
Each dimension has its own bounds, computed over a hand's whole corpus,
and is split into ``N`` equal bins.
"""
from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .kinematics import GraspPose

DEGENERATE_HALF_WIDTH = 1e-6
VOCAB_BINS = 512
SCALE_RANGE = (0.01, 1.0)
WRIST_DIMS = ("tx", "ty", "tz", "rx", "ry", "rz")
GRASP_OPEN = "<grasp>"
GRASP_CLOSE = "</grasp>"


class SpecMismatchError(ValueError):
    pass


def dim_names(dof: int) -> tuple[str, ...]:
    return WRIST_DIMS + tuple(f"theta_{i}" for i in range(dof))


def corpus_hash(vectors: np.ndarray) -> str:
    """Order-independent digest of a pose corpus."""
    rows = np.asarray(vectors, dtype=np.float64)
    rows = rows[np.lexsort(rows.T[::-1])] if len(rows) else rows
    return hashlib.sha256(np.ascontiguousarray(rows).tobytes()).hexdigest()


@dataclass(frozen=True, eq=False)
class BinSpec:
    hand: str
    N: int
    dims: tuple[str, ...]
    L: np.ndarray
    U: np.ndarray
    corpus_size: int = 0
    corpus_hash: str = ""

    def __post_init__(self):
        L = np.asarray(self.L, dtype=np.float64)
        U = np.asarray(self.U, dtype=np.float64)
        if L.shape != U.shape or L.shape != (len(self.dims),):
            raise ValueError("bounds must match the dimension list")
        if not np.all(L < U):
            raise ValueError("every lower bound must be below its upper bound")
        if self.N < 1:
            raise ValueError("N must be >= 1")
        L.setflags(write=False)
        U.setflags(write=False)
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "U", U)

    @property
    def W(self) -> np.ndarray:
        return (self.U - self.L) / self.N

    @property
    def ndim(self) -> int:
        return len(self.dims)

    def to_dict(self) -> dict:
        return {"hand": self.hand, "N": self.N, "dims": list(self.dims),
                "L": self.L.tolist(), "U": self.U.tolist(), "W": self.W.tolist(),
                "corpus_size": self.corpus_size, "corpus_hash": self.corpus_hash}

    @classmethod
    def from_dict(cls, doc: dict) -> "BinSpec":
        return cls(doc["hand"], int(doc["N"]), tuple(doc["dims"]), np.asarray(doc["L"]),
                   np.asarray(doc["U"]), int(doc.get("corpus_size", 0)), doc.get("corpus_hash", ""))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "BinSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


def check_spec_hash(spec: BinSpec, expected_hash: str | None, force: bool = False) -> None:
    if expected_hash and expected_hash != spec.corpus_hash and not force:
        raise SpecMismatchError(
            f"{spec.hand}: bin spec hash {spec.corpus_hash[:12]} differs from "
            f"encode-time hash {expected_hash[:12]} (use --force to decode anyway)")


def compute_bounds(poses: Sequence[GraspPose], N: int) -> BinSpec:
    """Per-dimension min/max over the corpus; constant dimensions widen by 1e-6."""
    if not poses:
        raise ValueError("empty grasp corpus")
    hands = {p.hand for p in poses}
    if len(hands) != 1:
        raise ValueError(f"corpus mixes hands: {sorted(hands)}")
    X = np.stack([p.as_vector() for p in poses])
    L = X.min(axis=0)
    U = X.max(axis=0)
    flat = ~(L < U)
    L = np.where(flat, L - DEGENERATE_HALF_WIDTH, L)
    U = np.where(flat, U + DEGENERATE_HALF_WIDTH, U)
    return BinSpec(poses[0].hand, N, dim_names(X.shape[1] - 6), L, U, len(X), corpus_hash(X))


@dataclass(frozen=True, eq=False)
class BinVector:
    hand: str
    bins: np.ndarray
    out_of_range: int = 0

    def __post_init__(self):
        object.__setattr__(self, "bins", np.asarray(self.bins, dtype=np.int64).reshape(-1))

    def __eq__(self, other):
        return (isinstance(other, BinVector) and self.hand == other.hand
                and np.array_equal(self.bins, other.bins))

    __hash__ = None


def discretize_batch(X, spec: BinSpec) -> tuple[np.ndarray, np.ndarray]:
    """Bin indices for an ``(n, ndim)`` array of grasp vectors.

    Returns the clamped bins and, per row, how many values fell outside
    ``[L, U]``. Bin edges are resolved in exact arithmetic, so every
    in-range value lands in the bin whose exact interval contains it.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != spec.ndim:
        raise ValueError(f"{spec.hand} expects {spec.ndim} values per grasp, got shape {X.shape}")
    ratio = (X - spec.L) / spec.W
    raw = np.floor(ratio)
    # near a bin edge the float division can round across it; settle those exactly
    for r, i in zip(*np.nonzero(np.abs(ratio - np.round(ratio)) < 1e-6)):
        span = Fraction(float(spec.U[i])) - Fraction(float(spec.L[i]))
        offset = Fraction(float(X[r, i])) - Fraction(float(spec.L[i]))
        raw[r, i] = math.floor(offset * spec.N / span)
    outside = np.count_nonzero((X < spec.L) | (X > spec.U), axis=1)
    return np.clip(raw, 0, spec.N - 1).astype(np.int64), outside


def discretize(pose: GraspPose, spec: BinSpec) -> BinVector:
    """``floor((p - L) / W)`` clamped into ``[0, N-1]``; clamps are counted."""
    if pose.hand != spec.hand:
        raise ValueError(f"pose for {pose.hand!r} given to {spec.hand!r} bin spec")
    p = pose.as_vector()
    if p.shape != spec.L.shape:
        raise ValueError(f"{spec.hand} expects {spec.ndim} values, got {len(p)}")
    bins, outside = discretize_batch(p[None], spec)
    return BinVector(spec.hand, bins[0], int(outside[0]))


def dediscretize_batch(B, spec: BinSpec, mode: str = "center") -> np.ndarray:
    """Grasp vectors for an ``(n, ndim)`` array of bin indices."""
    B = np.asarray(B)
    if B.ndim != 2 or B.shape[1] != spec.ndim:
        raise ValueError(f"{spec.hand} expects {spec.ndim} bins per grasp, got shape {B.shape}")
    if np.any((B < 0) | (B >= spec.N)):
        raise ValueError(f"bin index outside [0, {spec.N - 1}]")
    if mode == "paper":
        return spec.L + B * spec.W
    if mode == "center":
        return spec.L + (B + 0.5) * spec.W
    raise ValueError(f"unknown dediscretize mode {mode!r}")


def dediscretize(bins: BinVector, spec: BinSpec, mode: str = "center") -> GraspPose:
    """Map bins back to a pose: bin lower edge (``paper``) or bin centre."""
    if bins.hand != spec.hand:
        raise ValueError(f"bins for {bins.hand!r} given to {spec.hand!r} bin spec")
    b = bins.bins
    if b.shape != spec.L.shape:
        raise ValueError(f"{spec.hand} expects {spec.ndim} bins, got {len(b)}")
    return GraspPose.from_vector(spec.hand, dediscretize_batch(b[None], spec, mode)[0])


def quantize_scale(scale: float, N: int, scale_range=SCALE_RANGE) -> int:
    lo, hi = scale_range
    width = (hi - lo) / N
    return int(np.clip(np.floor((scale - lo) / width), 0, N - 1))


def scale_from_bin(k: int, N: int, scale_range=SCALE_RANGE) -> float:
    lo, hi = scale_range
    return lo + (k + 0.5) * (hi - lo) / N


# -- tokens -----------------------------------------------------------------

def hand_token(hand: str) -> str:
    return f"<hand:{hand}>"


def scale_token(k: int) -> str:
    return f"<scale:{k}>"


def bin_token(k: int) -> str:
    return f"<bin:{k}>"


@dataclass(frozen=True)
class TokenVocabulary:
    hands: tuple[str, ...]
    n_bins: int = VOCAB_BINS
    tokens: tuple[str, ...] = field(init=False, repr=False)
    ids: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(set(self.hands)) != len(self.hands):
            raise ValueError("duplicate hand names in vocabulary")
        toks = [hand_token(h) for h in self.hands]
        toks += [scale_token(k) for k in range(self.n_bins)]
        toks += [GRASP_OPEN, GRASP_CLOSE]
        toks += [bin_token(k) for k in range(self.n_bins)]
        object.__setattr__(self, "tokens", tuple(toks))
        object.__setattr__(self, "ids", {t: i for i, t in enumerate(toks)})

    def __len__(self) -> int:
        return len(self.tokens)

    def token_to_id(self, token: str) -> int:
        return self.ids[token]

    def id_to_token(self, i: int) -> str:
        return self.tokens[i]

    def encode_ids(self, tokens: Iterable[str]) -> list[int]:
        return [self.ids[t] for t in tokens]

    def decode_ids(self, ids: Iterable[int]) -> list[str]:
        return [self.tokens[i] for i in ids]

    def to_dict(self) -> dict:
        return {"hands": list(self.hands), "n_bins": self.n_bins, "tokens": list(self.tokens)}


def encode_tokens(hand: str, scale_bin: int, bins: Sequence[int], vocab: TokenVocabulary) -> list[str]:
    if hand not in vocab.hands:
        raise ValueError(f"unknown hand {hand!r}")
    if not 0 <= scale_bin < vocab.n_bins:
        raise ValueError(f"scale bin {scale_bin} outside vocabulary")
    out = [hand_token(hand), scale_token(int(scale_bin)), GRASP_OPEN]
    for b in bins:
        if not 0 <= b < vocab.n_bins:
            raise ValueError(f"bin {b} outside vocabulary of {vocab.n_bins}")
        out.append(bin_token(int(b)))
    out.append(GRASP_CLOSE)
    return out


def tokenize(bins: BinVector, scale: float, vocab: TokenVocabulary, N: int | None = None) -> list[str]:
    """Token list for one grasp. ``N`` is the bin count used for the scale token."""
    N = N or vocab.n_bins
    if N > vocab.n_bins:
        raise ValueError(f"{N} bins exceed the vocabulary's {vocab.n_bins}")
    return encode_tokens(bins.hand, quantize_scale(scale, N), bins.bins.tolist(), vocab)


def render_stream(tokens: Sequence[str]) -> str:
    return " ".join(tokens)


class StreamParseError(ValueError):
    """Malformed token stream. ``kind`` names the grammar rule and ``position`` the token index."""

    def __init__(self, kind: str, position: int, message: str):
        self.kind = kind
        self.position = position
        super().__init__(f"{kind} at token {position}: {message}")


_TOKEN_RE = re.compile(r"<[^<>\s]*>|[^\s<]+|<")
_HAND_RE = re.compile(r"<hand:([^<>\s]+)>")
_SCALE_RE = re.compile(r"<scale:(\d+)>")
_BIN_RE = re.compile(r"<bin:(\d+)>")


@dataclass(frozen=True)
class ParsedStream:
    hand: str
    scale_bin: int
    bins: tuple[int, ...]
    commentary: str = ""


def _split(stream) -> tuple[list[str], str]:
    if isinstance(stream, str):
        return [m.group(0) for m in _TOKEN_RE.finditer(stream)], stream
    toks = list(stream)
    return toks, " ".join(toks)


def parse_stream(stream, vocab: TokenVocabulary) -> ParsedStream:
    """Parse ``<hand:X> <scale:K> <grasp> <bin:..>... </grasp> [free text]``."""
    toks, text = _split(stream)
    if not toks:
        raise StreamParseError("missing header", 0, "empty stream")
    m = _HAND_RE.fullmatch(toks[0])
    if not m:
        raise StreamParseError("missing header", 0, f"expected hand token, found {toks[0]!r}")
    hand = m.group(1)
    if hand not in vocab.hands:
        raise StreamParseError("unknown hand", 0, f"hand {hand!r} is not in the vocabulary")
    if len(toks) < 2 or not _SCALE_RE.fullmatch(toks[1]):
        found = toks[1] if len(toks) > 1 else "end of stream"
        raise StreamParseError("missing scale", 1, f"expected scale token, found {found!r}")
    scale_bin = int(_SCALE_RE.fullmatch(toks[1]).group(1))
    if scale_bin >= vocab.n_bins:
        raise StreamParseError("token out of range", 1, f"scale bin {scale_bin}")
    if len(toks) < 3 or toks[2] != GRASP_OPEN:
        found = toks[2] if len(toks) > 2 else "end of stream"
        raise StreamParseError("missing grasp open", 2, f"expected {GRASP_OPEN}, found {found!r}")
    bins = []
    i = 3
    while True:
        if i >= len(toks):
            raise StreamParseError("unterminated grasp", i, f"no {GRASP_CLOSE} before end of stream")
        tok = toks[i]
        if tok == GRASP_CLOSE:
            break
        bm = _BIN_RE.fullmatch(tok)
        if not bm:
            raise StreamParseError("interleaved text", i, f"non-bin token {tok!r} inside grasp")
        k = int(bm.group(1))
        if k >= vocab.n_bins:
            raise StreamParseError("token out of range", i, f"bin {k}")
        bins.append(k)
        i += 1
    commentary = ""
    if isinstance(stream, str):
        close_at = _nth_match_end(stream, toks, i)
        commentary = stream[close_at:].strip()
    else:
        commentary = " ".join(toks[i + 1:])
    return ParsedStream(hand, scale_bin, tuple(bins), commentary)


def _nth_match_end(text: str, toks: list[str], i: int) -> int:
    for n, m in enumerate(_TOKEN_RE.finditer(text)):
        if n == i:
            return m.end()
    return len(text)


def extract_stream(text: str) -> str:
    """Substring of ``text`` from the first hand token to the end."""
    m = _HAND_RE.search(text)
    if not m:
        raise StreamParseError("missing header", 0, "no hand token in text")
    return text[m.start():]


@dataclass(frozen=True, eq=False)
class DecodedGrasp:
    pose: GraspPose
    bins: BinVector
    scale_bin: int
    scale: float
    commentary: str


def detokenize(stream, vocab: TokenVocabulary, specs: Mapping[str, BinSpec],
               mode: str = "center") -> DecodedGrasp:
    parsed = parse_stream(stream, vocab)
    spec = specs.get(parsed.hand)
    if spec is None:
        raise StreamParseError("unknown hand", 0, f"no bin spec for hand {parsed.hand!r}")
    if len(parsed.bins) != spec.ndim:
        raise StreamParseError(
            "arity mismatch", 3 + len(parsed.bins),
            f"{parsed.hand} needs {spec.ndim} bins, stream has {len(parsed.bins)}")
    if any(b >= spec.N for b in parsed.bins) or parsed.scale_bin >= spec.N:
        raise StreamParseError("token out of range", 3, f"bin index exceeds N={spec.N}")
    bv = BinVector(parsed.hand, parsed.bins)
    pose = dediscretize(bv, spec, mode)
    return DecodedGrasp(pose, bv, parsed.scale_bin, scale_from_bin(parsed.scale_bin, spec.N),
                        parsed.commentary)
