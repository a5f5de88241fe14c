"""Trace sets, trace subsets and LSB-embedding transition kernels.

A g-tuple ``(x_1, ..., x_g)`` lies in the trace set keyed by the floor-half
differences ``m_i = x_{i+1}//2 - x_i//2``; flipping LSBs never changes that
key.  Inside a trace set, the tuple's subset is fixed by the LSBs of its
samples.  The canonical subset index packs those LSBs with ``x_1`` as the
least significant bit::

    index = lsb(x_1) + 2*lsb(x_2) + ... + 2**(g-1) * lsb(x_g)

For pairs this gives the order ``E_{2m}, O_{2m-1}, E_{2m+1}, O_{2m}``, and
for triplets the eight-subset listing used by Triples analysis.  With this
basis the transition matrix of independent per-sample flips is the g-fold
Kronecker power of the 2x2 single-sample kernel.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

DEFAULT_RADIUS = 5


class SingularKernelError(ValueError):
    """The transition kernel at p = 1/2 has no inverse."""


class SubsetLabel(NamedTuple):
    """``E``/``O`` parity of the first sample plus the exact differences."""

    parity: str
    diffs: tuple

    def __str__(self) -> str:
        return f"{self.parity}_{{{','.join(str(d) for d in self.diffs)}}}"


def trace_key(values) -> tuple:
    v = np.asarray(values, dtype=np.int64)
    return tuple(int(d) for d in np.diff(v // 2))


def subset_index(values) -> int:
    v = np.asarray(values, dtype=np.int64)
    return int(((v & 1) << np.arange(len(v))).sum())


def classify_tuple(values) -> tuple[tuple, SubsetLabel]:
    """Return ``(trace key, subset label)`` of a single tuple."""
    v = [int(x) for x in values]
    if len(v) < 2:
        raise ValueError("need at least two samples")
    label = SubsetLabel("O" if v[0] & 1 else "E", tuple(b - a for a, b in zip(v, v[1:])))
    return trace_key(v), label


def label_location(label: SubsetLabel) -> tuple[tuple, int]:
    """Where a subset label lives: its trace key and canonical index."""
    x = [256 + (1 if label.parity == "O" else 0)]
    for d in label.diffs:
        x.append(x[-1] + d)
    return trace_key(x), subset_index(x)


def enumerate_subsets(key, g: int | None = None) -> list[SubsetLabel]:
    """Subsets of a trace set in canonical order, built recursively.

    Start from ``A_0 = E`` and ``A_1 = O`` of the single-sample problem; each
    extra difference ``k`` appends ``2k + beta`` to every existing label and
    then ``2k + beta + 1``, where ``beta`` is 0 when the label's entries sum to
    an even number and -1 otherwise.
    """
    key = tuple(int(k) for k in key)
    if g is None:
        g = len(key) + 1
    if g != len(key) + 1 or g < 2:
        raise ValueError(f"key of length {len(key)} does not describe {g}-tuples")
    seqs = [(0,), (1,)]
    for k in key:
        lower, upper = [], []
        for s in seqs:
            beta = 0 if sum(s) % 2 == 0 else -1
            lower.append(s + (2 * k + beta,))
            upper.append(s + (2 * k + beta + 1,))
        seqs = lower + upper
    return [SubsetLabel("O" if s[0] else "E", s[1:]) for s in seqs]


@dataclass(frozen=True)
class TransitionKernel:
    g: int
    p: float
    matrix: np.ndarray
    inverse: np.ndarray | None


def _block_recursion(base: np.ndarray, diag: float, off: float, g: int, scale: float = 1.0) -> np.ndarray:
    t = base
    for _ in range(g - 1):
        t = scale * np.block([[diag * t, off * t], [off * t, diag * t]])
    return t


def transition_kernel(g: int, p: float, inverse: bool = True) -> TransitionKernel:
    """Order-g kernel ``T_g(p)`` and, for ``p != 1/2``, its inverse.

    ``T_g[i, j]`` is the probability that a tuple in subset ``j`` lands in
    subset ``i`` when each sample's LSB flips independently with
    probability ``p``.
    """
    if g < 1:
        raise ValueError("g must be >= 1")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    q = 1.0 - p
    t1 = np.array([[q, p], [p, q]])
    fwd = _block_recursion(t1, q, p, g)
    inv = None
    if inverse:
        if abs(1.0 - 2.0 * p) < 1e-12:
            raise SingularKernelError("transition kernel is singular at p = 1/2")
        c = 1.0 / (1.0 - 2.0 * p)
        inv = _block_recursion(c * np.array([[q, -p], [-p, q]]), q, -p, g, scale=c)
    return TransitionKernel(g, p, fwd, inv)


def hamming_table(g: int) -> np.ndarray:
    """``popcount(i ^ j)`` for all subset index pairs of g-tuples."""
    idx = np.arange(2 ** g)
    x = idx[:, None] ^ idx[None, :]
    return np.array([[bin(v).count("1") for v in row] for row in x], dtype=np.int64)


def scaled_inverse_basis(g: int, p) -> np.ndarray:
    """Values ``(1-p)**(g-h) * (-p)**h`` for ``h = 0..g``.

    ``(1-2p)**g * T_g(p)^-1`` has entry ``basis[popcount(i ^ j)]``; this
    form stays finite at ``p = 1/2``.  ``p`` may be an array, in which case
    the result has shape ``p.shape + (g+1,)``.
    """
    p = np.asarray(p, dtype=float)[..., None]
    h = np.arange(g + 1)
    return (1.0 - p) ** (g - h) * (-p) ** h


# --------------------------------------------------------------------------
# censuses


def key_count(order: int, radius: int = DEFAULT_RADIUS) -> int:
    return (2 * radius + 1) ** (order - 1)


def encode_keys(diffs: np.ndarray, radius: int = DEFAULT_RADIUS) -> np.ndarray:
    """Row-major code of ``(n, d)`` floor-half differences; -1 when out of range."""
    diffs = np.asarray(diffs, dtype=np.int64)
    if diffs.ndim == 1:
        diffs = diffs[:, None]
    width = 2 * radius + 1
    shifted = diffs + radius
    ok = np.all((shifted >= 0) & (shifted < width), axis=1)
    code = np.zeros(len(diffs), dtype=np.int64)
    for j in range(diffs.shape[1]):
        code = code * width + shifted[:, j]
    return np.where(ok, code, -1)


def decode_key(code: int, order: int, radius: int = DEFAULT_RADIUS) -> tuple:
    width = 2 * radius + 1
    out = []
    for _ in range(order - 1):
        out.append(code % width - radius)
        code //= width
    return tuple(reversed(out))


def all_keys(order: int, radius: int = DEFAULT_RADIUS) -> list[tuple]:
    return [decode_key(c, order, radius) for c in range(key_count(order, radius))]


def classify_array(values: np.ndarray, radius: int = DEFAULT_RADIUS) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised classification: key codes (-1 if out of range) and subset indices."""
    v = np.asarray(values, dtype=np.int64)
    keys = encode_keys(np.diff(v // 2, axis=1), radius)
    idx = ((v & 1) << np.arange(v.shape[1])).sum(axis=1)
    return keys, idx


@dataclass
class TupleCensus:
    """Subset cardinalities for every trace key within ``[-radius, radius]``.

    For dense censuses ``counts`` has one row per key code (row-major over
    the difference vector), so ``counts[code, index]`` is the size of one
    trace subset.  Sparse censuses (used for sextuplets) list only
    populated keys in ``codes``.
    """

    order: int
    radius: int
    counts: np.ndarray
    overflow: int = 0
    codes: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def dense(self) -> bool:
        return self.codes is None

    @property
    def key_codes(self) -> np.ndarray:
        return np.arange(len(self.counts)) if self.codes is None else self.codes

    def keys(self) -> list[tuple]:
        return [decode_key(int(c), self.order, self.radius) for c in self.key_codes]

    def totals(self) -> np.ndarray:
        """``|C_K|`` per listed key."""
        return self.counts.sum(axis=1)

    def total(self) -> int:
        return int(self.counts.sum()) + self.overflow

    def get(self, key) -> np.ndarray:
        code = int(encode_keys(np.array([key]), self.radius)[0])
        if code < 0:
            raise KeyError(key)
        if self.dense:
            return self.counts[code]
        hit = np.flatnonzero(self.codes == code)
        return self.counts[hit[0]] if len(hit) else np.zeros(2 ** self.order, dtype=np.int64)

    def __add__(self, other: "TupleCensus") -> "TupleCensus":
        if (self.order, self.radius, self.dense) != (other.order, other.radius, other.dense):
            raise ValueError("incompatible censuses")
        if self.dense:
            return TupleCensus(self.order, self.radius, self.counts + other.counts,
                               self.overflow + other.overflow)
        codes = np.concatenate([self.codes, other.codes])
        counts = np.concatenate([self.counts, other.counts])
        uniq, inv = np.unique(codes, return_inverse=True)
        merged = np.zeros((len(uniq), counts.shape[1]), dtype=np.int64)
        np.add.at(merged, inv, counts)
        return TupleCensus(self.order, self.radius, merged, self.overflow + other.overflow, uniq)

    def to_json(self) -> str:
        """JSON with only populated keys: ``{"counts": {"m1,m2": [...]}}``."""
        rows = {}
        for code, row in zip(self.key_codes, self.counts):
            if row.any():
                rows[",".join(str(k) for k in decode_key(int(code), self.order, self.radius))] = [int(x) for x in row]
        return json.dumps({"order": self.order, "radius": self.radius,
                           "overflow": int(self.overflow), "counts": rows}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TupleCensus":
        doc = json.loads(text)
        order, radius = doc["order"], doc["radius"]
        counts = np.zeros((key_count(order, radius), 2 ** order), dtype=np.int64)
        for k, row in doc["counts"].items():
            key = tuple(int(x) for x in k.split(","))
            counts[encode_keys(np.array([key]), radius)[0]] = row
        return cls(order, radius, counts, doc["overflow"])


def census(tuples, radius: int = DEFAULT_RADIUS, sparse: bool | None = None) -> TupleCensus:
    """Count in-range tuples by (trace key, subset); out-of-range go to overflow.

    ``tuples`` is a :class:`~covermod.pixel_store.TupleSequence` or an
    ``(n, order)`` array of samples.
    """
    values = getattr(tuples, "values", tuples)
    values = np.asarray(values)
    if values.ndim != 2:
        raise ValueError("expected an (n, order) array of tuples")
    order = values.shape[1]
    nsub = 2 ** order
    keys, idx = classify_array(values, radius)
    inside = keys >= 0
    overflow = int((~inside).sum())
    if sparse is None:
        sparse = key_count(order, radius) * nsub > 1 << 20
    flat = keys[inside] * nsub + idx[inside]
    if not sparse:
        counts = np.bincount(flat, minlength=key_count(order, radius) * nsub)
        return TupleCensus(order, radius, counts.reshape(-1, nsub).astype(np.int64), overflow)
    uniq, cnt = np.unique(flat, return_counts=True)
    codes, rows = np.unique(uniq // nsub, return_inverse=True)
    counts = np.zeros((len(codes), nsub), dtype=np.int64)
    counts[rows, uniq % nsub] = cnt
    return TupleCensus(order, radius, counts, overflow, codes)


def parity_pairs(order: int, radius: int = DEFAULT_RADIUS) -> np.ndarray:
    """Locations of ``(E_d, O_d)`` for every all-odd difference vector ``d``.

    Returns an ``(n, 4)`` integer array ``[code_E, index_E, code_O, index_O]``
    restricted to pairs where both subsets fall inside the census range.
    """
    odd = np.arange(-2 * radius - 1, 2 * radius + 2, 2)
    grids = np.meshgrid(*([odd] * (order - 1)), indexing="ij")
    diffs = np.stack([g.ravel() for g in grids], axis=1)
    out = []
    for d in diffs:
        ke, ie = label_location(SubsetLabel("E", tuple(int(x) for x in d)))
        ko, io = label_location(SubsetLabel("O", tuple(int(x) for x in d)))
        ce, co = encode_keys(np.array([ke, ko]), radius)
        if ce >= 0 and co >= 0:
            out.append((ce, ie, co, io))
    return np.array(out, dtype=np.int64).reshape(-1, 4)
