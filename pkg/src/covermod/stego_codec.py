"""Keyed embedding and extraction with an in-band omitted-set mask.

Protocol
--------
* The path is a keyed shuffle of every candidate sample of the grid (all
  channels).  Under the sextuplet strategy the middle pair of every 6-block
  is left out, as are row remainders.
* A path sample is *embeddable* when its tuple's trace key is inside the
  census range and not omitted for its channel and family.  Trace keys are
  unchanged by LSB writes, so the receiver classifies the stego exactly as
  the sender classified the modified cover.
* The master sequence has one bit per path sample: payload on embeddable
  samples and the constant 1 elsewhere.  It is XORed with a keyed keystream
  indexed by path position, and only payload bits are written.
* Each channel carries its own header (16-bit tag plus raw mask bits).  It
  sits on the first path samples of the most populous non-omitted trace set
  that is big enough; populations are LSB-invariant, so the receiver tries
  the same candidates in the same order.
* The remaining embeddable samples carry a 32-bit big-endian byte count, the
  message, then zero padding up to the requested rate.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .cover_mod import GridCapacity, Strategy, family_tuples, strategy_for
from .pixel_store import as_grid
from .trace_algebra import DEFAULT_RADIUS, decode_key, key_count

MAGIC = 0xC0DE
TAG_BITS = 16
LENGTH_BITS = 32
PLACEHOLDER = 1


class CapacityError(ValueError):
    """The message (plus framing) does not fit the embeddable samples."""


class TagNotFoundError(ValueError):
    """No header was found: wrong key, wrong strategy, or a damaged image."""


@dataclass(frozen=True)
class KeyMaterial:
    secret: bytes

    @classmethod
    def from_passphrase(cls, text: str) -> "KeyMaterial":
        return cls(text.encode("utf-8"))

    @property
    def path_seed(self) -> int:
        d = hashlib.blake2b(b"covermod/path\0" + self.secret, digest_size=32).digest()
        return int.from_bytes(d, "big")

    def keystream(self, n: int) -> np.ndarray:
        raw = hashlib.shake_256(b"covermod/stream\0" + self.secret).digest((n + 7) // 8)
        return np.unpackbits(np.frombuffer(raw, dtype=np.uint8))[:n]


def _key(key) -> KeyMaterial:
    if isinstance(key, KeyMaterial):
        return key
    if isinstance(key, str):
        return KeyMaterial.from_passphrase(key)
    return KeyMaterial(bytes(key))


# --------------------------------------------------------------------------
# omitted mask


@dataclass
class OmittedMask:
    """Per-family boolean grids over trace keys (row-major, first family first)."""

    order: int
    bits: np.ndarray          # (families, keys) bool
    radius: int = DEFAULT_RADIUS

    @classmethod
    def empty(cls, order: int, radius: int = DEFAULT_RADIUS) -> "OmittedMask":
        nfam = len(strategy_for(order).families)
        return cls(order, np.zeros((nfam, key_count(order, radius)), dtype=bool), radius)

    @classmethod
    def from_keys(cls, order: int, keys_per_family, radius: int = DEFAULT_RADIUS) -> "OmittedMask":
        from .trace_algebra import encode_keys
        mask = cls.empty(order, radius)
        for f, keys in enumerate(keys_per_family):
            if len(keys):
                codes = encode_keys(np.atleast_2d(np.asarray(keys)), radius)
                if np.any(codes < 0):
                    raise ValueError("omitted key outside the census range")
                mask.bits[f, codes] = True
        return mask

    @property
    def n_bits(self) -> int:
        return self.bits.size

    def keys(self) -> list[list[tuple]]:
        return [[decode_key(int(c), self.order, self.radius) for c in np.flatnonzero(row)] for row in self.bits]

    def __eq__(self, other) -> bool:
        return (isinstance(other, OmittedMask) and self.order == other.order
                and np.array_equal(self.bits, other.bits))


def encode_omitted_mask(mask: OmittedMask) -> np.ndarray:
    return mask.bits.astype(np.uint8).reshape(-1)


def decode_omitted_mask(bits, order: int, radius: int = DEFAULT_RADIUS) -> OmittedMask:
    bits = np.asarray(bits, dtype=np.uint8).reshape(-1)
    empty = OmittedMask.empty(order, radius)
    if bits.size != empty.n_bits:
        raise ValueError(f"mask needs {empty.n_bits} bits, got {bits.size}")
    return OmittedMask(order, bits.reshape(empty.bits.shape).astype(bool), radius)


def masks_from_capacity(cap: GridCapacity, alpha: float | None = None) -> list[OmittedMask]:
    """One mask per channel from a grid capacity analysis."""
    om = cap.omitted(alpha)
    out = []
    for c in range(cap.channels):
        rows = np.stack([om[(c, f.name)] for f in cap.strategy.families])
        out.append(OmittedMask(cap.strategy.order, rows))
    return out


# --------------------------------------------------------------------------
# path and classification


def candidate_positions(shape, order: int) -> np.ndarray:
    """Flat indices (into the ``(H, W, C)`` array) of every path candidate."""
    h, w, c = shape
    strat = strategy_for(order)
    nb = w // strat.block
    offs = np.array(strat.embeddable_offsets)
    cols = (np.arange(nb)[:, None] * strat.block + offs[None, :]).reshape(-1)
    flat = ((np.arange(h)[:, None, None] * w + cols[None, :, None]) * c + np.arange(c)[None, None, :])
    return flat.reshape(-1)


def derive_path(key, shape, order: int) -> np.ndarray:
    """Keyed pseudo-random permutation of the candidate sample positions."""
    km = _key(key)
    shape = tuple(shape) if len(shape) == 3 else (shape[0], shape[1], 1)
    cand = candidate_positions(shape, order)
    rng = np.random.default_rng(km.path_seed)
    return rng.permutation(cand)


@dataclass
class PathLayout:
    """Classification of every path sample of a grid."""

    path: np.ndarray
    channel: np.ndarray
    family: np.ndarray
    key: np.ndarray        # -1 when out of range
    strategy: Strategy

    radius: int = DEFAULT_RADIUS

    def group_sizes(self, channel: int) -> dict:
        """Tuple count of every in-range (family, key) group in one channel."""
        sel = (self.channel == channel) & (self.key >= 0)
        nk = key_count(self.strategy.order, self.radius)
        codes, counts = np.unique(self.family[sel] * nk + self.key[sel], return_counts=True)
        out = {}
        for code, n in zip(codes, counts):
            f, k = divmod(int(code), nk)
            out[(f, k)] = int(n) // len(self.strategy.families[f].embeddable)
        return out


def path_layout(grid, key, order: int, radius: int = DEFAULT_RADIUS) -> PathLayout:
    grid = as_grid(grid)
    h, w, nch = grid.shape
    strat = strategy_for(order)
    fam_of = np.full(grid.size, -1, dtype=np.int64)
    key_of = np.full(grid.size, -1, dtype=np.int64)
    for c in range(nch):
        for fi, fam in enumerate(strat.families):
            ft = family_tuples(grid, c, strat, fam, radius)
            for off in fam.embeddable:
                flat = (ft.rows * w + ft.cols + off) * nch + c
                fam_of[flat] = fi
                key_of[flat] = ft.key
    path = derive_path(key, grid.shape, order)
    return PathLayout(path, path % nch, fam_of[path], key_of[path], strat, radius)


def _embeddable(layout: PathLayout, masks) -> np.ndarray:
    ok = layout.key >= 0
    for c, m in enumerate(masks):
        sel = ok & (layout.channel == c)
        ok[sel] = ~m.bits[layout.family[sel], layout.key[sel]]
    return ok


def _header_candidates(layout: PathLayout, channel: int, header_len: int) -> list[tuple[int, int]]:
    """(family, key) groups large enough to host a header, most populous first."""
    fams = layout.strategy.families
    sizes = layout.group_sizes(channel)
    big = [(fk, n) for fk, n in sizes.items() if n * len(fams[fk[0]].embeddable) >= header_len]
    big.sort(key=lambda t: (-t[1], t[0]))
    return [fk for fk, _ in big]


def _header_slots(layout: PathLayout, channel: int, group: tuple[int, int], header_len: int) -> np.ndarray:
    sel = (layout.channel == channel) & (layout.family == group[0]) & (layout.key == group[1])
    return np.flatnonzero(sel)[:header_len]


def _tag_bits() -> np.ndarray:
    return np.unpackbits(np.array([MAGIC >> 8, MAGIC & 0xFF], dtype=np.uint8))


# --------------------------------------------------------------------------
# master sequence


@dataclass
class MasterSequence:
    bits: np.ndarray          # one bit per path sample
    embeddable: np.ndarray    # False at placeholder (omitted or out-of-range) positions
    is_payload: np.ndarray    # positions actually written: headers, message, padding
    header: np.ndarray        # path indices of header bits

    def __len__(self) -> int:
        return len(self.bits)

    @property
    def placeholders(self) -> int:
        return int((~self.embeddable).sum())


def _bytes_to_bits(data: bytes) -> np.ndarray:
    return np.unpackbits(np.frombuffer(bytes(data), dtype=np.uint8))


def build_master_sequence(message: bytes, layout: PathLayout, masks, pad_to: int | None = None) -> MasterSequence:
    """Lay the headers, length prefix, message and padding along the path.

    ``pad_to`` is the total number of payload samples to fill (headers
    included); by default only what the message needs is used and the rest
    of the embeddable samples are left untouched.
    """
    emb = _embeddable(layout, masks)
    n = len(layout.path)
    bits = np.full(n, PLACEHOLDER, dtype=np.uint8)
    used = np.zeros(n, dtype=bool)
    header_idx = []
    for c, mask in enumerate(masks):
        hlen = TAG_BITS + mask.n_bits
        cands = [g for g in _header_candidates(layout, c, hlen) if not mask.bits[g]]
        if not cands:
            raise CapacityError(f"channel {c}: no included trace set can hold the {hlen}-bit header")
        slots = _header_slots(layout, c, cands[0], hlen)
        bits[slots] = np.concatenate([_tag_bits(), encode_omitted_mask(mask)])
        used[slots] = True
        header_idx.append(slots)
    free = np.flatnonzero(emb & ~used)
    body = np.concatenate([_bytes_to_bits(len(message).to_bytes(4, "big")), _bytes_to_bits(message)])
    if len(body) > len(free):
        raise CapacityError(f"message needs {len(body)} bits, only {len(free)} available")
    total_header = int(used.sum())
    fill = len(body) if pad_to is None else max(len(body), min(len(free), int(pad_to) - total_header))
    bits[free[:len(body)]] = body
    bits[free[len(body):fill]] = 0
    used[free[:fill]] = True
    return MasterSequence(bits, emb, used, np.concatenate(header_idx))


def message_capacity(layout: PathLayout, masks) -> int:
    """Largest message in bytes that fits alongside headers and length prefix."""
    emb = int(_embeddable(layout, masks).sum())
    headers = sum(TAG_BITS + m.n_bits for m in masks)
    return max(0, (emb - headers - LENGTH_BITS) // 8)


# --------------------------------------------------------------------------
# embed / extract


def _as_masks(masks, order: int, channels: int) -> list[OmittedMask]:
    if masks is None:
        return [OmittedMask.empty(order) for _ in range(channels)]
    if isinstance(masks, OmittedMask):
        masks = [masks] * channels
    masks = list(masks)
    if len(masks) != channels or any(m.order != order for m in masks):
        raise ValueError("need one mask of the strategy's order per channel")
    return masks


def embed(cover, key, message: bytes, masks=None, order: int = 3, alpha: float | None = None,
          radius: int = DEFAULT_RADIUS) -> np.ndarray:
    """Write ``message`` into a (modified) cover.

    ``masks`` gives the omitted trace keys per channel (one mask is shared by
    every channel).  With ``alpha`` the message is zero-padded so that a
    fraction ``alpha`` of the embeddable samples carry encrypted bits, which
    is the rate the cover modification was planned for.
    """
    grid = as_grid(cover)
    masks = _as_masks(masks, order, grid.shape[2])
    layout = path_layout(grid, key, order, radius)
    pad = None
    if alpha is not None:
        pad = int(np.floor(alpha * _embeddable(layout, masks).sum()))
    ms = build_master_sequence(bytes(message), layout, masks, pad)
    stream = _key(key).keystream(len(ms)) ^ ms.bits
    out = grid.copy()
    flat = out.reshape(-1)
    idx = np.flatnonzero(ms.is_payload)
    pos = layout.path[idx]
    flat[pos] = (flat[pos] & 0xFE) | stream[idx]
    return out


def _read_headers(grid, km: KeyMaterial, order: int, radius: int):
    """Decrypt the path and locate every channel's header."""
    layout = path_layout(grid, km, order, radius)
    plain = (grid.reshape(-1)[layout.path] & 1) ^ km.keystream(len(layout.path))
    hlen = TAG_BITS + OmittedMask.empty(order, radius).n_bits
    masks, used = [], np.zeros(len(plain), dtype=bool)
    for c in range(grid.shape[2]):
        cands = _header_candidates(layout, c, hlen)
        for i, grp in enumerate(cands):
            slots = _header_slots(layout, c, grp, hlen)
            hdr = plain[slots]
            if not np.array_equal(hdr[:TAG_BITS], _tag_bits()):
                continue
            mask = decode_omitted_mask(hdr[TAG_BITS:], order, radius)
            # the sender used the first candidate it did not omit
            if mask.bits[grp] or not all(mask.bits[g] for g in cands[:i]):
                continue
            masks.append(mask)
            used[slots] = True
            break
        else:
            raise TagNotFoundError(f"no header found in channel {c}")
    return layout, plain, masks, used


def _extract_order(grid, key, order: int, radius: int) -> bytes:
    layout, plain, masks, used = _read_headers(grid, _key(key), order, radius)
    free = np.flatnonzero(_embeddable(layout, masks) & ~used)
    if len(free) < LENGTH_BITS:
        raise TagNotFoundError("stream too short for a length prefix")
    n = int.from_bytes(np.packbits(plain[free[:LENGTH_BITS]]).tobytes(), "big")
    if LENGTH_BITS + 8 * n > len(free):
        raise TagNotFoundError("length prefix exceeds capacity")
    return np.packbits(plain[free[LENGTH_BITS:LENGTH_BITS + 8 * n]]).tobytes()


def extract(stego, key, order: int | None = None, radius: int = DEFAULT_RADIUS) -> bytes:
    """Recover the message.  Without ``order`` both strategies are tried."""
    grid = as_grid(stego)
    orders = (order,) if order is not None else (3, 2)
    err = None
    for o in orders:
        try:
            return _extract_order(grid, key, o, radius)
        except TagNotFoundError as exc:
            err = exc
    raise err


def extract_masks(stego, key, order: int, radius: int = DEFAULT_RADIUS) -> list[OmittedMask]:
    """Decode just the per-channel omitted masks."""
    return _read_headers(as_grid(stego), _key(key), order, radius)[2]


def masks_from_document(doc: dict) -> list[OmittedMask]:
    """Per-channel masks from a plan document written by ``plan_document``."""
    order = int(doc["order"])
    names = [f.name for f in strategy_for(order).families]
    return [OmittedMask.from_keys(order, [ch["families"].get(n, {}).get("omitted", []) for n in names])
            for ch in doc["channels"]]
