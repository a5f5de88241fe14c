"""Cover modification: pre-distorting trace subsets so that embedding repairs them.

For a chosen rate ``alpha`` every included trace set is redistributed to
``T(p)^-1 @ counts`` (``p = alpha/2``).  Embedding at ``alpha`` then maps
the modified census back, in expectation, onto the original one.

Two embedding strategies are supported:

* pairs: every sample of each disjoint pair is embeddable and pairs are
  redistributed with the 4x4 kernel;
* sextuplets: the middle pair ``x3, x4`` of each 6-block is never touched.
  The first triplet (family ``P1``) is embedded through ``x1, x2`` and the
  second (``P2``) through ``x5, x6``, so each triplet family again moves
  under the 4x4 kernel, grouped by the LSB of its untouched sample.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache, reduce

import numpy as np
from numpy.polynomial import polynomial as P

from .pixel_store import as_grid
from .trace_algebra import (DEFAULT_RADIUS, TupleCensus, encode_keys, hamming_table,
                            key_count, transition_kernel)

# ceiling used in place of an unbounded per-key capacity; p must stay below 1/2
ALPHA_CAP = 0.99


class InfeasiblePlanError(ValueError):
    """The requested rate empties a donor subset of an included trace set."""


class ZeroCapacityError(ValueError):
    """No trace set can carry any payload."""


class PlanMismatchError(ValueError):
    """The grid's census does not match the census the plan was built for."""


# --------------------------------------------------------------------------
# strategies


@dataclass(frozen=True)
class Family:
    name: str
    offsets: tuple       # block-relative offsets of the tuple's samples
    embeddable: tuple    # block-relative offsets that may change

    @property
    def order(self) -> int:
        return len(self.offsets)

    @property
    def fixed(self) -> tuple:
        return tuple(o for o in self.offsets if o not in self.embeddable)


@dataclass(frozen=True)
class Strategy:
    order: int
    block: int
    families: tuple

    @property
    def embeddable_offsets(self) -> tuple:
        return tuple(sorted({o for f in self.families for o in f.embeddable}))

    def family_index(self, name: str) -> int:
        return [f.name for f in self.families].index(name)


PAIRS = Strategy(2, 2, (Family("pairs", (0, 1), (0, 1)),))
SEXTUPLETS = Strategy(3, 6, (Family("P1", (0, 1, 2), (0, 1)), Family("P2", (3, 4, 5), (4, 5))))


def strategy_for(order: int) -> Strategy:
    try:
        return {2: PAIRS, 3: SEXTUPLETS}[order]
    except KeyError:
        raise ValueError(f"no embedding strategy protects order {order}") from None


@dataclass
class FamilyTuples:
    """Per-tuple classification of one family in one channel."""

    family: Family
    channel: int
    rows: np.ndarray
    cols: np.ndarray      # column of the enclosing block's first sample
    key: np.ndarray       # trace-key code, -1 when outside the census range
    fixed: np.ndarray     # LSB code of the untouched samples
    local: np.ndarray     # LSB code of the embeddable samples

    def counts(self, radius: int = DEFAULT_RADIUS) -> np.ndarray:
        f = 2 ** len(self.family.fixed)
        n = 2 ** len(self.family.embeddable)
        ok = self.key >= 0
        flat = (self.key[ok] * f + self.fixed[ok]) * n + self.local[ok]
        nkeys = key_count(self.family.order, radius)
        return np.bincount(flat, minlength=nkeys * f * n).reshape(nkeys, f, n).astype(np.int64)


def family_tuples(grid, channel: int, strategy: Strategy, family: Family,
                  radius: int = DEFAULT_RADIUS) -> FamilyTuples:
    grid = as_grid(grid)
    h, w, _ = grid.shape
    nb = w // strategy.block
    blocks = grid[:, : nb * strategy.block, channel].reshape(h * nb, strategy.block).astype(np.int64)
    vals = blocks[:, list(family.offsets)]
    key = encode_keys(np.diff(vals // 2, axis=1), radius)

    def bits(offs):
        code = np.zeros(len(blocks), dtype=np.int64)
        for b, o in enumerate(offs):
            code |= (blocks[:, o] & 1) << b
        return code

    rows = np.repeat(np.arange(h), nb)
    cols = np.tile(np.arange(nb) * strategy.block, h)
    return FamilyTuples(family, channel, rows, cols, key, bits(family.fixed), bits(family.embeddable))


def family_counts_from_census(cen: TupleCensus, family: Family) -> np.ndarray:
    """Rearrange a plain order-g census into ``(keys, fixed, local)`` form."""
    if not cen.dense or cen.order != family.order:
        raise ValueError("census order does not match the family")
    base = family.offsets[0]
    pos = [o - base for o in family.offsets]
    fixed_bits = [pos.index(o - base) for o in family.fixed]
    emb_bits = [pos.index(o - base) for o in family.embeddable]
    nf, ne = 2 ** len(fixed_bits), 2 ** len(emb_bits)
    out = np.zeros((len(cen.counts), nf, ne), dtype=np.int64)
    for idx in range(2 ** cen.order):
        fx = sum(((idx >> b) & 1) << k for k, b in enumerate(fixed_bits))
        lc = sum(((idx >> b) & 1) << k for k, b in enumerate(emb_bits))
        out[:, fx, lc] += cen.counts[:, idx]
    return out


# --------------------------------------------------------------------------
# targets and capacities


def target_census(counts, alpha: float) -> np.ndarray:
    """Real-valued modified-cover sizes ``T(alpha/2)^-1 @ counts`` along the last axis."""
    counts = np.asarray(counts, dtype=float)
    if alpha >= 1.0:
        raise ValueError("alpha must be below 1 (the kernel is singular at p = 1/2)")
    n = int(round(math.log2(counts.shape[-1])))
    inv = transition_kernel(n, alpha / 2.0).inverse
    return counts @ inv.T


@lru_cache(maxsize=None)
def _shell_basis(n: int) -> np.ndarray:
    """Row h holds the power-series coefficients of ``(1-p)**(n-h) (-p)**h``."""
    out = np.zeros((n + 1, n + 1))
    for h in range(n + 1):
        out[h] = P.polymul(P.polypow([1.0, -1.0], n - h), P.polypow([0.0, -1.0], h))[: n + 1]
    return out


def _first_negative(coef: np.ndarray, hi: float = 0.5) -> float:
    """Smallest p in [0, hi) beyond which the polynomial turns negative, else inf."""
    if coef[0] < 0:
        return 0.0
    if not np.any(coef[1:]):
        return math.inf
    roots = P.polyroots(np.trim_zeros(coef, "b"))
    real = np.sort(roots[(np.abs(roots.imag) <= 1e-9 * np.maximum(1.0, np.abs(roots.real)))].real)
    real = real[(real >= -1e-12) & (real < hi)]
    for k, r in enumerate(real):
        nxt = real[k + 1] if k + 1 < len(real) else hi
        probe = r + min(1e-7, (nxt - r) / 2) if nxt > r else r + 1e-9
        if P.polyval(probe, coef) < 0:
            return max(float(r), 0.0)
    return math.inf


def trace_set_capacity(counts) -> float:
    """Largest rate before some modified-cover subset of this trace set would go negative.

    ``counts`` holds one trace set (length ``2**n``), or several groups of one
    key (shape ``(groups, 2**n)``), the result being the smallest over groups.
    Returns ``alpha = 2p`` at the first zero crossing, 0 for an already-empty
    donor subset and ``inf`` when nothing ever empties.
    """
    counts = np.atleast_2d(np.asarray(counts, dtype=np.int64))
    n = int(round(math.log2(counts.shape[-1])))
    ham = hamming_table(n)
    basis = _shell_basis(n)
    best = math.inf
    for row in counts:
        if not row.any():
            continue
        for i in range(len(row)):
            shell = np.array([row[ham[i] == h].sum() for h in range(n + 1)], dtype=float)
            best = min(best, 2.0 * _first_negative(shell @ basis))
            if best == 0.0:
                return 0.0
    return best


def key_capacities(counts: np.ndarray) -> np.ndarray:
    """Per-key capacity of a ``(keys, fixed, local)`` family count array."""
    return np.array([trace_set_capacity(c) for c in counts])


@dataclass
class CapacityReport:
    alphas: np.ndarray        # per-key capacity
    sizes: np.ndarray         # |C_K|
    n_total: int
    chosen: int               # index of the key that sets the rate
    alpha: float
    omitted: np.ndarray       # bool per key
    score: float

    @property
    def retained_fraction(self) -> float:
        return 1.0 - float(self.sizes[self.omitted].sum()) / self.n_total


def select_max_rate(alphas, sizes, n_total: int, cap: float = ALPHA_CAP) -> CapacityReport:
    """Pick the rate that maximises ``alpha_m * (1 - S_m / N)``.

    ``S_m`` is the population of every trace set whose own capacity is below
    ``alpha_m``; those sets are omitted from embedding at the chosen rate.
    Capacities are capped at ``cap`` and empty trace sets never set the rate.
    """
    alphas = np.asarray(alphas, dtype=float)
    sizes = np.asarray(sizes, dtype=np.int64)
    if n_total <= 0:
        raise ValueError("N must be positive")
    capped = np.minimum(alphas, cap)
    scores = np.full(len(alphas), -np.inf)
    for m in np.flatnonzero(sizes > 0):
        lost = sizes[capped < capped[m]].sum()
        scores[m] = capped[m] * (1.0 - lost / n_total)
    if not np.isfinite(scores).any() or scores.max() <= 0:
        raise ZeroCapacityError("every trace set has zero capacity")
    m = int(np.argmax(scores))
    return CapacityReport(alphas, sizes, int(n_total), m, float(capped[m]),
                          capped < capped[m], float(scores[m]))


# --------------------------------------------------------------------------
# plans


@dataclass
class ModificationPlan:
    """Census-level redistribution for one family in one channel.

    ``transfers`` rows are ``(key, fixed, from_local, to_local, count)``;
    moving a tuple flips the embeddable samples where ``from ^ to`` has a
    set bit.
    """

    family: Family
    channel: int
    alpha: float
    radius: int
    counts: np.ndarray
    targets: np.ndarray
    target_counts: np.ndarray
    omitted: np.ndarray
    transfers: np.ndarray = field(default_factory=lambda: np.zeros((0, 5), dtype=np.int64))

    @property
    def moved(self) -> int:
        return int(self.transfers[:, 4].sum()) if len(self.transfers) else 0

    def omitted_keys(self) -> list[tuple]:
        from .trace_algebra import decode_key
        return [decode_key(int(c), self.family.order, self.radius) for c in np.flatnonzero(self.omitted)]


def largest_remainder(values: np.ndarray, total: int) -> np.ndarray:
    """Round non-negative reals to integers summing to ``total``."""
    floor = np.floor(values).astype(np.int64)
    short = int(total - floor.sum())
    if short > 0:
        frac = values - floor
        order = np.lexsort((np.arange(len(values)), -frac))
        floor[order[:short]] += 1
    elif short < 0:
        frac = values - floor
        order = np.lexsort((np.arange(len(values)), frac))
        take = [i for i in order if floor[i] > 0][:-short]
        floor[take] -= 1
    return floor


def _route(current: np.ndarray, target: np.ndarray) -> list[tuple[int, int, int]]:
    """Greedy transfers: largest deficit first, fed by largest surplus."""
    surplus = {i: int(v) for i, v in enumerate(current - target) if v > 0}
    deficit = sorted(((int(v), i) for i, v in enumerate(target - current) if v > 0), key=lambda t: (-t[0], t[1]))
    out = []
    for need, j in deficit:
        while need:
            i = max(surplus, key=lambda k: (surplus[k], -k))
            take = min(need, surplus[i])
            out.append((i, j, take))
            need -= take
            surplus[i] -= take
            if not surplus[i]:
                del surplus[i]
    return out


def plan_family(counts: np.ndarray, alpha: float, family: Family, channel: int = 0,
                omitted=None, radius: int = DEFAULT_RADIUS) -> ModificationPlan:
    """Plan the redistribution of one family's ``(keys, fixed, local)`` counts."""
    counts = np.asarray(counts, dtype=np.int64)
    if omitted is None:
        omitted = np.zeros(len(counts), dtype=bool) if alpha == 0 else key_capacities(counts) < alpha
    omitted = np.asarray(omitted, dtype=bool)
    if alpha == 0:
        targets = counts.astype(float)
    else:
        targets = target_census(counts, alpha)
    targets[omitted] = counts[omitted]
    if targets.min() < -1e-6 * max(1.0, float(counts.max())):
        bad = np.unique(np.argwhere(targets < -1e-6)[:, 0])
        raise InfeasiblePlanError(f"rate {alpha:.4f} exceeds the capacity of trace keys {bad.tolist()}")
    targets = np.maximum(targets, 0.0)
    tc = counts.copy()
    rows = []
    for k in np.flatnonzero(~omitted):
        for f in range(counts.shape[1]):
            c = counts[k, f]
            if not c.any():
                continue
            t = largest_remainder(targets[k, f], int(c.sum()))
            tc[k, f] = t
            rows.extend((k, f, i, j, n) for i, j, n in _route(c, t))
    transfers = np.array(rows, dtype=np.int64).reshape(-1, 5)
    return ModificationPlan(family, channel, float(alpha), radius, counts, targets, tc, omitted, transfers)


def plan_modification_2nd(census2: TupleCensus, alpha: float, channel: int = 0, omitted=None) -> ModificationPlan:
    fam = PAIRS.families[0]
    return plan_family(family_counts_from_census(census2, fam), alpha, fam, channel, omitted, census2.radius)


def plan_modification_3rd(census_p1: TupleCensus, census_p2: TupleCensus, alpha: float, channel: int = 0,
                          omitted=(None, None)) -> tuple[ModificationPlan, ModificationPlan]:
    """Plans for both triplet families of the sextuplet strategy."""
    out = []
    for cen, fam, om in zip((census_p1, census_p2), SEXTUPLETS.families, omitted):
        out.append(plan_family(family_counts_from_census(cen, fam), alpha, fam, channel, om, cen.radius))
    return out[0], out[1]


def apply_plan(grid, plans, seed: int = 0, strategy: Strategy | None = None) -> np.ndarray:
    """Realise plans on a copy of ``grid`` by flipping LSBs of chosen tuples.

    Donor tuples are drawn uniformly at random (seeded) from their subset.
    """
    grid = as_grid(grid)
    out = grid.copy()
    if isinstance(plans, ModificationPlan):
        plans = [plans]
    for plan in plans:
        strat = strategy or (PAIRS if plan.family.name == "pairs" else SEXTUPLETS)
        fidx = strat.family_index(plan.family.name)
        # classify against the original grid; families never share samples
        ft = family_tuples(grid, plan.channel, strat, plan.family, plan.radius)
        if not np.array_equal(ft.counts(plan.radius), plan.counts):
            raise PlanMismatchError(f"census of channel {plan.channel} / {plan.family.name} differs from plan")
        if not len(plan.transfers):
            continue
        rng = np.random.default_rng(np.random.SeedSequence([seed, plan.channel, fidx]))
        nf, nl = plan.counts.shape[1], plan.counts.shape[2]
        code = np.where(ft.key >= 0, (ft.key * nf + ft.fixed) * nl + ft.local, -1)
        order = np.lexsort((rng.random(len(code)), code))
        sorted_code = code[order]
        used: dict[int, int] = {}
        for k, f, i, j, n in plan.transfers:
            g = int((k * nf + f) * nl + i)
            start = int(np.searchsorted(sorted_code, g)) + used.get(g, 0)
            picked = order[start:start + n]
            used[g] = used.get(g, 0) + int(n)
            flip = int(i) ^ int(j)
            for b, off in enumerate(plan.family.embeddable):
                if (flip >> b) & 1:
                    out[ft.rows[picked], ft.cols[picked] + off, plan.channel] ^= 1
    return out


# --------------------------------------------------------------------------
# whole-grid capacity


@dataclass
class GridCapacity:
    """Rate choice for a whole grid, pooled over channels per family."""

    strategy: Strategy
    alpha: float
    reports: dict                 # family name -> CapacityReport over (channel, key)
    key_alphas: dict              # (channel, family name) -> per-key capacities
    counts: dict                  # (channel, family name) -> (keys, fixed, local) counts
    tuples_per_family: int        # per channel, including out-of-range tuples
    channels: int

    def omitted(self, alpha: float | None = None) -> dict:
        a = self.alpha if alpha is None else alpha
        return {k: np.minimum(v, ALPHA_CAP) < a for k, v in self.key_alphas.items()}

    def embeddable_samples(self, alpha: float | None = None) -> int:
        """Samples that carry payload at this rate (included, in-range tuples)."""
        om = self.omitted(alpha)
        total = 0
        for (c, name), counts in self.counts.items():
            fam = self.strategy.families[self.strategy.family_index(name)]
            total += int(counts.sum(axis=(1, 2))[~om[(c, name)]].sum()) * len(fam.embeddable)
        return total


def grid_capacity(grid, strategy: Strategy, radius: int = DEFAULT_RADIUS) -> GridCapacity:
    """Per-key capacities and the pooled max-rate rule for every family.

    Keys from all channels of one family compete in a single max-rate
    selection; the grid's rate is the smaller of the family rates.
    """
    grid = as_grid(grid)
    h, w, nch = grid.shape
    per_channel = h * (w // strategy.block)
    key_alphas, counts, reports = {}, {}, {}
    for fam in strategy.families:
        al, sz = [], []
        for c in range(nch):
            cnt = family_tuples(grid, c, strategy, fam, radius).counts(radius)
            ka = key_capacities(cnt)
            key_alphas[(c, fam.name)] = ka
            counts[(c, fam.name)] = cnt
            al.append(ka)
            sz.append(cnt.sum(axis=(1, 2)))
        reports[fam.name] = select_max_rate(np.concatenate(al), np.concatenate(sz), per_channel * nch)
    alpha = min(r.alpha for r in reports.values())
    return GridCapacity(strategy, alpha, reports, key_alphas, counts, per_channel, nch)


def plan_grid(grid, strategy: Strategy, alpha: float | None = None,
              capacity: GridCapacity | None = None, radius: int = DEFAULT_RADIUS):
    """Plans for every (channel, family) at ``alpha`` (default: max rate)."""
    cap = capacity or grid_capacity(grid, strategy, radius)
    a = cap.alpha if alpha is None else float(alpha)
    om = cap.omitted(a)
    plans = []
    for c in range(cap.channels):
        for fam in strategy.families:
            plans.append(plan_family(cap.counts[(c, fam.name)], a, fam, c, om[(c, fam.name)], radius))
    return plans, cap


def modify_cover(grid, order: int = 3, alpha: float | None = None, seed: int = 0,
                 radius: int = DEFAULT_RADIUS):
    """Plan and apply a cover modification; returns ``(modified, plans, capacity)``."""
    strategy = strategy_for(order)
    plans, cap = plan_grid(grid, strategy, alpha, radius=radius)
    return apply_plan(grid, plans, seed, strategy), plans, cap


# --------------------------------------------------------------------------
# higher orders


def feasibility_report_6th(census6: TupleCensus, n_pixels: int | None = None) -> dict:
    """How much a full sextuplet-level modification could carry.

    Only trace sets with all 64 subsets populated can be redistributed; the
    rest count as zero-capacity and are omitted by the max-rate rule.
    ``capacity`` is payload bits per pixel.
    """
    if census6.order != 6:
        raise ValueError("need a sextuplet census")
    totals = census6.totals()
    usable = np.all(census6.counts > 0, axis=1)
    alphas = np.zeros(len(totals))
    for i in np.flatnonzero(usable):
        alphas[i] = trace_set_capacity(census6.counts[i])
    n_tuples = census6.total()
    n_pixels = n_pixels or 6 * n_tuples
    keys = census6.keys()
    report = {
        "keys_with_empty_subsets": [k for k, u in zip(keys, usable) if not u and totals[keys.index(k)] > 0],
        "usable_keys": [k for k, u in zip(keys, usable) if u],
        "alpha": 0.0,
        "capacity": 0.0,
        "omitted_keys": [],
    }
    if not usable.any() or n_tuples == 0:
        return report
    try:
        sel = select_max_rate(alphas, totals, n_tuples)
    except ZeroCapacityError:
        return report
    kept = ~sel.omitted & (totals > 0)
    report["alpha"] = sel.alpha
    report["capacity"] = sel.alpha * 6 * float(totals[kept].sum()) / n_pixels
    report["omitted_keys"] = [k for k, o in zip(keys, sel.omitted) if o]
    return report


def embeddable_fraction(k: int) -> Fraction:
    """Fraction of samples still embeddable when protecting all orders up to ``k``.

    The block length is ``n = lcm(1..k)`` and only ``k//2 + 1`` samples of the
    first and last k-tuple of each block survive.  For ``k = 2`` the block is a
    single pair and every sample is embeddable.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    n = reduce(math.lcm, range(1, k + 1))
    return min(Fraction(1), Fraction(2 * (k // 2 + 1), n))


# --------------------------------------------------------------------------
# plan documents


def plan_document(plans, capacity: GridCapacity, alpha: float, seed: int) -> dict:
    """JSON-ready summary of a modification: rate, omitted keys and move counts."""
    channels = []
    for c in range(capacity.channels):
        fams = {}
        for p in plans:
            if p.channel == c:
                fams[p.family.name] = {"omitted": [list(k) for k in p.omitted_keys()], "moved": p.moved}
        channels.append({"channel": c, "families": fams})
    return {
        "order": capacity.strategy.order,
        "alpha": float(alpha),
        "capacity_alpha": float(capacity.alpha),
        "seed": int(seed),
        "embeddable_samples": capacity.embeddable_samples(alpha),
        "channels": channels,
    }
