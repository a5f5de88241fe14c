"""Structural LSB detectors: histogram chi-square, SPA and Triples.

SPA and Triples share one least-squares estimator.  For a trial rate
``alpha`` (change rate ``p = alpha/2``) the measured census is pulled back
through the inverse transition kernel and the parity-symmetry violations
``|E_d| - |O_d|`` (all entries of ``d`` odd) are squared, variance weighted
and summed; the estimate is the minimising ``alpha``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize, stats

from .pixel_store import as_grid, partition_tuples
from .trace_algebra import DEFAULT_RADIUS, TupleCensus, census, hamming_table, parity_pairs, scaled_inverse_basis

ALPHA_LO = -0.5
ALPHA_HI = 1.02
ALPHA_STEP = 1e-3
MIN_CALIBRATION_COVERS = 100
GOF_LEVEL = 0.999


class DegenerateCensusError(ValueError):
    """No tuples contribute to the symmetry being tested."""


@dataclass(frozen=True)
class RateEstimate:
    alpha_hat: float
    residual: float
    order: int


def _shell_sums(cen: TupleCensus) -> tuple[np.ndarray, np.ndarray]:
    """Hamming-shell sums of the E and O sides of every symmetry pair.

    With ``M = (1-2p)**g T_g(p)^-1`` the pulled-back size of subset ``i`` is
    ``sum_h basis[h] * shell[i, h]`` where ``shell[i, h]`` adds the counts at
    Hamming distance ``h`` from ``i``.
    """
    if not cen.dense:
        raise ValueError("detectors need a dense census")
    g = cen.order
    pairs = parity_pairs(g, cen.radius)
    ham = hamming_table(g)
    shells = np.stack([(ham == h) for h in range(g + 1)], axis=-1).astype(float)
    e_sh = np.einsum("nj,njh->nh", cen.counts[pairs[:, 0]], shells[pairs[:, 1]])
    o_sh = np.einsum("nj,njh->nh", cen.counts[pairs[:, 2]], shells[pairs[:, 3]])
    return e_sh, o_sh


def symmetry_objective(cen: TupleCensus, alpha) -> np.ndarray:
    """Weighted sum of squared parity-symmetry violations at rate(s) ``alpha``.

    Each violation ``|E_d| - |O_d|`` of the pulled-back census is divided by
    its Poisson variance estimate (plus one, so empty pairs drop out).  The
    weighting cancels the ``(1-2p)**g`` factor, so the objective is the same
    whether or not the inverse kernel is normalised, and it is finite at
    ``alpha = 1``.
    """
    e_sh, o_sh = _shell_sums(cen)
    basis = scaled_inverse_basis(cen.order, np.asarray(alpha, dtype=float) / 2.0)
    viol = basis @ (e_sh - o_sh).T
    var = basis ** 2 @ (e_sh + o_sh).T
    return (viol ** 2 / (var + 1.0)).sum(axis=-1)


def alpha_grid() -> np.ndarray:
    return np.arange(ALPHA_LO, ALPHA_HI + ALPHA_STEP / 2, ALPHA_STEP)


def least_squares_rate(cen: TupleCensus) -> RateEstimate:
    """Scan ``alpha`` over [-0.5, 1.02] in steps of 1e-3, then refine.

    The parity symmetry can leave a second, spurious minimum at high rates,
    where the pulled-back counts are so noisy that almost any census fits.
    A local minimum is therefore acceptable when it is within two standard
    deviations of the global minimum or when it passes a chi-square
    goodness-of-fit test (one degree of freedom per populated symmetry
    pair, level ``GOF_LEVEL``).  The acceptable minimum closest to zero wins.
    """
    e_sh, o_sh = _shell_sums(cen)
    if not np.any(e_sh + o_sh):
        raise DegenerateCensusError("census has no tuples in the symmetry-relevant subsets")
    grid = alpha_grid()
    vals = symmetry_objective(cen, grid)
    interior = (vals[1:-1] <= vals[:-2]) & (vals[1:-1] <= vals[2:])
    cand = np.flatnonzero(interior) + 1
    for edge in (0, len(grid) - 1):
        nb = 1 if edge == 0 else edge - 1
        if vals[edge] <= vals[nb]:
            cand = np.append(cand, edge)
    n_eff = int(np.count_nonzero((e_sh + o_sh).sum(axis=1)))
    n_eff = max(n_eff, 1)
    bound = max(vals.min() + 2.0 * np.sqrt(2.0 * n_eff), stats.chi2.ppf(GOF_LEVEL, n_eff))
    ok = cand[vals[cand] <= bound]
    if not len(ok):
        ok = np.array([int(np.argmin(vals))])
    i = int(ok[np.argmin(np.abs(grid[ok]))])
    best, fbest = float(grid[i]), float(vals[i])
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    res = optimize.minimize_scalar(lambda a: float(symmetry_objective(cen, a)), bounds=(lo, hi),
                                   method="bounded", options={"xatol": 1e-7})
    if res.fun <= fbest:
        best, fbest = float(res.x), float(res.fun)
    return RateEstimate(best, fbest, cen.order)


def spa_estimate(cen: TupleCensus) -> RateEstimate:
    if cen.order != 2:
        raise ValueError("SPA needs a pair census")
    return least_squares_rate(cen)


def triples_estimate(cen: TupleCensus) -> RateEstimate:
    if cen.order != 3:
        raise ValueError("Triples analysis needs a triplet census")
    return least_squares_rate(cen)


def channel_census(grid, channel: int, order: int, radius: int = DEFAULT_RADIUS) -> TupleCensus:
    return census(partition_tuples(grid, channel, order), radius)


def histogram_chi2(grid) -> tuple[float, float]:
    """Chi-square test of even/odd bin equalisation.

    Returns ``(statistic, p_value)``; a p-value near 1 means the pairs of
    value bins look evened out, as after heavy LSB embedding.
    """
    hist = np.bincount(np.asarray(grid, dtype=np.uint8).ravel(), minlength=256).astype(float)
    even, odd = hist[0::2], hist[1::2]
    mean = (even + odd) / 2.0
    used = mean > 0
    k = int(used.sum())
    if k == 0:
        return 0.0, 1.0
    stat = float((((even - mean) ** 2 + (odd - mean) ** 2)[used] / mean[used]).sum())
    if k == 1:
        return stat, 1.0 if stat == 0 else float(stats.chi2.sf(stat, 1))
    return stat, float(stats.chi2.sf(stat, k - 1))


# --------------------------------------------------------------------------
# thresholds and reports


@dataclass(frozen=True)
class DetectionThresholds:
    spa: tuple[float, float]
    triples: tuple[float, float]

    def to_json(self) -> str:
        return json.dumps({"spa": list(self.spa), "triples": list(self.triples)})

    @classmethod
    def from_json(cls, text: str) -> "DetectionThresholds":
        doc = json.loads(text)
        return cls(tuple(doc["spa"]), tuple(doc["triples"]))


def signed_max(values) -> float:
    """The entry of largest magnitude, keeping its sign."""
    values = np.asarray(values, dtype=float)
    return float(values[np.argmax(np.abs(values))])


def image_estimates(grid, radius: int = DEFAULT_RADIUS) -> dict:
    """Per-channel SPA/Triples estimates of an image."""
    grid = as_grid(grid)
    spa, tri = [], []
    for c in range(grid.shape[2]):
        spa.append(spa_estimate(channel_census(grid, c, 2, radius)).alpha_hat)
        tri.append(triples_estimate(channel_census(grid, c, 3, radius)).alpha_hat)
    return {"spa": spa, "triples": tri}


def calibrate_thresholds(covers, min_covers: int = MIN_CALIBRATION_COVERS,
                         radius: int = DEFAULT_RADIUS) -> DetectionThresholds:
    """95% bands (2.5th and 97.5th percentiles) of cover estimates.

    ``covers`` is an iterable of grids or of precomputed :func:`image_estimates`
    dicts.  Colour images contribute their largest-magnitude channel.
    """
    spa, tri = [], []
    for cov in covers:
        est = cov if isinstance(cov, dict) else image_estimates(cov, radius)
        spa.append(signed_max(est["spa"]))
        tri.append(signed_max(est["triples"]))
    if len(spa) < min_covers:
        raise ValueError(f"calibration needs at least {min_covers} covers, got {len(spa)}")
    lo_s, hi_s = np.percentile(spa, [2.5, 97.5])
    lo_t, hi_t = np.percentile(tri, [2.5, 97.5])
    return DetectionThresholds((float(lo_s), float(hi_s)), (float(lo_t), float(hi_t)))


def _outside(value: float, band) -> bool:
    return value < band[0] or value > band[1]


@dataclass
class DetectionReport:
    spa_alpha: list
    triples_alpha: list
    spa_flagged: list
    triples_flagged: list
    chi2_p: float
    channels: list = field(default_factory=list)

    @property
    def flagged(self) -> bool:
        return any(self.spa_flagged) or any(self.triples_flagged)

    @property
    def spa(self) -> float:
        return signed_max(self.spa_alpha)

    @property
    def triples(self) -> float:
        return signed_max(self.triples_alpha)

    def rows(self) -> list[dict]:
        return [
            {"channel": c, "spa_alpha": self.spa_alpha[c], "triples_alpha": self.triples_alpha[c],
             "chi2_p": self.chi2_p, "flagged": bool(self.spa_flagged[c] or self.triples_flagged[c])}
            for c in range(len(self.spa_alpha))
        ]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["flagged"] = self.flagged
        return d


def detect(grid, thresholds: DetectionThresholds | None = None,
           radius: int = DEFAULT_RADIUS, estimates: dict | None = None) -> DetectionReport:
    """Run SPA and Triples on every channel and compare with the bands.

    Without thresholds nothing is flagged; estimates are still reported.
    """
    grid = as_grid(grid)
    est = estimates or image_estimates(grid, radius)
    if thresholds is None:
        sflag = [False] * len(est["spa"])
        tflag = [False] * len(est["triples"])
    else:
        sflag = [_outside(a, thresholds.spa) for a in est["spa"]]
        tflag = [_outside(a, thresholds.triples) for a in est["triples"]]
    _, p = histogram_chi2(grid)
    return DetectionReport(list(est["spa"]), list(est["triples"]), sflag, tflag, p,
                           list(range(grid.shape[2])))
