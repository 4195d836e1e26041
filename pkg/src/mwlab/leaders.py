"""Wavelet leaders, pointwise exponents and the leader scaling function."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import isotonic_regression
from scipy.special import logsumexp

from .synthesis import CoefficientTree
from .thermo import SpectrumCurve, legendre

log = logging.getLogger(__name__)

LOG2 = math.log(2.0)
CONCAVIFY_FLAG = 0.05


@dataclass(frozen=True, eq=False)
class LeaderPyramid:
    """``leaders[j][k]`` is the sup of ``|d|`` over the dyadic subtree at ``(j, k)``."""

    J: int
    leaders: tuple
    perturbed: bool = True

    @classmethod
    def from_levels(cls, abs_levels, perturbed: bool = False) -> "LeaderPyramid":
        levels = [np.abs(np.asarray(a, dtype=float)) for a in abs_levels]
        for j, a in enumerate(levels):
            if a.shape != (2**j,):
                raise ValueError(f"level {j} must have {2**j} entries")
        out = [None] * len(levels)
        out[-1] = levels[-1]
        for j in range(len(levels) - 2, -1, -1):
            child = out[j + 1].reshape(-1, 2).max(axis=1)
            out[j] = np.maximum(levels[j], child)
        return cls(len(levels) - 1, tuple(out), perturbed)

    def level(self, j: int) -> np.ndarray:
        return self.leaders[j]

    def local_leader(self, x0, j: int) -> np.ndarray:
        """``L_j(x0)``: max over the (up to) three positions ``k0-1, k0, k0+1``."""
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        lev = self.leaders[j]
        n = lev.size
        k0 = np.floor(x0 * n).astype(np.int64)
        best = np.zeros(x0.shape)
        for d in (-1, 0, 1):
            k = k0 + d
            ok = (k >= 0) & (k < n)
            best[ok] = np.maximum(best[ok], lev[k[ok]])
        return best


def leader_pyramid(tree: CoefficientTree, use_perturbed: bool = True) -> LeaderPyramid:
    return LeaderPyramid.from_levels(
        [tree.abs_coefficients(j, use_perturbed) for j in range(tree.J + 1)], use_perturbed)


def _slope(j: np.ndarray, y: np.ndarray, w: np.ndarray | None = None):
    """Weighted least-squares slope with its standard error and R^2."""
    if w is None:
        w = np.ones_like(y)
    w = w / w.sum()
    jm = np.sum(w * j)
    ym = np.sum(w * y)
    sxx = np.sum(w * (j - jm) ** 2)
    slope = np.sum(w * (j - jm) * (y - ym)) / sxx
    resid = y - ym - slope * (j - jm)
    ss_res = np.sum(w * resid**2)
    ss_tot = np.sum(w * (y - ym) ** 2)
    n = y.size
    stderr = math.sqrt(ss_res / max(n - 2, 1) / sxx) if n > 2 else math.nan
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 1e-20 else 1.0  # flat line: perfect fit
    return float(slope), float(stderr), float(r2)


def default_window(J: int) -> tuple[int, int]:
    # the two finest levels see truncated subtrees; widen downward instead
    lo = max(3, J // 2 - 3)
    return lo, max(J - 2, lo + 2)


def pointwise_exponents(p: LeaderPyramid, x0, j_range=None) -> np.ndarray:
    """Regression slope of ``-log2 L_j(x0)`` against ``j``; NaN where every
    leader in the window vanishes."""
    lo, hi = j_range or default_window(p.J)
    if not 0 <= lo < hi <= p.J:
        raise ValueError("scale window outside pyramid depth")
    js = np.arange(lo, hi + 1, dtype=float)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if np.any((x0 < 0) | (x0 > 1)):
        raise ValueError("x0 must lie in [0, 1]")
    ys = np.stack([p.local_leader(x0, int(j)) for j in js])  # (levels, points)
    with np.errstate(divide="ignore"):
        ly = -np.log2(ys)
    out = np.full(x0.size, np.nan)
    finite = np.all(np.isfinite(ly), axis=0)
    if finite.any():
        jc = js - js.mean()
        yy = ly[:, finite]
        out[finite] = jc @ (yy - yy.mean(axis=0)) / np.sum(jc**2)
    partial = ~finite & np.any(np.isfinite(ly), axis=0)
    for i in np.nonzero(partial)[0]:
        ok = np.isfinite(ly[:, i])
        if ok.sum() >= 2:
            out[i] = _slope(js[ok], ly[ok, i])[0]
    return out


def pointwise_exponent(p: LeaderPyramid, x0: float, j_range=None) -> float:
    """Finite-scale leader exponent at ``x0``; NaN marks an undefined exponent."""
    h = float(pointwise_exponents(p, [x0], j_range)[0])
    if math.isnan(h):
        log.info("undefined exponent at x0=%g", x0)
    return h


@dataclass(frozen=True, eq=False)
class ScalingEstimate:
    q: np.ndarray
    xi_hat: np.ndarray
    stderr: np.ndarray
    r2: np.ndarray
    j_range: tuple[int, int]
    counts: np.ndarray = field(repr=False, default=None)

    def curve(self) -> SpectrumCurve:
        return SpectrumCurve(self.q, self.xi_hat, "xi")

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("q", "xi_hat", "stderr", "r2"))
            for row in zip(self.q, self.xi_hat, self.stderr, self.r2):
                w.writerow(tuple(repr(float(v)) for v in row))


def structure_functions(p: LeaderPyramid, q_grid, levels) -> tuple[np.ndarray, np.ndarray]:
    """``log2 sum_{L_{j,k} != 0} L_{j,k}^q`` for each level (rows) and q (columns)."""
    q = np.asarray(q_grid, dtype=float)
    out = np.full((len(levels), q.size), np.nan)
    counts = np.zeros(len(levels), dtype=np.int64)
    for i, j in enumerate(levels):
        lev = p.leaders[j]
        nz = lev[lev > 0]
        counts[i] = nz.size
        if nz.size:
            out[i] = logsumexp(np.outer(np.log(nz), q), axis=0) / LOG2
    return out, counts


def scaling_function(p: LeaderPyramid, q_grid, j_range=None) -> ScalingEstimate:
    """``xi_hat(q)``: minus the slope of ``log2 sum L^q`` against ``j``,
    weighted by the number of nonzero leaders per level."""
    lo, hi = j_range or default_window(p.J)
    if lo < 3 or hi > p.J or lo >= hi:
        raise ValueError("scale window must satisfy 3 <= jmin < jmax <= J")
    levels = list(range(lo, hi + 1))
    q = np.asarray(q_grid, dtype=float)
    sf, counts = structure_functions(p, q, levels)
    use = counts > 0
    if use.sum() < 3:
        raise ValueError("fewer than 3 usable levels")
    js = np.asarray(levels, dtype=float)[use]
    w = counts[use].astype(float)
    xi = np.empty(q.size)
    se = np.empty(q.size)
    r2 = np.empty(q.size)
    for i in range(q.size):
        s, e, r = _slope(js, sf[use, i], w)
        xi[i], se[i], r2[i] = -s, e, r
    return ScalingEstimate(q, xi, se, r2, (lo, hi), counts)


def concavify(q: np.ndarray, f: np.ndarray) -> tuple[np.ndarray, float]:
    """Least-squares concave fit: project the chord slopes onto nonincreasing
    sequences (weights = chord lengths), then re-integrate with the level
    chosen to match ``f`` on average.  Returns the curve and the max change."""
    dq = np.diff(q)
    slopes = np.diff(f) / dq
    fitted = isotonic_regression(slopes, weights=dq, increasing=False).x
    g = np.concatenate([[0.0], np.cumsum(fitted * dq)])
    g += np.mean(f - g)
    return g, float(np.max(np.abs(g - f)))


def legendre_spectrum(est: ScalingEstimate, h_grid) -> SpectrumCurve:
    """``xi*(h) = inf_q (q h - xi_hat(q))`` after concavification; negative
    values mean an empty level set and are reported as ``-inf``.  A level set
    counts as nonempty when ``h`` is within half a grid step of the slope
    range of ``xi_hat``."""
    g, change = concavify(est.q, est.xi_hat)
    if change > CONCAVIFY_FLAG:
        log.warning("concavification moved xi_hat by %.3f", change)
    curve = SpectrumCurve(est.q, g, "xi", {"concavified": change})
    h_grid = np.atleast_1d(np.asarray(h_grid, dtype=float))
    half = 0.5 * float(np.min(np.diff(h_grid))) if h_grid.size > 1 else 0.0
    out = legendre(curve, h_grid, alpha_tol=half)
    vals = np.where(out.values < 0, -np.inf, out.values)
    flags = dict(out.flags, concavify_change=change, concavify_flag=change > CONCAVIFY_FLAG)
    return SpectrumCurve(out.grid, vals, "xiStar", flags)


def spectrum_to_csv(curve: SpectrumCurve, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("h", "xi_star"))
        for h, v in zip(curve.grid, curve.values):
            w.writerow((repr(float(h)), repr(float(v))))
