"""Finite-scale geometry of sampled series: oscillation exponents, dyadic
covers of iso-Hölder and carrier sets, box-counting dimensions of graphs
and ranges, Riesz-type energies, and an end-to-end spectrum check.

Box counts see the series as the piecewise-linear interpolant of its
samples, so each grid segment contributes the interval between its two
endpoint values.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .leaders import LeaderPyramid, pointwise_exponents
from .synthesis import CoefficientTree, SampledSeries
from .thermo import (LOG2, GibbsModel, RestrictedExponents, dimension_upper_bounds,
                     theorem_spectra)

log = logging.getLogger(__name__)

PAIR_GUARD = 10**8
ENERGY_BLOCK = 2048
AUDIT_TOL = 0.1


# ---------------------------------------------------------------------------
# covers


@dataclass(frozen=True, eq=False)
class DyadicCover:
    """Words of one length ``n``, stored as sorted integer codes."""

    n: int
    codes: np.ndarray
    info: dict = field(default_factory=dict)
    mass: float | None = None

    def __post_init__(self):
        c = np.unique(np.asarray(self.codes, dtype=np.int64))
        if c.size and (c[0] < 0 or c[-1] >= 2**self.n):
            raise ValueError("cover codes out of range")
        object.__setattr__(self, "codes", c)

    @classmethod
    def full(cls, n: int) -> "DyadicCover":
        return cls(n, np.arange(2**n))

    def __len__(self):
        return int(self.codes.size)

    @property
    def words(self) -> list[str]:
        return [format(int(c), f"0{self.n}b") if self.n else "" for c in self.codes]

    @property
    def midpoints(self) -> np.ndarray:
        return (self.codes + 0.5) / 2.0**self.n

    def issubset(self, other: "DyadicCover") -> bool:
        return self.n == other.n and bool(np.all(np.isin(self.codes, other.codes)))


@dataclass(frozen=True)
class DimEstimate:
    value: float
    stderr: float
    scale_range: tuple[int, int]
    counts: tuple
    method: str


def _fit_scales(js: np.ndarray, counts: np.ndarray, method: str) -> DimEstimate:
    if js.size < 4:
        raise ValueError("slope fit needs at least 4 scales")
    y = np.log2(counts.astype(float))
    coef, cov = np.polyfit(js, y, 1, cov=True) if js.size > 3 else (np.polyfit(js, y, 1), None)
    se = float(math.sqrt(cov[0, 0])) if cov is not None else math.nan
    return DimEstimate(float(coef[0]), se, (int(js[0]), int(js[-1])),
                       tuple(int(c) for c in counts), method)


# ---------------------------------------------------------------------------
# oscillation


def _window_osc(samples: np.ndarray, idx: np.ndarray, rad: int) -> np.ndarray:
    lo = np.clip(idx - rad, 0, samples.size - 1)
    hi = np.clip(idx + rad, 0, samples.size - 1)
    out = np.empty(idx.size)
    for i, (a, b) in enumerate(zip(lo, hi)):
        seg = samples[a:b + 1]
        out[i] = seg.max() - seg.min()
    return out


def oscillation_exponents(s: SampledSeries, x0, radii) -> np.ndarray:
    """Slope of ``log2 osc(B(x0, r))`` against ``log2 r`` per point; NaN where
    the series is locally constant at every radius."""
    radii = np.asarray(radii, dtype=float)
    steps = radii * 2.0**s.G
    if np.any(steps < 1) or np.any(steps != np.round(steps)):
        raise ValueError("radii must be multiples of the grid step")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    idx = np.round(x0 * 2.0**s.G).astype(np.int64)
    osc = np.stack([_window_osc(s.samples, idx, int(r)) for r in steps])
    lr = np.log2(radii)
    out = np.full(x0.size, np.nan)
    with np.errstate(divide="ignore"):
        lo = np.log2(osc)
    for i in range(x0.size):
        ok = np.isfinite(lo[:, i])
        if ok.sum() >= 2:
            out[i] = np.polyfit(lr[ok], lo[ok, i], 1)[0]
    return out


def oscillation_exponent(s: SampledSeries, x0: float, radii) -> float:
    h = float(oscillation_exponents(s, [x0], radii)[0])
    if math.isnan(h):
        log.info("locally constant at x0=%g", x0)
    return h


def word_exponents(p: LeaderPyramid, n: int) -> np.ndarray:
    """Leader exponent of every word of length ``n`` read at its midpoint over
    the levels ``max(3, ceil(n/2)) .. n + 2``."""
    if n > p.J - 2:
        raise ValueError("n must be at most pyramid depth - 2")
    mids = (np.arange(2**n) + 0.5) / 2.0**n
    return pointwise_exponents(p, mids, (max(3, (n + 1) // 2), n + 2))


def iso_holder_cover(p: LeaderPyramid, h: float, tol: float, n: int) -> DyadicCover:
    """Words of length ``n`` whose exponent lies within ``tol`` of ``h``."""
    e = word_exponents(p, n)
    codes = np.nonzero(np.abs(e - h) <= tol)[0]
    if codes.size == 0:
        log.info("empty iso-Hölder cover h=%g tol=%g n=%d", h, tol, n)
    return DyadicCover(n, codes, {"h": h, "tol": tol})


def _word_oscillation(s: SampledSeries, n: int) -> np.ndarray:
    """Oscillation of the samples over each length-``n`` interval together with
    its two neighbours."""
    step = 2 ** (s.G - n)
    if step < 1:
        raise ValueError("cover level finer than the sample grid")
    blocks = s.samples[:-1].reshape(2**n, step)
    ends = s.samples[step::step]
    bmax = np.maximum(blocks.max(axis=1), ends)
    bmin = np.minimum(blocks.min(axis=1), ends)
    hi, lo = bmax.copy(), bmin.copy()
    hi[1:] = np.maximum(hi[1:], bmax[:-1])
    hi[:-1] = np.maximum(hi[:-1], bmax[1:])
    lo[1:] = np.minimum(lo[1:], bmin[:-1])
    lo[:-1] = np.minimum(lo[:-1], bmin[1:])
    return hi - lo


def carrier_cover(gm_q: GibbsModel, tree: CoefficientTree, series: SampledSeries,
                  rx: RestrictedExponents, eps: float, n: int) -> DyadicCover:
    """Words passing the coefficient, measure and oscillation windows; the
    ``mass`` attribute holds the captured ``mu_q`` mass."""
    h, d = rx.hK, rx.dK
    mags = tree.magnitudes[n]
    mu = gm_q.level_masses(n)
    osc = _word_oscillation(series, n)
    with np.errstate(divide="ignore"):
        ld = np.log2(mags)
        lm = np.log2(mu)
    a = (ld >= -n * (h + eps)) & (ld <= -n * (h - eps))
    b = (lm >= -n * (d + eps)) & (lm <= -n * (d - eps))
    c = osc <= 2.0 ** (-n * (h - eps))
    keep = a & b & c
    codes = np.nonzero(keep)[0]
    return DyadicCover(n, codes, {"q": rx.q, "eps": eps}, float(mu[keep].sum()))


# ---------------------------------------------------------------------------
# box counting


def _pieces(series: SampledSeries, cover: DyadicCover | None, level: int):
    """Value ranges of the interpolant over the level-``level`` dyadic pieces
    inside the cover (``level >= cover.n``).  Returns (codes, mins, maxs)."""
    step = 2 ** (series.G - level)
    blocks = series.samples[:-1].reshape(2**level, step)
    ends = series.samples[step::step]
    mx = np.maximum(blocks.max(axis=1), ends)
    mn = np.minimum(blocks.min(axis=1), ends)
    codes = np.arange(2**level)
    if cover is not None:
        keep = np.zeros(2**cover.n, dtype=bool)
        keep[cover.codes] = True
        sel = keep[codes >> (level - cover.n)]
        codes, mn, mx = codes[sel], mn[sel], mx[sel]
    return codes, mn, mx


def _cover_at(cover, j: int) -> DyadicCover | None:
    """A single cover is used at every scale; a mapping supplies one per scale."""
    if cover is None or isinstance(cover, DyadicCover):
        return cover
    return cover[j]


def _union_count(col: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> int:
    """Number of distinct integer cells in the per-column unions of [lo, hi]."""
    if lo.size == 0:
        return 0
    span = int(hi.max() - lo.min()) + 2
    base = lo.min()
    lo2 = (lo - base) + col * span
    hi2 = (hi - base) + col * span
    order = np.argsort(lo2, kind="stable")
    lo2, hi2 = lo2[order], hi2[order]
    run = np.maximum.accumulate(hi2)
    prev = np.concatenate([[lo2[0] - 1], run[:-1]])
    return int(np.sum(np.maximum(0, hi2 - np.maximum(lo2 - 1, prev))))


def _box_counts(series: SampledSeries, cover, scales, graph: bool):
    counts = []
    for j in scales:
        cov = _cover_at(cover, int(j))
        if cov is not None and len(cov) == 0:
            raise ValueError("empty set")
        level = j if cov is None else max(j, cov.n)
        codes, mn, mx = _pieces(series, cov, level)
        delta = 2.0**-j
        lo = np.floor(mn / delta).astype(np.int64)
        hi = np.floor(mx / delta).astype(np.int64)
        col = (codes >> (level - j)) if graph else np.zeros_like(codes)
        counts.append(_union_count(col, lo, hi))
    return np.asarray(counts)


def _check_scales(series: SampledSeries, scales) -> np.ndarray:
    js = np.asarray(sorted(scales), dtype=np.int64)
    if js.size < 4:
        raise ValueError("need at least 4 scales")
    if js[0] < 1 or js[-1] > series.G:
        raise ValueError("scales outside the sample grid")
    return js


def default_scales(G: int) -> list[int]:
    # the finest scales resolve no further detail of a series truncated at J = G
    return list(range(max(4, G // 2 - 3), G - 2))


def graph_box_dimension(series: SampledSeries, cover=None, scales=None) -> DimEstimate:
    """Box-counting dimension of ``{(x, f(x)) : x in cover}``.

    ``cover`` is ``None`` (whole interval), a :class:`DyadicCover`, or a
    mapping from scale ``j`` to the cover used at that scale.
    """
    js = _check_scales(series, scales or default_scales(series.G))
    return _fit_scales(js, _box_counts(series, cover, js, graph=True), "boxGraph")


def range_box_dimension(series: SampledSeries, cover=None, scales=None) -> DimEstimate:
    """Box-counting dimension of ``{f(x) : x in cover}``; covers as for
    :func:`graph_box_dimension`."""
    js = _check_scales(series, scales or default_scales(series.G))
    return _fit_scales(js, _box_counts(series, cover, js, graph=False), "boxRange")


# ---------------------------------------------------------------------------
# energies


@dataclass(frozen=True)
class EnergyReport:
    gamma: float
    kernel: str
    energy: float
    finite: bool
    pairs: int


def _kernel_block(df: np.ndarray, dx: np.ndarray, gamma: float, graph: bool) -> np.ndarray:
    with np.errstate(divide="ignore"):
        if graph:
            r2 = df * df + dx * dx
            k = r2 ** (-gamma / 2.0)
        else:
            k = np.abs(df) ** (-gamma)
    return np.maximum(k, 1.0)


def _energy(x: np.ndarray, f: np.ndarray, w: np.ndarray, gamma: float, graph: bool) -> float:
    total = 0.0
    n = x.size
    for a in range(0, n, ENERGY_BLOCK):
        sl = slice(a, min(a + ENERGY_BLOCK, n))
        k = _kernel_block(f[sl, None] - f[None, :], x[sl, None] - x[None, :], gamma, graph)
        rows = np.arange(sl.start, sl.stop)
        k[rows - a, rows] = 0.0
        total += float(w[sl] @ k @ w)
    return total


def _cover_points(series: SampledSeries, cover: DyadicCover):
    if cover.n >= series.G:
        raise ValueError("cover level must be coarser than the sample grid")
    idx = (2 * cover.codes + 1) * 2 ** (series.G - cover.n - 1)
    return cover.midpoints, series.samples[idx]


def riesz_energy(series: SampledSeries, cover: DyadicCover, weights, gamma: float,
                 budget: float = math.inf, seed: int = 0) -> EnergyReport:
    """``sum_{w != u} nu_w nu_u K_gamma(x_w, x_u)`` over cover midpoints.

    ``gamma > 1`` uses the graph kernel, ``gamma < 1`` the range kernel.
    Above the pair guard a deterministic subsample of the words is used.
    """
    if gamma == 1.0:
        raise ValueError("excluded exponent")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    w = np.asarray(weights, dtype=float)
    if w.shape != (len(cover),):
        raise ValueError("one weight per cover word")
    if np.any(w < 0) or w.sum() > 1 + 1e-9:
        raise ValueError("weights must form a sub-probability vector")
    x, f = _cover_points(series, cover)
    pairs = x.size * (x.size - 1)
    if pairs > PAIR_GUARD:
        m = int(math.isqrt(PAIR_GUARD))
        pick = np.sort(np.random.default_rng(seed).choice(x.size, m, replace=False))
        scale = w.sum() / w[pick].sum()
        x, f, w = x[pick], f[pick], w[pick] * scale
        pairs = m * (m - 1)
    graph = gamma > 1.0
    e = _energy(x, f, w, gamma, graph)
    finite = bool(np.isfinite(e) and e <= budget)
    return EnergyReport(float(gamma), "graph" if graph else "range", e, finite, pairs)


def energy_growth(series: SampledSeries, weight_fn, gamma: float, levels) -> float:
    """Slope of ``log2 E_n`` against ``n`` where ``E_n`` is the energy of the
    level-``n`` discretisation with weights ``weight_fn(n)`` on all words."""
    vals = []
    for n in levels:
        w = np.asarray(weight_fn(n), dtype=float)
        cover = DyadicCover(n, np.nonzero(w > 0)[0])
        r = riesz_energy(series, cover, w[cover.codes], gamma)
        if not np.isfinite(r.energy):
            return math.inf
        vals.append(math.log2(r.energy))
    return float(np.polyfit(np.asarray(levels, dtype=float), vals, 1)[0])


@dataclass(frozen=True)
class EnergyScan:
    threshold: float
    kernel: str
    gammas: tuple
    growth: tuple
    budget: float


def critical_growth(levels) -> float:
    """Growth rate of ``log2 E_n`` when ``E_n`` is proportional to ``n``, the
    borderline between convergent and divergent energies."""
    lv = np.asarray(levels, dtype=float)
    return float(np.polyfit(lv, np.log2(lv), 1)[0])


def energy_scan(series: SampledSeries, weight_fn, kernel: str = "graph", levels=(6, 7, 8, 9, 10),
                budget: float | None = None, coarse: float = 0.05, fine: float = 0.01) -> EnergyScan:
    """Largest ``gamma`` whose energy growth rate stays within ``budget``.

    The default budget is :func:`critical_growth`: energies growing no faster
    than logarithmically in the resolution count as finite.  The scan steps
    by ``coarse``, then by ``fine`` above the last admissible coarse value;
    ``gamma = 1`` is skipped.
    """
    if kernel == "graph":
        lo, hi = 1.0 + coarse, 3.0
    elif kernel == "range":
        lo, hi = coarse, 1.0 - fine
    else:
        raise ValueError(f"unknown kernel {kernel!r}")
    if budget is None:
        budget = critical_growth(levels)
    gs, gr = [], []

    def ok(g):
        rate = energy_growth(series, weight_fn, g, levels)
        gs.append(round(g, 6))
        gr.append(rate)
        return rate <= budget

    best = None
    g = lo
    while g <= hi + 1e-12:
        if not ok(g):
            break
        best = g
        g = round(g + coarse, 10)
    if best is None:
        thr = 1.0 if kernel == "graph" else 0.0
    else:
        thr = best
        g = round(best + fine, 10)
        while g < best + coarse - 1e-12 and g <= hi:
            if not ok(g):
                break
            thr = g
            g = round(g + fine, 10)
    order = np.argsort(gs, kind="stable")
    return EnergyScan(float(thr), kernel, tuple(float(v) for v in np.asarray(gs)[order]),
                      tuple(float(v) for v in np.asarray(gr)[order]), float(budget))


# ---------------------------------------------------------------------------
# verification


def default_radii(G: int) -> list[float]:
    return [2.0**-j for j in range(max(3, G // 2 - 3), G - 2)]


def median_exponent(series: SampledSeries, n_points: int = 100, seed: int = 0,
                    radii=None) -> float:
    """Median oscillation exponent at uniformly drawn interior points."""
    x0 = np.random.default_rng(seed).uniform(0.05, 0.95, n_points)
    return float(np.nanmedian(oscillation_exponents(series, x0, radii or default_radii(series.G))))


def upper_bound_audit(dim_e: float, h_min: float, graph: float, rng: float,
                    tol: float = AUDIT_TOL) -> dict:
    """Compare box estimates with the upper bounds for a set of dimension
    ``dim_e`` on which the exponent is at least ``h_min``."""
    gb, rb = dimension_upper_bounds(dim_e, h_min)
    return {"graph_bound": gb, "range_bound": rb,
            "graph_excess": graph - gb, "range_excess": rng - rb,
            "ok": bool(graph <= gb + tol and rng <= rb + tol)}


@dataclass
class QRecord:
    q: float
    status: str
    predicted: dict = field(default_factory=dict)
    estimated: dict = field(default_factory=dict)
    gaps: dict = field(default_factory=dict)
    audit: dict = field(default_factory=dict)


GAP_KEYS = ("h", "xi_star", "dG", "dR", "gammaG")
DEFAULT_TOLERANCES = {"h": 0.1, "xi_star": 0.15, "dG": 0.15, "dR": 0.1}


@dataclass
class VerifyReport:
    records: list
    tolerances: dict
    config: dict = field(default_factory=dict)

    def failures(self) -> list[str]:
        out = []
        for r in self.records:
            if r.status != "ok":
                continue
            for k, g in r.gaps.items():
                tol = self.tolerances.get(k)
                if tol is not None and not abs(g) <= tol:
                    out.append(f"q={r.q:g} {k}: gap {g:+.4f} exceeds {tol:g}")
            if r.audit and not r.audit.get("ok", True):
                out.append(f"q={r.q:g} dimension upper bound exceeded")
        return out

    @property
    def passed(self) -> bool:
        return not self.failures()

    def to_dict(self) -> dict:
        return {"schema": 1, "passed": self.passed, "tolerances": self.tolerances,
                "config": self.config, "records": [asdict(r) for r in self.records],
                "failures": self.failures()}

    def to_json(self) -> str:
        return json.dumps(_clean(self.to_dict()), sort_keys=True, indent=2) + "\n"

    def csv_rows(self):
        yield ("q", "status") + tuple(f"{p}_{k}" for p in ("pred", "est", "gap") for k in GAP_KEYS)
        for r in self.records:
            row = [repr(r.q), r.status]
            for d in (r.predicted, r.estimated, r.gaps):
                row += [_fmt(d.get(k)) for k in GAP_KEYS]
            yield tuple(row)

    def to_csv(self) -> str:
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerows(self.csv_rows())
        return buf.getvalue()


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def _clean(o):
    if isinstance(o, dict):
        return {str(k): _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, (bool, np.bool_)):
        return bool(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating, float)):
        f = float(o)
        return f if math.isfinite(f) else ("inf" if f > 0 else "-inf" if f < 0 else "nan")
    return o


def cover_box_dimension(cover: DyadicCover, scales) -> DimEstimate:
    """Box-counting dimension of the union of the cover intervals, at scales
    no finer than the cover level."""
    js = np.asarray(sorted(scales), dtype=np.int64)
    if js[-1] > cover.n:
        raise ValueError("scales finer than the cover level")
    if len(cover) == 0:
        raise ValueError("empty set")
    counts = np.array([np.unique(cover.codes >> (cover.n - j)).size for j in js])
    return _fit_scales(js, counts, "boxSet")


def verify_theorem(series: SampledSeries, pyramid: LeaderPyramid, gm: GibbsModel,
                   restricted: dict, q_list, s0: float, p0: float, h_tol: float = 0.1,
                   cover_level: int = 10, growth_levels=(6, 7, 8, 9, 10), scales=None,
                   tolerances: dict | None = None, energy: bool = True,
                   energy_levels=(6, 7, 8, 9, 10)) -> VerifyReport:
    """Predicted versus estimated spectrum values for each ``q``.

    ``gm`` is the equilibrium state behind the series and ``restricted[q]``
    the exponents on the zero-avoiding subshift; a ``q`` is skipped unless
    ``0 < hK < 1``, ``dK > 0`` and the full-shift ``h`` and ``xi*`` satisfy
    the same.  Predictions: ``h = s0 - 1/p0 + tau'(q)/p0``,
    ``xi*(h) = tau*(tau'(q))`` and :func:`thermo.theorem_spectra`.
    Estimates: growth rate of the iso-Hölder cover size over
    ``growth_levels``; median oscillation exponent, graph and range box
    dimensions on the level-``cover_level`` cover; the energy-scan threshold
    with ``mu_q`` weights (reported, gated only if a tolerance is given).
    """
    tolerances = dict(DEFAULT_TOLERANCES if tolerances is None else tolerances)
    scales = [j for j in (scales or default_scales(series.G)) if j <= cover_level]
    records = []
    p1 = GibbsModel(gm.sft, gm.potential, 1.0).pressure
    for q in q_list:
        rx = restricted[q]
        rec = QRecord(float(q), "ok")
        if not (0.0 < rx.hK < 1.0 and rx.dK > 0.0):
            rec.status = "skipped: outside theorem hypotheses"
            records.append(rec)
            continue
        gq = GibbsModel(gm.sft, gm.potential, q)
        alpha = (p1 - gq.expectation()) / LOG2
        h = s0 - 1.0 / p0 + alpha / p0
        xi_star = (gq.pressure - q * gq.expectation()) / LOG2
        if not (0.0 < h < 1.0 and xi_star > 0.0):
            rec.status = "skipped: outside theorem hypotheses"
            rec.predicted = {"h": h, "xi_star": xi_star, "hK": rx.hK, "dK": rx.dK}
            records.append(rec)
            continue
        dg, dr = theorem_spectra(h, xi_star)
        rec.predicted = {"h": h, "xi_star": xi_star, "dG": dg, "dR": dr, "gammaG": dg,
                         "hK": rx.hK, "dK": rx.dK, "gammaG_k": rx.gammaG, "gammaR_k": rx.gammaR}
        cover = iso_holder_cover(pyramid, h, h_tol, cover_level)
        sizes = np.array([len(iso_holder_cover(pyramid, h, h_tol, n)) for n in growth_levels])
        if len(cover) == 0 or np.any(sizes == 0):
            rec.status = "skipped: empty cover"
            records.append(rec)
            continue
        growth = float(np.polyfit(growth_levels, np.log2(sizes), 1)[0])
        h_est = oscillation_exponents(series, cover.midpoints, default_radii(series.G))
        g_dim = graph_box_dimension(series, cover, scales)
        r_dim = range_box_dimension(series, cover, scales)
        e_dim = cover_box_dimension(cover, scales)
        rec.estimated = {"h": float(np.nanmedian(h_est)), "xi_star": growth,
                         "dG": g_dim.value, "dR": r_dim.value, "dimE_box": e_dim.value,
                         "h_min": float(np.nanquantile(h_est, 0.05)),
                         "cover_size": len(cover)}
        if energy:
            sc = energy_scan(series, gq.level_masses, "graph", levels=energy_levels)
            rec.estimated["gammaG"] = sc.threshold
        rec.gaps = {k: rec.estimated[k] - rec.predicted[k] for k in GAP_KEYS
                    if k in rec.estimated}
        rec.audit = upper_bound_audit(e_dim.value, rec.estimated["h_min"], g_dim.value, r_dim.value)
        records.append(rec)
    return VerifyReport(records, tolerances)
