"""Thermodynamic formalism for locally constant potentials on binary SFTs.

A potential of range ``m`` depends on the first ``m`` symbols only.  For
such potentials the pressure, the equilibrium (Gibbs) measure and every
quantity derived from them reduce to Perron-Frobenius data of a weighted
transition matrix on words of length ``d = max(m, k - 1)``.

Pressure is kept in nats; L^q spectra and dimensions are in base 2.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.special import logsumexp
from scipy.sparse.csgraph import connected_components

from .symbolic import (EmptySubshiftError, Sft, admissible_indices, check_word,
                       word_index)

LOG2 = math.log(2.0)
ORACLE_MAX_N = 22
TAU_ORACLE_MAX_N = 20
CONCAVITY_TOL = 1e-9


# ---------------------------------------------------------------------------
# potentials


@dataclass(frozen=True, eq=False)
class Potential:
    """Locally constant potential; ``values[i]`` is phi on the cylinder of
    the length-``range`` word with integer code ``i``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).copy()
        n = v.size
        if n < 2 or n & (n - 1):
            raise ValueError("potential table must have 2^m entries, m >= 1")
        if not np.all(np.isfinite(v)):
            raise ValueError("potential values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def range(self) -> int:
        return self.values.size.bit_length() - 1

    @property
    def degenerate(self) -> bool:
        """Constant potentials give the trivial (uniform-type) case."""
        return bool(np.ptp(self.values) == 0.0)

    @classmethod
    def constant(cls, c: float = 0.0, m: int = 1) -> "Potential":
        return cls(np.full(2**m, float(c)))

    @classmethod
    def bernoulli(cls, p: float) -> "Potential":
        """phi(0) = log p, phi(1) = log(1 - p): the Bernoulli(p) measure."""
        if not 0.0 < p < 1.0:
            raise ValueError("bernoulli parameter must lie in (0, 1)")
        return cls(np.array([math.log(p), math.log1p(-p)]))

    @classmethod
    def from_table(cls, table: dict[str, float]) -> "Potential":
        lengths = {len(w) for w in table}
        if len(lengths) != 1:
            raise ValueError("potential table keys must share one length")
        m = lengths.pop()
        vals = np.full(2**m, np.nan)
        for w, v in table.items():
            vals[word_index(check_word(w))] = v
        if np.isnan(vals).any():
            raise ValueError(f"potential table must list all {2**m} words of length {m}")
        return cls(vals)

    def __call__(self, w: str) -> float:
        if len(w) < self.range:
            raise ValueError("word shorter than potential range")
        return float(self.values[word_index(w[: self.range])])

    def on_words(self, codes: np.ndarray, length: int) -> np.ndarray:
        """phi evaluated on integer-coded words of a given length >= range."""
        return self.values[np.asarray(codes) >> (length - self.range)]


def birkhoff_sum(phi: Potential, w: str) -> float:
    """Sum of phi over the ``|w| - m + 1`` windows of length ``m`` in ``w``."""
    m = phi.range
    if len(w) < m:
        raise ValueError("word shorter than potential range")
    check_word(w)
    return float(sum(phi.values[word_index(w[i:i + m])] for i in range(len(w) - m + 1)))


def _window_sums(phi: Potential, codes: np.ndarray, length: int, n_terms: int) -> np.ndarray:
    m = phi.range
    mask = (1 << m) - 1
    total = np.zeros(codes.shape, dtype=float)
    for i in range(n_terms):
        total += phi.values[(codes >> (length - m - i)) & mask]
    return total


# ---------------------------------------------------------------------------
# lifted state space


def _lift(x: Sft, d: int):
    """Valid depth-``d`` states and edges of ``x`` (``d >= k - 1``).

    Returns (state_ok[2^d], edge_ok[2^d, 2^d]) as boolean arrays indexed by
    word codes.
    """
    k = x.k
    adj = x.adjacency
    live = x.live
    km = (1 << (k - 1)) - 1

    def windows_ok(codes: np.ndarray, length: int) -> np.ndarray:
        ok = np.ones(codes.shape, dtype=bool)
        for i in range(length - (k - 1) + 1):
            ok &= live[(codes >> (length - (k - 1) - i)) & km]
        for i in range(length - k + 1):
            win = (codes >> (length - k - i)) & ((1 << k) - 1)
            ok &= adj[win >> 1, win & km]
        return ok

    n = 1 << d
    states = np.arange(n, dtype=np.int64)
    state_ok = windows_ok(states, d)
    edge_ok = np.zeros((n, n), dtype=bool)
    mask = n - 1
    for b in (0, 1):
        e = (states << 1) | b
        ok = windows_ok(e, d + 1) & state_ok & state_ok[e & mask]
        edge_ok[states[ok], (e & mask)[ok]] = True
    return state_ok, edge_ok


def _perron(m: np.ndarray):
    """Perron root and positive right/left eigenvectors of an irreducible matrix."""
    ev, vr = np.linalg.eig(m)
    i = int(np.argmax(ev.real))
    lam = float(ev[i].real)
    r = np.abs(vr[:, i].real)
    evl, vl = np.linalg.eig(m.T)
    j = int(np.argmax(evl.real))
    l = np.abs(vl[:, j].real)
    # one inverse-iteration style refinement keeps the vectors consistent
    r = m @ r / lam
    l = l @ m / lam
    return lam, r / r.sum(), l / l.sum()


class GibbsModel:
    """Equilibrium state of ``q * phi`` on a transitive SFT.

    The measure is the stationary Markov chain on depth-``d`` words obtained
    from the Perron data of ``M[i, j] = exp(q phi(i))`` over admissible edges.
    """

    def __init__(self, sft: Sft, potential: Potential, q: float = 1.0):
        if sft.is_empty:
            raise EmptySubshiftError("empty subshift")
        self.sft = sft
        self.potential = potential
        self.q = float(q)
        self.depth = max(potential.range, sft.k - 1)
        state_ok, edge_ok = _lift(sft, self.depth)
        idx = np.nonzero(state_ok)[0]
        sub = edge_ok[np.ix_(idx, idx)]
        ncomp, _ = connected_components(sub.astype(np.int8), directed=True, connection="strong")
        if ncomp != 1:
            raise ValueError("GibbsModel needs a topologically transitive subshift")
        self.state_codes = idx
        w = self.q * potential.on_words(idx, self.depth)
        shift = float(w.max())
        mq = sub * np.exp(w - shift)[:, None]
        lam, r, l = _perron(mq)
        self.pressure = math.log(lam) + shift
        self.right = r
        self.left = l
        trans = mq * r[None, :] / (lam * r[:, None])
        trans /= trans.sum(axis=1, keepdims=True)
        pi = l * r
        self.stationary = pi / pi.sum()
        n = 1 << self.depth
        self._pi_full = np.zeros(n)
        self._pi_full[idx] = self.stationary
        self._p_full = np.zeros((n, n))
        self._p_full[np.ix_(idx, idx)] = trans
        self._levels: dict[int, np.ndarray] = {}

    @property
    def transition_probabilities(self) -> np.ndarray:
        return self._p_full

    def level_masses(self, n: int) -> np.ndarray:
        """``mu([w])`` for every ``w`` of length ``n``, indexed by word code."""
        if n < 0:
            raise ValueError("level must be >= 0")
        if n in self._levels:
            return self._levels[n]
        d = self.depth
        if n <= d:
            out = self._pi_full.reshape(1 << n, 1 << (d - n)).sum(axis=1)
        else:
            prev = self.level_masses(n - 1)
            mask = (1 << d) - 1
            codes = np.arange(prev.size, dtype=np.int64)
            tail = codes & mask
            cols = [prev * self._p_full[tail, ((codes << 1) | b) & mask] for b in (0, 1)]
            out = np.stack(cols, axis=1).ravel()
        out.setflags(write=False)
        self._levels[n] = out
        return out

    def cylinder(self, w: str) -> float:
        return gibbs_cylinder(self, w)

    def expectation(self) -> float:
        """E[phi] under this equilibrium state (phi itself, not q*phi)."""
        vals = self.potential.on_words(self.state_codes, self.depth)
        return float(np.dot(self.stationary, vals))

    @cached_property
    def entropy_bits(self) -> float:
        """Kolmogorov-Sinai entropy in bits: (P(q phi) - q E[phi]) / log 2."""
        return (self.pressure - self.q * self.expectation()) / LOG2

    def gibbs_ratios(self, n: int) -> np.ndarray:
        """``mu([w]) / exp(S_n q phi(t') - n P)`` over all admissible ``w`` of
        length ``n`` and all admissible completions ``t'`` of ``w``."""
        m = self.potential.range
        length = n + m - 1
        codes = admissible_indices(self.sft, length)
        s = self.q * _window_sums(self.potential, codes, length, n)
        mass = self.level_masses(n)[codes >> (m - 1)]
        return mass / np.exp(s - n * self.pressure)


def gibbs_cylinder(gm: GibbsModel, w: str) -> float:
    """Exact cylinder probability of the equilibrium state; 0 if inadmissible."""
    check_word(w)
    d = gm.depth
    if len(w) < d:
        raise ValueError(f"word shorter than state depth {d}")
    mask = (1 << d) - 1
    s = word_index(w[:d])
    p = gm._pi_full[s]
    for c in w[d:]:
        t = ((s << 1) | (c == "1")) & mask
        p *= gm._p_full[s, t]
        s = t
    return float(p)


def gibbs_constant(gm: GibbsModel, max_level: int = 8) -> float:
    """Measured two-sided Gibbs constant over admissible words up to ``max_level``."""
    c = 1.0
    for n in range(1, max_level + 1):
        r = gm.gibbs_ratios(n)
        c = max(c, float(r.max()), float((1.0 / r).max()))
    return c


def quasi_bernoulli_constant(gm: GibbsModel, max_len: int = 7) -> float:
    """max of ``mu([wu]) / (mu([w]) mu([u]))`` and its inverse over admissible
    concatenations with ``|w|, |u| <= max_len``."""
    c = 1.0
    for a in range(1, max_len + 1):
        ma = gm.level_masses(a)
        for b in range(1, max_len + 1):
            mb = gm.level_masses(b)
            mab = gm.level_masses(a + b).reshape(ma.size, mb.size)
            prod = ma[:, None] * mb[None, :]
            ok = mab > 0
            if not ok.any():
                continue
            ratio = mab[ok] / prod[ok]
            c = max(c, float(ratio.max()), float((1.0 / ratio).max()))
    return c


# ---------------------------------------------------------------------------
# pressure and spectra


def pressure(x: Sft, phi: Potential, q: float = 1.0) -> float:
    """Topological pressure ``P_X(q phi)`` in nats."""
    return GibbsModel(x, phi, q).pressure


def pressure_oracle(x: Sft, phi: Potential, q: float, n: int) -> float:
    """Brute-force ``(1/n) log sum_w exp(max_{t in [w]} S_n q phi(t))``."""
    if n < phi.range:
        raise ValueError("n must be >= potential range")
    if n > ORACLE_MAX_N:
        raise ValueError(f"pressure oracle capped at n={ORACLE_MAX_N}")
    m = phi.range
    length = n + m - 1
    codes = admissible_indices(x, length)
    if codes.size == 0:
        raise EmptySubshiftError("empty subshift")
    s = q * _window_sums(phi, codes, length, n)
    prefix = codes >> (m - 1)
    best = np.full(1 << n, -np.inf)
    np.maximum.at(best, prefix, s)
    best = best[np.isfinite(best)]
    return float(logsumexp(best)) / n


@dataclass(frozen=True, eq=False)
class SpectrumCurve:
    grid: np.ndarray
    values: np.ndarray
    kind: str
    flags: dict = field(default_factory=dict)

    KINDS = ("tau", "tauStar", "xi", "xiStar", "pressure")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown curve kind {self.kind!r}")
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if g.shape != v.shape or g.ndim != 1:
            raise ValueError("grid and values must be 1-d of equal length")
        if np.any(np.diff(g) <= 0):
            raise ValueError("grid must be strictly increasing")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)

    def __call__(self, t: float) -> float:
        i = int(np.argmin(np.abs(self.grid - t)))
        if abs(self.grid[i] - t) > 1e-9 * max(1.0, abs(t)):
            return float(np.interp(t, self.grid, self.values))
        return float(self.values[i])

    def second_differences(self) -> np.ndarray:
        g, v = self.grid, self.values
        fin = np.isfinite(v)
        g, v = g[fin], v[fin]
        if g.size < 3:
            return np.zeros(0)
        slopes = np.diff(v) / np.diff(g)
        return np.diff(slopes) * np.diff(g)[1:]

    def is_concave(self, tol: float = CONCAVITY_TOL) -> bool:
        return bool(np.all(self.second_differences() <= tol))

    def rows(self):
        for g, v in zip(self.grid, self.values):
            yield (repr(float(g)), repr(float(v)), self.kind)

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("grid", "value", "kind"))
            w.writerows(self.rows())


def tau(x: Sft, phi: Potential, q_grid) -> SpectrumCurve:
    """L^q spectrum ``(q P(phi) - P(q phi)) / log 2`` of the Gibbs measure."""
    q_grid = np.asarray(q_grid, dtype=float)
    p1 = pressure(x, phi, 1.0)
    vals = np.array([(q * p1 - pressure(x, phi, q)) / LOG2 for q in q_grid])
    return SpectrumCurve(q_grid, vals, "tau")


def tau_oracle(x: Sft, phi: Potential, q: float, n: int) -> float:
    """``-(1/n) log2 sum_{|w|=n} mu([w])^q`` from exact cylinder masses."""
    if n > TAU_ORACLE_MAX_N:
        raise ValueError(f"tau oracle capped at n={TAU_ORACLE_MAX_N}")
    if n < 1:
        raise ValueError("n must be >= 1")
    masses = GibbsModel(x, phi, 1.0).level_masses(n)
    logm = np.log(masses[masses > 0])
    return -float(logsumexp(q * logm)) / (n * LOG2)


def tau_prime(x: Sft, phi: Potential, q: float) -> float:
    """``(P(phi) - E_{mu_q}[phi]) / log 2`` with the expectation taken exactly."""
    p1 = pressure(x, phi, 1.0)
    return (p1 - GibbsModel(x, phi, q).expectation()) / LOG2


def legendre(curve: SpectrumCurve, alpha_grid, require_concave: bool = True,
             alpha_tol: float = 0.0) -> SpectrumCurve:
    """Grid Legendre transform ``inf_q (q alpha - f(q))``.

    Ties go to the smallest ``|q|``.  When the minimiser sits on a grid
    boundary and the objective still decreases outward, the level set is
    reported empty (``-inf``); ``alpha_tol`` widens the accepted slope range
    (e.g. half the spacing of ``alpha_grid``).
    """
    if require_concave and not curve.is_concave():
        raise ValueError("not concave")
    q = curve.grid
    f = curve.values
    alpha = np.atleast_1d(np.asarray(alpha_grid, dtype=float))
    g = alpha[:, None] * q[None, :] - f[None, :]
    gmin = g.min(axis=1)
    tie = g <= gmin[:, None] + 1e-12 * np.maximum(1.0, np.abs(gmin))[:, None]
    absq = np.where(tie, np.abs(q)[None, :], np.inf)
    idx = np.argmin(absq, axis=1)
    out = g[np.arange(alpha.size), idx]
    last = q.size - 1
    if q.size > 1:
        # boundary minimiser: empty only if alpha leaves the end chord slope
        # by more than the grid curvature (a tangency sits within half of it)
        s = np.diff(f) / np.diff(q)
        bend_l = max(s[0] - s[1], 0.0) if s.size > 1 else 0.0
        bend_r = max(s[-2] - s[-1], 0.0) if s.size > 1 else 0.0
        eps = 1e-12 * max(1.0, float(np.max(np.abs(s))))
        left = (idx == 0) & (alpha - s[0] > bend_l + eps + alpha_tol)
        right = (idx == last) & (s[-1] - alpha > bend_r + eps + alpha_tol)
        out = np.where(left | right, -np.inf, out)
    kind = {"tau": "tauStar", "xi": "xiStar"}.get(curve.kind, "tauStar")
    return SpectrumCurve(alpha, out, kind, {"argmin_q": q[idx]})


# ---------------------------------------------------------------------------
# exponents on zero-avoiding subshifts


@dataclass(frozen=True)
class RestrictedExponents:
    q: float
    alphaK: float
    dK: float
    hK: float
    gammaG: float
    gammaR: float

    @property
    def in_theorem_range(self) -> bool:
        return 0.0 < self.hK < 1.0


def restricted_exponents(full: Sft, avoid: Sft, phi: Potential, q: float,
                         s0: float, p0: float) -> RestrictedExponents:
    """Local dimension, measure dimension and the graph/range lower-bound
    exponents of the equilibrium state of ``q phi`` restricted to ``avoid``.

    ``gammaG``/``gammaR`` are NaN when ``hK`` falls outside (0, 1).
    """
    _check_wavelet_params(s0, p0)
    p1 = pressure(full, phi, 1.0)
    g_full = GibbsModel(full, phi, q)
    g_avoid = GibbsModel(avoid, phi, q)
    dp = g_full.expectation() - g_avoid.expectation()
    gap = g_full.pressure - g_avoid.pressure
    tp = (p1 - g_full.expectation()) / LOG2
    tstar = (g_full.pressure - q * g_full.expectation()) / LOG2
    alpha_k = tp + dp / LOG2
    d_k = tstar - (-q * dp + gap) / LOG2
    h_k = s0 - 1.0 / p0 + alpha_k / p0
    if 0.0 < h_k < 1.0:
        gg = min(d_k / h_k, 1.0 - h_k + d_k)
        gr = min(d_k / h_k, 1.0)
    else:
        gg = gr = math.nan
    return RestrictedExponents(float(q), alpha_k, d_k, h_k, gg, gr)


def theorem_spectra(h: float, xi_star: float) -> tuple[float, float]:
    """Graph and range singularity spectra at ``h`` from ``xi*(h)``."""
    if not 0.0 < h < 1.0 or not xi_star > 0.0:
        raise ValueError("outside theorem hypotheses: need 0 < h < 1 and xi*(h) > 0")
    return min(xi_star / h, xi_star + 1.0 - h), min(xi_star / h, 1.0)


def dimension_upper_bounds(dim_e: float, h: float) -> tuple[float, float]:
    """Upper bounds on graph/range dimension of a set of dimension ``dim_e``
    on which the oscillation exponent is at least ``h``."""
    if h <= 0:
        raise ValueError("h must be positive")
    graph = max(min(dim_e / h, dim_e + 1.0 - h), dim_e)
    return graph, min(dim_e / h, 1.0)


def _check_wavelet_params(s0: float, p0: float) -> None:
    if not (s0 > 0 and p0 > 0 and s0 - 1.0 / p0 > 0):
        raise ValueError("need s0 > 0, p0 > 0 and s0 - 1/p0 > 0")


def wavelet_scaling_prediction(x: Sft, phi: Potential, s0: float, p0: float,
                               q_grid) -> SpectrumCurve:
    """``xi(q) = q (s0 - 1/p0) + tau(q / p0)``."""
    _check_wavelet_params(s0, p0)
    q_grid = np.asarray(q_grid, dtype=float)
    t = tau(x, phi, q_grid / p0).values
    return SpectrumCurve(q_grid, q_grid * (s0 - 1.0 / p0) + t, "xi")


def default_q_grid(qmax: float = 20.0, step: float = 0.01) -> np.ndarray:
    n = int(round(2 * qmax / step))
    return np.round(np.linspace(-qmax, qmax, n + 1), 12)
