"""Mother wavelets, coefficient trees and sampled random wavelet series.

The series is ``F(x) = sum_w pi_w d_w psi(2^|w| x - k_w)`` over words of
length at most ``J``, with ``|d_w| = 2^{-|w|(s0 - 1/p0)} mu([w])^{1/p0}``.
All randomness (signs and multiplicative perturbations) is drawn from a
counter-based generator keyed by the seed, so the value attached to a word
depends only on ``(seed, word)``.
"""

from __future__ import annotations

import csv
import hashlib
import logging
import math
import struct
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.special import comb, ndtr, ndtri

from .symbolic import Sft, ZeroSet, admissible_indices, isolate_zeros, word_index
from .thermo import GibbsModel

log = logging.getLogger(__name__)

MAGIC = b"MWL1"
_HEADER = struct.Struct("<4sIIQQ")
SIGN_STREAM = 1
PERTURB_STREAM = 2


# ---------------------------------------------------------------------------
# wavelets


@dataclass(frozen=True, eq=False)
class MotherWavelet:
    """A mother wavelet with a pointwise evaluator.

    ``support_radius`` bounds the region where ``|psi|`` is not negligible
    (exact support for compactly supported kinds).  Tabulated kinds only
    evaluate on the dyadic grid of depth ``table_depth``.
    """

    kind: str
    r0: int
    support: tuple[float, float]
    _f: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    _df: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)
    decay: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)
    table_depth: int | None = None

    @property
    def support_radius(self) -> float:
        return max(abs(self.support[0]), abs(self.support[1]))

    @property
    def tabulated(self) -> bool:
        return self.table_depth is not None

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.tabulated:
            scaled = x * 2.0**self.table_depth
            if not np.all(scaled == np.round(scaled)):
                raise ValueError("tabulated wavelet: evaluation only on the 2^-G grid")
        return self._f(x)

    def derivative(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self._df is not None:
            return self._df(x)
        if self.tabulated:
            # one-sided grid differences
            h = 2.0**-self.table_depth
            return (self(x + h) - self(x)) / h
        h = 1e-6
        return (self._f(x + h) - self._f(x - h)) / (2 * h)

    def lipschitz_constant(self, n_grid: int = 2**14) -> float:
        """sup |psi'| on the support window."""
        a, b = self.support
        if self.tabulated:
            step = 2.0**-self.table_depth
            x = np.arange(a, b, step)
            return float(np.max(np.abs(np.diff(self(np.append(x, b))))) / step)
        x = np.linspace(a, b, n_grid + 1)
        return float(np.max(np.abs(self.derivative(x))))

    def sup_norm(self) -> float:
        a, b = self.support
        if self.tabulated:
            return float(np.max(np.abs(self._table)))
        return float(np.max(np.abs(self._f(np.linspace(a, b, 2**14 + 1)))))

    @cached_property
    def _table(self) -> np.ndarray:
        a, b = self.support
        return self._f(np.arange(a, b + 2.0**-self.table_depth / 2, 2.0**-self.table_depth))

    def zeros(self, n_grid: int = 2**16) -> ZeroSet:
        """Zeros on [0, 1]."""
        if self.tabulated:
            step = 2.0**-self.table_depth
            grid = np.arange(0.0, 1.0 + step / 2, step)
            vals = self(grid)
            f = lambda t: np.interp(t, grid, vals)  # noqa: E731
            return isolate_zeros(f, n_grid=min(n_grid, grid.size - 1))
        return isolate_zeros(self._f, n_grid=n_grid)

    def overlap_sum(self, n_grid: int = 1024) -> float:
        """max_u sum_k |psi(u - k)|."""
        r = int(math.ceil(self.support_radius)) + 1
        if self.tabulated:
            n_grid = 2**self.table_depth
        u = np.arange(n_grid) / n_grid
        tot = np.zeros_like(u)
        for k in range(-r, r + 1):
            v = u - k
            inside = (v >= self.support[0]) & (v <= self.support[1])
            tot[inside] += np.abs(self(v[inside]))
        return float(tot.max())


def _gauss2() -> MotherWavelet:
    # second Hermite function with its zeros at +-1/2
    f = lambda x: (1.0 - 4.0 * x * x) * np.exp(-2.0 * x * x)  # noqa: E731
    df = lambda x: (16.0 * x**3 - 12.0 * x) * np.exp(-2.0 * x * x)  # noqa: E731
    decay = lambda r: (1.0 + 4.0 * r * r) * np.exp(-2.0 * r * r)  # noqa: E731
    return MotherWavelet("gauss2", r0=100, support=(-5.0, 5.0), _f=f, _df=df, decay=decay)


def _bump(t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - t[inside] ** 2))
    return out


def _sin_bump() -> MotherWavelet:
    c, r = 0.5, 0.75

    def f(x):
        x = np.asarray(x, dtype=float)
        return np.sin(2 * np.pi * x) * _bump((x - c) / r)

    def df(x):
        x = np.asarray(x, dtype=float)
        t = (x - c) / r
        b = _bump(t)
        inside = np.abs(t) < 1.0
        db = np.zeros_like(t)
        ti = t[inside]
        db[inside] = b[inside] * (-2.0 * ti / (1.0 - ti**2) ** 2) / r
        return 2 * np.pi * np.cos(2 * np.pi * x) * b + np.sin(2 * np.pi * x) * db

    decay = lambda rad: (np.asarray(rad) <= 1.25).astype(float)  # noqa: E731
    return MotherWavelet("sinBump", r0=100, support=(c - r, c + r), _f=f, _df=df, decay=decay)


def daubechies_filter(n: int) -> np.ndarray:
    """Minimum-phase Daubechies low-pass filter with ``n`` vanishing moments
    (sum of taps = sqrt 2), by spectral factorisation."""
    if n < 1:
        raise ValueError("need at least one vanishing moment")
    # P(y) = sum_k C(n-1+k, k) y^k with y = (2 - z - 1/z)/4
    poly = np.zeros(1)
    ypoly = np.array([-0.25, 0.5, -0.25])  # coefficients of z^1 * y in powers of z
    acc = np.zeros(2 * n - 1)
    for k in range(n):
        term = np.array([1.0])
        for _ in range(k):
            term = np.convolve(term, ypoly)
        pad = (2 * n - 1 - term.size) // 2
        acc[pad:pad + term.size] += comb(n - 1 + k, k) * term
    poly = acc
    roots = np.roots(poly[::-1]) if poly.size > 1 else np.array([])
    inner = roots[np.abs(roots) < 1.0]
    lz = np.real(np.poly(inner)) if inner.size else np.array([1.0])
    lz = lz / lz.sum()
    h = np.array([1.0])
    for _ in range(n):
        h = np.convolve(h, [0.5, 0.5])
    h = np.convolve(h, lz)
    return h * math.sqrt(2.0)


def _cascade_tables(h: np.ndarray, depth: int) -> tuple[np.ndarray, np.ndarray]:
    """Scaling function and wavelet on the grid ``m 2^-depth`` of ``[0, L]``."""
    length = h.size - 1
    # integer values: eigenvector of M[i, j] = sqrt2 h[2i - j] for eigenvalue 1
    m = np.zeros((length + 1, length + 1))
    for i in range(length + 1):
        for j in range(length + 1):
            if 0 <= 2 * i - j <= length:
                m[i, j] = math.sqrt(2.0) * h[2 * i - j]
    ev, vec = np.linalg.eig(m)
    phi = np.real(vec[:, int(np.argmin(np.abs(ev - 1.0)))])
    phi = phi / phi.sum()
    for d in range(depth):
        phi = _refine_once(h, phi, d)
    # psi(x) = sqrt2 sum_k g_k phi(2x - k), g_k = (-1)^k h_{L-k}
    pos = np.arange(phi.size)
    psi = np.zeros(phi.size)
    for k in range(length + 1):
        gk = (-1) ** k * h[length - k]
        psi += math.sqrt(2.0) * gk * _coarse_lookup(phi, 2 * pos - k * 2**depth)
    return phi, psi


def _coarse_lookup(table: np.ndarray, idx: np.ndarray) -> np.ndarray:
    out = np.zeros(idx.shape)
    ok = (idx >= 0) & (idx < table.size)
    out[ok] = table[idx[ok]]
    return out


def _refine_once(h: np.ndarray, phi: np.ndarray, depth: int) -> np.ndarray:
    """Two-scale step: phi on grid ``depth + 1`` from phi on grid ``depth``."""
    new = np.zeros(2 * phi.size - 1)
    new[::2] = phi
    idx = np.arange(1, new.size, 2)
    for k, hk in enumerate(h):
        new[idx] += math.sqrt(2.0) * hk * _coarse_lookup(phi, idx - k * 2**depth)
    return new


def _cascade(n: int, depth: int) -> MotherWavelet:
    h = daubechies_filter(n)
    _, psi = _cascade_tables(h, depth)
    length = h.size - 1
    step = 2.0**-depth

    def f(x):
        x = np.asarray(x, dtype=float)
        idx = np.round(x / step).astype(np.int64)
        out = np.zeros(x.shape)
        ok = (idx >= 0) & (idx < psi.size)
        out[ok] = psi[idx[ok]]
        return out

    return MotherWavelet(f"cascadeDb{n}", r0=max(0, n - 2), support=(0.0, float(length)),
                         _f=f, table_depth=depth)


def builtin_wavelet(kind: str, table_depth: int = 14) -> MotherWavelet:
    """``gauss2``, ``sinBump`` or ``cascadeDbN`` (``N`` vanishing moments,
    tabulated at resolution ``2^-table_depth``)."""
    if kind == "gauss2":
        return _gauss2()
    if kind == "sinBump":
        return _sin_bump()
    if kind.startswith("cascadeDb"):
        try:
            n = int(kind[len("cascadeDb"):])
        except ValueError:
            raise ValueError(f"unknown wavelet kind {kind!r}") from None
        if not 1 <= n <= 10:
            raise ValueError("cascadeDbN supports 1 <= N <= 10")
        return _cascade(n, table_depth)
    raise ValueError(f"unknown wavelet kind {kind!r}")


def zero_clearance(psi: MotherWavelet, avoid: Sft, k: int, n_max: int) -> float:
    """Minimum of ``|psi(lambda(w))|`` over admissible words of lengths
    ``k..n_max``; shift invariance of the subshift covers every ``sigma^m``."""
    if n_max < k:
        raise ValueError("n_max must be >= k")
    best = math.inf
    for n in range(k, n_max + 1):
        codes = admissible_indices(avoid, n)
        if codes.size == 0:
            continue
        lam = codes / 2.0**n
        if psi.tabulated and n > psi.table_depth:
            break
        best = min(best, float(np.min(np.abs(psi(lam)))))
    if not best > 0.0:
        raise ValueError("subshift does not clear zeros")
    return best


# ---------------------------------------------------------------------------
# counter-based randomness


def keyed_uniforms(seed: int, stream: int, start: int, count: int) -> np.ndarray:
    """Elements ``start .. start+count-1`` of the uniform stream ``(seed, stream)``."""
    key = (int(seed) & (2**64 - 1)) | (int(stream) << 64)
    block, offset = divmod(int(start), 4)
    bg = np.random.Philox(key=key, counter=block)
    return np.random.Generator(bg).random(offset + count)[offset:]


def word_uniform(seed: int, stream: int, w: str) -> float:
    """Uniform variate attached to a single word (heap position ``2^|w| - 1 + k``)."""
    pos = 2 ** len(w) - 1 + (word_index(w) if w else 0)
    return float(keyed_uniforms(seed, stream, pos, 1)[0])


def _level_uniforms(seed: int, stream: int, j: int) -> np.ndarray:
    return keyed_uniforms(seed, stream, 2**j - 1, 2**j)


@dataclass(frozen=True)
class PerturbationLaw:
    """``uniform``: U[1/2, 3/2].  ``logNormalClipped``: ``exp(sigma Z)`` with
    ``Z`` standard normal truncated to ``[-clip, clip]``."""

    name: str = "uniform"
    sigma: float = 0.25
    clip: float = 2.0

    def __post_init__(self):
        if self.name not in ("uniform", "logNormalClipped"):
            raise ValueError(f"unknown perturbation law {self.name!r}")
        if self.name == "logNormalClipped" and not (self.sigma > 0 and self.clip > 0):
            raise ValueError("logNormalClipped needs sigma > 0 and clip > 0")

    def transform(self, u: np.ndarray) -> np.ndarray:
        if self.name == "uniform":
            return 0.5 + u
        lo = ndtr(-self.clip)
        z = ndtri(lo + u * (1.0 - 2.0 * lo))
        return np.exp(self.sigma * np.clip(z, -self.clip, self.clip))

    @property
    def bounds(self) -> tuple[float, float]:
        if self.name == "uniform":
            return 0.5, 1.5
        return math.exp(-self.sigma * self.clip), math.exp(self.sigma * self.clip)

    @property
    def mean(self) -> float:
        if self.name == "uniform":
            return 1.0
        c, s = self.clip, self.sigma
        z = ndtr(c) - ndtr(-c)
        return float(math.exp(s * s / 2) * (ndtr(c - s) - ndtr(-c - s)) / z)


# ---------------------------------------------------------------------------
# coefficient trees


@dataclass(frozen=True, eq=False)
class CoefficientTree:
    """Per-level arrays indexed by word code: ``magnitudes[j][k] = |d_w|``,
    ``signs[j][k]`` in {-1, +1} and optional ``perturbations[j][k] = pi_w``."""

    J: int
    s0: float
    p0: float
    magnitudes: tuple
    signs: tuple
    perturbations: tuple | None = None
    seed: int = 0
    sign_rule: str = "rademacherFromSeed"
    law: PerturbationLaw | None = None

    def coefficients(self, j: int, perturbed: bool = True) -> np.ndarray:
        c = self.magnitudes[j] * self.signs[j]
        if perturbed and self.perturbations is not None:
            c = c * self.perturbations[j]
        return c

    def abs_coefficients(self, j: int, perturbed: bool = True) -> np.ndarray:
        return np.abs(self.coefficients(j, perturbed))

    def magnitude(self, w: str) -> float:
        return float(self.magnitudes[len(w)][word_index(w) if w else 0])

    @classmethod
    def from_coefficients(cls, levels, s0: float = 1.0, p0: float = 2.0, seed: int = 0):
        """Tree holding arbitrary signed coefficients (level ``j`` of size ``2^j``)."""
        levels = [np.asarray(c, dtype=float) for c in levels]
        for j, c in enumerate(levels):
            if c.shape != (2**j,):
                raise ValueError(f"level {j} must have {2**j} coefficients")
        mags = tuple(np.abs(c) for c in levels)
        signs = tuple(np.where(c < 0, -1.0, 1.0) for c in levels)
        return cls(len(levels) - 1, s0, p0, mags, signs, None, seed, "explicit")

    def linear_combination(self, a: float, other: "CoefficientTree | None" = None, b: float = 1.0):
        """``a * self + b * other`` with perturbations folded into the values."""
        levels = [a * self.coefficients(j) for j in range(self.J + 1)]
        if other is not None:
            if other.J != self.J:
                raise ValueError("trees must share depth")
            levels = [c + b * other.coefficients(j) for j, c in enumerate(levels)]
        return CoefficientTree.from_coefficients(levels, self.s0, self.p0, self.seed)


def _check_params(s0: float, p0: float, J: int) -> None:
    if not (s0 > 0 and p0 > 0 and s0 - 1.0 / p0 > 0):
        raise ValueError("need s0 > 0, p0 > 0 and s0 - 1/p0 > 0")
    if J < 1:
        raise ValueError("J must be >= 1")


def build_coefficients(gm: GibbsModel, s0: float, p0: float, J: int,
                       sign_rule: str = "rademacherFromSeed", seed: int = 0,
                       scale: float = 1.0) -> CoefficientTree:
    """Coefficient magnitudes ``scale * 2^{-j(s0-1/p0)} mu([w])^{1/p0}``."""
    _check_params(s0, p0, J)
    if sign_rule not in ("allPlus", "rademacherFromSeed"):
        raise ValueError(f"unknown sign rule {sign_rule!r}")
    a = s0 - 1.0 / p0
    mags, signs = [], []
    for j in range(J + 1):
        mu = gm.level_masses(j)
        mags.append(scale * 2.0 ** (-j * a) * mu ** (1.0 / p0))
        if sign_rule == "allPlus":
            signs.append(np.ones(2**j))
        else:
            signs.append(np.where(_level_uniforms(seed, SIGN_STREAM, j) < 0.5, -1.0, 1.0))
    return CoefficientTree(J, s0, p0, tuple(mags), tuple(signs), None, seed, sign_rule)


def perturb(tree: CoefficientTree, law: PerturbationLaw | str = "uniform",
            seed: int | None = None) -> CoefficientTree:
    """Attach i.i.d. multipliers ``pi_w``; the tree magnitudes are untouched."""
    if isinstance(law, str):
        law = PerturbationLaw(law)
    seed = tree.seed if seed is None else seed
    pis = tuple(law.transform(_level_uniforms(seed, PERTURB_STREAM, j)) for j in range(tree.J + 1))
    return replace(tree, perturbations=pis, law=law)


# ---------------------------------------------------------------------------
# synthesis


@dataclass(frozen=True, eq=False)
class SampledSeries:
    G: int
    J: int
    samples: np.ndarray
    seed: int = 0
    wavelet: str = ""
    fixture: str = ""
    tail_bound: float = 0.0

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.samples.size) / 2.0**self.G

    def to_bytes(self) -> bytes:
        head = _HEADER.pack(MAGIC, self.G, self.J, self.seed & (2**64 - 1), self.samples.size)
        return head + np.ascontiguousarray(self.samples, dtype="<f8").tobytes()

    def sha256(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()

    def dump(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def from_bytes(cls, data: bytes) -> "SampledSeries":
        magic, g, j, seed, count = _HEADER.unpack_from(data)
        if magic != MAGIC:
            raise ValueError("not an MWL1 series dump")
        body = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
        if body.size != count:
            raise ValueError("truncated series dump")
        return cls(g, j, body.astype(float), seed)

    @classmethod
    def load(cls, path) -> "SampledSeries":
        return cls.from_bytes(Path(path).read_bytes())

    def to_csv(self, path, stride: int = 1) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("x", "value"))
            for xi, v in zip(self.x[::stride], self.samples[::stride]):
                w.writerow((repr(float(xi)), repr(float(v))))


def _level_contribution(coef: np.ndarray, j: int, psi: MotherWavelet, x_idx: np.ndarray,
                        G: int) -> np.ndarray:
    """sum_k coef[k] psi(2^j x - k) on the grid ``x = i 2^-G``."""
    scale = 2.0 ** (j - G)
    t = x_idx * scale
    base = np.floor(t).astype(np.int64)
    frac = t - base
    lo, hi = psi.support
    out = np.zeros(x_idx.size)
    n = coef.size
    for delta in range(int(math.floor(-hi)) - 1, int(math.ceil(-lo)) + 2):
        # k = base + delta  ->  u = frac - delta
        k = base + delta
        u = frac - delta
        ok = (k >= 0) & (k < n) & (u >= lo) & (u <= hi)
        if not ok.any():
            continue
        c = coef[k[ok]]
        nz = c != 0
        if not nz.any():
            continue
        sel = np.nonzero(ok)[0][nz]
        out[sel] += c[nz] * psi(u[ok][nz])
    return out


def tail_bound(tree: CoefficientTree, psi: MotherWavelet) -> float:
    """Bound on ``|F - F_J|`` from the geometric decay of the omitted levels."""
    a = tree.s0 - 1.0 / tree.p0
    top = tree.law.bounds[1] if tree.law is not None else 1.0
    mmax = max(float(np.max(m)) * 2.0 ** (j * a) for j, m in enumerate(tree.magnitudes))
    return mmax * top * psi.overlap_sum() * 2.0 ** (-(tree.J + 1) * a) / (1.0 - 2.0 ** (-a))


def synthesize(tree: CoefficientTree, psi: MotherWavelet, G: int, perturbed: bool = True,
               fixture: str = "") -> SampledSeries:
    """Sample the truncated series on ``x_i = i 2^-G``, ``i = 0..2^G``.

    Levels are accumulated with Neumaier compensation in a fixed order, so
    the result is a deterministic function of the inputs.
    """
    if G < 1:
        raise ValueError("G must be >= 1")
    if psi.tabulated and psi.table_depth < G:
        raise ValueError(f"grid depth {G} finer than wavelet tabulation {psi.table_depth}")
    if G < tree.J:
        log.warning("grid depth %d below tree depth %d", G, tree.J)
    x_idx = np.arange(2**G + 1, dtype=np.int64)
    total = np.zeros(x_idx.size)
    comp = np.zeros(x_idx.size)
    for j in range(tree.J + 1):
        term = _level_contribution(tree.coefficients(j, perturbed), j, psi, x_idx, G)
        t = total + term
        big = np.abs(total) >= np.abs(term)
        comp += np.where(big, (total - t) + term, (term - t) + total)
        total = t
    return SampledSeries(G, tree.J, total + comp, tree.seed, psi.kind, fixture,
                         tail_bound(tree, psi))
