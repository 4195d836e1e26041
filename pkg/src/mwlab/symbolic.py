"""Binary symbolic dynamics.

Words are plain ``str`` objects over ``"01"``; the dyadic value of a word is
``lambda(w) = sum w_i 2^-i``.  Internally, words of a fixed length ``n`` are
handled as integers in ``[0, 2^n)`` with the first symbol as the most
significant bit, so that ``lambda(w) = int(w, 2) / 2^n``.

A subshift of finite type of depth ``k`` lives on the de Bruijn graph whose
states are the words of length ``k - 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable

import numpy as np
from scipy.optimize import bisect
from scipy.sparse.csgraph import connected_components

POWER_TOL = 1e-12
POWER_MAX_ITER = 200_000


class EmptySubshiftError(ValueError):
    pass


# ---------------------------------------------------------------------------
# words


def check_word(w: str) -> str:
    if any(c not in "01" for c in w):
        raise ValueError(f"not a binary word: {w!r}")
    return w


def word_index(w: str) -> int:
    return int(w, 2) if w else 0


def index_word(i: int, n: int) -> str:
    return format(int(i), f"0{n}b") if n > 0 else ""


def dyadic_value(w: str) -> float:
    """lambda(w): left endpoint of the dyadic interval coded by ``w``."""
    check_word(w)
    return word_index(w) / 2.0 ** len(w)


def metric_rho(s: str, t: str) -> float:
    """Cylinder distance ``2^-n`` with ``n`` the longest common prefix length.

    Returns 0 only for identical words.  When one word is a proper prefix of
    the other the distance is ``2^-min(|s|,|t|)``: the cylinders are nested
    but the words are not the same.
    """
    check_word(s)
    check_word(t)
    if s == t:
        return 0.0
    n = 0
    for a, b in zip(s, t):
        if a != b:
            break
        n += 1
    return 2.0 ** -n


def neighbors(w: str) -> set[str]:
    """Words ``u`` of the same length with ``|lambda(u) - lambda(w)| <= 2^-|w|``."""
    check_word(w)
    n = len(w)
    if n == 0:
        raise ValueError("neighbors undefined for empty word")
    i = word_index(w)
    return {index_word(j, n) for j in (i - 1, i, i + 1) if 0 <= j < 2**n}


def truncate_point(x: float, k: int) -> str:
    """``x|_k``: the word with ``lambda(w) <= x < lambda(w) + 2^-k`` (``1|_k = 1...1``)."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    i = min(int(math.floor(x * 2.0**k)), 2**k - 1)
    return index_word(i, k)


# ---------------------------------------------------------------------------
# zero sets


@dataclass(frozen=True)
class ZeroSet:
    zeros: tuple[float, ...]
    tolerance: float = 1e-12

    def __post_init__(self):
        z = tuple(float(v) for v in self.zeros)
        if any(not 0.0 <= v <= 1.0 for v in z):
            raise ValueError("zeros must lie in [0, 1]")
        if any(b <= a for a, b in zip(z, z[1:])):
            raise ValueError("zeros must be strictly increasing")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        object.__setattr__(self, "zeros", z)

    def __len__(self):
        return len(self.zeros)

    def __iter__(self):
        return iter(self.zeros)


def isolate_zeros(f: Callable[[np.ndarray], np.ndarray], n_grid: int = 2**16,
                  tol: float = 1e-12) -> ZeroSet:
    """Zeros of ``f`` on [0, 1] by sign-change bisection on a uniform grid.

    Grid points where ``|f| <= tol`` count as zeros directly.  Roots closer
    than two grid cells are merged.
    """
    x = np.linspace(0.0, 1.0, n_grid + 1)
    y = np.asarray(f(x), dtype=float)
    roots = list(x[np.abs(y) <= tol])
    sign_change = np.nonzero(y[:-1] * y[1:] < 0)[0]
    g = lambda t: float(f(np.array([t]))[0])
    for i in sign_change:
        roots.append(bisect(g, x[i], x[i + 1], xtol=tol))
    roots.sort()
    merged: list[float] = []
    for r in roots:
        if merged and r - merged[-1] <= 2.0 / n_grid:
            # keep the representative with the smaller |f|
            if abs(g(r)) < abs(g(merged[-1])):
                merged[-1] = r
            continue
        merged.append(r)
    return ZeroSet(tuple(merged), tol)


def _dyadic_snap(x: float, tol: float, max_level: int = 32):
    """Return (numerator, level) if x is within tol of a dyadic rational."""
    for level in range(max_level + 1):
        scaled = x * 2.0**level
        num = round(scaled)
        if abs(scaled - num) <= tol * 2.0**level:
            return int(num), level
    return None


def forbidden_words(zeros: ZeroSet | Iterable[float], k: int) -> set[str]:
    """Depth-``k`` words whose dyadic intervals touch a zero.

    A non-dyadic zero ``x`` forbids ``x|_k``.  A dyadic zero forbids every
    ``w`` with ``0 <= lambda(x|_k) - lambda(w) <= 2^-k``, i.e. ``x|_k`` and
    its left neighbour.
    """
    if k < 2:
        raise ValueError("forbidden words need k >= 2")
    if not isinstance(zeros, ZeroSet):
        zeros = ZeroSet(tuple(sorted(zeros)))
    out: set[str] = set()
    for x in zeros:
        snap = _dyadic_snap(x, zeros.tolerance)
        if snap is None:
            out.add(truncate_point(x, k))
            continue
        num, level = snap
        x_exact = num / 2.0**level
        top = word_index(truncate_point(x_exact, k))
        for j in (top - 1, top):
            if j >= 0:
                out.add(index_word(j, k))
    return out


# ---------------------------------------------------------------------------
# subshifts of finite type


def _power_radius(b: np.ndarray) -> float:
    """Perron root of an irreducible nonnegative matrix.

    Iterates on ``b + I`` (primitive, so periodic components converge) and
    stops when the Collatz-Wielandt bounds agree to ``POWER_TOL``.
    """
    n = b.shape[0]
    shifted = b + np.eye(n)
    x = np.ones(n)
    for _ in range(POWER_MAX_ITER):
        y = shifted @ x
        ratio = y / x
        lo, hi = ratio.min(), ratio.max()
        if hi - lo <= POWER_TOL * hi:
            return 0.5 * (lo + hi) - 1.0
        x = y / y.max()
    ev = np.linalg.eigvals(b)
    return float(np.max(ev.real))


@dataclass(frozen=True, eq=False)
class Sft:
    """Binary subshift of finite type of depth ``k``.

    ``transition[i, j] == 1`` when the depth-``k`` word formed by state ``i``
    followed by the last symbol of state ``j`` is not forbidden (and ``j`` is
    the shifted successor of ``i``).  ``active`` restricts the state space,
    which is how transitive components are represented.
    """

    k: int
    forbidden: frozenset[str]
    transition: np.ndarray
    active: np.ndarray = field(default=None)

    def __post_init__(self):
        n = 2 ** (self.k - 1)
        if self.active is None:
            object.__setattr__(self, "active", np.ones(n, dtype=bool))
        self.transition.setflags(write=False)
        self.active.setflags(write=False)

    @classmethod
    def full(cls, k: int = 2) -> "Sft":
        return build_sft(set(), k)

    @property
    def state_depth(self) -> int:
        return self.k - 1

    @property
    def n_states(self) -> int:
        return 2 ** (self.k - 1)

    @cached_property
    def adjacency(self) -> np.ndarray:
        a = self.transition.astype(bool) & self.active[:, None] & self.active[None, :]
        a.setflags(write=False)
        return a

    @cached_property
    def live(self) -> np.ndarray:
        """States with an infinite forward path inside the active set."""
        alive = self.active.copy()
        a = self.adjacency
        while True:
            nxt = alive & (a[:, alive].any(axis=1))
            if np.array_equal(nxt, alive):
                break
            alive = nxt
        alive.setflags(write=False)
        return alive

    @property
    def is_empty(self) -> bool:
        return not self.live.any()

    @property
    def is_full_shift(self) -> bool:
        return not self.forbidden and bool(self.active.all())

    @cached_property
    def states(self) -> list[str]:
        return [index_word(i, self.k - 1) for i in np.nonzero(self.live)[0]]

    @cached_property
    def lead_eigenvalue(self) -> float:
        return spectral_radius(self)

    @property
    def box_dimension(self) -> float:
        return math.log2(self.lead_eigenvalue)

    def admissible(self, n: int) -> np.ndarray:
        return admissible_indices(self, n)

    def __repr__(self):
        return (f"Sft(k={self.k}, forbidden={sorted(self.forbidden)}, "
                f"states={len(self.states)}/{self.n_states})")


def build_sft(forbidden: Iterable[str], k: int) -> Sft:
    """Depth-``k`` SFT forbidding the given length-``k`` factors."""
    if k < 2:
        raise ValueError("SFT depth must be >= 2")
    forbidden = frozenset(check_word(w) for w in forbidden)
    lengths = {len(w) for w in forbidden}
    if lengths and lengths != {k}:
        raise ValueError(f"forbidden words must all have length {k}, got {sorted(lengths)}")
    n = 2 ** (k - 1)
    mask = n - 1
    t = np.zeros((n, n), dtype=np.int8)
    for i in range(n):
        for b in (0, 1):
            if index_word(2 * i + b, k) not in forbidden:
                t[i, ((i << 1) & mask) | b] = 1
    return Sft(k, forbidden, t)


def _restrict(x: Sft, mask: np.ndarray) -> Sft:
    return Sft(x.k, x.forbidden, x.transition, mask & x.active)


def spectral_radius(x: Sft) -> float:
    """Leading eigenvalue of the (live part of the) transition matrix.

    For a reducible SFT this is the maximum over its transitive components.
    ``log2`` of the result is the upper box dimension of the subshift.
    """
    if x.is_empty:
        raise EmptySubshiftError("empty subshift")
    live = np.nonzero(x.live)[0]
    a = x.adjacency[np.ix_(live, live)].astype(float)
    ncomp, labels = connected_components(a, directed=True, connection="strong")
    best = 0.0
    for c in range(ncomp):
        idx = np.nonzero(labels == c)[0]
        sub = a[np.ix_(idx, idx)]
        if len(idx) == 1 and sub[0, 0] == 0:
            continue
        best = max(best, _power_radius(sub))
    if best == 0.0:
        raise EmptySubshiftError("empty subshift")
    return best


def box_dimension(x: Sft) -> float:
    return math.log2(spectral_radius(x))


def transitive_components(x: Sft) -> list[Sft]:
    """Strongly connected pieces of the transition digraph.

    Sorted by decreasing spectral radius; ties go to the component with
    more states, then to the smallest contained state.  Single states
    without a self-loop are dropped.
    """
    a = x.adjacency
    ncomp, labels = connected_components(a.astype(np.int8), directed=True,
                                         connection="strong")
    comps = []
    for c in range(ncomp):
        idx = np.nonzero(labels == c)[0]
        if not x.active[idx].all():
            continue
        if len(idx) == 1 and not a[idx[0], idx[0]]:
            continue
        mask = np.zeros(x.n_states, dtype=bool)
        mask[idx] = True
        comp = _restrict(x, mask)
        comps.append((round(-comp.lead_eigenvalue, 12), -len(idx), int(idx.min()), comp))
    comps.sort(key=lambda t: t[:3])
    return [t[3] for t in comps]


def admissible_indices(x: Sft, n: int) -> np.ndarray:
    """Sorted integer codes of the length-``n`` words whose cylinder meets ``x``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    d = x.k - 1
    live = x.live
    states = np.nonzero(live)[0].astype(np.int64)
    if n <= d:
        return np.unique(states >> (d - n))
    a = x.adjacency
    mask = (1 << d) - 1
    words = states
    for _ in range(n - d):
        tail = words & mask
        cols = []
        for b in (0, 1):
            cand = (words << 1) | b
            nxt = cand & mask
            ok = a[tail, nxt] & live[nxt]
            cols.append(np.where(ok, cand, -1))
        words = np.stack(cols, axis=1).ravel()
        words = words[words >= 0]
    return words


def enumerate_admissible(x: Sft, n: int) -> list[str]:
    return [index_word(i, n) for i in admissible_indices(x, n)]


def admissible_mask(x: Sft, n: int) -> np.ndarray:
    m = np.zeros(2**n, dtype=bool)
    m[admissible_indices(x, n)] = True
    return m


def hausdorff_gap(x: Sft, cap: int | None = None) -> float:
    """Upper bound on the Hausdorff distance between ``x`` and the full shift.

    Returns ``2^-m`` for the largest ``m <= cap`` such that at every level
    ``1..m`` each word has an admissible word within dyadic distance
    ``2^-level``; the full shift gives exactly 0.
    """
    if x.is_empty:
        raise EmptySubshiftError("empty subshift")
    if x.is_full_shift:
        return 0.0
    cap = 2 * x.k if cap is None else cap
    good = 0
    for m in range(1, cap + 1):
        adm = admissible_mask(x, m)
        near = adm.copy()
        near[1:] |= adm[:-1]
        near[:-1] |= adm[1:]
        if not near.all():
            break
        good = m
    return 2.0**-good


def zero_avoiding_sft(zeros: ZeroSet | Iterable[float], k: int) -> Sft:
    """Transitive component of maximal entropy of the SFT avoiding ``zeros``."""
    comps = transitive_components(build_sft(forbidden_words(zeros, k), k))
    if not comps:
        raise EmptySubshiftError(f"zero-avoiding subshift at depth {k} is empty")
    return comps[0]


def golden_mean() -> Sft:
    return build_sft({"11"}, 2)
