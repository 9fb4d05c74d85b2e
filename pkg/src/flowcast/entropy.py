"""Sample entropy and entropy-banded regrouping of IMFs."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .decomposition import ImfSet
from .errors import InvalidInputError, UndefinedEntropyError

DEFAULT_BAND_EDGES = (math.inf, 1.0, 0.5, 0.1, 0.0)


@dataclass(frozen=True)
class SampEnParams:
    """Embedding dimension ``m`` and tolerance ``r``.

    With ``relative=True`` (the default) the tolerance applied to a series is
    ``r * std(series)``; otherwise ``r`` is used as-is.
    """

    m: int = 2
    r: float = 0.2
    relative: bool = True

    def __post_init__(self):
        if self.m < 1:
            raise InvalidInputError("m must be >= 1")
        if not self.r > 0:
            raise InvalidInputError("r must be > 0")

    def tolerance(self, x):
        if self.relative:
            return self.r * float(np.std(x))
        return float(self.r)


def template_matches(series, m, r):
    """Count ordered template pairs matching at lengths ``m + 1`` and ``m``.

    Templates start at every index ``i < N - m`` for both lengths, distances
    are Chebyshev, and self-matches are excluded.

    Returns
    -------
    (a, b) : tuple of int
        Matches of length ``m + 1`` and of length ``m``.
    """
    x = np.asarray(series, dtype=float)
    n = x.size
    if n <= m + 1:
        raise InvalidInputError(f"sample entropy needs N > m + 1 (N={n}, m={m})")
    count = n - m
    emb = sliding_window_view(x, m + 1)[:count]
    a = b = 0
    for i in range(count - 1):
        rest = emb[i + 1:]
        close = np.abs(rest[:, :m] - emb[i, :m]).max(axis=1) <= r
        b += int(np.count_nonzero(close))
        a += int(np.count_nonzero(close & (np.abs(rest[:, m] - emb[i, m]) <= r)))
    return 2 * a, 2 * b


def sample_entropy(series, params=None):
    """SampEn(m, r, N) = -ln(A / B) with self-matches excluded.

    Raises :class:`UndefinedEntropyError` when either count is zero.
    """
    params = params or SampEnParams()
    x = np.asarray(series, dtype=float)
    a, b = template_matches(x, params.m, params.tolerance(x))
    if a == 0 or b == 0:
        raise UndefinedEntropyError(f"no template matches (A={a}, B={b})")
    return -math.log(a / b)


@dataclass
class ComponentSet:
    """IMFs regrouped into consecutive runs of similar entropy.

    ``entropies`` holds one value per original IMF (NaN where undefined);
    ``residue`` is carried separately and folded into the low-frequency
    component by :meth:`forecast_targets`.
    """

    components: np.ndarray
    members: list
    entropies: np.ndarray
    bands: list
    residue: np.ndarray

    def __len__(self):
        return len(self.members)

    def member_entropy(self, c):
        return [self.entropies[i] for i in self.members[c]]

    def low_frequency_index(self):
        """Component whose member IMFs have the lowest mean entropy.

        Undefined entropies count as zero; ties go to the later component.
        """
        scores = [np.mean(np.nan_to_num(self.member_entropy(c), nan=0.0)) for c in range(len(self))]
        best = min(scores)
        return max(c for c, s in enumerate(scores) if s == best)

    def forecast_targets(self):
        out = self.components.copy()
        out[self.low_frequency_index()] += self.residue
        return out


def assign_band(value, band_edges=DEFAULT_BAND_EDGES):
    """Index b with ``band_edges[b] > value >= band_edges[b + 1]``.

    Values outside the edges are clamped to the first/last band; NaN goes to
    the last band.
    """
    last = len(band_edges) - 2
    if value is None or math.isnan(value):
        return last
    for b in range(last + 1):
        if band_edges[b] > value >= band_edges[b + 1]:
            return b
    return 0 if value >= band_edges[0] else last


def group_by_entropy(entropies, band_edges=DEFAULT_BAND_EDGES):
    """Split IMF indices into consecutive runs that share an entropy band.

    Returns ``(members, bands)``.
    """
    edges = [float(e) for e in band_edges]
    if len(edges) < 2 or any(e1 <= e2 for e1, e2 in zip(edges, edges[1:])):
        raise InvalidInputError("band edges must be strictly decreasing with at least 2 entries")
    members, bands = [], []
    for i, value in enumerate(entropies):
        b = assign_band(value, edges)
        if bands and bands[-1] == b:
            members[-1].append(i)
        else:
            members.append([i])
            bands.append(b)
    return members, bands


def imf_entropies(imfs, params=None):
    params = params or SampEnParams()
    out = []
    for imf in imfs.imfs:
        try:
            out.append(sample_entropy(imf, params))
        except UndefinedEntropyError:
            out.append(math.nan)
    return np.array(out)


def recombine_by_entropy(imfs, params=None, band_edges=DEFAULT_BAND_EDGES, entropies=None):
    """Merge IMFs whose sample entropies fall into the same band.

    ``entropies`` may be supplied to skip recomputation. An IMF whose entropy
    is undefined joins the lowest band.
    """
    if not isinstance(imfs, ImfSet) or len(imfs) == 0:
        raise InvalidInputError("recombine_by_entropy needs a non-empty ImfSet")
    if entropies is None:
        entropies = imf_entropies(imfs, params)
    entropies = np.asarray(entropies, dtype=float)
    if entropies.size != len(imfs):
        raise InvalidInputError("one entropy value per IMF is required")
    members, bands = group_by_entropy(entropies, band_edges)
    components = np.vstack([imfs.imfs[m].sum(axis=0) for m in members])
    return ComponentSet(components, members, entropies, bands, imfs.residue.copy())
