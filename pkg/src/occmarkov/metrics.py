"""
Distances between discrete probability distributions.

All logarithms are natural, so the Jensen-Shannon divergence is bounded by
``ln 2`` and the Jensen-Shannon distance by ``sqrt(ln 2)``. The normalized
distance (NJSD) divides by that bound and lives in ``[0, 1]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

import numpy as np

from .errors import (
    AbsoluteContinuityViolation,
    EmptySamples,
    SampleOutOfRange,
    SupportMismatch,
)

LN2 = float(np.log(2.0))
SQRT_LN2 = float(np.sqrt(LN2))

MASS_TOL = 1e-9


@dataclass(frozen=True)
class DiscreteDistribution:
    """Normalized probability mass over a finite, ordered support.

    Parameters
    ----------
    support : sequence of hashable
        Unique labels, e.g. state indices or histogram bin left edges.
    mass : array_like
        Non-negative masses, one per label, summing to one.
    """

    support: tuple
    mass: np.ndarray = field(repr=False)

    def __post_init__(self):
        support = tuple(self.support)
        mass = np.array(self.mass, dtype=float).reshape(-1)
        if len(support) != mass.size:
            raise ValueError(
                f"support has {len(support)} labels but mass has {mass.size} entries"
            )
        if len(set(support)) != len(support):
            raise ValueError("support labels must be unique")
        if mass.size == 0:
            raise ValueError("empty distribution")
        if not np.all(np.isfinite(mass)) or np.any(mass < 0):
            raise ValueError("masses must be finite and non-negative")
        total = mass.sum()
        if abs(total - 1.0) > MASS_TOL:
            raise ValueError(f"masses sum to {total!r}, expected 1")
        mass.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "mass", mass)

    @classmethod
    def from_weights(cls, support: Sequence[Hashable], weights) -> "DiscreteDistribution":
        """Normalize non-negative weights into a distribution."""
        w = np.asarray(weights, dtype=float)
        total = w.sum()
        if total <= 0:
            raise ValueError("weights must have positive total")
        return cls(tuple(support), w / total)

    def __len__(self):
        return len(self.support)

    def as_dict(self) -> dict:
        return dict(zip(self.support, self.mass.tolist()))


@dataclass(frozen=True)
class HistogramSpec:
    """Bin edges (minutes) and what to do with samples past the last edge.

    Bins are left-closed and right-open, ``[edge[i], edge[i+1])``.
    """

    bin_edges: tuple
    overflow_policy: str = "clamp"

    def __post_init__(self):
        edges = tuple(float(e) for e in self.bin_edges)
        if len(edges) < 2:
            raise ValueError("need at least two bin edges")
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValueError("bin edges must be strictly increasing")
        if self.overflow_policy not in ("clamp", "error"):
            raise ValueError(f"unknown overflow policy {self.overflow_policy!r}")
        object.__setattr__(self, "bin_edges", edges)

    @classmethod
    def uniform(cls, width: float, upper: float, lower: float = 0.0,
                overflow_policy: str = "clamp") -> "HistogramSpec":
        n = int(round((upper - lower) / width))
        return cls(tuple(lower + width * i for i in range(n + 1)), overflow_policy)

    @property
    def n_bins(self) -> int:
        return len(self.bin_edges) - 1

    @property
    def labels(self) -> tuple:
        return self.bin_edges[:-1]


def default_duration_spec() -> HistogramSpec:
    """10-minute bins from 0 to 24 h, clamping longer spells into the last bin."""
    return HistogramSpec.uniform(10.0, 1440.0)


def _check_support(p: DiscreteDistribution, q: DiscreteDistribution):
    if p.support != q.support:
        raise SupportMismatch(
            f"supports differ ({len(p.support)} vs {len(q.support)} labels)"
        )


def _xlog_ratio(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    # x * ln(x / y), with 0 * anything := 0
    out = np.zeros(np.broadcast(x, y).shape)
    pos = x > 0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        r = (x - y) / y
        log = np.where(np.abs(r) < 0.5, np.log1p(r), np.log(x / y))
        np.multiply(x, log, out=out, where=pos)
    return out


def _js_terms(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    # x * ln(x / m) with m = (x + y) / 2, written via t = (x - y) / (x + y) so
    # that m never underflows and near-equal masses keep full precision
    out = np.zeros(np.broadcast(x, y).shape)
    pos = x > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        s = x + y
        t = (x - y) / s
        log = np.where(np.abs(t) < 0.5, np.log1p(t), np.log(2.0 * (x / s)))
        np.multiply(x, log, out=out, where=pos)
    return out


def js_divergence_rows(p, q) -> np.ndarray:
    """Row-wise JS divergence of two stacks of distributions (last axis = support)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise SupportMismatch(f"shapes differ: {p.shape} vs {q.shape}")
    d = 0.5 * (_js_terms(p, q) + _js_terms(q, p)).sum(axis=-1)
    return np.clip(d, 0.0, LN2)


def njsd_rows(p, q) -> np.ndarray:
    """Row-wise normalized JS distance, each value in ``[0, 1]``."""
    return np.sqrt(js_divergence_rows(p, q)) / SQRT_LN2


def kl_divergence(p: DiscreteDistribution, q: DiscreteDistribution) -> float:
    """Kullback-Leibler divergence KL(p || q) in nats."""
    _check_support(p, q)
    bad = (q.mass == 0) & (p.mass > 0)
    if np.any(bad):
        label = p.support[int(np.argmax(bad))]
        raise AbsoluteContinuityViolation(f"q({label!r}) = 0 while p({label!r}) > 0")
    return float(max(_xlog_ratio(p.mass, q.mass).sum(), 0.0))


def js_divergence(p: DiscreteDistribution, q: DiscreteDistribution) -> float:
    _check_support(p, q)
    return float(js_divergence_rows(p.mass, q.mass))


def js_distance(p: DiscreteDistribution, q: DiscreteDistribution) -> float:
    return float(np.sqrt(js_divergence(p, q)))


def njsd(p: DiscreteDistribution, q: DiscreteDistribution) -> float:
    """Normalized Jensen-Shannon distance, ``js_distance / sqrt(ln 2)``."""
    return js_distance(p, q) / SQRT_LN2


def align(p: DiscreteDistribution, q: DiscreteDistribution):
    """Re-express both distributions on the union of their supports.

    Labels keep the order of ``p`` followed by labels only in ``q``; missing
    labels get zero mass.
    """
    if p.support == q.support:
        return p, q
    known = set(p.support)
    support = list(p.support) + [x for x in q.support if x not in known]
    try:
        support.sort()
    except TypeError:
        pass
    pm, qm = p.as_dict(), q.as_dict()
    return (
        DiscreteDistribution(support, [pm.get(x, 0.0) for x in support]),
        DiscreteDistribution(support, [qm.get(x, 0.0) for x in support]),
    )


def histogram(samples: Iterable[float], spec: HistogramSpec) -> DiscreteDistribution:
    """Normalized histogram of duration samples.

    Labels of the returned distribution are the left bin edges.
    """
    x = np.asarray(list(samples), dtype=float)
    if x.size == 0:
        raise EmptySamples("no samples to bin")
    edges = np.asarray(spec.bin_edges)
    if np.any(x < edges[0]):
        raise SampleOutOfRange(f"sample {x.min()!r} below first edge {edges[0]!r}")
    over = x >= edges[-1]
    if np.any(over) and spec.overflow_policy == "error":
        raise SampleOutOfRange(f"sample {x[over].max()!r} beyond last edge {edges[-1]!r}")
    idx = np.searchsorted(edges, x, side="right") - 1
    idx = np.minimum(idx, spec.n_bins - 1)
    counts = np.bincount(idx, minlength=spec.n_bins)
    return DiscreteDistribution(spec.labels, counts / x.size)
