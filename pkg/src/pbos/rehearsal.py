"""Rehearsal simulation of future experiments from the current posterior.

A rehearsal runs ``m`` parallel hypothetical experiments.  Each one draws a
concrete (mean, variance) model from the current posterior, generates one
dataset of the largest requested future size, and re-analyzes every
requested prefix of it against the *original prior only* -- collected data
never leaks into the simulated posteriors.  The result is one sorted CIL
distribution per future size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .conjugate import NormalGammaParams, student_t_quantile

__all__ = [
    "RehearsalConfig",
    "CilDistribution",
    "run_rehearsal",
    "prefix_posterior_cils",
    "percentile",
]


@dataclass(frozen=True)
class RehearsalConfig:
    """How to rehearse: m parallel futures at the given future sizes."""

    sizes: tuple[int, ...]
    m: int = 200
    coverage: float = 0.95

    def __post_init__(self) -> None:
        if self.m < 2:
            raise ValueError(f"m must be at least 2, got {self.m}")
        if not self.sizes:
            raise ValueError("sizes must be non-empty")
        if any(k < 1 for k in self.sizes):
            raise ValueError(f"sizes must all be >= 1, got {self.sizes}")
        if any(b <= a for a, b in zip(self.sizes, self.sizes[1:])):
            raise ValueError(f"sizes must be strictly increasing, got {self.sizes}")
        if not (0.0 < self.coverage < 1.0):
            raise ValueError(f"coverage must lie in (0, 1), got {self.coverage}")

    @classmethod
    def dense(cls, n_max: int, m: int = 200, coverage: float = 0.95) -> "RehearsalConfig":
        """All future sizes 1..n_max."""
        return cls(sizes=tuple(range(1, n_max + 1)), m=m, coverage=coverage)


@dataclass(frozen=True)
class CilDistribution:
    """Per-future-size sorted CIL values from one rehearsal.

    ``values`` has shape (m, len(sizes)); each column is ascending.
    ``at_count`` and ``posterior`` record when and from what state the
    prediction was made.
    """

    sizes: tuple[int, ...]
    values: np.ndarray = field(repr=False)
    at_count: int
    posterior: NormalGammaParams

    def column(self, size: int) -> np.ndarray:
        try:
            j = self.sizes.index(size)
        except ValueError:
            raise KeyError(f"size {size} was not rehearsed (have {self.sizes})") from None
        return self.values[:, j]

    def median(self, size: int) -> float:
        return percentile(self.column(size), 0.5)


@lru_cache(maxsize=256)
def _t_crit_for_sizes(coverage: float, v_scale: float, sizes: tuple[int, ...]) -> np.ndarray:
    dfs = v_scale + np.asarray(sizes, dtype=float)
    out = np.asarray(student_t_quantile(0.5 * (1.0 + coverage), dfs), dtype=float)
    out.setflags(write=False)
    return out


def prefix_posterior_cils(
    prior: NormalGammaParams,
    samples: np.ndarray,
    sizes: tuple[int, ...],
    coverage: float,
) -> np.ndarray:
    """CIL of prior + prefix posterior, per row of ``samples``, per size.

    ``samples`` is (m, k_max) with k_max >= max(sizes); returns an
    (m, len(sizes)) array.  Rows are centered before the running-sum pass so
    the prefix sums of squared deviations stay accurate when a drawn mean is
    large relative to the drawn spread.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 2 or x.shape[1] < sizes[-1]:
        raise ValueError(f"samples must be (m, >= {sizes[-1]}), got shape {x.shape}")
    idx = np.asarray(sizes, dtype=int) - 1
    k = np.asarray(sizes, dtype=float)

    row_mean = x.mean(axis=1, keepdims=True)
    xc = x - row_mean
    running = np.cumsum(xc, axis=1)[:, idx]
    running_sq = np.cumsum(xc * xc, axis=1)[:, idx]
    mean_c = running / k
    ssd = np.maximum(running_sq - k * mean_c**2, 0.0)
    mean = row_mean + mean_c

    n1 = prior.n_scale + k
    v1 = prior.v_scale + k
    phi1 = (
        ssd + prior.v_scale * prior.var_param
        + (k * prior.n_scale / n1) * (mean - prior.mu) ** 2
    ) / v1
    t_crit = _t_crit_for_sizes(coverage, prior.v_scale, tuple(sizes))
    return 2.0 * t_crit * np.sqrt(phi1 / n1)


def run_rehearsal(
    post: NormalGammaParams,
    prior: NormalGammaParams,
    cfg: RehearsalConfig,
    rng: np.random.Generator,
    at_count: int = 0,
) -> CilDistribution:
    """Simulate m future experiments and collect per-size CIL distributions.

    One model draw and one max-size dataset per repetition; every requested
    size reads a prefix of that dataset, so each repetition is a coherent
    trajectory and each size's marginal distribution is correct.
    Deterministic given the generator state.
    """
    m = cfg.m
    precision = rng.gamma(shape=post.v_scale / 2.0, scale=2.0 / (post.v_scale * post.var_param), size=m)
    drawn_sd = np.sqrt(1.0 / precision)
    drawn_mean = rng.normal(post.mu, drawn_sd / math.sqrt(post.n_scale))
    z = rng.standard_normal((m, cfg.sizes[-1]))
    samples = drawn_mean[:, None] + drawn_sd[:, None] * z
    cils = prefix_posterior_cils(prior, samples, cfg.sizes, cfg.coverage)
    return CilDistribution(
        sizes=tuple(cfg.sizes),
        values=np.sort(cils, axis=0),
        at_count=at_count,
        posterior=post,
    )


def percentile(values, q: float) -> float:
    """Linear-interpolation percentile of an already sorted sequence.

    With zero-based rank r = q * (len - 1):
    values[floor(r)] + (r - floor(r)) * (values[floor(r) + 1] - values[floor(r)]).
    """
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("cannot take a percentile of an empty sequence")
    if not (0.0 <= q <= 1.0):
        raise ValueError(f"q must lie in [0, 1], got {q!r}")
    r = q * (v.size - 1)
    lo = int(math.floor(r))
    if lo >= v.size - 1:
        return float(v[-1])
    frac = r - lo
    return float(v[lo] + frac * (v[lo + 1] - v[lo]))
