"""Normal-gamma conjugate inference for a normal data model.

The data model is x ~ Normal(mean, variance) with both parameters unknown.
The conjugate state is a normal-gamma distribution over (mean, precision):

    precision      ~ Gamma(shape = v_scale / 2, scale = 2 / (v_scale * var_param))
    mean|precision ~ Normal(mu, 1 / (n_scale * precision))

so ``E[precision] = 1 / var_param``: ``var_param`` is a variance-scale
parameter in squared data units, and ``n_scale`` / ``v_scale`` are
pseudo-sample counts expressing how much weight the state carries for the
mean and variance respectively.  The marginal of the mean is a scaled,
shifted Student-t with ``v_scale`` degrees of freedom, which gives the
credible interval length (CIL) in closed form.

Everything here is a pure function of its inputs plus an explicitly passed
``numpy.random.Generator``; callers that need parallelism must give each
worker its own generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import stats

__all__ = [
    "NormalGammaParams",
    "DataSummary",
    "ModelDraw",
    "summarize",
    "merge_summaries",
    "posterior_update",
    "student_t_quantile",
    "credible_interval_length",
    "sample_model_params",
    "generate_samples",
    "expected_rehearsal_variance",
    "exact_rehearsal_variance",
]


@dataclass(frozen=True)
class NormalGammaParams:
    """Prior or posterior state over the (mean, variance) of a normal model.

    mu: location of the mean parameter (data units).
    n_scale: pseudo-sample count weighting the mean; > 0.
    var_param: variance-scale parameter (squared data units); > 0.
    v_scale: pseudo-sample count weighting the variance; >= 1.
    """

    mu: float
    n_scale: float
    var_param: float
    v_scale: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.mu):
            raise ValueError(f"mu must be finite, got {self.mu!r}")
        if not (self.n_scale > 0 and math.isfinite(self.n_scale)):
            raise ValueError(f"n_scale must be a positive finite number, got {self.n_scale!r}")
        if not (self.var_param > 0 and math.isfinite(self.var_param)):
            raise ValueError(f"var_param must be a positive finite number, got {self.var_param!r}")
        if not (self.v_scale >= 1 and math.isfinite(self.v_scale)):
            raise ValueError(f"v_scale must be >= 1, got {self.v_scale!r}")


@dataclass(frozen=True)
class DataSummary:
    """Sufficient statistics of a batch of samples.

    count: number of samples.
    mean: sample mean (0.0 by convention when count == 0).
    sum_sq_dev: sum of squared deviations from the mean, i.e. (count-1) * s**2.
    """

    count: int
    mean: float = 0.0
    sum_sq_dev: float = 0.0

    def __post_init__(self) -> None:
        if self.count < 0:
            raise ValueError(f"count must be non-negative, got {self.count}")
        if self.sum_sq_dev < 0:
            raise ValueError(f"sum_sq_dev must be non-negative, got {self.sum_sq_dev}")
        if self.count == 0 and (self.mean != 0.0 or self.sum_sq_dev != 0.0):
            raise ValueError("count == 0 requires mean == 0 and sum_sq_dev == 0")


@dataclass(frozen=True)
class ModelDraw:
    """One concrete data-generation model: a (mean, variance) pair."""

    mean: float
    variance: float

    def __post_init__(self) -> None:
        if not (self.variance > 0):
            raise ValueError(f"variance must be positive, got {self.variance!r}")


def summarize(samples) -> DataSummary:
    """Reduce samples to sufficient statistics with a two-pass scheme.

    Tiny negative sums of squared deviations caused by rounding are clamped
    to zero.  An empty input yields ``DataSummary(count=0)``.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"samples must be one-dimensional, got shape {x.shape}")
    n = x.size
    if n == 0:
        return DataSummary(count=0)
    mean = float(x.mean())
    ssd = float(np.sum((x - mean) ** 2))
    return DataSummary(count=int(n), mean=mean, sum_sq_dev=max(ssd, 0.0))


def merge_summaries(a: DataSummary, b: DataSummary) -> DataSummary:
    """Combine two disjoint batches into the summary of their concatenation."""
    if a.count == 0:
        return b
    if b.count == 0:
        return a
    n = a.count + b.count
    delta = b.mean - a.mean
    mean = a.mean + delta * (b.count / n)
    ssd = a.sum_sq_dev + b.sum_sq_dev + delta * delta * (a.count * b.count / n)
    return DataSummary(count=n, mean=mean, sum_sq_dev=max(ssd, 0.0))


def posterior_update(prior: NormalGammaParams, data: DataSummary) -> NormalGammaParams:
    """Fold a data summary into a normal-gamma state.

    With ``n`` samples of mean ``xbar`` and squared deviations ``ssd``:

        mu'        = (n_scale * mu + n * xbar) / (n_scale + n)
        n_scale'   = n_scale + n
        v_scale'   = v_scale + n
        var_param' = (ssd + v_scale * var_param
                      + (n * n_scale / n_scale') * (xbar - mu)**2) / v_scale'

    A count of zero returns the prior unchanged so that sessions can start
    uniformly from an empty dataset.
    """
    if data.count == 0:
        return prior
    n = float(data.count)
    n1 = prior.n_scale + n
    v1 = prior.v_scale + n
    mu1 = (prior.n_scale * prior.mu + n * data.mean) / n1
    phi1 = (
        data.sum_sq_dev
        + prior.v_scale * prior.var_param
        + (n * prior.n_scale / n1) * (data.mean - prior.mu) ** 2
    ) / v1
    return NormalGammaParams(mu=mu1, n_scale=n1, var_param=phi1, v_scale=v1)


@lru_cache(maxsize=4096)
def _t_ppf_scalar(p: float, df: float) -> float:
    return float(stats.t.ppf(p, df))


def student_t_quantile(p, df):
    """Quantile of the standard Student-t distribution.

    Scalars go through a cached path (sessions evaluate the same degrees of
    freedom thousands of times); arrays broadcast through scipy directly.
    """
    p_arr = np.asarray(p, dtype=float)
    df_arr = np.asarray(df, dtype=float)
    if np.any(p_arr <= 0.0) or np.any(p_arr >= 1.0):
        raise ValueError(f"p must lie strictly inside (0, 1), got {p!r}")
    if np.any(df_arr <= 0.0):
        raise ValueError(f"df must be positive, got {df!r}")
    if p_arr.ndim == 0 and df_arr.ndim == 0:
        return _t_ppf_scalar(float(p_arr), float(df_arr))
    return stats.t.ppf(p_arr, df_arr)


def credible_interval_length(post: NormalGammaParams, coverage: float) -> float:
    """Width of the symmetric highest-density interval for the mean.

    The mean's marginal is mu + sqrt(var_param / n_scale) * T(v_scale); the
    density is symmetric and unimodal, so the HDI is the equal-tailed
    interval:

        2 * t_quantile((1 + coverage) / 2, v_scale) * sqrt(var_param / n_scale)
    """
    if not (0.0 < coverage < 1.0):
        raise ValueError(f"coverage must lie strictly inside (0, 1), got {coverage!r}")
    t_crit = student_t_quantile(0.5 * (1.0 + coverage), post.v_scale)
    return 2.0 * t_crit * math.sqrt(post.var_param / post.n_scale)


def sample_model_params(post: NormalGammaParams, rng: np.random.Generator) -> ModelDraw:
    """Draw one data-generation model from a normal-gamma state.

    Precision is drawn Gamma(shape = v_scale/2, scale = 2/(v_scale*var_param))
    -- shape/scale, not shape/rate, so that E[precision] = 1/var_param --
    then the mean is drawn Normal(mu, 1/(n_scale*precision)).
    """
    precision = rng.gamma(shape=post.v_scale / 2.0, scale=2.0 / (post.v_scale * post.var_param))
    mean = rng.normal(post.mu, math.sqrt(1.0 / (post.n_scale * precision)))
    return ModelDraw(mean=float(mean), variance=float(1.0 / precision))


def generate_samples(draw: ModelDraw, k: int, rng: np.random.Generator) -> np.ndarray:
    """Generate k i.i.d. samples from a concrete data model."""
    if k < 0:
        raise ValueError(f"k must be non-negative, got {k}")
    if k == 0:
        return np.empty(0, dtype=float)
    return rng.normal(draw.mean, math.sqrt(draw.variance), size=k)


def expected_rehearsal_variance(
    prior: NormalGammaParams, data: DataSummary, n_future: int
) -> float:
    """First-order expected variance parameter of a simulated-future posterior.

    A rehearsal draws a model from the posterior of ``prior`` + ``data``,
    generates ``n_future`` samples from it, and combines those samples with
    the original prior alone.  This evaluates the closed-form approximation
    of the expected variance parameter of that simulated posterior, obtained
    by replacing the expectation of the drawn variance with the reciprocal
    of the expected drawn precision and treating the drawn mean as fixed at
    its expectation:

        (1 / (n' + v0)) * [ (n' - 1 + n0/(n' + n0)) * var_param'
                            + v0 * phi0
                            + (n' * n0 * n^2 / ((n' + n0) * (n + n0)^2))
                              * (xbar - mu0)^2 ]

    where primes denote posterior quantities and n' = ``n_future``.  See
    :func:`exact_rehearsal_variance` for the exact expectation, which
    differs by O(1/v_scale') factors.
    """
    if data.count < 1:
        raise ValueError("data must contain at least one sample")
    if n_future < 1:
        raise ValueError(f"n_future must be positive, got {n_future}")
    post = posterior_update(prior, data)
    nf = float(n_future)
    n = float(data.count)
    n0, v0, phi0, mu0 = prior.n_scale, prior.v_scale, prior.var_param, prior.mu
    coef = nf - 1.0 + n0 / (nf + n0)
    offset_term = (nf * n0 * n * n) / ((nf + n0) * (n + n0) ** 2) * (data.mean - mu0) ** 2
    return (coef * post.var_param + v0 * phi0 + offset_term) / (nf + v0)


def exact_rehearsal_variance(
    prior: NormalGammaParams, data: DataSummary, n_future: int
) -> float:
    """Exact expected variance parameter of a simulated-future posterior.

    Same quantity as :func:`expected_rehearsal_variance` but computed
    without moment approximations.  With the posterior precision drawn
    Gamma(v'/2, 2/(v'*phi')), the drawn variance has mean
    kappa*phi' with kappa = v'/(v' - 2), which also feeds the sampling
    variance of the simulated mean.  Requires posterior v_scale > 2
    (below that the drawn variance has no finite mean).
    """
    if data.count < 1:
        raise ValueError("data must contain at least one sample")
    if n_future < 1:
        raise ValueError(f"n_future must be positive, got {n_future}")
    post = posterior_update(prior, data)
    if post.v_scale <= 2.0:
        raise ValueError(
            f"posterior v_scale must exceed 2 for a finite expectation, got {post.v_scale}"
        )
    nf = float(n_future)
    n0, v0, phi0, mu0 = prior.n_scale, prior.v_scale, prior.var_param, prior.mu
    mean_drawn_variance = post.var_param * post.v_scale / (post.v_scale - 2.0)
    expected_ssd = (nf - 1.0) * mean_drawn_variance
    # E[(ybar - mu0)^2]: sampling variance of ybar, variance of the drawn
    # mean itself, and the squared offset of the posterior location.
    expected_offset_sq = (
        mean_drawn_variance / nf
        + mean_drawn_variance / post.n_scale
        + (post.mu - mu0) ** 2
    )
    return (
        expected_ssd + v0 * phi0 + (nf * n0 / (nf + n0)) * expected_offset_sq
    ) / (nf + v0)
