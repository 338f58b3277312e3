"""Gaussian mixture test martingales under unknown variance.

Two families, both with initial value one:

* sample-mean form: for i.i.d. Gaussians with mean mu, the process

      G_t = sqrt(s^2 / (t + s^2))
            * (1 - (R_t - t mu)^2 / ((t + s^2)(W_t - 2 R_t mu + t mu^2)))^(-t/2)

  built from the running sum R_t and running square sum W_t;

* OLS form: for y_i = f_i^T beta + noise and a fixed direction f, the
  analogous process built from the prefix OLS fit, its residual variance
  S_t^2 = RSS / (t - d) and the directional design variance
  Sigma_t = f^T D_t^{-1} f.

Both admit a closed form in the self-normalized deviation
V = (deviation)^2 / (2 * variance-scale); crossing {G >= 1/beta} is then
exactly {V >= gamma/2} for the matching boundary function, which is what
the stopping thresholds are built on.  The deviation forms here use the
maximum-likelihood variance convention that makes that equivalence exact.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigurationError
from .stats import cholesky_if_pd


def gaussian_mixture_value(samples, mu: float, s: float = 1.0) -> np.ndarray:
    """Prefix path of the sample-mean mixture martingale.

    Returns one value per prefix length t = 1..len(samples).  Prefixes in
    which every sample equals mu exactly take the degenerate-limit value
    sqrt(s^2 / (t + s^2)).
    """
    if s <= 0.0:
        raise ConfigurationError("mixture width s must be positive")
    y = np.asarray(samples, dtype=np.float64)
    if y.ndim != 1 or y.size == 0:
        raise ConfigurationError("samples must be a non-empty 1-d array")
    t = np.arange(1, y.size + 1, dtype=np.float64)
    r = np.cumsum(y) - t * mu
    dsq = np.cumsum((y - mu) ** 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(dsq > 0.0, r * r / ((t + s * s) * dsq), 0.0)
    log_g = 0.5 * (math.log(s * s) - np.log(t + s * s)) - 0.5 * t * np.log1p(-q)
    with np.errstate(over="ignore"):
        return np.exp(log_g)


def mixture_value_at_deviation(n: int, v: float) -> float:
    """Sample-mean martingale (s = 1) as a function of V = n (mean - mu)^2 / (2 sigma_hat^2).

    sigma_hat^2 is the maximum-likelihood variance (divisor n); with that
    convention {G(V) >= 1/beta} holds iff V >= gamma(n, beta) / 2.  The
    value is increasing in v with finite limit (n+1)^((n-1)/2).
    """
    if n < 1:
        raise ConfigurationError("need n >= 1")
    if v < 0.0 or math.isnan(v):
        raise ConfigurationError("deviation v must be >= 0")
    if math.isinf(v):
        return math.exp(0.5 * (n - 1) * math.log(n + 1.0))
    log_ratio = math.log(n * n + n + 2.0 * v) - math.log1p(n) - math.log(n + 2.0 * v)
    return math.exp(-0.5 * math.log1p(n) - 0.5 * n * log_ratio)


def linear_mixture_value(rows, responses, beta, f, s: float = 1.0) -> np.ndarray:
    """Prefix path of the OLS mixture martingale along direction f.

    ``rows`` is the (T, d) design, ``responses`` the (T,) outcomes and
    ``beta`` the true coefficient vector of the sampled model.  Prefixes
    whose design is not yet invertible with t >= d + 1 keep the initial
    value one.  Noiseless prefixes (zero residual) take their limit value
    ((s^2 + lam^-1 scale) power form), which is finite.
    """
    if s <= 0.0:
        raise ConfigurationError("mixture width s must be positive")
    x = np.asarray(rows, dtype=np.float64)
    y = np.asarray(responses, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    if x.ndim != 2 or y.shape != (x.shape[0],) or f.shape != (x.shape[1],):
        raise ConfigurationError("rows (T,d), responses (T,) and f (d,) must align")
    t_total, d = x.shape
    target = float(f @ beta)
    out = np.ones(t_total)
    gram = np.zeros((d, d))
    moment = np.zeros(d)
    yy = 0.0
    s2w = s * s
    for i in range(t_total):
        gram += np.outer(x[i], x[i])
        moment += x[i] * y[i]
        yy += y[i] * y[i]
        t = i + 1
        if t < d + 1:
            continue
        lower = cholesky_if_pd(gram)
        if lower is None:
            continue
        z = np.linalg.solve(lower, moment)
        bhat = np.linalg.solve(lower.T, z)
        rss = max(0.0, yy - float(moment @ bhat))
        w = np.linalg.solve(lower, f)
        sig = float(w @ w)
        if sig <= 0.0:
            continue
        siginv = 1.0 / sig
        dev2 = (float(f @ bhat) - target) ** 2
        scale = (s2w + siginv) * (t - d) * (rss / (t - d))
        num = scale + s2w * dev2 * siginv
        den = scale + (s2w + siginv) * siginv * dev2
        if den <= 0.0:
            log_ratio = 0.0
        else:
            log_ratio = math.log(num) - math.log(den) if num > 0.0 else -math.inf
        log_g = 0.5 * (math.log(s2w) - math.log(s2w + siginv))
        log_g -= 0.5 * (t - d + 1) * log_ratio
        out[i] = math.exp(log_g) if log_g < 700.0 else math.inf
    return out


def linear_mixture_value_at_deviation(n: int, d: int, lam: float, v: float) -> float:
    """OLS martingale (s = 1) as a function of V = (f^T (bhat - beta))^2 / (2 S^2 Sigma).

    ``lam`` is the directional information Sigma^{-1}.  With the residual
    variance divisor n - d the crossing {G(V) >= 1/beta} holds iff
    V >= gamma_l(n, lam, beta, d) / 2.  Increasing in v with finite limit
    (1 + lam)^((n-d)/2).
    """
    if d < 1 or n < d + 1:
        raise ConfigurationError("need n >= d + 1")
    if lam <= 0.0 or not math.isfinite(lam):
        raise ConfigurationError("directional information lam must be positive finite")
    if v < 0.0 or math.isnan(v):
        raise ConfigurationError("deviation v must be >= 0")
    if math.isinf(v):
        return math.exp(0.5 * (n - d) * math.log1p(lam))
    nd = float(n - d)
    log_ratio = math.log(nd * (1.0 + lam) + 2.0 * v) - math.log1p(lam) - math.log(nd + 2.0 * v)
    return math.exp(-0.5 * math.log1p(lam) - 0.5 * (nd + 1.0) * log_ratio)
