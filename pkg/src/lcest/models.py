"""Model zoo: per-datum log densities, proper priors, and parameter transforms.

Each model exposes two coordinate systems: the natural (constrained)
parameterization used by densities and priors, and an unconstrained R^d
parameterization the sampler works in.  ``to_constrained`` returns the
log-Jacobian of the map so tempered targets can be evaluated directly on R^d.

Models also provide ``bind(data)``, which returns a dataset-bound likelihood
evaluator.  Subclasses override it with sufficient-statistic or unique-count
shortcuts; the generic fallback just sums the per-datum vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import gammaln

LOG_2PI = math.log(2.0 * math.pi)

REAL = "real"
COUNT = "count"


class ModelError(Exception):
    """A density or transform produced values that violate the model contract."""


# ---------------------------------------------------------------------------
# Data containers


@dataclass(frozen=True)
class Dataset:
    """Ordered i.i.d. sample; order is part of the identity (seeded pipelines)."""

    observations: np.ndarray

    def __post_init__(self):
        obs = np.asarray(self.observations, dtype=float)
        if obs.ndim != 1 or obs.size < 1:
            raise ValueError("dataset must be a 1-d array with at least one value")
        if not np.all(np.isfinite(obs)):
            raise ValueError("dataset contains non-finite values")
        object.__setattr__(self, "observations", obs)

    @property
    def n(self) -> int:
        return self.observations.size


def _check_support(support: str, data: Dataset) -> None:
    xs = data.observations
    if support == COUNT:
        if np.any(xs < 0) or np.any(xs != np.floor(xs)):
            raise ModelError("count-support model given non-integer or negative data")
    # real support: finiteness already enforced by Dataset


# ---------------------------------------------------------------------------
# True (data-generating) distributions


class TrueDistribution:
    """Data-generating distribution; sampling only, density optional."""

    name: str
    support: str

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class NormalTrue(TrueDistribution):
    mu: float = 0.0
    sigma: float = 1.0
    support = REAL

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")

    @property
    def name(self) -> str:
        return f"normal:{self.mu:g},{self.sigma:g}"

    def sample(self, rng, n):
        return rng.normal(self.mu, self.sigma, size=n)


@dataclass(frozen=True)
class PoissonTrue(TrueDistribution):
    rate: float = 3.0
    support = COUNT

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("rate must be positive")

    @property
    def name(self) -> str:
        return f"poisson:{self.rate:g}"

    def sample(self, rng, n):
        return rng.poisson(self.rate, size=n).astype(float)


@dataclass(frozen=True)
class PoissonMixtureTrue(TrueDistribution):
    weights: tuple
    rates: tuple
    support = COUNT

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        r = np.asarray(self.rates, dtype=float)
        if w.size != r.size or w.size < 1:
            raise ValueError("weights and rates must have equal positive length")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be positive and sum to 1")
        if np.any(r <= 0):
            raise ValueError("rates must be positive")

    @property
    def name(self) -> str:
        parts = [f"{w:g},{r:g}" for w, r in zip(self.weights, self.rates)]
        return "poisson-mix:" + ";".join(parts)

    def sample(self, rng, n):
        comps = rng.choice(len(self.weights), size=n, p=np.asarray(self.weights))
        rates = np.asarray(self.rates)[comps]
        return rng.poisson(rates).astype(float)


def sample_true(dist: TrueDistribution, n: int, seed: int) -> Dataset:
    """Draw n observations from `dist` with a dedicated PCG64 stream."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    return Dataset(dist.sample(rng, n))


# ---------------------------------------------------------------------------
# Unconstrained-parameter transforms (shared by the mixture models)


def _sigmoid(z):
    # stable both tails
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def stick_breaking(z: np.ndarray, H: int):
    """Map R^(H-1) -> interior of the H-simplex; returns (weights, log_jacobian).

    The logit shift log(H-1-k) puts z=0 at the uniform weight vector.
    """
    w = np.empty(H)
    log_jac = 0.0
    stick = 1.0
    for k in range(H - 1):
        zk = z[k] - math.log(H - 1 - k)
        v = 1.0 / (1.0 + math.exp(-zk)) if zk >= 0 else math.exp(zk) / (1.0 + math.exp(zk))
        w[k] = stick * v
        # d w_k / d z_k = v (1-v) stick, accumulated in log scale
        if v <= 0.0 or v >= 1.0 or stick <= 0.0:
            return w, -math.inf
        log_jac += math.log(v) + math.log1p(-v) + math.log(stick)
        stick *= 1.0 - v
    w[H - 1] = stick
    return w, log_jac


def stick_breaking_inverse(w: np.ndarray) -> np.ndarray:
    H = w.size
    z = np.empty(H - 1)
    stick = 1.0
    for k in range(H - 1):
        v = w[k] / stick
        z[k] = math.log(v) - math.log1p(-v) + math.log(H - 1 - k)
        stick -= w[k]
    return z


# ---------------------------------------------------------------------------
# Dataset-bound likelihood evaluators


class BoundLogLik:
    """Likelihood evaluator bound to one dataset.

    ``total`` is the sampler's hot path and may use shortcuts; ``per_datum``
    returns the full n-vector and must satisfy total == per_datum.sum() to
    float accuracy.
    """

    def __init__(self, model: "ModelSpec", data: Dataset):
        self.model = model
        self.xs = data.observations

    def per_datum(self, theta: np.ndarray) -> np.ndarray:
        return self.model.log_density_vec(self.xs, theta)

    def total(self, theta: np.ndarray) -> float:
        return float(np.sum(self.per_datum(theta)))


class _UnitNormalBound(BoundLogLik):
    """N(theta, 1) likelihood via (n, sum x, sum x^2)."""

    def __init__(self, model, data):
        super().__init__(model, data)
        xs = self.xs
        self._n = xs.size
        self._sx = float(xs.sum())
        self._sxx = float(np.dot(xs, xs))

    def total(self, theta):
        m = theta[0]
        return -0.5 * self._n * LOG_2PI - 0.5 * (self._sxx - 2.0 * m * self._sx + self._n * m * m)


class _MeanVarNormalBound(BoundLogLik):
    """N(mu, sigma^2) likelihood via sufficient statistics."""

    def __init__(self, model, data):
        super().__init__(model, data)
        xs = self.xs
        self._n = xs.size
        self._sx = float(xs.sum())
        self._sxx = float(np.dot(xs, xs))

    def total(self, theta):
        mu, sigma = theta[0], theta[1]
        q = self._sxx - 2.0 * mu * self._sx + self._n * mu * mu
        return -self._n * math.log(sigma) - 0.5 * self._n * LOG_2PI - 0.5 * q / (sigma * sigma)


class _CountMixtureBound(BoundLogLik):
    """Poisson-mixture likelihood over the distinct observed counts.

    Count data repeat heavily, so the per-datum vector is a lookup into a
    table over unique values; total is a weighted sum over that table.
    """

    def __init__(self, model, data):
        super().__init__(model, data)
        self._uniq, self._inverse, self._counts = np.unique(
            self.xs, return_inverse=True, return_counts=True
        )
        self._counts = self._counts.astype(float)

    def _table(self, theta):
        return self.model.log_density_vec(self._uniq, theta)

    def per_datum(self, theta):
        return self._table(theta)[self._inverse]

    def total(self, theta):
        return float(np.dot(self._counts, self._table(theta)))


# ---------------------------------------------------------------------------
# Models


class ModelSpec:
    """A parametric model: per-datum density, proper prior, R^d parameterization."""

    name: str
    dim: int  # unconstrained dimension
    support: str

    def log_density_vec(self, xs: np.ndarray, theta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def log_density(self, x: float, theta: np.ndarray) -> float:
        return float(self.log_density_vec(np.asarray([x], dtype=float), theta)[0])

    def log_prior(self, theta: np.ndarray) -> float:
        raise NotImplementedError

    def to_constrained(self, z: np.ndarray):
        """Map unconstrained z to (theta, log_jacobian)."""
        raise NotImplementedError

    def to_unconstrained(self, theta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def true_lambda_for(self, dist: TrueDistribution) -> Optional[float]:
        """Known learning coefficient for this model/truth pairing, if any."""
        return None

    def bind(self, data: Dataset) -> BoundLogLik:
        _check_support(self.support, data)
        return BoundLogLik(self, data)


def _log_normal_pdf(x, mu, sigma):
    return -math.log(sigma) - 0.5 * LOG_2PI - 0.5 * ((x - mu) / sigma) ** 2


class NormalMeanVar(ModelSpec):
    """N(mu, sigma^2) with mu ~ N(0, 10^2) and log sigma ~ N(0, 2^2).

    Regular model (d=2): the learning coefficient equals d/2 = 1 for any
    normal truth.
    """

    name = "normal-meanvar"
    dim = 2
    support = REAL

    def log_density_vec(self, xs, theta):
        mu, sigma = theta[0], theta[1]
        return -math.log(sigma) - 0.5 * LOG_2PI - 0.5 * ((xs - mu) / sigma) ** 2

    def log_prior(self, theta):
        mu, sigma = theta[0], theta[1]
        if not (math.isfinite(mu) and math.isfinite(sigma)) or sigma <= 0:
            return -math.inf
        ls = math.log(sigma)
        # lognormal(0, 2^2) density on sigma itself
        return _log_normal_pdf(mu, 0.0, 10.0) - ls - math.log(2.0) - 0.5 * LOG_2PI - ls * ls / 8.0

    def to_constrained(self, z):
        sigma = math.exp(z[1])
        return np.array([z[0], sigma]), z[1]

    def to_unconstrained(self, theta):
        return np.array([theta[0], math.log(theta[1])])

    def true_lambda_for(self, dist):
        if isinstance(dist, NormalTrue):
            return 1.0
        return None

    def bind(self, data):
        _check_support(self.support, data)
        return _MeanVarNormalBound(self, data)


class UniformMeanNormal(ModelSpec):
    """N(theta, 1) with theta uniform on [-1, 1].

    Against a N(0,1) truth the posterior concentrates at the boundary-free
    interior point theta=0 and the learning coefficient is 1/2.
    """

    name = "example1"
    dim = 1
    support = REAL

    def log_density_vec(self, xs, theta):
        t = theta[0]
        return -0.5 * LOG_2PI - 0.5 * (xs - t) ** 2

    def log_prior(self, theta):
        t = theta[0]
        if not math.isfinite(t) or abs(t) > 1.0:
            return -math.inf
        return -math.log(2.0)

    def to_constrained(self, z):
        # theta = 2*sigmoid(z) - 1 maps R onto (-1, 1); z=0 -> theta=0
        zz = z[0]
        a = abs(zz)
        t = math.tanh(zz / 2.0)  # == 2*sigmoid(z)-1
        # d theta / d z = 2 sigmoid(z)(1 - sigmoid(z));  log of it, stably:
        log_jac = math.log(2.0) - a - 2.0 * math.log1p(math.exp(-a))
        return np.array([t]), log_jac

    def to_unconstrained(self, theta):
        t = theta[0]
        return np.array([2.0 * math.atanh(t)])

    def true_lambda_for(self, dist):
        if isinstance(dist, NormalTrue) and dist.sigma == 1.0 and abs(dist.mu) < 1.0:
            return 0.5
        return None

    def bind(self, data):
        _check_support(self.support, data)
        return _UnitNormalBound(self, data)


class ConjugateNormal(ModelSpec):
    """N(theta, 1) with theta ~ N(0, 1): closed-form posterior for calibration.

    With data x_1..x_n the beta=1 posterior is N(n xbar / (n+1), 1/(n+1)).
    """

    name = "conjugate-normal"
    dim = 1
    support = REAL

    def log_density_vec(self, xs, theta):
        t = theta[0]
        return -0.5 * LOG_2PI - 0.5 * (xs - t) ** 2

    def log_prior(self, theta):
        t = theta[0]
        if not math.isfinite(t):
            return -math.inf
        return _log_normal_pdf(t, 0.0, 1.0)

    def to_constrained(self, z):
        return np.array([z[0]]), 0.0

    def to_unconstrained(self, theta):
        return np.array([theta[0]])

    def true_lambda_for(self, dist):
        if isinstance(dist, NormalTrue) and dist.sigma == 1.0:
            return 0.5
        return None

    def bind(self, data):
        _check_support(self.support, data)
        return _UnitNormalBound(self, data)


def _row_logsumexp(mat):
    # logsumexp over axis 1 without scipy call overhead
    m = np.max(mat, axis=1)
    return m + np.log(np.sum(np.exp(mat - m[:, None]), axis=1))


class PoissonMixture(ModelSpec):
    """H-component Poisson mixture.

    theta = (w_1..w_H, rate_1..rate_H); weights ~ Dirichlet(1,..,1), rates
    i.i.d. Gamma(shape 2, rate 0.5).  Unconstrained: stick-breaking z for the
    weights, log z for the rates (dim = 2H - 1).

    Against a Poisson-mixture truth with r <= H distinct components the
    learning coefficient is (3r + H - 2) / 4.
    """

    support = COUNT

    def __init__(self, H: int):
        if H < 1:
            raise ValueError("H must be >= 1")
        self.H = H
        self.name = f"poisson-mix:{H}"
        self.dim = 2 * H - 1

    def log_density_vec(self, xs, theta):
        H = self.H
        w = theta[:H]
        rates = theta[H:]
        logw = np.log(w)
        # n x H matrix of log w_h + log Po(x | rate_h)
        mat = (
            logw[None, :]
            + xs[:, None] * np.log(rates)[None, :]
            - rates[None, :]
            - gammaln(xs + 1.0)[:, None]
        )
        if H == 1:
            return mat[:, 0]
        return _row_logsumexp(mat)

    def log_prior(self, theta):
        H = self.H
        w = theta[:H]
        rates = theta[H:]
        if not np.all(np.isfinite(rates)) or np.any(rates <= 0):
            return -math.inf
        if np.any(w <= 0) or abs(float(w.sum()) - 1.0) > 1e-8:
            return -math.inf
        # Dirichlet(1,..,1) is the constant (H-1)!; Gamma(2, 0.5) on each rate
        lp = math.lgamma(H)
        lp += float(np.sum(np.log(rates) - rates / 2.0)) - 2.0 * H * math.log(2.0)
        return lp

    def to_constrained(self, z):
        H = self.H
        w, log_jac = stick_breaking(z[: H - 1], H)
        log_rates = z[H - 1 :]
        rates = np.exp(log_rates)
        log_jac += float(log_rates.sum())
        return np.concatenate([w, rates]), log_jac

    def to_unconstrained(self, theta):
        H = self.H
        zw = stick_breaking_inverse(theta[:H])
        return np.concatenate([zw, np.log(theta[H:])])

    def true_lambda_for(self, dist):
        if isinstance(dist, PoissonTrue):
            r = 1
        elif isinstance(dist, PoissonMixtureTrue):
            r = len(set(dist.rates))
        else:
            return None
        if r <= self.H:
            return (3 * r + self.H - 2) / 4.0
        return None

    def bind(self, data):
        _check_support(self.support, data)
        return _CountMixtureBound(self, data)


class GaussianMixture(ModelSpec):
    """K-component mixture of unit-variance normals.

    theta = (w_1..w_K, m_1..m_K); weights ~ Dirichlet(1,..,1), means i.i.d.
    N(0, 10^2).  Unconstrained: stick-breaking for weights, identity for means
    (dim = 2K - 1).

    Against a N(mu, 1) truth the learning coefficient is 3/4 for K=2 and 5/4
    for K=4 (1/2 for the regular K=1 case).
    """

    support = REAL

    _LAMBDA_VS_UNIT_NORMAL = {1: 0.5, 2: 0.75, 4: 1.25}

    def __init__(self, K: int):
        if K < 1:
            raise ValueError("K must be >= 1")
        self.K = K
        self.name = f"gauss-mix:{K}"
        self.dim = 2 * K - 1

    def log_density_vec(self, xs, theta):
        K = self.K
        w = theta[:K]
        means = theta[K:]
        mat = np.log(w)[None, :] - 0.5 * LOG_2PI - 0.5 * (xs[:, None] - means[None, :]) ** 2
        if K == 1:
            return mat[:, 0]
        return _row_logsumexp(mat)

    def log_prior(self, theta):
        K = self.K
        w = theta[:K]
        means = theta[K:]
        if not np.all(np.isfinite(means)):
            return -math.inf
        if np.any(w <= 0) or abs(float(w.sum()) - 1.0) > 1e-8:
            return -math.inf
        lp = math.lgamma(K)
        lp += float(np.sum(-math.log(10.0) - 0.5 * LOG_2PI - 0.5 * (means / 10.0) ** 2))
        return lp

    def to_constrained(self, z):
        K = self.K
        w, log_jac = stick_breaking(z[: K - 1], K)
        return np.concatenate([w, z[K - 1 :]]), log_jac

    def to_unconstrained(self, theta):
        K = self.K
        return np.concatenate([stick_breaking_inverse(theta[:K]), theta[K:]])

    def true_lambda_for(self, dist):
        if isinstance(dist, NormalTrue) and dist.sigma == 1.0:
            return self._LAMBDA_VS_UNIT_NORMAL.get(self.K)
        return None


# ---------------------------------------------------------------------------
# Registry


def get_model(model_id: str) -> ModelSpec:
    """Model zoo lookup: 'normal-meanvar', 'example1', 'conjugate-normal',
    'poisson-mix:H', 'gauss-mix:K'."""
    mid = model_id.strip()
    if mid == "normal-meanvar":
        return NormalMeanVar()
    if mid == "example1":
        return UniformMeanNormal()
    if mid == "conjugate-normal":
        return ConjugateNormal()
    if mid.startswith("poisson-mix:"):
        return PoissonMixture(_parse_count(mid, "poisson-mix"))
    if mid.startswith("gauss-mix:"):
        return GaussianMixture(_parse_count(mid, "gauss-mix"))
    raise ValueError(f"unknown model id: {model_id!r}")


def _parse_count(mid, prefix):
    arg = mid[len(prefix) + 1 :]
    try:
        k = int(arg)
    except ValueError:
        raise ValueError(f"{prefix} wants an integer component count, got {arg!r}") from None
    return k


def get_true(true_id: str) -> TrueDistribution:
    """True-distribution lookup: 'normal:MU,SIGMA', 'poisson:RATE',
    'poisson-mix:W,RATE;W,RATE;...'."""
    tid = true_id.strip()
    if tid.startswith("normal:"):
        parts = tid[len("normal:") :].split(",")
        if len(parts) != 2:
            raise ValueError(f"normal wants MU,SIGMA, got {true_id!r}")
        return NormalTrue(float(parts[0]), float(parts[1]))
    if tid.startswith("poisson-mix:"):
        pairs = tid[len("poisson-mix:") :].split(";")
        ws, rs = [], []
        for p in pairs:
            fields = p.split(",")
            if len(fields) != 2:
                raise ValueError(f"poisson-mix wants W,RATE pairs joined by ';', got {true_id!r}")
            ws.append(float(fields[0]))
            rs.append(float(fields[1]))
        return PoissonMixtureTrue(tuple(ws), tuple(rs))
    if tid.startswith("poisson:"):
        return PoissonTrue(float(tid[len("poisson:") :]))
    raise ValueError(f"unknown true-distribution id: {true_id!r}")
