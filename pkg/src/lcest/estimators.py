"""Learning-coefficient estimators computed from tempered posterior draws.

All averages over draws are plain means; variances over draws and over
replicates use the population convention (ddof=0) so that MSE decomposes as
bias^2 + variance exactly.  Temperatures follow the beta = beta0 / log n
scale; natural logarithms throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, Tuple

import numpy as np

from .sampler import PosteriorDraws


def wbic(draws: PosteriorDraws) -> float:
    """Posterior mean of the negative total log-likelihood at draws.beta."""
    return float(-np.mean(draws.total_loglik))


def lambda_wbic(draws1: PosteriorDraws, draws2: PosteriorDraws) -> float:
    """Two-temperature estimator: (WBIC(b1) - WBIC(b2)) / (1/b1 - 1/b2)."""
    b1, b2 = draws1.beta, draws2.beta
    if b1 == b2:
        raise ValueError("the two runs must use distinct temperatures")
    if draws1.n != draws2.n:
        raise ValueError("the two runs must share one dataset")
    return (wbic(draws1) - wbic(draws2)) / (1.0 / b1 - 1.0 / b2)


def lambda_imai(draws: PosteriorDraws) -> float:
    """Single-temperature variance estimator: beta^2 * Var[total log-lik]."""
    v = float(np.var(draws.total_loglik))  # population variance over draws
    return draws.beta * draws.beta * v


def empirical_loss(draws: PosteriorDraws) -> float:
    """T_n from beta=1 draws: -(1/n) sum_i log( (1/K) sum_k p(x_i|theta_k) ).

    Requires an untempered run; the predictive density is a draw average, so
    tempered draws would estimate a different functional.
    """
    if draws.beta != 1.0:
        raise ValueError("empirical_loss needs beta=1 draws")
    K = draws.K
    mat = draws.loglik_matrix
    m = np.max(mat, axis=0)
    log_r = m + np.log(np.sum(np.exp(mat - m[None, :]), axis=0)) - math.log(K)
    return float(-np.mean(log_r))


def lambda_tn(draws_wbic: PosteriorDraws, tn: float) -> float:
    """Functional-variance estimator: (WBIC_n - n * T_n) / log n.

    `draws_wbic` must come from the WBIC temperature beta = beta0 / log n;
    `tn` is the empirical loss computed from a separate beta=1 run.
    """
    n = draws_wbic.n
    return (wbic(draws_wbic) - n * tn) / math.log(n)


def inject_outliers(draws: PosteriorDraws, count: int, delta: float) -> PosteriorDraws:
    """Append `count` copies of the last retained draw with its total
    log-likelihood lowered by exactly `delta` (delta/n per datum).

    Models MCMC runs contaminated by stray low-likelihood iterations; chain
    bookkeeping in `chain_slices` refers to the pre-injection layout.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if delta < 0:
        raise ValueError("delta must be >= 0")
    n = draws.loglik_matrix.shape[1]
    base_row = draws.loglik_matrix[-1] - delta / n
    rows = np.tile(base_row, (count, 1))
    return PosteriorDraws(
        beta=draws.beta,
        draws=np.vstack([draws.draws, np.tile(draws.draws[-1], (count, 1))]),
        loglik_matrix=np.vstack([draws.loglik_matrix, rows]),
        total_loglik=np.concatenate([draws.total_loglik, rows.sum(axis=1)]),
        chains=draws.chains,
        diagnostics=draws.diagnostics,
    )


# ---------------------------------------------------------------------------
# Monte Carlo error from between-chain spread


def chain_estimates(draws: PosteriorDraws, stat: Callable[[PosteriorDraws], float]) -> np.ndarray:
    """Apply `stat` to each chain's rows separately."""
    out = np.empty(draws.chains)
    for c, sl in enumerate(draws.chain_slices()):
        sub = PosteriorDraws(
            beta=draws.beta,
            draws=draws.draws[sl],
            loglik_matrix=draws.loglik_matrix[sl],
            total_loglik=draws.total_loglik[sl],
            chains=1,
            diagnostics=None,
        )
        out[c] = stat(sub)
    return out


def chain_se(draws: PosteriorDraws, stat: Callable[[PosteriorDraws], float]) -> float:
    """Monte Carlo standard error of `stat` from between-chain spread."""
    vals = chain_estimates(draws, stat)
    if vals.size < 2:
        raise ValueError("need at least 2 chains for a Monte Carlo standard error")
    return float(np.std(vals, ddof=1) / math.sqrt(vals.size))


# ---------------------------------------------------------------------------
# One replicate's worth of estimates


def pair_label(pair: Tuple[float, float]) -> str:
    return f"{pair[0]:g},{pair[1]:g}"


@dataclass
class EstimateRecord:
    """Every estimator value for one (dataset, model) replicate."""

    model: str
    true: str
    n: int
    replicate: int
    data_seed: int
    wbic_by_beta0: Dict[float, float]
    lambda_w: Dict[Tuple[float, float], float]
    lambda_i: float
    n_times_tn: float
    lambda_t: float
    min_accept_rate: float = math.nan
    max_accept_rate: float = math.nan

    def to_json_dict(self) -> dict:
        return {
            "model": self.model,
            "true": self.true,
            "n": self.n,
            "replicate": self.replicate,
            "data_seed": self.data_seed,
            # repr keeps the shortest digit string that parses back to the
            # exact same float, so keys survive a JSON round trip
            "wbic_by_beta0": {repr(b): v for b, v in sorted(self.wbic_by_beta0.items())},
            "lambda_w": {f"{p[0]!r},{p[1]!r}": v for p, v in sorted(self.lambda_w.items())},
            "lambda_i": self.lambda_i,
            "n_times_tn": self.n_times_tn,
            "lambda_t": self.lambda_t,
            "min_accept_rate": self.min_accept_rate,
            "max_accept_rate": self.max_accept_rate,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "EstimateRecord":
        wb = {float(k): v for k, v in d["wbic_by_beta0"].items()}
        lw = {}
        for k, v in d["lambda_w"].items():
            a, b = k.split(",")
            lw[(float(a), float(b))] = v
        return cls(
            model=d["model"],
            true=d["true"],
            n=d["n"],
            replicate=d["replicate"],
            data_seed=d["data_seed"],
            wbic_by_beta0=wb,
            lambda_w=lw,
            lambda_i=d["lambda_i"],
            n_times_tn=d["n_times_tn"],
            lambda_t=d["lambda_t"],
            min_accept_rate=d.get("min_accept_rate", math.nan),
            max_accept_rate=d.get("max_accept_rate", math.nan),
        )
