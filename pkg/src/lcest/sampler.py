"""Tempered-posterior MCMC: adaptive per-coordinate random-walk Metropolis.

The target is  log phi(theta) + beta * sum_i log p(x_i | theta) + log |J(z)|
on the unconstrained space.  Proposal scales adapt per coordinate during
burn-in only (Robbins-Monro on the log scale, step t^-0.6, driven toward a
target acceptance rate) and are frozen afterwards, so retained draws come from
a fixed-kernel chain.  Chains get independent PCG64 streams spawned from one
SeedSequence, which makes runs reproducible and chain-order deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .models import Dataset, ModelError, ModelSpec

ADAPT_DECAY = 0.6


class SamplerError(Exception):
    """The chain could not produce usable draws (bad init, stuck chain, ...)."""


@dataclass
class McmcConfig:
    """Knobs for one tempered-posterior run; mirrors the CLI flags 1:1."""

    iters: int = 4000
    burn_in: int = 2000
    thin: int = 1
    chains: int = 2
    seed: int = 0
    target_accept: float = 0.3
    init_scale: float = 1.0

    def validate(self) -> None:
        if self.iters < 1:
            raise ValueError("iters must be >= 1")
        if self.burn_in < 0 or self.burn_in >= self.iters:
            raise ValueError("burn_in must be in [0, iters)")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.chains < 1:
            raise ValueError("chains must be >= 1")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must be in (0, 1)")
        if self.init_scale <= 0:
            raise ValueError("init_scale must be positive")
        if self.kept_per_chain() < 1:
            raise ValueError("no retained draws: (iters - burn_in) // thin is zero")

    def kept_per_chain(self) -> int:
        return (self.iters - self.burn_in) // self.thin


@dataclass
class ChainDiagnostics:
    """Per-chain health numbers; scales are recorded at burn-in end and at
    termination so the no-adaptation-after-burn-in freeze is checkable."""

    accept_rates: np.ndarray  # (chains,) post burn-in
    chain_loglik_means: np.ndarray  # (chains,) mean retained total log-lik
    scales_at_burnin: np.ndarray  # (chains, dim)
    scales_final: np.ndarray  # (chains, dim)


@dataclass
class PosteriorDraws:
    """Retained draws of one tempered run, chain-major row order."""

    beta: float
    draws: np.ndarray  # (K, p) constrained parameter vectors
    loglik_matrix: np.ndarray  # (K, n) per-datum log densities
    total_loglik: np.ndarray  # (K,) row sums of loglik_matrix
    chains: int
    diagnostics: Optional[ChainDiagnostics] = None

    @property
    def K(self) -> int:
        return self.draws.shape[0]

    @property
    def n(self) -> int:
        return self.loglik_matrix.shape[1]

    def chain_slices(self):
        """Row slices per chain (even split; injected copies break this)."""
        per = self.K // self.chains
        return [slice(c * per, (c + 1) * per) for c in range(self.chains)]

    def validate(self) -> None:
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if not (self.draws.shape[0] == self.loglik_matrix.shape[0] == self.total_loglik.shape[0]):
            raise ValueError("row counts disagree")
        if not np.all(np.isfinite(self.draws)):
            raise ValueError("non-finite parameter draws")
        resid = np.abs(self.loglik_matrix.sum(axis=1) - self.total_loglik)
        if np.max(resid) > 1e-9:
            raise ValueError("total_loglik disagrees with per-datum row sums")


def tempered_log_target(model: ModelSpec, data: Dataset, beta: float, z: np.ndarray) -> float:
    """Unnormalized tempered log posterior density on the unconstrained space."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    bound = model.bind(data)
    theta, log_jac = model.to_constrained(np.asarray(z, dtype=float))
    lp = model.log_prior(theta)
    if not math.isfinite(lp):
        return -math.inf
    total = bound.total(theta)
    if not math.isfinite(total):
        raise ModelError("non-finite log-likelihood at a prior-supported point")
    return lp + beta * total + log_jac


def _init_state(model, bound, beta, cfg, rng, d):
    """Draw a starting point with finite target, redrawing up to 100 times."""
    for _ in range(101):
        z = rng.normal(0.0, cfg.init_scale, size=d)
        theta, log_jac = model.to_constrained(z)
        lp = model.log_prior(theta)
        if not math.isfinite(lp):
            continue
        total = bound.total(theta)
        if not math.isfinite(total):
            raise ModelError("non-finite log-likelihood at a prior-supported point")
        target = lp + beta * total + log_jac
        if math.isfinite(target):
            return z, theta, target
    raise SamplerError("no finite initial target after 100 redraws of the start point")


def run_mcmc(model: ModelSpec, data: Dataset, beta: float, cfg: McmcConfig) -> PosteriorDraws:
    """Run `cfg.chains` adaptive RWM chains and pool the retained draws.

    K = chains * ((iters - burn_in) // thin) rows come back in chain-major
    order; per-datum log-likelihood rows are evaluated once per retained draw.
    """
    cfg.validate()
    if beta <= 0:
        raise ValueError("beta must be positive")
    bound = model.bind(data)
    d = model.dim
    kept = cfg.kept_per_chain()
    probe, _ = model.to_constrained(np.zeros(d))
    p = probe.size
    n = data.n
    K = cfg.chains * kept

    draws = np.empty((K, p))
    loglik = np.empty((K, n))
    totals = np.empty(K)
    accept_rates = np.empty(cfg.chains)
    loglik_means = np.empty(cfg.chains)
    scales_burn = np.empty((cfg.chains, d))
    scales_final = np.empty((cfg.chains, d))

    children = np.random.SeedSequence(cfg.seed).spawn(cfg.chains)
    for c in range(cfg.chains):
        rng = np.random.Generator(np.random.PCG64(children[c]))
        z, theta, target = _init_state(model, bound, beta, cfg, rng, d)
        log_scale = np.zeros(d)
        scale = np.exp(log_scale)
        accepted = 0
        proposals = 0
        row0 = c * kept
        stored = 0

        for t in range(1, cfg.iters + 1):
            adapting = t <= cfg.burn_in
            gamma = t ** -ADAPT_DECAY if adapting else 0.0
            eps = rng.standard_normal(d)
            us = rng.random(d)
            for j in range(d):
                old = z[j]
                z[j] = old + scale[j] * eps[j]
                theta_p, log_jac_p = model.to_constrained(z)
                lp = model.log_prior(theta_p)
                if math.isfinite(lp):
                    total_p = bound.total(theta_p)
                    if not math.isfinite(total_p):
                        raise ModelError(
                            "non-finite log-likelihood at a prior-supported point"
                        )
                    target_p = lp + beta * total_p + log_jac_p
                else:
                    target_p = -math.inf
                delta = target_p - target
                alpha = 1.0 if delta >= 0.0 else math.exp(delta)
                if us[j] < alpha:
                    target = target_p
                    theta = theta_p
                    if not adapting:
                        accepted += 1
                else:
                    z[j] = old
                if adapting:
                    log_scale[j] += gamma * (alpha - cfg.target_accept)
                    scale[j] = math.exp(log_scale[j])
                else:
                    proposals += 1
            if t == cfg.burn_in:
                scales_burn[c] = scale
            if t > cfg.burn_in and (t - cfg.burn_in) % cfg.thin == 0 and stored < kept:
                row = bound.per_datum(theta)
                k = row0 + stored
                draws[k] = theta
                loglik[k] = row
                totals[k] = row.sum()
                stored += 1

        if cfg.burn_in == 0:
            scales_burn[c] = np.exp(np.zeros(d))
        scales_final[c] = scale
        if accepted == 0:
            raise SamplerError(f"chain {c} accepted no proposals after burn-in")
        accept_rates[c] = accepted / proposals
        loglik_means[c] = totals[row0 : row0 + kept].mean()

    diag = ChainDiagnostics(
        accept_rates=accept_rates,
        chain_loglik_means=loglik_means,
        scales_at_burnin=scales_burn,
        scales_final=scales_final,
    )
    return PosteriorDraws(
        beta=beta,
        draws=draws,
        loglik_matrix=loglik,
        total_loglik=totals,
        chains=cfg.chains,
        diagnostics=diag,
    )
