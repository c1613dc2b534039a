"""MCMC machinery: unadjusted Langevin dynamics for synthesis and CD
negatives, systematic-scan single-site Gibbs for Ising data generation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .energymodel import grad_input_batch
from .ndcore import DivergenceError, RngStream, sigmoid

__all__ = ["LangevinConfig", "langevin", "gibbs_ising", "gibbs_sweep_matrix",
           "boltzmann_ising"]


@dataclass(frozen=True)
class LangevinConfig:
    steps: int
    step_size: float

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")


def langevin(model, x0, cfg: LangevinConfig, rng: RngStream) -> np.ndarray:
    """Unadjusted Langevin: x <- x - (eps/2) grad E(x) + sqrt(eps) omega.

    ``x0`` is an (n_chains, d) array (a single vector is promoted). The
    input-gradient is exact reverse-mode, not a stencil. One block of
    n_chains*d normals is drawn per step, chains in row order, so
    trajectories replay bit-exactly under a cloned stream.
    """
    X = np.asarray(x0, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    X = X.copy()
    n, d = X.shape
    eps = cfg.step_size
    for step in range(cfg.steps):
        g = grad_input_batch(model, X)
        X -= 0.5 * eps * g
        X += np.sqrt(eps) * rng.normals(n * d).reshape(n, d)
        if not np.all(np.isfinite(X)):
            bad = int(np.argmin(np.isfinite(X).all(axis=1)))
            raise DivergenceError("non-finite Langevin state", index=bad, step=step)
    return X[0] if single else X


def gibbs_ising(J: np.ndarray, steps: int, rng: RngStream,
                init: np.ndarray | None = None) -> np.ndarray:
    """Systematic-scan single-site Gibbs for p(s) propto exp(s^T J s).

    Site i is set to +1 with probability sigmoid(4 (J s)_i); a full sweep
    visits sites 0..d-1 in order. The initial state (uniform spins unless
    given) consumes d uniforms, then each sweep consumes d more.
    """
    J = np.asarray(J, dtype=np.float64)
    d = J.shape[0]
    if init is None:
        s = np.where(rng.uniforms(d) < 0.5, 1.0, -1.0)
    else:
        s = np.asarray(init, dtype=np.float64).copy()
    for _ in range(steps):
        u = rng.uniforms(d)
        for i in range(d):
            p_up = sigmoid(4.0 * float(J[i] @ s))
            s[i] = 1.0 if u[i] < p_up else -1.0
    return s


def _enumerate_spins(d: int) -> np.ndarray:
    """All 2^d spin states; state index bit k (MSB first) maps to site k,
    bit 1 meaning spin +1."""
    idx = np.arange(1 << d)[:, None]
    bits = (idx >> np.arange(d - 1, -1, -1)) & 1
    return 2.0 * bits - 1.0


def boltzmann_ising(J: np.ndarray) -> np.ndarray:
    """Exact Boltzmann distribution of -s^T J s over all 2^d spin states
    (enumeration oracle; d must be small)."""
    J = np.asarray(J, dtype=np.float64)
    d = J.shape[0]
    if d > 16:
        raise ValueError("enumeration limited to d <= 16")
    states = _enumerate_spins(d)
    logw = np.einsum("ni,ij,nj->n", states, J, states)
    w = np.exp(logw - np.max(logw))
    return w / w.sum()


def gibbs_sweep_matrix(J: np.ndarray) -> np.ndarray:
    """Row-stochastic transition matrix of one full systematic sweep,
    built by composing the exact per-site kernels (site 0 first). The
    Boltzmann distribution is its stationary vector."""
    J = np.asarray(J, dtype=np.float64)
    d = J.shape[0]
    if d > 12:
        raise ValueError("enumeration limited to d <= 12")
    n = 1 << d
    states = _enumerate_spins(d)
    T = np.eye(n)
    for i in range(d):
        Ti = np.zeros((n, n))
        bit = 1 << (d - 1 - i)
        for idx in range(n):
            p_up = float(sigmoid(4.0 * (J[i] @ states[idx])))
            Ti[idx, idx | bit] = p_up
            Ti[idx, idx & ~bit] = 1.0 - p_up
        T = T @ Ti
    return T
