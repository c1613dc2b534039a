"""Perturbation kernels and contrastive-potential evaluation.

The contrastive potential of an energy U under a kernel q is
``-log integral q(y|x) exp(-U(x)) dx``. For the Gaussian kernel it is
estimated here by Monte Carlo with the w-stabilised form

    -log( (w/M) exp(-E(x0)) + (1/M) sum_j exp(-E(y + sqrt(t) xi'_j)) )

and checked, for quadratic energies, against the exact Gaussian convolution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .energymodel import energy_batch
from .ndcore import RngStream, logsumexp

__all__ = [
    "GaussianKernel",
    "BernoulliKernel",
    "gaussian_perturb",
    "bernoulli_perturb",
    "contrastive_potential_mc",
    "contrastive_potential_gaussian_exact",
]

#: flip probability used when an experiment does not set one explicitly
DEFAULT_BERNOULLI_EPS = 0.05


@dataclass(frozen=True)
class GaussianKernel:
    """Gaussian transition with noise variance t per coordinate."""

    t: float

    def __post_init__(self):
        if self.t <= 0:
            raise ValueError("t must be positive")


@dataclass(frozen=True)
class BernoulliKernel:
    """Independent bit flips with probability eps on {0,1}^d."""

    eps: float
    d: int

    def __post_init__(self):
        if not 0.0 < self.eps < 1.0:
            raise ValueError("eps must lie in (0, 1)")


def gaussian_perturb(x: np.ndarray, t: float, rng: RngStream) -> np.ndarray:
    """x + sqrt(t) * xi with xi ~ N(0, I)."""
    if t <= 0:
        raise ValueError("t must be positive")
    x = np.asarray(x, dtype=np.float64)
    return x + np.sqrt(t) * rng.normals(x.size).reshape(x.shape)


def bernoulli_perturb(bits: np.ndarray, eps: float, rng: RngStream) -> np.ndarray:
    """Each bit XOR-flipped independently with probability eps."""
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    bits = np.asarray(bits)
    flips = (rng.uniforms(bits.size) < eps).reshape(bits.shape)
    return np.bitwise_xor(bits.astype(np.uint8), flips.astype(np.uint8))


def contrastive_potential_mc(model, t: float, y: np.ndarray, M: int, w: float,
                             anchor_energy: float, rng: RngStream) -> float:
    """w-stabilised Monte Carlo estimate of the contrastive potential at y.

    ``anchor_energy`` must be the energy of the unperturbed data point when
    w > 0 (it anchors the soft-min). Returns +inf instead of raising when
    w = 0 and every contrastive term underflows, so a training loop can
    record the divergence as data.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    if w < 0:
        raise ValueError("w must be >= 0")
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    xi = rng.normals(M * y.size).reshape(M, y.size)
    e = energy_batch(model, y[None, :] + np.sqrt(t) * xi)
    with np.errstate(divide="ignore"):
        terms = np.concatenate(([np.log(w) - anchor_energy if w > 0 else -np.inf], -e))
    m = np.max(terms)
    if m == -np.inf:
        return np.inf
    val = float(np.log(M) - (m + np.log(np.sum(np.exp(terms - m)))))
    if __debug__ and w > 0 and np.all(np.isfinite(e)):
        bound = min(float(np.min(e)), anchor_energy - np.log(w)) + np.log(M)
        assert val <= bound + 1e-9, "stabilisation bound violated"
    return val


def contrastive_potential_gaussian_exact(mu, sigma2: float, t: float, y) -> float:
    """Exact contrastive potential of U(x)=||x-mu||^2/(2 sigma2) under the
    Gaussian kernel: ||y-mu||^2/(2(sigma2+t)) + (d/2) log((sigma2+t)/sigma2)."""
    if sigma2 <= 0 or t <= 0:
        raise ValueError("sigma2 and t must be positive")
    mu = np.atleast_1d(np.asarray(mu, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    d = mu.size
    r2 = float(np.sum((y - mu) ** 2))
    return r2 / (2.0 * (sigma2 + t)) + 0.5 * d * np.log((sigma2 + t) / sigma2)
