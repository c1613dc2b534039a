"""Training objectives: contrastive-perturbation loss (continuous and
discrete), CD-1, explicit score matching, and denoising score matching.

Every loss returns ``(value, flat_parameter_gradient)``. The contrastive
loss for a batch x_1..x_N with Gaussian noise scale t, M inner samples and
stabiliser w is

    (1/N) sum_i log( w/M + (1/M) sum_j exp(E(x_i) - E(x_i + sqrt(t) xi_i
                                            + sqrt(t) xi'_ij)) )

evaluated as a logsumexp over the M+1 entries {log w, d_i1, ..., d_iM}
minus log M; its exact theta-gradient is a softmax-weighted difference of
parameter gradients at the data and perturbed points. Noise layout is fixed
(xi_i for i=1..N first, then xi'_ij in i-major order) so frozen-seed values
are stable.

Score-matching spatial derivatives use central finite-difference stencils in
x; the parameter gradient applies the same stencil to grad_params (mixed
partials commute), keeping the theta-path exactly testable against finite
differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .energymodel import (IsingBilinear, UnsupportedVariantError,
                          backward_params, energy_batch, forward_cached)
from .ndcore import DivergenceError, RngStream, logsumexp_rows
from .samplers import LangevinConfig, langevin

__all__ = [
    "EdConfig",
    "CdConfig",
    "SmConfig",
    "DsmConfig",
    "ed_loss_grad",
    "ed_loss_terms",
    "ed_loss_grad_from_points",
    "ed_discrete_loss_grad",
    "cd_loss_grad",
    "cd_surrogate_loss_grad",
    "sm_loss_grad",
    "dsm_loss_grad",
]

#: finite-difference step shared by the SM/DSM spatial stencils
FD_STEP_DEFAULT = 1e-3


@dataclass(frozen=True)
class EdConfig:
    """Hyperparameters (t, M, w); for discrete data ``t`` is the per-bit
    flip probability of the Bernoulli perturbation."""

    t: float = 1.0
    m: int = 4
    w: float = 1.0

    def __post_init__(self):
        if self.t <= 0:
            raise ValueError("t must be positive")
        if self.m < 1:
            raise ValueError("M must be >= 1")
        if self.w < 0:
            raise ValueError("w must be >= 0")


@dataclass(frozen=True)
class CdConfig:
    mcmc_steps: int = 1
    step_size: float = 0.1

    def __post_init__(self):
        if self.mcmc_steps < 1:
            raise ValueError("mcmc_steps must be >= 1")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")


@dataclass(frozen=True)
class SmConfig:
    fd_step: float = FD_STEP_DEFAULT

    def __post_init__(self):
        if self.fd_step <= 0:
            raise ValueError("fd_step must be positive")


@dataclass(frozen=True)
class DsmConfig:
    t: float = 1.0

    def __post_init__(self):
        if self.t <= 0:
            raise ValueError("t must be positive")


def _require_finite(e: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(e)):
        idx = int(np.argmin(np.isfinite(e).ravel()))
        raise DivergenceError(f"non-finite energy in {where}", index=idx)


def _grad_weighted(model, handle, w) -> np.ndarray:
    """backward_params, tolerating diagnostic models without trainable
    parameters (their losses are still useful as frozen-value oracles)."""
    try:
        return backward_params(model, handle, w)
    except UnsupportedVariantError:
        return np.zeros(0)


def _check_batch_2d(batch) -> np.ndarray:
    X = np.asarray(batch, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("batch must be a non-empty (N, d) array")
    return X


def _ed_core(model, x_in: np.ndarray, y_in: np.ndarray, w: float):
    """Shared contrastive core given model-ready data points x_in (N, d) and
    perturbed points y_in (N, M, d). Returns (loss, grad, per-sample terms).
    """
    n, m, d = y_in.shape
    e_x, hx = forward_cached(model, x_in)
    _require_finite(e_x, "data batch")
    e_yf, hy = forward_cached(model, y_in.reshape(n * m, d))
    e_y = e_yf.reshape(n, m)
    _require_finite(e_y, "perturbed batch")

    diffs = e_x[:, None] - e_y
    with np.errstate(divide="ignore"):
        wcol = np.full((n, 1), np.log(w) if w > 0 else -np.inf)
    entries = np.concatenate([wcol, diffs], axis=1)
    lse = logsumexp_rows(entries)
    terms = lse - np.log(m)
    if __debug__:
        # w-stabilisation / soft-min bounds, exact up to float round-off
        lower = np.maximum(wcol[:, 0], np.max(diffs, axis=1)) - np.log(m)
        assert np.all(terms >= lower - 1e-9), "contrastive per-term bound violated"
    if not np.all(np.isfinite(terms)):
        idx = int(np.argmin(np.isfinite(terms)))
        raise DivergenceError("contrastive term diverged", index=idx)
    loss = float(np.mean(terms))

    # softmax over the M+1 entries; the log-w column carries no theta
    # dependence, so the data-point weight is the total perturbed mass.
    p = np.exp(entries - lse[:, None])[:, 1:]
    cx = np.sum(p, axis=1) / n
    grad = (_grad_weighted(model, hx, cx)
            - _grad_weighted(model, hy, p.ravel() / n))
    if not np.all(np.isfinite(grad)):
        raise DivergenceError("non-finite contrastive gradient")
    return loss, grad, terms


def ed_loss_grad(model, batch, cfg: EdConfig, rng: RngStream):
    """Contrastive loss and exact gradient under Gaussian perturbation."""
    X = _check_batch_2d(batch)
    n, d = X.shape
    rt = np.sqrt(cfg.t)
    xi = rng.normals(n * d).reshape(n, d)
    xip = rng.normals(n * cfg.m * d).reshape(n, cfg.m, d)
    Y = (X + rt * xi)[:, None, :] + rt * xip
    loss, grad, _ = _ed_core(model, X, Y, cfg.w)
    return loss, grad


def ed_loss_terms(model, batch, cfg: EdConfig, rng: RngStream) -> np.ndarray:
    """Per-sample contrastive terms (no gradient); used by the estimator
    studies where N*M is too large to keep gradients around."""
    X = _check_batch_2d(batch)
    n, d = X.shape
    rt = np.sqrt(cfg.t)
    xi = rng.normals(n * d).reshape(n, d)
    xip = rng.normals(n * cfg.m * d).reshape(n, cfg.m, d)
    e_x = energy_batch(model, X)
    e_y = energy_batch(model, ((X + rt * xi)[:, None, :] + rt * xip).reshape(n * cfg.m, d))
    diffs = e_x[:, None] - e_y.reshape(n, cfg.m)
    with np.errstate(divide="ignore"):
        wcol = np.full((n, 1), np.log(cfg.w) if cfg.w > 0 else -np.inf)
    return logsumexp_rows(np.concatenate([wcol, diffs], axis=1)) - np.log(cfg.m)


def ed_loss_grad_from_points(model, batch, perturbed, w: float):
    """Contrastive loss/gradient with caller-supplied perturbed points
    (N, M, d); this is the hook for kernel-oracle equivalence checks."""
    X = _check_batch_2d(batch)
    Y = np.asarray(perturbed, dtype=np.float64)
    if Y.ndim != 3 or Y.shape[0] != X.shape[0] or Y.shape[2] != X.shape[1]:
        raise ValueError("perturbed points must have shape (N, M, d)")
    loss, grad, _ = _ed_core(model, X, Y, w)
    return loss, grad


def _discrete_input(model, bits: np.ndarray) -> np.ndarray:
    """Bit vectors as the model's input space: spins for the bilinear Ising
    energy, raw 0/1 floats for bit-input nets."""
    if isinstance(model, IsingBilinear):
        return 2.0 * bits - 1.0
    return bits.astype(np.float64)


def ed_discrete_loss_grad(model, batch, cfg: EdConfig, rng: RngStream):
    """Contrastive loss under the Bernoulli(eps) double bit-flip
    x ^ xi ^ xi'; ``cfg.t`` is the flip probability.

    The log and the w/M normalisation are applied exactly as in the
    continuous loss.
    """
    bits = np.asarray(batch)
    if bits.ndim != 2 or bits.shape[0] == 0:
        raise ValueError("batch must be a non-empty (N, d) bit array")
    bits = bits.astype(np.uint8)
    eps = cfg.t
    if not eps < 1.0:
        raise ValueError("flip probability must lie in (0, 1)")
    n, d = bits.shape
    xi = (rng.uniforms(n * d) < eps).reshape(n, d).astype(np.uint8)
    xip = (rng.uniforms(n * cfg.m * d) < eps).reshape(n, cfg.m, d).astype(np.uint8)
    ybits = np.bitwise_xor(np.bitwise_xor(bits, xi)[:, None, :], xip)
    x_in = _discrete_input(model, bits)
    y_in = _discrete_input(model, ybits.reshape(n * cfg.m, d)).reshape(n, cfg.m, d)
    loss, grad, _ = _ed_core(model, x_in, y_in, cfg.w)
    return loss, grad


def cd_surrogate_loss_grad(model, batch, negatives):
    """mean E(x+) - mean E(x-) and its gradient with the negatives held
    constant (no gradient through the sampler)."""
    X = _check_batch_2d(batch)
    neg = _check_batch_2d(negatives)
    n = X.shape[0]
    e_pos, hx = forward_cached(model, X)
    _require_finite(e_pos, "positive batch")
    e_neg, hn = forward_cached(model, neg)
    _require_finite(e_neg, "negative batch")
    loss = float(np.mean(e_pos) - np.mean(e_neg))
    grad = (_grad_weighted(model, hx, np.full(n, 1.0 / n))
            - _grad_weighted(model, hn, np.full(neg.shape[0], 1.0 / neg.shape[0])))
    return loss, grad


def cd_loss_grad(model, batch, cfg: CdConfig, rng: RngStream):
    """CD-k with data-initialised unadjusted Langevin negatives."""
    X = _check_batch_2d(batch)
    neg = langevin(model, X, LangevinConfig(cfg.mcmc_steps, cfg.step_size), rng)
    return cd_surrogate_loss_grad(model, X, neg)


def _stencil_points(X: np.ndarray, h: float) -> np.ndarray:
    """Stack [x, x+h e_1, x-h e_1, ..., x+h e_d, x-h e_d] as blocks of N."""
    n, d = X.shape
    blocks = [X]
    for k in range(d):
        step = np.zeros(d)
        step[k] = h
        blocks.append(X + step)
        blocks.append(X - step)
    return np.concatenate(blocks, axis=0)


def sm_loss_grad(model, batch, cfg: SmConfig):
    """Explicit score matching -lap E + 0.5 ||grad E||^2 via central
    stencils of the energy; theta-gradient applies the same stencil to
    grad_params."""
    X = _check_batch_2d(batch)
    n, d = X.shape
    h = cfg.fd_step
    pts = _stencil_points(X, h)
    e, hpts = forward_cached(model, pts)
    _require_finite(e, "stencil batch")
    e0 = e[:n]
    eplus = np.stack([e[(1 + 2 * k) * n:(2 + 2 * k) * n] for k in range(d)], axis=1)
    eminus = np.stack([e[(2 + 2 * k) * n:(3 + 2 * k) * n] for k in range(d)], axis=1)
    lap = np.sum(eplus - 2.0 * e0[:, None] + eminus, axis=1) / h**2
    gvec = (eplus - eminus) / (2.0 * h)
    loss = float(np.mean(-lap + 0.5 * np.sum(gvec * gvec, axis=1)))

    # d(loss)/dtheta: same stencil weights applied to grad_params rows
    wts = np.empty(pts.shape[0])
    wts[:n] = 2.0 * d / h**2 / n
    for k in range(d):
        wts[(1 + 2 * k) * n:(2 + 2 * k) * n] = (-1.0 / h**2 + gvec[:, k] / (2.0 * h)) / n
        wts[(2 + 2 * k) * n:(3 + 2 * k) * n] = (-1.0 / h**2 - gvec[:, k] / (2.0 * h)) / n
    grad = _grad_weighted(model, hpts, wts)
    return loss, grad


def dsm_loss_grad(model, batch, cfg: DsmConfig, rng: RngStream,
                  fd_step: float = FD_STEP_DEFAULT):
    """Denoising score matching: y = x + sqrt(t) xi, residual
    grad E(y) - (y - x)/t, loss 0.5 ||residual||^2 per sample."""
    X = _check_batch_2d(batch)
    n, d = X.shape
    h = fd_step
    xi = rng.normals(n * d).reshape(n, d)
    Y = X + np.sqrt(cfg.t) * xi
    pts = _stencil_points(Y, h)
    e, hpts = forward_cached(model, pts)
    _require_finite(e, "stencil batch")
    eplus = np.stack([e[(1 + 2 * k) * n:(2 + 2 * k) * n] for k in range(d)], axis=1)
    eminus = np.stack([e[(2 + 2 * k) * n:(3 + 2 * k) * n] for k in range(d)], axis=1)
    gvec = (eplus - eminus) / (2.0 * h)
    resid = gvec - xi / np.sqrt(cfg.t)
    loss = float(np.mean(0.5 * np.sum(resid * resid, axis=1)))

    wts = np.empty(pts.shape[0])
    wts[:n] = 0.0
    for k in range(d):
        wts[(1 + 2 * k) * n:(2 + 2 * k) * n] = resid[:, k] / (2.0 * h) / n
        wts[(2 + 2 * k) * n:(3 + 2 * k) * n] = -resid[:, k] / (2.0 * h) / n
    grad = _grad_weighted(model, hpts, wts)
    return loss, grad
