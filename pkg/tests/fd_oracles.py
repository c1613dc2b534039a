"""Finite-difference oracles for the loss-gradient checks.

Every loss draws its noise from a passed stream, so the FD oracle replays a
cloned stream for each perturbed evaluation: the loss is then a
deterministic function of theta and central differences are valid. The CD
check differences the surrogate with the negatives held fixed, which is
exactly what its returned gradient claims to be.

Relative error is measured in the max norm of the gradient vector: the
stencil-based losses carry ~1e-6 absolute FD noise (energy round-off
amplified by 1/h^2), so per-coordinate ratios are meaningless for
coordinates far below the gradient scale.
"""

from __future__ import annotations

import numpy as np

from edlab import energymodel as em
from edlab.losses import (CdConfig, DsmConfig, EdConfig, SmConfig,
                          cd_surrogate_loss_grad, dsm_loss_grad,
                          ed_discrete_loss_grad, ed_loss_grad, sm_loss_grad)
from edlab.ndcore import RngStream
from edlab.samplers import LangevinConfig, langevin

LOSS_NAMES = ("ed", "ed-discrete", "cd", "sm", "dsm")


def _random_mlp(rng: RngStream, input_dim: int, trial: int) -> em.Mlp:
    widths = ((4,), (5, 3))[trial % 2]
    activation = ("softplus", "silu")[(trial // 2) % 2]
    spec = em.MlpSpec(input_dim, widths, activation)
    return em.Mlp(spec, em.init_xavier(spec, rng.split(f"params-{trial}")))


def _rebuild(model, flat):
    if isinstance(model, em.Mlp):
        return em.Mlp(model.spec, flat)
    twin = em.IsingBilinear(np.zeros_like(model.J))
    em.set_param_vector(twin, flat)
    return twin


def _loss_value_fn(name: str, trial: int, rng: RngStream):
    """Returns (model, batch, deterministic loss(theta) callable, grad)."""
    if name == "ed-discrete" and trial % 2 == 1:
        d = 4
        model = em.IsingBilinear(np.zeros((d, d)))
        em.set_param_vector(model, 0.5 * rng.split(f"J-{trial}").normals(d * (d - 1) // 2))
        batch = (rng.split(f"bits-{trial}").uniforms(5 * d) < 0.5).astype(np.uint8).reshape(5, d)
    elif name == "ed-discrete":
        d = 3
        model = _random_mlp(rng, d, trial)
        batch = (rng.split(f"bits-{trial}").uniforms(4 * d) < 0.5).astype(np.uint8).reshape(4, d)
    else:
        d = 2 if trial % 2 == 0 else 1
        model = _random_mlp(rng, d, trial)
        batch = rng.split(f"batch-{trial}").normals(4 * d).reshape(4, d)

    noise = rng.split(f"noise-{trial}")
    t_choices = (0.5, 1.0, 2.0)
    cfg_ed = EdConfig(t_choices[trial % 3], 1 + trial % 4, (0.0, 0.3, 1.0)[trial % 3])
    if name == "ed":
        fn = lambda m: ed_loss_grad(m, batch, cfg_ed, noise.clone())
    elif name == "ed-discrete":
        cfg = EdConfig((0.1, 0.25, 0.4)[trial % 3], 1 + trial % 4, (0.0, 0.3, 1.0)[trial % 3])
        fn = lambda m: ed_discrete_loss_grad(m, batch, cfg, noise.clone())
    elif name == "cd":
        cfg = CdConfig(1 + trial % 2, 0.1)
        negatives = langevin(model, batch, LangevinConfig(cfg.mcmc_steps, cfg.step_size),
                             noise.clone())
        fn = lambda m: cd_surrogate_loss_grad(m, batch, negatives)
    elif name == "sm":
        fn = lambda m: sm_loss_grad(m, batch, SmConfig())
    elif name == "dsm":
        cfg = DsmConfig(t_choices[trial % 3])
        fn = lambda m: dsm_loss_grad(m, batch, cfg, noise.clone())
    else:
        raise ValueError(name)
    return model, fn


def max_grad_fd_error(name: str, n_trials: int, seed: int = 0, h: float = 1e-4) -> float:
    """Worst relative FD error (gradient max-norm scale) over random small
    models and batches."""
    rng = RngStream(seed).split(f"fd-{name}")
    worst = 0.0
    for trial in range(n_trials):
        model, fn = _loss_value_fn(name, trial, rng)
        _, grad = fn(model)
        theta = em.param_vector(model)
        fd = np.zeros_like(theta)
        for k in range(theta.size):
            up, dn = theta.copy(), theta.copy()
            up[k] += h
            dn[k] -= h
            fd[k] = (fn(_rebuild(model, up))[0] - fn(_rebuild(model, dn))[0]) / (2 * h)
        scale = max(float(np.max(np.abs(fd))), 1e-8)
        worst = max(worst, float(np.max(np.abs(grad - fd))) / scale)
    return worst
