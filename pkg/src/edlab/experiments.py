"""Named desk-scale experiments.

mixture      objective curves over the mixture weight plus the repeated-fit
             MSE table (weight recovery vs noise scale)
wstudy       stabiliser sweep w in {0, 0.05, 0.25, 2} on the width-two SiLU
             toy net; per-epoch losses and final 1-D energy profiles
ising        8x8 lattice ground truth, Gibbs data, coupling recovery with
             the discrete contrastive loss
graycode     2-D data pushed through the 32-bit Gray codec, bit-input net
             trained with the discrete loss, energy decoded on the 2-D grid
ablation-tmw (t, M) and (w, M) grids of short density-estimation runs

Protocol constants that the study fixes (epoch counts, noise grids, lattice
size) live here; seeds and anything listed in the run configuration can be
overridden, and experiment-appropriate defaults are applied to config keys
the caller left untouched.
"""

from __future__ import annotations

import os

import numpy as np

from .config import RunConfig
from .datasets import ising_lattice_coupling, sample_mixture1d
from .energymodel import (IsingBilinear, Mlp, MlpSpec, energy_batch,
                          init_xavier, param_vector, set_param_vector)
from .evalharness import fit_mixture_weight, mixture_objective_curve
from .losses import EdConfig, ed_discrete_loss_grad, ed_loss_grad
from .ndcore import DivergenceError, RngStream
from .optim import AdamState, adam_step
from .samplers import gibbs_ising
from .training import (fmt_csv_rows, train_run, write_json_atomic,
                       write_text_atomic)

__all__ = ["EXPERIMENT_NAMES", "run_experiment"]

EXPERIMENT_NAMES = ("mixture", "wstudy", "ising", "graycode", "ablation-tmw")

MIXTURE_RHO_TRUE = 0.2
MIXTURE_CURVE_T = (0.25, 1.0, 4.0, 16.0)
MIXTURE_MSE_T = (0.25, 1.0, 4.0)
MIXTURE_M = 32
MIXTURE_FITS = 50
MIXTURE_N = 10_000

WSTUDY_W = (0.0, 0.05, 0.25, 2.0)
WSTUDY_EPOCHS = 50
WSTUDY_POINTS = 4096
WSTUDY_BATCH = 256

ISING_SIDE = 8
ISING_STRENGTH = 0.25
ISING_SAMPLES = 2000
ISING_BURNIN_SWEEPS = 200
ISING_THIN_SWEEPS = 10

ABLATION_T = (0.25, 1.0, 4.0)
ABLATION_W = (0.0, 1.0)
ABLATION_M = (1, 4, 16)


def run_experiment(name: str, cfg: RunConfig, out_dir: str,
                   touched: set[str] | None = None) -> dict:
    touched = touched or set()
    if name == "mixture":
        return _mixture(cfg, out_dir)
    if name == "wstudy":
        return _wstudy(cfg, out_dir)
    if name == "ising":
        return _ising(cfg, out_dir, touched)
    if name == "graycode":
        return _graycode(cfg, out_dir, touched)
    if name == "ablation-tmw":
        return _ablation_tmw(cfg, out_dir, touched)
    raise ValueError(f"unknown experiment {name!r}")


def _mixture(cfg: RunConfig, out_dir: str) -> dict:
    os.makedirs(out_dir, exist_ok=True)
    master = RngStream(cfg.train.seed).split("mixture")
    data = sample_mixture1d(MIXTURE_RHO_TRUE, MIXTURE_N, master.split("curve-data"))
    rho_grid = np.round(np.linspace(0.05, 0.95, 37), 6)

    curves = {"nll": mixture_objective_curve("nll", rho_grid, data),
              "sm": mixture_objective_curve("sm", rho_grid, data)}
    for t in MIXTURE_CURVE_T:
        curves[f"ed_t{t:g}"] = mixture_objective_curve(
            "ed", rho_grid, data, EdConfig(t, MIXTURE_M, 1.0),
            master.split(f"curve-noise-{t:g}"))
    names = ["nll", "sm"] + [f"ed_t{t:g}" for t in MIXTURE_CURVE_T]
    rows = [[rho_grid[i]] + [curves[k][i] for k in names] for i in range(rho_grid.size)]
    write_text_atomic(os.path.join(out_dir, "curves.csv"),
                      fmt_csv_rows(["rho"] + names, rows))

    table_rows = []
    fits = {}
    for kind, label, ed_cfg in (
            [("nll", "nll", None)]
            + [("ed", f"ed_t{t:g}", EdConfig(t, MIXTURE_M, 1.0)) for t in MIXTURE_MSE_T]):
        rhos = np.array([
            fit_mixture_weight(kind, master.split(f"fit-{label}-{r}"),
                               n=MIXTURE_N, ed_cfg=ed_cfg)
            for r in range(MIXTURE_FITS)])
        mse = float(np.mean((rhos - MIXTURE_RHO_TRUE) ** 2))
        fits[label] = mse
        table_rows.append([label, mse])
    write_text_atomic(os.path.join(out_dir, "mse_table.csv"),
                      fmt_csv_rows(["kind", "mse"], [[k, m] for k, m in table_rows]))
    status = {"status": "ok", "mse": fits}
    write_json_atomic(os.path.join(out_dir, "status.json"), status)
    return status


def _toy_silu_net(rng: RngStream) -> Mlp:
    spec = MlpSpec(1, (2, 2), "silu")
    return Mlp(spec, init_xavier(spec, rng))


def _wstudy(cfg: RunConfig, out_dir: str) -> dict:
    os.makedirs(out_dir, exist_ok=True)
    master = RngStream(cfg.train.seed).split("wstudy")
    data = master.split("data").normals(WSTUDY_POINTS)[:, None]
    egrid = np.linspace(-5.0, 5.0, 256)[:, None]
    loss_rows, energy_rows = [], []
    per_w_status = {}
    for w in WSTUDY_W:
        model = _toy_silu_net(master.split(f"init-{w:g}"))
        order_rng = master.split(f"order-{w:g}")
        noise_rng = master.split(f"noise-{w:g}")
        params = param_vector(model)
        state = AdamState.init(params.size, cfg.train.lr)
        ed_cfg = EdConfig(1.0, 4, w)
        status = "ok"
        for epoch in range(WSTUDY_EPOCHS):
            perm = np.argsort(order_rng.uniforms(WSTUDY_POINTS), kind="stable")
            epoch_losses = []
            try:
                for start in range(0, WSTUDY_POINTS, WSTUDY_BATCH):
                    batch = data[perm[start:start + WSTUDY_BATCH]]
                    loss, grad = ed_loss_grad(model, batch, ed_cfg, noise_rng)
                    epoch_losses.append(loss)
                    params, state = adam_step(state, params, grad)
                    set_param_vector(model, params)
            except DivergenceError:
                status = "diverged"
                break
            loss_rows.append([w, epoch, float(np.mean(epoch_losses))])
        per_w_status[f"w={w:g}"] = status
        e = energy_batch(model, egrid)
        energy_rows.extend([[w, egrid[i, 0], e[i]] for i in range(egrid.shape[0])])
    write_text_atomic(os.path.join(out_dir, "wstudy_losses.csv"),
                      fmt_csv_rows(["w", "epoch", "loss"], loss_rows))
    write_text_atomic(os.path.join(out_dir, "wstudy_energy.csv"),
                      fmt_csv_rows(["w", "x", "energy"], energy_rows))
    status = {"status": "ok", "runs": per_w_status}
    write_json_atomic(os.path.join(out_dir, "status.json"), status)
    return status


def _spins_to_bits(s: np.ndarray) -> np.ndarray:
    return ((s + 1.0) / 2.0).astype(np.uint8)


def _ising(cfg: RunConfig, out_dir: str, touched: set[str]) -> dict:
    os.makedirs(out_dir, exist_ok=True)
    iters = cfg.train.iters if "train.iters" in touched else 3000
    lr = cfg.train.lr if "train.lr" in touched else 0.01
    master = RngStream(cfg.train.seed).split("ising")

    j_true = ising_lattice_coupling(ISING_SIDE, ISING_SIDE, ISING_STRENGTH)
    d = ISING_SIDE * ISING_SIDE
    gibbs_rng = master.split("gibbs")
    state = gibbs_ising(j_true, ISING_BURNIN_SWEEPS, gibbs_rng)
    samples = np.empty((ISING_SAMPLES, d))
    for k in range(ISING_SAMPLES):
        state = gibbs_ising(j_true, ISING_THIN_SWEEPS, gibbs_rng, init=state)
        samples[k] = state
    bits = _spins_to_bits(samples)

    model = IsingBilinear(np.zeros((d, d)))
    params = param_vector(model)
    adam = AdamState.init(params.size, lr)
    ed_cfg = EdConfig(cfg.loss.eps, cfg.loss.m, cfg.loss.w)
    batch_rng = master.split("batches")
    noise_rng = master.split("noise")
    losses = []
    for it in range(iters):
        idx = batch_rng.integers(cfg.data.batch, ISING_SAMPLES)
        loss, grad = ed_discrete_loss_grad(model, bits[idx], ed_cfg, noise_rng)
        losses.append([it, loss])
        params, adam = adam_step(adam, params, grad)
        set_param_vector(model, params)

    iu = np.triu_indices(d, k=1)
    edge_mask = j_true[iu] != 0.0
    j_hat = model.J
    edge_mean = float(np.mean(np.abs(j_hat[iu][edge_mask])))
    off_mean = float(np.mean(np.abs(j_hat[iu][~edge_mask])))
    _write_matrix_csv(os.path.join(out_dir, "j_true.csv"), j_true)
    _write_matrix_csv(os.path.join(out_dir, "j_hat.csv"), j_hat)
    write_text_atomic(os.path.join(out_dir, "metrics.csv"),
                      fmt_csv_rows(["iter", "loss"], losses))
    status = {"status": "ok", "edge_mean": edge_mean, "offedge_mean": off_mean,
              "ratio": edge_mean / max(off_mean, 1e-300)}
    write_json_atomic(os.path.join(out_dir, "status.json"), status)
    return status


def _write_matrix_csv(path: str, mat: np.ndarray) -> None:
    rows = [[i, j, mat[i, j]] for i in range(mat.shape[0]) for j in range(mat.shape[1])]
    write_text_atomic(path, fmt_csv_rows(["i", "j", "value"], rows))


def _graycode(cfg: RunConfig, out_dir: str, touched: set[str]) -> dict:
    cfg.loss.kind = "ed-discrete"
    if "train.iters" not in touched:
        cfg.train.iters = 5000
    if "eval.eval_every" not in touched:
        cfg.eval.eval_every = 500
    return train_run(cfg, out_dir)


def _ablation_tmw(cfg: RunConfig, out_dir: str, touched: set[str]) -> dict:
    os.makedirs(out_dir, exist_ok=True)
    iters = cfg.train.iters if "train.iters" in touched else 2000
    tm_rows, wm_rows = [], []
    for label, grid, rows in (("tm", [(t, m) for t in ABLATION_T for m in ABLATION_M], tm_rows),
                              ("wm", [(w, m) for w in ABLATION_W for m in ABLATION_M], wm_rows)):
        for a, m in grid:
            sub = RunConfig()
            sub.data.name = cfg.data.name
            sub.data.batch = cfg.data.batch
            sub.train.iters = iters
            sub.train.lr = cfg.train.lr
            sub.train.seed = RngStream(cfg.train.seed).split(f"tmw-{label}-{a:g}-{m}").seed
            sub.model = cfg.model
            sub.eval.eval_every = max(iters // 4, 1)
            sub.loss.kind = "ed"
            sub.loss.m = m
            if label == "tm":
                sub.loss.t, sub.loss.w = a, 1.0
            else:
                sub.loss.t, sub.loss.w = 1.0, a
            run_dir = os.path.join(out_dir, f"{label}_{a:g}_{m}")
            status = train_run(sub, run_dir)
            mse = _final_mse(os.path.join(run_dir, "metrics.csv"))
            rows.append([a, m, mse, status["status"]])
    write_text_atomic(os.path.join(out_dir, "ablation_tm.csv"),
                      fmt_csv_rows(["t", "m", "final_density_mse", "status"], tm_rows))
    write_text_atomic(os.path.join(out_dir, "ablation_wm.csv"),
                      fmt_csv_rows(["w", "m", "final_density_mse", "status"], wm_rows))
    status = {"status": "ok"}
    write_json_atomic(os.path.join(out_dir, "status.json"), status)
    return status


def _final_mse(metrics_path: str):
    with open(metrics_path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    for ln in reversed(lines[1:]):
        cell = ln.split(",")[2]
        if cell:
            return float(cell)
    return None
