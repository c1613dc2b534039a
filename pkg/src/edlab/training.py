"""Training orchestration and run-directory persistence.

A run directory is the unit of persistence and plotting:

    config.toml     byte-stable echo of the effective configuration
    metrics.csv     iter,loss,density_mse,logz (one row per eval point;
                    the last two columns are empty when the dataset has no
                    exact log density)
    energy_grid.csv x1,x2,energy over the evaluation grid
    samples.csv     Langevin samples from the final model
    model.ckpt      final parameters
    status.json     {"status": "ok"|"diverged", ...}; always written

All files are flushed atomically (write temp, rename). Reruns with the same
seed reproduce every file byte for byte.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .config import RunConfig, config_toml
from .datasets import (BOX_HALF_WIDTH, GrayCodec, exact_logp_fn, gray_encode,
                       sample_toy2d)
from .energymodel import (Mlp, MlpSpec, energy_batch, init_xavier,
                          load_checkpoint, param_vector, save_checkpoint,
                          set_param_vector)
from .evalharness import density_grid, density_mse, estimate_log_z
from .losses import (CdConfig, DsmConfig, EdConfig, SmConfig, cd_loss_grad,
                     dsm_loss_grad, ed_discrete_loss_grad, ed_loss_grad,
                     sm_loss_grad)
from .ndcore import DivergenceError, RngStream
from .optim import AdamState, adam_step
from .samplers import LangevinConfig, langevin

__all__ = ["train_run", "sample_from_checkpoint", "eval_density_for_checkpoint",
           "write_text_atomic", "write_json_atomic", "fmt_csv_rows"]


def write_text_atomic(path: str, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_json_atomic(path: str, obj) -> None:
    write_text_atomic(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def fmt_csv_rows(header: list[str], rows: list[list]) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def _build_loss(cfg: RunConfig):
    kind = cfg.loss.kind
    if kind == "ed":
        c = EdConfig(cfg.loss.t, cfg.loss.m, cfg.loss.w)
        return lambda model, batch, rng: ed_loss_grad(model, batch, c, rng)
    if kind == "ed-discrete":
        c = EdConfig(cfg.loss.eps, cfg.loss.m, cfg.loss.w)
        return lambda model, batch, rng: ed_discrete_loss_grad(model, batch, c, rng)
    if kind == "cd":
        c = CdConfig(1, cfg.loss.step_size)
        return lambda model, batch, rng: cd_loss_grad(model, batch, c, rng)
    if kind == "sm":
        c = SmConfig()
        return lambda model, batch, rng: sm_loss_grad(model, batch, c)
    if kind == "dsm":
        c = DsmConfig(cfg.loss.t)
        return lambda model, batch, rng: dsm_loss_grad(model, batch, c, rng)
    raise ValueError(f"unknown loss kind {kind!r}")


def _default_model(cfg: RunConfig, rng: RngStream) -> Mlp:
    input_dim = 32 if cfg.loss.kind == "ed-discrete" else 2
    spec = MlpSpec(input_dim, (cfg.model.hidden,) * (cfg.model.layers - 1),
                   cfg.model.activation)
    return Mlp(spec, init_xavier(spec, rng))


def _grid_energy_rows(model, grid: np.ndarray, encode_bits: bool) -> list[list]:
    if encode_bits:
        bits, _ = gray_encode(grid)
        e = energy_batch(model, bits.astype(np.float64))
    else:
        e = energy_batch(model, grid)
    return [[grid[i, 0], grid[i, 1], e[i]] for i in range(grid.shape[0])]


def train_run(cfg: RunConfig, run_dir: str, model=None) -> dict:
    """Train per config, persisting the run directory described above.

    A divergence is recorded in status.json (and the run completes cleanly);
    it is not an error. Returns the status dictionary.
    """
    os.makedirs(run_dir, exist_ok=True)
    write_text_atomic(os.path.join(run_dir, "config.toml"), config_toml(cfg))

    master = RngStream(cfg.train.seed)
    data_rng = master.split("data")
    loss_rng = master.split("loss")
    if model is None:
        model = _default_model(cfg, master.split("init"))
    loss_fn = _build_loss(cfg)
    discrete = cfg.loss.kind == "ed-discrete"

    logp_fn = exact_logp_fn(cfg.data.name)
    grid = density_grid(BOX_HALF_WIDTH, cfg.eval.grid)
    truth = logp_fn(grid) if logp_fn is not None else None
    eval_rng = master.split("eval")

    def sample_batch(n: int):
        pts, _ = sample_toy2d(cfg.data.name, n, data_rng)
        if discrete:
            bits, _ = gray_encode(pts)
            return bits
        return pts

    def eval_metrics():
        if truth is None or discrete:
            return None, None
        pts, lp = sample_toy2d(cfg.data.name, cfg.eval.logz_n, eval_rng)
        logz = estimate_log_z(model, pts, lp)
        return density_mse(model, logz, grid, truth), logz

    rows = []
    status = {"status": "ok", "iters_done": 0}
    params = param_vector(model)
    state = AdamState.init(params.size, cfg.train.lr)
    try:
        for it in range(cfg.train.iters):
            batch = sample_batch(cfg.data.batch)
            loss, grad = loss_fn(model, batch, loss_rng)
            if it % cfg.eval.eval_every == 0:
                mse, logz = eval_metrics()
                rows.append([it, loss, mse, logz])
            params, state = adam_step(state, params, grad)
            set_param_vector(model, params)
            status["iters_done"] = it + 1
        final_loss, _ = loss_fn(model, sample_batch(cfg.data.batch), loss_rng)
        mse, logz = eval_metrics()
        rows.append([cfg.train.iters, final_loss, mse, logz])
    except DivergenceError as exc:
        status = {"status": "diverged", "iters_done": status["iters_done"],
                  "reason": str(exc)}

    write_text_atomic(os.path.join(run_dir, "metrics.csv"),
                      fmt_csv_rows(["iter", "loss", "density_mse", "logz"], rows))
    save_checkpoint(model, os.path.join(run_dir, "model.ckpt"))
    if grid is not None and model.input_dim in (2, 32):
        write_text_atomic(os.path.join(run_dir, "energy_grid.csv"),
                          fmt_csv_rows(["x1", "x2", "energy"],
                                       _grid_energy_rows(model, grid, discrete)))
    if status["status"] == "ok" and not discrete:
        samples = _sample_model(model, cfg, master.split("sample"))
        if samples is not None:
            write_text_atomic(os.path.join(run_dir, "samples.csv"),
                              fmt_csv_rows(["x1", "x2"], samples.tolist()))
    write_json_atomic(os.path.join(run_dir, "status.json"), status)
    return status


def _sample_model(model, cfg: RunConfig, rng: RngStream):
    d = model.input_dim
    x0 = (rng.uniforms(cfg.sample.n * d).reshape(cfg.sample.n, d) * 2.0 - 1.0) * BOX_HALF_WIDTH
    lcfg = LangevinConfig(cfg.sample.langevin_steps, cfg.sample.langevin_step_size)
    try:
        return langevin(model, x0, lcfg, rng)
    except DivergenceError:
        return None


def sample_from_checkpoint(ckpt_path: str, n: int, cfg: RunConfig,
                           seed: int, out_path: str) -> None:
    """Langevin synthesis from a checkpoint: chains start uniform over the
    bounding box."""
    model = load_checkpoint(ckpt_path)
    rng = RngStream(seed).split("sample")
    d = model.input_dim
    x0 = (rng.uniforms(n * d).reshape(n, d) * 2.0 - 1.0) * BOX_HALF_WIDTH
    lcfg = LangevinConfig(cfg.sample.langevin_steps, cfg.sample.langevin_step_size)
    samples = langevin(model, x0, lcfg, rng)
    header = [f"x{i+1}" for i in range(d)]
    write_text_atomic(out_path, fmt_csv_rows(header, samples.tolist()))


def eval_density_for_checkpoint(ckpt_path: str, data_name: str, cfg: RunConfig,
                                seed: int) -> dict:
    """Importance-sampled log Z plus grid MSE for a checkpoint against a
    dataset with known density."""
    logp_fn = exact_logp_fn(data_name)
    if logp_fn is None:
        raise ValueError(f"dataset {data_name!r} has no exact log density")
    model = load_checkpoint(ckpt_path)
    rng = RngStream(seed).split("eval")
    pts, lp = sample_toy2d(data_name, cfg.eval.logz_n, rng)
    logz = estimate_log_z(model, pts, lp)
    grid = density_grid(BOX_HALF_WIDTH, cfg.eval.grid)
    mse = density_mse(model, logz, grid, logp_fn(grid))
    return {"logz": logz, "density_mse": mse, "data": data_name}
