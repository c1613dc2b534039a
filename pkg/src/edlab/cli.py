"""Command-line interface.

Subcommands: train, sample, eval-density, experiment, verify, datasets dump.
Exit codes: 0 ok (including a recorded divergence), 1 verification failure,
2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .config import VALID_LOSS_KINDS, load_config
from .datasets import TOY2D_NAMES, ising_lattice_coupling, sample_toy2d
from .evalharness import (TheoryReport, estimator_consistency_error,
                          verify_ed_sm_identity, verify_minimizer_discrete,
                          verify_ou_equivalence, verify_thm2_gap)
from .experiments import EXPERIMENT_NAMES, run_experiment
from .ndcore import RngStream
from .samplers import boltzmann_ising, gibbs_sweep_matrix
from .training import (eval_density_for_checkpoint, fmt_csv_rows,
                       sample_from_checkpoint, train_run, write_json_atomic,
                       write_text_atomic)

USAGE_ERROR = 2


def _check_thm2_gap(seed: int) -> list[TheoryReport]:
    reports = []
    for mu in (1.0, 2.0):
        for t in (1.0, 3.0, 10.0):
            for r in verify_thm2_gap(mu, t):
                r.name = f"{r.name}-mu={mu:g}-t={t:g}"
                reports.append(r)
    return reports


def _check_thm3_consistency(seed: int) -> list[TheoryReport]:
    err = estimator_consistency_error(100_000, 1024, 1.0, 1.0, 1.0,
                                      n_seeds=10, base_seed=seed)
    return [TheoryReport("thm3-consistency", err, 0.0, 0.02)]


def _check_thm1_discrete(seed: int) -> list[TheoryReport]:
    reports = []
    rng = RngStream(seed).split("thm1")
    for trial in range(5):
        p = np.exp(rng.normals(8))
        for r in verify_minimizer_discrete(p, 0.1, 100, rng.split(f"dirs-{trial}")):
            r.name = f"{r.name}-p{trial}"
            reports.append(r)
    return reports


def _check_ou_equivalence(seed: int) -> list[TheoryReport]:
    return verify_ou_equivalence(-0.5, 1.0, 1.0, seed=seed)


def _check_ed_sm_identity(seed: int) -> list[TheoryReport]:
    return verify_ed_sm_identity([0.5, 1.0, 2.0])


def _check_gibbs_stationarity(seed: int) -> list[TheoryReport]:
    J = ising_lattice_coupling(2, 2, 0.25)
    pi = boltzmann_ising(J)
    T = gibbs_sweep_matrix(J)
    err = float(np.max(np.abs(pi @ T - pi)))
    return [TheoryReport("gibbs-2x2-stationarity", err, 0.0, 1e-10)]


VERIFY_CHECKS = {
    "thm2-gap": _check_thm2_gap,
    "thm3-consistency": _check_thm3_consistency,
    "thm1-discrete": _check_thm1_discrete,
    "ou-equivalence": _check_ou_equivalence,
    "ed-sm-identity": _check_ed_sm_identity,
    "gibbs-stationarity": _check_gibbs_stationarity,
}


def cmd_verify(check: str, out_dir: str, seed: int) -> int:
    if check != "all" and check not in VERIFY_CHECKS:
        print(f"error: unknown check {check!r}; choose from "
              f"{['all', *VERIFY_CHECKS]}", file=sys.stderr)
        return USAGE_ERROR
    names = list(VERIFY_CHECKS) if check == "all" else [check]
    os.makedirs(out_dir, exist_ok=True)
    all_pass = True
    for name in names:
        reports = VERIFY_CHECKS[name](seed)
        ok = all(r.passed for r in reports)
        all_pass &= ok
        write_json_atomic(os.path.join(out_dir, f"{name}.json"),
                          [r.to_dict() for r in reports])
        print(f"[verify] {name}: {'PASS' if ok else 'FAIL'} "
              f"({len(reports)} reports)")
        for r in reports:
            if not r.passed:
                print(f"  FAIL {r.name}: lhs={r.lhs!r} rhs={r.rhs!r} "
                      f"tol={r.tolerance!r}")
    return 0 if all_pass else 1


def cmd_datasets_dump(name: str, n: int, seed: int, out: str) -> int:
    if name not in TOY2D_NAMES:
        print(f"error: unknown dataset {name!r}; choose from {TOY2D_NAMES}",
              file=sys.stderr)
        return USAGE_ERROR
    pts, logp = sample_toy2d(name, n, RngStream(seed).split("dump"))
    if logp is None:
        rows = [[pts[i, 0], pts[i, 1]] for i in range(n)]
        text = fmt_csv_rows(["x1", "x2"], rows)
    else:
        rows = [[pts[i, 0], pts[i, 1], logp[i]] for i in range(n)]
        text = fmt_csv_rows(["x1", "x2", "logp"], rows)
    write_text_atomic(out, text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="edlab",
                                description="energy-model training and verification lab")
    sub = p.add_subparsers(dest="command", required=True)

    def add_config_args(sp):
        sp.add_argument("--config", help="TOML config file")
        sp.add_argument("--seed", type=int, help="override train.seed")
        sp.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config key (repeatable)")

    sp = sub.add_parser("train", help="train a model per config")
    add_config_args(sp)
    sp.add_argument("--out", required=True, help="run directory")

    sp = sub.add_parser("sample", help="Langevin synthesis from a checkpoint")
    add_config_args(sp)
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--n", type=int, default=1000)
    sp.add_argument("--out", required=True, help="samples csv path")

    sp = sub.add_parser("eval-density", help="log Z and grid MSE for a checkpoint")
    add_config_args(sp)
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--data", default="gauss25")
    sp.add_argument("--out", help="optional json output path")

    sp = sub.add_parser("experiment", help="run a named experiment")
    add_config_args(sp)
    sp.add_argument("--name", required=True)
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("verify", help="run theory verification checks")
    sp.add_argument("--check", default="all")
    sp.add_argument("--out", default="verify-reports")
    sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("datasets", help="dataset utilities")
    dsub = sp.add_subparsers(dest="datasets_command", required=True)
    dp = dsub.add_parser("dump", help="dump samples as csv")
    dp.add_argument("--name", required=True)
    dp.add_argument("--n", type=int, required=True)
    dp.add_argument("--seed", type=int, default=0)
    dp.add_argument("--out", required=True)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command in ("train", "sample", "eval-density", "experiment"):
            cfg, touched = load_config(args.config, args.overrides, args.seed)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR

    if args.command == "train":
        if cfg.loss.kind not in VALID_LOSS_KINDS:
            print(f"error: unknown loss kind {cfg.loss.kind!r}", file=sys.stderr)
            return USAGE_ERROR
        status = train_run(cfg, args.out)
        print(f"[train] {args.out}: {status['status']}")
        return 0

    if args.command == "sample":
        sample_from_checkpoint(args.ckpt, args.n, cfg, cfg.train.seed, args.out)
        print(f"[sample] wrote {args.out}")
        return 0

    if args.command == "eval-density":
        try:
            result = eval_density_for_checkpoint(args.ckpt, args.data, cfg, cfg.train.seed)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return USAGE_ERROR
        print(json.dumps(result, indent=2, sort_keys=True))
        if args.out:
            write_json_atomic(args.out, result)
        return 0

    if args.command == "experiment":
        if args.name not in EXPERIMENT_NAMES:
            print(f"error: unknown experiment {args.name!r}; choose from "
                  f"{EXPERIMENT_NAMES}", file=sys.stderr)
            return USAGE_ERROR
        status = run_experiment(args.name, cfg, args.out, touched)
        print(f"[experiment:{args.name}] {args.out}: {status['status']}")
        return 0

    if args.command == "verify":
        return cmd_verify(args.check, args.out, args.seed)

    if args.command == "datasets" and args.datasets_command == "dump":
        return cmd_datasets_dump(args.name, args.n, args.seed, args.out)

    return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
