"""Command-line entry point: ``fedht run | compare | calibrate``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import shutil
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import yaml

from .config import ConfigError, ExperimentConfig, config_hash, load_config, stepsize_from_dict, to_dict
from .data import IDXError, PartitionError
from .federation import DivergenceError, run_experiment
from .schedules import ScheduleError, calibrate_lambda0, lambda_from_topk
from .suite import format_table, median_rows, parse_suite, run_sweep
from .telemetry import export

log = logging.getLogger("fedht")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DIVERGED = 2
EXIT_IO = 3


@dataclass
class RunManifest:
    config_path: str
    config: ExperimentConfig
    out_dir: str

    @property
    def run_id(self) -> str:
        return config_hash(self.config)

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "config_path": self.config_path,
            "out_dir": self.out_dir,
            "config": to_dict(self.config),
        }


def _prepare_out(out: Path, overwrite: bool) -> None:
    if out.exists() and any(out.iterdir()):
        if not overwrite:
            raise FileExistsError(f"output directory {out} exists; pass --overwrite to replace it")
        shutil.rmtree(out)
    out.mkdir(parents=True, exist_ok=True)


def _write_outputs(out: Path, manifest: RunManifest, records, x) -> None:
    export(records, "csv", out / "records.csv")
    export(records, "jsonl", out / "records.jsonl")
    if x is not None:
        np.save(out / "final_model.npy", x)
    (out / "manifest.json").write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n")


def cmd_run(manifest: RunManifest, overwrite: bool = False) -> int:
    out = Path(manifest.out_dir)
    try:
        _prepare_out(out, overwrite)
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_IO
    log.info("run %s -> %s", manifest.run_id[:12], out)
    status = EXIT_OK
    try:
        result = run_experiment(manifest.config)
        records, x = result.records, result.x
    except DivergenceError as exc:
        log.error("diverged: %s (%d rounds recorded)", exc, len(exc.records))
        records, x, status = exc.records, None, EXIT_DIVERGED
    try:
        _write_outputs(out, manifest, records, x)
    except OSError as exc:
        log.error("could not write outputs: %s", exc)
        return EXIT_IO
    if status == EXIT_OK and records:
        last = records[-1]
        print(f"{manifest.run_id[:12]}  rounds={last.round}  loss={last.global_loss:.6g}  bytes={last.cumulative_bytes}")
    return status


def cmd_compare(suite_path, seeds, out=None, overwrite=False) -> int:
    doc = yaml.safe_load(Path(suite_path).read_text())
    if not isinstance(doc, dict):
        raise ConfigError("suite document must be a mapping")
    spec = parse_suite(doc)
    if seeds is None:
        seeds = [spec.base.seed]
    per_seed = run_sweep(spec, seeds)
    rows = per_seed[0] if len(per_seed) == 1 else median_rows(per_seed)
    print(format_table(rows))
    if out is not None:
        out = Path(out)
        _prepare_out(out, overwrite)
        with open(out / "summary.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["seed", *asdict(rows[0])])
            writer.writeheader()
            for seed, seed_rows in zip(seeds, per_seed):
                for r in seed_rows:
                    writer.writerow({"seed": seed, **asdict(r)})
    return EXIT_OK


def cmd_calibrate(d: int, k: float, stepsize: dict, T: int, E: int, alpha: float = 1.0):
    lam = lambda_from_topk(d, k)
    lam0 = calibrate_lambda0(lam, stepsize_from_dict(stepsize, T, E), alpha)
    print(f"lambda  = {lam:.6e}")
    print(f"lambda0 = {lam0:.6e}")
    return lam, lam0


def _parse_seeds(text):
    if text is None:
        return None
    return [int(s) for s in text.split(",") if s.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fedht", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one experiment")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--seed", type=int, help="override the config seed")
    r.add_argument("--overwrite", action="store_true")

    c = sub.add_parser("compare", help="equal-traffic method comparison")
    c.add_argument("--config", required=True, help="suite document")
    c.add_argument("--seed", help="seed, or comma-separated seeds for a median sweep")
    c.add_argument("--out")
    c.add_argument("--overwrite", action="store_true")

    k = sub.add_parser("calibrate", help="fixed and stepsize-aware thresholds from a Top-k ratio")
    k.add_argument("--d", type=int, required=True)
    k.add_argument("--k", type=float, required=True)
    k.add_argument("--T", type=int, required=True)
    k.add_argument("--E", type=int, default=5)
    k.add_argument("--alpha", type=float, default=1.0)
    k.add_argument("--stepsize", default="inverse_proportional",
                   choices=["inverse_proportional", "exponential", "constant"])
    k.add_argument("--beta", type=float, default=100.0)
    k.add_argument("--b", type=float, default=1000.0)
    k.add_argument("--gamma-init", type=float, default=0.1)
    k.add_argument("--decay", type=float, default=0.999)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            cfg = load_config(args.config)
            if args.seed is not None:
                cfg = cfg.with_seed(args.seed)
            return cmd_run(RunManifest(str(args.config), cfg, str(args.out)), args.overwrite)
        if args.command == "compare":
            return cmd_compare(args.config, _parse_seeds(args.seed), args.out, args.overwrite)
        if args.stepsize == "inverse_proportional":
            step = {"kind": args.stepsize, "beta": args.beta, "b": args.b}
        elif args.stepsize == "exponential":
            step = {"kind": args.stepsize, "gamma_init": args.gamma_init, "decay": args.decay}
        else:
            step = {"kind": args.stepsize, "gamma_init": args.gamma_init}
        cmd_calibrate(args.d, args.k, step, args.T, args.E, args.alpha)
        return EXIT_OK
    except (ConfigError, ScheduleError, PartitionError) as exc:
        print(f"fedht: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"fedht: diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, IDXError) as exc:
        print(f"fedht: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
