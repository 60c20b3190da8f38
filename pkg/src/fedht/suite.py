"""Equal-traffic method comparisons and seed sweeps."""

from __future__ import annotations

import logging
import math
import statistics
from dataclasses import dataclass, replace

from .compressors import CompressorKind, dense_size_bytes, topk_count
from .config import ConfigError, ExperimentConfig, compressor_from_dict, from_dict
from .federation import run_experiment
from .schedules import calibrate_lambda0, lambda_from_topk
from .telemetry import equal_traffic_ratio

log = logging.getLogger(__name__)


@dataclass
class SummaryRow:
    method: str
    final_loss: float
    final_accuracy: float | None
    cumulative_bytes: int
    pct_of_dense: float
    setting: str


@dataclass
class SuiteSpec:
    base: ExperimentConfig
    reference: CompressorKind
    methods: list
    traffic_tolerance: float = 0.02


def describe(comp: CompressorKind) -> tuple[str, str]:
    q = "-Q" if comp.quantize_after else ""
    if comp.kind == "identity":
        return "FedAVG", "dense"
    if comp.kind == "hard_threshold":
        return "HT" + q, f"lambda={comp.param:.4g}"
    if comp.kind == "topk":
        return "Top-k" + q, f"k={comp.param:.4g}"
    return "gamma-FedHT" + q, f"lambda0={comp.lambda0:.4g}, alpha={comp.alpha:g}"


def dense_bytes(records) -> int:
    return sum(dense_size_bytes(r.dim) * len(r.per_client_nnz) for r in records)


def _row(name, setting, result) -> SummaryRow:
    last = result.records[-1]
    dense = dense_bytes(result.records)
    return SummaryRow(
        method=name,
        final_loss=float(last.global_loss),
        final_accuracy=last.eval_accuracy,
        cumulative_bytes=last.cumulative_bytes,
        pct_of_dense=100.0 * last.cumulative_bytes / dense,
        setting=setting,
    )


def matched_topk(k_mean: float, d: int, quantize: bool = False) -> CompressorKind:
    """Top-k whose per-upload count ``floor(k*d)`` equals ``round(k_mean*d)``."""
    m = max(1, int(round(k_mean * d)))
    # midpoint of the floor bucket, safe against rounding in k*d
    k = min(1.0, (m + 0.5) / d)
    assert topk_count(d, k) == m or k == 1.0
    return CompressorKind("topk", k, quantize)


def match_threshold(cfg: ExperimentConfig, target_bytes: int, lam_guess: float,
                    tolerance: float = 0.02, max_runs: int = 24):
    """Search the fixed threshold whose run lands within ``tolerance`` of ``target_bytes``.

    Traffic falls as the threshold grows; the search brackets in log space,
    then bisects.  Returns ``(compressor, result)`` of the closest run.
    """
    def trial(lam):
        comp = CompressorKind("hard_threshold", lam, cfg.compressor.quantize_after)
        res = run_experiment(cfg.with_compressor(comp))
        return comp, res, res.records[-1].cumulative_bytes

    best = None
    lo = hi = None
    lam = lam_guess
    for _ in range(max_runs):
        comp, res, got = trial(lam)
        err = got / target_bytes - 1.0
        if best is None or abs(err) < abs(best[2]):
            best = (comp, res, err)
        if abs(err) <= tolerance:
            break
        if got > target_bytes:
            lo = lam
        else:
            hi = lam
        lam = math.sqrt(lo * hi) if lo is not None and hi is not None else (lam * 2.0 if hi is None else lam / 2.0)
    log.info("matched HT lambda=%.5g within %.2f%% of target traffic", best[0].param, 100 * best[2])
    return best[0], best[1]


def run_compare(spec: SuiteSpec) -> list:
    """Reference run, matched Top-k, then the remaining methods.

    Method entries are compressor kinds, or the strings ``"topk_mean"``
    (Top-k at the reference run's mean ratio) and ``"ht_matched"`` (fixed
    threshold searched to the reference traffic).
    """
    base = spec.base
    ref = run_experiment(base.with_compressor(spec.reference))
    ref_bytes = ref.records[-1].cumulative_bytes
    rows = [_row(*describe(spec.reference), ref)]
    d = ref.records[-1].dim
    for method in spec.methods:
        if method == "topk_mean":
            k_mean = equal_traffic_ratio(ref.records)
            comp = matched_topk(k_mean, d, spec.reference.quantize_after)
            res = run_experiment(base.with_compressor(comp))
            name, setting = describe(comp)
            rows.append(_row("Top-k_mean" + ("-Q" if comp.quantize_after else ""), setting, res))
        elif method == "ht_matched":
            guess = spec.reference.lambda0 if spec.reference.kind == "gamma_fedht" else spec.reference.param
            cfg = base.with_compressor(replace(base.compressor, quantize_after=spec.reference.quantize_after))
            comp, res = match_threshold(cfg, ref_bytes, guess or 0.1, spec.traffic_tolerance)
            rows.append(_row(*describe(comp), res))
        else:
            res = run_experiment(base.with_compressor(method))
            rows.append(_row(*describe(method), res))
    return rows


def run_sweep(spec: SuiteSpec, seeds) -> list:
    """One :func:`run_compare` per seed; returns a list of row lists."""
    return [run_compare(replace(spec, base=spec.base.with_seed(int(s)))) for s in seeds]


def median_rows(per_seed: list) -> list:
    """Collapse a sweep into one row per method, taking medians column-wise."""
    out = []
    for rows in zip(*per_seed):
        accs = [r.final_accuracy for r in rows if r.final_accuracy is not None]
        out.append(SummaryRow(
            method=rows[0].method,
            final_loss=statistics.median(r.final_loss for r in rows),
            final_accuracy=statistics.median(accs) if accs else None,
            cumulative_bytes=int(statistics.median(r.cumulative_bytes for r in rows)),
            pct_of_dense=statistics.median(r.pct_of_dense for r in rows),
            setting="median of %d seeds" % len(rows),
        ))
    return out


def format_table(rows: list) -> str:
    head = f"{'Method':<16} {'Setting':<32} {'Final loss':>11} {'Accuracy':>9} {'Traffic (B)':>14} {'% dense':>8}"
    lines = [head, "-" * len(head)]
    for r in rows:
        acc = "-" if r.final_accuracy is None else f"{100 * r.final_accuracy:.2f}"
        lines.append(
            f"{r.method:<16} {r.setting:<32} {r.final_loss:>11.5f} {acc:>9} "
            f"{r.cumulative_bytes:>14d} {r.pct_of_dense:>7.2f}%"
        )
    return "\n".join(lines)


def calibrated_pair(d: int, k: float, cfg: ExperimentConfig, alpha: float = 1.0):
    """Fixed threshold and stepsize-aware ``lambda0`` derived from a Top-k ratio."""
    lam = lambda_from_topk(d, k)
    return lam, calibrate_lambda0(lam, cfg.stepsize, alpha)


def parse_suite(doc: dict, check_paths: bool = True) -> SuiteSpec:
    """Build a suite from ``{base, reference, methods, calibrate?}``.

    ``calibrate: {k, dim}`` fills a missing ``lambda`` / ``lambda0`` from a
    Top-k ratio.
    """
    extra = set(doc) - {"base", "reference", "methods", "calibrate", "traffic_tolerance"}
    if extra:
        raise ConfigError(f"unknown key(s) in suite: {', '.join(sorted(extra))}")
    if "base" not in doc or "reference" not in doc:
        raise ConfigError("suite needs 'base' and 'reference'")
    base = from_dict(dict(doc["base"]), check_paths=check_paths)
    lam = lam0 = None
    if "calibrate" in doc:
        cal = doc["calibrate"]
        lam, lam0 = calibrated_pair(int(cal["dim"]), float(cal["k"]), base, float(cal.get("alpha", 1.0)))

    def comp(entry):
        entry = dict(entry)
        if entry.get("kind") == "gamma_fedht" and "lambda0" not in entry and lam0 is not None:
            entry["lambda0"] = lam0
        if entry.get("kind") == "hard_threshold" and "lambda" not in entry and lam is not None:
            entry["lambda"] = lam
        return compressor_from_dict(entry)

    methods = []
    for entry in doc.get("methods", []):
        kind = entry.get("kind") if isinstance(entry, dict) else entry
        methods.append(kind if kind in ("topk_mean", "ht_matched") else comp(entry))
    return SuiteSpec(base, comp(doc["reference"]), methods, float(doc.get("traffic_tolerance", 0.02)))
