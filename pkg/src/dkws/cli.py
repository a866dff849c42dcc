"""Command-line driver reproducing the chip experiments as CSVs and plots.

Subcommands: features, infer, sweep-theta, sweep-channels, sweep-precision,
calibrate, report.  Every run is deterministic under a fixed seed and config;
worker parallelism is utterance-level only and does not change any output
byte.  Validation failures exit nonzero with a machine-readable category on
stderr: ``error: category=<slug> <detail>``.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kvfile
from .accel_model import (
    DENSE_POINT,
    SPARSE_POINT,
    CalibrationError,
    CostModel,
    calibrate,
    cost_report,
    read_cost_model,
    write_cost_model,
)
from .bank_io import BankFileError, read_bank, write_bank
from .dataset import (
    CLASSES_12,
    SOURCE_RATE,
    TARGET_RATE,
    UNKNOWN_ID,
    DatasetError,
    WavError,
    build_dataset,
    load_utterance,
    load_wav,
    quantize_12b,
    resample_16k_to_8k,
)
from .delta_gru import NetworkWeights, run_inference
from .fex import extract_features, ops_per_sample, read_features, select_channels, write_features
from .filter_design import (
    default_bank,
    design_float_bank,
    frequency_response,
    multiplier_report,
    quantize_bank,
)
from .weight_io import WeightFileError, read_weights

ENV_DATASET_ROOT = "DKWS_DATASET_ROOT"
DEFAULT_THETA_GRID = [round(0.05 * i, 2) for i in range(11)]  # 0.0 .. 0.5
DEFAULT_B_GRID = [8, 10, 12, 16]
DEFAULT_A_GRID = [6, 8, 16]
# admissibility bound for the precision sweep: mean squared 12-bit feature
# error vs the 16b/16b baseline.  8-bit denominators land near 60 LSB RMS,
# 6-bit ones near 300+; the bound sits between the clusters.
DEFAULT_PRECISION_TOLERANCE = 128.0 ** 2


class CliError(Exception):
    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


def _fail(category: str, message: str) -> CliError:
    return CliError(category, message)


# ---------------------------------------------------------------------------
# config resolution

_CONFIG_KEYS = {
    "dataset_root", "weights", "bank", "cost_model", "out", "theta", "mask",
    "seed", "workers", "weights_dir",
    "precision_b_grid", "precision_a_grid", "precision_tolerance",
    "calibrate_dense_latency_ms", "calibrate_dense_energy_nj",
    "calibrate_sparse_latency_ms", "calibrate_sparse_energy_nj",
    "calibrate_sparsity",
}


@dataclass
class Resolved:
    values: dict

    def get(self, key, default=None):
        return self.values.get(key, default)


def resolve_config(args) -> Resolved:
    values: dict = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise _fail("config", f"config file {path} not found")
        try:
            items = kvfile.load(path)
        except kvfile.KVError as e:
            raise _fail("config", str(e))
        unknown = set(items) - _CONFIG_KEYS
        if unknown:
            raise _fail("config", f"unknown config keys: {sorted(unknown)}")
        values.update(items)
    for key in ("dataset_root", "weights", "bank", "cost_model", "out", "seed",
                "workers", "weights_dir"):
        v = getattr(args, key.replace("-", "_"), None)
        if v is not None:
            values[key] = v
    if getattr(args, "theta", None):
        values["theta"] = args.theta
    if getattr(args, "mask", None):
        values["mask"] = ";".join(args.mask)
    if "dataset_root" not in values and os.environ.get(ENV_DATASET_ROOT):
        values["dataset_root"] = os.environ[ENV_DATASET_ROOT]
    values.setdefault("seed", 0)
    values.setdefault("workers", 1)
    return Resolved(values)


def _parse_theta_list(text) -> list[float]:
    if isinstance(text, list):
        return [float(t) for t in text]
    out = []
    for tok in str(text).split(","):
        tok = tok.strip()
        if tok:
            out.append(float(tok))
    if not out:
        raise _fail("validation", "empty theta list")
    if any(t < 0 for t in out):
        raise _fail("validation", "theta values must be >= 0")
    return out


def _parse_mask(spec: str, n_channels: int) -> tuple[int, ...]:
    spec = spec.strip()
    if spec == "all":
        return tuple(range(n_channels))
    idx: set[int] = set()
    for tok in spec.split(","):
        tok = tok.strip()
        if not tok:
            continue
        if "-" in tok:
            a, b = tok.split("-", 1)
            idx.update(range(int(a), int(b) + 1))
        else:
            idx.add(int(tok))
    if not idx:
        raise _fail("validation", f"empty channel mask {spec!r}")
    if min(idx) < 0 or max(idx) >= n_channels:
        raise _fail("validation", f"mask {spec!r} outside 0..{n_channels - 1}")
    return tuple(sorted(idx))


def _load_bank(cfg: Resolved):
    path = cfg.get("bank")
    if path:
        p = Path(path)
        if not p.is_file():
            raise _fail("bank", f"bank file {p} not found")
        return read_bank(p)
    return default_bank()


def _load_weights(cfg: Resolved) -> NetworkWeights:
    path = cfg.get("weights")
    if not path:
        raise _fail("weights", "no weight file given (--weights)")
    p = Path(path)
    if not p.is_file():
        raise _fail("weights", f"weight file {p} not found")
    return read_weights(p)


def _load_cost_model(cfg: Resolved) -> CostModel | None:
    path = cfg.get("cost_model")
    if not path:
        return None
    p = Path(path)
    if not p.is_file():
        raise _fail("cost-model", f"cost-model file {p} not found")
    return read_cost_model(p)


def _out_dir(cfg: Resolved) -> Path:
    out = Path(cfg.get("out") or "out")
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# evaluation helpers

def _utterance_samples_from_wav(path: Path) -> list[int]:
    rate, samples = load_wav(path.read_bytes())
    if rate == SOURCE_RATE:
        samples = resample_16k_to_8k(samples)
    elif rate != TARGET_RATE:
        raise _fail("wav", f"{path}: unsupported sample rate {rate}")
    return quantize_12b(samples).tolist()


def _extract_one(task):
    samples, bank = task
    run = extract_features(samples, bank)
    return np.array([fr.values for fr in run.frames], dtype=np.int64)


def _extract_many(sample_lists, bank, workers: int):
    tasks = [(s, bank) for s in sample_lists]
    if workers <= 1 or len(tasks) <= 1:
        return [_extract_one(t) for t in tasks]
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_extract_one, tasks, chunksize=4))


def _load_split(cfg: Resolved, split: str = "test"):
    root = cfg.get("dataset_root")
    if not root:
        raise _fail(
            "dataset", f"no dataset root (--dataset-root or ${ENV_DATASET_ROOT})"
        )
    root = Path(root)
    splits = build_dataset(root, seed=int(cfg.get("seed", 0)))
    records = splits[split]
    utts = [load_utterance(root, r) for r in records]
    return [u.samples.tolist() for u in utts], [u.label for u in utts]


def _accuracy(decisions, labels, exclude_unknown: bool) -> float:
    pairs = [
        (d, l) for d, l in zip(decisions, labels) if not (exclude_unknown and l == UNKNOWN_ID)
    ]
    if not pairs:
        return float("nan")
    return sum(1 for d, l in pairs if d == l) / len(pairs)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)


# ---------------------------------------------------------------------------
# subcommands

def cmd_features(args) -> int:
    cfg = resolve_config(args)
    bank = _load_bank(cfg)
    out = _out_dir(cfg)
    if not args.wav and cfg.get("dataset_root"):
        return _export_dataset_features(cfg, bank, out)
    if not args.wav:
        print("warning: no input WAV files given", file=sys.stderr)
        return 0
    for wav_path in args.wav:
        p = Path(wav_path)
        if not p.is_file():
            raise _fail("io", f"input {p} not found")
        samples = _utterance_samples_from_wav(p)
        run = extract_features(samples, bank)
        dest = out / f"{p.stem}.features.csv"
        write_features(run, dest)
        print(f"wrote {dest} ({len(run.frames)} frames x {len(run.center_freqs_hz)} channels)")
        if args.plot:
            _plot_feature_image(run, out / f"{p.stem}.features.png")
    return 0


def _export_dataset_features(cfg: Resolved, bank, out: Path) -> int:
    """Write per-split feature CSVs plus labels.csv for the trainer."""
    root = Path(cfg.get("dataset_root"))
    splits = build_dataset(root, seed=int(cfg.get("seed", 0)))
    workers = int(cfg.get("workers", 1))
    for split, records in splits.items():
        split_dir = out / split
        split_dir.mkdir(parents=True, exist_ok=True)
        sample_lists = [load_utterance(root, r).samples.tolist() for r in records]
        features = _extract_many(sample_lists, bank, workers)
        centers = [bank.channels[i].center_freq_hz for i in bank.enabled_indices]
        label_rows = []
        for i, (rec, feats) in enumerate(zip(records, features)):
            name = f"utt{i:05d}.features.csv"
            with open(split_dir / name, "w", newline="", encoding="utf-8") as f:
                w = csv.writer(f)
                w.writerow([f"{cf:.2f}" for cf in centers])
                w.writerows(feats.tolist())
            label_rows.append([name, rec.label, rec.keyword])
        _write_csv(split_dir / "labels.csv", ["file", "label", "keyword"], label_rows)
        print(f"wrote {split_dir} ({len(records)} utterances)")
    return 0


def cmd_infer(args) -> int:
    cfg = resolve_config(args)
    w = _load_weights(cfg)
    cm = _load_cost_model(cfg)
    thetas = _parse_theta_list(cfg.get("theta", "0.0"))
    theta = thetas[0]
    if not args.features:
        print("warning: no feature files given", file=sys.stderr)
        return 0
    header = ["utterance", "decision", "class", "sparsity", "macs", "weight_reads"]
    if cm is not None:
        header += ["cycles", "latency_ms", "energy_nj"]
    rows = []
    for feat_path in args.features:
        p = Path(feat_path)
        if not p.is_file():
            raise _fail("io", f"feature file {p} not found")
        _, feat_rows = read_features(p)
        res = run_inference(np.array(feat_rows, dtype=np.int64), theta, w)
        row = [
            p.name,
            res.decision,
            CLASSES_12[res.decision] if res.decision < len(CLASSES_12) else str(res.decision),
            f"{res.stats.temporal_sparsity:.6f}",
            res.stats.total_macs,
            res.stats.total_weight_reads,
        ]
        if cm is not None:
            rep = cost_report(res.stats, cm, n_channels=len(feat_rows[0]))
            row += [rep.cycles, f"{rep.latency_ms:.6f}", f"{rep.energy_nj:.6f}"]
        rows.append(row)
    if cfg.get("out"):
        dest = _out_dir(cfg) / "infer.csv"
        _write_csv(dest, header, rows)
        print(f"wrote {dest}")
    else:
        wtr = csv.writer(sys.stdout)
        wtr.writerow(header)
        wtr.writerows(rows)
    return 0


def cmd_sweep_theta(args) -> int:
    cfg = resolve_config(args)
    bank = _load_bank(cfg)
    w = _load_weights(cfg)
    cm = _load_cost_model(cfg)
    if cm is None:
        print(
            "warning: no cost model; latency/energy columns omitted", file=sys.stderr
        )
    thetas = _parse_theta_list(cfg.get("theta", DEFAULT_THETA_GRID))
    sample_lists, labels = _load_split(cfg, "test")
    n_enabled = len(bank.enabled_indices)
    if n_enabled != w.n_in:
        raise _fail(
            "validation",
            f"bank has {n_enabled} enabled channels but weights expect {w.n_in}",
        )
    features = _extract_many(sample_lists, bank, int(cfg.get("workers", 1)))
    header = ["theta", "accuracy_12", "accuracy_11", "sparsity"]
    if cm is not None:
        header += ["mean_latency_ms", "mean_energy_nj"]
    rows = []
    for theta in thetas:
        decisions, spars, lats, energies = [], [], [], []
        for feats in features:
            res = run_inference(feats, theta, w)
            decisions.append(res.decision)
            spars.append(res.stats.temporal_sparsity)
            if cm is not None:
                rep = cost_report(res.stats, cm, n_channels=n_enabled)
                lats.append(rep.latency_ms / res.stats.n_frames)
                energies.append(rep.energy_nj / res.stats.n_frames)
        row = [
            f"{theta:.4f}",
            f"{_accuracy(decisions, labels, False):.6f}",
            f"{_accuracy(decisions, labels, True):.6f}",
            f"{float(np.mean(spars)):.6f}",
        ]
        if cm is not None:
            row += [f"{float(np.mean(lats)):.6f}", f"{float(np.mean(energies)):.6f}"]
        rows.append(row)
    dest = _out_dir(cfg) / "sweep_theta.csv"
    _write_csv(dest, header, rows)
    print(f"wrote {dest}")
    if args.plot:
        _plot_theta_sweep(dest, _out_dir(cfg) / "sweep_theta.png")
    return 0


def _column_masked_weights(w: NetworkWeights, mask: tuple[int, ...]) -> NetworkWeights:
    cols = list(mask)
    return NetworkWeights(
        W_xr=w.W_xr[:, cols].copy(), W_xu=w.W_xu[:, cols].copy(), W_xc=w.W_xc[:, cols].copy(),
        W_hr=w.W_hr, W_hu=w.W_hu, W_hc=w.W_hc, W_fc=w.W_fc,
        b_r=w.b_r, b_u=w.b_u, b_c=w.b_c, b_fc=w.b_fc,
        scale_exp=dict(w.scale_exp),
    )


def cmd_sweep_channels(args) -> int:
    cfg = resolve_config(args)
    bank = _load_bank(cfg)
    mask_specs = [m for m in str(cfg.get("mask", "3-12;0-15")).split(";") if m.strip()]
    weights_dir = cfg.get("weights_dir")
    base_weights = _load_weights(cfg) if cfg.get("weights") else None
    sample_lists, labels = _load_split(cfg, "test")
    workers = int(cfg.get("workers", 1))
    theta = _parse_theta_list(cfg.get("theta", "0.0"))[0]
    header = [
        "mask", "n_channels", "accuracy_12", "fex_ops_per_sample",
        "fex_muls_per_sample", "weights_mode",
    ]
    rows = []
    for spec in mask_specs:
        mask = _parse_mask(spec, bank.n_channels)
        sub = select_channels(bank, mask)
        if weights_dir:
            wpath = Path(weights_dir) / f"weights_{spec.strip()}.bin"
            if not wpath.is_file():
                raise _fail("weights", f"no weight file for mask {spec!r}: {wpath}")
            w = read_weights(wpath)
            mode = "per_mask"
        elif base_weights is not None and base_weights.n_in == bank.n_channels:
            w = _column_masked_weights(base_weights, mask)
            mode = "column_masked"
        elif base_weights is not None and base_weights.n_in == len(mask):
            w = base_weights
            mode = "per_mask"
        else:
            raise _fail(
                "weights",
                f"weights match neither the full bank nor mask {spec!r}",
            )
        features = _extract_many(sample_lists, sub, workers)
        decisions = [run_inference(f, theta, w).decision for f in features]
        ops = ops_per_sample(sub)
        rows.append(
            [
                spec.strip(),
                len(mask),
                f"{_accuracy(decisions, labels, False):.6f}",
                ops.total,
                ops.mul,
                mode,
            ]
        )
    dest = _out_dir(cfg) / "sweep_channels.csv"
    _write_csv(dest, header, rows)
    print(f"wrote {dest}")
    return 0


def _precision_metric_probes(seed: int = 12345) -> list[list[int]]:
    """Deterministic multitone and noise-burst probes, 0.5 s each at 8 kHz."""
    rng = np.random.default_rng(seed)
    n = 4000
    t = np.arange(n)
    tones = sum(
        np.sin(2 * np.pi * f * t / 8000 + ph)
        for f, ph in [(250, 0.0), (700, 1.0), (1500, 2.0), (3100, 0.5)]
    )
    probe1 = np.round(500 * tones).astype(np.int64)
    env = np.exp(-((t - 2000.0) ** 2) / (2 * 600.0**2))
    probe2 = np.round(1800 * env * rng.standard_normal(n)).astype(np.int64)
    return [np.clip(p, -2048, 2047).tolist() for p in (probe1, probe2)]


def cmd_sweep_precision(args) -> int:
    cfg = resolve_config(args)
    design = design_float_bank()
    b_grid = [int(x) for x in str(cfg.get("precision_b_grid", ",".join(map(str, DEFAULT_B_GRID)))).split(",")]
    a_grid = [int(x) for x in str(cfg.get("precision_a_grid", ",".join(map(str, DEFAULT_A_GRID)))).split(",")]
    tolerance = float(cfg.get("precision_tolerance", DEFAULT_PRECISION_TOLERANCE))
    probes = _precision_metric_probes(int(cfg.get("seed", 0)) + 12345)
    baseline_frames: list[np.ndarray] = []

    def feature_mse_metric(bank) -> float:
        frames = [
            np.array([fr.values for fr in extract_features(p, bank).frames], dtype=float)
            for p in probes
        ]
        if not baseline_frames:
            baseline_frames.extend(frames)
            return 0.0
        err = 0.0
        n = 0
        for got, ref in zip(frames, baseline_frames):
            err += float(((got - ref) ** 2).sum())
            n += ref.size
        return -err / n

    from .filter_design import precision_search

    try:
        b_sel, a_sel, report = precision_search(
            design, b_grid, a_grid, feature_mse_metric, tolerance=tolerance
        )
    except ValueError as e:
        raise _fail("validation", str(e))
    header = [
        "b_bits", "a_bits", "structure", "multipliers_per_filter", "metric",
        "admissible", "selected",
    ]
    rows: list[list] = [["16", "16", "baseline", 10, "0.0", True, False]]
    for r in report:
        rows.append(
            [r["b_bits"], r["a_bits"], "direct", 10, f"{r['score']:.4f}",
             r["admissible"], (r["b_bits"], r["a_bits"]) == (b_sel, a_sel)]
        )
    # the shipped realization: mixed 12b/8b with one numerator per channel
    # snapped to shifts, halving the per-filter multiplier count
    shipped = quantize_bank(design, 12, 8)
    mult = multiplier_report(shipped)
    shipped_score = next(
        (r["score"] for r in report if (r["b_bits"], r["a_bits"]) == (12, 8)), float("nan")
    )
    rows.append(
        ["12", "8", "shift_substituted", mult["shift_substituted_per_filter"],
         f"{shipped_score:.4f}", True, False]
    )
    dest = _out_dir(cfg) / "sweep_precision.csv"
    _write_csv(dest, header, rows)
    print(f"selected {b_sel}b/{a_sel}b; wrote {dest}")
    return 0


def cmd_calibrate(args) -> int:
    cfg = resolve_config(args)
    dense = (
        float(cfg.get("calibrate_dense_latency_ms", DENSE_POINT[0])),
        float(cfg.get("calibrate_dense_energy_nj", DENSE_POINT[1])),
    )
    sparse = (
        float(cfg.get("calibrate_sparse_latency_ms", SPARSE_POINT[0])),
        float(cfg.get("calibrate_sparse_energy_nj", SPARSE_POINT[1])),
        float(cfg.get("calibrate_sparsity", SPARSE_POINT[2])),
    )
    try:
        cm, report = calibrate(dense, sparse)
    except CalibrationError as e:
        raise _fail("calibration", str(e))
    dest = Path(cfg.get("cost_model") or (_out_dir(cfg) / "cost_model.txt"))
    dest.parent.mkdir(parents=True, exist_ok=True)
    write_cost_model(cm, dest)
    print(f"wrote {dest}")
    for key in (
        "macs_dense", "macs_sparse", "latency_residual_sparse_ms", "energy_residual_sparse_nj"
    ):
        print(f"  {key} = {report[key]:.6g}")
    return 0


def cmd_report(args) -> int:
    import datetime

    cfg = resolve_config(args)
    out = _out_dir(cfg)
    lines = ["# Sweep report", "", f"generated: {datetime.datetime.now().isoformat()}", ""]
    theta_csv = out / "sweep_theta.csv"
    if theta_csv.is_file():
        _plot_theta_sweep(theta_csv, out / "sweep_theta.png")
        lines += [
            "## Threshold sweep",
            "",
            "![threshold sweep](sweep_theta.png)",
            "",
            _csv_as_markdown(theta_csv),
            "",
        ]
    else:
        lines += ["## Threshold sweep", "", "no data (sweep_theta.csv missing)", ""]
    for name, title in [
        ("sweep_channels.csv", "Channel sweep"),
        ("sweep_precision.csv", "Precision sweep"),
    ]:
        p = out / name
        if p.is_file():
            lines += [f"## {title}", "", _csv_as_markdown(p), ""]
        else:
            lines += [f"## {title}", "", f"no data ({name} missing)", ""]
    dest = out / "report.md"
    dest.write_text("\n".join(lines), encoding="utf-8")
    print(f"wrote {dest}")
    return 0


def _csv_as_markdown(path: Path) -> str:
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    if not rows:
        return "(empty)"
    head, *body = rows
    md = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    md += ["| " + " | ".join(r) + " |" for r in body]
    return "\n".join(md)


# ---------------------------------------------------------------------------
# plots (matplotlib imported lazily; Agg backend for headless runs)

def _plot_feature_image(run, dest: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    img = np.array([fr.values for fr in run.frames], dtype=float).T
    fig, ax = plt.subplots(figsize=(6, 3))
    ax.imshow(img, aspect="auto", origin="lower", interpolation="nearest")
    ax.set_xlabel("frame (16 ms)")
    ax.set_ylabel("channel")
    ax.set_yticks(range(len(run.center_freqs_hz)))
    ax.set_yticklabels([f"{cf:.0f}" for cf in run.center_freqs_hz], fontsize=6)
    fig.tight_layout()
    fig.savefig(dest, dpi=120)
    plt.close(fig)


def _plot_theta_sweep(csv_path: Path, dest: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with open(csv_path, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    theta = [float(r["theta"]) for r in rows]
    panels = [("accuracy_12", "accuracy"), ("sparsity", "temporal sparsity")]
    if rows and "mean_energy_nj" in rows[0]:
        panels += [("mean_energy_nj", "energy/frame (nJ)"), ("mean_latency_ms", "latency/frame (ms)")]
    fig, axes = plt.subplots(len(panels), 1, figsize=(5, 2.2 * len(panels)), sharex=True)
    if len(panels) == 1:
        axes = [axes]
    for ax, (key, label) in zip(axes, panels):
        ax.plot(theta, [float(r[key]) for r in rows], marker="o")
        ax.set_ylabel(label)
        ax.grid(True, alpha=0.3)
    axes[-1].set_xlabel("delta threshold")
    fig.tight_layout()
    fig.savefig(dest, dpi=120)
    plt.close(fig)


# ---------------------------------------------------------------------------
# entry point

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dkws", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="key = value config file; flags override")
        sp.add_argument("--dataset-root", dest="dataset_root")
        sp.add_argument("--weights")
        sp.add_argument("--weights-dir", dest="weights_dir")
        sp.add_argument("--bank")
        sp.add_argument("--cost-model", dest="cost_model")
        sp.add_argument("--out")
        sp.add_argument("--theta", help="comma-separated threshold list")
        sp.add_argument("--mask", action="append", help="channel mask, e.g. 3-12 or 0,2,5")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--workers", type=int)
        sp.add_argument("--plot", action="store_true")

    sp = sub.add_parser("features", help="extract feature CSVs from WAV files")
    common(sp)
    sp.add_argument("wav", nargs="*")
    sp.set_defaults(func=cmd_features)

    sp = sub.add_parser("infer", help="classify precomputed feature CSVs")
    common(sp)
    sp.add_argument("features", nargs="*")
    sp.set_defaults(func=cmd_infer)

    sp = sub.add_parser("sweep-theta", help="accuracy/sparsity/cost vs threshold")
    common(sp)
    sp.set_defaults(func=cmd_sweep_theta)

    sp = sub.add_parser("sweep-channels", help="accuracy and FEx ops vs channel mask")
    common(sp)
    sp.set_defaults(func=cmd_sweep_channels)

    sp = sub.add_parser("sweep-precision", help="coefficient precision grid search")
    common(sp)
    sp.set_defaults(func=cmd_sweep_precision)

    sp = sub.add_parser("calibrate", help="fit the cost model to measured points")
    common(sp)
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("report", help="collate sweep CSVs into a markdown report")
    common(sp)
    sp.set_defaults(func=cmd_report)
    return p


_ERROR_CATEGORIES = {
    WeightFileError: "weights",
    BankFileError: "bank",
    DatasetError: "dataset",
    WavError: "wav",
    CalibrationError: "calibration",
    kvfile.KVError: "config",
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: category={e.category} {e}", file=sys.stderr)
        return 2
    except tuple(_ERROR_CATEGORIES) as e:
        category = next(c for t, c in _ERROR_CATEGORIES.items() if isinstance(e, t))
        print(f"error: category={category} {e}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as e:
        print(f"error: category=validation {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
