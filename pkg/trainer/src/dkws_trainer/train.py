"""Training loop: threshold in the loop, int8 fake quantization, CE on the
temporal mean of logits (the simulator's decision statistic)."""

from __future__ import annotations

import argparse
import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .data import FeatureSet, load_split
from .export import export_weights
from .model import DeltaGRUNet


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    theta_train: float = 0.2
    epochs: int = 5
    batch_size: int = 32
    lr: float = 1e-3
    lr_decay: float = 0.9          # per-epoch multiplicative schedule
    seed: int = 0
    quant_start_epoch: int = 0     # fake quantization active from this epoch
    n_hid: int = 64
    n_out: int = 12

    def __post_init__(self):
        if self.theta_train < 0:
            raise ValueError("theta_train must be >= 0")


@dataclass
class TrainResult:
    model: DeltaGRUNet
    history: list[dict] = field(default_factory=list)


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for i in range(0, n, batch_size):
        yield order[i : i + batch_size]


def _stack(feats: list[np.ndarray]) -> torch.Tensor:
    lens = {f.shape[0] for f in feats}
    if len(lens) != 1:
        raise ValueError(f"utterances have unequal frame counts {sorted(lens)}")
    return torch.from_numpy(np.stack(feats)).to(torch.int64)


def evaluate(model: DeltaGRUNet, ds: FeatureSet, theta: float,
             batch_size: int = 64) -> float:
    feats = _stack(ds.features)
    correct = 0
    for i in range(0, len(ds), batch_size):
        dec = model.decisions(feats[i : i + batch_size], theta)
        correct += int((dec.numpy() == ds.labels[i : i + batch_size]).sum())
    return correct / len(ds)


def train(config: TrainConfig, train_set: FeatureSet, val_set: FeatureSet | None = None,
          log_path=None, init_model: DeltaGRUNet | None = None) -> TrainResult:
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    model = init_model or DeltaGRUNet(
        n_in=train_set.n_channels, n_hid=config.n_hid, n_out=config.n_out
    )
    opt = torch.optim.Adam(model.parameters(), lr=config.lr)
    feats = _stack(train_set.features)
    labels = torch.from_numpy(train_set.labels)
    history = []
    for epoch in range(config.epochs):
        for g in opt.param_groups:
            g["lr"] = config.lr * (config.lr_decay ** epoch)
        quantize = epoch >= config.quant_start_epoch
        model.train()
        losses = []
        for idx in _batches(len(train_set), config.batch_size, rng):
            idx = torch.from_numpy(idx)
            logits, _ = model(feats[idx], config.theta_train, quantize=quantize)
            loss = F.cross_entropy(logits, labels[idx])
            if not math.isfinite(loss.detach().item()):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch} (lr {config.lr:g})"
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            model.clamp_weights_()
            losses.append(loss.detach().item())
        entry = {"epoch": epoch, "train_loss": float(np.mean(losses))}
        if val_set is not None:
            entry["val_accuracy"] = evaluate(model, val_set, config.theta_train)
        history.append(entry)
    if log_path is not None:
        keys = list(history[0].keys()) if history else ["epoch", "train_loss"]
        with open(log_path, "w", newline="", encoding="utf-8") as f:
            w = csv.DictWriter(f, fieldnames=keys)
            w.writeheader()
            w.writerows(history)
    return TrainResult(model, history)


def save_checkpoint(result: TrainResult, config: TrainConfig, path) -> None:
    torch.save(
        {"state_dict": result.model.state_dict(),
         "config": vars(config), "history": result.history},
        path,
    )


def load_checkpoint(path) -> tuple[DeltaGRUNet, TrainConfig, list]:
    blob = torch.load(path, weights_only=False)
    config = TrainConfig(**blob["config"])
    n_in = blob["state_dict"]["W_xr"].shape[1]
    model = DeltaGRUNet(n_in=n_in, n_hid=config.n_hid, n_out=config.n_out)
    model.load_state_dict(blob["state_dict"])
    return model, config, blob["history"]


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--features-dir", required=True,
                   help="directory with train/ val/ test/ splits of feature CSVs")
    p.add_argument("--out", default="trained", help="output directory")
    p.add_argument("--theta-train", type=float, default=0.2)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    root = Path(args.features_dir)
    train_set = load_split(root / "train")
    val_set = load_split(root / "val") if (root / "val").is_dir() else None
    config = TrainConfig(
        theta_train=args.theta_train, epochs=args.epochs,
        batch_size=args.batch_size, lr=args.lr, seed=args.seed,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = train(config, train_set, val_set, log_path=out / "training_log.csv")
    save_checkpoint(result, config, out / "checkpoint.pt")
    export_weights(result.model, out / "weights.bin")
    print(f"wrote {out / 'weights.bin'}")
    if result.history and "val_accuracy" in result.history[-1]:
        print(f"final val accuracy: {result.history[-1]['val_accuracy']:.3f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
