"""Loss assembly, the correction-coefficient schedule, and the training loop.

Training runs in three phases over 1-based epochs:

1. warmup (epoch <= warmup_epochs): summed cross-entropy on all observed
   labels plus the reconstruction term, no selection.
2. selection (epoch <= correction_start): each epoch starts with an
   evaluation pass over the un-augmented training set (dropout off); the
   per-sample losses are normalized per class, a mixture is fitted per
   class, and samples split into certain / uncertain / hard. Certain
   samples contribute summed cross-entropy, warped copies of certain
   samples contribute the augmentation term, and every sample contributes
   to the reconstruction term.
3. correction (epoch > correction_start): additionally, uncertain samples
   get soft targets blending their observed label with the model's
   eval-mode prediction, weighted by the clean posterior; that term enters
   with the sigmoid-scheduled correction coefficient. Hard samples
   contribute reconstruction only.

Stored labels are never overwritten: corrected targets are rebuilt every
epoch from the current fit and prediction.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np
import torch
import torch.nn.functional as F

from . import select
from .augment import WarpSpec, build_aug_set
from .data import TimeSeriesDataset
from .metrics import selection_metrics, weighted_f1
from .model import EncoderConfig, TimeSeriesNet, reconstruction_loss, save_checkpoint
from .noise import FlipMask

HISTORY_FILE = "history.csv"
CHECKPOINT_FILE = "checkpoint.bin"
CONFIG_FILE = "config.json"

LOG_FLOOR = 1e-12

_EVAL_BATCH = 512


class TrainingDivergedError(RuntimeError):
    """Raised when an epoch produces a non-finite loss."""

    def __init__(self, epoch: int, value: float):
        super().__init__(f"non-finite training loss at epoch {epoch} ({value})")
        self.epoch = epoch


@dataclass
class TrainConfig:
    max_epochs: int = 300
    warmup_epochs: int = 30
    correction_start: int = 200
    correction_steepness: float = 0.1
    correction_midpoint: float = 10.0  # epochs past correction_start to half weight
    correction_max: float = 1.0
    recon_weight: float = 1.0
    aug_weight: float = 1.0
    learning_rate: float = 1e-3
    batch_size: int = 32
    seed: int = 0
    selector: str = "bmm"  # bmm | gmm | sloss
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    disable_aug: bool = False
    disable_corr: bool = False
    aug_multiplier: int = 1
    warp_knots: int = 4
    warp_sigma: float = 0.2

    def validate(self) -> None:
        if not 0 <= self.warmup_epochs < self.correction_start < self.max_epochs:
            raise ValueError("need warmup_epochs < correction_start < max_epochs")
        if self.correction_steepness <= 0:
            raise ValueError("correction_steepness must be > 0")
        if not 0.0 < self.correction_max <= 1.0:
            raise ValueError("correction_max must be in (0, 1]")
        if self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("batch_size must be >= 1 and learning_rate > 0")
        if self.selector not in select.SELECTORS:
            raise ValueError(f"selector must be one of {select.SELECTORS}")
        if self.aug_multiplier < 0:
            raise ValueError("aug_multiplier must be >= 0")
        self.encoder.validate()

    def to_dict(self) -> dict:
        out = {}
        for f_ in fields(self):
            value = getattr(self, f_.name)
            if f_.name == "encoder":
                value = vars(value) | {"conv_channels": list(value.conv_channels)}
            out[f_.name] = value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        data = dict(data)
        enc = data.pop("encoder", None)
        cfg = cls(**data)
        if enc is not None:
            enc = dict(enc)
            enc["conv_channels"] = tuple(enc["conv_channels"])
            cfg = replace(cfg, encoder=EncoderConfig(**enc))
        return cfg


@dataclass
class EpochRecord:
    """One epoch of history. ``None`` marks a term the phase does not permit.

    ``train_f1`` scores predictions against the observed (noisy) training
    labels -- the only labels the learner can see; ``test_f1`` scores the
    held-out split against its clean labels.
    """

    epoch: int
    phase: str  # warmup | select | correct | vanilla
    correction_weight: float
    loss_ce: Optional[float]
    loss_recon: Optional[float]
    loss_aug: Optional[float]
    loss_corr: Optional[float]
    loss_total: float
    n_certain: Optional[int]
    n_uncertain: Optional[int]
    n_hard: Optional[int]
    train_f1: float
    test_f1: float
    certain_purity: Optional[float] = None
    hard_noise_recall: Optional[float] = None


_HISTORY_COLUMNS = [f_.name for f_ in fields(EpochRecord)]
_INT_COLUMNS = {"epoch", "n_certain", "n_uncertain", "n_hard"}


def correction_weight(epoch: int, cfg: TrainConfig) -> float:
    """Sigmoid ramp for the uncertain-set coefficient, defined for
    epoch >= correction_start; reaches correction_max/2 at
    correction_start + correction_midpoint."""
    if epoch < cfg.correction_start:
        raise ValueError("correction_weight is defined for epochs >= correction_start")
    arg = -cfg.correction_steepness * ((epoch - cfg.correction_start) - cfg.correction_midpoint)
    return cfg.correction_max / (1.0 + math.exp(arg))


def summed_ce(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Sum (not mean) of per-sample cross-entropy; 0 for an empty batch."""
    if logits.shape[0] == 0:
        return logits.new_zeros(())
    return F.cross_entropy(logits, labels, reduction="sum")


def certain_loss(logits: torch.Tensor, labels: torch.Tensor, certain_ids) -> torch.Tensor:
    """Summed cross-entropy over the certain subset of a batch."""
    idx = torch.as_tensor(np.asarray(certain_ids, dtype=np.int64), device=logits.device)
    return summed_ce(logits[idx], labels[idx])


def corrected_target(p_clean: float, noisy_onehot, pred_soft) -> np.ndarray:
    """Convex blend p_clean * onehot(observed) + (1 - p_clean) * prediction."""
    noisy_onehot = np.asarray(noisy_onehot, dtype=np.float64)
    pred_soft = np.asarray(pred_soft, dtype=np.float64)
    if not 0.0 <= p_clean <= 1.0:
        raise ValueError("p_clean must be in [0, 1]")
    for name, vec in (("noisy_onehot", noisy_onehot), ("pred_soft", pred_soft)):
        if abs(vec.sum() - 1.0) > 1e-6 or (vec < 0).any():
            raise ValueError(f"{name} must be a probability vector")
    return p_clean * noisy_onehot + (1.0 - p_clean) * pred_soft


def uncertain_loss(corrected: torch.Tensor, predicted: torch.Tensor) -> torch.Tensor:
    """Mean over rows of -<target, log prediction>; 0 for an empty set.

    ``predicted`` holds probability rows (softmax output); the log is floored
    at LOG_FLOOR. The mean is over the uncertain samples present, so
    duplicating the set leaves the value unchanged.
    """
    if corrected.shape[0] == 0:
        return predicted.new_zeros(())
    return -(corrected * predicted.clamp_min(LOG_FLOOR).log()).sum(dim=1).mean()


def warmup_loss(logits, labels, x, x_hat) -> torch.Tensor:
    """Summed cross-entropy over the full batch plus the reconstruction term."""
    return summed_ce(logits, labels) + reconstruction_loss(x, x_hat)


def total_loss(ce, recon, aug, corr, cfg: TrainConfig, epoch: int):
    """Post-warmup objective: ce + recon_weight*recon (+ aug_weight*aug)
    (+ correction_weight*corr once the correction phase is active)."""
    total = ce + cfg.recon_weight * recon
    if not cfg.disable_aug:
        total = total + cfg.aug_weight * aug
    if epoch > cfg.correction_start and not cfg.disable_corr:
        total = total + correction_weight(epoch, cfg) * corr
    return total


def combine_seeds(*parts) -> int:
    """Stable derivation of an independent seed from integer parts."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def _predict(model: TimeSeriesNet, x: torch.Tensor):
    """Eval-mode logits and softmax probabilities, batched."""
    was_training = model.training
    model.eval()
    logits = []
    with torch.no_grad():
        for start in range(0, x.shape[0], _EVAL_BATCH):
            logits.append(model(x[start : start + _EVAL_BATCH]).logits)
    if was_training:
        model.train()
    logits = torch.cat(logits) if logits else torch.empty(0, model.n_classes)
    return logits, torch.softmax(logits, dim=1)


def _f1_of(model, x, labels, n_classes) -> float:
    logits, _ = _predict(model, x)
    return weighted_f1(logits.argmax(dim=1).numpy(), labels, n_classes)


def _select_epoch(model, x_train, noisy_labels, n_classes, cfg: TrainConfig):
    """Evaluation pass + per-class fit + partition for one epoch."""
    logits, probs = _predict(model, x_train)
    losses = select.per_sample_ce(logits.numpy().astype(np.float64), noisy_labels)
    stats = select.normalize_losses_per_class(losses, noisy_labels, n_classes)
    if cfg.selector == "sloss":
        part = select.sloss_partition(stats)
        fits = {}
    else:
        fits = select.fit_class_mixtures(stats, cfg.selector)
        part = select.partition(stats, fits)
    return stats, fits, part, probs.numpy().astype(np.float64)


def _epoch_phase(epoch: int, cfg: TrainConfig) -> str:
    if epoch <= cfg.warmup_epochs:
        return "warmup"
    if epoch <= cfg.correction_start:
        return "select"
    return "correct"


def train(
    train_ds: TimeSeriesDataset,
    test_ds: TimeSeriesDataset,
    cfg: TrainConfig,
    flip_mask: Optional[FlipMask] = None,
    out_dir=None,
    dump_selection: bool = False,
):
    """Train on ``train_ds`` (observed labels), scoring each epoch on the
    clean labels of ``test_ds``. Returns (model, list of EpochRecord).

    Deterministic given ``cfg.seed``; the final-epoch parameters are the
    result (no early stopping). Raises TrainingDivergedError on a non-finite
    loss. When ``out_dir`` is given, writes history.csv, checkpoint.bin and
    (optionally) per-epoch selection dumps there.
    """
    cfg.validate()
    torch.manual_seed(cfg.seed)
    shuffle_rng = np.random.default_rng(combine_seeds(cfg.seed, 1))

    n = train_ds.n_instances
    n_classes = train_ds.meta.n_classes
    x_train = torch.as_tensor(train_ds.instances, dtype=torch.float32)
    y_noisy_np = train_ds.noisy_labels.copy()
    y_noisy = torch.as_tensor(y_noisy_np, dtype=torch.long)
    x_test = torch.as_tensor(test_ds.instances, dtype=torch.float32)
    onehots = np.eye(n_classes, dtype=np.float64)[y_noisy_np]

    model = TimeSeriesNet(train_ds.meta.n_features, n_classes, cfg.encoder, with_decoder=True)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)

    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)

    records: list[EpochRecord] = []
    model.train()
    for epoch in range(1, cfg.max_epochs + 1):
        phase = _epoch_phase(epoch, cfg)

        part = None
        corr_targets = None
        aug_x = aug_y = None
        if phase != "warmup":
            stats, fits, part, eval_probs = _select_epoch(model, x_train, y_noisy_np, n_classes, cfg)
            if dump_selection and out_path is not None:
                payload = select.selection_dump(epoch, stats, fits, part)
                with open(out_path / f"selection_epoch_{epoch}.json", "w") as fh:
                    json.dump(payload, fh)
            if not cfg.disable_aug and part.certain_ids.size:
                warp = WarpSpec(cfg.warp_knots, cfg.warp_sigma, combine_seeds(cfg.seed, 2, epoch))
                pairs = build_aug_set(train_ds, part.certain_ids, warp, cfg.aug_multiplier)
                if pairs:
                    aug_x = torch.as_tensor(
                        np.stack([p[0] for p in pairs]), dtype=torch.float32
                    )
                    aug_y = torch.as_tensor([p[1] for p in pairs], dtype=torch.long)
            if phase == "correct" and not cfg.disable_corr and part.uncertain_ids.size:
                corr_targets = np.zeros((n, n_classes))
                ids = part.uncertain_ids
                blend = part.p_clean[ids][:, None]
                corr_targets[ids] = blend * onehots[ids] + (1.0 - blend) * eval_probs[ids]

        is_certain = np.zeros(n, dtype=bool)
        is_uncertain = np.zeros(n, dtype=bool)
        if part is not None:
            is_certain[part.certain_ids] = True
            is_uncertain[part.uncertain_ids] = True

        order = shuffle_rng.permutation(n)
        n_batches = math.ceil(n / cfg.batch_size)
        aug_chunks = [None] * n_batches
        if aug_x is not None:
            aug_chunks = np.array_split(shuffle_rng.permutation(aug_x.shape[0]), n_batches)

        ce_total = 0.0
        recon_sum = 0.0
        aug_total = 0.0
        corr_sum = 0.0
        corr_count = 0
        lam = (
            correction_weight(epoch, cfg)
            if phase == "correct" and not cfg.disable_corr
            else 0.0
        )

        for b in range(n_batches):
            idx = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            xb = x_train[idx]
            yb = y_noisy[idx]
            outputs = model(xb)
            recon = reconstruction_loss(xb, outputs.reconstruction)

            if phase == "warmup":
                ce = summed_ce(outputs.logits, yb)
                batch_loss = ce + recon
            else:
                certain_rows = np.flatnonzero(is_certain[idx])
                ce = certain_loss(outputs.logits, yb, certain_rows)
                aug = outputs.logits.new_zeros(())
                chunk = aug_chunks[b]
                if chunk is not None and len(chunk):
                    aug_out = model(aug_x[chunk])
                    aug = summed_ce(aug_out.logits, aug_y[chunk])
                corr = outputs.logits.new_zeros(())
                uncertain_rows = np.flatnonzero(is_uncertain[idx])
                if corr_targets is not None and uncertain_rows.size:
                    targets = torch.as_tensor(
                        corr_targets[idx[uncertain_rows]], dtype=torch.float32
                    )
                    predicted = torch.softmax(outputs.logits[uncertain_rows], dim=1)
                    corr = uncertain_loss(targets, predicted)
                batch_loss = total_loss(ce, recon, aug, corr, cfg, epoch)
                aug_total += float(aug.detach())
                if corr_targets is not None and uncertain_rows.size:
                    corr_sum += float(corr.detach()) * uncertain_rows.size
                    corr_count += uncertain_rows.size

            value = float(batch_loss.detach())
            if not math.isfinite(value):
                raise TrainingDivergedError(epoch, value)
            optimizer.zero_grad()
            batch_loss.backward()
            optimizer.step()

            ce_total += float(ce.detach())
            recon_sum += float(recon.detach()) * len(idx)

        recon_epoch = recon_sum / n
        corr_epoch = corr_sum / corr_count if corr_count else None
        if phase == "warmup":
            epoch_total = ce_total + recon_epoch
            record = EpochRecord(
                epoch=epoch,
                phase=phase,
                correction_weight=0.0,
                loss_ce=ce_total,
                loss_recon=recon_epoch,
                loss_aug=None,
                loss_corr=None,
                loss_total=epoch_total,
                n_certain=None,
                n_uncertain=None,
                n_hard=None,
                train_f1=_f1_of(model, x_train, y_noisy_np, n_classes),
                test_f1=_f1_of(model, x_test, test_ds.true_labels, n_classes),
            )
        else:
            loss_aug = None if cfg.disable_aug else aug_total
            loss_corr = None
            epoch_total = ce_total + cfg.recon_weight * recon_epoch
            if loss_aug is not None:
                epoch_total += cfg.aug_weight * loss_aug
            if phase == "correct" and not cfg.disable_corr:
                loss_corr = corr_epoch if corr_epoch is not None else 0.0
                epoch_total += lam * loss_corr
            purity = recall = None
            if flip_mask is not None:
                quality = selection_metrics(part, flip_mask)
                purity, recall = quality.certain_purity, quality.hard_noise_recall
            record = EpochRecord(
                epoch=epoch,
                phase=phase,
                correction_weight=lam,
                loss_ce=ce_total,
                loss_recon=recon_epoch,
                loss_aug=loss_aug,
                loss_corr=loss_corr,
                loss_total=epoch_total,
                n_certain=int(part.certain_ids.size),
                n_uncertain=int(part.uncertain_ids.size),
                n_hard=int(part.hard_ids.size),
                train_f1=_f1_of(model, x_train, y_noisy_np, n_classes),
                test_f1=_f1_of(model, x_test, test_ds.true_labels, n_classes),
                certain_purity=purity,
                hard_noise_recall=recall,
            )
        records.append(record)

    if out_path is not None:
        write_history(out_path / HISTORY_FILE, records)
        save_checkpoint(model, out_path / CHECKPOINT_FILE)
    return model, records


def train_vanilla(
    train_ds: TimeSeriesDataset,
    test_ds: TimeSeriesDataset,
    cfg: TrainConfig,
    out_dir=None,
):
    """Plain baseline: CNN-only encoder + classifier, summed cross-entropy on
    all observed labels, no reconstruction / selection / augmentation /
    correction. Same epoch budget and optimizer as :func:`train`."""
    cfg.validate()
    torch.manual_seed(cfg.seed)
    shuffle_rng = np.random.default_rng(combine_seeds(cfg.seed, 1))

    n = train_ds.n_instances
    n_classes = train_ds.meta.n_classes
    x_train = torch.as_tensor(train_ds.instances, dtype=torch.float32)
    y_noisy_np = train_ds.noisy_labels.copy()
    y_noisy = torch.as_tensor(y_noisy_np, dtype=torch.long)
    x_test = torch.as_tensor(test_ds.instances, dtype=torch.float32)

    encoder = replace(cfg.encoder, variant="cnn_only")
    model = TimeSeriesNet(train_ds.meta.n_features, n_classes, encoder, with_decoder=False)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)

    records: list[EpochRecord] = []
    model.train()
    for epoch in range(1, cfg.max_epochs + 1):
        order = shuffle_rng.permutation(n)
        ce_total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss = summed_ce(model(x_train[idx]).logits, y_noisy[idx])
            value = float(loss.detach())
            if not math.isfinite(value):
                raise TrainingDivergedError(epoch, value)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            ce_total += value
        records.append(
            EpochRecord(
                epoch=epoch,
                phase="vanilla",
                correction_weight=0.0,
                loss_ce=ce_total,
                loss_recon=None,
                loss_aug=None,
                loss_corr=None,
                loss_total=ce_total,
                n_certain=None,
                n_uncertain=None,
                n_hard=None,
                train_f1=_f1_of(model, x_train, y_noisy_np, n_classes),
                test_f1=_f1_of(model, x_test, test_ds.true_labels, n_classes),
            )
        )

    if out_dir is not None:
        out_path = Path(out_dir)
        out_path.mkdir(parents=True, exist_ok=True)
        write_history(out_path / HISTORY_FILE, records)
        save_checkpoint(model, out_path / CHECKPOINT_FILE)
    return model, records


def write_history(path, records) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_HISTORY_COLUMNS)
        for rec in records:
            writer.writerow(
                ["" if getattr(rec, col) is None else getattr(rec, col) for col in _HISTORY_COLUMNS]
            )


def read_history(path) -> list[EpochRecord]:
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            kwargs = {}
            for col in _HISTORY_COLUMNS:
                cell = row[col]
                if cell == "":
                    kwargs[col] = None
                elif col in ("phase",):
                    kwargs[col] = cell
                elif col in _INT_COLUMNS:
                    kwargs[col] = int(cell)
                else:
                    kwargs[col] = float(cell)
            records.append(EpochRecord(**kwargs))
    return records
