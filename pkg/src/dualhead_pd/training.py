"""AdamW with warmup/linear-decay, class-balanced sampling, the training
loop with early stopping, and the ablation driver."""

import math
import os
from dataclasses import dataclass, replace

import numpy as np

from . import evaluation, losses
from .model import AblationSwitches, LanguageRegistry, Model, save_checkpoint
from .numerics import ConfigurationError, NumericError, backward


class UsageError(ValueError):
    pass


@dataclass(frozen=True)
class ScheduleConfig:
    total_steps: int
    warmup_ratio: float = 0.1

    def __post_init__(self):
        if not 0 < self.warmup_ratio < 1:
            raise ConfigurationError(f"warmup_ratio must be in (0, 1), got {self.warmup_ratio}")
        if self.total_steps < 1:
            raise ConfigurationError(f"total_steps must be >= 1, got {self.total_steps}")

    @property
    def warmup_steps(self):
        return max(1, math.ceil(self.warmup_ratio * self.total_steps))


def lr_at(step, cfg, max_lr):
    """Linear warmup to max_lr over the first ceil(ratio * total) steps, then
    linear decay to 0 at total_steps."""
    if not 0 <= step <= cfg.total_steps:
        raise UsageError(f"step {step} outside [0, {cfg.total_steps}]")
    w = cfg.warmup_steps
    if step <= w:
        return max_lr * step / w
    if cfg.total_steps == w:
        return 0.0
    return max_lr * (cfg.total_steps - step) / (cfg.total_steps - w)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 64
    max_lr: float = 1e-4
    warmup_ratio: float = 0.1
    weight_decay: float = 0.01
    patience: int = 5
    clip_norm: float = 5.0  # 0 disables clipping
    seed: int = 0

    def __post_init__(self):
        for name in ("epochs", "batch_size", "patience"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"train.{name} must be >= 1, got {getattr(self, name)}")
        if self.max_lr <= 0:
            raise ConfigurationError(f"train.max_lr must be positive, got {self.max_lr}")


class AdamW:
    """Bias-corrected Adam with decoupled weight decay."""

    def __init__(self, params, weight_decay=0.01, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(p.value) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.value) for k, p in params.items()}
        self.t = 0

    def step(self, lr):
        for k, p in self.params.items():
            if not np.all(np.isfinite(p.grad)):
                raise NumericError(f"non-finite gradient in parameter {k!r}")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1, c2 = 1 - b1**self.t, 1 - b2**self.t
        for k, p in self.params.items():
            g = p.grad
            m = self.m[k] = b1 * self.m[k] + (1 - b1) * g
            v = self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            update = (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.value = (p.value - lr * update - lr * self.weight_decay * p.value).astype(p.value.dtype)


def clip_grad_norm(params, max_norm):
    total = math.sqrt(float(np.sum([np.sum(p.grad.astype(np.float64) ** 2) for p in params.values()])))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for p in params.values():
            p.grad = p.grad * np.asarray(scale, dtype=p.grad.dtype)
    return total


# ---------------------------------------------------------------------------
# sampling


def sampler_weights(entries):
    """weight = N_dataset / N_(dataset, label): labels equally likely within
    each dataset, dataset shares unchanged."""
    cells, sizes = {}, {}
    for e in entries:
        cells[(e.dataset, e.label)] = cells.get((e.dataset, e.label), 0) + 1
        sizes[e.dataset] = sizes.get(e.dataset, 0) + 1
    for ds in sizes:
        for label in (0, 1):
            if (ds, label) not in cells:
                name = "HC" if label == 0 else "PD"
                raise ConfigurationError(f"sampler cell (dataset={ds!r}, label={name}) is empty")
    w = np.array([sizes[e.dataset] / cells[(e.dataset, e.label)] for e in entries], dtype=np.float64)
    return w / w.sum()


def make_sampler(entries, rng, chunk=1024):
    """Endless stream of indices drawn with replacement."""
    p = sampler_weights(entries)
    n = len(entries)
    while True:
        yield from rng.choice(n, size=chunk, p=p).tolist()


# ---------------------------------------------------------------------------
# training loop

HISTORY_COLUMNS = (
    "epoch",
    "train_loss",
    "val_accuracy",
    "val_macro_f1",
    "val_sensitivity",
    "val_specificity",
    "lr",
)


@dataclass
class TrainResult:
    model: Model
    history: list
    best_epoch: int
    best_f1: float


def build_registry(utterances):
    return LanguageRegistry(sorted({u.dataset for u in utterances}))


def _history_line(row, datasets):
    cells = [str(row["epoch"])]
    cells += [f"{row[c]:.6f}" if c != "lr" else f"{row[c]:.6e}" for c in HISTORY_COLUMNS[1:]]
    cells += [f"{row['per_dataset'].get(ds, float('nan')):.6f}" for ds in datasets]
    return "\t".join(cells)


def write_history(path, history, datasets):
    header = list(HISTORY_COLUMNS) + [f"val_macro_f1.{ds}" for ds in datasets]
    with open(path, "w") as fh:
        fh.write("\t".join(header) + "\n")
        for row in history:
            fh.write(_history_line(row, datasets) + "\n")


def train(
    train_utts,
    val_utts,
    model_cfg,
    train_cfg=TrainConfig(),
    contrastive_cfg=losses.ContrastiveConfig(),
    switches=None,
    out_dir=None,
    registry=None,
    log=None,
):
    """Train with weighted batches and keep the best-validation-F1 weights.

    Writes ``checkpoint.bin`` and ``history.tsv`` into ``out_dir`` if given.
    """
    switches = switches or AblationSwitches()
    check_disjoint(train_utts, val_utts)
    registry = registry or build_registry(train_utts)
    model = Model(model_cfg, registry, switches, seed=train_cfg.seed)
    rng = np.random.default_rng([train_cfg.seed, 7])
    stream = make_sampler([u.entry for u in train_utts], rng)
    steps_per_epoch = math.ceil(len(train_utts) / train_cfg.batch_size)
    schedule = ScheduleConfig(steps_per_epoch * train_cfg.epochs, train_cfg.warmup_ratio)
    opt = AdamW(model.params, weight_decay=train_cfg.weight_decay)
    labels_all = np.array([u.label for u in train_utts])
    lang_all = np.array([registry.index(u.dataset) for u in train_utts])
    datasets = sorted({u.dataset for u in val_utts})

    history, best, best_f1, best_epoch, stale, step = [], None, -1.0, 0, 0, 0
    for epoch in range(1, train_cfg.epochs + 1):
        losses_epoch = []
        for _ in range(steps_per_epoch):
            idx = [next(stream) for _ in range(train_cfg.batch_size)]
            lr = lr_at(step + 1, schedule, train_cfg.max_lr)
            model.zero_grad()
            outs = model.forward_batch(
                [train_utts[i].ssl for i in idx],
                [train_utts[i].wav for i in idx],
                lang_all[idx],
                [train_utts[i].task for i in idx],
            )
            loss, _ = losses.total_loss(outs, labels_all[idx], contrastive_cfg, switches.contrastive)
            value = float(loss.value)
            if not math.isfinite(value):
                raise NumericError(f"non-finite loss at step {step + 1}")
            backward(loss)
            if train_cfg.clip_norm:
                clip_grad_norm(model.params, train_cfg.clip_norm)
            opt.step(lr)
            step += 1
            losses_epoch.append(value)
        ev = evaluation.evaluate(model, val_utts)
        rep = ev.report
        row = {
            "epoch": epoch,
            "train_loss": float(np.mean(losses_epoch)),
            "val_accuracy": rep.accuracy,
            "val_macro_f1": rep.macro_f1,
            "val_sensitivity": rep.sensitivity,
            "val_specificity": rep.specificity,
            "lr": lr,
            "per_dataset": {ds: evaluation.metrics(cm).macro_f1 for ds, cm in ev.per_dataset.items()},
        }
        history.append(row)
        if log:
            log(_history_line(row, datasets))
        if rep.macro_f1 > best_f1:
            best_f1, best_epoch, stale = rep.macro_f1, epoch, 0
            best = {k: p.value.copy() for k, p in model.params.items()}
        else:
            stale += 1
            if stale >= train_cfg.patience:
                break
    for k, v in best.items():
        model.params[k].value = v
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        save_checkpoint(
            os.path.join(out_dir, "checkpoint.bin"),
            model,
            extra={"best_epoch": best_epoch, "best_val_macro_f1": round(best_f1, 6)},
        )
        write_history(os.path.join(out_dir, "history.tsv"), history, datasets)
    return TrainResult(model, history, best_epoch, best_f1)


def check_disjoint(train_utts, val_utts):
    seen = {(u.dataset, u.speaker_id) for u in train_utts}
    clash = sorted({(u.dataset, u.speaker_id) for u in val_utts} & seen)
    if clash:
        raise ConfigurationError(f"train/validation share speakers, e.g. {clash[0]}")


# ---------------------------------------------------------------------------
# ablation


@dataclass
class AblationRow:
    removed: str  # "none" for the full model
    macro_f1: dict  # dataset -> macro-F1 on the evaluation split
    delta: dict  # dataset -> macro-F1 minus the full model's


def ablate(train_utts, val_utts, eval_utts, model_cfg, train_cfg, contrastive_cfg, components, base=None, log=None):
    """Full model plus one run per single removed component."""
    base = base or AblationSwitches()
    for c in components:
        if c not in AblationSwitches.COMPONENTS:
            raise UsageError(f"unknown component {c!r}; choose from {list(AblationSwitches.COMPONENTS)}")
    runs = [("none", base)] + [(c, base.without(c)) for c in components]
    rows, full = [], None
    for name, switches in runs:
        result = train(train_utts, val_utts, model_cfg, train_cfg, contrastive_cfg, switches)
        ev = evaluation.evaluate(result.model, eval_utts)
        f1 = {ds: evaluation.metrics(cm).macro_f1 for ds, cm in sorted(ev.per_dataset.items())}
        if full is None:
            full = f1
        row = AblationRow(name, f1, {ds: f1[ds] - full[ds] for ds in f1})
        rows.append(row)
        if log:
            log(format_ablation([row]))
    return rows


def format_ablation(rows):
    datasets = list(rows[0].macro_f1)
    lines = []
    for r in rows:
        cells = [f"{r.removed:<16}"]
        for ds in datasets:
            cells.append(f"{ds}: {r.macro_f1[ds]:6.2f} ({r.delta[ds]:+6.2f})")
        lines.append("  ".join(cells))
    return "\n".join(lines)


def write_ablation(path, rows):
    datasets = list(rows[0].macro_f1)
    with open(path, "w") as fh:
        fh.write("\t".join(["removed"] + [f"macro_f1.{d}" for d in datasets] + [f"delta.{d}" for d in datasets]) + "\n")
        for r in rows:
            fh.write(
                "\t".join(
                    [r.removed]
                    + [f"{r.macro_f1[d]:.4f}" for d in datasets]
                    + [f"{r.delta[d]:.4f}" for d in datasets]
                )
                + "\n"
            )


def with_seed(cfg, seed):
    return replace(cfg, seed=seed)
