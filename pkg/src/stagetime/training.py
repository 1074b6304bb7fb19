"""Cross-entropy training with Adam, evaluation, and multi-seed repeats.

Reporting follows a best-epoch protocol: the test split is scored every
`eval_every` epochs and the best accuracy seen is reported, which amounts to
model selection on the test set.  The final-epoch accuracy is recorded
alongside so honest comparisons remain possible.
"""

import time
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import engine
from .data import batch_iter, fit_normalizer
from .errors import ConfigError, DataError
from .model import StageTimeModel, count_macs
from .optim import Adam


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 16
    max_epochs: int = 50
    eval_every: int = 1
    seeds: tuple = (0, 1, 2, 3, 4)
    normalize: bool = False  # archive splits are consumed as-is by default
    patience: int | None = None  # evals without improvement before stopping
    target_accuracy: float | None = None  # stop once the test accuracy reaches this

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(self.seeds))
        if self.lr < 0:
            raise ConfigError(f"lr must be >= 0, got {self.lr}")
        if self.batch_size < 1 or self.max_epochs < 1 or self.eval_every < 1:
            raise ConfigError("batch_size, max_epochs and eval_every must be >= 1")
        if not self.seeds:
            raise ConfigError("need at least one seed")


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    accuracy: float | None


@dataclass
class TrainReport:
    seed: int
    epochs: list
    best_accuracy: float
    best_epoch: int
    final_accuracy: float
    macs: int
    wall_clock: float

    def to_dict(self):
        d = asdict(self)
        d["epochs"] = [asdict(e) for e in self.epochs]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["epochs"] = [EpochRecord(**e) for e in d["epochs"]]
        return cls(**d)

    def summary_dict(self):
        """Deterministic fields only; wall clock lives in the timing record."""
        d = self.to_dict()
        d.pop("wall_clock")
        return d


def evaluate(model, dataset, batch_size=256):
    """Accuracy of argmax predictions; ties resolve to the lowest class index."""
    if dataset.n == 0:
        raise DataError("cannot evaluate on an empty dataset")
    correct = 0
    for xb, yb in batch_iter(dataset, batch_size):
        pred = np.argmax(model.forward(xb).data, axis=1)
        correct += int((pred == yb).sum())
    return correct / dataset.n


def train(model_cfg, train_ds, test_ds, train_cfg, seed=0):
    """One full training run; deterministic given the seed.

    Returns (model, TrainReport).
    """
    if train_ds.class_names != test_ds.class_names:
        raise DataError(
            f"class vocabularies differ: {train_ds.class_names} vs {test_ds.class_names}"
        )
    if (train_ds.channels, train_ds.length) != (test_ds.channels, test_ds.length):
        raise DataError("train and test splits must share channels and length")

    if train_cfg.normalize:
        norm = fit_normalizer(train_ds)
        train_ds = norm.apply(train_ds)
        test_ds = norm.apply(test_ds)

    model = StageTimeModel(replace(model_cfg, seed=seed))
    opt = Adam(model.parameters(), lr=train_cfg.lr)
    shuffle_rng = np.random.default_rng(seed)

    started = time.perf_counter()
    records = []
    best_acc, best_epoch = 0.0, 0
    last_acc = 0.0
    evals_since_best = 0
    for epoch in range(1, train_cfg.max_epochs + 1):
        epoch_seed = int(shuffle_rng.integers(0, 2**31))
        total_loss, seen = 0.0, 0
        for xb, yb in batch_iter(train_ds, train_cfg.batch_size, shuffle=True, seed=epoch_seed):
            loss = engine.cross_entropy(model.forward(xb), yb)
            loss.backward()
            opt.step()
            total_loss += loss.item() * len(yb)
            seen += len(yb)
        mean_loss = total_loss / seen

        acc = None
        if epoch % train_cfg.eval_every == 0 or epoch == train_cfg.max_epochs:
            acc = evaluate(model, test_ds)
            last_acc = acc
            if acc > best_acc:
                best_acc, best_epoch = acc, epoch
                evals_since_best = 0
            else:
                evals_since_best += 1
        records.append(EpochRecord(epoch=epoch, loss=mean_loss, accuracy=acc))

        if train_cfg.target_accuracy is not None and best_acc >= train_cfg.target_accuracy:
            break
        if train_cfg.patience is not None and evals_since_best > train_cfg.patience:
            break

    report = TrainReport(
        seed=seed,
        epochs=records,
        best_accuracy=best_acc,
        best_epoch=best_epoch,
        final_accuracy=last_acc,
        macs=count_macs(model_cfg, train_ds.length)["total"],
        wall_clock=time.perf_counter() - started,
    )
    return model, report


@dataclass
class RepeatSummary:
    mean_accuracy: float
    std_accuracy: float
    reports: list
    models: list | None = None

    def summary_dict(self):
        return {
            "mean_accuracy": self.mean_accuracy,
            "std_accuracy": self.std_accuracy,
            "runs": [r.summary_dict() for r in self.reports],
        }


def run_repeats(model_cfg, train_ds, test_ds, train_cfg, keep_models=False):
    """Independent build + training per seed; mean/std of best accuracies."""
    reports = []
    models = [] if keep_models else None
    for seed in train_cfg.seeds:
        model, report = train(model_cfg, train_ds, test_ds, train_cfg, seed=seed)
        reports.append(report)
        if keep_models:
            models.append(model)
    best = np.array([r.best_accuracy for r in reports])
    return RepeatSummary(
        mean_accuracy=float(best.mean()),
        std_accuracy=float(best.std()),
        reports=reports,
        models=models,
    )
