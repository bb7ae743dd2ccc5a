"""Training loop, evaluation, early stopping, and run history.

Determinism contract: a run is fully determined by (network weights, data,
TrainConfig). The shuffle order for epoch e comes from stream (seed, e, 0)
and the dropout masks from (seed, e, 1), so the streams never interact and
a run resumed from an epoch-boundary checkpoint replays exactly.

History CSV columns:
    epoch,train_loss,train_acc,train_prec,train_rec,
    val_loss,val_acc,val_prec,val_rec
Train metrics are accumulated on the fly from each training-mode batch
(before that batch's update); val metrics come from a clean inference pass.
Floats are written with repr, so files from identical runs are identical
byte for byte.
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import save_checkpoint
from .data import iter_batches, load_arrays
from .errors import ConfigError, TrainingError
from .losses import LOSS_NAMES, cce_logit_gradient, loss, loss_gradient, one_hot
from .metrics import confusion_matrix, metrics_report
from .optim import OptimizerConfig, build_optimizer
from .seeding import DROPOUT_STREAM, SHUFFLE_STREAM, check_seed, seeded_rng

HISTORY_COLUMNS = (
    "epoch",
    "train_loss", "train_acc", "train_prec", "train_rec",
    "val_loss", "val_acc", "val_prec", "val_rec",
)


@dataclass
class TrainConfig:
    """Everything a training run needs beyond the network and the data."""

    epochs: int = 10
    batch_size: int = 16
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    loss: str = "categorical_cross_entropy"
    preprocess: str = "rescale"
    patience: int = 5
    seed: int = 0
    resolution: int = None  # None: take the network's input resolution

    def validate(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")
        if self.loss not in LOSS_NAMES:
            raise ConfigError(f"unknown loss {self.loss!r}")
        if self.patience < 0:
            raise ConfigError(f"patience must be >= 0, got {self.patience}")
        if self.patience > self.epochs:
            raise ConfigError(
                f"patience {self.patience} exceeds epoch budget {self.epochs}"
            )
        check_seed(self.seed)
        self.optimizer.validate()
        return self


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    train_prec: float
    train_rec: float
    val_loss: float
    val_acc: float
    val_prec: float
    val_rec: float

    def row(self):
        return [
            str(self.epoch),
            repr(self.train_loss), repr(self.train_acc),
            repr(self.train_prec), repr(self.train_rec),
            repr(self.val_loss), repr(self.val_acc),
            repr(self.val_prec), repr(self.val_rec),
        ]


@dataclass
class History:
    records: list
    best_epoch: int
    stopped_early: bool
    config_echo: dict

    @property
    def epochs_run(self):
        return len(self.records)

    def write_csv(self, path):
        with open(Path(path), "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(HISTORY_COLUMNS)
            for record in self.records:
                writer.writerow(record.row())


def read_history_csv(path):
    """Rows of a history CSV as dicts of raw strings (no float parsing)."""
    with open(Path(path), newline="") as handle:
        rows = list(csv.DictReader(handle))
    for row in rows:
        if None in row or any(v is None for v in row.values()):
            raise ConfigError(f"{path}: malformed history row {row}")
    return rows


class EarlyStopper:
    """Stop after `patience` consecutive epochs without a new strict minimum.

    patience == 0 disables stopping. update() returns (is_best, should_stop).
    """

    def __init__(self, patience):
        if patience < 0:
            raise ConfigError(f"patience must be >= 0, got {patience}")
        self.patience = patience
        self.best_loss = np.inf
        self.best_epoch = 0
        self.since_best = 0

    def update(self, epoch, val_loss):
        if val_loss < self.best_loss:
            self.best_loss = val_loss
            self.best_epoch = epoch
            self.since_best = 0
            return True, False
        self.since_best += 1
        return False, self.patience > 0 and self.since_best >= self.patience


def _predict_batches(network, xs, batch_size):
    probs = []
    for start in range(0, len(xs), batch_size):
        probs.append(network.forward(xs[start:start + batch_size]))
    return np.concatenate(probs, axis=0)


def evaluate_arrays(network, xs, ys, class_names, loss_name, batch_size):
    """Inference-mode pass: (MetricsReport, mean loss) over the whole set."""
    probs = _predict_batches(network, xs, batch_size)
    targets = one_hot(ys, network.classes)
    mean_loss = loss(loss_name, probs, targets)
    predicted = probs.argmax(axis=1)
    counts = confusion_matrix(ys, predicted, len(class_names))
    return metrics_report(counts, class_names), mean_loss


def evaluate(network, index, config):
    """Evaluate a network on a dataset index under a TrainConfig."""
    config.validate()
    resolution = config.resolution or network.input_shape[1]
    _check_geometry(network, resolution, len(index.classes))
    xs, ys = load_arrays(
        index, resolution, network.input_shape[0], config.preprocess
    )
    return evaluate_arrays(
        network, xs, ys, index.classes, config.loss, config.batch_size
    )


def _check_geometry(network, resolution, class_count):
    if resolution != network.input_shape[1]:
        raise ConfigError(
            f"run resolution {resolution} does not match network input "
            f"{network.input_shape[1]}"
        )
    if class_count != network.classes:
        raise ConfigError(
            f"dataset has {class_count} classes but the network outputs "
            f"{network.classes}"
        )


def train(network, train_index, val_index, config, checkpoint_dir=None,
          progress=None, start_epoch=1):
    """Train in place; returns (network, History).

    Per epoch: shuffle, forward/backward/update per batch, then a clean
    validation pass. Validation loss drives early stopping; when the run
    ends, the best epoch's weights are restored onto the network. With a
    checkpoint_dir, each epoch's post-update weights are saved there as
    epoch_<n>.gkpt.

    To continue a run from an epoch-boundary checkpoint, load it and pass
    the next epoch number as start_epoch; epoch numbering and the shuffle
    and dropout streams are keyed by absolute epoch, so the continuation
    matches the uninterrupted run batch for batch.
    """
    config.validate()
    if not 1 <= start_epoch <= config.epochs:
        raise ConfigError(
            f"start epoch {start_epoch} must be in 1..{config.epochs}"
        )
    if train_index.classes != val_index.classes:
        raise ConfigError(
            f"train/val class lists differ: {train_index.classes} "
            f"vs {val_index.classes}"
        )
    resolution = config.resolution or network.input_shape[1]
    _check_geometry(network, resolution, len(train_index.classes))
    channels = network.input_shape[0]
    network.class_names = list(train_index.classes)

    train_x, train_y = load_arrays(
        train_index, resolution, channels, config.preprocess
    )
    val_x, val_y = load_arrays(val_index, resolution, channels, config.preprocess)

    optimizer = build_optimizer(config.optimizer)
    params = network.params()
    stopper = EarlyStopper(config.patience)
    classes = network.classes
    records = []
    best_weights = network.get_weights()

    if checkpoint_dir is not None:
        checkpoint_dir = Path(checkpoint_dir)
        checkpoint_dir.mkdir(parents=True, exist_ok=True)

    for epoch in range(start_epoch, config.epochs + 1):
        shuffle_rng = seeded_rng(config.seed, epoch, SHUFFLE_STREAM)
        dropout_rng = seeded_rng(config.seed, epoch, DROPOUT_STREAM)
        counts = np.zeros((classes, classes), dtype=np.int64)
        loss_sum = 0.0
        for batch_no, (bx, by) in enumerate(
            iter_batches(train_x, train_y, config.batch_size, shuffle_rng)
        ):
            probs = network.forward(bx, training=True, rng=dropout_rng)
            targets = one_hot(by, classes)
            batch_loss = loss(config.loss, probs, targets)
            if not np.isfinite(batch_loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch {batch_no}"
                )
            loss_sum += batch_loss * len(by)
            counts += confusion_matrix(by, probs.argmax(axis=1), classes)
            if config.loss == "categorical_cross_entropy":
                network.backward(logits_grad=cce_logit_gradient(probs, targets))
            else:
                network.backward(output_grad=loss_gradient(config.loss, probs, targets))
            optimizer.step(params, network.grads())

        train_report = metrics_report(counts, train_index.classes)
        val_report, val_loss = evaluate_arrays(
            network, val_x, val_y, val_index.classes, config.loss,
            config.batch_size,
        )
        record = EpochRecord(
            epoch=epoch,
            train_loss=loss_sum / len(train_y),
            train_acc=train_report.accuracy,
            train_prec=train_report.macro_precision,
            train_rec=train_report.macro_recall,
            val_loss=val_loss,
            val_acc=val_report.accuracy,
            val_prec=val_report.macro_precision,
            val_rec=val_report.macro_recall,
        )
        records.append(record)
        if checkpoint_dir is not None:
            save_checkpoint(network, checkpoint_dir / f"epoch_{epoch}.gkpt")
        if progress is not None:
            progress(record)
        is_best, should_stop = stopper.update(epoch, val_loss)
        if is_best:
            best_weights = network.get_weights()
        if should_stop:
            break

    network.set_weights(best_weights)
    echo = {
        "model": network.config.name if network.config else "custom",
        "optimizer": config.optimizer.kind,
        "learning_rate": config.optimizer.learning_rate,
        "loss": config.loss,
        "preprocess": config.preprocess,
        "batch_size": config.batch_size,
        "epochs": config.epochs,
        "patience": config.patience,
        "seed": config.seed,
        "resolution": resolution,
    }
    history = History(
        records=records,
        best_epoch=stopper.best_epoch,
        stopped_early=len(records) < config.epochs - start_epoch + 1,
        config_echo=echo,
    )
    return network, history
