"""Training, evaluation and the stratified cross-validation protocol."""

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import ops, stats
from .autograd import Tensor, no_grad
from .errors import StructuralError
from .metrics import macro_f1
from .network import build_network

DEFAULT_EPOCHS_COMPRESSED = 100
DEFAULT_EPOCHS_FULL = 120
PRECISIONS = ("float32", "float64")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = DEFAULT_EPOCHS_COMPRESSED
    batch_size: int = 16
    learning_rate: float = 0.01
    momentum: float = 0.9
    seed: int = 0  # batch order, dropout and augmentation
    precision: str = "float32"
    augment_hflip: bool = False
    bn_refresh: bool = True  # re-estimate BN statistics after the last epoch

    def __post_init__(self):
        if self.epochs < 1:
            raise StructuralError(f"epochs must be >= 1 (got {self.epochs})")
        if self.batch_size < 1:
            raise StructuralError(f"batch_size must be >= 1 (got {self.batch_size})")
        if self.learning_rate < 0:
            raise StructuralError("learning_rate must be >= 0")
        if self.precision not in PRECISIONS:
            raise StructuralError(f"precision must be one of {PRECISIONS}")

    @property
    def dtype(self):
        return np.dtype(self.precision)


@dataclass(frozen=True)
class TrainResult:
    """Outcome of one optimization run.

    A diverged run (non-finite loss) is marked failed with the offending
    epoch; the loss curve keeps the epochs that completed.
    """

    losses: tuple
    t_train_seconds: float
    failed_epoch: int | None = None

    @property
    def failed(self):
        return self.failed_epoch is not None


@dataclass(frozen=True)
class FoldReport:
    """One fold's scores and timings."""

    fold: int
    f1_train: float
    f1_valid: float
    t_train_seconds: float
    t_test_seconds: float
    final_loss: float
    failed_epoch: int | None = None
    losses: tuple = field(repr=False, default=())

    def to_json(self):
        doc = asdict(self)
        doc["losses"] = list(self.losses)
        return doc

    @classmethod
    def from_json(cls, doc):
        doc = dict(doc)
        doc["losses"] = tuple(doc.get("losses", ()))
        return cls(**doc)


@dataclass(frozen=True)
class RunReport:
    """One model's cross-validated result (a Table row).

    f1 fields are means over folds; t_*_seconds are sums over folds (the
    total cost of producing the estimate).
    """

    arch_id: str
    model_index: int
    assignment_seed: int | str | None
    f1_train: float
    f1_valid: float
    t_train_seconds: float
    t_test_seconds: float
    parameter_count: int
    serialized_bytes: int
    init_seed: int = 0
    epochs: int = 0
    failed: bool = False
    folds: tuple = field(default=())

    def __post_init__(self):
        for name in ("f1_train", "f1_valid"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise StructuralError(f"{name} must be in [0, 1] (got {v})")
        if self.t_train_seconds < 0 or self.t_test_seconds < 0:
            raise StructuralError("times must be >= 0")

    def to_json(self):
        doc = asdict(self)
        doc["folds"] = [f.to_json() for f in self.folds]
        return doc

    @classmethod
    def from_json(cls, doc):
        doc = dict(doc)
        doc["folds"] = tuple(FoldReport.from_json(f) for f in doc.get("folds", ()))
        return cls(**doc)


def _batches(order, batch_size):
    for start in range(0, len(order), batch_size):
        yield order[start : start + batch_size]


def predict(plan, images, batch_size=32):
    """Eval-mode class predictions for an NCHW array."""
    preds = []
    with no_grad():
        for start in range(0, len(images), batch_size):
            x = Tensor(images[start : start + batch_size])
            logits = plan(x, training=False)
            preds.append(np.argmax(logits.data, axis=1))
    return np.concatenate(preds) if preds else np.zeros(0, dtype=np.int64)


def refresh_batchnorm(plan, images, batch_size=32):
    """Re-estimate every BatchNorm's running statistics over `images`.

    EMA buffers lag the activation distribution when weights move fast in
    a short run, and the lag compounds across stacked layers until eval
    forward diverges from train forward.  This replaces them with the
    equal-weighted mean of fresh train-mode batch statistics (cumulative
    average via a per-batch momentum of 1/(i+1)).
    """
    layers = [blk.bn for blk in plan.blocks if blk.bn is not None]
    if not layers or len(images) == 0:
        return
    saved = [bn.momentum for bn in layers]
    rng = np.random.default_rng(0)  # feeds dropout, which sits after every BN
    try:
        with no_grad():
            for i, start in enumerate(range(0, len(images), batch_size)):
                for bn in layers:
                    bn.momentum = 1.0 / (i + 1)
                plan(Tensor(images[start : start + batch_size]),
                     training=True, rng=rng)
    finally:
        for bn, m in zip(layers, saved):
            bn.momentum = m


def train_model(plan, dataset, train_config, log=None):
    """Fit a plan in place with minibatch SGD on softmax cross-entropy.

    Batch order reshuffles every epoch from a seeded generator that also
    drives dropout and augmentation, so runs repeat exactly.  Wall time is
    measured around the whole loop, including the closing BatchNorm
    statistics refresh.  With learning_rate 0 the loop still measures
    forward/backward but parameters stay untouched.
    """
    if len(dataset) == 0:
        raise StructuralError("cannot train on an empty dataset")
    cfg = train_config
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    params = [p for _, p in plan.parameters()]
    velocities = None
    losses = []
    failed_epoch = None
    dtype = cfg.dtype
    started = time.perf_counter()
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(dataset))
        total, seen = 0.0, 0
        try:
            for batch in _batches(order, cfg.batch_size):
                x = dataset.images[batch].astype(dtype, copy=True)
                if cfg.augment_hflip:
                    flip = rng.random(len(batch)) < 0.5
                    x[flip] = x[flip, :, :, ::-1]
                logits = plan(Tensor(x), training=True, rng=rng)
                loss = ops.softmax_cross_entropy(logits, dataset.labels[batch])
                plan.zero_grad()
                loss.backward()
                if cfg.learning_rate > 0:
                    velocities = ops.sgd_step(
                        params, cfg.learning_rate, cfg.momentum, velocities
                    )
                total += float(loss.data) * len(batch)
                seen += len(batch)
        except ArithmeticError:
            failed_epoch = epoch
            break
        losses.append(total / seen)
        if log is not None:
            log(epoch, losses[-1])
    if cfg.bn_refresh and failed_epoch is None:
        refresh_batchnorm(
            plan, dataset.images.astype(dtype, copy=False), cfg.batch_size
        )
    seconds = time.perf_counter() - started
    return TrainResult(
        losses=tuple(losses), t_train_seconds=seconds, failed_epoch=failed_epoch
    )


def evaluate_model(plan, dataset, batch_size=32):
    """Timed eval-mode pass: (predictions, macro F1, wall seconds)."""
    if len(dataset) == 0:
        raise StructuralError("cannot evaluate an empty dataset")
    started = time.perf_counter()
    preds = predict(plan, dataset.images, batch_size)
    seconds = time.perf_counter() - started
    f1 = macro_f1(dataset.labels, preds, num_classes=dataset.num_classes)
    return preds, f1, seconds


def run_fold(plan, train_set, valid_set, train_config, fold=0, log=None):
    """Train on one split and score both sides.

    t_train_seconds covers optimization only; t_test_seconds covers the
    validation prediction pass; the train-set scoring pass is untimed.
    """
    result = train_model(plan, train_set, train_config, log=log)
    _, f1_valid, t_test = evaluate_model(plan, valid_set, train_config.batch_size)
    _, f1_train, _ = evaluate_model(plan, train_set, train_config.batch_size)
    final_loss = result.losses[-1] if result.losses else float("nan")
    return FoldReport(
        fold=fold,
        f1_train=f1_train,
        f1_valid=f1_valid,
        t_train_seconds=result.t_train_seconds,
        t_test_seconds=t_test,
        final_loss=final_loss,
        failed_epoch=result.failed_epoch,
        losses=result.losses,
    )


def cross_validate(arch, assignment, dataset, fold_plan, train_config,
                   arch_id=None, model_index=0, init_seed=0, log=None,
                   checkpoint_path=None):
    """Cross-validate one (arch, assignment) model over a fold plan.

    Fold f holds fold_plan's fold f out for validation and trains a freshly
    initialized network seeded by SeedSequence(init_seed, spawn_key=(f,)).
    Returns the model-level RunReport with the per-fold breakdown attached.
    When checkpoint_path is given, the last fold's trained weights are
    serialized there.
    """
    if len(fold_plan) != len(dataset):
        raise StructuralError(
            f"fold plan covers {len(fold_plan)} samples, dataset has {len(dataset)}"
        )
    if arch_id is None:
        arch_id = f"k{arch.k}m{arch.m}n{arch.n}"
    dtype = train_config.dtype
    fold_reports = []
    plan = None
    for fold, (train_idx, valid_idx) in enumerate(fold_plan.splits()):
        seed_seq = np.random.SeedSequence(init_seed, spawn_key=(fold,))
        plan = build_network(arch, assignment, seed_seq, dtype=dtype)
        fold_log = None
        if log is not None:
            fold_log = lambda epoch, loss, _f=fold: log(_f, epoch, loss)
        fold_reports.append(
            run_fold(
                plan,
                dataset.subset(train_idx),
                dataset.subset(valid_idx),
                train_config,
                fold=fold,
                log=fold_log,
            )
        )
    model_stats = stats.arch_stats(plan)
    if checkpoint_path is not None:
        from .checkpoint import serialize_model

        serialize_model(plan, checkpoint_path)
    return RunReport(
        arch_id=arch_id,
        model_index=model_index,
        assignment_seed=assignment.seed,
        f1_train=float(np.mean([f.f1_train for f in fold_reports])),
        f1_valid=float(np.mean([f.f1_valid for f in fold_reports])),
        t_train_seconds=float(sum(f.t_train_seconds for f in fold_reports)),
        t_test_seconds=float(sum(f.t_test_seconds for f in fold_reports)),
        parameter_count=model_stats.parameter_count,
        serialized_bytes=model_stats.serialized_bytes,
        init_seed=init_seed,
        epochs=train_config.epochs,
        failed=any(f.failed_epoch is not None for f in fold_reports),
        folds=tuple(fold_reports),
    )


NUMERIC_FIELDS = (
    "f1_train", "f1_valid", "t_train_seconds", "t_test_seconds",
    "parameter_count", "serialized_bytes",
)


def aggregate_reports(reports):
    """One architecture group -> its best row and its mean row.

    Best is the highest f1_valid (ties go to the lower model_index); mean
    averages each numeric field arithmetically.
    """
    reports = list(reports)
    if not reports:
        raise StructuralError("no reports to aggregate")
    best = min(reports, key=lambda r: (-r.f1_valid, r.model_index))
    mean = {
        name: float(np.mean([getattr(r, name) for r in reports]))
        for name in NUMERIC_FIELDS
    }
    mean["models"] = len(reports)
    return {"best": best, "mean": mean}
