"""Group-wise incremental training.

Step i trains exactly two things: the conv parameters of group i and the
fully connected columns for all active groups, the latter at a learning
rate decayed per increment. Groups below i stay frozen (their tensors are
never touched by an update, so they remain bit-identical), groups above i
stay all-zero. Because frozen groups cannot change within a step, their
feature vectors are computed once per step and reused for every epoch.

Seed selection follows two regimes: steps 1-2 keep the epoch snapshot with
the highest validation accuracy; steps 3+ keep the earliest snapshot that
improves on the previous width's accuracy by a target margin, re-running
the step with a fresh initialization (from the step's entry state) until
the margin is met or the attempt cap is reached, in which case the best
candidate is kept and a warning recorded.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .checkpoint import save_checkpoint
from .data import DataBundle, Dataset
from .errors import ConfigError, InputError, StateError
from .layers import cross_entropy, fc_forward, fc_backward, softmax
from .model import (GroupModel, GroupNetArch, build_model, clone_model,
                    forward, group_backward, group_digest, group_features)
from .optim import GradBuffer, sgd_step

# RNG stream tags: every random draw comes from
# default_rng([plan.rng_seed, stream, ...context ints]) so that any single
# draw is reproducible in isolation
_STREAM_INIT = 1
_STREAM_SHUFFLE = 2


@dataclass
class TrainPlan:
    epochs_per_step: int = 10
    batch_size: int = 32
    base_lr: float = 0.01
    momentum: float = 0.9
    fc_lr_decay: float = 0.1
    target_improvement: float = 1.0   # validation-accuracy percentage points
    max_repeats: int = 3              # total attempts per step, including the first
    rng_seed: int = 0
    lr_step_epochs: int = 0           # 0 disables the epoch step decay
    lr_gamma: float = 1.0

    def __post_init__(self):
        if self.epochs_per_step < 1:
            raise ConfigError(f"epochs_per_step must be >= 1, got {self.epochs_per_step}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.base_lr <= 0:
            raise ConfigError(f"base_lr must be > 0, got {self.base_lr}")
        if not 0 <= self.momentum < 1:
            raise ConfigError(f"momentum must be in [0,1), got {self.momentum}")
        if not 0 < self.fc_lr_decay <= 1:
            raise ConfigError(f"fc_lr_decay must be in (0,1], got {self.fc_lr_decay}")
        if self.target_improvement < 0:
            raise ConfigError(f"target_improvement must be >= 0, got {self.target_improvement}")
        if self.max_repeats < 1:
            raise ConfigError(f"max_repeats must be >= 1, got {self.max_repeats}")
        if self.lr_step_epochs < 0:
            raise ConfigError(f"lr_step_epochs must be >= 0, got {self.lr_step_epochs}")
        if not 0 < self.lr_gamma <= 1:
            raise ConfigError(f"lr_gamma must be in (0,1], got {self.lr_gamma}")

    def conv_lr(self, epoch: int) -> float:
        if self.lr_step_epochs:
            return self.base_lr * self.lr_gamma ** ((epoch - 1) // self.lr_step_epochs)
        return self.base_lr

    def fc_lr(self, step: int, epoch: int = 1) -> float:
        return self.conv_lr(epoch) * self.fc_lr_decay ** (step - 1)


@dataclass
class EpochRecord:
    attempt: int
    epoch: int
    val_accuracy: float


@dataclass
class Candidate:
    """One per-epoch snapshot; the pool select_seed picks from."""
    attempt: int
    epoch: int
    val_accuracy: float
    state: GroupModel


@dataclass
class StepReport:
    step: int
    records: list[EpochRecord]
    chosen_attempt: int
    chosen_epoch: int
    chosen_accuracy: float
    baseline_accuracy: float | None
    achieved_improvement: float | None
    repeats_used: int
    conv_lr: float
    fc_lr: float
    warning: str | None
    frozen_digests_before: dict[int, str] = field(default_factory=dict)
    frozen_digests_after: dict[int, str] = field(default_factory=dict)


# -------------------------------------------------------- initialization


def _glorot(rng, shape, fan_in: int, fan_out: int) -> np.ndarray:
    lim = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, shape).astype(np.float32)


def init_group(model: GroupModel, step: int, attempt: int, seed: int):
    """Randomly initialize the conv tensors of group `step-1` and its FC
    column block; biases start at zero. Each tensor draws from its own
    seeded stream so init is reproducible per (seed, step, attempt)."""
    g = step - 1
    convs = model.arch.conv_layers()
    for ti, ld in enumerate(convs):
        rng = np.random.default_rng([seed, _STREAM_INIT, step, attempt, ti])
        spec = ld.spec
        fan_in = spec.in_channels * spec.kernel ** 2
        fan_out = spec.out_channels * spec.kernel ** 2
        model.conv_w[g][ti] = _glorot(rng, model.conv_w[g][ti].shape, fan_in, fan_out)
        model.conv_b[g][ti] = np.zeros_like(model.conv_b[g][ti])
    fd = model.arch.feature_dim
    rng = np.random.default_rng([seed, _STREAM_INIT, step, attempt, len(convs)])
    model.fc_w[:, g * fd:(g + 1) * fd] = _glorot(
        rng, (model.arch.num_classes, fd), fd, model.arch.num_classes)
    model.trained_groups = step


def restore_model(dst: GroupModel, src: GroupModel):
    """Copy all parameters and state of src into dst in place."""
    for g in range(dst.arch.num_groups):
        for ci in range(len(dst.arch.conv_layers())):
            dst.conv_w[g][ci][...] = src.conv_w[g][ci]
            dst.conv_b[g][ci][...] = src.conv_b[g][ci]
    dst.fc_w[...] = src.fc_w
    dst.fc_b[...] = src.fc_b
    dst.trained_groups = src.trained_groups
    dst.channel_mean = None if src.channel_mean is None else src.channel_mean.copy()


# ------------------------------------------------------- feature caching


def frozen_features(model: GroupModel, dataset: Dataset, num_groups: int) -> np.ndarray:
    """Concatenated features of groups 0..num_groups-1 for every image.
    Valid for a whole training step because those groups are frozen."""
    fd = model.arch.feature_dim
    out = np.empty((len(dataset), num_groups * fd), np.float32)
    for i in range(len(dataset)):
        for g in range(num_groups):
            out[i, g * fd:(g + 1) * fd] = group_features(model, dataset.images[i], g)
    return out


def _val_accuracy(model, dataset: Dataset, ff_val, g: int, off: int,
                  fcw: np.ndarray, feat: np.ndarray) -> float:
    correct = 0
    for i in range(len(dataset)):
        if off:
            feat[:off] = ff_val[i]
        feat[off:] = group_features(model, dataset.images[i], g)
        logits, _ = fc_forward(feat, fcw, model.fc_b)
        probs = softmax(logits)
        if int(np.argmax(probs)) == int(dataset.labels[i]):
            correct += 1
    return correct / len(dataset)


# --------------------------------------------------------- the increment


def train_increment(model: GroupModel, step: int, data: DataBundle,
                    plan: TrainPlan, attempt: int = 1,
                    frozen: tuple[np.ndarray, np.ndarray] | None = None,
                    checkpoint_dir=None):
    """Run one attempt of training step `step` in place. Returns
    (candidates, records): one snapshot and one accuracy record per epoch.
    Seed selection among the candidates is the caller's job."""
    arch = model.arch
    if not 1 <= step <= arch.num_groups:
        raise ConfigError(f"step {step} outside 1..{arch.num_groups}")
    if model.trained_groups != step - 1:
        raise StateError(f"step {step} requires trained_groups == {step - 1}, "
                         f"model has {model.trained_groups}")
    if len(data.train) == 0 or len(data.val) == 0:
        raise InputError("training requires nonempty train and validation splits")

    g = step - 1
    fd = arch.feature_dim
    off = g * fd
    if frozen is None and g > 0:
        frozen = (frozen_features(model, data.train, g),
                  frozen_features(model, data.val, g))
    ff_train, ff_val = frozen if frozen is not None else (None, None)

    init_group(model, step, attempt, plan.rng_seed)

    convs = arch.conv_layers()
    conv_bufs = [(GradBuffer(model.conv_w[g][ci]), GradBuffer(model.conv_b[g][ci]))
                 for ci in range(len(convs))]
    fc_view = model.fc_w[:, :step * fd]
    fc_buf = GradBuffer(fc_view)
    fcb_buf = GradBuffer(model.fc_b)
    fcw_work = np.ascontiguousarray(fc_view)

    feat = np.empty(step * fd, np.float32)
    ntr = len(data.train)
    candidates: list[Candidate] = []
    records: list[EpochRecord] = []

    for epoch in range(1, plan.epochs_per_step + 1):
        conv_lr = plan.conv_lr(epoch)
        fc_lr = plan.fc_lr(step, epoch)
        perm = np.random.default_rng(
            [plan.rng_seed, _STREAM_SHUFFLE, step, attempt, epoch]).permutation(ntr)
        for start in range(0, ntr, plan.batch_size):
            batch = perm[start:start + plan.batch_size]
            for wbuf, bbuf in conv_bufs:
                wbuf.zero_grad()
                bbuf.zero_grad()
            fc_buf.zero_grad()
            fcb_buf.zero_grad()
            for idx in batch:
                x = data.train.images[idx]
                feats_g, ctxs = group_features(model, x, g, collect_ctx=True)
                if off:
                    feat[:off] = ff_train[idx]
                feat[off:] = feats_g
                logits, fctx = fc_forward(feat, fcw_work, model.fc_b)
                probs = softmax(logits)
                _, dlogits = cross_entropy(probs, int(data.train.labels[idx]))
                dfeat, dwfc, dbfc = fc_backward(fctx, dlogits)
                fc_buf.add_grad(dwfc)
                fcb_buf.add_grad(dbfc)
                for (wbuf, bbuf), (dw, db) in zip(conv_bufs, group_backward(model, ctxs, dfeat[off:])):
                    wbuf.add_grad(dw)
                    bbuf.add_grad(db)
            inv = np.float32(1.0 / len(batch))
            for wbuf, bbuf in conv_bufs:
                wbuf.grad *= inv
                bbuf.grad *= inv
                sgd_step(wbuf, conv_lr, plan.momentum)
                sgd_step(bbuf, conv_lr, plan.momentum)
            fc_buf.grad *= inv
            fcb_buf.grad *= inv
            sgd_step(fc_buf, fc_lr, plan.momentum)
            sgd_step(fcb_buf, fc_lr, plan.momentum)
            fcw_work = np.ascontiguousarray(fc_view)
        acc = _val_accuracy(model, data.val, ff_val, g, off, fcw_work, feat)
        candidates.append(Candidate(attempt, epoch, acc, clone_model(model)))
        records.append(EpochRecord(attempt, epoch, acc))
        if checkpoint_dir is not None and arch.is_standard:
            save_checkpoint(model, f"{checkpoint_dir}/step{step}.attempt{attempt}.epoch{epoch}.gdnn")
    return candidates, records


def select_seed(candidates: list[Candidate], criterion: str,
                baseline: float | None = None,
                min_improvement: float | None = None) -> Candidate | None:
    """Pick the seed for the next increment. "max_accuracy" returns the
    highest-accuracy candidate (ties to the earliest); "improvement"
    returns the earliest candidate reaching baseline + min_improvement,
    or None to signal that the step should repeat."""
    if not candidates:
        raise InputError("select_seed needs at least one candidate")
    if criterion == "max_accuracy":
        best = candidates[0]
        for c in candidates[1:]:
            if c.val_accuracy > best.val_accuracy:
                best = c
        return best
    if criterion == "improvement":
        if baseline is None or min_improvement is None:
            raise ConfigError("improvement criterion needs baseline and min_improvement")
        threshold = baseline + min_improvement
        for c in candidates:
            if c.val_accuracy >= threshold:
                return c
        return None
    raise ConfigError(f"unknown selection criterion {criterion!r}")


def run_full_training(arch: GroupNetArch, data: DataBundle, plan: TrainPlan,
                      checkpoint_dir=None):
    """Train all groups in sequence. Returns (model, step reports)."""
    model = build_model(arch, plan.rng_seed)
    reports: list[StepReport] = []
    baseline: float | None = None
    for step in range(1, arch.num_groups + 1):
        g = step - 1
        entry = clone_model(model)
        digests_before = {j: group_digest(model, j) for j in range(g)}
        frozen = None
        if g > 0:
            frozen = (frozen_features(model, data.train, g),
                      frozen_features(model, data.val, g))
        all_candidates: list[Candidate] = []
        all_records: list[EpochRecord] = []
        chosen = None
        warning = None
        attempts = 0
        for attempt in range(1, plan.max_repeats + 1):
            attempts = attempt
            if attempt > 1:
                restore_model(model, entry)
            cands, recs = train_increment(model, step, data, plan, attempt,
                                          frozen=frozen, checkpoint_dir=checkpoint_dir)
            all_candidates.extend(cands)
            all_records.extend(recs)
            if step <= 2 or baseline is None:
                chosen = select_seed(cands, "max_accuracy")
            else:
                chosen = select_seed(cands, "improvement", baseline=baseline,
                                     min_improvement=plan.target_improvement / 100.0)
            if chosen is not None:
                break
        if chosen is None:
            chosen = select_seed(all_candidates, "max_accuracy")
            warning = (f"step {step}: improvement target {plan.target_improvement:g}pp "
                       f"not met after {attempts} attempts; keeping best candidate")
        restore_model(model, chosen.state)
        digests_after = {j: group_digest(model, j) for j in range(g)}
        reports.append(StepReport(
            step=step, records=all_records,
            chosen_attempt=chosen.attempt, chosen_epoch=chosen.epoch,
            chosen_accuracy=chosen.val_accuracy,
            baseline_accuracy=baseline,
            achieved_improvement=None if baseline is None else chosen.val_accuracy - baseline,
            repeats_used=attempts,
            conv_lr=plan.base_lr, fc_lr=plan.fc_lr(step),
            warning=warning,
            frozen_digests_before=digests_before,
            frozen_digests_after=digests_after))
        baseline = chosen.val_accuracy
    return model, reports


# ------------------------------------------------------------ evaluation


def evaluate_accuracy(model: GroupModel, k: int, dataset: Dataset):
    """Top-1 accuracy and per-class accuracies at width k. Prediction is
    argmax over probs; argmax ties resolve to the lowest class index.
    Classes absent from the dataset report 0.0."""
    if len(dataset) == 0:
        raise InputError("evaluate_accuracy needs a nonempty dataset")
    hits = np.zeros(dataset.num_classes, np.int64)
    totals = np.zeros(dataset.num_classes, np.int64)
    for i in range(len(dataset)):
        label = int(dataset.labels[i])
        _, probs = forward(model, dataset.images[i], k)
        totals[label] += 1
        if int(np.argmax(probs)) == label:
            hits[label] += 1
    per_class = np.where(totals > 0, hits / np.maximum(totals, 1), 0.0)
    return float(hits.sum() / len(dataset)), per_class


@dataclass
class ConfidenceResult:
    total: float
    normalized: float
    reference_total: float


def evaluate_confidence(model: GroupModel, k: int, dataset: Dataset,
                        correct_only: bool = False) -> ConfidenceResult:
    """Sum of the true-class softmax probability over the dataset at width
    k, plus that total normalized by the same sum at the model's full
    trained width. With correct_only, misclassified images contribute 0.
    Totals accumulate in ascending sample order in float64."""
    if len(dataset) == 0:
        raise InputError("evaluate_confidence needs a nonempty dataset")

    def total_at(width: int) -> float:
        s = 0.0
        for i in range(len(dataset)):
            label = int(dataset.labels[i])
            _, probs = forward(model, dataset.images[i], width)
            if correct_only and int(np.argmax(probs)) != label:
                continue
            s += float(probs[label])
        return s

    total = total_at(k)
    ref_width = model.trained_groups
    reference = total if k == ref_width else total_at(ref_width)
    normalized = total / reference if reference > 0 else float("nan")
    return ConfidenceResult(total, normalized, reference)
