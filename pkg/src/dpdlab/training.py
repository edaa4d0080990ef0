"""Adam optimizer, segment-based training with early stopping, and a
finite-difference gradient checker.

Training operates on (input, target) sequence pairs cut into contiguous
equal-length segments.  Every fifth segment is held out for validation; the
rest are shuffled each epoch (seeded) and processed in accumulated batches.
Each segment is treated as an independent sequence, so its first pre_taps and
last post_taps samples are excluded from the loss.  The best-validation
parameters are restored at the end, and the pre-training state is recorded as
epoch 0, so a trained model can never end worse than it started on validation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import TrainingDivergedError
from .signal import ComplexSequence, NMSE_FLOOR_DB, as_samples

VAL_EVERY = 5


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 50
    segment_len: int = 1024
    max_epochs: int = 100
    patience: int = 5
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("betas must lie in [0, 1)")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.batch_size < 1 or self.segment_len < 1:
            raise ValueError("batch_size and segment_len must be at least 1")
        if self.max_epochs < 1 or self.patience < 1:
            raise ValueError("max_epochs and patience must be at least 1")


@dataclass
class AdamState:
    """First/second moment accumulators and the step counter."""

    first_moment: np.ndarray
    second_moment: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n_params: int) -> "AdamState":
        return cls(first_moment=np.zeros(n_params), second_moment=np.zeros(n_params))


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray,
              cfg: TrainConfig) -> tuple[AdamState, np.ndarray]:
    """One Adam update with bias-corrected moments; returns new state and params."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.first_moment.shape:
        raise ValueError("params, grads and state shapes must all match")
    step = state.step + 1
    m = cfg.beta1 * state.first_moment + (1.0 - cfg.beta1) * grads
    v = cfg.beta2 * state.second_moment + (1.0 - cfg.beta2) * grads * grads
    m_hat = m / (1.0 - cfg.beta1 ** step)
    v_hat = v / (1.0 - cfg.beta2 ** step)
    new_params = params - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
    return AdamState(first_moment=m, second_moment=v, step=step), new_params


@dataclass
class TrainHistory:
    """Per-epoch record; epoch 0 is the untouched starting model."""

    epochs: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    val_nmse_db: list = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0

    def best_val_nmse_db(self) -> float:
        return self.val_nmse_db[self.epochs.index(self.best_epoch)]

    def to_csv(self) -> str:
        lines = ["epoch,train_loss,val_nmse_db"]
        for epoch, loss, val in zip(self.epochs, self.train_loss, self.val_nmse_db):
            lines.append(f"{epoch},{loss:.12e},{val:.6f}")
        return "\n".join(lines) + "\n"


def segment_ranges(n_samples: int, segment_len: int) -> list[tuple[int, int]]:
    """Contiguous equal-length segments; a short tail is dropped."""
    if segment_len < 1:
        raise ValueError("segment_len must be at least 1")
    n_full = n_samples // segment_len
    return [(i * segment_len, (i + 1) * segment_len) for i in range(n_full)]


def split_segments(segments: list) -> tuple[list, list]:
    """Deterministic 80/20 split: every fifth segment goes to validation."""
    if len(segments) < 2:
        raise ValueError("need at least two segments (one training, one validation)")
    val_idx = {i for i in range(len(segments)) if i % VAL_EVERY == VAL_EVERY - 1}
    if not val_idx:
        val_idx = {len(segments) - 1}
    train = [segments[i] for i in range(len(segments)) if i not in val_idx]
    val = [segments[i] for i in sorted(val_idx)]
    return train, val


def _segment_pairs(psi: np.ndarray, phi: np.ndarray, ranges) -> list:
    return [(ComplexSequence(psi[a:b]), ComplexSequence(phi[a:b])) for a, b in ranges]


def validation_nmse_db(model, pairs, window) -> float:
    """NMSE over the concatenated valid regions of the given segment pairs."""
    lo = window.pre_taps
    num = 0.0
    den = 0.0
    for seg_psi, seg_phi in pairs:
        hi = len(seg_psi) - window.post_taps
        if hi <= lo:
            raise ValueError("segment too short for the tap window")
        pred = model.predict(seg_psi).samples[lo:hi]
        ref = seg_phi.samples[lo:hi]
        num += float(np.sum(np.abs(pred - ref) ** 2))
        den += float(np.sum(np.abs(ref) ** 2))
    if den == 0.0:
        raise ValueError("validation target has zero energy")
    if num == 0.0:
        return NMSE_FLOOR_DB
    return max(10.0 * float(np.log10(num / den)), NMSE_FLOOR_DB)


def _segment_loss(model, pair, loss_range) -> float:
    seg_psi, seg_phi = pair
    pred = model.predict(seg_psi).samples[loss_range]
    return float(np.mean(np.abs(pred - seg_phi.samples[loss_range]) ** 2))


def train(model, psi, phi, cfg: TrainConfig):
    """Fit `model` to map psi -> phi; returns (best model, TrainHistory).

    The model must expose param_vector / with_param_vector / loss_and_gradient
    / predict and a `window` attribute.  Fully deterministic for fixed
    (model, data, cfg).
    """
    psi_s = as_samples(psi)
    phi_s = as_samples(phi)
    if psi_s.size != phi_s.size:
        raise ValueError("input and target lengths differ")
    segments = segment_ranges(psi_s.size, cfg.segment_len)
    train_ranges, val_ranges = split_segments(segments)
    train_pairs = _segment_pairs(psi_s, phi_s, train_ranges)
    val_pairs = _segment_pairs(psi_s, phi_s, val_ranges)
    window = model.window
    lo, hi = window.pre_taps, cfg.segment_len - window.post_taps
    if hi <= lo:
        raise ValueError("segment_len too short for the tap window")
    loss_range = np.arange(lo, hi)

    rng = np.random.default_rng(cfg.seed)
    params = model.param_vector()
    state = AdamState.zeros(params.size)
    work = model

    history = TrainHistory()
    initial_loss = float(np.mean([_segment_loss(work, p, loss_range) for p in train_pairs]))
    best_val = validation_nmse_db(work, val_pairs, window)
    history.epochs.append(0)
    history.train_loss.append(initial_loss)
    history.val_nmse_db.append(best_val)
    best_params = params.copy()
    best_epoch = 0

    stopped = 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(train_pairs))
        batch_losses = []
        for start in range(0, order.size, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            grad_acc = np.zeros_like(params)
            batch_loss = 0.0
            for seg_i in batch:
                seg_psi, seg_phi = train_pairs[seg_i]
                loss, grad = work.loss_and_gradient(seg_psi, seg_phi, loss_range)
                grad_acc += grad
                batch_loss += loss
            grad_acc /= batch.size
            batch_loss /= batch.size
            if not np.isfinite(batch_loss):
                raise TrainingDivergedError(f"non-finite training loss at epoch {epoch}")
            state, params = adam_step(state, params, grad_acc, cfg)
            work = work.with_param_vector(params)
            batch_losses.append(batch_loss)
        val = validation_nmse_db(work, val_pairs, window)
        history.epochs.append(epoch)
        history.train_loss.append(float(np.mean(batch_losses)))
        history.val_nmse_db.append(val)
        stopped = epoch
        if val < best_val:
            best_val = val
            best_epoch = epoch
            best_params = params.copy()
        elif epoch - best_epoch >= cfg.patience:
            break
    history.best_epoch = best_epoch
    history.stopped_epoch = stopped
    return work.with_param_vector(best_params), history


def finite_diff_check(model, psi, phi, sample_range=None, step: float = 1e-6) -> float:
    """Worst relative error between analytic and central-difference gradients.

    The relative error divides by max(|analytic|, |numeric|, 1e-7).  Limited to
    models with at most 1000 parameters.
    """
    params = model.param_vector()
    if params.size > 1000:
        raise ValueError("finite-difference check is limited to 1000 parameters")
    _, analytic = model.loss_and_gradient(psi, phi, sample_range)
    worst = 0.0
    for i in range(params.size):
        bumped = params.copy()
        bumped[i] = params[i] + step
        loss_plus = model.with_param_vector(bumped).loss_and_gradient(psi, phi, sample_range)[0]
        bumped[i] = params[i] - step
        loss_minus = model.with_param_vector(bumped).loss_and_gradient(psi, phi, sample_range)[0]
        numeric = (loss_plus - loss_minus) / (2.0 * step)
        denom = max(abs(numeric), abs(analytic[i]), 1e-7)
        worst = max(worst, abs(numeric - analytic[i]) / denom)
    return worst
