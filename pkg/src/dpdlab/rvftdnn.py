"""Real-valued time-delay dense network baseline.

The input of sample n is the interleaved real/imaginary parts of the tap
window (2T features), followed by two tanh hidden layers and a linear
two-unit output read back as a complex sample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import modelfile
from .signal import ComplexSequence, TapWindow, as_samples, delayed_matrix

MODEL_KIND = "rvftdnn"


def rvftdnn_param_count(n_taps: int, n1: int, n2: int) -> int:
    """Trainable parameter count: 2T*n1 + n1 + n1*n2 + n2 + 2*n2 + 2."""
    if n_taps < 1 or n1 < 1 or n2 < 1:
        raise ValueError("taps and layer widths must be at least 1")
    return 2 * n_taps * n1 + n1 + n1 * n2 + n2 + 2 * n2 + 2


@dataclass(frozen=True)
class RvftdnnGradients:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray

    def to_vector(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in
                               (self.w1, self.b1, self.w2, self.b2, self.w3, self.b3)])


@dataclass(frozen=True)
class RvftdnnModel:
    """Dense 2T -> n1 -> n2 -> 2 network with tanh hidden activations."""

    window: TapWindow
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray

    def __post_init__(self) -> None:
        t2 = 2 * self.window.n_taps
        w1 = np.array(self.w1, dtype=np.float64)
        b1 = np.array(self.b1, dtype=np.float64).reshape(-1)
        w2 = np.array(self.w2, dtype=np.float64)
        b2 = np.array(self.b2, dtype=np.float64).reshape(-1)
        w3 = np.array(self.w3, dtype=np.float64)
        b3 = np.array(self.b3, dtype=np.float64).reshape(-1)
        if w1.ndim != 2 or w1.shape[0] != t2:
            raise ValueError(f"w1 must be ({t2}, n1)")
        n1 = w1.shape[1]
        if b1.shape != (n1,) or w2.shape[0] != n1:
            raise ValueError("layer-1 shapes are inconsistent")
        n2 = w2.shape[1]
        if b2.shape != (n2,) or w3.shape != (n2, 2) or b3.shape != (2,):
            raise ValueError("layer-2/output shapes are inconsistent")
        for arr in (w1, b1, w2, b2, w3, b3):
            if not np.all(np.isfinite(arr)):
                raise ValueError("model parameters must be finite")
            arr.flags.writeable = False
        for name, arr in (("w1", w1), ("b1", b1), ("w2", w2),
                          ("b2", b2), ("w3", w3), ("b3", b3)):
            object.__setattr__(self, name, arr)

    @property
    def n1(self) -> int:
        return int(self.w1.shape[1])

    @property
    def n2(self) -> int:
        return int(self.w2.shape[1])

    def n_params(self) -> int:
        return rvftdnn_param_count(self.window.n_taps, self.n1, self.n2)

    @classmethod
    def init(cls, window: TapWindow, n1: int, n2: int, seed: int = 0) -> "RvftdnnModel":
        """Seeded init: zero biases, weights scaled by 1/sqrt(fan_in)."""
        if n1 < 1 or n2 < 1:
            raise ValueError("layer widths must be at least 1")
        rng = np.random.default_rng(seed)
        t2 = 2 * window.n_taps
        return cls(
            window=window,
            w1=rng.standard_normal((t2, n1)) / np.sqrt(t2),
            b1=np.zeros(n1),
            w2=rng.standard_normal((n1, n2)) / np.sqrt(n1),
            b2=np.zeros(n2),
            w3=rng.standard_normal((n2, 2)) / np.sqrt(n2),
            b3=np.zeros(2),
        )

    # ------------------------------------------------------------------
    # forward / backward
    # ------------------------------------------------------------------

    def _features(self, samples: np.ndarray) -> np.ndarray:
        """Interleaved re/im tap features, shape (N, 2T)."""
        delayed = delayed_matrix(samples, self.window)
        feats = np.empty((samples.size, 2 * self.window.n_taps))
        feats[:, 0::2] = delayed.real
        feats[:, 1::2] = delayed.imag
        return feats

    def predict(self, x) -> ComplexSequence:
        seq = x if isinstance(x, ComplexSequence) else ComplexSequence(as_samples(x))
        feats = self._features(seq.samples)
        h1 = np.tanh(feats @ self.w1 + self.b1)
        h2 = np.tanh(h1 @ self.w2 + self.b2)
        out = h2 @ self.w3 + self.b3
        return ComplexSequence(out[:, 0] + 1j * out[:, 1],
                               sample_rate_hint=seq.sample_rate_hint)

    def backward(self, x, target, sample_range=None) -> tuple[float, RvftdnnGradients]:
        """Mean |output - target|^2 over sample_range and its exact gradients."""
        psi = as_samples(x)
        phi = as_samples(target)
        if psi.size != phi.size:
            raise ValueError("input and target lengths differ")
        from .agmpnn import _default_range
        idx = _default_range(sample_range, psi.size, self.window)
        feats = self._features(psi)[idx]
        h1 = np.tanh(feats @ self.w1 + self.b1)
        h2 = np.tanh(h1 @ self.w2 + self.b2)
        out = h2 @ self.w3 + self.b3
        err = np.stack([out[:, 0] - phi[idx].real, out[:, 1] - phi[idx].imag], axis=1)
        count = idx.size
        loss = float(np.mean(err[:, 0] ** 2 + err[:, 1] ** 2))
        d_out = (2.0 / count) * err
        g_w3 = h2.T @ d_out
        g_b3 = d_out.sum(axis=0)
        d_h2 = (d_out @ self.w3.T) * (1.0 - h2 * h2)
        g_w2 = h1.T @ d_h2
        g_b2 = d_h2.sum(axis=0)
        d_h1 = (d_h2 @ self.w2.T) * (1.0 - h1 * h1)
        g_w1 = feats.T @ d_h1
        g_b1 = d_h1.sum(axis=0)
        return loss, RvftdnnGradients(w1=g_w1, b1=g_b1, w2=g_w2, b2=g_b2, w3=g_w3, b3=g_b3)

    # ------------------------------------------------------------------
    # flat parameter vector protocol
    # ------------------------------------------------------------------

    def param_vector(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in
                               (self.w1, self.b1, self.w2, self.b2, self.w3, self.b3)])

    def with_param_vector(self, vec: np.ndarray) -> "RvftdnnModel":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.n_params(),):
            raise ValueError(f"parameter vector must have {self.n_params()} entries")
        pieces = []
        pos = 0
        for arr in (self.w1, self.b1, self.w2, self.b2, self.w3, self.b3):
            pieces.append(vec[pos:pos + arr.size].reshape(arr.shape))
            pos += arr.size
        return RvftdnnModel(self.window, *pieces)

    def loss_and_gradient(self, x, target, sample_range=None) -> tuple[float, np.ndarray]:
        loss, grads = self.backward(x, target, sample_range)
        return loss, grads.to_vector()

    # ------------------------------------------------------------------
    # persistence
    # ------------------------------------------------------------------

    def save(self, path) -> None:
        modelfile.write_model(
            path,
            MODEL_KIND,
            scalars={
                "pre_taps": self.window.pre_taps,
                "post_taps": self.window.post_taps,
                "n1": self.n1,
                "n2": self.n2,
            },
            arrays={"w1": self.w1, "b1": self.b1, "w2": self.w2,
                    "b2": self.b2, "w3": self.w3, "b3": self.b3},
        )

    @classmethod
    def load(cls, path) -> "RvftdnnModel":
        kind, scalars, sections = modelfile.read_model(path)
        if kind != MODEL_KIND:
            raise modelfile.FormatError(f"{path}: expected kind {MODEL_KIND!r}, found {kind!r}")
        window = TapWindow(pre_taps=modelfile.header_int(scalars, "pre_taps", path),
                           post_taps=modelfile.header_int(scalars, "post_taps", path))
        n1 = modelfile.header_int(scalars, "n1", path)
        n2 = modelfile.header_int(scalars, "n2", path)
        t2 = 2 * window.n_taps
        return cls(
            window=window,
            w1=modelfile.section_real(sections, "w1", (t2, n1), path=path),
            b1=modelfile.section_real(sections, "b1", (n1,), path=path),
            w2=modelfile.section_real(sections, "w2", (n1, n2), path=path),
            b2=modelfile.section_real(sections, "b2", (n2,), path=path),
            w3=modelfile.section_real(sections, "w3", (n2, 2), path=path),
            b3=modelfile.section_real(sections, "b3", (2,), path=path),
        )


@dataclass(frozen=True)
class SearchResult:
    n1: int
    n2: int
    val_nmse_db: float
    param_count: int
    model: RvftdnnModel


def default_search_grid(lo: int = 8, hi: int = 20, step: int = 1):
    """All (n1, n2) pairs with both widths in [lo, hi]."""
    values = range(lo, hi + 1, step)
    return tuple((a, b) for a in values for b in values)


def architecture_search(window: TapWindow, psi, phi, cfg, grid=None,
                        budget_lo: int = 100, budget_hi: int = 600,
                        seed: int = 0) -> SearchResult:
    """Exhaustively train every grid pair within the parameter budget.

    Returns the pair with the best validation NMSE; ties break toward the
    smaller parameter count, then lexicographic (n1, n2).  Raises ValueError
    when no grid entry fits the budget.
    """
    from .training import train

    if grid is None:
        grid = default_search_grid()
    t_taps = window.n_taps
    feasible = [(n1, n2) for n1, n2 in grid
                if budget_lo <= rvftdnn_param_count(t_taps, n1, n2) <= budget_hi]
    if not feasible:
        raise ValueError(
            f"no (n1, n2) in the search grid fits the parameter budget [{budget_lo}, {budget_hi}]")
    best = None
    for n1, n2 in sorted(feasible):
        model = RvftdnnModel.init(window, n1, n2, seed=seed)
        trained, history = train(model, psi, phi, cfg)
        count = rvftdnn_param_count(t_taps, n1, n2)
        key = (history.val_nmse_db[history.epochs.index(history.best_epoch)], count, n1, n2)
        if best is None or key < best[0]:
            best = (key, SearchResult(n1=n1, n2=n2, val_nmse_db=key[0],
                                      param_count=count, model=trained))
    return best[1]
