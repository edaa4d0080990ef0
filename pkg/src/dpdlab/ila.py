"""Indirect-learning workflow and sweep reports.

A postinverse model is fitted on (normalized PA output -> PA input) pairs, then
deployed unchanged as the predistorter ahead of the amplifier.  Reports carry
the held-out postinverse NMSE from fitting, the end-to-end linearization NMSE
against a gain-scaled fresh waveform, and the no-predistortion baseline.

Sweeps emit CSV rows in a canonical order with fixed float formatting, so a
repeated run is byte-identical.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import modelfile
from .agmpnn import AgmpnnModel, count_params_actual, count_params_formula
from .exceptions import FormatError
from .mpm import BasisMatrix, MpmCoefficients, MpmSpec, build_basis, ls_fit
from .pa_sim import PaConfig, pa_forward
from .rvftdnn import RvftdnnModel, architecture_search, rvftdnn_param_count
from .signal import ComplexSequence, TapWindow, align, as_samples, generate_waveform, nmse_db
from .training import TrainConfig, segment_ranges, split_segments, train, validation_nmse_db

MAX_ALIGN_LAG = 8
EVAL_SEED_OFFSET = 1000

FAMILIES = ("mpm", "agmpnn", "rvftdnn")

DEFAULT_TAPS_LIST = (4, 5, 6, 7, 8, 9, 10)
DEFAULT_PARAM_TARGETS = (100, 200, 300, 400, 500, 600)
DEFAULT_MPM_K_GRID = (1, 2, 3, 4, 5, 6, 7, 8)
DEFAULT_NN_GRID = (8, 10, 12, 14, 16, 18, 20)

# A complexity-sweep cell is feasible when some configuration lands within
# this relative distance of the parameter target.
TARGET_TOLERANCE = 0.25

REPORT_HEADER = ("family,preset,taps,k_orders,m_experts,params_formula,"
                 "params_actual,seed,postinv_nmse_db,lin_nmse_db,no_dpd_nmse_db")


@dataclass(frozen=True)
class DpdModelSpec:
    """Which model family to fit, and its hyperparameters."""

    kind: str
    window: TapWindow
    k_orders: int = 3
    n_experts: int = 3
    n1: int = 16
    n2: int = 16
    ridge: Optional[float] = None
    warm_start: bool = True
    search_grid: Optional[tuple] = None    # rvftdnn: (n1, n2) candidates
    budget: tuple = (100, 600)

    def __post_init__(self) -> None:
        if self.kind not in FAMILIES:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {FAMILIES}")


@dataclass
class IlaReport:
    """One fit/deploy/evaluate cell; optional fields stay None when unused."""

    family: str
    preset: str
    taps: int
    seed: int
    k_orders: Optional[int] = None
    m_experts: Optional[int] = None
    params_formula: Optional[int] = None
    params_actual: Optional[int] = None
    postinv_nmse_db: Optional[float] = None
    lin_nmse_db: Optional[float] = None
    no_dpd_nmse_db: Optional[float] = None
    eval_seed: Optional[int] = None
    gain: Optional[complex] = None
    warm_start_nmse_db: Optional[float] = None
    n1: Optional[int] = None
    n2: Optional[int] = None
    improved: Optional[bool] = None

    @property
    def feasible(self) -> bool:
        return self.postinv_nmse_db is not None


@dataclass
class FitOutcome:
    """Result of fitting one postinverse on normalized data."""

    model: object
    postinv_nmse_db: float
    k_orders: Optional[int] = None
    n_experts: Optional[int] = None
    n1: Optional[int] = None
    n2: Optional[int] = None
    warm_start_nmse_db: Optional[float] = None
    gain: complex = 1.0 + 0j
    delay: int = 0


def _advance(samples: np.ndarray, delay: int) -> np.ndarray:
    """out[n] = samples[n + delay], zero-filled where out of range."""
    if delay == 0:
        return samples
    out = np.zeros_like(samples)
    if delay > 0:
        out[:-delay] = samples[delay:]
    else:
        out[-delay:] = samples[:delay]
    return out


def _fit_mpm_segments(psi_s: np.ndarray, phi_s: np.ndarray, spec: MpmSpec,
                      train_ranges, val_ranges, ridge) -> tuple[MpmCoefficients, float]:
    """Least-squares fit over the training segments, validation NMSE over the rest.

    Segments are treated as independent sequences (zero-filled tap edges), and
    each contributes only its interior samples, matching the training loop's
    edge policy so MPM and trained-model numbers are directly comparable.
    """
    window = spec.window
    lo = window.pre_taps
    blocks = []
    targets = []
    for a, b in train_ranges:
        hi = (b - a) - window.post_taps
        if hi <= lo:
            raise ValueError("segment too short for the tap window")
        seg = ComplexSequence(psi_s[a:b])
        blocks.append(build_basis(seg, spec, sample_range=np.arange(lo, hi)).data)
        targets.append(phi_s[a + lo:a + hi])
    basis = BasisMatrix(data=np.vstack(blocks), spec=spec)
    coeffs = ls_fit(basis, np.concatenate(targets), ridge=ridge)
    val_pairs = [(ComplexSequence(psi_s[a:b]), ComplexSequence(phi_s[a:b])) for a, b in val_ranges]
    val = validation_nmse_db(coeffs, val_pairs, window)
    return coeffs, val


def fit_model_on_data(psi, phi, spec: DpdModelSpec, cfg: TrainConfig, seed: int = 0) -> FitOutcome:
    """Fit one postinverse family on an already-normalized (psi, phi) pair."""
    psi_s = as_samples(psi)
    phi_s = as_samples(phi)
    if psi_s.size != phi_s.size:
        raise ValueError("input and target lengths differ")
    segments = segment_ranges(psi_s.size, cfg.segment_len)
    train_ranges, val_ranges = split_segments(segments)

    if spec.kind == "mpm":
        mpm_spec = MpmSpec(window=spec.window, k_orders=spec.k_orders)
        coeffs, val = _fit_mpm_segments(psi_s, phi_s, mpm_spec, train_ranges, val_ranges, spec.ridge)
        return FitOutcome(model=coeffs, postinv_nmse_db=val, k_orders=spec.k_orders)

    if spec.kind == "agmpnn":
        warm = None
        warm_val = None
        if spec.warm_start:
            mpm_spec = MpmSpec(window=spec.window, k_orders=spec.k_orders)
            warm, warm_val = _fit_mpm_segments(psi_s, phi_s, mpm_spec,
                                               train_ranges, val_ranges, spec.ridge)
        model = AgmpnnModel.init(spec.window, spec.k_orders, spec.n_experts,
                                 warm_start=warm, seed=seed,
                                 calibration=psi_s,
                                 perturb=0.0 if warm is not None else 1e-3)
        trained, history = train(model, psi_s, phi_s, cfg)
        return FitOutcome(model=trained, postinv_nmse_db=history.best_val_nmse_db(),
                          k_orders=spec.k_orders, n_experts=spec.n_experts,
                          warm_start_nmse_db=warm_val)

    # rvftdnn
    if spec.search_grid is not None:
        result = architecture_search(spec.window, psi_s, phi_s, cfg, grid=spec.search_grid,
                                     budget_lo=spec.budget[0], budget_hi=spec.budget[1],
                                     seed=seed)
        return FitOutcome(model=result.model, postinv_nmse_db=result.val_nmse_db,
                          n1=result.n1, n2=result.n2)
    model = RvftdnnModel.init(spec.window, spec.n1, spec.n2, seed=seed)
    trained, history = train(model, psi_s, phi_s, cfg)
    return FitOutcome(model=trained, postinv_nmse_db=history.best_val_nmse_db(),
                      n1=spec.n1, n2=spec.n2)


def fit_predistorter(pa: PaConfig, chi: ComplexSequence, spec: DpdModelSpec,
                     cfg: TrainConfig, seed: int = 0, n_iterations: int = 1) -> FitOutcome:
    """Indirect-learning fit: drive the PA, learn the postinverse of its output.

    The observed output (with seeded feedback noise) is delay-compensated and
    normalized by the scalar least-squares gain before fitting, so the model
    maps PA-output scale back to PA-input scale.  With n_iterations > 1 the
    freshly fitted model predistorts the next pass's drive; the first pass
    always drives the PA with chi directly.
    """
    if n_iterations < 1:
        raise ValueError("n_iterations must be at least 1")
    outcome = None
    for it in range(n_iterations):
        phi = chi if outcome is None else outcome.model.predict(chi)
        psi = pa_forward(pa, phi, noise_seed=seed + it)
        aligned = align(phi, psi, MAX_ALIGN_LAG)
        psi_norm = _advance(psi.samples, aligned.delay) / aligned.gain
        outcome = fit_model_on_data(psi_norm, as_samples(phi), spec, cfg, seed=seed)
        outcome.gain = aligned.gain
        outcome.delay = aligned.delay
    return outcome


def linearization_nmse_db(pa: PaConfig, dpd_model, chi: ComplexSequence) -> tuple[float, complex]:
    """Deploy the postinverse as predistorter; NMSE of PA output vs gain * chi."""
    drive = dpd_model.predict(chi) if dpd_model is not None else chi
    psi = pa_forward(pa, drive, noise_seed=None)
    aligned = align(chi, psi, MAX_ALIGN_LAG)
    psi_c = _advance(psi.samples, aligned.delay)
    return nmse_db(psi_c, aligned.gain * chi.samples), aligned.gain


def run_ila(pa: PaConfig, preset_label: str, spec: DpdModelSpec, seed: int,
            n_samples: int = 16384, bandwidth_fraction: float = 0.25,
            cfg: TrainConfig | None = None, eval_seed: int | None = None,
            n_iterations: int = 1) -> IlaReport:
    """Full cell: generate waveforms, fit, deploy, evaluate, assemble the report.

    The fitting and evaluation waveforms use distinct seeds (eval defaults to
    seed + 1000); feedback noise applies only during fitting.
    """
    cfg = cfg or TrainConfig()
    if eval_seed is None:
        eval_seed = seed + EVAL_SEED_OFFSET
    chi_fit = generate_waveform(seed, n_samples, bandwidth_fraction)
    chi_eval = generate_waveform(eval_seed, n_samples, bandwidth_fraction)
    outcome = fit_predistorter(pa, chi_fit, spec, cfg, seed=seed, n_iterations=n_iterations)
    lin, gain = linearization_nmse_db(pa, outcome.model, chi_eval)
    no_dpd, _ = linearization_nmse_db(pa, None, chi_eval)
    taps = spec.window.n_taps
    if spec.kind == "mpm":
        actual = 2 * taps * outcome.k_orders
        formula = actual
    elif spec.kind == "agmpnn":
        actual = count_params_actual(outcome.model)
        formula = count_params_formula(taps, spec.k_orders, spec.n_experts)
    else:
        actual = rvftdnn_param_count(taps, outcome.n1, outcome.n2)
        formula = actual
    return IlaReport(
        family=spec.kind, preset=preset_label, taps=taps, seed=seed,
        k_orders=outcome.k_orders, m_experts=outcome.n_experts,
        params_formula=formula, params_actual=actual,
        postinv_nmse_db=outcome.postinv_nmse_db, lin_nmse_db=lin,
        no_dpd_nmse_db=no_dpd, eval_seed=eval_seed, gain=outcome.gain,
        warm_start_nmse_db=outcome.warm_start_nmse_db,
        n1=outcome.n1, n2=outcome.n2,
        improved=bool(lin <= no_dpd),
    )


# ----------------------------------------------------------------------
# sweeps
# ----------------------------------------------------------------------


def _best_mpm_spec(pa, preset_label, window, seed, n_samples, bandwidth_fraction,
                   cfg, k_grid, budget_hi) -> IlaReport:
    """Fit the MPM at every order count within budget; keep the best validation."""
    best = None
    for k in k_grid:
        if 2 * window.n_taps * k > budget_hi:
            continue
        spec = DpdModelSpec(kind="mpm", window=window, k_orders=k)
        report = run_ila(pa, preset_label, spec, seed, n_samples, bandwidth_fraction, cfg)
        key = (report.postinv_nmse_db, 2 * window.n_taps * k, k)
        if best is None or key < best[0]:
            best = (key, report)
    if best is None:
        raise ValueError("no memory-polynomial order fits the parameter budget")
    return best[1]


def sweep_taps(pa: PaConfig, preset_label: str, taps_list=DEFAULT_TAPS_LIST,
               seeds=(1, 2, 3), families=FAMILIES, budget=(100, 600),
               n_samples: int = 16384, bandwidth_fraction: float = 0.25,
               cfg: TrainConfig | None = None, nn_grid=DEFAULT_NN_GRID,
               mpm_k_grid=DEFAULT_MPM_K_GRID) -> list[IlaReport]:
    """Tap-count sweep: AGMPNN fixed at (K=3, M=3), RVFTDNN architecture-searched
    within the budget, MPM at its best order within budget."""
    cfg = cfg or TrainConfig()
    rows = []
    for family in families:
        for taps in taps_list:
            window = TapWindow(pre_taps=taps - 1)
            for seed in seeds:
                if family == "mpm":
                    rows.append(_best_mpm_spec(pa, preset_label, window, seed, n_samples,
                                               bandwidth_fraction, cfg, mpm_k_grid, budget[1]))
                elif family == "agmpnn":
                    spec = DpdModelSpec(kind="agmpnn", window=window, k_orders=3, n_experts=3)
                    rows.append(run_ila(pa, preset_label, spec, seed, n_samples,
                                        bandwidth_fraction, cfg))
                else:
                    grid = tuple((a, b) for a in nn_grid for b in nn_grid)
                    feasible = [p for p in grid
                                if budget[0] <= rvftdnn_param_count(taps, *p) <= budget[1]]
                    if not feasible:
                        rows.append(IlaReport(family=family, preset=preset_label,
                                              taps=taps, seed=seed))
                        continue
                    spec = DpdModelSpec(kind="rvftdnn", window=window,
                                        search_grid=tuple(feasible), budget=budget)
                    rows.append(run_ila(pa, preset_label, spec, seed, n_samples,
                                        bandwidth_fraction, cfg))
    return rows


def _closest_agmpnn(taps: int, target: int, k_grid=(1, 2, 3, 4, 5, 6), m_grid=(1, 2, 3, 4, 5, 6, 7, 8)):
    best = None
    for k in k_grid:
        for m in m_grid:
            count = m * (2 * taps * k + 1 + 2 * taps)
            key = (abs(count - target), count, k, m)
            if best is None or key < best:
                best = key
    return best  # (distance, count, k, m)


def _closest_rvftdnn(taps: int, target: int, width_range=range(2, 25)):
    best = None
    for n1 in width_range:
        for n2 in width_range:
            count = rvftdnn_param_count(taps, n1, n2)
            key = (abs(count - target), count, n1, n2)
            if best is None or key < best:
                best = key
    return best  # (distance, count, n1, n2)


def _closest_mpm(taps: int, target: int, k_grid=DEFAULT_MPM_K_GRID):
    best = None
    for k in k_grid:
        count = 2 * taps * k
        key = (abs(count - target), count, k)
        if best is None or key < best:
            best = key
    return best  # (distance, count, k)


def sweep_complexity(pa_by_preset: dict, taps: int = 7,
                     param_targets=DEFAULT_PARAM_TARGETS, seeds=(1, 2, 3),
                     families=FAMILIES, n_samples: int = 16384,
                     bandwidth_fraction: float = 0.25,
                     cfg: TrainConfig | None = None,
                     mpm_k_grid=DEFAULT_MPM_K_GRID) -> list[IlaReport]:
    """Complexity sweep at fixed taps: per family, pick the configuration whose
    trainable parameter count comes closest to each target; a cell further than
    25% from its target is marked infeasible (blank metrics)."""
    cfg = cfg or TrainConfig()
    window = TapWindow(pre_taps=taps - 1)
    rows = []
    for family in families:
        for target in param_targets:
            for preset_label in sorted(pa_by_preset):
                pa = pa_by_preset[preset_label]
                for seed in seeds:
                    if family == "mpm":
                        dist, count, k = _closest_mpm(taps, target, mpm_k_grid)
                        if dist > TARGET_TOLERANCE * target:
                            rows.append(IlaReport(family=family, preset=preset_label,
                                                  taps=taps, seed=seed))
                            continue
                        spec = DpdModelSpec(kind="mpm", window=window, k_orders=k)
                    elif family == "agmpnn":
                        dist, count, k, m = _closest_agmpnn(taps, target)
                        if dist > TARGET_TOLERANCE * target:
                            rows.append(IlaReport(family=family, preset=preset_label,
                                                  taps=taps, seed=seed))
                            continue
                        spec = DpdModelSpec(kind="agmpnn", window=window, k_orders=k, n_experts=m)
                    else:
                        dist, count, n1, n2 = _closest_rvftdnn(taps, target)
                        if dist > TARGET_TOLERANCE * target:
                            rows.append(IlaReport(family=family, preset=preset_label,
                                                  taps=taps, seed=seed))
                            continue
                        spec = DpdModelSpec(kind="rvftdnn", window=window, n1=n1, n2=n2)
                    rows.append(run_ila(pa, preset_label, spec, seed, n_samples,
                                        bandwidth_fraction, cfg))
    return rows


# ----------------------------------------------------------------------
# report serialization
# ----------------------------------------------------------------------


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def reports_to_csv(rows) -> str:
    """Fixed-format CSV; identical inputs serialize byte-identically."""
    lines = [REPORT_HEADER]
    for r in rows:
        lines.append(",".join([
            r.family, r.preset, str(r.taps),
            _cell(r.k_orders), _cell(r.m_experts),
            _cell(r.params_formula), _cell(r.params_actual),
            str(r.seed),
            _cell(r.postinv_nmse_db), _cell(r.lin_nmse_db), _cell(r.no_dpd_nmse_db),
        ]))
    return "\n".join(lines) + "\n"


def load_model(path):
    """Load any model file, dispatching on its kind tag."""
    kind, _, _ = modelfile.read_model(path)
    loaders = {"mpm": MpmCoefficients.load, "agmpnn": AgmpnnModel.load,
               "rvftdnn": RvftdnnModel.load}
    if kind not in loaders:
        raise FormatError(f"{path}: unknown model kind {kind!r}")
    return loaders[kind](path)
