"""Ground-truth simulated power amplifier.

Memory polynomial with a drive-level scale, an optional smooth amplitude
limiter ahead of the polynomial, and optional additive feedback-receiver noise
on the observed output.  The limiter deliberately places the exact inverse
outside the memory-polynomial model class.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .signal import ComplexSequence, TapWindow, as_samples, delayed_matrix

# Frozen preset constants: coefficient decay across delay (rho) and order
# (sigma), phase twist per (l + 2k), soft-saturation ceiling, feedback SNR.
PRESET_RHO = 0.2
PRESET_SIGMA = -0.12
PRESET_L_PA = 3
PRESET_K_PA = 4
PRESET_PHASE_STEP = 0.4
PRESET_A_SAT = 1.0
PRESET_FEEDBACK_SNR_DB = 40.0
PRESET_DRIVE_DB = {"low": -9.0, "high": -3.0}


@dataclass(frozen=True)
class PaConfig:
    """Amplifier ground truth; coeffs is complex, indexed (delay l, order k)."""

    coeffs: np.ndarray
    drive_db: float = 0.0
    smooth_limit: Optional[float] = None
    feedback_snr_db: Optional[float] = None

    def __post_init__(self) -> None:
        coeffs = np.array(self.coeffs, dtype=np.complex128)
        if coeffs.ndim != 2 or coeffs.size < 1:
            raise ValueError("coeffs must be a 2-D (delay, order) array")
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("coeffs must be finite")
        if coeffs[0, 0] == 0:
            raise ValueError("coeffs[0, 0] must be nonzero (dominant linear term)")
        if self.smooth_limit is not None and not float(self.smooth_limit) > 0.0:
            raise ValueError("smooth_limit must be positive when set")
        if self.feedback_snr_db is not None and not float(self.feedback_snr_db) > 0.0:
            raise ValueError("feedback_snr_db must be positive when set")
        coeffs.flags.writeable = False
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def memory_depth(self) -> int:
        return int(self.coeffs.shape[0]) - 1

    @property
    def n_orders(self) -> int:
        return int(self.coeffs.shape[1])


def coeffs_from_rule(rho: float, sigma: float, l_pa: int, k_pa: int,
                     phase_step: float = PRESET_PHASE_STEP) -> np.ndarray:
    """coeffs[l, k] = rho^l * sigma^k * exp(i*phase_step*(l + 2k)), with [0, 0] = 1."""
    if l_pa < 0 or k_pa < 1:
        raise ValueError("need l_pa >= 0 and k_pa >= 1")
    l_idx = np.arange(l_pa + 1)[:, None].astype(float)
    k_idx = np.arange(k_pa)[None, :].astype(float)
    coeffs = (rho ** l_idx) * (sigma ** k_idx) * np.exp(1j * phase_step * (l_idx + 2.0 * k_idx))
    coeffs[0, 0] = 1.0
    return coeffs


def preset(level: str) -> PaConfig:
    """Frozen 'low' / 'high' distortion configurations (drive -9 / -3 dB)."""
    if level not in PRESET_DRIVE_DB:
        raise ValueError(f"unknown preset {level!r}; expected 'low' or 'high'")
    return PaConfig(
        coeffs=coeffs_from_rule(PRESET_RHO, PRESET_SIGMA, PRESET_L_PA, PRESET_K_PA),
        drive_db=PRESET_DRIVE_DB[level],
        smooth_limit=PRESET_A_SAT,
        feedback_snr_db=PRESET_FEEDBACK_SNR_DB,
    )


def pa_forward(cfg: PaConfig, x, noise_seed: Optional[int] = None) -> ComplexSequence:
    """Run the amplifier: drive scale, soft limiter, memory polynomial, noise.

    The smooth limiter is u -> u / (1 + (|u|/A)^6)^(1/6).  Feedback noise is
    complex AWGN at cfg.feedback_snr_db relative to the output power, applied
    only when both the config enables it and a noise_seed is given; it models
    the observation receiver, not the amplifier itself.
    """
    seq = x if isinstance(x, ComplexSequence) else ComplexSequence(as_samples(x))
    u = seq.samples * 10.0 ** (cfg.drive_db / 20.0)
    if cfg.smooth_limit is not None:
        u = u / (1.0 + (np.abs(u) / cfg.smooth_limit) ** 6) ** (1.0 / 6.0)
    delayed = delayed_matrix(u, TapWindow(pre_taps=cfg.memory_depth))
    amp_sq = np.abs(delayed) ** 2
    y = np.zeros(len(seq), dtype=np.complex128)
    power = np.ones_like(amp_sq)
    for k in range(cfg.n_orders):
        if k:
            power = power * amp_sq
        y += (delayed * power) @ cfg.coeffs[:, k]
    if cfg.feedback_snr_db is not None and noise_seed is not None:
        rng = np.random.default_rng(noise_seed)
        out_power = float(np.mean(np.abs(y) ** 2))
        scale = np.sqrt(out_power * 10.0 ** (-cfg.feedback_snr_db / 10.0) / 2.0)
        y = y + scale * (rng.standard_normal(y.size) + 1j * rng.standard_normal(y.size))
    return ComplexSequence(y, sample_rate_hint=seq.sample_rate_hint)
