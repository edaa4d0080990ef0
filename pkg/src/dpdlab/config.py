"""Structured run-configuration text: `[section]` headers, `key = value` lines.

Lines may carry `#` comments.  Every key is type-checked against a fixed
schema; unknown sections or keys are rejected by name with a line number.
Omitted keys fall back to defaults chosen so that an empty config describes a
complete, runnable experiment.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Optional

from .exceptions import FormatError
from .ila import FAMILIES, DpdModelSpec
from .pa_sim import (PRESET_A_SAT, PRESET_DRIVE_DB, PRESET_FEEDBACK_SNR_DB, PRESET_K_PA,
                     PRESET_L_PA, PRESET_RHO, PRESET_SIGMA, PaConfig, coeffs_from_rule)
from .signal import TapWindow
from .training import TrainConfig

PRESET_LEVELS = ("low", "high")


# ----------------------------------------------------------------------
# value converters (raise ValueError with a short reason)
# ----------------------------------------------------------------------


def _int(value: str) -> int:
    return int(value, 10)


def _float(value: str) -> float:
    return float(value)


def _opt_float(value: str) -> Optional[float]:
    if value.lower() == "none":
        return None
    return float(value)


def _bool(value: str) -> bool:
    lowered = value.lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected true/false, got {value!r}")


def _word(value: str) -> str:
    if not value:
        raise ValueError("empty value")
    return value


def _int_list(value: str) -> tuple:
    items = tuple(int(tok.strip(), 10) for tok in value.split(",") if tok.strip())
    if not items:
        raise ValueError("empty list")
    return items


def _word_list(value: str) -> tuple:
    items = tuple(tok.strip() for tok in value.split(",") if tok.strip())
    if not items:
        raise ValueError("empty list")
    return items


_SCHEMA = {
    "pa": {
        "rho": _float,
        "sigma": _float,
        "l_pa": _int,
        "k_pa": _int,
        "drive_db": _float,
        "a_sat": _opt_float,
        "feedback_snr_db": _opt_float,
    },
    "signal": {
        "seed": _int,
        "n_samples": _int,
        "bandwidth_fraction": _float,
    },
    "model": {
        "kind": _word,
        "taps": _int,
        "post_taps": _int,
        "k_orders": _int,
        "n_experts": _int,
        "n1": _int,
        "n2": _int,
        "ridge": _opt_float,
        "warm_start": _bool,
    },
    "train": {
        "learning_rate": _float,
        "beta1": _float,
        "beta2": _float,
        "epsilon": _float,
        "batch_size": _int,
        "segment_len": _int,
        "max_epochs": _int,
        "patience": _int,
        "seed": _int,
    },
    "sweep": {
        "families": _word_list,
        "preset": _word,
        "taps_list": _int_list,
        "param_targets": _int_list,
        "seeds": _int_list,
        "budget_lo": _int,
        "budget_hi": _int,
        "nn_grid": _int_list,
        "mpm_k_grid": _int_list,
        "taps": _int,
    },
}


@dataclass
class RunConfig:
    """Fully resolved experiment description (one value per schema key)."""

    # [pa] — memory-polynomial coefficient rule plus operating point
    rho: float = PRESET_RHO
    sigma: float = PRESET_SIGMA
    l_pa: int = PRESET_L_PA
    k_pa: int = PRESET_K_PA
    drive_db: float = PRESET_DRIVE_DB["high"]
    a_sat: Optional[float] = PRESET_A_SAT
    feedback_snr_db: Optional[float] = PRESET_FEEDBACK_SNR_DB
    # [signal]
    seed: int = 1
    n_samples: int = 16384
    bandwidth_fraction: float = 0.25
    # [model]
    kind: str = "mpm"
    taps: int = 4
    post_taps: int = 0
    k_orders: int = 3
    n_experts: int = 3
    n1: int = 16
    n2: int = 16
    ridge: Optional[float] = None
    warm_start: bool = True
    # [train]
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 50
    segment_len: int = 1024
    max_epochs: int = 100
    patience: int = 5
    train_seed: int = 0
    # [sweep]
    families: tuple = FAMILIES
    preset: str = "high"
    taps_list: tuple = (4, 5, 6, 7, 8, 9, 10)
    param_targets: tuple = (100, 200, 300, 400, 500, 600)
    seeds: tuple = (1, 2, 3)
    budget_lo: int = 100
    budget_hi: int = 600
    nn_grid: tuple = (8, 10, 12, 14, 16, 18, 20)
    mpm_k_grid: tuple = (1, 2, 3, 4, 5, 6, 7, 8)
    sweep_taps: int = 7

    def __post_init__(self) -> None:
        if self.kind not in FAMILIES:
            raise FormatError(f"[model] kind must be one of {FAMILIES}, got {self.kind!r}")
        if self.preset not in PRESET_LEVELS:
            raise FormatError(f"[sweep] preset must be one of {PRESET_LEVELS}, got {self.preset!r}")
        for fam in self.families:
            if fam not in FAMILIES:
                raise FormatError(f"[sweep] families entry {fam!r} not one of {FAMILIES}")
        if self.taps < 1 or self.post_taps < 0 or self.post_taps >= self.taps:
            raise FormatError("[model] needs taps >= 1 and 0 <= post_taps < taps")

    # ------------------------------------------------------------------
    # builders
    # ------------------------------------------------------------------

    def pa_config(self, drive_db: Optional[float] = None) -> PaConfig:
        return PaConfig(
            coeffs=coeffs_from_rule(self.rho, self.sigma, self.l_pa, self.k_pa),
            drive_db=self.drive_db if drive_db is None else drive_db,
            smooth_limit=self.a_sat,
            feedback_snr_db=self.feedback_snr_db,
        )

    def pa_for_preset(self, level: str) -> PaConfig:
        if level not in PRESET_LEVELS:
            raise ValueError(f"unknown preset level {level!r}")
        return self.pa_config(drive_db=PRESET_DRIVE_DB[level])

    def preset_label(self) -> str:
        for level in PRESET_LEVELS:
            if self.drive_db == PRESET_DRIVE_DB[level]:
                return level
        return "custom"

    def window(self) -> TapWindow:
        return TapWindow(pre_taps=self.taps - 1 - self.post_taps, post_taps=self.post_taps)

    def model_spec(self) -> DpdModelSpec:
        return DpdModelSpec(
            kind=self.kind, window=self.window(), k_orders=self.k_orders,
            n_experts=self.n_experts, n1=self.n1, n2=self.n2, ridge=self.ridge,
            warm_start=self.warm_start, budget=(self.budget_lo, self.budget_hi),
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate, beta1=self.beta1, beta2=self.beta2,
            epsilon=self.epsilon, batch_size=self.batch_size,
            segment_len=self.segment_len, max_epochs=self.max_epochs,
            patience=self.patience, seed=self.train_seed,
        )


# Config keys whose RunConfig attribute name differs from the bare key.
_ATTR_OVERRIDES = {("train", "seed"): "train_seed", ("sweep", "taps"): "sweep_taps"}


def _attr_name(section: str, key: str) -> str:
    return _ATTR_OVERRIDES.get((section, key), key)


def parse_config(text: str, path: str = "<config>") -> RunConfig:
    """Parse sectioned key-value text into a RunConfig; defaults fill the gaps."""
    values = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name not in _SCHEMA:
                known = ", ".join(sorted(_SCHEMA))
                raise FormatError(f"{path}:{lineno}: unknown section [{name}] (known: {known})")
            section = name
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        if section is None:
            raise FormatError(f"{path}:{lineno}: key outside any [section]")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        schema = _SCHEMA[section]
        if key not in schema:
            known = ", ".join(sorted(schema))
            raise FormatError(
                f"{path}:{lineno}: unknown key {key!r} in [{section}] (known: {known})")
        try:
            values[_attr_name(section, key)] = schema[key](value)
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from None
    try:
        return RunConfig(**values)
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from None


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read(), path=str(path))


def _render_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_config(cfg: RunConfig) -> str:
    """Serialize a RunConfig; parse_config(render_config(c)) == c."""
    lines = []
    for section, schema in _SCHEMA.items():
        lines.append(f"[{section}]")
        for key in schema:
            lines.append(f"{key} = {_render_value(getattr(cfg, _attr_name(section, key)))}")
        lines.append("")
    return "\n".join(lines)
