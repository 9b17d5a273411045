"""Experiment configuration: flat key=value files, validation, hashing.

Configs are plain text, one ``key = value`` per line, with ``#`` comments.
Unknown keys are errors so typos cannot silently fall back to defaults.
The canonical serialization (sorted keys, excluding output paths) is
hashed to pin the identity of built-in presets.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
import hashlib

from .channel import ChannelParams, make_params

INFO_MODES = ("ideal", "estimation")
WRITE_POLICIES = ("fixed", "dva_single_even_target", "dva_joint_alternating")
READ_POLICIES = ("fixed_mid", "dta")
QUANT_CHOICES = (0, 64, 128, 256)

# keys that do not affect the simulated trajectory
_OUTPUT_KEYS = ("csv_path", "plot_path", "dump_cells_path")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one run needs, flattened for the config-file format."""

    name: str = "custom"
    model: str = "model2"
    info_mode: str = "ideal"
    write_policy: str = "fixed"
    read_policy: str = "fixed_mid"
    quant_levels: int = 0            # 0 disables the DAC quantizer
    cadence: int = 100
    max_cycles: int = 3000
    wordlines: int = 17
    cells_per_wordline: int = 2048
    seed: int = 7
    target_mi: float = 1.945
    margin_mi: float = 0.02
    alpha_min: float = 0.0
    retention_hours: float = 8760.0
    stop_after_crossing: bool = True
    est_bins: int = 9
    mc_draws: int = 1_000_000
    gh_order: int = 32
    quant_lo: float = -1.0
    quant_hi: float = 8.0
    # channel parameters (defaults: reference MLC part)
    sigma_e: float = 0.35
    sigma_p: float = 0.05
    c_w: float = 1.26e-3
    a_w: float = 1.8e-4
    k_i: float = 0.62
    a_r: float = 7.0e-4
    b_r: float = 4.76e-3
    k_o: float = 0.3
    t0_hours: float = 1.0
    v_max: float = 16.0
    c2c_strength: float = 0.2
    pe_norm: float = 3000.0
    thresholds: tuple = (2.8, 5.2, 6.4, 7.86)
    # outputs (not part of the config hash)
    csv_path: str = ""
    plot_path: str = ""
    dump_cells_path: str = ""

    def __post_init__(self) -> None:
        if self.info_mode not in INFO_MODES:
            raise ValueError(f"info_mode must be one of {INFO_MODES}")
        if self.write_policy not in WRITE_POLICIES:
            raise ValueError(f"write_policy must be one of {WRITE_POLICIES}")
        if self.read_policy not in READ_POLICIES:
            raise ValueError(f"read_policy must be one of {READ_POLICIES}")
        if self.quant_levels not in QUANT_CHOICES:
            raise ValueError(f"quant_levels must be one of {QUANT_CHOICES}")
        if self.cadence < 1:
            raise ValueError("cadence must be >= 1")
        if self.max_cycles < self.cadence:
            raise ValueError("max_cycles must be >= cadence")
        if self.wordlines < 3:
            raise ValueError("wordlines must be >= 3")
        if self.cells_per_wordline < 4 or self.cells_per_wordline % 2:
            raise ValueError("cells_per_wordline must be even and >= 4")
        if not (0.0 <= self.alpha_min < 1.0):
            raise ValueError("alpha_min must be in [0, 1)")
        if self.est_bins < 2:
            raise ValueError("est_bins must be >= 2")
        if self.gh_order < 2:
            raise ValueError("gh_order must be >= 2")
        if self.mc_draws < 1:
            raise ValueError("mc_draws must be >= 1")
        if len(self.thresholds) != 4:
            raise ValueError("thresholds needs exactly 4 values")
        if self.read_policy == "dta" and self.info_mode != "estimation":
            raise ValueError("dta read policy requires estimation mode")
        self.channel_params()  # validates the physical parameter block

    def channel_params(self) -> ChannelParams:
        return make_params(
            model=self.model, sigma_e=self.sigma_e, sigma_p=self.sigma_p,
            c_w=self.c_w, a_w=self.a_w, k_i=self.k_i, a_r=self.a_r,
            b_r=self.b_r, k_o=self.k_o, t0_hours=self.t0_hours,
            retention_hours=self.retention_hours, v_max=self.v_max,
            c2c_strength=self.c2c_strength, pe_norm=self.pe_norm,
            thresholds=tuple(float(t) for t in self.thresholds))


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join("%.9g" % float(v) for v in value)
    if isinstance(value, float):
        return "%.9g" % value
    if isinstance(value, int):
        return str(value)
    return str(value)


def _parse_value(name: str, text: str, kind):
    text = text.strip()
    if kind is bool:
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"{name}: expected true/false, got {text!r}")
    if kind is int:
        if name == "quant_levels" and text == "off":
            return 0
        return int(text)
    if kind is float:
        return float(text)
    if kind is tuple:
        return tuple(float(v) for v in text.split(","))
    return text


def config_to_text(cfg: ExperimentConfig, include_outputs: bool = True) -> str:
    """Canonical key = value serialization, keys sorted."""
    lines = []
    for f in sorted(fields(cfg), key=lambda f: f.name):
        if not include_outputs and f.name in _OUTPUT_KEYS:
            continue
        lines.append(f"{f.name} = {_format_value(getattr(cfg, f.name))}")
    return "\n".join(lines) + "\n"


def parse_config(text: str, base: ExperimentConfig | None = None,
                 preset_lookup=None) -> ExperimentConfig:
    """Parse a flat key=value config document.

    A ``preset = <name>`` line (resolved through preset_lookup) supplies the
    base values; later keys override it.  Unknown keys raise ValueError.
    """
    defaults = ExperimentConfig()
    kinds = {f.name: type(getattr(defaults, f.name))
             for f in fields(ExperimentConfig)}
    updates = {}
    cfg = base
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip()
        if key == "preset":
            if preset_lookup is None:
                raise ValueError("preset references are not available here")
            cfg = preset_lookup(value.strip())
            continue
        if key not in kinds:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        updates[key] = _parse_value(key, value, kinds[key])
    if cfg is None:
        cfg = ExperimentConfig()
    return replace(cfg, **updates)


def config_hash(cfg: ExperimentConfig) -> str:
    """SHA-256 of the canonical serialization, output paths excluded."""
    text = config_to_text(cfg, include_outputs=False)
    return hashlib.sha256(text.encode()).hexdigest()
