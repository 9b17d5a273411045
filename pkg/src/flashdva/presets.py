"""Built-in experiment presets.

Each preset is a complete ExperimentConfig whose canonical hash is pinned
here; `verify_hashes` lets tests and the CLI detect accidental drift in
either the preset table or the config serialization.
"""

from __future__ import annotations

from dataclasses import replace

from .config import ExperimentConfig, config_hash

_PRESETS: dict[str, dict] = {
    # The reference MLC parameter set with no adaptation at all.
    "reference-mlc": dict(
        model="model2", info_mode="ideal", write_policy="fixed",
        read_policy="fixed_mid", max_cycles=3600),
    # Fixed allocation baselines for both channel models.
    "fixed-model1": dict(
        model="model1", info_mode="ideal", write_policy="fixed",
        read_policy="fixed_mid", max_cycles=3600),
    "fixed-model2": dict(
        model="model2", info_mode="ideal", write_policy="fixed",
        read_policy="fixed_mid", max_cycles=3600),
    # Scale-factor control with perfect channel knowledge.
    "dva-ideal-single": dict(
        model="model2", info_mode="ideal",
        write_policy="dva_single_even_target", read_policy="fixed_mid",
        max_cycles=4600),
    "dva-ideal-joint": dict(
        model="model2", info_mode="ideal",
        write_policy="dva_joint_alternating", read_policy="fixed_mid",
        max_cycles=4600),
    # Scale-factor control driven by histogram estimation.
    "dva-est-model1": dict(
        model="model1", info_mode="estimation",
        write_policy="dva_joint_alternating", read_policy="dta",
        max_cycles=4800),
    "dva-est-model2": dict(
        model="model2", info_mode="estimation",
        write_policy="dva_joint_alternating", read_policy="dta",
        max_cycles=4600),
    # Adaptive read thresholds, with and without write adaptation.
    "fixed-dta": dict(
        model="model2", info_mode="estimation", write_policy="fixed",
        read_policy="dta", max_cycles=3600),
    "dva-dta": dict(
        model="model2", info_mode="estimation",
        write_policy="dva_joint_alternating", read_policy="dta",
        alpha_min=0.45, max_cycles=4600),
    # DAC-quantized variants of the estimation-driven controller.
    "dva-est-q64": dict(
        model="model2", info_mode="estimation",
        write_policy="dva_joint_alternating", read_policy="dta",
        quant_levels=64, max_cycles=4600),
    "dva-est-q128": dict(
        model="model2", info_mode="estimation",
        write_policy="dva_joint_alternating", read_policy="dta",
        quant_levels=128, max_cycles=4600),
}

# sha256 of each preset's canonical serialization (outputs excluded).
# Regenerate with `python -m flashdva.presets` after a deliberate change.
PRESET_HASHES: dict[str, str] = {}


def preset_names() -> tuple:
    return tuple(_PRESETS)


def build_preset(name: str, seed: int | None = None,
                 **overrides) -> ExperimentConfig:
    """Instantiate a named preset, optionally overriding seed or outputs."""
    if name not in _PRESETS:
        raise KeyError(f"unknown preset {name!r}; "
                       f"choose from {', '.join(_PRESETS)}")
    cfg = ExperimentConfig(name=name, **_PRESETS[name])
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if overrides:
        cfg = replace(cfg, **overrides)
    return cfg


def verify_hashes() -> dict:
    """Map of preset name -> (expected, actual) for any hash mismatch."""
    bad = {}
    for name in _PRESETS:
        actual = config_hash(build_preset(name))
        expected = PRESET_HASHES.get(name)
        if expected != actual:
            bad[name] = (expected, actual)
    return bad


def _regenerate() -> str:
    lines = ["PRESET_HASHES: dict[str, str] = {"]
    for name in _PRESETS:
        lines.append(f'    "{name}": "{config_hash(build_preset(name))}",')
    lines.append("}")
    return "\n".join(lines)


if __name__ == "__main__":
    print(_regenerate())
