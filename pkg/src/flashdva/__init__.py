"""Flash read-channel simulator with adaptive write scaling and reads."""

from .channel import (ChannelParams, ChannelState, ModelRangeError,
                      make_params, prog_error_pmf, reference_mlc,
                      retention_stats, wearout_lambda)
from .config import ExperimentConfig, config_hash, config_to_text, parse_config
from .controller import (DvaConfig, QuantGrid, VoltageAllocation,
                         dta_boundaries, dva_scale_factor,
                         fixed_read_boundaries, quantized_write_thresholds)
from .estimation import (FitReport, dedupe_boundaries,
                         empirical_quantile_means, equal_prob_boundaries,
                         lm_fit, predict_bin_probs, rescale_boundaries)
from .harness import (EpochRecord, ParityRecord, RunResult, ber_lifetime,
                      emit_csv, mi_lifetime, read_csv, run_experiment)
from .info import (DEFAULT_GRID, C2cSampler, GaussianMixtureModel,
                   GridCoverageError, LevelPDFs, VoltageGrid,
                   build_conditional_pdfs, hermite_rule,
                   mutual_information_gh, mutual_information_grid,
                   pdfs_from_mixture, raw_ber)
from .lattice import (CellLattice, dump_measured_voltages, measure_histogram,
                      program_cycle, read_parity_voltages)
from .plotting import emit_plot
from .presets import build_preset, preset_names, verify_hashes

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
