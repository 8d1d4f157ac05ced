"""Rank-based canonical band-coherence between two groups of time series."""

from .bandfilter import (BandpassFilter, band_power_fraction, design_butterworth,
                         filter_zero_phase)
from .baselines import (BandCoherenceEstimate, aggregate_equal_weights,
                        aggregate_pca, mean_pairwise_coherence,
                        pairwise_band_coherence)
from .cbc import CBCResult, direction_matrix, per_trial_directions, solve_cbc
from .depmat import (LaggedDependenceMatrix, estimate_gamma, kendall_tau_lagged,
                     mcd_gamma, repair_psd)
from .errors import KencohError
from .inference import (StateComparison, fdr_adjust, fisher_aggregate,
                        hotelling_k, permutation_test)
from .simgen import (AR2BandConfig, SimulationScenario, analytical_cbc,
                     calibrate_mixing, gen_ar2_band, gen_scenario, power_study)
from .types import (EstimatorKind, FrequencyBand, LagGrid, MultiChannelTrials,
                    get_band, standard_bands)

__version__ = "0.1.0"
