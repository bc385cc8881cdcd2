"""Multimode coherent single-photon subtraction toolkit."""

from .calibration import (CalibrationCurve, RealisticWeights, WeightCalibrator,
                          fit_weights, herald_rate, simulate_curve)
from .chi import (AnnihilationOp, OperatorMixture, SubtractionMatrix,
                  chi_from_mixture, dominant_mode, effective_mode_count,
                  fidelity, ideal_chi, project_to_physical, projector, purity,
                  success_probability)
from .exceptions import (BasisCoverageError, ConvergenceWarning,
                         DegenerateInputError, HeraldError,
                         IncompleteProbeSetError, InvalidInputError,
                         LeakageWarning, ModelMismatchError, ModesubError,
                         NoSignalError, NotFittedError, ResolutionError,
                         TruncationError)
from .fock import (FockDensity, LossChain, SqueezeParams,
                   brute_force_two_mode_check, heralded_state, loss_channel,
                   squeezed_vacuum, subtract_photon, wigner_grid, wigner_origin)
from .modes import (FrequencyGrid, ModeBasis, SpectralMode, change_basis,
                    make_band_basis, make_hg_basis, make_hg_mode,
                    operator_coefficients)
from .sfg import (SfgConfig, build_transfer, default_config,
                  induced_subtraction, schmidt_decompose, sign_rule_check)
from .tomography import (CountRecord, ProbeSpec, SubtractionTomography,
                         TomographySettings, linear_inversion, mle_reconstruct,
                         simulate_counts, standard_probe_set)

__version__ = "0.1.0"
