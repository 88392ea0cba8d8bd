"""One-bit direction finding on sparse cross-dipole arrays."""

__version__ = "0.1.0"

from .geometry import (ArrayConfig, DifferenceCoarray, LagMap, coarray_average, coprime_array,
                       difference_coarray, lag_map, nested_array, ula)
from .signal_model import (Scenario, SnapshotMatrix, SourceSpec, generate_snapshots, snr_to_noise_power,
                           source_covariance)
from .quantize import (arcsine_forward, one_bit_quantize, reconstruct_normalized_covariance,
                       sample_covariance)
from .estimator import baseline_unquantized, ob_music1, ob_music2, root_music, music_spectrum
from .crb import CrbParams, crb_doa, fim_one_bit, fim_unquantized
