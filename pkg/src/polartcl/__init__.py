"""polartcl: correlated particle-hole dynamics in a harmonic boson bath.

A dressed (small-polaron) second-order time-convolutionless equation of motion
for particle-hole amplitudes, with absorption spectra, vibronic structure,
Markovian rate tensors and population-transfer traces.
"""

__version__ = "0.1.0"

from .system import (SpinOrbitalSystem, ModelBuilder, build_model, load_fcidump,
                     validate_symmetries, save_native, load_native)
from .bath import BathSpec, Mode, DensitySpec, BathSignature
from .polaron import (PolaronSystem, reorganization_energies, transform_integrals,
                      dressed_dipole_signature)
from .propagator import (PhAmplitude, PropagationConfig, Trajectory,
                         compile_generator, propagate)
from .markov import build_rates, markov_propagate, markov_spectrum
from .observables import (dipole_kick, dipole_correlation, spectrum,
                          cis_populations, cis_superposition)
from .wick import first_order_terms, second_order_terms, untransformed_terms

__all__ = [
    "SpinOrbitalSystem", "ModelBuilder", "build_model", "load_fcidump",
    "validate_symmetries", "save_native", "load_native",
    "BathSpec", "Mode", "DensitySpec", "BathSignature",
    "PolaronSystem", "reorganization_energies", "transform_integrals",
    "dressed_dipole_signature",
    "PhAmplitude", "PropagationConfig", "Trajectory", "compile_generator",
    "propagate",
    "build_rates", "markov_propagate", "markov_spectrum",
    "dipole_kick", "dipole_correlation", "spectrum", "cis_populations",
    "cis_superposition",
    "first_order_terms", "second_order_terms", "untransformed_terms",
    "__version__",
]
