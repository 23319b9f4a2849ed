"""Exact lattice dynamics for Bose-Hubbard-type models and light-cone bounds
on how fast particle densities and local observables can spread."""

from .envelope import (EnvelopeParams, analytic_density_bound, elementwise_expm_certificate,
                       envelope_curve, envelope_ode, make_params, moment_bound,
                       observable_bound, solve_chi)
from .evolve import (QuantumState, SimulationTrace, basis_state, density, evolve_lindblad,
                     evolve_unitary, local_observable, moment, superposition,
                     two_site_correlator)
from .fock import SectorBasis, SectorSum, SpeciesSpec, apply_hop, enumerate_sector
from .graph import Lattice, build_chain, build_grid, from_edge_list, region_distance
from .hamiltonian import ModelSpec, TauSchedule, build_hamiltonian, diagonal_interaction
from .verify import ExperimentConfig, ObservableSpec, VerificationReport, run_experiment

__version__ = "0.1.0"
