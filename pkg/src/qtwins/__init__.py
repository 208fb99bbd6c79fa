"""Quantum cloning and joint measurement of complementary observables."""

from .cloner import (
    PHASES,
    clone_fidelity,
    optimal_clone,
    partial_clone,
    swap_operator,
    symmetry_op,
    trivial_clone,
    twins_operator,
    universal_clone_fidelity,
)
from .jointmeas import (
    JointProbTable,
    MubPair,
    fourier_mub,
    joint_prob,
    phase_cycle,
    quasi_dist_direct,
    trivial_joint_prob,
)
from .photonics import (
    CountRecord,
    DelayScan,
    PhotonSpectrum,
    delay_scan_quasiprob,
    distinguishability,
    hom_dip,
    qwp_state,
    run_experiment,
    sample_counts,
)
from .tomography import density_from_dist, fidelity, mle_fit, wavefunction_from_dist

__version__ = "0.1.0"
