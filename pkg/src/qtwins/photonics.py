"""Emulation of the two-photon cloning experiment.

Delays are in units of ``1/delta_omega`` unless a physical spectral width is
supplied (see :func:`spectral_width_from_bandwidth`). Sampled quantities come
from a private ``numpy.random.Generator`` per run; with a fixed seed the draw
order is phase (``+1, -1, +i, -i``), then X outcome, then Y outcome, then
delay.
"""

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit

from .cloner import PHASES, check_alpha_sq, symmetry_phase
from .jointmeas import JointProbTable, joint_prob, phase_cycle, phase_cycle_uncertainty, quasi_dist_direct
from .qmath import density_matrix, ket

SPEED_OF_LIGHT_NM_PER_FS = 299.792458


@dataclass(frozen=True)
class PhotonSpectrum:
    """Gaussian spectral amplitude of the photons.

    ``omega_0`` cancels out of every overlap and is carried for completeness.
    """

    delta_omega: float = 1.0
    omega_0: float = 0.0

    def __post_init__(self):
        if not self.delta_omega > 0:
            raise ValueError("spectral width must be positive")


def spectral_width_from_bandwidth(delta_lambda_nm, center_nm=808.0):
    """Angular-frequency width in rad/fs for a wavelength width in nm."""
    return 2 * math.pi * SPEED_OF_LIGHT_NM_PER_FS * delta_lambda_nm / center_nm**2


class InterferometerSetting(enum.Enum):
    """Beam-block / phase configurations and the symmetry phase each selects."""

    RED_BLOCKED = 1
    BLUE_BLOCKED = -1
    OPEN_PLUS = 1j
    OPEN_MINUS = -1j

    @property
    def phase(self):
        return self.value

    @property
    def path_phase(self):
        """Relative phase between the two paths, or None when one is blocked."""
        return {1j: math.pi / 2, -1j: -math.pi / 2}.get(self.value)

    @classmethod
    def for_phase(cls, j):
        return cls(symmetry_phase(j))


@dataclass(frozen=True)
class CountRecord:
    """Coincidences recorded at one setting.

    ``expected`` is the mean the counts were drawn from; in noiseless runs
    ``counts`` equals it and need not be an integer.
    """

    j: complex
    x_index: int
    y_index: int
    counts: float
    expected: float
    tau: float = 0.0

    @property
    def setting(self):
        return InterferometerSetting.for_phase(self.j)

    @property
    def error(self):
        return math.sqrt(max(self.counts, 0.0))


@dataclass(frozen=True, eq=False)
class DelayScan:
    taus: tuple
    state: np.ndarray
    mean_counts: float = 1e4
    seed: int = 0

    def __post_init__(self):
        taus = tuple(float(t) for t in self.taus)
        if not taus or not all(math.isfinite(t) for t in taus):
            raise ValueError("delay list must be non-empty and finite")
        if not self.mean_counts > 0:
            raise ValueError("mean counts must be positive")
        object.__setattr__(self, "taus", taus)
        object.__setattr__(self, "state", density_matrix(self.state))


@dataclass(frozen=True)
class ScanPoint:
    tau: float
    estimate: complex
    error: complex = field(default=0j)  # re/im standard deviations
    theory: complex = field(default=0j)


def distinguishability(tau, spectrum=PhotonSpectrum()):
    """Temporal overlap ``exp(-delta_omega**2 tau**2 / 2)`` of the two photons."""
    return math.exp(-((spectrum.delta_omega * tau) ** 2) / 2)


def qwp_jones_state(theta):
    """Quarter-wave plate at fast-axis angle ``theta`` acting on ``|h>``."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([c * c + 1j * s * s, (1 - 1j) * s * c])


def qwp_state(theta):
    """Wave-plate state family used for the wave-function scans.

    Returns ``alpha|h> + beta|v>`` with ``alpha = sqrt(3/8 cos 4t + 5/8) +
    i sin t cos t`` and ``beta = (1 - i) sin t cos t``. The populations
    equal those of :func:`qwp_jones_state`, and ``<d|psi>`` is real and
    positive, so reconstruction referenced to ``|d>`` returns ``alpha``
    unchanged.
    """
    c, s = math.cos(theta), math.sin(theta)
    sc = s * c
    alpha = math.sqrt(max(3 / 8 * math.cos(4 * theta) + 5 / 8, 0.0)) + 1j * sc
    return ket([alpha, (1 - 1j) * sc], normalize=True)


def sample_counts(expected, rng=None):
    """Draw a Poisson count with mean ``expected``.

    ``rng`` is a ``numpy.random.Generator`` or a seed for a new one.
    """
    if expected < 0:
        raise ValueError(f"expected counts must be non-negative, got {expected}")
    rng = np.random.default_rng(rng)
    return int(rng.poisson(expected))


def hom_rate(tau, spectrum, visibility, baseline=1.0):
    return baseline * (1 - visibility * distinguishability(tau, spectrum))


def hom_dip(taus, spectrum=PhotonSpectrum(), visibility=1.0, mean_counts=1e4, seed=None, sampling=True):
    """Coincidences behind the anti-bunching port with both photons ``|h>``.

    Returns one :class:`CountRecord` (phase ``-1``, outcome ``(0, 0)``) per
    delay; ``mean_counts`` is the rate on the flat wings.
    """
    if not 0.0 <= visibility <= 1.0:
        raise ValueError("visibility must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    out = []
    for tau in taus:
        mu = hom_rate(tau, spectrum, visibility, mean_counts)
        n = sample_counts(mu, rng) if sampling else mu
        out.append(CountRecord(j=-1, x_index=0, y_index=0, counts=n, expected=mu, tau=float(tau)))
    return out


def _dip_model(tau, baseline, visibility, width, center):
    return baseline * (1 - visibility * np.exp(-((width * (tau - center)) ** 2) / 2))


@dataclass(frozen=True)
class DipFit:
    baseline: float
    visibility: float
    delta_omega: float
    center: float

    @property
    def contrast(self):
        """``(C_max - C_min) / (C_max + C_min)`` of the fitted curve."""
        return self.visibility / (2 - self.visibility)


def fit_hom_dip(taus, counts):
    """Least-squares Gaussian fit of a dip curve."""
    taus = np.asarray(taus, dtype=float)
    counts = np.asarray(counts, dtype=float)
    c_max, i_min = counts.max(), int(np.argmin(counts))
    depth = 1 - counts[i_min] / c_max if c_max > 0 else 0.5
    half = counts < c_max * (1 - depth / 2)
    span = np.ptp(taus[half]) if half.sum() > 1 else np.ptp(taus) / 4
    width0 = 2 * math.sqrt(2 * math.log(2)) / span if span > 0 else 1.0
    p0 = [c_max, max(depth, 1e-3), width0, taus[i_min]]
    popt, _ = curve_fit(
        _dip_model,
        taus,
        counts,
        p0=p0,
        bounds=([0, 0, 0, -np.inf], [np.inf, 1, np.inf, np.inf]),
        maxfev=20000,
    )
    return DipFit(*(float(v) for v in popt))


def run_experiment(
    state,
    mub,
    mean_counts=1e4,
    seed=None,
    visibility=1.0,
    tau=0.0,
    spectrum=PhotonSpectrum(),
    sampling=True,
    rng=None,
):
    """Record coincidences for all four interferometer settings.

    Each setting ``(j, x, y)`` has mean ``mean_counts * Prob^j(x, y)``
    evaluated on partially distinguishable clones with coherent weight
    ``visibility * distinguishability(tau)``.
    """
    if not 0.0 <= visibility <= 1.0:
        raise ValueError("visibility must lie in [0, 1]")
    if not mean_counts > 0:
        raise ValueError("mean counts must be positive")
    rho = density_matrix(state)
    alpha_sq = check_alpha_sq(visibility * distinguishability(tau, spectrum))
    rng = np.random.default_rng(seed) if rng is None else rng
    records = []
    for j in PHASES:
        probs = joint_prob(rho, j, mub, alpha_sq).probs
        for x in range(mub.dim):
            for y in range(mub.dim):
                mu = mean_counts * max(float(probs[x, y]), 0.0)
                n = sample_counts(mu, rng) if sampling else mu
                records.append(CountRecord(j=j, x_index=x, y_index=y, counts=n, expected=mu, tau=float(tau)))
    return records


def tables_from_counts(records, mean_counts, d):
    """Normalize counts to event probabilities and Poisson variances."""
    probs = {j: np.zeros((d, d)) for j in PHASES}
    var = {j: np.zeros((d, d)) for j in PHASES}
    for r in records:
        j = symmetry_phase(r.j)
        probs[j][r.x_index, r.y_index] = r.counts / mean_counts
        var[j][r.x_index, r.y_index] = r.counts / mean_counts**2
    tables = [JointProbTable(j=j, probs=probs[j]) for j in PHASES]
    return tables, var


def quasi_dist_from_counts(records, mean_counts, d):
    """Phase-cycled quasiprobability with Poisson error bars.

    Returns ``(dist, err_re, err_im)``.
    """
    tables, var = tables_from_counts(records, mean_counts, d)
    err_re, err_im = phase_cycle_uncertainty(var, d)
    return phase_cycle(tables), err_re, err_im


def delay_scan_quasiprob(scan, spectrum, mub, x, y, visibility=1.0, sampling=False):
    """Estimate ``<x y>`` at each delay of ``scan``.

    Noiseless points are the exact phase-cycled value; sampled points draw
    one Poisson count per setting. ``theory`` is
    ``visibility * distinguishability(tau) * <x y>``.
    """
    target = quasi_dist_direct(scan.state, mub)[x, y]
    rng = np.random.default_rng(scan.seed)
    points = []
    for tau in scan.taus:
        if sampling:
            records = run_experiment(
                scan.state, mub, scan.mean_counts, visibility=visibility, tau=tau, spectrum=spectrum, rng=rng
            )
            dist, err_re, err_im = quasi_dist_from_counts(records, scan.mean_counts, mub.dim)
            err = complex(err_re[x, y], err_im[x, y])
        else:
            a2 = visibility * distinguishability(tau, spectrum)
            dist = phase_cycle([joint_prob(scan.state, j, mub, a2) for j in PHASES])
            err = 0j
        theory = visibility * distinguishability(tau, spectrum) * target
        points.append(ScanPoint(tau=tau, estimate=complex(dist[x, y]), error=err, theory=complex(theory)))
    return points
