"""Dense complex linear algebra for small Hilbert spaces.

Two-mode operators use mode ``a`` as the slow (block) index: the basis of
``C^d (x) C^d`` is ordered ``|0,0>, |0,1>, ..., |1,0>, ...`` with the first
label belonging to mode ``a``.
"""

import math

import numpy as np

HERMITIAN_TOL = 1e-10
NORM_TOL = 1e-12
EIG_FLOOR = -1e-10


class DimensionError(ValueError):
    """Raised when operator shapes are inconsistent."""


class NotHermitianError(ValueError):
    """Raised when a Hermitian operator was required."""


class InvalidStateError(ValueError):
    """Raised when an array is not a valid ket or density matrix."""


def as_matrix(m):
    """Return ``m`` as a finite 2-d complex array."""
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or min(m.shape) < 1:
        raise DimensionError(f"expected a non-empty matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidStateError("matrix has non-finite entries")
    return m


def dag(m):
    return np.conj(np.transpose(m))


def is_hermitian(m, tol=HERMITIAN_TOL):
    m = np.asarray(m)
    return m.shape[0] == m.shape[1] and np.allclose(m, dag(m), rtol=0, atol=tol)


def ket(amplitudes, normalize=False):
    """Build a unit-norm ket from ``amplitudes``.

    Parameters
    ----------
    amplitudes : array_like
        Complex amplitudes.
    normalize : bool, optional
        Rescale to unit norm instead of rejecting a non-unit vector.
    """
    v = np.asarray(amplitudes, dtype=complex).ravel()
    if v.size < 1 or not np.all(np.isfinite(v)):
        raise InvalidStateError("ket must have finite amplitudes")
    n = np.linalg.norm(v)
    if normalize:
        if n == 0:
            raise InvalidStateError("cannot normalize the zero vector")
        return v / n
    if abs(n**2 - 1) > NORM_TOL:
        raise InvalidStateError(f"ket norm^2 is {n**2!r}, expected 1")
    return v


def projector(psi):
    psi = np.asarray(psi, dtype=complex).ravel()
    return np.outer(psi, np.conj(psi))


def density_matrix(m):
    """Validate ``m`` as a density matrix and return it as a complex array.

    A 1-d input is treated as a ket and turned into its projector.
    """
    m = np.asarray(m, dtype=complex)
    if m.ndim == 1:
        return projector(ket(m))
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise DimensionError(f"density matrix must be square, got {m.shape}")
    if not is_hermitian(m, NORM_TOL):
        raise InvalidStateError("density matrix is not Hermitian")
    if abs(np.trace(m) - 1) > NORM_TOL:
        raise InvalidStateError(f"density matrix trace is {np.trace(m).real!r}")
    if np.linalg.eigvalsh(m).min() < EIG_FLOOR:
        raise InvalidStateError("density matrix has negative eigenvalues")
    return m


def is_density_matrix(m):
    try:
        density_matrix(m)
    except (InvalidStateError, DimensionError):
        return False
    return True


def tensor_product(a, b):
    """Kronecker product, ``a`` indexing the blocks."""
    return np.kron(as_matrix(a), as_matrix(b))


def mode_dimension(m):
    """Return ``d`` for a ``d**2 x d**2`` two-mode operator."""
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"two-mode operator must be square, got {m.shape}")
    d = math.isqrt(m.shape[0])
    if d * d != m.shape[0]:
        raise DimensionError(f"dimension {m.shape[0]} is not a perfect square")
    return d


def partial_trace(m, keep="a"):
    """Reduce a two-mode operator to the mode ``keep`` ('a' or 'b').

    Examples
    --------
    >>> rho = np.diag([1.0, 0.0])
    >>> partial_trace(tensor_product(rho, np.eye(2) / 2), keep="a").real
    array([[1., 0.],
           [0., 0.]])
    """
    m = np.asarray(m, dtype=complex)
    d = mode_dimension(m)
    t = m.reshape(d, d, d, d)
    if keep == "a":
        return np.einsum("ikjk->ij", t)
    if keep == "b":
        return np.einsum("kikj->ij", t)
    raise ValueError(f"keep must be 'a' or 'b', not {keep!r}")


def dft_matrix(d):
    """Unitary DFT with ``F[i, j] = exp(2j*pi*i*j/d)/sqrt(d)``."""
    if d < 2:
        raise ValueError("dimension must be at least 2")
    k = np.arange(d)
    return np.exp(2j * np.pi * np.outer(k, k) / d) / math.sqrt(d)


def eig_hermitian(m, tol=HERMITIAN_TOL):
    """Spectral decomposition of a Hermitian matrix.

    Returns
    -------
    eigenvalues : ndarray
        Real eigenvalues in ascending order.
    eigenvectors : ndarray
        Unit eigenvectors as columns.
    """
    m = as_matrix(m)
    if not is_hermitian(m, tol):
        raise NotHermitianError("matrix is not Hermitian within tolerance")
    h = (m + dag(m)) / 2
    w, v = np.linalg.eigh(h)
    residual = np.linalg.norm(h - (v * w) @ dag(v))
    if residual > tol * max(1.0, np.linalg.norm(h)):
        raise ArithmeticError(f"eigendecomposition residual {residual:.3e}")
    return w, v


def psd_sqrt(m):
    w, v = eig_hermitian(m)
    return (v * np.sqrt(np.clip(w, 0, None))) @ dag(v)


def project_to_simplex(values):
    """Euclidean projection of a real vector onto the probability simplex."""
    v = np.asarray(values, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    shift = css[rho] / (rho + 1)
    return np.clip(v - shift, 0, None)


def nearest_density_matrix(m):
    """Closest density matrix in Frobenius norm to a Hermitian ``m``."""
    m = as_matrix(m)
    w, v = eig_hermitian((m + dag(m)) / 2)
    p = project_to_simplex(w)
    return (v * p) @ dag(v)


def random_density_matrix(d, rng, rank=None):
    """Random mixed state from the induced (Ginibre) measure."""
    rank = d if rank is None else rank
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = g @ dag(g)
    return rho / np.trace(rho).real


def random_ket(d, rng):
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return v / np.linalg.norm(v)
