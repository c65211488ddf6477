"""Minimal dense complex linear algebra used by the channel and beamforming code.

All matrices are 2-D ``numpy`` arrays of ``complex128``; vectors are column
(n, 1) or row (1, n) matrices.  The problem sizes here never exceed ~36x36,
so everything is dense and double precision.
"""

import numpy as np

from .errors import DimensionError, SingularScalarError

# Below this magnitude a scalar is treated as non-invertible.
SINGULAR_EPS = 1e-30


def as_cmatrix(a) -> np.ndarray:
    """Coerce input to a 2-D complex128 matrix."""
    m = np.atleast_2d(np.asarray(a, dtype=np.complex128))
    if m.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got ndim={m.ndim}")
    return m


def matmul(a, b) -> np.ndarray:
    a = as_cmatrix(a)
    b = as_cmatrix(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def hermitian(a) -> np.ndarray:
    """Conjugate transpose."""
    return as_cmatrix(a).conj().T


def kron(a, b) -> np.ndarray:
    return np.kron(as_cmatrix(a), as_cmatrix(b))


def frob_norm(a) -> float:
    return float(np.linalg.norm(as_cmatrix(a)))


def inv_scalar(x: complex) -> complex:
    """1/x with an explicit guard instead of a silent overflow."""
    x = complex(x)
    if abs(x) <= SINGULAR_EPS:
        raise SingularScalarError(f"|x|={abs(x):.3e} below invertibility threshold")
    return 1.0 / x
