"""Input validation helpers, in the spirit of ``sklearn.utils.validation``."""

import numbers

import numpy as np

from .exceptions import InvalidInputError, NotFittedError

HERMITIAN_TOL = 1e-10
PSD_TOL = 1e-9
TRACE_TOL = 1e-10
NORM_TOL = 1e-10


def frozen(array):
    """Return ``array`` as a read-only ndarray (copying if needed)."""
    out = np.array(array, copy=True)
    out.setflags(write=False)
    return out


def check_scalar(x, name, *, min_val=None, max_val=None, include_min=True,
                 include_max=True):
    if not isinstance(x, numbers.Real) or isinstance(x, bool):
        raise InvalidInputError(f"{name} must be a real number, got {x!r}")
    x = float(x)
    if not np.isfinite(x):
        raise InvalidInputError(f"{name} must be finite, got {x}")
    if min_val is not None:
        if x < min_val or (x == min_val and not include_min):
            bound = ">=" if include_min else ">"
            raise InvalidInputError(f"{name} must be {bound} {min_val}, got {x}")
    if max_val is not None:
        if x > max_val or (x == max_val and not include_max):
            bound = "<=" if include_max else "<"
            raise InvalidInputError(f"{name} must be {bound} {max_val}, got {x}")
    return x


def check_int(x, name, *, min_val=None):
    if not isinstance(x, numbers.Integral) or isinstance(x, bool):
        raise InvalidInputError(f"{name} must be an integer, got {x!r}")
    x = int(x)
    if min_val is not None and x < min_val:
        raise InvalidInputError(f"{name} must be >= {min_val}, got {x}")
    return x


def check_vector(v, name, *, dtype=complex, length=None):
    try:
        arr = np.asarray(v, dtype=dtype)
    except (TypeError, ValueError) as exc:
        raise InvalidInputError(f"{name} is not numeric: {exc}") from None
    if arr.ndim != 1:
        raise InvalidInputError(f"{name} must be 1-D, got shape {arr.shape}")
    if length is not None and arr.shape[0] != length:
        raise InvalidInputError(
            f"{name} must have length {length}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


def check_unit_vector(v, name, *, tol=NORM_TOL, length=None):
    arr = check_vector(v, name, length=length)
    norm2 = float(np.vdot(arr, arr).real)
    if abs(norm2 - 1.0) > tol:
        raise InvalidInputError(
            f"{name} must have unit norm (sum |.|^2 = 1), got {norm2:.12g}")
    return arr


def check_square(m, name):
    try:
        arr = np.asarray(m, dtype=complex)
    except (TypeError, ValueError) as exc:
        raise InvalidInputError(f"{name} is not numeric: {exc}") from None
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
        raise InvalidInputError(f"{name} must be a non-empty square matrix, "
                                f"got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


def check_density_like(m, name, *, unit_trace=True):
    """Check Hermiticity, positivity and (optionally) unit trace."""
    arr = check_square(m, name)
    herm_err = np.max(np.abs(arr - arr.conj().T))
    if herm_err > HERMITIAN_TOL:
        raise InvalidInputError(f"{name} is not Hermitian (max |M - M^H| = "
                                f"{herm_err:.3g})")
    arr = 0.5 * (arr + arr.conj().T)
    min_eig = np.linalg.eigvalsh(arr)[0]
    if min_eig < -PSD_TOL:
        raise InvalidInputError(f"{name} is not positive semidefinite "
                                f"(min eigenvalue {min_eig:.3g})")
    if unit_trace:
        tr = np.trace(arr).real
        if abs(tr - 1.0) > TRACE_TOL:
            raise InvalidInputError(f"{name} must have unit trace, got {tr:.12g}")
    return arr


def check_is_fitted(estimator, attributes):
    if isinstance(attributes, str):
        attributes = [attributes]
    if not all(hasattr(estimator, attr) for attr in attributes):
        raise NotFittedError(
            f"This {type(estimator).__name__} instance is not fitted yet; "
            "call 'fit' first.")
