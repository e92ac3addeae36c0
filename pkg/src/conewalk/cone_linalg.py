"""Dense hermitian linear algebra on small q x q matrices.

Conventions used throughout the package:

* matrices are numpy arrays of shape (..., q, q); float64 over the real
  field, complex128 over the complex field; leading axes are batch axes;
* hermitian arrays are kept exactly hermitian via :func:`herm_part`
  (A <- (A + A*)/2), which makes diagonals exactly real;
* PSD arrays are produced by :func:`clamp_psd`: eigenvalues negative
  within tolerance are clamped to zero, anything more negative raises
  :class:`ConeViolationError`;
* :func:`vectorize_herm` maps hermitian matrices isometrically to real
  coordinate vectors: diagonal entries first, then off-diagonal real
  parts scaled by sqrt(2) (row-major upper triangle), then, over the
  complex field, the off-diagonal imaginary parts scaled by sqrt(2).
  The inner product of coordinate vectors equals Re tr(a* b).
"""

from __future__ import annotations

import numpy as np

from .errors import ConeViolationError, NumericalFailureError, UnsupportedFieldError

REAL = "real"
COMPLEX = "complex"
FIELDS = (REAL, COMPLEX)

# relative PSD clamping tolerance: the cone-valued formulas used in this
# package are exactly PSD in exact arithmetic, so larger violations mean bugs
EPS_PSD = 1e-10


def field_dim(field: str) -> int:
    """Real dimension d of the base field (1 for R, 2 for C)."""
    check_field(field)
    return 1 if field == REAL else 2


def field_dtype(field: str):
    check_field(field)
    return np.float64 if field == REAL else np.complex128


def check_field(field: str) -> None:
    if field not in FIELDS:
        raise UnsupportedFieldError(f"unsupported field {field!r}; expected one of {FIELDS}")


def herm_part(a: np.ndarray) -> np.ndarray:
    """Hermitian part (a + a*)/2 of a stacked square array."""
    a = np.asarray(a)
    return 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))


def frob_norm(a: np.ndarray) -> np.ndarray | float:
    """Hilbert-Schmidt norm, batched over leading axes."""
    a = np.asarray(a)
    out = np.sqrt(np.sum(np.abs(a) ** 2, axis=(-2, -1)))
    return float(out) if out.ndim == 0 else out


def trace_herm(a: np.ndarray) -> np.ndarray | float:
    """Real trace of a (stacked) hermitian array."""
    a = np.asarray(a)
    out = np.trace(a, axis1=-2, axis2=-1).real
    return float(out) if np.ndim(out) == 0 else out


def eig_herm(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a (stacked) hermitian array.

    Returns (eigenvalues ascending, eigenvectors as columns).  Eigenvector
    columns follow a deterministic sign convention: the entry of largest
    modulus (first such index on ties) is made real and positive.
    """
    a = herm_part(np.asarray(a))
    try:
        w, u = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(f"hermitian eigensolver failed: {exc}", payload=a) from exc
    piv_idx = np.argmax(np.abs(u), axis=-2)
    pivots = np.take_along_axis(u, piv_idx[..., None, :], axis=-2)[..., 0, :]
    mod = np.abs(pivots)
    safe = np.where(mod > 0, mod, 1.0)
    phase = np.where(mod > 0, pivots / safe, 1.0)
    u = u * np.conj(phase)[..., None, :]
    if not np.iscomplexobj(a):
        u = u.real
    return w, u


def det_herm(a: np.ndarray) -> np.ndarray | float:
    """Determinant via the product of eigenvalues (real for hermitian input)."""
    a = herm_part(np.asarray(a))
    try:
        w = np.linalg.eigvalsh(a)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(f"hermitian eigensolver failed: {exc}", payload=a) from exc
    out = np.prod(w, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def clamp_psd(a: np.ndarray, tol: float = EPS_PSD) -> np.ndarray:
    """Project a hermitian array onto the PSD cone.

    Eigenvalues in [-tol*(1+||a||_F), 0) are clamped to zero; anything
    below that raises ConeViolationError.
    """
    a = herm_part(np.asarray(a))
    w, u = eig_herm(a)
    thr = tol * (1.0 + frob_norm(a))
    wmin = w[..., 0]
    if np.any(wmin < -np.asarray(thr)):
        worst = float(np.min(wmin))
        raise ConeViolationError(
            f"eigenvalue {worst:.6e} below -tol*(1+||a||_F) with tol={tol:.1e}",
            payload=a,
        )
    w = np.maximum(w, 0.0)
    return _assemble(w, u)


def psd_sqrt(a: np.ndarray, tol: float = EPS_PSD) -> np.ndarray:
    """PSD square root via the eigenbasis, batched.

    Input must already be PSD within the clamping tolerance.
    """
    a = herm_part(np.asarray(a))
    w, u = eig_herm(a)
    thr = tol * (1.0 + frob_norm(a))
    if np.any(w[..., 0] < -np.asarray(thr)):
        raise ConeViolationError(
            f"psd_sqrt input has eigenvalue below -tol*(1+||a||_F) (tol={tol:.1e})",
            payload=a,
        )
    w = np.sqrt(np.maximum(w, 0.0))
    return _assemble(w, u)


def _assemble(w: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Rebuild U diag(w) U* for stacked spectra/bases."""
    return herm_part(np.einsum("...ik,...k,...jk->...ij", u, w, np.conj(u)))


def herm_vec_dim(q: int, field: str) -> int:
    """Dimension of the coordinate vector: q + d*q*(q-1)/2."""
    return q + field_dim(field) * (q * (q - 1)) // 2


def _offdiag_pairs(q: int) -> tuple[np.ndarray, np.ndarray]:
    iu = np.triu_indices(q, k=1)
    return iu[0], iu[1]


def vectorize_herm(a: np.ndarray, field: str) -> np.ndarray:
    """Isometric real coordinates of a (stacked) hermitian array.

    <vec(a), vec(b)> = Re tr(a* b) for all hermitian a, b.
    """
    check_field(field)
    a = np.asarray(a)
    q = a.shape[-1]
    rows, cols = _offdiag_pairs(q)
    parts = [np.diagonal(a, axis1=-2, axis2=-1).real]
    if q > 1:
        off = a[..., rows, cols]
        parts.append(np.sqrt(2.0) * off.real)
        if field == COMPLEX:
            parts.append(np.sqrt(2.0) * off.imag)
    return np.concatenate([np.asarray(p, dtype=np.float64) for p in parts], axis=-1)


def devectorize_herm(vec: np.ndarray, q: int, field: str) -> np.ndarray:
    """Inverse of :func:`vectorize_herm`."""
    check_field(field)
    vec = np.asarray(vec, dtype=np.float64)
    rows, cols = _offdiag_pairs(q)
    noff = len(rows)
    out = np.zeros(vec.shape[:-1] + (q, q), dtype=field_dtype(field))
    idx = np.arange(q)
    out[..., idx, idx] = vec[..., :q]
    if q > 1:
        re = vec[..., q:q + noff] / np.sqrt(2.0)
        if field == COMPLEX:
            im = vec[..., q + noff:q + 2 * noff] / np.sqrt(2.0)
            upper = re + 1j * im
        else:
            upper = re
        out[..., rows, cols] = upper
        out[..., cols, rows] = np.conj(upper)
    return out


def herm_basis(q: int, field: str) -> np.ndarray:
    """Stack of the orthonormal basis matrices matching the vec ordering."""
    dim = herm_vec_dim(q, field)
    eye = np.eye(dim)
    return devectorize_herm(eye, q, field)
