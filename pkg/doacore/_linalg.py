from typing import Tuple

import numpy as np

from ._exceptions import NumericError

__all__ = ["eigh"]


def _jacobi(
    matrices: np.ndarray, tol: float, max_sweeps: int
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Cyclic Jacobi rotations over a batch of real symmetric matrices.

    Returns the unsorted eigenvalues, shape `(B, n)`, and the eigenvectors as
    columns, shape `(B, n, n)`.
    """
    a = matrices.copy()
    batch, n, _ = a.shape
    v = np.broadcast_to(np.eye(n), a.shape).copy()
    scale = np.linalg.norm(a, axis=(1, 2))
    upper = np.triu_indices(n, k=1)

    for sweep in range(max_sweeps + 1):
        off = np.sqrt(2 * np.sum(a[:, upper[0], upper[1]] ** 2, axis=1))
        if np.all(off <= tol * scale):
            return np.diagonal(a, axis1=1, axis2=2).copy(), v
        if sweep == max_sweeps:
            break

        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[:, p, q]
                active = np.abs(apq) > 1e-18 * scale
                if not np.any(active):
                    continue
                theta = (a[:, q, q] - a[:, p, p]) / (2 * np.where(active, apq, 1.0))
                t = np.where(theta >= 0, 1.0, -1.0) / (np.abs(theta) + np.sqrt(theta ** 2 + 1))
                t = np.where(active, t, 0.0)
                c = (1 / np.sqrt(t ** 2 + 1))[:, None]
                s = t[:, None] * c

                col_p, col_q = a[:, :, p].copy(), a[:, :, q].copy()
                a[:, :, p] = c * col_p - s * col_q
                a[:, :, q] = s * col_p + c * col_q
                row_p, row_q = a[:, p, :].copy(), a[:, q, :].copy()
                a[:, p, :] = c * row_p - s * row_q
                a[:, q, :] = s * row_p + c * row_q
                vec_p, vec_q = v[:, :, p].copy(), v[:, :, q].copy()
                v[:, :, p] = c * vec_p - s * vec_q
                v[:, :, q] = s * vec_p + c * vec_q

    raise NumericError(f"Jacobi eigensolver did not converge in {max_sweeps} sweeps.")


def _complex_vectors(
    hermitian: np.ndarray, values: np.ndarray, vectors: np.ndarray, group_tol: float
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Recover `M` orthonormal complex eigenvectors from the `2M` real
    eigenvectors of the embedded form, where every eigenvalue appears twice.
    """
    m = hermitian.shape[0]
    order = np.argsort(values, kind="stable")
    values, vectors = values[order], vectors[:, order]
    candidates = vectors[:m] + 1j * vectors[m:]

    accepted = []
    start = 0
    while start < 2 * m:
        end = start + 1
        while end < 2 * m and values[end] - values[end - 1] <= group_tol:
            end += 1
        for _ in range(end // 2 - len(accepted)):
            group = candidates[:, start:end].copy()
            for vector in accepted:
                group -= np.outer(vector, vector.conj() @ group)
            norms = np.linalg.norm(group, axis=0)
            best = int(np.argmax(norms))
            accepted.append(group[:, best] / norms[best])
        start = end

    eigenvectors = np.stack(accepted, axis=1)
    eigenvalues = np.real(np.einsum("ij,ik,kj->j", eigenvectors.conj(), hermitian, eigenvectors))
    order = np.argsort(eigenvalues, kind="stable")
    return eigenvalues[order], eigenvectors[:, order]


def eigh(
    matrices: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Eigendecomposition of one Hermitian matrix, or a batch of shape `(B, M, M)`.

    The complex matrix `A + iB` is embedded as the real symmetric matrix
    `[[A, -B], [B, A]]` and diagonalized with cyclic Jacobi rotations.
    Eigenvalues are returned in ascending order, with the matching
    orthonormal eigenvectors as columns.

    ```python
    values, vectors = doacore.eigh(covariance)
    noise_subspace = vectors[..., :-1]
    ```
    """
    h = np.asarray(matrices, dtype=np.complex128)
    single = h.ndim == 2
    if single:
        h = h[None]
    if h.ndim != 3 or h.shape[1] != h.shape[2] or h.shape[1] == 0:
        raise NumericError(f"Expected square matrices, but got shape {np.shape(matrices)}.")
    if not np.all(np.isfinite(h)):
        raise NumericError("Cannot decompose a matrix with non-finite entries.")

    adjoint = np.conj(np.swapaxes(h, 1, 2))
    norms = np.linalg.norm(h, axis=(1, 2))
    asymmetry = np.linalg.norm(h - adjoint, axis=(1, 2))
    if np.any(asymmetry > 1e-9 * np.maximum(norms, 1.0)):
        raise NumericError("Matrix is not Hermitian.")
    h = 0.5 * (h + adjoint)

    real, imag = h.real, h.imag
    embedded = np.concatenate(
        [
            np.concatenate([real, -imag], axis=2),
            np.concatenate([imag, real], axis=2),
        ],
        axis=1,
    )
    values, vectors = _jacobi(embedded, tol, max_sweeps)

    eigenvalues = np.empty(h.shape[:2])
    eigenvectors = np.empty(h.shape, dtype=np.complex128)
    for index in range(h.shape[0]):
        group_tol = 1e-9 * max(norms[index], 1e-300)
        eigenvalues[index], eigenvectors[index] = _complex_vectors(
            h[index], values[index], vectors[index], group_tol
        )

    if single:
        return eigenvalues[0], eigenvectors[0]
    return eigenvalues, eigenvectors
