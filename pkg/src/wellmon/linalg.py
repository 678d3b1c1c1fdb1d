"""Symmetric eigendecomposition via cyclic Jacobi rotations.

Feature dimensions in this toolkit stay small (m <= 21), where Jacobi is
simple, robust, and has no external dependency. Quadratic convergence makes
the absolute off-diagonal tolerance of 1e-12 reachable in a handful of
sweeps.
"""

import numpy as np

from .validation import check_symmetric

OFFDIAG_TOL = 1e-12
MAX_SWEEPS = 100


class JacobiConvergenceError(RuntimeError):
    """Raised when the sweep budget is exhausted before convergence."""


def offdiag_norm(A):
    """Frobenius norm of the off-diagonal part."""
    off = A.copy()
    np.fill_diagonal(off, 0.0)
    return float(np.sqrt(np.sum(off * off)))


def jacobi_eigh(A, tol=OFFDIAG_TOL, max_sweeps=MAX_SWEEPS):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi sweeps.

    Returns (eigenvalues, eigenvectors) with eigenvectors in columns,
    unsorted. Convergence is off-diagonal Frobenius norm < tol.
    """
    A = check_symmetric(A, tol=1e-8, name="A")
    n = A.shape[0]
    a = 0.5 * (A + A.T)
    v = np.eye(n)
    if n == 1:
        return np.diag(a).copy(), v
    for _ in range(max_sweeps):
        if offdiag_norm(a) < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta == 0.0:
                    t = 1.0
                elif abs(theta) > 1e150:
                    t = 1.0 / (2.0 * theta)  # asymptotic form, avoids theta^2 overflow
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                # kill round-off asymmetry in the annihilated pair
                a[p, q] = 0.0
                a[q, p] = 0.0
                vec_p = v[:, p].copy()
                vec_q = v[:, q].copy()
                v[:, p] = c * vec_p - s * vec_q
                v[:, q] = s * vec_p + c * vec_q
    else:
        raise JacobiConvergenceError(
            f"off-diagonal norm {offdiag_norm(a):.3e} after {max_sweeps} sweeps"
        )
    return np.diag(a).copy(), v


def eigh_descending(A, tol=OFFDIAG_TOL):
    """Eigenpairs sorted by non-increasing eigenvalue (stable in ties)."""
    w, v = jacobi_eigh(A, tol=tol)
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]


def sym_sqrt(A, neg_tol=-1e-10):
    """Symmetric PSD square root R with R @ R = A.

    Eigenvalues in [neg_tol, 0) are clamped to zero; anything below neg_tol
    raises ValueError naming the offending eigenvalue.
    """
    w, v = jacobi_eigh(A)
    if np.min(w) < neg_tol:
        raise ValueError(
            f"matrix is not positive semi-definite: eigenvalue {np.min(w):.6e}"
        )
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T


def jacobi_eigh_batch(mats, tol=OFFDIAG_TOL, max_sweeps=MAX_SWEEPS):
    """Cyclic Jacobi over a stack of symmetric matrices at once.

    Same pivot schedule and convergence rule as jacobi_eigh, with each
    rotation applied to every still-unconverged matrix in the stack.
    Pivots below tol/(2n) are skipped; the remaining off-diagonal mass then
    stays under tol. Returns (eigenvalues (B, n), eigenvectors (B, n, n)).
    """
    a = np.array(mats, dtype=np.float64)
    if a.ndim != 3 or a.shape[1] != a.shape[2]:
        raise ValueError(f"expected a (B, n, n) stack, got shape {a.shape}")
    batch, n = a.shape[0], a.shape[1]
    v = np.broadcast_to(np.eye(n), (batch, n, n)).copy()
    if n == 1:
        return a[:, :, 0].copy(), v
    skip = tol / (2.0 * n)
    diag_idx = np.arange(n)
    for _ in range(max_sweeps):
        off = a.copy()
        off[:, diag_idx, diag_idx] = 0.0
        norms = np.sqrt(np.sum(off * off, axis=(1, 2)))
        active = norms >= tol
        if not np.any(active):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[:, p, q]
                rotate = active & (np.abs(apq) > skip)
                if not np.any(rotate):
                    continue
                theta = np.zeros(batch)
                np.divide(
                    a[:, q, q] - a[:, p, p], 2.0 * apq, out=theta, where=rotate
                )
                big = np.abs(theta) > 1e150
                theta_safe = np.where(big, 1.0, theta)
                t = np.sign(theta_safe) / (
                    np.abs(theta_safe) + np.sqrt(theta_safe**2 + 1.0)
                )
                t = np.where(big, 0.5 / np.where(big, theta, 1.0), t)
                t = np.where(rotate & (theta == 0.0), 1.0, t)
                t = np.where(rotate, t, 0.0)  # identity rotation elsewhere
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                cs = c[:, None]
                ss = s[:, None]
                col_p = a[:, :, p].copy()
                col_q = a[:, :, q].copy()
                a[:, :, p] = cs * col_p - ss * col_q
                a[:, :, q] = ss * col_p + cs * col_q
                row_p = a[:, p, :].copy()
                row_q = a[:, q, :].copy()
                a[:, p, :] = cs * row_p - ss * row_q
                a[:, q, :] = ss * row_p + cs * row_q
                a[rotate, p, q] = 0.0
                a[rotate, q, p] = 0.0
                vec_p = v[:, :, p].copy()
                vec_q = v[:, :, q].copy()
                v[:, :, p] = cs * vec_p - ss * vec_q
                v[:, :, q] = ss * vec_p + cs * vec_q
    else:
        raise JacobiConvergenceError(
            f"batch off-diagonal norm {np.max(norms):.3e} after {max_sweeps} sweeps"
        )
    return a[:, diag_idx, diag_idx].copy(), v


def sym_sqrt_batch(mats, neg_tol=-1e-10):
    """sym_sqrt over a stack; the error names the offending matrix index."""
    w, v = jacobi_eigh_batch(mats)
    worst = int(np.argmin(np.min(w, axis=1)))
    if np.min(w[worst]) < neg_tol:
        raise ValueError(
            f"matrix {worst} is not positive semi-definite: "
            f"eigenvalue {np.min(w[worst]):.6e}"
        )
    w = np.clip(w, 0.0, None)
    return np.einsum("bik,bk,bjk->bij", v, np.sqrt(w), v)
