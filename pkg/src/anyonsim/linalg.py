"""Small dense linear-algebra helpers used throughout the package.

Everything operates on plain complex ``numpy`` arrays. Density matrices and
operators are square; no sparsity is used (desk-scale dimensions only).
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError, ValidityError

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
SIGMA_MINUS = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
ID2 = np.eye(2, dtype=complex)


def dag(a: np.ndarray) -> np.ndarray:
    return a.conj().T


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def anticommutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b + b @ a


def hermitize(a: np.ndarray) -> np.ndarray:
    """Hermitian part (A + A†)/2; exact involution for already-Hermitian input."""
    return 0.5 * (a + a.conj().T)


def as_square(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"{name} must be square, got shape {a.shape}")
    return a


def check_hermitian(a: np.ndarray, tol: float = 1e-12, name: str = "matrix") -> np.ndarray:
    a = as_square(a, name)
    dev = np.linalg.norm(a - a.conj().T)
    if dev > tol * max(1.0, np.linalg.norm(a)):
        raise ValidityError(f"{name} is not Hermitian (deviation {dev:.3g})")
    return a


def check_density_matrix(
    rho: np.ndarray,
    herm_tol: float = 1e-10,
    trace_tol: float = 1e-10,
    eig_floor: float = -1e-8,
    name: str = "rho",
) -> np.ndarray:
    """Validate the density-matrix invariants: Hermitian, unit trace, positive.

    ``eig_floor`` is the admissible transient negativity of the smallest
    eigenvalue; anything below it raises :class:`ValidityError`.
    """
    rho = as_square(rho, name)
    herm_dev = np.linalg.norm(rho - rho.conj().T)
    if herm_dev > herm_tol:
        raise ValidityError(f"{name} not Hermitian to {herm_tol:g} (deviation {herm_dev:.3g})")
    tr_dev = abs(np.trace(rho) - 1.0)
    if tr_dev > trace_tol:
        raise ValidityError(f"{name} trace deviates from 1 by {tr_dev:.3g}")
    lo = float(np.linalg.eigvalsh(hermitize(rho)).min())
    if lo < eig_floor:
        raise ValidityError(f"{name} has eigenvalue {lo:.3g} below floor {eig_floor:g}")
    return rho


def pure_state_density(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=complex).reshape(-1)
    return np.outer(u, u.conj())


def check_unit_vector(u: np.ndarray, tol: float = 1e-12, name: str = "state") -> np.ndarray:
    u = np.asarray(u, dtype=complex).reshape(-1)
    nrm = np.linalg.norm(u)
    if abs(nrm - 1.0) > tol:
        raise ValidityError(f"{name} is not normalized (norm {nrm!r})")
    return u


def expectation(op: np.ndarray, u: np.ndarray) -> complex:
    """<u|op|u> for a ket ``u``."""
    return complex(np.vdot(u, op @ u))


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    """(1/2)||rho - sigma||_1 via eigenvalues of the Hermitian difference."""
    diff = hermitize(np.asarray(rho) - np.asarray(sigma))
    return 0.5 * float(np.abs(np.linalg.eigvalsh(diff)).sum())


def vec(rho: np.ndarray) -> np.ndarray:
    """Row-stacking vectorization: concatenate rows (C order)."""
    return np.asarray(rho).reshape(-1)


def unvec(v: np.ndarray, dim: int) -> np.ndarray:
    return np.asarray(v).reshape(dim, dim)


def pairwise_sum(items: list) -> np.ndarray:
    """Sum a list of arrays with a fixed binary-tree association.

    The tree shape depends only on ``len(items)``, which makes reductions
    reproducible regardless of how the leaves were produced (serial or by
    any number of workers).
    """
    n = len(items)
    if n == 0:
        raise ValueError("pairwise_sum of empty list")
    if n == 1:
        return items[0]
    mid = n // 2
    return pairwise_sum(items[:mid]) + pairwise_sum(items[mid:])


def pairwise_sum_axis0(stack: np.ndarray) -> np.ndarray:
    """Pairwise-tree sum over axis 0 of a stacked array.

    Equivalent to ``pairwise_sum(list(stack))`` but vectorized: each round
    adds adjacent pairs, with an odd trailing element carried through. The
    association tree is fixed by ``stack.shape[0]`` alone.
    """
    while stack.shape[0] > 1:
        m = stack.shape[0] // 2
        head = stack[: 2 * m : 2] + stack[1 : 2 * m : 2]
        if stack.shape[0] % 2:
            stack = np.concatenate([head, stack[-1:]], axis=0)
        else:
            stack = head
    return stack[0]


def bloch_vector(rho: np.ndarray) -> np.ndarray:
    """(<sx>, <sy>, <sz>) of a qubit density matrix."""
    rho = as_square(rho, "rho")
    if rho.shape != (2, 2):
        raise ShapeError("bloch_vector needs a 2x2 density matrix")
    return np.array(
        [
            np.trace(rho @ SIGMA_X).real,
            np.trace(rho @ SIGMA_Y).real,
            np.trace(rho @ SIGMA_Z).real,
        ]
    )


def bloch_state(r) -> np.ndarray:
    """Qubit density matrix (I + r . sigma)/2 for a Bloch vector with |r| <= 1."""
    r = np.asarray(r, dtype=float).reshape(3)
    nrm = np.linalg.norm(r)
    if nrm > 1.0 + 1e-12:
        raise ValidityError(f"Bloch vector norm {nrm} exceeds 1")
    return 0.5 * (ID2 + r[0] * SIGMA_X + r[1] * SIGMA_Y + r[2] * SIGMA_Z)
