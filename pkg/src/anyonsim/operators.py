"""Anyonic operator algebra on small lattices.

Annihilation operators are truncated bosons dressed with Jordan-Wigner
strings, ``a_j = b_j exp(i theta sum_{k<j} n_k)``, which realizes the
distorted exchange algebra

    a_i a_j   = e^{+i theta} a_j a_i        (i < j)
    a_i a_j+  = e^{-i theta} a_j+ a_i       (i < j)

exactly on hardcore spaces. The Hermitian exchange current of a tunneling
link and its two-mode (single-excitation) reduction are built from these.

Basis convention
----------------
Site-major, little-endian in occupancy: basis index
``n = sum_j occ_j * (cutoff+1)**j``, i.e. site 0 is the least significant
digit. All matrices are dense complex arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError, SizeError, ValidityError
from .linalg import SIGMA_X, SIGMA_Y, dag, hermitize

DEFAULT_DIM_CAP = 4096


def reduce_angle(theta: float) -> float:
    """Reduce an angle to [0, 2*pi). Rejects non-finite input."""
    theta = float(theta)
    if not math.isfinite(theta):
        raise ParameterError(f"angle must be finite, got {theta!r}")
    return theta % (2.0 * math.pi)


@dataclass(frozen=True)
class HilbertSpace:
    """Finite occupation-number space of ``n_sites`` sites.

    ``occupancy_cutoff`` is the maximum occupation per site (1 = hardcore);
    the dimension is ``(cutoff+1)**n_sites``.
    """

    n_sites: int
    occupancy_cutoff: int = 1

    def __post_init__(self):
        if self.n_sites < 1:
            raise ParameterError("n_sites must be >= 1")
        if self.occupancy_cutoff < 1:
            raise ParameterError("occupancy_cutoff must be >= 1")
        if self.dim < 2:
            raise ParameterError("space dimension must be >= 2")

    @property
    def local_dim(self) -> int:
        return self.occupancy_cutoff + 1

    @property
    def dim(self) -> int:
        return self.local_dim**self.n_sites

    @property
    def hardcore(self) -> bool:
        return self.occupancy_cutoff == 1

    def occupations(self, index: int) -> tuple[int, ...]:
        """Per-site occupation digits of a basis index (site 0 first)."""
        d = self.local_dim
        return tuple((index // d**j) % d for j in range(self.n_sites))

    def index(self, occs) -> int:
        d = self.local_dim
        return int(sum(int(o) * d**j for j, o in enumerate(occs)))

    def single_excitation_indices(self) -> list[int]:
        """Basis indices of the one-particle sector, in ascending site order."""
        return [self.index([1 if k == j else 0 for k in range(self.n_sites)]) for j in range(self.n_sites)]


@dataclass(frozen=True)
class Link:
    """Tunneling link between two sites.

    ``phase_offset`` is a static phase added to the statistical angle on
    this link; it is what distinguishes parallel paths between the same
    site pair. ``amplitude`` is the tunneling amplitude J_a >= 0.
    """

    i: int
    j: int
    amplitude: float = 1.0
    phase_offset: float = 0.0

    def __post_init__(self):
        if self.i == self.j:
            raise ValidityError(f"link endpoints must differ, got ({self.i}, {self.j})")
        if self.i < 0 or self.j < 0:
            raise ValidityError("link site indices must be nonnegative")
        if not (self.amplitude >= 0.0):
            raise ParameterError(f"link amplitude must be >= 0, got {self.amplitude}")


def _site_operator(space: HilbertSpace, local: np.ndarray, site: int) -> np.ndarray:
    """Embed a local operator at ``site``; site 0 is the least significant factor."""
    d = space.local_dim
    full = np.array([[1.0 + 0.0j]])
    for k in range(space.n_sites - 1, -1, -1):
        full = np.kron(full, local if k == site else np.eye(d))
    return full


def boson_annihilator(space: HilbertSpace, site: int) -> np.ndarray:
    """Truncated bosonic annihilator b_site (b|n> = sqrt(n)|n-1>)."""
    if not 0 <= site < space.n_sites:
        raise ValidityError(f"site {site} outside 0..{space.n_sites - 1}")
    d = space.local_dim
    local = np.diag(np.sqrt(np.arange(1, d, dtype=float)), k=1).astype(complex)
    return _site_operator(space, local, site)


def number_operator(space: HilbertSpace, site: int) -> np.ndarray:
    if not 0 <= site < space.n_sites:
        raise ValidityError(f"site {site} outside 0..{space.n_sites - 1}")
    local = np.diag(np.arange(space.local_dim, dtype=float)).astype(complex)
    return _site_operator(space, local, site)


def build_jw_anyon_ops(space: HilbertSpace, theta: float, dim_cap: int = DEFAULT_DIM_CAP) -> list[np.ndarray]:
    """Anyonic annihilators a_j = b_j exp(i theta sum_{k<j} n_k), one per site.

    The string is diagonal in the occupation basis, so it is applied as an
    elementwise phase on the columns of b_j. Raises :class:`SizeError`
    above ``dim_cap`` dimensions.
    """
    theta = float(theta)
    if not math.isfinite(theta):
        raise ParameterError("theta must be finite")
    if space.dim > dim_cap:
        raise SizeError(f"space dimension {space.dim} exceeds cap {dim_cap}")
    ops = []
    left_count = np.zeros(space.dim)
    d = space.local_dim
    for j in range(space.n_sites):
        string = np.exp(1j * theta * left_count)
        ops.append(boson_annihilator(space, j) * string[None, :])
        occ_j = (np.arange(space.dim) // d**j) % d
        left_count = left_count + occ_j
    return ops


def verify_distorted_algebra(ops: list[np.ndarray], theta: float) -> float:
    """Max residual of the distorted exchange relations over all pairs i < j.

    Returns ``max ||a_i a_j - e^{i theta} a_j a_i||_2`` together with the
    mixed relation ``||a_i a_j+ - e^{-i theta} a_j+ a_i||_2``. On hardcore
    spaces this is a strict check (residual at rounding level); on
    soft-core spaces the value is advisory.
    """
    if not ops:
        raise ShapeError("need at least one operator")
    dims = {op.shape for op in ops}
    if len(dims) != 1 or any(s[0] != s[1] for s in dims):
        raise ShapeError(f"operators must share one square shape, got {dims}")
    phase = np.exp(1j * float(theta))
    worst = 0.0
    for i in range(len(ops)):
        for j in range(i + 1, len(ops)):
            ai, aj = ops[i], ops[j]
            r1 = np.linalg.norm(ai @ aj - phase * (aj @ ai), 2)
            r2 = np.linalg.norm(ai @ dag(aj) - np.conj(phase) * (dag(aj) @ ai), 2)
            worst = max(worst, r1, r2)
    return float(worst)


def exchange_current(ops: list[np.ndarray], link: Link, theta: float) -> np.ndarray:
    """Hermitian exchange current of a link.

    K = i (a_i+ a_j e^{i(theta+delta)} - a_j+ a_i e^{-i(theta+delta)}),
    the generator through which phase noise on the link couples. The result
    is exactly Hermitian (Hermitian part enforced; deviation before
    symmetrization is at rounding level).
    """
    if link.i == link.j:
        raise ValidityError("invalid link: endpoints coincide")
    if link.i >= len(ops) or link.j >= len(ops):
        raise ValidityError(f"link ({link.i}, {link.j}) outside operator list of length {len(ops)}")
    phase = np.exp(1j * (float(theta) + link.phase_offset))
    hop = dag(ops[link.i]) @ ops[link.j]
    k = 1j * (hop * phase - dag(hop) * np.conj(phase))
    return hermitize(k)


def two_mode_K(theta: float) -> np.ndarray:
    """Exchange current restricted to the two-mode single-excitation manifold.

    K(theta) = -sin(theta) sigma_x + cos(theta) sigma_y; squares to the
    identity for every theta.
    """
    theta = float(theta)
    return -math.sin(theta) * SIGMA_X + math.cos(theta) * SIGMA_Y


def single_excitation_block(op: np.ndarray, space: HilbertSpace) -> np.ndarray:
    """Restriction of an operator to the one-particle sector (site order)."""
    idx = space.single_excitation_indices()
    return np.asarray(op)[np.ix_(idx, idx)]


def _fix_eigvec_signs(vectors: np.ndarray) -> np.ndarray:
    """Deterministic sign/phase: first component above tolerance made real positive."""
    out = vectors.copy()
    for c in range(out.shape[1]):
        col = out[:, c]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size:
            pivot = col[nz[0]]
            out[:, c] = col * (np.abs(pivot) / pivot)
    return out


def collective_currents(Ks: list[np.ndarray], D, J: float = 1.0) -> list[tuple[np.ndarray, float]]:
    """Rotate link currents into the eigenbasis of the correlation matrix.

    Returns pairs (K_nu, gamma_nu) with K_nu = sum_a U[a, nu] K_a and
    gamma_nu = 2 J^2 lambda_nu(D), in ascending eigenvalue order with a
    deterministic eigenvector sign convention. Kernel eigenvectors of D
    (clipped at the PSD tolerance) give exactly noiseless channels.
    """
    from .noise import CorrelationMatrix  # local import to avoid a cycle

    if not isinstance(D, CorrelationMatrix):
        D = CorrelationMatrix(np.asarray(D))
    if len(Ks) != D.n:
        raise ShapeError(f"got {len(Ks)} currents for a {D.n}x{D.n} correlation matrix")
    evals, evecs = D.eigh()
    evecs = _fix_eigvec_signs(evecs)
    out = []
    for nu in range(D.n):
        k_nu = sum(evecs[a, nu] * Ks[a] for a in range(D.n))
        out.append((k_nu, float(2.0 * J**2 * evals[nu])))
    return out
