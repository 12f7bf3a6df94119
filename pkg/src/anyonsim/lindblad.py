"""Deterministic master-equation propagation and Liouvillian spectral analysis.

The ensemble-averaged dynamics of stochastic exchange phases is pure
dephasing, ``-(Gamma/2) [K, [K, rho]]``, equal to a Lindblad dissipator with
the Hermitian jump ``sqrt(Gamma) K``. Channels with Hermitian jumps and no
Hamiltonian make the Liouvillian a Hermitian (hence normal) superoperator:
real spectrum, orthogonal eigenmodes, no exceptional points. Non-Hermitian
jumps (collective losses) break normality and allow eigenvalue/eigenvector
coalescence, which :func:`detect_ep` locates by the joint signature of a
closing eigenvalue gap and a diverging eigenvector condition number.

Vectorization convention
------------------------
Row stacking: ``vec(rho)`` concatenates the rows of ``rho`` (C-order
``reshape(-1)``), so ``vec(A rho B) = (A kron B^T) vec(rho)`` and

    L = -i (H kron I - I kron H^T)
        + sum_nu gamma_nu [ L_nu kron conj(L_nu)
                            - 1/2 (L_nu^+ L_nu kron I + I kron (L_nu^+ L_nu)^T) ].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla

from .errors import (
    AccuracyError,
    NumericError,
    ParameterError,
    ShapeError,
    SizeError,
    ValidityError,
)
from .linalg import as_square, check_density_matrix, dag, hermitize, vec
from .noise import CorrelationMatrix

LIOUVILLIAN_ENTRY_CAP = 10**6
HERMITIAN_JUMP_TOL = 1e-12


@dataclass(frozen=True)
class LindbladChannel:
    """One dissipative channel: rate * D[jump].

    ``kind`` is "hermitian_dephasing" (jump must be Hermitian; the channel
    equals the double-commutator dephaser) or "relaxation".
    """

    jump: np.ndarray
    rate: float
    kind: str = "relaxation"

    def __post_init__(self):
        m = as_square(self.jump, "jump")
        if not math.isfinite(self.rate):
            raise ParameterError("channel rate must be finite")
        if self.rate < 0.0:
            raise ValidityError(f"channel rate must be >= 0, got {self.rate}")
        if self.kind not in ("hermitian_dephasing", "relaxation"):
            raise ParameterError(f"unknown channel kind {self.kind!r}")
        if self.kind == "hermitian_dephasing":
            dev = np.linalg.norm(m - m.conj().T)
            if dev > HERMITIAN_JUMP_TOL:
                raise ValidityError(f"hermitian_dephasing jump deviates from Hermitian by {dev:.3g}")
            m = hermitize(m)
        object.__setattr__(self, "jump", m)

    @property
    def dim(self) -> int:
        return self.jump.shape[0]


def dephasing_channel(K: np.ndarray, Gamma: float) -> LindbladChannel:
    """Channel whose action is -(Gamma/2)[K, [K, rho]] (jump K, rate Gamma)."""
    return LindbladChannel(K, Gamma, kind="hermitian_dephasing")


def dephasing_channels(currents: Sequence[np.ndarray], Gamma) -> list[LindbladChannel]:
    """Collective Hermitian dephasers realizing -1/2 sum_ab Gamma_ab [K_a, [K_b, .]].

    The (real symmetric PSD) rate matrix is eigendecomposed,
    Gamma = sum_nu g_nu w_nu w_nu^T, and each eigenmode with g_nu > 0 becomes
    one channel with jump sum_a w_nu[a] K_a and rate g_nu.
    """
    gamma = np.atleast_2d(np.asarray(Gamma, dtype=float))
    if gamma.shape != (len(currents), len(currents)):
        raise ShapeError(f"rate matrix {gamma.shape} for {len(currents)} currents")
    evals, evecs = np.linalg.eigh(0.5 * (gamma + gamma.T))
    if evals.min() < -1e-10 * max(1.0, float(np.abs(evals).max())):
        raise ValidityError(f"rate matrix not PSD (eigenvalue {evals.min():.3g})")
    channels = []
    for nu in range(len(evals)):
        if evals[nu] <= 0.0:
            continue
        jump = sum(evecs[a, nu] * currents[a] for a in range(len(currents)))
        channels.append(LindbladChannel(jump, float(evals[nu]), kind="hermitian_dephasing"))
    return channels


def dephasing_generator(K: np.ndarray, Gamma: float) -> Callable[[np.ndarray], np.ndarray]:
    """Superoperator rho -> -(Gamma/2) [K, [K, rho]] for Hermitian K.

    Identical to the Lindblad dissipator with jump sqrt(Gamma) K.
    """
    K = as_square(K, "K")
    dev = np.linalg.norm(K - K.conj().T)
    if dev > HERMITIAN_JUMP_TOL:
        raise ValidityError(f"dephasing generator needs a Hermitian K (deviation {dev:.3g})")
    if Gamma < 0.0:
        raise ValidityError("Gamma must be >= 0")

    def action(rho: np.ndarray) -> np.ndarray:
        inner = K @ rho - rho @ K
        return -0.5 * Gamma * (K @ inner - inner @ K)

    return action


def relaxation_generator(L: np.ndarray, gamma: float) -> Callable[[np.ndarray], np.ndarray]:
    """Superoperator rho -> gamma (L rho L+ - 1/2 {L+L, rho})."""
    L = as_square(L, "L")
    if gamma < 0.0:
        raise ValidityError("gamma must be >= 0")
    LdL = dag(L) @ L

    def action(rho: np.ndarray) -> np.ndarray:
        return gamma * (L @ rho @ dag(L) - 0.5 * (LdL @ rho + rho @ LdL))

    return action


def _rhs(h0: np.ndarray | None, channels: Sequence[LindbladChannel]) -> Callable[[np.ndarray], np.ndarray]:
    ops = [(c.rate, c.jump, dag(c.jump) @ c.jump) for c in channels if c.rate > 0.0]

    def rhs(rho: np.ndarray) -> np.ndarray:
        out = np.zeros_like(rho)
        if h0 is not None:
            out += -1j * (h0 @ rho - rho @ h0)
        for rate, L, LdL in ops:
            out += rate * (L @ rho @ dag(L) - 0.5 * (LdL @ rho + rho @ LdL))
        return out

    return rhs


@dataclass(frozen=True)
class MasterResult:
    """Recorded deterministic evolution: states[k] is rho(times[k])."""

    times: np.ndarray
    states: np.ndarray


def _rk4_run(rhs, rho0, dt: float, n_steps: int, record: np.ndarray) -> np.ndarray:
    rho = rho0.copy()
    rec = [rho0.copy()] if 0 in record else []
    record_set = set(int(k) for k in record)
    for k in range(1, n_steps + 1):
        k1 = rhs(rho)
        k2 = rhs(rho + 0.5 * dt * k1)
        k3 = rhs(rho + 0.5 * dt * k2)
        k4 = rhs(rho + dt * k3)
        rho = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        rho = hermitize(rho)
        if k in record_set:
            rec.append(rho.copy())
    return np.array(rec)


def propagate_master(h0, channels: Sequence[LindbladChannel], rho0, grid, check_halving: bool = True) -> MasterResult:
    """Fixed-step classic RK4 integration of the master equation.

    ``grid`` is a :class:`~anyonsim.trajectories.SimulationGrid`. Trace and
    Hermiticity are preserved to rounding over the whole grid. When
    ``check_halving`` is set, the run is repeated at dt/2 and a final-state
    divergence above 1e-6 raises :class:`AccuracyError`.
    """
    rho0 = check_density_matrix(np.asarray(rho0, dtype=complex))
    d = rho0.shape[0]
    h = None
    if h0 is not None:
        h = as_square(h0, "H0")
        if h.shape[0] != d:
            raise ShapeError(f"H0 dim {h.shape[0]} != rho dim {d}")
        if not np.any(h):
            h = None
    for c in channels:
        if c.dim != d:
            raise ShapeError(f"channel dim {c.dim} != rho dim {d}")
    rhs = _rhs(h, channels)
    rec_steps = grid.record_steps()
    states = _rk4_run(rhs, rho0, grid.dt, grid.n_steps, rec_steps)
    if check_halving:
        fine_rec = np.array([2 * grid.n_steps])
        fine = _rk4_run(rhs, rho0, 0.5 * grid.dt, 2 * grid.n_steps, fine_rec)
        dev = float(np.linalg.norm(states[-1] - fine[-1]))
        if dev > 1e-6:
            raise AccuracyError(f"step-halving check failed: final states differ by {dev:.3g}; reduce dt")
    return MasterResult(times=grid.times(), states=states)


@dataclass(frozen=True)
class Liouvillian:
    """Dense superoperator matrix in the row-stacking convention."""

    matrix: np.ndarray
    dim: int

    def __post_init__(self):
        m = as_square(self.matrix, "Liouvillian")
        if m.shape[0] != self.dim**2:
            raise ShapeError(f"matrix side {m.shape[0]} != dim^2 = {self.dim ** 2}")
        # trace preservation: tr(L rho) = vec(I)^T L vec(rho) = 0 for all rho
        left = vec(np.eye(self.dim)) @ m
        dev = float(np.linalg.norm(left))
        if dev > 1e-10 * max(1.0, float(np.linalg.norm(m))):
            raise ValidityError(f"Liouvillian does not preserve trace (|vec(I)^T L| = {dev:.3g})")
        object.__setattr__(self, "matrix", np.asarray(m, dtype=complex))

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return (self.matrix @ vec(np.asarray(rho, dtype=complex))).reshape(self.dim, self.dim)

    def norm(self) -> float:
        return float(np.linalg.norm(self.matrix))


def build_liouvillian(h0, channels: Sequence[LindbladChannel], entry_cap: int = LIOUVILLIAN_ENTRY_CAP) -> Liouvillian:
    """Assemble the dense superoperator for H0 plus the given channels.

    Raises :class:`SizeError` when the superoperator would hold more than
    ``entry_cap`` entries (default 10^6, i.e. Hilbert dimension <= 31).
    """
    if h0 is None and not channels:
        raise ShapeError("need H0 or at least one channel to fix the dimension")
    d = channels[0].dim if channels else as_square(h0, "H0").shape[0]
    if d**4 > entry_cap:
        raise SizeError(f"superoperator would hold {d ** 4} entries, cap is {entry_cap}")
    eye = np.eye(d, dtype=complex)
    mat = np.zeros((d * d, d * d), dtype=complex)
    if h0 is not None:
        h = as_square(h0, "H0")
        if h.shape[0] != d:
            raise ShapeError(f"H0 dim {h.shape[0]} != channel dim {d}")
        mat += -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for c in channels:
        if c.dim != d:
            raise ShapeError("channel dimensions differ")
        if c.rate == 0.0:
            continue
        L = c.jump
        LdL = dag(L) @ L
        mat += c.rate * (np.kron(L, L.conj()) - 0.5 * (np.kron(LdL, eye) + np.kron(eye, LdL.T)))
    return Liouvillian(matrix=mat, dim=d)


def normality_defect(L) -> float:
    """Relative commutator norm ||L L+ - L+ L||_F / ||L||_F^2 (0 for normal maps)."""
    m = L.matrix if isinstance(L, Liouvillian) else as_square(L, "L")
    nrm = float(np.linalg.norm(m))
    if nrm == 0.0:
        return 0.0
    md = m.conj().T
    return float(np.linalg.norm(m @ md - md @ m)) / nrm**2


@dataclass(frozen=True)
class SpectralReport:
    """Eigenstructure diagnostics of a Liouvillian.

    ``condition_numbers[i]`` is 1/|<l_i|r_i>| with normalized left/right
    eigenvectors; within clusters of (numerically) equal eigenvalues it is
    replaced by the inverse cosine of the largest principal angle between
    the left and right cluster subspaces, unless the cluster is defective
    (geometric multiplicity below algebraic), in which case the raw
    per-vector values are kept — they are what diverges at an exceptional
    point.
    """

    eigenvalues: np.ndarray
    right_eigenvectors: np.ndarray
    condition_numbers: np.ndarray
    min_pair_gap: float
    normality_defect: float
    dim: int = field(default=0)

    def max_condition_number(self) -> float:
        return float(self.condition_numbers.max())

    def to_dict(self) -> dict:
        return {
            "eigenvalues": [[float(w.real), float(w.imag)] for w in self.eigenvalues],
            "condition_numbers": [float(k) for k in self.condition_numbers],
            "min_pair_gap": float(self.min_pair_gap),
            "normality_defect": float(self.normality_defect),
            "dim": int(self.dim),
        }


def _clusters(w: np.ndarray, tol: float) -> list[list[int]]:
    """Group eigenvalue indices whose pairwise distance is below tol (union-find)."""
    n = len(w)
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i in range(n):
        for j in range(i + 1, n):
            if abs(w[i] - w[j]) < tol:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[ri] = rj
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return list(groups.values())


def spectral_report(L: Liouvillian, dissipativity_tol: float = 1e-8) -> SpectralReport:
    """Full dense eigendecomposition with per-eigenvalue condition numbers.

    Eigenvalues are sorted by descending real part (then ascending imaginary
    part). Real parts above ``dissipativity_tol`` (scaled by the matrix
    norm) raise :class:`ValidityError`: a Liouvillian with PSD rates is
    dissipative.
    """
    m = L.matrix
    scale = max(1.0, float(np.linalg.norm(m)))
    try:
        w, vl, vr = sla.eig(m, left=True, right=True)
    except sla.LinAlgError as exc:  # pragma: no cover - LAPACK failure is exotic
        raise NumericError(f"eigensolver failed: {exc}") from exc
    order = np.lexsort((w.imag, -w.real))
    w, vl, vr = w[order], vl[:, order], vr[:, order]
    if float(w.real.max()) > dissipativity_tol * scale:
        raise ValidityError(f"positive eigenvalue real part {w.real.max():.3g}: not dissipative")

    vl = vl / np.linalg.norm(vl, axis=0)
    vr = vr / np.linalg.norm(vr, axis=0)
    kappa = np.empty(len(w))
    for i in range(len(w)):
        overlap = abs(np.vdot(vl[:, i], vr[:, i]))
        kappa[i] = 1.0 / max(overlap, 1e-300)

    cluster_tol = 1e-12 * scale
    for idx in _clusters(w, cluster_tol):
        if len(idx) < 2:
            continue
        lam = complex(np.mean(w[idx]))
        sv = np.linalg.svd(m - lam * np.eye(m.shape[0]), compute_uv=False)
        geometric = int(np.sum(sv < 1e-8 * scale))
        if geometric < len(idx):
            continue  # defective cluster: keep the (diverging) per-vector values
        ql, _ = np.linalg.qr(vl[:, idx])
        qr_, _ = np.linalg.qr(vr[:, idx])
        s = np.linalg.svd(ql.conj().T @ qr_, compute_uv=False)
        kappa[idx] = 1.0 / max(float(s.min()), 1e-300)

    if len(w) > 1:
        diffs = np.abs(w[:, None] - w[None, :])
        gap = float(diffs[np.triu_indices(len(w), k=1)].min())
    else:
        gap = math.inf
    return SpectralReport(
        eigenvalues=w,
        right_eigenvectors=vr,
        condition_numbers=np.maximum(kappa, 1.0),
        min_pair_gap=gap,
        normality_defect=normality_defect(L),
        dim=L.dim,
    )


@dataclass(frozen=True)
class EPCandidate:
    """A sweep point flagged as an exceptional-point candidate."""

    parameter: float
    max_kappa: float
    min_gap: float
    refined_parameter: float
    refined_kappa: float
    refined_gap: float

    def to_dict(self) -> dict:
        return {
            "parameter": self.parameter,
            "max_kappa": self.max_kappa,
            "min_gap": self.min_gap,
            "refined_parameter": self.refined_parameter,
            "refined_kappa": self.refined_kappa,
            "refined_gap": self.refined_gap,
        }


def detect_ep(
    model: Callable[[float], Liouvillian],
    sweep,
    gap_tol_rel: float = 1e-3,
    kappa_tol: float = 1e3,
    refine_rounds: int = 3,
) -> list[EPCandidate]:
    """Scan a one-parameter Liouvillian family for exceptional points.

    A grid point is a candidate when, after bracket refinement around it,
    the minimum eigenvalue pair gap is below ``gap_tol_rel * ||L||`` while
    the maximum eigenvector condition number exceeds ``kappa_tol`` — gap
    closure alone (level crossing of a normal family) never qualifies.
    Refinement runs ``refine_rounds`` bisection rounds on the bracket formed
    by the neighbouring grid points (skipped for a single-point sweep).
    """
    values = np.atleast_1d(np.asarray(sweep, dtype=float))
    if values.size == 0:
        raise ParameterError("sweep grid is empty")

    def evaluate(x: float) -> tuple[float, float, float]:
        L = model(float(x))
        rep = spectral_report(L)
        return rep.max_condition_number(), rep.min_pair_gap, L.norm()

    stats = [evaluate(x) for x in values]
    candidates = []
    for i, x in enumerate(values):
        kap, gap, nrm = stats[i]
        flagged = gap < gap_tol_rel * nrm and kap > kappa_tol
        # near-miss points (gap already closing, kappa elevated) are refined too:
        worth_refining = gap < gap_tol_rel * nrm or kap > 0.1 * kappa_tol
        if not (flagged or worth_refining):
            continue
        best_x, best_kap, best_gap = float(x), kap, gap
        if values.size > 1 and refine_rounds > 0:
            lo = float(values[i - 1]) if i > 0 else float(x)
            hi = float(values[i + 1]) if i + 1 < values.size else float(x)
            for _ in range(refine_rounds):
                for probe in (0.5 * (lo + best_x), 0.5 * (best_x + hi)):
                    if probe == best_x:
                        continue
                    pk, pg, pn = evaluate(probe)
                    if pk > best_kap:
                        lo, hi = min(lo, best_x), max(hi, best_x)
                        best_x, best_kap, best_gap = probe, pk, pg
                lo, hi = 0.5 * (lo + best_x), 0.5 * (best_x + hi)
        nrm_best = evaluate(best_x)[2] if best_x != x else nrm
        if best_gap < gap_tol_rel * nrm_best and best_kap > kappa_tol:
            candidates.append(
                EPCandidate(
                    parameter=float(x),
                    max_kappa=kap,
                    min_gap=gap,
                    refined_parameter=best_x,
                    refined_kappa=best_kap,
                    refined_gap=best_gap,
                )
            )
    return candidates


def dfs_kernel(D: CorrelationMatrix, Ks: Sequence[np.ndarray]) -> list[tuple[np.ndarray, float]]:
    """Noiseless collective channels: eigenvectors of D with zero eigenvalue.

    Returns (collective current, 0.0) pairs; empty when D has full rank.
    The kernel tolerance matches the PSD clipping tolerance of
    :class:`CorrelationMatrix`.
    """
    from .operators import collective_currents

    modes = collective_currents(list(Ks), D, J=1.0)
    out = []
    evals, _ = D.eigh()
    for (k_nu, _rate), lam in zip(modes, evals):
        if lam < 1e-10:
            out.append((k_nu, 0.0))
    return out
