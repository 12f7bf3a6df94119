"""Stochastic Liouville trajectories and their ensemble averages.

A single realization evolves under the noise-driven commutator

    d rho = -i [H0, rho] dt - i sum_a J_a [K_a, rho] o dphi_a     (Stratonovich)

integrated with the Heun (explicit midpoint) scheme, or under the
drift-corrected Ito form

    d rho = ( -i[H0, rho] - 1/2 sum_ab Gamma_ab [K_a, [K_b, rho]] ) dt
            - i sum_a J_a [K_a, rho] dphi_a

integrated with Euler-Maruyama, where Gamma_ab = 2 J_a J_b D_ab matches the
covariance of the sampled increments. Averaging trajectories converges to
the Lindblad master equation of :mod:`anyonsim.lindblad`.

Trajectories are keyed by (master_seed, stream_id) and are bit-reproducible;
ensembles reduce through a fixed pairwise summation tree, so results are
identical for any worker count. States are renormalized to unit trace and
symmetrized every step. The per-step schemes overshoot strict positivity at
order (J dphi)^2 (Euler-Maruyama) or (J dphi)^4 (Heun); the trajectory
positivity guard therefore scales its abort threshold with the
discretization, while exact inputs/outputs keep the strict -1e-8 floor.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import EnsembleError, ParameterError, ShapeError, TrajectoryError, ValidityError
from .linalg import as_square, check_density_matrix, pairwise_sum, pairwise_sum_axis0
from .noise import CorrelationMatrix, RngStream, sample_increments

SCHEMES = ("stratonovich", "ito", "exact")
DEFAULT_MAX_RECORDS = 1000
_CHUNK = 1024  # fixed ensemble chunk; part of the deterministic reduction tree
# Default abort threshold for the smallest eigenvalue along a trajectory.
# Euler-Maruyama realizations transiently leave the state space by O(1)
# amounts at practical step sizes (only their mean converges), so the
# trajectory guard is a divergence detector, not a strict positivity check;
# pass positivity_tol explicitly for tighter policing of fine-step runs.
TRAJECTORY_POSITIVITY_TOL = -10.0


@dataclass(frozen=True)
class SimulationGrid:
    """Uniform time grid with decoupled recording stride.

    ``n_steps = ceil(t_final / dt)``; states are recorded every
    ``record_stride`` steps plus the final step. When ``record_stride`` is
    omitted it is chosen so that at most ``DEFAULT_MAX_RECORDS`` snapshots
    are kept.
    """

    t_final: float
    dt: float
    record_stride: int | None = None

    def __post_init__(self):
        if not (self.t_final > 0.0 and math.isfinite(self.t_final)):
            raise ParameterError(f"t_final must be positive, got {self.t_final}")
        if not (self.dt > 0.0 and math.isfinite(self.dt)):
            raise ParameterError(f"dt must be positive, got {self.dt}")
        if self.dt > self.t_final * (1.0 + 1e-12):
            raise ParameterError("dt must not exceed t_final")
        if self.record_stride is not None and self.record_stride < 1:
            raise ParameterError("record_stride must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.t_final / self.dt - 1e-12))

    @property
    def stride(self) -> int:
        if self.record_stride is not None:
            return self.record_stride
        return max(1, int(math.ceil(self.n_steps / DEFAULT_MAX_RECORDS)))

    def record_steps(self) -> np.ndarray:
        ks = list(range(0, self.n_steps + 1, self.stride))
        if ks[-1] != self.n_steps:
            ks.append(self.n_steps)
        return np.asarray(ks, dtype=int)

    def times(self) -> np.ndarray:
        return self.record_steps() * self.dt


@dataclass(frozen=True)
class StochasticModel:
    """System + noise data for trajectory integration.

    ``currents[a]`` is the Hermitian exchange current of link a,
    ``amplitudes[a]`` its tunneling amplitude, and ``correlations`` the
    classical matrix D. With ``ou`` unset the driving is white:
    ``<dphi_a dphi_b> = 2 D_ab dt``. With ``ou = (sigma, tau_c)`` each link
    carries a stationary Ornstein-Uhlenbeck phase with cross-correlation
    ``sigma^2 D_ab`` and the commutator couples to the process value
    (smooth driving, Stratonovich and exact schemes only). ``hop_terms``
    (the bare link operators T_a, static phases included) are only needed
    for the exact full-phase mode.
    """

    h0: np.ndarray | None
    currents: tuple
    amplitudes: np.ndarray
    correlations: CorrelationMatrix
    rho0: np.ndarray
    hop_terms: tuple | None = None
    ou: tuple[float, float] | None = None

    def __post_init__(self):
        rho0 = check_density_matrix(np.asarray(self.rho0, dtype=complex))
        d = rho0.shape[0]
        ks = tuple(as_square(k, "current") for k in self.currents)
        if not ks:
            raise ShapeError("need at least one link current")
        if any(k.shape[0] != d for k in ks):
            raise ShapeError("current dimensions must match rho0")
        js = np.asarray(self.amplitudes, dtype=float).reshape(-1)
        if js.size != len(ks):
            raise ShapeError(f"{js.size} amplitudes for {len(ks)} currents")
        if np.any(js < 0.0):
            raise ParameterError("amplitudes must be >= 0")
        if self.correlations.n != len(ks):
            raise ShapeError("correlation matrix size must match the number of links")
        if not self.correlations.classical:
            raise ValidityError("trajectory noise needs a classical correlation matrix")
        h = None
        if self.h0 is not None:
            h = as_square(self.h0, "H0")
            if h.shape[0] != d:
                raise ShapeError("H0 dimension must match rho0")
            if not np.any(h):
                h = None
        hops = None
        if self.hop_terms is not None:
            hops = tuple(as_square(t, "hop term") for t in self.hop_terms)
            if len(hops) != len(ks) or any(t.shape[0] != d for t in hops):
                raise ShapeError("hop_terms must mirror the link currents")
        if self.ou is not None:
            sigma, tau_c = self.ou
            if not (sigma >= 0.0 and tau_c > 0.0):
                raise ParameterError("ou must be (sigma >= 0, tau_c > 0)")
            object.__setattr__(self, "ou", (float(sigma), float(tau_c)))
        object.__setattr__(self, "h0", h)
        object.__setattr__(self, "currents", ks)
        object.__setattr__(self, "amplitudes", js)
        object.__setattr__(self, "rho0", rho0)
        object.__setattr__(self, "hop_terms", hops)

    @property
    def dim(self) -> int:
        return self.rho0.shape[0]

    @property
    def n_links(self) -> int:
        return len(self.currents)

    def rate_matrix(self) -> np.ndarray:
        """Effective dephasing rates Gamma_ab = 2 J_a J_b x D_ab.

        For white driving x = 1 (the diffusion constant is folded into the
        amplitudes); for OU driving x = sigma^2 tau_c, the white-noise-limit
        rate of the colored process.
        """
        J = self.amplitudes
        x = 1.0 if self.ou is None else self.ou[0] ** 2 * self.ou[1]
        return (2.0 * x * np.outer(J, J) * self.correlations.entries).real

    def rate_scale(self) -> float:
        """sum_a Gamma_aa ||K_a||^2 — sets the discretization-aware positivity guard."""
        gamma = self.rate_matrix()
        return float(
            sum(gamma[a, a] * np.linalg.norm(self.currents[a], 2) ** 2 for a in range(self.n_links))
        )


def two_mode_model(
    theta: float,
    amplitudes,
    correlations: CorrelationMatrix,
    rho0: np.ndarray,
    offsets=None,
    h0: np.ndarray | None = None,
    ou: tuple[float, float] | None = None,
) -> StochasticModel:
    """Two-mode single-excitation model with one current per link.

    Link a couples through K(theta + offsets[a]); offsets default to all
    zero (parallel links sharing one bond and one path phase).
    """
    from .operators import two_mode_K

    js = np.asarray(amplitudes, dtype=float).reshape(-1)
    if offsets is None:
        offsets = np.zeros(js.size)
    offsets = np.asarray(offsets, dtype=float).reshape(-1)
    if offsets.size != js.size:
        raise ShapeError("offsets must match amplitudes")
    lower = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)  # |site1><site0|
    currents = tuple(two_mode_K(theta + d) for d in offsets)
    hops = tuple(np.exp(1j * (theta + d)) * lower for d in offsets)
    return StochasticModel(
        h0=h0,
        currents=currents,
        amplitudes=js,
        correlations=correlations,
        rho0=rho0,
        hop_terms=hops,
        ou=ou,
    )


@dataclass(frozen=True)
class TrajectoryResult:
    times: np.ndarray
    states: np.ndarray
    stream_id: int


@dataclass(frozen=True)
class EnsembleResult:
    """Trajectory mean with per-observable standard errors.

    ``mean_observables[o, k]`` and ``stderr_observables[o, k]`` refer to
    observable o at recorded time k.
    """

    times: np.ndarray
    mean_states: np.ndarray
    mean_observables: np.ndarray
    stderr_observables: np.ndarray
    n_traj: int
    scheme: str = field(default="stratonovich")


def _noise_term(rho, currents, amplitudes, dphi):
    """-i sum_a J_a dphi_a [K_a, rho] for a batch (B, d, d) and dphi (B, n)."""
    out = np.zeros_like(rho)
    for a, k in enumerate(currents):
        coeff = (-1j * amplitudes[a]) * dphi[:, a]
        out += coeff[:, None, None] * (k @ rho - rho @ k)
    return out


def _hamiltonian_term(rho, h0):
    return -1j * (h0 @ rho - rho @ h0)


def _ito_drift(rho, currents, gamma):
    """-1/2 sum_ab Gamma_ab [K_a, [K_b, rho]] on a batch."""
    inner = [k @ rho - rho @ k for k in currents]
    out = np.zeros_like(rho)
    for a, ka in enumerate(currents):
        mix = np.zeros_like(rho)
        for b in range(len(currents)):
            if gamma[a, b] != 0.0:
                mix += gamma[a, b] * inner[b]
        out += ka @ mix - mix @ ka
    return -0.5 * out


def _renormalize(rho):
    rho = 0.5 * (rho + rho.conj().transpose(0, 2, 1))
    tr = np.einsum("bii->b", rho).real
    return rho / tr[:, None, None]


def _min_eigenvalue(rho):
    """Smallest eigenvalue per batch entry (closed form for qubits)."""
    if rho.shape[-1] == 2:
        half_tr = 0.5 * np.einsum("bii->b", rho).real
        det = (rho[:, 0, 0] * rho[:, 1, 1] - rho[:, 0, 1] * rho[:, 1, 0]).real
        disc = np.sqrt(np.maximum(half_tr**2 - det, 0.0))
        return half_tr - disc
    return np.linalg.eigvalsh(rho)[..., 0]


def stratonovich_step(rho, h0, Ks, Js, dphi, dt, positivity_tol: float = -1e-8):
    """One Heun (midpoint-predictor) Stratonovich step for a single state.

    The output is symmetrized and renormalized to unit trace. An eigenvalue
    below ``positivity_tol`` raises :class:`TrajectoryError`.
    """
    rho = as_square(rho, "rho")[None, :, :].astype(complex)
    Js = np.asarray(Js, dtype=float).reshape(-1)
    dphi = np.asarray(dphi, dtype=float).reshape(1, -1)
    if dphi.shape[1] != len(Ks) or Js.size != len(Ks):
        raise ShapeError("dphi and Js must have one entry per current")
    ks = [as_square(k, "K") for k in Ks]

    def total(r):
        out = _noise_term(r, ks, Js, dphi)
        if h0 is not None and np.any(h0):
            out += _hamiltonian_term(r, np.asarray(h0, dtype=complex)) * dt
        return out

    predictor = rho + total(rho)
    out = _renormalize(rho + 0.5 * (total(rho) + total(predictor)))
    lo = float(_min_eigenvalue(out)[0])
    if lo < positivity_tol:
        raise TrajectoryError(f"positivity violated: eigenvalue {lo:.3g}", step=0)
    return out[0]


def ito_step(rho, h0, Ks, Js, Gamma, dphi, dt, positivity_tol: float = -1e-8):
    """One Euler-Maruyama step of the Ito form for a single state.

    ``Gamma`` must be the rate matrix consistent with the covariance of the
    increments ``dphi`` (i.e. 2 J_a J_b D_ab). Trace is preserved to
    rounding before the final renormalization.
    """
    rho = as_square(rho, "rho")[None, :, :].astype(complex)
    Js = np.asarray(Js, dtype=float).reshape(-1)
    dphi = np.asarray(dphi, dtype=float).reshape(1, -1)
    gamma = np.asarray(Gamma.entries if isinstance(Gamma, CorrelationMatrix) else Gamma, dtype=float)
    gamma = np.atleast_2d(gamma)
    if gamma.shape != (len(Ks), len(Ks)):
        raise ShapeError("Gamma must be n_links x n_links")
    ks = [as_square(k, "K") for k in Ks]
    incr = _ito_drift(rho, ks, gamma) * dt + _noise_term(rho, ks, Js, dphi)
    if h0 is not None and np.any(h0):
        incr += _hamiltonian_term(rho, np.asarray(h0, dtype=complex)) * dt
    out = _renormalize(rho + incr)
    lo = float(_min_eigenvalue(out)[0])
    if lo < positivity_tol:
        raise TrajectoryError(f"positivity violated: eigenvalue {lo:.3g}", step=0)
    return out[0]


def _ou_increments(model: StochasticModel, grid: SimulationGrid, master_seed: int, ids) -> np.ndarray:
    """Trapezoid increments phi(t) dt of cross-correlated stationary OU phases.

    The smooth colored drive enters the commutator through its value, so the
    per-step increment is the trapezoid of the path over the step. The
    recursion is vectorized over the chunk; per-trajectory draws come from
    the trajectory streams, so results do not depend on the chunking.
    """
    sigma, tau_c = model.ou
    n_steps, n, B = grid.n_steps, model.n_links, len(ids)
    decay = math.exp(-grid.dt / tau_c)
    kick = math.sqrt(1.0 - decay * decay)
    z = np.empty((n_steps + 1, B, n))
    for b, sid in enumerate(ids):
        z[:, b, :] = RngStream(master_seed, sid).generator().standard_normal((n_steps + 1, n))
    paths = np.empty_like(z)
    paths[0] = z[0]
    for k in range(1, n_steps + 1):
        paths[k] = paths[k - 1] * decay + kick * z[k]
    root = model.correlations.sqrt().real
    mixed = sigma * np.einsum("tbn,mn->tbm", paths, root)
    return 0.5 * (mixed[:-1] + mixed[1:]) * grid.dt


def _trajectory_positivity_tol(model: StochasticModel, dt: float, override: float | None) -> float:
    if override is not None:
        return override
    return TRAJECTORY_POSITIVITY_TOL


def _evolve_chunk(model: StochasticModel, grid: SimulationGrid, scheme: str, master_seed: int, ids, tol: float):
    """Evolve the trajectories of one chunk; returns states (n_rec, B, d, d).

    Raises :class:`TrajectoryError` for the first trajectory whose recorded
    state dips below the positivity tolerance.
    """
    ids = list(ids)
    B, d = len(ids), model.dim
    n_steps = grid.n_steps
    if model.ou is None:
        dphi = np.empty((n_steps, B, model.n_links))
        for b, sid in enumerate(ids):
            dphi[:, b, :] = sample_increments(
                model.correlations, grid.dt, n_steps, RngStream(master_seed, sid)
            )
    else:
        if scheme == "ito":
            raise ValidityError("the Ito drift correction applies to white driving only")
        dphi = _ou_increments(model, grid, master_seed, ids)
    if scheme == "exact":
        return _evolve_chunk_exact(model, grid, dphi, ids, tol)

    gamma = model.rate_matrix() if scheme == "ito" else None
    currents, js, h0, dt = model.currents, model.amplitudes, model.h0, grid.dt
    rho = np.broadcast_to(model.rho0, (B, d, d)).copy()
    record_set = {int(k): i for i, k in enumerate(grid.record_steps())}
    out = np.empty((len(record_set), B, d, d), dtype=complex)

    def check_and_store(step, rec_index):
        lo = _min_eigenvalue(rho)
        finite = np.isfinite(lo)
        if not finite.all() or float(lo.min()) < tol:
            bad = int(np.argmin(np.where(finite, lo, -np.inf)))
            raise TrajectoryError(
                f"trajectory left the state space: eigenvalue {float(lo[bad]):.3g} at step {step}",
                step=step,
                stream_id=ids[bad],
            )
        out[rec_index] = rho

    if 0 in record_set:
        check_and_store(0, record_set[0])
    for k in range(n_steps):
        dp = dphi[k]
        if scheme == "stratonovich":
            g0 = _noise_term(rho, currents, js, dp)
            if h0 is not None:
                g0 += _hamiltonian_term(rho, h0) * dt
            pred = rho + g0
            g1 = _noise_term(pred, currents, js, dp)
            if h0 is not None:
                g1 += _hamiltonian_term(pred, h0) * dt
            rho = _renormalize(rho + 0.5 * (g0 + g1))
        else:  # ito
            incr = _ito_drift(rho, currents, gamma) * dt + _noise_term(rho, currents, js, dp)
            if h0 is not None:
                incr += _hamiltonian_term(rho, h0) * dt
            rho = _renormalize(rho + incr)
        if (k + 1) in record_set:
            check_and_store(k + 1, record_set[k + 1])
    return out


def _evolve_chunk_exact(model, grid, dphi, ids, tol):
    """Full-phase mode: exact unitary per step with midpoint accumulated phases."""
    if model.hop_terms is None:
        raise ValidityError("exact scheme needs the model's hop_terms")
    B, d = len(ids), model.dim
    record_set = {int(k): i for i, k in enumerate(grid.record_steps())}
    out = np.empty((len(record_set), B, d, d), dtype=complex)
    h0 = model.h0 if model.h0 is not None else np.zeros((d, d), dtype=complex)
    for b in range(B):
        rho = model.rho0.copy()
        phase = np.zeros(model.n_links)
        if 0 in record_set:
            out[record_set[0], b] = rho
        for k in range(grid.n_steps):
            mid = phase + 0.5 * dphi[k, b]
            h = h0.copy()
            for a, hop in enumerate(model.hop_terms):
                h -= model.amplitudes[a] * (hop * np.exp(1j * mid[a]) + hop.conj().T * np.exp(-1j * mid[a]))
            u = sla.expm(-1j * h * grid.dt)
            rho = u @ rho @ u.conj().T
            phase += dphi[k, b]
            if (k + 1) in record_set:
                lo = float(_min_eigenvalue(rho[None])[0])
                if lo < tol:
                    raise TrajectoryError(
                        f"positivity violated: eigenvalue {lo:.3g}", step=k + 1, stream_id=ids[b]
                    )
                out[record_set[k + 1], b] = rho
    return out


def run_trajectory(
    model: StochasticModel,
    grid: SimulationGrid,
    stream: RngStream,
    scheme: str = "stratonovich",
    positivity_tol: float | None = None,
) -> TrajectoryResult:
    """Integrate a single stochastic trajectory; deterministic given ``stream``."""
    if scheme not in SCHEMES:
        raise ParameterError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
    tol = _trajectory_positivity_tol(model, grid.dt, positivity_tol)
    states = _evolve_chunk(model, grid, scheme, stream.master_seed, [stream.stream_id], tol)
    return TrajectoryResult(times=grid.times(), states=states[:, 0], stream_id=stream.stream_id)


def _chunk_task(args):
    model, grid, scheme, master_seed, ids, tol, observables = args
    try:
        states = _evolve_chunk(model, grid, scheme, master_seed, ids, tol)
    except TrajectoryError as exc:
        return ("abort", exc.stream_id if exc.stream_id is not None else -1, str(exc))
    vals = np.einsum("rbij,oji->bro", states, observables).real  # (B, n_rec, n_obs)
    sum_states = pairwise_sum_axis0(states.transpose(1, 0, 2, 3).copy())
    sum_obs = pairwise_sum_axis0(vals.copy())
    sumsq_obs = pairwise_sum_axis0(vals**2)
    return ("ok", sum_states, sum_obs, sumsq_obs)


def ensemble_average(
    model: StochasticModel,
    grid: SimulationGrid,
    n_traj: int,
    scheme: str = "stratonovich",
    master_seed: int = 0,
    observables=None,
    n_workers: int = 1,
    positivity_tol: float | None = None,
) -> EnsembleResult:
    """Average ``n_traj`` trajectories with stream ids 0..n_traj-1.

    The reduction is a fixed pairwise summation tree over trajectories (in
    fixed chunks of 1024 streams), so the result is bit-identical for any
    ``n_workers``. Observables default to the initial state projector
    (survival probability); pass Hermitian matrices for more.
    """
    if n_traj < 2:
        raise ParameterError("n_traj must be >= 2")
    if scheme not in SCHEMES:
        raise ParameterError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
    if observables is None:
        observables = [model.rho0]
    obs = np.array([as_square(o, "observable") for o in observables])
    tol = _trajectory_positivity_tol(model, grid.dt, positivity_tol)
    chunks = [range(lo, min(lo + _CHUNK, n_traj)) for lo in range(0, n_traj, _CHUNK)]
    tasks = [(model, grid, scheme, master_seed, list(ids), tol, obs) for ids in chunks]

    if n_workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(_chunk_task, tasks))
    else:
        results = [_chunk_task(t) for t in tasks]

    failed = [r[1] for r in results if r[0] == "abort"]
    if failed:
        raise EnsembleError(f"{len(failed)} trajectory chunk(s) aborted", stream_ids=sorted(failed))

    sum_states = pairwise_sum([r[1] for r in results])
    sum_obs = pairwise_sum([r[2] for r in results])
    sumsq_obs = pairwise_sum([r[3] for r in results])

    mean_states = sum_states / n_traj
    mean_obs = (sum_obs / n_traj).T  # (n_obs, n_rec)
    var = (sumsq_obs - n_traj * (sum_obs / n_traj) ** 2) / max(n_traj - 1, 1)
    stderr = np.sqrt(np.clip(var, 0.0, None) / n_traj).T
    for k in range(mean_states.shape[0]):
        check_density_matrix(mean_states[k], herm_tol=1e-8, trace_tol=1e-8, eig_floor=-1e-6, name=f"mean state {k}")
    return EnsembleResult(
        times=grid.times(),
        mean_states=mean_states,
        mean_observables=mean_obs,
        stderr_observables=stderr,
        n_traj=n_traj,
        scheme=scheme,
    )


def survival_probability(result, rho0: np.ndarray) -> np.ndarray:
    """s(t) = tr(rho(t) rho0) over the recorded times of any result object."""
    rho0 = as_square(rho0, "rho0")
    states = getattr(result, "mean_states", None)
    if states is None:
        states = result.states
    states = np.asarray(states)
    if states.shape[-1] != rho0.shape[0]:
        raise ShapeError("rho0 dimension does not match recorded states")
    return np.einsum("kij,ji->k", states, rho0).real
