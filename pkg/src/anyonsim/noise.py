"""Stochastic phase noise: correlated increments and effective dephasing rates.

Every noise specification (white/Wiener, Ornstein-Uhlenbeck, quantum bath)
maps to the same Lindblad dephasing structure; only the scalar rate
``Gamma = 2 J^2 x`` changes, with ``x`` the phase-diffusion constant, the
integrated correlation ``sigma^2 tau_c``, or the symmetrized zero-frequency
bath spectrum ``S_FF(0)``.

Correlated increments across several links are Gaussian with covariance
``<dphi_a dphi_b> = 2 D_ab dt``; they are generated through the symmetric
matrix square root of ``2 D dt``, which handles rank-deficient D exactly
(kernel components are identically zero, so perfectly correlated or
anti-correlated links produce bitwise-equal or bitwise-opposite increments).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import integrate

from .errors import NumericError, ParameterError, ShapeError, ValidityError

PSD_EIG_TOL = -1e-10
HERMITICITY_TOL = 1e-12


@dataclass(frozen=True)
class BathSpectrum:
    """Ohmic quantum bath: S_FF(w) = coupling * w * coth(w/2T) * exp(-|w|/cutoff).

    Energy units with hbar = k_B = 1. Only the Ohmic family is provided;
    the zero-frequency limit is finite for every T >= 0.
    """

    coupling: float
    temperature: float
    cutoff: float
    family: str = "ohmic"

    def __post_init__(self):
        if self.family != "ohmic":
            raise ParameterError(f"unsupported bath family {self.family!r}")
        if not (self.coupling >= 0.0 and math.isfinite(self.coupling)):
            raise ParameterError("coupling must be finite and >= 0")
        if not (self.temperature >= 0.0 and math.isfinite(self.temperature)):
            raise ParameterError("temperature must be finite and >= 0")
        if not (self.cutoff > 0.0 and math.isfinite(self.cutoff)):
            raise ParameterError("cutoff must be finite and > 0")


@dataclass(frozen=True)
class Wiener:
    """White phase noise, dphi = sqrt(2 d_phi) dW."""

    d_phi: float

    def __post_init__(self):
        if not (self.d_phi >= 0.0 and math.isfinite(self.d_phi)):
            raise ParameterError("d_phi must be finite and >= 0")


@dataclass(frozen=True)
class OrnsteinUhlenbeck:
    """Colored phase noise with C(tau) = sigma^2 exp(-|tau|/tau_c)."""

    sigma: float
    tau_c: float

    def __post_init__(self):
        if not (self.sigma >= 0.0 and math.isfinite(self.sigma)):
            raise ParameterError("sigma must be finite and >= 0")
        if not (self.tau_c > 0.0 and math.isfinite(self.tau_c)):
            raise ParameterError("tau_c must be finite and > 0")


@dataclass(frozen=True)
class QuantumBath:
    """Operator-valued phase generated by a Gaussian bath."""

    spectrum: BathSpectrum


NoiseSpec = Union[Wiener, OrnsteinUhlenbeck, QuantumBath]


@dataclass(frozen=True)
class CorrelationMatrix:
    """Hermitian positive-semidefinite cross-correlation matrix D_ab.

    ``classical`` marks the real-symmetric case that drives sampled
    increments; complex Hermitian matrices are accepted for quantum
    cross-spectra S_ab(0). Eigenvalues in [PSD_EIG_TOL, 0) are treated as
    exact zeros (benign rounding must not abort runs); anything below the
    tolerance raises :class:`ValidityError`.
    """

    entries: np.ndarray
    classical: bool = field(default=True)

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ShapeError(f"correlation matrix must be square, got {m.shape}")
        dev = np.linalg.norm(m - m.conj().T)
        if dev > HERMITICITY_TOL * max(1.0, np.linalg.norm(m)):
            raise ValidityError(f"correlation matrix not Hermitian (deviation {dev:.3g})")
        if self.classical and np.abs(m.imag).max(initial=0.0) > HERMITICITY_TOL:
            raise ValidityError("classical correlation matrix must be real symmetric")
        lo = float(np.linalg.eigvalsh(0.5 * (m + m.conj().T)).min())
        if lo < PSD_EIG_TOL:
            raise ValidityError(f"correlation matrix not PSD (eigenvalue {lo:.3g})")
        object.__setattr__(self, "entries", m)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def eigh(self) -> tuple[np.ndarray, np.ndarray]:
        """Ascending eigenvalues (negatives within tolerance clipped to 0) and eigenvectors.

        Classical matrices are decomposed in real arithmetic, which keeps
        exact symmetries of the input exact in the factors.
        """
        m = 0.5 * (self.entries + self.entries.conj().T)
        evals, evecs = np.linalg.eigh(m.real if self.classical else m)
        return np.clip(evals, 0.0, None), evecs

    def sqrt(self) -> np.ndarray:
        """Symmetric matrix square root (PSD, same eigenbasis)."""
        evals, evecs = self.eigh()
        return (evecs * np.sqrt(evals)) @ evecs.conj().T


def two_link_correlation(xi: float) -> CorrelationMatrix:
    """The paper's minimal two-link matrix [[1, xi], [xi, 1]], |xi| <= 1."""
    if abs(xi) > 1.0:
        raise ValidityError(f"|xi| must be <= 1, got {xi}")
    return CorrelationMatrix(np.array([[1.0, xi], [xi, 1.0]]))


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream keyed by (master_seed, stream_id).

    Distinct stream ids give statistically independent Philox streams; the
    same pair reproduces bit-identical output, independent of scheduling.
    """

    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("master_seed", "stream_id"):
            v = getattr(self, name)
            if not (0 <= int(v) < 2**64):
                raise ParameterError(f"{name} must be a 64-bit unsigned integer, got {v}")

    def generator(self) -> np.random.Generator:
        key = (int(self.master_seed) << 64) | int(self.stream_id)
        return np.random.Generator(np.random.Philox(key=key))

    def child(self, stream_id: int) -> "RngStream":
        return RngStream(self.master_seed, stream_id)


def sample_increments(D: CorrelationMatrix, dt: float, n_steps: int, stream: RngStream) -> np.ndarray:
    """Gaussian increments dphi with covariance 2 D dt, shape (n_steps, n).

    Requires a classical (real-symmetric) D. Rank-deficient D yields
    increments exactly in the range of D.
    """
    if not D.classical:
        raise ValidityError("sampling requires a classical (real-symmetric) correlation matrix")
    if not (dt > 0.0 and math.isfinite(dt)):
        raise ParameterError(f"dt must be positive, got {dt}")
    if n_steps < 0:
        raise ParameterError("n_steps must be >= 0")
    root = D.sqrt().real * math.sqrt(2.0 * dt)
    z = stream.generator().standard_normal((n_steps, D.n))
    return z @ root.T


def ou_path(sigma: float, tau_c: float, dt: float, n_steps: int, stream: RngStream) -> np.ndarray:
    """Stationary Ornstein-Uhlenbeck path sampled with the exact discretization.

    ``phi[k+1] = phi[k] e^{-dt/tau_c} + sigma sqrt(1 - e^{-2 dt/tau_c}) z_k``
    with ``phi[0]`` drawn from the stationary distribution N(0, sigma^2);
    returns ``n_steps`` values at times 0, dt, ..., (n_steps-1) dt.
    """
    OrnsteinUhlenbeck(sigma, tau_c)  # parameter validation
    if not (dt > 0.0 and math.isfinite(dt)):
        raise ParameterError(f"dt must be positive, got {dt}")
    if n_steps < 1:
        raise ParameterError("n_steps must be >= 1")
    rng = stream.generator()
    decay = math.exp(-dt / tau_c)
    kick = sigma * math.sqrt(1.0 - decay * decay)
    z = rng.standard_normal(n_steps)
    path = np.empty(n_steps)
    path[0] = sigma * z[0]
    for k in range(1, n_steps):
        path[k] = path[k - 1] * decay + kick * z[k]
    return path


def correlated_ou_values(
    D: CorrelationMatrix,
    sigma: float,
    tau_c: float,
    dt: float,
    n_values: int,
    stream: RngStream,
) -> np.ndarray:
    """Cross-correlated stationary OU paths, shape (n_values, n).

    Column a has stationary variance sigma^2 and correlation time tau_c;
    cross-correlations are <phi_a(t) phi_b(t)> = sigma^2 D_ab (independent
    unit-variance paths mixed through the symmetric square root of D).
    """
    if not D.classical:
        raise ValidityError("sampling requires a classical (real-symmetric) correlation matrix")
    OrnsteinUhlenbeck(sigma, tau_c)
    if not (dt > 0.0 and math.isfinite(dt)):
        raise ParameterError(f"dt must be positive, got {dt}")
    if n_values < 1:
        raise ParameterError("n_values must be >= 1")
    rng = stream.generator()
    decay = math.exp(-dt / tau_c)
    kick = math.sqrt(1.0 - decay * decay)
    z = rng.standard_normal((n_values, D.n))
    paths = np.empty_like(z)
    paths[0] = z[0]
    for k in range(1, n_values):
        paths[k] = paths[k - 1] * decay + kick * z[k]
    return sigma * (paths @ D.sqrt().real.T)


def ohmic_sff(spectrum: BathSpectrum, omega: float) -> float:
    """Symmetrized spectrum S_FF(omega); the omega -> 0 limit is taken analytically."""
    eta, T, wc = spectrum.coupling, spectrum.temperature, spectrum.cutoff
    w = float(omega)
    if w == 0.0:
        return 2.0 * eta * T
    if T == 0.0:
        return eta * abs(w) * math.exp(-abs(w) / wc)
    return eta * w / math.tanh(w / (2.0 * T)) * math.exp(-abs(w) / wc)


def ohmic_sff0(spectrum: BathSpectrum) -> float:
    """Zero-frequency limit of the symmetrized Ohmic spectrum: 2 * coupling * T."""
    return 2.0 * spectrum.coupling * spectrum.temperature


def effective_rate(spec: NoiseSpec, J: float) -> float:
    """Effective dephasing rate Gamma = 2 J^2 x for any noise specification.

    Wiener: x = d_phi. Ornstein-Uhlenbeck (white-noise limit): the
    integrated correlation x = sigma^2 tau_c. Quantum bath: x = S_FF(0).
    """
    if not (J >= 0.0 and math.isfinite(J)):
        raise ParameterError(f"J must be finite and >= 0, got {J}")
    if isinstance(spec, Wiener):
        x = spec.d_phi
    elif isinstance(spec, OrnsteinUhlenbeck):
        x = spec.sigma**2 * spec.tau_c
    elif isinstance(spec, QuantumBath):
        x = ohmic_sff0(spec.spectrum)
    else:
        raise ParameterError(f"unknown noise spec {type(spec).__name__}")
    return 2.0 * J**2 * x


def lamb_shift_coefficient(spectrum: BathSpectrum) -> float:
    """Static bath susceptibility Xi = integral_0^inf chi(tau) dtau.

    Convention: chi(t) = (2/pi) Theta(t) int_0^inf Im chi(w) sin(wt) dw with
    the temperature-independent Ohmic spectral function
    Im chi(w) = coupling * w * exp(-w/cutoff), so that
    Xi = (2/pi) int_0^inf Im chi(w)/w dw (= Kramers-Kronig value of the
    static susceptibility). Computed by adaptive quadrature; the closed form
    for this family is 2 * coupling * cutoff / pi.
    """
    eta, wc = spectrum.coupling, spectrum.cutoff
    if eta == 0.0:
        return 0.0

    def integrand(w: float) -> float:
        return eta * math.exp(-w / wc)  # Im chi(w) / w

    value, abserr = integrate.quad(integrand, 0.0, np.inf, limit=200)
    if abserr > 1e-9 * max(1.0, abs(value)):
        raise NumericError(f"susceptibility quadrature did not converge (estimate {value}, error {abserr})")
    return (2.0 / math.pi) * value


def rate_matrix(amplitudes, D: CorrelationMatrix) -> CorrelationMatrix:
    """Per-link rate matrix Gamma_ab = 2 J_a J_b D_ab (PSD by congruence)."""
    J = np.asarray(amplitudes, dtype=float).reshape(-1)
    if J.size != D.n:
        raise ShapeError(f"got {J.size} amplitudes for a {D.n}x{D.n} correlation matrix")
    if np.any(J < 0.0):
        raise ParameterError("amplitudes must be >= 0")
    gamma = 2.0 * np.outer(J, J) * D.entries
    return CorrelationMatrix(gamma, classical=D.classical)
