"""Linear Heisenberg-Langevin analysis of the coupled pair.

In the RWA the amplitudes ``c = (a, b)`` obey

    dc/dt = A c + f + noise,   A = -[[gamma/2, i g], [i g, kappa/2]],   f = (0, sqrt(kappa) beta)

with thermal input noise of occupation ``n_T`` on the target and vacuum on
the auxiliary. Second moments are normally ordered throughout, so
``N[i, j] = <c_i† c_j>`` and ``<n_target> = N[0, 0]`` directly.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import solve_continuous_lyapunov


class ComplexRegimeError(ValueError):
    """Decay constants are complex (``g > kappa / 4``); the closed form does not apply."""


class RegimeWarning(UserWarning):
    pass


@dataclass(frozen=True)
class LinearModel:
    drift: np.ndarray
    forcing: np.ndarray
    n_target: float = 0.0
    n_aux: float = 0.0
    gamma: float = 0.0
    kappa: float = 0.0
    g: float = 0.0

    @property
    def diffusion(self) -> np.ndarray:
        """Normally ordered diffusion ``diag(gamma n_T, kappa n_aux)``."""
        return np.diag([self.gamma * self.n_target, self.kappa * self.n_aux]).astype(complex)

    @property
    def stable(self) -> bool:
        return bool(np.all(np.linalg.eigvals(self.drift).real < 0))


def linear_model(gamma: float, kappa: float, g: float, beta: complex = 0.0,
                 n_target: float = 0.0, n_aux: float = 0.0) -> LinearModel:
    drift = -np.array([[gamma / 2, 1j * g], [1j * g, kappa / 2]], dtype=complex)
    forcing = np.array([0.0, math.sqrt(kappa) * beta], dtype=complex)
    return LinearModel(drift, forcing, n_target, n_aux, gamma, kappa, g)


def from_system(model) -> LinearModel:
    """Linear model with the same parameters as a :class:`~sidebandsim.model.SystemModel`."""
    return linear_model(model.target.damping_rate, model.aux.damping_rate, model.coupling.g,
                        model.drive.beta, model.target.n_bath, model.aux.n_bath)


@dataclass(frozen=True)
class DecayConstants:
    """``lambda_pm = kappa/2 ± sqrt(kappa^2/4 - 4 g^2)`` (energy-decay rates).

    ``drift_eigenvalues`` are the exact amplitude-decay rates, i.e. the
    eigenvalues of ``-A`` including ``gamma``. At ``gamma = 0`` the
    ``lambda_pm`` are exactly twice these.
    """

    lambda_plus: complex
    lambda_minus: complex
    N_plus: complex
    N_minus: complex
    drift_eigenvalues: tuple[complex, complex]
    real: bool


def decay_constants(gamma: float, kappa: float, g: float) -> DecayConstants:
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    if gamma > 0.1 * kappa:
        warnings.warn(f"gamma/kappa = {gamma / kappa:.3g}; the decay-constant approximation "
                      "assumes gamma << kappa", RegimeWarning, stacklevel=2)
    disc = kappa ** 2 / 4 - 4 * g ** 2
    real = disc >= 0
    root = math.sqrt(disc) if real else cmath.sqrt(disc)
    lp, lm = kappa / 2 + root, kappa / 2 - root
    npl = cmath.sqrt(lp ** 2 + g ** 2)
    nmi = cmath.sqrt(lm ** 2 + g ** 2)
    if real:
        lp, lm, npl, nmi = float(lp), float(lm), npl.real, nmi.real
    eig = np.linalg.eigvals(-linear_model(gamma, kappa, g).drift)
    eig = tuple(sorted(eig, key=lambda z: (-z.real, -z.imag)))
    return DecayConstants(lp, lm, npl, nmi, eig, real)


@dataclass(frozen=True)
class CoherentAmplitude:
    formula: complex
    exact: complex
    formula_singular: bool = False


def coherent_amplitude(beta: complex, gamma: float, kappa: float, g: float) -> CoherentAmplitude:
    """Steady ``<a>`` from the closed-form rational expression and from the exact 2x2 solve.

    The closed form ``-i beta (sqrt(kappa)/g) (kappa^2 - 6g^2)/(kappa^2 - 9g^2)``
    is quoted for ``gamma << kappa`` and ``g < kappa/4``; it is singular at
    ``kappa = 3g``, in which case ``formula`` is ``nan`` and the flag is set.
    """
    if g <= 0:
        raise ValueError("g must be positive")
    exact = complex(-np.linalg.solve(linear_model(gamma, kappa, g, beta).drift,
                                     linear_model(gamma, kappa, g, beta).forcing)[0])
    den = kappa ** 2 - 9 * g ** 2
    if abs(den) <= 1e-12 * kappa ** 2:
        return CoherentAmplitude(complex("nan"), exact, True)
    formula = -1j * beta * (math.sqrt(kappa) / g) * (kappa ** 2 - 6 * g ** 2) / den
    return CoherentAmplitude(complex(formula), exact, False)


@dataclass(frozen=True)
class SecondMoments:
    mean: np.ndarray
    N: np.ndarray
    M: np.ndarray

    @property
    def n_target(self) -> float:
        """Total ``<a†a> = |<a>|^2 + <δa† δa>``."""
        return float(abs(self.mean[0]) ** 2 + self.N[0, 0].real)

    @property
    def n_aux(self) -> float:
        return float(abs(self.mean[1]) ** 2 + self.N[1, 1].real)

    @property
    def n_target_thermal(self) -> float:
        return float(self.N[0, 0].real)


def steady_covariance(lm: LinearModel) -> SecondMoments:
    """Stationary first and normally ordered second moments.

    Fluctuations obey ``dN/dt = A* N + N A^T + D``; taking the conjugate gives
    the standard Lyapunov form ``A X + X A† = -D`` with ``X = N^T``.
    """
    if not lm.stable:
        raise ValueError("drift matrix is not stable; no steady state")
    x = -np.linalg.solve(lm.drift, lm.forcing)
    nt = solve_continuous_lyapunov(lm.drift, -lm.diffusion)
    N = nt.T
    return SecondMoments(x, 0.5 * (N + N.conj().T), np.zeros((2, 2), complex))


def occupation_formula(gamma: float, kappa: float, g: float, n_thermal: float) -> float:
    """Closed-form RWA steady occupation, with the middle-term ``k`` read as ``kappa``."""
    dc = decay_constants(gamma, kappa, g) if gamma <= 0.1 * kappa else _quiet_dc(gamma, kappa, g)
    if not dc.real:
        raise ComplexRegimeError(f"g = {g:.4g} > kappa/4 = {kappa / 4:.4g}: decay constants are complex")
    lp, lm, npl, nmi = dc.lambda_plus, dc.lambda_minus, dc.N_plus, dc.N_minus
    bracket = (lm ** 3 / nmi ** 4 + 4 * lm ** 2 * lp ** 2 / (kappa * nmi ** 2 * npl ** 2)
               + lp ** 3 / npl ** 4)
    return gamma * n_thermal / 2 * bracket


def _quiet_dc(gamma, kappa, g):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RegimeWarning)
        return decay_constants(gamma, kappa, g)


@dataclass
class MomentTrajectory:
    times: np.ndarray
    mean: np.ndarray
    N: np.ndarray
    M: np.ndarray

    @property
    def n_target(self) -> np.ndarray:
        return np.abs(self.mean[:, 0]) ** 2 + self.N[:, 0, 0].real

    @property
    def n_aux(self) -> np.ndarray:
        return np.abs(self.mean[:, 1]) ** 2 + self.N[:, 1, 1].real


def moment_dynamics(lm: LinearModel, times: np.ndarray, *, n0_target: float,
                    n0_aux: float = 0.0, counter_rotating_frequency: float | None = None,
                    rtol: float = 1e-10, atol: float = 1e-14) -> MomentTrajectory:
    """Integrate first and second moments from a thermal product state.

    With ``counter_rotating_frequency = w`` the Hamiltonian also contains
    ``g (a b e^{-2iwt} + a† b† e^{2iwt})``, which makes
    ``dc/dt = A c + B(t) c† + f`` with ``B = -i g e^{2iwt} [[0, 1], [1, 0]]``.
    The moment equations stay closed, so this is exact for the untruncated system.
    """
    A, f, D = lm.drift, lm.forcing, lm.diffusion
    X = np.array([[0, 1], [1, 0]], complex)
    w = counter_rotating_frequency
    eye = np.eye(2)

    def rhs(t, y):
        x = y[:2]
        N = y[2:6].reshape(2, 2)
        M = y[6:].reshape(2, 2)
        B = -1j * lm.g * np.exp(2j * w * t) * X if w else np.zeros((2, 2), complex)
        dx = A @ x + B @ x.conj() + f
        dN = A.conj() @ N + N @ A.T + B.conj() @ M + M.conj() @ B.T + D
        dM = A @ M + M @ A.T + B @ N + (eye + N.T) @ B.T
        return np.concatenate([dx, dN.ravel(), dM.ravel()])

    y0 = np.zeros(10, complex)
    y0[2] = n0_target
    y0[5] = n0_aux
    times = np.asarray(times, float)
    max_step = math.pi / w / 20 if w else np.inf
    sol = solve_ivp(rhs, (times[0], times[-1]), y0, t_eval=times, method="DOP853",
                    rtol=rtol, atol=atol, max_step=max_step)
    if not sol.success:
        raise RuntimeError(f"moment integration failed: {sol.message}")
    y = sol.y.T
    return MomentTrajectory(times, y[:, :2], y[:, 2:6].reshape(-1, 2, 2), y[:, 6:].reshape(-1, 2, 2))
