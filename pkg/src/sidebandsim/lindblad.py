"""Density-matrix propagation and steady states for the two-mode master equation.

The generator is

    drho/dt = -i[H(t), rho] + sum_k ( L_k rho L_k† - 1/2 {L_k† L_k, rho} )

with the four thermal jump operators of :func:`sidebandsim.model.build_dissipators`.

Two representations are used:

* matrix form (``rho`` as a dense ``d x d`` array, sparse operators applied
  from the left) for time-dependent or driven models;
* a sparse superoperator on ``vec(rho)``, restricted to elements with equal
  total excitation number ``n_a + n_b`` on both sides whenever the model
  conserves excitations. That sector is invariant and holds every
  Fock-diagonal initial state, which makes the 32 x 32 truncation cheap.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fock import DensityOperator, expectation
from .model import SystemModel

log = logging.getLogger(__name__)

TRACE_TOL = 1e-6
SAMPLES_PER_PHASE_PERIOD = 20
MAX_DIRECT_UNKNOWNS = 200_000


class PropagationError(RuntimeError):
    pass


class SteadyStateError(RuntimeError):
    pass


@dataclass
class PropagationResult:
    times: np.ndarray
    observables: dict[str, np.ndarray]
    final_state: DensityOperator
    dt: float = 0.0

    @property
    def n_target(self) -> np.ndarray:
        return self.observables["n_target"]

    @property
    def n_aux(self) -> np.ndarray:
        return self.observables["n_aux"]


@dataclass
class SteadyState:
    state: DensityOperator
    residual: float
    method: str = "direct"
    observables: dict[str, complex] = field(default_factory=dict)


# -- superoperators ---------------------------------------------------------

def _left(op: sp.spmatrix, d: int) -> sp.csr_matrix:
    return sp.kron(op, sp.identity(d), format="csr")


def _right(op: sp.spmatrix, d: int) -> sp.csr_matrix:
    # vec(rho B) = (I ⊗ B^T) vec(rho) for row-major vec
    return sp.kron(sp.identity(d), op.T, format="csr")


def dissipator_superop(model: SystemModel) -> sp.csr_matrix:
    d = model.space.dim
    out = sp.csr_matrix((d * d, d * d), dtype=complex)
    for diss in model.dissipators:
        if diss.rate == 0:
            continue
        c = diss.collapse
        cdc = (c.conj().T @ c).tocsr()
        out = out + sp.kron(c, c.conj(), format="csr") - 0.5 * (_left(cdc, d) + _right(cdc, d))
    return out.tocsr()


def commutator_superop(h: sp.spmatrix, d: int) -> sp.csr_matrix:
    """Superoperator of ``rho -> -i [h, rho]``."""
    return (-1j * (_left(h, d) - _right(h, d))).tocsr()


def liouvillian(model: SystemModel, t: float | None = None) -> sp.csr_matrix:
    """Full superoperator at time ``t`` (static part only when ``t`` is None)."""
    d = model.space.dim
    h = model.static if t is None else model.hamiltonian(t).matrix
    return (commutator_superop(h, d) + dissipator_superop(model)).tocsr()


def excitation_sector(model: SystemModel) -> np.ndarray:
    """Row-major vec indices of ``rho`` elements with ``N_i == N_j``."""
    labels = model.space.labels()
    n_tot = labels.sum(axis=1)
    d = model.space.dim
    i, j = np.divmod(np.arange(d * d), d)
    return np.flatnonzero(n_tot[i] == n_tot[j])


def _restrict(superop: sp.csr_matrix, idx: np.ndarray) -> sp.csr_matrix:
    return superop[idx][:, idx].tocsr()


def _observable_weights(model: SystemModel, idx: np.ndarray | None) -> dict[str, np.ndarray]:
    """Vectors ``w`` with ``Tr(rho M) = w @ vec(rho)`` for the standard observables."""
    d = model.space.dim
    ops = {"n_target": model.ops["n_a"].matrix, "n_aux": model.ops["n_b"].matrix,
           "a": model.ops["a"].matrix, "b": model.ops["b"].matrix,
           "trace": sp.identity(d, format="csr", dtype=complex)}
    out = {}
    for name, m in ops.items():
        w = np.asarray(m.T.todense()).reshape(-1)
        out[name] = w if idx is None else w[idx]
    return out


def _collect(weights: dict[str, np.ndarray], x: np.ndarray) -> dict[str, complex]:
    return {k: complex(w @ x) for k, w in weights.items()}


# -- time stepping ----------------------------------------------------------

class _VectorGenerator:
    def __init__(self, static: sp.csr_matrix, terms: list):
        self.static = static
        self.terms = terms

    def __call__(self, t: float, x: np.ndarray) -> np.ndarray:
        out = self.static @ x
        for term, sup in self.terms:
            out += term.coefficient(t) * (sup @ x)
        return out


def _rk4(f, t: float, y: np.ndarray, dt: float) -> np.ndarray:
    k1 = f(t, y)
    k2 = f(t + 0.5 * dt, y + (0.5 * dt) * k1)
    k3 = f(t + 0.5 * dt, y + (0.5 * dt) * k2)
    k4 = f(t + dt, y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def default_step(model: SystemModel, safety: float = 2.0) -> float:
    """Step size from the generator scale and, if time dependent, the phase period.

    ``generator_scale`` bounds the spectral radius from above and classical RK4
    is stable up to about 2.8 on both axes, so ``safety = 2`` stays inside.
    """
    scale = model.generator_scale()
    dt = safety / scale if scale > 0 else math.inf
    rate = model.fastest_phase_rate
    if rate > 0:
        dt = min(dt, 2 * math.pi / rate / SAMPLES_PER_PHASE_PERIOD)
    return dt


def _use_sector(model: SystemModel, rho0: np.ndarray) -> np.ndarray | None:
    if not model.conserves_excitations:
        return None
    idx = excitation_sector(model)
    mask = np.ones(rho0.size, bool)
    mask[idx] = False
    if np.any(rho0.reshape(-1)[mask] != 0):
        return None
    return idx


def propagate(model: SystemModel, rho0: DensityOperator, t_final: float, *,
              n_samples: int = 201, dt: float | None = None, refine: bool = False,
              rtol: float = 1e-6, max_refinements: int = 4) -> PropagationResult:
    """Integrate from ``t = 0`` to ``t_final`` with fixed-step RK4.

    Observables ``n_target, n_aux, a, b, trace`` are recorded on ``n_samples``
    equally spaced times. With ``refine=True`` the step is halved until every
    recorded observable changes by less than ``rtol`` (relative to its range).
    """
    if t_final <= 0:
        raise ValueError("t_final must be positive")
    if rho0.dim != model.space.dim:
        raise ValueError(f"state dimension {rho0.dim} does not match model {model.space.dim}")
    dt = default_step(model) if dt is None else dt
    result = _propagate_fixed(model, rho0, t_final, n_samples, dt)
    if not refine:
        return result
    for _ in range(max_refinements):
        finer = _propagate_fixed(model, rho0, t_final, n_samples, result.dt / 2)
        ob, fo = result.observables, finer.observables
        # amplitudes are compared on the scale sqrt(<n>), so a vanishing <a> cannot inflate the change
        amp = math.sqrt(max(np.abs(fo["n_target"]).max(), np.abs(fo["n_aux"]).max()))
        change = max(max(_relative_change(ob[k], fo[k]) for k in ("n_target", "n_aux")),
                     max(_relative_change(ob[k], fo[k], amp) for k in ("a", "b")))
        log.debug("refine dt=%.3g -> %.3g, change %.3g", result.dt, finer.dt, change)
        result = finer
        if change < rtol:
            return result
    raise PropagationError(f"observables still changing by {change:.3g} after "
                           f"{max_refinements} step halvings (dt={result.dt:.3g} s)")


def _relative_change(a: np.ndarray, b: np.ndarray, floor: float = 0.0) -> float:
    """Largest change relative to the size of ``b``; ``floor`` guards signals that are zero."""
    scale = max(np.abs(b).max(), floor, 1e-300)
    return float(np.abs(a - b).max() / scale)


def _propagate_fixed(model, rho0, t_final, n_samples, dt_max) -> PropagationResult:
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    interval = t_final / (n_samples - 1)
    stride = max(1, math.ceil(interval / dt_max))
    dt = interval / stride
    if not dt > 0 or dt < 1e-300:
        raise PropagationError("step size underflow")
    times = np.linspace(0.0, t_final, n_samples)
    d = model.space.dim
    rho = rho0.matrix.astype(complex, copy=True)
    idx = _use_sector(model, rho)

    if idx is not None:
        full = liouvillian(model)
        f = _VectorGenerator(_restrict(full, idx), [])
        y = rho.reshape(-1)[idx].copy()
        weights = _observable_weights(model, idx)
        measure = lambda y: _collect(weights, y)  # noqa: E731
    else:
        f = model.generator()
        f.enable_parity(rho)
        y = rho
        measure = lambda y: _snapshot(model, y)  # noqa: E731

    series = {k: np.empty(n_samples, complex) for k in ("n_target", "n_aux", "a", "b", "trace")}
    _record(series, 0, measure(y))
    t = 0.0
    for s in range(1, n_samples):
        for _ in range(stride):
            y = _rk4(f, t, y, dt)
            t += dt
        t = times[s]
        obs = measure(y)
        if abs(obs["trace"] - 1) > TRACE_TOL:
            raise PropagationError(f"trace drifted to {obs['trace']:.9g} at t={t:.4g} s "
                                   f"(dt={dt:.3g} s); reduce the step")
        if not np.isfinite(obs["n_target"]):
            raise PropagationError(f"non-finite state at t={t:.4g} s (dt={dt:.3g} s)")
        _record(series, s, obs)

    if idx is not None:
        out = np.zeros(d * d, complex)
        out[idx] = y
        rho = out.reshape(d, d)
    else:
        rho = y
    rho = 0.5 * (rho + rho.conj().T)
    observables = {k: (v.real if k in ("n_target", "n_aux", "trace") else v)
                   for k, v in series.items()}
    return PropagationResult(times, observables, DensityOperator(rho), dt)


def _snapshot(model: SystemModel, rho: np.ndarray) -> dict[str, complex]:
    state = DensityOperator(rho)
    out = {"n_target": expectation(state, model.ops["n_a"]),
           "n_aux": expectation(state, model.ops["n_b"]),
           "a": expectation(state, model.ops["a"]),
           "b": expectation(state, model.ops["b"])}
    out["trace"] = complex(np.trace(rho))
    return out


def _record(series, s, obs):
    for k in series:
        series[k][s] = obs[k]


# -- steady state -----------------------------------------------------------

def steady_state(model: SystemModel, *, tol: float = 1e-10,
                 max_direct_unknowns: int = MAX_DIRECT_UNKNOWNS,
                 guess: DensityOperator | None = None) -> SteadyState:
    """Stationary state of a time-independent model.

    Solves ``L vec(rho) = 0`` with the trace constraint by sparse LU, on the
    equal-excitation sector when the model conserves excitations. Falls back
    to long-time propagation when the system is too large or the solve fails.
    ``residual`` is ``||L vec(rho)|| / s`` with ``s`` the generator scale.
    """
    if model.time_dependent:
        raise ValueError("steady_state needs a time-independent model; use propagate "
                         "and average over the modulation period instead")
    if all(dd.rate == 0 for dd in model.dissipators):
        raise SteadyStateError("no dissipation: steady state is not unique")
    d = model.space.dim
    scale = model.generator_scale()
    idx = excitation_sector(model) if model.conserves_excitations else None
    n_unknowns = d * d if idx is None else idx.size

    if n_unknowns <= max_direct_unknowns:
        full = liouvillian(model)
        lv = full if idx is None else _restrict(full, idx)
        try:
            x = _direct_solve(lv, model, idx)
        except (RuntimeError, np.linalg.LinAlgError) as exc:
            log.warning("direct steady-state solve failed (%s); propagating instead", exc)
        else:
            res = float(np.linalg.norm(lv @ x) / scale)
            if res < tol:
                return _finish(model, x, idx, res, "direct")
            log.warning("direct solve residual %.3g above %.3g; propagating instead", res, tol)
    return _relax(model, tol, guess)


def _direct_solve(lv: sp.csr_matrix, model: SystemModel, idx: np.ndarray | None) -> np.ndarray:
    d = model.space.dim
    diag = np.arange(d) * (d + 1)
    if idx is not None:
        pos = np.searchsorted(idx, diag)
        diag = pos
    n = lv.shape[0]
    scale = abs(lv).max()
    # diagonal rows of L sum to zero, so one of them can carry the trace condition
    lv = lv.tolil()
    lv[0, :] = 0
    lv[0, diag] = scale
    rhs = np.zeros(n, complex)
    rhs[0] = scale
    lu = spla.splu(lv.tocsc(), permc_spec="COLAMD")
    x = lu.solve(rhs)
    if not np.all(np.isfinite(x)):
        raise np.linalg.LinAlgError("singular Liouvillian")
    return x


def _finish(model, x, idx, residual, method) -> SteadyState:
    d = model.space.dim
    if idx is not None:
        full = np.zeros(d * d, complex)
        full[idx] = x
        x = full
    rho = x.reshape(d, d)
    rho = 0.5 * (rho + rho.conj().T)
    rho /= np.trace(rho).real
    state = DensityOperator(rho)
    return SteadyState(state, residual, method, _snapshot(model, rho))


def _relax(model: SystemModel, tol: float, guess: DensityOperator | None,
           max_rounds: int = 200) -> SteadyState:
    """Long-time propagation until ``||L rho|| / s < tol``."""
    d = model.space.dim
    rho = guess.matrix.copy() if guess is not None else np.eye(d, dtype=complex) / d
    rates = [dd.rate for dd in model.dissipators if dd.rate > 0]
    slowest = min(rates + [abs(model.coupling.g)] if model.coupling.g else rates)
    chunk = 5.0 / slowest
    f = model.generator()
    scale = model.generator_scale()
    res = math.inf
    for _ in range(max_rounds):
        r = propagate(model, DensityOperator(rho), chunk, n_samples=2)
        rho = r.final_state.matrix
        res = float(np.linalg.norm(f(0.0, rho)) / scale)
        if res < tol:
            return _finish(model, rho.reshape(-1), None, res, "propagation")
    raise SteadyStateError(f"long-time propagation stalled at residual {res:.3g}")


def period_average(result: PropagationResult, period: float, key: str = "n_target") -> float:
    """Mean of ``key`` over the last ``period`` seconds of a propagation (trapezoid rule)."""
    t = result.times
    mask = t >= t[-1] - period - 1e-15 * t[-1]
    if mask.sum() < 2:
        raise ValueError("sampling too coarse to average over one period")
    y = np.real(result.observables[key][mask])
    return float(np.trapezoid(y, t[mask]) / (t[mask][-1] - t[mask][0]))
