"""Monte Carlo wave-function (quantum-jump) unraveling of the master equation.

Each trajectory evolves an unnormalized ket under
``H_eff = H - (i/2) sum_k L_k† L_k`` until its squared norm drops below a
uniform threshold ``r``; the jump time is then located by bisection, a
channel is drawn with probability ``||L_k psi||^2 / sum_j ||L_j psi||^2``,
and a fresh threshold is drawn.

Trajectory ``i`` draws all its random numbers from
``SeedSequence(seed, spawn_key=(i,))``. Kets are integrated in batches with
column-independent arithmetic, and per-trajectory records are reduced in
index order, so results do not depend on batch size or worker count.

A diffusive (linear quantum-state-diffusion) unraveling with a Milstein step
is provided by :func:`run_diffusive_ensemble` for cross-checks.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numba
import numpy as np
from joblib import Parallel, delayed

from .fock import JointState, thermal_populations
from .lindblad import default_step
from .model import SystemModel

log = logging.getLogger(__name__)

NORM_FLOOR = 1e-12
BISECTION_STEPS = 40
OBSERVABLES = ("n_target", "n_aux", "re_a", "im_a")
DIFFUSIVE_REFINE = 16


class TrajectoryError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrajectoryConfig:
    n_trajectories: int
    seed: int
    t_final: float
    n_samples: int = 101
    dt: float | None = None
    batch_size: int = 512
    n_jobs: int = 1

    def __post_init__(self):
        if self.n_trajectories < 1:
            raise ValueError("n_trajectories must be >= 1")
        if self.t_final <= 0 or self.n_samples < 2:
            raise ValueError("need t_final > 0 and n_samples >= 2")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass(frozen=True)
class ThermalSpec:
    """Initial Fock-diagonal mixture: independent truncated thermal modes."""

    n_target: float
    n_aux: float = 0.0


@dataclass
class EnsembleResult:
    times: np.ndarray
    mean: dict[str, np.ndarray]
    sem: dict[str, np.ndarray]
    jump_counts: np.ndarray
    channels: tuple[str, ...] = ()
    per_trajectory: dict[str, np.ndarray] = field(default=None, repr=False)

    @property
    def n_trajectories(self) -> int:
        return self.jump_counts.shape[0]


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def sample_initial(spec: ThermalSpec, space, rng: np.random.Generator) -> JointState:
    """Product Fock state ``|n_a, n_b>`` drawn from the truncated thermal distributions."""
    pa = thermal_populations(spec.n_target, space.dim_target)
    pb = thermal_populations(spec.n_aux, space.dim_aux)
    u = rng.random(2)
    na = min(int(np.searchsorted(np.cumsum(pa), u[0], side="right")), space.dim_target - 1)
    nb = min(int(np.searchsorted(np.cumsum(pb), u[1], side="right")), space.dim_aux - 1)
    psi = np.zeros(space.dim, complex)
    psi[space.index(na, nb)] = 1.0
    return JointState(psi)


@numba.njit(cache=True)
def _column_norms2(psi):
    d, n = psi.shape
    out = np.zeros(n)
    for i in range(d):
        for c in range(n):
            out[c] += psi[i, c].real ** 2 + psi[i, c].imag ** 2
    return out


@numba.njit(cache=True)
def _column_expect(psi, diag):
    d, n = psi.shape
    out = np.zeros(n)
    for i in range(d):
        for c in range(n):
            out[c] += diag[i] * (psi[i, c].real ** 2 + psi[i, c].imag ** 2)
    return out


class _Stepper:
    """Non-unitary RK4 propagation of kets (single or batched)."""

    def __init__(self, model: SystemModel):
        self.gen = model.generator()
        self.jumps = [d.collapse for d in model.dissipators if d.rate > 0]
        self.labels = tuple(d.label for d in model.dissipators if d.rate > 0)
        labels = model.space.labels()
        self.n_a = labels[:, 0].astype(float)
        self.n_b = labels[:, 1].astype(float)
        self.a = model.ops["a"].matrix

    def deriv(self, t, psi):
        return -1j * self.gen.apply_heff(t, psi)

    def step(self, t, psi, dt):
        f = self.deriv
        k1 = f(t, psi)
        k2 = f(t + 0.5 * dt, psi + (0.5 * dt) * k1)
        k3 = f(t + 0.5 * dt, psi + (0.5 * dt) * k2)
        k4 = f(t + dt, psi + dt * k3)
        return psi + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)

    def norm2(self, psi):
        return _column_norms2(psi.reshape(psi.shape[0], -1))

    def observe(self, psi):
        p = psi.reshape(psi.shape[0], -1)
        nrm = _column_norms2(p)
        ax = self.a @ p
        # <a> = sum_i conj(psi_i) (a psi)_i, accumulated row by row for column independence
        amp = np.zeros(p.shape[1], complex)
        for i in range(p.shape[0]):
            amp += p[i].conj() * ax[i]
        return (_column_expect(p, self.n_a) / nrm, _column_expect(p, self.n_b) / nrm,
                amp.real / nrm, amp.imag / nrm)


def _locate_jump(stepper: _Stepper, t0: float, psi0: np.ndarray, h: float, r: float) -> float:
    """Time ``tau`` in ``(0, h]`` where ``||psi(t0 + tau)||^2`` crosses ``r`` (bisection)."""
    lo, hi = 0.0, h
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        if stepper.norm2(stepper.step(t0, psi0, mid))[0] > r:
            lo = mid
        else:
            hi = mid
    return hi


def _jump(stepper: _Stepper, psi: np.ndarray, rng: np.random.Generator, counts: np.ndarray) -> np.ndarray:
    cand = [c @ psi for c in stepper.jumps]
    w = np.array([float(np.sum(np.abs(x) ** 2)) for x in cand])
    total = w.sum()
    if total <= 0:
        raise TrajectoryError("jump requested but every channel has zero weight")
    u = rng.random() * total
    k = int(np.searchsorted(np.cumsum(w), u, side="right"))
    k = min(k, len(cand) - 1)
    counts[k] += 1
    out = cand[k]
    return out / math.sqrt(w[k])


def _advance_single(stepper, t, psi, h, r, rng, counts):
    """Advance one trajectory by ``h``, performing any number of jumps inside."""
    remaining = h
    while True:
        trial = stepper.step(t, psi, remaining)
        n2 = stepper.norm2(trial)[0]
        if n2 > r:
            return trial, r
        tau = _locate_jump(stepper, t, psi, remaining, r)
        psi = stepper.step(t, psi, tau)
        if stepper.norm2(psi)[0] < NORM_FLOOR:
            raise TrajectoryError("norm underflow before jump; reduce dt")
        psi = _jump(stepper, psi, rng, counts)
        r = rng.random()
        t += tau
        remaining -= tau
        if remaining <= 0:
            return psi, r


def _run_batch(model: SystemModel, initial, config: TrajectoryConfig, indices: range, dt: float,
               stride: int) -> tuple[np.ndarray, np.ndarray]:
    stepper = _Stepper(model)
    d = model.space.dim
    n = len(indices)
    rngs = [trajectory_rng(config.seed, i) for i in indices]
    psi = np.empty((d, n), complex)
    for c, rng in enumerate(rngs):
        if isinstance(initial, ThermalSpec):
            psi[:, c] = sample_initial(initial, model.space, rng).amplitudes
        else:
            psi[:, c] = initial.normalized().amplitudes
    thresholds = np.array([rng.random() for rng in rngs])
    counts = np.zeros((n, len(stepper.jumps)), np.int64)
    records = np.empty((len(OBSERVABLES), n, config.n_samples))
    for k, v in enumerate(stepper.observe(psi)):
        records[k, :, 0] = v
    t = 0.0
    for s in range(1, config.n_samples):
        for _ in range(stride):
            start = psi
            psi = stepper.step(t, start, dt)
            n2 = stepper.norm2(psi)
            for c in np.flatnonzero(n2 <= thresholds):
                col, thresholds[c] = _advance_single(stepper, t, start[:, c].copy(), dt,
                                                     thresholds[c], rngs[c], counts[c])
                psi[:, c] = col
            t += dt
        if np.any(stepper.norm2(psi) < NORM_FLOOR):
            raise TrajectoryError("norm fell below 1e-12 between jumps; reduce dt")
        for k, v in enumerate(stepper.observe(psi)):
            records[k, :, s] = v
    return records, counts


def _grid(model: SystemModel, config: TrajectoryConfig,
          refine: int = 1) -> tuple[np.ndarray, float, int]:
    interval = config.t_final / (config.n_samples - 1)
    dt_max = config.dt or default_step(model) / refine
    stride = max(1, math.ceil(interval / dt_max))
    return np.linspace(0, config.t_final, config.n_samples), interval / stride, stride


def run_ensemble(model: SystemModel, initial: JointState | ThermalSpec,
                 config: TrajectoryConfig, keep_trajectories: bool = False) -> EnsembleResult:
    """Quantum-jump ensemble with means and standard errors on the sample grid."""
    times, dt, stride = _grid(model, config)
    batches = [range(i, min(i + config.batch_size, config.n_trajectories))
               for i in range(0, config.n_trajectories, config.batch_size)]
    log.info("MCWF: %d trajectories, dt=%.3g s, %d batches, n_jobs=%d",
             config.n_trajectories, dt, len(batches), config.n_jobs)
    if config.n_jobs == 1:
        parts = [_run_batch(model, initial, config, b, dt, stride) for b in batches]
    else:
        parts = Parallel(n_jobs=config.n_jobs)(
            delayed(_run_batch)(model, initial, config, b, dt, stride) for b in batches)
    records = np.concatenate([p[0] for p in parts], axis=1)
    counts = np.concatenate([p[1] for p in parts], axis=0)
    stepper_labels = tuple(d.label for d in model.dissipators if d.rate > 0)
    return _summarize(times, records, counts, stepper_labels, keep_trajectories)


def _summarize(times, records, counts, labels, keep) -> EnsembleResult:
    n = records.shape[1]
    mean, sem, per = {}, {}, {}
    for k, name in enumerate(OBSERVABLES):
        x = records[k]
        mean[name] = x.mean(axis=0)
        sem[name] = x.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(x.shape[1])
        per[name] = x
    return EnsembleResult(times, mean, sem, counts, labels, per if keep else None)


# -- diffusive unraveling ------------------------------------------------------

def _diffusive_batch(model, initial, config, indices, dt, stride):
    """Linear SSE ``dpsi = -i H_eff psi dt + sum_k L_k psi dW_k`` with a Milstein step.

    ``E[|psi><psi|]`` solves the master equation exactly for the linear
    equation, so expectations are ratio estimates ``E[<psi|O|psi>] / E[<psi|psi>]``.
    The Milstein correction ``1/2 L_k^2 psi (dW_k^2 - dt)`` is applied per
    channel; cross-channel Levy areas are omitted, which keeps weak order one.
    """
    stepper = _Stepper(model)
    jumps = stepper.jumps
    jj = [(c @ c).tocsr() for c in jumps]
    d = model.space.dim
    n = len(indices)
    rngs = [trajectory_rng(config.seed, i) for i in indices]
    psi = np.empty((d, n), complex)
    for c, rng in enumerate(rngs):
        if isinstance(initial, ThermalSpec):
            psi[:, c] = sample_initial(initial, model.space, rng).amplitudes
        else:
            psi[:, c] = initial.normalized().amplitudes
    weights = np.empty((n, config.n_samples))
    numer = np.empty((len(OBSERVABLES), n, config.n_samples))

    def record(s):
        nrm = stepper.norm2(psi)
        obs = stepper.observe(psi)
        weights[:, s] = nrm
        for k, v in enumerate(obs):
            numer[k, :, s] = v * nrm

    record(0)
    t = 0.0
    sq = math.sqrt(dt)
    for s in range(1, config.n_samples):
        for _ in range(stride):
            dw = np.stack([rng.standard_normal(len(jumps)) for rng in rngs], axis=1) * sq
            drift = stepper.step(t, psi, dt)
            noise = np.zeros_like(psi)
            for k, c in enumerate(jumps):
                noise += (c @ psi) * dw[k] + 0.5 * (jj[k] @ psi) * (dw[k] ** 2 - dt)
            psi = drift + noise
            t += dt
        record(s)
    return numer, weights


def run_diffusive_ensemble(model: SystemModel, initial: JointState | ThermalSpec,
                           config: TrajectoryConfig) -> EnsembleResult:
    """Diffusive (linear SSE) ensemble; slower and noisier than jumps, kept as a cross-check.

    Without an explicit ``dt`` the step is 1/16 of the master-equation
    default, since the stochastic scheme has a visible time-step bias at
    coarser steps.
    """
    times, dt, stride = _grid(model, config, refine=DIFFUSIVE_REFINE)
    batches = [range(i, min(i + config.batch_size, config.n_trajectories))
               for i in range(0, config.n_trajectories, config.batch_size)]
    parts = [_diffusive_batch(model, initial, config, b, dt, stride) for b in batches]
    numer = np.concatenate([p[0] for p in parts], axis=1)
    w = np.concatenate([p[1] for p in parts], axis=0)
    n = w.shape[0]
    wbar = w.mean(axis=0)
    mean, sem = {}, {}
    for k, name in enumerate(OBSERVABLES):
        est = numer[k].mean(axis=0) / wbar
        # delta-method standard error of a ratio estimator
        resid = numer[k] - est * w
        mean[name] = est
        sem[name] = resid.std(axis=0, ddof=1) / math.sqrt(n) / wbar if n > 1 else np.zeros_like(est)
    return EnsembleResult(times, mean, sem, np.zeros((n, 0), np.int64), ())
