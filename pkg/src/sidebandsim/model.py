"""Physical parameters -> Hamiltonian and dissipator terms.

All frequencies and rates are angular (rad/s, 1/s) internally; Hamiltonians
are stored divided by hbar. Use the ``*_hz`` constructors at the boundary.

Frames
------
``lab_modulated``
    ``H = w a†a + W b†b + lam(t) (a + a†)(b + b†)`` with
    ``lam(t) = 2 g cos((W - w) t)``. The factor 2 makes the resonant part of
    the interaction-picture Hamiltonian exactly ``g (a b† + a† b)``.
``interaction_full``
    ``H = g (a b† + a† b) + g (a b e^{-2iwt} + a† b† e^{2iwt})``.
``interaction_rwa``
    ``H = g (a b† + a† b)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import scipy.sparse as sp
from scipy.constants import hbar, k as k_boltzmann

from .fock import FockSpace, ModeOperator, annihilation, number
from .ladder import LadderGenerator, LadderTerm, eye, lowering, raising, to_matrix

Frame = Literal["lab_modulated", "interaction_full", "interaction_rwa"]
FRAMES = ("lab_modulated", "interaction_full", "interaction_rwa")

MIN_QUALITY = 10.0


class ModelWarning(UserWarning):
    pass


def thermal_occupation(angular_frequency: float, temperature: float) -> float:
    """Bose-Einstein mean occupation ``1 / (exp(hbar w / k T) - 1)``.

    ``temperature == 0`` returns 0 (the T -> 0+ limit).
    """
    if angular_frequency <= 0:
        raise ValueError(f"angular frequency must be positive, got {angular_frequency}")
    if temperature < 0:
        raise ValueError(f"temperature must be >= 0, got {temperature}")
    if temperature == 0:
        return 0.0
    x = hbar * angular_frequency / (k_boltzmann * temperature)
    if x > 700:
        return 0.0
    return 1.0 / math.expm1(x)


@dataclass(frozen=True)
class ModeParams:
    """One oscillator. Give exactly one of ``temperature`` (K) or ``n_thermal``."""

    angular_frequency: float
    damping_rate: float
    truncation: int
    temperature: float | None = None
    n_thermal: float | None = None

    def __post_init__(self):
        if not self.angular_frequency > 0:
            raise ValueError(f"angular_frequency must be > 0, got {self.angular_frequency}")
        if self.damping_rate < 0:
            raise ValueError(f"damping_rate must be >= 0, got {self.damping_rate}")
        if (self.temperature is None) == (self.n_thermal is None):
            raise ValueError("give exactly one of temperature or n_thermal")
        if self.temperature is not None and self.temperature < 0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")
        if self.n_thermal is not None and self.n_thermal < 0:
            raise ValueError(f"n_thermal must be >= 0, got {self.n_thermal}")
        if int(self.truncation) != self.truncation or self.truncation < 2:
            raise ValueError(f"truncation must be an integer >= 2, got {self.truncation}")
        if self.damping_rate > 0 and self.quality_factor < MIN_QUALITY:
            warnings.warn(f"quality factor {self.quality_factor:.3g} < {MIN_QUALITY}; the "
                          "optical master equation is unreliable here", ModelWarning, stacklevel=3)

    @classmethod
    def from_hz(cls, frequency_hz: float, truncation: int, *, quality_factor: float | None = None,
                damping_per_s: float | None = None, temperature: float | None = None,
                n_thermal: float | None = None) -> ModeParams:
        w = 2 * math.pi * frequency_hz
        if (quality_factor is None) == (damping_per_s is None):
            raise ValueError("give exactly one of quality_factor or damping_per_s")
        rate = w / quality_factor if quality_factor is not None else damping_per_s
        return cls(w, rate, truncation, temperature=temperature, n_thermal=n_thermal)

    @property
    def quality_factor(self) -> float:
        return math.inf if self.damping_rate == 0 else self.angular_frequency / self.damping_rate

    @property
    def n_bath(self) -> float:
        if self.n_thermal is not None:
            return float(self.n_thermal)
        return thermal_occupation(self.angular_frequency, self.temperature)


@dataclass(frozen=True)
class CouplingParams:
    g: float
    frame: Frame = "interaction_full"
    modulation_frequency: float | None = None

    def __post_init__(self):
        if self.g < 0:
            raise ValueError(f"g must be >= 0, got {self.g}")
        if self.frame not in FRAMES:
            raise ValueError(f"unknown frame {self.frame!r}; expected one of {FRAMES}")


@dataclass(frozen=True)
class DriveParams:
    """Coherent drive on the auxiliary input; ``beta`` in s^-1/2."""

    beta: complex = 0.0

    @classmethod
    def from_power(cls, power: float, carrier: float, phase: float = 0.0) -> DriveParams:
        """``|beta| = sqrt(P / (hbar W))`` for power ``P`` (W) at carrier ``W`` (rad/s)."""
        if power < 0 or carrier <= 0:
            raise ValueError("power must be >= 0 and carrier > 0")
        return cls(math.sqrt(power / (hbar * carrier)) * complex(math.cos(phase), math.sin(phase)))

    @property
    def power_per_carrier(self) -> float:
        """``|beta|^2`` (photons per second), i.e. ``P / (hbar W)``."""
        return abs(self.beta) ** 2


@dataclass(frozen=True, eq=False)
class TimeDependentTerm:
    """``coefficient(t) * sum(terms)`` with ``coefficient = exp(i f t)`` or ``cos(f t)``."""

    terms: tuple[LadderTerm, ...]
    frequency: float
    kind: Literal["exp", "cos"]
    operator: sp.csr_matrix = field(default=None, repr=False)

    def __post_init__(self):
        if self.operator is None:
            d = self.terms[0].target.dim * self.terms[0].aux.dim
            object.__setattr__(self, "operator", to_matrix(self.terms, d))

    def coefficient(self, t: float) -> complex:
        if self.kind == "exp":
            return complex(math.cos(self.frequency * t), math.sin(self.frequency * t))
        return math.cos(self.frequency * t)


@dataclass(frozen=True, eq=False)
class Dissipator:
    operator: ModeOperator
    rate: float
    label: str
    ladder: LadderTerm = field(default=None, repr=False)

    @property
    def collapse(self) -> sp.csr_matrix:
        """Jump operator with the rate folded in, ``sqrt(rate) * c``."""
        return math.sqrt(self.rate) * self.operator.matrix


@dataclass(frozen=True, eq=False)
class SystemModel:
    target: ModeParams
    aux: ModeParams
    coupling: CouplingParams
    drive: DriveParams
    space: FockSpace
    static: sp.csr_matrix
    time_terms: tuple[TimeDependentTerm, ...]
    dissipators: tuple[Dissipator, ...]
    ops: dict = field(repr=False)
    static_terms: tuple[LadderTerm, ...] = field(default=(), repr=False)

    @property
    def frame(self) -> Frame:
        return self.coupling.frame

    @property
    def time_dependent(self) -> bool:
        return bool(self.time_terms)

    @property
    def fastest_phase_rate(self) -> float:
        """Largest explicit angular frequency in ``H(t)``, 0 if static."""
        rates = [abs(t.frequency) for t in self.time_terms]
        if self.frame == "lab_modulated":
            rates.append(2 * self.aux.angular_frequency)
        return max(rates, default=0.0)

    @property
    def conserves_excitations(self) -> bool:
        """True when ``H`` commutes with ``a†a + b†b`` (RWA or uncoupled, undriven, rotating frame)."""
        return (not self.time_terms and self.drive.beta == 0
                and self.frame != "lab_modulated")

    def hamiltonian(self, t: float = 0.0) -> ModeOperator:
        h = self.static.copy()
        for term in self.time_terms:
            h = h + term.coefficient(t) * term.operator
        return ModeOperator(h, f"H({t:g})")

    def counter_rotating(self, t: float) -> ModeOperator:
        """``g (a b e^{-2iwt} + a† b† e^{2iwt})``; zero outside the full interaction frame."""
        h = sp.csr_matrix(self.static.shape, dtype=complex)
        if self.frame == "interaction_full":
            for term in self.time_terms:
                h = h + term.coefficient(t) * term.operator
        return ModeOperator(h, "H_cr")

    def jump_rate_operator(self) -> sp.csr_matrix:
        """``sum_k L_k† L_k`` over the four dissipators."""
        out = sp.csr_matrix(self.static.shape, dtype=complex)
        for d in self.dissipators:
            c = d.collapse
            out = out + (c.conj().T @ c)
        return out.tocsr()

    def generator(self) -> LadderGenerator:
        """Fused matrix-form Lindblad right-hand side (see :mod:`sidebandsim.ladder`)."""
        jumps = [d.ladder for d in self.dissipators if d.rate > 0]
        heff = list(self.static_terms) + [(j.dag() @ j).scaled(-0.5j) for j in jumps]
        timed = [(t.coefficient, t.terms) for t in self.time_terms]
        return LadderGenerator((self.space.dim_target, self.space.dim_aux), heff, timed, jumps)

    def generator_scale(self) -> float:
        """Upper bound on the spectral radius of the Liouvillian (row-sum norms), in 1/s."""
        def rownorm(m):
            return float(abs(m).sum(axis=1).max()) if m.nnz else 0.0
        h = rownorm(self.static) + sum(rownorm(t.operator) for t in self.time_terms)
        j = sum(rownorm(d.collapse) ** 2 for d in self.dissipators)
        return 2 * h + 2 * j


def _drive_terms(beta: complex, kappa: float, space: FockSpace) -> list[LadderTerm]:
    s = math.sqrt(kappa)
    ia = eye(space.dim_target)
    return [LadderTerm(1j * s * beta, ia, raising(space.dim_aux)),
            LadderTerm(-1j * s * np.conj(beta), ia, lowering(space.dim_aux))]


def build_drive(beta: complex, kappa: float, space: FockSpace) -> ModeOperator:
    """Displacement Hamiltonian ``i sqrt(kappa) (beta b† - beta* b)`` (divided by hbar).

    Its Ehrenfest contribution to ``d<b>/dt`` is exactly ``sqrt(kappa) beta``.
    """
    if kappa < 0:
        raise ValueError(f"kappa must be >= 0, got {kappa}")
    return ModeOperator(to_matrix(_drive_terms(beta, kappa, space), space.dim), "H_drive",
                        hermitian=True)


def _hamiltonian_terms(target: ModeParams, aux: ModeParams, coupling: CouplingParams,
                       space: FockSpace):
    da, db = space.dim_target, space.dim_aux
    a, ad, ia = lowering(da), raising(da), eye(da)
    b, bd, ib = lowering(db), raising(db), eye(db)
    g = coupling.g
    w, W = target.angular_frequency, aux.angular_frequency

    if coupling.frame == "lab_modulated":
        delta = W - w
        if coupling.modulation_frequency is not None:
            if abs(coupling.modulation_frequency - delta) > 1e-12 * abs(delta):
                raise ValueError(f"lab frame needs modulation at W - w = {delta:.12g} rad/s, "
                                 f"got {coupling.modulation_frequency:.12g}")
        static = [LadderTerm(w, ad @ a, ib), LadderTerm(W, ia, bd @ b)]
        xx = [LadderTerm(2 * g, p, q) for p in (a, ad) for q in (b, bd)]
        return static, (TimeDependentTerm(tuple(xx), delta, "cos"),)

    static = [LadderTerm(g, a, bd), LadderTerm(g, ad, b)] if g else []
    terms: tuple[TimeDependentTerm, ...] = ()
    if coupling.frame == "interaction_full" and g != 0:
        terms = (TimeDependentTerm((LadderTerm(g, a, b),), -2 * w, "exp"),
                 TimeDependentTerm((LadderTerm(g, ad, bd),), 2 * w, "exp"))
    return static, terms


def build_hamiltonian(target: ModeParams, aux: ModeParams, coupling: CouplingParams,
                      space: FockSpace) -> tuple[sp.csr_matrix, tuple[TimeDependentTerm, ...]]:
    """Static part and time-dependent terms of ``H/hbar`` for the chosen frame."""
    static, terms = _hamiltonian_terms(target, aux, coupling, space)
    return to_matrix(static, space.dim), terms


def build_dissipators(target: ModeParams, aux: ModeParams, space: FockSpace) -> tuple[Dissipator, ...]:
    out = []
    for which, mode, name in (("target", target, "a"), ("aux", aux, "b")):
        c = annihilation(space, which)
        n = mode.n_bath
        d = space.mode_dim(which)
        other = eye(space.dim_aux if which == "target" else space.dim_target)
        for op, lad, rate, lab in ((c, lowering(d), mode.damping_rate * (n + 1), name),
                                   (c.dag(), raising(d), mode.damping_rate * n, f"{name}†")):
            pair = (lad, other) if which == "target" else (other, lad)
            out.append(Dissipator(op, rate, lab, LadderTerm(math.sqrt(rate), *pair)))
    return tuple(out)


def build_model(target: ModeParams, aux: ModeParams, coupling: CouplingParams,
                drive: DriveParams | None = None) -> SystemModel:
    drive = drive or DriveParams()
    space = FockSpace(int(target.truncation), int(aux.truncation))
    static_terms, terms = _hamiltonian_terms(target, aux, coupling, space)
    if drive.beta != 0:
        if coupling.frame == "lab_modulated":
            raise ValueError("coherent drive is only defined in the interaction frames")
        static_terms = static_terms + _drive_terms(drive.beta, aux.damping_rate, space)
    ops = {
        "a": annihilation(space, "target"),
        "b": annihilation(space, "aux"),
        "n_a": number(space, "target"),
        "n_b": number(space, "aux"),
    }
    return SystemModel(target, aux, coupling, drive, space, to_matrix(static_terms, space.dim),
                       terms, build_dissipators(target, aux, space), ops, tuple(static_terms))


def estimate_cooling(gamma: float, kappa: float, n_thermal: float) -> float:
    """Simple steady-state estimate ``gamma / (gamma + kappa) * n_T``."""
    if gamma < 0 or kappa < 0:
        raise ValueError("rates must be >= 0")
    if gamma + kappa == 0:
        raise ValueError("gamma and kappa cannot both be zero")
    return gamma / (gamma + kappa) * n_thermal
