"""Physical models that produce decoherence times.

* Friedrichs model: one level Omega coupled to a continuum through
  V^2(w) = g^2 / (1 + w^2). The resolvent pole is the zero of the
  continued dispersion function; the density matrix decays at twice the
  amplitude rate.
* Thermal bath: poles of the Bose factor 1/(exp(beta (lam + Z/2)) - 1).
* Macroscopic bodies: N-fold scaling of the interaction energy, the
  action-based particle count, and the thermal de Broglie comparison.
* Two-stage evolution: a fast decoherence stage set by the aggregate
  interaction and a slow relaxation stage set by a weak coupling.
* Generic kernels: poles of the analytic continuation in nu of the
  integrand conj(rho'(lam, nu)) O'(lam, nu).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .constants import HBAR, HBAR_SI, KB, KB_SI
from .cpoles import PoleLocation, SearchRectangle, continue_from_samples, locate_poles
from .errors import InternalConsistencyError, ModelError, PoleSearchError, ValidationError
from .estimate import DecoherenceEstimate
from .vanhove import (
    VanHoveObservable,
    VanHoveState,
    constant_kernel,
    lorentzian_nu,
    normalized_density,
)

TWO_STAGE_MIN_RATIO = 1e3


def _positive(name, value, allow_none=False):
    if value is None and allow_none:
        return
    if value is None or not (math.isfinite(value) and value > 0):
        raise ValidationError(f"{name} must be positive and finite, got {value!r}")


# --- Friedrichs model -------------------------------------------------------

@dataclass(frozen=True)
class FriedrichsModel:
    """Discrete level ``Omega`` (eV) coupled with strength ``g`` to [0, omega_max].

    The form factor is ``V^2(w) = g^2 / (1 + w^2)``, whose closed form
    continues to complex energies. ``omega_max = inf`` is the half line.
    """

    Omega: float = 1.0
    g: float = 0.1
    omega_max: float = math.inf

    def __post_init__(self):
        _positive("Omega", self.Omega)
        if not (math.isfinite(self.g) and self.g >= 0):
            raise ValidationError(f"g must be >= 0, got {self.g!r}")
        if not self.omega_max > self.Omega:
            raise ValidationError("omega_max must exceed Omega")

    def v2(self, z):
        """Form factor ``V^2`` at real or complex energy."""
        return self.g ** 2 / (1 + np.asarray(z) ** 2)

    def self_energy(self, z):
        """``Sigma(z) = int_0^omega_max V^2(w) / (z - w) dw`` off the cut [0, omega_max].

        With 1/((1 + w^2)(z - w)) = [1/(z - w) + (z + w)/(1 + w^2)] / (1 + z^2)
        the integral is elementary; principal logarithms put the cut on
        [0, omega_max].
        """
        z = np.asarray(z, dtype=complex)
        W = self.omega_max
        if math.isinf(W):
            body = np.log(-z) + 0.5 * math.pi * z
        else:
            body = np.log(z) - np.log(z - W) + z * math.atan(W) + 0.5 * math.log1p(W * W)
        return self.g ** 2 * body / (1 + z * z)


def friedrichs_dispersion(model: FriedrichsModel, z, sheet: str = "first"):
    """Dispersion function ``eta(z) = z - Omega - Sigma(z)``.

    ``sheet="second"`` gives its continuation from the upper half plane
    through the cut, ``eta_II = eta + 2 pi i V^2``, valid for Im z < 0.
    Resolvent poles are the zeros of ``eta_II``.
    """
    z = np.asarray(z, dtype=complex)
    eta = z - model.Omega - model.self_energy(z)
    if sheet == "first":
        return eta
    if sheet == "second":
        return eta + 2j * math.pi * model.v2(z)
    raise ValidationError(f"sheet must be 'first' or 'second', got {sheet!r}")


def friedrichs_formula_time(model: FriedrichsModel) -> DecoherenceEstimate:
    """Weak-coupling value ``t_D = hbar / (2 pi V^2(Omega))``."""
    return DecoherenceEstimate.from_gamma(2 * math.pi * float(model.v2(model.Omega)), "formula")


def friedrichs_search_rectangle(model: FriedrichsModel) -> SearchRectangle:
    """Lower-half-plane window around Omega sized by the golden-rule width."""
    w = math.pi * float(model.v2(model.Omega))
    depth = min(0.5 * model.Omega, 20 * w, 0.9)
    return SearchRectangle(0.5 * model.Omega, 1.5 * model.Omega, -depth, -0.02 * w)


def friedrichs_resonance(model: FriedrichsModel, tol: float = 1e-12) -> PoleLocation:
    """Zero of ``eta_II`` nearest Omega, as a pole of the resolvent ``1/eta_II``."""
    if model.g == 0:
        raise ModelError("decoupled model has no resonance")
    rect = friedrichs_search_rectangle(model)

    def inv(z):
        return 1.0 / friedrichs_dispersion(model, z, "second")

    try:
        poles = locate_poles(inv, rect, tol=tol, source="resolvent")
    except PoleSearchError as exc:
        poles = exc.poles
    if not poles:
        raise ModelError(f"no zero of the dispersion function in {rect}")
    return min(poles, key=lambda p: abs(p.position - model.Omega))


def friedrichs_decoherence_time(model: FriedrichsModel) -> DecoherenceEstimate:
    """Pole-route decoherence time of the Friedrichs model.

    The amplitude pole z0 = w + i Im z0 makes the density matrix decay
    with the pole of the rho-evolution at conj(z0) - z0, so the width is
    ``gamma = 2 |Im z0|``. The weak-coupling formula value is attached in
    the diagnostics. ``g = 0`` gives the infinity sentinel.
    """
    formula = friedrichs_formula_time(model)
    if model.g == 0:
        return DecoherenceEstimate.from_gamma(0.0, "pole", formula_t_D=formula.t_D, poles=[])
    pole = friedrichs_resonance(model)
    z0 = pole.position
    rho_pole = PoleLocation(complex(0.0, -2 * z0.imag), pole.residue, pole.multiplicity, "resolvent")
    return DecoherenceEstimate.from_gamma(
        2 * abs(z0.imag),
        "pole",
        formula_t_D=formula.t_D,
        amplitude_pole=z0,
        poles=[rho_pole],
    )


def friedrichs_pole_state(model: FriedrichsModel, estimate: DecoherenceEstimate):
    """State/observable pair whose fluctuating term is the pole-dominant term.

    The regular part of the state is Lorentzian in nu with the rho-pole
    width ``estimate.gamma``, concentrated in lam around the resonance
    energy; the observable is the constant kernel.
    """
    if estimate.is_sentinel:
        raise ModelError("free model has no pole-dominant term")
    center = float(np.real(estimate.diagnostics.get("amplitude_pole", model.Omega)))
    width = 0.1 * center
    omega_max = 4.0 * center
    state = VanHoveState(
        normalized_density(lambda w: math.exp(-w / center), omega_max),
        lorentzian_nu(estimate.gamma, center, width, omega_max=omega_max),
    )
    obs = VanHoveObservable(lambda w: 1.0, constant_kernel(1.0, omega_max))
    return state, obs


# --- thermal bath -----------------------------------------------------------

@dataclass(frozen=True)
class ThermalBathModel:
    """Bose factor at temperature ``T`` (K) on the mean-energy slice ``lam`` (eV)."""

    T: float
    lam: float = 1.0
    n_max: int = 1

    def __post_init__(self):
        _positive("T", self.T)
        if not (math.isfinite(self.lam) and self.lam >= 0):
            raise ValidationError(f"lambda must be >= 0, got {self.lam!r}")
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ValidationError(f"n_max must be an integer >= 1, got {self.n_max!r}")

    @property
    def beta(self) -> float:
        return 1.0 / (KB * self.T)

    def bose(self, z):
        """``B(Z) = 1 / (exp(beta (lam + Z/2)) - 1)``."""
        return 1.0 / np.expm1(self.beta * (self.lam + np.asarray(z, dtype=complex) / 2))

    def pole(self, n: int) -> complex:
        return complex(-2 * self.lam, 4 * math.pi * n * KB * self.T)


def thermal_search_rectangle(model: ThermalBathModel, n: int) -> SearchRectangle:
    """Rectangle of one pole spacing around the n-th Bose pole."""
    step = 4 * math.pi * KB * model.T
    return SearchRectangle(-2 * model.lam - 0.5 * step, -2 * model.lam + 0.5 * step,
                           (n - 0.5) * step, (n + 0.5) * step)


def locate_thermal_poles(model: ThermalBathModel, tol: float = 1e-13) -> list[PoleLocation]:
    """Bose-factor poles n = 1..n_max found numerically, one rectangle each."""
    out = []
    for n in range(1, model.n_max + 1):
        found = locate_poles(model.bose, thermal_search_rectangle(model, n), tol=tol, source="initial-condition")
        if len(found) != 1:
            raise InternalConsistencyError(f"expected one Bose pole near n={n}, found {len(found)}")
        out.append(found[0])
    return out


def thermal_pole_grid(model: ThermalBathModel) -> list[PoleLocation]:
    """Closed-form Bose poles ``Z_n = -2 lam + 4 pi i n k T`` with residue ``2/beta``.

    Each pole is cross-checked against the numerical pole search.

    Raises
    ------
    InternalConsistencyError
        A located pole or residue differs from the closed form by more
        than 1e-6 relative.
    """
    located = locate_thermal_poles(model)
    out = []
    for n, found in enumerate(located, start=1):
        z = model.pole(n)
        res = 2.0 / model.beta
        if abs(found.position - z) > 1e-6 * abs(z) or abs(found.residue - res) > 1e-6 * res:
            raise InternalConsistencyError(
                f"Bose pole n={n}: closed form {z}, res {res}; located {found.position}, res {found.residue}"
            )
        out.append(PoleLocation(z, complex(res), 1, "initial-condition"))
    return out


def thermal_decoherence_time(model: ThermalBathModel) -> DecoherenceEstimate:
    """``t_D = hbar / (4 pi k T)`` from the n = 1 Bose pole."""
    return DecoherenceEstimate.from_gamma(4 * math.pi * KB * model.T, "formula")


# --- macroscopic bodies -----------------------------------------------------

@dataclass(frozen=True)
class MacroscopicBody:
    """Macroscopic object; every field optional but positive when present.

    ``N`` particle count, ``V_i`` mean interaction per particle (eV), ``M``
    mass (kg), ``L`` length (m), ``Upsilon`` characteristic time (s), ``T``
    temperature (K).
    """

    N: float | None = None
    V_i: float | None = None
    M: float | None = None
    L: float | None = None
    Upsilon: float | None = None
    T: float | None = None

    def __post_init__(self):
        for name in ("N", "V_i", "M", "L", "Upsilon", "T"):
            _positive(name, getattr(self, name), allow_none=True)

    def require(self, *names):
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise ValidationError(f"macroscopic body lacks {', '.join(missing)}")


def nbody_scaled_time(single: DecoherenceEstimate, N: float) -> DecoherenceEstimate:
    """Scale a single-particle estimate to N particles: gamma * N, t_D / N."""
    if not N >= 1:
        raise ValidationError(f"N must be >= 1, got {N!r}")
    if N == 1:
        return single
    diag = dict(single.diagnostics)
    diag["N"] = N
    if single.method == "fit":
        return DecoherenceEstimate(single.t_D / N, single.gamma * N, "fit", diag)
    return DecoherenceEstimate.from_gamma(single.gamma * N, single.method, **diag)


def particle_number_from_action(body: MacroscopicBody) -> float:
    """``N = M L^2 / (hbar Upsilon)`` in SI units."""
    body.require("M", "L", "Upsilon")
    return body.M * body.L ** 2 / (HBAR_SI * body.Upsilon)


def macroscopic_decoherence_time(body: MacroscopicBody) -> DecoherenceEstimate:
    """``t_D = Upsilon hbar^2 / (M L^2 k T)`` in SI units."""
    body.require("M", "L", "Upsilon", "T")
    t_D = body.Upsilon * HBAR_SI ** 2 / (body.M * body.L ** 2 * KB_SI * body.T)
    return DecoherenceEstimate.from_gamma(HBAR / t_D, "formula", particle_number=particle_number_from_action(body))


def nbody_decoherence_time(body: MacroscopicBody) -> DecoherenceEstimate:
    """``t_D = hbar / (N V_i)``: the single-particle width scaled by N."""
    body.require("N", "V_i")
    return nbody_scaled_time(DecoherenceEstimate.from_gamma(body.V_i, "formula"), body.N)


@dataclass(frozen=True)
class EinselectionScenario:
    """Relaxation time ``gamma0_inv`` (s), length ``L0`` (m), mass ``M`` (kg), temperature ``T`` (K)."""

    gamma0_inv: float
    L0: float
    M: float
    T: float

    def __post_init__(self):
        for name in ("gamma0_inv", "L0", "M", "T"):
            _positive(name, getattr(self, name))


def de_broglie_length(M: float, T: float) -> float:
    """Thermal de Broglie length ``hbar / sqrt(M k T)`` in m."""
    return HBAR_SI / math.sqrt(M * KB_SI * T)


def einselection_comparison(sc: EinselectionScenario) -> DecoherenceEstimate:
    """``t_D = gamma0^-1 (lambda_DB / L0)^2``.

    Algebraically identical to :func:`macroscopic_decoherence_time` with
    ``Upsilon = gamma0_inv`` and ``L = L0``.
    """
    lam_db = de_broglie_length(sc.M, sc.T)
    t_D = sc.gamma0_inv * (lam_db / sc.L0) ** 2
    return DecoherenceEstimate.from_gamma(HBAR / t_D, "formula", de_broglie_length=lam_db)


# --- two-stage evolution ----------------------------------------------------

@dataclass(frozen=True)
class TwoStageModel:
    """Strong aggregate interaction ``macro.N * macro.V_i`` plus weak ``micro_coupling`` (eV)."""

    macro: MacroscopicBody
    micro_coupling: float

    def __post_init__(self):
        self.macro.require("N", "V_i")
        if not (math.isfinite(self.micro_coupling) and self.micro_coupling >= 0):
            raise ValidationError(f"micro_coupling must be >= 0, got {self.micro_coupling!r}")
        agg = self.aggregate
        if self.micro_coupling >= agg:
            raise ModelError(f"micro coupling {self.micro_coupling} is not below the aggregate {agg}")
        if self.micro_coupling > 0 and agg / self.micro_coupling < TWO_STAGE_MIN_RATIO:
            warnings.warn(
                f"aggregate/micro coupling ratio {agg / self.micro_coupling:.3g} is below {TWO_STAGE_MIN_RATIO:g}",
                RuntimeWarning,
                stacklevel=3,
            )

    @property
    def aggregate(self) -> float:
        return self.macro.N * self.macro.V_i


def two_stage_times(model: TwoStageModel) -> tuple[DecoherenceEstimate, DecoherenceEstimate]:
    """Decoherence time ``hbar/(N V_i)`` and relaxation time ``hbar/micro_coupling``.

    A vanishing micro coupling gives the infinity sentinel for relaxation.
    """
    deco = DecoherenceEstimate.from_gamma(model.aggregate, "formula", stage="decoherence")
    relax = DecoherenceEstimate.from_gamma(model.micro_coupling, "formula", stage="relaxation")
    if not relax.t_D > deco.t_D:
        raise ModelError("relaxation is not slower than decoherence")
    return deco, relax


# --- generic kernels --------------------------------------------------------

def dominant_lambda(state: VanHoveState) -> float:
    """Mean energy where the state's regular part is largest on the diagonal."""
    center = state.regular.params.get("center")
    if center is not None:
        return float(center)
    lam = np.linspace(0.0, state.omega_max / 2, 2049)[1:]
    return float(lam[np.argmax(np.abs(state.regular.lambda_nu(lam, np.zeros_like(lam))))])


def kernel_scale(state: VanHoveState, obs: VanHoveObservable) -> float:
    scales = [k.nu_scale for k in (state.regular, obs.regular) if k.nu_scale]
    return float(min(scales)) if scales else 1.0


def kernel_search_rectangle(state: VanHoveState, obs: VanHoveObservable, lam: float | None = None) -> SearchRectangle:
    """Upper-half nu-plane window scaled by the kernels' nu width."""
    lam = dominant_lambda(state) if lam is None else lam
    scale = kernel_scale(state, obs)
    half = min(2 * lam, 8 * scale)
    return SearchRectangle(-half, half, 1e-3 * scale, 10 * scale)


def kernel_poles(state: VanHoveState, obs: VanHoveObservable, lam: float | None = None,
                 rect: SearchRectangle | None = None) -> list[PoleLocation]:
    """Upper-half-plane poles of the continued integrand in nu at fixed lam.

    The integrand conj(rho'(lam, nu)) O'(lam, nu) continues to
    conj(rho_c(lam, conj Z)) O_c(lam, Z). Kernels without a closed-form
    continuation are continued by rational approximation of real-axis
    samples.
    """
    lam = dominant_lambda(state) if lam is None else lam
    rect = kernel_search_rectangle(state, obs, lam) if rect is None else rect
    rho, o = state.regular, obs.regular
    if rho.continuation is not None and o.continuation is not None:
        def h(z):
            z = np.asarray(z, dtype=complex)
            return np.conj(rho.continue_nu(lam, np.conj(z))) * o.continue_nu(lam, z)

        return locate_poles(h, rect, source="initial-condition")
    nu = np.linspace(-min(2 * lam, state.omega_max), min(2 * lam, state.omega_max), 257)
    vals = np.conj(rho.lambda_nu(lam, nu)) * o.lambda_nu(lam, nu)
    approx = continue_from_samples(list(zip(nu, vals)))
    out = []
    for p, r in zip(approx.poles, approx.residues):
        if rect.contains(complex(p)):
            out.append(PoleLocation(complex(p), complex(r), 1, "continuation-approximant"))
    return out


def kernel_decoherence_time(state: VanHoveState, obs: VanHoveObservable, lam: float | None = None) -> DecoherenceEstimate:
    """Pole-route estimate from the smallest upper-half-plane width.

    A pole-free continuation gives the infinity sentinel: the fluctuating
    term then has no exponential decay.
    """
    poles = kernel_poles(state, obs, lam)
    if not poles:
        return DecoherenceEstimate.from_gamma(0.0, "pole", poles=[])
    best = min(poles, key=lambda p: p.position.imag)
    return DecoherenceEstimate.from_gamma(best.position.imag, "pole", poles=poles)


__all__ = [
    "FriedrichsModel", "friedrichs_dispersion", "friedrichs_formula_time", "friedrichs_resonance",
    "friedrichs_decoherence_time", "friedrichs_pole_state", "friedrichs_search_rectangle",
    "ThermalBathModel", "thermal_pole_grid", "locate_thermal_poles", "thermal_decoherence_time",
    "thermal_search_rectangle", "MacroscopicBody", "nbody_scaled_time", "nbody_decoherence_time",
    "particle_number_from_action", "macroscopic_decoherence_time", "EinselectionScenario",
    "de_broglie_length", "einselection_comparison", "TwoStageModel", "two_stage_times",
    "kernel_poles", "kernel_decoherence_time", "kernel_search_rectangle", "dominant_lambda",
    "DecoherenceEstimate",
]
