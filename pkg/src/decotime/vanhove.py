"""Van Hove states and observables on a continuous spectrum [0, omega_max].

A state (or observable) is a singular diagonal density plus a regular kernel
K(omega, omega'). Kernels are stored as vectorized callables together with
the metadata the rest of the package needs: a declared bound, a
characteristic width in the difference variable nu, and, for the named
analytic families, the continuation of nu to the complex plane at fixed
mean energy lambda.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np
from scipy import integrate
from scipy.interpolate import RegularGridInterpolator

from .errors import ConvergenceError, DomainError, ValidationError

DEFAULT_OMEGA_MAX = 50.0
NORMALIZATION_TOL = 1e-6
HERMITIAN_TOL = 1e-12

KERNEL_FAMILIES = ("lorentzian_nu", "gaussian_nu", "separable", "grid")


def bump(lam, center: float, width: float):
    """Unit-mass Gaussian profile in the mean energy."""
    lam = np.asarray(lam)
    return np.exp(-0.5 * ((lam - center) / width) ** 2) / (math.sqrt(2 * math.pi) * width)


@dataclass(frozen=True, eq=False)
class RegularKernel:
    """Regular part K(omega, omega') of a van Hove state or observable.

    Parameters
    ----------
    func : callable
        Vectorized ``func(omega, omega_p) -> complex array``.
    omega_max : float
        Spectrum cutoff in eV; the kernel lives on ``[0, omega_max]**2``.
    bound : float
        Declared bound on ``|K|``.
    family : str
        Family identifier, used in reports and scenario files.
    params : mapping
        Family parameters, kept for serialization.
    nu_scale : float, optional
        Characteristic width in nu (eV). Sets the natural time scale
        ``hbar / nu_scale`` of the kernel.
    continuation : callable, optional
        ``continuation(lam, Z)``: analytic continuation of
        ``nu -> K(lam + nu/2, lam - nu/2)`` to complex ``Z``.
    """

    func: Callable[[np.ndarray, np.ndarray], np.ndarray]
    omega_max: float = DEFAULT_OMEGA_MAX
    bound: float = 1.0
    family: str = "custom"
    params: Mapping[str, Any] = field(default_factory=dict)
    nu_scale: float | None = None
    continuation: Callable[[float, Any], Any] | None = None
    is_zero: bool = False

    def __post_init__(self):
        if not self.omega_max > 0:
            raise ValidationError(f"omega_max must be positive, got {self.omega_max}")

    def __call__(self, omega, omega_p):
        omega = np.asarray(omega, dtype=float)
        omega_p = np.asarray(omega_p, dtype=float)
        slack = 1e-12 * self.omega_max
        lo = min(np.min(omega, initial=0.0), np.min(omega_p, initial=0.0))
        hi = max(np.max(omega, initial=0.0), np.max(omega_p, initial=0.0))
        if lo < -slack or hi > self.omega_max + slack:
            raise DomainError(
                f"kernel evaluated outside [0, {self.omega_max}]^2 (range {lo}..{hi})"
            )
        return np.asarray(self.func(omega, omega_p), dtype=complex)

    def lambda_nu(self, lam, nu):
        """Evaluate K'(lam, nu) = K(lam + nu/2, lam - nu/2)."""
        lam = np.asarray(lam, dtype=float)
        nu = np.asarray(nu, dtype=float)
        slack = 1e-12 * self.omega_max
        if np.any(np.abs(nu) > 2 * lam + slack) or np.any(
            lam + np.abs(nu) / 2 > self.omega_max + slack
        ):
            raise DomainError("(lambda, nu) outside |nu| <= 2 lambda, lambda + |nu|/2 <= omega_max")
        w = np.clip(lam + nu / 2, 0.0, self.omega_max)
        wp = np.clip(lam - nu / 2, 0.0, self.omega_max)
        return np.asarray(self.func(w, wp), dtype=complex)

    def continue_nu(self, lam: float, z):
        """Continuation of K'(lam, .) to complex nu, if the family has one."""
        if self.continuation is None:
            raise DomainError(f"kernel family {self.family!r} has no closed-form continuation")
        return self.continuation(lam, np.asarray(z, dtype=complex))


def zero_kernel(omega_max: float = DEFAULT_OMEGA_MAX) -> RegularKernel:
    return RegularKernel(
        func=lambda w, wp: np.zeros(np.broadcast(w, wp).shape, dtype=complex),
        omega_max=omega_max,
        bound=0.0,
        family="zero",
        continuation=lambda lam, z: np.zeros_like(z),
        is_zero=True,
    )


def constant_kernel(value: float = 1.0, omega_max: float = DEFAULT_OMEGA_MAX) -> RegularKernel:
    """Constant real kernel; a pole-free observable."""
    value = float(value)
    return RegularKernel(
        func=lambda w, wp: np.full(np.broadcast(w, wp).shape, value, dtype=complex),
        omega_max=omega_max,
        bound=abs(value),
        family="constant",
        params={"value": value},
        continuation=lambda lam, z: np.full(np.shape(z), value, dtype=complex),
        is_zero=value == 0.0,
    )


def lorentzian_nu(
    gamma: float,
    center: float,
    width: float,
    amplitude: float = 1.0,
    omega_max: float = DEFAULT_OMEGA_MAX,
) -> RegularKernel:
    """Kernel ``amplitude * bump(lam) * gamma**2 / (nu**2 + gamma**2)``.

    Its nu-continuation has simple poles at ``+-i gamma``; the upper one
    produces a fluctuating term decaying as ``exp(-gamma t / hbar)``.
    """
    if gamma <= 0 or width <= 0:
        raise ValidationError("lorentzian_nu needs gamma > 0 and width > 0")
    g2 = gamma * gamma

    def func(w, wp):
        lam = 0.5 * (w + wp)
        nu = w - wp
        return (amplitude * bump(lam, center, width) * g2 / (nu * nu + g2)).astype(complex)

    def cont(lam, z):
        return amplitude * bump(lam, center, width) * g2 / (z * z + g2)

    return RegularKernel(
        func=func,
        omega_max=omega_max,
        bound=abs(amplitude) / (math.sqrt(2 * math.pi) * width),
        family="lorentzian_nu",
        params={"gamma": gamma, "center": center, "width": width, "amplitude": amplitude},
        nu_scale=gamma,
        continuation=cont,
    )


def gaussian_nu(
    sigma: float,
    center: float,
    width: float,
    amplitude: float = 1.0,
    omega_max: float = DEFAULT_OMEGA_MAX,
) -> RegularKernel:
    """Kernel ``amplitude * bump(lam) * exp(-nu**2 / (2 sigma**2))``; entire in nu."""
    if sigma <= 0 or width <= 0:
        raise ValidationError("gaussian_nu needs sigma > 0 and width > 0")

    def func(w, wp):
        lam = 0.5 * (w + wp)
        nu = w - wp
        return (amplitude * bump(lam, center, width) * np.exp(-0.5 * (nu / sigma) ** 2)).astype(complex)

    def cont(lam, z):
        return amplitude * bump(lam, center, width) * np.exp(-0.5 * (z / sigma) ** 2)

    return RegularKernel(
        func=func,
        omega_max=omega_max,
        bound=abs(amplitude) / (math.sqrt(2 * math.pi) * width),
        family="gaussian_nu",
        params={"sigma": sigma, "center": center, "width": width, "amplitude": amplitude},
        nu_scale=sigma,
        continuation=cont,
    )


def separable(
    amplitude: Callable,
    omega_max: float = DEFAULT_OMEGA_MAX,
    bound: float | None = None,
    nu_scale: float | None = None,
    params: Mapping[str, Any] | None = None,
) -> RegularKernel:
    """Product kernel ``f(omega) * conj(f(omega'))``, Hermitian by construction.

    ``amplitude`` must accept complex arguments for the continuation to be
    available; the conjugated factor is continued through Schwarz reflection.
    """

    def func(w, wp):
        return amplitude(w) * np.conj(amplitude(wp))

    def cont(lam, z):
        return amplitude(lam + z / 2) * np.conj(amplitude(np.conj(lam - z / 2)))

    if bound is None:
        grid = np.linspace(0.0, omega_max, 2001)
        bound = float(np.max(np.abs(amplitude(grid))) ** 2)
    return RegularKernel(
        func=func,
        omega_max=omega_max,
        bound=bound,
        family="separable",
        params=dict(params or {}),
        nu_scale=nu_scale,
        continuation=cont,
    )


def gaussian_packet(center: float, spread: float, omega_max: float = DEFAULT_OMEGA_MAX) -> RegularKernel:
    """Separable kernel of the wave packet ``exp(-(omega - center)**2 / (4 spread**2))``.

    In (lambda, nu) it equals ``exp(-(lam-center)**2/(2 spread**2)) * exp(-nu**2/(8 spread**2))``,
    so its nu-width is ``2 * spread``.
    """
    if spread <= 0:
        raise ValidationError("gaussian_packet needs spread > 0")

    def f(w):
        return np.exp(-((w - center) ** 2) / (4 * spread * spread))

    return separable(
        f,
        omega_max=omega_max,
        bound=1.0,
        nu_scale=2 * spread,
        params={"shape": "gaussian_packet", "center": center, "spread": spread},
    )


def grid_kernel(omegas, values) -> RegularKernel:
    """Kernel sampled on a rectangular grid, interpolated bilinearly.

    ``omegas`` must start at 0; its last entry is taken as ``omega_max``.
    """
    omegas = np.asarray(omegas, dtype=float)
    values = np.asarray(values, dtype=complex)
    if omegas.ndim != 1 or omegas.size < 2 or np.any(np.diff(omegas) <= 0):
        raise ValidationError("grid abscissae must be strictly increasing")
    if abs(omegas[0]) > 0:
        raise ValidationError("grid must start at omega = 0")
    if values.shape != (omegas.size, omegas.size):
        raise ValidationError(f"grid values must have shape {(omegas.size, omegas.size)}")
    interp = RegularGridInterpolator((omegas, omegas), values, method="linear")

    def func(w, wp):
        w, wp = np.broadcast_arrays(w, wp)
        pts = np.stack([w.ravel(), wp.ravel()], axis=-1)
        return interp(pts).reshape(w.shape)

    return RegularKernel(
        func=func,
        omega_max=float(omegas[-1]),
        bound=float(np.max(np.abs(values))),
        family="grid",
        params={"spacing": float(omegas[1] - omegas[0]), "n": int(omegas.size)},
    )


def to_lambda_nu(kernel: RegularKernel) -> Callable:
    """Return ``K'(lam, nu) = K(lam + nu/2, lam - nu/2)``; the Jacobian is one."""
    return kernel.lambda_nu


def hermitize(kernel: RegularKernel) -> RegularKernel:
    """Hermitian part ``(K(w, w') + conj K(w', w)) / 2``."""
    if kernel.is_zero:
        return kernel

    def func(w, wp):
        return 0.5 * (kernel.func(w, wp) + np.conj(kernel.func(wp, w)))

    cont = None
    if kernel.continuation is not None:
        def cont(lam, z):
            return 0.5 * (kernel.continuation(lam, z) + np.conj(kernel.continuation(lam, -np.conj(z))))

    return RegularKernel(
        func=func,
        omega_max=kernel.omega_max,
        bound=kernel.bound,
        family=f"hermitized({kernel.family})",
        params=dict(kernel.params),
        nu_scale=kernel.nu_scale,
        continuation=cont,
    )


def hermiticity_defect(kernel: RegularKernel, n: int = 17) -> float:
    """Largest ``|K(w, w') - conj K(w', w)|`` on an n x n grid."""
    w = np.linspace(0.0, kernel.omega_max, n)
    W, Wp = np.meshgrid(w, w, indexing="ij")
    k = kernel(W, Wp)
    return float(np.max(np.abs(k - np.conj(k.T)))) if k.size else 0.0


def _check_kernel(kernel: RegularKernel, what: str):
    defect = hermiticity_defect(kernel)
    scale = max(kernel.bound, 1e-300)
    if defect > HERMITIAN_TOL * max(scale, 1.0):
        raise ValidationError(f"{what} regular part is not Hermitian (defect {defect:.3g})")
    w = np.linspace(0.0, kernel.omega_max, 33)
    peak = float(np.max(np.abs(kernel(w[:, None], w[None, :]))))
    if peak > kernel.bound * (1 + 1e-9) + 1e-300:
        raise ValidationError(f"{what} regular part exceeds its declared bound ({peak} > {kernel.bound})")


@dataclass(frozen=True, eq=False)
class VanHoveState:
    """State: nonnegative normalized diagonal density plus a regular kernel."""

    singular: Callable
    regular: RegularKernel

    def __post_init__(self):
        w = np.linspace(0.0, self.omega_max, 401)
        rho = np.asarray([self.singular(x) for x in w], dtype=float)
        if np.any(rho < -1e-14):
            raise ValidationError("singular density must be nonnegative")
        norm = _quad(self.singular, self.omega_max)
        if abs(norm - 1.0) > NORMALIZATION_TOL:
            raise ValidationError(f"singular density integrates to {norm!r}, expected 1")
        _check_kernel(self.regular, "state")

    @property
    def omega_max(self) -> float:
        return self.regular.omega_max


@dataclass(frozen=True, eq=False)
class VanHoveObservable:
    """Observable: real diagonal function plus a Hermitian regular kernel."""

    singular: Callable
    regular: RegularKernel

    def __post_init__(self):
        w = np.linspace(0.0, self.omega_max, 65)
        vals = np.asarray([self.singular(x) for x in w])
        if np.iscomplexobj(vals) and np.any(np.abs(vals.imag) > 0):
            raise ValidationError("observable singular part must be real")
        _check_kernel(self.regular, "observable")

    @property
    def omega_max(self) -> float:
        return self.regular.omega_max


@dataclass(frozen=True, eq=False)
class ExpectationSeries:
    """Fluctuating term sampled on a time grid, plus the constant term.

    ``errors`` holds the quadrature error bar of each value and ``failed``
    marks points whose quadrature did not reach tolerance.
    """

    times: np.ndarray
    values: np.ndarray
    constant_part: float
    errors: np.ndarray | None = None
    failed: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        if t.shape != v.shape or t.ndim != 1:
            raise ValidationError("times and values must be 1-D arrays of equal length")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValidationError("times must be strictly increasing")
        if not np.all(np.isfinite(v)):
            raise ValidationError("series values must be finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        if self.failed is None:
            object.__setattr__(self, "failed", np.zeros(t.size, dtype=bool))
        if self.errors is None:
            object.__setattr__(self, "errors", np.zeros(t.size))

    def __len__(self):
        return self.times.size


def normalized_density(func: Callable, omega_max: float) -> Callable:
    """Rescale a nonnegative function to unit mass on ``[0, omega_max]``."""
    mass = _quad(func, omega_max)
    if not mass > 0:
        raise ValidationError("density has no mass on the spectrum")
    return lambda w: func(w) / mass


def _quad(func: Callable, omega_max: float, epsabs: float = 1e-13, epsrel: float = 1e-11) -> float:
    value, err, info = integrate.quad(func, 0.0, omega_max, epsabs=epsabs, epsrel=epsrel, limit=400, full_output=1)[:3]
    tol = max(epsabs, epsrel * abs(value))
    if err > 100 * tol:
        raise ConvergenceError(f"diagonal quadrature reached only {err:.3g}", value, err)
    return float(value)


def expectation_constant(state: VanHoveState, obs: VanHoveObservable) -> float:
    """Constant term: the t -> infinity limit of the expectation value.

    Only the singular parts contribute; the regular parts vanish in the
    weak limit.
    """
    if state.omega_max != obs.omega_max:
        raise DomainError(f"state and observable cutoffs differ ({state.omega_max} vs {obs.omega_max})")
    return _quad(lambda w: float(np.conj(state.singular(w)).real) * float(np.real(obs.singular(w))), state.omega_max)


def weak_limit_state(state: VanHoveState) -> VanHoveState:
    """Diagonal state keeping only the singular part; idempotent."""
    if state.regular.is_zero:
        return state
    return VanHoveState(state.singular, zero_kernel(state.omega_max))
