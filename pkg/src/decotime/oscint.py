"""Direct evaluation of the fluctuating term over a time grid.

The double integral over (omega, omega') is taken in mean/difference
coordinates (lambda, nu). Because only nu carries the phase e^{i nu t/hbar},
the lambda-integral

    G(nu) = int_{|nu|/2}^{omega_max - |nu|/2} conj(rho'(lam, nu)) O'(lam, nu) dlam

is time independent. It is computed once per state/observable pair on an
adaptive lambda partition and stored as a piecewise Chebyshev profile in nu.
Each time then needs only the one-dimensional oscillatory integral of G,
folded onto nu >= 0 and split into panels no wider than half an oscillation
period, each integrated with a 7/15-point Gauss-Kronrod pair and bisected
while its error estimate is too large.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .constants import HBAR
from .errors import ConvergenceError, DomainError, ValidationError
from .vanhove import ExpectationSeries, VanHoveObservable, VanHoveState, expectation_constant

# 15-point Kronrod nodes on [0, 1] with Kronrod and embedded 7-point Gauss
# weights (QUADPACK qk15).
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])  # 15 nodes on [-1, 1]
KRONROD_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
GAUSS_WEIGHTS = np.zeros(15)
GAUSS_WEIGHTS[[1, 3, 5]] = _WG[:3]
GAUSS_WEIGHTS[[13, 11, 9]] = _WG[:3]
GAUSS_WEIGHTS[7] = _WG[3]

_EPS = np.finfo(float).eps
_UFLOW = np.finfo(float).tiny
_ROUNDOFF = 51 * _EPS

# Chebyshev profile: points of the first kind and the matrix mapping samples
# to coefficients.
CHEB_DEGREE = 23
_CHEB_X = np.cos(np.pi * (np.arange(CHEB_DEGREE + 1) + 0.5) / (CHEB_DEGREE + 1))[::-1]
_CHEB_INV = np.linalg.inv(np.polynomial.chebyshev.chebvander(_CHEB_X, CHEB_DEGREE))

_BLOCK = 256  # nu points per vectorized lambda pass


@dataclass(frozen=True)
class QuadratureConfig:
    """Tolerances and limits for the fluctuating-term quadrature.

    ``max_subdivisions`` bounds the number of bisection rounds of every
    adaptive partition; ``lambda_panels`` is the number of initial panels on
    both the lambda and the nu axis.
    """

    abs_tol: float = 1e-12
    rel_tol: float = 1e-8
    max_subdivisions: int = 14
    lambda_panels: int = 16

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValidationError("quadrature tolerances must be positive")
        if self.max_subdivisions < 1:
            raise ValidationError("max_subdivisions must be >= 1")
        if self.lambda_panels < 1:
            raise ValidationError("lambda_panels must be >= 1")


def gk15(values: np.ndarray, half_width):
    """Kronrod value, QUADPACK error estimate and |f| integral over the last axis."""
    k = values @ KRONROD_WEIGHTS
    g = values @ GAUSS_WEIGHTS
    resabs = (np.abs(values) @ KRONROD_WEIGHTS) * half_width
    resasc = (np.abs(values - (k / 2.0)[..., None]) @ KRONROD_WEIGHTS) * half_width
    err = np.abs(k - g) * half_width
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = resasc * np.minimum(1.0, (200.0 * err / resasc) ** 1.5)
    err = np.where((resasc != 0) & (err != 0), scaled, err)
    err = np.where(resabs > _UFLOW / (50 * _EPS), np.maximum(err, 50 * _EPS * resabs), err)
    return k * half_width, err, resabs


def _csum(values) -> complex:
    """Compensated sum in fixed index order."""
    values = np.asarray(values, dtype=complex).ravel()
    return complex(math.fsum(values.real.tolist()), math.fsum(values.imag.tolist()))


class _Integrand:
    """conj(rho'(lam, nu)) * O'(lam, nu)."""

    def __init__(self, state: VanHoveState, obs: VanHoveObservable):
        if state.omega_max != obs.omega_max:
            raise DomainError(f"state and observable cutoffs differ ({state.omega_max} vs {obs.omega_max})")
        self.rho = state.regular
        self.obs = obs.regular
        self.omega_max = float(state.omega_max)
        self.is_zero = self.rho.is_zero or self.obs.is_zero

    def __call__(self, lam, nu):
        return np.conj(self.rho.lambda_nu(lam, nu)) * self.obs.lambda_nu(lam, nu)


class _LambdaIntegrator:
    """G(+nu) and G(-nu) for nu >= 0 on a shared adaptive lambda partition."""

    def __init__(self, fn: _Integrand, cfg: QuadratureConfig, tol: float):
        self.fn = fn
        self.W = fn.omega_max
        self.tol = tol
        self.max_levels = cfg.max_subdivisions
        edges = np.linspace(0.0, self.W, cfg.lambda_panels + 1)
        self.edges = np.union1d(edges, [0.5 * self.W])
        self.converged = True

    def _pass(self, nus: np.ndarray):
        W = self.W
        a, b = self.edges[:-1], self.edges[1:]
        half = nus[:, None] / 2
        lo = np.maximum(a[None, :], half)
        hi = np.minimum(b[None, :], W - half)
        valid = hi > lo
        hw = np.where(valid, 0.5 * (hi - lo), 0.0)
        mid = np.where(valid, 0.5 * (hi + lo), 0.5 * W)
        lam = mid[..., None] + hw[..., None] * NODES
        nu = np.broadcast_to(nus[:, None, None], lam.shape)
        vp, ep, ap = gk15(self.fn(lam, nu), hw)
        vm, em, am = gk15(self.fn(lam, -nu), hw)
        return vp, vm, ep + em, ap + am

    def __call__(self, nus: np.ndarray):
        """Return G(+nu), G(-nu) and their summed error for each nu."""
        nus = np.asarray(nus, dtype=float)
        for level in range(self.max_levels + 1):
            vp, vm, err, rabs = self._pass(nus)
            width = np.diff(self.edges) / self.W
            bad = np.any((err > self.tol * width[None, :]) & (err > _ROUNDOFF * rabs), axis=0)
            if not np.any(bad):
                break
            if level == self.max_levels:
                self.converged = False
                break
            a, b = self.edges[:-1][bad], self.edges[1:][bad]
            self.edges = np.union1d(self.edges, 0.5 * (a + b))
        gp = np.array([_csum(row) for row in vp])
        gm = np.array([_csum(row) for row in vm])
        return gp, gm, err.sum(axis=1)


@dataclass(frozen=True)
class NuProfile:
    """Piecewise Chebyshev representation of G(+nu) and G(-nu) on [0, nu_max].

    ``panel_error`` bounds the pointwise error of both branches on each
    panel; ``error_integral`` is its integral over nu, a time-independent
    contribution to every fluctuating-term error bar.
    """

    edges: np.ndarray
    coef_plus: np.ndarray
    coef_minus: np.ndarray
    panel_error: np.ndarray
    converged: bool

    @property
    def nu_max(self) -> float:
        return float(self.edges[-1])

    @property
    def error_integral(self) -> float:
        return math.fsum((self.panel_error * np.diff(self.edges)).tolist())

    def __call__(self, nu):
        """Evaluate G(+nu), G(-nu) for nu in [0, nu_max]."""
        nu = np.asarray(nu, dtype=float)
        idx = np.clip(np.searchsorted(self.edges, nu, side="right") - 1, 0, len(self.edges) - 2)
        a, b = self.edges[idx], self.edges[idx + 1]
        x = (2 * nu - a - b) / (b - a)
        return _clenshaw(self.coef_plus[idx], x), _clenshaw(self.coef_minus[idx], x)


def _clenshaw(coef: np.ndarray, x: np.ndarray):
    b1 = np.zeros(x.shape, dtype=complex)
    b2 = np.zeros(x.shape, dtype=complex)
    for k in range(coef.shape[-1] - 1, 0, -1):
        b1, b2 = coef[..., k] + 2 * x * b1 - b2, b1
    return coef[..., 0] + x * b1 - b2


def build_profile(state: VanHoveState, obs: VanHoveObservable, cfg: QuadratureConfig | None = None) -> NuProfile:
    """Adaptive Chebyshev profile of the lambda-integrated kernel product."""
    cfg = cfg or QuadratureConfig()
    fn = _Integrand(state, obs)
    W = fn.omega_max
    # pointwise budget so that the profile error integrates to abs_tol / 4
    tol = 0.25 * cfg.abs_tol / W
    lam_int = _LambdaIntegrator(fn, cfg, 0.1 * tol)
    edges = np.linspace(0.0, W, cfg.lambda_panels + 1)
    pending = list(zip(edges[:-1], edges[1:]))
    accepted = []
    converged = True
    for level in range(cfg.max_subdivisions + 1):
        if not pending:
            break
        a = np.array([p[0] for p in pending])
        b = np.array([p[1] for p in pending])
        nus = (0.5 * (a + b)[:, None] + 0.5 * (b - a)[:, None] * _CHEB_X[None, :]).ravel()
        gp, gm, gerr = [], [], []
        for start in range(0, nus.size, _BLOCK):
            p, m, e = lam_int(nus[start:start + _BLOCK])
            gp.append(p)
            gm.append(m)
            gerr.append(e)
        n = len(pending)
        gp = np.concatenate(gp).reshape(n, -1)
        gm = np.concatenate(gm).reshape(n, -1)
        gerr = np.concatenate(gerr).reshape(n, -1)
        cp = gp @ _CHEB_INV.T
        cm = gm @ _CHEB_INV.T
        tail = np.maximum(np.abs(cp[:, -2:]).sum(axis=1), np.abs(cm[:, -2:]).sum(axis=1))
        size = np.maximum(np.abs(cp).sum(axis=1), np.abs(cm).sum(axis=1))
        est = tail + gerr.max(axis=1)
        ok = (est <= tol) | (tail <= 64 * _EPS * size)
        if level == cfg.max_subdivisions:
            converged &= bool(np.all(ok))
            ok[:] = True
        nxt = []
        for j in range(n):
            if ok[j]:
                accepted.append((a[j], b[j], cp[j], cm[j], max(est[j], 64 * _EPS * size[j])))
            else:
                mid = 0.5 * (a[j] + b[j])
                nxt += [(a[j], mid), (mid, b[j])]
        pending = nxt
    accepted.sort(key=lambda p: p[0])
    return NuProfile(
        edges=np.array([accepted[0][0]] + [p[1] for p in accepted]),
        coef_plus=np.array([p[2] for p in accepted]),
        coef_minus=np.array([p[3] for p in accepted]),
        panel_error=np.array([p[4] for p in accepted]),
        converged=converged and lam_int.converged,
    )


@dataclass(frozen=True)
class FluctuatingResult:
    value: complex
    error: float
    converged: bool


def evaluate_profile(profile: NuProfile, t: float, cfg: QuadratureConfig | None = None) -> FluctuatingResult:
    """Oscillatory nu-integral of a profile at time ``t`` (seconds)."""
    cfg = cfg or QuadratureConfig()
    s = t / HBAR
    V = profile.nu_max
    breaks = profile.edges
    if s > 0:
        n_osc = int(math.ceil(V * s / math.pi))
        breaks = np.union1d(breaks, np.linspace(0.0, V, n_osc + 1))
    a, b = breaks[:-1], breaks[1:]
    keep = b > a
    a, b = a[keep], b[keep]
    done_val, done_err = [], []
    converged = True
    for level in range(cfg.max_subdivisions + 1):
        hw = 0.5 * (b - a)
        nu = 0.5 * (a + b)[:, None] + hw[:, None] * NODES[None, :]
        gp, gm = profile(nu)
        ph = np.exp(1j * s * nu)
        val, err, rabs = gk15(gp * ph + gm * np.conj(ph), hw)
        total = _csum(np.concatenate(done_val + [val]))
        tol = max(0.5 * cfg.abs_tol, cfg.rel_tol * abs(total))
        ok = (err <= tol * (b - a) / V) | (err <= _ROUNDOFF * rabs)
        if level == cfg.max_subdivisions and not np.all(ok):
            converged = False
            ok[:] = True
        done_val.append(val[ok])
        done_err.append(err[ok])
        if np.all(ok):
            break
        m = 0.5 * (a[~ok] + b[~ok])
        a, b = np.concatenate([a[~ok], m]), np.concatenate([m, b[~ok]])
    value = _csum(np.concatenate(done_val))
    error = math.fsum(np.concatenate(done_err).tolist()) + profile.error_integral
    converged = converged and profile.converged and error <= max(cfg.abs_tol, cfg.rel_tol * abs(value))
    return FluctuatingResult(value, error, converged)


def fluctuating_term(
    state: VanHoveState,
    obs: VanHoveObservable,
    t: float,
    cfg: QuadratureConfig | None = None,
    full_output: bool = False,
):
    """Fluctuating term of the expectation value at time ``t`` (seconds).

    Parameters
    ----------
    state, obs : VanHoveState, VanHoveObservable
        Must share ``omega_max``.
    t : float
        Time in seconds, ``t >= 0``.
    cfg : QuadratureConfig, optional
    full_output : bool
        Return a ``FluctuatingResult`` (value, error bar, converged flag)
        instead of the bare value.

    Raises
    ------
    ConvergenceError
        The error estimate stays above ``max(abs_tol, rel_tol*|value|)``;
        the exception carries ``value`` and ``error``.
    """
    if t < 0:
        raise DomainError("only t >= 0 is supported")
    cfg = cfg or QuadratureConfig()
    if _Integrand(state, obs).is_zero:
        res = FluctuatingResult(0j, 0.0, True)
    else:
        res = evaluate_profile(build_profile(state, obs, cfg), float(t), cfg)
    if not res.converged:
        raise ConvergenceError(
            f"fluctuating term at t={t:.6g} s: error {res.error:.3g} above tolerance",
            res.value, res.error,
        )
    return res if full_output else res.value


def fluctuating_series(
    state: VanHoveState,
    obs: VanHoveObservable,
    times: Sequence[float],
    cfg: QuadratureConfig | None = None,
    threads: int = 1,
) -> ExpectationSeries:
    """Fluctuating term on a strictly increasing grid of times.

    The lambda-integrated profile is built once and shared by all times.
    Points whose quadrature misses tolerance keep their best estimate and
    are flagged in ``failed``. Output does not depend on ``threads``.
    """
    cfg = cfg or QuadratureConfig()
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValidationError("times must be a non-empty 1-D sequence")
    if np.any(times < 0):
        raise DomainError("only t >= 0 is supported")
    if times.size > 1 and np.any(np.diff(times) <= 0):
        raise ValidationError("times must be strictly increasing")
    constant = expectation_constant(state, obs)
    if _Integrand(state, obs).is_zero:
        return ExpectationSeries(times, np.zeros(times.size, dtype=complex), constant)
    profile = build_profile(state, obs, cfg)

    def one(t):
        return evaluate_profile(profile, float(t), cfg)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, times))
    else:
        results = [one(t) for t in times]
    return ExpectationSeries(
        times,
        np.array([r.value for r in results]),
        constant,
        errors=np.array([r.error for r in results]),
        failed=np.array([not r.converged for r in results]),
    )


def expectation_value(state: VanHoveState, obs: VanHoveObservable, t: float,
                      cfg: QuadratureConfig | None = None) -> complex:
    """Full expectation value: constant term plus fluctuating term."""
    return expectation_constant(state, obs) + fluctuating_term(state, obs, t, cfg)
