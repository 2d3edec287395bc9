"""Poles of meromorphic functions: counting, location, residues, continuation.

Counting uses the winding number of f along the boundary of a rectangle.
Location subdivides the rectangle until a circle around each piece holds a
known number of poles, then reads the pole positions off the power sums

    s_p = (1/2 pi i) oint (z - c)^p g'(z) / g(z) dz,    g = 1/f,

which equal the sums of p-th powers of the zeros of g. The derivative g' is
taken spectrally from the Taylor coefficients of g on the circle, so user
functions only need to be evaluated, never differentiated. The functions
searched must be free of zeros inside the search rectangle; 1/f is then
analytic there and its zeros are exactly the poles of f.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import AAA

from .errors import ApproximationError, BoundaryError, ConvergenceError, PoleSearchError, ValidationError

POLE_SOURCES = ("resolvent", "initial-condition", "continuation-approximant")

# Froissart-doublet filter for rational continuation
FROISSART_DISTANCE = 1e-8
FROISSART_RESIDUE = 1e-10
# poles farther than this many data spans from the data are treated as
# the approximant's representation of polynomial growth
FAR_POLE_SPANS = 1e8

_MAX_EDGE_POINTS = 2 ** 17
_MAX_CIRCLE_POINTS = 2 ** 14
_CLUSTER_SPLIT = 1e-5  # moment roots closer than this (relative to the circle) form one pole


@dataclass(frozen=True)
class SearchRectangle:
    """Axis-aligned rectangle in the complex plane, energies in eV."""

    re_min: float
    re_max: float
    im_min: float
    im_max: float

    def __post_init__(self):
        vals = (self.re_min, self.re_max, self.im_min, self.im_max)
        if not all(math.isfinite(v) for v in vals):
            raise ValidationError("rectangle bounds must be finite")
        if not (self.re_min < self.re_max and self.im_min < self.im_max):
            raise ValidationError(f"degenerate rectangle {vals}")

    @property
    def center(self) -> complex:
        return complex(0.5 * (self.re_min + self.re_max), 0.5 * (self.im_min + self.im_max))

    @property
    def half_diagonal(self) -> float:
        return 0.5 * math.hypot(self.re_max - self.re_min, self.im_max - self.im_min)

    def corners(self) -> list[complex]:
        return [
            complex(self.re_min, self.im_min),
            complex(self.re_max, self.im_min),
            complex(self.re_max, self.im_max),
            complex(self.re_min, self.im_max),
        ]

    def contains(self, z: complex, slack: float = 0.0) -> bool:
        return (self.re_min - slack <= z.real <= self.re_max + slack
                and self.im_min - slack <= z.imag <= self.im_max + slack)

    def distance_to_boundary(self, z: complex) -> float:
        return min(z.real - self.re_min, self.re_max - z.real, z.imag - self.im_min, self.im_max - z.imag)

    def split(self, fx: float, fy: float) -> list["SearchRectangle"]:
        xm = self.re_min + fx * (self.re_max - self.re_min)
        ym = self.im_min + fy * (self.im_max - self.im_min)
        return [
            SearchRectangle(self.re_min, xm, self.im_min, ym),
            SearchRectangle(xm, self.re_max, self.im_min, ym),
            SearchRectangle(self.re_min, xm, ym, self.im_max),
            SearchRectangle(xm, self.re_max, ym, self.im_max),
        ]


@dataclass(frozen=True)
class PoleLocation:
    """Pole ``position`` with its residue, multiplicity and origin tag."""

    position: complex
    residue: complex
    multiplicity: int = 1
    source: str = "resolvent"

    def __post_init__(self):
        if self.multiplicity < 1:
            raise ValidationError("multiplicity must be >= 1")
        if self.source not in POLE_SOURCES:
            raise ValidationError(f"unknown pole source {self.source!r}")
        if not (math.isfinite(self.position.real) and math.isfinite(self.position.imag)):
            raise ValidationError("pole position must be finite")

    @property
    def gamma(self) -> float:
        return self.position.imag


def _evaluate(f: Callable, z: np.ndarray) -> np.ndarray:
    try:
        out = np.asarray(f(z), dtype=complex)
        if out.shape == z.shape:
            return out
    except (TypeError, ValueError):
        pass
    return np.array([complex(f(complex(v))) for v in z.ravel()]).reshape(z.shape)


def _edge_phase(f: Callable, z0: complex, z1: complex) -> float:
    """Continuous change of arg f along the segment z0 -> z1."""
    n = 32
    prev = None
    while n <= _MAX_EDGE_POINTS:
        z = z0 + (z1 - z0) * np.linspace(0.0, 1.0, n + 1)
        with np.errstate(all="ignore"):
            v = _evaluate(f, z)
        if not np.all(np.isfinite(v)) or np.any(v == 0):
            raise BoundaryError(f"f is singular or zero on the boundary segment {z0} -> {z1}")
        # increments of log f: small modulus changes guard against a
        # full 2 pi phase turn hiding between two samples
        d = np.log(v[1:] / v[:-1])
        total = math.fsum(d.imag.tolist())
        if np.max(np.abs(d)) < math.pi / 4 and prev is not None and abs(total - prev) < 1e-9:
            return total
        prev = total
        n *= 2
    raise BoundaryError(f"winding along {z0} -> {z1} did not stabilize; boundary too close to a singularity")


def count_poles_zeros(f: Callable, rect: SearchRectangle) -> int:
    """Number of zeros minus number of poles of ``f`` inside ``rect``.

    Computed from the winding of ``f`` along the boundary, each edge
    refined until its increments of log f stay below pi/4 in modulus and the edge total
    is stable under doubling.

    Raises
    ------
    BoundaryError
        ``f`` is singular or vanishes on the boundary, or the winding does
        not stabilize.
    """
    c = rect.corners()
    total = sum(_edge_phase(f, c[k], c[(k + 1) % 4]) for k in range(4))
    w = total / (2 * math.pi)
    k = round(w)
    if abs(w - k) > 1e-6:
        raise BoundaryError(f"non-integer winding number {w}")
    return int(k)


def _circle_moments(f: Callable, center: complex, radius: float, n_max: int):
    """Power sums s_0..s_n_max of the zeros of 1/f in the disk, in units of the radius."""
    n = 64
    prev = None
    while n <= _MAX_CIRCLE_POINTS:
        w = np.exp(2j * np.pi * np.arange(n) / n)
        with np.errstate(all="ignore"):
            g = 1.0 / _evaluate(f, center + radius * w)
        if not np.all(np.isfinite(g)) or np.any(g == 0):
            raise BoundaryError("f is singular or zero on the moment circle")
        a = np.fft.fft(g) / n
        # on the circle g(c + r w) = sum_j a_j w^j, so r g' = sum_j j a_j w^(j-1)
        dg = np.fft.ifft(np.arange(n) * a) * n
        ratio = dg / g
        s = np.array([np.mean(w ** p * ratio) for p in range(n_max + 1)])
        tail = np.max(np.abs(a[3 * n // 4:])) if n >= 4 else 0.0
        if prev is not None and np.max(np.abs(s - prev)) < 1e-11 and tail <= 1e-13 * np.max(np.abs(a)):
            return s
        prev = s
        n *= 2
    raise ConvergenceError("moment quadrature on circle did not converge", prev, float("nan"))


def _roots_from_power_sums(s: np.ndarray, m: int) -> np.ndarray:
    """Roots of the monic polynomial whose roots have power sums s_1..s_m."""
    e = [1.0 + 0j]
    for k in range(1, m + 1):
        acc = sum(((-1) ** (i - 1)) * e[k - i] * s[i] for i in range(1, k + 1))
        e.append(acc / k)
    coeffs = [((-1) ** k) * e[k] for k in range(m + 1)]
    return np.roots(coeffs) if m > 0 else np.array([], dtype=complex)


def _cluster(roots: np.ndarray, scale: float) -> list[tuple[complex, int]]:
    clusters: list[list[complex]] = []
    for r in sorted(roots, key=lambda z: (z.real, z.imag)):
        for c in clusters:
            if abs(r - np.mean(c)) < _CLUSTER_SPLIT * scale:
                c.append(r)
                break
        else:
            clusters.append([r])
    return [(complex(np.mean(c)), len(c)) for c in clusters]


def _polish(f: Callable, z: complex, mult: int, radius: float, tol: float) -> tuple[complex, float]:
    """Re-center a pole of known multiplicity on shrinking circles."""
    for _ in range(12):
        s = _circle_moments(f, z, radius, 1)
        if abs(s[0] - mult) > 1e-6:
            radius *= 0.5
            continue
        step = radius * s[1] / mult
        z = z + step
        if abs(step) < tol:
            return z, radius
        radius = max(radius * 0.5, 4 * abs(step))
    raise PoleSearchError(f"pole refinement near {z} did not reach tolerance {tol}", [], [])


def _moment_poles(f, sub: SearchRectangle, count: int, outer: SearchRectangle, tol: float):
    center = sub.center
    radius = 1.1 * sub.half_diagonal
    if radius > 0.8 * outer.distance_to_boundary(center):
        return None
    try:
        s = _circle_moments(f, center, radius, count)
    except (BoundaryError, ConvergenceError):
        return None
    if abs(s[0] - count) > 1e-6:
        return None
    roots = center + radius * _roots_from_power_sums(s, count)
    clusters = _cluster(roots, radius)
    out = []
    for k, (z, mult) in enumerate(clusters):
        others = [abs(z - o) for j, (o, _) in enumerate(clusters) if j != k]
        r = min([0.4 * d for d in others] + [0.5 * radius, 0.8 * outer.distance_to_boundary(z)])
        if r <= 0:
            return None
        try:
            zp, rp = _polish(f, z, mult, r, tol)
        except (PoleSearchError, BoundaryError, ConvergenceError):
            return None
        out.append((zp, mult, rp))
    return out


_SPLITS = ((0.5123, 0.4871), (0.4617, 0.5389), (0.5531, 0.4462), (0.4213, 0.5797))


def locate_poles(
    f: Callable,
    rect: SearchRectangle,
    tol: float = 1e-10,
    source: str = "resolvent",
    max_depth: int = 40,
) -> list[PoleLocation]:
    """Locate all poles of ``f`` inside ``rect``, with residues and multiplicities.

    ``f`` must be analytic and zero-free on ``rect`` apart from its poles.
    Poles closer together than about 1e-5 of the isolating circle are
    reported as one pole of the combined multiplicity. Output is ordered by
    (re, im).

    Raises
    ------
    PoleSearchError
        Some region could not be resolved within ``max_depth`` subdivisions;
        ``poles`` holds the poles found so far and ``unresolved`` the
        remaining (rectangle, count) pairs.
    """
    total = count_poles_zeros(f, rect)
    if total > 0:
        raise PoleSearchError(f"{total} more zeros than poles inside the search rectangle", [], [(rect, total)])
    found: list[tuple[complex, int, float]] = []
    unresolved = []
    stack = [(rect, -total, 0)]
    while stack:
        sub, n, depth = stack.pop()
        if n == 0:
            continue
        if n <= 4:
            res = _moment_poles(f, sub, n, rect, tol)
            if res is not None:
                found.extend(res)
                continue
        if depth >= max_depth:
            unresolved.append((sub, n))
            continue
        for fx, fy in _SPLITS:
            try:
                children = sub.split(fx, fy)
                counts = [-count_poles_zeros(f, ch) for ch in children]
            except BoundaryError:
                continue
            if sum(counts) == n and min(counts) >= 0:
                stack.extend((ch, c, depth + 1) for ch, c in zip(children, counts))
                break
        else:
            unresolved.append((sub, n))
    poles = []
    for z, mult, r in found:
        res = residue(f, z, 0.5 * r)
        poles.append(PoleLocation(complex(z), complex(res), mult, source))
    poles.sort(key=lambda p: (p.position.real, p.position.imag))
    if unresolved:
        raise PoleSearchError(f"{len(unresolved)} region(s) unresolved", poles, unresolved)
    return poles


def residue(f: Callable, pole: complex, radius: float, rtol: float = 1e-10) -> complex:
    """Residue of ``f`` at ``pole`` by the trapezoid rule on a circle.

    The node count doubles from 16 until successive values agree to
    ``rtol`` relative.

    Raises
    ------
    ConvergenceError
        No convergence: the circle passes too close to a singularity or
        encloses another one with a different residue pattern.
    """
    if not radius > 0:
        raise ValidationError("radius must be positive")
    n = 16
    prev = None
    while n <= 2 ** 16:
        u = radius * np.exp(2j * np.pi * np.arange(n) / n)
        with np.errstate(all="ignore"):
            v = _evaluate(f, pole + u) * u
        if not np.all(np.isfinite(v)):
            raise ConvergenceError(f"f singular on residue circle of radius {radius}", prev, float("inf"))
        val = complex(math.fsum(v.real.tolist()), math.fsum(v.imag.tolist())) / n
        # the floor covers vanishing residues, e.g. of a pure double pole
        floor = 1e3 * np.finfo(float).eps * float(np.mean(np.abs(v)))
        if prev is not None and abs(val - prev) <= max(rtol * abs(val), floor):
            return val
        prev = val
        n *= 2
    raise ConvergenceError(f"residue did not converge; radius {radius} invalid", prev, abs(val - prev))


@dataclass(frozen=True, eq=False)
class RationalApproximant:
    """Barycentric rational interpolant of samples along the real axis.

    ``poles`` are the physical poles after removing Froissart doublets,
    far-away poles standing in for polynomial growth, and poles on the real
    axis inside the data interval; the removed ones are kept in
    ``spurious``.
    """

    support_points: np.ndarray
    weights: np.ndarray
    values: np.ndarray
    degree: int
    residual: float
    poles: np.ndarray
    residues: np.ndarray
    spurious: np.ndarray = field(default_factory=lambda: np.array([], dtype=complex))

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        zf = z.ravel()
        d = zf[:, None] - self.support_points[None, :]
        exact = d == 0
        with np.errstate(divide="ignore", invalid="ignore"):
            c = self.weights / d
            out = (c @ self.values) / c.sum(axis=1)
        hit = exact.any(axis=1)
        if np.any(hit):
            out[hit] = self.values[np.argmax(exact[hit], axis=1)]
        return out.reshape(z.shape)

    def upper_poles(self) -> np.ndarray:
        return self.poles[self.poles.imag > 0]


def continue_from_samples(samples: Sequence[tuple[float, complex]], rtol: float = 1e-10) -> RationalApproximant:
    """Analytic continuation of real-axis samples by greedy rational fitting.

    Parameters
    ----------
    samples : sequence of (energy, value)
        At least 8 samples with distinct real abscissae.
    rtol : float
        Target residual relative to ``max |value|``.

    Raises
    ------
    ApproximationError
        The residual stagnates above ``100 * rtol``.
    """
    x = np.array([float(s[0]) for s in samples])
    y = np.array([complex(s[1]) for s in samples])
    if x.size < 8:
        raise ValidationError("continuation needs at least 8 samples")
    if np.unique(x).size != x.size:
        raise ValidationError("sample abscissae must be distinct")
    scale = float(np.max(np.abs(y)))
    if scale == 0.0:
        return RationalApproximant(x[:1], np.ones(1, dtype=complex), np.zeros(1, dtype=complex), 0, 0.0,
                                   np.array([], dtype=complex), np.array([], dtype=complex))
    with warnings.catch_warnings():
        # stagnation is reported below as ApproximationError
        warnings.simplefilter("ignore", RuntimeWarning)
        aaa = AAA(x, y, rtol=rtol, clean_up=False)
    residual = float(np.max(np.abs(aaa(x) - y))) / scale
    if residual > 100 * rtol:
        raise ApproximationError(f"rational fit stagnated at residual {residual:.3g}", residual)
    poles = np.asarray(aaa.poles(), dtype=complex)
    res = np.asarray(aaa.residues(), dtype=complex)
    zeros = np.asarray(aaa.roots(), dtype=complex)
    span = float(x.max() - x.min())
    mid = 0.5 * float(x.max() + x.min())
    keep = np.ones(poles.size, dtype=bool)
    for k, p in enumerate(poles):
        doublet = zeros.size and np.min(np.abs(zeros - p)) < FROISSART_DISTANCE * max(span, 1.0)
        tiny = abs(res[k]) < FROISSART_RESIDUE * scale * max(span, 1.0)
        far = abs(p - mid) > FAR_POLE_SPANS * span
        on_data = abs(p.imag) < 1e-8 * span and x.min() <= p.real <= x.max()
        if doublet or tiny or far or on_data:
            keep[k] = False
    order = np.lexsort((poles.imag[keep], poles.real[keep]))
    return RationalApproximant(
        support_points=np.asarray(aaa.support_points).real.astype(float),
        weights=np.asarray(aaa.weights, dtype=complex),
        values=np.asarray(aaa.support_values, dtype=complex),
        degree=int(aaa.support_points.size) - 1,
        residual=residual,
        poles=poles[keep][order],
        residues=res[keep][order],
        spurious=poles[~keep],
    )
