"""Schwarzian polynomials, numerical Schwarzian derivative and critical directions."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

EPS = np.finfo(float).eps


class NearCriticalPointError(ValueError):
    """f' is numerically zero at the evaluation point; S(f) is unreliable there."""


@dataclass(frozen=True)
class SchwarzPolynomial:
    """P(z) with S(f) = 2P for the functions built from it.

    Coefficients are stored in ascending degree.  N = m + 2 is the number of
    asymptotic values of the associated functions.
    """

    coefficients: tuple

    def __post_init__(self):
        coeffs = [complex(c) for c in self.coefficients]
        while len(coeffs) > 1 and coeffs[-1] == 0:
            coeffs.pop()
        if not coeffs or coeffs[-1] == 0:
            raise ValueError("P must have a nonzero leading coefficient")
        object.__setattr__(self, "coefficients", tuple(coeffs))

    @classmethod
    def of(cls, *coefficients) -> "SchwarzPolynomial":
        return cls(tuple(coefficients))

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    @property
    def leading(self) -> complex:
        return self.coefficients[-1]

    @property
    def N(self) -> int:
        return self.degree + 2

    def __call__(self, z):
        acc = 0j if np.isscalar(z) else np.zeros_like(np.asarray(z, dtype=complex))
        for c in reversed(self.coefficients):
            acc = acc * z + c
        return acc

    def derivative(self, z, order: int = 1):
        coeffs = np.polynomial.polynomial.polyder(np.array(self.coefficients), order)
        if coeffs.size == 0:
            coeffs = np.zeros(1, dtype=complex)
        acc = 0j if np.isscalar(z) else np.zeros_like(np.asarray(z, dtype=complex))
        for c in reversed(coeffs):
            acc = acc * z + c
        return acc

    def taylor_at(self, z0: complex) -> np.ndarray:
        """Coefficients q_k with P(z0 + h) = sum q_k h^k."""
        d = np.array(self.coefficients, dtype=complex)
        out = np.empty(d.size, dtype=complex)
        for k in range(out.size):
            out[k] = np.polynomial.polynomial.polyval(z0, d) / math.factorial(k)
            d = np.polynomial.polynomial.polyder(d)
        return out

    def roots(self) -> np.ndarray:
        if self.degree == 0:
            return np.zeros(0, dtype=complex)
        return np.polynomial.polynomial.polyroots(np.array(self.coefficients, dtype=complex))

    def sqrt_bound(self, r):
        """Upper bound for |P|^(1/2) on the circle |z| = r."""
        r = np.asarray(r, dtype=float)
        acc = np.zeros_like(r)
        for c in reversed(self.coefficients):
            acc = acc * r + abs(c)
        return np.sqrt(acc)


@dataclass(frozen=True)
class CriticalFrame:
    """The N critical directions of P, ascending in [0, 2pi), and a ray base radius."""

    angles: tuple
    radius: float

    def nearest(self, theta: float) -> tuple[int, float]:
        """Index of the critical direction closest to ``theta`` and the angular gap."""
        gaps = [abs(_wrap(theta - a)) for a in self.angles]
        k = int(np.argmin(gaps))
        return k, gaps[k]


def _wrap(x: float) -> float:
    """Reduce an angle to (-pi, pi]."""
    y = math.remainder(x, 2.0 * math.pi)
    return math.pi if y == -math.pi else y


def default_ray_radius(P: SchwarzPolynomial) -> float:
    roots = P.roots()
    return 1.0 + (float(np.max(np.abs(roots))) if roots.size else 0.0)


def critical_directions(P: SchwarzPolynomial, radius: float | None = None) -> CriticalFrame:
    """Solutions of arg a + N theta = 0 (mod 2pi), sorted ascending."""
    N = P.N
    base = -math.atan2(P.leading.imag, P.leading.real) / N
    angles = sorted((base + 2.0 * math.pi * k / N) % (2.0 * math.pi) for k in range(N))
    # keep exact multiples (e.g. pi) free of rounding drift at the top of the range
    angles = [0.0 if abs(a - 2.0 * math.pi) < 1e-15 else a for a in angles]
    angles.sort()
    if radius is None:
        radius = default_ray_radius(P)
    return CriticalFrame(tuple(angles), float(radius))


_OFFSETS = np.arange(-6, 7)


def _sample(f: Callable, pts: np.ndarray) -> np.ndarray:
    """f at an array of points: one vectorised call when f allows it."""
    try:
        v = np.asarray(f(pts), dtype=complex)
        if v.shape == pts.shape:
            return v
    except (TypeError, ValueError):
        pass
    return np.array([complex(f(p)) for p in pts])


def _derivatives(f: Callable, z: complex, h: float) -> tuple[complex, complex, complex, complex]:
    """Samples never leave the disk of radius 3h about z."""
    return _from_samples(_sample(f, z + (h / 2.0) * _OFFSETS), h)


def _from_samples(v: np.ndarray, h: float) -> tuple[complex, complex, complex, complex]:
    """f, f', f'', f''' from samples at z + k h/2 (k = -6..6): fourth-order
    central stencils at h and h/2 plus one Richardson step."""
    half = h / 2.0
    f0 = complex(v[6])
    # differences from f(z) drop the constant before any stencil arithmetic
    vals = {k: complex(v[k + 6]) - f0 for k in range(-6, 7)}

    def stencil(step: int, hh: float):
        fp2, fp1 = vals[2 * step], vals[step]
        fm1, fm2 = vals[-step], vals[-2 * step]
        d1 = (-fp2 + 8 * fp1 - 8 * fm1 + fm2) / (12 * hh)
        d2 = (-fp2 + 16 * fp1 - 30 * vals[0] + 16 * fm1 - fm2) / (12 * hh * hh)
        fp3, fm3 = vals[3 * step], vals[-3 * step]
        d3 = (-fp3 + 8 * fp2 - 13 * fp1 + 13 * fm1 - 8 * fm2 + fm3) / (8 * hh ** 3)
        return d1, d2, d3

    coarse = stencil(2, h)
    fine = stencil(1, half)
    d1, d2, d3 = ((16 * b - a) / 15 for a, b in zip(coarse, fine))
    return f0, d1, d2, d3


def default_step(scale: float = 1.0) -> float:
    # 4 eps^(1/6): below this the Richardson half-step loses digits to rounding.
    # Rounded down to a power of two so the stencil offsets are exact.
    return 2.0 ** math.floor(math.log2(4.0 * EPS ** (1.0 / 6.0) * scale))


def schwarzian_numeric(f: Callable, z: complex, h: float | None = None, scale: float = 1.0) -> complex:
    """S(f)(z) = f'''/f' - 3/2 (f''/f')^2 by finite differences.

    ``f`` must be holomorphic on the disk of radius 4h about ``z``.  ``scale``
    is the length over which f varies appreciably.
    """
    if h is None:
        h = default_step(scale)
    return _schwarzian_from(z, *_derivatives(f, complex(z), h))


def _schwarzian_from(z, f0, d1, d2, d3) -> complex:
    if abs(d1) < 1e-12 * max(1.0, abs(f0)):
        raise NearCriticalPointError(f"|f'({z})| = {abs(d1):.3e}: near-critical point, result unreliable")
    q = d2 / d1
    return d3 / d1 - 1.5 * q * q


def schwarzian_scanned(f: Callable, z: complex, scale: float = 1.0, levels: int = 10) -> complex:
    """Schwarzian with the step picked by successive differences.

    Steps scale * 2^-1, ..., scale * 2^-levels; returns the finer estimate of
    the consecutive pair that agrees best.  For functions whose values carry
    more than rounding noise, where no fixed step is right everywhere.
    """
    z = complex(z)
    hs = 2.0 ** math.floor(math.log2(scale)) * 2.0 ** -np.arange(1, levels + 1)
    v = _sample(f, (z + np.outer(hs / 2.0, _OFFSETS)).ravel()).reshape(levels, _OFFSETS.size)
    est = []
    for h, row in zip(hs, v):
        try:
            est.append(_schwarzian_from(z, *_from_samples(row, h)))
        except NearCriticalPointError:
            if not est:
                raise
            break
    if len(est) == 1:
        return est[0]
    gaps = [abs(b - a) for a, b in zip(est, est[1:])]
    return est[int(np.argmin(gaps)) + 1]


def numeric_derivative(f: Callable, z: complex, h: float | None = None, scale: float = 1.0) -> complex:
    if h is None:
        h = default_step(scale)
    return _derivatives(f, complex(z), h)[1]


def chain_rule_residual(f: Callable, g: Callable, z: complex, h: float | None = None, scale: float = 1.0) -> float:
    """|S(f o g)(z) - S(f)(g(z)) g'(z)^2 - S(g)(z)|, every term computed numerically."""
    z = complex(z)
    gz = complex(g(z))
    lhs = schwarzian_numeric(lambda t: f(g(t)), z, h, scale)
    sf = schwarzian_numeric(f, gz, h, scale)
    sg = schwarzian_numeric(g, z, h, scale)
    dg = numeric_derivative(g, z, h, scale)
    return abs(lhs - sf * dg * dg - sg)


def as_polynomial(coefficients: Sequence) -> SchwarzPolynomial:
    if isinstance(coefficients, SchwarzPolynomial):
        return coefficients
    return SchwarzPolynomial(tuple(coefficients))
