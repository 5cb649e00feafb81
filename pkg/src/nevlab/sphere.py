"""Riemann-sphere primitives: the point at infinity, chordal metric, Moebius maps,
Koebe distortion constant and uniform sampling by spherical area."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Union

import numpy as np


class _Infinity:
    """The single point at infinity of the extended plane."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INF"

    def __reduce__(self):
        return (_Infinity, ())


INF = _Infinity()

SpherePoint = Union[complex, _Infinity]


def is_inf(p) -> bool:
    return p is INF


def as_point(x) -> SpherePoint:
    """Coerce a number to a sphere point; IEEE infinities collapse to INF."""
    if x is INF:
        return INF
    z = complex(x)
    if cmath.isnan(z):
        raise ValueError("NaN is not a point of the sphere")
    if cmath.isinf(z):
        return INF
    return z


def chordal_distance(p: SpherePoint, q: SpherePoint) -> float:
    """2|p-q| / (sqrt(1+|p|^2) sqrt(1+|q|^2)); values lie in [0, 2]."""
    if p is INF and q is INF:
        return 0.0
    if p is INF:
        p, q = q, p
    if q is INF:
        return 2.0 / math.sqrt(1.0 + abs(p) ** 2)
    d = 2.0 * abs(p - q) / (math.sqrt(1.0 + abs(p) ** 2) * math.sqrt(1.0 + abs(q) ** 2))
    return min(d, 2.0)


def chordal_to(z: np.ndarray, q: SpherePoint, at_inf: np.ndarray | None = None) -> np.ndarray:
    """Vectorised chordal distance from finite samples ``z`` to ``q``.

    ``at_inf`` marks entries that stand for the point at infinity.
    """
    z = np.asarray(z, dtype=complex)
    az2 = np.abs(z) ** 2
    if q is INF:
        d = 2.0 / np.sqrt(1.0 + az2)
        other = 0.0
    else:
        q = complex(q)
        d = 2.0 * np.abs(z - q) / (np.sqrt(1.0 + az2) * math.sqrt(1.0 + abs(q) ** 2))
        other = 2.0 / math.sqrt(1.0 + abs(q) ** 2)
    d = np.minimum(d, 2.0)
    if at_inf is not None:
        d = np.where(at_inf, other, d)
    return d


@dataclass(frozen=True)
class Mobius:
    """z -> (a z + b) / (c z + d)."""

    a: complex
    b: complex
    c: complex
    d: complex

    def __post_init__(self):
        det = self.a * self.d - self.b * self.c
        size = max(abs(self.a * self.d), abs(self.b * self.c), 1e-300)
        if abs(det) <= 1e-14 * size:
            raise ValueError(f"degenerate Moebius map, ad-bc = {det}")

    @classmethod
    def identity(cls) -> "Mobius":
        return cls(1, 0, 0, 1)

    @property
    def determinant(self) -> complex:
        return self.a * self.d - self.b * self.c

    def __call__(self, z: SpherePoint) -> SpherePoint:
        return mobius_apply(self, z)

    def __matmul__(self, other: "Mobius") -> "Mobius":
        # (self @ other)(z) == self(other(z))
        return Mobius(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
        )

    def inverse(self) -> "Mobius":
        return Mobius(self.d, -self.b, -self.c, self.a)


def mobius_apply(M: Mobius, z: SpherePoint) -> SpherePoint:
    if z is INF:
        if M.c == 0:
            return INF
        return complex(M.a / M.c)
    z = complex(z)
    den = M.c * z + M.d
    if den == 0:
        return INF
    return (M.a * z + M.b) / den


def koebe_bound(eta: float) -> float:
    """Distortion constant T(eta) = (1+eta)^4 / (1-eta)^4 for 0 <= eta < 1."""
    if not 0.0 <= eta < 1.0:
        raise ValueError(f"eta must lie in [0, 1), got {eta}")
    return ((1.0 + eta) / (1.0 - eta)) ** 4


def sample_sphere_uniform(rng: np.random.Generator, count: int) -> np.ndarray:
    """Draw ``count`` points distributed by normalised spherical area.

    A uniform height u in [-1, 1) and longitude are pushed through inverse
    stereographic projection, |z|^2 = (1+u)/(1-u).  Every sample is finite.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    u = rng.uniform(-1.0, 1.0, count)
    alpha = rng.uniform(0.0, 2.0 * np.pi, count)
    return np.sqrt((1.0 + u) / (1.0 - u)) * np.exp(1j * alpha)
