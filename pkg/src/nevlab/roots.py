"""Zeros of analytic functions in annular sectors by the argument principle.

A polar box is split until its boundary winding number is 0 or 1; boxes
with one zero are finished by Newton's method.  Winding numbers come from
phase accumulation along the boundary, refined wherever consecutive samples
differ in phase by more than pi/4.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .functions import contour_residue, default_contour_radius, germ_parts, quotient_parts, residue_at
from .schwarzian import _wrap
from .sphere import is_inf

SIDE_NODES = 128
MAX_REFINE = 16


class RootSearchError(RuntimeError):
    pass


class _BoundaryHit(Exception):
    pass


@dataclass(frozen=True)
class AnnularSector:
    """{r_min <= |z| <= r_max, |arg z - theta_center| <= half_width}; half_width = pi is the full annulus."""

    r_min: float
    r_max: float
    theta_center: float
    half_width: float

    def __post_init__(self):
        if not 0 <= self.r_min < self.r_max:
            raise ValueError("need 0 <= r_min < r_max")
        if not 0 < self.half_width <= math.pi:
            raise ValueError("half_width must lie in (0, pi]")

    def contains(self, z: complex, slack: float = 0.0) -> bool:
        r = abs(z)
        if r < self.r_min - slack or r > self.r_max + slack:
            return False
        return abs(_wrap(np.angle(z) - self.theta_center)) <= self.half_width + slack / max(r, 1e-300)


@dataclass(frozen=True)
class _Box:
    r0: float
    r1: float
    p0: float
    p1: float
    depth: int = 0

    def boundary(self):
        """Four sides as maps t in [0,1] -> z, traversed counter-clockwise."""
        r0, r1, p0, p1 = self.r0, self.r1, self.p0, self.p1
        return (
            lambda t: (r0 + (r1 - r0) * t) * np.exp(1j * p0),
            lambda t: r1 * np.exp(1j * (p0 + (p1 - p0) * t)),
            lambda t: (r1 + (r0 - r1) * t) * np.exp(1j * p1),
            lambda t: r0 * np.exp(1j * (p1 + (p0 - p1) * t)),
        )

    def speeds(self):
        """|dz/dt| along each side (arcs are evaluated at the larger radius on purpose)."""
        dr = self.r1 - self.r0
        dp = self.p1 - self.p0
        return (
            lambda t: np.full_like(t, dr),
            lambda t: np.full_like(t, self.r1 * dp),
            lambda t: np.full_like(t, dr),
            lambda t: np.full_like(t, self.r0 * dp),
        )

    def center(self) -> complex:
        return 0.5 * (self.r0 + self.r1) * np.exp(0.5j * (self.p0 + self.p1))

    def contains(self, z: complex, slack: float) -> bool:
        r = abs(z)
        phi = self.p0 + (np.angle(z) - self.p0) % (2 * math.pi)
        return self.r0 - slack <= r <= self.r1 + slack and phi <= self.p1 + slack / max(r, 1e-300)

    def size(self) -> float:
        return max(self.r1 - self.r0, self.r1 * (self.p1 - self.p0))

    def split(self, frac: float):
        if self.r1 - self.r0 >= 0.5 * (self.r0 + self.r1) * (self.p1 - self.p0):
            rm = self.r0 + frac * (self.r1 - self.r0)
            return (_Box(self.r0, rm, self.p0, self.p1, self.depth + 1),
                    _Box(rm, self.r1, self.p0, self.p1, self.depth + 1))
        pm = self.p0 + frac * (self.p1 - self.p0)
        return (_Box(self.r0, self.r1, self.p0, pm, self.depth + 1),
                _Box(self.r0, self.r1, pm, self.p1, self.depth + 1))


def _side_turns(gd, side, dz_dt) -> float:
    """Phase change of g along one side.  An interval is refined while the
    sampled phase jump exceeds pi/4 or |g'/g| |dz| says it could hide a turn."""
    t = np.linspace(0.0, 1.0, SIDE_NODES + 1)
    v, dv = gd(side(t))
    for _ in range(MAX_REFINE):
        if np.any(v == 0) or not (np.all(np.isfinite(v)) and np.all(np.isfinite(dv))):
            raise _BoundaryHit
        d = np.angle(v[1:] / v[:-1])
        rate = np.abs(dv / v)
        span = np.maximum(rate[1:], rate[:-1]) * np.abs(dz_dt(t[:-1])) * np.diff(t)
        bad = (np.abs(d) > math.pi / 4) | (span > math.pi / 2)
        if not bad.any():
            return float(d.sum()) / (2 * math.pi)
        mid = 0.5 * (t[:-1][bad] + t[1:][bad])
        vm, dvm = gd(side(mid))
        t = np.concatenate([t, mid])
        v = np.concatenate([v, vm])
        dv = np.concatenate([dv, dvm])
        order = np.argsort(t, kind="stable")
        t, v, dv = t[order], v[order], dv[order]
    raise _BoundaryHit


def winding_number(gd, box: _Box) -> int:
    turns = sum(_side_turns(gd, side, speed) for side, speed in zip(box.boundary(), box.speeds()))
    w = round(turns)
    if abs(turns - w) > 0.05:
        raise _BoundaryHit
    return int(w)


def _newton(gd, z: complex, tol: float, max_iter: int = 60):
    for _ in range(max_iter):
        v, dv = gd(np.array([z]))
        with np.errstate(divide="ignore", invalid="ignore"):
            step = complex(v[0] / dv[0])
        if not np.isfinite(step):
            return None
        z -= step
        if abs(step) <= tol * max(1.0, abs(z)):
            return z
    return None


_SPLITS = (0.5 + 0.0123, 0.5 - 0.0371, 0.5 + 0.0713, 0.5 - 0.1093, 0.5 + 0.1517)


def find_zeros(gd, region: AnnularSector, tol: float = 1e-13, max_depth: int = 40) -> list[complex]:
    """All zeros of an analytic g inside ``region`` (complete up to boundary resolution).

    ``gd`` maps a complex array to the pair (g, g').  Raises RootSearchError
    when subdivision passes ``max_depth`` or a boundary cannot be resolved.
    """
    # a full annulus has a free seam, which is moved off any zero sitting on it
    seams = [0.0] + ([d - 0.5 for d in _SPLITS] if region.half_width == math.pi else [])
    for shift in seams:
        lo = region.theta_center - region.half_width + shift
        root = _Box(region.r_min, region.r_max, lo, lo + 2 * region.half_width)
        try:
            w_root = winding_number(gd, root)
            break
        except _BoundaryHit:
            continue
    else:
        raise RootSearchError("a zero lies on (or too near) the region boundary")
    found: list[complex] = []
    stack = [(root, w_root)]
    while stack:
        box, w = stack.pop()
        if w == 0:
            continue
        if box.depth > max_depth:
            raise RootSearchError(f"box subdivision passed depth {max_depth} near {box.center()}")
        if w == 1:
            z = _newton(gd, box.center(), tol)
            if z is not None and box.contains(z, 1e-9 * max(1.0, abs(z))):
                found.append(z)
                continue
        for frac in _SPLITS:
            kids = box.split(frac)
            try:
                ws = [winding_number(gd, k) for k in kids]
            except _BoundaryHit:
                continue
            if sum(ws) == w:
                stack.extend(zip(kids, ws))
                break
        else:
            raise RootSearchError(f"could not split box around {box.center()} cleanly")
    found.sort(key=abs)
    out: list[complex] = []
    for z in found:
        if not any(abs(z - q) <= 1e-8 * max(1.0, abs(z)) for q in out):
            out.append(z)
    return out


# -- records ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PoleRecord:
    j: int
    s: complex
    r: complex
    sector: int


@dataclass(frozen=True)
class PreimageRecord:
    j: int
    p: complex
    df: complex
    target: object  # SpherePoint


def _signed_indices(points, theta_center: float) -> list[int]:
    """Rank by modulus, separately on each side: directions within pi/2 of
    theta_center count +1, +2, ...; the opposite side -1, -2, ..."""
    pos = neg = 0
    out = []
    for z in points:
        if math.cos(np.angle(z) - theta_center) >= 0:
            pos += 1
            out.append(pos)
        else:
            neg += 1
            out.append(-neg)
    return out


def _sector_of(f, z: complex) -> int:
    return f.frame.nearest(float(np.angle(z)) % (2 * math.pi))[0]


def poles_in_region(f, region: AnnularSector) -> list[PoleRecord]:
    """Poles of f in the region, sorted by modulus, with residues."""
    def gd(z):
        _, den, _, dden = quotient_parts(f, z)
        return den, dden

    zs = find_zeros(gd, region)
    zs = [_polish(f, z, which="den") for z in zs]
    idx = _signed_indices(zs, region.theta_center)
    return [PoleRecord(j, s, residue_at(f, s), _sector_of(f, s)) for j, s in zip(idx, zs)]


def preimages_in_region(f, z0, region: AnnularSector) -> list[PreimageRecord]:
    """Solutions of f(z) = z0 in the region with f' at each."""
    if is_inf(z0):
        return [PreimageRecord(p.j, p.s, complex("inf"), z0) for p in poles_in_region(f, region)]
    z0 = complex(z0)

    def gd(z):
        num, den, dnum, dden = quotient_parts(f, z)
        return num - z0 * den, dnum - z0 * dden

    zs = [_polish(f, z, which=z0) for z in find_zeros(gd, region)]
    idx = _signed_indices(zs, region.theta_center)
    out = []
    for j, p in zip(idx, zs):
        num, den, dnum, dden = (complex(x[0]) for x in germ_parts(f, p)(np.array([p])))
        out.append(PreimageRecord(j, p, (dnum * den - num * dden) / (den * den), z0))
    return out


def _polish(f, z: complex, which) -> complex:
    """A few Newton steps on the single-series germ about z, which is smoother
    than the lattice evaluation used during the search."""
    parts = germ_parts(f, z)
    for _ in range(8):
        num, den, dnum, dden = (complex(x[0]) for x in parts(np.array([z])))
        if isinstance(which, str):
            step = den / dden
        else:
            step = (num - which * den) / (dnum - which * dden)
        z -= step
        if abs(step) <= 1e-15 * max(1.0, abs(z)):
            break
    return z


def inverse_derivative_residue(f, p: complex, z0: complex) -> complex:
    """Residue of 1/(f - z0) at a simple solution p, by contour integration."""
    parts = germ_parts(f, p)

    def g(z):
        num, den, _, _ = parts(z)
        return den / (num - z0 * den)

    def zeros(z):
        num, den, _, _ = parts(z)
        return num - z0 * den

    return contour_residue(g, p, default_contour_radius(f, p), winding_fn=zeros)


def write_records_csv(records, path) -> None:
    """Pole or preimage table with header j, re_s, im_s, re_r, im_r, abs_s, abs_r.

    For preimage tables s is the preimage and r is f' there.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["j", "re_s", "im_s", "re_r", "im_r", "abs_s", "abs_r"])
        for rec in records:
            s, r = (rec.s, rec.r) if isinstance(rec, PoleRecord) else (rec.p, rec.df)
            w.writerow([rec.j, repr(s.real), repr(s.imag), repr(r.real), repr(r.imag), repr(abs(s)), repr(abs(r))])
