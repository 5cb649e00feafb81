"""Concrete Nevanlinna functions as quotients f = (A u1 + B u2) / (C u1 + D u2).

Two families share this form.  The closed-form family uses u = (e^z, e^-z)
with A = lam, B = -mu, C = 1, D = -1, which gives
f = (lam e^z - mu e^-z) / (e^z - e^-z).  The ODE-backed family uses a
fundamental pair of w'' + P w = 0.

Bases return (u1, u1', u2, u2') multiplied by a common positive real factor,
so ratios and phases are exact while magnitudes stay finite deep in tracts.
"""

from __future__ import annotations

import cmath
import math
import threading
from dataclasses import dataclass, field

import numpy as np

from .ode import (
    FundamentalPairState,
    LiouvilleFrame,
    base_radius_for,
    integrate_pair,
    integrate_ray_samples,
    leading_solution,
)
from .schwarzian import CriticalFrame, SchwarzPolynomial, as_polynomial, critical_directions
from .sphere import INF, Mobius, as_point, chordal_distance, is_inf


class AsymptoticValueError(RuntimeError):
    """Evaluation along a tract ray did not settle."""


def cexpm1(z):
    """e^z - 1 without cancellation for small |z| (numpy has no complex expm1)."""
    z = np.asarray(z, dtype=complex)
    a, b = z.real, z.imag
    re = np.expm1(a) * np.cos(b) - 2.0 * np.sin(0.5 * b) ** 2
    im = np.exp(a) * np.sin(b)
    return re + 1j * im


# -- bases ---------------------------------------------------------------------------


class ExpBasis:
    """u1 = e^z, u2 = e^-z, scaled by e^-|Re z|."""

    def values(self, z):
        z = np.asarray(z, dtype=complex)
        neg = z.real <= 0
        y = z.imag
        phase = np.where(neg, np.exp(-1j * y), np.exp(1j * y))
        e = cexpm1(np.where(neg, 2 * z, -2 * z))
        big = (e + 1.0) * phase
        u1 = np.where(neg, big, phase)
        u2 = np.where(neg, phase, big)
        return u1, u1, u2, -u2


class OdeBasis:
    """Fundamental pair of w'' + P w = 0 on a lazily filled polar anchor lattice.

    Anchors sit on n_rays rays from the origin.  Along each ray consecutive
    radii are at most min(0.5, 0.5/sqrt(sum |p_k| r^k)) apart, and n_rays is
    chosen so that every point within ``r_max`` is a short power-series hop
    from some anchor.  Rays are integrated outward from the origin on first
    use.
    """

    def __init__(self, P: SchwarzPolynomial, base: FundamentalPairState, r_max: float = 50.0,
                 rtol: float = 1e-12, theta_ref: float = 0.0):
        self.P = P
        self.rtol = rtol
        self.r_max = float(r_max)
        self.theta_ref = theta_ref
        if base.z != 0:
            origin = integrate_pair(P, [base.z, 0j], base, rtol=rtol)
        else:
            origin = base
        self.origin = origin.normalized()
        radii = [0.0]
        while radii[-1] < self.r_max + 1.0:
            r = radii[-1]
            radii.append(r + min(0.5, 0.5 / float(P.sqrt_bound(r + 0.5))))
        self.radii = np.array(radii)
        sig = float(P.sqrt_bound(self.r_max))
        need = max(64, math.ceil(math.pi * self.r_max * sig / 2.0))
        step = 2 * P.N
        self.n_rays = step * math.ceil(need / step)
        self._rays: dict[int, list] = {}
        self._lock = threading.Lock()
        self._dcoeffs = []
        d = np.array(P.coefficients, dtype=complex)
        for k in range(P.degree + 1):
            self._dcoeffs.append(d / math.factorial(k))
            d = np.polynomial.polynomial.polyder(d)

    # lattice bookkeeping
    def _ray_angle(self, j: int) -> float:
        return self.theta_ref + 2.0 * math.pi * j / self.n_rays

    def _fill(self, j: int, upto: int):
        """Make anchors 0..upto on ray j available; returns the ray's table."""
        with self._lock:
            table = self._rays.get(j)
            if table is None:
                o = self.origin
                table = [[0j], [o.w1], [o.dw1], [o.w2], [o.dw2], [o.log_scale]]
                self._rays[j] = table
            have = len(table[0]) - 1
            if upto <= have:
                return table
            upto = max(upto, min(len(self.radii) - 1, have + 64))
            e = cmath.exp(1j * self._ray_angle(j))
            start = FundamentalPairState(table[0][-1], table[1][-1], table[2][-1], table[3][-1], table[4][-1],
                                         table[5][-1])
            r0 = self.radii[have]
            positions = self.radii[have + 1: upto + 1] - r0
            states = integrate_ray_samples(self.P, start, self.radii[upto] * e, positions, rtol=self.rtol)
            if len(states) != positions.size:
                raise RuntimeError("ray integration lost anchor samples")
            for s in states:
                table[0].append(s.z)
                table[1].append(s.w1)
                table[2].append(s.dw1)
                table[3].append(s.w2)
                table[4].append(s.dw2)
                table[5].append(s.log_scale)
            return table

    def nearest_anchor(self, z: complex) -> FundamentalPairState:
        r = abs(z)
        i = int(np.argmin(np.abs(self.radii - min(r, self.radii[-1]))))
        if i == 0:
            return self.origin
        j = round((cmath.phase(z) - self.theta_ref) * self.n_rays / (2 * math.pi)) % self.n_rays
        t = self._fill(j, i)
        return FundamentalPairState(t[0][i], t[1][i], t[2][i], t[3][i], t[4][i], t[5][i])

    def _anchors(self, z: np.ndarray):
        r = np.abs(z)
        idx = np.clip(np.searchsorted(self.radii, r), 1, len(self.radii) - 1)
        lower = self.radii[idx - 1]
        idx = np.where(r - lower < self.radii[idx] - r, idx - 1, idx)
        rays = np.rint((np.angle(z) - self.theta_ref) * self.n_rays / (2 * math.pi)).astype(np.int64) % self.n_rays
        out = np.empty((6, z.size), dtype=complex)
        for j in np.unique(rays[idx > 0]):
            sel = (rays == j) & (idx > 0)
            t = self._fill(int(j), int(idx[sel].max()))
            ii = idx[sel]
            for c in range(6):
                out[c, sel] = np.asarray(t[c], dtype=complex)[ii]
        o = self.origin
        at0 = idx == 0
        out[:, at0] = np.array([0j, o.w1, o.dw1, o.w2, o.dw2, o.log_scale])[:, None]
        return out

    def _series(self, anchors: np.ndarray, z: np.ndarray):
        za = anchors[0]
        h = z - za
        q = [np.polynomial.polynomial.polyval(za, d) for d in self._dcoeffs]
        hmax = np.abs(h)
        qbound = sum(np.abs(qk) * hmax ** k for k, qk in enumerate(q))
        reach = float(np.max(hmax * np.sqrt(qbound))) if z.size else 0.0
        order = int(30 + 3 * math.e * reach)
        c = [np.stack([anchors[1], anchors[3]]), np.stack([anchors[2], anchors[4]])]
        m = len(q)
        for n in range(order - 2):
            conv = 0
            for k in range(min(m, n + 1)):
                conv = conv + q[k] * c[n - k]
            c.append(-conv / ((n + 2) * (n + 1)))
        w = np.zeros_like(c[0])
        dw = np.zeros_like(c[0])
        for n in range(order - 1, -1, -1):
            w = w * h + c[n]
            if n >= 1:
                dw = dw * h + n * c[n]
        return w, dw, reach

    def values(self, z, with_scale: bool = False):
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        far = np.abs(z) > self.radii[-1]
        anchors = self._anchors(np.where(far, 0, z))
        w, dw, _ = self._series(anchors, np.where(far, 0, z))
        u1, du1, u2, du2 = w[0], dw[0], w[1], dw[1]
        scale = anchors[5].real.copy()
        for i in np.nonzero(far)[0]:
            s = self._integrate_to(z[i])
            u1[i], du1[i], u2[i], du2[i], scale[i] = s.w1, s.dw1, s.w2, s.dw2, s.log_scale
        # common positive normalisation per point keeps the magnitudes tame
        mag = np.maximum.reduce([np.abs(u1), np.abs(du1), np.abs(u2), np.abs(du2)])
        mag = np.where(mag > 0, mag, 1.0)
        out = (u1 / mag, du1 / mag, u2 / mag, du2 / mag)
        if with_scale:
            return out + (scale + np.log(mag),)
        return out

    def _integrate_to(self, z: complex) -> FundamentalPairState:
        e = cmath.exp(1j * cmath.phase(z))
        anchor = self.nearest_anchor(self.radii[-1] * e)
        return integrate_pair(self.P, [anchor.z, abs(z) * e, z], anchor, rtol=self.rtol).normalized()

    def germ(self, z0: complex):
        """Power series about the anchor nearest z0, as one analytic function of z."""
        anchor = self.nearest_anchor(complex(z0)) if abs(z0) <= self.radii[-1] else self._integrate_to(complex(z0))
        row = np.array([anchor.z, anchor.w1, anchor.dw1, anchor.w2, anchor.dw2, anchor.log_scale])

        def values(z):
            z = np.atleast_1d(np.asarray(z, dtype=complex))
            w, dw, reach = self._series(np.repeat(row[:, None], z.size, axis=1), z)
            if reach > 8.0:
                raise ValueError(f"point too far from the germ centre (reach {reach:.1f})")
            return w[0], dw[0], w[1], dw[1]

        return values


# -- descriptors -----------------------------------------------------------------------


@dataclass(frozen=True)
class ClosedFormTwoAV:
    """f = (lam e^z - mu e^-z) / (e^z - e^-z) = lam + (lam - mu) / (e^{2z} - 1).

    Asymptotic value lam on the right half-plane tract and mu on the left.
    S(f) = -2, so P = -1 and N = 2; poles are j*pi*i with residue (lam-mu)/2.
    """

    lam: complex
    mu: complex
    convention: str = "exp(+z), exp(-z)"

    def __post_init__(self):
        object.__setattr__(self, "lam", complex(self.lam))
        object.__setattr__(self, "mu", complex(self.mu))
        if self.lam == self.mu:
            raise ValueError("lam == mu gives a constant function")

    A = property(lambda self: self.lam)
    B = property(lambda self: -self.mu)
    C = property(lambda self: 1 + 0j)
    D = property(lambda self: -1 + 0j)
    P = property(lambda self: SchwarzPolynomial.of(-1))
    basis = ExpBasis()

    @property
    def frame(self) -> CriticalFrame:
        return critical_directions(self.P)

    def values(self, z):
        """f at an array of points; poles give complex infinity."""
        z = np.asarray(z, dtype=complex)
        neg = z.real <= 0
        d = self.lam - self.mu
        with np.errstate(divide="ignore", invalid="ignore"):
            e = cexpm1(np.where(neg, 2 * z, -2 * z))
            out = np.where(neg, self.lam + d / e, self.lam - d * (1 + e) / e)
        return np.where(e == 0, complex(np.inf, 0), out)

    def derivative_values(self, z):
        z = np.asarray(z, dtype=complex)
        neg = z.real <= 0
        d = self.lam - self.mu
        with np.errstate(divide="ignore", invalid="ignore"):
            e = cexpm1(np.where(neg, 2 * z, -2 * z))
            out = -2.0 * d * (1 + e) / (e * e)
        return np.where(e == 0, complex(np.inf, 0), out)


@dataclass(eq=False)
class OdeBacked:
    """f = (A w1 + B w2) / (C w1 + D w2) for a fundamental pair of w'' + P w = 0.

    With ``base`` omitted the pair is normalised by its asymptotics in sector
    ``sector``: w1 is the solution recessive in the tract counter-clockwise
    of the critical ray, w2 the one recessive clockwise, each matching
    P^(-1/4) e^{+-iZ} to leading order, and w1 w2' - w2 w1' = -2i exactly.
    """

    P: SchwarzPolynomial
    A: complex
    B: complex
    C: complex
    D: complex
    base: FundamentalPairState | None = None
    sector: int = 0
    r_max: float = 50.0
    convention: str = ""
    basis: OdeBasis = field(init=False, repr=False)

    def __post_init__(self):
        self.P = as_polynomial(self.P)
        self.A, self.B, self.C, self.D = (complex(x) for x in (self.A, self.B, self.C, self.D))
        if abs(self.A * self.D - self.B * self.C) <= 1e-14 * max(abs(self.A * self.D), abs(self.B * self.C), 1e-300):
            raise ValueError("AD - BC = 0 gives a constant function")
        if self.base is None:
            self.base = principal_base(self.P, self.sector)
            self.convention = self.convention or f"principal pair of sector {self.sector}, Wronskian -2i"
        else:
            self.convention = self.convention or "explicit initial data"
        self.basis = OdeBasis(self.P, self.base, r_max=self.r_max)

    @property
    def frame(self) -> CriticalFrame:
        return critical_directions(self.P)

    def values(self, z):
        u1, _, u2, _ = self.basis.values(z)
        num = self.A * u1 + self.B * u2
        den = self.C * u1 + self.D * u2
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(den == 0, complex(np.inf, 0), num / den)

    def derivative_values(self, z):
        u1, du1, u2, du2 = self.basis.values(z)
        den = self.C * u1 + self.D * u2
        with np.errstate(divide="ignore", invalid="ignore"):
            out = (self.A * self.D - self.B * self.C) * (du1 * u2 - u1 * du2) / (den * den)
        return np.where(den == 0, complex(np.inf, 0), out)


def principal_base(P: SchwarzPolynomial, k: int = 0, min_abs_Z: float = 20.0) -> FundamentalPairState:
    """Exact recessive pair at the base point of sector k, Wronskian -2i.

    Each solution starts from its leading-order form in the middle of the
    tract where it decays and is integrated back to the base point, the
    stable direction for a recessive solution.
    """
    frame = LiouvilleFrame(P, k)
    rb = base_radius_for(frame, min_abs_Z)
    theta, N = frame.theta, frame.N
    zb = rb * cmath.exp(1j * theta)
    pair = []
    for sign, pick in ((1, 0), (-1, 1)):
        far = rb * cmath.exp(1j * (theta + sign * math.pi / N))
        start = leading_solution(frame, far, 1 if pick == 0 else -1)
        arc = [rb * cmath.exp(1j * (theta + sign * math.pi / N * (1 - t))) for t in np.linspace(0, 1, 41)]
        end = integrate_pair(P, arc, start)
        s = math.exp(end.log_scale)
        pair.append((end.w1 * s, end.dw1 * s))
    (w1, dw1), (w2, dw2) = pair
    wr = w1 * dw2 - w2 * dw1
    fix = -2j / wr
    return FundamentalPairState(zb, w1, dw1, w2 * fix, dw2 * fix)


def toy_as_ode(lam: complex, mu: complex, **kw) -> OdeBacked:
    """The closed-form family rebuilt from w'' - w = 0 with w1 = e^z, w2 = e^-z."""
    base = FundamentalPairState(0j, 1, 1, 1, -1)
    return OdeBacked(SchwarzPolynomial.of(-1), lam, -mu, 1, -1, base=base, convention="exp(+z), exp(-z)", **kw)


def exp_iz_pair() -> FundamentalPairState:
    """Initial data at 0 of (e^{iz}, e^{-iz}), the solutions of w'' + w = 0."""
    return FundamentalPairState(0j, 1, 1j, 1, -1j)


FunctionDescriptor = ClosedFormTwoAV | OdeBacked


# -- operations ------------------------------------------------------------------------


def mobius_of(f) -> Mobius:
    return Mobius(f.A, f.B, f.C, f.D)


def evaluate(f, z):
    """f(z) as a sphere point; the point at infinity is rejected (essential singularity)."""
    if is_inf(z):
        raise ValueError("f is undefined at infinity (essential singularity)")
    v = complex(f.values(np.array([complex(z)]))[0])
    return as_point(v)


def evaluate_many(f, z) -> np.ndarray:
    """Vectorised f; poles come back as complex infinity."""
    return f.values(np.asarray(z, dtype=complex))


def derivative(f, z: complex):
    """f'(z), or INF at a pole."""
    v = complex(f.derivative_values(np.array([complex(z)]))[0])
    return as_point(v)


def quotient_parts(f, z):
    """Numerator, denominator and their derivatives, all sharing one positive scale."""
    u1, du1, u2, du2 = f.basis.values(np.asarray(z, dtype=complex))
    return (f.A * u1 + f.B * u2, f.C * u1 + f.D * u2, f.A * du1 + f.B * du2, f.C * du1 + f.D * du2)


def germ(f, z0: complex):
    """A callable that is one analytic function near z0 (for finite differences).

    For the closed form this is f itself; ODE-backed functions use a single
    power series instead of switching between lattice anchors.
    """
    if isinstance(f, ClosedFormTwoAV):
        return lambda z: complex(f.values(np.array([complex(z)]))[0]) if np.isscalar(z) else f.values(z)
    series = f.basis.germ(z0)

    def g(z):
        scalar = np.isscalar(z)
        u1, _, u2, _ = series(z)
        out = (f.A * u1 + f.B * u2) / (f.C * u1 + f.D * u2)
        return complex(out[0]) if scalar else out

    return g


def normalized_germ(f, z0: complex):
    """A Mobius image g of f near z0 with g(z0) = 0, g'(z0) = 1, and the distance scale |V/V'| of its denominator.

    g = c (u2(z0) u1 - u1(z0) u2) / (conj u1(z0) u1 + conj u2(z0) u2).  Deep in a
    tract f is nearly constant and f(z) - f(z0) loses most of its digits; g
    does not, and has the same Schwarzian.
    """
    if isinstance(f, ClosedFormTwoAV):
        raise TypeError("needs an ODE-backed function")
    series = f.basis.germ(z0)
    u1, du1, u2, du2 = (complex(x[0]) for x in series(np.array([complex(z0)])))
    a, b = u1.conjugate(), u2.conjugate()
    c = (a * u1 + b * u2) / (u2 * du1 - u1 * du2)

    def g(z):
        scalar = np.isscalar(z)
        w1, _, w2, _ = series(z)
        out = c * (u2 * w1 - u1 * w2) / (a * w1 + b * w2)
        return complex(out[0]) if scalar else out

    return g, abs((a * u1 + b * u2) / (a * du1 + b * du2))


def germ_parts(f, z0: complex):
    """Like ``germ`` but returning the quotient parts (num, den, num', den')."""
    if isinstance(f, ClosedFormTwoAV):
        return lambda z: quotient_parts(f, z)
    series = f.basis.germ(z0)

    def parts(z):
        u1, du1, u2, du2 = series(z)
        return (f.A * u1 + f.B * u2, f.C * u1 + f.D * u2, f.A * du1 + f.B * du2, f.C * du1 + f.D * du2)

    return parts


@dataclass(frozen=True)
class AsymptoticValue:
    value: object  # SpherePoint
    tract: int  # tract k lies between critical directions k and k+1
    angle: float  # mid-tract direction used for confirmation


def asymptotic_values(f, tol: float = 1e-8, r_limit: float = 1e3) -> list[AsymptoticValue]:
    """One asymptotic value per tract.

    The closed form returns (lam, right tract) and (mu, left tract).  For
    ODE-backed functions the value is the limit of f along the mid-tract ray,
    accepted once successive values (radius doubling) are within ``tol`` in
    the chordal metric.
    """
    frame = f.frame
    N = len(frame.angles)
    if isinstance(f, ClosedFormTwoAV):
        out = []
        for k, a in enumerate(frame.angles):
            mid = a + math.pi / N
            val = f.lam if math.cos(mid) > 0 else f.mu
            out.append(AsymptoticValue(val, k, mid % (2 * math.pi)))
        return sorted(out, key=lambda v: -math.cos(v.angle))
    out = []
    M = mobius_of(f)
    for k, a in enumerate(frame.angles):
        mid = a + math.pi / N
        e = cmath.exp(1j * mid)
        state = f.basis.nearest_anchor(0j)
        prev = None
        r, r_prev = 2.0, 0.0
        value = None
        while r <= r_limit:
            state = integrate_pair(f.P, [state.z, r * e], state).normalized()
            val = _ratio_point(state.w1, state.w2)
            cur = M(val)
            if prev is not None and chordal_distance(cur, prev) < tol:
                value = cur
                break
            prev = cur
            r_prev, r = r, 2.0 * r
        if value is None:
            raise AsymptoticValueError(f"f did not settle along direction {mid:.4f} up to |z| = {r_prev:g}")
        if not is_inf(value) and chordal_distance(value, INF) < 10 * tol:
            value = INF
        out.append(AsymptoticValue(value, k, mid % (2 * math.pi)))
    return out


def _ratio_point(w1: complex, w2: complex):
    if w2 == 0:
        return INF
    return w1 / w2


def predicted_asymptotic_values(f: OdeBacked) -> dict[int, object]:
    """Coefficient ratios for the two tracts flanking the normalisation sector."""
    N = f.P.N
    k = f.sector % N
    return {k: _ratio_point(f.B, f.D), (k - 1) % N: _ratio_point(f.A, f.C)}


def residue_at(f, s: complex, method: str = "quotient", radius: float | None = None) -> complex:
    """Residue of f at a simple pole s.

    ``quotient``: numerator(s) / denominator'(s).  ``contour``: 64-node
    trapezoid rule on a circle about s (radius adaptive to the pole
    spacing); the circle must enclose exactly one pole and no zero of the
    denominator besides it.
    """
    s = complex(s)
    if method == "quotient":
        num, den, _, dden = (complex(x[0]) for x in germ_parts(f, s)(np.array([s])))
        return num / dden
    if method != "contour":
        raise ValueError(f"unknown method {method!r}")
    parts = germ_parts(f, s)
    if radius is None:
        radius = default_contour_radius(f, s)
    return contour_residue(lambda z: _quot(parts, z), s, radius, winding_fn=lambda z: parts(z)[1])


def _quot(parts, z):
    num, den, _, _ = parts(z)
    return num / den


def default_contour_radius(f, s: complex) -> float:
    """A fifth of the local pole spacing pi / |P(s)|^(1/2), at most 0.25."""
    p = abs(complex(f.P(s)))
    return min(0.25, 0.2 * math.pi / math.sqrt(max(p, 1e-300)))


def contour_residue(g, s: complex, radius: float, nodes: int = 64, winding_fn=None) -> complex:
    """(1/2 pi i) times the contour integral of g around |z - s| = radius.

    ``winding_fn`` (zeros of which are the poles of g) is checked to wind
    exactly once; otherwise the contour holds more than one pole.
    """
    t = 2 * math.pi * np.arange(nodes) / nodes
    zs = s + radius * np.exp(1j * t)
    if winding_fn is not None:
        fine = s + radius * np.exp(2j * math.pi * np.arange(4 * nodes) / (4 * nodes))
        v = winding_fn(fine)
        turns = np.sum(np.angle(np.roll(v, -1) / v)) / (2 * math.pi)
        if round(turns) != 1:
            raise ValueError(f"contour of radius {radius:g} about {s} encloses {round(turns)} poles")
    vals = g(zs)
    return complex(np.mean(vals * (zs - s)))
