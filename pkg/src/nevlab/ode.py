"""Integration of w'' + P(z) w = 0 along complex paths, and the Liouville frame.

States carry a common log-scale so that pairs growing like exp|Z| inside
tracts stay representable.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp, trapezoid

from .schwarzian import SchwarzPolynomial, _wrap, critical_directions, default_ray_radius

RENORMALIZE_ABOVE = 1e150


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class FundamentalPairState:
    """Two solutions and their derivatives at ``z``.

    The true values are the stored ones times exp(log_scale).
    """

    z: complex
    w1: complex
    dw1: complex
    w2: complex
    dw2: complex
    log_scale: float = 0.0

    @property
    def wronskian(self) -> complex:
        """w1 w2' - w2 w1' in stored units (multiply by exp(2 log_scale) for the true value)."""
        return self.w1 * self.dw2 - self.w2 * self.dw1

    def vector(self) -> np.ndarray:
        return np.array([self.w1, self.dw1, self.w2, self.dw2], dtype=complex)

    @classmethod
    def from_vector(cls, z, y, log_scale: float = 0.0) -> "FundamentalPairState":
        return cls(complex(z), complex(y[0]), complex(y[1]), complex(y[2]), complex(y[3]), float(log_scale))

    def normalized(self) -> "FundamentalPairState":
        y = self.vector()
        s = float(np.max(np.abs(y)))
        if s == 0.0:
            return self
        return FundamentalPairState.from_vector(self.z, y / s, self.log_scale + math.log(s))


def wronskian_drift(start: FundamentalPairState, end: FundamentalPairState) -> float:
    """Relative change of the true Wronskian between two states."""
    ratio = end.wronskian / start.wronskian
    return abs(ratio * math.exp(2.0 * (end.log_scale - start.log_scale)) - 1.0)


def _coefficients(P) -> tuple:
    """Ascending coefficients; plain sequences are accepted so that P = 0 works."""
    if isinstance(P, SchwarzPolynomial):
        return P.coefficients
    return tuple(complex(c) for c in np.atleast_1d(P))


def _phase_length(coeffs, za: complex, zb: complex, samples: int = 65) -> float:
    """Estimate of the integral of |P|^(1/2) |dz| over the segment."""
    t = np.linspace(0.0, 1.0, samples)
    vals = np.sqrt(np.abs(np.polynomial.polynomial.polyval(za + (zb - za) * t, coeffs)))
    return float(trapezoid(vals, t) * abs(zb - za) + vals.max() * abs(zb - za) / samples)


def _integrate_line(P, y, log_scale, za, zb, rtol, atol, max_phase, sample_t=None):
    """Integrate from za to zb with the state vector ``y``.

    ``sample_t`` lists arclength positions in (0, |zb-za|] at which states are
    recorded.  Returns (y_end, log_scale_end, [(t, y, log_scale), ...]).
    """
    length = abs(zb - za)
    samples = []
    if length == 0.0:
        return y, log_scale, samples
    direction = (zb - za) / length
    coeffs = _coefficients(P)
    n_pieces = max(1, math.ceil(_phase_length(coeffs, za, zb) / max_phase))
    cuts = np.linspace(0.0, length, n_pieces + 1)
    sample_t = np.asarray(sample_t if sample_t is not None else [], dtype=float)
    pending = np.minimum(np.sort(sample_t), length)

    for t0, t1 in zip(cuts[:-1], cuts[1:]):
        z0 = za + direction * t0

        def rhs(t, v):
            z = z0 + direction * t
            p = 0j
            for c in reversed(coeffs):
                p = p * z + c
            return np.array([direction * v[1], -direction * p * v[0], direction * v[3], -direction * p * v[2]])

        inside = pending[(pending > t0) & (pending <= t1)]
        scale = float(np.max(np.abs(y)))
        sol = solve_ivp(
            rhs,
            (0.0, t1 - t0),
            y,
            method="DOP853",
            rtol=rtol,
            atol=atol * max(scale, 1e-300),
            t_eval=(inside - t0) if inside.size else None,
        )
        if sol.status != 0:
            raise IntegrationError(f"integration failed near z={z0}: {sol.message}")
        for k in range(inside.size):
            samples.append((float(inside[k]), sol.y[:, k].copy(), log_scale))
        y = sol.y[:, -1].copy()
        mag = float(np.max(np.abs(y)))
        if not np.isfinite(mag):
            raise IntegrationError(f"overflow near z={z0 + direction * (t1 - t0)}")
        if mag > RENORMALIZE_ABOVE or (0.0 < mag < 1.0 / RENORMALIZE_ABOVE):
            y = y / mag
            log_scale += math.log(mag)
    return y, log_scale, samples


def integrate_pair(
    P: SchwarzPolynomial,
    path: Sequence[complex],
    init: FundamentalPairState,
    rtol: float = 1e-12,
    atol: float = 1e-15,
    max_phase: float = 40.0,
) -> FundamentalPairState:
    """Carry a fundamental pair along the polyline ``path`` (which starts at init.z).

    Adaptive Dormand-Prince 8(5,3) steps; each segment is cut into pieces of
    bounded phase so the pair can be rescaled before it overflows.
    """
    path = [complex(p) for p in path]
    if not path:
        return init
    if abs(path[0] - init.z) > 1e-12 * max(1.0, abs(init.z)):
        raise ValueError(f"path starts at {path[0]}, state is at {init.z}")
    y = init.vector()
    log_scale = init.log_scale
    for za, zb in zip(path[:-1], path[1:]):
        y, log_scale, _ = _integrate_line(P, y, log_scale, za, zb, rtol, atol, max_phase)
    return FundamentalPairState.from_vector(path[-1], y, log_scale)


def integrate_ray_samples(
    P: SchwarzPolynomial,
    init: FundamentalPairState,
    target: complex,
    positions: Sequence[float],
    rtol: float = 1e-12,
    atol: float = 1e-15,
    max_phase: float = 40.0,
) -> list[FundamentalPairState]:
    """States at the points init.z + t (target - init.z)/|target - init.z| for t in ``positions``."""
    za = init.z
    direction = (target - za) / abs(target - za)
    _, _, samples = _integrate_line(
        P, init.vector(), init.log_scale, za, target, rtol, atol, max_phase, sample_t=positions
    )
    return [FundamentalPairState.from_vector(za + direction * t, y, ls).normalized() for t, y, ls in samples]


def taylor_reach(P: SchwarzPolynomial, z0: complex, radius: float) -> float:
    """radius * sqrt(max |P| on the disk of that radius about z0), a bound on
    how far a local power series has to stretch."""
    q = P.taylor_at(z0)
    return radius * math.sqrt(sum(abs(c) * radius ** k for k, c in enumerate(q)))


def taylor_continue(P: SchwarzPolynomial, state: FundamentalPairState, points, max_reach: float = 6.0):
    """Continue both solutions from ``state`` to nearby ``points`` by power series.

    The solutions are entire, so the series converges everywhere; the reach
    limit only bounds cancellation.  Returns (w1, dw1, w2, dw2) arrays in the
    units of ``state``.
    """
    points = np.asarray(points, dtype=complex)
    h = points - state.z
    rho = float(np.max(np.abs(h))) if h.size else 0.0
    q = P.taylor_at(state.z)
    reach = rho * math.sqrt(sum(abs(c) * rho ** k for k, c in enumerate(q)))
    if reach > max_reach:
        raise ValueError(f"series reach {reach:.2f} exceeds {max_reach}")
    order = int(30 + 3 * math.e * reach)
    c = np.zeros((order, 2), dtype=complex)
    c[0] = (state.w1, state.w2)
    c[1] = (state.dw1, state.dw2)
    m = q.size
    for n in range(order - 2):
        lo = max(0, n - m + 1)
        conv = np.zeros(2, dtype=complex)
        for j in range(lo, n + 1):
            conv += q[n - j] * c[j]
        c[n + 2] = -conv / ((n + 2) * (n + 1))
    hh = h[:, None]
    w = np.zeros((h.size, 2), dtype=complex)
    dw = np.zeros((h.size, 2), dtype=complex)
    for n in range(order - 1, -1, -1):
        w = w * hh + c[n]
        if n >= 1:
            dw = dw * hh + n * c[n]
    return w[:, 0], dw[:, 0], w[:, 1], dw[:, 1]


# -- Liouville frame ---------------------------------------------------------------


def liouville_F(P: SchwarzPolynomial, z: complex) -> complex:
    """Perturbation term of the transformed equation W'' + (1 - F) W = 0."""
    p = P(z)
    if p == 0:
        raise ValueError(f"P vanishes at {z}: turning point")
    return 0.25 * P.derivative(z, 2) / p ** 2 - 5.0 / 16.0 * P.derivative(z, 1) ** 2 / p ** 3


_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


@dataclass
class LiouvilleFrame:
    """Z(z) = integral of P^(1/2) from R0 e^{i theta_k} to z, inside sector k.

    The square-root branch is fixed far out on the critical ray, where
    P^(1/2) e^{i theta_k} must be close to the positive reals, and carried in
    to the base point by continuation.  ``certificate`` records the values
    P^(1/2) at the vertices of the last path used.
    """

    P: SchwarzPolynomial
    k: int = 0
    R0: float | None = None
    margin: float = 0.05
    certificate: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.R0 is None:
            self.R0 = default_ray_radius(self.P)
        frame = critical_directions(self.P, self.R0)
        self.theta = frame.angles[self.k % self.P.N]
        self.N = self.P.N
        self._roots = self.P.roots()
        self._base = self.R0 * cmath.exp(1j * self.theta)
        self._base_roots = self._continue_from_far()

    def _dist_to_roots(self, z) -> float:
        if self._roots.size == 0:
            return math.inf
        return float(np.min(np.abs(self._roots - z)))

    def _continue_from_far(self):
        far = max(1e3, 100.0 * self.R0)
        e = cmath.exp(1j * self.theta)
        s = cmath.sqrt(self.P(far * e))
        if (s * e).real < 0:
            s = -s
        q = cmath.sqrt(s)
        for r in np.geomspace(far, self.R0, 400)[1:]:
            s, q = _track(self.P(r * e), s, q)
        return s, q

    def in_sector(self, z: complex) -> bool:
        return abs(z) >= self.R0 * (1 - 1e-12) and abs(_wrap(cmath.phase(z) - self.theta)) < 2 * math.pi / self.N - self.margin

    def path_to(self, z: complex) -> list[complex]:
        """Polyline: along the critical ray to radius |z|, then round the arc to z."""
        r = abs(z)
        e = cmath.exp(1j * self.theta)
        verts = [self._base, r * e]
        dphi = _wrap(cmath.phase(z) - self.theta)
        n_arc = max(1, math.ceil(abs(dphi) / 0.05))
        verts += [r * cmath.exp(1j * (self.theta + dphi * j / n_arc)) for j in range(1, n_arc + 1)]
        verts[-1] = complex(z)
        return verts

    def _integrate(self, z: complex):
        if not self.in_sector(z):
            raise ValueError(f"{z} lies outside sector {self.k} (theta={self.theta:.4f}, R0={self.R0})")
        verts = self.path_to(z)
        s, q = self._base_roots
        total = 0j
        cert = [(verts[0], s)]
        for za, zb in zip(verts[:-1], verts[1:]):
            seg = abs(zb - za)
            if seg == 0:
                continue
            n = 1
            while True:
                # piece length bounded by half the distance to the nearest turning point
                lengths = seg / n
                dmin = min(self._dist_to_roots(za + (zb - za) * j / n) for j in range(n + 1))
                if lengths <= 0.5 * min(dmin, max(1.0, abs(za))):
                    break
                n *= 2
            for j in range(n):
                a = za + (zb - za) * j / n
                b = za + (zb - za) * (j + 1) / n
                mid, half = (a + b) / 2, (b - a) / 2
                nodes = mid + half * _GL_X
                acc = 0j
                for x, w in zip(nodes, _GL_W):
                    s, q = _track(self.P(x), s, q)
                    acc += w * s
                total += acc * half
                s, q = _track(self.P(b), s, q)
            cert.append((zb, s))
        self.certificate = cert
        return total, s, q

    def Z(self, z: complex) -> complex:
        return self._integrate(complex(z))[0]

    def sqrt_P(self, z: complex) -> tuple[complex, complex]:
        """Branch-tracked (P^(1/2), P^(1/4)) at z."""
        _, s, q = self._integrate(complex(z))
        return s, q

    def leading_Z(self, z: complex) -> complex:
        """(2/N) (a z^N)^(1/2), with the root positive on the critical ray."""
        a = abs(self.P.leading)
        return 2.0 / self.N * math.sqrt(a) * abs(z) ** (self.N / 2) * cmath.exp(
            0.5j * self.N * _wrap(cmath.phase(z) - self.theta)
        )


def _track(p: complex, s_prev: complex, q_prev: complex):
    """Square root and fourth root of p nearest to the previous values."""
    s = cmath.sqrt(p)
    if abs(s - s_prev) > abs(s + s_prev):
        s = -s
    q = cmath.sqrt(s)
    if abs(q - q_prev) > abs(q + q_prev):
        q = -q
    return s, q


def liouville_Z(frame: LiouvilleFrame, z: complex) -> complex:
    return frame.Z(z)


def principal_state(frame: LiouvilleFrame, z: complex, min_abs_Z: float = 20.0) -> FundamentalPairState:
    """Leading-order principal pair w = P^(-1/4) e^{+-iZ} with exact derivatives of that form.

    Its Wronskian is exactly -2i.  Relative error against the true principal
    solutions is O(1/|Z|).
    """
    z = complex(z)
    Zz, s, q = frame._integrate(z)
    if abs(Zz) <= min_abs_Z:
        raise ValueError(f"|Z({z})| = {abs(Zz):.2f} is below the asymptotic threshold {min_abs_Z}")
    p = frame.P(z)
    dp = frame.P.derivative(z)
    corr = dp / (4.0 * p)
    e1 = cmath.exp(1j * Zz)
    e2 = cmath.exp(-1j * Zz)
    w1 = e1 / q
    w2 = e2 / q
    return FundamentalPairState(z, w1, (1j * s - corr) * w1, w2, (-1j * s - corr) * w2)


def leading_solution(frame: LiouvilleFrame, z: complex, sign: int) -> FundamentalPairState:
    """P^(-1/4) e^{sign i Z} with its derivative, stored with a log-scale so it
    stays finite for any |Z|.  Both slots of the state hold this one solution."""
    z = complex(z)
    Zz, s, q = frame._integrate(z)
    corr = frame.P.derivative(z) / (4.0 * frame.P(z))
    expo = sign * 1j * Zz
    w = cmath.exp(1j * expo.imag) / q
    dw = (sign * 1j * s - corr) * w
    return FundamentalPairState(z, w, dw, w, dw, expo.real)


def principal_solutions(frame: LiouvilleFrame, z: complex, min_abs_Z: float = 20.0) -> tuple[complex, complex]:
    st = principal_state(frame, z, min_abs_Z)
    return st.w1, st.w2


def base_radius_for(frame: LiouvilleFrame, min_abs_Z: float = 20.0) -> float:
    """Smallest radius on the critical ray where |Z| exceeds ``min_abs_Z`` (to 1e-9)."""
    e = cmath.exp(1j * frame.theta)
    lo = frame.R0
    hi = max(2.0 * lo, lo + 1.0)
    while abs(frame.Z(hi * e)) <= min_abs_Z:
        lo, hi = hi, 2.0 * hi
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if abs(frame.Z(mid * e)) > min_abs_Z:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-9 * hi:
            break
    return hi * (1 + 1e-9)
