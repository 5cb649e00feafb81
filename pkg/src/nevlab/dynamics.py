"""Forward iteration on the sphere, classification of asymptotic-value orbits,
and numerical sweeps of the two expansion inequalities."""

from __future__ import annotations

import cmath
import enum
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .fits import fit_power_law
from .functions import ClosedFormTwoAV, asymptotic_values, cexpm1, evaluate, germ_parts, quotient_parts
from .roots import AnnularSector, RootSearchError, preimages_in_region
from .sphere import INF, SpherePoint, chordal_distance, is_inf

HUGE = 1e12
POLE_TOL = 1e-9


class Terminal(enum.Enum):
    REACHED_INFINITY = "ReachedInfinity"
    MAX_ITERATIONS = "MaxIterations"
    ESCAPED_RADIUS = "EscapedRadius"


@dataclass(frozen=True)
class Orbit:
    start: SpherePoint
    points: tuple
    terminal: Terminal

    @property
    def length(self) -> int:
        """Number of steps taken."""
        return len(self.points) - 1


def refine_pole(f, z: complex, max_iter: int = 50) -> complex:
    """Newton on the denominator of f starting at z."""
    parts = germ_parts(f, z) if not isinstance(f, ClosedFormTwoAV) else (lambda t: quotient_parts(f, t))
    for _ in range(max_iter):
        _, den, _, dden = (complex(x[0]) for x in parts(np.array([z])))
        if den == 0:
            return z
        step = den / dden
        z -= step
        if abs(step) <= 1e-15 * max(1.0, abs(z)):
            break
    return z


def _step(f, z: complex):
    """One step of the pole-hit rule: returns (image, hit_pole)."""
    w = evaluate(f, z)
    if is_inf(w):
        return INF, True
    if abs(w) > HUGE:
        s = refine_pole(f, z)
        if abs(s - z) <= POLE_TOL:
            return INF, True
    return w, False


def iterate(f, z0: complex, n_max: int, escape_R: float = 1e8, persistence: int = 5) -> Orbit:
    """Forward orbit of z0 until a pole is hit, n_max steps pass, or |z| stays
    above escape_R for ``persistence`` consecutive steps.

    A step whose value exceeds 1e12 in modulus is checked by refining onto
    the nearest pole of f; it counts as hitting infinity only when that pole
    lies within 1e-9 of the preimage.
    """
    if is_inf(z0):
        raise ValueError("orbits start at finite points")
    z = complex(z0)
    pts = [z]
    above = 0
    for _ in range(n_max):
        w, hit = _step(f, z)
        pts.append(w)
        if hit:
            return Orbit(z0, tuple(pts), Terminal.REACHED_INFINITY)
        above = above + 1 if abs(w) > escape_R else 0
        if above >= persistence:
            return Orbit(z0, tuple(pts), Terminal.ESCAPED_RADIUS)
        z = w
    return Orbit(z0, tuple(pts), Terminal.MAX_ITERATIONS)


def orbit_csv(orbit: Orbit) -> str:
    lines = ["n,re,im"]
    for n, p in enumerate(orbit.points):
        lines.append(f"{n},inf,inf" if is_inf(p) else f"{n},{p.real!r},{p.imag!r}")
    return "\n".join(lines) + "\n"


# -- classification ----------------------------------------------------------------------


@dataclass(frozen=True)
class Prepole:
    p: int
    pole: SpherePoint = INF
    residual: float = 0.0  # distance from the last finite iterate to the refined pole
    kind: str = "Prepole"


@dataclass(frozen=True)
class RepellingLanding:
    cycle: tuple
    q: int
    multiplier: float
    landing_step: int
    residual: float  # distance from the landing iterate to the Newton-refined cycle
    kind: str = "RepellingLanding"


@dataclass(frozen=True)
class Escaping:
    steps: int
    kind: str = "Escaping"


@dataclass(frozen=True)
class Unresolved:
    diagnostic: str
    omega_sample: tuple = ()
    kind: str = "Unresolved"


OrbitClass = Prepole | RepellingLanding | Escaping | Unresolved


def class_to_dict(c) -> dict:
    d = asdict(c)
    for key in ("cycle", "omega_sample"):
        if key in d:
            d[key] = [_point_json(p) for p in d[key]]
    if "pole" in d:
        d["pole"] = _point_json(d["pole"])
    return d


def _point_json(p):
    return "inf" if is_inf(p) else [p.real, p.imag]


def cycle_multiplier(f, cycle) -> complex:
    """Product of f' along the cycle."""
    m = 1 + 0j
    for z in cycle:
        m *= complex(f.derivative_values(np.array([z]))[0])
    return m


def _iterate_n(f, z: complex, q: int) -> complex:
    for _ in range(q):
        z = complex(f.values(np.array([z]))[0])
    return z


def refine_cycle(f, z: complex, q: int, max_iter: int = 40):
    """Newton on f^q(z) - z with the chain-rule derivative; returns z or None."""
    for _ in range(max_iter):
        w, d = z, 1 + 0j
        for _ in range(q):
            d *= complex(f.derivative_values(np.array([w]))[0])
            w = complex(f.values(np.array([w]))[0])
        if not (np.isfinite(w) and np.isfinite(d)) or d == 1:
            return None
        step = (w - z) / (d - 1)
        z -= step
        if abs(step) <= 1e-15 * max(1.0, abs(z)):
            return z
    return z if abs(_iterate_n(f, z, q) - z) <= 1e-10 * max(1.0, abs(z)) else None


def classify_singular_orbit(f, lam: SpherePoint, n_max: int = 500, delta: float = 0.05, q_max: int = 64,
                            cycle_tol: float = 1e-9, escape_R: float = 1e8) -> object:
    """Prepole, repelling-cycle landing, escaping, or unresolved.

    A landing is detected when some iterate comes back within ``cycle_tol``
    (chordal) of an earlier one q <= q_max steps before; the cycle is then
    refined by Newton and accepted when |(f^q)'| > 1 + delta there.
    """
    if is_inf(lam):
        return Prepole(0)
    orbit = iterate(f, complex(lam), n_max, escape_R)
    pts = orbit.points
    if orbit.terminal is Terminal.REACHED_INFINITY:
        last = pts[-2]
        s = refine_pole(f, last)
        return Prepole(len(pts) - 1, s, abs(s - last))
    if orbit.terminal is Terminal.ESCAPED_RADIUS:
        return Escaping(orbit.length)
    for n in range(1, len(pts)):
        for q in range(1, min(q_max, n) + 1):
            if chordal_distance(pts[n], pts[n - q]) < cycle_tol:
                start = n - q
                c0 = refine_cycle(f, pts[start], q)
                if c0 is None:
                    continue
                cyc = [c0]
                for _ in range(q - 1):
                    cyc.append(complex(f.values(np.array([cyc[-1]]))[0]))
                mult = abs(cycle_multiplier(f, cyc))
                if mult > 1 + delta:
                    return RepellingLanding(tuple(cyc), q, mult, start, abs(pts[start] - c0))
                return Unresolved(f"non-repelling cycle of period {q}, multiplier {mult:.6g}", tuple(cyc))
    tail = tuple(p for p in pts[-8:])
    return Unresolved("no pole hit, escape or cycle landing within the iteration budget", tail)


@dataclass
class MixedInstance:
    f: ClosedFormTwoAV
    shift: int  # f(mu) = mu + shift * pi * i
    newton_residual: float
    multiplier: float
    classes: dict
    K: int
    N: int

    def certificates(self) -> dict:
        return {
            "lambda": [self.f.lam.real, self.f.lam.imag],
            "mu": [self.f.mu.real, self.f.mu.imag],
            "landing_shift": self.shift,
            "newton_residual": self.newton_residual,
            "multiplier": self.multiplier,
            "K": self.K,
            "N": self.N,
            "classes": {k: class_to_dict(v) for k, v in self.classes.items()},
        }


class NoInstanceFound(RuntimeError):
    pass


def _landing_newton(lam: complex, mu: complex, k: int):
    """Newton on F(mu) = f_mu(mu) - mu - k pi i; None unless |F| <= 1e-10."""
    for _ in range(60):
        e = complex(cexpm1(2 * mu))
        if e == 0:
            return None
        F = lam + (lam - mu) / e - mu - k * math.pi * 1j
        dF = -1.0 / e - 2.0 * (lam - mu) * (e + 1) / (e * e) - 1.0
        step = F / dF
        mu -= step
        if not cmath.isfinite(mu) or abs(mu) > 50:
            return None
        if abs(step) < 1e-15 * max(1.0, abs(mu)):
            break
    e = complex(cexpm1(2 * mu))
    if e == 0 or abs(mu - lam) < 1e-6:
        return None
    if abs(lam + (lam - mu) / e - mu - k * math.pi * 1j) > 1e-10:
        return None
    return mu


def default_search_grid():
    re = np.linspace(-1.5, 1.5, 7)
    im = np.linspace(-3.0, 3.0, 13)
    return [complex(a, b) for b in im for a in re]


def find_mixed_instance(grid=None, rng: np.random.Generator | None = None, lam: complex = 1j * math.pi,
                        shifts=(1, -1, 2, -2), delta: float = 0.05, jitter: float = 0.05) -> MixedInstance:
    """Closed-form instance with lam a pole (prepole of order 1) and mu landing
    on a repelling fixed point.

    The family is pi*i periodic and f(mu) = mu has no solution (it forces
    mu = lam), so Newton solves f_mu(mu) = mu + k pi i for k != 0: then
    z* = mu + k pi i satisfies f(z*) = f(mu) = z*, and |f'(z*)| = |f'(mu)|.
    """
    lam = complex(lam)
    grid = list(default_search_grid() if grid is None else grid)
    if rng is not None:
        grid = [g + jitter * complex(*rng.uniform(-1, 1, 2)) for g in grid]
    found = []
    for k in shifts:
        for mu in grid:
            mu = _landing_newton(lam, complex(mu), k)
            if mu is None or any(abs(mu - m) < 1e-8 for m, _ in found):
                continue
            found.append((mu, k))
    # smallest |mu| first, so the choice does not depend on grid order
    for mu, k in sorted(found, key=lambda c: (abs(c[0]), c[1])):
        e = complex(cexpm1(2 * mu))
        resid = abs(lam + (lam - mu) / e - mu - k * math.pi * 1j)
        f = ClosedFormTwoAV(lam, mu)
        mult = abs(complex(f.derivative_values(np.array([mu]))[0]))
        if mult <= 1 + delta:
            continue
        c_lam = classify_singular_orbit(f, lam, delta=delta)
        c_mu = classify_singular_orbit(f, mu, delta=delta)
        if not (isinstance(c_lam, Prepole) and isinstance(c_mu, RepellingLanding)):
            continue
        zstar = mu + k * math.pi * 1j
        land = abs(complex(f.values(np.array([mu]))[0]) - zstar)
        return MixedInstance(f, k, max(resid, land), mult, {"lambda": c_lam, "mu": c_mu}, K=1, N=2)
    raise NoInstanceFound("no landing instance with a repelling fixed point on the search grid")


# -- the maps sigma and the expansion inequalities ------------------------------------------


@dataclass
class SigmaMap:
    """sigma(z) = f^(p+1)(z) on the tract of an asymptotic value lam with f^p(lam) = inf.

    For the closed-form family the first step is kept as an offset from lam
    (f(z) - lam is far below the rounding of lam deep in a tract), the middle
    steps are linearised in that offset, and the last step uses the exact
    pi*i periodicity at the pole.
    """

    f: ClosedFormTwoAV
    lam: complex
    p: int
    side: int  # +1: right half-plane tract, -1: left

    def __post_init__(self):
        if not isinstance(self.f, ClosedFormTwoAV):
            raise TypeError("sigma maps are implemented for the closed-form family")
        self.lam = complex(self.lam)
        self._path = [self.lam]
        for _ in range(self.p - 1):
            self._path.append(complex(self.f.values(np.array([self._path[-1]]))[0]))
        self.pole = self._path[-1]
        j = round(self.pole.imag / math.pi)
        if abs(self.pole - j * math.pi * 1j) > 1e-9 * max(1.0, abs(self.pole)):
            raise ValueError(f"{self.pole} is not a pole j*pi*i of the family")

    def in_tract(self, z) -> np.ndarray:
        return np.sign(np.real(z)) == self.side

    def offset(self, z):
        """f(z) - lam for z in this tract, without cancellation."""
        f = self.f
        z = np.asarray(z, dtype=complex)
        d = f.lam - f.mu
        if self.side > 0:
            e = cexpm1(-2 * z)
            return -d * (1 + e) / e
        e = cexpm1(2 * z)
        return d * (1 + e) / e

    def __call__(self, z):
        """(sigma(z), sigma'(z), final factor f'(f^p(z)))."""
        z = np.asarray(z, dtype=complex)
        f = self.f
        if not np.all(self.in_tract(z)):
            raise ValueError("sample outside the tract")
        delta = self.offset(z)
        deriv = f.derivative_values(z)
        for w in self._path[:-1]:
            d = complex(f.derivative_values(np.array([w]))[0])
            delta = d * delta
            deriv = deriv * d
        return self._pole_step(delta, deriv)

    def _pole_step(self, delta, deriv):
        # f(j pi i + delta) = f(delta) by periodicity
        final = self.f.derivative_values(delta)
        return self.f.values(delta), deriv * final, final


@dataclass
class ExpansionReport:
    samples: int
    rejected: int
    violations: int
    min_ratio: float
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, default=float)


def sigma_maps(f: ClosedFormTwoAV, classes: dict | None = None) -> list[SigmaMap]:
    """One sigma map per prepole asymptotic value of the closed form."""
    maps = []
    for side, lam in ((1, f.lam), (-1, f.mu)):
        c = classify_singular_orbit(f, lam)
        if isinstance(c, Prepole) and c.p >= 1:
            maps.append(SigmaMap(f, lam, c.p, side))
    return maps


def check_tract_expansion(sigma: SigmaMap, n_samples: int, R: float, rng: np.random.Generator,
                          x_range=(5.0, 50.0), y_range=(-math.pi, math.pi)) -> ExpansionReport:
    """|sigma'(z)| > |log|sigma(z)| - log R| / (4 pi) * |sigma(z)| / |z| on tract samples.

    Samples with |sigma(z)| <= R fall outside the statement and are redrawn.
    ``extra`` holds mean ratios over dyadic bands of |Re z|.
    """
    got = []
    rejected = 0
    while sum(a.size for a in got) < n_samples:
        need = n_samples - sum(a.size for a in got)
        x = rng.uniform(*x_range, need) * sigma.side
        z = x + 1j * rng.uniform(*y_range, need)
        s, ds, _ = sigma(z)
        ok = np.abs(s) > R
        rejected += int((~ok).sum())
        got.append(np.stack([z[ok], s[ok], ds[ok]]))
    z, s, ds = np.concatenate(got, axis=1)[:, :n_samples]
    rhs = np.abs(np.log(np.abs(s)) - math.log(R)) / (4 * math.pi) * np.abs(s) / np.abs(z)
    ratio = np.abs(ds) / rhs
    bands = {}
    lo = x_range[0]
    while lo < x_range[1]:
        hi = min(2 * lo, x_range[1])
        sel = (np.abs(z.real) >= lo) & (np.abs(z.real) < hi)
        if sel.any():
            bands[f"{lo:g}-{hi:g}"] = float(ratio[sel].mean())
        lo = hi
    return ExpansionReport(int(z.size), rejected, int(np.sum(ratio <= 1.0)), float(ratio.min()),
                           {"band_mean_ratio": bands, "R": R, "x_range": list(x_range)})


def pole_lattice_target(f: ClosedFormTwoAV, sigma: SigmaMap) -> complex:
    """A translate t = lam + m pi i (m != 0) that is not an asymptotic value.

    f is pi*i periodic, so points with f(b) = t satisfy sigma(b) = inf, just
    as preimages of lam would if lam were attained.
    """
    for m in (1, -1, 2, -2, 3):
        t = sigma.lam + m * math.pi * 1j
        if min(abs(t - f.lam), abs(t - f.mu)) > 1e-6:
            return t
    raise ValueError("no admissible target pole")


def check_pole_neighborhood_expansion(sigma: SigmaMap, J=range(5, 41), R: float = 10.0, samples_per_j: int = 300,
                                      rng: np.random.Generator | None = None, target: complex | None = None
                                      ) -> ExpansionReport:
    """Sweep of |sigma'| > B R |j|^((N-2)/N) over the neighbourhoods V'_j.

    V'_j is the component of sigma^-1({|w| > 2R}) around b_j, a solution of
    f(b_j) = target.  Points are drawn by picking u uniformly in the disk
    |u| < 1/(2R) and solving 1/sigma(z) = u by Newton from b_j.  Violations
    count samples where the last factor |f'| falls below R/2 or the Newton
    solve leaves the neighbourhood of b_j.  B is the smallest observed ratio.
    """
    f = sigma.f
    rng = rng or np.random.default_rng(0)
    t = pole_lattice_target(f, sigma) if target is None else complex(target)
    J = sorted(int(j) for j in J)
    jmax = max(J)
    for stretch in (1.5, 1.27, 1.71, 1.13):
        region = AnnularSector(0.05 * stretch, (jmax + stretch) * math.pi, math.pi / 2, math.pi)
        try:
            recs = [r for r in preimages_in_region(f, t, region) if r.j > 0]
            break
        except RootSearchError:
            continue
    else:
        raise RootSearchError("could not place the search annulus between solutions b_j")
    by_j = {r.j: r.p for r in recs}
    missing = [j for j in J if j not in by_j]
    if missing:
        raise ValueError(f"no solutions b_j located for j in {missing}")
    N = len(f.frame.angles)
    expo = (N - 2) / N
    per_j_B, diam, violations, total = {}, {}, 0, 0
    isolation = 0.5 * min(abs(by_j[j + 1] - by_j[j]) for j in J if j + 1 in by_j) if len(J) > 1 else 1.0
    for j in J:
        b = by_j[j]
        rad = np.sqrt(rng.uniform(0, 1, samples_per_j)) / (2 * R)
        u = rad * np.exp(2j * math.pi * rng.uniform(0, 1, samples_per_j))
        z = np.full(samples_per_j, b, dtype=complex)
        for _ in range(60):
            s, ds, _ = _sigma_near(sigma, z, t)
            g = 1.0 / s - u
            dg = -ds / (s * s)
            step = g / dg
            z = z - step
            if np.all(np.abs(step) <= 1e-14 * np.maximum(1.0, np.abs(z))):
                break
        s, ds, final = _sigma_near(sigma, z, t)
        bad = (np.abs(z - b) > isolation) | ~np.isfinite(z) | (np.abs(s) <= 2 * R * (1 - 1e-9))
        bad |= np.abs(final) < R / 2
        violations += int(bad.sum())
        total += samples_per_j
        good = ~bad
        per_j_B[j] = float(np.min(np.abs(ds[good])) / (R * j ** expo)) if good.any() else 0.0
        zz = z[good]
        diam[j] = float(np.max(np.abs(zz[:, None] - zz[None, :]))) if zz.size > 1 else 0.0
    Bs = np.array(list(per_j_B.values()))
    B = float(Bs.min())
    fit = fit_power_law(list(diam.items()), j_min=min(J), j_max=jmax) if len(J) >= 6 and min(diam.values()) > 0 else None
    extra = {
        "B": B,
        "B_spread": float(np.max(np.abs(Bs / np.median(Bs) - 1.0))),
        "per_j_B": {str(k): v for k, v in per_j_B.items()},
        "diam_exponent": fit.exponent if fit else None,
        "target": [t.real, t.imag],
        "R": R,
    }
    return ExpansionReport(total, 0, violations, B, extra)


def _sigma_near(sigma: SigmaMap, z, t: complex):
    """sigma near a solution of f(z) = t with t = lam + m pi i: f(z) = t + delta
    and f(t + delta) = f(lam + delta) by periodicity."""
    f = sigma.f
    z = np.asarray(z, dtype=complex)
    delta = f.values(z) - t
    deriv = f.derivative_values(z)
    # the remaining p-1 steps follow the orbit of lam shifted by periodicity
    for w in sigma._path[:-1]:
        d = complex(f.derivative_values(np.array([w]))[0])
        delta = d * delta
        deriv = deriv * d
    return sigma._pole_step(delta, deriv)
