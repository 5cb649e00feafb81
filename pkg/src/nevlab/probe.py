"""Birkhoff averages, spatial averages and measure-zero trend probes.

All runs are reproducible from (config, seed): starts are drawn in fixed
blocks, each block from its own spawned substream, and results are reduced
in block order whatever the thread count.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .dynamics import HUGE, POLE_TOL
from .functions import quotient_parts
from .sphere import chordal_to, sample_sphere_uniform

BLOCK = 256


# -- test functions ------------------------------------------------------------------------


def _const(z, at_inf):
    return np.ones(np.shape(z))


def _chordal2_0(z, at_inf):
    return chordal_to(z, 0j, at_inf) ** 2


def _chordal2_1(z, at_inf):
    return chordal_to(z, 1 + 0j, at_inf) ** 2


def make_bump(center: complex = 0.5 + 0.5j, width: float = 0.5):
    def bump(z, at_inf):
        return np.exp(-(chordal_to(z, complex(center), at_inf) / width) ** 2)

    return bump


TEST_FUNCTIONS = {
    "constant": _const,
    "chordal2_0": _chordal2_0,
    "chordal2_1": _chordal2_1,
    "bump": make_bump(),
}


def test_function(name: str):
    try:
        return TEST_FUNCTIONS[name]
    except KeyError:
        raise ValueError(f"unknown test function {name!r}; known: {sorted(TEST_FUNCTIONS)}") from None


# -- batched iteration ------------------------------------------------------------------------


def step_many(f, z: np.ndarray, alive: np.ndarray):
    """One step of f on the live entries, with the pole-hit rule.

    Returns (new z, new alive).  A value above 1e12 is checked by Newton on
    the denominator from the preimage; a pole within 1e-9 ends the orbit.
    """
    w = z.copy()
    idx = np.nonzero(alive)[0]
    if idx.size == 0:
        return w, alive
    zi = z[idx]
    wi = f.values(zi)
    big = ~np.isfinite(wi) | (np.abs(wi) > HUGE)
    dead = ~np.isfinite(wi)
    check = big & np.isfinite(wi)
    if check.any():
        s = zi[check].copy()
        for _ in range(8):
            _, den, _, dden = quotient_parts(f, s)
            s = s - den / dden
        dead[np.nonzero(check)[0][np.abs(s - zi[check]) <= POLE_TOL]] = True
    alive = alive.copy()
    alive[idx[dead]] = False
    w[idx[~dead]] = wi[~dead]
    return w, alive


def _birkhoff_block(f, starts, phis, n):
    m = starts.size
    z = starts.astype(complex)
    alive = np.ones(m, dtype=bool)
    first = [phi(z, None) for phi in phis]
    sums = [np.zeros(m) for _ in phis]
    valid = np.ones(m, dtype=np.int64)
    for _ in range(1, n):
        z, alive = step_many(f, z, alive)
        if not alive.any():
            break
        for s, phi, f0 in zip(sums, phis, first):
            v = phi(z[alive], None)
            s[alive] += v - f0[alive]
        valid += alive
    # shifted sums keep a constant test function exact
    return [f0 + s / valid for f0, s in zip(first, sums)], valid


def birkhoff_average(f, z0: complex, phi, n: int):
    """(1/n') sum of phi(f^k(z0)) over the n' <= n iterates that exist.

    Returns (average, valid_steps); valid_steps < n flags an orbit cut short
    by a pole.
    """
    avgs, valid = _birkhoff_block(f, np.array([complex(z0)]), [phi], n)
    return float(avgs[0][0]), int(valid[0])


def _map_blocks(fn, blocks, threads: int):
    if threads <= 1 or len(blocks) <= 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, blocks))


def draw_starts(seed: int, count: int, stream: int = 0) -> np.ndarray:
    """Spherically uniform starts, fixed-size blocks from spawned substreams."""
    ss = np.random.SeedSequence([int(seed), int(stream)])
    n_blocks = math.ceil(count / BLOCK)
    out = []
    for b, child in enumerate(ss.spawn(n_blocks)):
        size = min(BLOCK, count - b * BLOCK)
        out.append(sample_sphere_uniform(np.random.Generator(np.random.PCG64(child)), size))
    return np.concatenate(out)


# -- spatial averages --------------------------------------------------------------------------


def spatial_average(phi, n: int = 64) -> tuple[float, float]:
    """Integral of phi against normalised spherical measure, with an error estimate.

    Gauss-Legendre in the height u = (|z|^2-1)/(|z|^2+1) times the
    trapezoid rule in longitude; the error estimate compares with half the
    nodes.
    """

    def rule(m):
        u, w = np.polynomial.legendre.leggauss(m)
        alpha = 2 * math.pi * np.arange(2 * m) / (2 * m)
        rad = np.sqrt((1 + u) / (1 - u))
        z = rad[:, None] * np.exp(1j * alpha)[None, :]
        vals = phi(z.ravel(), None).reshape(z.shape)
        return float(0.5 * np.sum(w * vals.mean(axis=1)))

    fine = rule(n)
    return fine, abs(fine - rule(n // 2))


def spatial_std(phi, n: int = 64) -> float:
    mean, _ = spatial_average(phi, n)
    second, _ = spatial_average(lambda z, a: phi(z, a) ** 2, n)
    return math.sqrt(max(second - mean * mean, 0.0))


# -- probes -----------------------------------------------------------------------------------


@dataclass
class ProbeConfig:
    samples: int = 10_000
    n_max: int = 1_000
    escape_R: float = 10.0
    eps: float = 0.05
    test_functions: tuple = ("constant", "chordal2_0", "chordal2_1", "bump")
    seed: int = 0
    birkhoff_starts: int = 200
    birkhoff_steps: int = 10_000
    std_factor: float = 5.0
    mean_factor: float = 3.0
    trend_checkpoints: tuple = (10, 100, 1000)
    threads: int = 1

    def __post_init__(self):
        for name in ("samples", "n_max", "birkhoff_starts", "birkhoff_steps", "threads"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be positive")
        if not self.escape_R > 0:
            raise ValueError("escape_R must be positive")
        if not 0 < self.eps:
            raise ValueError("eps must be positive")
        if self.std_factor <= 0 or self.mean_factor <= 0:
            raise ValueError("statistical factors must be positive")
        self.test_functions = tuple(self.test_functions)
        self.trend_checkpoints = tuple(int(c) for c in self.trend_checkpoints)
        for name in self.test_functions:
            test_function(name)


@dataclass
class ProbeReport:
    config: dict
    seed: int
    birkhoff: dict = field(default_factory=dict)
    spatial: dict = field(default_factory=dict)
    escape_curve: list = field(default_factory=list)
    escape_fraction_start: float = 0.0
    accumulation: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=1)


def birkhoff_probe(f, config: ProbeConfig) -> tuple[dict, dict, dict]:
    """Per-start Birkhoff averages for every configured test function, the
    matching spatial averages, and the concentration verdicts."""
    phis = [test_function(n) for n in config.test_functions]
    starts = draw_starts(config.seed, config.birkhoff_starts, stream=1)
    blocks = [starts[i:i + BLOCK] for i in range(0, starts.size, BLOCK)]
    res = _map_blocks(lambda b: _birkhoff_block(f, b, phis, config.birkhoff_steps), blocks, config.threads)
    valid = np.concatenate([r[1] for r in res])
    birk, spatial, verdicts = {}, {}, {}
    for i, name in enumerate(config.test_functions):
        avgs = np.concatenate([r[0][i] for r in res])
        mean = float(np.mean(avgs))
        std = float(np.std(avgs))
        sval, serr = spatial_average(phis[i])
        se = spatial_std(phis[i]) / math.sqrt(config.birkhoff_starts)
        birk[name] = {
            "averages": avgs.tolist(),
            "mean": mean,
            "std": std,
        }
        spatial[name] = {"value": sval, "quadrature_error": serr, "mc_standard_error": se}
        # a constant function has zero spread on both sides; equality then passes
        std_ok = std <= config.std_factor * se if se == 0 else std < config.std_factor * se
        mean_ok = abs(mean - sval) <= config.mean_factor * se
        verdicts[name] = {"std_ok": bool(std_ok), "mean_ok": bool(mean_ok)}
    birk["valid_steps"] = valid.tolist()
    birk["truncated"] = int(np.sum(valid < config.birkhoff_steps))
    return birk, spatial, verdicts


def _orbit_block(f, starts, n_max, escape_R, omega, eps, checkpoints):
    """Escape indicators for steps 1..n_max and, per checkpoint n, whether the
    last 20% of steps up to n all stayed within eps of omega."""
    m = starts.size
    z = starts.astype(complex)
    alive = np.ones(m, dtype=bool)
    esc = np.zeros((n_max, m), dtype=bool)
    om = np.asarray(omega, dtype=complex) if omega is not None else np.zeros(0, dtype=complex)
    # starts placed exactly on the cycle follow it exactly; a repelling cycle
    # would otherwise shed them through rounding within a few dozen steps
    on_cycle = np.full(m, -1)
    for k, w in enumerate(om):
        on_cycle[z == w] = k
    locked = on_cycle >= 0
    cps = sorted(set(checkpoints))
    tail_ok = {c: np.ones(m, dtype=bool) for c in cps}
    for n in range(1, n_max + 1):
        z, alive = step_many(f, z, alive & ~locked)
        alive |= locked
        if locked.any():
            on_cycle[locked] = (on_cycle[locked] + 1) % om.size
            z[locked] = om[on_cycle[locked]]
        if om.size:
            d = np.min(np.stack([chordal_to(z, w) for w in om]), axis=0)
            # an orbit ended by a pole sits at infinity from then on
            d[~alive] = np.min(2.0 / np.sqrt(1.0 + np.abs(om) ** 2))
            inside = d < eps
            for c in cps:
                if c - max(1, c // 5) < n <= c:
                    tail_ok[c] &= inside
        esc[n - 1] = alive & (np.abs(z) > escape_R)
    return esc, tail_ok


def orbit_probe(f, config: ProbeConfig, omega=None, starts=None):
    """Escape-fraction curve and accumulation fractions from one batch of starts.

    Orbits ended by a pole count as not beyond R afterwards; for accumulation
    they are placed at infinity, so they only count when eps reaches it.
    """
    if starts is None:
        starts = draw_starts(config.seed, config.samples, stream=2)
    blocks = [starts[i:i + BLOCK] for i in range(0, starts.size, BLOCK)]
    n_max = max([config.n_max] + list(config.trend_checkpoints))
    res = _map_blocks(lambda b: _orbit_block(f, b, n_max, config.escape_R, omega, config.eps,
                                             config.trend_checkpoints), blocks, config.threads)
    esc = np.concatenate([r[0] for r in res], axis=1)
    curve = esc.mean(axis=1)[: config.n_max]
    frac0 = float(np.mean(np.abs(starts) > config.escape_R))
    acc = {}
    if omega is not None:
        for c in sorted(set(config.trend_checkpoints)):
            acc[str(c)] = float(np.mean(np.concatenate([r[1][c] for r in res])))
    return curve, frac0, acc


def escaping_probe(f, config: ProbeConfig) -> tuple[np.ndarray, float]:
    """Fraction of starts with |z_n| > R for n = 1..n_max, and the n = 0 value."""
    curve, frac0, _ = orbit_probe(f, config)
    return curve, frac0


def accumulation_probe(f, omega, config: ProbeConfig, starts=None) -> dict:
    """For each trend checkpoint n: fraction of starts whose last 20% of steps
    up to n stay within eps (chordal) of omega."""
    if omega is None or len(omega) == 0:
        raise ValueError("omega must be a nonempty set of cycle points")
    _, _, acc = orbit_probe(f, config, omega, starts)
    return acc


def run_probe(f, config: ProbeConfig, omega=None) -> ProbeReport:
    birk, spatial, verdicts = birkhoff_probe(f, config)
    curve, frac0, acc = orbit_probe(f, config, omega)
    cps = sorted(set(config.trend_checkpoints))
    trend = {}
    if len(cps) >= 2 and cps[-1] <= curve.size:
        trend["escape_nonincreasing"] = bool(curve[cps[-1] - 1] <= curve[cps[0] - 1])
    if acc and len(cps) >= 2:
        # accumulation compares the two largest checkpoints
        trend["accumulation_nonincreasing"] = bool(acc[str(cps[-1])] <= acc[str(cps[-2])])
    verdicts = {"birkhoff": verdicts, "trends": trend}
    return ProbeReport(asdict(config), config.seed, birk, spatial, curve.tolist(), frac0, acc, verdicts)


def curve_csv(curve, frac0: float | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "fraction"])
    if frac0 is not None:
        w.writerow([0, repr(float(frac0))])
    for n, v in enumerate(curve, start=1):
        w.writerow([n, repr(float(v))])
    return buf.getvalue()
