"""Acceptance criteria 1-11.

Each test records one PASS/FAIL line (printed immediately and repeated in
the terminal summary) and then asserts the same condition.
"""

import cmath
import json
import math
import time

import numpy as np
import pytest

from nevlab.cli import main
from nevlab.dynamics import check_pole_neighborhood_expansion, check_tract_expansion, sigma_maps
from nevlab.fits import fit_power_law
from nevlab.functions import ClosedFormTwoAV, OdeBacked, exp_iz_pair, normalized_germ
from nevlab.ode import FundamentalPairState, LiouvilleFrame, integrate_pair, liouville_F, wronskian_drift
from nevlab.probe import TEST_FUNCTIONS, ProbeConfig, birkhoff_probe, orbit_probe
from nevlab.roots import AnnularSector, inverse_derivative_residue, poles_in_region, preimages_in_region
from nevlab.schwarzian import SchwarzPolynomial, schwarzian_scanned

pytestmark = pytest.mark.acceptance

POLYS = {"1": (1,), "z": (0, 1), "z^2+1": (1, 0, 1)}


@pytest.fixture
def record(acceptance_lines):
    def rec(n: int, ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
        print(line)
        acceptance_lines[n] = line
        return ok
    return rec


@pytest.fixture(scope="module")
def pz():
    """P = z instance with its sector-0 poles and preimages of 1, timed."""
    t0 = time.perf_counter()
    f = OdeBacked(SchwarzPolynomial.of(0, 1), 2, 0.5, 1, 1)
    region = AnnularSector(0.5, 40, 0.0, 0.5)
    poles = poles_in_region(f, region)
    t_poles = time.perf_counter() - t0
    pre = preimages_in_region(f, 1, region)
    return {"f": f, "poles": poles, "pre": pre, "t_poles": t_poles}


@pytest.fixture(scope="module")
def p1():
    """P = 1 (N = 2) instance, sector 0."""
    f = OdeBacked(SchwarzPolynomial.of(1), 2, 0.5, 1, 1, r_max=70)
    region = AnnularSector(0.5, 66, 0.0, 0.5)
    return {"f": f, "pre": preimages_in_region(f, 1, region)}


def _positive(recs):
    return sorted((r for r in recs if r.j > 0), key=lambda r: r.j)


# -- 1 -----------------------------------------------------------------------------------------


def test_criterion_1_schwarzian_identity(record):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for coeffs in POLYS.values():
        P = SchwarzPolynomial.of(*coeffs)
        f = OdeBacked(P, 2, 0.5, 1, 1)
        # uniform in the disk |z| <= 4; poles have measure zero
        r = 4 * np.sqrt(rng.uniform(size=200))
        for z in r * np.exp(2j * math.pi * rng.uniform(size=200)):
            g, scale = normalized_germ(f, z)
            s = schwarzian_scanned(g, z, scale=min(1.0, scale))
            worst = max(worst, abs(s - 2 * P(z)) / (1 + abs(2 * P(z))))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-5 and dt <= 60
    record(1, ok, f"max |S(f)-2P|/(1+|2P|) = {worst:.2e} (<= 1e-5) over 600 points, {dt:.1f} s (<= 60 s)")
    assert ok


# -- 2 -----------------------------------------------------------------------------------------


def test_criterion_2_pole_asymptotics(record, pz):
    t0 = time.perf_counter()
    toy = ClosedFormTwoAV(2, 1)
    tp = [p for p in poles_in_region(toy, AnnularSector(1, 20.5 * math.pi, math.pi / 2, math.pi))]
    js = sorted(round(p.s.imag / math.pi) for p in tp)
    lattice = max(abs(p.s - round(p.s.imag / math.pi) * math.pi * 1j) for p in tp)
    dt = time.perf_counter() - t0 + pz["t_poles"]
    f, pos = pz["f"], _positive(pz["poles"])
    fit = fit_power_law([(p.j, abs(p.s)) for p in pos], 5, 40)
    dev = max(abs(f.frame.nearest(cmath.phase(p.s) % (2 * math.pi))[1]) for p in pos if p.j >= 10)
    ok = (js == [j for j in range(-20, 21) if j != 0] and lattice <= 1e-9
          and abs(fit.exponent - 2 / 3) <= 0.05 and dev <= 0.1 and dt <= 300)
    record(2, ok, f"toy lattice error {lattice:.1e} (<= 1e-9), P=z modulus exponent {fit.exponent:.4f} "
                  f"(2/3 +- 0.05), argument deviation {dev:.2e} (<= 0.1), {dt:.1f} s (<= 300 s)")
    assert ok


# -- 3 -----------------------------------------------------------------------------------------


def test_criterion_3_residue_asymptotics(record, pz):
    toy = ClosedFormTwoAV(2, 1)
    tp = poles_in_region(toy, AnnularSector(1, 20.5 * math.pi, math.pi / 2, math.pi))
    toy_err = max(abs(p.r - (toy.lam - toy.mu) / 2) for p in tp)
    f, pos = pz["f"], _positive(pz["poles"])
    fit = fit_power_law([(p.j, abs(p.r)) for p in pos], 5, 40)
    c = [p.r * cmath.sqrt(f.P(p.s)) for p in pos if 23 <= p.j <= 40]
    ref = c[len(c) // 2]
    spread = max(abs(v / ref - 1) for v in c)
    ok = toy_err <= 1e-8 and abs(fit.exponent + 1 / 3) <= 0.1 and spread <= 0.03
    record(3, ok, f"toy residue error {toy_err:.1e} (<= 1e-8), P=z residue exponent {fit.exponent:.4f} "
                  f"(-1/3 +- 0.1), r*sqrt(P) spread {spread:.2e} (<= 0.03)")
    assert ok


# -- 4 -----------------------------------------------------------------------------------------


def test_criterion_4_derivative_at_preimages(record, pz, p1):
    fit3 = fit_power_law([(p.j, abs(p.df)) for p in _positive(pz["pre"])], 5, 40)
    fit2 = fit_power_law([(p.j, abs(p.df)) for p in _positive(p1["pre"])], 5, 20)
    ident = 0.0
    for data in (pz, p1):
        for p in _positive(data["pre"])[4:12]:
            res = inverse_derivative_residue(data["f"], p.p, 1)
            ident = max(ident, abs(abs(p.df) * abs(res) - 1))
    ok = abs(fit2.exponent) <= 0.05 and abs(fit3.exponent - 1 / 3) <= 0.1 and ident <= 1e-8
    record(4, ok, f"N=2 exponent {fit2.exponent:.4f} (0 +- 0.05), N=3 exponent {fit3.exponent:.4f} "
                  f"(1/3 +- 0.1), |f'||res| identity error {ident:.1e} (<= 1e-8)")
    assert ok


# -- 5 -----------------------------------------------------------------------------------------


def test_criterion_5_wronskian_conservation(record):
    unit = FundamentalPairState(0, 1, 0, 0, 1)
    # length-50 paths along which the solutions oscillate
    runs = [((1,), [0, 25 + 25j, 50j], exp_iz_pair()), ((1,), [0, 50], unit), ((0, 1), [0, 50], unit),
            ((1, 0, 1), [0, 50], unit)]
    drift = max(wronskian_drift(s, integrate_pair(SchwarzPolynomial.of(*c), path, s)) for c, path, s in runs)
    ok = drift <= 1e-8
    record(5, ok, f"max relative Wronskian drift {drift:.1e} (<= 1e-8) on length-50 paths for P = 1, z, z^2+1")
    assert ok


# -- 6 -----------------------------------------------------------------------------------------


def test_criterion_6_liouville(record):
    worst_Z = 0.0
    bound = 0.0
    for coeffs in POLYS.values():
        P = SchwarzPolynomial.of(*coeffs)
        for k in range(P.N):
            fr = LiouvilleFrame(P, k)
            z = 100 * cmath.exp(1j * fr.theta)
            worst_Z = max(worst_Z, abs(fr.Z(z) / fr.leading_Z(z) - 1))
            for r in (10, 30, 100, 300):
                zr = r * cmath.exp(1j * fr.theta)
                bound = max(bound, abs(liouville_F(P, zr) * fr.Z(zr) ** 2))
    fr = LiouvilleFrame(SchwarzPolynomial.of(0, 1), 0)
    FZ2 = abs(liouville_F(fr.P, 100.0) * fr.Z(100.0) ** 2)
    ok = worst_Z <= 0.02 and abs(FZ2 / (5 / 36) - 1) <= 0.02 and bound < 1
    record(6, ok, f"max |Z N/(2 a^(1/2) z^(N/2)) - 1| = {worst_Z:.2e} (<= 0.02), P=z |F Z^2| = {FZ2:.5f} "
                  f"(5/36 +- 2%), max |F Z^2| on rays {bound:.3f}")
    assert ok


# -- 7 -----------------------------------------------------------------------------------------


def test_criterion_7_expansion(record, mixed, toy_k2):
    t0 = time.perf_counter()
    rng = np.random.default_rng(77)
    viol, samples = 0, []
    for f in (mixed.f, toy_k2):
        for sigma in sigma_maps(f):
            a = check_tract_expansion(sigma, 10_000, 10.0, rng)
            b = check_pole_neighborhood_expansion(sigma, J=range(5, 41), R=10.0, samples_per_j=300, rng=rng)
            viol += a.violations + b.violations
            samples += [a.samples, b.samples]
    dt = time.perf_counter() - t0
    ok = viol == 0 and min(samples) >= 10_000 and dt <= 300
    record(7, ok, f"{viol} violations over {len(samples)} sweeps of >= {min(samples)} samples, {dt:.1f} s (<= 300 s)")
    assert ok


# -- 8 -----------------------------------------------------------------------------------------


def test_criterion_8_certification(record, mixed):
    c = mixed.certificates()
    ok = c["K"] == 1 and c["N"] == 2 and c["newton_residual"] <= 1e-10 and c["multiplier"] > 1.05
    record(8, ok, f"K={c['K']} N={c['N']}, prepole residual {c['newton_residual']:.1e} (<= 1e-10), "
                  f"multiplier {c['multiplier']:.3f} (> 1.05)")
    assert ok


# -- 9 -----------------------------------------------------------------------------------------


def test_criterion_9_ergodicity_diagnostic(record, mixed):
    t0 = time.perf_counter()
    cfg = ProbeConfig(birkhoff_starts=200, birkhoff_steps=10_000, threads=8, seed=0)
    birk, spatial, verdicts = birkhoff_probe(mixed.f, cfg)
    dt = time.perf_counter() - t0
    parts = []
    for name in sorted(TEST_FUNCTIONS):
        se = spatial[name]["mc_standard_error"]
        off = abs(birk[name]["mean"] - spatial[name]["value"])
        if se == 0:  # constant function
            parts.append(f"{name} std={birk[name]['std']:.1e} offset={off:.1e}")
        else:
            parts.append(f"{name} std/SE={birk[name]['std'] / se:.2f} offset/SE={off / se:.2f}")
    ok = all(v["std_ok"] and v["mean_ok"] for v in verdicts.values()) and dt <= 600
    record(9, ok, "; ".join(parts) + f" (std < 5 SE, offset <= 3 SE); {birk['truncated']}/200 orbits "
                  f"ended by a pole hit; {dt:.1f} s (<= 600 s)")
    assert ok


# -- 10 ----------------------------------------------------------------------------------------


def test_criterion_10_trends(record, mixed):
    cfg = ProbeConfig(samples=10_000, n_max=1000, trend_checkpoints=(10, 100, 1000), threads=8, seed=0)
    curve, _, acc = orbit_probe(mixed.f, cfg, list(mixed.classes["mu"].cycle))
    ok = curve[999] <= curve[9] and acc["1000"] <= acc["100"]
    record(10, ok, f"escape fraction n=10: {curve[9]:.4f}, n=1000: {curve[999]:.4f}; "
                   f"accumulation n=100: {acc['100']:.4f}, n=1000: {acc['1000']:.4f}")
    assert ok


# -- 11 ----------------------------------------------------------------------------------------


def _run_all(root, configs):
    out = {}
    for sub, cfg in configs:
        d = root / sub
        d.mkdir(parents=True)
        p = d / "cfg.json"
        p.write_text(json.dumps(cfg), encoding="utf-8")
        t0 = time.perf_counter()
        code = main([sub, "--config", str(p), "--out", str(d / "out"), "--threads", "8"])
        out[sub] = (code, time.perf_counter() - t0, {q.name: q.read_bytes() for q in (d / "out").iterdir()})
    return out


def test_criterion_11_reproducibility(record, tmp_path):
    toy = {"family": "two_av", "lambda": 2, "mu": 1}
    configs = [
        ("verify-asymptotics", {"instance": toy}),
        ("classify", {"instance": {"family": "mixed"}}),
        ("render", {"instance": toy, "window": {"center": 0, "width": 8, "pixels": 1024, "n_max": 64}}),
        ("probe", {"instance": {"family": "mixed"}, "seed": 11,
                   "probe": {"samples": 2000, "n_max": 200, "birkhoff_starts": 50, "birkhoff_steps": 1000,
                             "trend_checkpoints": [10, 100, 200]}}),
    ]
    a = _run_all(tmp_path / "a", configs)
    b = _run_all(tmp_path / "b", configs)
    same = all(a[s][2] == b[s][2] for s, _ in configs)
    files = sum(len(a[s][2]) for s, _ in configs)
    t_render = min(a["render"][1], b["render"][1])
    codes = {s: a[s][0] for s, _ in configs}
    ok = same and t_render <= 60 and all(c == 0 for c in codes.values())
    record(11, ok, f"{files} output files byte-identical across runs: {same}; "
                   f"1024^2 render {t_render:.1f} s (<= 60 s, 8 threads); exit codes {codes}")
    assert ok
