"""Command-line entry point.

    nevlab {verify-asymptotics,classify,render,probe} --config RUN.json
           [--out DIR] [--seed N] [--threads N]

Every run is reproducible from its config file: reports embed the full
config (after the seed override) and contain no timestamps.  Exit codes:
0 success, 2 verification failure, 3 numerical diagnostic failure,
4 bad config.
"""

from __future__ import annotations

import argparse
import cmath
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .dynamics import (
    HUGE,
    POLE_TOL,
    NoInstanceFound,
    Prepole,
    RepellingLanding,
    Unresolved,
    class_to_dict,
    classify_singular_orbit,
    find_mixed_instance,
    refine_cycle,
)
from .fits import fit_power_law
from .functions import (
    AsymptoticValueError,
    ClosedFormTwoAV,
    OdeBacked,
    asymptotic_values,
    predicted_asymptotic_values,
    quotient_parts,
)
from .ode import FundamentalPairState, IntegrationError
from .probe import ProbeConfig, curve_csv, run_probe
from .roots import AnnularSector, RootSearchError, inverse_derivative_residue, poles_in_region, \
    preimages_in_region, write_records_csv
from .schwarzian import SchwarzPolynomial, _wrap
from .sphere import INF, chordal_distance, is_inf

EXIT_OK, EXIT_VERIFY, EXIT_NUMERIC, EXIT_CONFIG = 0, 2, 3, 4
SUBCOMMANDS = ("verify-asymptotics", "classify", "render", "probe")
MAX_PIXELS = 8192 * 8192


class ConfigError(ValueError):
    pass


# -- config -----------------------------------------------------------------------------------


DEFAULT_TOLERANCES = {
    "pole_position": 1e-9,  # closed form: |s_j - j pi i|
    "pole_spacing": 1e-9,  # closed form: consecutive |s_j| differ by pi
    "residue_value": 1e-8,  # closed form: r_j = (lam - mu) / 2
    "closed_form_exponent": 1e-6,  # closed form: residue and derivative fits are flat
    "pole_exponent": 0.05,
    "residue_exponent": 0.1,
    "derivative_exponent": None,  # 0.05 for N = 2, 0.1 otherwise
    "argument": 0.1,
    "residue_constant": 0.03,
    "identity": 1e-8,
}


@dataclass
class RunConfig:
    instance: dict
    subcommand: str | None = None
    region: dict | None = None
    window: dict | None = None
    tolerances: dict = field(default_factory=dict)
    fit_window: tuple = (5, 40)
    argument_from: int = 10
    preimage_target: object = None
    classify: dict = field(default_factory=dict)
    probe: dict = field(default_factory=dict)
    omega: list | None = None
    seed: int = 0
    threads: int = 1
    outputs: dict = field(default_factory=dict)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        if "instance" not in doc:
            raise ConfigError("config needs an 'instance'")
        cfg = cls(**doc)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            raw = Path(path).read_bytes()
        except OSError as e:
            raise ConfigError(f"cannot read config: {e}") from None
        try:
            return cls.from_json(raw.decode("utf-8"))
        except UnicodeDecodeError:
            raise ConfigError("config is not UTF-8") from None

    def validate(self):
        if self.subcommand is not None and self.subcommand not in SUBCOMMANDS:
            raise ConfigError(f"unknown subcommand {self.subcommand!r}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if not isinstance(self.threads, int) or self.threads < 1:
            raise ConfigError("threads must be a positive integer")
        bad = sorted(set(self.tolerances) - set(DEFAULT_TOLERANCES))
        if bad:
            raise ConfigError(f"unknown tolerances: {bad}")
        for k, v in self.tolerances.items():
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not v > 0 or not math.isfinite(v):
                raise ConfigError(f"tolerance {k} must be a positive number")
        if len(self.fit_window) != 2 or not 1 <= int(self.fit_window[0]) < int(self.fit_window[1]):
            raise ConfigError("fit_window must be [j_min, j_max] with 1 <= j_min < j_max")
        self.fit_window = (int(self.fit_window[0]), int(self.fit_window[1]))
        bad = sorted(set(self.outputs) - {"prefix"})
        if bad:
            raise ConfigError(f"unknown outputs keys: {bad}")
        if self.preimage_target is not None:
            _complex(self.preimage_target, "preimage_target")
        bad = sorted(set(self.classify) - {"n_max", "delta", "q_max", "cycle_tol"})
        if bad:
            raise ConfigError(f"unknown classify keys: {bad}")
        for k, v in self.classify.items():
            if not isinstance(v, (int, float)) or not v > 0:
                raise ConfigError(f"classify.{k} must be positive")
        if self.region is not None:
            _region(self.region, 0.0)
        if self.window is not None:
            _window(self.window)
        self.probe_config(self.threads)
        build_instance(self.instance, dry_run=True)
        if self.omega is not None:
            if not self.omega:
                raise ConfigError("omega must be a nonempty list of points")
            for p in self.omega:
                _complex(p, "omega point")

    def tolerance(self, key: str, N: int) -> float:
        v = self.tolerances.get(key, DEFAULT_TOLERANCES[key])
        if key == "derivative_exponent" and v is None:
            v = 0.05 if N == 2 else 0.1
        return float(v)

    def probe_config(self, threads: int) -> ProbeConfig:
        known = {f.name for f in fields(ProbeConfig)} - {"seed", "threads"}
        bad = sorted(set(self.probe) - known)
        if bad:
            raise ConfigError(f"unknown probe keys: {bad}")
        try:
            return ProbeConfig(**self.probe, seed=self.seed, threads=threads)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"probe: {e}") from None

    def as_dict(self) -> dict:
        return {f.name: _jsonable(getattr(self, f.name)) for f in fields(self)}


def _jsonable(x):
    if isinstance(x, tuple):
        return [_jsonable(v) for v in x]
    if isinstance(x, list):
        return [_jsonable(v) for v in x]
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    return x


def _complex(x, what: str) -> complex:
    """A number, or [re, im]."""
    if isinstance(x, bool):
        raise ConfigError(f"{what}: expected a number or [re, im]")
    if isinstance(x, (int, float)):
        return complex(x)
    if isinstance(x, list) and len(x) == 2 and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in x):
        return complex(x[0], x[1])
    raise ConfigError(f"{what}: expected a number or [re, im], got {x!r}")


def _point(x, what: str):
    return INF if x == "inf" else _complex(x, what)


def _region(d: dict, default_center: float) -> AnnularSector:
    bad = sorted(set(d) - {"r_min", "r_max", "theta_center", "half_width"})
    if bad:
        raise ConfigError(f"unknown region keys: {bad}")
    try:
        return AnnularSector(float(d.get("r_min", 0.5)), float(d["r_max"]),
                             float(d.get("theta_center", default_center)), float(d.get("half_width", 0.5)))
    except KeyError:
        raise ConfigError("region needs r_max") from None
    except (TypeError, ValueError) as e:
        raise ConfigError(f"region: {e}") from None


@dataclass(frozen=True)
class Window:
    center: complex
    width: float
    cols: int
    rows: int
    n_max: int = 64
    escape_R: float = 1e8
    persistence: int = 5

    @property
    def height(self) -> float:
        return self.width * self.rows / self.cols

    def row_points(self, i: int) -> np.ndarray:
        """Pixel centres of row i; row 0 is the top edge."""
        x = self.center.real - self.width / 2 + (np.arange(self.cols) + 0.5) * self.width / self.cols
        y = self.center.imag + self.height / 2 - (i + 0.5) * self.height / self.rows
        return x + 1j * y


def _window(d: dict) -> Window:
    bad = sorted(set(d) - {"center", "width", "pixels", "n_max", "escape_R", "persistence"})
    if bad:
        raise ConfigError(f"unknown window keys: {bad}")
    try:
        px = d["pixels"]
        cols, rows = (px, px) if isinstance(px, int) else (int(px[0]), int(px[1]))
        w = Window(_complex(d.get("center", 0), "window.center"), float(d["width"]), cols, rows,
                   int(d.get("n_max", 64)), float(d.get("escape_R", 1e8)), int(d.get("persistence", 5)))
    except KeyError as e:
        raise ConfigError(f"window needs {e.args[0]}") from None
    except (TypeError, ValueError, IndexError) as e:
        raise ConfigError(f"window: {e}") from None
    if w.cols < 1 or w.rows < 1 or w.cols * w.rows > MAX_PIXELS or max(w.cols, w.rows) > 8192:
        raise ConfigError("pixel dimensions must be positive and at most 8192 x 8192")
    if not (w.width > 0 and w.escape_R > 0 and w.n_max >= 1 and w.persistence >= 1):
        raise ConfigError("window width, escape_R, n_max and persistence must be positive")
    return w


# -- instances --------------------------------------------------------------------------------


def build_instance(spec: dict, dry_run: bool = False):
    """Function described by an instance spec.

    {"family": "two_av", "lambda": z, "mu": z}
    {"family": "ode", "P": [c0, c1, ...], "A": z, "B": z, "C": z, "D": z,
     "base": "principal" | {"z": z, "w1": z, "dw1": z, "w2": z, "dw2": z},
     "sector": k, "r_max": r}
    {"family": "mixed"}  (the certified landing instance)
    """
    if not isinstance(spec, dict):
        raise ConfigError("instance must be an object")
    fam = spec.get("family")
    allowed = {
        "two_av": {"family", "lambda", "mu"},
        "ode": {"family", "P", "A", "B", "C", "D", "base", "sector", "r_max"},
        "mixed": {"family"},
    }
    if fam not in allowed:
        raise ConfigError(f"instance.family must be one of {sorted(allowed)}")
    bad = sorted(set(spec) - allowed[fam])
    if bad:
        raise ConfigError(f"unknown instance keys for {fam}: {bad}")
    if fam == "two_av":
        try:
            lam, mu = _complex(spec["lambda"], "lambda"), _complex(spec["mu"], "mu")
        except KeyError as e:
            raise ConfigError(f"two_av needs {e.args[0]}") from None
        if lam == mu:
            raise ConfigError("lambda == mu gives a constant function")
        return None if dry_run else ClosedFormTwoAV(lam, mu)
    if fam == "mixed":
        return None if dry_run else find_mixed_instance().f
    try:
        coeffs = [_complex(c, "P coefficient") for c in spec["P"]]
        A, B, C, D = (_complex(spec[k], k) for k in "ABCD")
    except KeyError as e:
        raise ConfigError(f"ode needs {e.args[0]}") from None
    except TypeError:
        raise ConfigError("P must be a list of coefficients") from None
    try:
        P = SchwarzPolynomial.of(*coeffs)
    except ValueError as e:
        raise ConfigError(f"P: {e}") from None
    if A * D - B * C == 0:
        raise ConfigError("AD - BC = 0 gives a constant function")
    base = spec.get("base", "principal")
    if base == "principal":
        base_state = None
    elif isinstance(base, dict):
        keys = ("z", "w1", "dw1", "w2", "dw2")
        if set(base) != set(keys):
            raise ConfigError(f"explicit base needs exactly the keys {list(keys)}")
        base_state = FundamentalPairState(*(_complex(base[k], f"base.{k}") for k in keys))
        if base_state.wronskian() == 0:
            raise ConfigError("explicit base data has zero Wronskian")
    else:
        raise ConfigError("base must be 'principal' or an object of initial data")
    sector = spec.get("sector", 0)
    r_max = spec.get("r_max", 50.0)
    if not isinstance(sector, int) or not (isinstance(r_max, (int, float)) and r_max > 0):
        raise ConfigError("sector must be an integer and r_max positive")
    if dry_run:
        return None
    return OdeBacked(P, A, B, C, D, base=base_state, sector=sector, r_max=float(r_max))


# -- verify-asymptotics ----------------------------------------------------------------------


def _check(checks: list, name: str, value: float, target: float, tol: float, **extra) -> bool:
    ok = bool(abs(value - target) <= tol)
    checks.append({"name": name, "value": value, "target": target, "tolerance": tol, "pass": ok, **extra})
    return ok


def _default_target(f, avs) -> complex:
    for z0 in (1 + 0j, 0.3 + 0.2j, -1 + 0j, 2j):
        if all(is_inf(a) or abs(a - z0) > 0.1 for a in avs):
            return z0
    return 0.1234 + 0.4321j


def default_region(f, sector: int = 0, fit_j_max: int = 40) -> AnnularSector:
    """Full annulus for the closed form; a narrow sector about a critical ray otherwise."""
    if isinstance(f, ClosedFormTwoAV):
        return AnnularSector(1.0, (fit_j_max + 0.5) * math.pi, math.pi / 2, math.pi)
    theta = f.frame.angles[sector % len(f.frame.angles)]
    return AnnularSector(0.5, f.basis.r_max - 2.0, float(theta), 0.5)


def verify_asymptotics(f, cfg: RunConfig) -> dict:
    """Pole, residue and preimage tables, power-law fits and per-tolerance checks."""
    N = len(f.frame.angles)
    j_lo, j_hi = cfg.fit_window
    if cfg.region is None:
        region = default_region(f, getattr(f, "sector", 0), j_hi)
    else:
        centre = math.pi / 2 if isinstance(f, ClosedFormTwoAV) else f.frame.angles[f.sector % N]
        region = _region(cfg.region, float(centre))
    if isinstance(f, ClosedFormTwoAV):
        avs = [f.lam, f.mu]
    else:
        avs = list(predicted_asymptotic_values(f).values())
    z0 = _complex(cfg.preimage_target, "preimage_target") if cfg.preimage_target is not None else _default_target(f, avs)
    poles = poles_in_region(f, region)
    pre = preimages_in_region(f, z0, region)
    checks: list = []
    fits = {}
    pos = sorted((p for p in poles if p.j > 0), key=lambda p: p.j)
    pos_pre = sorted((p for p in pre if p.j > 0), key=lambda p: p.j)

    def fit(name, pts, target, tol):
        try:
            ft = fit_power_law(pts, j_lo, j_hi)
        except ValueError as e:
            checks.append({"name": name, "pass": False, "error": str(e)})
            return None
        fits[name] = {"exponent": ft.exponent, "constant": ft.constant, "residual": ft.residual,
                      "window": list(ft.window)}
        _check(checks, name, ft.exponent, target, tol)
        return ft

    fit("pole_modulus_exponent", [(p.j, abs(p.s)) for p in pos], 2 / N, cfg.tolerance("pole_exponent", N))
    if isinstance(f, ClosedFormTwoAV):
        fit("residue_exponent", [(p.j, abs(p.r)) for p in pos], 0.0, cfg.tolerance("closed_form_exponent", N))
    else:
        fit("residue_exponent", [(p.j, abs(p.r)) for p in pos], -(N - 2) / N, cfg.tolerance("residue_exponent", N))
    fit("derivative_at_preimage_exponent", [(p.j, abs(p.df)) for p in pos_pre], (N - 2) / N,
        cfg.tolerance("derivative_exponent", N))

    # pole arguments against the nearest critical direction
    far = [p for p in pos if p.j >= cfg.argument_from]
    if far:
        dev = max(abs(f.frame.nearest(float(np.angle(p.s)) % (2 * math.pi))[1]) for p in far)
        _check(checks, "pole_argument_deviation", dev, 0.0, cfg.tolerance("argument", N))

    # r_j P(s_j)^(1/2) on the upper half of the fit window, up to the sqrt branch
    tail = [p for p in pos if (j_lo + j_hi) / 2 <= p.j <= j_hi]
    if len(tail) >= 2:
        c = [p.r * cmath.sqrt(complex(f.P(p.s))) for p in tail]
        ref = c[len(c) // 2]
        c = [v if abs(v - ref) <= abs(v + ref) else -v for v in c]
        spread = max(abs(v / ref - 1) for v in c)
        _check(checks, "residue_constant_spread", spread, 0.0, cfg.tolerance("residue_constant", N))

    # |f'(p)| |res(1/(f - z0), p)| = 1
    ident = [p for p in pos_pre if j_lo <= p.j <= j_hi][:8]
    if ident:
        dev = max(abs(abs(p.df * inverse_derivative_residue(f, p.p, z0)) - 1) for p in ident)
        _check(checks, "inverse_residue_identity", dev, 0.0, cfg.tolerance("identity", N))

    if isinstance(f, ClosedFormTwoAV):
        near = [p for p in poles if abs(p.j) <= 20 and p.s != 0]
        dev = max(abs(p.s - round(p.s.imag / math.pi) * math.pi * 1j) for p in near)
        _check(checks, "pole_position_vs_lattice", dev, 0.0, cfg.tolerance("pole_position", N))
        r_exp = (f.lam - f.mu) / 2
        dev = max(abs(p.r - r_exp) for p in near)
        _check(checks, "residue_vs_closed_form", dev, 0.0, cfg.tolerance("residue_value", N))
        mods = sorted(abs(p.s) for p in pos if p.j <= 20)
        dev = max(abs(b - a - math.pi) for a, b in zip(mods, mods[1:]))
        _check(checks, "pole_spacing_vs_pi", dev, 0.0, cfg.tolerance("pole_spacing", N))
    return {
        "N": N,
        "region": {"r_min": region.r_min, "r_max": region.r_max, "theta_center": region.theta_center,
                   "half_width": region.half_width},
        "preimage_target": [z0.real, z0.imag],
        "poles_found": len(poles),
        "preimages_found": len(pre),
        "fits": fits,
        "checks": checks,
        "pass": all(c["pass"] for c in checks),
        "_poles": poles,
        "_preimages": pre,
    }


def cmd_verify_asymptotics(cfg: RunConfig, out: Path) -> int:
    f = build_instance(cfg.instance)
    summary = verify_asymptotics(f, cfg)
    pfx = cfg.outputs.get("prefix", "")
    write_records_csv(summary.pop("_poles"), out / f"{pfx}poles.csv")
    write_records_csv(summary.pop("_preimages"), out / f"{pfx}preimages.csv")
    _write_json(out / f"{pfx}verify.json", {"config": cfg.as_dict(), "seed": cfg.seed, **summary})
    for c in summary["checks"]:
        print(f"{'PASS' if c['pass'] else 'FAIL'} {c['name']}: {c.get('value', c.get('error'))}")
    return EXIT_OK if summary["pass"] else EXIT_VERIFY


# -- classify -----------------------------------------------------------------------------


def classify_instance(f, cfg: RunConfig) -> dict:
    kw = dict(cfg.classify)
    if "n_max" in kw:
        kw["n_max"] = int(kw["n_max"])
    if "q_max" in kw:
        kw["q_max"] = int(kw["q_max"])
    avs = asymptotic_values(f)
    rows = []
    for av in avs:
        c = classify_singular_orbit(f, av.value, **kw)
        row = {"value": "inf" if is_inf(av.value) else [av.value.real, av.value.imag], "tract": av.tract,
               "classification": class_to_dict(c)}
        if isinstance(c, RepellingLanding):
            row["multiplier"] = c.multiplier
        rows.append((c, row))
    K = sum(isinstance(c, Prepole) for c, _ in rows)
    N = len(rows)
    unresolved = any(isinstance(c, Unresolved) for c, _ in rows)
    landing = all(isinstance(c, (Prepole, RepellingLanding)) for c, _ in rows)
    return {
        "K": K,
        "N": N,
        "asymptotic_values": [r for _, r in rows],
        "hypotheses_satisfied": bool(0 < K < N and landing),
        "conjecture_regime": K == N,
        "unresolved": unresolved,
    }


def cmd_classify(cfg: RunConfig, out: Path) -> int:
    report = {"config": cfg.as_dict(), "seed": cfg.seed}
    if cfg.instance.get("family") == "mixed":
        m = find_mixed_instance()
        report["instance_certificates"] = m.certificates()
        f = m.f
    else:
        f = build_instance(cfg.instance)
    res = classify_instance(f, cfg)
    report.update(res)
    _write_json(out / f"{cfg.outputs.get('prefix', '')}classify.json", report)
    print(f"K={res['K']} N={res['N']}" + (" (conjecture regime: every asymptotic value is a prepole)"
                                          if res["conjecture_regime"] else ""))
    print(json.dumps(res["asymptotic_values"], sort_keys=True))
    return EXIT_NUMERIC if res["unresolved"] else EXIT_OK


# -- render -------------------------------------------------------------------------------


def _render_row(f, w: Window, i: int) -> np.ndarray:
    """Termination kind and step per pixel: kind 0 pole, 1 escaped, 2 neither."""
    z = w.row_points(i)
    m = z.size
    alive = np.ones(m, dtype=bool)
    kind = np.full(m, 2, dtype=np.int8)
    step = np.full(m, w.n_max, dtype=np.int32)
    above = np.zeros(m, dtype=np.int32)
    for n in range(1, w.n_max + 1):
        idx = np.nonzero(alive)[0]
        if idx.size == 0:
            break
        zi = z[idx]
        wi = f.values(zi)
        hit = ~np.isfinite(wi)
        check = np.isfinite(wi) & (np.abs(wi) > HUGE)
        if check.any():
            s = zi[check].copy()
            for _ in range(8):
                _, den, _, dden = quotient_parts(f, s)
                s = s - den / dden
            hit[np.nonzero(check)[0][np.abs(s - zi[check]) <= POLE_TOL]] = True
        z[idx[~hit]] = wi[~hit]
        a = np.where(np.abs(z[idx]) > w.escape_R, above[idx] + 1, 0)
        above[idx] = a
        esc = ~hit & (a >= w.persistence)
        for mask, k in ((hit, 0), (esc, 1)):
            kind[idx[mask]] = k
            step[idx[mask]] = n
            alive[idx[mask]] = False
    return _colour(kind, step, z, w.n_max)


def _colour(kind, step, z, n_max) -> np.ndarray:
    t = np.clip(step / max(n_max, 1), 0.0, 1.0)
    rgb = np.zeros((kind.size, 3), dtype=np.uint8)
    shade = (255 * (1 - t) ** 0.5).astype(np.uint8)
    pole = kind == 0
    rgb[pole, 0] = 255
    rgb[pole, 1] = shade[pole]
    esc = kind == 1
    rgb[esc, 2] = 255
    rgb[esc, 1] = shade[esc]
    rest = kind == 2
    # bounded orbits: grey level from the final point's argument
    with np.errstate(invalid="ignore"):
        g = (40 + 80 * (np.angle(z[rest]) / (2 * np.pi) + 0.5)).astype(np.uint8)
    rgb[rest] = g[:, None]
    return rgb


def render(f, w: Window, threads: int = 1) -> bytes:
    """Binary PPM (P6, 8-bit, row-major, top-left origin)."""
    rows = range(w.rows)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            data = list(ex.map(lambda i: _render_row(f, w, i), rows))
    else:
        data = [_render_row(f, w, i) for i in rows]
    header = f"P6\n{w.cols} {w.rows}\n255\n".encode("ascii")
    return header + np.concatenate(data).tobytes()


def cmd_render(cfg: RunConfig, out: Path, threads: int) -> int:
    if cfg.window is None:
        raise ConfigError("render needs a window")
    f = build_instance(cfg.instance)
    img = render(f, _window(cfg.window), threads)
    pfx = cfg.outputs.get("prefix", "")
    (out / f"{pfx}render.ppm").write_bytes(img)
    _write_json(out / f"{pfx}render.json", {"config": cfg.as_dict(), "seed": cfg.seed, "bytes": len(img)})
    return EXIT_OK


# -- probe --------------------------------------------------------------------------------


def certified_omega(f, points, tol: float = 1e-9):
    """The given points as a repelling cycle of f, refined by Newton; None if they are not one."""
    pts = [complex(p) for p in points]
    q = len(pts)
    z = refine_cycle(f, pts[0], q)
    if z is None or abs(z - pts[0]) > 1e-6 * max(1.0, abs(z)):
        return None
    cyc = [z]
    for _ in range(q - 1):
        cyc.append(complex(f.values(np.array([cyc[-1]]))[0]))
    if any(chordal_distance(a, b) > 1e-6 for a, b in zip(cyc, pts)):
        return None
    back = complex(f.values(np.array([cyc[-1]]))[0])
    if chordal_distance(back, cyc[0]) > tol:
        return None
    return cyc


def cmd_probe(cfg: RunConfig, out: Path, threads: int) -> int:
    pcfg = cfg.probe_config(threads)
    cert = None
    if cfg.instance.get("family") == "mixed":
        m = find_mixed_instance()
        f, omega = m.f, list(m.classes["mu"].cycle)
        cert = m.certificates()
    else:
        f = build_instance(cfg.instance)
        omega = None
    if cfg.omega is not None:
        omega = certified_omega(f, [_complex(p, "omega point") for p in cfg.omega])
        if omega is None:
            print("omega is not a cycle of the instance", file=sys.stderr)
            return EXIT_NUMERIC
    rep = run_probe(f, pcfg, omega)
    doc = json.loads(rep.to_json())
    # the report echoes the run config without the thread count, so it is
    # byte-identical whatever parallelism was used
    conf = cfg.as_dict()
    conf.pop("threads")
    doc["config"] = conf
    doc["probe_config"] = _probe_dict(pcfg)
    doc["omega"] = None if omega is None else [[p.real, p.imag] for p in omega]
    if cert is not None:
        doc["instance_certificates"] = cert
    pfx = cfg.outputs.get("prefix", "")
    _write_json(out / f"{pfx}probe.json", doc)
    (out / f"{pfx}escape_curve.csv").write_text(curve_csv(rep.escape_curve, rep.escape_fraction_start))
    for name, v in rep.verdicts["birkhoff"].items():
        print(f"{name}: std_ok={v['std_ok']} mean_ok={v['mean_ok']}")
    for name, v in rep.verdicts["trends"].items():
        print(f"{name}: {v}")
    return EXIT_OK


def _probe_dict(p: ProbeConfig) -> dict:
    d = {f.name: _jsonable(getattr(p, f.name)) for f in fields(p)}
    d.pop("threads")
    return d


# -- main ---------------------------------------------------------------------------------


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, sort_keys=True, indent=1, default=_json_default) + "\n", encoding="utf-8")


def _json_default(x):
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, (np.integer, np.floating)):
        return x.item()
    if is_inf(x):
        return "inf"
    raise TypeError(f"not serialisable: {type(x)}")


def _threads(arg: int | None, cfg: RunConfig) -> int:
    if arg is not None:
        return arg
    env = os.environ.get("NEVLAB_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError("NEVLAB_THREADS must be a positive integer") from None
        if n < 1:
            raise ConfigError("NEVLAB_THREADS must be a positive integer")
        return n
    return cfg.threads


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nevlab", description=__doc__.split("\n\n")[0])
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", required=True, help="UTF-8 JSON run config")
    ap.add_argument("--out", default=".", help="output directory (created if missing)")
    ap.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    ap.add_argument("--threads", type=int, default=None, help="worker threads (fallback: NEVLAB_THREADS)")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    try:
        cfg = RunConfig.load(args.config)
        if cfg.subcommand is not None and cfg.subcommand != args.subcommand:
            raise ConfigError(f"config is for {cfg.subcommand!r}, not {args.subcommand!r}")
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg.seed = args.seed
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be positive")
        threads = _threads(args.threads, cfg)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.subcommand == "verify-asymptotics":
            return cmd_verify_asymptotics(cfg, out)
        if args.subcommand == "classify":
            return cmd_classify(cfg, out)
        if args.subcommand == "render":
            return cmd_render(cfg, out, threads)
        return cmd_probe(cfg, out, threads)
    except ConfigError as e:
        print(f"bad config: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (RootSearchError, IntegrationError, AsymptoticValueError, NoInstanceFound) as e:
        print(f"numerical failure: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
