"""Command-line drivers: ``pressure``, ``synth``, ``spectrum``, ``dims`` and ``verify``.

Every run is described by a JSON config (a named fixture plus overrides);
the effective config is echoed into each JSON artifact and into
``config.json`` next to the outputs.  Outputs are written atomically and
contain no timestamps, so identical configs give byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import math
import os
import re
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .geometry import (default_radii, default_scales, energy_scan, graph_box_dimension,
                       median_exponent, range_box_dimension, verify_theorem)
from .leaders import default_window, leader_pyramid, legendre_spectrum, scaling_function
from .symbolic import (EmptySubshiftError, Sft, admissible_indices, build_sft, golden_mean,
                       index_word, transitive_components, zero_avoiding_sft)
from .synthesis import (PerturbationLaw, build_coefficients, builtin_wavelet, perturb,
                        synthesize, zero_clearance)
from .thermo import (GibbsModel, Potential, pressure, restricted_exponents, tau,
                     wavelet_scaling_prediction)

log = logging.getLogger("mwlab")


# ---------------------------------------------------------------------------
# configuration

FIXTURES = {
    "monofractal": {"potential": "zero", "subshift": "full", "s0": 0.5, "p0": 4.0,
                    "q_list": [0.0]},
    "bernoulli": {"potential": "bernoulli(0.25)", "subshift": "full", "s0": 0.6, "p0": 2.0,
                  "q_list": [0.0, 1.0, 2.0]},
    "golden": {"potential": "zero", "subshift": "golden", "s0": 0.5, "p0": 4.0,
               "q_list": [0.0]},
    "zero": {"potential": "zero", "subshift": "full", "s0": 0.5, "p0": 4.0,
             "coefficient_scale": 0.0, "q_list": [0.0]},
}


@dataclass
class RunConfig:
    fixture: str = "monofractal"
    potential: object = "zero"
    subshift: str = "full"
    wavelet: str = "gauss2"
    s0: float = 0.5
    p0: float = 4.0
    k: int = 8
    k_sweep: list = field(default_factory=lambda: [3, 4, 5, 6, 7, 8])
    J: int = 14
    G: int = 14
    seed: int = 0
    coefficient_scale: float = 1.0
    sign_rule: str = "rademacherFromSeed"
    perturbation: str = "uniform"
    perturbation_sigma: float = 0.25
    perturbation_clip: float = 2.0
    perturbed: bool = True
    q_grid: dict = field(default_factory=lambda: {"min": -5.0, "max": 5.0, "step": 0.25})
    scaling_q: dict = field(default_factory=lambda: {"min": -3.0, "max": 4.0, "step": 0.25})
    q_list: list = field(default_factory=lambda: [0.0])
    h_grid: dict = field(default_factory=lambda: {"min": 0.0, "max": 1.5, "step": 0.01})
    leader_window: list | None = None
    box_scales: list | None = None
    cover_level: int = 10
    h_tol: float = 0.1
    eps: float = 0.1
    energy: bool = True
    tolerances: dict = field(default_factory=lambda: {"h": 0.1, "xi_star": 0.15,
                                                      "dG": 0.15, "dR": 0.1})

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


class ConfigError(ValueError):
    pass


def _line_of(text: str, key: str) -> int | None:
    for i, line in enumerate(text.splitlines(), 1):
        if re.search(rf'"{re.escape(key)}"\s*:', line):
            return i
    return None


def _fail(msg: str, text: str | None, key: str | None, src: str) -> None:
    line = _line_of(text, key) if (text and key) else None
    where = f"{src}:{line}" if line else src
    raise ConfigError(f"{where}: {msg}")


def load_config(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Fixture defaults, then the JSON file, then command-line overrides."""
    text, raw, src = None, {}, "<defaults>"
    if path:
        src = str(path)
        text = Path(path).read_text()
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{src}:{e.lineno}: {e.msg}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{src}:1: config must be a JSON object")
    raw = dict(raw, **(overrides or {}))
    fixture = raw.get("fixture", "monofractal")
    if fixture not in FIXTURES:
        _fail(f"unknown fixture {fixture!r}", text, "fixture", src)
    merged = dict(FIXTURES[fixture], **raw)
    merged["fixture"] = fixture
    names = {f.name for f in dataclasses.fields(RunConfig)}
    for key in merged:
        if key not in names:
            _fail(f"unknown config field {key!r}", text, key, src)
    cfg = RunConfig(**merged)
    _validate(cfg, text, src)
    return cfg


def _validate(cfg: RunConfig, text, src) -> None:
    if not (cfg.s0 > 0 and cfg.p0 > 0 and cfg.s0 - 1.0 / cfg.p0 > 0):
        _fail("need s0 > 0, p0 > 0 and s0 - 1/p0 > 0", text, "s0", src)
    if cfg.J > cfg.G:
        _fail("J must not exceed G", text, "J", src)
    if cfg.J < 4:
        _fail("J must be at least 4", text, "J", src)
    if cfg.k < 2 or any(k < 2 for k in cfg.k_sweep):
        _fail("k must be >= 2", text, "k", src)
    if cfg.subshift not in ("full", "golden"):
        _fail(f"unknown subshift {cfg.subshift!r}", text, "subshift", src)
    for name in ("q_grid", "scaling_q", "h_grid"):
        try:
            if _grid(getattr(cfg, name)).size == 0:
                raise ValueError
        except (ValueError, TypeError, KeyError):
            _fail(f"{name} must be a nonempty list or a {{min, max, step}} object", text, name, src)
    if not cfg.q_list:
        _fail("q_list must be nonempty", text, "q_list", src)
    if cfg.cover_level > cfg.J - 2:
        _fail("cover_level must be at most J - 2", text, "cover_level", src)
    try:
        make_potential(cfg.potential)
    except ValueError as e:
        _fail(str(e), text, "potential", src)


def _grid(spec) -> np.ndarray:
    if isinstance(spec, dict):
        lo, hi, step = float(spec["min"]), float(spec["max"]), float(spec["step"])
        if step <= 0 or hi < lo:
            raise ValueError("bad grid")
        n = int(round((hi - lo) / step))
        return np.round(lo + step * np.arange(n + 1), 12)
    return np.asarray(sorted(float(v) for v in spec))


def make_potential(spec) -> Potential:
    if isinstance(spec, dict):
        return Potential.from_table(spec)
    if spec == "zero":
        return Potential.constant(0.0)
    m = re.fullmatch(r"bernoulli\(([0-9.eE+-]+)\)", str(spec))
    if m:
        return Potential.bernoulli(float(m.group(1)))
    raise ValueError(f"unknown potential {spec!r}")


def make_subshift(name: str) -> Sft:
    return golden_mean() if name == "golden" else Sft.full(2)


# ---------------------------------------------------------------------------
# output


def atomic_write(path: Path, data: bytes | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (bool, np.bool_)):
        return bool(o)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, (float, np.floating)):
        f = float(o)
        return f if math.isfinite(f) else ("inf" if f > 0 else "-inf" if f < 0 else "nan")
    return o


def dump_json(obj: dict) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def report(cfg: RunConfig, command: str, body: dict) -> str:
    return dump_json({"schema": 1, "command": command, "version": __version__,
                      "config": cfg.to_dict(), **body})


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# pipeline pieces


@dataclass
class Pipeline:
    cfg: RunConfig
    threads: int = 1

    def __post_init__(self):
        self.phi = make_potential(self.cfg.potential)
        self.full = make_subshift(self.cfg.subshift)
        self.psi = builtin_wavelet(self.cfg.wavelet, table_depth=self.cfg.G)
        self._cache = {}

    def avoid(self, k: int) -> Sft:
        key = ("avoid", k)
        if key not in self._cache:
            x = zero_avoiding_sft(self.psi.zeros(), k)
            if self.cfg.subshift != "full":
                x = _intersect(x, self.full)
            self._cache[key] = x
        return self._cache[key]

    @property
    def gm(self) -> GibbsModel:
        if "gm" not in self._cache:
            self._cache["gm"] = GibbsModel(self.full, self.phi, 1.0)
        return self._cache["gm"]

    def tree(self):
        if "tree" not in self._cache:
            c = self.cfg
            t = build_coefficients(self.gm, c.s0, c.p0, c.J, c.sign_rule, c.seed,
                                   scale=c.coefficient_scale)
            law = PerturbationLaw(c.perturbation, c.perturbation_sigma, c.perturbation_clip)
            self._cache["tree"] = perturb(t, law, c.seed)
        return self._cache["tree"]

    def series(self):
        if "series" not in self._cache:
            self._cache["series"] = synthesize(self.tree(), self.psi, self.cfg.G,
                                               self.cfg.perturbed, self.cfg.fixture)
        return self._cache["series"]

    def pyramid(self):
        if "pyr" not in self._cache:
            self._cache["pyr"] = leader_pyramid(self.tree(), self.cfg.perturbed)
        return self._cache["pyr"]

    def map(self, fn, items):
        if self.threads > 1:
            with ThreadPoolExecutor(self.threads) as ex:
                return list(ex.map(fn, items))
        return [fn(i) for i in items]


def _intersect(a: Sft, b: Sft) -> Sft:
    """Intersection of two SFTs, lifted to the larger depth."""
    k = max(a.k, b.k)
    ok = np.zeros(2**k, dtype=bool)
    ok[admissible_indices(a, k)] = True
    okb = np.zeros(2**k, dtype=bool)
    okb[admissible_indices(b, k)] = True
    bad = [index_word(i, k) for i in np.nonzero(~(ok & okb))[0]]
    comps = transitive_components(build_sft(bad, k))
    if not comps:
        raise EmptySubshiftError("empty subshift")
    return comps[0]


# ---------------------------------------------------------------------------
# commands


def cmd_pressure(cfg: RunConfig, out: Path, threads: int = 1) -> int:
    pl = Pipeline(cfg, threads)
    q = _grid(cfg.q_grid)
    files = {}

    def curves(x):
        p = np.array([pressure(x, pl.phi, qi) for qi in q])
        t = tau(x, pl.phi, q).values
        return p, t

    targets = [("full", pl.full)] + [(f"k{k}", pl.avoid(k)) for k in cfg.k_sweep]
    results = pl.map(lambda item: curves(item[1]), targets)
    for (name, _), (p, t) in zip(targets, results):
        files[f"pressure_{name}.csv"] = csv_text(
            ("grid", "value", "kind"), [(a, b, "pressure") for a, b in zip(q, p)])
        files[f"tau_{name}.csv"] = csv_text(
            ("grid", "value", "kind"), [(a, b, "tau") for a, b in zip(q, t)])
    rows = []
    p_full = results[0][0]
    for (name, x), (p, _) in zip(targets[1:], results[1:]):
        k = int(name[1:])
        for qi, pf, pk in zip(q, p_full, p):
            rows.append((k, float(qi), pf, pk, pf - pk))
    files["convergence.csv"] = csv_text(("k", "q", "pressure_full", "pressure_k", "gap"), rows)
    d0 = {}
    for k in cfg.k_sweep:
        rx = restricted_exponents(pl.full, pl.avoid(k), pl.phi, 0.0, cfg.s0, cfg.p0)
        d0[str(k)] = {"alphaK": rx.alphaK, "dK": rx.dK, "hK": rx.hK}
    files["pressure.json"] = report(cfg, "pressure", {"restricted_q0": d0,
                                                       "files": sorted(files)})
    _write_all(out, cfg, files)
    return 0


def cmd_synth(cfg: RunConfig, out: Path, threads: int = 1) -> int:
    pl = Pipeline(cfg, threads)
    s = pl.series()
    try:
        clearance = zero_clearance(pl.psi, pl.avoid(cfg.k), cfg.k, min(cfg.k + 6, cfg.G))
    except ValueError as e:
        log.warning("clearance: %s", e)
        clearance = 0.0
    stride = max(1, (s.samples.size - 1) // 1024)
    files = {
        "series.mwl": s.to_bytes(),
        "series_preview.csv": csv_text(("x", "value"),
                                       zip(s.x[::stride], s.samples[::stride])),
    }
    files["synth.json"] = report(cfg, "synth", {
        "sha256": s.sha256(), "samples": int(s.samples.size), "G": s.G, "J": s.J,
        "seed": s.seed, "tail_bound": s.tail_bound, "clearance": clearance,
        "wavelet": pl.psi.kind})
    _write_all(out, cfg, files)
    return 0


def cmd_spectrum(cfg: RunConfig, out: Path, threads: int = 1) -> int:
    pl = Pipeline(cfg, threads)
    q = _grid(cfg.scaling_q)
    win = tuple(cfg.leader_window) if cfg.leader_window else default_window(cfg.J)
    est = scaling_function(pl.pyramid(), q, win)
    pred = wavelet_scaling_prediction(pl.full, pl.phi, cfg.s0, cfg.p0, q)
    spec = legendre_spectrum(est, _grid(cfg.h_grid))
    files = {
        "scaling.csv": csv_text(("q", "xi_hat", "stderr", "r2"),
                                zip(est.q, est.xi_hat, est.stderr, est.r2)),
        "prediction.csv": csv_text(("grid", "value", "kind"),
                                   [(a, b, "xi") for a, b in zip(pred.grid, pred.values)]),
        "spectrum.csv": csv_text(("h", "xi_star"), zip(spec.grid, spec.values)),
    }
    files["spectrum.json"] = report(cfg, "spectrum", {
        "window": list(win), "max_gap": float(np.max(np.abs(est.xi_hat - pred.values))),
        "concavify_change": spec.flags.get("concavify_change")})
    _write_all(out, cfg, files)
    return 0


def cmd_dims(cfg: RunConfig, out: Path, threads: int = 1) -> int:
    pl = Pipeline(cfg, threads)
    s = pl.series()
    scales = cfg.box_scales or default_scales(cfg.G)
    g = graph_box_dimension(s, None, scales)
    r = range_box_dimension(s, None, scales)
    body = {"graph": dataclasses.asdict(g), "range": dataclasses.asdict(r),
            "median_exponent": median_exponent(s, seed=cfg.seed, radii=default_radii(cfg.G))}
    if cfg.energy:
        scans = pl.map(lambda kind: energy_scan(s, pl.gm.level_masses, kind), ["graph", "range"])
        body["energy"] = {sc.kernel: dataclasses.asdict(sc) for sc in scans}
    files = {
        "box_counts.csv": csv_text(("j", "graph_count", "range_count"),
                                   zip(scales, g.counts, r.counts)),
        "dims.json": report(cfg, "dims", body),
    }
    _write_all(out, cfg, files)
    return 0


def cmd_verify(cfg: RunConfig, out: Path, threads: int = 1) -> int:
    pl = Pipeline(cfg, threads)
    stage = "synthesis"
    try:
        s = pl.series()
        stage = "leaders"
        pyr = pl.pyramid()
        stage = "thermo"
        avoid = pl.avoid(cfg.k)
        rx = dict(zip(cfg.q_list, pl.map(
            lambda q: restricted_exponents(pl.full, avoid, pl.phi, q, cfg.s0, cfg.p0),
            cfg.q_list)))
        stage = "geometry"
        rep = verify_theorem(s, pyr, pl.gm, rx, cfg.q_list, cfg.s0, cfg.p0, h_tol=cfg.h_tol,
                             cover_level=cfg.cover_level, scales=cfg.box_scales,
                             tolerances=cfg.tolerances, energy=cfg.energy)
    except Exception as e:
        raise RuntimeError(f"verify failed in stage {stage}: {e}") from e
    rep.config = cfg.to_dict()
    body = rep.to_dict()
    body.pop("config")
    body["series_sha256"] = s.sha256()
    files = {"verify.json": report(cfg, "verify", body), "verify.csv": rep.to_csv(),
             "series.mwl": s.to_bytes()}
    _write_all(out, cfg, files)
    for line in rep.failures():
        print(line, file=sys.stderr)
    for r in rep.records:
        if r.status != "ok":
            print(f"q={r.q:g}: {r.status}", file=sys.stderr)
    return 0 if rep.passed else 1


def _write_all(out: Path, cfg: RunConfig, files: dict) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write(out / "config.json", dump_json(cfg.to_dict()))
    for name in sorted(files):
        atomic_write(out / name, files[name])


COMMANDS = {"pressure": cmd_pressure, "synth": cmd_synth, "spectrum": cmd_spectrum,
            "dims": cmd_dims, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mwlab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"mwlab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--fixture", choices=sorted(FIXTURES), help="built-in fixture")
        p.add_argument("--seed", type=int, help="64-bit seed override")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--threads", type=int, default=1, help="worker threads")
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("MWL_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    overrides = {}
    if args.fixture:
        overrides["fixture"] = args.fixture
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            print("error: --seed must fit in 64 unsigned bits", file=sys.stderr)
            return 2
        overrides["seed"] = args.seed
    try:
        cfg = load_config(args.config, overrides)
    except (ConfigError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](cfg, Path(args.out), max(1, args.threads))
    except (RuntimeError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
