"""End-to-end acceptance checks, one test per criterion."""

import hashlib
import math
import time

import numpy as np
import pytest

from mwlab.cli import Pipeline, load_config, main
from mwlab.geometry import energy_scan, graph_box_dimension, range_box_dimension, verify_theorem
from mwlab.leaders import leader_pyramid, scaling_function
from mwlab.symbolic import Sft, box_dimension, golden_mean, spectral_radius, zero_avoiding_sft
from mwlab.synthesis import build_coefficients, builtin_wavelet, perturb, synthesize, zero_clearance
from mwlab.thermo import (GibbsModel, Potential, gibbs_constant, legendre, pressure,
                          pressure_oracle, quasi_bernoulli_constant, restricted_exponents, tau,
                          tau_oracle, tau_prime, wavelet_scaling_prediction)

FULL = Sft.full(2)
ZERO = Potential.constant(0.0)
BERN = Potential.bernoulli(0.25)
PHI = (1 + math.sqrt(5)) / 2
Q5 = np.round(np.arange(-5, 5.0001, 0.25), 10)
Q_SCALING = np.round(np.arange(-2, 4.0001, 0.25), 10)


def test_c01_pressure_tau_exact(criterion):
    t0 = time.perf_counter()
    p = pressure(FULL, ZERO)
    e0 = np.max(np.abs(tau(FULL, ZERO, Q5).values - (Q5 - 1)))
    eb = np.max(np.abs(tau(FULL, BERN, Q5).values + np.log2(0.25**Q5 + 0.75**Q5)))
    dt = time.perf_counter() - t0
    ok = abs(p - math.log(2)) <= 1e-12 and e0 <= 1e-12 and eb <= 1e-10 and dt < 1
    criterion(1, ok, f"|P-log2|={abs(p - math.log(2)):.1e} tau0 err={e0:.1e} "
                     f"bern err={eb:.1e} t={dt:.2f}s")


def test_c02_oracle_agreement(criterion):
    t0 = time.perf_counter()
    pg = abs(pressure(golden_mean(), ZERO) - pressure_oracle(golden_mean(), ZERO, 1.0, 14))
    pb = abs(pressure(FULL, BERN) - pressure_oracle(FULL, BERN, 1.0, 14))
    qs = [-2, -1, 0, 1, 2]
    tb = max(abs(tau(FULL, BERN, [q]).values[0] - tau_oracle(FULL, BERN, q, 12)) for q in qs)
    tg = max(abs(tau(golden_mean(), ZERO, [q]).values[0] - tau_oracle(golden_mean(), ZERO, q, 12))
             for q in qs)
    dt = time.perf_counter() - t0
    ok = pg <= 0.15 and pb <= 0.15 and tb <= 0.1 and tg <= 0.1 and dt < 10
    criterion(2, ok, f"pressure gaps {pg:.3f}/{pb:.1e} tau gaps {tg:.3f}/{tb:.1e} t={dt:.2f}s")


def test_c03_spectral_radius(criterion):
    r = spectral_radius(golden_mean())
    d = box_dimension(golden_mean())
    ok = abs(r - PHI) <= 1e-10 and abs(d - 0.6942419) <= 1e-7 and abs(d - math.log2(PHI)) <= 1e-9
    criterion(3, ok, f"rho={r:.12f} dim={d:.10f}")


def test_c04_gibbs_audit(criterion):
    worst = 0.0
    for x, phi in ((FULL, BERN), (golden_mean(), ZERO), (FULL, ZERO)):
        gm = GibbsModel(x, phi)
        c = gibbs_constant(gm, 8)
        for n in range(1, 15):
            r = gm.gibbs_ratios(n)
            worst = max(worst, float(r.max()) / c, float((1 / r).max()) / c)
    qb = quasi_bernoulli_constant(GibbsModel(FULL, BERN))
    ok = worst <= 1 + 1e-9 and abs(qb - 1.0) <= 1e-12
    criterion(4, ok, f"max ratio/C={worst:.12f} quasi-Bernoulli C={qb!r}")


def test_c05_legendre_duality(criterion):
    q = np.round(np.arange(-5, 5.0001, 0.01), 10)
    worst = 0.0
    for x, phi in ((FULL, BERN), (golden_mean(), ZERO)):
        t = tau(x, phi, q)
        for qi in np.arange(-5, 5.01, 0.25):
            a = tau_prime(x, phi, qi)
            worst = max(worst, abs(legendre(t, [a]).values[0] - (qi * a - t(qi))))
    criterion(5, worst <= 1e-6, f"max |tau*(tau') - (q tau' - tau)| = {worst:.2e}")


def test_c06_scaling_recovery(criterion):
    lines, ok = [], True
    for phi, s0, p0 in ((ZERO, 0.5, 4.0), (BERN, 0.6, 2.0)):
        t0 = time.perf_counter()
        gm = GibbsModel(FULL, phi)
        est = scaling_function(leader_pyramid(perturb(build_coefficients(gm, s0, p0, 14, seed=0))),
                               Q_SCALING)
        pred = wavelet_scaling_prediction(FULL, phi, s0, p0, Q_SCALING).values
        err = float(np.max(np.abs(est.xi_hat - pred)))
        dt = time.perf_counter() - t0
        tol = 0.1 if phi is ZERO else 0.12
        ok &= err <= tol and dt < 60
        lines.append(f"max err {err:.3f} (tol {tol}) t={dt:.2f}s")
    criterion(6, ok, "; ".join(lines))


@pytest.fixture(scope="module")
def mono_series():
    gm = GibbsModel(FULL, ZERO)
    tree = perturb(build_coefficients(gm, 0.5, 4.0, 14, seed=0))
    return gm, tree, synthesize(tree, builtin_wavelet("gauss2"), 14)


def test_c07_graph_value(criterion, mono_series):
    t0 = time.perf_counter()
    s = mono_series[2]
    g = graph_box_dimension(s).value
    r = range_box_dimension(s).value
    dt = time.perf_counter() - t0
    ok = abs(g - 1.5) <= 0.1 and abs(r - 1.0) <= 0.05 and dt < 60
    criterion(7, ok, f"graph={g:.3f} range={r:.3f} t={dt:.2f}s")


def test_c08_energy_threshold(criterion, mono_series):
    s = mono_series[2]
    sc = energy_scan(s, GibbsModel(FULL, ZERO, 0.0).level_masses, "graph")
    criterion(8, abs(sc.threshold - 1.5) <= 0.15, f"threshold={sc.threshold:.2f}")


def test_c09_upper_bound_audit(criterion):
    q_list = [-1.0, 0.0, 1.0, 2.0, 3.0]
    worst, n_cov, details = -math.inf, 0, []
    for fx in ("monofractal", "bernoulli", "golden", "zero"):
        cfg = load_config(overrides={"fixture": fx})
        pl = Pipeline(cfg)
        avoid = pl.avoid(cfg.k)
        rx = {q: restricted_exponents(pl.full, avoid, pl.phi, q, cfg.s0, cfg.p0) for q in q_list}
        rep = verify_theorem(pl.series(), pl.pyramid(), pl.gm, rx, q_list, cfg.s0, cfg.p0,
                             energy=False)
        for r in rep.records:
            if r.status != "ok":
                continue
            n_cov += 1
            e = max(r.audit["graph_excess"], r.audit["range_excess"])
            worst = max(worst, e)
        details.append(f"{fx}:{sum(r.status == 'ok' for r in rep.records)}")
    ok = worst <= 0.1 and n_cov >= 15
    criterion(9, ok, f"{n_cov} covers ({', '.join(details)}), max excess {worst:+.3f}")


def test_c10_zero_avoidance(criterion):
    psi = builtin_wavelet("gauss2")
    assert psi.zeros().zeros == pytest.approx((0.5,), abs=1e-9)
    ks = range(3, 9)
    clear = [zero_clearance(psi, zero_avoiding_sft([0.5], k), k, k + 6) for k in ks]
    mono_ok = True
    for phi in (ZERO, BERN):
        for q in (-2.0, 0.0, 2.0):
            pf = pressure(FULL, phi, q)
            gaps = [pf - pressure(zero_avoiding_sft([0.5], k), phi, q) for k in ks]
            mono_ok &= all(g >= -1e-12 for g in gaps)
            mono_ok &= all(b <= a + 1e-12 for a, b in zip(gaps, gaps[1:]))
    d8 = restricted_exponents(FULL, zero_avoiding_sft([0.5], 8), ZERO, 0.0, 0.5, 4.0).dK
    ok = min(clear) > 0 and mono_ok and d8 >= 0.95
    criterion(10, ok, f"min clearance {min(clear):.4f}, gaps monotone={mono_ok}, D_0(8)={d8:.4f}")


def test_c11_determinism(criterion, tmp_path):
    codes, digests = [], []
    for run in ("a", "b"):
        out = tmp_path / run
        codes.append(main(["verify", "--seed", "0", "--out", str(out)]))
        digests.append(tuple(hashlib.sha256((out / f).read_bytes()).hexdigest()
                             for f in ("verify.json", "verify.csv", "series.mwl")))
    ok = digests[0] == digests[1] and codes == [0, 0]
    criterion(11, ok, f"exit codes {codes}, sha256 {digests[0][0][:12]}/{digests[0][2][:12]}")
