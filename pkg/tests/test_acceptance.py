"""Acceptance criteria, one test each. Every test prints a PASS/FAIL line
(collected again in the terminal summary) and then asserts it."""
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pytest

from opasym import asym, coeffs, fourier, limits, phase
from opasym.chromatic import TrigSignal, operator_cd_check, orthogonality_check, recurrence_residual
from opasym.cli import main
from opasym.coeffs import hermite, power_law
from opasym.recurrence import cd_residual, run_recurrence

INV_SQRT_PI = 1 / math.sqrt(math.pi)


def _central(n):
    return math.exp(math.lgamma(2 * n + 1) - 2 * math.lgamma(n + 1) - n * math.log(4.0))


def test_criterion_01_hermite_limit(verdict):
    N = 200_000
    start = time.perf_counter()
    run = run_recurrence(hermite(), 0.0, N)
    b = limits.beta_limit(hermite(), 0.0, N, run=run)
    r = limits.ratio_limit(hermite(), 0.0, N, run=run)
    elapsed = time.perf_counter() - start
    # oracle 1: Stirling form of gamma_{2n} p_{2n}(0)^2 through log-gamma
    stirling = math.sqrt((N + 1) / 2) * _central(N // 2)
    # oracle 2: closed-form partial sums of the central binomials over a direct 1/gamma sum
    J = N // 2
    direct = (2 * J + 1) * _central(J) / math.fsum(math.sqrt(2.0 / (k + 1)) for k in range(N + 1))
    errs = (abs(b.value / INV_SQRT_PI - 1), abs(r.value / (INV_SQRT_PI / 2) - 1),
            abs(stirling / INV_SQRT_PI - 1), abs(2 * direct / INV_SQRT_PI - 1))
    ok = max(errs) <= 0.01 and elapsed < 1.0
    assert verdict(1, ok, f"beta={b.value:.10f} ratio={r.value:.10f} oracle 1/sqrt(pi)={INV_SQRT_PI:.10f} "
                          f"stirling={stirling:.10f} direct={direct:.10f} max rel err={max(errs):.2e} "
                          f"runtime={elapsed:.3f}s")


def test_criterion_02_equality(verdict):
    fams = [hermite(), power_law(0.25), power_law(0.5), power_law(0.75)]
    start = time.perf_counter()
    gaps = {}
    for fam in fams:
        for w in (0.5, 1.0, 2.0):
            gaps[(fam.label, w)] = limits.equality_check(fam, w, 100_000).gap
    elapsed = time.perf_counter() - start
    worst = max(gaps, key=gaps.get)
    ok = gaps[worst] <= 0.02 and elapsed < 10
    assert verdict(2, ok, f"max gap={gaps[worst]:.2e} at {worst} over {len(gaps)} cases, runtime={elapsed:.2f}s")


def test_criterion_03_growth_exponents(verdict):
    fits = {p: limits.growth_exponent(power_law(p), 1.0, 100_000).exponent for p in (0.25, 0.5, 0.75)}
    dev = {p: abs(e - (1 - p)) for p, e in fits.items()}
    ok = max(dev.values()) <= 0.02
    detail = ", ".join(f"p={p}: {e:.5f} (expect {1 - p})" for p, e in fits.items())
    assert verdict(3, ok, f"{detail}; max deviation={max(dev.values()):.4f}")


def test_criterion_04_identities(verdict):
    rng = np.random.default_rng(20240611)
    fams = coeffs.corpus() + [hermite(), coeffs.freud(3.0)]
    cd = 0.0
    for _ in range(100):
        fam = fams[rng.integers(len(fams))]
        w, s = rng.uniform(-2, 2, 2)
        cd = max(cd, cd_residual(fam, w, s, int(rng.integers(0, 201))).residual)
    abs2 = mult = twoterm = recon = 0.0
    for fam in coeffs.corpus():
        for parity in phase.PARITIES:
            tr = phase.unwind_phase(fam, 1.0, 10_000, parity)
            shift = 1 if parity == "odd-pair" else 0
            p = run_recurrence(fam, 1.0, 20_002).p
            n = np.arange(10_001)
            pair2 = p[2 * n + shift] ** 2 + p[2 * n + 1 + shift] ** 2
            abs2 = max(abs2, float(np.max(np.abs(tr.E_abs ** 2 - pair2) / pair2)))
            mult = max(mult, float(np.max(np.abs(tr.E_abs[1:] - tr.E_abs[:-1] * tr.mu[1:]) / tr.E_abs[1:])))
            e2, _ = phase.en_two_term(fam, 1.0, 10_000, parity)
            twoterm = max(twoterm, float(np.max(np.abs(e2 - tr.E) / np.abs(tr.E))))
            recon = max(recon, float(np.max(np.abs(phase.reconstruct_abs2(tr) - pair2) / pair2)))
    ok = cd <= 1e-9 and abs2 <= 1e-12 and mult <= 1e-12 and twoterm <= 1e-10 and recon <= 1e-8
    assert verdict(4, ok, f"CD={cd:.1e} |E|^2={abs2:.1e} mu={mult:.1e} two-term={twoterm:.1e} "
                          f"S-reconstruction={recon:.1e}")


@pytest.mark.slow
def test_criterion_05_phase_asymptotics(verdict):
    rows, ok = [], True
    for fam in coeffs.corpus():
        tr = phase.unwind_phase(fam, 1.0, 2 ** 20)
        band = phase.delta_band(fam, 1.0, trace=tr)
        decay = phase.pair_sum_decay(fam, 1.0, trace=tr)
        good = band.certified and band.n0 is not None and decay.order >= 1.7
        ok &= good
        n0 = band.n0 if band.n0 is None or band.n0 < 10 ** 12 else f"~1e{len(str(band.n0)) - 1}"
        rows.append(f"{fam.label}: N0={n0} order={decay.order:.3f} ({decay.route})" + ("" if good else " <-"))
    assert verdict(5, ok, "; ".join(rows))


def _lemma_task(args):
    lemma, fam, w = args
    t0 = time.process_time()
    rep = asym.verify_lemma(lemma, fam, w)
    return rep.verdict, rep.fit_exponent, rep.claimed, time.process_time() - t0


@pytest.mark.slow
def test_criterion_06_lemma_campaign(verdict):
    tasks = [(lem, fam, w) for fam in coeffs.corpus() for w in (0.5, 1.0, 2.0) for lem in asym.LEMMAS]
    workers = os.cpu_count() or 1
    start = time.perf_counter()
    with ProcessPoolExecutor(max_workers=workers) as pool:
        out = list(pool.map(_lemma_task, tasks, chunksize=4))
    wall = time.perf_counter() - start
    cpu = sum(o[3] for o in out)
    bad = [(t[0], t[1].label, t[2]) for t, o in zip(tasks, out) if o[0] != "consistent"]
    # tasks are independent, so four workers need about a quarter of the CPU time
    projected = wall if workers >= 4 else cpu / 4
    ok = not bad and projected < 300
    assert verdict(6, ok, f"{len(tasks) - len(bad)}/{len(tasks)} consistent; wall={wall:.0f}s on {workers} "
                          f"core(s), cpu={cpu:.0f}s, 4-core estimate={projected:.0f}s" +
                   (f"; inconsistent: {bad[:5]}" if bad else ""))


def test_criterion_07_fourier(verdict):
    c0 = parity = agree = 0.0
    for x in (0.05, 0.1, 0.2):
        tab = fourier.cm_fft(x, 8)
        c0 = max(c0, abs(tab.c(0)))
        top = np.max(np.abs(tab.coeffs))
        for m in range(1, 9):
            v = tab.c(m)
            parity = max(parity, (abs(v.real) if m % 2 == 0 else abs(v.imag)) / top)
        for m in range(1, 5):
            agree = max(agree, abs(fourier.cm_contour(x, m) - tab.c(m)))
    low = fourier.cm_fft(0.01, 3)
    lead = [(low.c(m) / fourier.leading_term(0.01, m)).real for m in (1, 2, 3)]
    conj = max(fourier.fkm_structure(0.1, m, k)["conj_gap"] for m in (-2, -1, 1, 2) for k in range(-3, 4))
    fpar = max(fourier.fkm_structure(0.1, m, k)["parity_gap"] for m in (-2, -1, 1, 2) for k in range(-3, 4))
    xs = (0.04, 0.02, 0.01)
    o2 = [abs(fourier.fkm(x, 1, 1)) / x ** 2 for x in xs]
    o4 = [abs(fourier.fkm(a, 1, 3)) / abs(fourier.fkm(b, 1, 3)) for a, b in zip(xs, xs[1:])]
    ok = (c0 <= 1e-10 and parity <= 1e-10 and agree <= 1e-8 and all(0.95 <= r <= 1.05 for r in lead)
          and conj <= 1e-12 and fpar <= 1e-12 and max(o2) / min(o2) < 2 and all(14 < r < 18 for r in o4))
    assert verdict(7, ok, f"|c0|={c0:.1e} parity={parity:.1e} fft-contour={agree:.1e} "
                          f"leading={[round(r, 5) for r in lead]} fkm conj={conj:.1e} parity={fpar:.1e} "
                          f"|f11|/x^2={[round(v, 4) for v in o2]} f13 halving ratios={[round(r, 2) for r in o4]}")


def test_criterion_08_orthogonality(verdict):
    H = hermite()
    rep = orthogonality_check(H, 1.0, 2.0, 100_000, checkpoints=[1000, 10_000, 100_000])
    rng = np.random.default_rng(11)
    rec = cd = 0.0
    for n in (0, 1, 5, 50, 120, 200):
        ws = rng.uniform(-2, 2, 4)
        amp = rng.normal(size=(4, 2))
        f = TrigSignal(((ws[0], complex(*amp[0])), (ws[1], complex(*amp[1]))))
        g = TrigSignal(((ws[2], complex(*amp[2])), (ws[3], complex(*amp[3]))))
        rec = max(rec, recurrence_residual(H, n, f))
        cd = max(cd, operator_cd_check(H, f, g, n).relative)
    ok = rep.decay >= 3 and rep.bound_holds and rec <= 1e-10 and cd <= 1e-10
    assert verdict(8, ok, f"ratios={[f'{r:.3e}' for r in rep.ratios]} decay={rep.decay:.2f}x "
                          f"operator recurrence={rec:.1e} operator CD={cd:.1e}")


def test_criterion_09_conjecture(verdict, tmp_path):
    status = main(["conjecture", "--family", "power-p0.5", "--rho-grid", "0,1,2.5", "--omega", "1",
                   "--N", "100000", "--out", str(tmp_path), "--workers", "1"])
    import json
    rows = {r["rho"]: r["classification"] for r in json.loads((tmp_path / "conjecture.json").read_text())}
    traces = sorted(p.name for p in tmp_path.glob("envelope_rho*.csv"))
    ok = (rows[0] == "stable" and rows[1] == "stable" and rows[2.5] != "stable" and len(traces) == 3
          and status == 0)
    assert verdict(9, ok, f"classifications={rows} envelope traces={traces}")


DETERMINISM_RUNS = [
    ["check-conditions", "--family", "corpus", "--N", "2000"],
    ["eval", "--family", "power-p0.5", "--N", "5000", "--stride", "250"],
    ["phase-trace", "--family", "detour-q20-d3-power-p0.5", "--N", "3000"],
    ["lemma-verify", "--family", "power-p0.75", "--lemma", "LG", "--omega", "1"],
    ["fourier-cm", "--x", "0.2", "--M", "5"],
    ["fourier-fkm", "--x", "0.05", "--m", "2", "--k", "-1"],
    ["limits", "--family", "hermite", "--omega-grid=-1:1:3", "--N", "20000"],
    ["uniformity", "--family", "power-p0.25", "--N", "20000"],
    ["conjecture", "--family", "power-p0.5", "--rho-grid", "0,2", "--N", "20000"],
    ["chromatic", "--family", "hermite", "--mode", "cd", "--n", "30"],
]


def test_criterion_10_determinism(verdict, tmp_path):
    sig = tmp_path / "sig.yaml"
    sig.write_text("- {omega: 1.0, re: 1.0}\n- {omega: -0.5, re: 0.3, im: 0.2}\n")
    diffs = []
    for i, argv in enumerate(DETERMINISM_RUNS):
        if argv[0] == "chromatic":
            argv = argv + ["--signal", str(sig)]
        outs = []
        for rep in (0, 1):
            out = tmp_path / f"{i}-{rep}"
            main(argv + ["--out", str(out), "--workers", "1"])
            outs.append({p.name: p.read_bytes() for p in out.iterdir() if p.name != "manifest.json"})
        if not outs[0] or outs[0] != outs[1]:
            diffs.append(argv[0])
    ok = not diffs
    assert verdict(10, ok, f"{len(DETERMINISM_RUNS)} commands re-run, byte-identical artifacts"
                   + (f"; differing: {diffs}" if diffs else ""))
