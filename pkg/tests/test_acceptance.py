"""Exit criteria. Each test prints one ``[criterion] PASS|FAIL`` line."""

import math
import time

import numpy as np
import pytest

from oracles import path_enumeration, protocol_matrix
from wstate.analysis import analytic_optimum, competitor_probability, numeric_optimum, scaling_curves
from wstate.fock import DensityMatrix, ModeLabel, Pol, Stage, condition_on_pattern, partial_trace
from wstate.protocol import ProtocolConfig, herald, herald_pattern, run_protocol, simulate, total_probability
from wstate.states import excitation_index, ghz_marginal, ghz_state, w_state


@pytest.fixture
def report(capsys):
    def emit(tag, ok, detail):
        with capsys.disabled():
            print(f"\n[{tag}] {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail

    return emit


def test_1_exact_optimum(report):
    start = time.perf_counter()
    worst = 0.0
    for n in range(2, 7):
        p_h = (n - 1) / n
        no_ff = total_probability(run_protocol(ProtocolConfig(n, p_h)))
        ff = total_probability(run_protocol(ProtocolConfig(n, p_h, feedforward=True)))
        worst = max(worst, abs(no_ff - (n - 1) ** (n - 1) / n ** (n + 1)), abs(ff - (n - 1) ** (n - 1) / n**n))
    elapsed = time.perf_counter() - start
    report("1 exact optimum", worst <= 1e-10 and elapsed < 30,
           f"max |P_sim - closed form| = {worst:.2e} (tol 1e-10), {elapsed:.2f} s (limit 30 s)")


def test_2_heralded_state(report):
    worst_fid, worst_mod, worst_purity = 0.0, 0.0, 0.0
    for n in range(2, 7):
        for r in run_protocol(ProtocolConfig(n, (n - 1) / n, feedforward=True)):
            worst_fid = max(worst_fid, 1 - r.fidelity_corrected)
            rho = r.conditional_state
            worst_purity = max(worst_purity, abs(rho.eigenvalues()[-1] - rho.trace()))
            ket, _ = herald(ProtocolConfig(n, (n - 1) / n), r.k)
            ket = ket / np.linalg.norm(ket)
            mods = np.abs([ket[excitation_index(j, n)] for j in range(1, n + 1)])
            worst_mod = max(worst_mod, float(np.max(np.abs(mods - 1 / math.sqrt(n)))))
    ok = worst_fid <= 1e-9 and worst_mod <= 1e-10 and worst_purity <= 1e-10
    report("2 heralded state", ok,
           f"1-F_corrected <= {worst_fid:.2e} (tol 1e-9), |amp|-1/sqrt(N) <= {worst_mod:.2e}, "
           f"purity gap <= {worst_purity:.2e} (tol 1e-10)")


def test_3_outcome_uniformity(report):
    spread = 0.0
    for n in range(2, 7):
        for p_h in (0.25, (n - 1) / n, 0.9):
            probs = [r.probability for r in run_protocol(ProtocolConfig(n, p_h))]
            spread = max(spread, max(probs) - min(probs))
    report("3 eraser uniformity", spread <= 1e-12, f"max spread of P(u_k) = {spread:.2e} (tol 1e-12)")


def test_4_argmax(report):
    worst, sources = 0.0, set()
    for n in range(2, 21):
        res = numeric_optimum(n)
        sources.add(res.source)
        worst = max(worst, abs(res.argmax_ph - (n - 1) / n))
    report("4 argmax", worst <= 1e-6,
           f"max |argmax - (N-1)/N| = {worst:.2e} over N=2..20 (tol 1e-6), backends {sorted(sources)}")


def test_5_mixture_limit(report):
    worst = 0.0
    for n in range(2, 6):
        records = run_protocol(ProtocolConfig(n, 0.5))
        total = sum(r.probability for r in records)
        mixed = sum(r.probability * r.conditional_state.matrix for r in records) / total
        expected = np.zeros((2**n, 2**n))
        for j in range(1, n + 1):
            expected[excitation_index(j, n), excitation_index(j, n)] = 1 / n
        worst = max(worst, float(np.max(np.abs(mixed - expected))))
    report("5 mixture limit", worst <= 1e-10, f"max entry error = {worst:.2e} (tol 1e-10)")


def test_6_comparison(report):
    formula_ok = all(
        competitor_probability("multiport_lim05", n) == math.exp(1.35 - 1.27 * n)
        and competitor_probability("quantum_fusion", n) == n / 5 ** (n - 1)
        and competitor_probability("fusion_xphase", n) == (n + 1) / 2**n
        for n in range(2, 201)
    )
    curves = {c.name: c for c in scaling_curves(200)}
    rivals = ("multiport_lim05", "quantum_fusion", "fusion_xphase")
    beats_all = all(curves["ours_ff"].at(n) > curves[r].at(n) for n in range(12, 201) for r in rivals)
    xphase_from_8 = all(curves["ours_ff"].at(n) > curves["fusion_xphase"].at(n) for n in range(8, 201))
    crossover_at_8 = curves["ours_ff"].at(7) < curves["fusion_xphase"].at(7)
    ok = formula_ok and beats_all and xphase_from_8 and crossover_at_8
    report("6 table/figure", ok,
           f"formulas exact={formula_ok}, ours_ff beats all for N>=12={beats_all}, "
           f"beats fusion_xphase from N=8={xphase_from_8} (first at 8: {crossover_at_8})")


def test_7_loss_robustness(report):
    worst_w, worst_ghz = 0.0, 0.0
    for n in range(3, 7):
        for r in run_protocol(ProtocolConfig(n, (n - 1) / n, feedforward=True)):
            fixed = r.correction.apply(r.conditional_state)
            for lost in range(1, n + 1):
                keep = [s for s in range(1, n + 1) if s != lost]
                reduced = partial_trace(fixed, keep)
                w_small = w_state(n - 1)
                expected = (n - 1) / n * np.outer(w_small, w_small.conj())
                expected[0, 0] += 1 / n
                worst_w = max(worst_w, float(np.max(np.abs(reduced.matrix - expected))))
        ghz = partial_trace(DensityMatrix.from_ket(ghz_state(n)), list(range(2, n + 1)))
        worst_ghz = max(worst_ghz, float(np.max(np.abs(ghz.matrix - ghz_marginal(n - 1).matrix))))
    ok = worst_w <= 1e-10 and worst_ghz <= 1e-10
    report("7 loss robustness", ok, f"W marginal error {worst_w:.2e}, GHZ marginal error {worst_ghz:.2e} (tol 1e-10)")


def test_8_oracle_equivalence(report):
    worst, count = 0.0, 0
    for n in (2, 3):
        for p_h in (0.3, (n - 1) / n, 0.85):
            out = simulate(ProtocolConfig(n, p_h))
            rows = [ModeLabel(i, Stage.F, pol) for i in range(1, n + 1) for pol in (Pol.H, Pol.V)]
            rows += [ModeLabel(k, Stage.U, Pol.V) for k in range(1, n + 1)]
            oracle = path_enumeration(protocol_matrix(n, p_h), len(rows))
            perm = [out.modes.index(m) for m in rows]
            for k in range(1, n + 1):
                kept, prob = condition_on_pattern(out, herald_pattern(n, k))
                scale = math.sqrt(prob)
                for occ, amp in kept.amplitudes.items():
                    key = tuple(occ[i] for i in perm)
                    worst = max(worst, abs(amp * scale - oracle.get(key, 0)))
                    count += 1
                # oracle support inside the herald pattern must be covered too
                hits = [key for key in oracle
                        if all(key[2 * i] + key[2 * i + 1] == 1 for i in range(n))
                        and key[2 * n:] == tuple(int(j == k - 1) for j in range(n))]
                assert len(hits) == len(kept.amplitudes)
    report("8 oracle equivalence", worst <= 1e-12, f"{count} post-selected amplitudes, max error {worst:.2e} (tol 1e-12)")


def test_9_asymptotic_constant(report):
    n = 50
    no_ff = n**2 * analytic_optimum(n)[1]
    ff = n * analytic_optimum(n, feedforward=True)[1]
    limit = math.exp(-1)
    rel = max(abs(no_ff - limit), abs(ff - limit)) / limit
    report("9 asymptotic constant", rel <= 0.01,
           f"N=50: N^2 P = {no_ff:.6f}, N P_FF = {ff:.6f}, 1/e = {limit:.6f}, relative gap {rel:.4%} (tol 1%)")
