"""Acceptance criteria 1-10. Each test prints and records one PASS/FAIL line."""
import time

import numpy as np

from acgattack.attack import (
    BETA_VARIANTS, AttackConfig, BetaFormula, cg_quadratic_minimize, checkpoint_update,
    compute_beta, run_attack,
)
from acgattack.cli import main
from acgattack.diversity import build_graph, di_trace, diversity_index, global_clustering
from acgattack.geometry import FeasibleRegion, center_init, make_rng, random_init
from acgattack.harness import run_campaign
from acgattack.objectives import ClassifierObjective, Quadratic
from acgattack.tinymodel import init_model

from conftest import ACCEPTANCE, central_diff, preactivations, rel_err
from test_attack import CASES, _state
from test_diversity import brute_clustering, mc_di

SEVEN = [v for v in BETA_VARIANTS if v != "zero"]


def record(n, ok, detail):
    ACCEPTANCE[n] = (bool(ok), detail)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def test_1_cg_quadratic_convergence():
    t0 = time.perf_counter()
    rng = make_rng(0)
    worst, over = 0.0, 0
    for n in range(2, 21):
        for _ in range(100):
            q = Quadratic.random(n, rng)
            x, it = cg_quadratic_minimize(q, rng.standard_normal(n))
            worst = max(worst, float(np.linalg.norm(2 * q.A @ x + q.b)))
            over += it > n
    dt = time.perf_counter() - t0
    record(1, worst <= 1e-8 and over == 0 and dt < 10,
           f"max |grad| {worst:.2e} over 1900 instances, {over} over budget, {dt:.2f}s")


def test_2_gradient_correctness():
    t0 = time.perf_counter()
    model = init_model([2, 16, 3], seed=11)
    rng = make_rng(12)
    errs = []
    while len(errs) < 200:
        x = rng.random(2)
        # stay away from ReLU kinks and from CW target-class ties within the FD stencil
        if np.min(np.abs(preactivations(model, x))) < 1e-3:
            continue
        z = np.sort(model.forward(x))
        if z[-1] - z[-2] < 1e-3 or z[-2] - z[-3] < 1e-3:
            continue
        label = int(rng.integers(3))
        obj = ClassifierObjective(model, label)
        errs.append(rel_err(obj.grad(x), central_diff(obj.value, x, 1e-5)))
    dt = time.perf_counter() - t0
    worst = max(errs)
    record(2, worst <= 1e-4 and dt < 5, f"max rel err {worst:.2e} at 200 points, {dt:.2f}s")


def test_3_beta_fallback_and_sign():
    g = np.array([0.3, -1.2, 2.0])
    zeros = all(compute_beta(BetaFormula(v), g, g.copy(), np.array([1.0, 0.5, -0.2])) == 0.0 for v in SEVEN)
    args = ([1.0, 0.0], [0.0, 1.0], [1.0, 0.0])
    hs = compute_beta(BetaFormula("hs"), *args)
    hs_plus = compute_beta(BetaFormula("hs", nonneg=True), *args)
    record(3, zeros and hs == -1.0 and hs_plus == 0.0,
           f"y=0 gives 0 for all seven: {zeros}; HS {hs}, HS+ {hs_plus}")


def test_4_step_size_truth_table():
    outcome = {}
    for case, expect in (("I only", True), ("II only", True), ("both", True), ("neither", False)):
        st0 = _state(**CASES[case])
        new, halved = checkpoint_update(st0, 22, 30, 0.75)
        restored = (np.array_equal(new.x, st0.x_adv) and np.array_equal(new.x_prev, st0.x_pre)
                    and np.array_equal(new.s_prev, st0.s_pre))
        kept = np.array_equal(new.x, st0.x) and np.array_equal(new.s_prev, st0.s_prev)
        ok = halved == expect and new.eta == (st0.eta / 2 if expect else st0.eta)
        outcome[case] = ok and (restored if expect else kept)
    record(4, all(outcome.values()), ", ".join(f"{k}: {'ok' if v else 'wrong'}" for k, v in outcome.items()))


def test_5_diversity_index():
    t0 = time.perf_counter()
    a = diversity_index(np.full((6, 3), 0.25), 1.0)
    tri = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3) / 2]])
    b = diversity_index(tri, 2.0)
    rng = make_rng(2024)
    worst_mc, cc_ok = 0.0, True
    for i in range(50):
        m = (2, 10)[i % 2]
        pts = rng.random((10, m))
        M = float(np.sqrt(m))
        worst_mc = max(worst_mc, abs(diversity_index(pts, M) - mc_di(pts, M, seed=i)))
        for theta in np.sort(rng.random(5)) * M:
            g = build_graph(pts, theta)
            cc_ok &= global_clustering(g) == brute_clustering(g.adjacency)
    dt = time.perf_counter() - t0
    ok = a == 0.0 and b == 0.5 and worst_mc <= 1e-3 and cc_ok and dt < 30
    record(5, ok, f"identical {a}, triangle {b}, max |exact - MC| {worst_mc:.1e}, "
                  f"clustering exact: {cc_ok}, {dt:.1f}s")


def test_6_feasibility_and_monotonicity(moons, moons_model):
    data = moons.subset(slice(0, 20))
    eps = 0.08
    asr, feasible, monotone, curve_ok = [], True, True, True
    for restarts in (1, 2, 5):
        res = run_campaign(AttackConfig(n_iter=50, restarts=restarts, seed=1), moons_model, data, eps)
        asr.append(res.asr)
        curve_ok &= bool(np.all(np.diff(res.asr_curve) >= 0))
        for i, run in enumerate(res.runs):
            region = FeasibleRegion(data.points[i], eps)
            for tr in run.traces:
                feasible &= all(region.contains(x) for x in tr.iterates)
                monotone &= bool(np.all(np.diff(tr.f_max) >= 0))
    asr_ok = asr[0] <= asr[1] <= asr[2]
    record(6, feasible and monotone and asr_ok and curve_ok,
           f"feasible {feasible}, f_max monotone {monotone}, ASR by restarts {asr}, curve monotone {curve_ok}")


def test_7_pinned_qualitative(moons, moons_model):
    t0 = time.perf_counter()
    stats = {}
    for method in ("acg", "apgd"):
        di, move = [], []
        for i in range(20):
            region = FeasibleRegion(moons.points[i], 0.3)
            tr = run_attack(AttackConfig(n_iter=100, method=method), region,
                            ClassifierObjective(moons_model, moons.labels[i]), center_init(region))
            di.append(np.mean([v for _, v in di_trace(tr, 10, region.diameter)]))
            move.append(tr.move_dist.mean())
        stats[method] = (float(np.mean(di)), float(np.mean(move)))
    dt = time.perf_counter() - t0
    ok = stats["acg"][0] > stats["apgd"][0] and stats["acg"][1] > stats["apgd"][1] and dt < 60
    record(7, ok, f"mean DI acg {stats['acg'][0]:.5f} > apgd {stats['apgd'][0]:.5f}; "
                  f"mean move acg {stats['acg'][1]:.5f} > apgd {stats['apgd'][1]:.5f}; {dt:.1f}s")


def _seeded_runs(moons, model, cfg, n=10):
    out = []
    for i in range(n):
        region = FeasibleRegion(moons.points[i], 0.3)
        out.append(run_attack(cfg, region, ClassifierObjective(model, moons.labels[i]), random_init(region, i)))
    return out


def test_8_degeneracy(moons, moons_model):
    acg = _seeded_runs(moons, moons_model, AttackConfig(method="acg", beta=BetaFormula("zero")))
    apgd = _seeded_runs(moons, moons_model, AttackConfig(method="apgd", alpha=1.0))
    same = [np.array_equal(a.iterates, b.iterates) for a, b in zip(acg, apgd)]
    record(8, all(same), f"{sum(same)}/10 runs bit-identical")


def test_9_hybrid_mechanics(moons, moons_model):
    eps = 0.3
    pure = _seeded_runs(moons, moons_model, AttackConfig(method="acg"))
    g2c = _seeded_runs(moons, moons_model, AttackConfig(method="hybrid-gd2cg", switch_eta=2 * eps))
    floor = min(tr.eta.min() for tr in pure) / 2
    c2g = _seeded_runs(moons, moons_model, AttackConfig(method="hybrid-cg2gd", switch_eta=floor))
    a = sum(np.array_equal(p.iterates, q.iterates) for p, q in zip(pure, g2c))
    b = sum(np.array_equal(p.iterates, q.iterates) for p, q in zip(pure, c2g))
    record(9, a == 10 and b == 10, f"GD-to-CG(eta0) {a}/10, CG-to-GD(below final eta) {b}/10 bit-identical")


def test_10_cli_reproducibility(tmp_path):
    def run(tag, workers):
        d = tmp_path / tag
        d.mkdir()
        cmds = [
            ["train-toy", "--epochs", "30", "--out", str(d / "model.json"), "--data-out", str(d / "data.csv")],
            ["attack", "--model", str(tmp_path / "a" / "model.json"), "--inputs", str(tmp_path / "a" / "data.csv"),
             "--eps", "0.1", "--iters", "30", "--restarts", "3", "--limit", "12", "--svg",
             "--workers", str(workers), "--out-dir", str(d / "campaign")],
            ["analyze", "--traces", str(d / "campaign"), "--report", "di", "--out", str(d / "di.csv")],
            ["analyze", "--traces", str(d / "campaign"), "--report", "ctc", "--out", str(d / "ctc.csv")],
            ["cg-check", "--n", "6", "--trials", "10", "--out", str(d / "cg.csv")],
            ["multimodal-demo", "--iters", "40", "--out", str(d / "mm.csv")],
        ]
        codes = [main(c) for c in cmds]
        blobs = {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}
        return codes, blobs

    codes_a, a = run("a", 1)
    codes_b, b = run("b", 4)
    ok = codes_a == codes_b == [0] * 6 and a == b and len(a) == 10
    record(10, ok, f"{len(a)} output files compared, identical: {a == b}, exit codes {codes_a} / {codes_b}")
