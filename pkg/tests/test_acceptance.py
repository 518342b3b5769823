"""Acceptance criteria, one test each.

Every test prints a single ``criterion N: PASS|FAIL`` line (also repeated in
the terminal summary) and then asserts, so a failing criterion is visible
both in the verdict list and as a failed test.
"""

import itertools
import time

import numpy as np
import pytest
from scipy.stats import spearmanr

from edgepert import epd, gnn, metrics, runner, solver, targetmod
from edgepert.cli import main
from edgepert.graph import PerturbationPlan, apply_plan, edge_homophily
from conftest import ACCEPTANCE
from oracles import betweenness_brute, bridges_by_removal, make_graph, random_graph

pytestmark = pytest.mark.slow

SEEDS = (0, 1, 2, 3, 4)


def verdict(capsys, n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE.append(line)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


def _arms(graph, aug_epr, atk_epr, method="priority"):
    cfg = runner.ExperimentConfig(method=method, aug_epr=aug_epr, atk_epr=atk_epr, seeds=SEEDS)
    t0 = time.perf_counter()
    results, _ = runner.run_experiment(graph, cfg)
    summary = runner.summarize(results)
    return {k: v[0] for k, v in summary.items()}, time.perf_counter() - t0


# -- 1: aug helps or is neutral, atk hurts -------------------------------------

def test_criterion_1_aug_neutral_attack_harmful(cora, citeseer, capsys):
    parts, ok = [], True
    for name, graph, aug_epr, atk_epr in (("cora", cora, 0.20, 0.47), ("citeseer", citeseer, 0.02, 0.37)):
        m, secs = _arms(graph, aug_epr, atk_epr)
        good = (m["aug"] >= m["vanilla"] - 0.005 and m["atk"] <= m["vanilla"] - 0.01 and secs <= 600)
        if name == "cora":
            good &= 0.78 <= m["vanilla"] <= 0.88
        ok &= good
        parts.append(f"{name}: vanilla {m['vanilla']:.4f} aug {m['aug']:.4f} atk {m['atk']:.4f} ({secs:.0f}s)")
    verdict(capsys, 1, ok, "; ".join(parts))


# -- 2: bridge removal plus priority beats priority alone -----------------------

def test_criterion_2_bridge_attack_at_least_as_strong(cora, capsys):
    cfg = runner.ExperimentConfig()
    budget = epd.budget_from_epr(cora, 0.47)
    means = {}
    for method in ("priority", "target-bridge"):
        accs = []
        for seed in SEEDS:
            pr = runner.build_plan(cora, method, "atk", budget, seed, cfg.gnn, cfg.options)
            accs.append(runner.train_eval(cora, cfg.gnn, seed, pr.plan, arm="atk").test_acc)
        means[method] = float(np.mean(accs))
    ok = means["target-bridge"] <= means["priority"]
    verdict(capsys, 2, ok, f"cora atk 47%: target-bridge {means['target-bridge']:.4f} "
                           f"<= priority {means['priority']:.4f}")


# -- 3: sweep trend on the planted fixture --------------------------------------

def test_criterion_3_epr_sweep_trend(sweep_graph, capsys):
    grid = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
    cfg = runner.ExperimentConfig(aug_epr=0.05, atk_epr=0.3, seeds=SEEDS, sweep=grid, sweep_mode="atk")
    results, sweep = runner.run_experiment(sweep_graph, cfg)
    series = runner.sweep_series(sweep, "atk", grid)
    means = [m for _, m, _ in series]
    rho = spearmanr(grid, means).statistic
    summary = runner.summarize(results)
    van, aug = summary["vanilla"][0], summary["aug"][0]
    ok = rho < 0 and aug >= van
    verdict(capsys, 3, ok, f"atk means {[round(m, 3) for m in means]} spearman {rho:.3f}; "
                           f"aug@0.05 {aug:.4f} vs vanilla {van:.4f}")


# -- 4: oracle equivalences -------------------------------------------------------

def _bridge_cases():
    rng = np.random.default_rng(2024)
    for _ in range(500):
        n = int(rng.integers(2, 60))
        g = random_graph(rng, n, float(rng.uniform(0.0, 0.25)))
        while g.num_edges > 200:
            g = random_graph(rng, n, float(rng.uniform(0.0, 0.1)))
        yield g


def _grad_fixture(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(6, 21))
    return random_graph(rng, n, 0.25, classes=3, train_frac=0.6, feature_dim=5), rng


def _adjacency_grad_error(seed):
    g, rng = _grad_fixture(seed)
    m = gnn.init_model(gnn.GnnConfig(hidden=6), 5, 3, seed=seed)
    mode = "aug" if seed % 2 else "atk"
    t = solver.train_targets(m, g, mode)
    if t.size == 0:
        return 0.0
    x = gnn.prepare_features(g.features)
    st = solver.init_state(g, solver.SolverConfig(mode=mode))
    st.A = np.abs(st.A0 - solver.symmetrize(rng.uniform(0, 0.3, size=st.A.shape)))
    _, grad = solver.loss_and_grad_adj(st, m, g, t, x)
    n, eps = g.num_nodes, 1e-4
    num = np.zeros((n, n))
    for u, v in itertools.combinations(range(n), 2):
        vals = []
        for sgn in (1, -1):
            a = st.A.copy()
            a[u, v] += sgn * eps
            a[v, u] += sgn * eps
            vals.append(solver.loss_and_grad_adj(solver.SolverState(a, st.A0), m, g, t, x)[0])
        num[u, v] = num[v, u] = (vals[0] - vals[1]) / (4 * eps)
    return float(np.abs(grad - num).max() / max(np.abs(num).max(), 1e-12))


def _param_grad_error(seed):
    g, _ = _grad_fixture(seed)
    kind = "sgc" if seed % 3 == 0 else "gcn2"
    m = gnn.init_model(gnn.GnnConfig.for_kind(kind, hidden=4), 5, 3, seed=seed)
    a_hat, x = gnn.normalize_adjacency(g), gnn.prepare_features(g.features)
    idx = g.nodes_in("train")
    if idx.size == 0:
        return 0.0
    _, grads = gnn.loss_and_grads(m, a_hat, x, g.labels, idx)
    worst = 0.0
    for name, w in m.weights.items():
        num = np.zeros_like(w)
        for i in np.ndindex(w.shape):
            old = w[i]
            w[i] = old + 1e-6
            fp = gnn.loss_and_grads(m, a_hat, x, g.labels, idx)[0]
            w[i] = old - 1e-6
            fm = gnn.loss_and_grads(m, a_hat, x, g.labels, idx)[0]
            w[i] = old
            num[i] = (fp - fm) / 2e-6
        worst = max(worst, float(np.abs(grads[name] - num).max() / max(np.abs(num).max(), 1e-12)))
    return worst


def test_criterion_4_oracle_equivalences(capsys):
    bridges_ok = sum(list(targetmod.find_bridges(g).bridges) == bridges_by_removal(g) for g in _bridge_cases())

    rng = np.random.default_rng(77)
    bc_ok = 0
    for _ in range(100):
        g = random_graph(rng, int(rng.integers(3, 26)), float(rng.uniform(0.05, 0.4)))
        bc_ok += np.allclose(metrics.betweenness_centrality(g)[0], betweenness_brute(g), rtol=0, atol=1e-9)

    svd_ok = 0
    for seed in range(50):
        mat = np.random.default_rng(seed).normal(size=(30, 30))
        s, _, _ = targetmod.top_k_singular(mat, 5, tol=1e-12, max_iters=5000, seed=seed)
        svd_ok += np.allclose(s, np.linalg.svd(mat, compute_uv=False)[:5], rtol=0, atol=1e-5)

    adj_err = max(_adjacency_grad_error(s) for s in range(10))
    par_err = max(_param_grad_error(s) for s in range(10))
    ok = (bridges_ok == 500 and bc_ok == 100 and svd_ok == 50 and adj_err <= 1e-3 and par_err <= 1e-4)
    verdict(capsys, 4, ok, f"bridges {bridges_ok}/500, brandes {bc_ok}/100, top-k {svd_ok}/50, "
                           f"adjacency grad rel err {adj_err:.1e}, parameter grad rel err {par_err:.1e}")


# -- 5: algebraic invariants, 200 randomized cases each ----------------------------

def _random_plan(rng, g):
    n = g.num_nodes
    pairs = list(itertools.combinations(range(n), 2))
    flags = rng.random(len(pairs))
    removes = [p for p, f in zip(pairs, flags) if p in g.edge_set and f < 0.3]
    adds = [p for p, f in zip(pairs, flags) if p not in g.edge_set and f < 0.15]
    return PerturbationPlan(adds, removes)


def _random_state(rng):
    n = int(rng.integers(2, 12))
    upper = np.triu((rng.random((n, n)) < 0.4).astype(float), 1)
    a0 = upper + upper.T
    a = np.clip(a0 + solver.symmetrize(rng.normal(scale=0.6, size=(n, n))), 0, 1)
    np.fill_diagonal(a, 0)
    cfg = solver.SolverConfig(budget=2 * int(rng.integers(0, n + 1)), zeta=float(rng.uniform(0.05, 0.95)),
                              rho=float(rng.uniform(0.1, 5)), eta=float(rng.uniform(0.001, 0.5)))
    return solver.SolverState(a, a0, float(rng.uniform(-3, 3)), []), cfg


def test_criterion_5_invariants(capsys):
    rng = np.random.default_rng(5)
    cases = 200
    counts = dict.fromkeys(("xor", "l0_l1", "homophily", "budget", "symmetry"), 0)
    for _ in range(cases):
        g = random_graph(rng, int(rng.integers(2, 15)), float(rng.uniform(0.1, 0.6)))
        plan = _random_plan(rng, g)
        counts["xor"] += apply_plan(apply_plan(g, plan), plan.inverse()) == g

        state, cfg = _random_state(rng)
        bplan = solver.binarize(state, cfg)
        n = state.A.shape[0]
        base = make_graph(n, [tuple(e) for e in np.argwhere(np.triu(state.A0, 1) > 0)])
        d = apply_plan(base, bplan).adjacency.toarray() - state.A0
        counts["l0_l1"] += np.count_nonzero(d) == np.abs(d).sum()
        counts["budget"] += np.count_nonzero(d) <= cfg.budget

        sym = True
        for _ in range(3):
            grad = solver.symmetrize(rng.normal(size=(n, n)))
            state = solver.prox_step(state, cfg, solver.smooth_gradient(state, cfg, grad))
            state = solver.multiplier_update(state, cfg)
            a = state.A
            sym &= bool(np.array_equal(a, a.T) and not np.diag(a).any() and a.min() >= 0 and a.max() <= 1)
        counts["symmetry"] += sym

        lg = random_graph(rng, int(rng.integers(4, 16)), float(rng.uniform(0.1, 0.6)),
                          classes=int(rng.integers(2, 4)), train_frac=0.8)
        while len(lg.nodes_in("train")) < 2 or lg.num_edges == 0:
            lg = random_graph(rng, 10, 0.4, classes=2, train_frac=0.8)
        mode = "aug" if rng.random() < 0.5 else "atk"
        p = epd.make_plan(lg, mode, int(rng.integers(0, 15)), int(rng.integers(0, 10 ** 6)),
                          add_ratio=float(rng.choice([0.0, 0.5, 1.0])))
        out = apply_plan(lg, p)
        if out.num_edges == 0:
            counts["homophily"] += 1
        else:
            before, after = edge_homophily(lg), edge_homophily(out)
            counts["homophily"] += after >= before - 1e-12 if mode == "aug" else after <= before + 1e-12
    ok = all(v == cases for v in counts.values())
    verdict(capsys, 5, ok, ", ".join(f"{k} {v}/{cases}" for k, v in counts.items()))


# -- 6: metric sanity ----------------------------------------------------------------

def test_criterion_6_metric_sanity(solver_graph, capsys):
    k3 = metrics.attribute_report(make_graph(3, [(0, 1), (1, 2), (0, 2)]))
    k3_ok = (k3.ge, k3.cc, k3.bc_mean, k3.dc_mean) == (1.0, 1.0, 0.0, 1.0)

    rng = np.random.default_rng(6)
    ref = metrics.attribute_report(solver_graph)
    iso_ok = 0
    for _ in range(100):
        perm = rng.permutation(solver_graph.num_nodes)
        r = metrics.attribute_report(make_graph(solver_graph.num_nodes,
                                                [(perm[u], perm[v]) for u, v in solver_graph.edges.tolist()]))
        iso_ok += r.dd_hist == ref.dd_hist and all(
            abs(v - r.scalars()[k]) <= 1e-12 for k, v in ref.scalars().items())

    ge_total = ge_ok = 0
    for seed in range(5):
        r2 = np.random.default_rng(seed)
        n = 14
        tree = [(int(r2.integers(0, i)), i) for i in range(1, n)]
        g = make_graph(n, tree + [e for e in itertools.combinations(range(n), 2) if r2.random() < 0.08])
        ge = metrics.global_efficiency(g)
        for e in itertools.combinations(range(n), 2):
            if e in g.edge_set:
                continue
            ge_total += 1
            ge_ok += metrics.global_efficiency(apply_plan(g, PerturbationPlan(adds=[e]))) > ge
    ok = k3_ok and iso_ok == 100 and ge_ok == ge_total
    verdict(capsys, 6, ok, f"report(K3) {'ok' if k3_ok else 'wrong'}, isomorphism {iso_ok}/100, "
                           f"strict GE rise {ge_ok}/{ge_total} additions")


# -- 7: determinism -------------------------------------------------------------------

def _cli(*argv):
    code = main([str(a) for a in argv])
    assert code == 0, argv
    return code


def _run_all(root, timing):
    planted = "classes=3,nodes=20,p_in=0.3,p_out=0.02,dim=8,seed=1"
    g = root / "graph"
    _cli("convert", "--format", "planted", "--planted", planted, "--out", g)
    fast = ["--epochs", "30", "--figures", "off"]
    for method, mode in (("priority", "aug"), ("priority", "atk"), ("target-bridge", "atk"),
                         ("target-lowrank", "aug"), ("solver", "atk")):
        _cli("perturb", "--graph", g, "--method", method, "--mode", mode, "--epr", "0.1", "--seed", "3",
             "--out", root / "perturb", "--outer-iters", "3", "--lowrank-epochs", "20", *fast)
    _cli("train-eval", "--graph", g, "--seeds", "0,1", "--plan", root / "perturb" / "plans" / "priority-atk-s3.plan",
         "--timing", timing, "--out", root / "train", *fast)
    _cli("attributes", "--graph", g, "--plan", root / "perturb" / "plans" / "priority-atk-s3.plan",
         "--out", root / "attr", "--figures", "off")
    _cli("experiment", "--graph", g, "--seeds", "0,1", "--sweep", "0,0.2", "--timing", timing,
         "--out", root / "exp", *fast)


def _strip_wall(text):
    return [line.rsplit(",", 1)[0] for line in text.splitlines()]


def test_criterion_7_determinism(tmp_path, capsys):
    for run in ("a", "b"):
        _run_all(tmp_path / f"off-{run}", "off")
        _run_all(tmp_path / f"on-{run}", "on")
    capsys.readouterr()

    def files(root, pattern):
        return sorted(p.relative_to(root) for p in root.rglob(pattern))

    a, b = tmp_path / "off-a", tmp_path / "off-b"
    plans = files(a, "*.plan")
    plans_same = plans == files(b, "*.plan") and all((a / p).read_bytes() == (b / p).read_bytes() for p in plans)
    results = files(a, "results.csv")
    results_same = all((a / p).read_bytes() == (b / p).read_bytes() for p in results)
    attr_same = all((a / "attr" / "reports" / f).read_bytes() == (b / "attr" / "reports" / f).read_bytes()
                    for f in ("attributes.json", "attributes_delta.csv"))
    on_a, on_b = tmp_path / "on-a", tmp_path / "on-b"
    timed_same = all(_strip_wall((on_a / p).read_text()) == _strip_wall((on_b / p).read_text()) for p in results)
    ok = plans_same and results_same and attr_same and timed_same and len(plans) >= 5
    verdict(capsys, 7, ok, f"{len(plans)} plan files byte-identical: {plans_same}; "
                           f"{len(results)} results.csv byte-identical with timing off: {results_same}; "
                           f"attribute reports identical: {attr_same}; "
                           f"with timing on, all but wall_ms identical: {timed_same}")
