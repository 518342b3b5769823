"""Plan construction by method, train/evaluate arms and the two-arm experiment.

Everything here is file-agnostic except :class:`ResultsWriter`; the CLI
owns paths and argument parsing.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import epd, solver, targetmod
from .errors import UsageError
from .gnn import GnnConfig, evaluate, init_model, train
from .graph import Graph, PerturbationPlan, apply_plan

log = logging.getLogger(__name__)

METHODS = ("priority", "target-bridge", "target-lowrank", "solver")
RESULT_COLUMNS = ("arm", "seed", "epr_realized", "test_acc", "wall_ms")


def check_method_mode(method: str, mode: str) -> None:
    if method not in METHODS:
        raise UsageError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    if mode not in ("aug", "atk"):
        raise UsageError(f"unknown mode {mode!r}")
    if method == "target-bridge" and mode != "atk":
        raise UsageError("target-bridge is an attack method (use --mode atk)")
    if method == "target-lowrank" and mode != "aug":
        raise UsageError("target-lowrank is an augmentation method (use --mode aug)")


def resolve_budget(graph: Graph, epr=None, budget=None) -> int:
    """Pair budget from exactly one of ``epr`` and ``budget``."""
    if (epr is None) == (budget is None):
        raise UsageError("give exactly one of epr and budget")
    if budget is not None:
        if budget < 0:
            raise UsageError("budget must be non-negative")
        return int(budget)
    if not 0.0 <= epr <= 1.0:
        raise UsageError("epr must lie in [0, 1]")
    return epd.budget_from_epr(graph, epr)


@dataclass
class PlanResult:
    plan: PerturbationPlan
    wall_ms: float
    trace: list = field(default_factory=list)
    info: dict = field(default_factory=dict)


@dataclass(frozen=True)
class PlanOptions:
    add_ratio: Optional[float] = None
    modify_share: float = 0.5
    lowrank: Optional[targetmod.LowRankConfig] = None
    solver: Optional[solver.SolverConfig] = None


def surrogate_model(graph: Graph, gnn: GnnConfig, seed: int):
    """Clean GCN the solver differentiates through (always the gcn2 kind)."""
    cfg = gnn if gnn.kind == "gcn2" else replace(GnnConfig.for_kind("gcn2"), epochs=gnn.epochs)
    model = init_model(cfg, graph.num_features, graph.num_classes, seed)
    return train(model, graph, seed)[0]


def build_plan(graph: Graph, method: str, mode: str, budget: int, seed: int,
               gnn: Optional[GnnConfig] = None, options: PlanOptions = PlanOptions(),
               model=None) -> PlanResult:
    """Dispatch to the planner for ``method``; ``budget`` counts pairs."""
    check_method_mode(method, mode)
    t0 = time.perf_counter()
    trace, info = [], {}
    if method == "priority":
        plan = epd.make_plan(graph, mode, budget, seed, add_ratio=options.add_ratio)
    elif method in ("target-bridge", "target-lowrank"):
        _, plan, mod = targetmod.soln2_plan(graph, mode, budget, seed, modify_share=options.modify_share,
                                            add_ratio=options.add_ratio, lowrank=options.lowrank)
        trace = list(mod.trace)
        info["modified"] = len(mod.removed)
    else:
        if model is None:
            model = surrogate_model(graph, gnn or GnnConfig(), seed)
        base = options.solver or solver.SolverConfig()
        cfg = replace(base, mode=mode, budget=2 * budget, seed=seed)
        plan, trace = solver.solve(graph, model, cfg)
    wall = (time.perf_counter() - t0) * 1000.0
    return PlanResult(plan, wall, trace, info)


@dataclass
class ArmResult:
    arm: str
    seed: int
    epr_realized: float
    test_acc: float
    wall_ms: float
    model: object = None
    history: list = field(default_factory=list)
    plan: Optional[PerturbationPlan] = None

    def row(self, timing=True):
        return {"arm": self.arm, "seed": self.seed, "epr_realized": self.epr_realized,
                "test_acc": self.test_acc, "wall_ms": self.wall_ms if timing else None}


def train_eval(graph: Graph, gnn: GnnConfig, seed: int, plan: Optional[PerturbationPlan] = None,
               arm="vanilla", plan_ms=0.0) -> ArmResult:
    """Apply ``plan`` (if any), train from seed ``seed`` and score the test split."""
    t0 = time.perf_counter()
    g = apply_plan(graph, plan) if plan is not None and plan.size else graph
    model = init_model(gnn, graph.num_features, graph.num_classes, seed)
    model, history = train(model, g, seed)
    acc = evaluate(model, g, "test")
    wall = (time.perf_counter() - t0) * 1000.0 + plan_ms
    epr = plan.epr(graph) if plan is not None else 0.0
    return ArmResult(arm, seed, epr, acc, wall, model, history, plan)


def format_float(x) -> str:
    return "" if x is None else f"{x:.6f}"


class ResultsWriter:
    """Append rows to ``results.csv`` and flush each one, so an abort keeps them."""

    def __init__(self, path, timing=True):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.timing = timing
        self._fh = open(self.path, "w", newline="")
        self._wr = csv.writer(self._fh, lineterminator="\n")
        self._wr.writerow(RESULT_COLUMNS)
        self._fh.flush()

    def write(self, res: ArmResult):
        r = res.row(self.timing)
        self._wr.writerow([r["arm"], r["seed"], format_float(r["epr_realized"]),
                           format_float(r["test_acc"]),
                           "" if r["wall_ms"] is None else f"{r['wall_ms']:.1f}"])
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def summarize(results):
    """``{arm: (mean, std, n)}`` over seeds, arms in first-seen order."""
    by_arm = {}
    for r in results:
        by_arm.setdefault(r.arm, []).append(r.test_acc)
    return {a: (float(np.mean(v)), float(np.std(v)), len(v)) for a, v in by_arm.items()}


def sweep_label(mode, epr):
    return f"sweep_{mode}@{epr:g}"


@dataclass(frozen=True)
class ExperimentConfig:
    method: str = "priority"
    aug_epr: float = 0.2
    atk_epr: float = 0.47
    seeds: tuple = (0, 1, 2, 3, 4)
    sweep: tuple = ()
    sweep_mode: str = "atk"
    gnn: GnnConfig = GnnConfig()
    options: PlanOptions = PlanOptions()


def experiment_arms(method):
    """Modes a method can run in the experiment."""
    if method == "target-bridge":
        return ("atk",)
    if method == "target-lowrank":
        return ("aug",)
    return ("aug", "atk")


def run_experiment(graph: Graph, cfg: ExperimentConfig, on_result=None, on_plan=None):
    """Vanilla plus aug/atk arms for every seed, then the optional EPR sweep.

    ``on_result(ArmResult)`` is called as each arm finishes and
    ``on_plan(name, seed, PlanResult)`` for every plan built.  Returns
    ``(results, sweep_results)``.
    """
    if not cfg.seeds:
        raise UsageError("seeds must be non-empty")
    modes = experiment_arms(cfg.method)
    results, sweep = [], []

    def emit(res, bucket):
        bucket.append(res)
        if on_result is not None:
            on_result(res)

    for seed in sorted(cfg.seeds):
        emit(train_eval(graph, cfg.gnn, seed), results)
        for mode in modes:
            epr = cfg.aug_epr if mode == "aug" else cfg.atk_epr
            budget = epd.budget_from_epr(graph, epr)
            pr = build_plan(graph, cfg.method, mode, budget, seed, cfg.gnn, cfg.options)
            if on_plan is not None:
                on_plan(mode, seed, pr)
            emit(train_eval(graph, cfg.gnn, seed, pr.plan, arm=mode, plan_ms=pr.wall_ms), results)

    if cfg.sweep:
        check_method_mode(cfg.method, cfg.sweep_mode)
        for epr in cfg.sweep:
            for seed in sorted(cfg.seeds):
                budget = epd.budget_from_epr(graph, epr)
                if budget == 0:
                    res = train_eval(graph, cfg.gnn, seed, arm=sweep_label(cfg.sweep_mode, epr))
                else:
                    pr = build_plan(graph, cfg.method, cfg.sweep_mode, budget, seed, cfg.gnn, cfg.options)
                    if on_plan is not None:
                        on_plan(sweep_label(cfg.sweep_mode, epr), seed, pr)
                    res = train_eval(graph, cfg.gnn, seed, pr.plan, arm=sweep_label(cfg.sweep_mode, epr),
                                     plan_ms=pr.wall_ms)
                emit(res, sweep)
    return results, sweep


def sweep_series(sweep_results, mode, grid):
    """Rows ``(epr, mean, std)`` in grid order."""
    out = []
    for epr in grid:
        accs = [r.test_acc for r in sweep_results if r.arm == sweep_label(mode, epr)]
        out.append((float(epr), float(np.mean(accs)), float(np.std(accs))))
    return out
