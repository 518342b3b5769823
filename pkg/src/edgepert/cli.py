"""Command-line entry point.

    edgepert convert     build a graph directory from raw data or a generator
    edgepert perturb     write a perturbation plan
    edgepert train-eval  train/evaluate over seeds, optionally on a perturbed graph
    edgepert attributes  graph metric report, before/after a plan
    edgepert experiment  vanilla/aug/atk arms over seeds plus an optional EPR sweep

Options can also come from ``--config FILE`` (``key = value`` lines, keys
named like the long options); flags given on the command line win.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import datasets, io, metrics, runner, solver, targetmod
from .errors import DataError, NumericalError, UsageError
from .gnn import GnnConfig, load_checkpoint, save_checkpoint, write_history
from .graph import apply_plan, check_plan

log = logging.getLogger("edgepert")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for data errors here
    def error(self, message):
        raise UsageError(message)


def _csv_list(kind):
    def parse(text):
        try:
            return tuple(kind(t) for t in str(text).replace(" ", "").split(",") if t)
        except ValueError as e:
            raise argparse.ArgumentTypeError(f"bad list {text!r}: {e}")
    return parse


def _on_off(text):
    t = str(text).lower()
    if t in ("on", "true", "1", "yes"):
        return True
    if t in ("off", "false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected on/off, got {text!r}")


def _planted_spec(text):
    keys = {"classes": int, "nodes": int, "p_in": float, "p_out": float, "dim": int,
            "seed": int, "signal": float, "noise": float}
    out = {"classes": 4, "nodes": 50, "p_in": 0.2, "p_out": 0.01, "dim": 16, "seed": 7,
           "signal": 1.0, "noise": 1.0}
    for tok in str(text).split(","):
        if not tok.strip():
            continue
        if "=" not in tok:
            raise argparse.ArgumentTypeError(f"planted spec wants key=value items, got {tok!r}")
        k, v = (s.strip() for s in tok.split("=", 1))
        if k not in keys:
            raise argparse.ArgumentTypeError(f"unknown planted key {k!r}")
        out[k] = keys[k](v)
    return out


# defaults live here rather than in add_argument so a config file can fill
# whatever the command line left unset
DEFAULTS = {
    "seed": 0, "seeds": (0, 1, 2, 3, 4), "method": "priority", "mode": None,
    "model_kind": "gcn2", "epochs": None, "hidden": None, "lr": None, "weight_decay": None,
    "dropout": None, "sgc_k": None, "row_normalize": True,
    "add_ratio": None, "modify_share": 0.5,
    "zeta": 0.5, "rho": 1.0, "eta": 0.01, "outer_iters": 20, "inner_iters": 10,
    "lowrank_epochs": None, "lowrank_top_k": None,
    "aug_epr": 0.2, "atk_epr": 0.47, "sweep": (), "sweep_mode": "atk",
    "timing": True, "figures": True, "n_val": 500, "n_test": 1000,
}


def _graph_options(p):
    g = p.add_argument_group("graph source (one of)")
    g.add_argument("--graph", help="graph directory (edges.txt, labels.txt, features.txt, split.txt)")
    g.add_argument("--planted", type=_planted_spec,
                   help="planted-partition generator, e.g. classes=4,nodes=50,p_in=0.2,p_out=0.01,dim=16,seed=7")


def _model_options(p):
    g = p.add_argument_group("model")
    g.add_argument("--model-kind", choices=("gcn2", "sgc"))
    g.add_argument("--epochs", type=int)
    g.add_argument("--hidden", type=int)
    g.add_argument("--lr", type=float)
    g.add_argument("--weight-decay", type=float)
    g.add_argument("--dropout", type=float)
    g.add_argument("--sgc-k", type=int)
    g.add_argument("--row-normalize", type=_on_off, metavar="on|off")


def _plan_options(p):
    g = p.add_argument_group("planner")
    g.add_argument("--method", choices=runner.METHODS)
    g.add_argument("--add-ratio", type=float, help="share of the pair budget spent on additions")
    g.add_argument("--modify-share", type=float, help="share of the budget for target-guided modification")
    g.add_argument("--zeta", type=float, help="solver binarization threshold")
    g.add_argument("--rho", type=float, help="solver penalty")
    g.add_argument("--eta", type=float, help="solver step size")
    g.add_argument("--outer-iters", type=int)
    g.add_argument("--inner-iters", type=int)
    g.add_argument("--lowrank-epochs", type=int)
    g.add_argument("--lowrank-top-k", type=int)


def _common(p):
    p.add_argument("--config", help="key = value file; command-line flags override it")
    p.add_argument("--out", help="output directory")
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser():
    ap = _Parser(prog="edgepert", description="Edge perturbation for augmentation and attack.")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("convert", help="build a graph directory")
    _common(p)
    p.add_argument("--format", choices=("linqs", "planetoid", "planted"), required=False)
    p.add_argument("--content", help="LINQS .content file")
    p.add_argument("--cites", help="LINQS .cites file")
    p.add_argument("--dir", help="directory with Planetoid ind.<name>.* files")
    p.add_argument("--name", help="Planetoid dataset name")
    p.add_argument("--planted", type=_planted_spec)
    p.add_argument("--seed", type=int, help="split seed")
    p.add_argument("--n-val", type=int)
    p.add_argument("--n-test", type=int)

    p = sub.add_parser("perturb", help="write a perturbation plan")
    _common(p)
    _graph_options(p)
    _plan_options(p)
    _model_options(p)
    p.add_argument("--mode", choices=("aug", "atk"))
    p.add_argument("--epr", type=float)
    p.add_argument("--budget", type=int, help="pair budget")
    p.add_argument("--seed", type=int)
    p.add_argument("--model", help="checkpoint for the solver (trained on the fly if absent)")
    p.add_argument("--plan-out", help="plan path (default OUT/plans/<method>-<mode>-s<seed>.plan)")
    p.add_argument("--figures", type=_on_off, metavar="on|off")

    p = sub.add_parser("train-eval", help="train and evaluate over seeds")
    _common(p)
    _graph_options(p)
    _model_options(p)
    p.add_argument("--plan", help="plan file to apply before training")
    p.add_argument("--seeds", type=_csv_list(int))
    p.add_argument("--timing", type=_on_off, metavar="on|off",
                   help="write wall_ms into results.csv (off gives byte-stable results)")
    p.add_argument("--figures", type=_on_off, metavar="on|off")

    p = sub.add_parser("attributes", help="graph attribute report")
    _common(p)
    _graph_options(p)
    p.add_argument("--plan", help="plan file; adds the perturbed report and the delta")
    p.add_argument("--figures", type=_on_off, metavar="on|off")

    p = sub.add_parser("experiment", help="vanilla/aug/atk arms and an EPR sweep")
    _common(p)
    _graph_options(p)
    _plan_options(p)
    _model_options(p)
    p.add_argument("--seeds", type=_csv_list(int))
    p.add_argument("--aug-epr", type=float)
    p.add_argument("--atk-epr", type=float)
    p.add_argument("--sweep", type=_csv_list(float), help="EPR grid, e.g. 0,0.1,0.2")
    p.add_argument("--sweep-mode", choices=("aug", "atk"))
    p.add_argument("--timing", type=_on_off, metavar="on|off")
    p.add_argument("--figures", type=_on_off, metavar="on|off")
    return ap


# -- config handling ----------------------------------------------------

def read_config(path):
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            k, v = (s.strip() for s in line.split("=", 1))
            out[k.replace("-", "_")] = v
    return out


def _subparser(ap, name):
    for act in ap._actions:
        if isinstance(act, argparse._SubParsersAction):
            return act.choices[name]
    raise KeyError(name)


def resolve_options(ap, ns):
    """Fill unset options from the config file, then from DEFAULTS."""
    sp = _subparser(ap, ns.command)
    actions = {a.dest: a for a in sp._actions}
    if ns.config:
        for k, v in read_config(ns.config).items():
            if k not in actions or k in ("config", "help"):
                raise UsageError(f"{ns.config}: unknown option {k!r} for {ns.command}")
            if getattr(ns, k) is None:
                typ = actions[k].type
                try:
                    setattr(ns, k, typ(v) if typ else v)
                except (argparse.ArgumentTypeError, ValueError) as e:
                    raise UsageError(f"{ns.config}: bad value for {k}: {e}")
                if actions[k].choices and getattr(ns, k) not in actions[k].choices:
                    raise UsageError(f"{ns.config}: {k} must be one of {', '.join(actions[k].choices)}")
    for k, v in DEFAULTS.items():
        if getattr(ns, k, "absent") is None:
            setattr(ns, k, v)
    return ns


def gnn_config(ns) -> GnnConfig:
    base = GnnConfig.for_kind(ns.model_kind)
    over = {k: getattr(ns, k) for k in ("epochs", "hidden", "lr", "weight_decay", "dropout", "sgc_k")
            if getattr(ns, k) is not None}
    over["row_normalize"] = bool(ns.row_normalize)
    return replace(base, **over)


def plan_options(ns) -> runner.PlanOptions:
    lr = targetmod.LowRankConfig()
    if ns.lowrank_epochs is not None:
        lr = replace(lr, epochs=ns.lowrank_epochs)
    if ns.lowrank_top_k is not None:
        lr = replace(lr, top_k=ns.lowrank_top_k)
    sv = solver.SolverConfig(zeta=ns.zeta, rho=ns.rho, eta=ns.eta,
                             outer_iters=ns.outer_iters, inner_iters=ns.inner_iters)
    return runner.PlanOptions(add_ratio=ns.add_ratio, modify_share=ns.modify_share, lowrank=lr, solver=sv)


def load_input_graph(ns):
    if bool(ns.graph) == bool(ns.planted):
        raise UsageError("give exactly one of --graph and --planted")
    if ns.graph:
        return io.load_graph_dir(ns.graph)
    s = ns.planted
    return datasets.generate_planted_partition(s["classes"], s["nodes"], s["p_in"], s["p_out"], s["dim"],
                                               s["seed"], signal=s["signal"], noise=s["noise"])


def _out_dir(ns) -> Path:
    if not ns.out:
        raise UsageError("--out is required")
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(rows, header=None, stream=None):
    wr = csv.writer(stream or sys.stdout, lineterminator="\n")
    if header:
        wr.writerow(header)
    for r in rows:
        wr.writerow(r)


def _load_plan(path, graph):
    plan = io.read_plan(path)
    check_plan(graph, plan)
    return plan


# -- commands -----------------------------------------------------------

def cmd_convert(ns):
    out = _out_dir(ns)
    fmt = ns.format
    if fmt is None:
        raise UsageError("--format is required")
    if fmt == "linqs":
        if not (ns.content and ns.cites):
            raise UsageError("linqs conversion needs --content and --cites")
        g = datasets.convert_linqs(ns.content, ns.cites, seed=ns.seed, n_val=ns.n_val, n_test=ns.n_test)
    elif fmt == "planetoid":
        if not (ns.dir and ns.name):
            raise UsageError("planetoid conversion needs --dir and --name")
        g = datasets.convert_planetoid(ns.dir, ns.name, seed=ns.seed, n_val=ns.n_val, n_test=ns.n_test)
    else:
        if not ns.planted:
            raise UsageError("planted conversion needs --planted")
        s = ns.planted
        g = datasets.generate_planted_partition(s["classes"], s["nodes"], s["p_in"], s["p_out"], s["dim"],
                                                s["seed"], signal=s["signal"], noise=s["noise"])
    io.save_graph_dir(g, out)
    _emit([[out, g.num_nodes, g.num_edges, g.num_classes, g.num_features]],
          ["path", "nodes", "edges", "classes", "features"])
    return EXIT_OK


def cmd_perturb(ns):
    if ns.mode is None:
        raise UsageError("--mode is required")
    runner.check_method_mode(ns.method, ns.mode)
    graph = load_input_graph(ns)
    budget = runner.resolve_budget(graph, ns.epr, ns.budget)
    out = _out_dir(ns)
    model = load_checkpoint(ns.model) if ns.model else None
    res = runner.build_plan(graph, ns.method, ns.mode, budget, ns.seed, gnn_config(ns), plan_options(ns), model)
    path = Path(ns.plan_out) if ns.plan_out else out / "plans" / f"{ns.method}-{ns.mode}-s{ns.seed}.plan"
    io.write_plan(res.plan, path)
    if ns.method == "solver":
        tpath = out / "reports" / f"solver-trace-{ns.mode}-s{ns.seed}.csv"
        tpath.parent.mkdir(parents=True, exist_ok=True)
        tpath.write_text(solver.format_trace(res.trace))
        if ns.figures:
            from . import plotting
            plotting.plot_solver_trace(res.trace, tpath.with_suffix(".png"))
    _emit([[path, ns.method, ns.mode, budget, res.plan.size, len(res.plan.adds), len(res.plan.removes),
            f"{res.plan.epr(graph):.6f}", int(res.plan.truncated), f"{res.wall_ms:.1f}"]],
          ["plan", "method", "mode", "requested", "realized", "adds", "removes", "epr_realized",
           "truncated", "wall_ms"])
    return EXIT_OK


def _write_arm_files(out, res, figures):
    tag = f"{res.arm}-s{res.seed}"
    save_checkpoint(res.model, out / "models" / f"{tag}.ckpt")
    write_history(res.history, out / "reports" / f"history-{tag}.csv")
    if figures:
        from . import plotting
        plotting.plot_training(res.history, out / "reports" / f"history-{tag}.png")


def _summary_rows(summary):
    return [[arm, n, f"{m:.4f}", f"{s:.4f}"] for arm, (m, s, n) in summary.items()]


def cmd_train_eval(ns):
    graph = load_input_graph(ns)
    out = _out_dir(ns)
    if not ns.seeds:
        raise UsageError("seeds must be non-empty")
    plan = _load_plan(ns.plan, graph) if ns.plan else None
    arm = "perturbed" if ns.plan else "vanilla"
    cfg = gnn_config(ns)
    results = []
    with runner.ResultsWriter(out / "results.csv", timing=ns.timing) as wr:
        for seed in sorted(ns.seeds):
            res = runner.train_eval(graph, cfg, seed, plan, arm=arm)
            wr.write(res)
            _write_arm_files(out, res, ns.figures)
            results.append(res)
    _emit([[r.arm, r.seed, f"{r.epr_realized:.6f}", f"{r.test_acc:.4f}"] for r in results],
          ["arm", "seed", "epr_realized", "test_acc"])
    _emit(_summary_rows(runner.summarize(results)), ["arm", "n", "mean", "std"])
    return EXIT_OK


def cmd_attributes(ns):
    graph = load_input_graph(ns)
    out = _out_dir(ns)
    reports = out / "reports"
    reports.mkdir(parents=True, exist_ok=True)
    before = metrics.attribute_report(graph)
    (reports / "attributes.json").write_text(before.to_json())
    (reports / "attributes.txt").write_text(before.to_text())
    rows = [[k, repr(v)] for k, v in before.scalars().items()]
    header = ["metric", "value"]
    if ns.plan:
        plan = _load_plan(ns.plan, graph)
        after = metrics.attribute_report(apply_plan(graph, plan))
        delta = metrics.report_delta(before, after)
        (reports / "attributes_perturbed.json").write_text(after.to_json())
        (reports / "attributes_perturbed.txt").write_text(after.to_text())
        with open(reports / "attributes_delta.csv", "w", newline="") as fh:
            _emit([[k, repr(before.scalars()[k]), repr(after.scalars()[k]), repr(d)] for k, d in delta.items()],
                  ["metric", "before", "after", "delta"], fh)
        if ns.figures:
            from . import plotting
            plotting.plot_attribute_delta(delta, reports / "attributes_delta.png")
        header = ["metric", "before", "after", "delta"]
        rows = [[k, repr(before.scalars()[k]), repr(after.scalars()[k]), repr(d)] for k, d in delta.items()]
    _emit(rows, header)
    return EXIT_OK


def cmd_experiment(ns):
    graph = load_input_graph(ns)
    out = _out_dir(ns)
    if not ns.seeds:
        raise UsageError("seeds must be non-empty")
    for m in runner.experiment_arms(ns.method):
        runner.check_method_mode(ns.method, m)
    cfg = runner.ExperimentConfig(method=ns.method, aug_epr=ns.aug_epr, atk_epr=ns.atk_epr,
                                  seeds=tuple(ns.seeds), sweep=tuple(ns.sweep), sweep_mode=ns.sweep_mode,
                                  gnn=gnn_config(ns), options=plan_options(ns))
    timing_rows = []

    def on_plan(name, seed, pr):
        io.write_plan(pr.plan, out / "plans" / f"{name}-s{seed}.plan")
        timing_rows.append([f"plan:{name}", seed, f"{pr.wall_ms:.1f}"])
        if ns.method == "solver" and pr.trace:
            p = out / "reports" / f"solver-trace-{name}-s{seed}.csv"
            p.parent.mkdir(parents=True, exist_ok=True)
            p.write_text(solver.format_trace(pr.trace))

    with runner.ResultsWriter(out / "results.csv", timing=ns.timing) as wr:
        def on_result(res):
            wr.write(res)
            timing_rows.append([f"arm:{res.arm}", res.seed, f"{res.wall_ms:.1f}"])
            if not res.arm.startswith("sweep_"):
                _write_arm_files(out, res, False)
        results, sweep = runner.run_experiment(graph, cfg, on_result=on_result, on_plan=on_plan)

    reports = out / "reports"
    reports.mkdir(parents=True, exist_ok=True)
    summary = runner.summarize(results)
    # one row per setting, one mean/std column pair per arm
    arms = list(summary)
    head = ["method", "model"] + [f"{a}_{s}" for a in arms for s in ("mean", "std")]
    row = [ns.method, cfg.gnn.kind] + [f"{summary[a][i]:.4f}" for a in arms for i in (0, 1)]
    with open(reports / "table.csv", "w", newline="") as fh:
        _emit([row], head, fh)
    with open(reports / "timing.csv", "w", newline="") as fh:
        _emit(timing_rows, ["phase", "seed", "wall_ms"], fh)
    _emit(_summary_rows(summary), ["arm", "n", "mean", "std"])

    series = None
    if cfg.sweep:
        series = runner.sweep_series(sweep, cfg.sweep_mode, cfg.sweep)
        with open(reports / "sweep.csv", "w", newline="") as fh:
            _emit([[f"{e:g}", f"{m:.6f}", f"{s:.6f}"] for e, m, s in series], ["epr", "mean", "std"], fh)
        _emit([[f"{e:g}", f"{m:.4f}", f"{s:.4f}"] for e, m, s in series], ["epr", "mean", "std"])
    if ns.figures:
        from . import plotting
        plotting.plot_arms(summary, reports / "arms.png")
        if series:
            plotting.plot_sweep({cfg.sweep_mode: series}, reports / "sweep.png",
                                vanilla=summary["vanilla"][0])
    return EXIT_OK


COMMANDS = {"convert": cmd_convert, "perturb": cmd_perturb, "train-eval": cmd_train_eval,
            "attributes": cmd_attributes, "experiment": cmd_experiment}


def main(argv=None) -> int:
    ap = build_parser()
    try:
        ns = ap.parse_args(argv)
        if ns.command is None:
            ap.print_help(sys.stderr)
            return EXIT_USAGE
        logging.basicConfig(level=logging.WARNING - 10 * min(ns.verbose, 2),
                            format="%(levelname)s %(name)s: %(message)s")
        resolve_options(ap, ns)
        return COMMANDS[ns.command](ns)
    except UsageError as e:
        print(f"edgepert: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as e:
        print(f"edgepert: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as e:
        print(f"edgepert: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as e:
        # out-of-range hyperparameters rejected by the config dataclasses
        print(f"edgepert: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
