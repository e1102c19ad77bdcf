"""Command-line entry point: train, eval, analyze, gen-synth, bias-sim,
homophily-bins.

Exit codes: 0 success, 1 usage error, 2 data/config error. HETERSEED_THREADS
caps BLAS parallelism and must be applied before numpy loads, so all heavy
imports happen inside main().
"""
from __future__ import annotations

import argparse
import os
import sys

PRESETS = {
    "dblp": dict(lr=1e-3, hidden_dim=128, dropout=0.7, epochs=50, alpha=0.2, beta=0.7),
    "imdb": dict(lr=5e-3, hidden_dim=128, dropout=0.9, epochs=50, alpha=0.2, beta=0.6),
    "acm": dict(lr=5e-3, hidden_dim=128, dropout=0.9, epochs=100, alpha=0.3, beta=0.7),
    "mag": dict(
        lr=5e-3, hidden_dim=256, dropout=0.3, epochs=50, alpha=0.4, beta=1.0,
        batch_size=1024, neighbor_fanout=(15, 15),
    ),
    "rcdd": dict(
        lr=5e-3, hidden_dim=256, dropout=0.7, epochs=100, alpha=0.2, beta=0.7,
        batch_size=1024, neighbor_fanout=(15, 15),
    ),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _apply_thread_cap():
    cap = os.environ.get("HETERSEED_THREADS")
    if not cap:
        return
    for var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
    ):
        os.environ.setdefault(var, cap)


def build_parser():
    parser = _Parser(prog="heterseed", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add_train_flags(p, with_training=True):
        p.add_argument("--graph", required=True, help="graph directory")
        p.add_argument(
            "--metapaths", nargs="+", required=True,
            help="metapath specs: 'A-P-A' shorthand or comma-joined relation names",
        )
        if with_training:
            p.add_argument("--preset", choices=sorted(PRESETS))
            p.add_argument("--lr", type=float)
            p.add_argument("--hidden", type=int, dest="hidden_dim")
            p.add_argument("--dropout", type=float)
            p.add_argument("--epochs", type=int)
            p.add_argument("--layers", type=int)
            p.add_argument("--alpha", type=float)
            p.add_argument("--beta", type=float)
            p.add_argument("--batch-size", type=int, dest="batch_size")
            p.add_argument(
                "--fanout", dest="neighbor_fanout",
                help="per-layer neighbor sample sizes, e.g. 15,15",
            )
            p.add_argument("--seed", type=int)
            p.add_argument("--dec-variant", choices=("cosine", "crosscov"),
                           dest="dec_variant")
            p.add_argument("--refresh-period", type=int, dest="refresh_period")
            for flag in ("no-shc", "no-dec", "no-homo", "no-hetero", "no-mask"):
                p.add_argument(
                    f"--{flag}", action="store_true", dest=flag.replace("-", "_")
                )

    p_train = sub.add_parser("train", help="train a model")
    add_train_flags(p_train)
    p_train.add_argument("--checkpoint", help="where to write the best parameters")
    p_train.add_argument("--log", help="where to write the per-epoch TSV log")
    p_train.add_argument("--parallel-seeds", type=int, default=1,
                         help="run k seeded trainings concurrently, report mean±std")

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    add_train_flags(p_eval)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--split", default="test", choices=("train", "val", "test"))

    p_an = sub.add_parser("analyze", help="homophily/similarity table per metapath")
    p_an.add_argument("--graph", required=True)
    p_an.add_argument("--metapaths", nargs="+", required=True)
    p_an.add_argument("--out", help="write TSV here instead of stdout")

    p_gen = sub.add_parser("gen-synth", help="generate synthetic graphs")
    gsub = p_gen.add_subparsers(dest="generator", required=True)
    p_t1 = gsub.add_parser("theorem1")
    p_t1.add_argument("--n", type=int, required=True)
    p_t1.add_argument("--m-same", type=int, required=True, dest="m_same")
    p_t1.add_argument("--m-diff", type=int, required=True, dest="m_diff")
    p_t1.add_argument("--feat-dim", type=int, default=8, dest="feat_dim")
    p_t1.add_argument("--out", required=True)
    p_sbm = gsub.add_parser("sbm")
    p_sbm.add_argument("--base", required=True, help="base graph directory")
    p_sbm.add_argument("--metapaths", nargs="+", required=True)
    p_sbm.add_argument("--rho", type=float, required=True)
    p_sbm.add_argument("--mode", choices=("high", "low"), required=True)
    p_sbm.add_argument("--seed", type=int, default=0)
    p_sbm.add_argument("--out", required=True)
    p_cl = gsub.add_parser("clustered")
    p_cl.add_argument("--cliques", type=int, default=100)
    p_cl.add_argument("--clique-size", type=int, default=3, dest="clique_size")
    p_cl.add_argument("--same-frac", type=float, default=0.7, dest="same_frac")
    p_cl.add_argument("--classes", type=int, default=4)
    p_cl.add_argument("--feat-mode", choices=("class", "constant"), default="class",
                      dest="feat_mode")
    p_cl.add_argument("--seed", type=int, default=0)
    p_cl.add_argument("--out", required=True)

    p_bias = sub.add_parser("bias-sim", help="heterophily bias table")
    p_bias.add_argument("--q-grid", required=True, dest="q_grid",
                        help="comma-separated q values in [0,1]")
    p_bias.add_argument("--trials", type=int, default=32)
    p_bias.add_argument("--out", help="write TSV here instead of stdout")

    p_bins = sub.add_parser(
        "homophily-bins", help="per-bin test metrics, full model vs --no-shc"
    )
    add_train_flags(p_bins)
    p_bins.add_argument("--out", help="write TSV here instead of stdout")
    return parser


def _make_config(args):
    from .trainer import TrainConfig

    base = dict(PRESETS[args.preset]) if getattr(args, "preset", None) else {}
    for name in (
        "lr", "hidden_dim", "dropout", "epochs", "layers", "alpha", "beta",
        "batch_size", "seed", "dec_variant", "refresh_period",
        "no_shc", "no_dec", "no_homo", "no_hetero", "no_mask",
    ):
        val = getattr(args, name, None)
        if val is not None and val is not False:
            base[name] = val
    fanout = getattr(args, "neighbor_fanout", None)
    if fanout:
        base["neighbor_fanout"] = tuple(int(x) for x in fanout.split(","))
    return TrainConfig(**base)


def _write_or_print(text, out_path):
    if out_path:
        with open(out_path, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def _cmd_train(args):
    import numpy as np

    from .graph import load_graph
    from .optim import save_params
    from .trainer import format_log, train

    g = load_graph(args.graph)
    cfg = _make_config(args)
    if args.parallel_seeds > 1:
        from concurrent.futures import ThreadPoolExecutor
        from dataclasses import replace

        seeds = [cfg.seed + i for i in range(args.parallel_seeds)]
        with ThreadPoolExecutor(max_workers=args.parallel_seeds) as pool:
            results = list(
                pool.map(
                    lambda s: train(g, args.metapaths, replace(cfg, seed=s)), seeds
                )
            )
        metrics = np.array([r.test_metrics for r in results])
        mean, std = metrics.mean(axis=0), metrics.std(axis=0)
        print(f"seeds: {seeds}")
        print(f"test macro-f1: {mean[0]:.4f} ± {std[0]:.4f}")
        print(f"test micro-f1: {mean[1]:.4f} ± {std[1]:.4f}")
        print(f"test ap:       {mean[2]:.4f} ± {std[2]:.4f}")
        result = results[0]
    else:
        result = train(g, args.metapaths, cfg)
        print(
            "test\tmacro={:.6f}\tmicro={:.6f}\tap={:.6f}".format(*result.test_metrics)
        )
    if args.log:
        with open(args.log, "w") as f:
            f.write(format_log(result.log_rows, result.test_metrics))
    if args.checkpoint:
        save_params(
            {k: v for k, v in result.model.all_named_params().items()},
            args.checkpoint,
        )
    return 0


def _cmd_eval(args):
    from .graph import load_graph
    from .model import HeterSeedModel
    from .optim import load_params
    from .trainer import build_weights, evaluate, partition_neighbors, refresh_pseudo_labels

    g = load_graph(args.graph)
    cfg = _make_config(args)
    state = load_params(args.checkpoint)
    hidden = state["fusion.cls_w"].shape[0]
    model = HeterSeedModel(g, hidden, layers=cfg.layers, seed=cfg.seed)
    model.load_state(state)
    weights = build_weights(g, args.metapaths)
    from .trainer import _bootstrap_pseudo

    partition = partition_neighbors(weights, _bootstrap_pseudo(g).labels)
    pseudo = refresh_pseudo_labels(model, partition, cfg)
    partition = partition_neighbors(weights, pseudo.labels)
    ma, mi, ap = evaluate(model, partition, args.split, cfg)
    print(f"{args.split}\tmacro={ma:.6f}\tmicro={mi:.6f}\tap={ap:.6f}")
    return 0


def _cmd_analyze(args):
    from .graph import load_graph
    from .metapaths import build_induced_graph, parse_metapath, similarity_vs_homophily

    g = load_graph(args.graph)
    paths = [parse_metapath(p, g) for p in args.metapaths]
    rows, fit = similarity_vs_homophily(g, paths)
    lines = ["metapath\tedges\thomophily\tmean_cosine"]
    for p, cos, hom in rows:
        n_edges = len(build_induced_graph(g, p).edge_arrays()[0])
        lines.append(f"{p.name}\t{n_edges}\t{hom:.6f}\t{cos:.6f}")
    lines.append(
        f"fit\tslope={fit['slope']:.6f}\tintercept={fit['intercept']:.6f}"
        f"\tr2={fit['r2']:.6f}"
    )
    _write_or_print("\n".join(lines) + "\n", args.out)
    return 0


def _cmd_gen_synth(args):
    from .graph import load_graph, save_graph
    from .synth import (
        SbmInjectConfig,
        Theorem1Config,
        gen_clustered,
        gen_theorem1,
        sbm_inject,
    )

    if args.generator == "theorem1":
        g = gen_theorem1(
            Theorem1Config(
                n=args.n, m_same=args.m_same, m_diff=args.m_diff, feat_dim=args.feat_dim
            )
        )
    elif args.generator == "sbm":
        base = load_graph(args.base)
        g = sbm_inject(
            SbmInjectConfig(
                base=base,
                metapaths=args.metapaths,
                rho=args.rho,
                mode=args.mode,
                seed=args.seed,
            )
        )
    else:
        g = gen_clustered(
            n_cliques=args.cliques,
            clique_size=args.clique_size,
            same_frac=args.same_frac,
            n_classes=args.classes,
            feat_mode=args.feat_mode,
            seed=args.seed,
        )
    save_graph(g, args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_bias_sim(args):
    from .synth import bias_simulation

    grid = [float(x) for x in args.q_grid.split(",")]
    rows = bias_simulation(grid, trials=args.trials)
    lines = ["q\tempirical_sq_bias\tclosed_form_4q2"]
    for q, emp, closed in rows:
        lines.append(f"{q:.6f}\t{emp:.12f}\t{closed:.12f}")
    _write_or_print("\n".join(lines) + "\n", args.out)
    return 0


def _cmd_homophily_bins(args):
    from dataclasses import replace

    import numpy as np

    from .graph import load_graph
    from .metapaths import bin_by_local_homophily, local_homophily
    from .metrics import micro_f1
    from .trainer import predictions_from_logits, resolve_metapaths, train
    from .metapaths import build_induced_graph
    from .masking import INFER

    g = load_graph(args.graph)
    cfg = _make_config(args)
    paths = resolve_metapaths(g, args.metapaths)

    counts = build_induced_graph(g, paths[0]).counts.copy()
    for p in paths[1:]:
        counts = counts + build_induced_graph(g, p).counts
    from .metapaths import InducedGraph

    union = InducedGraph(metapath=paths[0], counts=counts.tocsr())
    loc = local_homophily(union, g.labels)
    bins = bin_by_local_homophily(loc)

    test = np.asarray(g.splits["test"], dtype=np.int64)
    lines = ["bin\tnodes\tfull_micro\tno_shc_micro"]
    results = {}
    for tag, run_cfg in (("full", cfg), ("no_shc", replace(cfg, no_shc=True))):
        res = train(g, args.metapaths, run_cfg)
        out = res.model.forward(
            res.partition, mode=INFER, beta=run_cfg.beta,
            no_shc=run_cfg.no_shc, no_mask=run_cfg.no_mask,
        )
        results[tag] = predictions_from_logits(out.logits.data, g.label_mode)
    for (lo, hi), idx in zip(
        ((0.0, 0.2), (0.2, 0.4), (0.4, 0.6), (0.6, 0.8), (0.8, 1.0)), bins
    ):
        sel = np.intersect1d(idx, test)
        if len(sel) == 0:
            lines.append(f"({lo},{hi}]\t0\tnan\tnan")
            continue
        full = micro_f1(g.labels[sel], results["full"][sel], g.num_classes)
        ablated = micro_f1(g.labels[sel], results["no_shc"][sel], g.num_classes)
        lines.append(f"({lo},{hi}]\t{len(sel)}\t{full:.6f}\t{ablated:.6f}")
    _write_or_print("\n".join(lines) + "\n", args.out)
    return 0


def run(argv=None):
    _apply_thread_cap()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        sys.stderr.write(str(e) + "\n")
        return 1
    from .fusion import EmptyMaskError
    from .graph import GraphError
    from .metapaths import EmptyEdgeSetError, EmptyListError, MetapathError
    from .metrics import EmptySplitError
    from .synth import ConfigError
    from .trainer import ConfigValidationError

    handlers = {
        "train": _cmd_train,
        "eval": _cmd_eval,
        "analyze": _cmd_analyze,
        "gen-synth": _cmd_gen_synth,
        "bias-sim": _cmd_bias_sim,
        "homophily-bins": _cmd_homophily_bins,
    }
    try:
        return handlers[args.command](args)
    except (
        GraphError,
        MetapathError,
        EmptyEdgeSetError,
        EmptyListError,
        EmptyMaskError,
        EmptySplitError,
        ConfigError,
        ConfigValidationError,
        FileNotFoundError,
        IOError,
    ) as e:
        sys.stderr.write(f"error: {e}\n")
        return 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
