"""Command-line entry point: ``adamra {verify,gradcheck,bench,smat,train}``.

Exit status: 0 on success, 1 when a check fails (or training diverges),
2 for usage and configuration errors.
"""

import argparse
import os
import sys
from fractions import Fraction
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import bench, config, diffcheck, verify
from .layer import AdamraConfig
from .tasks import ModelConfig, TrainHyper, gen_copy_task, gen_nested_ops, train
from .tasks.train import DivergenceError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
OUT_ENV = "ADAMRA_OUT"
REFERENCE_H = 1e-5


class UsageError(Exception):
    pass


def _csv_list(kind):
    def parse(text):
        try:
            return tuple(kind(part) for part in text.split(",") if part.strip())
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    return parse


def _write(out_dir, name, text):
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(text, encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def cmd_verify(args, values, out):
    seeds = args.seeds if args.seeds is not None else values["verify.seeds"]
    if seeds < 1:
        raise UsageError("--seeds must be positive")
    results = verify.run_suite(seeds, args.seed, args.fault)
    lines = [r.line() for r in results]
    failed = sum(not r.passed for r in results)
    lines.append(f"{len(results) - failed}/{len(results)} properties passed")
    text = "\n".join(lines) + "\n"
    print(text, end="")
    _write(out, "verify.txt", text)
    return EXIT_FAIL if failed else EXIT_OK


# ---------------------------------------------------------------------------
# gradcheck
# ---------------------------------------------------------------------------


def gradcheck_tolerance(base_tol, h):
    """Central differences err by O(h^2); scale the bound for steps above the reference."""
    return base_tol * max(1.0, (h / REFERENCE_H) ** 2)


def small_config(values):
    """The configured layer flavor (phi, routing, gating) at finite-difference size."""
    return AdamraConfig(
        d=4, heads=3, subheads=2,
        rates=(Fraction(1, 2), Fraction(1, 4), Fraction(1)),
        phi=values["adamra.phi"], eps=values["adamra.eps"],
        routing=values["adamra.routing"], gate_scaling=values["adamra.gate_scaling"],
    )


def cmd_gradcheck(args, values, out):
    h = args.h if args.h is not None else values["gradcheck.h"]
    if not h > 0:
        raise UsageError("--h must be positive")
    tol = gradcheck_tolerance(values["gradcheck.tol"], h)
    seeds = args.seeds if args.seeds is not None else values["gradcheck.seeds"]
    try:
        cfg = small_config(values)
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    results = [diffcheck.check_adamra(cfg, 8, args.seed + i, h) for i in range(seeds)]
    for i in range(min(seeds, 3)):
        results.append(diffcheck.check_multi_head(4, 2, 8, args.seed + i, "softmax", h=h))
        results.append(diffcheck.check_multi_head(4, 2, 8, args.seed + i, "kernel", cfg.phi if cfg.phi != "softmax" else "relu", h))

    rows = ["label,rel_error,x_rel_error,passed"]
    status = EXIT_OK
    for r in results:
        ok = r.max_error <= tol
        rows.append(f"{r.label},{r.rel_error:.6e},{r.x_rel_error:.6e},{int(ok)}")
        print(f"{'PASS' if ok else 'FAIL'} {r.label:<32} max rel error {r.max_error:.3e}")
        if not ok:
            print(diffcheck.format_table(r))
            status = EXIT_FAIL
    print(f"tolerance {tol:.3e} (h={h:g})")
    print(diffcheck.format_table(results[0]))
    _write(out, "gradcheck.csv", "\n".join(rows) + "\n")
    return status


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------


def cmd_bench(args, values, out):
    ns = args.n or values["bench.n"]
    models = args.models or tuple(m.strip() for m in values["bench.models"].split(","))
    unknown = set(models) - set(bench.MODELS)
    if unknown:
        raise UsageError(f"unknown model(s) {sorted(unknown)}; choose from {bench.MODELS}")
    if min(ns) < 64:
        raise UsageError("benchmark lengths start at 64")
    rates = values["bench.c"]
    trials = args.trials or values["bench.trials"]
    common = dict(trials=trials, seed=args.seed, warmup=values["bench.warmup"])

    stats = bench.run_grid(models, ns, d=values["adamra.d"], heads=values["bench.heads"],
                           rates=rates, log=print, **common)
    path = _write(out, "timings.csv", bench.timings_csv(stats))
    summary = []
    for model, slope in bench.log_slopes(stats).items():
        summary.append(f"{model} log-log slope {slope:.3f}")
    ratios = bench.memory_ratios(ns, values["adamra.d"], values["bench.heads"], rates)
    summary.append("analytic memory ratio softmax/adamra: "
                   + " ".join(f"n={n}:{r:.2f}" for n, r in zip(ns, ratios)))

    if args.backends:
        from . import _backend
        missing = set(args.backends) - set(_backend.available_backends())
        if missing:
            raise UsageError(f"backend(s) not available: {sorted(missing)}")
        rows = bench.compare_backends(ns, backends=args.backends, log=print, **common)
        lines = ["backend,n,median_s,min_s"]
        lines += [f"{name},{s.n},{s.median_s:.6g},{s.min_s:.6g}" for name, s in rows]
        _write(out, "backends.csv", "\n".join(lines) + "\n")

    text = "\n".join(summary) + "\n"
    print(text, end="")
    _write(out, "slopes.txt", text)
    print(f"wrote {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# smat
# ---------------------------------------------------------------------------


def cmd_smat(args, values, out):
    try:
        text = Path(args.input).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {args.input}: {exc.strerror}") from None
    try:
        scored = bench.smat_csv(bench.read_smat_csv(text))
    except (ValueError, KeyError) as exc:
        raise UsageError(f"{args.input}: {exc}") from None
    print(scored, end="")
    _write(out, "smat.csv", scored)
    return EXIT_OK


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def build_dataset(values, task, seed):
    length, examples = values["task.length"], values["task.examples"]
    if task == "copy":
        data = gen_copy_task(seed, length, values["task.vocab"], examples)
    else:
        data = gen_nested_ops(seed, values["task.depth"], length, examples)
    return data.split_test(values["task.test_fraction"], seed)


def model_config(values, data, attn):
    return ModelConfig(
        vocab_size=data.vocab_size, num_classes=data.num_classes, length=data.length,
        layers=values["model.layers"], d=attn.d, ffn=values["model.ffn"],
        classifier=values["model.classifier"], positional=values["model.positional"], attn=attn,
    )


def single_resolution(attn):
    return attn.replace(rates=(attn.rates[0],) * attn.heads)


def _run_variant(values, attn, data, seed, out_dir, log):
    train_data, test_data = data
    mc = model_config(values, train_data, attn)
    hyper = TrainHyper(lr=values["train.lr"], batch=values["train.batch"],
                       steps=values["train.steps"], seed=seed)
    report, _ = train(mc, train_data, test_data, hyper, log=log)
    header = f"rates: {config.format_rates(attn.rates)}\n"
    _write(out_dir, "report.txt", header + report.text())
    _write(out_dir, "metrics.csv", report.metrics_csv())
    return report


def cmd_train(args, values, out):
    task = args.task or values["task.name"]
    if task not in ("copy", "nested-ops"):
        raise UsageError(f"unknown task {task!r}")
    try:
        attn = config.adamra_config(values)
        if args.single_resolution:
            attn = single_resolution(attn)
        data = build_dataset(values, task, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    variants = [("multi", attn)]
    if args.compare:
        variants = [("multi", attn.replace(rates=values["adamra.c"])),
                    ("single", single_resolution(attn))]
    reports = []
    try:
        for name, cfg in variants:
            target = out / name if args.compare else out
            print(f"[{name}] rates {config.format_rates(cfg.rates)}")
            reports.append((name, cfg, _run_variant(values, cfg, data, args.seed, target, print)))
    except DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_FAIL

    for name, _, rep in reports:
        print(f"[{name}] test accuracy {rep.test_accuracy:.4f}")
    if args.compare:
        lines = ["variant,rates,test_accuracy,untrained_accuracy"]
        lines += [f"{name},{config.format_rates(cfg.rates).replace(',', ' ')},"
                  f"{rep.test_accuracy:.6g},{rep.initial_test_accuracy:.6g}"
                  for name, cfg, rep in reports]
        _write(out, "comparison.csv", "\n".join(lines) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--seed", type=int, default=42)
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./out)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one configuration entry; repeatable")
    common.add_argument("--threads", type=int, default=1, help="BLAS/OpenMP thread cap")

    parser = argparse.ArgumentParser(prog="adamra", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", parents=[common], help="run the seeded property suite")
    p.add_argument("--seeds", type=int, help="random instances per property")
    p.add_argument("--fault", choices=[f for f in verify.FAULTS if f], help="inject a known bug")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("gradcheck", parents=[common], help="compare gradients with finite differences")
    p.add_argument("--h", type=float, help="finite-difference step")
    p.add_argument("--seeds", type=int)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("bench", parents=[common], help="time forward passes over a length grid")
    p.add_argument("--n", type=_csv_list(int), help="comma-separated sequence lengths")
    p.add_argument("--models", type=_csv_list(str), help=f"subset of {','.join(bench.MODELS)}")
    p.add_argument("--backends", type=_csv_list(str), help="also compare kernel backends")
    p.add_argument("--trials", type=int)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("smat", parents=[common], help="score a model,speed,mem,acc CSV")
    p.add_argument("input")
    p.set_defaults(func=cmd_smat)

    p = sub.add_parser("train", parents=[common], help="train a small classifier")
    p.add_argument("--task", choices=["copy", "nested-ops"])
    p.add_argument("--single-resolution", action="store_true",
                   help="give every head the first compression rate")
    p.add_argument("--compare", action="store_true",
                   help="train multi- and single-resolution variants and compare")
    p.set_defaults(func=cmd_train)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    out = Path(args.out or os.environ.get(OUT_ENV) or "out")
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        values = config.load(args.config, args.set)
    except (config.ConfigError, OSError) as exc:
        print(f"adamra: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        with threadpool_limits(limits=args.threads):
            return args.func(args, values, out)
    except UsageError as exc:
        print(f"adamra {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
