"""Command-line entry point.

Subcommands: simulate, estimate-dim, train, predict, evaluate, kernel-gram
and benchmark. Every run starts by printing its effective configuration as
``# config: {...}`` so that it can be reproduced exactly.

Exit codes: 0 success, 1 data error, 2 configuration error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .classify import evaluate, train_one_vs_all
from .dataio import (
    Dataset,
    SplitSpec,
    atomic_write_text,
    load_dataset,
    load_feature_table,
    load_model,
    save_model,
    split,
    write_dense_csv,
    write_svmlight,
)
from .exceptions import ConfigError, DataError, EmptyInputError, NumericalError
from .hdda import estimate_spectrum, fit_hdda, scree_select
from .kernels import FAMILIES, GAUSSIAN, KernelSpec, distance_components, gram
from .simulate import SCENARIOS, SimConfig, generate, scenario_config
from .tune import TuneConfig, initial_vector, template_spec

logger = logging.getLogger("hdkernel")

EXIT_OK, EXIT_DATA, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


# -- argument parsing --------------------------------------------------------


def _common(p):
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--csv", metavar="PATH", help="also write a machine-readable CSV table")
    p.add_argument("-v", "--verbose", action="store_true")


def _data_args(p, flag="--data", required=True):
    p.add_argument(flag, required=required, metavar="PATH", help="dense CSV or SVM-light file")
    p.add_argument("--labels", metavar="PATH", help="separate label file (two-file table layout)")
    p.add_argument("--label-column", type=int, default=0)
    p.add_argument("--header", action="store_true", help="skip a header line in dense CSV input")


def _tuning_args(p):
    p.add_argument("--kernel", default="hdda-mahalanobis", help=f"one of {', '.join(FAMILIES)}")
    p.add_argument("--scree-threshold", type=float, default=0.1, help="scree-test threshold s in (0, 1)")
    p.add_argument("--p-override", metavar="P", help="fixed signal dimension: '4' or per class '1:4,2:3'")
    p.add_argument("--standardize", action="store_true", help="zero-mean unit-variance features")
    p.add_argument("--max-iter", type=int, default=100, help="descent iterations per classifier")
    p.add_argument("--tol", type=float, default=1e-6, help="QP stopping tolerance")
    p.add_argument("--multi-start", type=int, default=1)
    p.add_argument("--step0", type=float, default=1.0, help="initial step on the log-hyperparameters")


def build_parser():
    parser = argparse.ArgumentParser(prog="hdkernel", description="HDDA-based Mahalanobis kernel SVMs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write train/test files for a simulated scenario")
    _common(p)
    p.add_argument("--scenario", help=f"one of {', '.join(SCENARIOS)}; explicit flags override it")
    p.add_argument("--n-classes", type=int)
    p.add_argument("--dim", type=int, help="feature dimension d")
    p.add_argument("--p", type=int, help="signal dimension per class")
    p.add_argument("--snr", type=float)
    p.add_argument("--n-train", type=int)
    p.add_argument("--n-test", type=int)
    p.add_argument("--noise-floor", type=float)
    p.add_argument("--out", default=".", metavar="DIR")
    p.add_argument("--format", choices=["csv", "svmlight"], default="csv")

    p = sub.add_parser("estimate-dim", help="per-class scree-test dimension estimates")
    _common(p)
    _data_args(p)
    p.add_argument("--scree-threshold", type=float, default=0.1)
    p.add_argument("--show-gaps", type=int, default=12, help="gap table rows per class")

    p = sub.add_parser("train", help="fit one-vs-all classifiers and write a model bundle")
    _common(p)
    _data_args(p)
    _tuning_args(p)
    p.add_argument("--out", required=True, metavar="PATH")

    p = sub.add_parser("predict", help="per-class scores and signs for new samples")
    _common(p)
    p.add_argument("--model", required=True, metavar="PATH")
    _data_args(p)
    p.add_argument("--no-labels", action="store_true", help="input rows carry no label column")
    p.add_argument("--out", required=True, metavar="PATH")

    p = sub.add_parser("evaluate", help="one-vs-all accuracies of a model on labeled data")
    _common(p)
    p.add_argument("--model", required=True, metavar="PATH")
    _data_args(p, flag="--test")

    p = sub.add_parser("kernel-gram", help="dump a Gram matrix as CSV")
    _common(p)
    _data_args(p)
    p.add_argument("--model", metavar="PATH", help="use the tuned kernel of a trained classifier")
    p.add_argument("--class", dest="class_id", type=int, default=1, help="class whose kernel is used")
    p.add_argument("--kernel", default=GAUSSIAN)
    p.add_argument("--sigma2", type=float, nargs="+", help="explicit kernel variances")
    p.add_argument("--scree-threshold", type=float, default=0.1)
    p.add_argument("--p-override", metavar="P")
    p.add_argument("--out", required=True, metavar="PATH")

    p = sub.add_parser("benchmark", help="compare the three kernel families")
    _common(p)
    p.add_argument("--data", metavar="PATH")
    p.add_argument("--labels", metavar="PATH")
    p.add_argument("--test", metavar="PATH", help="test file; otherwise --data is split")
    p.add_argument("--test-labels", metavar="PATH")
    p.add_argument("--label-column", type=int, default=0)
    p.add_argument("--header", action="store_true")
    p.add_argument("--train-fraction", type=float, default=0.5)
    p.add_argument("--scenario", help="simulated scenario instead of files")
    p.add_argument("--repeat", type=int, default=1, help="simulation repetitions (seeds seed..seed+repeat-1)")
    p.add_argument("--kernels", nargs="+", default=list(FAMILIES))
    p.add_argument("--sweep", metavar="P_LIST", help="comma-separated p values for an accuracy-vs-p sweep")
    p.add_argument("--sweep-csv", metavar="PATH", help="plot-ready CSV of the sweep")
    _tuning_args(p)
    return parser


# -- helpers -----------------------------------------------------------------


def _header(args):
    cfg = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    print(f"# hdkernel {__version__} {args.command}")
    print("# config: " + json.dumps(cfg, sort_keys=True, default=str))


def _check_s(s):
    if not 0.0 < s < 1.0:
        raise ConfigError(f"--scree-threshold must be in (0, 1), got {s}")


def _check_file(path):
    if path is not None and not Path(path).is_file():
        raise DataError(f"{path}: no such file")


def parse_p_override(text):
    """``'4'`` -> 4; ``'1:4,2:3'`` -> ``{1: 4, 2: 3}``."""
    if text is None:
        return None
    text = text.strip()
    try:
        if ":" not in text:
            return int(text)
        out = {}
        for part in text.split(","):
            c, p = part.split(":")
            out[int(c)] = int(p)
        return out
    except ValueError:
        raise ConfigError(f"cannot parse --p-override {text!r}") from None


def _load(path, labels=None, label_column=0, header=False, n_features=None):
    _check_file(path)
    _check_file(labels)
    if labels is not None:
        return load_feature_table(path, labels)
    return load_dataset(path, label_column=label_column, header=header, n_features=n_features)


def _load_unlabeled(path, n_features=None):
    _check_file(path)
    text = Path(path).read_text(encoding="utf-8")
    rows = [line for line in text.splitlines() if line.strip()]
    if not rows:
        raise EmptyInputError(f"{path}: no data rows")
    sep = "," if "," in rows[0] else None
    try:
        X = np.array([[float(v) for v in (r.split(sep) if sep else r.split())] for r in rows])
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    return X


def _relabel(dataset, label_map):
    """Express a separately loaded dataset in a model's canonical class ids."""
    originals = dataset.original_labels()
    unknown = sorted(set(originals.tolist()) - set(label_map))
    if unknown:
        raise DataError(f"labels {unknown} were not seen during training")
    ids = np.array([label_map[int(v)] for v in originals])
    return Dataset(dataset.features, ids, label_map, dataset.feature_names)


def _tune_config(args):
    if args.max_iter < 0:
        raise ConfigError("--max-iter must be >= 0")
    if not args.tol > 0:
        raise ConfigError("--tol must be positive")
    return TuneConfig(
        step0=args.step0,
        max_iter=args.max_iter,
        multi_start=args.multi_start,
        qp_tol=args.tol,
        seed=args.seed,
    )


def _check_kernel(name):
    if name not in FAMILIES:
        raise ConfigError(f"unknown kernel {name!r}; choose from {', '.join(FAMILIES)}")


def _n_features_hint(path, model):
    return model.n_features if Path(path).suffix.lower() in {".svm", ".svmlight", ".libsvm"} else None


# -- subcommands ---------------------------------------------------------------


def cmd_simulate(args):
    if args.scenario is not None:
        base = scenario_config(args.scenario, seed=args.seed)
    else:
        base = SimConfig(seed=args.seed)
    fields = dict(n_classes=args.n_classes, d=args.dim, p=args.p, snr=args.snr, n_train=args.n_train,
                  n_test=args.n_test, noise_floor=args.noise_floor)
    changes = {k: v for k, v in fields.items() if v is not None}
    cfg = SimConfig(**{**base.__dict__, **changes})
    train, test, _ = generate(cfg)
    out = Path(args.out)
    ext = "csv" if args.format == "csv" else "svm"
    writer = write_dense_csv if args.format == "csv" else write_svmlight
    paths = []
    for name, ds in (("train", train), ("test", test)):
        path = out / f"{name}.{ext}"
        writer(ds, path)
        paths.append(path)
    for path, ds in zip(paths, (train, test)):
        counts = np.bincount(ds.labels, minlength=cfg.n_classes + 1)[1:]
        print(f"{path}: {ds.n_samples} rows, d={ds.n_features}, class counts {counts.tolist()}")
    return EXIT_OK


def cmd_estimate_dim(args):
    _check_s(args.scree_threshold)
    ds = _load(args.data, args.labels, args.label_column, args.header)
    X = ds.dense()
    rows = []
    p_hats = []
    for c in ds.classes:
        members = X[ds.labels == c]
        model = fit_hdda(members, s=args.scree_threshold, class_id=int(c))
        p_hats.append(model.p_hat)
        spec = estimate_spectrum(members)
        lam = spec.eigvals[spec.eigvals > 0]
        res = scree_select(lam, args.scree_threshold) if lam.size >= 2 else None
        original = {v: k for k, v in ds.label_map.items()}.get(int(c), int(c))
        print(f"class {int(c)} (label {original}): n={members.shape[0]} p_hat={model.p_hat} b_hat={model.noise:.6g}"
              + (" [noise floored]" if model.noise_floored else ""))
        print("  lambda: " + " ".join(f"{v:.4g}" for v in model.eigvals))
        if res is not None:
            print(f"  gap threshold {res.threshold:.4g}" + (" (degenerate spectrum)" if res.degenerate else ""))
            print(f"  {'i':>4} {'lambda_i':>12} {'gap_i':>12}")
            for i in range(min(args.show_gaps, res.gaps.size)):
                mark = " *" if res.gaps[i] >= res.threshold else ""
                print(f"  {i + 1:>4} {lam[i]:12.5g} {res.gaps[i]:12.5g}{mark}")
            for i, g in enumerate(res.gaps):
                rows.append((int(c), i + 1, lam[i], g, int(g >= res.threshold), model.p_hat, model.noise))
    print("p_hat: (" + ", ".join(str(p) for p in p_hats) + ")")
    if args.csv:
        buf = io.StringIO()
        buf.write("class,index,eigenvalue,gap,above_threshold,p_hat,noise\n")
        for r in rows:
            buf.write(f"{r[0]},{r[1]},{r[2]!r},{r[3]!r},{r[4]},{r[5]},{r[6]!r}\n")
        atomic_write_text(args.csv, buf.getvalue())
    return EXIT_OK


def cmd_train(args):
    _check_kernel(args.kernel)
    _check_s(args.scree_threshold)
    p_override = parse_p_override(args.p_override)
    ds = _load(args.data, args.labels, args.label_column, args.header)
    t0 = time.perf_counter()
    model = train_one_vs_all(
        ds,
        args.kernel,
        scree_s=args.scree_threshold,
        tune_config=_tune_config(args),
        p_override=p_override,
        standardize=args.standardize,
    )
    elapsed = time.perf_counter() - t0
    save_model(model, args.out)
    for clf in model.classifiers:
        p = "" if clf.spec.model is None else f" p_hat={clf.spec.model.p_hat}"
        it = 0 if clf.trace is None else len(clf.trace) - 1
        T = float("nan") if clf.trace is None else clf.trace.T[-1]
        print(f"class {clf.positive_class}:{p} C={clf.C:.6g} T={T:.6g} iterations={it} "
              f"support={clf.n_support}/{clf.n_train}")
    print(f"wrote {args.out} ({elapsed:.2f} s)")
    return EXIT_OK


def cmd_predict(args):
    _check_file(args.model)
    model = load_model(args.model)
    if args.no_labels:
        X = _load_unlabeled(args.data)
    else:
        X = _load(args.data, args.labels, args.label_column, args.header, _n_features_hint(args.data, model)).features
    scores = model.decision_values(X)
    signs = np.where(scores >= 0, 1, -1)
    buf = io.StringIO()
    classes = model.classes
    buf.write("index," + ",".join(f"score_{c}" for c in classes) + "," + ",".join(f"sign_{c}" for c in classes))
    buf.write("\n")
    for i in range(scores.shape[0]):
        buf.write(f"{i}," + ",".join(repr(float(v)) for v in scores[i]) + "," + ",".join(str(int(s)) for s in signs[i]))
        buf.write("\n")
    atomic_write_text(args.out, buf.getvalue())
    print(f"wrote {scores.shape[0]} predictions for {len(classes)} classes to {args.out}")
    return EXIT_OK


def cmd_evaluate(args):
    _check_file(args.model)
    model = load_model(args.model)
    test = _load(args.test, args.labels, args.label_column, args.header, _n_features_hint(args.test, model))
    if model.label_map:
        test = _relabel(test, model.label_map)
    report = evaluate(model, test)
    print(report.render_table())
    if args.csv:
        atomic_write_text(args.csv, report.to_csv())
    return EXIT_OK


def cmd_kernel_gram(args):
    ds = _load(args.data, args.labels, args.label_column, args.header)
    X = ds.dense()
    if args.model is not None:
        _check_file(args.model)
        model = load_model(args.model)
        match = [c for c in model.classifiers if c.positive_class == args.class_id]
        if not match:
            raise ConfigError(f"model has no classifier for class {args.class_id}")
        spec = match[0].spec
        if model.standardizer is not None:
            X = model.standardizer.transform(X)
    else:
        _check_kernel(args.kernel)
        _check_s(args.scree_threshold)
        hdda = None
        if args.kernel != GAUSSIAN:
            members = X[ds.labels == args.class_id]
            hdda = fit_hdda(members, s=args.scree_threshold, p_override=parse_p_override(args.p_override),
                            class_id=args.class_id)
        template = template_spec(args.kernel, hdda)
        if args.sigma2 is not None:
            spec = KernelSpec(args.kernel, 1.0 / np.asarray(args.sigma2, dtype=np.float64), hdda)
        else:
            tv = initial_vector(args.kernel, distance_components(template, X), hdda, seed=args.seed)
            spec = template.with_weights(tv.weights)
    K = gram(spec, X)
    text = "\n".join(",".join(repr(float(v)) for v in row) for row in K) + "\n"
    atomic_write_text(args.out, text)
    print(f"wrote {K.shape[0]}x{K.shape[1]} {spec.family} Gram matrix to {args.out}")
    print("sigma2: " + " ".join(f"{v:.6g}" for v in spec.sigma2))
    return EXIT_OK


def _benchmark_datasets(args):
    """Yield ``(seed, train, test)`` triples; identical across kernel families."""
    if args.scenario is not None:
        if args.repeat < 1:
            raise ConfigError("--repeat must be >= 1")
        scenario_config(args.scenario)  # validate the name up front
        for r in range(args.repeat):
            seed = args.seed + r
            train, test, _ = generate(scenario_config(args.scenario, seed=seed))
            yield seed, train, test
        return
    if args.data is None:
        raise ConfigError("benchmark needs --data or --scenario")
    train = _load(args.data, args.labels, args.label_column, args.header)
    if args.test is not None:
        test = _load(args.test, args.test_labels, args.label_column, args.header,
                     train.n_features if train.is_sparse else None)
        test = _relabel(test, train.label_map)
    else:
        train, test = split(train, SplitSpec(args.train_fraction, seed=args.seed, stratified=True))
    yield args.seed, train, test


def _run_family(args, family, train, test, p_override):
    t0 = time.perf_counter()
    model = train_one_vs_all(
        train, family, scree_s=args.scree_threshold, tune_config=_tune_config(args),
        p_override=p_override, standardize=args.standardize,
    )
    t_train = time.perf_counter() - t0
    report = evaluate(model, test)
    iters = {clf.positive_class: len(clf.trace) - 1 for clf in model.classifiers}
    return report, iters, t_train


def cmd_benchmark(args):
    _check_s(args.scree_threshold)
    for k in args.kernels:
        _check_kernel(k)
    p_override = parse_p_override(args.p_override)
    sweep = None
    if args.sweep:
        try:
            sweep = [int(v) for v in args.sweep.split(",")]
        except ValueError:
            raise ConfigError(f"cannot parse --sweep {args.sweep!r}") from None
    results = {k: [] for k in args.kernels}
    sweep_rows = []
    classes = None
    for seed, train, test in _benchmark_datasets(args):
        if train.n_classes < 2:
            raise DataError("benchmark needs at least two classes")
        classes = [int(c) for c in train.classes]
        for family in args.kernels:
            report, iters, t_train = _run_family(args, family, train, test, p_override)
            results[family].append((report, iters, t_train))
            logger.info("seed %d %s: mean %.2f", seed, family, report.mean_accuracy)
        if sweep:
            for family in args.kernels:
                if family == GAUSSIAN:
                    continue
                for p in sweep:
                    report, _, _ = _run_family(args, family, train, test, p)
                    for c in classes:
                        sweep_rows.append((seed, family, p, c, report.per_class_accuracy[c], report.mean_accuracy))
    repeated = len(next(iter(results.values()))) > 1
    print(_benchmark_table(results, classes, repeated))
    if args.csv:
        atomic_write_text(args.csv, _benchmark_csv(results, classes))
    if sweep_rows:
        buf = io.StringIO()
        buf.write("seed,kernel,p,class,accuracy,mean_accuracy\n")
        for r in sweep_rows:
            buf.write(f"{r[0]},{r[1]},{r[2]},{r[3]},{r[4]!r},{r[5]!r}\n")
        target = args.sweep_csv or (args.csv and str(Path(args.csv).with_suffix("")) + "_sweep.csv")
        if target:
            atomic_write_text(target, buf.getvalue())
            print(f"wrote sweep to {target}")
        else:
            print(buf.getvalue(), end="")
    return EXIT_OK


def _stat(values, repeated):
    v = np.asarray(values, dtype=np.float64)
    if repeated:
        return f"{v.mean():6.1f} ±{v.std(ddof=1):4.1f}"
    return f"{v.mean():6.1f}"


def _benchmark_table(results, classes, repeated):
    width = max(len(k) for k in results)
    cell = 12 if repeated else 7
    head = f"{'kernel':<{width}}" + "".join(f" {'cl ' + str(c):>{cell}}" for c in classes)
    head += f" {'mean':>{cell}}  {'p_hat':<10} {'iters':>6} {'time[s]':>8}"
    lines = [head]
    for family, runs in results.items():
        row = f"{family:<{width}}"
        for c in classes:
            row += " " + _stat([r.per_class_accuracy[c] for r, _, _ in runs], repeated).rjust(cell)
        row += " " + _stat([r.mean_accuracy for r, _, _ in runs], repeated).rjust(cell)
        p_hat = runs[-1][0].p_hat
        p_txt = "(" + ",".join(str(p_hat[c]) for c in classes) + ")" if p_hat else "-"
        iters = np.mean([np.mean(list(it.values())) for _, it, _ in runs])
        secs = np.mean([t for _, _, t in runs])
        row += f"  {p_txt:<10} {iters:6.1f} {secs:8.2f}"
        lines.append(row)
    n = len(next(iter(results.values())))
    if repeated:
        lines.append(f"mean ± standard deviation over {n} runs")
    return "\n".join(lines)


def _benchmark_csv(results, classes):
    buf = io.StringIO()
    buf.write("run,kernel," + ",".join(f"class_{c}" for c in classes) + ",mean,iterations,train_seconds\n")
    for family, runs in results.items():
        for run, (report, iters, t) in enumerate(runs):
            accs = ",".join(repr(report.per_class_accuracy[c]) for c in classes)
            buf.write(f"{run},{family},{accs},{report.mean_accuracy!r},{float(np.mean(list(iters.values())))!r},{t!r}\n")
    return buf.getvalue()


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate-dim": cmd_estimate_dim,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "kernel-gram": cmd_kernel_gram,
    "benchmark": cmd_benchmark,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    _header(args)
    try:
        return COMMANDS[args.command](args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
