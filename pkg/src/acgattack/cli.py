"""Command line entry point: ``acgattack <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import sys

import numpy as np

from . import attack, harness, tinymodel
from .attack import AttackConfig, BetaFormula, cg_quadratic_minimize
from .diversity import di_trace
from .geometry import FeasibleRegion, make_rng, random_init
from .objectives import BoxScaledObjective, Quadratic, multimodal_objective


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _arch(text: str) -> list[int]:
    try:
        sizes = [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad architecture {text!r}; expected e.g. 2,16,2")
    if len(sizes) < 2 or min(sizes) < 1:
        raise argparse.ArgumentTypeError(f"bad architecture {text!r}")
    return sizes


def read_inputs_csv(path) -> tinymodel.LabeledDataset:
    """Header row, one point per row, last column the true class."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise UsageError(f"{path}: no input rows")
    try:
        data = [[float(v) for v in r[:-1]] + [int(r[-1])] for r in rows[1:] if r]
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from exc
    X = np.array([d[:-1] for d in data])
    y = np.array([d[-1] for d in data])
    return tinymodel.LabeledDataset(X, y)


def write_inputs_csv(path, data: tinymodel.LabeledDataset) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{j}" for j in range(data.points.shape[1])] + ["label"])
        for x, y in zip(data.points, data.labels):
            w.writerow([repr(float(v)) for v in x] + [int(y)])


def cmd_train_toy(args) -> int:
    data = tinymodel.DATASETS[args.dataset](n=args.n_samples, seed=args.seed)
    model = tinymodel.train_toy(data, args.arch, args.epochs, args.lr, args.seed, batch_size=args.batch_size)
    tinymodel.save_model(model, args.out)
    if args.data_out:
        write_inputs_csv(args.data_out, data)
    print(f"train accuracy {tinymodel.accuracy(model, data):.4f}")
    return 0


def make_config(args) -> AttackConfig:
    switch = args.switch_eta
    if args.method.startswith("hybrid") and switch is None:
        switch = args.eps / 4.0
    return AttackConfig(
        n_iter=args.iters, rho=args.rho, restarts=args.restarts,
        beta=BetaFormula(args.beta, nonneg=args.nonneg_beta, t=args.dl_t),
        alpha=args.alpha, method=args.method, switch_eta=switch, seed=args.seed,
        early_stop=args.early_stop,
    )


def cmd_attack(args) -> int:
    model = tinymodel.load_model(args.model)
    data = read_inputs_csv(args.inputs)
    if args.limit:
        data = data.subset(slice(0, args.limit))
    if data.points.shape[1] != model.input_dim:
        raise UsageError(f"inputs have {data.points.shape[1]} features, model expects {model.input_dim}")
    config = make_config(args)
    result = harness.run_campaign(config, model, data, args.eps, out_dir=args.out_dir,
                                  workers=args.workers, svg=args.svg, window=args.window)
    print(f"ASR {result.asr:.4f} over {len(result.inputs)} inputs")
    return 0


def cmd_analyze(args) -> int:
    header, rows = harness.analyze(args.traces, args.report, window=args.window)
    harness.write_table(args.out, header, rows)
    return 0


def cmd_cg_check(args) -> int:
    rng = make_rng(args.seed)
    rows, failures = [], 0
    for n in range(2, args.n + 1):
        worst, max_it = 0.0, 0
        for _ in range(args.trials):
            q = Quadratic.random(n, rng, cond=args.cond)
            x, it = cg_quadratic_minimize(q, rng.standard_normal(n))
            res = float(np.linalg.norm(2.0 * q.A @ x + q.b))
            worst, max_it = max(worst, res), max(max_it, it)
            failures += res > args.tol or it > n
        rows.append([n, args.trials, max_it, worst])
    if args.out:
        harness.write_table(args.out, ["n", "trials", "max_iterations", "max_grad_norm"], rows)
    for n, t, it, res in rows:
        print(f"n={n:3d} trials={t} max_iter={it:3d} max|grad|={res:.3e}")
    print("all converged" if failures == 0 else f"{failures} instances failed")
    return 0 if failures == 0 else 2


def cmd_multimodal_demo(args) -> int:
    objective = BoxScaledObjective(multimodal_objective(), args.lo, args.hi, negate=True)
    region = FeasibleRegion(np.full(2, 0.5), 0.5)
    x0 = random_init(region, args.seed)
    config = AttackConfig(n_iter=args.iters, eta0=args.eta0, method=args.method, seed=args.seed)
    tr = attack.run_attack(config, region, objective, x0)
    di = dict(di_trace(tr, args.window, region.diameter))
    ratios = harness.projection_ratios(tr.proj_dist, tr.move_dist)
    phys = objective.to_physical(tr.iterates)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "x", "y", "f", "f_best", "eta", "beta", "move_dist", "proj_ratio", "halved", "di"])
        for k in range(tr.iterates.shape[0]):
            w.writerow([harness._fmt(v) for v in (
                k, phys[k, 0], phys[k, 1], -tr.loss[k], -tr.f_max[k], tr.eta[k], tr.beta[k],
                None if k == 0 else tr.move_dist[k - 1], None if k == 0 else ratios[k - 1],
                bool(tr.halved[k]), di.get(k))])
    print(f"best f = {-tr.best:.6f} at {objective.to_physical(tr.x_adv).round(6).tolist()}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="acgattack", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train-toy", help="train a small classifier on a synthetic 2-D dataset")
    t.add_argument("--dataset", choices=sorted(tinymodel.DATASETS), default="moons")
    t.add_argument("--arch", type=_arch, default=[2, 16, 2])
    t.add_argument("--epochs", type=int, default=200)
    t.add_argument("--lr", type=float, default=0.1)
    t.add_argument("--batch-size", type=int, default=32)
    t.add_argument("--n-samples", type=int, default=400)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True)
    t.add_argument("--data-out", help="also write the dataset as an inputs CSV")
    t.set_defaults(func=cmd_train_toy)

    a = sub.add_parser("attack", help="run an attack campaign")
    a.add_argument("--model", required=True)
    a.add_argument("--inputs", required=True)
    a.add_argument("--eps", type=float, required=True)
    a.add_argument("--iters", type=int, default=100)
    a.add_argument("--restarts", type=int, default=1)
    a.add_argument("--method", choices=attack.METHODS, default="acg")
    a.add_argument("--beta", choices=[v for v in attack.BETA_VARIANTS if v != "zero"], default="hs")
    a.add_argument("--nonneg-beta", action="store_true")
    a.add_argument("--dl-t", type=float, default=0.1)
    a.add_argument("--switch-eta", type=float, help="hybrid switching step size (default eps/4)")
    a.add_argument("--rho", type=float, default=0.75)
    a.add_argument("--alpha", type=float, default=0.75)
    a.add_argument("--early-stop", action="store_true")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--workers", type=int, default=1)
    a.add_argument("--limit", type=int, default=0, help="attack only the first N inputs")
    a.add_argument("--svg", action="store_true", help="also write ASR and DI charts")
    a.add_argument("--window", type=int, default=10)
    a.add_argument("--out-dir", required=True)
    a.set_defaults(func=cmd_attack)

    z = sub.add_parser("analyze", help="derive a report from campaign traces")
    z.add_argument("--traces", required=True, help="campaign output directory")
    z.add_argument("--report", choices=["asr", "ctc", "distance", "di"], required=True)
    z.add_argument("--window", type=int, default=10)
    z.add_argument("--out", required=True)
    z.set_defaults(func=cmd_analyze)

    c = sub.add_parser("cg-check", help="CG convergence sweep on random SPD quadratics")
    c.add_argument("--n", type=int, default=20)
    c.add_argument("--trials", type=int, default=100)
    c.add_argument("--tol", type=float, default=1e-8)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--cond", type=float, help="log-uniform spectrum with this condition number "
                   "(default: Wishart B B^T/n + I)")
    c.add_argument("--out")
    c.set_defaults(func=cmd_cg_check)

    m = sub.add_parser("multimodal-demo", help="minimize the 2-D multimodal test function")
    m.add_argument("--method", choices=["acg", "apgd"], default="acg")
    m.add_argument("--iters", type=int, default=100)
    m.add_argument("--eta0", type=float, default=0.25, help="initial step in unit-box coordinates")
    m.add_argument("--lo", type=float, default=-2.0)
    m.add_argument("--hi", type=float, default=2.0)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--window", type=int, default=10)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_multimodal_demo)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, tinymodel.ModelFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1 if isinstance(exc, UsageError) else 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
