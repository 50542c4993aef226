"""Command-line pipeline: simulate, scales, order, fit, sample, forecast, score.

File formats
------------
coords.csv      header ``s1,...,sd,t``; one row per location-time index,
                raw (pre-standardization) values.
ensembles.csv   header ``rep,y1,...,yN``; one row per replicate, columns
                aligned with coords.csv row order.
ordering.csv    ``pos,orig_index,l,neighbor_1..neighbor_m`` with -1
                padding for undersized conditioning sets (neighbors are
                ordering positions).
model.stm       JSON manifest plus little-endian binary arrays (see
                :mod:`stargp.inference`).
samples.csv     ``sample,y1,...,yN`` rows on the raw scale, columns in
                original index order.

Every run writes ``<out>.manifest.json`` echoing the configuration, the
seed, package/library versions, and SHA-256 hashes of all inputs, so any
stage can be re-run in isolation.  All floats are emitted with 17
significant digits; two runs with identical config, inputs, and seeds
produce byte-identical outputs.

Exit codes: 2 configuration error, 3 data error, 4 numerical error.
"""

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .geometry import (
    ScalingParams,
    standardize_coords,
    standardize_responses,
    scale_coords,
)
from .lengthscale import ScaleFitConfig, estimate_scales
from .ordering import build_ordering
from .inference import (
    FitConfig,
    build_fitted_map,
    fit_theta,
    load_map,
    save_map,
    select_m,
)
from .oracle import simulate_matern_gp
from .sampling import forecast, logscore, sample_unconditional

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4

_FMT = "%.17g"


class DataError(Exception):
    pass


def _fmt(x):
    return _FMT % float(x)


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def read_coords_csv(path):
    """Read coords.csv -> (N, d+1) raw coordinate matrix."""
    try:
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            X = np.loadtxt(fh, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read coords file {path}: {exc}") from exc
    if header[-1] != "t" or not header[0].startswith("s"):
        raise DataError(f"coords header must be s1,...,sd,t; got {header}")
    if X.shape[1] != len(header):
        raise DataError("coords row width does not match header")
    return X


def read_ensembles_csv(path):
    """Read ensembles.csv -> (n, N) response matrix (replicate ids dropped)."""
    try:
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            body = np.loadtxt(fh, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read ensembles file {path}: {exc}") from exc
    if header[0] != "rep":
        raise DataError(f"ensembles header must start with 'rep'; got {header[:2]}")
    return body[:, 1:]


def write_coords_csv(path, X):
    d = X.shape[1] - 1
    header = ",".join([f"s{k + 1}" for k in range(d)] + ["t"])
    _write_table(path, header, X)


def write_ensembles_csv(path, Y):
    header = ",".join(["rep"] + [f"y{k + 1}" for k in range(Y.shape[1])])
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for r, row in enumerate(Y):
            fh.write(",".join([str(r)] + [_fmt(v) for v in row]) + "\n")


def _write_table(path, header, rows, int_cols=()):
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in np.atleast_2d(rows):
            cells = [
                str(int(v)) if k in int_cols else _fmt(v) for k, v in enumerate(row)
            ]
            fh.write(",".join(cells) + "\n")


def _write_manifest(out_path, args, inputs, outputs):
    cfg = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    manifest = {
        "tool": "stargp",
        "version": __version__,
        "numpy": np.__version__,
        "config": {k: (str(v) if isinstance(v, Path) else v) for k, v in cfg.items()},
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
    }
    path = Path(str(out_path) + ".manifest.json")
    path.write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")


# ---------------------------------------------------------------------------
# subcommands


def _cmd_simulate(args):
    ns = [int(v) for v in args.spatial_grid.split(",")]
    axes = [np.arange(v, dtype=float) for v in ns] + [
        np.arange(args.frames, dtype=float)
    ]
    grids = np.meshgrid(*axes, indexing="ij")
    X = np.column_stack([g.ravel() for g in grids])
    X_std, _ = standardize_coords(X)
    Y = simulate_matern_gp(
        X_std,
        args.lambda_s,
        args.lambda_t,
        args.nu,
        args.variance,
        args.nugget,
        args.n,
        args.seed,
        warp=None if args.warp == "none" else args.warp,
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    coords_path = out / "coords.csv"
    ens_path = out / "ensembles.csv"
    write_coords_csv(coords_path, X)
    write_ensembles_csv(ens_path, Y)
    truth = {
        "lambda_s": args.lambda_s,
        "lambda_t": args.lambda_t,
        "nu": args.nu,
        "variance": args.variance,
        "nugget": args.nugget,
        "n": args.n,
        "seed": args.seed,
        "warp": args.warp,
        "covariance_coords": "standardized",
    }
    (out / "truth.json").write_text(json.dumps(truth, sort_keys=True, indent=1) + "\n")
    _write_manifest(coords_path, args, [], [coords_path, ens_path, out / "truth.json"])
    print(f"wrote {coords_path}, {ens_path}, truth.json  (N={X.shape[0]}, n={args.n})")


def _cmd_scales(args):
    X = read_coords_csv(args.coords)
    Y = read_ensembles_csv(args.ensembles)
    _check_alignment(X, Y)
    X_std, cstats = standardize_coords(X)
    if not cstats.time_scale_identifiable:
        raise DataError("temporal scale unidentifiable: constant time column")
    Y_std, _ = standardize_responses(Y)
    cfg = ScaleFitConfig(
        N_samp=args.N_samp, n_samp=args.n_samp, n_epoch=args.epochs, seed=args.seed
    )
    est = estimate_scales(X_std, Y_std, cfg, w=args.repeats)
    payload = {
        "lambda_s": est.lambda_s,
        "lambda_t": est.lambda_t,
        "eta": est.scaling().eta,
        "per_repeat_lambda_s": est.per_repeat[:, 0].tolist(),
        "per_repeat_lambda_t": est.per_repeat[:, 1].tolist(),
        "se_lambda_s": est.se_s,
        "se_lambda_t": est.se_t,
        "failed_repeats": est.failed_repeats,
    }
    Path(args.out).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")
    _write_manifest(args.out, args, [args.coords, args.ensembles], [args.out])
    print(f"lambda_s={est.lambda_s:.6g} lambda_t={est.lambda_t:.6g} -> {args.out}")


def _load_scaling(args):
    if args.scales is not None:
        data = json.loads(Path(args.scales).read_text())
        return ScalingParams(data["lambda_s"], data["lambda_t"])
    if args.lambda_s is not None and args.lambda_t is not None:
        return ScalingParams(args.lambda_s, args.lambda_t)
    return None


def _cmd_order(args):
    X = read_coords_csv(args.coords)
    X_std, _ = standardize_coords(X)
    scaling = _load_scaling(args)
    if scaling is None:
        raise DataError("order needs --scales or --lambda-s/--lambda-t")
    ordering = build_ordering(
        scale_coords(X_std, scaling), kind=args.ordering, m=args.m,
        workers=args.threads,
    )
    rows = np.column_stack(
        [
            np.arange(ordering.n_points),
            ordering.perm,
            ordering.l,
            ordering.neighbors,
        ]
    )
    header = ",".join(
        ["pos", "orig_index", "l"] + [f"neighbor_{k + 1}" for k in range(ordering.m)]
    )
    int_cols = {0, 1} | set(range(3, 3 + ordering.m))
    _write_table(args.out, header, rows, int_cols=int_cols)
    inputs = [args.coords] + ([args.scales] if args.scales else [])
    _write_manifest(args.out, args, inputs, [args.out])
    print(f"wrote {args.out}  (kind={args.ordering}, N={ordering.n_points}, m={args.m})")


def _cmd_fit(args):
    X = read_coords_csv(args.coords)
    Y = read_ensembles_csv(args.ensembles)
    _check_alignment(X, Y)
    X_std, cstats = standardize_coords(X)
    Y_std, rstats = standardize_responses(Y)

    scaling = _load_scaling(args)
    if scaling is None:
        cfg = ScaleFitConfig(seed=args.seed)
        est = estimate_scales(X_std, Y_std, cfg, w=args.scale_repeats)
        scaling = est.scaling()
        print(f"estimated lambda_s={scaling.lambda_s:.6g} lambda_t={scaling.lambda_t:.6g}")

    m_grid = None
    m_max = args.m
    if args.select_m:
        m_grid = sorted(int(v) for v in args.select_m.split(","))
        m_max = max(m_grid)
    ordering = build_ordering(
        scale_coords(X_std, scaling), kind=args.ordering, m=m_max,
        workers=args.threads,
    )
    Y_pos = Y_std[:, ordering.perm]
    fit_cfg = FitConfig(
        epochs=args.epochs, batch=args.batch, step=args.step, seed=args.seed
    )

    if m_grid is not None:
        n = Y_pos.shape[0]
        n_val = max(1, int(round(0.2 * n)))
        if n - n_val < 2:
            raise DataError("not enough replicates to hold out a validation set")
        m_star, scores = select_m(
            Y_pos[: n - n_val], Y_pos[n - n_val :], ordering, m_grid, args.g, fit_cfg
        )
        print("validation scores: " + ", ".join(f"m={k}: {v:.4f}" for k, v in scores.items()))
        print(f"selected m = {m_star}")
        ordering = ordering.truncated(m_star)

    theta, trace = fit_theta(Y_pos, ordering, fit_cfg, g=args.g)
    fm = build_fitted_map(
        Y_pos, ordering, theta, args.g, scaling, cstats, rstats, X[:, -1]
    )
    save_map(fm, args.out)
    trace_path = Path(str(args.out) + ".trace.csv")
    with open(trace_path, "w") as fh:
        fh.write("epoch,objective\n")
        for e, v in enumerate(trace.objective):
            fh.write(f"{e},{_fmt(v)}\n")
    inputs = [args.coords, args.ensembles] + ([args.scales] if args.scales else [])
    _write_manifest(args.out, args, inputs, [args.out, trace_path])
    print(
        f"fit complete: objective {trace.objective[0]:.4f} -> {trace.objective[-1]:.4f}, "
        f"model -> {args.out}"
    )


def _cmd_sample(args):
    fm = load_map(args.model)
    S = sample_unconditional(fm, args.n, args.seed)
    header = ",".join(["sample"] + [f"y{k + 1}" for k in range(S.shape[1])])
    with open(args.out, "w") as fh:
        fh.write(header + "\n")
        for s, row in enumerate(S):
            fh.write(",".join([str(s)] + [_fmt(v) for v in row]) + "\n")
    _write_manifest(args.out, args, [args.model], [args.out])
    print(f"wrote {S.shape[0]} samples x {S.shape[1]} columns -> {args.out}")


def _cmd_forecast(args):
    fm = load_map(args.model)
    observed = read_ensembles_csv(args.observed)
    if observed.shape[0] != 1:
        raise DataError("observed.csv must hold exactly one replicate row")
    S, cols = forecast(
        fm, observed[0], args.n, args.seed, cutoff=args.cutoff
    )
    header = ",".join(["sample"] + [f"y{int(c) + 1}" for c in cols])
    with open(args.out, "w") as fh:
        fh.write(header + "\n")
        for s, row in enumerate(S):
            fh.write(",".join([str(s)] + [_fmt(v) for v in row]) + "\n")
    _write_manifest(args.out, args, [args.model, args.observed], [args.out])
    print(f"forecast {S.shape[1]} indices x {S.shape[0]} samples -> {args.out}")


def _cmd_score(args):
    fm = load_map(args.model)
    Y_test = read_ensembles_csv(args.test)
    if Y_test.shape[1] != fm.n_points:
        raise DataError(
            f"test ensembles have {Y_test.shape[1]} columns, model expects {fm.n_points}"
        )
    res = logscore(fm, Y_test)
    lines = ["rep,score"]
    for r, v in enumerate(res.per_replicate):
        lines.append(f"{r},{_fmt(v)}")
    lines.append(f"average,{_fmt(res.average)}")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text)
        _write_manifest(args.out, args, [args.model, args.test], [args.out])


def _check_alignment(X, Y):
    if Y.shape[1] != X.shape[0]:
        raise DataError(
            f"ensembles have {Y.shape[1]} columns but coords have {X.shape[0]} rows"
        )


# ---------------------------------------------------------------------------
# parser


def build_parser():
    ap = argparse.ArgumentParser(
        prog="stargp",
        description="Sparse autoregressive GP transport maps for space-time fields",
    )
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("simulate", help="dense Matern GP test data")
    p.add_argument("--spatial-grid", default="4,4", help="comma-separated grid sizes")
    p.add_argument("--frames", type=int, default=5)
    p.add_argument("--lambda-s", type=float, default=0.5)
    p.add_argument("--lambda-t", type=float, default=0.25)
    p.add_argument("--nu", type=float, default=0.5, choices=[0.5, 1.5])
    p.add_argument("--variance", type=float, default=1.0)
    p.add_argument("--nugget", type=float, default=0.05)
    p.add_argument("--n", type=int, default=60)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--warp", default="none", choices=["none", "exp"])
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("scales", help="estimate spatial/temporal length scales")
    p.add_argument("--coords", required=True)
    p.add_argument("--ensembles", required=True)
    p.add_argument("--N-samp", dest="N_samp", type=int, default=1000)
    p.add_argument("--n-samp", dest="n_samp", type=int, default=5)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="scales.json")
    p.set_defaults(func=_cmd_scales)

    p = sub.add_parser("order", help="write the ordering and conditioning sets")
    p.add_argument("--coords", required=True)
    p.add_argument("--scales")
    p.add_argument("--lambda-s", type=float)
    p.add_argument("--lambda-t", type=float)
    p.add_argument("--ordering", default="maximin", choices=["maximin", "time"])
    p.add_argument("--m", type=int, default=30)
    p.add_argument("--threads", type=int, default=-1)
    p.add_argument("--out", default="ordering.csv")
    p.set_defaults(func=_cmd_order)

    p = sub.add_parser("fit", help="train the transport map")
    p.add_argument("--coords", required=True)
    p.add_argument("--ensembles", required=True)
    p.add_argument("--scales")
    p.add_argument("--lambda-s", type=float)
    p.add_argument("--lambda-t", type=float)
    p.add_argument("--scale-repeats", type=int, default=5)
    p.add_argument("--ordering", default="maximin", choices=["maximin", "time"])
    p.add_argument("--m", type=int, default=30)
    p.add_argument("--select-m", help="comma-separated m grid, e.g. 5,10,20")
    p.add_argument("--g", type=float, default=1.0)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch", type=int, default=1024)
    p.add_argument("--step", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=-1)
    p.add_argument("--out", default="model.stm")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("sample", help="unconditional field generation")
    p.add_argument("--model", required=True)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="samples.csv")
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("forecast", help="forecast beyond a time cutoff")
    p.add_argument("--model", required=True)
    p.add_argument("--observed", required=True, help="one-replicate ensembles.csv")
    p.add_argument("--cutoff", type=float, required=True, help="raw-time cutoff t0")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="forecast.csv")
    p.set_defaults(func=_cmd_forecast)

    p = sub.add_parser("score", help="log-score held-out replicates")
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_score)
    return ap


def run_pipeline(argv):
    """Parse and execute one subcommand; raises on failure."""
    args = build_parser().parse_args(argv)
    args.func(args)


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    try:
        run_pipeline(argv)
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError,) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (np.linalg.LinAlgError, FloatingPointError, RuntimeError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
