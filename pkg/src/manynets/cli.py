"""Command-line interface: reproducible batch runs over files.

Every output CSV has a header row (``manynets schema`` documents the columns)
and is written under ``--out``; existing files are never overwritten without
``--force``.  Stochastic subcommands require ``--seed`` and record it, with
the package version, in a ``.meta.json`` sidecar.  Exit codes: 0 success,
1 input error, 2 statistical nonconvergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import gof_summary, residual_regression, simulated_residuals
from .errors import (
    DataError,
    ManynetsError,
    ModelValidationError,
    EnumerationBoundError,
    NonconvergenceError,
)
from .estimation import exact_mle, mcmc_mle, mple
from .inference import (
    Contrast,
    coef_table,
    contrast_test,
    cor_matrix,
    format_pvalue,
    omnibus_wald,
    size_effect_curve,
    vif,
)
from .io import load_fit, load_sample, save_fit, save_sample
from .model import StatTerm, load_model
from .networks import NetworkSample
from .power import empirical_power, power_scenario
from .sampling import Constraint, FREE, SimConfig, simulate_sample

SCHEMAS = {
    "coefs.csv": "label,estimate,se,z,p,stars",
    "tests.csv": "label,kind,stat,df_or_tail,estimate,se,p",
    "contrast.csv": "label,estimate,se,z,tail,p",
    "vif.csv": "label,vif,root_vif",
    "cor.csv": "label,<one column per parameter>",
    "curve.csv": "n,value,se",
    "power.csv": "S,p_hat,mcse,rejects,failures",
    "residuals.csv": "network,statistic,observed,sim_mean,sim_sd,residual",
    "regression.csv": "label,slope,se,t,df,p",
    "gof.csv": "scope,statistic,observed,q025,q500,q975,tail_prop",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # input errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        raise SystemExit(self._fail(message))

    @staticmethod
    def _fail(message):
        print(f"error: {message}", file=sys.stderr)
        return 1


def _out_path(args, name: str) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    if path.exists() and not args.force:
        raise DataError(f"{path} exists; pass --force to overwrite")
    return path


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _write_meta(args, path: Path, extra: dict | None = None) -> None:
    meta = {
        "command": args.command,
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "argv": sys.argv[1:],
    }
    if extra:
        meta.update(extra)
    path.write_text(json.dumps(meta, indent=2) + "\n")


def _constraints_for(sample: NetworkSample, fixed: bool):
    if not fixed:
        return None
    return [Constraint.fixed_edges(net.edge_count) for net in sample.networks]


def _parse_stats(text: str) -> list[StatTerm]:
    stats = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            kind, attr = part.split(":", 1)
            if kind != "match":
                raise DataError(f"only match takes an attribute, got {part!r}")
            stats.append(StatTerm.match(attr))
        elif part in ("edges", "twostar", "triangle"):
            stats.append(StatTerm(part))
        else:
            raise DataError(
                f"unknown statistic {part!r}; use edges, twostar, triangle, or match:ATTR"
            )
    if not stats:
        raise DataError("no statistics given")
    return stats


# ---------------------------------------------------------------------------
# Subcommands


def cmd_fit(args) -> int:
    sample = load_sample(args.data)
    model = load_model(args.model)
    cons = _constraints_for(sample, args.fixed_edges)
    code = 0
    try:
        if args.method == "mple":
            fit = mple(model, sample, cons)
        elif args.method == "exact":
            fit = exact_mle(model, sample, cons)
        else:
            if args.seed is None:
                raise DataError("--seed is required for method mcmc")
            sim = SimConfig(draws=args.draws, seed=args.seed)
            fit = mcmc_mle(model, sample, cons, sim=sim)
    except NonconvergenceError as exc:
        if exc.fit is None:
            print(f"nonconvergence: {exc}", file=sys.stderr)
            return 2
        fit, code = exc.fit, 2
        print(f"nonconvergence: {exc}", file=sys.stderr)
    if not fit.converged:
        code = 2
    save_fit(fit, _out_path(args, "fit.json"))
    rows = [
        [r.label, f"{r.estimate:.6g}", f"{r.se:.6g}", f"{r.z:.4f}", format_pvalue(r.pvalue), r.stars]
        for r in coef_table(fit)
    ]
    _write_csv(_out_path(args, "coefs.csv"), ["label", "estimate", "se", "z", "p", "stars"], rows)
    if args.method == "mcmc":
        _write_meta(args, _out_path(args, "fit.meta.json"))
    return code


def cmd_test(args) -> int:
    fit = load_fit(args.fit)
    try:
        spec = json.loads(Path(args.tests).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read tests file {args.tests}: {exc}") from exc
    rows = []
    for entry in spec.get("omnibus", ()):
        res = omnibus_wald(fit, entry["terms"], label=entry.get("label", ""))
        rows.append(
            [res.label, res.kind, f"{res.statistic:.4g}", res.df, "", "", format_pvalue(res.pvalue)]
        )
    for entry in spec.get("contrasts", ()):
        con = Contrast.from_labels(
            fit.labels, entry["weights"], tail=entry.get("tail", "two-sided"),
            label=entry.get("label", ""),
        )
        res = contrast_test(fit, con)
        rows.append(
            [
                res.label, res.kind, f"{res.statistic:.4g}", res.tail,
                f"{res.estimate:.6g}", f"{res.se:.6g}", format_pvalue(res.pvalue),
            ]
        )
    _write_csv(
        _out_path(args, "tests.csv"),
        ["label", "kind", "stat", "df_or_tail", "estimate", "se", "p"],
        rows,
    )
    return 0


def cmd_contrast(args) -> int:
    fit = load_fit(args.fit)
    weights = {}
    for spec in args.coef:
        if "=" not in spec:
            raise DataError(f"--coef expects LABEL=VALUE, got {spec!r}")
        name, value = spec.rsplit("=", 1)
        weights[name] = float(value)
    con = Contrast.from_labels(fit.labels, weights, tail=args.tail, label=args.label)
    res = contrast_test(fit, con)
    rows = [[res.label, f"{res.estimate:.6g}", f"{res.se:.6g}", f"{res.statistic:.4f}",
             res.tail, format_pvalue(res.pvalue)]]
    _write_csv(_out_path(args, "contrast.csv"), ["label", "estimate", "se", "z", "tail", "p"], rows)
    print(f"{res.label or 'contrast'}: estimate {res.estimate:.4g} (se {res.se:.4g}), "
          f"p = {format_pvalue(res.pvalue)}")
    return 0


def cmd_vif(args) -> int:
    fit = load_fit(args.fit)
    model = load_model(args.model)
    result = vif(fit, model)
    rows = [[r.label, f"{r.vif:.6g}", f"{r.root_vif:.6g}"] for r in result.rows]
    _write_csv(_out_path(args, "vif.csv"), ["label", "vif", "root_vif"], rows)
    if result.singular_pair:
        print(
            f"warning: singular estimate correlations; {result.singular_pair[0]!r} and "
            f"{result.singular_pair[1]!r} are collinear", file=sys.stderr,
        )
    if args.cor:
        corr = cor_matrix(fit)
        rows = [[fit.labels[i]] + [f"{v:.6g}" for v in corr[i]] for i in range(fit.p)]
        _write_csv(_out_path(args, "cor.csv"), ["label", *fit.labels], rows)
    return 0


def cmd_curve(args) -> int:
    fit = load_fit(args.fit)
    model = load_model(args.model)
    if ":" in args.grid:
        lo, hi = args.grid.split(":", 1)
        grid = list(range(int(lo), int(hi) + 1))
    else:
        grid = [int(x) for x in args.grid.split(",")]
    curve = size_effect_curve(fit, model, args.feature, grid, reference_n=args.reference)
    rows = [[n, f"{v:.8g}", f"{s:.8g}"] for n, v, s in zip(curve.grid, curve.values, curve.ses)]
    _write_csv(_out_path(args, "curve.csv"), ["n", "value", "se"], rows)
    return 0


def cmd_power(args) -> int:
    try:
        spec = json.loads(Path(args.scenario).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read scenario file {args.scenario}: {exc}") from exc
    if args.seed is not None:
        spec["seed"] = args.seed
    if "seed" not in spec:
        raise DataError("scenario needs a seed (in the file or via --seed)")
    scenario = power_scenario(
        S_grid=spec["S_grid"],
        n=spec["n"],
        replicates=spec["replicates"],
        seed=spec["seed"],
        theta_h1=spec["theta_h1"],
        m=spec.get("m"),
        conditional=spec.get("conditional", True),
        attribute_gen=spec.get("attribute_gen", {"kind": "balanced-gender"}),
        test_term=spec.get("test_term", "match.gender"),
        alpha=spec.get("alpha", 0.05),
        fit_method=spec.get("fit_method", "exact"),
    )
    curve = empirical_power(scenario, workers=args.workers)
    rows = [
        [pt.S, f"{pt.p_hat:.6g}", f"{pt.mcse:.6g}", pt.rejects, pt.failures]
        for pt in curve.points
    ]
    _write_csv(_out_path(args, "power.csv"), ["S", "p_hat", "mcse", "rejects", "failures"], rows)
    _write_meta(args, _out_path(args, "power.meta.json"), {"scenario": spec})
    return 0


def cmd_simulate(args) -> int:
    sample = load_sample(args.templates)
    model = load_model(args.model)
    try:
        theta_obj = json.loads(Path(args.theta).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read theta file {args.theta}: {exc}") from exc
    if isinstance(theta_obj, dict) and "theta" in theta_obj:
        theta = np.asarray(theta_obj["theta"], dtype=float)
        if "labels" in theta_obj and tuple(theta_obj["labels"]) != model.labels:
            raise DataError("theta file labels do not match the model")
    elif isinstance(theta_obj, dict):
        theta = np.array([float(theta_obj.get(lbl, 0.0)) for lbl in model.labels])
    else:
        theta = np.asarray(theta_obj, dtype=float)
    if theta.shape != (model.p,):
        raise DataError(f"theta must have length {model.p}")
    if args.seed is None:
        raise DataError("--seed is required for simulate")
    constraint = None
    templates = []
    for net in sample.networks:
        c = Constraint.fixed_edges(net.edge_count) if args.fixed_edges else FREE
        templates.append((net, c))
    config = SimConfig(
        draws=args.draws, seed=args.seed, burnin=args.burnin, interval=args.interval
    )
    out = simulate_sample(model, templates, theta, config, taxonomy=sample.taxonomy)
    path = _out_path(args, "sample.jsonl")
    save_sample(out, path)
    _write_meta(args, _out_path(args, "sample.meta.json"))
    return 0


def cmd_gof(args) -> int:
    sample = load_sample(args.data)
    model = load_model(args.model)
    fit = load_fit(args.fit)
    if args.seed is None:
        raise DataError("--seed is required for gof")
    stats = _parse_stats(args.stats)
    cons = _constraints_for(sample, args.fixed_edges)
    rows = gof_summary(fit, model, sample, stats, args.draws, args.seed, constraints=cons)
    out = [
        [r.scope, r.stat_label, f"{r.observed:.6g}", f"{r.q025:.6g}", f"{r.q500:.6g}",
         f"{r.q975:.6g}", f"{r.tail_prop:.6g}"]
        for r in rows
    ]
    _write_csv(
        _out_path(args, "gof.csv"),
        ["scope", "statistic", "observed", "q025", "q500", "q975", "tail_prop"],
        out,
    )
    _write_meta(args, _out_path(args, "gof.meta.json"))
    return 0


def cmd_residuals(args) -> int:
    sample = load_sample(args.data)
    model = load_model(args.model)
    fit = load_fit(args.fit)
    if args.seed is None:
        raise DataError("--seed is required for residuals")
    stats = _parse_stats(args.stats)
    cons = _constraints_for(sample, args.fixed_edges)
    table = simulated_residuals(fit, model, sample, stats, args.draws, args.seed, constraints=cons)
    rows = [
        [r.network_id, r.stat_label, f"{r.observed:.6g}", f"{r.sim_mean:.6g}",
         f"{r.sim_sd:.6g}", f"{r.residual:.6g}"]
        for r in table.rows
    ]
    _write_csv(
        _out_path(args, "residuals.csv"),
        ["network", "statistic", "observed", "sim_mean", "sim_sd", "residual"],
        rows,
    )
    if args.covariate:
        values = {}
        for net in sample.networks:
            try:
                values[net.attrs.id] = float(net.attrs.value(args.covariate))
            except KeyError:
                raise DataError(
                    f"network {net.attrs.id!r} has no attribute {args.covariate!r}"
                ) from None
        res = residual_regression(table, args.stat, values, label=f"{args.stat} ~ {args.covariate}")
        _write_csv(
            _out_path(args, "regression.csv"),
            ["label", "slope", "se", "t", "df", "p"],
            [[res.label, f"{res.estimate:.6g}", f"{res.se:.6g}", f"{res.statistic:.4f}",
              res.df, format_pvalue(res.pvalue)]],
        )
    _write_meta(args, _out_path(args, "residuals.meta.json"))
    return 0


def cmd_schema(args) -> int:
    for name, cols in SCHEMAS.items():
        print(f"{name}: {cols}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="manynets", description=__doc__)
    parser.add_argument("--version", action="version", version=f"manynets {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--force", action="store_true", help="overwrite existing outputs")
        p.add_argument("--workers", type=int, default=1, help="worker processes")
        if seed:
            p.add_argument("--seed", type=int, default=None, help="RNG seed")

    p = sub.add_parser("fit", help="fit a model to a sample")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--method", choices=("mple", "exact", "mcmc"), default="mple")
    p.add_argument("--fixed-edges", action="store_true",
                   help="condition each network on its observed edge count")
    p.add_argument("--draws", type=int, default=400, help="MC draws per network (mcmc)")
    common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("test", help="omnibus tests and contrasts from a spec file")
    p.add_argument("--fit", required=True)
    p.add_argument("--tests", required=True)
    common(p, seed=False)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("contrast", help="one linear contrast of coefficients")
    p.add_argument("--fit", required=True)
    p.add_argument("--coef", action="append", required=True, metavar="LABEL=VALUE")
    p.add_argument("--tail", choices=("two-sided", "upper", "lower"), default="two-sided")
    p.add_argument("--label", default="")
    common(p, seed=False)
    p.set_defaults(func=cmd_contrast)

    p = sub.add_parser("vif", help="variance inflation factors")
    p.add_argument("--fit", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--cor", action="store_true", help="also write the estimate correlation matrix")
    common(p, seed=False)
    p.set_defaults(func=cmd_vif)

    p = sub.add_parser("curve", help="network-size effect curve")
    p.add_argument("--fit", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--feature", choices=("edges", "twostar", "triangle"), required=True)
    p.add_argument("--grid", required=True, help="sizes, e.g. 2:10 or 2,4,8")
    p.add_argument("--reference", type=int, default=None)
    common(p, seed=False)
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("power", help="empirical power curve for a scenario")
    p.add_argument("--scenario", required=True)
    common(p)
    p.set_defaults(func=cmd_power)

    p = sub.add_parser("simulate", help="simulate networks from a model")
    p.add_argument("--model", required=True)
    p.add_argument("--templates", required=True, help="JSONL sample providing templates")
    p.add_argument("--theta", required=True, help="JSON coefficients (fit.json works)")
    p.add_argument("--draws", type=int, default=1)
    p.add_argument("--burnin", type=int, default=None)
    p.add_argument("--interval", type=int, default=None)
    p.add_argument("--fixed-edges", action="store_true")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gof", help="goodness-of-fit percentile summary")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--fit", required=True)
    p.add_argument("--stats", default="edges,twostar,triangle")
    p.add_argument("--draws", type=int, default=200)
    p.add_argument("--fixed-edges", action="store_true")
    common(p)
    p.set_defaults(func=cmd_gof)

    p = sub.add_parser("residuals", help="simulation-based residuals and regression")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--fit", required=True)
    p.add_argument("--stats", default="edges")
    p.add_argument("--draws", type=int, default=200)
    p.add_argument("--covariate", default=None, help="network attribute to regress on")
    p.add_argument("--stat", default="edges", help="residual statistic for the regression")
    p.add_argument("--fixed-edges", action="store_true")
    common(p)
    p.set_defaults(func=cmd_residuals)

    p = sub.add_parser("schema", help="document the output CSV columns")
    p.set_defaults(func=cmd_schema)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    except (DataError, ModelValidationError, EnumerationBoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NonconvergenceError as exc:
        print(f"nonconvergence: {exc}", file=sys.stderr)
        return 2
    except ManynetsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
