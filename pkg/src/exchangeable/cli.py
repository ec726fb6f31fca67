"""Command-line front end.

Subcommands: ``predict`` (build a region), ``query`` (membership from a
saved region), ``test`` (rank tests), ``validate`` (Monte Carlo checks),
``plotdata`` (level-set plot columns) and ``rerun`` (replay a saved run
configuration). Exit status is 0 on success, 1 on usage or input errors
and 2 when a validation check fails.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass

import numpy as np

from . import aggregate, harness, rank_tests
from .conformal import (PredictionRegion, RegionSpec, cross_section, extract_interval, full_conformal_general,
                        full_conformal_real, grid_runs, split_conformal)
from .ranks import DEFAULT_XI, JitterConfig
from .transforms import FITTERS, TWO_SAMPLE_FITTERS, JointRecipe, Recipe

EXIT_OK, EXIT_USAGE, EXIT_FAILED = 0, 1, 2
SCHEMA_VERSION = 1
METHODS = ("full", "split", "jackknife-plus", "cv-plus", "bonferroni")
TRANSFORM_ALIASES = {
    "abs-mean": "abs-deviation-mean",
    "abs-median": "abs-deviation-median",
    "density": "density-levelset",
    "levelset": "density-levelset",
    "kmeans": "kmeans-cluster",
    "pca": "pca-norm-ball",
    "hpd": "conditional-density-hpd",
    "residual": "regression-residual",
}
DEFAULT_GRID_POINTS = 2001


class UsageError(Exception):
    pass


class CsvError(UsageError):
    def __init__(self, path, line, msg):
        super().__init__(f"{path}:{line}: {msg}")


# -- input ---------------------------------------------------------------

@dataclass
class Table:
    path: str
    header: list
    rows: list  # (line number, fields)

    def column(self, name: str) -> int:
        if name not in self.header:
            raise UsageError(f"unknown column {name!r}; columns are {', '.join(self.header)}")
        return self.header.index(name)

    def numeric(self, names) -> np.ndarray:
        idx = [self.column(c) for c in names]
        out = np.empty((len(self.rows), len(idx)))
        for r, (line, fields) in enumerate(self.rows):
            for j, c in enumerate(idx):
                try:
                    out[r, j] = float(fields[c])
                except ValueError:
                    raise CsvError(self.path, line, f"non-numeric value {fields[c]!r} in column "
                                                    f"{self.header[c]!r}") from None
        return out

    def strings(self, name: str) -> list:
        c = self.column(name)
        return [fields[c] for _, fields in self.rows]

    def auto_features(self, exclude) -> list:
        """Non-role columns whose first data row is numeric."""
        if not self.rows:
            return []
        first = self.rows[0][1]
        out = []
        for j, name in enumerate(self.header):
            if name in exclude:
                continue
            try:
                float(first[j])
            except ValueError:
                continue
            out.append(name)
        return out


def read_table(path: str) -> Table:
    try:
        fh = open(path, newline="")
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        header = None
        rows = []
        for fields in reader:
            line = reader.line_num
            if not fields or all(not f.strip() for f in fields):
                continue
            fields = [f.strip() for f in fields]
            if header is None:
                header = fields
                if len(set(header)) != len(header):
                    raise CsvError(path, line, "duplicate column names")
                continue
            if len(fields) != len(header):
                raise CsvError(path, line, f"expected {len(header)} fields, got {len(fields)}")
            rows.append((line, fields))
    if header is None:
        raise CsvError(path, 1, "missing header row")
    if not rows:
        raise CsvError(path, 2, "no data rows")
    return Table(path, header, rows)


def _split_names(s: str | None) -> list | None:
    return None if s is None else [c.strip() for c in s.split(",") if c.strip()]


def load_points(args) -> tuple[np.ndarray, int]:
    """Data as rows ``(features..., response)``; returns ``(points, n_features)``."""
    table = read_table(args.input)
    roles = [r for r in (getattr(args, "response", None), getattr(args, "group", None)) if r]
    for r in roles:
        table.column(r)
    features = _split_names(args.features) or table.auto_features(roles)
    if not features:
        raise UsageError("no numeric feature columns")
    cols = features + ([args.response] if getattr(args, "response", None) else [])
    return table.numeric(cols), len(features)


def parse_grid(spec: str | None, values: np.ndarray | None = None) -> np.ndarray:
    """``lo:hi:num`` or, by default, a grid padding the data range by half its span."""
    if spec:
        try:
            lo, hi, num = spec.split(":")
            grid = np.linspace(float(lo), float(hi), int(num))
        except ValueError:
            raise UsageError(f"grid must look like lo:hi:num, got {spec!r}") from None
        if grid.size < 2:
            raise UsageError("grid needs at least 2 points")
        return grid
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    lo, hi = float(v.min()), float(v.max())
    pad = 0.5 * (hi - lo) + 1.0
    return np.linspace(lo - pad, hi + pad, DEFAULT_GRID_POINTS)


# -- shared helpers ------------------------------------------------------

def canonical_transform(name: str) -> str:
    kind = TRANSFORM_ALIASES.get(name, name)
    if kind not in FITTERS and kind not in TWO_SAMPLE_FITTERS:
        known = sorted(set(FITTERS) | set(TWO_SAMPLE_FITTERS) | set(TRANSFORM_ALIASES))
        raise UsageError(f"unknown transform {name!r}; choose from {', '.join(known)}")
    return kind


def make_recipe(args, name: str | None = None) -> Recipe:
    kind = canonical_transform(name or args.transform)
    params = {}
    if getattr(args, "bandwidth", None) is not None and kind in (
            "density-levelset", "regression-residual", "conditional-density-hpd", "density-ratio",
            "class-probability"):
        params["bandwidth"] = args.bandwidth
    if kind == "kmeans-cluster":
        params["k"] = args.k if args.k is not None else 2
        params["seed"] = args.seed
    if kind == "pca-norm-ball" and args.k is not None:
        params["k"] = args.k
    if kind == "norm-ball" and getattr(args, "whiten", None):
        params["whiten"] = args.whiten
    if kind == "conditional-density-hpd" and getattr(args, "y_grid", None):
        params["y_grid"] = parse_grid(args.y_grid).tolist()
    return Recipe(kind, params)


def jitter_config(args) -> JitterConfig:
    return JitterConfig(xi=args.xi, seed=args.seed)


def run_config(args) -> dict:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    return {"schema_version": SCHEMA_VERSION, **cfg}


def write_json(path: str | None, doc: dict) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def write_csv(path: str, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(v: float) -> str:
    return repr(float(v))


def read_json(path: str) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise UsageError(f"{path}:{e.lineno}: invalid JSON ({e.msg})") from None
    if not isinstance(doc, dict):
        raise UsageError(f"{path}: expected a JSON object")
    return doc


def load_region(doc: dict):
    """Rebuild a region from the JSON written by ``predict``."""
    region = doc.get("region", doc)
    if region.get("type") == "prediction-region":
        return PredictionRegion.from_dict(region)
    if region.get("type") in aggregate.METHODS:
        return aggregate.region_from_dict(region)
    raise UsageError(f"not a region document (type {region.get('type')!r})")


# -- predict -------------------------------------------------------------

def cmd_predict(args) -> int:
    if args.method not in METHODS:
        raise UsageError(f"unknown method {args.method!r}; choose from {', '.join(METHODS)}")
    points, p = load_points(args)
    n = points.shape[0]
    data = points[:, 0] if points.shape[1] == 1 else points
    cfg = jitter_config(args)
    recipe = make_recipe(args)
    if recipe.labelled:
        raise UsageError(f"{recipe.kind} needs two labelled samples; use it with 'test'")
    out = {"schema_version": SCHEMA_VERSION, "run_config": run_config(args)}

    if args.method == "full" and recipe.kind == "identity":
        if data.ndim != 1:
            raise UsageError("the identity transform needs scalar data")
        region = full_conformal_real(data, RegionSpec(args.alpha, jitter=cfg))
    elif args.method == "full":
        if data.ndim != 1:
            raise UsageError("full conformal with a refit transform is evaluated on a probe grid of scalar data")
        grid = parse_grid(args.probe_grid, data)
        res = full_conformal_general(data, grid, recipe, RegionSpec(args.alpha, jitter=cfg))
        inside = np.flatnonzero(res.included)
        intervals = grid_runs(grid, res.included)
        out["region"] = {"type": "full-conformal-candidates", "alpha": args.alpha, "recipe": recipe.to_dict(),
                         "order_index": res.order_index, "jitter": cfg.to_dict(),
                         "n_candidates": int(grid.size), "n_included": int(inside.size),
                         "intervals": [list(iv) for iv in intervals]}
        write_json(args.output, out)
        if args.intervals:
            write_csv(args.intervals, ["lo", "hi"], [[_fmt(a), _fmt(b)] for a, b in intervals])
        return EXIT_OK
    elif args.method == "split":
        n1 = args.n1 if args.n1 is not None else n // 2
        region = split_conformal(data, RegionSpec(args.alpha, n1, cfg), recipe)
    else:
        spec = aggregate.AggregationSpec(args.method, args.alpha, cfg, folds=args.folds,
                                         K=args.K if args.method == "bonferroni" else None, n1=args.n1)
        region = aggregate.aggregate_region(data, recipe, spec)

    out["region"] = region.to_dict()
    write_json(args.output, out)
    if args.intervals:
        write_interval_table(args, region, data, p)
    return EXIT_OK


def write_interval_table(args, region, data, p: int) -> None:
    if data.ndim == 1:
        grid = parse_grid(args.probe_grid, data)
        rows = [[_fmt(a), _fmt(b)] for a, b in extract_interval(region, grid)]
        write_csv(args.intervals, ["lo", "hi"], rows)
        return
    if not args.response or p != data.shape[1] - 1:
        raise UsageError("interval tables need scalar data or a --response column")
    y_grid = parse_grid(args.y_grid, data[:, -1])
    rows = []
    for i, row in enumerate(data):
        sec = cross_section(region, row[:-1], y_grid)
        if sec.extrapolation:
            rows.append([i, "", "", 1])
        for a, b in sec.intervals:
            rows.append([i, _fmt(a), _fmt(b), 0])
    write_csv(args.intervals, ["row", "lo", "hi", "extrapolation"], rows)


def cmd_query(args) -> int:
    region = load_region(read_json(args.region))
    points, _ = load_points(args)
    data = points[:, 0] if points.shape[1] == 1 else points
    inside = np.atleast_1d(region.contains(data))
    write_csv(args.output, ["row", "member"], [[i, int(v)] for i, v in enumerate(inside)])
    return EXIT_OK


# -- test ----------------------------------------------------------------

def cmd_test(args) -> int:
    cfg = jitter_config(args)
    recipe = make_recipe(args)
    if args.mode == "two-sample":
        if not args.group:
            raise UsageError("two-sample mode needs --group")
        table = read_table(args.input)
        labels = table.strings(args.group)
        classes = sorted(set(labels))
        if len(classes) < 2:
            raise UsageError(f"group column {args.group!r} has a single class")
        if len(classes) > 2:
            raise UsageError(f"group column {args.group!r} has {len(classes)} classes; need exactly 2")
        features = _split_names(args.features) or table.auto_features([args.group])
        pts = table.numeric(features)
        lab = np.array(labels)
        x, y = pts[lab == classes[0]], pts[lab == classes[1]]
        if x.shape[1] == 1:
            x, y = x[:, 0], y[:, 0]
        if args.split_frac is not None:
            report = rank_tests.two_sample_test_split(x, y, args.split_frac, recipe, args.alpha, cfg)
        else:
            report = rank_tests.two_sample_test(x, y, recipe, args.alpha, cfg)
        extra = {"classes": classes}
    else:
        if not (args.x_cols and args.y_cols):
            raise UsageError("independence mode needs --x-cols and --y-cols")
        table = read_table(args.input)
        x = table.numeric(_split_names(args.x_cols))
        y = table.numeric(_split_names(args.y_cols))
        x = x[:, 0] if x.shape[1] == 1 else x
        y = y[:, 0] if y.shape[1] == 1 else y
        recipe_y = make_recipe(args, args.transform_y or args.transform)
        if args.split_frac is not None:
            joint = JointRecipe.from_marginals(recipe, recipe_y)
            report = rank_tests.independence_test_split(x, y, args.split_frac, joint, args.alpha, cfg)
        else:
            report = rank_tests.independence_test(x, y, recipe, recipe_y, args.alpha, cfg)
        extra = {}
    out = {"schema_version": SCHEMA_VERSION, "run_config": run_config(args), "report": report.to_dict(), **extra}
    write_json(args.output, out)
    return EXIT_OK


# -- validate ------------------------------------------------------------

def _generator(args, default: str, dim: int = 1) -> harness.Generator:
    return harness.Generator(args.generator or default, dim=dim)


def _check_rank_uniformity(args):
    return [harness.rank_uniformity_chi2(_generator(args, "iid-uniform"), args.n or 3, args.R or 60_000, args.seed)]


def _check_rank_cdf(args):
    return harness.rank_cdf_check(_generator(args, "iid-normal"), args.n or 5, [1.5, 2.0, 3.7],
                                  args.R or 50_000, args.seed)


def _check_coverage_full(args):
    n = args.n or 19

    def build(data, alpha, cfg):
        return full_conformal_real(data, RegionSpec(alpha, jitter=cfg))

    return [harness.estimate_coverage(_generator(args, "iid-normal"), build, n, args.alpha, args.R or 20_000,
                                      harness.full_band(args.alpha, n), args.seed, check="coverage-full")]


def _check_coverage_split(args):
    n = args.n or 49
    n1 = args.n1 if args.n1 is not None else 24
    recipe = make_recipe(args, args.transform or "abs-mean")
    dim = 2 if recipe.kind in ("norm-ball", "regression-residual", "pca-norm-ball") else 1
    return harness.split_coverage(_generator(args, "iid-normal", dim), recipe, n, n1, [args.alpha],
                                  args.R or 20_000, args.seed)


def _check_leave_out(method):
    def run(args):
        n = args.n or 30
        recipe = Recipe("regression-residual")
        gen = _generator(args, "regression")

        def build(data, alpha, cfg):
            folds = (args.folds or 2) if method == "cv-plus" else None
            spec = aggregate.AggregationSpec(method, alpha, cfg, folds=folds)
            return aggregate.leave_out_region(data, recipe, spec)

        return [harness.estimate_coverage(gen, build, n, args.alpha, args.R or 5_000,
                                          (1.0 - 2 * args.alpha, 1.0), args.seed, check=method)]
    return run


def _check_bonferroni(args):
    n = args.n or 60
    K = args.K or 5
    recipe = make_recipe(args, args.transform or "abs-mean")

    def build(data, alpha, cfg):
        return aggregate.bonferroni_splits(data, K, aggregate.AggregationSpec("bonferroni", alpha, cfg, K=K,
                                                                              n1=args.n1), recipe)

    return [harness.estimate_coverage(_generator(args, "iid-normal"), build, n, args.alpha, args.R or 10_000,
                                      None, args.seed, check="bonferroni")]


def _check_pvalue(args):
    n = args.n or 9
    return harness.pvalue_superuniformity(_generator(args, "iid-normal"), n, [k / (n + 1) for k in range(1, n + 1)],
                                          args.R or 50_000, args.seed)


def _check_type1_two_sample(split: bool):
    def run(args):
        n = args.n or 25
        gen = _generator(args, "iid-normal", dim=3)
        recipe = make_recipe(args, args.transform or ("density-ratio" if split else "kmeans"))

        def sampler(rng):
            return gen.sample(rng, n), gen.sample(rng, n)

        def test(x, y, cfg):
            if split:
                return rank_tests.two_sample_test_split(x, y, 0.5, recipe, args.alpha, cfg)
            return rank_tests.two_sample_test(x, y, recipe, args.alpha, cfg)

        name = "type1-two-sample-split" if split else "type1-two-sample"
        return harness.estimate_type1(sampler, test, [args.alpha], args.R or 20_000, args.seed, check=name)
    return run


def _check_type1_independence(split: bool):
    def run(args):
        n = args.n or 20
        gen = _generator(args, "iid-normal", dim=3)
        recipe = make_recipe(args, args.transform or "pca")

        def sampler(rng):
            return gen.sample(rng, n), gen.sample(rng, n)

        def test(x, y, cfg):
            if split:
                return rank_tests.independence_test_split(x, y, 0.5, JointRecipe.from_marginals(recipe, recipe),
                                                          args.alpha, cfg)
            return rank_tests.independence_test(x, y, recipe, recipe, args.alpha, cfg)

        name = "type1-independence-split" if split else "type1-independence"
        return harness.estimate_type1(sampler, test, [args.alpha], args.R or 20_000, args.seed, check=name)
    return run


CHECKS = {
    "rank-uniformity": _check_rank_uniformity,
    "rank-cdf": _check_rank_cdf,
    "coverage-full": _check_coverage_full,
    "coverage-split": _check_coverage_split,
    "jackknife-plus": _check_leave_out("jackknife-plus"),
    "cv-plus": _check_leave_out("cv-plus"),
    "bonferroni": _check_bonferroni,
    "pvalue-superuniformity": _check_pvalue,
    "type1-two-sample": _check_type1_two_sample(False),
    "type1-two-sample-split": _check_type1_two_sample(True),
    "type1-independence": _check_type1_independence(False),
    "type1-independence-split": _check_type1_independence(True),
}


def cmd_validate(args) -> int:
    if args.check not in CHECKS:
        raise UsageError(f"unknown check {args.check!r}; choose from {', '.join(CHECKS)}")
    reports = CHECKS[args.check](args)
    passed = all(r.passed for r in reports)
    doc = {"schema_version": SCHEMA_VERSION, "run_config": run_config(args), "passed": passed,
           "reports": [r.to_dict() for r in reports]}
    write_json(args.output, doc)
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(harness.reports_to_csv(reports))
    for r in reports:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.check}: estimate={r.estimate:.6g} se={r.se:.3g} band=[{r.band[0]:.6g}, {r.band[1]:.6g}]",
              file=sys.stderr)
    return EXIT_OK if passed else EXIT_FAILED


# -- plotdata ------------------------------------------------------------

def cmd_plotdata(args) -> int:
    points, _ = load_points(args)
    if points.shape[1] != 1:
        raise UsageError(f"plotdata needs scalar data, got {points.shape[1]} feature columns")
    data = points[:, 0]
    n = data.size
    n1 = args.n1 if args.n1 is not None else n // 2
    recipe = Recipe("density-levelset", {"bandwidth": args.bandwidth} if args.bandwidth else {})
    region = split_conformal(data, RegionSpec(args.alpha, n1, jitter_config(args)), recipe)
    grid = parse_grid(args.probe_grid, data)
    density = region.transform.model.density(grid)
    member = region.contains(grid)
    write_csv(args.output, ["grid", "density", "member"],
              [[_fmt(g), _fmt(d), int(m)] for g, d, m in zip(grid, density, member)])
    return EXIT_OK


# -- rerun ---------------------------------------------------------------

def cmd_rerun(args) -> int:
    doc = read_json(args.config)
    cfg = dict(doc.get("run_config", doc))
    handler = COMMANDS.get(cfg.get("command"))
    if handler is None:
        raise UsageError(f"{args.config} does not hold a run configuration")
    cfg.pop("schema_version", None)
    ns = argparse.Namespace(**cfg)
    if args.output:
        ns.output = args.output
    return handler(ns)


# -- parser --------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p, *, data: bool = True):
    if data:
        p.add_argument("--input", required=True, help="CSV file with a header row")
        p.add_argument("--features", help="comma-separated feature columns (default: numeric non-role columns)")
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--xi", type=float, default=DEFAULT_XI, help="jitter magnitude")
    p.add_argument("--transform", default="abs-mean")
    p.add_argument("--k", type=int, help="clusters (kmeans) or components (pca)")
    p.add_argument("--bandwidth", type=float)
    p.add_argument("--output", help="output path (default: stdout for JSON)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="exchangeable", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("predict", help="build a prediction region")
    _common(p)
    p.add_argument("--method", default="split")
    p.add_argument("--response", help="response column (regression data)")
    p.add_argument("--n1", type=int, help="training size for split methods (default n // 2)")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--K", type=int, default=5, help="number of splits for bonferroni")
    p.add_argument("--whiten", choices=("none", "full-covariance", "diagonal"))
    p.add_argument("--probe-grid", help="lo:hi:num grid for interval extraction")
    p.add_argument("--y-grid", help="lo:hi:num response grid for cross-sections")
    p.add_argument("--intervals", help="also write an interval / cross-section CSV here")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("query", help="membership of points in a saved region")
    p.add_argument("--region", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--features")
    p.add_argument("--response")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("test", help="two-sample or independence rank test")
    _common(p)
    p.add_argument("--mode", choices=("two-sample", "independence"), default="two-sample")
    p.add_argument("--group", help="group label column (two-sample)")
    p.add_argument("--x-cols", help="comma-separated x columns (independence)")
    p.add_argument("--y-cols", help="comma-separated y columns (independence)")
    p.add_argument("--transform-y", help="transform for y (independence; default --transform)")
    p.add_argument("--split-frac", type=float, help="fit on this fraction, test on the rest")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("validate", help="run a Monte Carlo check")
    p.add_argument("check", help=", ".join(CHECKS))
    _common(p, data=False)
    p.add_argument("--n", type=int)
    p.add_argument("--n1", type=int)
    p.add_argument("-R", dest="R", type=int, help="replications")
    p.add_argument("--generator", choices=harness.GENERATOR_KINDS)
    p.add_argument("--K", type=int)
    p.add_argument("--folds", type=int)
    p.add_argument("--csv", help="also write a CSV row per report")
    p.set_defaults(transform=None)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("plotdata", help="grid, density estimate and level-set membership")
    _common(p)
    p.add_argument("--n1", type=int)
    p.add_argument("--probe-grid")
    p.set_defaults(func=cmd_plotdata)

    p = sub.add_parser("rerun", help="replay a saved run configuration")
    p.add_argument("config")
    p.add_argument("--output")
    p.set_defaults(func=cmd_rerun)
    return parser


COMMANDS = {"predict": cmd_predict, "query": cmd_query, "test": cmd_test, "validate": cmd_validate,
            "plotdata": cmd_plotdata}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ValueError) as e:
        print(f"exchangeable: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
