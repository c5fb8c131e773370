"""Configuration-driven verification harness.

    hexpfinsler verify --config CONFIG [--suite tensors|connection|projective|all]
    hexpfinsler geodesic --config CONFIG
    hexpfinsler report REPORT [REPORT ...]

Exit codes: 0 all checks pass, 1 a check failed, 2 configuration or
regularity error.  Configs are TOML files with dotted keys (``metric.kind``,
``hvector.family``, ``chart.seed``, ...); see the shipped examples in
``hexpfinsler/configs``.
"""
from __future__ import annotations

import argparse
import json
import platform
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from . import closed_forms as cf
from . import difference as df
from . import fundamentals as fu
from . import metrics as mt
from . import projectivity as pj
from .diffkit import EvaluationDomainError

TOLERANCES = {
    "algebraic": 1e-12,
    "tensors": 1e-9,
    "connection": 1e-7,
    "berwald": 1e-6,
    "geodesic": 1e-5,
    "projective": 1e-7,
}
INVERSE_PRODUCT_TOL = 1e-10
PARALLEL_TOL = 1e-9
SEPARATION = 1e-3  # lower bound for checks whose expected outcome is "non-zero"
BERWALD_SAMPLES = 32
SUITES = ("tensors", "connection", "projective")
REQUIRED_FIELDS = ("check", "eq", "samples", "max_abs", "max_rel", "tol", "pass")
SECTIONS = {"name", "description", "metric", "hvector", "chart", "expect", "geodesic"}

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

REGULARITY_ERRORS = (
    mt.InadmissibleMetricError,
    mt.ChangeOverflowError,
    cf.ChangeSingularityError,
    cf.ShermanMorrisonSingularityError,
    fu.DegenerateMetricError,
    EvaluationDomainError,
)


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    name: str
    source: str
    raw: dict
    samples: int = 128
    seed: int = 42
    tol: dict = field(default_factory=lambda: dict(TOLERANCES))

    @property
    def expect(self) -> dict:
        return self.raw.get("expect", {})

    @property
    def geodesic(self) -> dict:
        return self.raw.get("geodesic", {})

    def chart(self) -> mt.ChartSpec:
        c = self.raw.get("chart", {})
        n = int(self.raw["metric"].get("n", 2))
        return mt.ChartSpec(n=n, lo=tuple(c.get("lo", (-0.5,) * n)), hi=tuple(c.get("hi", (0.5,) * n)),
                            seed=self.seed)

    def build(self) -> tuple[mt.MetricFunction, mt.HVectorField]:
        metric = mt.make_metric(dict(self.raw["metric"]))
        h = dict(self.raw["hvector"])
        family = h.pop("family")
        hv = mt.make_hvector(family, metric, a=h.get("a"), Q=h.get("Q"), c=h.get("c", 0.0))
        return metric, hv

    def echo(self) -> dict:
        return {"name": self.name, "source": self.source, "settings": self.raw, "samples": self.samples,
                "seed": self.seed, "tolerances": self.tol}


def shipped_configs() -> list[Path]:
    """Paths of the example configs bundled with the package."""
    root = resources.files("hexpfinsler") / "configs"
    return sorted(Path(str(p)) for p in root.iterdir() if p.name.endswith(".toml"))


def load_config(path: str | Path, samples: int | None = None, seed: int | None = None,
                tol: dict | None = None) -> RunConfig:
    path = Path(path)
    if not path.exists():
        # allow bare names of shipped configs
        matches = [p for p in shipped_configs() if p.stem == str(path)]
        if not matches:
            raise ConfigError(f"config not found: {path}")
        path = matches[0]
    try:
        raw = tomllib.loads(path.read_text())
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as err:
        raise ConfigError(f"cannot parse {path.name}: {err}") from err
    unknown = set(raw) - SECTIONS
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    for section, key in (("metric", "kind"), ("hvector", "family")):
        if not isinstance(raw.get(section), dict) or key not in raw[section]:
            raise ConfigError(f"missing required key {section}.{key}")
    chart_seed = raw.get("chart", {}).get("seed", 42)
    cfg = RunConfig(name=str(raw.get("name", path.stem)), source=path.name, raw=raw,
                    samples=int(samples if samples is not None else 128),
                    seed=int(seed if seed is not None else chart_seed))
    if cfg.samples < 1:
        raise ConfigError("--samples must be positive")
    for key, value in (tol or {}).items():
        if value is not None:
            if not value > 0:
                raise ConfigError(f"tolerance for {key} must be positive")
            cfg.tol[key] = float(value)
    return cfg


def _record(check: str, eq: str, samples: int, residual, reference=None, tol: float = 1e-9,
            expect: str = "below", basis: str = "rel") -> dict:
    """One check record; ``max_rel`` divides by max(|reference|_inf, 1)."""
    residual = np.asarray(residual, dtype=float)
    max_abs = float(np.max(np.abs(residual))) if residual.size else 0.0
    scale = 1.0
    if reference is not None:
        scale = max(float(np.max(np.abs(np.asarray(reference, dtype=float)))), 1.0)
    max_rel = max_abs / scale
    value = max_rel if basis == "rel" else max_abs
    ok = value < tol if expect == "below" else value > tol
    return {"check": check, "eq": eq, "samples": int(samples), "max_abs": max_abs, "max_rel": max_rel,
            "tol": float(tol), "expect": f"max_{basis} {'<' if expect == 'below' else '>'} tol",
            "pass": bool(ok and np.isfinite(value))}


def _samples(cfg: RunConfig, metric, changed, count: int | None = None):
    return mt.sample_points(cfg.chart(), [metric, changed], count or cfg.samples)


def suite_tensors(cfg: RunConfig, metric, hv) -> tuple[list[dict], list[dict]]:
    changed = mt.hexp_apply(metric, hv)
    x, y = _samples(cfg, metric, changed)
    N = len(x)
    base = fu.base_tensors(metric, x, y)
    b, db_dy, _ = hv.jets(x, base.Ljet)
    cs = cf.change_scalars(base, b, hv.rho)
    star = cf.starred_tensors(base, cs)
    orc = fu.base_tensors(changed, x, y)
    tol, alg = cfg.tol["tensors"], cfg.tol["algebraic"]
    pairs = [
        ("star-L", "changed metric value", star.L, orc.L),
        ("star-L_i", "changed first y-derivative", star.Li, orc.l),
        ("star-L_ij", "changed second y-derivative", star.Lij, orc.Lij),
        ("star-L_ijk", "changed third y-derivative", star.Lijk, orc.Lijk),
        ("star-l_i", "changed supporting element", star.li, orc.l),
        ("star-g_ij", "changed metric tensor", star.g, orc.g),
        ("star-C_ijk", "changed Cartan tensor", star.C, orc.C),
        ("star-g^ij", "changed inverse metric", star.ginv, orc.ginv),
        ("star-C^h_ij", "changed mixed Cartan tensor", star.Cup, orc.Cup),
        ("star-g^ij-lemma", "inverse metric by rank-one updates", cf.star_inverse_metric_by_lemma(base, cs),
         star.ginv),
    ]
    checks = [_record(c, e, N, a - o, o, tol) for c, e, a, o in pairs]
    eye = np.broadcast_to(np.eye(base.y.shape[-1]), star.g.shape)
    checks.append(_record("star-g-inverse-product", "g^ik g_kj = delta", N, star.ginv @ star.g - eye,
                          tol=INVERSE_PRODUCT_TOL, basis="abs"))

    y_ = base.y

    def contract(T):
        # last index with y
        yb = y_.reshape(y_.shape[:-1] + (1,) * (T.ndim - y_.ndim) + y_.shape[-1:])
        return np.sum(T * yb, axis=-1)

    for tag, L_, Li, Lij, Lijk, C in (("base", base.L, base.l, base.Lij, base.Lijk, base.C),
                                      ("changed", star.L, star.Li, star.Lij, star.Lijk, star.C)):
        checks += [
            _record(f"euler-L_i-{tag}", "L_i y^i = L", N, contract(Li) - L_, L_, alg),
            _record(f"euler-L_ij-{tag}", "L_ij y^j = 0", N, contract(Lij), Li, alg),
            _record(f"euler-L_ijk-{tag}", "L_ijk y^k = -L_ij", N, contract(Lijk) + Lij, Lij, alg),
            _record(f"cartan-transversal-{tag}", "C_ijk y^k = 0", N, contract(C), C, alg),
        ]
    checks += [
        _record("m-orthogonal", "m_i y^i = 0", N, np.einsum("...i,...i->...", cs.m, y_), cs.b, alg),
        _record("m-norm", "m^2 = b^2 - tau^2", N, cs.m2 - (cs.b2 - cs.tau**2), cs.b2, alg),
        _record("hvector-derivative", "L db_i/dy^j = rho h_ij", N,
                base.L[..., None, None] * db_dy - hv.rho * base.h, base.h, alg),
    ]
    return checks, []


def suite_connection(cfg: RunConfig, metric, hv) -> tuple[list[dict], list[dict]]:
    changed = mt.hexp_apply(metric, hv)
    x, y = _samples(cfg, metric, changed)
    N = len(x)
    ctx = df.change_context(metric, hv, x, y)
    orc = df.oracle_difference(ctx)
    dt = df.difference_tensor(ctx)
    tol, exact = cfg.tol["connection"], cfg.tol["tensors"]
    D = orc.dF
    D0 = np.einsum("...ijk,...j->...ik", D, ctx.base.y)
    first, second = df.defining_residuals(dt.Djk, ctx)
    checks = [
        _record("metricity-base", "g_ij|k = 0", N, fu.metricity_residual(ctx.base, ctx.conn), ctx.base.g, exact),
        _record("metricity-changed", "*g_ij|k = 0", N, fu.metricity_residual(orc.star_base, orc.star_conn),
                orc.star_base.g, exact),
        _record("supporting-element-parallel", "L_i|j = 0", N,
                fu.supporting_element_residual(ctx.base, ctx.conn), ctx.base.Lij, exact),
        _record("difference-D00", "D^i_00 = 2(*G^i - G^i)", N, dt.D00 - 2 * orc.dG, tol=tol, basis="abs"),
        _record("difference-D0j", "D^i_0j = *N^i_j - N^i_j", N, dt.D0j - D0, tol=tol, basis="abs"),
        _record("difference-D", "D^i_jk = *F^i_jk - F^i_jk", N, dt.Djk - D, tol=tol, basis="abs"),
        _record("defining-first", "h-derivative of changed first y-derivative", N, first, tol=tol, basis="abs"),
        _record("defining-second", "h-derivative of changed second y-derivative", N, second, tol=tol,
                basis="abs"),
    ]
    parallel = bool(cfg.expect.get("parallel", True))
    mode, bound = ("below", PARALLEL_TOL) if parallel else ("above", SEPARATION)
    checks += [
        _record("h-parallel-b", "b_i|j = 0", N, ctx.covd.bij, tol=bound, expect=mode, basis="abs"),
        _record("difference-vanishes", "D^i_jk = 0", N, D, tol=bound, expect=mode, basis="abs"),
    ]
    nb = min(BERWALD_SAMPLES, N)
    lhs, rhs = df.berwald_diff(metric, hv, x[:nb], y[:nb])
    checks.append(_record("berwald-difference", "*G^i_kh - G^i_kh = dD^i_0k/dy^h", nb, lhs - rhs,
                          tol=cfg.tol["berwald"], basis="abs"))
    if parallel:
        checks.append(_record("berwald-difference-vanishes", "*G^i_kh - G^i_kh = 0", nb,
                              np.concatenate([lhs.ravel(), rhs.ravel()]), tol=PARALLEL_TOL, basis="abs"))
    return checks, df.printed_form_witnesses(ctx)


def _geodesic_pair(cfg: RunConfig, metric, changed, t_end=None, step=None):
    g = cfg.geodesic
    n = metric.n
    x0 = g.get("x0", [0.0] * n)
    y0 = g.get("y0", [1.0] + [0.0] * (n - 1))
    t_end = float(t_end if t_end is not None else g.get("t_end", 5.0))
    step = float(step if step is not None else g.get("step", 1e-3))
    if not (t_end > 0 and step > 0):
        raise ConfigError("geodesic t_end and step must be positive")
    box = mt.ChartSpec(n=n, lo=tuple(g.get("lo", (-10.0,) * n)), hi=tuple(g.get("hi", (10.0,) * n)))
    return (pj.geodesic_trace(metric, x0, y0, t_end, step, chart=box),
            pj.geodesic_trace(changed, x0, y0, t_end, step, chart=box))


def _pair_record(cfg: RunConfig, base_tr, changed_tr) -> dict:
    projective = bool(cfg.expect.get("projective", True))
    distance = pj.trace_compare(base_tr, changed_tr)
    mode, bound = ("below", cfg.tol["geodesic"]) if projective else ("above", SEPARATION)
    return _record("geodesic-pair", "base and changed geodesics coincide as point sets",
                   min(len(base_tr), len(changed_tr)), distance, tol=bound, expect=mode, basis="abs")


def suite_projective(cfg: RunConfig, metric, hv) -> tuple[list[dict], list[dict]]:
    changed = mt.hexp_apply(metric, hv)
    x, y = _samples(cfg, metric, changed)
    N = len(x)
    tol = cfg.tol["projective"]
    v = pj.is_projective(metric, hv, x, y, tol=tol)
    projective = bool(cfg.expect.get("projective", True))
    mode = "below" if projective else "above"
    ctx = df.change_context(metric, hv, x, y)
    D00 = 2 * df.oracle_difference(ctx).dG
    P = pj.projective_factor(D00, ctx.base, ctx.covd, ctx.cs)
    y_low = ctx.base.y_low
    checks = [
        _record("projective-verdicts-agree", "spray test agrees with covariant condition", N, v.disagreements,
                tol=1.0, basis="abs"),
        _record("spray-orthogonal", "D^i_00 parallel to y^i", N, v.spray_orthogonal, tol=tol, expect=mode,
                basis="abs"),
        _record("projectivity-condition", "F_i0 = -beta_|0 m_i / (2L)", N, v.condition, tol=tol, expect=mode,
                basis="abs"),
        _record("projective-factor", "y_i D^i_00 = 2 P L^2", N,
                np.einsum("...i,...i->...", y_low, D00) - 2 * P * ctx.base.L**2, tol=cfg.tol["connection"],
                basis="abs"),
    ]
    checks.append(_pair_record(cfg, *_geodesic_pair(cfg, metric, changed)))
    return checks, []


SUITE_RUNNERS = {"tensors": suite_tensors, "connection": suite_connection, "projective": suite_projective}


def _envelope(command: str, checks: list[dict], ledger: list[dict], **extra) -> dict:
    return {
        "command": command,
        "checks": checks,
        "ledger": dedupe_ledger(ledger),
        "pass": all(c["pass"] for c in checks),
        "versions": {"hexpfinsler": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        **extra,
    }


def dump_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def _emit(report: dict, out: str | None) -> None:
    text = dump_report(report)
    if out:
        Path(out).write_text(text)
        for c in report["checks"]:
            mark = "PASS" if c["pass"] else "FAIL"
            print(f"{mark}  {c['check']:<34} max_abs={c['max_abs']:.3e} max_rel={c['max_rel']:.3e} "
                  f"({c['expect']}, tol={c['tol']:.0e})")
        print(f"overall: {'PASS' if report['pass'] else 'FAIL'} -> {out}")
    else:
        sys.stdout.write(text)


def run_verify(cfg: RunConfig, suite: str = "all") -> dict:
    metric, hv = cfg.build()
    names = SUITES if suite == "all" else (suite,)
    checks, ledger = [], []
    for name in names:
        c, l = SUITE_RUNNERS[name](cfg, metric, hv)
        checks += [{**rec, "suite": name} for rec in c]
        ledger += l
    return _envelope("verify", checks, ledger, suite=suite, config=cfg.echo())


def dedupe_ledger(entries: list[dict]) -> list[dict]:
    """One entry per (formula, issue), keeping the strongest witness."""
    best: dict[tuple, dict] = {}
    for e in entries:
        key = (e.get("formula"), e.get("issue"))
        strength = e.get("witness", {}).get("literal_residual", 0.0)
        if key not in best or strength > best[key].get("witness", {}).get("literal_residual", 0.0):
            best[key] = e
    return [best[k] for k in sorted(best, key=lambda k: (str(k[0]), str(k[1])))]


def _validate_report(data, name: str) -> None:
    if not isinstance(data, dict) or not isinstance(data.get("checks"), list):
        raise ConfigError(f"malformed report {name}: no check list")
    for rec in data["checks"]:
        if not isinstance(rec, dict) or any(k not in rec for k in REQUIRED_FIELDS):
            raise ConfigError(f"malformed report {name}: check record lacks required fields")
    if not isinstance(data.get("ledger", []), list):
        raise ConfigError(f"malformed report {name}: ledger is not a list")


def merge_reports(paths: list[str | Path]) -> dict:
    checks, ledger, sources = [], [], []
    for p in paths:
        p = Path(p)
        try:
            data = json.loads(p.read_text())
        except (OSError, json.JSONDecodeError, UnicodeDecodeError) as err:
            raise ConfigError(f"malformed report {p.name}: {err}") from err
        _validate_report(data, p.name)
        name = data.get("config", {}).get("name", p.stem)
        sources.append({"file": p.name, "config": name, "pass": bool(data.get("pass", False))})
        checks += [{**c, "source": name} for c in data["checks"]]
        ledger += data.get("ledger", [])
    report = _envelope("report", checks, ledger, sources=sources)
    report["pass"] = report["pass"] and all(s["pass"] for s in sources)
    return report


def _tol_overrides(args) -> dict:
    return {k: getattr(args, f"tol_{k}", None) for k in ("tensors", "connection", "projective", "geodesic")}


def cmd_verify(args) -> int:
    cfg = load_config(args.config, args.samples, args.seed, _tol_overrides(args))
    report = run_verify(cfg, args.suite)
    _emit(report, args.out)
    return EXIT_PASS if report["pass"] else EXIT_FAIL


def cmd_geodesic(args) -> int:
    cfg = load_config(args.config, args.samples, args.seed, _tol_overrides(args))
    metric, hv = cfg.build()
    changed = mt.hexp_apply(metric, hv)
    base_tr, changed_tr = _geodesic_pair(cfg, metric, changed, args.t_end, args.step)
    prefix = args.trace_prefix or (str(Path(args.out).with_suffix("")) if args.out else cfg.name)
    traces = {}
    for tag, tr in (("base", base_tr), ("changed", changed_tr)):
        path = pj.export_trace(tr, f"{prefix}.{tag}.txt")
        traces[tag] = {"file": path.name, "rows": len(tr), "reason": tr.reason, "step": tr.step,
                       "method": tr.method, "energy_drift": tr.energy_drift, "arc_length": tr.arc_length}
    try:
        checks = [_pair_record(cfg, base_tr, changed_tr)]
    except pj.InsufficientTraceError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_FAIL if cfg.geodesic.get("compare", True) else EXIT_PASS
    report = _envelope("geodesic", checks, [], config=cfg.echo(), traces=traces)
    _emit(report, args.out)
    return EXIT_PASS if report["pass"] else EXIT_FAIL


def cmd_report(args) -> int:
    report = merge_reports(args.reports)
    _emit(report, args.out)
    return EXIT_PASS if report["pass"] else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hexpfinsler", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="TOML config path or shipped config name")
        p.add_argument("--samples", type=int, default=None, help="number of samples (default 128)")
        p.add_argument("--seed", type=int, default=None, help="sampling seed (default: chart.seed or 42)")
        p.add_argument("--out", default=None, help="write the JSON report here instead of stdout")
        for name in ("tensors", "connection", "projective", "geodesic"):
            p.add_argument(f"--tol-{name}", type=float, default=None, metavar="VALUE",
                           help=f"tolerance override (default {TOLERANCES[name]:g})")

    v = sub.add_parser("verify", help="run a verification suite")
    common(v)
    v.add_argument("--suite", choices=SUITES + ("all",), default="all")
    v.set_defaults(func=cmd_verify)

    g = sub.add_parser("geodesic", help="integrate base and changed geodesics and compare them")
    common(g)
    g.add_argument("--t-end", type=float, default=None)
    g.add_argument("--step", type=float, default=None)
    g.add_argument("--trace-prefix", default=None, help="trace files are PREFIX.base.txt and PREFIX.changed.txt")
    g.set_defaults(func=cmd_geodesic)

    r = sub.add_parser("report", help="merge report files")
    r.add_argument("reports", nargs="+")
    r.add_argument("--out", default=None)
    r.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except REGULARITY_ERRORS as err:
        print(f"regularity error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (KeyError, TypeError, ValueError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
