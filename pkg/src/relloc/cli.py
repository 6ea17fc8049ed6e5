"""Command-line experiment runner emitting tabulated results as CSV or JSON.

Each subcommand resolves its parameters (defaults, then ``--config``,
then flags), runs deterministically for the given seed and writes one
table.  Exit codes: 0 success, 2 configuration error, 3 cutoff overflow,
4 numerical-validation failure.
"""
from __future__ import annotations

import argparse
import io
import json
import sys
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import __version__, bec, focksim, phaseloc, posloc, visibility
from .errors import ConfigError, CutoffOverflowError, NumericalValidationError
from .numkernel import TWO_PI, Grid1D, log_power

EXIT_OK, EXIT_CONFIG, EXIT_CUTOFF, EXIT_VALIDATION = 0, 2, 3, 4


# --- parameter parsing ---------------------------------------------------------

def _number(kind, lo=None, hi=None, lo_open=False, hi_open=False):
    def parse(value):
        try:
            v = kind(value)
        except (TypeError, ValueError):
            raise ConfigError(f"expected {kind.__name__}, got {value!r}") from None
        if kind is float and not np.isfinite(v):
            raise ConfigError(f"expected a finite number, got {value!r}")
        if lo is not None and (v < lo or (lo_open and v == lo)):
            raise ConfigError(f"value {v} below the allowed range")
        if hi is not None and (v > hi or (hi_open and v == hi)):
            raise ConfigError(f"value {v} above the allowed range")
        return v
    return parse


def _optional(parse):
    def inner(value):
        if value is None or (isinstance(value, str) and value.lower() in ("", "none", "auto")):
            return None
        return parse(value)
    return inner


def _records(value):
    if isinstance(value, (list, tuple)):
        items = [tuple(v) for v in value]
    else:
        items = []
        for part in str(value).split(","):
            try:
                l, r = part.strip().split(":")
                items.append((int(l), int(r)))
            except ValueError:
                raise ConfigError(f"records must look like 'l:r,l:r', got {value!r}") from None
    if not items or any(len(t) != 2 or min(t) < 0 for t in items):
        raise ConfigError(f"invalid record list {value!r}")
    return [(int(l), int(r)) for l, r in items]


def _choice(*options):
    def parse(value):
        if value not in options:
            raise ConfigError(f"expected one of {options}, got {value!r}")
        return value
    return parse


PARSERS: dict[str, Callable] = {
    "seed": _number(int, 0, 2**64 - 1),
    "eps": _number(float, 0.0, 1.0, lo_open=True, hi_open=True),
    "eps_max": _number(float, 0.0, 1.0, lo_open=True, hi_open=True),
    "nbar": _number(float, 0.0, lo_open=True),
    "fock_n": _number(int, 1),
    "k": _number(float, 0.0, lo_open=True),
    "d": _number(float, 0.0, lo_open=True),
    "events": _optional(_number(int, 0)),
    "cutoff": _optional(_number(int, 1)),
    "grid": _number(int, 16, 1_000_000),
    "records": _records,
    "M": _number(int, 1, 200),
    "eps_angle": _number(float, 0.0, 0.5),
    "tau": _number(float),
    "periods": _number(int, 1, 1000),
    "prior": _choice("uniform", "thermal"),
    "half_width": _number(float, 0.0, lo_open=True),
    "points": _number(int, 2, 100_000),
}


@dataclass
class Table:
    columns: list
    rows: list
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Experiment:
    run: Callable[[dict], Table]
    defaults: dict
    help: str


def _phase_grid(n: int) -> Grid1D:
    return Grid1D.phase(n)


def _closed_phase_column(values):
    # append the 2pi endpoint so the trapezoid rule over emitted rows is the periodic rule
    return np.append(values, values[0])


# --- experiments ------------------------------------------------------------------

def run_fock_phase(p: dict) -> Table:
    g = _phase_grid(p["grid"])
    N = p["fock_n"]
    cols, data = ["delta"], [np.append(g.points, TWO_PI)]
    worst = 0.0
    for l, r in p["records"]:
        if l + r > N:
            raise ConfigError(f"record ({l}, {r}) has more counts than fock_n = {N}")
        rec = phaseloc.DetectionRecord(l, r, p["tau"])
        dens = phaseloc.clr_density(rec, g)
        # cross-check against the conditional state of |N>|N>
        state = focksim.TwoModeFockState.fock(N, N)
        for det, count in ((focksim.LEFT, l), (focksim.RIGHT, r)):
            for _ in range(count):
                state = focksim.apply_detection(state, focksim.JumpEvent(det, p["tau"])).normalized()
        proj = state.phase_profile(g)
        worst = max(worst, float(np.max(np.abs(proj.weights - dens.weights)) / dens.weights.max()))
        cols.append(f"l{l}_r{r}")
        data.append(_closed_phase_column(dens.weights))
    if worst > 1e-6:
        raise NumericalValidationError(f"trajectory projection differs from the analytic density by {worst:.3g}")
    return Table(cols, list(zip(*data)), {"max_projection_gap": worst})


def run_poissonian_phase(p: dict) -> Table:
    eps, nbar = p["eps"], p["nbar"]
    K = p["cutoff"] or phaseloc.total_count_cutoff("poissonian", eps, nbar)
    rows = []
    for n in range(1, K + 1):
        for l in range(n + 1):
            r = n - l
            rows.append((phaseloc.peak_phase(l, r), l, r, phaseloc.plr_fock_approx(l, r, nbar, eps)))
    rows.sort(key=lambda t: (t[0], t[1], t[2]))
    return Table(["delta0", "l", "r", "probability"], rows, {"max_total": K})


def run_thermal_phase(p: dict) -> Table:
    g = _phase_grid(p["grid"])
    ens = focksim.MixedEnsemble.thermal(p["nbar"], p["cutoff"])
    if p["events"] is None:
        events, _ = focksim.sample_record(ens, eps=p["eps"], tau_policy="random", seed=p["seed"], dense=False)
    else:
        events, _ = focksim.sample_record(ens, n_events=p["events"], tau_policy="random", seed=p["seed"],
                                          dense=False)
    dens = focksim.posterior_phase_density("thermal", events, g, nbar=p["nbar"], eps=p["eps"],
                                           cutoff=p["cutoff"])
    meta = {"events": [[e.detector, e.tau] for e in events]}
    return Table(["delta", "density"], list(zip(np.append(g.points, TWO_PI), _closed_phase_column(dens.weights))),
                 meta)


def run_visibility_curves(p: dict) -> Table:
    eps = np.linspace(p["eps_max"] / p["points"], p["eps_max"], p["points"])
    rows = [(e, visibility.expected_visibility("poissonian", e, p["nbar"]),
             visibility.expected_visibility("thermal", e, p["nbar"])) for e in eps]
    return Table(["eps", "poissonian", "thermal"], rows)


def run_bec_likely(p: dict) -> Table:
    g = _phase_grid(p["grid"])
    le = bec.likely_events(p["M"], g)
    rows = []
    for rec, prob in le.records:
        dens = bec.two_setting_density(rec, g)
        rows.append((dens.argmax(), rec.l1, rec.r1, rec.l2, rec.r2, prob, bec.gaussian_width(dens)))
    rows.sort(key=lambda t: (t[0], t[1], t[3]))
    return Table(["delta_peak", "l1", "r1", "l2", "r2", "probability", "width"], rows,
                 {"mass": le.mass, "threshold": le.threshold})


def run_bec_fringes(p: dict) -> Table:
    n = 1000 if p["events"] is None else p["events"]
    run = bec.simulate_fringes(p["nbar"], n, p["k"], seed=p["seed"], periods=p["periods"],
                               grid=_phase_grid(p["grid"]))
    x = run.positions
    fit = bec.fit_fringes(x, p["k"], p["periods"])
    rows = [(e.x, e.port, e.reduced_tau, w) for e, w in zip(run.events, run.widths)]
    meta = {"fit_visibility": fit.visibility, "fit_delta0": fit.delta0,
            "posterior_peak": run.density.argmax()}
    return Table(["x", "port", "reduced_tau", "posterior_std"], rows, meta)


def _position_grid(p: dict) -> Grid1D:
    return posloc.relative_grid(p["half_width"] * TWO_PI / p["k"], p["grid"])


def run_rubber_cavity(p: dict) -> Table:
    g = _position_grid(p)
    prior = posloc.uniform_prior(g)
    cols, data = ["dr"], [g.points]
    for l, r in p["records"]:
        cols.append(f"l{l}_r{r}")
        data.append(posloc.rubber_cavity_localize(prior, (l, r), p["k"]).density)
    return Table(cols, list(zip(*data)), {"period": np.pi * np.sqrt(2.0) / p["k"]})


def _scatter_prior(p: dict, g: Grid1D):
    if p["prior"] == "uniform":
        return posloc.uniform_prior(g)
    return posloc.thermal_prior((0.0, g.hi), p["d"], g)


def _scatter_table(p: dict, kernels) -> Table:
    g = _position_grid(p)
    prior = _scatter_prior(p, g)
    n = 5 if p["events"] is None else p["events"]
    forward, deflect = kernels(g.points)
    cols, data = ["dr"], [g.points]
    for F in range(n + 1):
        D = n - F
        logk = log_power(np.clip(forward, 0, None), F) + log_power(np.clip(deflect, 0, None), D)
        cols.append(f"F{F}_D{D}")
        data.append(prior.times_log(logk).density)
    return Table(cols, list(zip(*data)))


def run_scattering(p: dict) -> Table:
    return _scatter_table(p, lambda x: posloc.scatter_kernels(x, p["k"], p["eps_angle"]))


def run_thermal_scattering(p: dict) -> Table:
    return _scatter_table(p, lambda x: posloc.thermal_scatter_kernels(x, p["k"], p["eps_angle"], p["nbar"]))


_POS = {"k": 5.0, "d": posloc.DEFAULT_D, "grid": 4001, "half_width": 10.0}

EXPERIMENTS: dict[str, Experiment] = {
    "fock-phase": Experiment(run_fock_phase, {"records": "1:0,5:0,15:0", "tau": 0.0, "fock_n": 20, "grid": 1024},
                             "relative-phase densities of Fock-state records"),
    "poissonian-phase": Experiment(run_poissonian_phase, {"eps": 0.2, "nbar": 20.0, "cutoff": None},
                                   "peak phase and probability of every record"),
    "thermal-phase": Experiment(run_thermal_phase, {"eps": 0.1, "nbar": 5.0, "cutoff": None, "events": None,
                                                    "grid": 1024}, "sampled thermal record and its phase density"),
    "visibility-curves": Experiment(run_visibility_curves, {"nbar": 5.0, "eps_max": 0.5, "points": 50},
                                    "expected visibility against leakage"),
    "bec-likely-events": Experiment(run_bec_likely, {"M": 8, "grid": 1024},
                                    "two-setting records above the 1/(M+1)^2 threshold"),
    "bec-fringes": Experiment(run_bec_fringes, {"nbar": 2000.0, "events": None, "k": 1.0, "periods": 2,
                                                "grid": 1024}, "single-atom detections and fringe fit"),
    "rubber-cavity": Experiment(run_rubber_cavity, {"records": "0:1,0:5,0:15", "k": 5.0, "grid": 4001,
                                                    "half_width": 2.0}, "relative-position combs"),
    "scattering": Experiment(run_scattering, {**_POS, "events": None, "eps_angle": 0.01, "prior": "uniform"},
                             "relative position after single-photon scattering"),
    "thermal-scattering": Experiment(run_thermal_scattering, {**_POS, "events": None, "eps_angle": 0.01,
                                                              "prior": "uniform", "nbar": 5.0},
                                     "relative position after thermal-light scattering"),
}


# --- configuration and output ---------------------------------------------------------

def read_config_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON config: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a flat object")
        return data
    data = {}
    for i, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {i} is not key=value")
        key, value = line.split("=", 1)
        data[key.strip()] = value.strip()
    return data


def resolve_config(experiment: str, file_values: dict, flag_values: dict) -> dict:
    exp = EXPERIMENTS[experiment]
    allowed = set(exp.defaults) | {"seed"}
    merged = {"seed": 0, **exp.defaults}
    for source in (file_values, flag_values):
        for key, value in source.items():
            key = key.replace("-", "_")
            if key == "experiment":
                if value != experiment:
                    raise ConfigError(f"config is for {value!r}, not {experiment!r}")
                continue
            if key not in allowed:
                raise ConfigError(f"unknown key {key!r} for {experiment}")
            merged[key] = value
    return {key: PARSERS[key](value) for key, value in sorted(merged.items())}


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    return v


def render(experiment: str, config: dict, table: Table, fmt: str) -> str:
    if fmt == "json":
        doc = {
            "experiment": experiment,
            "version": __version__,
            "config": _jsonable(config),
            "columns": table.columns,
            "data": {c: _jsonable([row[i] for row in table.rows]) for i, c in enumerate(table.columns)},
            "meta": _jsonable(table.meta),
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"
    buf = io.StringIO()
    buf.write(f"# relloc {__version__}\n")
    buf.write(f"# experiment: {experiment}\n")
    buf.write(f"# config: {json.dumps(_jsonable(config), sort_keys=True)}\n")
    for key in sorted(table.meta):
        buf.write(f"# {key}: {json.dumps(_jsonable(table.meta[key]))}\n")
    buf.write(",".join(table.columns) + "\n")
    for row in table.rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def run(experiment: str, config: dict, fmt: str = "csv") -> str:
    """Run one experiment on a resolved config and return the rendered output."""
    return render(experiment, config, EXPERIMENTS[experiment].run(config), fmt)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


FLAG_NAMES = {"M": "--M", "eps_angle": "--eps-angle", "fock_n": "--fock-n", "half_width": "--half-width",
              "eps_max": "--eps-max"}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="relloc", description="Relative-localization experiments.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="experiment", required=True, parser_class=_Parser)
    for name, exp in EXPERIMENTS.items():
        sp = sub.add_parser(name, help=exp.help, description=exp.help)
        sp.add_argument("--config", help="flat JSON object or key=value file")
        sp.add_argument("--seed", help="unsigned 64-bit seed")
        sp.add_argument("--out", help="output path (default: stdout)")
        sp.add_argument("--format", choices=["csv", "json"], default="csv")
        for key in sorted(exp.defaults):
            flag = FLAG_NAMES.get(key, "--" + key.replace("_", "-"))
            sp.add_argument(flag, dest=f"param_{key}", help=f"default: {exp.defaults[key]}")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        file_values = read_config_file(args.config) if args.config else {}
        flags = {k[len("param_"):]: v for k, v in vars(args).items() if k.startswith("param_") and v is not None}
        if args.seed is not None:
            flags["seed"] = args.seed
        config = resolve_config(args.experiment, file_values, flags)
        text = run(args.experiment, config, args.format)
        if args.out:
            with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        return EXIT_OK
    except CutoffOverflowError as exc:
        return _fail(EXIT_CUTOFF, "cutoff_overflow", exc)
    except NumericalValidationError as exc:
        return _fail(EXIT_VALIDATION, "validation_failure", exc)
    except (ConfigError, ValueError) as exc:
        return _fail(EXIT_CONFIG, "config_error", exc)


def _fail(code: int, kind: str, exc: Exception) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": str(exc), "exit_code": code}) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
