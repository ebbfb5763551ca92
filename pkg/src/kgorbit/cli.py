"""Command-line front door: build spectra, run simulations and experiment
sweeps from a config file, emit CSV time series and JSON summary reports.

Config grammar (UTF-8, line oriented): ``[section]`` headers, ``key = value``
pairs, ``#`` comment lines, blank lines ignored.  Numbers in decimal or
scientific notation; lists comma-separated.  Unknown sections or keys are
rejected with the offending line number.  Sections and keys:

    [model]       m, p, dim, cutoff, periods
    [stepper]     dt, scheme (split2|rk4), max_time, sample_stride
    [experiment]  kind (simulate|period-sweep|first-return|stability|
                  floquet|energy-check), eta, eta_list, amplitude, modes,
                  distribution, seed, seeds, loop_budget, loop_rate, delta,
                  lambdas, rebaseline, dist_coefficient, drift_tol
    [output]      directory, formats (csv,json)

Exit codes: 0 success, 2 when a run completes but raises ANOMALY flags,
1 on errors (a JSON error record is printed).  Every stochastic
perturbation requires an explicit seed; all outputs are reproducible
from (config, seed).  CSV files carry a header row, '.' decimal
separator, LF line endings and 17 significant digits.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .errors import KgError, AssumptionViolated, ParseError, ValidationError
from .experiments import (EXPONENT_PASS_RANGE, PerturbationSpec, linear_fit,
                          perturb_near_orbit, power_law_fit, run_first_return,
                          run_many_loops)
from .hamiltonian import energy_breakdown
from .integrators import StepperConfig, evolve
from .spectra import ModelParams, build_spectrum
from .stationary import delta_band, default_band, floquet, period, sample_orbit

SCHEMA_VERSION = 1

_KINDS = ("simulate", "period-sweep", "first-return", "stability", "floquet",
          "energy-check")
_DISTRIBUTIONS = ("equipartition", "single_mode", "random_direction")

# key -> (type tag, allowed values or None)
_SCHEMA = {
    "model": {
        "m": "float", "p": "int", "dim": "int", "cutoff": "int",
        "periods": "float_list",
    },
    "stepper": {
        "dt": "float", "scheme": ("split2", "rk4"), "max_time": "float",
        "sample_stride": "int",
    },
    "experiment": {
        "kind": _KINDS, "eta": "float", "eta_list": "float_list",
        "amplitude": "float", "modes": "int_list",
        "distribution": _DISTRIBUTIONS, "seed": "int", "seeds": "int_list",
        "loop_budget": "int", "loop_rate": "float", "delta": "float",
        "lambdas": "float_list", "rebaseline": "bool",
        "dist_coefficient": "float", "drift_tol": "float",
    },
    "output": {
        "directory": "str", "formats": "str_list",
    },
}


@dataclass
class ExperimentConfig:
    kind: str
    eta: float | None = None
    eta_list: tuple[float, ...] | None = None
    amplitude: float | None = None
    modes: tuple[int, ...] | None = None
    distribution: str = "equipartition"
    seed: int | None = None
    seeds: tuple[int, ...] | None = None
    loop_budget: int | None = None
    loop_rate: float = 1.0
    delta: float | None = None
    lambdas: tuple[float, ...] | None = None
    rebaseline: bool = True
    dist_coefficient: float | None = None
    drift_tol: float = 1e-10


@dataclass
class RunConfig:
    model: ModelParams
    stepper: StepperConfig
    experiment: ExperimentConfig
    output_dir: str = "."
    formats: tuple[str, ...] = ("csv", "json")


def _parse_scalar(raw: str, tag, line_no: int, key: str):
    if isinstance(tag, tuple):
        if raw not in tag:
            raise ParseError(line_no, key, f"expected one of {tag}, got {raw!r}")
        return raw
    try:
        if tag == "float":
            return float(raw)
        if tag == "int":
            val = float(raw)
            if val != int(val):
                raise ValueError
            return int(val)
        if tag == "bool":
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError
        if tag == "str":
            return raw
        if tag.endswith("_list"):
            inner = tag[:-5]
            items = [p.strip() for p in raw.split(",") if p.strip()]
            if not items:
                raise ValueError
            return tuple(_parse_scalar(it, inner, line_no, key) for it in items)
    except ParseError:
        raise
    except ValueError:
        pass
    raise ParseError(line_no, key, f"cannot parse {raw!r} as {tag}")


def parse_config(text: str) -> RunConfig:
    """Parse and validate config text; raises ParseError (with line and
    key) on grammar problems and ValidationError on constraint violations."""
    values: dict[str, dict] = {name: {} for name in _SCHEMA}
    section = None
    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name not in _SCHEMA:
                raise ParseError(line_no, name, "unknown section")
            section = name
            continue
        if "=" not in line:
            raise ParseError(line_no, line, "expected 'key = value'")
        key, _, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if section is None:
            raise ParseError(line_no, key, "key appears before any [section]")
        if key not in _SCHEMA[section]:
            raise ParseError(line_no, key, f"unknown key in [{section}]")
        if key in values[section]:
            raise ParseError(line_no, key, "duplicate key")
        values[section][key] = _parse_scalar(raw, _SCHEMA[section][key], line_no, key)
    return _validate(values)


def _validate(values: dict) -> RunConfig:
    model = values["model"]
    for req in ("m", "p", "dim", "cutoff"):
        if req not in model:
            raise ValidationError(f"[model] is missing required key '{req}'")
    dim = model["dim"]
    periods = model.get("periods", tuple(1.0 for _ in range(max(dim, 1))))
    try:
        params = ModelParams(m=model["m"], p=model["p"], dim=dim,
                             cutoff=model["cutoff"], periods=periods)
    except AssumptionViolated as exc:
        raise ValidationError(str(exc)) from exc
    lambda_1 = 2.0 * math.pi / max(params.periods)
    if params.m >= lambda_1:
        raise ValidationError(
            f"mass parameter must satisfy 0 < m < lambda_1 = {lambda_1:.6g} "
            f"(smallest nonzero Laplacian frequency of this torus), got m = {params.m!r}")

    st = values["stepper"]
    stepper = StepperConfig(
        dt=st.get("dt", 1e-3), scheme=st.get("scheme", "split2"),
        max_time=st.get("max_time", 10.0),
        sample_stride=st.get("sample_stride", 10),
    )

    ex = values["experiment"]
    if "kind" not in ex:
        raise ValidationError("[experiment] is missing required key 'kind'")
    experiment = ExperimentConfig(**ex)

    kind = experiment.kind
    if kind in ("simulate", "stability", "energy-check") and experiment.eta is None:
        raise ValidationError(f"experiment '{kind}' requires 'eta'")
    if kind in ("period-sweep", "floquet") and not experiment.eta_list:
        raise ValidationError(f"experiment '{kind}' requires 'eta_list'")
    if kind == "first-return" and not (experiment.eta_list or experiment.eta):
        raise ValidationError("experiment 'first-return' requires 'eta' or 'eta_list'")
    if kind == "floquet" and not experiment.lambdas:
        raise ValidationError("experiment 'floquet' requires 'lambdas'")
    if experiment.distribution == "random_direction" \
            and experiment.seed is None and not experiment.seeds:
        raise ValidationError(
            "random_direction perturbations require an explicit seed "
            "(reproducibility is a contract, there is no default)")
    for e in (experiment.eta_list or ()) + ((experiment.eta,) if experiment.eta else ()):
        if not (0.0 < e < params.center):
            raise ValidationError(
                f"eta = {e} must lie in (0, m^(1/p)) = (0, {params.center:.6g})")

    out = values["output"]
    formats = tuple(out.get("formats", ("csv", "json")))
    for fmt in formats:
        if fmt not in ("csv", "json"):
            raise ValidationError(f"unknown output format {fmt!r}")
    return RunConfig(model=params, stepper=stepper, experiment=experiment,
                     output_dir=out.get("directory", "."), formats=formats)


def serialize_config(cfg: RunConfig) -> str:
    """Normalized config text; parse(serialize(parse(text))) is idempotent."""
    lines = ["[model]"]
    lines.append(f"m = {cfg.model.m!r}")
    lines.append(f"p = {cfg.model.p}")
    lines.append(f"dim = {cfg.model.dim}")
    lines.append(f"cutoff = {cfg.model.cutoff}")
    lines.append("periods = " + ",".join(repr(L) for L in cfg.model.periods))
    lines.append("")
    lines.append("[stepper]")
    lines.append(f"dt = {cfg.stepper.dt!r}")
    lines.append(f"scheme = {cfg.stepper.scheme}")
    lines.append(f"max_time = {cfg.stepper.max_time!r}")
    lines.append(f"sample_stride = {cfg.stepper.sample_stride}")
    lines.append("")
    lines.append("[experiment]")
    ex = cfg.experiment
    lines.append(f"kind = {ex.kind}")
    if ex.eta is not None:
        lines.append(f"eta = {ex.eta!r}")
    if ex.eta_list:
        lines.append("eta_list = " + ",".join(repr(e) for e in ex.eta_list))
    if ex.amplitude is not None:
        lines.append(f"amplitude = {ex.amplitude!r}")
    if ex.modes:
        lines.append("modes = " + ",".join(str(k) for k in ex.modes))
    lines.append(f"distribution = {ex.distribution}")
    if ex.seed is not None:
        lines.append(f"seed = {ex.seed}")
    if ex.seeds:
        lines.append("seeds = " + ",".join(str(s) for s in ex.seeds))
    if ex.loop_budget is not None:
        lines.append(f"loop_budget = {ex.loop_budget}")
    lines.append(f"loop_rate = {ex.loop_rate!r}")
    if ex.delta is not None:
        lines.append(f"delta = {ex.delta!r}")
    if ex.lambdas:
        lines.append("lambdas = " + ",".join(repr(v) for v in ex.lambdas))
    lines.append(f"rebaseline = {'true' if ex.rebaseline else 'false'}")
    if ex.dist_coefficient is not None:
        lines.append(f"dist_coefficient = {ex.dist_coefficient!r}")
    lines.append(f"drift_tol = {ex.drift_tol!r}")
    lines.append("")
    lines.append("[output]")
    lines.append(f"directory = {cfg.output_dir}")
    lines.append("formats = " + ",".join(cfg.formats))
    return "\n".join(lines) + "\n"


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if isinstance(v, (int, float, np.floating))
                              else str(v) for v in row) + "\n")


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _write_json(path: str, payload: dict) -> None:
    payload = {"schema_version": SCHEMA_VERSION, **_jsonable(payload)}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _band(cfg: RunConfig):
    if cfg.experiment.delta is not None:
        return delta_band(cfg.experiment.delta, cfg.model)
    return default_band(cfg.model)


def _perturbation(cfg: RunConfig, eta: float, seed=None) -> PerturbationSpec:
    ex = cfg.experiment
    amplitude = ex.amplitude if ex.amplitude is not None else eta ** 3
    modes = ex.modes if ex.modes else tuple(
        k for k in range(1, 9) if k < 2 * cfg.model.cutoff + 1)
    return PerturbationSpec(
        amplitude=amplitude, mode_set=modes, distribution=ex.distribution,
        seed=seed if seed is not None else ex.seed)


def _initial_state(cfg: RunConfig, table, eta: float, seed=None,
                   default_planar: bool = False):
    ex = cfg.experiment
    if default_planar and ex.amplitude is None and ex.modes is None:
        spec = PerturbationSpec(amplitude=0.0, mode_set=())
    else:
        spec = _perturbation(cfg, eta, seed)
    return perturb_near_orbit(eta, None, spec, table, cfg.model)


def _run_simulate(cfg: RunConfig, table, out: dict, workers: int):
    eta = cfg.experiment.eta
    s0 = _initial_state(cfg, table, eta, default_planar=True)
    traj = evolve(s0, cfg.stepper, table, cfg.model)
    h = traj.series("H")
    drift = linear_fit(traj.times, h - h[0])["slope"] if len(h) > 1 else 0.0
    out["csv"] = (["t", "a0", "b0", "H", "J", "I", "r"],
                  [(t, st.a[0], st.b[0], bd.H, bd.J, bd.I, bd.r)
                   for t, st, bd in zip(traj.times, traj.states, traj.energy_series)])
    out["json"] = {
        "experiment": "simulate", "eta": eta, "H_drift": drift,
        "max_J": float(traj.series("J").max()), "final_time": float(traj.times[-1]),
        "anomaly": False,
    }
    return 0


def _run_period_sweep(cfg: RunConfig, table, out: dict, workers: int):
    etas = list(cfg.experiment.eta_list)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        periods = list(pool.map(lambda e: period(e, cfg.model), etas))
    fit = linear_fit(np.log(1.0 / np.array(etas)), periods)
    out["csv"] = (["eta", "period"], list(zip(etas, periods)))
    out["json"] = {
        "experiment": "period-sweep", "etas": etas, "periods": periods,
        "A": fit["slope"], "B": fit["intercept"], "r_squared": fit["r_squared"],
        "anomaly": False,
    }
    return 0


def _run_first_return(cfg: RunConfig, table, out: dict, workers: int):
    ex = cfg.experiment
    etas = list(ex.eta_list) if ex.eta_list else [ex.eta]
    seeds = list(ex.seeds) if ex.seeds else [ex.seed]
    band = _band(cfg)
    combos = [(eta, seed) for eta in etas for seed in seeds]

    def one(combo):
        eta, seed = combo
        s0 = _initial_state(cfg, table, eta, seed)
        j0 = energy_breakdown(s0, table, cfg.model).J
        res = run_first_return(s0, eta, band, cfg.stepper, table, cfg.model)
        ratio = res.J_at_return / j0 if j0 > 0 else None
        return {"eta": eta, "seed": seed, "return_time": res.return_time,
                "distance": res.distance, "J0": j0,
                "J_at_return": res.J_at_return, "growth": ratio}

    with ThreadPoolExecutor(max_workers=workers) as pool:
        runs = list(pool.map(one, combos))

    anomaly = False
    fit = None
    default_amplitude = ex.amplitude is None
    if default_amplitude and len(set(etas)) >= 3 and all(r["distance"] > 0 for r in runs):
        fit = power_law_fit([r["eta"] for r in runs], [r["distance"] for r in runs])
        lo, hi = EXPONENT_PASS_RANGE
        fit["verdict"] = "PASS" if lo <= fit["exponent"] <= hi else "ANOMALY"
        anomaly = fit["verdict"] == "ANOMALY"
    growth_vals = [r["growth"] for r in runs if r["growth"] is not None]
    out["csv"] = (["eta", "seed", "return_time", "distance", "J0", "J_at_return"],
                  [(r["eta"], r["seed"] if r["seed"] is not None else -1,
                    r["return_time"], r["distance"], r["J0"], r["J_at_return"])
                   for r in runs])
    out["json"] = {
        "experiment": "first-return", "runs": runs,
        "distance_exponent_fit": fit,
        "empirical_growth_bound": max(growth_vals) if growth_vals else None,
        "anomaly": anomaly,
    }
    return 2 if anomaly else 0


def _run_stability(cfg: RunConfig, table, out: dict, workers: int):
    ex = cfg.experiment
    eta = ex.eta
    budget = ex.loop_budget if ex.loop_budget is not None else \
        max(1, math.ceil(ex.loop_rate * math.log(1.0 / eta)))
    s0 = _initial_state(cfg, table, eta)
    report = run_many_loops(s0, eta, _band(cfg), budget, cfg.stepper, table,
                            cfg.model, rebaseline=ex.rebaseline,
                            dist_coefficient=ex.dist_coefficient)
    anomaly = (not report.j_within_regime) or report.dist_within_bound is False \
        or report.completed_loops < report.requested_loops
    times, j_vals = report.J_series
    out["csv"] = (["t", "J"], list(zip(times, j_vals)))
    out["json"] = {
        "experiment": "stability", "eta": eta,
        "loop_records": [asdict(r) for r in report.loop_records],
        "H0": report.H0, "per_loop_growth": report.per_loop_growth,
        "fits": report.fits, "j_within_regime": report.j_within_regime,
        "regime_exited_at": report.regime_exited_at,
        "max_dist_to_orbit": report.max_dist_to_orbit,
        "dist_coefficient": report.dist_coefficient,
        "dist_within_bound": report.dist_within_bound,
        "equivalence_bound": report.equivalence_bound,
        "completed_loops": report.completed_loops,
        "requested_loops": report.requested_loops,
        "anomaly": anomaly,
    }
    return 2 if anomaly else 0


def _run_floquet(cfg: RunConfig, table, out: dict, workers: int):
    ex = cfg.experiment
    combos = [(eta, lam) for eta in ex.eta_list for lam in ex.lambdas]

    def one(combo):
        eta, lam = combo
        orbit = sample_orbit(eta, 64, cfg.model)
        mono = floquet(orbit, lam, cfg.model, dt=cfg.stepper.dt)
        return {"eta": eta, "lambda": lam, "det": mono.determinant,
                "trace": mono.trace, "classification": mono.classification,
                "multipliers": [[m.real, m.imag] for m in mono.multipliers]}

    with ThreadPoolExecutor(max_workers=workers) as pool:
        records = list(pool.map(one, combos))
    anomaly = any(abs(r["det"] - 1.0) > 1e-8 for r in records)
    out["csv"] = (["eta", "lambda", "det", "trace", "mult1_re", "mult1_im",
                   "mult2_re", "mult2_im"],
                  [(r["eta"], r["lambda"], r["det"], r["trace"],
                    r["multipliers"][0][0], r["multipliers"][0][1],
                    r["multipliers"][1][0], r["multipliers"][1][1])
                   for r in records])
    out["json"] = {"experiment": "floquet", "records": records, "anomaly": anomaly}
    return 2 if anomaly else 0


def _run_energy_check(cfg: RunConfig, table, out: dict, workers: int):
    ex = cfg.experiment
    s0 = _initial_state(cfg, table, ex.eta, default_planar=True)
    traj = evolve(s0, cfg.stepper, table, cfg.model)
    h = traj.series("H")
    dh = h - h[0]
    drift = linear_fit(traj.times, dh)["slope"]
    anomaly = abs(drift) > ex.drift_tol
    out["csv"] = (["t", "H_minus_H0"], list(zip(traj.times, dh)))
    out["json"] = {
        "experiment": "energy-check", "eta": ex.eta,
        "drift_slope": drift, "drift_tol": ex.drift_tol,
        "max_abs_deviation": float(np.abs(dh).max()), "anomaly": anomaly,
    }
    return 2 if anomaly else 0


_RUNNERS = {
    "simulate": _run_simulate,
    "period-sweep": _run_period_sweep,
    "first-return": _run_first_return,
    "stability": _run_stability,
    "floquet": _run_floquet,
    "energy-check": _run_energy_check,
}


def run(cfg: RunConfig, workers: int | None = None) -> int:
    """Execute the configured experiment and write its outputs.

    Returns 0 on success, 2 when anomaly flags were raised, 1 on errors
    (with a JSON error record on stdout).
    """
    if workers is None:
        workers = int(os.environ.get("KGORBIT_WORKERS", os.cpu_count() or 1))
    try:
        table = build_spectrum(cfg.model)
        out: dict = {}
        code = _RUNNERS[cfg.experiment.kind](cfg, table, out, workers)
        os.makedirs(cfg.output_dir, exist_ok=True)
        stem = os.path.join(cfg.output_dir, cfg.experiment.kind)
        if "csv" in cfg.formats and "csv" in out:
            header, rows = out["csv"]
            _write_csv(stem + ".csv", header, rows)
        if "json" in cfg.formats and "json" in out:
            _write_json(stem + ".json", out["json"])
        return code
    except KgError as exc:
        print(json.dumps({"schema_version": SCHEMA_VERSION,
                          "error": {"type": type(exc).__name__, "message": str(exc)}}))
        return 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="kgorbit",
        description="Spectral simulator and stability laboratory for the "
                    "nonlinear Klein-Gordon equation on flat tori.")
    parser.add_argument("--config", required=True, help="path to the run config")
    parser.add_argument("--output", help="output directory (overrides [output])")
    parser.add_argument("--workers", type=int,
                        default=None, help="worker count for sweeps "
                        "(default: KGORBIT_WORKERS or logical cores)")
    parser.add_argument("--seed", type=int, help="seed override")
    parser.add_argument("--format", dest="formats",
                        help="comma-separated subset of csv,json")
    args = parser.parse_args(argv)
    try:
        with open(args.config, encoding="utf-8") as fh:
            cfg = parse_config(fh.read())
        if args.output:
            cfg.output_dir = args.output
        if args.seed is not None:
            cfg.experiment.seed = args.seed
        if args.formats:
            formats = tuple(f.strip() for f in args.formats.split(","))
            for fmt in formats:
                if fmt not in ("csv", "json"):
                    raise ValidationError(f"unknown output format {fmt!r}")
            cfg.formats = formats
    except OSError as exc:
        print(json.dumps({"schema_version": SCHEMA_VERSION,
                          "error": {"type": "IOError", "message": str(exc)}}))
        return 1
    except KgError as exc:
        record = {"type": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, ParseError):
            record["line"] = exc.line
            record["key"] = exc.key
        print(json.dumps({"schema_version": SCHEMA_VERSION, "error": record}))
        return 1
    return run(cfg, workers=args.workers)


if __name__ == "__main__":
    sys.exit(main())
