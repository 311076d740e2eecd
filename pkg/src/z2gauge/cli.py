"""Config-driven experiment runner with reproducible, machine-readable output.

A run is described by one JSON config file; the resolved config (after
command-line overrides) is hashed and embedded in the output header, and the
payload below the header is byte-identical across repeat runs with the same
seed and across thread counts.

Exit codes: 0 ok, 2 config error, 3 size refusal, 4 at least one check failed.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path

from . import __version__
from .cells import build_complex
from .errors import SizeRefusal
from .forms import CouplingParams, Loop, loop_from_edges, rectangle_loop
from . import estimators, oracle, samplers

TASKS = (
    "verify-current-expansion",
    "verify-switching",
    "verify-coupling",
    "oracle-wilson",
    "estimate",
    "potential",
    "area-law",
    "griffiths",
    "domination",
    "covariance",
)

CHAIN_TASKS = ("estimate", "potential", "covariance")


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    """A fully validated experiment description (normalized dict inside)."""

    raw: dict

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        allowed = {"complex", "task", "gamma", "beta", "chain", "rng", "output", "options"}
        unknown = set(data) - allowed
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in ("complex", "task"):
            if key not in data:
                raise ConfigError(f"config is missing required key {key!r}")
        task = data["task"]
        if task not in TASKS:
            raise ConfigError(f"unknown task {task!r}; choose from {TASKS}")
        comp = data["complex"]
        if (
            not isinstance(comp, dict)
            or "m" not in comp
            or "extents" not in comp
            or not isinstance(comp["extents"], list)
        ):
            raise ConfigError("complex must be {'m': int, 'extents': [ints]}")
        norm = {
            "complex": {"m": comp["m"], "extents": list(comp["extents"])},
            "task": task,
            "gamma": data.get("gamma", {"kind": "edges", "edges": []}),
            "beta": data.get("beta", 0.3),
            "chain": {
                "sweeps": 0,
                "burn_in": 0,
                "thinning": 1,
                "chains": 1,
                **(data.get("chain") or {}),
            },
            "rng": {
                "seed": 0,
                "stream": 0,
                "algorithm": samplers.ALGORITHM_ID,
                **(data.get("rng") or {}),
            },
            "output": {"path": "out.csv", "format": "csv", **(data.get("output") or {})},
            "options": dict(data.get("options") or {}),
        }
        cfg = cls(norm)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return json.loads(json.dumps(self.raw))

    def validate(self) -> None:
        raw = self.raw
        try:
            cx = self.build_cx()
        except ValueError as exc:
            raise ConfigError(f"invalid complex: {exc}") from exc
        if raw["output"]["format"] not in ("csv", "jsonl"):
            raise ConfigError("output format must be csv or jsonl")
        chain = raw["chain"]
        for key in ("sweeps", "burn_in", "thinning", "chains"):
            if not isinstance(chain.get(key), int) or chain[key] < 0:
                raise ConfigError(f"chain.{key} must be a nonnegative integer")
        needs_chain = raw["task"] in CHAIN_TASKS or (
            raw["task"] in ("area-law", "griffiths", "domination")
            and raw["options"].get("mode") == "mc"
        )
        if needs_chain:
            if chain["sweeps"] < 1:
                raise ConfigError(f"task {raw['task']!r} needs chain.sweeps >= 1")
            if chain["thinning"] < 1 or chain["chains"] < 1:
                raise ConfigError("chain.thinning and chain.chains must be >= 1")
        if not isinstance(raw["rng"].get("seed"), int):
            raise ConfigError("rng.seed must be an integer")
        for spec in self.gamma_specs():
            parse_loop(cx, spec)
        self.beta_settings()

    # -- parsed accessors ------------------------------------------------------

    def build_cx(self):
        return build_complex(self.raw["complex"]["m"], self.raw["complex"]["extents"])

    def gamma_specs(self) -> list[dict]:
        g = self.raw["gamma"]
        return list(g) if isinstance(g, list) else [g]

    def beta_settings(self) -> list:
        """The beta grid: a list of scalars (float/Fraction) or per-plaquette lists."""
        return parse_beta(self.raw["beta"])

    def rng_spec(self) -> samplers.RngSpec:
        r = self.raw["rng"]
        return samplers.RngSpec(
            seed=r["seed"], stream=r.get("stream", 0), algorithm=r["algorithm"]
        )

    def chain_spec(self, params: CouplingParams) -> samplers.ChainSpec:
        c = self.raw["chain"]
        return samplers.ChainSpec(
            kind="gauge",
            params=params,
            sweeps=c["sweeps"],
            burn_in=c["burn_in"],
            thinning=c["thinning"],
            chains=c["chains"],
            rng=self.rng_spec(),
        )


def parse_loop(cx, spec) -> Loop:
    """Loop specs: rectangle {corner, axes, width, height} or explicit edge list."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError(f"loop spec must be an object with a 'kind': {spec!r}")
    kind = spec["kind"]
    try:
        if kind == "rectangle":
            return rectangle_loop(
                cx, spec["corner"], spec["axes"], spec["width"], spec["height"]
            )
        if kind == "edges":
            return loop_from_edges(cx, [tuple(e) for e in spec.get("edges", [])])
    except (KeyError, ValueError, IndexError) as exc:
        raise ConfigError(f"invalid loop spec {spec!r}: {exc}") from exc
    raise ConfigError(f"unknown loop kind {kind!r} (use 'rectangle' or 'edges')")


def parse_beta_value(value):
    if isinstance(value, bool):
        raise ConfigError(f"invalid beta {value!r}")
    if isinstance(value, (int, float)):
        if value <= 0:
            raise ConfigError(f"beta must be positive, got {value}")
        return value
    if isinstance(value, str):
        try:
            frac = Fraction(value)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"cannot parse rational beta {value!r}") from exc
        if frac <= 0:
            raise ConfigError(f"beta must be positive, got {value}")
        return frac
    raise ConfigError(f"invalid beta entry {value!r}")


def parse_beta(data) -> list:
    """Normalize the config beta field to a grid of settings."""
    if isinstance(data, dict):
        path = data.get("per_plaquette_file")
        if not path:
            raise ConfigError("beta object form needs 'per_plaquette_file'")
        try:
            values = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read per-plaquette beta file {path!r}: {exc}")
        if not isinstance(values, list) or not values:
            raise ConfigError("per-plaquette beta file must hold a JSON list")
        return [[parse_beta_value(v) for v in values]]
    if isinstance(data, list):
        return [parse_beta_value(v) for v in data]
    return [parse_beta_value(data)]


def make_params(setting) -> CouplingParams:
    if isinstance(setting, list):
        return CouplingParams(tuple(setting))
    return CouplingParams(setting)


def beta_label(setting) -> str:
    if isinstance(setting, list):
        return "per-plaquette"
    return str(setting)


# -- task runners -------------------------------------------------------------------


def _map_units(units, threads: int):
    """Run thunks, in order, optionally on a thread pool; results keep order."""
    if threads <= 1 or len(units) <= 1:
        return [u() for u in units]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(u) for u in units]
        return [f.result() for f in futures]


def _guard(thunk, task: str, list_result: bool = False):
    """Record a refusal as a failed row instead of aborting the whole run."""

    def wrapped():
        try:
            return thunk()
        except SizeRefusal as exc:
            row = {"check": task, "pass": False, "error": f"refused: {exc}", "refused": True}
            return [row] if list_result else row

    return wrapped


def _report_row(report: oracle.Report, extra: dict | None = None) -> dict:
    row = report.to_dict()
    if extra:
        row.update(extra)
    return row


def run_verify_current_expansion(cfg: ExperimentConfig, threads: int):
    cx = cfg.build_cx()
    loops = [parse_loop(cx, s) for s in cfg.gamma_specs()]
    units = []
    for gamma in loops:
        for setting in cfg.beta_settings():
            units.append(
                lambda g=gamma, s=setting: _report_row(
                    oracle.verify_current_expansion(cx, g, make_params(s)),
                    {"beta": beta_label(s)},
                )
            )
    rows = _map_units([_guard(u, "current-expansion") for u in units], threads)
    cols = ["check", "complex", "gamma", "beta", "params", "lhs", "rhs", "metric", "value", "tolerance", "pass", "error"]
    return cols, rows


def run_verify_switching(cfg: ExperimentConfig, threads: int):
    cx = cfg.build_cx()
    opts = cfg.raw["options"]
    gamma1 = parse_loop(cx, cfg.gamma_specs()[0])
    gamma2 = parse_loop(cx, opts.get("gamma2", {"kind": "edges", "edges": []}))
    K = opts.get("K", 4)
    functionals = opts.get("functionals", ["one", "mass"])
    units = []
    for fspec in functionals:
        if isinstance(fspec, dict):
            name, p0 = "occupied", fspec.get("occupied")
            fn = oracle.switching_functional(name, p0)
            flabel = f"occupied:{p0}"
        else:
            fn = oracle.switching_functional(fspec)
            flabel = str(fspec)
        for setting in cfg.beta_settings():
            units.append(
                lambda f=fn, fl=flabel, s=setting: _report_row(
                    oracle.verify_switching(cx, gamma1, gamma2, f, K, make_params(s)),
                    {"functional": fl, "beta": beta_label(s)},
                )
            )
    rows = _map_units([_guard(u, "switching") for u in units], threads)
    cols = ["check", "complex", "gamma", "beta", "params", "functional", "K", "lhs", "rhs", "metric", "pass", "error"]
    return cols, rows


def run_verify_coupling(cfg: ExperimentConfig, threads: int):
    cx = cfg.build_cx()
    steps = cfg.raw["options"].get("steps", list(oracle.COUPLING_STEPS))
    loops = [parse_loop(cx, s) for s in cfg.gamma_specs()]
    units = []
    for gamma in loops:
        for step in steps:
            if step not in oracle.COUPLING_STEPS:
                raise ConfigError(f"unknown coupling step {step!r}")
            if step.endswith("-to-cluster") or step.endswith("-to-gauge"):
                if not gamma.is_empty:
                    continue  # the Swendsen-Wang arrows are sourceless
            for setting in cfg.beta_settings():
                units.append(
                    lambda g=gamma, st=step, s=setting: _report_row(
                        oracle.verify_coupling(cx, st, g, make_params(s)),
                        {"beta": beta_label(s)},
                    )
                )
    rows = _map_units([_guard(u, "coupling") for u in units], threads)
    cols = ["check", "complex", "gamma", "beta", "params", "metric", "value", "states", "pass", "error"]
    return cols, rows


def run_oracle_wilson(cfg: ExperimentConfig, threads: int):
    cx = cfg.build_cx()
    loops = [parse_loop(cx, s) for s in cfg.gamma_specs()]
    units = []
    for gamma in loops:
        for setting in cfg.beta_settings():
            def unit(g=gamma, s=setting):
                value = oracle.wilson_expectation_exact(cx, g, make_params(s))
                return {
                    "complex": cx.describe(),
                    "gamma": g.label,
                    "beta": beta_label(s),
                    "value": float(value),
                    "pass": True,
                }
            units.append(unit)
    rows = _map_units([_guard(u, "oracle-wilson") for u in units], threads)
    return ["complex", "gamma", "beta", "value", "pass", "error"], rows


def run_estimate(cfg: ExperimentConfig, threads: int):
    cx = cfg.build_cx()
    if cfg.raw["options"].get("emit") == "series":
        return _run_estimate_series(cfg, cx, threads)
    routes = cfg.raw["options"].get("routes", ["direct", "cluster", "current-squared"])
    loops = [parse_loop(cx, s) for s in cfg.gamma_specs()]
    units = []
    stream_step = 0
    for gamma in loops:
        for route in routes:
            def unit(g=gamma, r=route, off=stream_step):
                rows = []
                for setting in cfg.beta_settings():
                    params = make_params(setting)
                    base = cfg.chain_spec(params)
                    spec = samplers.ChainSpec(
                        kind=base.kind,
                        params=params,
                        sweeps=base.sweeps,
                        burn_in=base.burn_in,
                        thinning=base.thinning,
                        chains=base.chains,
                        rng=base.rng.with_stream(base.rng.stream + off),
                    )
                    est = estimators.estimate_wilson(cx, g, r, spec)
                    rows.append(
                        {
                            "complex": cx.describe(),
                            "gamma": g.label,
                            "route": r,
                            "beta": beta_label(setting),
                            "value": est.value,
                            "se": est.se,
                            "batches": est.batches,
                            "n_samples": est.n_samples,
                            "pass": True,
                        }
                    )
                return rows
            units.append(unit)
            stream_step += 2 * cfg.raw["chain"]["chains"]
    nested = _map_units([_guard(u, "estimate", list_result=True) for u in units], threads)
    rows = [row for sub in nested for row in sub]
    cols = ["complex", "gamma", "route", "beta", "value", "se", "batches", "n_samples", "pass", "error"]
    return cols, rows


def _run_estimate_series(cfg: ExperimentConfig, cx, threads: int):
    """Raw observable time series, one record per retained sweep."""
    loops = [parse_loop(cx, s) for s in cfg.gamma_specs()]
    kind = cfg.raw["options"].get("chain_kind", "gauge")
    if kind not in ("gauge", "cluster"):
        raise ConfigError("options.chain_kind must be 'gauge' or 'cluster'")
    units = []
    for setting in cfg.beta_settings():
        params = make_params(setting)
        base = cfg.chain_spec(params)
        if kind == "gauge":
            observables = [estimators.wilson_observable(g) for g in loops]
        else:
            observables = [estimators.membership_observable(g) for g in loops]
        for i in range(base.chains):
            spec = samplers.ChainSpec(
                kind=kind,
                params=params,
                sweeps=base.sweeps,
                burn_in=base.burn_in,
                thinning=base.thinning,
                chains=1,
                rng=base.rng.with_stream(base.rng.stream + i),
            )
            units.append(
                lambda sp=spec, obs=observables: samplers.series_records(
                    samplers.run_chain(cx, sp, obs)
                )
            )
    nested = _map_units([_guard(u, "estimate-series", list_result=True) for u in units], threads)
    rows = [row for sub in nested for row in sub]
    rows.sort(key=lambda r: (r.get("chain", -1), r.get("sweep", -1), r.get("name", "")))
    return ["chain", "sweep", "name", "value", "pass", "error"], rows


def run_potential(cfg: ExperimentConfig, threads: int):
    cx = cfg.build_cx()
    opts = cfg.raw["options"]
    R = opts.get("R", 1)
    Ts = opts.get("T_list", [1])
    axes = tuple(opts.get("axes", (0, 1)))
    rows = []
    for setting in cfg.beta_settings():
        params = make_params(setting)
        fit = estimators.estimate_potential(cx, R, Ts, cfg.chain_spec(params), axes)
        raw = {T: (est, se) for T, est, se in fit.raw}
        for T, value in fit.entries:
            est, se = raw[T]
            rows.append(
                {
                    "complex": cx.describe(),
                    "beta": beta_label(setting),
                    "R": R,
                    "T": T,
                    "estimate": est,
                    "se": se,
                    "neg_log_over_T": value if value is not None else "",
                    "V": fit.V if fit.V is not None else "",
                    "residual": fit.residual,
                    "flags": ";".join(fit.flags),
                    "pass": True,
                }
            )
    cols = ["complex", "beta", "R", "T", "estimate", "se", "neg_log_over_T", "V", "residual", "flags", "pass", "error"]
    return cols, rows


def run_area_law(cfg: ExperimentConfig, threads: int):
    cx = cfg.build_cx()
    mode = cfg.raw["options"].get("mode", "oracle")
    loops = [parse_loop(cx, s) for s in cfg.gamma_specs()]
    units = []
    for gamma in loops:
        for setting in cfg.beta_settings():
            def unit(g=gamma, s=setting):
                params = make_params(s)
                chain = cfg.chain_spec(params) if mode == "mc" else None
                rep = estimators.check_area_law(cx, g, params, mode, chain)
                return _report_row(rep, {"beta": beta_label(s), "mode": mode})
            units.append(unit)
    rows = _map_units([_guard(u, "area-law") for u in units], threads)
    cols = ["check", "complex", "gamma", "beta", "mode", "lhs", "rhs", "area", "boundary_margin", "margin_hypothesis_met", "pass", "error"]
    return cols, rows


def run_griffiths(cfg: ExperimentConfig, threads: int):
    cx = cfg.build_cx()
    opts = cfg.raw["options"]
    mode = opts.get("mode", "oracle")
    gamma1 = parse_loop(cx, cfg.gamma_specs()[0])
    gamma2 = parse_loop(cx, opts.get("gamma2", {"kind": "edges", "edges": []}))
    betas = cfg.beta_settings()
    for b in betas:
        if isinstance(b, list):
            raise ConfigError("griffiths runs on a scalar beta grid")
    chain = cfg.chain_spec(make_params(betas[0])) if mode == "mc" else None
    unit = _guard(
        lambda: _report_row(estimators.check_griffiths(cx, gamma1, gamma2, betas, mode, chain)),
        "griffiths",
    )
    cols = ["check", "complex", "gamma", "params", "metric", "value", "pass", "error"]
    return cols, [unit()]


def run_domination(cfg: ExperimentConfig, threads: int):
    cx = cfg.build_cx()
    mode = cfg.raw["options"].get("mode", "exact")
    units = []
    for setting in cfg.beta_settings():
        def unit(s=setting):
            params = make_params(s)
            chain = None
            if mode == "mc":
                chain = cfg.chain_spec(params)
            rep = estimators.check_domination(cx, params, mode, chain)
            return _report_row(rep, {"beta": beta_label(s), "mode": mode})
        units.append(unit)
    rows = _map_units([_guard(u, "domination") for u in units], threads)
    cols = ["check", "complex", "beta", "mode", "metric", "value", "pass", "error"]
    return cols, rows


def run_covariance(cfg: ExperimentConfig, threads: int):
    cx = cfg.build_cx()
    opts = cfg.raw["options"]
    pairs = opts.get("pairs")
    if not pairs:
        raise ConfigError("covariance task needs options.pairs = [[loopA, loopB], ...]")
    units = []
    for i, (sa, sb) in enumerate(pairs):
        ga, gb = parse_loop(cx, sa), parse_loop(cx, sb)
        def unit(g1=ga, g2=gb, off=i):
            rows_local = []
            for setting in cfg.beta_settings():
                params = make_params(setting)
                base = cfg.chain_spec(params)
                spec = samplers.ChainSpec(
                    kind="gauge",
                    params=params,
                    sweeps=base.sweeps,
                    burn_in=base.burn_in,
                    thinning=base.thinning,
                    chains=base.chains,
                    rng=base.rng.with_stream(base.rng.stream + off * base.chains),
                )
                est, dist = estimators.estimate_covariance(cx, g1, g2, spec)
                rows_local.append(
                    {
                        "complex": cx.describe(),
                        "pair": f"{g1.label}|{g2.label}",
                        "beta": beta_label(setting),
                        "distance": dist,
                        "covariance": est.value,
                        "se": est.se,
                        "n_samples": est.n_samples,
                        "pass": True,
                    }
                )
            return rows_local
        units.append(unit)
    nested = _map_units([_guard(u, "covariance", list_result=True) for u in units], threads)
    rows = [row for sub in nested for row in sub]
    by_beta: dict[str, list] = {}
    for row in rows:
        if row.get("refused"):
            continue
        by_beta.setdefault(row["beta"], []).append(row)
    for label, group in sorted(by_beta.items()):
        rate = estimators.fit_decay_rate(
            [r["distance"] for r in group], [r["covariance"] for r in group]
        )
        rows.append(
            {
                "complex": cx.describe(),
                "pair": "decay-fit",
                "beta": label,
                "distance": "",
                "covariance": "",
                "se": "",
                "n_samples": "",
                "fitted_rate": rate if rate is not None else "",
                "pass": True,
            }
        )
    cols = ["complex", "pair", "beta", "distance", "covariance", "se", "n_samples", "fitted_rate", "pass", "error"]
    return cols, rows


RUNNERS = {
    "verify-current-expansion": run_verify_current_expansion,
    "verify-switching": run_verify_switching,
    "verify-coupling": run_verify_coupling,
    "oracle-wilson": run_oracle_wilson,
    "estimate": run_estimate,
    "potential": run_potential,
    "area-law": run_area_law,
    "griffiths": run_griffiths,
    "domination": run_domination,
    "covariance": run_covariance,
}


# -- output -------------------------------------------------------------------------


def config_hash(resolved: dict) -> str:
    canon = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_output(cfg: ExperimentConfig, columns, rows, fmt: str) -> str:
    resolved = cfg.to_dict()
    header = {
        "z2gauge-version": __version__,
        "config-hash": config_hash(resolved),
        "rng-algorithm": resolved["rng"]["algorithm"],
        "config": json.dumps(resolved, sort_keys=True, separators=(",", ":")),
    }
    timestamp = datetime.now(timezone.utc).isoformat()
    if fmt == "csv":
        buf = io.StringIO()
        for key, value in header.items():
            buf.write(f"# {key}: {value}\n")
        buf.write(f"# generated-at: {timestamp}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(c, "")) for c in columns])
        return buf.getvalue()
    lines = [json.dumps({"record": "header", **header, "generated-at": timestamp}, sort_keys=True)]
    for row in rows:
        out = {"record": "row"}
        for c in columns:
            out[c] = row.get(c, "")
        lines.append(json.dumps(out, sort_keys=True))
    return "\n".join(lines) + "\n"


def payload_lines(text: str, fmt: str) -> list[str]:
    """The reproducible part of an output file (everything but the header)."""
    lines = text.splitlines()
    if fmt == "csv":
        return [ln for ln in lines if not ln.startswith("# ")]
    return [ln for ln in lines if '"record": "header"' not in ln]


# -- entry point -----------------------------------------------------------------------


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> tuple[str, str]:
    """Execute the configured task.

    Returns the rendered output and a status: "ok", "failed" (a check did not
    pass), or "refused" (an enumeration exceeded its cap; recorded per row).
    """
    runner = RUNNERS[cfg.raw["task"]]
    columns, rows = runner(cfg, threads)
    refused = any(row.get("refused") for row in rows)
    ok = all(row.get("pass", True) for row in rows)
    text = render_output(cfg, columns, rows, cfg.raw["output"]["format"])
    return text, "refused" if refused else ("ok" if ok else "failed")


def load_config(path: str) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path!r} is not valid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(data)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="z2gauge",
        description="Z2 lattice gauge theory: oracles, verifiers, samplers, estimators.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run one experiment config")
    run_p.add_argument("config", help="path to a JSON experiment config")
    run_p.add_argument("--seed", type=int, default=None, help="override rng.seed")
    run_p.add_argument("--out", default=None, help="override output path")
    run_p.add_argument("--threads", type=int, default=1, help="worker threads")
    run_p.add_argument("--format", choices=("csv", "jsonl"), default=None)
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
        raw = cfg.to_dict()
        if args.seed is not None:
            raw["rng"]["seed"] = args.seed
        if args.out is not None:
            raw["output"]["path"] = args.out
        if args.format is not None:
            raw["output"]["format"] = args.format
        cfg = ExperimentConfig.from_dict(raw)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        text, status = run_experiment(cfg, threads=max(1, args.threads))
    except SizeRefusal as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return 3
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    out_path = Path(cfg.raw["output"]["path"])
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(text)
    n_rows = len(payload_lines(text, cfg.raw["output"]["format"])) - 1
    print(f"{cfg.raw['task']}: {max(n_rows, 0)} records -> {out_path} [{status}]")
    return {"ok": 0, "refused": 3, "failed": 4}[status]


if __name__ == "__main__":
    sys.exit(main())
