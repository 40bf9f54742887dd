"""Configuration-driven experiment runner.

Reads a plain key/value experiment config naming a system definition,
runs one named experiment, and writes deterministic CSV/JSON artifacts
(`<experiment>_<seed>.csv/.json`); wall-clock timestamps go only to a
sidecar `.log` so repeated runs are byte-identical.  Exit codes: 0 all
asserted invariants passed, 1 invariant failure, 2 config error, 3
estimator failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rds import (
    Cocycle,
    DrivingSystem,
    EstimatorError,
    InvalidSystem,
    TorusPoint,
    load_system,
    sample_path,
)
from .oseledets import certify_partial_hyperbolicity, lyapunov_spectrum
from .thermo import (
    GridSpec,
    Potential,
    combine_potentials,
    constant_potential,
    coordinate_potential,
    pressure_estimate,
    pressure_property_suite,
    topological_entropy,
    zero_potential,
)
from .measures import (
    bowen_ball_entropy,
    build_partition_pair,
    convex_combo_sampler,
    haar_sampler,
    information_identity_battery,
    periodic_atomic_sampler,
    smb_trace,
)
from .equilibria import (
    _report_for,
    dual_vp_check,
    equilibrium_scan,
    geometric_potential,
    gibbs_defect,
)

EXPERIMENTS = (
    "spectrum",
    "certify",
    "pressure",
    "entropy",
    "smb",
    "gibbs",
    "vp-scan",
    "property-suite",
    "info-identities",
)

ENV_PREFIX = "UTHERMO_"


class ConfigError(ValueError):
    """Bad or unknown experiment configuration."""


_KNOWN_KEYS = {
    "system",
    "experiment",
    "seed",
    "samples",
    "out",
    "workers",
    "delta",
    "n_grid",
    "eps_grid",
    "base_grid",
    "potential",
    "potentials",
    "grid_k",
    "entropy_samples",
    "birkhoff_n",
    "birkhoff_samples",
    "spaces",
    "measures",
    "certify_n",
    "spectrum_n",
}


@dataclass
class ExperimentConfig:
    """Parsed experiment description; grids must be strictly increasing."""

    system: str = ""
    experiment: str = ""
    seed: int = 0
    samples: int = 1
    out: str = "results"
    workers: int = 1
    delta: float = 0.1
    n_grid: tuple[int, ...] = (8, 9, 10, 11, 12, 13, 14)
    eps_grid: tuple[float, ...] = (0.02, 0.04)
    base_grid: int = 5
    potential: str = "zero"
    potentials: tuple[str, ...] = ()
    grid_k: int = 16
    entropy_samples: int = 64
    birkhoff_n: int = 64
    birkhoff_samples: int = 64
    spaces: int = 100
    measures: tuple[str, ...] = ("haar", "atomic:0,0")
    certify_n: int = 40
    spectrum_n: int = 2000
    config_dir: Path = field(default_factory=Path)

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if not self.system and self.experiment != "info-identities":
            raise ConfigError("missing key 'system'")
        if self.samples < 1:
            raise ConfigError("key 'samples' must be >= 1")
        if self.workers < 1:
            raise ConfigError("key 'workers' must be >= 1")
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])) or not self.n_grid:
            raise ConfigError("key 'n_grid' must be strictly increasing")
        if any(b <= a for a, b in zip(self.eps_grid, self.eps_grid[1:])) or not self.eps_grid:
            raise ConfigError("key 'eps_grid' must be strictly increasing")
        if min(self.eps_grid) <= 0:
            raise ConfigError("key 'eps_grid' must be positive")
        if not 0 < self.delta <= 0.25:
            raise ConfigError("key 'delta' must lie in (0, 0.25]")

    def grid_spec(self) -> GridSpec:
        return GridSpec(
            delta=self.delta,
            n_grid=self.n_grid,
            eps_grid=self.eps_grid,
            base_grid=self.base_grid,
            omega_samples=self.samples,
        )


def _parse_int_grid(text: str) -> tuple[int, ...]:
    text = text.strip()
    if ":" in text:
        lo, hi = text.split(":")
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(t) for t in text.split())


def parse_config_text(text: str, config_dir: Path) -> ExperimentConfig:
    cfg = ExperimentConfig(config_dir=config_dir)
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"malformed config line {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _KNOWN_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        if key == "system":
            cfg.system = val
        elif key == "experiment":
            cfg.experiment = val
        elif key in ("seed", "samples", "workers", "base_grid", "grid_k",
                     "entropy_samples", "birkhoff_n", "birkhoff_samples", "spaces",
                     "certify_n", "spectrum_n"):
            try:
                setattr(cfg, key, int(val))
            except ValueError:
                raise ConfigError(f"key {key!r} needs an integer, got {val!r}") from None
        elif key == "out":
            cfg.out = val
        elif key == "delta":
            cfg.delta = float(val)
        elif key == "n_grid":
            cfg.n_grid = _parse_int_grid(val)
        elif key == "eps_grid":
            cfg.eps_grid = tuple(float(t) for t in val.split())
        elif key == "potential":
            cfg.potential = val
        elif key == "potentials":
            cfg.potentials = tuple(val.split())
        elif key == "measures":
            cfg.measures = tuple(val.split())
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    cfg = parse_config_text(path.read_text(encoding="utf-8"), path.parent)
    return cfg


def _resolve_potential(spec: str, cocycle: Cocycle, system: DrivingSystem, seed: int) -> Potential:
    if spec == "zero":
        return zero_potential()
    if spec.startswith("const:"):
        return constant_potential(float(spec.split(":", 1)[1]))
    if spec.startswith(("cos:", "sin:")):
        fn, rest = spec.split(":", 1)
        parts = rest.split(":")
        amp = float(parts[0])
        k = [int(t) for t in parts[1].split(",")] if len(parts) > 1 else [1] + [0] * (cocycle.dim - 1)
        phase = float(parts[2]) if len(parts) > 2 else 0.0
        return coordinate_potential(amp, k, phase=phase, fn=fn, label=spec)
    if spec == "phiu":
        return geometric_potential(cocycle, _report_for(cocycle, system, seed))
    raise ConfigError(f"unknown potential spec {spec!r}")


def _resolve_measure(spec: str, cocycle: Cocycle, system: DrivingSystem):
    if spec == "haar":
        return haar_sampler(system, dim=cocycle.dim)
    if spec.startswith("atomic:"):
        coords = tuple(float(t) for t in spec.split(":", 1)[1].split(","))
        return periodic_atomic_sampler(system, cocycle, TorusPoint(coords))
    if spec.startswith("combo:"):
        # combo:w1*spec1+w2*spec2 with nested specs free of '+'
        terms = spec.split(":", 1)[1].split("+")
        comps, weights = [], []
        for term in terms:
            w, sub = term.split("*", 1)
            comps.append(_resolve_measure(sub, cocycle, system))
            weights.append(float(w))
        return convex_combo_sampler(comps, weights)
    raise ConfigError(f"unknown measure spec {spec!r}")


# ---------------------------------------------------------------------------
# Deterministic emission
# ---------------------------------------------------------------------------


def _fmt_cell(v) -> str:
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def _json_default(obj):
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def emit_report(out_dir, experiment: str, seed: int, header, rows, json_obj, log_lines,
                json_lines=None):
    """Write `<experiment>_<seed>.{csv,json}` plus a timestamped sidecar log.

    json_lines, when given, is a list of records written one-per-line to a
    `.jsonl` companion (per-sample spectrum/certificate records).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = f"{experiment.replace('-', '_')}_{seed}"
    csv_path = out / f"{base}.csv"
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt_cell(v) for v in row) + "\n")
    json_path = out / f"{base}.json"
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(json_obj, fh, sort_keys=True, indent=2, default=_json_default)
        fh.write("\n")
    if json_lines is not None:
        with open(out / f"{base}.jsonl", "w", encoding="utf-8") as fh:
            for rec in json_lines:
                fh.write(json.dumps(rec, sort_keys=True, default=_json_default) + "\n")
    log_path = out / f"{base}.log"
    with open(log_path, "a", encoding="utf-8") as fh:
        fh.write(f"[{time.strftime('%Y-%m-%dT%H:%M:%S')}] " + "; ".join(log_lines) + "\n")
    return csv_path, json_path


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


def _run_spectrum(cfg, cocycle, system):
    rng = np.random.default_rng([cfg.seed & 0xFFFFFFFFFFFFFFFF, 0x59EC])
    n = cfg.spectrum_n
    rows = []
    records = []
    ok = True
    for i in range(cfg.samples):
        pseed = int(rng.integers(0, 2**63 - 1))
        path = sample_path(system, n + 2, pseed)
        x = TorusPoint(tuple(rng.random(cocycle.dim)))
        rep = lyapunov_spectrum(cocycle, path, x, n, frame_seed=pseed)
        # chain rule for determinants, accumulated stepwise to avoid overflow
        from .rds import compose, derivative

        log_det = 0.0
        pt = x
        for j in range(n):
            log_det += float(
                np.log(abs(np.linalg.det(derivative(cocycle, path.shifted(j), 1, pt))))
            )
            pt = compose(cocycle, path.shifted(j), 1, pt)
        total = sum(l * m for l, m in zip(rep.exponents, rep.multiplicities))
        if abs(total - log_det / n) > 1e-6:
            ok = False
        rows.append([i, pseed, rep.unstable_index]
                    + [float(v) for v in rep.raw_exponents])
        records.append(dict(rep.to_json_dict(), sample=i, seed=pseed))
    d = cocycle.dim
    header = ["sample", "omega_seed", "unstable_index"] + [f"exponent_{k}" for k in range(d)]
    summary = {
        "experiment": "spectrum",
        "samples": cfg.samples,
        "orbit_length": n,
        "records": records,
        "det_rate_consistent": ok,
    }
    mean_top = float(np.mean([r["exponents"][0] for r in records]))
    return rows, header, summary, ok, f"spectrum: top exponent mean {mean_top:.4f}", records


def _run_certify(cfg, cocycle, system):
    cert = certify_partial_hyperbolicity(
        cocycle, system, samples=max(cfg.samples, 10), n=cfg.certify_n, seed=cfg.seed
    )
    header = ["sample", "unstable_index", "gap", "expansion"]
    rows = [
        [r.get("sample"), r.get("unstable_index"), r.get("gap", float("nan")),
         r.get("expansion", float("nan"))]
        for r in cert.per_sample
    ]
    consistent = cert.verdict != "certified" or (
        cert.expansion_lower > 1.0 and cert.domination_ratio_log < 0.0
    )
    summary = dict(cert.to_json_dict(), experiment="certify")
    line = (
        f"certify: verdict {cert.verdict}, expansion {cert.expansion_lower:.4f}, "
        f"gap {cert.domination_ratio_log:.4f}"
    )
    records = [dict(r, verdict=cert.verdict) for r in cert.per_sample]
    return rows, header, summary, consistent, line, records


def _run_pressure(cfg, cocycle, system, potential=None):
    pot = potential or _resolve_potential(cfg.potential, cocycle, system, cfg.seed)
    est = pressure_estimate(cocycle, system, pot, cfg.grid_spec(), cfg.seed)
    header, rows = est.csv_rows()
    summary = dict(est.to_json_dict(), experiment="pressure")
    ok = est.bracket_ok
    line = f"pressure[{pot.label}]: value {est.value:.4f} +- {est.slope_ci:.4f}"
    return rows, header, summary, ok, line


def _run_entropy(cfg, cocycle, system):
    est = topological_entropy(cocycle, system, cfg.grid_spec(), cfg.seed)
    header, rows = est.csv_rows()
    summary = dict(est.to_json_dict(), experiment="entropy")
    ok = est.bracket_ok and est.value >= -est.slope_ci
    line = f"entropy: value {est.value:.4f} +- {est.slope_ci:.4f} (spread {est.spread:.3f})"
    return rows, header, summary, ok, line


def _run_smb(cfg, cocycle, system):
    sampler = _resolve_measure(cfg.measures[0], cocycle, system)
    pair = build_partition_pair(system, [], cfg.grid_k, cfg.seed)
    if cfg.delta <= pair.cell_size:
        raise ConfigError("key 'grid_k' too coarse for delta (need delta > 1/grid_k)")
    est = smb_trace(
        cocycle, sampler, pair, cfg.n_grid, cfg.entropy_samples, cfg.seed, delta=cfg.delta
    )
    header = ["sample_id", "n", "information_value"]
    rows = []
    for si, row in enumerate(est.traces):
        for n, v in zip(est.n_grid, row):
            rows.append([si, n, float(v * n)])
    summary = dict(est.to_json_dict(), experiment="smb")
    ok = est.value >= -est.ci
    line = (
        f"smb[{sampler.label}]: terminal trace {est.value:.4f}, "
        f"sd {est.trace_sd[0]:.4f}->{est.trace_sd[-1]:.4f}"
    )
    return rows, header, summary, ok, line


def _run_gibbs(cfg, cocycle, system):
    sampler = _resolve_measure(cfg.measures[0], cocycle, system)
    gd = gibbs_defect(
        cocycle,
        system,
        sampler,
        cfg.grid_spec(),
        cfg.seed,
        entropy_samples=cfg.entropy_samples,
        birkhoff_n=cfg.birkhoff_n,
        birkhoff_samples=cfg.birkhoff_samples,
    )
    header = ["measure_id", "pressure_at_phiu", "pesin_gap", "entropy", "integral"]
    rows = [[gd.measure_id, gd.pressure_at_phiu, gd.pesin_gap, gd.entropy,
             gd.integral_minus_phiu]]
    summary = dict(gd.to_json_dict(), experiment="gibbs")
    combined = gd.pressure_ci + gd.entropy_ci + gd.integral_ci
    ok = gd.pesin_gap >= -combined
    line = f"gibbs[{gd.measure_id}]: P(phi-u) {gd.pressure_at_phiu:+.4f}, gap {gd.pesin_gap:+.4f}"
    return rows, header, summary, ok, line


def _run_vp_scan(cfg, cocycle, system):
    phi = _resolve_potential(cfg.potential, cocycle, system, cfg.seed)
    family = [_resolve_measure(m, cocycle, system) for m in cfg.measures]
    report = equilibrium_scan(
        cocycle,
        system,
        phi,
        family,
        cfg.grid_spec(),
        cfg.seed,
        entropy_samples=cfg.entropy_samples,
        birkhoff_n=cfg.birkhoff_n,
        birkhoff_samples=cfg.birkhoff_samples,
    )
    pots = cfg.potentials or (cfg.potential,)
    pot_family = [_resolve_potential(p, cocycle, system, cfg.seed) for p in pots]
    dual_gap = dual_vp_check(
        cocycle,
        system,
        family[0],
        pot_family,
        cfg.grid_spec(),
        cfg.seed,
        entropy_samples=cfg.entropy_samples,
        birkhoff_n=cfg.birkhoff_n,
        birkhoff_samples=cfg.birkhoff_samples,
    )
    header, rows = report.csv_rows()
    summary = dict(report.to_json_dict(), experiment="vp-scan", dual_gap=dual_gap)
    ok = all(c.defect >= -c.combined_ci for c in report.candidates)
    line = f"vp-scan[{phi.label}]: best {report.best}, dual gap {dual_gap:+.4f}"
    return rows, header, summary, ok, line


def _run_property_suite(cfg, cocycle, system):
    specs = cfg.potentials or ("zero", "const:0.3", "cos:0.4:1,0", "sin:0.4:1,0", "const:-0.2")
    family = [_resolve_potential(p, cocycle, system, cfg.seed) for p in specs]
    report = pressure_property_suite(cocycle, system, family, cfg.grid_spec(), cfg.seed)
    header = ["check", "passed", "slack", "detail"]
    rows = [[c.name, int(c.passed), c.slack, c.detail] for c in report.checks]
    summary = dict(report.to_json_dict(), experiment="property-suite")
    line = "property-suite: " + ("all passed" if report.all_passed else "FAILURES")
    return rows, header, summary, report.all_passed, line


def _run_info_identities(cfg, cocycle=None, system=None):
    worst = information_identity_battery(n_spaces=cfg.spaces, seed=cfg.seed)
    header = ["identity", "worst_abs_error"]
    rows = [[k, v] for k, v in sorted(worst.items())]
    ok = all(v <= 1e-12 for v in worst.values())
    summary = {
        "experiment": "info-identities",
        "spaces": cfg.spaces,
        "worst": worst,
        "all_within_1e-12": ok,
    }
    line = f"info-identities: worst error {max(worst.values()):.3e} over {cfg.spaces} spaces"
    return rows, header, summary, ok, line


_RUNNERS = {
    "spectrum": _run_spectrum,
    "certify": _run_certify,
    "pressure": _run_pressure,
    "entropy": _run_entropy,
    "smb": _run_smb,
    "gibbs": _run_gibbs,
    "vp-scan": _run_vp_scan,
    "property-suite": _run_property_suite,
    "info-identities": _run_info_identities,
}


def run(cfg: ExperimentConfig) -> int:
    """Execute one configured experiment and write its artifacts."""
    try:
        cfg.validate()
        cocycle = system = None
        if cfg.experiment != "info-identities":
            system_path = Path(cfg.system)
            if not system_path.is_absolute():
                system_path = cfg.config_dir / system_path
            system, cocycle = load_system(system_path)
    except (ConfigError, InvalidSystem, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        result = _RUNNERS[cfg.experiment](cfg, cocycle, system)
    except (ConfigError, InvalidSystem) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except EstimatorError as exc:
        print(f"estimator error: {exc}", file=sys.stderr)
        return 3
    if len(result) == 6:
        rows, header, summary, ok, line, json_lines = result
    else:
        rows, header, summary, ok, line = result
        json_lines = None
    summary["invariants_ok"] = bool(ok)
    emit_report(cfg.out, cfg.experiment, cfg.seed, header, rows, summary, [line],
                json_lines=json_lines)
    print(line)
    if not ok:
        print("invariant failure", file=sys.stderr)
        return 1
    return 0


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    env = os.environ
    for attr, env_key, cast in (
        ("experiment", "EXPERIMENT", str),
        ("seed", "SEED", int),
        ("samples", "SAMPLES", int),
        ("out", "OUT", str),
        ("workers", "WORKERS", int),
    ):
        env_val = env.get(ENV_PREFIX + env_key)
        if env_val is not None:
            setattr(cfg, attr, cast(env_val))
        flag_val = getattr(args, attr, None)
        if flag_val is not None:
            setattr(cfg, attr, flag_val)
    return cfg


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="uthermo",
        description="Run leafwise entropy/pressure experiments from a config file.",
    )
    parser.add_argument("--config", required=True,
                        help="experiment config file, or a directory with --experiment all")
    parser.add_argument("--experiment", default=None,
                        help=f"one of {', '.join(EXPERIMENTS)}, or 'all' for a config directory")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--samples", type=int, default=None)
    parser.add_argument("--out", default=None)
    parser.add_argument("--workers", type=int, default=None,
                        help="accepted for compatibility; execution is sequential")
    args = parser.parse_args(argv)

    config_path = Path(args.config)
    experiment = args.experiment or os.environ.get(ENV_PREFIX + "EXPERIMENT")
    if experiment == "all":
        if not config_path.is_dir():
            print("config error: --experiment all needs --config <directory>", file=sys.stderr)
            return 2
        status = 0
        for cfg_file in sorted(config_path.glob("*.cfg")):
            try:
                cfg = load_config(cfg_file)
            except ConfigError as exc:
                print(f"config error in {cfg_file.name}: {exc}", file=sys.stderr)
                return 2
            cfg = _apply_overrides(cfg, argparse.Namespace(
                experiment=None, seed=args.seed, samples=None, out=args.out,
                workers=args.workers))
            print(f"== {cfg_file.name} ({cfg.experiment})")
            status = max(status, run(cfg))
        return status

    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    cfg = _apply_overrides(cfg, args)
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
