"""Experiment runner: flat key = value configs, synthetic dataset generation,
single runs, and parameter sweeps, all emitting CSV metrics.

The trace CSV starts with the fully resolved configuration echoed as
``# key = value`` comment lines (enough to re-run identically), followed by
the header ``round,outer,virt_seconds,duality_gap,bytes_up,bytes_down,phi_size``
and one numeric row per logged round.
"""

from __future__ import annotations

import argparse
import itertools
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import data, kernels, objective, protocol, simcluster
from .objective import HyperParams
from .simcluster import SimConfig

OUT_DIR_ENV = "ACPD_OUT_DIR"

CSV_HEADER = "round,outer,virt_seconds,duality_gap,bytes_up,bytes_down,phi_size"

ALGORITHMS = ("acpd", "cocoaplus", "sdca_single")


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in {"1", "true", "yes", "on"}:
        return True
    if low in {"0", "false", "no", "off"}:
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


# key -> (caster, default, help)
CONFIG_KEYS: dict[str, tuple] = {
    "algorithm": (str, "acpd", "acpd | cocoaplus | sdca_single"),
    "output": (str, "trace.csv", "trace CSV path (relative paths honor $" + OUT_DIR_ENV + ")"),
    "data.libsvm": (str, "", "LIBSVM text file to load (exclusive with data.synthetic.*)"),
    "data.synthetic.n": (int, 0, "synthetic sample count (> 0 selects synthetic data)"),
    "data.synthetic.d": (int, 0, "synthetic feature dimension"),
    "data.synthetic.density": (float, 1.0, "mean per-coordinate fill probability in (0, 1]"),
    "data.synthetic.noise": (float, 0.0, "label noise scale"),
    "data.synthetic.seed": (int, 0, "synthetic generator seed"),
    "data.synthetic.freq_skew": (float, 0.0, "Zipf exponent of per-feature fill rates (0 = uniform)"),
    "data.synthetic.scale_decay": (float, 0.0, "power-law decay of per-feature value scales (0 = flat)"),
    "data.normalize": (_parse_bool, True, "rescale samples onto the unit ball"),
    "data.features": (int, 0, "feature-dimension override for LIBSVM shards (0 = infer)"),
    "hp.lambda": (float, 1e-3, "ridge regularization"),
    "hp.gamma": (float, 1.0, "aggregation step scale in (0, 1]"),
    "hp.workers": (int, 1, "cluster size"),
    "hp.group_size": (int, 0, "messages committed per server step (0 = workers)"),
    "hp.epoch_len": (int, 1, "server steps between full barriers"),
    "hp.local_iters": (int, 100, "coordinate steps per worker round"),
    "hp.max_outer": (int, 200, "outer epoch cap (rounds for cocoaplus)"),
    "hp.keep": (int, 0, "coordinates kept per message (0 = all)"),
    "hp.seed": (int, 0, "partition / solver seed"),
    "sim.base_seconds": (float, 1.0, "compute seconds per worker round"),
    "sim.latency": (float, 0.01, "per-message latency, seconds"),
    "sim.secs_per_byte": (float, 1e-8, "per-byte transfer time, seconds"),
    "sim.straggler_sigma": (float, 1.0, "slowdown factor of the straggler worker"),
    "sim.straggler_worker": (int, 0, "which worker straggles"),
    "sim.jitter_sigma": (float, 0.0, "lognormal compute jitter (0 = off)"),
    "sim.seed": (int, 0, "timing-model seed"),
    "stop.gap": (float, 1e-6, "stop once the duality gap reaches this"),
    "stop.time_budget": (float, 0.0, "virtual-seconds budget (0 = unlimited)"),
    "report.gaps": (str, "", "extra comma-separated gap targets for the summary"),
    "report.theta": (float, 0.9, "local-solve quality used for the theory bound"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved run configuration (one value per known key)."""

    values: dict

    def __getitem__(self, key: str):
        return self.values[key]

    def with_overrides(self, overrides: dict) -> "ExperimentConfig":
        merged = dict(self.values)
        merged.update(overrides)
        return ExperimentConfig(merged)

    @property
    def algorithm(self) -> str:
        return self.values["algorithm"]

    def hyperparams(self) -> HyperParams:
        v = self.values
        workers = v["hp.workers"]
        group = v["hp.group_size"] or workers
        keep = v["hp.keep"] or None
        return HyperParams(lam=v["hp.lambda"], gamma=v["hp.gamma"], workers=workers,
                           group_size=group, epoch_len=v["hp.epoch_len"],
                           local_iters=v["hp.local_iters"], max_outer=v["hp.max_outer"],
                           keep=keep, seed=v["hp.seed"])

    def sim_config(self, workers: int) -> SimConfig:
        v = self.values
        slowdown = {}
        if v["sim.straggler_sigma"] > 1.0:
            slowdown[v["sim.straggler_worker"]] = v["sim.straggler_sigma"]
        return SimConfig(workers=workers, base_seconds=v["sim.base_seconds"],
                         latency=v["sim.latency"], secs_per_byte=v["sim.secs_per_byte"],
                         slowdown=slowdown, jitter_sigma=v["sim.jitter_sigma"],
                         seed=v["sim.seed"])

    def gap_targets(self) -> list[float]:
        targets = [self.values["stop.gap"]]
        extra = self.values["report.gaps"].strip()
        if extra:
            targets.extend(float(tok) for tok in extra.split(","))
        return targets

    def output_path(self) -> Path:
        path = Path(self.values["output"])
        out_dir = os.environ.get(OUT_DIR_ENV)
        if out_dir and not path.is_absolute():
            path = Path(out_dir) / path
        return path


def parse_config_items(pairs) -> ExperimentConfig:
    """Resolve (key, raw-string) pairs against defaults; unknown keys fail."""
    values = {key: default for key, (_, default, _) in CONFIG_KEYS.items()}
    for key, raw in pairs:
        if key not in CONFIG_KEYS:
            raise ValueError(f"unknown config key {key!r}")
        caster = CONFIG_KEYS[key][0]
        try:
            values[key] = caster(raw)
        except ValueError as exc:
            raise ValueError(f"bad value for {key}: {exc}") from None
    cfg = ExperimentConfig(values)
    _validate(cfg)
    return cfg


def parse_config(text: str) -> ExperimentConfig:
    pairs = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, raw = stripped.partition("=")
        if not sep:
            raise ValueError(f"config line {lineno}: expected 'key = value', got {line!r}")
        pairs.append((key.strip(), raw.strip()))
    return parse_config_items(pairs)


def _validate(cfg: ExperimentConfig) -> None:
    v = cfg.values
    if v["algorithm"] not in ALGORITHMS:
        raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {v['algorithm']!r}")
    has_file = bool(v["data.libsvm"])
    has_synth = v["data.synthetic.n"] > 0
    if has_file == has_synth:
        raise ValueError("exactly one dataset source required: data.libsvm or data.synthetic.n")
    if v["stop.gap"] <= 0 and v["stop.time_budget"] <= 0 and v["hp.max_outer"] <= 0:
        raise ValueError("at least one stop rule must be set")


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def echo_lines(cfg: ExperimentConfig) -> list[str]:
    return [f"# {key} = {format_value(cfg.values[key])}" for key in CONFIG_KEYS]


def parse_echoed_config(text: str) -> ExperimentConfig:
    """Rebuild a config from the comment header of a trace CSV."""
    pairs = []
    for line in text.splitlines():
        if not line.startswith("#"):
            break
        key, sep, raw = line.lstrip("# ").partition("=")
        if sep:
            pairs.append((key.strip(), raw.strip()))
    return parse_config_items(pairs)


def generate_synthetic(n: int, d: int, density: float, noise: float, seed: int,
                       freq_skew: float = 0.0, scale_decay: float = 0.0) -> data.Dataset:
    """Sparse synthetic classification instance with a planted linear model.

    Coordinates fill independently (mean fill rate = density), values are
    standard normal, samples are normalized onto the unit ball, and labels
    are the sign of x . w_true plus optional Gaussian noise.

    The two skew knobs mimic text-style data, where both feature frequency
    and feature magnitude are heavy-tailed: freq_skew > 0 draws per-feature
    fill rates from a Zipf profile (water-filled so the mean rate stays at
    density), and scale_decay > 0 shrinks value scales of later features by
    a power law. Both default to 0, which gives i.i.d. uniform fill.
    """
    if n < 1 or d < 1:
        raise ValueError("n and d must be >= 1")
    if not 0.0 < density <= 1.0:
        raise ValueError("density must be in (0, 1]")
    if noise < 0.0:
        raise ValueError("noise must be >= 0")
    if freq_skew < 0.0 or scale_decay < 0.0:
        raise ValueError("freq_skew and scale_decay must be >= 0")
    rng = np.random.default_rng(seed)
    fill = (1.0 + np.arange(d)) ** (-freq_skew)
    for _ in range(8):  # water-fill: renormalize the mean around capped rates
        fill = np.minimum(fill * (density * d / fill.sum()), 1.0)
    mask = rng.random((n, d)) < fill
    rows, cols = np.nonzero(mask)
    values = rng.standard_normal(cols.size)
    if scale_decay > 0.0:
        values = values * (1.0 + cols.astype(np.float64)) ** (-scale_decay)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
    labels = np.ones(n)
    ds = data.Dataset(n, d, indptr, cols.astype(np.int32), values, labels)
    ds = data.normalize(ds)
    w_true = rng.standard_normal(d)
    scores = kernels.row_dots(ds.indptr, ds.indices, ds.values, w_true)
    if noise > 0.0:
        scores = scores + noise * rng.standard_normal(n)
    labels = np.where(scores >= 0.0, 1.0, -1.0)
    return data.Dataset(n, d, ds.indptr, ds.indices, ds.values, labels)


def load_dataset(cfg: ExperimentConfig) -> data.Dataset:
    v = cfg.values
    if v["data.libsvm"]:
        text = Path(v["data.libsvm"]).read_text()
        override = v["data.features"] or None
        ds = data.parse_libsvm(text, n_features=override)
    else:
        ds = generate_synthetic(v["data.synthetic.n"], v["data.synthetic.d"],
                                v["data.synthetic.density"], v["data.synthetic.noise"],
                                v["data.synthetic.seed"],
                                freq_skew=v["data.synthetic.freq_skew"],
                                scale_decay=v["data.synthetic.scale_decay"])
    if v["data.normalize"]:
        rescaled = data.scaled_count(ds)
        if rescaled:
            print(f"normalized {rescaled}/{ds.n} samples onto the unit ball")
        ds = data.normalize(ds)
    return ds


def write_trace_csv(path: Path, cfg: ExperimentConfig, trace: simcluster.SimTrace) -> None:
    lines = echo_lines(cfg)
    lines.append(CSV_HEADER)
    for r in trace.rows:
        lines.append(f"{r.round},{r.outer},{r.seconds!r},{r.gap!r},"
                     f"{r.bytes_up},{r.bytes_down},{len(r.phi)}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


def execute(cfg: ExperimentConfig) -> simcluster.SimTrace:
    """Load data, run the configured algorithm, write the trace CSV."""
    ds = load_dataset(cfg)
    hp = cfg.hyperparams()
    algorithm = cfg.algorithm
    if algorithm == "sdca_single":
        hp = replace(hp, workers=1, group_size=1, epoch_len=1)
    sc = cfg.sim_config(hp.workers)
    gap_eps = cfg.values["stop.gap"] if cfg.values["stop.gap"] > 0 else None
    budget = cfg.values["stop.time_budget"] if cfg.values["stop.time_budget"] > 0 else None
    if algorithm == "acpd":
        trace = simcluster.run_acpd(ds, hp, sc, gap_eps=gap_eps, time_budget=budget)
    else:
        trace = simcluster.run_cocoaplus(ds, hp, sc, gap_eps=gap_eps, time_budget=budget)

    path = cfg.output_path()
    write_trace_csv(path, cfg, trace)
    print(f"{algorithm}: {len(trace.rows) - 1} rounds, stop={trace.stop_reason}, "
          f"final gap={trace.rows[-1].gap:.3e}, trace -> {path}")
    for eps in cfg.gap_targets():
        reached = simcluster.measure_time_to_gap(trace, eps)
        rounds = simcluster.rounds_to_gap(trace, eps)
        if reached is None:
            print(f"time_to_gap({eps:g}) = not reached")
        else:
            print(f"time_to_gap({eps:g}) = {reached:.6g} s at round {rounds}")
    _print_theory_bound(cfg, ds, hp)
    return trace


def _print_theory_bound(cfg: ExperimentConfig, ds: data.Dataset, hp: HyperParams) -> None:
    theta = cfg.values["report.theta"]
    eps = cfg.values["stop.gap"]
    if eps <= 0:
        return
    hp_eff = hp if cfg.algorithm == "acpd" else replace(hp, group_size=hp.workers)
    parts = data.partition(ds, hp_eff.workers, hp_eff.seed)
    sigma_max = objective.estimate_sigma_max(parts, ds, iters=60, seed=hp_eff.seed)
    bound = objective.theoretical_rounds(hp_eff, ds.n, objective.LEAST_SQUARES.mu,
                                         sigma_max, theta, eps, mode="duality_gap")
    if bound is None:
        print(f"theory (Θ={theta:g}): bound undefined for these parameters")
    else:
        print(f"theory (Θ={theta:g}): L ≥ {bound:.6g} outer iterations to gap {eps:g}")


def run_experiment(cfg: ExperimentConfig) -> int:
    """Run one experiment; exit code 0 iff a stop rule was met cleanly."""
    try:
        execute(cfg)
        return 0
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (protocol.ProtocolError, objective.ConsistencyError) as exc:
        print(f"internal consistency violation: {exc}", file=sys.stderr)
        return 2


def _sweep_output(base: str, assignment: dict) -> str:
    stem, dot, suffix = base.rpartition(".")
    if not dot:
        stem, suffix = base, "csv"
    tags = "__".join(f"{key.rsplit('.', 1)[-1]}-{format_value(v)}" for key, v in assignment.items())
    return f"{stem}__{tags}.{suffix}"


def run_sweep(cfg: ExperimentConfig, sweeps: dict[str, list]) -> int:
    """Cartesian-product sweep; one trace CSV per point plus a summary CSV."""
    try:
        points = _sweep_points(cfg, sweeps)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    eps = cfg.values["stop.gap"]
    summary = []
    status = 0
    for assignment in points:
        sub = cfg.with_overrides({**assignment,
                                  "output": _sweep_output(cfg.values["output"], assignment)})
        rc = run_experiment(sub)
        status = max(status, rc)
        if rc == 0:
            text = sub.output_path().read_text()
            trace = _trace_from_csv(text)
            t = simcluster.measure_time_to_gap(trace, eps)
            r = rounds_to = simcluster.rounds_to_gap(trace, eps)
            summary.append((assignment, t, rounds_to))
        else:
            summary.append((assignment, None, None))
    keys = list(sweeps)
    out = cfg.output_path()
    stem = out.with_name(out.stem + "_summary.csv")
    lines = [",".join(keys + ["time_to_gap", "rounds_to_gap"])]
    for assignment, t, r in summary:
        cells = [format_value(assignment[k]) for k in keys]
        cells.append("" if t is None else repr(t))
        cells.append("" if r is None else str(r))
        lines.append(",".join(cells))
    stem.parent.mkdir(parents=True, exist_ok=True)
    stem.write_text("\n".join(lines) + "\n")
    print(f"sweep summary -> {stem}")
    return status


def _sweep_points(cfg: ExperimentConfig, sweeps: dict[str, list]) -> list[dict]:
    if not sweeps:
        raise ValueError("no sweep parameters given")
    for key, values in sweeps.items():
        if key not in CONFIG_KEYS:
            raise ValueError(f"unknown sweep key {key!r}")
        if not values:
            raise ValueError(f"empty value list for sweep key {key!r}")
    keys = list(sweeps)
    casted = [[CONFIG_KEYS[k][0](v) if isinstance(v, str) else v for v in sweeps[k]] for k in keys]
    return [dict(zip(keys, combo)) for combo in itertools.product(*casted)]


def _trace_from_csv(text: str) -> simcluster.SimTrace:
    rows = []
    seen_header = False
    for line in text.splitlines():
        if line.startswith("#"):
            continue
        if not seen_header:
            seen_header = True
            continue
        parts = line.split(",")
        rows.append(simcluster.TraceRow(int(parts[0]), int(parts[1]), float(parts[2]),
                                        float(parts[3]), int(parts[4]), int(parts[5]),
                                        tuple(range(int(parts[6])))))
    return simcluster.SimTrace(rows=rows)


def _config_help() -> str:
    width = max(len(k) for k in CONFIG_KEYS)
    lines = ["config keys (key = value per line, # comments allowed):"]
    for key, (_, default, help_text) in CONFIG_KEYS.items():
        lines.append(f"  {key:<{width}}  default {format_value(default)!s:<12} {help_text}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="acpd",
        description="Distributed dual coordinate ascent on a simulated cluster.",
        epilog=_config_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment from a config file")
    p_run.add_argument("--config", required=True, help="path to a key = value config file")

    p_sweep = sub.add_parser("sweep", help="run a Cartesian parameter sweep")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--sweep", action="append", required=True, metavar="KEY=V1,V2,...",
                         help="repeatable; each adds one swept dimension")

    p_gen = sub.add_parser("gen", help="generate a synthetic LIBSVM file")
    p_gen.add_argument("--n", type=int, required=True)
    p_gen.add_argument("--d", type=int, required=True)
    p_gen.add_argument("--density", type=float, default=1.0)
    p_gen.add_argument("--noise", type=float, default=0.0)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--freq-skew", type=float, default=0.0)
    p_gen.add_argument("--scale-decay", type=float, default=0.0)
    p_gen.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    if args.command == "gen":
        try:
            ds = generate_synthetic(args.n, args.d, args.density, args.noise, args.seed,
                                    freq_skew=args.freq_skew, scale_decay=args.scale_decay)
            out = Path(args.out)
            out.parent.mkdir(parents=True, exist_ok=True)
            out.write_text(data.write_libsvm(ds))
            print(f"wrote {ds.n} samples, {ds.d} features -> {out}")
            return 0
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1

    try:
        cfg = parse_config(Path(args.config).read_text())
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    if args.command == "run":
        return run_experiment(cfg)

    sweeps: dict[str, list] = {}
    for spec in args.sweep:
        key, sep, raw = spec.partition("=")
        if not sep:
            print(f"error: --sweep expects KEY=V1,V2,..., got {spec!r}", file=sys.stderr)
            return 1
        sweeps[key.strip()] = [tok for tok in raw.split(",") if tok != ""]
    return run_sweep(cfg, sweeps)


if __name__ == "__main__":
    sys.exit(main())
