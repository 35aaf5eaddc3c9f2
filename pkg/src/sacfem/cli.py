"""Command-line entry point: config parsing, run orchestration, artifacts.

Usage:  sacfem <command> --config <path> [--seed <u64>] [--samples <n>] [--out <dir>]

Commands: simulate, converge-space, converge-time, operator-check,
regularity.  The config file is flat `key = value` text (UTF-8, `#`
comments); flags override config values.  Every run writes `report.csv`
(fixed schema, 17 significant digits) and `config.echo` (the normalized
effective configuration, which re-parses to an identical run) into the
output directory, plus `plot.txt` (a self-contained plotting script) when
`emit_plot` is on.

Exit status: 0 on success, 1 for configuration or environment problems,
2 when the solver or a worker fails at runtime.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import fem
from . import harness
from . import noise
from . import stepper
from .spectral import CovarianceSpec

COMMANDS = ("simulate", "converge-space", "converge-time", "operator-check",
            "regularity")


class ConfigError(ValueError):
    """Configuration text or values rejected; message carries key and line."""


@dataclass(frozen=True)
class RunConfig:
    """Fully validated, defaults-materialized description of one run."""

    command: str
    s: float
    samples: int
    seed: int
    horizon: float
    init: str
    workers: int
    emit_plot: bool
    out: str
    trial_exponents: tuple[int, ...] | None = None
    h_ref_exponent: int | None = None
    tau_ref_exponent: int | None = None
    mode_count: int | None = None
    h_exponent: int | None = None
    tau_exponent: int | None = None
    probe_time: float | None = None
    base_time: float | None = None
    gap_exponents: tuple[int, ...] | None = None


def _parse_bool(raw: str) -> bool:
    lowered = raw.lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


def _parse_exponent(raw: str) -> int:
    value = int(raw)
    if not 1 <= value <= 20:
        raise ValueError(f"dyadic exponent must lie in [1, 20], got {value}")
    return value


def _parse_exponent_list(raw: str) -> tuple[int, ...]:
    items = [tok.strip() for tok in raw.split(",") if tok.strip()]
    if not items:
        raise ValueError("expected a comma-separated list of exponents")
    return tuple(_parse_exponent(tok) for tok in items)


def _parse_samples(raw: str) -> int:
    value = int(raw)
    if not 1 <= value <= 10 ** 6:
        raise ValueError(f"sample count must lie in [1, 10^6], got {value}")
    return value


def _parse_seed(raw: str) -> int:
    value = int(raw)
    if not 0 <= value < 2 ** 64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {value}")
    return value


def _parse_s(raw: str) -> float:
    value = float(raw)
    if not value > 0.5:
        raise ValueError(
            f"s must exceed 1/2 (trace-class noise admissibility), got {value}"
        )
    return value


def _parse_horizon(raw: str) -> float:
    value = float(raw)
    if not 0 < value <= 64:
        raise ValueError(f"T must lie in (0, 64], got {value}")
    return value


def _parse_time(raw: str) -> float:
    value = float(raw)
    if not 0 <= value <= 64:
        raise ValueError(f"time must lie in [0, 64], got {value}")
    return value


def _parse_workers(raw: str) -> int:
    value = int(raw)
    if not 1 <= value <= 256:
        raise ValueError(f"worker count must lie in [1, 256], got {value}")
    return value


def _parse_modes(raw: str) -> int:
    value = int(raw)
    if not 1 <= value <= 2 ** 20:
        raise ValueError(f"mode count must lie in [1, 2^20], got {value}")
    return value


def _parse_init(raw: str) -> str:
    harness.initial_modal_coeffs(raw)  # validates
    return raw


# key -> (value parser, help text); the single source of truth for --help,
# validation and the echo writer
_KEY_SPECS = {
    "command": (str, "one of " + ", ".join(COMMANDS)),
    "s": (_parse_s, "covariance decay exponent of Q = A^-s; requires s > 1/2"),
    "samples": (_parse_samples, "Monte Carlo sample count in [1, 10^6]"),
    "seed": (_parse_seed, "master seed (u64); sample i uses substream (seed, i)"),
    "T": (_parse_horizon, "terminal time (default 1)"),
    "init": (_parse_init,
             "initial condition: sin | zero | modal:c1,c2,... (default sin)"),
    "workers": (_parse_workers, "process count for sample-level parallelism"),
    "emit_plot": (_parse_bool, "also write plot.txt (default false)"),
    "out": (str, "output directory (default .)"),
    "trial_exponents": (_parse_exponent_list,
                        "dyadic trial resolutions, e.g. 2,3,4,5"),
    "h_ref_exponent": (_parse_exponent, "reference mesh: h_ref = 2^-e"),
    "tau_ref_exponent": (_parse_exponent, "reference step: tau_ref = 2^-e"),
    "modes": (_parse_modes,
              "noise modes K (default: interior nodes of the finest mesh)"),
    "h_exponent": (_parse_exponent, "simulate: mesh spacing h = 2^-e"),
    "tau_exponent": (_parse_exponent, "simulate: step size tau = 2^-e"),
    "probe_time": (_parse_time, "operator-check: evaluation time t"),
    "base_time": (_parse_time, "regularity: left endpoint u of the pairs"),
    "gap_exponents": (_parse_exponent_list,
                      "regularity: dyadic gaps t - u, e.g. 7,8,9,10"),
}

_COMMON_KEYS = ("command", "s", "samples", "seed", "T", "init", "workers",
                "emit_plot", "out")

_COMMAND_KEYS = {
    "converge-space": _COMMON_KEYS + ("trial_exponents", "h_ref_exponent",
                                      "tau_ref_exponent", "modes"),
    "converge-time": _COMMON_KEYS + ("trial_exponents", "h_ref_exponent",
                                     "tau_ref_exponent", "modes"),
    "simulate": _COMMON_KEYS + ("h_exponent", "tau_exponent", "modes"),
    "operator-check": _COMMON_KEYS + ("trial_exponents", "probe_time"),
    "regularity": _COMMON_KEYS + ("h_ref_exponent", "tau_ref_exponent",
                                  "modes", "base_time", "gap_exponents"),
}

_DEFAULTS = {
    "samples": 500,
    "seed": 42,
    "T": 1.0,
    "init": "sin",
    "workers": 1,
    "emit_plot": False,
    "out": ".",
    "h_ref_exponent": 7,
    "tau_ref_exponent": 12,
    "modes": None,
    "h_exponent": 8,
    "tau_exponent": 8,
    "probe_time": 0.1,
    "base_time": 0.5,
    "gap_exponents": (7, 8, 9, 10),
}

_COMMAND_TRIALS = {
    "converge-space": (2, 3, 4, 5),
    "converge-time": (3, 4, 5, 6),
    "operator-check": (3, 4, 5, 6),
}

_SIMULATE_DEFAULT_SAMPLES = 1
_OPERATOR_DEFAULT_S = 1.5005


def parse_config(text: str, command: str | None = None, seed: int | None = None,
                 samples: int | None = None, out: str | None = None) -> RunConfig:
    """Parse and validate flat key=value config text into a RunConfig.

    `command`, `seed`, `samples` and `out` mirror the CLI flags: a command
    given both ways must agree, and flag values override the file.  All
    defaults are materialized, so the result is the complete effective
    configuration.
    """
    values: dict[str, object] = {}
    lines: dict[str, int] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(
                f"line {lineno}: expected 'key = value', got {raw_line.strip()!r}"
            )
        key, raw_value = (part.strip() for part in line.split("=", 1))
        if key not in _KEY_SPECS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(
                f"line {lineno}: duplicate key {key!r} "
                f"(first set at line {lines[key]})"
            )
        parser = _KEY_SPECS[key][0]
        try:
            values[key] = parser(raw_value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: key {key!r}: {exc}") from exc
        lines[key] = lineno

    def fail(key: str, message: str):
        at = f"line {lines[key]}: " if key in lines else ""
        raise ConfigError(f"{at}key {key!r}: {message}")

    file_command = values.pop("command", None)
    if file_command is not None and file_command not in COMMANDS:
        fail("command", f"unknown command {file_command!r}")
    if command is not None and file_command is not None and command != file_command:
        fail("command", f"config says {file_command!r} but the command line "
                        f"says {command!r}")
    effective_command = command or file_command
    if effective_command is None:
        raise ConfigError("missing required key 'command'")

    allowed = set(_COMMAND_KEYS[effective_command])
    for key in values:
        if key not in allowed:
            fail(key, f"not a valid key for command {effective_command!r}")

    if seed is not None:
        values["seed"] = seed
    if samples is not None:
        values["samples"] = samples
    if out is not None:
        values["out"] = out

    def pick(key: str, default):
        return values.get(key, default)

    if "s" not in values:
        if effective_command == "operator-check":
            values["s"] = _OPERATOR_DEFAULT_S
        else:
            raise ConfigError("missing required key 's'")

    default_samples = (_SIMULATE_DEFAULT_SAMPLES
                       if effective_command == "simulate"
                       else _DEFAULTS["samples"])
    cfg = RunConfig(
        command=effective_command,
        s=values["s"],
        samples=pick("samples", default_samples),
        seed=pick("seed", _DEFAULTS["seed"]),
        horizon=pick("T", _DEFAULTS["T"]),
        init=pick("init", _DEFAULTS["init"]),
        workers=pick("workers", _DEFAULTS["workers"]),
        emit_plot=pick("emit_plot", _DEFAULTS["emit_plot"]),
        out=pick("out", _DEFAULTS["out"]),
    )
    if effective_command in ("converge-space", "converge-time"):
        cfg = replace(
            cfg,
            trial_exponents=pick("trial_exponents",
                                 _COMMAND_TRIALS[effective_command]),
            h_ref_exponent=pick("h_ref_exponent", _DEFAULTS["h_ref_exponent"]),
            tau_ref_exponent=pick("tau_ref_exponent",
                                  _DEFAULTS["tau_ref_exponent"]),
            mode_count=pick("modes", None),
        )
        ref = (cfg.h_ref_exponent if effective_command == "converge-space"
               else cfg.tau_ref_exponent)
        if max(cfg.trial_exponents) > ref:
            fail("trial_exponents",
                 f"trials {cfg.trial_exponents} must not be finer than the "
                 f"reference exponent {ref}")
    elif effective_command == "simulate":
        cfg = replace(cfg, h_exponent=pick("h_exponent",
                                           _DEFAULTS["h_exponent"]),
                      tau_exponent=pick("tau_exponent",
                                        _DEFAULTS["tau_exponent"]),
                      mode_count=pick("modes", None))
    elif effective_command == "operator-check":
        cfg = replace(cfg, trial_exponents=pick(
            "trial_exponents", _COMMAND_TRIALS["operator-check"]),
            probe_time=pick("probe_time", _DEFAULTS["probe_time"]))
    else:  # regularity
        cfg = replace(
            cfg,
            h_ref_exponent=pick("h_ref_exponent", _DEFAULTS["h_ref_exponent"]),
            tau_ref_exponent=pick("tau_ref_exponent",
                                  _DEFAULTS["tau_ref_exponent"]),
            mode_count=pick("modes", None),
            base_time=pick("base_time", _DEFAULTS["base_time"]),
            gap_exponents=pick("gap_exponents", _DEFAULTS["gap_exponents"]),
        )
        tau_ref = 2.0 ** (-cfg.tau_ref_exponent)
        frac = cfg.base_time / tau_ref
        if cfg.base_time <= 0 or abs(frac - round(frac)) > 1e-9:
            fail("base_time", f"{cfg.base_time} is not a positive whole "
                              f"number of reference steps 2^-{cfg.tau_ref_exponent}")
        if max(cfg.gap_exponents) > cfg.tau_ref_exponent:
            fail("gap_exponents", "gaps must be multiples of the reference step")
        if cfg.base_time + 2.0 ** (-min(cfg.gap_exponents)) > cfg.horizon + 1e-12:
            fail("gap_exponents", "base_time plus the largest gap exceeds T")

    step_exp = (cfg.tau_ref_exponent if cfg.tau_ref_exponent is not None
                else cfg.tau_exponent)
    if step_exp is not None:
        steps = cfg.horizon * 2.0 ** step_exp
        if abs(steps - round(steps)) > 1e-9 or round(steps) < 1:
            fail("T", f"T={cfg.horizon} is not a whole number of steps "
                      f"2^-{step_exp}")
    return cfg


def _echo_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


_ECHO_FIELDS = {
    "s": "s", "samples": "samples", "seed": "seed", "T": "horizon",
    "init": "init", "workers": "workers", "emit_plot": "emit_plot",
    "out": "out", "trial_exponents": "trial_exponents",
    "h_ref_exponent": "h_ref_exponent", "tau_ref_exponent": "tau_ref_exponent",
    "modes": "mode_count", "h_exponent": "h_exponent",
    "tau_exponent": "tau_exponent", "probe_time": "probe_time",
    "base_time": "base_time", "gap_exponents": "gap_exponents",
}


def echo_config(cfg: RunConfig) -> str:
    """Normalized key=value form of the effective config (round-trips)."""
    lines = ["# effective configuration (normalized)",
             f"command = {cfg.command}"]
    for key in _COMMAND_KEYS[cfg.command]:
        if key == "command":
            continue
        value = getattr(cfg, _ECHO_FIELDS[key])
        if value is None:
            continue
        lines.append(f"{key} = {_echo_value(value)}")
    return "\n".join(lines) + "\n"


def _study_config(cfg: RunConfig) -> harness.StudyConfig:
    axis = "space" if cfg.command == "converge-space" else "time"
    return harness.StudyConfig(
        axis=axis, s=cfg.s, trial_exponents=cfg.trial_exponents,
        ref_space_exponent=cfg.h_ref_exponent,
        ref_time_exponent=cfg.tau_ref_exponent, samples=cfg.samples,
        master_seed=cfg.seed, horizon=cfg.horizon, init=cfg.init,
        mode_count=cfg.mode_count, workers=cfg.workers,
    )


def _plot_script(cfg: RunConfig) -> str:
    gamma = min(2.0, cfg.s + 0.5)
    return f"""\
#!/usr/bin/env python3
# log-log error plot for report.csv with guide slopes gamma and gamma/2
import csv
import matplotlib.pyplot as plt

rows = list(csv.DictReader(open("report.csv")))
res = [2.0 ** -int(r["resolution_exponent"]) for r in rows]
err = [float(r["ms_error"]) for r in rows]
bar = [float(r["std_err"]) for r in rows]

fig, ax = plt.subplots()
ax.errorbar(res, err, yerr=bar, marker="o", label="RMS error")
anchor = err[-1] if err[-1] > 0 else 1.0
for slope, style in (({gamma!r}, "--"), ({gamma / 2!r}, ":")):
    guide = [anchor * (x / res[-1]) ** slope for x in res]
    ax.plot(res, guide, style, label=f"slope {{slope:g}}")
ax.set_xscale("log", base=2)
ax.set_yscale("log")
ax.set_xlabel("resolution")
ax.set_ylabel("RMS error at T")
ax.legend()
fig.savefig("report.png", dpi=150)
print("wrote report.png")
"""


def _probe_csv(axis: str, s: float, exponents, errors, std_errs, samples_col,
               slope: float, seed: int) -> str:
    lines = [harness.CSV_HEADER]
    for e, err, se, n in zip(exponents, errors, std_errs, samples_col):
        lines.append(",".join([
            axis, harness.csv_number(s), str(int(e)), harness.csv_number(err),
            harness.csv_number(se), str(int(n)), harness.csv_number(slope), str(seed),
        ]))
    return "\n".join(lines) + "\n"


def _run_simulate(cfg: RunConfig) -> str:
    mesh = fem.UniformMesh(2 ** cfg.h_exponent - 1)
    tau = 2.0 ** (-cfg.tau_exponent)
    step_count = cfg.horizon / tau
    if abs(step_count - round(step_count)) > 1e-9:
        raise ConfigError(
            f"key 'tau_exponent': T={cfg.horizon} is not a whole number of "
            f"steps 2^-{cfg.tau_exponent}"
        )
    step_count = round(step_count)
    modes = cfg.mode_count or mesh.interior_count
    cov = CovarianceSpec(cfg.s)
    scheme = stepper.SchemeConfig(tau=tau)
    x0_row = fem.l2_project(harness.initial_modal_coeffs(cfg.init), mesh).coeffs

    lines = ["sample,x,value"]
    for start in range(0, cfg.samples, harness.CHUNK_SAMPLES):
        count = min(harness.CHUNK_SAMPLES, cfg.samples - start)
        loads = np.empty((count, step_count, mesh.interior_count))
        for i in range(count):
            path = noise.sample_path(noise.SeedSpec(cfg.seed, start + i), cov,
                                     modes, step_count, cfg.horizon)
            loads[i] = noise.path_loads(path, 1, mesh)
        x0 = np.broadcast_to(x0_row, (count, mesh.interior_count)).copy()
        result = stepper.integrate_ensemble(x0, loads, mesh, scheme)
        for i in range(count):
            for x, value in zip(mesh.nodes, result.states[i]):
                lines.append(f"{start + i},{harness.csv_number(x)},"
                             f"{harness.csv_number(value)}")
    return "\n".join(lines) + "\n"


def execute(cfg: RunConfig) -> int:
    """Run the configured command and write artifacts into the output dir."""
    out_dir = Path(cfg.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        print(f"error: output directory {cfg.out!r} is not writable: {exc}",
              file=sys.stderr)
        return 1

    if cfg.command in ("converge-space", "converge-time"):
        report = harness.run_experiment(_study_config(cfg))
        csv_text = harness.report_csv(report)
    elif cfg.command == "simulate":
        csv_text = _run_simulate(cfg)
    elif cfg.command == "operator-check":
        meshes = [fem.UniformMesh(2 ** e - 1) for e in cfg.trial_exponents]
        result = harness.operator_error_probe(
            meshes, [cfg.probe_time],
            harness.initial_modal_coeffs(cfg.init))
        csv_text = _probe_csv(
            "space", cfg.s, cfg.trial_exponents, result.errors[0],
            [0.0] * len(meshes), [0] * len(meshes), result.fits[0].slope,
            cfg.seed)
    else:  # regularity
        pairs = [(cfg.base_time, cfg.base_time + 2.0 ** (-e))
                 for e in cfg.gap_exponents]
        result = harness.regularity_probe(
            cfg.s, cfg.h_ref_exponent, cfg.tau_ref_exponent, cfg.samples,
            pairs, cfg.seed, horizon=cfg.horizon)
        csv_text = _probe_csv(
            "time", cfg.s, cfg.gap_exponents, result.rms, result.std_errs,
            [result.samples] * len(pairs), result.fit.slope, cfg.seed)

    (out_dir / "report.csv").write_text(csv_text)
    (out_dir / "config.echo").write_text(echo_config(cfg))
    if cfg.emit_plot:
        (out_dir / "plot.txt").write_text(_plot_script(cfg))
    return 0


def _build_parser() -> argparse.ArgumentParser:
    key_docs = "\n".join(f"  {key:<18} {doc}"
                         for key, (_, doc) in _KEY_SPECS.items())
    defaults = (
        "defaults: T = 1, init = sin, samples = 500 (simulate: 1), "
        "seed = 42, workers = 1,\n"
        "  converge-space: trial_exponents = 2,3,4,5, h_ref_exponent = 7, "
        "tau_ref_exponent = 12\n"
        "  converge-time:  trial_exponents = 3,4,5,6, h_ref_exponent = 7, "
        "tau_ref_exponent = 12\n"
        "  simulate: h_exponent = 8, tau_exponent = 8\n"
        "  operator-check: trial_exponents = 3,4,5,6, probe_time = 0.1\n"
        "  regularity: base_time = 0.5, gap_exponents = 7,8,9,10"
    )
    parser = argparse.ArgumentParser(
        prog="sacfem",
        description=("Finite element / backward Euler solver for the "
                     "stochastic Allen-Cahn equation with strong-convergence "
                     "studies."),
        epilog=f"config file keys:\n{key_docs}\n\n{defaults}\n",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "integrate sample paths and write endpoint nodal values",
        "converge-space": "coupled-path spatial convergence study",
        "converge-time": "coupled-path temporal convergence study",
        "operator-check": "deterministic semigroup error-operator decay probe",
        "regularity": "mean-square temporal increment (Hoelder) probe",
    }
    for name in COMMANDS:
        cmd = sub.add_parser(name, help=helps[name])
        cmd.add_argument("--config", required=True,
                         help="path to the key=value config file")
        cmd.add_argument("--seed", type=int, default=None,
                         help="override the master seed (u64)")
        cmd.add_argument("--samples", type=int, default=None,
                         help="override the Monte Carlo sample count")
        cmd.add_argument("--out", default=None,
                         help="override the output directory")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        print(f"error: cannot read config {args.config!r}: {exc}",
              file=sys.stderr)
        return 1
    try:
        if args.seed is not None:
            _parse_seed(str(args.seed))
        if args.samples is not None:
            _parse_samples(str(args.samples))
        cfg = parse_config(text, command=args.command, seed=args.seed,
                           samples=args.samples, out=args.out)
        return execute(cfg)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except stepper.StepFailureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
