"""Scenario runner: ``passive-lab {run,sweep,audit,spectrum} --config scenario.json``.

A scenario is a JSON object; see ``README.md`` for the schema.  Exit codes:
0 when every requested check passes, 2 when any check fails, 3 when a
check was skipped because its hypothesis is not met (and none failed),
1 on malformed input.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import models_heat2d as heat
from . import models_phs as phs
from . import nonlinearity as nl
from .node import (SystemNode, coercivity_margin, impedance_passivity_margin,
                   negative_feedback_closed_loop, read_matrix, spectral_abscissa)
from .report import FAIL, PASS, SKIPPED, VerificationReport
from .resolvent import IntegrationError, integrate
from .sim_verify import contraction_check, incremental_estimate_check, passivity_check, stability_check
from .trajectory import SampledInput, SineInput, StepInput, Trajectory, ZeroInput

__all__ = [
    "ConfigError",
    "Scenario",
    "load_config",
    "build_scenario",
    "run_scenario",
    "run",
    "sweep",
    "main",
    "EXIT_OK",
    "EXIT_INPUT",
    "EXIT_FAIL",
    "EXIT_SKIPPED",
]

EXIT_OK, EXIT_INPUT, EXIT_FAIL, EXIT_SKIPPED = 0, 1, 2, 3
KNOWN_CHECKS = ("passivity", "incremental", "contraction", "stability", "sector", "replay")
DEFAULT_CHECKS = ("passivity", "contraction", "stability")


class ConfigError(ValueError):
    """Malformed scenario; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"config key {key!r}: {message}")
        self.key = key


def _get(cfg: dict, key: str, default=None, path: str = ""):
    if not isinstance(cfg, dict):
        raise ConfigError(path or key, "expected an object")
    return cfg.get(key, default)


def _number(cfg: dict, key: str, default=None, path: str = "", positive: bool = False) -> float:
    name = f"{path}.{key}" if path else key
    value = _get(cfg, key, default, path)
    if value is None:
        raise ConfigError(name, "missing")
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(name, f"expected a finite number, got {value!r}")
    if positive and not value > 0:
        raise ConfigError(name, f"must be positive, got {value!r}")
    return float(value)


def _integer(cfg: dict, key: str, default=None, path: str = "", minimum: int = 1) -> int:
    name = f"{path}.{key}" if path else key
    value = _get(cfg, key, default, path)
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(name, f"expected an integer >= {minimum}, got {value!r}")
    return value


def load_config(path) -> dict:
    path = Path(path)
    try:
        cfg = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError("--config", f"file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"invalid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("--config", "top level must be an object")
    cfg.setdefault("_base", str(path.resolve().parent))
    cfg.setdefault("_source", path.name)
    return cfg


# -- scenario assembly ---------------------------------------------------------

@dataclass
class Scenario:
    name: str
    node: SystemNode
    phi: nl.MonotoneMap
    x0: np.ndarray
    input: Any
    T: float
    h: float
    checks: tuple
    seed: int
    energy: Callable[[np.ndarray], float]
    header: list = field(default_factory=list)
    pair_x0: np.ndarray | None = None
    pair_input: Any = None
    epsilon: float = 1e-4
    corrupt: dict | None = None
    model: Any = None


def _resolve(base: str, p: str, key: str) -> Path:
    path = Path(p)
    if not path.is_absolute():
        path = Path(base) / path
    if not path.exists():
        raise ConfigError(key, f"file not found: {p}")
    return path


def _matrix_entry(cfg: dict, key: str, base: str, path: str):
    value = _get(cfg, key, None, path)
    name = f"{path}.{key}"
    if value is None:
        raise ConfigError(name, "missing")
    if isinstance(value, str):
        try:
            return read_matrix(_resolve(base, value, name))
        except ValueError as exc:
            raise ConfigError(name, str(exc)) from exc
    try:
        arr = np.array(value, dtype=complex)
    except (TypeError, ValueError) as exc:
        raise ConfigError(name, "expected a file name or a nested list of numbers") from exc
    return arr.real.copy() if np.all(arr.imag == 0) else arr


def _coefficient(cfg, path: str):
    if cfg is None:
        return 1.0
    if isinstance(cfg, (int, float)) and not isinstance(cfg, bool):
        return float(cfg)
    if not isinstance(cfg, dict):
        raise ConfigError(path, "expected a number or a coefficient object")
    params = {k: v for k, v in cfg.items() if k != "kind"}
    try:
        return phs.coefficient(cfg.get("kind", "constant"), **params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from exc


def _build_model(cfg: dict, base: str):
    """Returns ``(node, energy, header_lines, model_object)``."""
    model = _get(cfg, "model", None)
    if model is None:
        raise ConfigError("model", "missing")
    kind = _get(model, "type", None, "model")
    try:
        if kind == "heat2d":
            Lx = _number(model, "Lx", 1.0, "model", positive=True)
            Ly = _number(model, "Ly", 1.0, "model", positive=True)
            Nx = _integer(model, "Nx", 8, "model", minimum=4)
            Ny = _integer(model, "Ny", 8, "model", minimum=4)
            bcfg = dict(_get(model, "b", {"profile": "uniform-edge"}, "model"))
            profile = bcfg.pop("profile", "uniform-edge")
            try:
                b = heat.boundary_profile(profile, Lx, Ly, Nx, Ny, **bcfg)
            except (TypeError, ValueError) as exc:
                raise ConfigError("model.b", str(exc)) from exc
            spec = heat.HeatSpec(Lx, Ly, Nx, Ny, b)
            node = heat.discretize(spec)
            abscissa, zero = heat.closed_loop_AK_report(spec)
            header = [f"model heat2d Lx={Lx:g} Ly={Ly:g} Nx={Nx} Ny={Ny} b={profile} "
                      f"int_b={spec.integral_b:.6e}",
                      f"spectrum abscissa={abscissa:.6e} zero_in_spectrum={zero}"]
            return node, lambda z: 0.5 * float(np.linalg.norm(z) ** 2), header, spec
        if kind in ("timoshenko", "transport"):
            N = _integer(model, "N", 50, "model", minimum=4)
            if kind == "timoshenko":
                coeffs = {k: _coefficient(_get(model, k, None, "model"), f"model.{k}")
                          for k in ("rho", "Irho", "EI", "Kshear")}
                spec = phs.timoshenko_preset(N=N, a=_number(model, "a", 0.0, "model"),
                                             b=_number(model, "b", 1.0, "model"), **coeffs)
            else:
                spec = phs.transport_preset(N=N, H=_coefficient(_get(model, "H", None, "model"), "model.H"))
            audit = phs.audit_assumption61(spec, _integer(model, "audit_samples", 50, "model"))
            if not (audit.part_a and audit.part_b):
                raise ConfigError("model", "boundary conditions fail the passivity audit")
            disc = phs.PHSDiscretization(spec, _number(model, "dissipation", 1.0, "model"))
            node = disc.system_node()

            def energy(z, disc=disc, spec=spec):
                return phs.timoshenko_energy(disc.to_physical(z), spec)

            header = [f"model {kind} N={N} nodes={disc.n_nodes} dissipation={disc.dissipation:g}"]
            header += audit.lines()
            return node, energy, header, disc
        if kind == "custom":
            A = _matrix_entry(model, "A", base, "model")
            B = _matrix_entry(model, "B", base, "model")
            C = _matrix_entry(model, "C", base, "model")
            D = _matrix_entry(model, "D", base, "model") if "D" in model else np.zeros((B.shape[1],) * 2)
            try:
                node = SystemNode(A, B, C, D)
            except ValueError as exc:
                raise ConfigError("model", str(exc)) from exc
            margin = impedance_passivity_margin(node)
            header = [f"model custom n={node.n} m={node.m} lmi_margin={margin:.6e}"]
            return node, lambda x: 0.5 * float(np.linalg.norm(x) ** 2), header, None
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError("model", str(exc)) from exc
    raise ConfigError("model.type", f"unknown model {kind!r} (heat2d, timoshenko, transport, custom)")


def _build_phi(cfg, m: int, path: str = "nonlinearity") -> nl.MonotoneMap:
    if cfg is None:
        cfg = {"kind": "saturation"}
    if not isinstance(cfg, dict):
        raise ConfigError(path, "expected an object")
    kind = cfg.get("kind", "saturation")
    if kind == "saturation":
        phi = nl.saturation(m, _number(cfg, "bound", 1.0, path, positive=True))
    elif kind == "linear_gain":
        phi = nl.linear_gain(_number(cfg, "gain", 1.0, path), m)
    elif kind == "zero":
        phi = nl.zero_map(m)
    elif kind == "deadzone":
        phi = nl.deadzone(_number(cfg, "width", 1.0, path, positive=True), m)
    elif kind == "negated":
        phi = nl.negated(_build_phi(cfg.get("of", {"kind": "saturation"}), m, f"{path}.of"))
    elif kind == "componentwise":
        parts = cfg.get("parts")
        if not isinstance(parts, list) or not parts:
            raise ConfigError(f"{path}.parts", "expected a nonempty list")
        dims = [int(p.get("dim", 1)) if isinstance(p, dict) else 1 for p in parts]
        if sum(dims) != m:
            raise ConfigError(f"{path}.parts", f"part dimensions sum to {sum(dims)}, node has m={m}")
        built = [_build_phi(p, d, f"{path}.parts[{i}]") for i, (p, d) in enumerate(zip(parts, dims))]
        try:
            phi = nl.componentwise(built)
        except ValueError as exc:
            raise ConfigError(f"{path}.parts", str(exc)) from exc
    else:
        raise ConfigError(f"{path}.kind", f"unknown nonlinearity {kind!r}")
    if "kappa" in cfg:
        phi.kappa = _number(cfg, "kappa", None, path)
        if phi.kappa < 0:
            raise ConfigError(f"{path}.kappa", "must be nonnegative")
    return phi


def _build_initial(cfg, n: int, model, rng: np.random.Generator, base: str, path: str) -> np.ndarray:
    if cfg is None:
        cfg = {"kind": "smooth"}
    if not isinstance(cfg, dict):
        raise ConfigError(path, "expected an object")
    kind = cfg.get("kind", "smooth")
    amp = _number(cfg, "amplitude", 1.0, path) if kind != "constant" else None
    if kind == "zero":
        return np.zeros(n)
    if kind == "constant":
        value = _number(cfg, "value", 1.0, path)
        if isinstance(model, heat.HeatSpec):
            return heat.constant_state(model, value)
        if isinstance(model, phs.PHSDiscretization):
            return model.to_state(np.full((model.n_nodes, model.spec.n), value))
        return np.full(n, value)
    if kind == "random":
        return amp * rng.standard_normal(n) * (model.scale if isinstance(model, heat.HeatSpec) else 1.0)
    if kind == "smooth":
        if isinstance(model, heat.HeatSpec):
            return heat.bump_state(model, amp)
        if isinstance(model, phs.PHSDiscretization):
            spec = model.spec
            s = (model.zeta - spec.a) / (spec.b - spec.a)
            x = np.stack([amp * np.sin(np.pi * (i + 1) * s) for i in range(spec.n)], axis=1)
            return model.to_state(x)
        return amp * np.cos(np.pi * np.arange(n) / max(n, 1))
    if kind == "file":
        name = f"{path}.path"
        try:
            x = read_matrix(_resolve(base, _get(cfg, "path", "", path), name)).ravel()
        except ValueError as exc:
            raise ConfigError(name, str(exc)) from exc
        if x.size != n:
            raise ConfigError(name, f"initial state has {x.size} entries, node has n={n}")
        return x
    raise ConfigError(f"{path}.kind", f"unknown initial state {kind!r}")


def _build_input(cfg, m: int, base: str, path: str):
    if cfg is None:
        return ZeroInput()
    if not isinstance(cfg, dict):
        raise ConfigError(path, "expected an object")
    kind = cfg.get("kind", "zero")
    if kind == "zero":
        return ZeroInput()
    if kind == "step":
        value = np.asarray(_get(cfg, "value", 1.0, path), dtype=float)
        if value.size not in (1, m):
            raise ConfigError(f"{path}.value", f"expected 1 or {m} components")
        return StepInput(_number(cfg, "t0", 0.0, path), value)
    if kind == "sine":
        amp = np.asarray(_get(cfg, "amp", 1.0, path), dtype=float)
        if amp.size not in (1, m):
            raise ConfigError(f"{path}.amp", f"expected 1 or {m} components")
        return SineInput(_number(cfg, "freq", 1.0, path), amp, _number(cfg, "phase", 0.0, path))
    if kind == "file":
        name = f"{path}.path"
        try:
            data = read_matrix(_resolve(base, _get(cfg, "path", "", path), name))
        except ValueError as exc:
            raise ConfigError(name, str(exc)) from exc
        if data.shape[1] != m + 1:
            raise ConfigError(name, f"expected columns t, u_1..u_{m}")
        try:
            return SampledInput(data[:, 0].real, data[:, 1:])
        except ValueError as exc:
            raise ConfigError(name, str(exc)) from exc
    raise ConfigError(f"{path}.kind", f"unknown input {kind!r}")


def build_scenario(cfg: dict, seed: int | None = None) -> Scenario:
    base = cfg.get("_base", ".")
    seed = int(cfg.get("seed", 0)) if seed is None else int(seed)
    T = _number(cfg, "T", 10.0, positive=True)
    h = _number(cfg, "h", 1e-2, positive=True)
    if h > T:
        raise ConfigError("h", "step exceeds the horizon T")
    checks = cfg.get("checks", list(DEFAULT_CHECKS))
    if not isinstance(checks, list) or any(c not in KNOWN_CHECKS for c in checks):
        raise ConfigError("checks", f"expected a list drawn from {list(KNOWN_CHECKS)}")
    node, energy, header, model = _build_model(cfg, base)
    phi = _build_phi(cfg.get("nonlinearity"), node.m)
    rng = np.random.default_rng(seed)
    x0 = _build_initial(cfg.get("initial"), node.n, model, rng, base, "initial")
    u = _build_input(cfg.get("input"), node.m, base, "input")
    pair_cfg = cfg.get("pair", {})
    if not isinstance(pair_cfg, dict):
        raise ConfigError("pair", "expected an object")
    pair_x0 = pair_input = None
    if "incremental" in checks or "contraction" in checks:
        pair_x0 = _build_initial(pair_cfg.get("initial", {"kind": "random"}), node.n, model, rng,
                                 base, "pair.initial")
        pair_input = (_build_input(pair_cfg["input"], node.m, base, "pair.input")
                      if "input" in pair_cfg else u)
        if "contraction" in checks and not (getattr(u, "is_zero", False)
                                            and getattr(pair_input, "is_zero", False)):
            raise ConfigError("checks", "contraction requires zero input in both trajectories")
    if "stability" in checks and not getattr(u, "is_zero", False):
        raise ConfigError("checks", "stability requires zero input")
    corrupt = cfg.get("corrupt")
    if corrupt is not None:
        if not isinstance(corrupt, dict):
            raise ConfigError("corrupt", "expected an object")
        _integer(corrupt, "step", None, "corrupt", minimum=1)
        _number(corrupt, "factor", -1.0, "corrupt")
    name = str(cfg.get("name", Path(cfg.get("_source", "scenario")).stem))
    return Scenario(name, node, phi, x0, u, T, h, tuple(checks), seed, energy, header,
                    pair_x0, pair_input, _number(cfg, "epsilon", 1e-4, positive=True), corrupt, model)


# -- execution -----------------------------------------------------------------

def _corrupted(traj: Trajectory, step: int, factor: float) -> Trajectory:
    states = np.array(traj.states)
    step = min(step, len(states) - 1)
    states[step:] *= factor
    return Trajectory(traj.h, traj.times, states, traj.outputs, traj.inputs, traj.phis,
                      traj.residuals, traj.node, traj.phi, traj.label + ":corrupted")


def _simulate(sc: Scenario, x0, u, label: str):
    try:
        return integrate(sc.node, sc.phi, x0, u, T=sc.T, h=sc.h, label=label), None
    except IntegrationError as exc:
        rep = VerificationReport("solver", FAIL, math.nan, exc.trajectory.n_steps,
                                 note=f"{label}_output_equation_did_not_converge")
        return exc.trajectory, rep


def run_scenario(sc: Scenario) -> tuple[Trajectory, list[VerificationReport]]:
    traj, failure = _simulate(sc, sc.x0, sc.input, "main")
    reports = [failure] if failure else []
    if sc.corrupt is not None and traj.n_steps:
        traj = _corrupted(traj, int(sc.corrupt["step"]), float(sc.corrupt.get("factor", -1.0)))
    pair = None
    if sc.pair_x0 is not None and failure is None:
        pair, pfail = _simulate(sc, sc.pair_x0, sc.pair_input, "pair")
        if pfail:
            reports.append(pfail)
            pair = None
    for check in sc.checks:
        if check == "sector":
            reports.append(nl.check_incremental_sector(sc.phi, seed=sc.seed))
            if sc.phi.sector is not None:
                reports.append(nl.check_stability_sector(sc.phi, seed=sc.seed))
        elif check == "passivity" and traj.n_steps:
            reports.append(passivity_check(traj))
        elif check == "replay" and traj.n_steps:
            defect = traj.replay_defect()
            scale = 1e-8 * (1 + np.max(traj.state_norms()))
            k = int(np.argmax(defect))
            reports.append(VerificationReport("replay", PASS if defect[k] <= scale else FAIL,
                                              float(-defect[k]), k, 1e-8))
        elif check == "incremental" and pair is not None:
            kappa = sc.phi.kappa
            if kappa is None or kappa <= 0:
                reports.append(VerificationReport("incremental", SKIPPED, math.nan,
                                                  note="hypothesis_not_met:no_declared_kappa"))
            else:
                reports.append(incremental_estimate_check(traj, pair, kappa))
        elif check == "contraction" and pair is not None:
            reports.append(contraction_check(traj, pair))
        elif check == "stability" and failure is None:
            reports.append(stability_check(traj, sc.epsilon, node=sc.node))
    return traj, reports


def exit_code(reports) -> int:
    if any(r.failed for r in reports):
        return EXIT_FAIL
    if any(r.skipped for r in reports):
        return EXIT_SKIPPED
    return EXIT_OK


def _fmt(v) -> str:
    v = complex(v)
    if v.imag == 0:
        return repr(float(v.real))
    return f"{float(v.real)!r}{float(v.imag):+.17g}j"


def trajectory_csv(traj: Trajectory, energy: Callable) -> str:
    """Rows ``t_k`` for ``k = 0..N``; step quantities on row ``k`` belong to the step ending at ``t_k``."""
    m = traj.outputs.shape[1] if traj.outputs.ndim == 2 else traj.node.m
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "norm_x", "energy"] + [f"y{i + 1}" for i in range(m)]
               + [f"u{i + 1}" for i in range(m)] + [f"phi{i + 1}" for i in range(m)] + ["residual"])
    norms = traj.state_norms()
    for k in range(len(traj.states)):
        row = [repr(float(traj.times[k])), repr(float(norms[k])), repr(energy(traj.states[k]))]
        if k == 0:
            row += [""] * (3 * m + 1)
        else:
            j = k - 1
            row += [_fmt(v) for v in traj.outputs[j]] + [_fmt(v) for v in traj.inputs[j]]
            row += [_fmt(v) for v in traj.phis[j]] + [repr(float(traj.residuals[j]))]
        w.writerow(row)
    return buf.getvalue()


def plot_script(m: int) -> str:
    lines = [
        "# gnuplot script for trajectory.csv",
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set terminal pngcairo size 900,700",
        "set output 'trajectory.png'",
        "set multiplot layout 2,1",
        "set logscale y",
        "set xlabel 't'",
        "plot 'trajectory.csv' using 1:2 with lines",
        "unset logscale y",
        "plot " + ", ".join(f"'trajectory.csv' using 1:{4 + i} with lines" for i in range(m))
        + ", " + ", ".join(f"'trajectory.csv' using 1:{4 + 2 * m + i} with lines" for i in range(m)),
        "unset multiplot",
    ]
    return "\n".join(lines) + "\n"


def report_text(sc: Scenario, traj: Trajectory, reports) -> str:
    norms = traj.state_norms()
    lines = [f"# scenario {sc.name} seed={sc.seed}", *sc.header,
             f"nonlinearity {sc.phi.describe()} kappa={sc.phi.kappa}",
             f"run T={sc.T:g} h={sc.h:g} steps={traj.n_steps} "
             f"norm_x0={norms[0]:.6e} norm_xN={norms[-1]:.6e}"]
    lines += [r.to_line() for r in reports]
    lines.append(f"EXIT {exit_code(reports)}")
    return "\n".join(lines) + "\n"


def _summary(sc: Scenario, traj: Trajectory, reports) -> dict:
    try:
        abscissa = spectral_abscissa(negative_feedback_closed_loop(sc.node))
    except ValueError:
        abscissa = math.nan
    return {"final_norm": float(traj.state_norms()[-1]), "abscissa": abscissa,
            "margins": {r.name: r.worst_margin for r in reports},
            "final_state": np.array(traj.states[-1]), "exit": exit_code(reports)}


def execute(cfg: dict, out: Path, seed: int | None = None, quiet: bool = True) -> tuple[int, dict]:
    sc = build_scenario(cfg, seed)
    traj, reports = run_scenario(sc)
    out.mkdir(parents=True, exist_ok=True)
    (out / "trajectory.csv").write_text(trajectory_csv(traj, sc.energy))
    text = report_text(sc, traj, reports)
    (out / "report.txt").write_text(text)
    (out / "plot.gp").write_text(plot_script(sc.node.m))
    if not quiet:
        sys.stdout.write(text)
    return exit_code(reports), _summary(sc, traj, reports)


def _out_dir(args, cfg: dict) -> Path:
    return Path(args.out or cfg.get("out") or "out")


def run(args) -> int:
    cfg = load_config(args.config)
    code, _ = execute(cfg, _out_dir(args, cfg), args.seed, args.quiet)
    return code


def _set_path(cfg: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    target = cfg
    for k in keys[:-1]:
        if not isinstance(target.get(k), dict):
            raise ConfigError(dotted, "does not name a numeric entry in the config")
        target = target[k]
    current = target.get(keys[-1], None)
    if current is not None and (isinstance(current, bool) or not isinstance(current, (int, float))):
        raise ConfigError(dotted, "does not name a numeric entry in the config")
    target[keys[-1]] = int(value) if isinstance(current, int) and float(value).is_integer() else value


def _sweep_one(job):
    cfg, out, seed = job
    try:
        code, summary = execute(cfg, Path(out), seed, quiet=True)
    except ConfigError as exc:
        return EXIT_INPUT, {"error": str(exc)}
    return code, summary


def sweep(args) -> int:
    cfg = load_config(args.config)
    raw = [v for v in (args.values or "").replace(" ", "").split(",") if v]
    if not raw:
        raise ConfigError("--values", "empty value list")
    try:
        values = [float(v) for v in raw]
    except ValueError as exc:
        raise ConfigError("--values", f"non-numeric value in {args.values!r}") from exc
    out = _out_dir(args, cfg)
    jobs = []
    for i, v in enumerate(values):
        c = copy.deepcopy(cfg)
        _set_path(c, args.param, v)
        build_scenario(c, args.seed)  # validate before fanning out
        jobs.append((c, str(out / f"{i:03d}_{args.param}={v:g}"), args.seed))
    workers = int(os.environ.get("PASSIVE_LAB_THREADS", "0") or 0) or (os.cpu_count() or 1)
    workers = max(1, min(workers, len(jobs)))
    if workers == 1:
        results = [_sweep_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_one, jobs))
    names = []
    for _, s in results:
        for k in s.get("margins", {}):
            if k not in names:
                names.append(k)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([args.param, "exit", "final_norm", "abscissa"] + [f"margin_{k}" for k in names]
               + ["diff_prev", "order"])
    prev_state = prev_diff = prev_v = None
    for v, (code, s) in zip(values, results):
        state = s.get("final_state")
        diff = order = math.nan
        if state is not None and prev_state is not None and state.shape == prev_state.shape:
            diff = float(np.linalg.norm(state - prev_state))
            if prev_diff is not None and prev_diff > 0 and diff > 0 and prev_v != v:
                order = math.log(prev_diff / diff) / math.log(abs(prev_v / v))
        w.writerow([repr(v), code, repr(s.get("final_norm", math.nan)), repr(s.get("abscissa", math.nan))]
                   + [repr(s.get("margins", {}).get(k, math.nan)) for k in names]
                   + [repr(diff), repr(order)])
        prev_diff = diff if not math.isnan(diff) else None
        prev_state, prev_v = state, v
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.csv").write_text(buf.getvalue())
    if not args.quiet:
        sys.stdout.write(buf.getvalue())
    codes = [c for c, _ in results]
    for c in (EXIT_INPUT, EXIT_FAIL, EXIT_SKIPPED):
        if c in codes:
            return c
    return EXIT_OK


def audit(args) -> int:
    cfg = load_config(args.config)
    kind = _get(cfg.get("model") or {}, "type", None, "model")
    if kind not in ("timoshenko", "transport"):
        raise ConfigError("model.type", "audit needs a port-Hamiltonian model (timoshenko, transport)")
    _, _, header, disc = _build_model(cfg, cfg.get("_base", "."))
    report = phs.audit_assumption61(disc.spec, int(cfg["model"].get("audit_samples", 50)))
    text = "\n".join(header) + "\n"
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    (out / "audit.txt").write_text(text)
    if not args.quiet:
        sys.stdout.write(text)
    return EXIT_OK if report.passed else EXIT_FAIL


def spectrum(args) -> int:
    cfg = load_config(args.config)
    node, _, header, _ = _build_model(cfg, cfg.get("_base", "."))
    AK = negative_feedback_closed_loop(node)
    eigs = np.linalg.eigvals(AK)
    abscissa = spectral_abscissa(AK)
    lines = header + [
        f"n={node.n} m={node.m}",
        f"lmi_margin={impedance_passivity_margin(node):.6e}",
        f"coercivity_margin(1)={coercivity_margin(node, 1.0):.6e}",
        f"AK_abscissa={abscissa:.6e}",
        f"AK_zero_in_spectrum={bool(np.min(np.abs(eigs)) < 1e-10)}",
    ]
    text = "\n".join(lines) + "\n"
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    (out / "spectrum.txt").write_text(text)
    if not args.quiet:
        sys.stdout.write(text)
    return EXIT_OK


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="passive-lab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="verb", required=True)
    for verb in ("run", "sweep", "audit", "spectrum"):
        s = sub.add_parser(verb)
        s.add_argument("--config", required=True, help="scenario JSON file")
        s.add_argument("--out", help="output directory (overrides the config)")
        s.add_argument("--seed", type=int, help="random seed (overrides the config)")
        s.add_argument("--quiet", action="store_true", help="do not echo reports")
        if verb == "sweep":
            s.add_argument("--param", required=True, help="dotted config key, e.g. h or model.Nx")
            s.add_argument("--values", default="", help="comma-separated values")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    handler = {"run": run, "sweep": sweep, "audit": audit, "spectrum": spectrum}[args.verb]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"passive-lab: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
