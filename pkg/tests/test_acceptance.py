"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The summary lines are collected by ``conftest.py`` and written at the end
of the pytest run (section "acceptance criteria").
"""

import time
from pathlib import Path

import numpy as np
import pytest

from conftest import CRITERIA
from oracles import scalar_resolvent
from passive_lab import models_heat2d as heat
from passive_lab.cli import EXIT_FAIL, main
from passive_lab.models_phs import PHSDiscretization, audit_assumption61, timoshenko_preset
from passive_lab.node import SystemNode
from passive_lab.nonlinearity import check_incremental_sector, negated, saturation
from passive_lab.resolvent import (crandall_liggett_probe, resolvent_A_phi, resolvent_with_input,
                                   integrate, solve_output_equation)
from passive_lab.sim_verify import (contraction_check, incremental_estimate_check, linear_comparator_run,
                                    passivity_check, stability_check)
from passive_lab.trajectory import SineInput, StepInput

FIXTURES = Path(__file__).parent / "fixtures"
SCALAR = SystemNode(-1.0, 1.0, 1.0, 0.0)


def note(k, title, detail):
    CRITERIA[k] = {"title": title, "detail": detail, "failed": False}
    print(f"CRITERION {k} {title} {detail}")


@pytest.fixture(scope="module")
def timo():
    disc = PHSDiscretization(timoshenko_preset(N=50))
    return disc, disc.system_node()


@pytest.mark.criterion(1)
def test_criterion_1_timoshenko_audit():
    t0 = time.perf_counter()
    rep = audit_assumption61(timoshenko_preset(N=50))
    elapsed = time.perf_counter() - t0
    worst_xi = float(np.max(np.abs(rep.WB_Xi_WB)))
    worst_kernel = float(np.max(rep.kernel_residuals))
    note(1, "timoshenko_audit", f"max|WB Xi WB*|={worst_xi:.1e} rank={rep.rank_BC} rank_C={rep.rank_C} "
         f"kernel={worst_kernel:.1e} time={elapsed:.2f}s")
    assert worst_xi <= 1e-12
    assert rep.rank_BC == 6 and rep.rank_C == 2
    assert len(rep.kernel_residuals) > 0 and worst_kernel <= 1e-10
    assert rep.passed
    assert elapsed < 1.0


@pytest.mark.criterion(2)
def test_criterion_2_incremental_estimate(timo):
    t0 = time.perf_counter()
    margins = {}
    # scalar node: step versus sine input from different initial states
    t1 = integrate(SCALAR, saturation(), [2.0], StepInput(1.0, 0.8), T=10.0, h=1e-2)
    t2 = integrate(SCALAR, saturation(), [-1.0], SineInput(0.5, 1.5), T=10.0, h=1e-2)
    margins["scalar"] = incremental_estimate_check(t1, t2, 1.0)
    disc, node = timo
    x0 = disc.sample([lambda z: 3 * np.sin(np.pi * z)] * 4)
    t1 = integrate(node, saturation(2), x0, StepInput(0.0, [0.0, 0.0]), T=10.0, h=1e-3)
    t2 = integrate(node, saturation(2), 0.5 * x0, StepInput(1.0, [0.5, -0.3]), T=10.0, h=1e-3)
    margins["timoshenko"] = incremental_estimate_check(t1, t2, 1.0)
    spec = heat.heat_spec(Nx=16, Ny=16)
    hnode = heat.discretize(spec)
    t1 = integrate(hnode, saturation(), heat.bump_state(spec, 5.0), StepInput(0.0, 0.0), T=20.0, h=1e-2)
    t2 = integrate(hnode, saturation(), heat.constant_state(spec, 2.0), StepInput(2.0, 3.0), T=20.0, h=1e-2)
    margins["heat16"] = incremental_estimate_check(t1, t2, 1.0)
    elapsed = time.perf_counter() - t0
    note(2, "incremental_estimate", " ".join(f"{k}={r.worst_margin:.1e}" for k, r in margins.items())
         + f" time={elapsed:.1f}s")
    for rep in margins.values():
        assert rep.passed and rep.worst_margin >= -1e-6
    assert elapsed < 60


@pytest.mark.criterion(3)
def test_criterion_3_contractivity(timo):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    disc, tnode = timo
    spec = heat.heat_spec(Nx=16, Ny=16)
    models = {
        "scalar": (SCALAR, saturation(), lambda: 5 * rng.standard_normal(1), 10.0),
        "timoshenko": (tnode, saturation(2), lambda: 10 * rng.standard_normal(tnode.n), 5.0),
        "heat16": (heat.discretize(spec), saturation(), lambda: heat.random_state(spec, rng, 10.0), 5.0),
    }
    worst = {}
    for name, (node, phi, draw, T) in models.items():
        worst[name] = np.inf
        for _ in range(20):
            t1 = integrate(node, phi, draw(), T=T, h=1e-2)
            t2 = integrate(node, phi, draw(), T=T, h=1e-2)
            d = np.linalg.norm(t2.states - t1.states, axis=1)
            worst[name] = min(worst[name], float(np.min(d[0] + 1e-8 - d[1:])))
            assert contraction_check(t1, t2).passed
    elapsed = time.perf_counter() - t0
    note(3, "contractivity", " ".join(f"{k}={v:.1e}" for k, v in worst.items()) + f" time={elapsed:.1f}s")
    assert min(worst.values()) >= 0
    assert elapsed < 60


@pytest.mark.criterion(4)
def test_criterion_4_resolvent_oracle():
    t0 = time.perf_counter()
    x, v = resolvent_A_phi(SCALAR, saturation(), 2.0, [6.0])
    worked = max(abs(x[0] - 5 / 3), abs(v[0] - 5 / 3))
    assert worked <= 1e-10
    rng = np.random.default_rng(11)
    worst = 0.0
    for i in range(100):
        a = -rng.uniform(0.0, 3.0)
        b = rng.uniform(-2.0, 2.0)
        d = rng.uniform(0.0, 1.0)
        lam = rng.uniform(0.1, 5.0)
        x1 = rng.uniform(-10.0, 10.0)
        u0 = rng.uniform(-3.0, 3.0) if i % 2 else 0.0
        node = SystemNode(a, b, b, d)
        phi = saturation()
        x_ref, v_ref = scalar_resolvent(a, b, b, d, lam, x1, u0)
        x, v = resolvent_with_input(node, phi, lam, [x1], [u0]) if u0 else resolvent_A_phi(node, phi, lam, [x1])
        R = 1.0 / (lam - a)
        y = solve_output_equation([[b * R * b + d]], phi, [u0], [b * R * x1]).solution
        worst = max(worst, abs(x[0] - x_ref), abs(v[0] - v_ref), abs(y[0] - v_ref))
    elapsed = time.perf_counter() - t0
    note(4, "resolvent_oracle", f"worked_case_err={worked:.1e} worst_err={worst:.1e} time={elapsed:.2f}s")
    assert worst <= 1e-10
    assert elapsed < 5


@pytest.mark.criterion(5)
def test_criterion_5_heat_comparator():
    t0 = time.perf_counter()
    results = {}
    for N in (8, 16):
        results[f"{N}x{N}"] = heat.closed_loop_AK_report(heat.heat_spec(Nx=N, Ny=N))
    results["8x8_bump"] = heat.closed_loop_AK_report(
        heat.heat_spec(profile="gaussian-bump", center=1.0, width=0.3))
    zero = heat.closed_loop_AK_report(heat.heat_spec(profile="zero"))
    elapsed = time.perf_counter() - t0
    note(5, "heat_comparator", " ".join(f"{k}={a:.4f}" for k, (a, _) in results.items())
         + f" b0={zero[0]:.1e}/{zero[1]} time={elapsed:.2f}s")
    for abscissa, has_zero in results.values():
        assert abscissa < 0 and not has_zero
    assert abs(zero[0]) <= 1e-10 and zero[1]
    assert elapsed < 30


@pytest.mark.criterion(6)
def test_criterion_6_global_stability(timo):
    t0 = time.perf_counter()
    reports = {}
    spec = heat.heat_spec(Nx=16, Ny=16)
    hnode = heat.discretize(spec)
    x0 = heat.constant_state(spec, 50.0)
    reports["heat16"] = (float(np.linalg.norm(hnode.C @ x0)),
                         stability_check(integrate(hnode, saturation(), x0, T=200.0, h=1e-2), 1e-4))
    disc, tnode = timo
    x0 = 20 * np.random.default_rng(5).standard_normal(tnode.n)
    reports["timoshenko"] = (float(np.linalg.norm(tnode.C @ x0)),
                             stability_check(integrate(tnode, saturation(2), x0, T=200.0, h=1e-2), 1e-4))
    elapsed = time.perf_counter() - t0
    note(6, "global_stability", " ".join(
        f"{k}:|y0|={y0:.0f},ratio={r.details['final_ratio']:.1e},tail={max(r.details['tail_ratios']):.2f}"
        for k, (y0, r) in reports.items()) + f" time={elapsed:.1f}s")
    for y0, rep in reports.values():
        assert y0 >= 10
        assert rep.passed and rep.details["final_ratio"] <= 1e-4
        assert all(r < 0.9 for r in rep.details["tail_ratios"])
    assert elapsed < 300


@pytest.mark.criterion(7)
def test_criterion_7_small_signal(timo):
    t0 = time.perf_counter()
    disc, tnode = timo
    spec = heat.heat_spec(Nx=8, Ny=8)
    cases = {
        "timoshenko": (tnode, saturation(2), disc.sample([lambda z: 1e-3 * np.sin(np.pi * z)] * 4)),
        "heat8": (heat.discretize(spec), saturation(), heat.bump_state(spec, 0.5)),
        "scalar": (SCALAR, saturation(), np.array([0.9])),
    }
    gaps = {}
    for name, (node, phi, x0) in cases.items():
        nonlin = integrate(node, phi, x0, T=10.0, h=1e-2)
        lin = linear_comparator_run(node, x0, T=10.0, h=1e-2)
        assert np.max(np.linalg.norm(nonlin.outputs, axis=1)) < 1
        gaps[name] = float(np.max(np.abs(nonlin.states - lin.states)))
    elapsed = time.perf_counter() - t0
    note(7, "small_signal", " ".join(f"{k}={v:.1e}" for k, v in gaps.items()) + f" time={elapsed:.1f}s")
    assert max(gaps.values()) <= 1e-8
    assert elapsed < 10


@pytest.mark.criterion(8)
def test_criterion_8_time_convergence(timo):
    t0 = time.perf_counter()
    h_list = [1e-2, 5e-3, 2.5e-3]
    spec = heat.heat_spec(Nx=8, Ny=8)
    disc, tnode = timo
    probes = {
        "heat8": crandall_liggett_probe(heat.discretize(spec), saturation(), heat.bump_state(spec, 5.0), 1.0, h_list),
        "timoshenko": crandall_liggett_probe(tnode, saturation(2),
                                             disc.sample([lambda z: 3 * np.sin(np.pi * z)] * 4), 1.0, h_list),
        "scalar": crandall_liggett_probe(SCALAR, saturation(), [4.0], 1.0, h_list),
    }
    elapsed = time.perf_counter() - t0
    note(8, "time_convergence", " ".join(f"{k}={p.orders[0]:.3f}" for k, p in probes.items())
         + f" time={elapsed:.1f}s")
    for p in probes.values():
        assert len(p.orders) == 1 and abs(p.orders[0] - 1.0) <= 0.3
    assert elapsed < 60


@pytest.mark.criterion(9)
def test_criterion_9_negative_controls(tmp_path):
    bad = negated(saturation())
    mono = check_incremental_sector(bad, kappa=1.0)
    spec = heat.heat_spec(Nx=8, Ny=8)
    node = heat.discretize(spec)
    rng = np.random.default_rng(3)
    t1 = integrate(node, bad, heat.random_state(spec, rng, 0.01), T=2.0, h=1e-2)
    t2 = integrate(node, bad, heat.random_state(spec, rng, 0.01), T=2.0, h=1e-2)
    contraction = contraction_check(t1, t2)
    traj = integrate(SCALAR, saturation(), [3.0], T=1.0, h=1e-2)
    states = np.array(traj.states)
    states[50:] *= -1
    corrupted = passivity_check(type(traj)(traj.h, traj.times, states, traj.outputs, traj.inputs, traj.phis,
                                           traj.residuals, traj.node, traj.phi))
    inflated = check_incremental_sector(saturation(), kappa=10.0)
    codes = {f: main(["run", "--config", str(FIXTURES / f), "--out", str(tmp_path / f), "--quiet"])
             for f in ("negated_phi.json", "corrupted.json", "kappa_inflated.json")}
    note(9, "negative_controls", f"monotonicity={mono.status} contraction={contraction.status} "
         f"passivity={corrupted.status}@{corrupted.index} kappa10={inflated.status} "
         f"exits={sorted(set(codes.values()))}")
    assert mono.failed and contraction.failed and corrupted.failed and inflated.failed
    assert all(c == EXIT_FAIL for c in codes.values())


@pytest.mark.criterion(10)
def test_criterion_10_determinism(tmp_path):
    identical = []
    for f in ("heat_default.json", "negated_phi.json", "timoshenko_damped.json"):
        for d in ("a", "b"):
            main(["run", "--config", str(FIXTURES / f), "--out", str(tmp_path / d / f), "--quiet", "--seed", "9"])
        for name in ("trajectory.csv", "report.txt"):
            a = (tmp_path / "a" / f / name).read_bytes()
            identical.append(a == (tmp_path / "b" / f / name).read_bytes() and len(a) > 0)
    note(10, "determinism", f"identical_files={sum(identical)}/{len(identical)}")
    assert all(identical)
