"""End-to-end acceptance criteria.

Each test records one ``CRITERION k: PASS|FAIL ...`` line, printed in the
terminal summary, and asserts at the stated tolerance.
"""

import time

import numpy as np
from scipy.linalg import expm

from optreg.costs import LocalCost
from optreg.errors import NonFiniteState
from optreg.generator import GeneratorState, solve_allocation_oracle
from optreg.graph import laplacian
from optreg.sim import instantiate, integrate, integrate_generator, load_bundled, run_scenario, synthesize_scenario
from optreg.sim.run import build_closed_loop, fit_decay_rate
from optreg.synthesis import LAWS, synthesize_agent

BUNDLED = ("example1", "example2", "example3")


def _record(log, k, ok, detail):
    line = f"CRITERION {k}: {'PASS' if ok else 'FAIL'}  {detail}"
    log.append(line)
    print(line)
    return ok


def _at(rec, t):
    return int(np.argmin(np.abs(rec.times - t)))


def test_criterion_1_example2_inventory(acceptance_log):
    s = load_bundled("example2")
    t0 = time.perf_counter()
    (res,) = run_scenario(s)
    elapsed = time.perf_counter() - t0
    target = np.array([4.57, 2.41, 1.69, 1.33])
    y_star, theta = solve_allocation_oracle(res.instance.problem)
    dev = float(np.max(np.abs(res.record.y[-1] - target)))
    ok = dev <= 0.01 and elapsed < 10.0 and abs(theta - 0.864) < 1e-6
    _record(acceptance_log, 1, ok, f"max|y(100)-reference|={dev:.2e}, theta*={theta:.6f}, runtime={elapsed:.2f}s")
    assert np.allclose(y_star, target, atol=1e-8)
    assert ok


def test_criterion_2_example1_rendezvous(acceptance_log):
    s = load_bundled("example1")
    gains = synthesize_scenario(s)
    worst, slowest = 0.0, 0.0
    for seed in range(20):
        t0 = time.perf_counter()
        for inst in instantiate(s, seed):
            rec = integrate(s, gains, inst)
            mean0 = np.mean([float(a.plant.C[0] @ x) for a, x in zip(s.agents, inst.x0)])
            worst = max(worst, float(np.max(np.abs(rec.y[_at(rec, 30.0)] - mean0))))
        slowest = max(slowest, time.perf_counter() - t0)
    ok = worst < 1e-3 and slowest < 10.0
    _record(acceptance_log, 2, ok, f"worst max deviation at t=30 over 20 seeds={worst:.3e}, slowest seed={slowest:.2f}s")
    assert ok


def test_criterion_3_example3_disturbance(acceptance_log):
    s = load_bundled("example3")
    (res,) = run_scenario(s)
    rec = res.record
    y_star = np.asarray(res.metrics.y_star)
    pre = rec.y[_at(rec, 40.0) - 1]
    reference = np.array([2.2, 0.7, 2.0, 5.1])
    a_ok = np.max(np.abs(pre - reference)) < 0.1 and np.max(np.abs(pre - y_star)) < 1e-3
    err = np.max(np.abs(rec.y - y_star), axis=1)
    after = rec.times >= 60.0
    below = np.flatnonzero(after & (err < 1e-2))
    t_back = rec.times[below[0]] if below.size else np.inf
    stays = below.size > 0 and np.all(err[below[0] :] < 1e-2)
    b_ok = t_back <= 80.0 and stays
    ok = bool(a_ok and b_ok)
    peak = float(np.max(err[(rec.times >= 40.0) & (rec.times < 60.0)]))
    _record(
        acceptance_log,
        3,
        ok,
        f"pre-disturbance |y-y*|={np.max(np.abs(pre - y_star)):.2e} (reference dev {np.max(np.abs(pre - reference)):.3f}); "
        f"peak error before rejection={peak:.2e}; below 1e-2 from t={t_back:.2f}s on, final={err[-1]:.2e}",
    )
    assert ok


def test_criterion_4_generator_exponential(acceptance_log):
    s = load_bundled("example2")
    (inst,) = instantiate(s)
    p = inst.problem
    y_star, _ = solve_allocation_oracle(p)
    t, X = integrate_generator(p, laplacian(s.graph), GeneratorState.default(p), t_end=120.0, dt=1e-3, decimate=10)
    err = np.linalg.norm(X[:, : p.n] - y_star, axis=1)
    slope, r2, npts = fit_decay_rate(t, err, (1e-6, 1e-2))
    ok = slope < 0 and r2 >= 0.99
    _record(acceptance_log, 4, ok, f"slope={slope:.4f}, R^2={r2:.5f}, points={npts}")
    assert ok


def test_criterion_5_observer_error_matches_expm(acceptance_log):
    s = load_bundled("example3").with_overrides(t_end=10.0, events=[{"t": 0.0, "action": "enable_disturbance"}])
    gains = synthesize_scenario(s)
    (inst,) = instantiate(s)
    rec = integrate(s, gains, inst)
    cl = build_closed_loop(s, gains, inst.problem)
    worst = 0.0
    for i, (a, g, H) in enumerate(zip(s.agents, gains, cl.eta_error_maps(True))):
        F = a.disturbance.S - g.Lbar @ a.plant.E
        e = rec.states @ H.T
        pred = np.array([expm(F * t) @ e[0] for t in rec.times])
        worst = max(worst, float(np.max(np.abs(np.linalg.norm(e, axis=1) - np.linalg.norm(pred, axis=1)))))
    ok = worst <= 1e-6
    _record(acceptance_log, 5, ok, f"max | ||eta-w|| - expm prediction | over [0,10]={worst:.2e}")
    assert ok


def test_criterion_6_regulator_residuals(acceptance_log):
    worst = 0.0
    for name in BUNDLED:
        s = load_bundled(name)
        for a, g in zip(s.agents, synthesize_scenario(s)):
            worst = max(worst, g.regulator.max_residual(a.plant, a.disturbance.S))
    ok = worst <= 1e-10
    _record(acceptance_log, 6, ok, f"max regulator residual={worst:.2e}")
    assert ok


def test_criterion_7_gain_spectra(acceptance_log):
    worst, count = -np.inf, 0
    for name in BUNDLED:
        s = load_bundled(name)
        for i, a in enumerate(s.agents):
            poles = s.agent_poles(i)
            for law in LAWS:
                g = synthesize_agent(
                    a.plant, a.disturbance.S, law=law, eps=s.law.eps, c=s.law.c,
                    k1_poles=poles.get("k1"), lbar_poles=poles.get("lbar"), lhat_poles=poles.get("lhat"), seed=i,
                )
                for absc in g.abscissas(a.plant, a.disturbance.S).values():
                    worst = max(worst, absc)
                    count += 1
    ok = worst < -1e-6
    _record(acceptance_log, 7, ok, f"largest spectral abscissa over {count} matrices={worst:.4g}")
    assert ok


def test_criterion_8_gradient_registry(acceptance_log):
    rng = np.random.default_rng(8)
    costs = [
        LocalCost.quadratic(0.5, 2.0, 2.0),
        LocalCost.quadlog(1.0),
        LocalCost.logsumexp2(-0.1, 0.3),
        LocalCost.sqrtfrac(25.0, 3.0),
    ]
    worst = 0.0
    for c in costs:
        ys = rng.uniform(-10.0, 10.0, 100)
        for y in ys:
            h = 1e-5 * max(1.0, abs(y))
            fd = (c.value(y + h) - c.value(y - h)) / (2 * h)
            g = c.grad(y)
            worst = max(worst, abs(fd - g) / max(abs(g), 1.0))
    ok = worst <= 1e-6
    _record(acceptance_log, 8, ok, f"max relative FD error over 4 kinds x 100 points={worst:.2e}")
    assert ok


def test_criterion_9_eps_sweep(acceptance_log):
    base = load_bundled("example3")
    gaps = {}
    for eps in (1.0, 0.5, 0.2, 0.1):
        try:
            (res,) = run_scenario(base.with_overrides(eps=eps))
            gaps[eps] = res.metrics.optimality_gap
        except NonFiniteState:
            gaps[eps] = np.inf
    ok = gaps[0.1] < 1e-2
    report = ", ".join(f"eps={e:g}: {'converged' if g < 1e-2 else 'not converged'} (gap {g:.2e})" for e, g in gaps.items())
    _record(acceptance_log, 9, ok, report)
    assert ok


def test_criterion_10_mean_v_invariant(acceptance_log):
    worst = 0.0
    for name in BUNDLED:
        for res in run_scenario(load_bundled(name)):
            v = res.record.v
            worst = max(worst, float(np.max(np.abs(v.mean(axis=1) - v[0].mean()))))
    ok = worst <= 1e-8
    _record(acceptance_log, 10, ok, f"max |mean v(t) - mean v(0)| over bundled runs={worst:.2e}")
    assert ok
