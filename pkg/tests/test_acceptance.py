"""End-to-end acceptance checks, one test per criterion.

Each test prints a single "acceptance NN <name>: PASS" line when its
assertions hold; a failure surfaces as the usual pytest report for that
criterion.  Statistical checks run on frozen seeds, and the timed suites
assert their own runtime budgets.
"""

from __future__ import annotations

import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy import stats

from jumpcurv import (
    AgentsSpec,
    AffinePreference,
    BirthDeathSpec,
    FiniteMeasure,
    GroundMetric,
    ModifiedBDSpec,
    QuadraticPreference,
    ZeroPreference,
    agents_bound,
    bd_eigen,
    bd_interior,
    bd_metric,
    bound_single,
    build_kernel,
    coupling_rates,
    drift_classical_bound,
    drift_exact,
    fv_eigen_bound,
    herd_experiment,
    herd_threshold,
    modified_bd_bound,
    simulate,
    simulate_coupled,
    wasserstein,
    wasserstein_line,
    write_measure_csv,
)
from jumpcurv.cli import main
from jumpcurv.curvature import SingleSiteKernel

from conftest import rng_for, random_measure, random_metric

SQRT2 = math.sqrt(2.0)


def _passed(number: int, name: str) -> None:
    print(f"acceptance {number:02d} {name}: PASS")


def machine_equal(a: float, b: float) -> bool:
    # closed forms evaluated in a different association order agree to a
    # couple of ulps, not bit for bit
    return math.isclose(a, b, rel_tol=1e-14, abs_tol=1e-14)


def test_criterion_01_transport_closed_forms():
    # LP route against the quantile-coupling formula on the line and the
    # half total variation on the trivial metric, 1000 instances, < 10 s
    rng = rng_for("acceptance-transport")
    line = GroundMetric.euclidean_line()
    trivial_sites = tuple(range(8))
    g_triv = GroundMetric.trivial(trivial_sites)
    started = time.perf_counter()
    worst_line = worst_trivial = 0.0
    for _ in range(1000):
        mass = float(rng.uniform(0.5, 3.0))
        n = int(rng.integers(2, 9))
        w1 = rng.uniform(0.1, 1.0, size=n)
        m1 = FiniteMeasure(
            tuple(float(v) for v in rng.uniform(-5.0, 5.0, size=n)),
            w1 * (mass / w1.sum()),
        )
        m = int(rng.integers(2, 9))
        w2 = rng.uniform(0.1, 1.0, size=m)
        m2 = FiniteMeasure(
            tuple(float(v) for v in rng.uniform(-5.0, 5.0, size=m)),
            w2 * (mass / w2.sum()),
        )
        lp = wasserstein(m1, m2, line, method="lp")
        closed = wasserstein_line(m1, m2, line.base_measure)
        worst_line = max(worst_line, abs(lp - closed))

        t1 = random_measure(rng, trivial_sites, max_atoms=8, mass=mass)
        t2 = random_measure(rng, trivial_sites, max_atoms=8, mass=mass)
        lp2 = wasserstein(t1, t2, g_triv, method="lp")
        half_tv = 0.5 * math.fsum(
            abs(t1.weight_at(z) - t2.weight_at(z)) for z in trivial_sites
        )
        worst_trivial = max(worst_trivial, abs(lp2 - half_tv))
    elapsed = time.perf_counter() - started
    assert worst_line <= 1e-9
    assert worst_trivial <= 1e-9
    assert elapsed < 10.0
    _passed(1, "transport closed forms")


def test_criterion_02_drift_property_suite():
    # homogeneity, subadditivity, min attainment past the mass threshold,
    # one-sided top-up bound, classical-coupling domination, and the
    # probability-measure bound, 1000 instances, < 30 s
    rng = rng_for("acceptance-drift")
    started = time.perf_counter()
    for _ in range(1000):
        n = int(rng.integers(3, 6))
        g = random_metric(rng, n)
        x, y = g.sites[0], g.sites[1]
        m1 = random_measure(rng, g.sites)
        m2 = random_measure(rng, g.sites)
        base = drift_exact(x, y, m1, m2, g).value

        c = float(rng.uniform(0.2, 4.0))
        scaled = drift_exact(x, y, m1.scale(c), m2.scale(c), g).value
        assert scaled == pytest.approx(c * base, rel=1e-12, abs=1e-12)

        n1 = random_measure(rng, g.sites)
        n2 = random_measure(rng, g.sites)
        joint = drift_exact(x, y, m1 + n1, m2 + n2, g).value
        other = drift_exact(x, y, n1, n2, g).value
        assert joint <= base + other + 1e-9

        for bump in (0.0, 0.7):
            a = m2.mass + bump
            left = m1.add_atom(x, a)
            right = m2.add_atom(y, a + m1.mass - m2.mass)
            attained = wasserstein(left, right, g) - left.mass * g.dist(x, y)
            assert attained == pytest.approx(base, abs=1e-9)

        hx, hy, h1, h2 = (x, y, m1, m2) if m1.mass >= m2.mass else (y, x, m2, m1)
        topup = (
            wasserstein(h1, h2.add_atom(hy, h1.mass - h2.mass), g)
            - h1.mass * g.dist(hx, hy)
        )
        assert topup >= drift_exact(hx, hy, h1, h2, g).value - 1e-9

        classical = drift_classical_bound(x, y, m1, m2, g).value
        assert base <= classical + 1e-9

        p1 = m1.scale(1.0 / m1.mass)
        p2 = m2.scale(1.0 / m2.mass)
        prob = drift_exact(x, y, p1, p2, g).value
        assert prob <= wasserstein(p1, p2, g) - g.dist(x, y) + 1e-9
    elapsed = time.perf_counter() - started
    assert elapsed < 30.0
    _passed(2, "drift property suite")


def test_criterion_03_birth_death_sharpness():
    # unit births, doubled deaths, geometric gap weights: enumerated bound
    # hits 3 - 2*sqrt(2) on the margin-5 interior
    K = 40
    spec = BirthDeathSpec(
        b=(1.0,) * (K + 1),
        d=(0.0,) + (2.0,) * K,
        u=tuple(SQRT2**k for k in range(K)),
        K=K,
    )
    rep = bound_single(
        build_kernel(spec), bd_metric(spec), interior=bd_interior(spec, margin=5)
    )
    assert rep.bound == pytest.approx(3.0 - 2.0 * SQRT2, abs=1e-6)
    assert rep.certification == "exact_enumeration"
    _passed(3, "birth-death sharpness")


def test_criterion_04_modified_bd_plan_cost():
    # adjacent-pair plan cost of the two-step-up chain equals the four-term
    # breakpoint expression; the modified bound dominates the classical one
    rng = rng_for("acceptance-modbd")
    K = 10
    for _ in range(100):
        b = tuple(float(v) for v in rng.uniform(0.2, 2.0, size=K + 1))
        d = (0.0,) + tuple(float(v) for v in rng.uniform(0.2, 2.0, size=K))
        u = tuple(float(v) for v in rng.uniform(0.5, 2.0, size=K))
        spec = ModifiedBDSpec(b=b, d=d, u=u, K=K)
        kernel = build_kernel(spec)
        g = bd_metric(spec)
        x = int(rng.integers(1, K - 2))
        (plan,) = coupling_rates(kernel, (x,), (x + 1,), g).plans
        expected = (
            d[x] * u[x - 1]
            + (d[x] + b[x + 1]) * u[x]
            + abs(b[x + 1] - b[x]) * u[x + 1]
            + b[x + 1] * u[x + 2]
        )
        assert plan.cost == pytest.approx(expected, abs=1e-9)
        classical = modified_bd_bound(spec, coupling="classical")
        assert modified_bd_bound(spec) >= classical - 1e-12
    _passed(4, "modified birth-death plan cost")


def test_criterion_05_agents_closed_forms():
    for a, b, T, n in [
        (0.5, 0.25, 1.0, 4),
        (-0.3, 0.5, 1.0, 3),
        (0.0, 0.0, 2.0, 5),
        (-1.1, 2.3, 0.7, 6),
        (0.9, 0.1, 3.0, 2),
    ]:
        spec = AgentsSpec(
            n_sites=n, temperature=T, f=AffinePreference(a, b), n_particles=1,
            monotone=True, convex=True, f_lip=abs(a),
        )
        assert machine_equal(agents_bound(spec), T + b * n + a - abs(a))
    for T, n in [(1.0, 3), (2.5, 4), (0.1, 3), (0.7, 5)]:
        spec = AgentsSpec(
            n_sites=n, temperature=T, f=QuadraticPreference(), n_particles=1,
            monotone=True, convex=True, f_lip=2.0,
        )
        assert machine_equal(agents_bound(spec), T - 2.0 + 1.0 / n)
    th = herd_threshold(QuadraticPreference(), 3)
    assert th.z_star == pytest.approx(0.5 + 1.0 / math.sqrt(12.0), abs=1e-9)
    assert th.m_star == pytest.approx(1.0 / (6.0 * math.sqrt(3.0)), abs=1e-9)
    assert th.t_critical == pytest.approx(1.0 / (3.0 + math.sqrt(3.0)), abs=1e-6)
    _passed(5, "agents closed forms")


def _occupancy_table(solo, coupled, sample_times, n_sites):
    solo_counts = np.zeros(n_sites, dtype=int)
    coupled_counts = np.zeros(n_sites, dtype=int)
    for t in sample_times:
        for s in solo.state_at(t):
            solo_counts[s] += 1
        for s in coupled.state_at(t)[0]:
            coupled_counts[s] += 1
    return np.array([solo_counts, coupled_counts])


def test_criterion_06_coupling_marginals():
    # the first marginal of the coupled dynamics occupies states like a solo
    # run: two-sample chi-square at the 5% level, 1e4 events per trajectory
    kernel = SingleSiteKernel(
        {0: FiniteMeasure((1,), (1.0,)), 1: FiniteMeasure((0,), (1.0,))},
        sites=(0, 1),
    )
    g = GroundMetric.trivial((0, 1))
    horizon = 10_500.0
    solo = simulate(kernel, (0,), horizon, seed=1)
    coupled = simulate_coupled(kernel, (0,), (1,), horizon, g, seed=101)
    assert solo.n_events >= 10_000 and coupled.n_events >= 10_000
    table = _occupancy_table(solo, coupled, np.linspace(5.0, horizon, 2000), 2)
    _, p_two_state, _, _ = stats.chi2_contingency(table)
    assert p_two_state >= 0.05

    spec = AgentsSpec(
        n_sites=3, temperature=1.0, f=ZeroPreference(), n_particles=3,
        monotone=True, convex=True, f_lip=0.0,
    )
    ak = build_kernel(spec, 3)
    ga = GroundMetric.trivial((0, 1, 2))
    horizon = 5_500.0
    solo = simulate(ak, (0, 1, 2), horizon, seed=0)
    coupled = simulate_coupled(ak, (0, 1, 2), (2, 0, 1), horizon, ga, seed=100)
    assert solo.n_events >= 10_000 and coupled.n_events >= 10_000
    table = _occupancy_table(solo, coupled, np.linspace(5.0, horizon, 1200), 3)
    _, p_agents, _, _ = stats.chi2_contingency(table)
    assert p_agents >= 0.05
    _passed(6, "coupling marginals")


def test_criterion_07_contraction_presets(tmp_path, capsys):
    # fitted contraction rate confirms the certified bound on all four
    # bundled presets (200 replicas), and a violated comparison exits 4
    started = time.perf_counter()
    for preset in ("two-state", "mm1-sqrt2", "agents-uniform", "fv-discrete"):
        path = tmp_path / f"{preset}.json"
        path.write_text(json.dumps({"preset": preset}))
        code = main(["verify", "--config", str(path)])
        payload = json.loads(capsys.readouterr().out)
        assert code == 0, preset
        assert payload["verdict"] == "ok", preset
        assert payload["replicas"] == 200
        assert (
            payload["fitted_rate"]
            >= payload["bound"] - 2.0 * payload["rate_se"]
        ), preset
    elapsed = time.perf_counter() - started
    assert elapsed < 300.0

    path = tmp_path / "violated.json"
    path.write_text(json.dumps({"preset": "two-state", "replicas": 60}))
    code = main(
        ["contract", "--config", str(path), "--bound-override", "50.0"]
    )
    payload = json.loads(capsys.readouterr().out)
    assert code == 4
    assert payload["verdict"] == "violated"
    _passed(7, "contraction presets")


def test_criterion_08_herd_metastability():
    # starting inside the herd well at low temperature, the fraction of
    # replicas that never leave grows with the system size; far above the
    # herding regime the exit time does not scale with the size at all
    th = herd_threshold(QuadraticPreference(), 3)
    fractions = []
    for n in (50, 100, 200):
        spec = AgentsSpec(
            n_sites=3, temperature=0.1, f=QuadraticPreference(), n_particles=n,
            monotone=True, convex=True, f_lip=2.0,
        )
        res = herd_experiment(spec, n, th.z_star, 1_000.0, 100, seed=8)
        fractions.append(res.censoring_fraction)
    assert fractions == sorted(fractions)

    medians = {}
    for n in (50, 200):
        spec = AgentsSpec(
            n_sites=3, temperature=2.0, f=QuadraticPreference(), n_particles=n,
            monotone=True, convex=True, f_lip=2.0,
        )
        res = herd_experiment(spec, n, th.z_star, 1_000.0, 100, seed=8)
        assert res.censoring_fraction == 0.0
        medians[n] = res.median_exit
    ratio = medians[50] / medians[200]
    assert 0.5 <= ratio <= 2.0
    _passed(8, "herd metastability")


def test_criterion_09_eigen_solver():
    rng = rng_for("acceptance-eigen")
    for _ in range(5):
        K = int(rng.integers(30, 60))
        b = tuple(float(v) for v in rng.uniform(0.2, 2.0, size=K + 1))
        d = (0.0,) + tuple(float(v) for v in rng.uniform(0.5, 3.0, size=K))
        pair = bd_eigen(b, d, K)
        assert pair.residual <= 1e-8 * max(pair.eta)

    K = 200
    pair = bd_eigen((0.0,) * (K + 1), tuple(float(x) for x in range(K + 1)), K)
    assert pair.residual <= 1e-8 * max(pair.eta)
    assert pair.lam == pytest.approx(1.0, abs=1e-6)

    K = 60
    value = fv_eigen_bound(
        (1.0,) * (K + 1),
        tuple(float(x * x) for x in range(K + 1)),
        K,
        resample_rate=1.0,
    )
    assert math.isfinite(value)
    _passed(9, "eigen solver")


def _run_twice(argv) -> tuple:
    runs = [
        subprocess.run(
            [sys.executable, "-m", "jumpcurv.cli", *argv],
            capture_output=True,
        )
        for _ in range(2)
    ]
    return runs[0], runs[1]


def test_criterion_10_cli_determinism(tmp_path):
    # every subcommand, fixed seed, two separate interpreter invocations:
    # byte-identical stdout and equal exit codes
    write_measure_csv(str(tmp_path / "m1.csv"), FiniteMeasure((0, 1), (1.0, 1.0)))
    write_measure_csv(str(tmp_path / "m2.csv"), FiniteMeasure((2,), (2.0,)))
    two_state = tmp_path / "two-state.json"
    two_state.write_text(
        json.dumps({"preset": "two-state", "replicas": 40, "horizon": 20.0})
    )
    contract_cfg = tmp_path / "contract.json"
    contract_cfg.write_text(json.dumps({"preset": "two-state", "replicas": 40}))
    eigen_cfg = tmp_path / "eigen.json"
    eigen_cfg.write_text(json.dumps({"preset": "bd-cdi"}))
    agents_cfg = tmp_path / "agents.json"
    agents_cfg.write_text(json.dumps({"preset": "agents-quadratic"}))
    herd_cfg = tmp_path / "herd.json"
    herd_cfg.write_text(
        json.dumps(
            {
                "model": {
                    "variant": "agents",
                    "n_sites": 3,
                    "temperature": 1.5,
                    "f": {"kind": "zero"},
                },
                "n_particles": 2,
                "threshold": 0.5,
                "horizon": 20.0,
                "replicas": 30,
            }
        )
    )
    m1, m2 = str(tmp_path / "m1.csv"), str(tmp_path / "m2.csv")
    commands = {
        "wasserstein": ["wasserstein", "--m1", m1, "--m2", m2, "--metric", "euclidean"],
        "j": ["j", "--x", "0", "--y", "1", "--m1", m1, "--m2", m2,
              "--metric", "trivial:3"],
        "bound": ["bound", "--config", str(two_state)],
        "eigen": ["eigen", "--config", str(eigen_cfg)],
        "threshold": ["threshold", "--config", str(agents_cfg)],
        "simulate": ["simulate", "--config", str(two_state)],
        "couple": ["couple", "--config", str(two_state)],
        "contract": ["contract", "--config", str(contract_cfg)],
        "herd": ["herd", "--config", str(herd_cfg)],
        "verify": ["verify", "--config", str(contract_cfg)],
    }
    for name, argv in commands.items():
        first, second = _run_twice(argv)
        assert first.returncode == 0, (name, first.stderr)
        assert first.returncode == second.returncode
        assert first.stdout == second.stdout, name
        assert len(first.stdout) > 0, name
    _passed(10, "cli determinism")
