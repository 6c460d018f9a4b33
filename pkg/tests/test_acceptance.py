"""Acceptance criteria 1-9; each test records one PASS/FAIL line."""

import math
import time
from importlib.resources import files

import numpy as np
import pytest
from scipy.integrate import quad

from acceptance_log import criterion
from ctmsruc.bernstein import ControlPoly, basis_eval, derivative, evaluate, fit_spline, integral
from ctmsruc.evaluate import cost_report, evaluate_day
from ctmsruc.fleet import Fleet, load_fleet, split_train_test, synthetic_days
from ctmsruc.milp import build_model, decode, deterministic_cost, expected_nodal_cost
from ctmsruc.mps import read_mps, write_mps
from ctmsruc.scenario import build_tree, stage_nodes
from ctmsruc.solver import solve_milp
from test_scenario import assert_tree_invariants, random_days
from test_solver import assert_same_model, enumerate_oracle, random_milp
from uc_cases import gen, random_tree, tiny_instance


# 1 ---------------------------------------------------------------------------

def five_point_derivative(p, x, h=1e-3):
    f = lambda t: evaluate(p, t)  # noqa: E731
    return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h)


@criterion(1, "Bernstein suite", limit_s=5)
def test_1_bernstein_suite():
    rng = np.random.default_rng(1)
    for n in range(0, 11):
        for x in rng.uniform(0, 1, 20):
            assert abs(sum(basis_eval(k, n, x) for k in range(n + 1)) - 1.0) <= 1e-12
    worst_d = worst_q = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 8))
        c = rng.uniform(-10, 10, n + 1)
        p = ControlPoly(c)
        assert evaluate(p, 0.0) == c[0] and evaluate(p, 1.0) == c[-1]
        xs = np.linspace(0, 1, 101)
        vals = evaluate(p, xs)
        assert vals.min() >= c.min() - 1e-12 and vals.max() <= c.max() + 1e-12
        x = rng.uniform(0.01, 0.99)
        worst_d = max(worst_d, abs(evaluate(derivative(p), x) - five_point_derivative(p, x)))
        if _ % 10 == 0:
            ref, _err = quad(lambda t: evaluate(p, t), 0, 1, epsabs=1e-13, epsrel=1e-13)
            worst_q = max(worst_q, abs(integral(p) - ref))
    assert worst_d <= 1e-6, worst_d
    assert worst_q <= 1e-9, worst_q
    return f"max derivative error {worst_d:.1e}, max integral error {worst_q:.1e}"


# 2 ---------------------------------------------------------------------------

def random_c1_cubic(rng, hours):
    rows = [rng.uniform(-50, 50, 4)]
    for _ in range(hours - 1):
        nxt = rng.uniform(-50, 50, 4)
        nxt[0] = rows[-1][3]
        nxt[1] = 2 * rows[-1][3] - rows[-1][2]
        rows.append(nxt)
    return np.array(rows)


def duck_suite():
    """Duck-curve days: midday solar dip and a steep evening ramp."""
    return synthetic_days(30, H=24, seed=11, duck=150.0, ramp=200.0, ramp_hour=19.0, ramp_width=0.3)


@criterion(2, "fit round trip and cubic-vs-constant fit quality", limit_s=10)
def test_2_fit_round_trip():
    rng = np.random.default_rng(2)
    ts = np.arange(12) / 12
    worst = 0.0
    for _ in range(20):
        truth = random_c1_cubic(rng, 24)
        samples = [[(t, float(evaluate(ControlPoly(row), t))) for t in ts] for row in truth]
        worst = max(worst, float(np.abs(fit_spline(samples, 3, 2).coefficient_matrix() - truth).max()))
    assert worst <= 1e-8, worst
    cubic_sq = const_sq = 0.0
    for day in duck_suite():
        cubic_sq += day.fit(3, 2, 24).residual ** 2
        const_sq += day.fit(0, 0, 24).residual ** 2
    ratio = math.sqrt(cubic_sq / const_sq)
    assert ratio <= 0.25, ratio
    return f"coefficient error {worst:.1e}, cubic/constant rms ratio {ratio:.3f}"


# 3 ---------------------------------------------------------------------------

@criterion(3, "tree invariants on 50 random bundles", limit_s=30)
def test_3_tree_invariants():
    rng = np.random.default_rng(3)
    for k in range(50):
        days = random_days(rng, 20, hours=4)
        counts = tuple(sorted(int(c) for c in rng.integers(1, 7, 4)))
        tree = build_tree(days, counts, seed=k)
        assert_tree_invariants(tree, 20)
        again = build_tree(days, counts, seed=k)
        assert [(n.parent, n.members, n.xi) for n in tree.nodes] == \
            [(n.parent, n.members, n.xi) for n in again.nodes]
    return "50 bundles"


# 4 ---------------------------------------------------------------------------

@criterion(4, "branch and bound against enumeration oracle", limit_s=60)
def test_4_solver_oracle():
    rng = np.random.default_rng(4)
    worst = 0.0
    for k in range(25):
        model = random_milp(rng, n_bin=3 + k % 10)
        oracle = enumerate_oracle(model)
        res = solve_milp(model, gap=0.0, backend="simplex")
        assert res.status == "optimal-within-gap"
        worst = max(worst, abs(res.objective - oracle))
    assert worst <= 1e-6, worst
    tree, fleet = tiny_instance()
    model, _ = build_model(tree, fleet, 0.0)
    res = solve_milp(model, gap=0.0)
    oracle = enumerate_oracle(model)
    assert abs(res.objective - 1010.0) <= 1e-6 and abs(oracle - 1010.0) <= 1e-6
    return f"25 random MILPs, max deviation {worst:.1e}; tiny UC {res.objective:.6f} (oracle {oracle:.6f})"


# 5 ---------------------------------------------------------------------------

def closed_form_census(tree, G, n, D):
    N = len(tree.nodes) - 1
    first = len(stage_nodes(tree, 1))
    last = len(stage_nodes(tree, tree.H))
    later = N - first
    lead, trail = n - D + 1, D
    return {
        "b": G * D * later,                                   # knot equalities per child edge
        "c": G * N * 2 * (n + 1) + G * N,                     # envelopes plus commitment option
        "d": 3 * N * (n + 1),                                 # balance, up and down margins
        "e": 2 * G * (lead * N + trail * later + trail * last),
        "f": 2 * G * ((n - 1) * N + later + last),            # plain, relaxed, last-stage ramps
        "g": 3 * G * N,                                       # switching, min-on, min-off
        "h": G * tree.H * (n + 1),                            # schedule tie
    }


def rho_fleet():
    return Fleet((
        gen("base", p_min=60, p_max=420, ramp=400, min_on=4, min_off=4, startup=1500, commit=300,
            energy=10, res_up=2, res_down=2, option=60),
        gen("mid", p_min=20, p_max=200, ramp=300, min_on=2, min_off=2, startup=500, commit=200,
            energy=30, res_up=5, res_down=5, option=40),
        gen("peak", p_min=5, p_max=120, ramp=900, startup=100, commit=100, energy=80, res_up=10,
            res_down=10, option=20),
    ))


def rho_tree():
    days = synthetic_days(20, H=6, start_hour=14, seed=6, base=420, swing=100, duck=60, ramp=80,
                          ramp_hour=18.5, ramp_width=0.3, spread=0.06)
    return build_tree([d.fit(3, 2, 6) for d in days], (1, 2, 4, 4, 4, 4), seed=0)


@criterion(5, "constraint census and decode audit")
def test_5_model_audit():
    rng = np.random.default_rng(5)
    checked = 0
    for counts in ((1, 1, 1), (1, 2, 4), (2, 2, 3, 5)):
        for n, D in ((1, 1), (3, 1), (3, 2)):
            tree = random_tree(counts, n, D, rng)
            for G in (1, 3):
                fleet = Fleet(tuple(gen(f"g{k}") for k in range(G)))
                model, index = build_model(tree, fleet, 1.0)
                assert index.census == closed_form_census(tree, G, n, D)
                assert sum(index.census.values()) == model.n_rows
                checked += 1
    tree, fleet = rho_tree(), rho_fleet()
    model, index = build_model(tree, fleet, 1.0)
    res = solve_milp(model, gap=0.01)
    sol = decode(model, index, res.x, fleet)
    assert sol.max_violation <= 1e-6
    return f"{checked} census checks; decoded 6-hour instance, max violation {sol.max_violation:.1e}"


# 6 ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def rho_sweep():
    tree, fleet = rho_tree(), rho_fleet()
    out = {}
    started = time.monotonic()
    for rho in (0.0, 1.0, 3.0):
        model, index = build_model(tree, fleet, rho)
        res = solve_milp(model, gap=0.0)
        out[rho] = (model, index, res, decode(model, index, res.x, fleet, objective=res.objective, gap=res.gap))
    return tree, fleet, out, time.monotonic() - started


@criterion(6, "reserve margin equals 2 rho eps and cost rises with rho", limit_s=300)
def test_6_rho_margin(rho_sweep):
    tree, fleet, out, elapsed = rho_sweep
    assert len(tree.leaves()) == 4 and tree.H == 6 and len(fleet) == 3
    worst = 0.0
    for rho, (_, _, res, sol) in out.items():
        assert res.status == "optimal-within-gap"
        for v in tree.edges():
            width = (sol.x[:, v] + sol.rhat[:, v]).sum(axis=0) - (sol.x[:, v] - sol.rchk[:, v]).sum(axis=0)
            worst = max(worst, float(np.abs(width - 2 * rho * tree.nodes[v].eps).max()))
    assert worst <= 1e-6, worst
    objs = [out[r][2].objective for r in (0.0, 1.0, 3.0)]
    assert objs[0] <= objs[1] + 1e-6 and objs[1] <= objs[2] + 1e-6, objs
    assert elapsed < 300
    return f"margin error {worst:.1e}; objectives " + ", ".join(f"{o:.1f}" for o in objs) + \
        f"; solves took {elapsed:.1f} s"


# 7 ---------------------------------------------------------------------------

STEEP = dict(H=12, start_hour=12, seed=1, base=560.0, swing=120.0, duck=0.0, ramp=200.0, ramp_hour=21.0,
             ramp_width=0.15, noise=1.0, spread=0.03)


def steep_hour(day):
    """Hour whose end-to-start load change is largest."""
    v = day.values.reshape(-1, 12)
    return int(np.argmax(np.abs(v[:, -1] - v[:, 0])))


@pytest.fixture(scope="module")
def steep_suite():
    started = time.monotonic()
    fleet = load_fleet(files("ctmsruc") / "data" / "desk.toml")
    days = synthetic_days(100, **STEEP)
    train, test = split_train_test(days, 0.7, seed=0)
    counts = (1, 2, 4) + (4,) * 9
    runs = {}
    for label, (n, D) in (("ct", (3, 2)), ("dt", (1, 1))):
        tree = build_tree([d.fit(n, D, 12) for d in train], counts, depth=D, seed=0)
        model, index = build_model(tree, fleet, 3.0, n, D)
        res = solve_milp(model, gap=0.05)
        sol = decode(model, index, res.x, fleet, objective=res.objective, gap=res.gap)
        report = cost_report(sol, tree, fleet, test, label=label)
        runs[label] = (tree, model, res, sol, report)
    return fleet, test, runs, time.monotonic() - started


@pytest.mark.slow
@criterion(7, "continuous-time schedule is feasible at least as often", limit_s=900)
def test_7_ct_vs_dt(steep_suite):
    fleet, test, runs, elapsed = steep_suite
    assert len(fleet) <= 10
    for tree, *_ in runs.values():
        assert tree.H <= 12 and len(tree.leaves()) <= 8
    ct, dt = runs["ct"][4], runs["dt"][4]
    assert ct.infeasibility_rate <= dt.infeasibility_rate
    ct_ok = {d.day_id for d in ct.days if d.feasible}
    witnesses = []
    for d in dt.days:
        if d.feasible or d.day_id not in ct_ok:
            continue
        day = next(x for x in test if x.id == d.day_id)
        tree, _, _, sol, _ = runs["dt"]
        _, band, samples = evaluate_day(sol, tree, fleet, day)
        h = steep_hour(day)
        window = slice(12 * h, 12 * h + 3)  # first 15 minutes of the steep hour
        load = samples[window, 1]
        if np.any((load > band[window, 2] + 1e-6) | (load < band[window, 1] - 1e-6)):
            witnesses.append((d.day_id, h))
    assert witnesses, "no day breaks the discrete-time band early in its steep hour while the continuous one holds"
    assert elapsed < 900
    return (f"infeasibility CT {ct.infeasibility_rate:.2f} vs DT {dt.infeasibility_rate:.2f} over {len(test)} days; "
            f"{len(witnesses)} early-ramp witnesses, e.g. day {witnesses[0][0]} hour {witnesses[0][1] + 1}; "
            f"pipeline took {elapsed:.0f} s")


# 8 ---------------------------------------------------------------------------

@pytest.mark.slow
@criterion(8, "cost decomposition identity")
def test_8_cost_identity(rho_sweep, steep_suite):
    checked = 0
    tree6, fleet6, out, _ = rho_sweep
    days6 = synthetic_days(5, H=6, start_hour=14, seed=60, base=420, swing=100, duck=60, ramp=80,
                           ramp_hour=18.5, ramp_width=0.3, spread=0.06)
    cases = [(tree6, fleet6, res, sol, cost_report(sol, tree6, fleet6, days6), 0.0)
             for _, _, res, sol in out.values()]
    fleet7, _, runs, _ = steep_suite
    cases += [(tree, fleet7, res, sol, rep, 0.05) for tree, _, res, sol, rep in runs.values()]
    for tree, fleet, res, sol, rep, gap in cases:
        assert rep.total_testing == rep.mean_testing + rep.reserve_cost
        assert rep.expected_day_ahead == res.objective
        recomputed = deterministic_cost(sol, fleet) + expected_nodal_cost(sol, tree, fleet)
        assert abs(recomputed - res.objective) <= 1e-6 * max(1.0, abs(res.objective))
        assert (res.objective - res.bound) / max(1.0, abs(res.objective)) <= gap + 1e-12
        checked += 1
    return f"{checked} evaluated solutions"


# 9 ---------------------------------------------------------------------------

@criterion(9, "MPS round trip")
def test_9_mps_round_trip(tmp_path):
    rng = np.random.default_rng(9)
    models = [build_model(random_tree((1, 2, 3), n, D, rng), rho_fleet(), 3.0)[0] for n, D in ((3, 2), (1, 1))]
    models += [random_milp(rng, 6) for _ in range(3)]
    for k, model in enumerate(models):
        path = tmp_path / f"m{k}.mps"
        write_mps(model, path)
        back = read_mps(path)
        assert_same_model(model, back)
        write_mps(back, tmp_path / f"again{k}.mps")
        assert (tmp_path / f"again{k}.mps").read_bytes() == path.read_bytes()
    return f"{len(models)} models bit-equal after reparse"
