"""Acceptance criteria, each checked at its stated tolerance.

Every test reports one PASS/FAIL line through the ``report`` fixture; the
lines are collected again at the end of the session. The slow scans (the
N=40 staggered chain and the spin-1 grids) take hours on one core.
"""

import itertools
import math
import os
import time

import numpy as np
import pytest

from tdmrg.cli import parse_config, run_scan, write_outputs
from tdmrg.detector import detect_jumps, geometric_phase, sweep_average
from tdmrg.dmrg import SweepConfig, finite_sweep
from tdmrg.errors import DegeneracyError
from tdmrg.exactdiag import berry_phase_discrete, ed_solve, ed_sweep_average, ground_magnetizations
from tdmrg.freefermion import ff_critical_scan, ff_many_body_spectrum, jw_build
from tdmrg.models import Spin1XXZ, StaggeredHeisenberg
from tdmrg.verify import SUITES, run_suites

pytestmark = pytest.mark.acceptance

# Kept states for the N=40 scan: the smallest m whose worst discarded
# weight over the grid stays at or below 1e-4.
M_STAGGERED = 52
STAGGERED_SCAN = f"""
model = staggered
n = 40
j = 1
j_alt = 0.5
b_alt = 1
delta = 0
axis1 = b:0:3:61
beta = 40
weights = boltzmann
m = {M_STAGGERED}
k_targets = 14
n_sweeps = 1
target_weights = boltzmann
"""


def _match(found, reference, tol):
    """Both directions: every item of each list has a partner in the other."""
    found, reference = np.asarray(found, float), np.asarray(reference, float)
    miss_ref = [float(r) for r in reference if found.size == 0 or np.min(np.abs(found - r)) > tol]
    miss_found = [float(f) for f in found if reference.size == 0 or np.min(np.abs(reference - f)) > tol]
    return miss_ref, miss_found


# ---------------------------------------------------------------- criterion 1


def _untruncated_m(n, d, k):
    """Largest possible rank of a k-state mixture's marginal over all cuts."""
    return max(min(d ** (a + 1), k * d ** (n - a - 1)) for a in range(1, n - 2))


def test_criterion_1_untruncated_dmrg_matches_ed(report):
    rng = np.random.default_rng(101)
    k = 4
    cases = []
    for n in (4, 6, 8, 10, 12, 14):
        j, ja, b, ba, delta = rng.uniform(-1.0, 1.0, 5)
        cases.append(StaggeredHeisenberg(1.0 + 0.5 * j, ja, b, ba, delta, n))
    for n in (4, 6, 8):
        cases.append(Spin1XXZ(rng.uniform(-1.0, 1.5), rng.uniform(0.0, 2.0), n))
    start = time.perf_counter()
    worst, dropped = 0.0, 0.0
    for spec in cases:
        m = _untruncated_m(spec.n, spec.local_dim, k)
        run = finite_sweep(spec, SweepConfig(m=m, k_targets=k, n_sweeps=1))
        ref = ed_solve(spec).energies[:k]
        worst = max(worst, float(np.max(np.abs(run.energies[:k] - ref))))
        dropped = max(dropped, run.max_discarded_weight)
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-8 and elapsed < 120
    report(1, "oracle exactness", ok,
           f"max |dE| = {worst:.2e} for the {k} lowest levels of {len(cases)} chains (tol 1e-8), "
           f"max discarded weight {dropped:.1e}, {elapsed:.0f} s (limit 120 s)")
    assert dropped <= 1e-12
    assert worst <= 1e-8
    assert elapsed < 120


# ---------------------------------------------------------------- criterion 2


def test_criterion_2_detector_equals_ed_average(report):
    specs = [
        StaggeredHeisenberg(1.0, 0.5, b, 1.0, delta, 8)
        for b, delta in ((0.3, 0.0), (1.1, 0.0), (1.3, 0.0), (0.8, 0.5), (2.5, 0.0))
    ]
    start = time.perf_counter()
    worst = 0.0
    for spec in specs:
        cfg = SweepConfig(m=256, k_targets=14, n_sweeps=1, target_weights="boltzmann", beta=40.0)
        avg = sweep_average(spec, cfg, 40.0)
        ref, values = ed_sweep_average(ed_solve(spec), 40.0, len(avg.run.energies))
        per_step = np.array([s.trace_distance for s in avg.per_step])
        worst = max(worst, abs(avg.mean - ref), float(np.max(np.abs(per_step - values))))
    elapsed = time.perf_counter() - start
    report(2, "detector equivalence", worst <= 1e-8,
           f"max deviation {worst:.2e} over {len(specs)} n=8 chains (tol 1e-8), {elapsed:.1f} s")
    assert worst <= 1e-8


# ---------------------------------------------------------------- criterion 3


def test_criterion_3_free_fermion_spectra(report):
    rng = np.random.default_rng(303)
    sizes = [2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12] + list(rng.integers(4, 13, size=13)) + [12]
    start = time.perf_counter()
    worst = 0.0
    for n in sizes:
        j, ja, b, ba = rng.uniform(-1.5, 1.5, 4)
        spec = StaggeredHeisenberg(j, ja, b, ba, 0.0, int(n))
        ff = np.sort(ff_many_body_spectrum(jw_build(spec)))
        ed = ed_solve(spec).energies
        assert ff.shape == ed.shape
        worst = max(worst, float(np.max(np.abs(ff - ed))))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and elapsed < 60
    report(3, "free-fermion oracle", ok,
           f"max multiset deviation {worst:.2e} over {len(sizes)} draws, n <= 12 (tol 1e-9), {elapsed:.1f} s")
    assert worst <= 1e-9
    assert elapsed < 60


# ---------------------------------------------------------------- criterion 4


@pytest.fixture(scope="session")
def staggered_scan(tmp_path_factory):
    out = tmp_path_factory.mktemp("staggered_n40")
    cfg = parse_config(STAGGERED_SCAN, {"workers": str(os.cpu_count() or 1), "out": str(out)})
    start = time.perf_counter()
    result = run_scan(cfg)
    elapsed = time.perf_counter() - start
    write_outputs(cfg, result)
    print(f"N=40 scan written to {out}")
    return cfg, result, elapsed


def test_criterion_4_critical_line(report, staggered_scan):
    cfg, result, elapsed = staggered_scan
    errors = [r.error for r in result.records if r.error]
    weight = max(r.max_discarded_weight for r in result.records)
    step = cfg.axes[0].step
    crossings = ff_critical_scan(cfg.model, "b", 0.0, 3.0, step)
    jumps = [j.location for j in result.jumps]
    miss_ref, miss_found = _match(jumps, crossings, step)
    checks = {
        "weight": weight <= 1e-4,
        "match": not miss_ref and not miss_found and not errors,
        "runtime": elapsed <= 1800,
    }
    report(4, "critical line N=40", all(checks.values()),
           f"m={cfg.sweep.m} max discarded weight {weight:.2e} (<= 1e-4: {checks['weight']}); "
           f"{len(jumps)} jumps vs {len(crossings)} crossings, unmatched crossings {miss_ref}, "
           f"unmatched jumps {miss_found} (within {step:.3g}: {checks['match']}); "
           f"{elapsed / 60:.1f} min on {cfg.workers} worker(s) (<= 30 min: {checks['runtime']})")
    assert not errors
    assert checks["weight"]
    assert checks["match"]
    assert checks["runtime"]


# ---------------------------------------------------------------- criterion 5


def _ed_reachable_specs():
    rng = np.random.default_rng(505)
    for n in (2, 3, 4, 5, 6, 7, 8, 10):
        for _ in range(4):
            j, ja, b, ba, delta = rng.uniform(-1.2, 1.2, 5)
            yield StaggeredHeisenberg(j, ja, b, ba, delta, n)
    for n in (2, 3, 4, 5):
        for _ in range(4):
            yield Spin1XXZ(rng.uniform(-1.0, 1.5), rng.uniform(0.0, 2.0), n)
    for b in np.linspace(0.0, 3.0, 13):
        yield StaggeredHeisenberg(1.0, 0.5, float(b), 1.0, 0.0, 8)


def _phase_steps(records):
    x = np.array([r.parameters["b"] for r in records])
    phase = np.array([r.geometric_phase for r in records])
    idx = np.flatnonzero(np.abs(np.diff(phase)) > 1e-6)
    return list(0.5 * (x[idx] + x[idx + 1]))


def test_criterion_5_geometric_phase(report):
    start = time.perf_counter()
    worst, checked, degenerate = 0.0, 0, 0
    for spec in _ed_reachable_specs():
        try:
            ref = berry_phase_discrete(spec)
        except DegeneracyError:
            degenerate += 1
            continue
        got = geometric_phase(spec, ground_magnetizations(ed_solve(spec)))
        worst = max(worst, abs(got - ref))
        checked += 1

    # The phase is a ground-state quantity. At beta = 40 every phase step must
    # have a trace-distance jump within one grid step; thermal admixture near a
    # crossing also bends the average on neighbouring intervals, so extra jumps
    # there are reported, not failed. At zero temperature both quantities
    # describe the ground state and the two sets must coincide both ways.
    lines = []
    matched = True
    for delta in (0.0, 0.5):
        for beta in ("40", "zero"):
            text = STAGGERED_SCAN.replace("n = 40", "n = 10").replace(f"m = {M_STAGGERED}", "m = 32")
            text = text.replace("delta = 0", f"delta = {delta}").replace("beta = 40\nweights = boltzmann\n", "")
            cfg = parse_config(text, {"workers": str(os.cpu_count() or 1), "beta": beta})
            result = run_scan(cfg)
            assert not any(r.error for r in result.records)
            steps = _phase_steps(result.records)
            jumps = [j.location for j in result.jumps]
            miss_p, extra = _match(jumps, steps, cfg.axes[0].step)
            matched &= not miss_p and (beta == "40" or not extra)
            lines.append(f"delta={delta} beta={beta}: {len(steps)} phase steps, {len(jumps)} jumps, "
                         f"steps without a jump {miss_p}, jumps without a step {np.round(extra, 3).tolist()}")
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-8 and matched
    report(5, "geometric phase", ok,
           f"max |phase - Berry| {worst:.2e} on {checked} specs ({degenerate} degenerate skipped, tol 1e-8); "
           + "; ".join(lines) + f"; {elapsed:.0f} s")
    assert checked >= 40
    assert worst <= 1e-8
    assert matched


# ---------------------------------------------------------------- criterion 6

SPIN1_SCAN = """
model = spin1_xxz
n = {n}
axis1 = jz:-1:1.5:11
axis2 = d:0:2:11
beta = zero
m = 40
k_targets = 1
n_sweeps = 1
target_weights = boltzmann
"""


def _line_jumps(cfg, records):
    """Jumps along every grid line as ``(axis, fixed value, location, wall)``.

    ``wall`` is the pair of grid indices the jump separates.
    """
    ax, ay = cfg.axes
    grid = np.array(records, dtype=object).reshape(ax.points, ay.points)
    out = []
    for i in range(ax.points):
        for j in detect_jumps(list(grid[i]), ay.name, cfg.threshold_factor, cfg.min_jump):
            k = int(round((j.location - ay.lo) / ay.step - 0.5))
            out.append((ay.name, float(ax.values()[i]), j.location, ((i, k), (i, k + 1))))
    for k in range(ay.points):
        for j in detect_jumps(list(grid[:, k]), ax.name, cfg.threshold_factor, cfg.min_jump):
            i = int(round((j.location - ax.lo) / ax.step - 0.5))
            out.append((ax.name, float(ay.values()[k]), j.location, ((i, k), (i + 1, k))))
    return out


def _regions(cfg, jumps):
    """Connected components of the grid with detected jumps acting as walls."""
    ax, ay = cfg.axes
    blocked = {wall for *_, wall in jumps}
    parent = {p: p for p in itertools.product(range(ax.points), range(ay.points))}

    def find(p):
        while parent[p] != p:
            parent[p] = parent[parent[p]]
            p = parent[p]
        return p

    for i, k in list(parent):
        for q in ((i + 1, k), (i, k + 1)):
            if q in parent and ((i, k), q) not in blocked:
                parent[find((i, k))] = find(q)
    return len({find(p) for p in parent})


@pytest.fixture(scope="session")
def spin1_scans(tmp_path_factory):
    scans = {}
    start = time.perf_counter()
    for n in (12, 16):
        out = tmp_path_factory.mktemp(f"spin1_n{n}")
        cfg = parse_config(SPIN1_SCAN.format(n=n), {"workers": str(os.cpu_count() or 1), "out": str(out)})
        result = run_scan(cfg)
        write_outputs(cfg, result)
        print(f"spin-1 N={n} grid written to {out}")
        scans[n] = (cfg, result, _line_jumps(cfg, result.records))
    return scans, time.perf_counter() - start


def test_criterion_6_spin1_phase_structure(report, spin1_scans):
    scans, elapsed = spin1_scans
    cfg16, res16, jumps16 = scans[16]
    cfg12, res12, jumps12 = scans[12]
    errors = [r.error for r in res16.records + res12.records if r.error]
    regions16 = _regions(cfg16, jumps16)
    regions12 = _regions(cfg12, jumps12)

    steps = {a.name: a.step for a in cfg16.axes}
    unmatched = []
    for mine, other in ((jumps16, jumps12), (jumps12, jumps16)):
        for axis, fixed, loc, _ in mine:
            partners = [o[2] for o in other if o[0] == axis and math.isclose(o[1], fixed, abs_tol=1e-9)]
            if not partners or min(abs(p - loc) for p in partners) > 2 * steps[axis]:
                unmatched.append((axis, fixed, round(loc, 3)))
    checks = {
        "regions": regions16 >= 3,
        "stable": not unmatched and not errors,
        "runtime": elapsed <= 3600,
    }
    report(6, "spin-1 phase structure", all(checks.values()),
           f"N=16: {regions16} regions from {len(jumps16)} jumps (>= 3: {checks['regions']}); "
           f"N=12: {regions12} regions from {len(jumps12)} jumps; "
           f"jumps without a partner within two grid steps {unmatched} (stable: {checks['stable']}); "
           f"both grids {elapsed / 60:.1f} min (<= 60 min: {checks['runtime']})")
    assert not errors
    assert checks["regions"]
    assert checks["stable"]
    assert checks["runtime"]


# ---------------------------------------------------------------- criterion 7


def test_criterion_7_invariant_suites(report):
    start = time.perf_counter()
    checks = list(run_suites(list(SUITES)))
    elapsed = time.perf_counter() - start
    failed = [f"{c.suite}/{c.name}" for c in checks if not c.passed]
    ok = not failed and elapsed < 120
    report(7, "invariant suites", ok,
           f"{len(checks) - len(failed)}/{len(checks)} checks passed, failed {failed}, {elapsed:.0f} s (limit 120 s)")
    assert not failed
    assert elapsed < 120


# ---------------------------------------------------------------- criterion 8


def _total_sz(record):
    """Ground-state sum of Pauli <s^z_l> (twice the total S^z) read off the phase.

    None when it is not an integer, i.e. when the ground level is degenerate
    across sectors.
    """
    two_sz = 2.0 * record.geometric_phase / math.pi
    return round(two_sz) if abs(two_sz - round(two_sz)) < 1e-6 else None


def test_criterion_8_constant_below_criticality(report, staggered_scan):
    cfg, result, _ = staggered_scan
    crossings = np.array(ff_critical_scan(cfg.model, "b", 0.0, 3.0, cfg.axes[0].step))
    recs = result.records
    worst, pairs, worst_pair = 0.0, 0, None
    for r1, r2 in itertools.combinations(recs, 2):
        b1, b2 = r1.parameters["b"], r2.parameters["b"]
        if np.any((crossings > b1) & (crossings < b2)):
            continue
        s1, s2 = _total_sz(r1), _total_sz(r2)
        if s1 is None or s1 != s2:
            continue
        pairs += 1
        diff = abs(r1.avg_trace_distance - r2.avg_trace_distance)
        if diff > worst:
            worst, worst_pair = diff, (b1, b2)
    # Not part of the check: how the spread shrinks away from the crossings,
    # where the beta = 40 admixture of the neighbouring sector dies out.
    far = []
    for gap in (0.1, 0.2, 0.3):
        spread = 0.0
        for r1, r2 in itertools.combinations(recs, 2):
            b1, b2 = r1.parameters["b"], r2.parameters["b"]
            if np.any((crossings > b1) & (crossings < b2)) or _total_sz(r1) != _total_sz(r2):
                continue
            if min(np.min(np.abs(crossings - b1)), np.min(np.abs(crossings - b2))) < gap:
                continue
            spread = max(spread, abs(r1.avg_trace_distance - r2.avg_trace_distance))
        far.append(f"{spread:.1e} beyond {gap}")
    ok = pairs > 0 and worst <= 1e-4
    report(8, "constancy below criticality", ok,
           f"max |dD| {worst:.2e} over {pairs} same-sector pairs with no crossing between "
           f"(tol 1e-4), worst pair B={worst_pair and np.round(worst_pair, 3).tolist()}; "
           f"same max with both points at least a given distance from every crossing: {', '.join(far)}")
    assert pairs > 0
    assert worst <= 1e-4


# ---------------------------------------------------------------- weighting


def test_truncation_weighting_difference(report):
    """Equal vs Boltzmann target weights in the truncation density matrix."""
    spec = StaggeredHeisenberg(1.0, 0.5, 1.2, 1.0, 0.0, 10)
    values = {}
    for mode in ("equal", "boltzmann"):
        cfg = SweepConfig(m=8, k_targets=14, n_sweeps=2, target_weights=mode, beta=40.0)
        avg = sweep_average(spec, cfg, 40.0)
        values[mode] = (avg.mean, avg.run.max_discarded_weight)
    ref, _ = ed_sweep_average(ed_solve(spec), 40.0, 14)
    print(
        "truncation weighting at N=10, m=8: "
        + ", ".join(f"{k}: D={v[0]:.6f} (|D - ED| {abs(v[0] - ref):.1e}, discarded {v[1]:.1e})"
                    for k, v in values.items())
    )
    # Boltzmann weighting spends the basis on the states the detector weighs.
    assert abs(values["boltzmann"][0] - ref) <= abs(values["equal"][0] - ref)
    assert values["boltzmann"][1] <= values["equal"][1]
