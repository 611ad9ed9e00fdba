"""Invariant and oracle suites behind ``tdmrg verify``.

Every check reports the measured quantity next to its tolerance; a suite
never raises on a failed invariant, it records it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from . import numerics
from .detector import correlation_distance, geometric_phase, sweep_average
from .dmrg import SweepConfig, finite_sweep
from .exactdiag import (
    berry_phase_discrete,
    ed_solve,
    ed_sweep_average,
    gibbs_state,
    ground_magnetizations,
)
from .freefermion import ff_ground_energy, ff_many_body_spectrum, jw_build
from .models import Spin1XXZ, StaggeredHeisenberg, assemble_dense, build_terms


@dataclass(frozen=True)
class Check:
    suite: str
    name: str
    passed: bool
    measured: float
    tolerance: float
    detail: str = ""


def _check(suite: str, name: str, measured: float, tol: float, detail: str = "") -> Check:
    ok = bool(np.isfinite(measured) and measured <= tol)
    return Check(suite, name, ok, float(measured), float(tol), detail)


def random_density(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    a = rng.standard_normal((dim, rank or dim)) + 1j * rng.standard_normal((dim, rank or dim))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def numerics_suite(
    kron: Callable[[np.ndarray, np.ndarray], np.ndarray] = numerics.kron, seed: int = 7
) -> list[Check]:
    """Trace-distance axioms, partial-trace/kron round trips, Lanczos versus dense."""
    s = "numerics"
    rng = np.random.default_rng(seed)
    td, pt = numerics.trace_distance, numerics.partial_trace
    out = []

    worst = {"range": 0.0, "identity": 0.0, "symmetry": 0.0, "triangle": 0.0, "unitary": 0.0}
    for _ in range(20):
        d = int(rng.integers(2, 9))
        r, q, t = (random_density(d, rng, int(rng.integers(1, d + 1))) for _ in range(3))
        drq = td(r, q)
        worst["range"] = max(worst["range"], -drq, drq - 1)
        worst["identity"] = max(worst["identity"], td(r, r))
        worst["symmetry"] = max(worst["symmetry"], abs(drq - td(q, r)))
        worst["triangle"] = max(worst["triangle"], drq - td(r, t) - td(t, q))
        u, _ = np.linalg.qr(rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d)))
        worst["unitary"] = max(worst["unitary"], abs(drq - td(u @ r @ u.conj().T, u @ q @ u.conj().T)))
    out.append(_check(s, "trace_distance_in_unit_interval", max(worst["range"], 0.0), 1e-12))
    out.append(_check(s, "trace_distance_zero_on_equal", worst["identity"], 1e-12))
    out.append(_check(s, "trace_distance_symmetric", worst["symmetry"], 1e-12))
    out.append(_check(s, "trace_distance_triangle", max(worst["triangle"], 0.0), 1e-12))
    out.append(_check(s, "trace_distance_unitary_invariant", worst["unitary"], 1e-10))

    sub = contract = 0.0
    for _ in range(20):
        d1, d2 = (int(x) for x in rng.integers(2, 5, size=2))
        r1, s1 = random_density(d1, rng), random_density(d1, rng)
        r2, s2 = random_density(d2, rng), random_density(d2, rng)
        sub = max(sub, td(kron(r1, r2), kron(s1, s2)) - td(r1, s1) - td(r2, s2))
        big_r, big_s = random_density(d1 * d2, rng), random_density(d1 * d2, rng)
        for keep in ("left", "right"):
            contract = max(
                contract,
                td(pt(big_r, d1, d2, keep), pt(big_s, d1, d2, keep)) - td(big_r, big_s),
            )
    out.append(_check(s, "trace_distance_subadditive", max(sub, 0.0), 1e-12))
    out.append(_check(s, "trace_distance_contracts_under_partial_trace", max(contract, 0.0), 1e-12))

    round_trip = 0.0
    for _ in range(20):
        d1, d2 = (int(x) for x in rng.integers(1, 6, size=2))
        a, b = random_density(d1, rng), random_density(d2, rng)
        ab = kron(a, b)
        round_trip = max(
            round_trip,
            np.abs(pt(ab, d1, d2, "left") - a).max(),
            np.abs(pt(ab, d1, d2, "right") - b).max(),
            abs(np.trace(ab) - 1.0),
        )
    out.append(_check(s, "partial_trace_inverts_kron", round_trip, 1e-12))

    lz = 0.0
    for n, k in ((40, 1), (120, 6), (300, 10)):
        a = rng.standard_normal((n, n))
        a = a + a.T
        ref = np.linalg.eigvalsh(a)[:k]
        got = numerics.lanczos_lowest_k(numerics.LinearOperator.from_dense(a), k, seed=seed)
        lz = max(lz, np.abs(got.eigenvalues[:k] - ref).max())
    for spec in (StaggeredHeisenberg(1, 0.3, 0.2, 0.5, 0.7, 8), Spin1XXZ(1.0, 0.5, 6)):
        h = assemble_dense(build_terms(spec))
        ref = np.linalg.eigvalsh(h)[:6]
        got = numerics.lanczos_lowest_k(numerics.LinearOperator.from_dense(h), 6, seed=seed)
        lz = max(lz, np.abs(got.eigenvalues[:6] - ref).max())
    out.append(_check(s, "lanczos_matches_dense", lz, 1e-8))
    return out


def exactdiag_suite() -> list[Check]:
    s = "exactdiag"
    out = []
    spec = StaggeredHeisenberg(1.0, 0.4, 0.3, 0.6, 0.5, 8)
    dense = np.linalg.eigvalsh(assemble_dense(build_terms(spec)))
    out.append(_check(s, "sector_blocks_match_dense", np.abs(ed_solve(spec).energies - dense).max(), 1e-10))
    rho = gibbs_state(ed_solve(spec), 40.0, 14)
    out.append(_check(s, "gibbs_trace_one", abs(np.trace(rho) - 1.0), 1e-12))
    worst = 0.0
    for spec in (
        StaggeredHeisenberg(1.0, 0.5, 0.8, 1.0, 0.0, 6),
        StaggeredHeisenberg(1.0, 0.5, 1.3, 1.0, 0.5, 6),
        Spin1XXZ(1.0, 0.7, 4),
    ):
        sol = ed_solve(spec)
        phase = geometric_phase(spec, ground_magnetizations(sol))
        worst = max(worst, abs(phase - berry_phase_discrete(spec, steps=8)))
    out.append(_check(s, "berry_phase_matches_magnetization", worst, 1e-8))
    return out


def freefermion_suite(n: int = 12, draws: int = 3, seed: int = 3) -> list[Check]:
    s = "freefermion"
    rng = np.random.default_rng(seed)
    worst = energy = 0.0
    for _ in range(draws):
        j, ja, b, ba = rng.uniform(-1.5, 1.5, size=4)
        spec = StaggeredHeisenberg(j, ja, b, ba, 0.0, n)
        h = jw_build(spec)
        ed = ed_solve(spec).energies
        worst = max(worst, np.abs(ff_many_body_spectrum(h) - ed).max())
        energy = max(energy, abs(ff_ground_energy(h) - ed[0]))
    return [
        _check(s, f"many_body_spectrum_matches_ed_n{n}", worst, 1e-9),
        _check(s, "ground_energy_matches_ed", energy, 1e-9),
    ]


def dmrg_suite() -> list[Check]:
    s = "dmrg"
    out = []
    spec = StaggeredHeisenberg(1.0, 0.0, 0.0, 0.0, -1.0, 12)
    run = finite_sweep(spec, SweepConfig(m=16, k_targets=1, n_sweeps=4))
    rises = np.diff(run.sweep_ground_energies)
    out.append(_check(s, "ground_energy_nonincreasing", max(float(rises.max()), 0.0), 1e-9))
    out.append(
        _check(s, "truncated_energy_above_exact", max(ed_solve(spec).energies[0] - run.ground_energy, 0.0), 1e-9)
    )
    spec = StaggeredHeisenberg(1.0, 0.5, 0.6, 1.0, 0.3, 8)
    run = finite_sweep(spec, SweepConfig(m=16, k_targets=14, n_sweeps=2))
    ref = ed_solve(spec).energies[: len(run.energies)]
    out.append(_check(s, "untruncated_energies_match_ed", np.abs(run.energies - ref).max(), 1e-8))
    return out


def detector_suite() -> list[Check]:
    s = "detector"
    out = []
    spec = StaggeredHeisenberg(1.0, 0.5, 0.6, 1.0, 0.0, 8)
    avg = sweep_average(spec, SweepConfig(m=16, k_targets=14, n_sweeps=2, target_weights="boltzmann", beta=40.0), 40.0)
    ref, _ = ed_sweep_average(ed_solve(spec), 40.0, len(avg.run.energies))
    out.append(_check(s, "sweep_average_matches_ed", abs(avg.mean - ref), 1e-8))
    rng = np.random.default_rng(5)
    psi = rng.standard_normal((4, 6, 5))
    psi /= np.linalg.norm(psi.reshape(4, -1), axis=1)[:, None, None]
    w = np.array([0.4, 0.3, 0.2, 0.1])
    d1, _ = correlation_distance(psi, w)
    d2, _ = correlation_distance(psi.transpose(0, 2, 1), w)
    out.append(_check(s, "symmetric_under_swapping_parts", abs(d1 - d2), 1e-10))
    singlet = np.array([[[0.0, 1.0], [-1.0, 0.0]]]) / math.sqrt(2)
    out.append(_check(s, "singlet_value", abs(correlation_distance(singlet, np.ones(1))[0] - 0.75), 1e-12))
    return out


SUITES: dict[str, Callable[[], list[Check]]] = {
    "numerics": numerics_suite,
    "exactdiag": exactdiag_suite,
    "freefermion": freefermion_suite,
    "dmrg": dmrg_suite,
    "detector": detector_suite,
}


def run_suites(names: list[str]) -> Iterator[Check]:
    for name in names:
        try:
            yield from SUITES[name]()
        except Exception as exc:  # a crashing suite is a failed suite
            yield Check(name, "suite_completed", False, float("nan"), 0.0, f"{type(exc).__name__}: {exc}")
