"""Sweep-averaged trace distance between a superblock state and its marginals.

At each DMRG step the targeted states define a truncated Gibbs state
``rho`` on ``S . . E`` where S is the left block plus the first free site
and E the second free site plus the right block. The correlation measure is
``D(rho, rho_S (x) rho_E)``.

In the joint eigenbasis of the marginals, ``rho_S (x) rho_E`` is a diagonal
``P`` and ``rho = C C^T`` with ``C`` holding the ``K`` weighted target
states as columns. Since ``Tr(rho - P) = 0`` the trace distance is the sum
of the positive eigenvalues of ``C C^T - P``; each such eigenvalue ``x``
solves ``lambda_j(C^T (P + x)^-1 C) = 1`` for one ``j``, a ``K x K``
problem. Small problems are diagonalized densely instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from scipy.optimize import brentq

from .dmrg import SuperblockEigs, SweepConfig, SweepResult, SweepStep, finite_sweep
from .exactdiag import thermal_weights
from .models import ModelSpec

# Above this many product states the secular form replaces dense diagonalization.
DENSE_SUPPORT_MAX = 400

# Marginal eigenvalues at or below this fraction of the largest count as zero
# when reporting support_dim.
RANK_RTOL = 1e-14

# Positive eigenvalues of rho - rho_S (x) rho_E below this are ignored.
ROOT_FLOOR = 1e-18


@dataclass(frozen=True)
class StepCorrelation:
    step: int
    block_sizes: tuple[int, int]
    trace_distance: float
    support_dim: int
    direction: str = "right"


@dataclass(frozen=True)
class SweepAverage:
    mean: float
    per_step: list[StepCorrelation]
    n_steps: int
    run: SweepResult | None = field(default=None, repr=False)


@dataclass(frozen=True)
class ScanRecord:
    parameters: dict[str, float]
    avg_trace_distance: float
    ground_energy: float
    k_energies: np.ndarray
    geometric_phase: float
    max_discarded_weight: float
    support_dim_max: int = 0
    error: str | None = None


@dataclass(frozen=True)
class JumpReport:
    axis: str
    location: float
    jump_size: float
    threshold_used: float


def _weights(energies: np.ndarray, beta: float | None, mode: str) -> np.ndarray:
    if mode == "ground_only":
        return thermal_weights(energies, None)
    if mode == "boltzmann":
        return thermal_weights(energies, beta)
    raise ValueError(f"unknown weighting {mode!r}; expected 'boltzmann' or 'ground_only'")


def correlation_distance(psi: np.ndarray, weights: np.ndarray) -> tuple[float, int]:
    """``D(rho, rho_S (x) rho_E)`` for ``rho = sum_t w_t |psi_t><psi_t|``.

    ``psi`` has shape ``(K, dim_S, dim_E)``. Returns the distance and the
    dimension of the joint support of the marginals.
    """
    psi = np.asarray(psi, dtype=float)
    w = np.asarray(weights, dtype=float)
    keep = w > 0
    a = psi[keep] * np.sqrt(w[keep])[:, None, None]
    k, ds, de = a.shape
    if ds * de == 1:
        return 0.0, 1
    rho_s = np.einsum("kab,kcb->ac", a, a)
    rho_e = np.einsum("kab,kac->bc", a, a)
    ls, us = np.linalg.eigh(rho_s)
    le, ue = np.linalg.eigh(rho_e)
    ls = np.clip(ls, 0.0, None)
    le = np.clip(le, 0.0, None)
    support = int(np.sum(ls > RANK_RTOL * ls.max())) * int(np.sum(le > RANK_RTOL * le.max()))
    if ds * de <= DENSE_SUPPORT_MAX:
        flat = a.reshape(k, ds * de)
        delta = flat.T @ flat - np.kron(rho_s, rho_e)
        ev = np.linalg.eigvalsh(0.5 * (delta + delta.T))
        return _clip01(0.5 * float(np.sum(np.abs(ev)))), support
    c = np.matmul(np.matmul(us.T, a), ue).reshape(k, ds * de)
    p = np.outer(ls, le).ravel()
    return _clip01(_positive_part(c, p)), support


def _positive_part(c: np.ndarray, p: np.ndarray) -> float:
    """Sum of positive eigenvalues of ``C^T C - diag(p)`` (rows of ``c`` are states)."""

    def lam(x: float) -> np.ndarray:
        m = (c / (p + x)) @ c.T
        return np.linalg.eigvalsh(0.5 * (m + m.T))[::-1]

    hi = float(np.sum(c * c)) + 1e-12
    at_floor = lam(ROOT_FLOOR)
    total = 0.0
    for j in np.flatnonzero(at_floor > 1.0):
        # Each root adds to the distance directly, so an absolute 1e-15 is plenty.
        total += brentq(lambda x: lam(x)[j] - 1.0, ROOT_FLOOR, hi, xtol=1e-15, rtol=1e-15, maxiter=300)
    return total


def _clip01(x: float) -> float:
    return min(max(x, 0.0), 1.0)


def step_correlation(
    eigs: SuperblockEigs,
    beta: float | None,
    weights: Literal["boltzmann", "ground_only"] = "boltzmann",
    *,
    step: int = 0,
    block_sizes: tuple[int, int] = (0, 0),
    direction: str = "right",
) -> StepCorrelation:
    """Trace distance of the step's Gibbs state from the product of its S/E marginals.

    ``beta=None`` (or ``weights="ground_only"``) puts equal weight on the
    ground multiplet.
    """
    if len(eigs.energies) == 0:
        raise ValueError("no target states")
    w = _weights(eigs.energies, beta, weights)
    d, support = correlation_distance(eigs.as_matrices(), w)
    return StepCorrelation(step, block_sizes, d, support, direction)


def sweep_average(
    spec: ModelSpec,
    cfg: SweepConfig,
    beta: float | None,
    weights: Literal["boltzmann", "ground_only"] = "boltzmann",
) -> SweepAverage:
    """Average of ``step_correlation`` over every step of the last sweep."""
    held: dict[int, list[SweepStep]] = {}

    def observe(st: SweepStep) -> None:
        if st.sweep < 0:
            return
        if st.sweep not in held:
            held.clear()
        held.setdefault(st.sweep, []).append(st)

    run = finite_sweep(spec, cfg, observe)
    (steps,) = held.values()
    per_step = [
        step_correlation(
            st.eigs,
            beta,
            weights,
            step=st.position,
            block_sizes=(st.left.sites + 1, st.right.sites + 1),
            direction=st.direction,
        )
        for st in steps
    ]
    mean = float(np.mean([s.trace_distance for s in per_step]))
    return SweepAverage(mean, per_step, len(per_step), run)


def geometric_phase(spec: ModelSpec, magnetizations: Sequence[float]) -> float:
    """Ground-state geometric phase from per-site ``<sz>``: ``(pi/2) sum_l <sz_l>``."""
    m = np.asarray(magnetizations, dtype=float)
    if m.shape != (spec.n,):
        raise ValueError(f"expected {spec.n} magnetizations, got shape {m.shape}")
    return 0.5 * math.pi * float(m.sum())


def analyze_point(
    spec: ModelSpec,
    cfg: SweepConfig,
    beta: float | None,
    weights: Literal["boltzmann", "ground_only"] = "boltzmann",
) -> ScanRecord:
    avg = sweep_average(spec, cfg, beta, weights)
    run = avg.run
    return ScanRecord(
        parameters=spec.parameters(),
        avg_trace_distance=avg.mean,
        ground_energy=run.ground_energy,
        k_energies=run.energies,
        geometric_phase=geometric_phase(spec, run.magnetizations),
        max_discarded_weight=run.max_discarded_weight,
        support_dim_max=max(s.support_dim for s in avg.per_step),
    )


def detect_jumps(
    records: Sequence[ScanRecord],
    axis: str,
    threshold_factor: float = 10.0,
    min_jump: float = 1e-6,
) -> list[JumpReport]:
    """Intervals along ``axis`` where the averaged trace distance jumps.

    An interval is flagged when ``|dD|`` exceeds both ``threshold_factor``
    times the median of all consecutive ``|dD|`` and the absolute floor
    ``min_jump``; the floor keeps rounding noise on a flat series from
    being reported.
    """
    if len(records) < 4:
        raise ValueError(f"need at least 4 records, got {len(records)}")
    x = np.array([r.parameters[axis] for r in records], dtype=float)
    dx = np.diff(x)
    if np.any(dx <= 0) or not np.allclose(dx, dx[0], rtol=1e-6, atol=0.0):
        raise ValueError(f"records are not on a uniform increasing grid along {axis!r}")
    d = np.array([r.avg_trace_distance for r in records], dtype=float)
    jumps = np.abs(np.diff(d))
    if not np.any(jumps):
        return []
    threshold = max(threshold_factor * float(np.median(jumps)), min_jump)
    return [
        JumpReport(axis, float(0.5 * (x[i] + x[i + 1])), float(jumps[i]), threshold)
        for i in np.flatnonzero(jumps > threshold)
    ]
