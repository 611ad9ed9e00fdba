"""Brute-force reference results for short chains.

The Hamiltonian is diagonalized sector by sector in total ``S^z`` (both
model families conserve it); the full spectrum is the union of the sector
spectra. Everything downstream treats the result as the ground truth for
the DMRG path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneracyError, SizeError
from .models import (
    DENSE_DIM_CAP,
    ModelSpec,
    algebra_for,
    assemble_dense,
    assemble_sparse,
    build_terms,
    total_sz_diagonal,
)
from .numerics import degenerate_extent, partial_trace, trace_distance

# Largest Hilbert space ed_solve accepts, per local dimension.
ED_CAP = {2: 2**14, 3: 3**10}

# beta at or above this is treated as the zero-temperature limit.
BETA_ZERO_T = 1e6

# Relative energy window defining the ground multiplet at zero temperature.
GROUND_RTOL = 1e-8


@dataclass(frozen=True)
class ThermalEnsemble:
    """Gibbs state restricted to the lowest targeted levels."""

    energies: np.ndarray
    states: np.ndarray
    beta: float
    weights: np.ndarray

    def density_matrix(self) -> np.ndarray:
        s = self.states * np.sqrt(self.weights)
        return s @ s.conj().T


def ground_multiplet(energies: np.ndarray, rtol: float = GROUND_RTOL) -> int:
    e = np.asarray(energies)
    return int(np.sum(e - e[0] <= rtol * max(1.0, abs(e[0]))))


def thermal_weights(energies: np.ndarray, beta: float | None) -> np.ndarray:
    """Boltzmann weights over the given levels, normalized over those levels only.

    ``beta=None`` or ``beta >= BETA_ZERO_T`` gives the zero-temperature limit:
    equal weight on the ground multiplet.
    """
    e = np.asarray(energies, dtype=float)
    if beta is None or beta >= BETA_ZERO_T:
        w = np.zeros_like(e)
        w[: ground_multiplet(e)] = 1.0
    else:
        if beta < 0:
            raise ValueError(f"beta must be non-negative, got {beta}")
        w = np.exp(-beta * (e - e[0]))
    return w / w.sum()


@dataclass
class EDSolution:
    spec: ModelSpec
    energies: np.ndarray
    local_dim: int
    n: int
    # (basis indices, sector eigenvalues, sector eigenvectors) per total-Sz sector
    sectors: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = field(repr=False)
    order: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.local_dim**self.n

    def lowest_states(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """The ``k`` lowest eigenpairs as full-space column vectors."""
        out = np.zeros((self.dim, k))
        for col, (s, i) in enumerate(self.order[:k]):
            idx, _, vecs = self.sectors[s]
            out[idx, col] = vecs[:, i]
        return self.energies[:k].copy(), out

    def ensemble(self, beta: float | None, k: int) -> ThermalEnsemble:
        e, v = self.lowest_states(k)
        return ThermalEnsemble(e, v, math.inf if beta is None else beta, thermal_weights(e, beta))


def ed_solve(spec: ModelSpec) -> EDSolution:
    terms = build_terms(spec)
    d, n = terms.local_dim, terms.n
    cap = ED_CAP[d]
    if d**n > cap:
        raise SizeError(f"exact diagonalization needs dimension {d**n}, above the cap {cap}")
    h = assemble_sparse(terms)
    mz = total_sz_diagonal(n, terms.algebra)
    sectors = []
    labels = []
    values = []
    for s, m in enumerate(np.unique(mz)):
        idx = np.flatnonzero(mz == m)
        block = h[idx][:, idx].toarray()
        w, v = np.linalg.eigh(block)
        sectors.append((idx, w, v))
        labels.extend((s, i) for i in range(len(w)))
        values.append(w)
    values = np.concatenate(values)
    order = np.argsort(values, kind="stable")
    return EDSolution(spec, values[order], d, n, sectors, np.array(labels)[order])


def gibbs_state(sol: EDSolution, beta: float | None, k: int) -> np.ndarray:
    """Density matrix of the Gibbs state truncated to the ``k`` lowest levels.

    ``k`` is widened so a degenerate level at the cut is never split.
    """
    if k < 1 or k > sol.dim:
        raise ValueError(f"k must lie in [1, {sol.dim}], got {k}")
    k = degenerate_extent(sol.energies, k)
    return sol.ensemble(beta, k).density_matrix()


def ed_bipartite_trace_distance(rho: np.ndarray, cut: int, local_dim: int = 2) -> float:
    """``D(rho, rho_L (x) rho_R)`` for left sites ``1..cut`` and the rest on the right."""
    dim = rho.shape[0]
    n = round(math.log(dim, local_dim))
    if local_dim**n != dim:
        raise ValueError(f"dimension {dim} is not a power of {local_dim}")
    if not 1 <= cut < n:
        raise ValueError(f"cut must lie in [1, {n - 1}], got {cut}")
    dl, dr = local_dim**cut, local_dim ** (n - cut)
    rho_l = partial_trace(rho, dl, dr, "left")
    rho_r = partial_trace(rho, dl, dr, "right")
    return trace_distance(rho, np.kron(rho_l, rho_r))


def ground_magnetizations(sol: EDSolution, rtol: float = GROUND_RTOL) -> np.ndarray:
    """Per-site ``<sz_l>``, averaged over the ground multiplet."""
    g = ground_multiplet(sol.energies, rtol)
    _, states = sol.lowest_states(g)
    probs = np.mean(np.abs(states) ** 2, axis=1).reshape((sol.local_dim,) * sol.n)
    m = np.diag(algebra_for(sol.spec).sz)
    out = np.empty(sol.n)
    for l in range(sol.n):
        marginal = probs.sum(axis=tuple(i for i in range(sol.n) if i != l))
        out[l] = float(marginal @ m)
    return out


def berry_phase_discrete(spec: ModelSpec, steps: int = 16, gap_tol: float = 1e-10) -> float:
    """Geometric phase of the ground state under ``g(phi) = prod_l exp(i sz_l phi / 2)``.

    ``H(phi) = g H g^dagger`` is diagonalized from scratch at each
    ``phi_j = j pi / steps``. Each new ground state is phase-aligned with the
    rotated previous one, and ``Im ln <g_j|g_{j+1}>`` is summed over the open
    path ``[0, pi]``.
    """
    if steps < 1:
        raise ValueError("steps must be positive")
    terms = build_terms(spec)
    if terms.local_dim**terms.n > DENSE_DIM_CAP:
        raise SizeError(f"dimension {terms.local_dim**terms.n} exceeds the cap {DENSE_DIM_CAP}")
    h = assemble_dense(terms)
    mz = total_sz_diagonal(terms.n, terms.algebra)
    dphi = math.pi / steps

    def ground(phi: float) -> np.ndarray:
        g = np.exp(0.5j * phi * mz)
        w, v = np.linalg.eigh((g[:, None] * h) * g.conj()[None, :])
        if w[1] - w[0] < gap_tol:
            raise DegeneracyError(
                f"ground state degenerate at phi={phi:.6g} (gap {w[1] - w[0]:.3e})", phi=phi
            )
        return v[:, 0]

    step = np.exp(0.5j * dphi * mz)
    prev = ground(0.0)
    phase = 0.0
    for j in range(1, steps + 1):
        cur = ground(j * dphi)
        align = np.vdot(step * prev, cur)
        cur = cur * (abs(align) / align)
        phase += float(np.angle(np.vdot(prev, cur)))
        prev = cur
    return phase


def sweep_cuts(n: int) -> list[int]:
    """Left-part sizes visited by one DMRG sweep on ``n`` sites, in order.

    The system part S grows from 2 to ``n - 2`` sites and shrinks back.
    """
    if n < 4:
        raise ValueError(f"a sweep needs at least 4 sites, got {n}")
    return list(range(2, n - 1)) + list(range(n - 2, 1, -1))


def ed_sweep_average(sol: EDSolution, beta: float | None, k: int) -> tuple[float, list[float]]:
    """Exact counterpart of the sweep-averaged trace distance.

    The Gibbs state over the ``k`` lowest levels (widened over a degenerate
    cut) is split at every cut of ``sweep_cuts`` and the distances averaged.
    """
    rho = gibbs_state(sol, beta, k)
    per_cut = {c: ed_bipartite_trace_distance(rho, c, sol.local_dim) for c in set(sweep_cuts(sol.n))}
    values = [per_cut[c] for c in sweep_cuts(sol.n)]
    return float(np.mean(values)), values
