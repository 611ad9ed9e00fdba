"""Jordan-Wigner solution of the staggered chain at ``delta = 0``.

With ``sz_l = 2 c_l^dagger c_l - 1`` and ``(XX + YY)/2 = 2 (c^dagger c + h.c.)``
on each bond, the spin Hamiltonian becomes the quadratic form
``c^dagger t c + e_offset`` on an open chain, so every many-body level is a
sum of single-particle energies over an occupied subset.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import UnsupportedModelError
from .models import StaggeredHeisenberg


@dataclass(frozen=True)
class HoppingMatrix:
    n: int
    t: np.ndarray
    e_offset: float

    def modes(self) -> np.ndarray:
        """Single-particle energies, ascending."""
        return np.linalg.eigvalsh(self.t)


def jw_build(spec: StaggeredHeisenberg) -> HoppingMatrix:
    if not isinstance(spec, StaggeredHeisenberg):
        raise UnsupportedModelError(f"no free-fermion form for {type(spec).__name__}")
    if spec.delta != 0:
        raise UnsupportedModelError(f"delta={spec.delta} makes the fermions interact")
    n = spec.n
    t = np.zeros((n, n))
    for l in range(1, n):
        t[l - 1, l] = t[l, l - 1] = -spec.coupling(l)
    fields = np.array([spec.field(l) for l in range(1, n + 1)])
    t[np.diag_indices(n)] = -2.0 * fields
    return HoppingMatrix(n, t, float(fields.sum()))


def ff_ground_energy(h: HoppingMatrix) -> float:
    eps = h.modes()
    return float(eps[eps < 0].sum() + h.e_offset)


def ff_many_body_spectrum(h: HoppingMatrix, max_n: int = 16) -> np.ndarray:
    """All ``2^n`` levels by filling every subset of modes, ascending."""
    if h.n > max_n:
        raise ValueError(f"2^{h.n} levels is too many to enumerate (limit n={max_n})")
    eps = h.modes()
    levels = np.zeros(1)
    for e in eps:
        levels = np.concatenate([levels, levels + e])
    return np.sort(levels + h.e_offset)


def ff_critical_scan(
    template: StaggeredHeisenberg,
    axis: str,
    lo: float,
    hi: float,
    resolution: float,
    n: int | None = None,
) -> list[float]:
    """Parameter values in ``[lo, hi]`` where a single-particle energy changes sign.

    Each crossing is one ground-state level crossing of the spin chain. Sign
    changes are found on a grid of spacing ``resolution`` and refined by
    bisection to ``resolution / 100``.
    """
    if axis not in template.parameter_names:
        raise ValueError(f"unknown parameter {axis!r}; expected one of {template.parameter_names}")
    if not hi > lo or resolution <= 0:
        raise ValueError("need lo < hi and a positive resolution")
    base = template if n is None else template.replace(n=n)

    def modes(x: float) -> np.ndarray:
        return jw_build(base.replace(**{axis: x})).modes()

    grid = np.linspace(lo, hi, int(np.ceil((hi - lo) / resolution)) + 1)
    values = np.array([modes(x) for x in grid])
    found = []
    for i, (a, b) in enumerate(itertools.pairwise(grid)):
        for mode in np.flatnonzero(np.sign(values[i]) != np.sign(values[i + 1])):
            found.append(float(_bisect(lambda x: modes(x)[mode], a, b, resolution / 100)))
    return sorted(found)


def _bisect(f, a: float, b: float, tol: float) -> float:
    fa = f(a)
    if fa == 0:
        return a
    while b - a > tol:
        mid = 0.5 * (a + b)
        fm = f(mid)
        if fm == 0:
            return mid
        if np.sign(fm) == np.sign(fa):
            a, fa = mid, fm
        else:
            b = mid
    return 0.5 * (a + b)
