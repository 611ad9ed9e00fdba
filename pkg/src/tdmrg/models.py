"""Spin algebras and the two Hamiltonian families as site plus bond terms.

All operator matrices are real: ``S^y`` is carried as ``isy = i S^y`` so an
``XX + YY`` bond reads ``sx (x) sx - isy (x) isy``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Literal, NamedTuple, Union

import numpy as np
import scipy.sparse as sp

from .errors import SizeError

# Dense assembly cap (matrix dimension). 2**14 doubles squared is ~2 GB.
DENSE_DIM_CAP = 2**14


@dataclass(frozen=True)
class SpinAlgebra:
    local_dim: int
    sx: np.ndarray
    isy: np.ndarray
    sz: np.ndarray
    sz2: np.ndarray
    identity: np.ndarray

    def op(self, name: str) -> np.ndarray:
        return getattr(self, name)


def spin_algebra(s: Literal["half", "one"]) -> SpinAlgebra:
    """Local operators; spin-1/2 uses Pauli matrices (eigenvalues +-1)."""
    if s == "half":
        sx = np.array([[0.0, 1.0], [1.0, 0.0]])
        isy = np.array([[0.0, 1.0], [-1.0, 0.0]])
        sz = np.diag([1.0, -1.0])
    elif s == "one":
        r = 1.0 / math.sqrt(2.0)
        sx = r * np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
        isy = r * np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 1.0], [0.0, -1.0, 0.0]])
        sz = np.diag([1.0, 0.0, -1.0])
    else:
        raise ValueError(f"unknown spin {s!r}; expected 'half' or 'one'")
    d = sz.shape[0]
    return SpinAlgebra(d, sx, isy, sz, sz @ sz, np.eye(d))


def _check_common(n: int, values: dict[str, float]) -> None:
    if int(n) != n or n < 2:
        raise ValueError(f"chain length must be an integer >= 2, got {n}")
    for name, value in values.items():
        if not math.isfinite(value):
            raise ValueError(f"parameter {name} must be finite, got {value}")


@dataclass(frozen=True)
class Spin1XXZ:
    """``sum_i (Sx Sx + Sy Sy + jz Sz Sz) + d sum_i (Sz)^2`` on an open chain."""

    jz: float = 1.0
    d: float = 0.0
    n: int = 8

    kind = "spin1_xxz"
    parameter_names = ("jz", "d")

    def __post_init__(self) -> None:
        _check_common(self.n, {"jz": self.jz, "d": self.d})

    @property
    def local_dim(self) -> int:
        return 3

    def parameters(self) -> dict[str, float]:
        return {"jz": self.jz, "d": self.d}

    def replace(self, **changes) -> "Spin1XXZ":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class StaggeredHeisenberg:
    """Spin-1/2 chain with staggered coupling and staggered field.

    ``H = -sum_l [ (J_l/2)(XX + YY + delta ZZ) + B_l Z_l ]`` with
    ``J_l = j + (-1)^l j_alt`` and ``B_l = b + (-1)^l b_alt``, sites
    counted from 1, open boundary.
    """

    j: float = 1.0
    j_alt: float = 0.0
    b: float = 0.0
    b_alt: float = 0.0
    delta: float = 0.0
    n: int = 8

    kind = "staggered"
    parameter_names = ("j", "j_alt", "b", "b_alt", "delta")

    def __post_init__(self) -> None:
        _check_common(self.n, self.parameters())

    @property
    def local_dim(self) -> int:
        return 2

    def parameters(self) -> dict[str, float]:
        return {
            "j": self.j,
            "j_alt": self.j_alt,
            "b": self.b,
            "b_alt": self.b_alt,
            "delta": self.delta,
        }

    def coupling(self, l: int) -> float:
        return self.j + (-1) ** l * self.j_alt

    def field(self, l: int) -> float:
        return self.b + (-1) ** l * self.b_alt

    def replace(self, **changes) -> "StaggeredHeisenberg":
        return dataclasses.replace(self, **changes)


ModelSpec = Union[Spin1XXZ, StaggeredHeisenberg]

MODEL_KINDS = {cls.kind: cls for cls in (Spin1XXZ, StaggeredHeisenberg)}


def algebra_for(spec: ModelSpec) -> SpinAlgebra:
    return spin_algebra("one" if isinstance(spec, Spin1XXZ) else "half")


class BondTerm(NamedTuple):
    left: str
    right: str
    coeff: float


@dataclass(frozen=True)
class TermList:
    """Per-site matrices and per-bond operator products.

    ``bonds[i]`` couples sites ``i`` and ``i + 1`` in 0-based storage,
    i.e. bond ``l = i + 1`` between sites ``l`` and ``l + 1``.
    """

    algebra: SpinAlgebra
    site_terms: tuple[np.ndarray, ...]
    bonds: tuple[tuple[BondTerm, ...], ...]

    @property
    def n(self) -> int:
        return len(self.site_terms)

    @property
    def local_dim(self) -> int:
        return self.algebra.local_dim

    def site(self, l: int) -> np.ndarray:
        """Site term of 1-based site ``l``."""
        return self.site_terms[l - 1]

    def bond(self, l: int) -> tuple[BondTerm, ...]:
        """Bond terms between 1-based sites ``l`` and ``l + 1``."""
        return self.bonds[l - 1]

    def bond_matrix(self, l: int) -> np.ndarray:
        """Two-site matrix of bond ``l`` on ``site_l (x) site_{l+1}``."""
        a = self.algebra
        d = a.local_dim
        out = np.zeros((d * d, d * d))
        for t in self.bond(l):
            out += t.coeff * np.kron(a.op(t.left), a.op(t.right))
        return out


def build_terms(spec: ModelSpec) -> TermList:
    alg = algebra_for(spec)
    n = spec.n
    if isinstance(spec, Spin1XXZ):
        site = tuple(spec.d * alg.sz2 for _ in range(n))
        bond = (
            BondTerm("sx", "sx", 1.0),
            BondTerm("isy", "isy", -1.0),
            BondTerm("sz", "sz", spec.jz),
        )
        bonds = tuple(bond for _ in range(n - 1))
    elif isinstance(spec, StaggeredHeisenberg):
        site = tuple(-spec.field(l) * alg.sz for l in range(1, n + 1))
        bonds = []
        for l in range(1, n):
            c = -0.5 * spec.coupling(l)
            bonds.append(
                (
                    BondTerm("sx", "sx", c),
                    BondTerm("isy", "isy", -c),
                    BondTerm("sz", "sz", c * spec.delta),
                )
            )
        bonds = tuple(bonds)
    else:
        raise TypeError(f"not a model spec: {spec!r}")
    return TermList(alg, site, bonds)


def _embed(ops: dict[int, np.ndarray], n: int, d: int) -> sp.csr_matrix:
    """``op_1 (x) op_2 (x) ...`` with identities on sites missing from ``ops`` (0-based)."""
    out = sp.identity(1, format="csr")
    run = 0
    for i in range(n):
        if i in ops:
            if run:
                out = sp.kron(out, sp.identity(d**run), format="csr")
                run = 0
            out = sp.kron(out, sp.csr_matrix(ops[i]), format="csr")
        else:
            run += 1
    if run:
        out = sp.kron(out, sp.identity(d**run), format="csr")
    return out


def assemble_sparse(terms: TermList) -> sp.csr_matrix:
    """Full Hamiltonian as a sparse matrix, site 1 most significant."""
    n, d, alg = terms.n, terms.local_dim, terms.algebra
    h = sp.csr_matrix((d**n, d**n))
    for i, site in enumerate(terms.site_terms):
        if np.any(site):
            h = h + _embed({i: site}, n, d)
    for i, bond in enumerate(terms.bonds):
        for t in bond:
            if t.coeff:
                h = h + t.coeff * _embed({i: alg.op(t.left), i + 1: alg.op(t.right)}, n, d)
    return h.tocsr()


def assemble_dense(terms: TermList, cap: int = DENSE_DIM_CAP) -> np.ndarray:
    dim = terms.local_dim**terms.n
    if dim > cap:
        raise SizeError(f"dense Hamiltonian of dimension {dim} exceeds the cap {cap}")
    return assemble_sparse(terms).toarray()


def site_sz_values(algebra: SpinAlgebra) -> np.ndarray:
    return np.diag(algebra.sz).copy()


def total_sz_diagonal(n: int, algebra: SpinAlgebra) -> np.ndarray:
    """Diagonal of ``sum_l sz_l`` in the product basis."""
    m = site_sz_values(algebra)
    tot = np.zeros(1)
    for _ in range(n):
        tot = (tot[:, None] + m[None, :]).ravel()
    return tot
