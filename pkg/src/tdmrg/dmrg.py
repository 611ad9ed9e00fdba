"""Finite-system DMRG with multi-state targeting.

The superblock is ``L . . R``: a left block, two bare sites and a right
block. Blocks are dense matrices in a truncated basis; the superblock
Hamiltonian is applied implicitly to blocks of vectors.

A run consists of an infinite-system warmup that grows both blocks until
they cover the chain, a half sweep back to the left end, and then
up to ``n_sweeps`` sweeps. Each sweep moves the left block from 1 site to
``n - 3`` sites (truncating the left side) and back to 1 site (truncating
the right side), i.e. ``2 (n - 3)`` superblock solves.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

from .errors import DimensionError, NumericError
from .exactdiag import ground_multiplet, thermal_weights
from .models import ModelSpec, TermList, build_terms
from .numerics import LinearOperator, lanczos_lowest_k

EDGE_OPS = ("sx", "isy", "sz")

# Eigensolver tolerance during the infinite-system warmup.
WARMUP_TOL = 1e-6


@dataclass
class Block:
    """Contiguous chain segment in an orthonormal (possibly truncated) basis.

    ``edge_ops`` hold the operators of the block site adjacent to the free
    sites: site ``sites`` for a left block, site ``n - sites + 1`` for a
    right block. Enlarged blocks order their basis as ``block (x) site``
    on the left and ``site (x) block`` on the right.
    """

    sites: int
    side: Literal["left", "right"]
    h: np.ndarray
    edge_ops: dict[str, np.ndarray]
    # Set on truncated blocks: the block this one grew from and the
    # isometry from its enlarged basis to ours.
    parent: "Block | None" = field(default=None, repr=False)
    rotation: np.ndarray | None = field(default=None, repr=False)

    @property
    def basis_dim(self) -> int:
        return self.h.shape[0]


@dataclass(frozen=True)
class SweepConfig:
    m: int = 40
    k_targets: int = 14
    n_sweeps: int = 5
    lanczos_tol: float = 1e-9
    # Stop before n_sweeps once two consecutive sweeps agree on the ground
    # energy to this relative tolerance; None always runs n_sweeps.
    energy_tol: float | None = None
    target_weights: Literal["equal", "boltzmann"] = "equal"
    beta: float | None = None
    seed: int = 0
    # Superblocks at or below this dimension are diagonalized densely.
    dense_cutoff: int = 300

    def __post_init__(self) -> None:
        if self.k_targets < 1:
            raise ValueError("k_targets must be >= 1")
        if self.n_sweeps < 1:
            raise ValueError("n_sweeps must be >= 1")
        if self.target_weights not in ("equal", "boltzmann"):
            raise ValueError(f"unknown target weighting {self.target_weights!r}")


@dataclass(frozen=True)
class TruncationReport:
    discarded_weight: float
    step: int
    kept: int = 0


@dataclass(frozen=True)
class SuperblockEigs:
    energies: np.ndarray
    states: np.ndarray
    dims: tuple[int, int, int, int]

    def as_matrices(self) -> np.ndarray:
        """Target states as ``(k, dim_S, dim_E)`` with S = left block + site."""
        ml, d1, d2, mr = self.dims
        return self.states.T.reshape(-1, ml * d1, d2 * mr)


@dataclass
class SweepStep:
    """Everything an observer sees at one superblock solve."""

    sweep: int  # -1 during warmup and the initial half sweep
    position: int  # sites in the left block
    direction: Literal["right", "left"]
    eigs: SuperblockEigs
    left: Block
    right: Block
    report: TruncationReport
    final: bool  # last scheduled sweep; an early stop can end the run sooner


@dataclass
class SweepResult:
    """Summary of the last sweep that ran."""

    energies: np.ndarray
    ground_energy: float
    sweep_ground_energies: list[float]  # lowest energy seen in each sweep
    max_discarded_weight: float
    magnetizations: np.ndarray
    n_steps: int
    step_energies: list[np.ndarray] = field(default_factory=list, repr=False)


def _terms(model: ModelSpec | TermList) -> TermList:
    return model if isinstance(model, TermList) else build_terms(model)


def initial_block(model: ModelSpec | TermList, side: Literal["left", "right"]) -> Block:
    terms = _terms(model)
    alg = terms.algebra
    site = 1 if side == "left" else terms.n
    return Block(1, side, terms.site(site).copy(), {k: alg.op(k).copy() for k in EDGE_OPS})


def grow_block(block: Block, model: ModelSpec | TermList) -> Block:
    """Add the next bare site to ``block`` without truncating."""
    terms = _terms(model)
    alg = terms.algebra
    d = alg.local_dim
    eye_m = np.eye(block.basis_dim)
    eye_d = alg.identity
    if block.side == "left":
        new = block.sites + 1
        h = np.kron(block.h, eye_d) + np.kron(eye_m, terms.site(new))
        for t in terms.bond(block.sites):
            h += t.coeff * np.kron(block.edge_ops[t.left], alg.op(t.right))
        ops = {k: np.kron(eye_m, alg.op(k)) for k in EDGE_OPS}
    else:
        new = terms.n - block.sites
        h = np.kron(eye_d, block.h) + np.kron(terms.site(new), eye_m)
        for t in terms.bond(new):
            h += t.coeff * np.kron(alg.op(t.left), block.edge_ops[t.right])
        ops = {k: np.kron(alg.op(k), eye_m) for k in EDGE_OPS}
    assert h.shape == (block.basis_dim * d,) * 2
    return Block(block.sites + 1, block.side, h, ops)


class Superblock:
    """Implicit Hamiltonian of ``left . . right``.

    The two free sites are ``left.sites + 1`` and ``n - right.sites``. When
    they are not adjacent (infinite-system warmup) the pair is joined with
    the coupling of bond ``left.sites + 1``.
    """

    def __init__(self, left: Block, right: Block, model: ModelSpec | TermList):
        terms = _terms(model)
        if left.side != "left" or right.side != "right":
            raise ValueError("superblock needs a left block and a right block")
        if left.sites + right.sites + 2 > terms.n:
            raise DimensionError("blocks overlap: left + right + 2 exceeds the chain length")
        self.terms = terms
        self.left = left
        self.right = right
        self.left_enl = grow_block(left, terms)
        self.right_enl = grow_block(right, terms)
        d = terms.local_dim
        self.bond = terms.bond_matrix(left.sites + 1)
        self.dims = (left.basis_dim, d, d, right.basis_dim)
        self.dim = int(np.prod(self.dims))

    @property
    def sites(self) -> int:
        return self.left.sites + self.right.sites + 2

    def apply(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v)
        if v.shape[0] != self.dim:
            raise DimensionError(f"vector length {v.shape[0]} != superblock dimension {self.dim}")
        single = v.ndim == 1
        ml, d, _, mr = self.dims
        x = v.reshape(self.dim, -1).T.reshape(-1, ml * d, d * mr)
        y = np.matmul(self.left_enl.h, x)
        y += np.matmul(x, self.right_enl.h.T)
        y += np.matmul(self.bond, x.reshape(-1, ml, d * d, mr)).reshape(y.shape)
        out = y.reshape(-1, self.dim).T
        return out[:, 0] if single else out

    def operator(self) -> LinearOperator:
        return LinearOperator(self.dim, self.apply)

    def eigen_frame(self) -> "EigenFrame":
        return EigenFrame(self)

    def dense(self) -> np.ndarray:
        return self.apply(np.eye(self.dim))


class EigenFrame:
    """The superblock rewritten in the eigenbases of its two enlarged blocks.

    There ``H = E_L (x) 1 + 1 (x) E_R + sum_k c_k A_k (x) B_k`` with diagonal
    ``E_L``, ``E_R``. Block energies dominate the spectrum, so the diagonal
    is a sharp preconditioner for the iterative solve.
    """

    def __init__(self, sb: Superblock):
        self.sb = sb
        self.el, self.ul = np.linalg.eigh(sb.left_enl.h)
        self.er, self.ur = np.linalg.eigh(sb.right_enl.h)
        self.couplings = []
        for t in sb.terms.bond(sb.left.sites + 1):
            if t.coeff:
                a = self.ul.T @ sb.left_enl.edge_ops[t.left] @ self.ul
                b = self.ur.T @ sb.right_enl.edge_ops[t.right] @ self.ur
                self.couplings.append((t.coeff, a, b.T.copy()))
        diag = self.el[:, None] + self.er[None, :]
        for c, a, bt in self.couplings:
            diag = diag + c * np.outer(np.diag(a), np.diag(bt))
        self.diagonal = diag.ravel()
        self.shape = (len(self.el), len(self.er))

    def apply(self, v: np.ndarray) -> np.ndarray:
        # Vectors stay in (na, nb, q) layout so each coupling is two large GEMMs.
        single = v.ndim == 1
        na, nb = self.shape
        q = 1 if single else v.shape[1]
        x = v.reshape(na, nb, q)
        y = (self.el[:, None, None] + self.er[None, :, None]) * x
        for c, a, bt in self.couplings:
            t = (a @ v.reshape(na, nb * q)).reshape(na, nb, q)
            t = np.ascontiguousarray(t.transpose(0, 2, 1)).reshape(na * q, nb) @ bt
            y += c * t.reshape(na, q, nb).transpose(0, 2, 1)
        out = y.reshape(na * nb, q)
        return out[:, 0] if single else out

    def operator(self) -> LinearOperator:
        return LinearOperator(self.sb.dim, self.apply)

    def to_product_basis(self, v: np.ndarray) -> np.ndarray:
        """Map column vectors back to the ``left (x) site (x) site (x) right`` basis."""
        na, nb = self.shape
        x = v.T.reshape(-1, na, nb)
        y = np.matmul(np.matmul(self.ul, x), self.ur.T)
        return y.reshape(-1, na * nb).T

    def from_product_basis(self, v: np.ndarray) -> np.ndarray:
        na, nb = self.shape
        x = v.T.reshape(-1, na, nb)
        y = np.matmul(np.matmul(self.ul.T, x), self.ur)
        return y.reshape(-1, na * nb).T


def superblock_apply(left: Block, right: Block, spec: ModelSpec | TermList, v: np.ndarray) -> np.ndarray:
    return Superblock(left, right, spec).apply(v)


def truncate(rho: np.ndarray, m: int, step: int = 0) -> tuple[np.ndarray, TruncationReport]:
    """Keep the ``m`` dominant eigenvectors of a reduced density matrix."""
    dim = rho.shape[0]
    if dim <= m:
        return np.eye(dim), TruncationReport(0.0, step, dim)
    w, v = np.linalg.eigh(0.5 * (rho + rho.T))
    order = np.argsort(w)[::-1][:m]
    total = float(np.sum(w))
    kept = float(np.sum(w[order]))
    discarded = min(max(1.0 - kept / total, 0.0), 1.0 - 1e-300)
    return v[:, order], TruncationReport(discarded, step, m)


def _rotate(enl: Block, o: np.ndarray, parent: Block | None = None) -> Block:
    return Block(
        enl.sites,
        enl.side,
        o.T @ enl.h @ o,
        {k: o.T @ op @ o for k, op in enl.edge_ops.items()},
        parent,
        o,
    )


def _predict(
    prev: tuple[Block, Block, SuperblockEigs], left: Block, right: Block, d: int
) -> np.ndarray | None:
    """Carry the previous target states into the basis of ``left . . right``.

    Works when the new superblock is the old one, or the old one with the
    free pair moved by one site; otherwise returns None.
    """
    pl, pr, eigs = prev
    if left is pl and right is pr:
        return eigs.states
    ml, mr = left.basis_dim, right.basis_dim
    k = eigs.states.shape[1]
    psi = eigs.states.T
    if left.parent is pl and pr.parent is right:
        # moved right: fold the old left site into the new left block and
        # unfold the old right block into site (x) right.
        x = psi.reshape(k, pl.basis_dim * d, d * pr.basis_dim)
        x = left.rotation.T @ x
        x = x.reshape(k, ml * d, pr.basis_dim) @ pr.rotation.T
        return x.reshape(k, -1).T
    if right.parent is pr and pl.parent is left:
        # moved left: the mirror image.
        x = pl.rotation @ psi.reshape(k, pl.basis_dim, d * d * pr.basis_dim)
        x = x.reshape(k, ml * d * d, d * pr.basis_dim) @ right.rotation
        return x.reshape(k, -1).T
    return None


def _target_weights(energies: np.ndarray, cfg: SweepConfig) -> np.ndarray:
    if cfg.target_weights == "boltzmann":
        return thermal_weights(energies, cfg.beta)
    return np.full(len(energies), 1.0 / len(energies))


def _measure_sz(eigs: SuperblockEigs, sb: Superblock) -> dict[int, float]:
    """Ground-multiplet ``<sz>`` on the four sites touching the free pair."""
    g = ground_multiplet(eigs.energies)
    ml, d, _, mr = eigs.dims
    psi = eigs.states[:, :g].T.reshape(g, ml, d, d, mr)
    sz = np.diag(sb.terms.algebra.sz)
    prob = np.abs(psi) ** 2
    out = {
        sb.left.sites + 1: float(prob.sum(axis=(0, 1, 3, 4)) @ sz) / g,
        sb.terms.n - sb.right.sites: float(prob.sum(axis=(0, 1, 2, 4)) @ sz) / g,
    }
    lop = sb.left.edge_ops["sz"]
    rop = sb.right.edge_ops["sz"]
    out[sb.left.sites] = float(np.einsum("gaxyb,ac,gcxyb->", psi, lop, psi)) / g
    out[sb.terms.n - sb.right.sites + 1] = float(np.einsum("gaxyb,bc,gaxyc->", psi, rop, psi)) / g
    return out


class DMRGEngine:
    """One finite-system DMRG run; not shareable between threads."""

    def __init__(self, spec: ModelSpec, cfg: SweepConfig):
        if spec.n < 4:
            raise DimensionError(f"DMRG needs at least 4 sites, got {spec.n}")
        if cfg.m < spec.local_dim:
            raise ValueError(f"m={cfg.m} is below the local dimension {spec.local_dim}")
        self.spec = spec
        self.cfg = cfg
        self.terms = build_terms(spec)
        self.left: dict[int, Block] = {1: initial_block(self.terms, "left")}
        self.right: dict[int, Block] = {1: initial_block(self.terms, "right")}
        self._counter = 0
        self._prev: tuple[Block, Block, SuperblockEigs] | None = None

    def solve(
        self, left: Block, right: Block, tol: float | None = None
    ) -> tuple[Superblock, SuperblockEigs]:
        sb = Superblock(left, right, self.terms)
        k = min(self.cfg.k_targets, sb.dim)
        self._counter += 1
        seed = self.cfg.seed * 1_000_003 + self._counter
        try:
            if sb.dim <= self.cfg.dense_cutoff:
                spec = lanczos_lowest_k(sb.operator(), k, dense_cutoff=sb.dim)
                states = spec.eigenvectors
            else:
                frame = sb.eigen_frame()
                guess = None
                if self._prev is not None:
                    guess = _predict(self._prev, left, right, self.terms.local_dim)
                    if guess is not None:
                        guess = frame.from_product_basis(guess)
                spec = lanczos_lowest_k(
                    frame.operator(),
                    k,
                    tol=self.cfg.lanczos_tol if tol is None else tol,
                    seed=seed,
                    preconditioner=frame.diagonal,
                    guess=guess,
                )
                states = frame.to_product_basis(spec.eigenvectors)
        except NumericError as exc:
            raise NumericError(
                f"{exc} at left block size {left.sites}, right block size {right.sites}",
                best_residual=exc.best_residual,
            ) from exc
        eigs = SuperblockEigs(spec.eigenvalues, states, sb.dims)
        self._prev = (left, right, eigs)
        return sb, eigs

    def _truncate_side(
        self, sb: Superblock, eigs: SuperblockEigs, side: str
    ) -> tuple[Block, TruncationReport]:
        w = _target_weights(eigs.energies, self.cfg)
        psi = eigs.as_matrices() * np.sqrt(w)[:, None, None]
        if side == "left":
            rho = np.tensordot(psi, psi, axes=([0, 2], [0, 2]))
            enl = sb.left_enl
        else:
            rho = np.tensordot(psi, psi, axes=([0, 1], [0, 1]))
            enl = sb.right_enl
        o, report = truncate(rho, self.cfg.m, self._counter)
        return _rotate(enl, o, sb.left if side == "left" else sb.right), report

    def _step(self, a: int, direction: str) -> tuple[Superblock, SuperblockEigs, TruncationReport]:
        n = self.terms.n
        b = n - 2 - a
        sb, eigs = self.solve(self.left[a], self.right[b])
        if direction == "right":
            blk, rep = self._truncate_side(sb, eigs, "left")
            self.left[a + 1] = blk
        else:
            blk, rep = self._truncate_side(sb, eigs, "right")
            self.right[b + 1] = blk
        return sb, eigs, rep

    def warmup(self, observer: Callable[[SweepStep], None] | None = None) -> int:
        n = self.terms.n
        a = b = 1
        # Warmup bases only seed the sweeps, so they need not be tight.
        tol = max(self.cfg.lanczos_tol, WARMUP_TOL)
        while a + b + 2 < n:
            sb, eigs = self.solve(self.left[a], self.right[b], tol)
            blk, rep = self._truncate_side(sb, eigs, "left")
            self.left[a + 1] = blk
            if a + b + 4 <= n:
                self.right[b + 1], _ = self._truncate_side(sb, eigs, "right")
                b += 1
            if observer:
                observer(SweepStep(-1, a, "right", eigs, sb.left, sb.right, rep, False))
            a += 1
        # The warmup superblocks are shorter effective chains whose low states
        # can sit in other S^z sectors; a guess carried over from them can
        # trap the eigensolver away from the true ground sector.
        self._prev = None
        # Half sweep to the left end so right blocks of every size exist.
        for pos in range(a, 0, -1):
            sb, eigs, rep = self._step(pos, "left")
            if observer:
                observer(SweepStep(-1, pos, "left", eigs, sb.left, sb.right, rep, False))
        return a

    def run(self, observer: Callable[[SweepStep], None] | None = None) -> SweepResult:
        n = self.terms.n
        cfg = self.cfg
        self.warmup(observer)
        schedule = [(a, "right") for a in range(1, n - 2)] + [(a, "left") for a in range(n - 3, 0, -1)]
        sweep_minima: list[float] = []
        for s in range(cfg.n_sweeps):
            final = s == cfg.n_sweeps - 1
            energies: list[np.ndarray] = []
            best = None
            max_dw = 0.0
            mags: dict[int, float] = {}
            for a, direction in schedule:
                sb, eigs, rep = self._step(a, direction)
                energies.append(eigs.energies)
                max_dw = max(max_dw, rep.discarded_weight)
                mags.update(_measure_sz(eigs, sb))
                if best is None or eigs.energies[0] < best[0]:
                    best = eigs.energies
                if observer:
                    observer(SweepStep(s, a, direction, eigs, sb.left, sb.right, rep, final))
            sweep_minima.append(float(best[0]))
            if cfg.energy_tol is not None and s >= 1:
                change = abs(sweep_minima[-2] - sweep_minima[-1])
                if change <= cfg.energy_tol * max(1.0, abs(sweep_minima[-1])):
                    break
        return SweepResult(
            energies=np.array(best),
            ground_energy=float(best[0]),
            sweep_ground_energies=sweep_minima,
            max_discarded_weight=max_dw,
            magnetizations=np.array([mags[l] for l in range(1, n + 1)]),
            n_steps=len(schedule),
            step_energies=energies,
        )


def finite_sweep(
    spec: ModelSpec, cfg: SweepConfig, observer: Callable[[SweepStep], None] | None = None
) -> SweepResult:
    return DMRGEngine(spec, cfg).run(observer)
