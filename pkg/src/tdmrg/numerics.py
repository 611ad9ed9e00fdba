"""Dense linear algebra and a block Lanczos eigensolver.

Matrices are plain ``numpy`` arrays. Everything here is a pure function of
its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np

from .errors import DimensionError, NumericError

# Largest dimension kron will produce; beyond this a dense matrix is hopeless anyway.
MAX_DENSE_DIM = 1 << 20

# Relative gap under which two eigenvalues count as one degenerate level.
DEGENERACY_RTOL = 1e-9


@dataclass(frozen=True)
class Spectrum:
    """Ascending eigenvalues with column eigenvectors."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __len__(self) -> int:
        return len(self.eigenvalues)

    def lowest(self, k: int) -> "Spectrum":
        return Spectrum(self.eigenvalues[:k], self.eigenvectors[:, :k])


@dataclass(frozen=True)
class LinearOperator:
    """Symmetric operator known only through its action.

    ``apply`` must accept either a vector of length ``dim`` or a
    ``(dim, p)`` block of column vectors and return the same shape.
    """

    dim: int
    apply: Callable[[np.ndarray], np.ndarray]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.apply(x)

    @classmethod
    def from_dense(cls, a: np.ndarray) -> "LinearOperator":
        a = np.asarray(a)
        _check_square(a)
        return cls(a.shape[0], lambda x: a @ x)

    def todense(self) -> np.ndarray:
        return np.asarray(self.apply(np.eye(self.dim)))


def _check_square(a: np.ndarray) -> None:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {a.shape}")


def is_symmetric(a: np.ndarray, rtol: float = 1e-12) -> bool:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    scale = np.max(np.abs(a)) if a.size else 0.0
    return bool(np.max(np.abs(a - a.conj().T), initial=0.0) <= rtol * max(scale, 1e-300))


def sym_eig(a: np.ndarray) -> Spectrum:
    """Full eigendecomposition of a real symmetric (or Hermitian) matrix."""
    a = np.asarray(a)
    _check_square(a)
    if not is_symmetric(a, rtol=1e-10):
        raise DimensionError("sym_eig requires a symmetric matrix")
    try:
        w, v = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigh did not converge for a {a.shape[0]}x{a.shape[0]} matrix") from exc
    return Spectrum(w, v)


def degenerate_extent(eigenvalues: np.ndarray, k: int, rtol: float = DEGENERACY_RTOL) -> int:
    """Smallest k' >= k that does not split a degenerate level at the cut."""
    w = np.asarray(eigenvalues)
    k = min(k, len(w))
    while k < len(w) and abs(w[k] - w[k - 1]) <= rtol * max(1.0, abs(w[k - 1])):
        k += 1
    return k


def _orthonormalize(w: np.ndarray, basis: np.ndarray | None, drop: float = 1e-8) -> np.ndarray:
    """Columns of ``w`` made orthonormal and orthogonal to ``basis``; dependent ones dropped."""
    norms = np.linalg.norm(w, axis=0)
    w = w[:, norms > 0] / norms[norms > 0]
    # The second round cleans up what rescaling nearly dependent columns amplified.
    for round_ in range(2):
        for _ in range(2 - round_):
            if basis is not None and basis.shape[1]:
                w = w - basis @ (basis.T @ w)
        if w.shape[1] == 0:
            return w
        s, u = np.linalg.eigh(w.T @ w)
        good = s > (drop * drop if round_ == 0 else 0.25)
        w = (w @ u[:, good]) / np.sqrt(s[good])
    return w


def lanczos_lowest_k(
    op: LinearOperator,
    k: int,
    tol: float = 1e-9,
    max_iter: int = 1000,
    *,
    seed: int = 0,
    block_size: int | None = None,
    max_basis: int | None = None,
    dense_cutoff: int = 0,
    expand_degenerate: bool = True,
    preconditioner: np.ndarray | None = None,
    guess: np.ndarray | None = None,
) -> Spectrum:
    """Lowest ``k`` eigenpairs of a symmetric implicit operator.

    Block Lanczos: the basis grows by the residual block of the unconverged
    Ritz pairs, fully reorthogonalized against every stored vector, and is
    thick-restarted from the lowest Ritz vectors once it holds
    ``max_basis`` columns. A pair is converged when
    ``|A v - lambda v| <= tol * max(1, |lambda|)``.

    If the ``k``-th and ``(k+1)``-th eigenvalues coincide within
    ``DEGENERACY_RTOL`` the result is widened to hold the whole multiplet,
    so more than ``k`` pairs may come back. A block of ``p`` vectors can
    only see ``p`` copies of one eigenvalue, so a level that fills the block
    triggers a fresh solve with a doubled block.

    ``preconditioner`` is an approximate diagonal of the operator; when
    given, residuals are scaled by ``1 / (theta - diagonal)`` before they
    enter the basis (Davidson's correction).

    ``guess`` columns, if given, seed the starting block. The rest is
    random, or with a preconditioner, unit vectors on its lowest entries. Operators with ``dim <= dense_cutoff`` are materialized and
    solved densely.
    """
    n = op.dim
    if k < 1 or k > n:
        raise DimensionError(f"requested {k} eigenpairs of a dimension-{n} operator")

    want = min(k + 1, n)
    p = min(n, max(block_size or 0, want + 2, 8))
    if n <= max(dense_cutoff, 3 * p):
        spec = sym_eig(_symmetrized(op.todense()))
        kk = degenerate_extent(spec.eigenvalues, k) if expand_degenerate else k
        return spec.lowest(kk)

    rng = np.random.default_rng(seed)
    cap = min(n, max_basis or max(5 * p, 80))
    v = np.empty((n, cap))
    av = np.empty((n, cap))
    h = np.empty((cap, cap))
    j = 0
    best = np.inf

    def extend(w: np.ndarray) -> None:
        nonlocal j
        q = w.shape[1]
        aw = _as_block(op(w), n)
        v[:, j : j + q] = w
        av[:, j : j + q] = aw
        h[:j, j : j + q] = v[:, :j].T @ aw
        h[j : j + q, :j] = h[:j, j : j + q].T
        h[j : j + q, j : j + q] = w.T @ aw
        j += q

    def restart(keep_vectors: np.ndarray) -> None:
        # Rebuilding A V from scratch stops the projected matrix drifting.
        nonlocal j
        j = 0
        extend(_orthonormalize(keep_vectors, None))

    def thick_restart(yk: np.ndarray, thetak: np.ndarray) -> None:
        # Rotate the basis onto the kept Ritz vectors; no new products needed.
        nonlocal j
        q = yk.shape[1]
        v[:, :q] = v[:, :j] @ yk
        av[:, :q] = av[:, :j] @ yk
        h[:q, :q] = np.diag(thetak)
        j = q

    start = rng.standard_normal((n, p))
    if preconditioner is not None:
        # Davidson's usual start: unit vectors on the lowest diagonal entries.
        # A diagonal-preconditioned expansion only refines what the start
        # block already overlaps, so random columns alone can miss the
        # ground state entirely.
        lowest = np.argsort(preconditioner, kind="stable")[:p]
        start = 1e-3 * start / np.sqrt(n)
        start[lowest, np.arange(lowest.size)] += 1.0
    if guess is not None:
        g = _as_block(guess, n)[:, :p]
        start[:, : g.shape[1]] = g
    extend(_orthonormalize(start, None))

    for _ in range(max_iter):
        theta, y = np.linalg.eigh(0.5 * (h[:j, :j] + h[:j, :j].T))
        nw = min(want, j)
        x = v[:, :j] @ y[:, :nw]
        r = av[:, :j] @ y[:, :nw] - x * theta[:nw]
        res = np.linalg.norm(r, axis=0)
        scale = np.maximum(1.0, np.abs(theta[:nw]))
        conv = res <= tol * scale
        best = min(best, float(np.max(res / scale)))

        if nw == want and conv.all():
            kk = degenerate_extent(theta, k) if expand_degenerate else k
            if kk >= want and want < n:
                want = min(kk + 1, n)
                if want + 2 > p:
                    return lanczos_lowest_k(
                        op, want - 1, tol, max_iter, seed=seed + 1, block_size=want + 2,
                        max_basis=max_basis, dense_cutoff=dense_cutoff,
                        expand_degenerate=expand_degenerate, preconditioner=preconditioner,
                        guess=guess,
                    )
                continue
            kk = min(kk, nw)
            if expand_degenerate and _max_multiplicity(theta[: kk + 1]) >= p:
                return lanczos_lowest_k(
                    op, k, tol, max_iter, seed=seed + 1, block_size=2 * p,
                    max_basis=max_basis, dense_cutoff=dense_cutoff,
                    expand_degenerate=True, preconditioner=preconditioner,
                        guess=guess,
                )
            q, _ = np.linalg.qr(x[:, :kk])
            true_res = np.linalg.norm(_as_block(op(q), n) - q * theta[:kk], axis=0)
            if np.all(true_res <= tol * scale[:kk]):
                return Spectrum(theta[:kk].copy(), q * np.sign(np.sum(q * x[:, :kk], axis=0)))
            restart(v[:, :j] @ y[:, : min(j, want + p)])
            continue

        new = r[:, ~conv]
        if preconditioner is not None:
            den = theta[:nw][~conv][None, :] - preconditioner[:, None]
            den = np.where(np.abs(den) < 1e-4, np.copysign(1e-4, den), den)
            # Olsen's correction: remove the part of M^-1 r along M^-1 x,
            # which a sharp diagonal would otherwise hand back unchanged.
            xs = x[:, ~conv]
            mr = new / den
            mx = xs / den
            eps = np.sum(xs * mr, axis=0) / np.sum(xs * mx, axis=0)
            new = mr - mx * eps
        if j + new.shape[1] > cap:
            keep = min(j, want + p // 2, cap - new.shape[1])
            thick_restart(y[:, :keep], theta[:keep])
        w = _orthonormalize(new, v[:, :j])
        if w.shape[1] == 0:
            w = _orthonormalize(rng.standard_normal((n, min(p, cap - j))), v[:, :j])
            if w.shape[1] == 0:
                restart(v[:, :j] @ y[:, : min(j, want + p)])
                continue
        extend(w)

    raise NumericError(
        f"Lanczos stagnated after {max_iter} iterations (dim {n}, k {k}); "
        f"best relative residual {best:.3e}",
        best_residual=best,
    )


def _max_multiplicity(w: np.ndarray, rtol: float = DEGENERACY_RTOL) -> int:
    best = run = 1
    for a, b in zip(w[:-1], w[1:]):
        run = run + 1 if abs(b - a) <= rtol * max(1.0, abs(a)) else 1
        best = max(best, run)
    return best


def _as_block(y: np.ndarray, n: int) -> np.ndarray:
    y = np.asarray(y)
    return y.reshape(n, -1)


def _symmetrized(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.conj().T)


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    rows = a.shape[0] * b.shape[0]
    cols = a.shape[1] * b.shape[1]
    if rows > MAX_DENSE_DIM or cols > MAX_DENSE_DIM:
        raise DimensionError(f"kron result {rows}x{cols} exceeds {MAX_DENSE_DIM}")
    return np.kron(a, b)


def partial_trace(
    rho: np.ndarray, dim_left: int, dim_right: int, keep: Literal["left", "right"]
) -> np.ndarray:
    """Marginal of a bipartite operator on ``left (x) right``."""
    rho = np.asarray(rho)
    d = dim_left * dim_right
    if rho.shape != (d, d):
        raise DimensionError(
            f"operator of shape {rho.shape} does not factor as {dim_left} x {dim_right}"
        )
    t = rho.reshape(dim_left, dim_right, dim_left, dim_right)
    if keep == "left":
        return np.einsum("ajbj->ab", t)
    if keep == "right":
        return np.einsum("iaib->ab", t)
    raise ValueError(f"keep must be 'left' or 'right', not {keep!r}")


def trace_distance(rho1: np.ndarray, rho2: np.ndarray) -> float:
    """Half the sum of absolute eigenvalues of ``rho1 - rho2``."""
    rho1 = np.asarray(rho1)
    rho2 = np.asarray(rho2)
    if rho1.shape != rho2.shape:
        raise DimensionError(f"shape mismatch {rho1.shape} vs {rho2.shape}")
    _check_square(rho1)
    d = rho1 - rho2
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(_symmetrized(d)))))
