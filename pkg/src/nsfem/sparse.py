"""CSR assembly and sparse direct solves.

Assembly is two-pass: :func:`build_pattern` fixes the symbolic structure once
per mesh, and every subsequent assembly scatters element blocks into the
value array through a precomputed position map.  Accumulation uses
``np.bincount`` whose summation order is the flattened cell order, so results
are bitwise reproducible.
"""

from __future__ import annotations

import glob
import logging
import os
import sys
from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10


class SingularSystemError(RuntimeError):
    """Factorisation failed or produced an unusable solution."""

    def __init__(self, message: str, pivot: int | None = None):
        if pivot is not None:
            message = f"{message} (pivot at row/column {pivot})"
        super().__init__(message)
        self.pivot = pivot


class PatternError(IndexError):
    """An entry was added outside the symbolic pattern."""


@dataclass
class SparsePattern:
    """Symbolic CSR structure plus the cell scatter map."""

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    scatter: np.ndarray | None = None  # (n_cells, nloc, nloc) -> data index
    cell_dofs: np.ndarray | None = None

    @property
    def nnz(self) -> int:
        return len(self.indices)

    def zeros(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (np.zeros(self.nnz), self.indices, self.indptr), shape=(self.n, self.n)
        )

    def positions(self, rows, cols) -> np.ndarray:
        """Data-array positions of entries ``(rows[i], cols[i])``."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        start = self.indptr[rows]
        stop = self.indptr[rows + 1]
        # global search over the concatenated (row, col) keys
        keys = np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.indptr)) * self.n + self.indices
        want = rows * self.n + cols
        pos = np.searchsorted(keys, want)
        pos = np.minimum(pos, len(keys) - 1)
        bad = (keys[pos] != want) | (pos < start) | (pos >= stop)
        if bad.any():
            i = int(np.nonzero(bad)[0][0])
            raise PatternError(f"entry ({rows.flat[i]}, {cols.flat[i]}) is outside the pattern")
        return pos


@dataclass
class SparseSystem:
    """Assembled matrix and right-hand side."""

    matrix: sp.csr_matrix
    rhs: np.ndarray

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def build_pattern(cell_dofs: np.ndarray, n: int) -> SparsePattern:
    """Symbolic pattern: ``(i, j)`` present iff dofs ``i`` and ``j`` share a cell."""
    cell_dofs = np.asarray(cell_dofs, dtype=np.int64)
    ne, nloc = cell_dofs.shape
    rows = np.repeat(cell_dofs, nloc, axis=1).ravel()
    cols = np.tile(cell_dofs, (1, nloc)).ravel()
    keys = np.unique(rows * n + cols)
    r, c = np.divmod(keys, n)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(r, minlength=n), out=indptr[1:])
    pattern = SparsePattern(n, indptr, c.astype(np.int64))
    pattern.scatter = np.searchsorted(keys, rows * n + cols).reshape(ne, nloc, nloc)
    pattern.cell_dofs = cell_dofs
    return pattern


def assemble_matrix(pattern: SparsePattern, local: np.ndarray) -> sp.csr_matrix:
    """Scatter all cell blocks ``(n_cells, nloc, nloc)`` into a CSR matrix."""
    data = np.bincount(
        pattern.scatter.ravel(), weights=local.ravel(), minlength=pattern.nnz
    )
    return sp.csr_matrix((data, pattern.indices.copy(), pattern.indptr.copy()), shape=(pattern.n, pattern.n))


def assemble_vector(cell_dofs: np.ndarray, local: np.ndarray, n: int) -> np.ndarray:
    return np.bincount(cell_dofs.ravel(), weights=local.ravel(), minlength=n)


def add_local(matrix: sp.csr_matrix, pattern: SparsePattern, dofs, block) -> None:
    """Accumulate one dense block into ``matrix`` in place."""
    dofs = np.asarray(dofs, dtype=np.int64)
    block = np.asarray(block, dtype=float)
    rows = np.repeat(dofs, len(dofs))
    cols = np.tile(dofs, len(dofs))
    pos = pattern.positions(rows, cols)
    np.add.at(matrix.data, pos, block.ravel())


def apply_dirichlet_rows(matrix: sp.csr_matrix, rhs: np.ndarray, dofs, values) -> None:
    """Replace constrained rows by identity rows with ``values`` in the rhs.

    Operates in place and keeps the pattern; columns are not eliminated.
    """
    dofs = np.asarray(dofs, dtype=np.int64)
    if dofs.size == 0:
        return
    indptr, indices, data = matrix.indptr, matrix.indices, matrix.data
    counts = indptr[dofs + 1] - indptr[dofs]
    pos = np.repeat(indptr[dofs], counts) + (
        np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    )
    data[pos] = 0.0
    rows = np.repeat(dofs, counts)
    diag = pos[indices[pos] == rows]
    if len(diag) != len(dofs):
        raise PatternError("a constrained row has no diagonal entry")
    data[diag] = 1.0
    rhs[dofs] = values


def export_matrix_market(system: SparseSystem, stem) -> None:
    """Write ``<stem>.mtx`` and ``<stem>_rhs.mtx`` for offline inspection."""
    scipy.io.mmwrite(f"{stem}.mtx", system.matrix)
    scipy.io.mmwrite(f"{stem}_rhs.mtx", system.rhs[:, None])


# ---------------------------------------------------------------------------
# direct solvers


def _find_mkl() -> str | None:
    roots = [sys.prefix, os.path.join(sys.prefix, "local"), "/usr/local", "/usr"]
    for root in roots:
        hits = sorted(glob.glob(os.path.join(root, "lib", "libmkl_rt.so*")))
        if hits:
            return hits[0]
    return None


def _load_pypardiso():
    if "PYPARDISO_MKL_RT" not in os.environ:
        path = _find_mkl()
        if path:
            os.environ["PYPARDISO_MKL_RT"] = path
    try:
        import pypardiso  # noqa: F401
        from pypardiso import PyPardisoSolver
    except (ImportError, OSError):
        return None
    return PyPardisoSolver


# 1-based PARDISO controls: explicit values (iparm(1) = 1), nested-dissection
# ordering, pivot perturbation 1e-13, and no value-dependent scaling or
# matching, so the analysis depends on the pattern alone and a result does not
# depend on which earlier matrix was analysed
PARDISO_IPARM = {1: 1, 2: 2, 8: 0, 10: 13, 11: 0, 13: 0}


class DirectSolver:
    """Sparse LU solver with one symbolic analysis per pattern.

    ``backend`` is ``"pardiso"`` (MKL PARDISO through pypardiso),
    ``"superlu"`` (scipy) or ``"auto"``, which prefers PARDISO when it can
    be loaded.
    """

    def __init__(self, backend: str = "auto"):
        if backend not in ("auto", "pardiso", "superlu"):
            raise ValueError(f"unknown solver backend {backend!r}")
        cls = None
        if backend in ("auto", "pardiso"):
            cls = _load_pypardiso()
            if cls is None and backend == "pardiso":
                raise RuntimeError("pypardiso / MKL is not available")
        self.backend = "pardiso" if cls is not None else "superlu"
        self._pardiso = cls(mtype=11) if cls is not None else None
        if self._pardiso is not None:
            for i, value in PARDISO_IPARM.items():
                self._pardiso.set_iparm(i, value)
        self._analysed = None
        self.n_factorizations = 0

    def _pardiso_solve(self, A: sp.csr_matrix, b: np.ndarray) -> np.ndarray:
        ps = self._pardiso
        A.sort_indices()
        key = (A.shape[0], A.indptr.tobytes(), A.indices.tobytes())
        rhs = np.asfortranarray(b.reshape(-1, 1))
        ps.set_iparm(12, 0)
        if self._analysed != key:
            ps.set_phase(11)
            ps._call_pardiso(A, rhs)
            self._analysed = key
        ps.set_phase(23)
        x = ps._call_pardiso(A, rhs)
        if ps.get_iparm(14) > 0:
            log.debug("pardiso perturbed %d pivots", ps.get_iparm(14))
        return x[:, 0]

    def solve(self, system: SparseSystem) -> np.ndarray:
        """Solve ``A x = b``; relative residual is guaranteed <= 1e-10."""
        A = system.matrix.tocsr()
        b = np.asarray(system.rhs, dtype=float)
        self.n_factorizations += 1
        bnorm = np.linalg.norm(b)
        if bnorm == 0.0:
            return np.zeros_like(b)
        if self.backend == "pardiso":
            if not np.diff(A.indptr).all():
                raise SingularSystemError("matrix has an empty row", _locate_pivot(A))
            try:
                x = self._pardiso_solve(A, b)
                solve_again = lambda r: self._pardiso._call_pardiso(A, np.asfortranarray(r.reshape(-1, 1)))[:, 0]  # noqa: E731
                self._pardiso.set_phase(33)
            except Exception as exc:  # PyPardisoError
                raise SingularSystemError(f"PARDISO failed: {exc}", _locate_pivot(A)) from exc
        else:
            try:
                lu = spla.splu(A.tocsc(), permc_spec="MMD_AT_PLUS_A")
            except RuntimeError as exc:
                raise SingularSystemError(str(exc), _locate_pivot(A)) from exc
            x = lu.solve(b)
            solve_again = lu.solve
        for _ in range(3):
            if not np.all(np.isfinite(x)):
                raise SingularSystemError("solution is not finite", _locate_pivot(A))
            r = b - A @ x
            rel = np.linalg.norm(r) / bnorm
            if rel <= RESIDUAL_TOL:
                return x
            x = x + solve_again(r)
        raise SingularSystemError(
            f"relative residual {rel:.3e} exceeds {RESIDUAL_TOL:g}; matrix is near-singular",
            _locate_pivot(A),
        )


def _locate_pivot(A: sp.spmatrix, max_dense: int = 4000) -> int | None:
    """Index of the first vanishing pivot of a dense LU, for diagnostics."""
    n = A.shape[0]
    empty = np.nonzero(np.diff(A.tocsr().indptr) == 0)[0]
    if empty.size:
        return int(empty[0])
    if n > max_dense:
        return None
    lu, piv, info = scipy.linalg.lapack.dgetrf(A.toarray())
    if info > 0:
        return int(info - 1)
    d = np.abs(np.diag(lu))
    k = int(np.argmin(d))
    if d[k] <= 1e-13 * d.max():
        return k
    return None


_default_solver: DirectSolver | None = None


def solve_direct(system: SparseSystem, solver: DirectSolver | None = None) -> np.ndarray:
    """Solve an assembled system with a (shared) direct solver."""
    global _default_solver
    if solver is None:
        if _default_solver is None:
            _default_solver = DirectSolver()
        solver = _default_solver
    return solver.solve(system)
