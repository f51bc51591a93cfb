"""Dense real-symmetric eigensolver.

Householder reduction to tridiagonal form followed by the implicitly
shifted QL iteration with eigenvector accumulation.  Decoupled diagonal
blocks (e.g. the two parity chains of the undriven model) are detected
from the sparsity pattern and solved separately.
"""

from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numba
import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import DegeneracyWarning, EigensolverError
from .hamiltonian import MATRIX_VERSION, HermitianObservable, ModelParams, build_hamiltonian

MAX_QL_ITERATIONS = 50
CLUSTER_GAP = 1e-10
ORTHO_TOL = 1e-10
RESIDUAL_TOL = 1e-8

#: Number of dense kernel invocations; the result cache is verified against it.
KERNEL_CALLS = {"count": 0}


@numba.njit(cache=True)
def _householder_tridiagonalize(a):
    """Reduce symmetric ``a`` in place; only the lower triangle is referenced.

    Returns ``(d, e, q)`` with ``q^T a q`` tridiagonal, diagonal ``d`` and
    subdiagonal ``e[:n-1]``.
    """
    n = a.shape[0]
    d = np.zeros(n)
    e = np.zeros(n)
    beta = np.zeros(n)
    v = np.zeros(n)
    p = np.zeros(n)
    w = np.zeros(n)
    for k in range(n - 2):
        m = k + 1
        s = 0.0
        for i in range(m, n):
            s += a[i, k] * a[i, k]
        d[k] = a[k, k]
        norm = math.sqrt(s)
        if norm == 0.0:
            continue
        alpha = -norm if a[m, k] >= 0.0 else norm
        e[k] = alpha
        a[m, k] -= alpha
        vtv = 0.0
        for i in range(m, n):
            v[i] = a[i, k]
            vtv += v[i] * v[i]
        b = 2.0 / vtv
        beta[k] = b
        for i in range(m, n):
            p[i] = 0.0
        for i in range(m, n):
            acc = 0.0
            vi = v[i]
            for j in range(m, i):
                acc += a[i, j] * v[j]
                p[j] += a[i, j] * vi
            p[i] += acc + a[i, i] * vi
        kk = 0.0
        for i in range(m, n):
            p[i] *= b
            kk += p[i] * v[i]
        kk *= 0.5 * b
        for i in range(m, n):
            w[i] = p[i] - kk * v[i]
        for i in range(m, n):
            vi = v[i]
            wi = w[i]
            for j in range(m, i + 1):
                a[i, j] -= vi * w[j] + wi * v[j]
    if n >= 2:
        d[n - 2] = a[n - 2, n - 2]
        e[n - 2] = a[n - 1, n - 2]
    d[n - 1] = a[n - 1, n - 1]
    # backward accumulation of Q = H_0 H_1 ... H_{n-3}
    q = np.eye(n)
    r = np.zeros(n)
    for k in range(n - 3, -1, -1):
        b = beta[k]
        if b == 0.0:
            continue
        m = k + 1
        for j in range(m, n):
            r[j] = 0.0
        for i in range(m, n):
            vi = a[i, k]
            for j in range(m, n):
                r[j] += vi * q[i, j]
        for i in range(m, n):
            f = b * a[i, k]
            for j in range(m, n):
                q[i, j] -= f * r[j]
    return d, e, q


@numba.njit(cache=True)
def _implicit_ql(d, e, zt, max_iter):
    """Diagonalize the tridiagonal ``(d, e)`` in place.

    Rotations are applied to rows of ``zt`` (so ``zt`` holds eigenvectors as
    rows).  Returns -1 on success, otherwise the index that failed.
    """
    n = d.shape[0]
    eps = np.finfo(np.float64).eps
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd:
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > max_iter:
                return l
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = 1.0
            c = 1.0
            p = 0.0
            i = m - 1
            deflated = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    deflated = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                for k in range(zt.shape[1]):
                    f = zt[i + 1, k]
                    zt[i + 1, k] = s * zt[i, k] + c * f
                    zt[i, k] = c * zt[i, k] - s * f
                i -= 1
            if deflated:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return -1


def _dense_block(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = a.shape[0]
    if n == 1:
        return a[0].copy(), np.ones((1, 1))
    KERNEL_CALLS["count"] += 1
    work = np.array(a, dtype=np.float64, order="C")
    d, e, q = _householder_tridiagonalize(work)
    zt = np.ascontiguousarray(q.T)
    sub = np.zeros(n)
    sub[: n - 1] = e[: n - 1]
    failed = _implicit_ql(d, sub, zt, MAX_QL_ITERATIONS)
    if failed >= 0:
        raise EigensolverError(
            f"QL iteration did not converge for eigenvalue {failed} after {MAX_QL_ITERATIONS} "
            f"shifts (n={n}, max|a|={np.max(np.abs(a)):.3e}, diag range "
            f"[{np.min(np.diag(a)):.3e}, {np.max(np.diag(a)):.3e}])"
        )
    return d, zt.T


@dataclass(frozen=True, eq=False)
class EigenDecomposition:
    """Ascending eigenvalues and orthonormal eigenvectors (columns)."""

    energies: np.ndarray
    vectors: np.ndarray
    params_hash: str | None = None

    def __post_init__(self):
        for name in ("energies", "vectors"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def dim(self) -> int:
        return self.energies.shape[0]

    def check(self, matrix: np.ndarray | None = None) -> dict:
        """Invariant diagnostics; raises :class:`EigensolverError` on violation."""
        v = self.vectors
        ortho = float(np.max(np.abs(v.T @ v - np.eye(self.dim)))) if self.dim else 0.0
        report = {"orthogonality": ortho}
        if np.any(np.diff(self.energies) < 0):
            raise EigensolverError("energies are not ascending")
        if ortho >= ORTHO_TOL:
            raise EigensolverError(f"eigenvectors not orthonormal: {ortho:.3e}")
        if matrix is not None:
            scale = max(float(np.max(np.abs(matrix))), np.finfo(float).tiny)
            resid = float(np.max(np.abs(matrix @ v - v * self.energies)))
            report["residual"] = resid
            if resid >= RESIDUAL_TOL * scale:
                raise EigensolverError(f"residual {resid:.3e} exceeds {RESIDUAL_TOL:.0e} * {scale:.3e}")
        return report


def params_hash(params: ModelParams, variant: str = "driven") -> str:
    """Content hash of model parameters and the matrix-construction version."""
    text = (
        f"v{MATRIX_VERSION}|{variant}|{params.omega!r}|{params.g!r}|{params.lam!r}|{params.n_tr}"
    )
    return hashlib.sha256(text.encode()).hexdigest()[:32]


def _as_matrix(matrix) -> np.ndarray:
    if isinstance(matrix, HermitianObservable):
        if not matrix.is_real:
            raise ValueError("complex Hermitian input is not supported")
        matrix = matrix.sym
    a = np.asarray(matrix, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    asym = float(np.max(np.abs(a - a.T))) if a.size else 0.0
    if asym > 1e-12 * max(1.0, float(np.max(np.abs(a)))):
        raise ValueError(f"matrix is not symmetric (max |A - A^T| = {asym:.3e})")
    return a


def _fix_gauge(energies: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """Re-orthogonalize near-degenerate clusters and fix signs deterministically."""
    n = energies.shape[0]
    start = 0
    for stop in range(1, n + 1):
        if stop == n or energies[stop] - energies[stop - 1] >= CLUSTER_GAP:
            if stop - start > 1:
                q, _ = np.linalg.qr(vectors[:, start:stop])
                vectors[:, start:stop] = q
            start = stop
    rows = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[rows, np.arange(n)])
    signs[signs == 0] = 1.0
    vectors *= signs
    return vectors


def eigendecompose(matrix, params_hash: str | None = None, check: bool = True) -> EigenDecomposition:
    """Complete eigendecomposition of a real symmetric matrix.

    Parameters
    ----------
    matrix : array_like or HermitianObservable
        Real symmetric matrix with finite entries.
    params_hash : str, optional
        Identifier of the generating parameters, carried through unchanged.
    check : bool
        Verify orthonormality and the residual ``|HV - VE|`` before returning.
    """
    a = _as_matrix(matrix)
    n = a.shape[0]
    if n == 0:
        return EigenDecomposition(np.zeros(0), np.zeros((0, 0)), params_hash)
    n_blocks, labels = connected_components(a != 0, directed=False)
    energies = np.empty(n)
    vectors = np.zeros((n, n))
    col = 0
    for b in range(n_blocks):
        idx = np.flatnonzero(labels == b)
        w, z = _dense_block(a[np.ix_(idx, idx)])
        energies[col : col + idx.size] = w
        vectors[idx, col : col + idx.size] = z
        col += idx.size
    order = np.argsort(energies, kind="stable")
    energies = energies[order]
    vectors = _fix_gauge(energies, vectors[:, order])
    dec = EigenDecomposition(energies, vectors, params_hash)
    if check:
        dec.check(a)
    return dec


_STORE = None


def use_store(store):
    """Route :func:`decompose_params` through a persistent ``store``.

    ``store`` must provide ``get_or_compute(params, compute)``; ``None``
    disables it.  Returns the previously installed store.
    """
    global _STORE
    previous, _STORE = _STORE, store
    _decompose_cached.cache_clear()
    return previous


def compute_decomposition(params: ModelParams) -> EigenDecomposition:
    """Diagonalize :func:`build_hamiltonian` without consulting any cache."""
    return eigendecompose(build_hamiltonian(params), params_hash=params_hash(params))


def decompose_params(params: ModelParams) -> EigenDecomposition:
    """Eigendecomposition of :func:`build_hamiltonian`, memoized in-process
    and, if installed, in the persistent store."""
    return _decompose_cached(params)


@lru_cache(maxsize=4)
def _decompose_cached(params: ModelParams) -> EigenDecomposition:
    if _STORE is not None:
        return _STORE.get_or_compute(params, compute_decomposition)
    return compute_decomposition(params)


def ground_state(params: ModelParams, dec: EigenDecomposition | None = None) -> np.ndarray:
    """Normalized lowest eigenvector; largest-magnitude component positive.

    Emits :class:`DegeneracyWarning` if the two lowest levels are within 1e-12.
    """
    if dec is None:
        dec = decompose_params(params)
    if dec.dim > 1 and dec.energies[1] - dec.energies[0] < 1e-12:
        warnings.warn(
            f"ground level is degenerate within 1e-12 (gap {dec.energies[1] - dec.energies[0]:.3e})",
            DegeneracyWarning,
            stacklevel=2,
        )
    psi = np.array(dec.vectors[:, 0])
    psi /= np.linalg.norm(psi)
    k = int(np.argmax(np.abs(psi)))
    if psi[k] < 0:
        psi = -psi
    return psi
