"""Lowest eigenpairs of ``K x = lambda M x`` by shift-invert Lanczos/Arnoldi."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla
from scipy.sparse.linalg import ArpackNoConvergence

from .assembly import BoundaryRegime, OperatorPair
from .errors import BudgetError, NumericalError, ParameterError

SHIFT = -1.0
CLUSTER_RTOL = 1e-8
REFINE_ATTEMPTS = 3


@dataclass
class EigenResult:
    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    regime: Optional[BoundaryRegime] = None
    converged: bool = True
    iterations: int = 0
    clusters: list = field(default_factory=list)


def _clusters(values: np.ndarray, rtol: float = CLUSTER_RTOL, atol: float = 1e-10) -> list:
    groups = []
    start = 0
    for i in range(1, len(values) + 1):
        if i == len(values) or values[i] - values[i - 1] > rtol * max(abs(values[i]), abs(values[i - 1])) + atol:
            groups.append(list(range(start, i)))
            start = i
    return groups


def _start_vector(n: int, seed: int, complex_field: bool) -> np.ndarray:
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n) + 1.0
    if complex_field:
        v = v + 1j * rng.standard_normal(n)
    return v


def residual_norms(K, M, values, vectors) -> np.ndarray:
    """``||K x - lam M x|| / ||M x||`` per column."""
    Mx = M @ vectors
    R = K @ vectors - Mx * values[None, :]
    return np.linalg.norm(R, axis=0) / np.linalg.norm(Mx, axis=0)


def smallest_eigs(
    pair: OperatorPair,
    k: int,
    tol: float = 1e-10,
    seed: int = 0,
    maxiter: Optional[int] = None,
) -> EigenResult:
    """The ``k`` smallest eigenpairs, ascending and M-orthonormal.

    ``K + M`` is factored once (SuperLU, COLAMD ordering) and ARPACK iterates on
    ``(K + M)^{-1} M``.  A Rayleigh-Ritz pass on the returned basis cleans up
    degenerate clusters and makes the vectors exactly M-orthonormal.  Pairs whose
    residual still exceeds ``tol`` trigger a rerun with a tighter inner tolerance;
    :class:`BudgetError` (carrying the partial result) if that does not help.
    """
    n = pair.n_dofs
    if k < 1:
        raise ParameterError("k must be at least 1")
    if not tol > 0:
        raise ParameterError("tol must be positive")
    if k >= n - 1:
        raise ParameterError(f"k={k} too large for a problem with {n} dofs")
    K, M = pair.stiffness, pair.mass
    is_complex = pair.field_kind == "complex"
    A = (K - SHIFT * M).tocsc()
    try:
        lu = spla.splu(A, permc_spec="COLAMD")
    except RuntimeError as exc:
        raise NumericalError(f"factorization of K + M failed: {exc}") from exc
    dtype = complex if is_complex else float
    opinv = spla.LinearOperator(A.shape, matvec=lu.solve, dtype=dtype)
    ncv = min(n - 1, max(2 * k + 8, 20))
    v0 = _start_vector(n, seed, is_complex)
    arp_tol = tol * 1e-2
    for attempt in range(REFINE_ATTEMPTS):
        vals, vecs, converged = _arpack(K, M, k, opinv, v0, ncv, arp_tol, maxiter, is_complex)
        w, X = _ritz(K, M, vecs, dtype)
        res = residual_norms(K, M, w, X)
        if not converged or res.max() <= tol:
            break
        # the inner tolerance acts on 1/(lambda + 1); tighten it by the observed excess
        arp_tol = max(arp_tol * tol / (10.0 * res.max()), np.finfo(float).eps)
        v0 = X[:, -1]
    out = EigenResult(w, X, res, regime=pair.regime, converged=converged, iterations=attempt + 1, clusters=_clusters(w))
    if not converged:
        raise BudgetError(f"eigensolver returned {len(w)} of {k} pairs before its iteration cap", partial=out)
    if res.max() > tol:
        out.converged = False
        raise BudgetError(f"residual {res.max():.3g} above tol {tol:.3g} after {attempt + 1} attempts", partial=out)
    return out


def _arpack(K, M, k, opinv, v0, ncv, arp_tol, maxiter, is_complex):
    solver = spla.eigs if is_complex else spla.eigsh
    try:
        vals, vecs = solver(K, k=k, M=M, sigma=SHIFT, which="LM", OPinv=opinv, v0=v0, ncv=ncv, tol=arp_tol, maxiter=maxiter)
    except ArpackNoConvergence as exc:
        if exc.eigenvectors is None or exc.eigenvectors.shape[1] == 0:
            raise BudgetError("eigensolver hit its iteration cap with nothing converged") from exc
        return exc.eigenvalues, exc.eigenvectors, False
    return vals, vecs, True


def _ritz(K, M, vecs, dtype):
    """Rayleigh-Ritz on the Krylov output: ascending, M-orthonormal, phase-fixed."""
    vecs = np.asarray(vecs, dtype=dtype)
    Kr = vecs.conj().T @ (K @ vecs)
    Mr = vecs.conj().T @ (M @ vecs)
    Kr = 0.5 * (Kr + Kr.conj().T)
    Mr = 0.5 * (Mr + Mr.conj().T)
    try:
        w, C = sla.eigh(Kr, Mr)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Ritz projection lost M-orthogonality: {exc}") from exc
    X = vecs @ C
    order = np.argsort(w, kind="stable")
    return w[order], _fix_phase(X[:, order])


def _fix_phase(X: np.ndarray) -> np.ndarray:
    """Make the largest-modulus entry of each column real positive (reproducible signs)."""
    idx = np.argmax(np.abs(X), axis=0)
    piv = X[idx, np.arange(X.shape[1])]
    return X * (np.abs(piv) / piv)[None, :]
