"""Polyhedral sets C(u, b) = {x : <u_i, x> <= b_i}.

Projection, active sets, normal-cone coefficients and the two constraint
qualifications (LICQ, PLICQ).  Everything here is a pure function of its
inputs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog, nnls

from .errors import EmptySet, InfeasiblePoint

log = logging.getLogger(__name__)

ACTIVE_TOL = 1e-8


@dataclass(frozen=True)
class MovingPolyhedron:
    """Snapshot of the moving set: rows ``u`` (m, n) and offsets ``b`` (m,)."""

    u: np.ndarray
    b: np.ndarray
    unit_rows: bool = False

    def __post_init__(self):
        u = np.array(self.u, dtype=float)
        b = np.array(self.b, dtype=float).reshape(-1)
        if u.ndim == 1:
            u = u.reshape(b.size, -1) if b.size else u.reshape(0, u.size)
        if u.ndim != 2 or u.shape[0] != b.size:
            raise ValueError(f"u has shape {u.shape}, b has {b.size} entries")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(b))):
            raise ValueError("polyhedron data must be finite")
        if self.unit_rows and u.shape[0]:
            dev = np.abs(np.linalg.norm(u, axis=1) - 1.0)
            if dev.max() > 1e-12:
                raise ValueError(f"row norm deviates from 1 by {dev.max():.2e}")
        u.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "b", b)

    @classmethod
    def empty(cls, n: int) -> "MovingPolyhedron":
        """The whole space R^n (no faces)."""
        return cls(np.zeros((0, n)), np.zeros(0))

    @property
    def n(self) -> int:
        return self.u.shape[1]

    @property
    def m(self) -> int:
        return self.u.shape[0]

    def slack(self, x) -> np.ndarray:
        """b - u x, nonnegative inside C."""
        return self.b - self.u @ np.asarray(x, dtype=float)

    def contains(self, x, tol: float = ACTIVE_TOL) -> bool:
        return self.m == 0 or bool(np.all(self.slack(x) >= -tol))


@dataclass(frozen=True)
class ActiveSet:
    indices: Tuple[int, ...]
    tol: float

    def __contains__(self, i) -> bool:
        return i in self.indices

    def __len__(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class ConeCoefficients:
    eta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "eta", np.asarray(self.eta, dtype=float))


@dataclass(frozen=True)
class NotMember:
    """Returned by :func:`normal_cone_coeffs` when v is not in the cone."""

    distance: float
    eta: np.ndarray = field(repr=False, default=None)

    def __bool__(self) -> bool:
        return False


def _check_inside(x, P: MovingPolyhedron, tol: float) -> np.ndarray:
    if P.m == 0:
        return np.zeros(0)
    s = P.slack(x)
    i = int(np.argmin(s))
    if s[i] < -tol:
        raise InfeasiblePoint(-s[i], i)
    return s


def active_set(x, P: MovingPolyhedron, tol: float = ACTIVE_TOL) -> ActiveSet:
    """Faces with |<u_i, x> - b_i| <= tol.  Raises InfeasiblePoint outside C."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    s = _check_inside(x, P, tol)
    return ActiveSet(tuple(int(i) for i in np.flatnonzero(np.abs(s) <= tol)), tol)


# ----------------------------------------------------------------------
# projection


def _farkas_ray(A: np.ndarray, b: np.ndarray) -> Optional[np.ndarray]:
    """Nonnegative y with A^T y = 0, b^T y = -1, or None if none exists."""
    m, n = A.shape
    res = linprog(np.zeros(m), A_eq=np.vstack([A.T, b[None, :]]),
                  b_eq=np.r_[np.zeros(n), -1.0], bounds=[(0, None)] * m,
                  method="highs")
    return res.x if res.status == 0 else None


def _feasible_start(A: np.ndarray, b: np.ndarray, y: np.ndarray,
                    ftol: float) -> np.ndarray:
    z = y.copy()
    # a few sweeps of successive halfspace projections usually suffice
    rn2 = np.einsum("ij,ij->i", A, A)
    for _ in range(60):
        viol = A @ z - b
        if np.all(viol <= ftol):
            return z
        for i in np.flatnonzero(viol > ftol):
            if rn2[i] > 0:
                r = A[i] @ z - b[i]
                if r > 0:
                    z = z - (r / rn2[i]) * A[i]
    if np.all(A @ z - b <= ftol):
        return z
    # phase one LP: minimize the largest violation
    m, n = A.shape
    res = linprog(np.r_[np.zeros(n), 1.0], A_ub=np.hstack([A, -np.ones((m, 1))]),
                  b_ub=b, bounds=[(None, None)] * n + [(-1.0, None)],
                  method="highs")
    if res.status != 0 or res.x[-1] > ftol:
        ray = _farkas_ray(A, b)
        if ray is not None:
            raise EmptySet(ray)
        if res.status != 0:
            raise EmptySet(None, f"phase one failed: {res.message}")
    z = res.x[:n]
    # polish onto the set: remaining violation is at LP tolerance
    viol = A @ z - b
    if np.any(viol > ftol):
        ray = _farkas_ray(A, b)
        if ray is not None:
            raise EmptySet(ray)
    return z


def project(y, P: MovingPolyhedron, max_iter: Optional[int] = None
            ) -> Tuple[np.ndarray, ConeCoefficients]:
    """Euclidean projection of ``y`` onto C by a primal active-set QP.

    Returns ``(z, eta)`` with z - y = -sum eta_i u_i, eta >= 0 and
    eta_i (<u_i, z> - b_i) = 0.  Ties in the ratio test and in the choice
    of the dropped constraint go to the smallest index.  Nearly dependent
    working sets that defeat the active-set iteration fall back to the
    least-distance program solved by nonnegative least squares.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    A, b = P.u, P.b
    m, n = A.shape
    if m == 0:
        return y.copy(), ConeCoefficients(np.zeros(0))
    if n != y.size:
        raise ValueError(f"point has dimension {y.size}, polyhedron {n}")
    scale = 1.0 + np.abs(b).max() + np.linalg.norm(y) * np.abs(A).max()
    ftol = 1e-13 * scale
    if np.all(A @ y - b <= ftol):
        return y.copy(), ConeCoefficients(np.zeros(m))

    try:
        z, eta = _active_set_qp(A, b, y, ftol, scale, max_iter)
    except (np.linalg.LinAlgError, RuntimeError):
        z, eta = None, None
    if z is None or np.any(A @ z - b > 1e3 * ftol):
        log.debug("active-set projection broke down; using the least-distance program")
        z, eta = _ldp_projection(A, b, y, ftol)
    return z, ConeCoefficients(eta)


def _ldp_projection(A: np.ndarray, b: np.ndarray, y: np.ndarray, ftol: float):
    """Projection through the least-distance program min |w|, A w <= b - A y.

    The dual is a nonnegative least-squares problem (Lawson and Hanson);
    a vanishing residual certifies an empty set.
    """
    m, n = A.shape
    d = b - A @ y
    E = np.vstack([-A.T, -d[None, :]])
    f = np.zeros(n + 1)
    f[-1] = 1.0
    u, _ = nnls(E, f, maxiter=50 * (m + n) + 100)
    r = E @ u - f
    if abs(r[-1]) <= 1e-12:
        ray = _farkas_ray(A, b)
        raise EmptySet(ray)
    lam = u / (-r[-1])
    w = -A.T @ lam
    return y + w, lam


def _active_set_qp(A, b, y, ftol, scale, max_iter):
    m, n = A.shape
    z = _feasible_start(A, b, y, ftol)
    W: list = []
    mu = np.zeros(0)
    max_iter = max_iter or 50 * (m + n) + 100
    for _ in range(max_iter):
        if W:
            AW = A[W]
            mu = np.linalg.solve(AW @ AW.T, AW @ y - b[W])
            zstar = y - AW.T @ mu
        else:
            mu = np.zeros(0)
            zstar = y
        p = zstar - z
        if np.linalg.norm(p) <= 1e-14 * scale:
            neg = np.flatnonzero(mu < -1e-14 * scale)
            if neg.size == 0:
                z = zstar
                break
            # drop the most negative multiplier, smallest index on ties
            worst = mu[neg].min()
            drop = min(W[k] for k in neg if mu[k] <= worst + 1e-15 * scale)
            W.remove(drop)
            continue
        Ap = A @ p
        slack = np.maximum(b - A @ z, 0.0)
        thresh = 1e-14 * np.linalg.norm(p) * np.linalg.norm(A, axis=1)
        cand = [i for i in range(m) if i not in W and Ap[i] > thresh[i]]
        if W and cand:
            # rows dependent on the working set cannot block in exact arithmetic
            Q = np.linalg.qr(A[W].T)[0]
            R = A[cand] - (A[cand] @ Q) @ Q.T
            cand = [c for c, r in zip(cand, R) if np.linalg.norm(r) > 1e-10 * np.linalg.norm(A[c])]
        alpha, block = 1.0, None
        if cand:
            ratios = np.array([slack[i] / Ap[i] for i in cand])
            rmin = ratios.min()
            if rmin < 1.0:
                alpha = max(rmin, 0.0)
                block = min(c for c, r in zip(cand, ratios) if r <= rmin + 1e-15)
        if block is None:
            z = zstar
        else:
            z = z + alpha * p
            W.append(block)
            W.sort()
    else:
        raise RuntimeError("active-set projection did not terminate")

    eta = np.zeros(m)
    if W:
        eta[W] = np.maximum(mu, 0.0)
    return z, eta


# ----------------------------------------------------------------------
# cones and qualification conditions


def normal_cone_coeffs(x, P: MovingPolyhedron, v, tol: float = ACTIVE_TOL):
    """Coefficients eta >= 0 on the active faces with v = sum eta_i u_i.

    Returns :class:`NotMember` carrying the distance from v to the cone when
    no such coefficients exist.
    """
    v = np.asarray(v, dtype=float).reshape(-1)
    I = list(active_set(x, P, tol).indices)
    eta = np.zeros(P.m)
    if not I:
        dist = float(np.linalg.norm(v))
        return ConeCoefficients(eta) if dist <= 1e-9 else NotMember(dist, eta)
    coef, dist = nnls(P.u[I].T, v)
    eta[I] = coef
    if dist <= 1e-9:
        return ConeCoefficients(eta)
    return NotMember(float(dist), eta)


def active_rows(x, P: MovingPolyhedron, tol: float = ACTIVE_TOL) -> np.ndarray:
    return P.u[list(active_set(x, P, tol).indices)]


def rows_independent(rows: np.ndarray) -> bool:
    if rows.shape[0] == 0:
        return True
    if rows.shape[0] > rows.shape[1]:
        return False
    s = np.linalg.svd(rows, compute_uv=False)
    return bool(s[-1] > 1e-10 * s[0])


def rows_positively_independent(rows: np.ndarray) -> bool:
    """True iff sum a_i u_i = 0, a >= 0, sum a = 1 has no solution."""
    k = rows.shape[0]
    if k == 0:
        return True
    res = linprog(np.zeros(k), A_eq=np.vstack([rows.T, np.ones((1, k))]),
                  b_eq=np.r_[np.zeros(rows.shape[1]), 1.0],
                  bounds=[(0, None)] * k, method="highs")
    return res.status == 2


def check_licq(x, P: MovingPolyhedron, tol: float = ACTIVE_TOL) -> bool:
    """Active rows linearly independent (SVD threshold 1e-10 * sigma_max)."""
    return rows_independent(active_rows(x, P, tol))


def check_plicq(x, P: MovingPolyhedron, tol: float = ACTIVE_TOL) -> bool:
    """Active rows positively linearly independent."""
    return rows_positively_independent(active_rows(x, P, tol))


def slater_point(P: MovingPolyhedron, margin_tol: float = 1e-9
                 ) -> Optional[np.ndarray]:
    """A strictly feasible point by a max-margin LP, or None.

    The margin is measured in distance units (rows are normalized).  Raises
    EmptySet when C itself is empty.
    """
    m, n = P.m, P.n
    if m == 0:
        return np.zeros(n)
    rn = np.linalg.norm(P.u, axis=1)
    rn = np.where(rn > 0, rn, 1.0)
    res = linprog(np.r_[np.zeros(n), -1.0],
                  A_ub=np.hstack([P.u, rn[:, None]]), b_ub=P.b,
                  bounds=[(None, None)] * n + [(None, 1.0)], method="highs")
    if res.status != 0:
        raise EmptySet(None, f"max-margin LP failed: {res.message}")
    s = res.x[-1]
    if s < -margin_tol:
        raise EmptySet(_farkas_ray(P.u, P.b))
    if s <= margin_tol:
        return None
    return res.x[:n]
