"""Coderivatives of the polyhedral normal-cone mapping.

F(x, A, b) = -N(x; C(A, b)) with C(A, b) = {x : A x <= b}.  For a graph
point (x, A, b, v) and a direction u, the coderivative D*F(x, A, b, v)(u)
is the set of covectors w = (w_x, w_A, w_b) with (w, -u) normal to gph F.

The closed form is a union of affine images
    q -> (A^T q, q_1 x - p_1 u, ..., q_m x - p_m u, -q)
over multipliers p in P(u) and sign-patterned q in Q(p).  A brute-force
oracle decides normality from the graph itself for small sizes.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog

from .errors import (DimensionTooLarge, NoMultiplier, NotInGraph,
                     QualificationFailure)
from .geometry import rows_independent, rows_positively_independent

ACTIVE_TOL = 1e-8
MEMBER_TOL = 1e-8


# ----------------------------------------------------------------------
# orthant coderivative


class _Empty:
    """The empty set marker returned by the coderivative routines."""

    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __bool__(self) -> bool:
        return False

    def __repr__(self) -> str:
        return "EMPTY"


EMPTY = _Empty()


@dataclass(frozen=True)
class SignPattern:
    """Partition of indices: eta_i = 0, eta_i >= 0, eta_i free."""

    zero: Tuple[int, ...]
    nonneg: Tuple[int, ...]
    free: Tuple[int, ...]

    def contains(self, eta, tol: float = 0.0) -> bool:
        eta = np.asarray(eta, dtype=float)
        return (all(abs(eta[i]) <= tol for i in self.zero)
                and all(eta[i] >= -tol for i in self.nonneg))

    def bounds(self) -> List[Tuple[Optional[float], Optional[float]]]:
        m = len(self.zero) + len(self.nonneg) + len(self.free)
        out: List[Tuple[Optional[float], Optional[float]]] = [(None, None)] * m
        for i in self.zero:
            out[i] = (0.0, 0.0)
        for i in self.nonneg:
            out[i] = (0.0, None)
        return out


def dstar_orthant(alpha, beta, gamma, tol: float = 0.0):
    """Coderivative of the normal cone to the nonpositive orthant.

    At (alpha, beta) in gph N (alpha <= 0, beta >= 0, alpha_i beta_i = 0)
    and direction gamma: EMPTY if beta_i gamma_i != 0 for some i, otherwise
    the sign pattern eta_i = 0 on I1, eta_i >= 0 on I2, free elsewhere with
    I1 = {alpha_i < 0} u {alpha_i = beta_i = 0, gamma_i < 0} and
    I2 = {alpha_i = beta_i = 0, gamma_i > 0}.  Quantities within ``tol`` of
    zero are treated as zero.
    """
    a, bt, g = (np.asarray(z, dtype=float).reshape(-1) for z in (alpha, beta, gamma))
    if not (a.size == bt.size == g.size):
        raise ValueError("alpha, beta, gamma must have equal length")
    if np.any(a > tol) or np.any(bt < -tol) or np.any((a < -tol) & (bt > tol)):
        raise NotInGraph("(alpha, beta) is not in the graph of the orthant normal cone")
    a0, b0 = np.abs(a) <= tol, np.abs(bt) <= tol
    if np.any(~b0 & (np.abs(g) > tol)):
        return EMPTY
    zero, nonneg, free = [], [], []
    for i in range(a.size):
        if not a0[i] or (b0[i] and g[i] < -tol):
            zero.append(i)
        elif b0[i] and g[i] > tol:
            nonneg.append(i)
        else:
            free.append(i)
    return SignPattern(tuple(zero), tuple(nonneg), tuple(free))


# ----------------------------------------------------------------------
# queries, multipliers and pieces


@dataclass(frozen=True)
class CoderivQuery:
    """Base point (x, A, b, v) on gph F and a coderivative direction u."""

    x: np.ndarray
    A: np.ndarray
    b: np.ndarray
    v: np.ndarray
    u: np.ndarray
    tol: float = ACTIVE_TOL

    def __post_init__(self):
        A = np.atleast_2d(np.array(self.A, dtype=float))
        arrs = {k: np.array(getattr(self, k), dtype=float).reshape(-1)
                for k in ("x", "b", "v", "u")}
        m, n = A.shape
        if arrs["b"].size != m or any(arrs[k].size != n for k in ("x", "v", "u")):
            raise ValueError("inconsistent query dimensions")
        object.__setattr__(self, "A", A)
        for k, val in arrs.items():
            object.__setattr__(self, k, val)
        if np.any(A @ arrs["x"] - arrs["b"] > self.tol):
            raise NotInGraph("x is outside C(A, b)")

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def active(self) -> Tuple[int, ...]:
        r = self.A @ self.x - self.b
        return tuple(int(i) for i in np.flatnonzero(np.abs(r) <= self.tol))

    def constraint_values(self) -> np.ndarray:
        """A x - b with active entries snapped to zero."""
        r = self.A @ self.x - self.b
        r[list(self.active)] = 0.0
        return r

    def licq(self) -> bool:
        return rows_independent(self.A[list(self.active)])

    def plicq(self) -> bool:
        return rows_positively_independent(self.A[list(self.active)])

    def direction_values(self) -> np.ndarray:
        """A u with entries below the relative tolerance snapped to zero."""
        au = self.A @ self.u
        scale = np.linalg.norm(self.A, axis=1) * max(np.linalg.norm(self.u), 1.0)
        au[np.abs(au) <= 1e-9 * scale] = 0.0
        return au


def _multiplier_lp(A_I: np.ndarray, v: np.ndarray, zero_mask=None):
    k = A_I.shape[0]
    bounds = [(0, 0) if (zero_mask is not None and zero_mask[i]) else (0, None)
              for i in range(k)]
    if k == 0:
        return np.zeros(0) if np.linalg.norm(v) <= 1e-9 else None
    res = linprog(np.ones(k), A_eq=A_I.T, b_eq=-v, bounds=bounds, method="highs")
    return res.x if res.status == 0 else None


def _vertices(A_I: np.ndarray, v: np.ndarray, allowed: Sequence[int],
              tol: float = 1e-9) -> List[np.ndarray]:
    """Vertices of {p >= 0 : A_I^T p = -v, p_i = 0 off ``allowed``}."""
    k, n = A_I.shape
    out: List[np.ndarray] = []
    scale = 1.0 + np.linalg.norm(v)
    for size in range(0, min(len(allowed), n) + 1):
        for S in itertools.combinations(allowed, size):
            S = list(S)
            p = np.zeros(k)
            if S:
                rows = A_I[S]
                if not rows_independent(rows):
                    continue
                p[S] = np.linalg.lstsq(rows.T, -v, rcond=None)[0]
            if np.linalg.norm(A_I.T @ p + v) > tol * scale or p.min(initial=0) < -tol * scale:
                continue
            p = np.maximum(p, 0.0)
            if not any(np.allclose(p, q, atol=1e-10 * scale) for q in out):
                out.append(p)
    return out


def pset(query: CoderivQuery) -> List[np.ndarray]:
    """Multipliers p in P(u) as full m-vectors (vertex list).

    Under LICQ this is [p_bar] or [] when u is not orthogonal to every row
    with p_bar_i > 0.  Without LICQ it is the vertex list of the face of
    the multiplier polytope on which p_i = 0 whenever A_i u != 0.
    Raises NoMultiplier when v is not generated by the active rows.
    """
    I = list(query.active)
    A_I = query.A[I]
    if _multiplier_lp(A_I, query.v) is None:
        raise NoMultiplier("v is not in -N(x; C(A, b))")
    au = query.direction_values()[I]
    allowed = [k for k in range(len(I)) if au[k] == 0.0]
    out = []
    if rows_independent(A_I):
        p_I = np.linalg.lstsq(A_I.T, -query.v, rcond=None)[0] if I else np.zeros(0)
        p_I[p_I < 1e-12 * (1 + np.abs(p_I).max(initial=0))] = 0.0
        if all(p_I[k] == 0.0 or au[k] == 0.0 for k in range(len(I))):
            out = [p_I]
    else:
        out = _vertices(A_I, query.v, allowed)
    full = []
    for p_I in out:
        p = np.zeros(query.m)
        p[I] = p_I
        full.append(p)
    return full


def qset(p, query: CoderivQuery):
    """Sign pattern of Q(p), or EMPTY when p is not admissible for u."""
    p = np.asarray(p, dtype=float)
    beta = np.where(np.abs(p) <= 1e-12 * (1 + np.abs(p).max(initial=0)), 0.0, p)
    return dstar_orthant(query.constraint_values(), beta, -query.direction_values())


@dataclass(frozen=True)
class CoderivPiece:
    """One affine image q -> M q + c with q restricted to a sign pattern."""

    p: np.ndarray
    pattern: SignPattern
    x: np.ndarray
    A: np.ndarray
    u: np.ndarray

    @property
    def free_indices(self):
        return self.pattern.free

    @property
    def nonneg_indices(self):
        return self.pattern.nonneg

    @property
    def zero_indices(self):
        return self.pattern.zero

    def map_matrices(self) -> Tuple[np.ndarray, np.ndarray]:
        """(M, c) with w = (w_x, w_A row-major, w_b) = M q + c."""
        m, n = self.A.shape
        M = np.zeros((n + m * n + m, m))
        M[:n] = self.A.T
        for i in range(m):
            M[n + i * n:n + (i + 1) * n, i] = self.x
        M[n + m * n:, :] = -np.eye(m)
        c = np.zeros(n + m * n + m)
        c[n:n + m * n] = -np.outer(self.p, self.u).reshape(-1)
        return M, c

    def evaluate(self, q) -> np.ndarray:
        M, c = self.map_matrices()
        return M @ np.asarray(q, dtype=float) + c

    def to_dict(self) -> dict:
        M, c = self.map_matrices()
        return {"p": self.p.tolist(), "zero": list(self.pattern.zero),
                "nonneg": list(self.pattern.nonneg), "free": list(self.pattern.free),
                "M": M.tolist(), "c": c.tolist()}


@dataclass(frozen=True)
class CoderivResult:
    pieces: Tuple[CoderivPiece, ...]
    exact: bool
    query: CoderivQuery

    @property
    def empty(self) -> bool:
        return not self.pieces

    def contains(self, w, tol: float = MEMBER_TOL) -> bool:
        """Membership of w in the union, decided by one LP.

        The q sign pattern is shared by all of P(u), so the union over p is
        convex and the LP optimizes over p in P(u) and q jointly.
        """
        if self.empty:
            return False
        qr = self.query
        w = np.asarray(w, dtype=float).reshape(-1)
        m, n = qr.m, qr.n
        piece = self.pieces[0]
        M, _ = piece.map_matrices()
        I = list(qr.active)
        au = qr.direction_values()
        # variables: q (m), p_I (|I|), slack+ and slack- (len w)
        L = w.size
        G = np.zeros((n + m * n, len(I)))
        for col, i in enumerate(I):
            G[n + i * n:n + (i + 1) * n, col] = -qr.u
        Aeq = np.hstack([M, np.vstack([G, np.zeros((m, len(I)))]),
                         np.eye(L), -np.eye(L)])
        rows_p = []
        beq_p = []
        if I:
            rows_p = np.hstack([np.zeros((n, m)), qr.A[I].T, np.zeros((n, 2 * L))])
            beq_p = -qr.v
            Aeq = np.vstack([Aeq, rows_p])
            beq = np.r_[w, beq_p]
        else:
            beq = w
        bounds = piece.pattern.bounds()
        bounds += [(0, 0) if au[i] != 0.0 else (0, None) for i in I]
        bounds += [(0, None)] * (2 * L)
        cost = np.r_[np.zeros(m + len(I)), np.ones(2 * L)]
        res = linprog(cost, A_eq=Aeq, b_eq=beq, bounds=bounds, method="highs")
        if res.status != 0:
            return False
        return res.fun <= tol * (1.0 + np.abs(w).sum())


def dstar_F(query: CoderivQuery) -> CoderivResult:
    """Closed-form coderivative as a list of pieces.

    Requires PLICQ at the base point (QualificationFailure otherwise); the
    result is flagged exact when LICQ holds, otherwise it is an outer
    estimate.
    """
    if not query.plicq():
        raise QualificationFailure("active rows are not positively linearly independent")
    pieces = []
    for p in pset(query):
        pat = qset(p, query)
        if pat:
            pieces.append(CoderivPiece(p, pat, query.x, query.A, query.u))
    return CoderivResult(tuple(pieces), query.licq(), query)


# ----------------------------------------------------------------------
# brute-force oracle


def _lift_jacobian(x, A, I, eta) -> np.ndarray:
    """Jacobian of (x, A, sigma, eta_I) -> (x, A, A x + sigma, -sum eta_i A_i)."""
    m, n = A.shape
    k = len(I)
    din = n + m * n + m + k
    dout = n + m * n + m + n
    J = np.zeros((dout, din))
    J[:n, :n] = np.eye(n)
    J[n:n + m * n, n:n + m * n] = np.eye(m * n)
    rb = n + m * n
    for i in range(m):
        J[rb + i, :n] = A[i]
        J[rb + i, n + i * n:n + (i + 1) * n] = x
        J[rb + i, n + m * n + i] = 1.0
    rv = n + m * n + m
    for c, i in enumerate(I):
        J[rv:rv + n, n + i * n:n + (i + 1) * n] = -eta[c] * np.eye(n)
        J[rv:rv + n, n + m * n + m + c] = -A[i]
    return J


def _in_polar(g: np.ndarray, eq: np.ndarray, nonneg: np.ndarray, tol: float) -> bool:
    """Is g in the polar of the cone {d : d[eq] = 0, d[nonneg] >= 0}?

    Decided by the LP max <g, d> over the cone intersected with the unit box.
    """
    bounds = [(0.0, 0.0) if eq[i] else ((0.0, 1.0) if nonneg[i] else (-1.0, 1.0))
              for i in range(g.size)]
    res = linprog(-g, bounds=bounds, method="highs")
    return -res.fun <= tol * (1.0 + np.abs(g).sum())


def _licq_oracle(x, A, act: List[int], eta: np.ndarray, zeta: np.ndarray,
                 tol: float) -> bool:
    m, n = A.shape
    J = _lift_jacobian(x, A, act, eta)
    g = J.T @ zeta
    D = g.size
    base_eq = np.zeros(D, dtype=bool)
    base_nn = np.zeros(D, dtype=bool)
    s0 = n + m * n
    e0 = s0 + m
    pos = [c for c in range(len(act)) if eta[c] > 0]
    zero = [c for c in range(len(act)) if eta[c] == 0]
    for c in pos:
        base_eq[s0 + act[c]] = True        # slack pinned, multiplier free
    # each biactive index sits at the corner, on the slack branch or on the
    # multiplier branch of the complementarity set
    for cells in itertools.product(range(3), repeat=len(zero)):
        eq, nn = base_eq.copy(), base_nn.copy()
        for c, cell in zip(zero, cells):
            si, ei = s0 + act[c], e0 + c
            if cell == 0:
                nn[si] = nn[ei] = True
            elif cell == 1:
                eq[ei] = True
            else:
                eq[si] = True
        if _in_polar(g, eq, nn, tol):
            return True
    return False


def oracle_graph_normals(query: CoderivQuery, probe, tol: float = MEMBER_TOL) -> bool:
    """Is (probe, -u) a limiting normal to gph F at the base point?

    gph F is parametrized near the base point by (x, A, sigma, eta) with
    slacks sigma = b - A x and multipliers eta on the active rows, subject
    to complementarity.  Under LICQ the parametrization is a smooth
    embedding and normals are pulled back through its Jacobian; each
    complementarity cell contributes the polar of its tangent cone,
    computed by an LP.  Without LICQ the union is taken over nearby graph
    points whose active sets are independent subsets of the active rows,
    so a True answer certifies normality while False may be conservative.
    """
    if query.n > 3 or query.m > 3:
        raise DimensionTooLarge("oracle supports n, m <= 3")
    w = np.asarray(probe, dtype=float).reshape(-1)
    zeta = np.r_[w, -query.u]
    I = list(query.active)
    A, x, v = query.A, query.x, query.v
    if _multiplier_lp(A[I], v) is None:
        raise NoMultiplier("v is not in -N(x; C(A, b))")
    subsets = ([I] if rows_independent(A[I]) else
               [list(S) for r in range(len(I), -1, -1)
                for S in itertools.combinations(I, r)])
    for S in subsets:
        if not rows_independent(A[S]) if S else False:
            continue
        if S:
            eta = np.linalg.lstsq(A[S].T, -v, rcond=None)[0]
            if np.linalg.norm(A[S].T @ eta + v) > 1e-9 * (1 + np.linalg.norm(v)):
                continue
            if eta.min() < -1e-12:
                continue
            eta[eta < 1e-12 * (1 + np.abs(eta).max())] = 0.0
        else:
            if np.linalg.norm(v) > 1e-9:
                continue
            eta = np.zeros(0)
        if _licq_oracle(x, A, S, eta, zeta, tol):
            return True
    return False
