"""Seeded random instances for the coderivative validation tests."""

import numpy as np

from polysweep.variational import CoderivQuery, dstar_F


def _orth_complement_project(u, rows):
    if len(rows) == 0:
        return u
    Q = np.linalg.qr(np.asarray(rows).T)[0]
    return u - Q @ (Q.T @ u)


def random_licq_query(rng):
    """Random base point with linearly independent active rows."""
    n = int(rng.integers(1, 4))
    m = int(rng.integers(1, 4))
    A = rng.normal(size=(m, n))
    r = int(rng.integers(0, min(m, n) + 1))
    act = sorted(rng.choice(m, size=r, replace=False).tolist())
    x = rng.normal(size=n)
    b = A @ x + rng.uniform(0.1, 1.0, size=m)
    b[act] = A[act] @ x
    p = np.zeros(m)
    for i in act:
        p[i] = 0.0 if rng.random() < 0.4 else rng.uniform(0.2, 2.0)
    v = -A.T @ p
    u = rng.normal(size=n)
    if rng.random() < 0.8:
        rows = [A[i] for i in act if p[i] > 0]
        rows += [A[i] for i in act if p[i] == 0 and rng.random() < 0.4]
        if len(rows) < n:
            u = _orth_complement_project(u, rows)
    return CoderivQuery(x, A, b, v, u)


def random_plicq_query(rng):
    """Active rows positively but not linearly independent."""
    while True:
        n = int(rng.integers(1, 3))
        m = n + 1
        # rows inside an open halfspace {<a, c> > 0} so they stay pointed
        c = rng.normal(size=n)
        c /= np.linalg.norm(c)
        A = rng.normal(size=(m, n))
        A += (np.abs(A @ c) + 0.3)[:, None] * c[None, :] - (A @ c)[:, None] * c[None, :]
        x = rng.normal(size=n)
        b = A @ x
        p = rng.uniform(0.0, 1.5, size=m) * (rng.random(m) < 0.7)
        v = -A.T @ p
        u = rng.normal(size=n)
        if rng.random() < 0.5:
            u = np.zeros(n)
        q = CoderivQuery(x, A, b, v, u)
        if q.plicq() and not q.licq():
            return q


def sample_pattern_q(rng, pattern, m):
    q = np.zeros(m)
    for i in pattern.free:
        q[i] = rng.normal()
    for i in pattern.nonneg:
        q[i] = 0.0 if rng.random() < 0.3 else abs(rng.normal())
    return q


def sample_probes(rng, query, count=20):
    """Covectors: half images of pieces, half perturbed or random."""
    res = dstar_F(query)
    L = query.n + query.m * query.n + query.m
    probes = []
    for s in range(count):
        if res.empty:
            probes.append(rng.normal(size=L) if s % 2 else np.zeros(L))
            continue
        piece = res.pieces[int(rng.integers(len(res.pieces)))]
        q = sample_pattern_q(rng, piece.pattern, query.m)
        mode = s % 4
        if mode == 1 and piece.pattern.nonneg:
            i = piece.pattern.nonneg[int(rng.integers(len(piece.pattern.nonneg)))]
            q[i] = -abs(rng.normal()) - 0.1
        elif mode == 2 and piece.pattern.zero:
            i = piece.pattern.zero[int(rng.integers(len(piece.pattern.zero)))]
            q[i] = rng.choice([-1, 1]) * (abs(rng.normal()) + 0.1)
        w = piece.evaluate(q)
        if mode == 3:
            d = rng.normal(size=L)
            w = w + 0.1 * d / np.linalg.norm(d)
        probes.append(w)
    return probes


def sample_oracle_positive(rng, query, count=20):
    """Normals taken at nearby graph points with independent active rows.

    Rows outside a chosen independent subset S are made slightly inactive;
    at that point the formula is exact, and its images are limiting normals
    at the base point.
    """
    from polysweep.geometry import rows_independent

    I = list(query.active)
    A, v = query.A, query.v
    options = []
    for r in range(len(I) + 1):
        for S in __import__("itertools").combinations(I, r):
            S = list(S)
            if S and not rows_independent(A[S]):
                continue
            if S:
                eta = np.linalg.lstsq(A[S].T, -v, rcond=None)[0]
                if np.linalg.norm(A[S].T @ eta + v) > 1e-9 or eta.min() < -1e-12:
                    continue
            elif np.linalg.norm(v) > 1e-9:
                continue
            options.append(S)
    pieces = []
    for S in options:
        b = query.b.copy()
        for i in I:
            if i not in S:
                b[i] += 0.5
        res = dstar_F(CoderivQuery(query.x, A, b, v, query.u))
        pieces.extend(res.pieces)
    probes = []
    for s in range(count if pieces else 0):
        piece = pieces[int(rng.integers(len(pieces)))]
        probes.append(piece.evaluate(sample_pattern_q(rng, piece.pattern, query.m)))
    return probes


def random_certificate_instance(rng):
    """Small controlled sweeping instance and its catch-up trajectory.

    Normals rotate slowly, offsets move linearly and the cost mixes
    quadratic and absolute-value terms so that some selections are
    intervals.  Draws with an empty moving set are redrawn.
    """
    from polysweep.errors import EmptySetAt

    while True:
        try:
            return _certificate_instance(rng)
        except EmptySetAt:
            continue


def _certificate_instance(rng):
    from polysweep.discrete_ocp import CostSpec, CostTerm, DiscreteTriple, Scenario, TerminalCost
    from polysweep.functions import PiecewisePoly
    from polysweep.sweeping import catch_up

    n = int(rng.integers(1, 3))
    m = int(rng.integers(1, 3))
    k = int(rng.integers(3, 21))
    U0 = rng.normal(size=(m, n))
    U1 = rng.normal(size=(m, n)) * 0.3
    b0 = rng.uniform(-0.3, 0.5, size=m)
    b1 = rng.uniform(-1.0, 1.0, size=m)

    def u_path(t):
        u = U0 + t * U1
        return u / np.linalg.norm(u, axis=1, keepdims=True)

    x0 = rng.normal(size=n) * 0.3
    # shift the initial offsets so that x0 lies in the set, some faces active
    s = b0 - u_path(0.0) @ x0
    b0 = b0 - np.where(rng.random(m) < 0.5, s, np.minimum(s, 0.0))
    kinds = ("quadratic", "abs", "zero")
    if rng.random() < 0.5:
        # track the candidate offsets, so that certificates with lambda > 0 are common
        b_ref = PiecewisePoly([0.0, 1.0], np.stack([b0, b1])[None])
        rate_ref = PiecewisePoly.constant(b1)
    else:
        b_ref, rate_ref = rng.normal(size=m).tolist(), None
    l1 = (CostTerm("b", kinds[int(rng.integers(3))], float(rng.uniform(0.1, 1.0)), b_ref),)
    l3 = (CostTerm("bdot", kinds[int(rng.integers(2))], float(rng.uniform(0.1, 1.0)), rate_ref),)
    if rng.random() < 0.5:
        l1 += (CostTerm("x", "quadratic", 0.5),)
    terminal = TerminalCost("quadratic_half", rng.normal(size=n).tolist())
    mode = "free_u" if rng.random() < 0.5 else "fixed_u"
    sc = Scenario("random", n, m, 1.0, x0.tolist(), CostSpec(terminal, l1=l1, l3=l3),
                  u_path=u_path, b_path=lambda t: b0 + t * b1, mode=mode, k=k)
    ctrl = sc.controls(k)
    st = catch_up(x0, ctrl, jump_guard=None)
    return sc, DiscreteTriple.from_paths(st, ctrl)
