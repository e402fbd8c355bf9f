"""Independent brute-force reference implementations for the test suite.

Everything here deliberately uses different algorithms from the package:
polynomials as exponent dicts, exact integration over triangles by the
monomial factorial formula (affine map + m!n!/(m+n+2)!), exact edge
integrals, Duffy-mapped tensor Gauss rules only for transcendental
integrands, boundary-vanishing bases built from products of linear edge
factors, and dense numpy solves.  Only the mesh geometry objects are shared.
"""

import numpy as np
from numpy.polynomial.legendre import leggauss

PI = np.pi


# ---------- polynomial algebra on exponent dicts {(a,b): coeff} ----------

def p_add(p, q, s=1.0):
    out = dict(p)
    for e, c in q.items():
        out[e] = out.get(e, 0.0) + s * c
    return out


def p_mul(p, q):
    out = {}
    for (a1, b1), c1 in p.items():
        for (a2, b2), c2 in q.items():
            e = (a1 + a2, b1 + b2)
            out[e] = out.get(e, 0.0) + c1 * c2
    return out


def p_pow(p, n):
    out = {(0, 0): 1.0}
    for _ in range(n):
        out = p_mul(out, p)
    return out


def p_dx(p):
    return {(a - 1, b): a * c for (a, b), c in p.items() if a > 0}


def p_dy(p):
    return {(a, b - 1): b * c for (a, b), c in p.items() if b > 0}


def p_eval(p, x, y):
    tot = 0.0
    for (a, b), c in p.items():
        tot += c * x**a * y**b
    return tot


def p_scale(p, s):
    return {e: s * c for e, c in p.items()}


# ---------- exact integration ----------

_FACT = [1.0]
for _i in range(1, 100):
    _FACT.append(_FACT[-1] * _i)


def tri_integral(p, v0, v1, v2):
    """Exact integral of polynomial p over the triangle (v0, v1, v2)."""
    # x = v0 + xi*(v1-v0) + eta*(v2-v0); int_ref xi^m eta^n = m! n!/(m+n+2)!
    xs = {(0, 0): v0[0], (1, 0): v1[0] - v0[0], (0, 1): v2[0] - v0[0]}
    ys = {(0, 0): v0[1], (1, 0): v1[1] - v0[1], (0, 1): v2[1] - v0[1]}
    jac = abs((v1[0] - v0[0]) * (v2[1] - v0[1]) - (v2[0] - v0[0]) * (v1[1] - v0[1]))
    tot = 0.0
    for (a, b), c in p.items():
        if c == 0.0:
            continue
        q = p_mul(p_pow(xs, a), p_pow(ys, b))
        for (m, n), cc in q.items():
            tot += c * cc * _FACT[m] * _FACT[n] / _FACT[m + n + 2]
    return jac * tot


def cell_integral(p, pts):
    """Exact integral of polynomial p over the convex polygon with vertex
    list pts (fan from the first vertex)."""
    if len(pts) == 3:
        return tri_integral(p, pts[0], pts[1], pts[2])
    return sum(
        tri_integral(p, pts[0], pts[i], pts[i + 1]) for i in range(1, len(pts) - 1)
    )


def edge_integral(p, a, b):
    """Exact integral of polynomial p along the segment a->b (arclength)."""
    xs = {(0, 0): a[0], (1, 0): b[0] - a[0]}
    ys = {(0, 0): a[1], (1, 0): b[1] - a[1]}
    L = float(np.hypot(b[0] - a[0], b[1] - a[1]))
    tot = 0.0
    for (aa, bb), c in p.items():
        if c == 0.0:
            continue
        q = p_mul(p_pow(xs, aa), p_pow(ys, bb))
        for (m, _n), cc in q.items():
            tot += c * cc / (m + 1.0)
    return L * tot


def tri_integral_f(g, v0, v1, v2, n=24):
    """High-order quadrature of a callable g over a triangle via Duffy map."""
    t, w = leggauss(n)
    t = 0.5 * (t + 1.0)
    w = 0.5 * w
    jac = abs((v1[0] - v0[0]) * (v2[1] - v0[1]) - (v2[0] - v0[0]) * (v1[1] - v0[1]))
    tot = 0.0
    for xi, wx in zip(t, w):
        for et, wy in zip(t, w):
            r, s = xi, et * (1.0 - xi)
            x = v0[0] + r * (v1[0] - v0[0]) + s * (v2[0] - v0[0])
            y = v0[1] + r * (v1[1] - v0[1]) + s * (v2[1] - v0[1])
            tot += wx * wy * (1.0 - xi) * g(x, y)
    return jac * tot


def cell_integral_f(g, pts, n=24):
    """High-order quadrature of a callable over a convex polygon (fanned)."""
    if len(pts) == 3:
        return tri_integral_f(g, pts[0], pts[1], pts[2], n=n)
    return sum(
        tri_integral_f(g, pts[0], pts[i], pts[i + 1], n=n)
        for i in range(1, len(pts) - 1)
    )


# ---------- bases ----------

def mono_basis(k, cx, cy, h):
    """Scaled centroid monomials ((x-cx)/h)^a ((y-cy)/h)^b, graded order."""
    X = {(0, 0): -cx / h, (1, 0): 1.0 / h}
    Y = {(0, 0): -cy / h, (0, 1): 1.0 / h}
    out = []
    for d in range(k + 1):
        for m in range(d + 1):
            out.append(p_mul(p_pow(X, d - m), p_pow(Y, m)))
    return out


def basis_for_cell(msh, cell, k):
    return mono_basis(k, cell.centroid[0], cell.centroid[1], cell.diameter)


def cell_vertex_list(msh, cell):
    return [(msh.vertices[i].x, msh.vertices[i].y) for i in cell.vertices]


def edge_linear(a, b, inside):
    """Linear polynomial vanishing on the segment a-b, equal 1 at `inside`."""
    nx, ny = b[1] - a[1], -(b[0] - a[0])
    lam = {(0, 0): -(nx * a[0] + ny * a[1]), (1, 0): nx, (0, 1): ny}
    s = p_eval(lam, inside[0], inside[1])
    return {e: c / s for e, c in lam.items()}


def gram(polys, pts):
    """Exact Gram matrix of a list of polynomials over a convex polygon."""
    n = len(polys)
    m = np.empty((n, n))
    for a in range(n):
        for b in range(a, n):
            m[a, b] = m[b, a] = cell_integral(p_mul(polys[a], polys[b]), pts)
    return m


def project_scalar_oracle(f, msh, cell, k, n=32):
    """L2 projection of a callable onto the cell's scaled monomials (dense)."""
    pts = cell_vertex_list(msh, cell)
    raw = basis_for_cell(msh, cell, k)
    M = gram(raw, pts)
    rhs = np.array(
        [cell_integral_f(lambda x, y, p=p: f(x, y) * p_eval(p, x, y), pts, n=n) for p in raw]
    )
    return np.linalg.solve(M, rhs)


def project_vector_oracle(gx, gy, msh, cell, j, n=32):
    """Componentwise L2 projection of a callable vector field (stacked)."""
    pts = cell_vertex_list(msh, cell)
    raw = basis_for_cell(msh, cell, j)
    M = gram(raw, pts)
    bx = np.array(
        [cell_integral_f(lambda x, y, p=p: gx(x, y) * p_eval(p, x, y), pts, n=n) for p in raw]
    )
    by = np.array(
        [cell_integral_f(lambda x, y, p=p: gy(x, y) * p_eval(p, x, y), pts, n=n) for p in raw]
    )
    return np.concatenate([np.linalg.solve(M, bx), np.linalg.solve(M, by)])


# ---------- the weak gradient, brute force ----------

def weak_grad_oracle(msh, cell, k, bc, j):
    """Weak-gradient matrix of one cell over raw monomial inputs.

    Returns (contributors, matrix, gram, rhs) with the same block layout as
    the package operator: contributor 0 is the cell itself, then its interior
    edge neighbours in loop order; the matrix maps stacked monomial
    coefficients to stacked x/y coefficients in the cell's degree-j basis.
    All integrals are exact; ``gram`` is the 2x2-block mass matrix and ``rhs``
    the moment matrix, so callers can check the defining equations directly
    (the explicit inverse loses cond(gram) * eps digits on skinny cells).
    """
    pts = cell_vertex_list(msh, cell)
    mb_j = basis_for_cell(msh, cell, j)
    dj = len(mb_j)
    vec = [(p, None) for p in mb_j] + [(None, p) for p in mb_j]
    Ms = gram(mb_j, pts)
    Mj = np.zeros((2 * dj, 2 * dj))
    Mj[:dj, :dj] = Ms
    Mj[dj:, dj:] = Ms

    contributors = [cell.id]
    records = []
    for eid in cell.edges:
        e = msh.edges[eid]
        if e.boundary:
            records.append((e, None))
        else:
            other = e.cell_right if e.cell_left == cell.id else e.cell_left
            contributors.append(other)
            records.append((e, other))
    bases = {c: basis_for_cell(msh, msh.cells[c], k) for c in contributors}
    dm = len(bases[cell.id])

    rhs = np.zeros((2 * dj, dm * len(contributors)))
    col0 = {c: dm * i for i, c in enumerate(contributors)}
    for a, (qx, qy) in enumerate(vec):
        divq = p_dx(qx) if qx is not None else p_dy(qy)
        for b, p in enumerate(bases[cell.id]):
            rhs[a, b] -= cell_integral(p_mul(p, divq), pts)
    for e, other in records:
        A = (msh.vertices[e.v0].x, msh.vertices[e.v0].y)
        B = (msh.vertices[e.v1].x, msh.vertices[e.v1].y)
        nx, ny = e.normal
        if e.cell_left != cell.id:
            nx, ny = -nx, -ny
        if other is None:
            w_own = 1.0 if bc == "strong" else 0.0
        else:
            w_own = 0.5
        for a, (qx, qy) in enumerate(vec):
            qn = p_scale(qx, nx) if qx is not None else p_scale(qy, ny)
            if w_own:
                for b, p in enumerate(bases[cell.id]):
                    rhs[a, b] += w_own * edge_integral(p_mul(p, qn), A, B)
            if other is not None:
                for b, p in enumerate(bases[other]):
                    rhs[a, col0[other] + b] += 0.5 * edge_integral(p_mul(p, qn), A, B)
    return contributors, np.linalg.solve(Mj, rhs), Mj, rhs


def h1h_oracle(msh, coeffs, k):
    """Exact broken-H1 norm: gradient seminorm plus h_e^{-1} jump terms."""
    grad_sq = 0.0
    jump_sq = 0.0
    polys = []
    for cell in msh.cells:
        raw = basis_for_cell(msh, cell, k)
        v = {}
        for c, p in zip(coeffs[cell.id], raw):
            v = p_add(v, p, float(c))
        polys.append(v)
        pts = cell_vertex_list(msh, cell)
        grad_sq += cell_integral(p_mul(p_dx(v), p_dx(v)), pts)
        grad_sq += cell_integral(p_mul(p_dy(v), p_dy(v)), pts)
    for e in msh.edges:
        A = (msh.vertices[e.v0].x, msh.vertices[e.v0].y)
        B = (msh.vertices[e.v1].x, msh.vertices[e.v1].y)
        jump = polys[e.cell_left]
        if not e.boundary:
            jump = p_add(jump, polys[e.cell_right], -1.0)
        jump_sq += edge_integral(p_mul(jump, jump), A, B) / e.length
    return float(np.sqrt(grad_sq + jump_sq))


# ---------- the full scheme, brute force ----------

def solve_cdg(msh, k, bc, j, uex, fsrc, nq=24):
    """Dense solve of the stabilizer-free scheme on any of the two families.

    Returns (l2_error, energy_error): the L2 distance of u_h to the cell-wise
    projection of uex, and the broken L2 distance of the weak gradient of u_h
    to the projected exact gradient.  Strong mode builds boundary-vanishing
    local bases as products of linear edge factors, so it shares nothing with
    the package's nullspace construction.
    """
    cells = msh.cells
    loc_basis = []
    for cell in cells:
        cx, cy = cell.centroid
        raw = mono_basis(k, cx, cy, cell.diameter)
        bes = [e for e in (msh.edges[i] for i in cell.edges) if e.boundary]
        if bc == "strong" and bes:
            facs = {(0, 0): 1.0}
            for e in bes:
                a, b = msh.vertices[e.v0], msh.vertices[e.v1]
                facs = p_mul(facs, edge_linear((a.x, a.y), (b.x, b.y), cell.centroid))
            sub = mono_basis(k - len(bes), cx, cy, cell.diameter)
            loc_basis.append([p_mul(facs, s) for s in sub] if k >= len(bes) else [])
        else:
            loc_basis.append(raw)
    dims = [len(b) for b in loc_basis]
    offs = np.concatenate([[0], np.cumsum(dims)])
    N = int(offs[-1])

    vec_basis = []
    for cell in cells:
        mb = basis_for_cell(msh, cell, j)
        vec_basis.append([(p, None) for p in mb] + [(None, p) for p in mb])

    grads = []  # grads[c]: contributor cell id -> (2*dj, dim contributor)
    Mjs = []
    verts = [cell_vertex_list(msh, c) for c in cells]
    for cell in cells:
        vb = vec_basis[cell.id]
        dv = len(vb)
        Mj = np.zeros((dv, dv))
        half = dv // 2
        Ms = gram([q[0] for q in vb[:half]], verts[cell.id])
        Mj[:half, :half] = Ms
        Mj[half:, half:] = Ms
        Mjs.append(Mj)
        contrib = {cell.id: np.zeros((dv, dims[cell.id]))}
        for a, (qx, qy) in enumerate(vb):
            divq = p_dx(qx) if qx is not None else p_dy(qy)
            for b, p in enumerate(loc_basis[cell.id]):
                contrib[cell.id][a, b] -= cell_integral(p_mul(p, divq), verts[cell.id])
        for eid in cell.edges:
            e = msh.edges[eid]
            va, vb2 = msh.vertices[e.v0], msh.vertices[e.v1]
            A, B = (va.x, va.y), (vb2.x, vb2.y)
            nx, ny = e.normal
            if e.cell_left != cell.id:
                nx, ny = -nx, -ny
            if e.boundary:
                w_own, other = (1.0 if bc == "strong" else 0.0), None
            else:
                w_own = 0.5
                other = e.cell_right if e.cell_left == cell.id else e.cell_left
            for a, (qx, qy) in enumerate(vb):
                qn = p_scale(qx, nx) if qx is not None else p_scale(qy, ny)
                if w_own:
                    for b, p in enumerate(loc_basis[cell.id]):
                        contrib[cell.id][a, b] += w_own * edge_integral(p_mul(p, qn), A, B)
                if other is not None:
                    blk = contrib.setdefault(other, np.zeros((dv, dims[other])))
                    for b, p in enumerate(loc_basis[other]):
                        blk[a, b] += 0.5 * edge_integral(p_mul(p, qn), A, B)
        grads.append({c: np.linalg.solve(Mj, m) for c, m in contrib.items()})

    A = np.zeros((N, N))
    rhs = np.zeros(N)
    for cell in cells:
        Mj = Mjs[cell.id]
        g = grads[cell.id]
        ids = sorted(g.keys())
        for ci in ids:
            for cj in ids:
                blk = g[ci].T @ Mj @ g[cj]
                A[offs[ci]:offs[ci] + dims[ci], offs[cj]:offs[cj] + dims[cj]] += blk
        V = verts[cell.id]
        for b, p in enumerate(loc_basis[cell.id]):
            rhs[offs[cell.id] + b] += cell_integral_f(
                lambda x, y, p=p: fsrc(x, y) * p_eval(p, x, y), V, n=nq
            )
    x = np.linalg.solve(A, rhs)

    def dux(xx, yy):
        return PI * np.cos(PI * xx) * np.sin(PI * yy)

    def duy(xx, yy):
        return PI * np.sin(PI * xx) * np.cos(PI * yy)

    l2sq = 0.0
    ensq = 0.0
    for cell in cells:
        V = verts[cell.id]
        raw = basis_for_cell(msh, cell, k)
        Mk = gram(raw, V)
        bq = np.array(
            [cell_integral_f(lambda x, y, p=p: uex(x, y) * p_eval(p, x, y), V, n=nq) for p in raw]
        )
        q0 = np.linalg.solve(Mk, bq)
        uh = np.zeros(len(raw))
        cofs = x[offs[cell.id]:offs[cell.id] + dims[cell.id]]
        for b, p in enumerate(loc_basis[cell.id]):
            bv = np.array([cell_integral(p_mul(p, r), V) for r in raw])
            uh += cofs[b] * np.linalg.solve(Mk, bv)
        d = uh - q0
        l2sq += d @ Mk @ d

        Mj = Mjs[cell.id]
        gq = np.array(
            [
                cell_integral_f(lambda x, y, q=q: dux(x, y) * p_eval(q[0], x, y), V, n=nq)
                if q[0] is not None
                else cell_integral_f(lambda x, y, q=q: duy(x, y) * p_eval(q[1], x, y), V, n=nq)
                for q in vec_basis[cell.id]
            ]
        )
        qg = np.linalg.solve(Mj, gq)
        gw = np.zeros(len(vec_basis[cell.id]))
        for ci, mat in grads[cell.id].items():
            gw += mat @ x[offs[ci]:offs[ci] + dims[ci]]
        dd = gw - qg
        ensq += dd @ Mj @ dd
    return float(np.sqrt(l2sq)), float(np.sqrt(ensq))


def uex(x, y):
    return np.sin(PI * x) * np.sin(PI * y)


def fsrc(x, y):
    return 2.0 * PI**2 * np.sin(PI * x) * np.sin(PI * y)
