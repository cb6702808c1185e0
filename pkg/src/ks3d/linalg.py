"""Sparse solvers used by the assembly and stability layers.

* ``solve_spd``: direct solve with a residual guarantee.
* ``solve_saddle``: Schur-complement CG for [[A, B^T], [B, 0]] with exact
  inner solves; an optional constant-pressure nullspace is deflated in the
  cell-volume weighted inner product, and the returned pressure has zero
  weighted mean.  A pressure direction with vanishing Schur energy raises
  ``SingularSaddle`` (the expected outcome for unstable pairings).
* ``smallest_generalized_eigenpair``: smallest eigenpair of S v = lambda M v
  with optional deflation of known nullspace vectors.  Dense Cholesky path
  for small problems, shift-invert Lanczos for large sparse S, LOBPCG when S
  is only available as an operator.
"""

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import Indefinite, NotConverged, ShapeMismatch, SingularSaddle

DENSE_EIG_THRESHOLD = 2600
# velocity dofs beyond which a direct factorization of the A block would
# dominate run time and memory; larger systems use preconditioned MINRES
DIRECT_SADDLE_MAX = 30000


def build_csr(rows, cols, values, shape) -> sp.csr_matrix:
    """Assemble a CSR matrix, summing duplicate entries deterministically."""
    m = sp.coo_matrix((values, (rows, cols)), shape=shape).tocsr()
    m.sum_duplicates()
    return m


def matvec(m, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if m.shape[1] != x.shape[0]:
        raise ShapeMismatch(f"matrix {m.shape} cannot multiply vector of length {x.shape[0]}")
    return np.asarray(m @ x)


def factorized_spd(a):
    """LU factorization of a sparse SPD matrix, returned as a solve callable."""
    return spla.factorized(sp.csc_matrix(a))


def solve_spd(a, b, tol: float = 1e-12) -> np.ndarray:
    """Direct solve of an SPD system with a relative residual check."""
    b = np.asarray(b, dtype=float)
    if not np.isfinite(b).all():
        raise NotConverged("right-hand side contains non-finite entries")
    norm_b = np.linalg.norm(b)
    if norm_b == 0.0:
        return np.zeros_like(b)
    x = factorized_spd(a)(b)
    res = np.linalg.norm(b - a @ x)
    if not np.isfinite(res) or res > tol * norm_b:
        raise NotConverged(f"direct solve residual {res:.3e} exceeds {tol:.1e} * |b|")
    return x


def _weighted_mean_free(q, w):
    return q - (w @ q) / w.sum()


def _schur_cg(apply_s, rhs, w, nullspace, rtol, max_iter):
    """Preconditioned CG for S p = rhs with M = diag(w) preconditioning.

    With ``nullspace`` the constants are removed in the w-weighted mean after
    every preconditioner application, and the iterates stay mean-free.
    """
    n = rhs.shape[0]
    p = np.zeros(n)
    r = rhs.copy()
    if nullspace:
        r -= r.sum() / n  # consistent systems have sum(rhs) = 0 up to rounding

    def precondition(res):
        z = res / w
        if nullspace:
            z = _weighted_mean_free(z, w)
        return z

    z = precondition(r)
    d = z.copy()
    rz = r @ z
    norm0 = np.linalg.norm(rhs) if np.linalg.norm(rhs) > 0 else 1.0
    max_ratio = 0.0
    for _ in range(max_iter):
        if np.linalg.norm(r) <= rtol * norm0:
            return p
        sd = apply_s(d)
        dsd = d @ sd
        dmd = d @ (w * d)
        ratio = dsd / dmd if dmd > 0 else 0.0
        max_ratio = max(max_ratio, abs(ratio))
        if dsd <= 0 or abs(ratio) <= 1e-16 * max_ratio:
            raise SingularSaddle(
                "pressure direction with vanishing Schur energy; "
                "the velocity/pressure pairing is not inf-sup stable on this mesh"
            )
        alpha = rz / dsd
        p += alpha * d
        r -= alpha * sd
        if nullspace:
            r -= r.sum() / n
        z = precondition(r)
        rz_new = r @ z
        d = z + (rz_new / rz) * d
        rz = rz_new
    if np.linalg.norm(r) <= rtol * norm0:
        return p
    raise NotConverged(f"Schur CG stalled at relative residual {np.linalg.norm(r)/norm0:.3e}")


def solve_saddle(
    a,
    b,
    f,
    g_rhs,
    tol: float = 1e-10,
    pressure_nullspace: bool = False,
    pressure_weights=None,
):
    """Solve [[A, B^T], [B, 0]] [u, p] = [f, g].

    A must be SPD on its index set, B maps velocities to pressures.  Returns
    (u, p); with ``pressure_nullspace`` the pressure is normalized to zero
    weighted mean (weights default to 1, pass cell volumes for meshes).

    Small systems factor A once and run CG on the pressure Schur complement,
    which also recognizes non-inf-sup-stable pairings.  Systems too large for
    a direct 3D factorization switch to MINRES on the full block system with
    an algebraic-multigrid preconditioner on A.
    """
    f = np.asarray(f, dtype=float)
    g = np.asarray(g_rhs, dtype=float)
    n_u, n_p = a.shape[0], b.shape[0]
    if b.shape[1] != n_u or f.shape[0] != n_u or g.shape[0] != n_p:
        raise ShapeMismatch("saddle system block shapes are inconsistent")
    w = np.ones(n_p) if pressure_weights is None else np.asarray(pressure_weights, dtype=float)
    if (w <= 0).any():
        raise Indefinite("pressure weights must be positive")
    if n_u > DIRECT_SADDLE_MAX:
        return _saddle_minres(a, b, f, g, tol, pressure_nullspace, w)
    solve_a = factorized_spd(a)
    bt = b.T.tocsr() if sp.issparse(b) else np.asarray(b).T

    def apply_s(q):
        return b @ solve_a(bt @ q)

    scale = max(np.linalg.norm(f), np.linalg.norm(g), 1.0)
    u = np.zeros(n_u)
    p = np.zeros(n_p)
    rf, rg = f.copy(), g.copy()
    for _ in range(4):  # iterative refinement rounds
        rhs_p = b @ solve_a(rf) - rg
        dp = _schur_cg(apply_s, rhs_p, w, pressure_nullspace, rtol=1e-13, max_iter=50 * n_p + 200)
        du = solve_a(rf - bt @ dp)
        u += du
        p += dp
        rf = f - a @ u - bt @ p
        rg = g - b @ u
        residual = np.hypot(np.linalg.norm(rf), np.linalg.norm(rg)) / scale
        if residual <= tol:
            return _finish_saddle(u, p, a, bt, b, f, g, scale, tol, pressure_nullspace, w)
    raise NotConverged(f"saddle solve stalled at block relative residual {residual:.3e}")


def _finish_saddle(u, p, a, bt, b, f, g, scale, tol, nullspace, w):
    if nullspace:
        p = _weighted_mean_free(p, w)
        rf = f - a @ u - bt @ p
        rg = g - b @ u
        residual = np.hypot(np.linalg.norm(rf), np.linalg.norm(rg)) / scale
        if residual > tol:
            raise NotConverged(
                "saddle residual grew after pressure normalization; "
                "the constant-pressure mode does not lie in the kernel of B^T"
            )
    return u, p


def _saddle_minres(a, b, f, g, tol, nullspace, w):
    """Restarted preconditioned MINRES on the full saddle matrix.

    The velocity block is preconditioned by one smoothed-aggregation V-cycle,
    the pressure block by the inverse of the diagonal Schur estimate
    diag(B diag(A)^-1 B^T), which is spectrally equivalent to the pressure
    mass matrix for piecewise constants.
    """
    import pyamg

    a = sp.csr_matrix(a)
    b = sp.csr_matrix(b)
    n_u, n_p = a.shape[0], b.shape[0]
    k = sp.bmat([[a, b.T], [b, None]], format="csr")
    cycle = pyamg.smoothed_aggregation_solver(a, max_coarse=1000).aspreconditioner("V")
    diag_a = a.diagonal()
    if (diag_a <= 0).any():
        raise Indefinite("velocity block has non-positive diagonal entries")
    schur_diag = np.asarray(b.multiply(b) @ (1.0 / diag_a)).ravel()
    if (schur_diag <= 0).any():
        raise SingularSaddle("a pressure cell is decoupled from every free velocity dof")

    def precondition(x):
        z = np.empty_like(x)
        z[:n_u] = cycle @ x[:n_u]
        zp = x[n_u:] / schur_diag
        if nullspace:
            zp -= zp.mean()  # Euclidean projection keeps the operator symmetric
        z[n_u:] = zp
        return z

    m = spla.LinearOperator(k.shape, matvec=precondition)
    rhs = np.concatenate([f, g])
    if nullspace:
        rhs[n_u:] -= rhs[n_u:].mean()
    scale = max(np.linalg.norm(f), np.linalg.norm(g), 1.0)
    x = np.zeros(k.shape[0])
    r = rhs.copy()
    residual = np.linalg.norm(r) / scale
    for _ in range(8):  # restart on the true residual
        if residual <= tol:
            u, p = x[:n_u], x[n_u:]
            bt = b.T.tocsr()
            return _finish_saddle(u, p, a, bt, b, f, g, scale, tol, nullspace, w)
        dx, _ = spla.minres(k, r, rtol=1e-12, M=m, maxiter=1500)
        x += dx
        r = rhs - k @ x
        if nullspace:
            r[n_u:] -= r[n_u:].mean()
        new_residual = np.linalg.norm(r) / scale
        if new_residual >= 0.5 * residual:
            break  # stalled; a further restart cannot reach the target
        residual = new_residual
    raise NotConverged(f"saddle solve stalled at block relative residual {residual:.3e}")


def _as_dense(m):
    return m.toarray() if sp.issparse(m) else np.asarray(m, dtype=float)


def _prepare_deflation(deflate, n):
    if deflate is None:
        return None
    z = np.atleast_2d(np.asarray(deflate, dtype=float))
    if z.shape[0] == n and z.shape[1] != n:
        z = z.T
    if z.shape[1] != n:
        raise ShapeMismatch("deflation vectors must have the problem dimension")
    return z  # (k, n)


def _check_eigpair(s_matvec, m, lam, v, tol):
    mv = m @ v
    res = np.linalg.norm(s_matvec(v) - lam * mv)
    if not np.isfinite(res) or res > tol * max(np.linalg.norm(mv), 1e-300):
        raise NotConverged(f"eigenpair residual {res:.3e} exceeds {tol:.1e} * |Mv|")


def _normalized(v, m):
    v = v / np.sqrt(v @ (m @ v))
    i = np.argmax(np.abs(v))
    return v if v[i] > 0 else -v


def _dense_eigenpair(s, m, z):
    sd = _as_dense(s)
    md = _as_dense(m)
    try:
        low = sla.cholesky(md, lower=True)
    except sla.LinAlgError as exc:
        raise Indefinite("mass matrix is not positive definite") from exc
    y = sla.solve_triangular(low, sd, lower=True)
    c = sla.solve_triangular(low, y.T, lower=True)
    c = 0.5 * (c + c.T)
    if z is not None:
        gamma = 10.0 * np.linalg.norm(c, ord="fro") + 1.0
        for zk in z:
            u = low.T @ zk
            u /= np.linalg.norm(u)
            c += gamma * np.outer(u, u)
    vals, vecs = sla.eigh(c)
    v = sla.solve_triangular(low.T, vecs[:, 0], lower=False)
    return float(vals[0]), v


def _sparse_eigenpair(s, m, z, tol):
    n = s.shape[0]
    s = sp.csr_matrix(s)
    m = sp.csr_matrix(m)
    # a small SPD shift keeps the shift-invert factorization positive definite
    scale = abs(s.diagonal()).max() / max(abs(m.diagonal()).max(), 1e-300)
    delta = max(1e-8 * scale, 1e-300)
    rng = np.random.default_rng(1234)
    v0 = rng.standard_normal(n)
    if z is None:
        op = spla.splu(sp.csc_matrix(s + delta * m))
        opinv = spla.LinearOperator((n, n), matvec=op.solve)
        vals, vecs = spla.eigsh(s, k=1, M=m, sigma=-delta, which="LM", OPinv=opinv, v0=v0)
        lam, v = float(vals[0]), vecs[:, 0]
    else:
        # push deflated directions up by a penalty; Sherman-Morrison keeps the
        # shift-invert solves rank-1 cheap
        x = rng.standard_normal(n)
        rayleigh = (x @ (s @ x)) / (x @ (m @ x))
        gamma = 100.0 * abs(rayleigh) + 1.0
        ws = []
        for zk in z:
            mz = m @ zk
            ws.append(np.sqrt(gamma / (zk @ mz)) * mz)
        k = sp.csc_matrix(s + delta * m)
        kfac = spla.splu(k)
        wmat = np.column_stack(ws)  # (n, k)
        kw = np.column_stack([kfac.solve(wk) for wk in ws])
        cap = np.linalg.inv(np.eye(len(ws)) + wmat.T @ kw)
        s_plain = s

        def opinv_mv(x):
            y = kfac.solve(x)
            return y - kw @ (cap @ (wmat.T @ y))

        def s_defl_mv(x):
            return s_plain @ x + wmat @ (wmat.T @ x)

        s_op = spla.LinearOperator((n, n), matvec=s_defl_mv)
        opinv = spla.LinearOperator((n, n), matvec=opinv_mv)
        vals, vecs = spla.eigsh(s_op, k=1, M=m, sigma=-delta, which="LM", OPinv=opinv, v0=v0)
        lam, v = float(vals[0]), vecs[:, 0]
    return lam, v


def _operator_eigenpair(s, m, z, tol):
    n = s.shape[0]
    m = sp.csr_matrix(m)
    rng = np.random.default_rng(1234)
    x0 = rng.standard_normal((n, 1))
    y = None if z is None else np.asarray(z).T  # (n, k) constraint columns
    vals, vecs = spla.lobpcg(
        s, x0, B=m, Y=y, largest=False, tol=tol * 1e-2, maxiter=2000, verbosityLevel=0
    )
    return float(vals[0]), vecs[:, 0]


def _sweep(v, m, z):
    if z is not None:
        for zk in z:
            mz = m @ zk
            v = v - zk * ((mz @ v) / (zk @ mz))
    return v


def _polish(s, m, z, v):
    """Shifted inverse iteration on an already converged eigenvector.

    Eigensolvers resolve an eigenvalue only to roundoff relative to the matrix
    norm, which hides genuinely tiny eigenvalues behind a ~1e-16 |S| floor.
    Two refinement solves push the eigenvector error down far enough that its
    Rayleigh quotient becomes trustworthy near zero.
    """
    s = sp.csr_matrix(s)
    m = sp.csr_matrix(m)
    scale = abs(s.diagonal()).max() / max(abs(m.diagonal()).max(), 1e-300)
    delta = max(1e-8 * scale, 1e-300)
    k = sp.csc_matrix(s + delta * m)
    try:
        fac = spla.splu(k)
    except RuntimeError:
        return v
    for _ in range(2):
        rhs = m @ v
        w = fac.solve(rhs)
        # one step of iterative refinement; the shifted solve alone is too
        # inaccurate at condition ~1/delta to preserve a tiny quotient
        w = w + fac.solve(rhs - k @ w)
        w = _sweep(w, m, z)
        norm = w @ (m @ w)
        if not np.isfinite(norm) or norm <= 0.0:
            return v
        v = w / np.sqrt(norm)
    return v


def smallest_generalized_eigenpair(s, m, deflate=None, tol: float = 1e-9):
    """Smallest eigenpair of S v = lambda M v with optional deflation.

    ``deflate`` holds known eigenvectors (rows or columns) whose eigenvalues
    must be skipped, e.g. the constant pressure on a closed cavity.  The
    returned vector is M-normalized with a deterministic sign, and the
    residual |Sv - lambda Mv| <= tol |Mv| is verified.
    """
    n = s.shape[0]
    if m.shape != (n, n):
        raise ShapeMismatch("S and M must have matching square shapes")
    z = _prepare_deflation(deflate, n)
    if isinstance(s, spla.LinearOperator):
        lam, v = _operator_eigenpair(s, m, z, tol)
    else:
        if n <= DENSE_EIG_THRESHOLD:
            lam, v = _dense_eigenpair(s, m, z)
        else:
            lam, v = _sparse_eigenpair(s, m, z, tol)
        # deflated directions are exact eigenvectors of the pencil, so sweeping
        # them out of the result removes any penalty contamination
        v = _polish(s, m, z, _sweep(v, m, z))
    v = _normalized(_sweep(v, m, z), m)
    # the Rayleigh quotient of the refined vector is accurate to the roundoff
    # of the quadratic form itself, well below the eigensolver's value floor
    rq = float(v @ (s @ v))
    if np.isfinite(rq):
        lam = rq
    _check_eigpair(lambda x: s @ x, m, lam, v, tol)
    return lam, v
