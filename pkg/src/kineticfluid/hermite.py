"""Velocity-space algebra in the Maxwellian-weighted Hermite basis.

Coefficient convention
----------------------
A velocity-space function g(v), v in R^3, is stored as a complex (or real)
tensor ``c`` whose last three axes are per-axis Hermite degrees::

    g(v) = sum_{a1,a2,a3 <= N} c[..., a1, a2, a3] * psi_a1(v1) psi_a2(v2) psi_a3(v3)

with the orthonormal 1d basis

    psi_n(x) = He_n(x) * (2*pi)**(-1/4) * exp(-x**2/4) / sqrt(n!),

He_n the probabilists' Hermite polynomials.  psi_0(x)**2 is the 1d standard
Gaussian, so the (0,0,0) basis element is sqrt(M) with M the global
Maxwellian (2*pi)**(-3/2) exp(-|v|^2/2).

Any leading axes of ``c`` are batch axes; every operator here broadcasts
over them.  Axes are numbered 1..3.

Ladder actions (exact in the enlarged space):

    v_j        : c_a -> sqrt(a_j+1) into a+e_j, plus sqrt(a_j) into a-e_j
    d/dv_j     : half lowering minus half raising
    L          : diagonal, L psi_a = -(a1+a2+a3) psi_a
    M^(-1/2) Laplace_v (M^(1/2) .) : pure double raising per axis

The Gauss-Hermite quadrature oracle (`quadrature_inner`) is kept independent
of the ladder implementations and is what the tests trust.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

SQRT3 = np.sqrt(3.0)
SQRT6 = np.sqrt(6.0)

# tolerances used by the self-checks: algebraic identities / oracle comparisons
TOL_ALGEBRA = 1e-12
TOL_ORACLE = 1e-10


def order_of(c):
    """Per-axis truncation order N of a coefficient tensor."""
    n1, n2, n3 = c.shape[-3:]
    if not (n1 == n2 == n3):
        raise ValueError(f"coefficient tensor must be cubic in its last three axes, got {c.shape[-3:]}")
    return n1 - 1


def zeros(order, batch=(), dtype=complex):
    return np.zeros(tuple(batch) + (order + 1,) * 3, dtype=dtype)


def resize(c, order):
    """Zero-pad or truncate all three Hermite axes to the given order."""
    N = order_of(c)
    if order == N:
        return c
    out = np.zeros(c.shape[:-3] + (order + 1,) * 3, dtype=c.dtype)
    K = min(N, order) + 1
    out[..., :K, :K, :K] = c[..., :K, :K, :K]
    return out


def _shift_add(out, c, axis, shift, factors):
    """out[.., m, ..] += factors[m] * c[.., m - shift, ..] along Hermite axis `axis`.

    The target range is clipped to both tensors; the other two Hermite axes are
    paired up to the smaller of the two extents (coefficients beyond the output
    order are dropped, zero-padding closure).
    """
    nd = out.ndim
    N = order_of(c)
    M = order_of(out)
    K = min(N, M) + 1
    dst_lo = max(0, shift)
    dst_hi = min(M, N + shift)
    if dst_hi < dst_lo:
        return
    dst = [slice(0, K)] * 3
    src = [slice(0, K)] * 3
    dst[axis - 1] = slice(dst_lo, dst_hi + 1)
    src[axis - 1] = slice(dst_lo - shift, dst_hi - shift + 1)
    lead = (slice(None),) * (nd - 3)
    fshape = [1] * nd
    fshape[nd - 3 + (axis - 1)] = dst_hi - dst_lo + 1
    fac = factors[dst_lo:dst_hi + 1].reshape(fshape)
    out[lead + tuple(dst)] += fac * c[lead + tuple(src)]


def mult_v(c, axis, out_order=None):
    """Coefficients of v_axis * g.  Exact when out_order >= N+1.

    With out_order < N+1 the raising output beyond the target order is
    dropped (truncation closure used by the time steppers).
    """
    N = order_of(c)
    M = N + 1 if out_order is None else out_order
    out = np.zeros(c.shape[:-3] + (M + 1,) * 3, dtype=np.result_type(c, float))
    m = np.arange(M + 1, dtype=float)
    _shift_add(out, c, axis, +1, np.sqrt(m))        # raising, factor sqrt(a_j + 1)
    _shift_add(out, c, axis, -1, np.sqrt(m + 1.0))  # lowering, factor sqrt(a_j)
    return out


def ddv(c, axis, out_order=None):
    """Coefficients of d/dv_axis g: half lowering minus half raising."""
    N = order_of(c)
    M = N + 1 if out_order is None else out_order
    out = np.zeros(c.shape[:-3] + (M + 1,) * 3, dtype=np.result_type(c, float))
    m = np.arange(M + 1, dtype=float)
    _shift_add(out, c, axis, -1, 0.5 * np.sqrt(m + 1.0))
    _shift_add(out, c, axis, +1, -0.5 * np.sqrt(m))
    return out


@lru_cache(maxsize=32)
def _degree_table(N):
    r = np.arange(N + 1)
    return (r[:, None, None] + r[None, :, None] + r[None, None, :]).astype(float)


def apply_L(c):
    """Linearized Fokker-Planck operator: diagonal with eigenvalue -degree."""
    return c * (-_degree_table(order_of(c)))


def theta_op(c, out_order=None):
    """M^(-1/2) Laplace_v (M^(1/2) g): double raising on each axis, exact at N+2."""
    N = order_of(c)
    M = N + 2 if out_order is None else out_order
    out = np.zeros(c.shape[:-3] + (M + 1,) * 3, dtype=np.result_type(c, float))
    m = np.arange(M + 1, dtype=float)
    for axis in (1, 2, 3):
        _shift_add(out, c, axis, +2, np.sqrt(m * (m - 1.0)))
    return out


def moments(c):
    """Mass, momentum and energy moments (a, b, omega) read off the coefficients."""
    a = c[..., 0, 0, 0]
    b = np.stack([c[..., 1, 0, 0], c[..., 0, 1, 0], c[..., 0, 0, 1]], axis=-1)
    omega = (c[..., 2, 0, 0] + c[..., 0, 2, 0] + c[..., 0, 0, 2]) / SQRT3
    return a, b, omega


def project_macro(c):
    """Projection onto Span{chi_0, chi_1..3, chi_4} (macroscopic part)."""
    a, b, omega = moments(c)
    out = np.zeros_like(c, dtype=np.result_type(c, float))
    out[..., 0, 0, 0] = a
    out[..., 1, 0, 0] = b[..., 0]
    out[..., 0, 1, 0] = b[..., 1]
    out[..., 0, 0, 1] = b[..., 2]
    w = omega / SQRT3
    out[..., 2, 0, 0] = w
    out[..., 0, 2, 0] = w
    out[..., 0, 0, 2] = w
    return out


def project_P(c):
    macro = project_macro(c)
    return macro, c - macro


def norm_sq(c):
    """Squared L^2(dv) norm; exact by orthonormality."""
    return np.sum(np.abs(c) ** 2, axis=(-3, -2, -1))


def inner(g, h):
    """L^2(dv) inner product <g, h> = int g conj(h) dv."""
    N = max(order_of(g), order_of(h))
    return np.sum(resize(g, N) * np.conj(resize(h, N)), axis=(-3, -2, -1))


def nu_norm_sq(c):
    """|g|_nu^2 = int |grad_v g|^2 + (1+|v|^2)|g|^2 dv, exact in order N+1."""
    N = order_of(c)
    total = norm_sq(c).astype(float).copy()
    for axis in (1, 2, 3):
        total += norm_sq(ddv(c, axis, out_order=N + 1))
        total += norm_sq(mult_v(c, axis, out_order=N + 1))
    return total


# --- fixed basis elements and moment test functions -------------------------

@lru_cache(maxsize=64)
def chi0(order=0):
    c = zeros(order, dtype=float)
    c[0, 0, 0] = 1.0
    return c


@lru_cache(maxsize=64)
def chi(i, order=1):
    c = zeros(order, dtype=float)
    idx = [0, 0, 0]
    idx[i - 1] = 1
    c[tuple(idx)] = 1.0
    return c


@lru_cache(maxsize=64)
def chi4(order=2):
    c = zeros(order, dtype=float)
    c[2, 0, 0] = c[0, 2, 0] = c[0, 0, 2] = 1.0 / SQRT3
    return c


@lru_cache(maxsize=64)
def gamma_test(i, j):
    """Expansion of (v_i v_j - delta_ij) sqrt(M), the stress moment weight.

    Off-diagonal entries use delta_ij rather than the constant 1; the two
    agree on every microscopic argument (zero mass moment), which is the only
    way the functional enters the moment equations.
    """
    t = mult_v(mult_v(chi0(), i), j)
    t = resize(t, 2)
    if i == j:
        t[0, 0, 0] -= 1.0
    return t


@lru_cache(maxsize=64)
def q_test(i):
    """Expansion of v_i (|v|^2 - 3) sqrt(M) / sqrt(6), the heat-flux weight."""
    return mult_v(chi4(), i)


def gamma_moment(i, j, c):
    """Stress moment Gamma_ij(g) = <(v_i v_j - delta_ij) sqrt(M), g> (linear in g)."""
    t = gamma_test(i, j)
    K = order_of(t) + 1
    return np.sum(c[..., :K, :K, :K] * t, axis=(-3, -2, -1))


def q_moment(i, c):
    """Heat-flux moment Q_i(g) = <v_i (|v|^2-3) sqrt(M)/sqrt(6), g> (linear in g)."""
    t = q_test(i)
    K = order_of(t) + 1
    return np.sum(c[..., :K, :K, :K] * t, axis=(-3, -2, -1))


# --- Gauss-Hermite quadrature oracle -----------------------------------------

@lru_cache(maxsize=32)
def gh_nodes(n):
    """Nodes/weights for int exp(-x^2/2) f(x) dx, exact through degree 2n-1."""
    x, w = np.polynomial.hermite_e.hermegauss(n)
    return x, w


@lru_cache(maxsize=32)
def hermite_poly_values(N, n_nodes):
    """Matrix P[k, m] = He_m(x_k)/sqrt(m!) * (2*pi)**(-1/4) at the n_nodes-point rule.

    These are the basis functions with the exp(-x^2/4) factor stripped, so that
    products of two of them pair exactly with the exp(-x^2/2) quadrature weight.
    """
    x, _ = gh_nodes(n_nodes)
    P = np.zeros((n_nodes, N + 1))
    P[:, 0] = (2.0 * np.pi) ** (-0.25)
    if N >= 1:
        P[:, 1] = x * P[:, 0]
    for m in range(1, N):
        P[:, m + 1] = (x * P[:, m] - np.sqrt(m) * P[:, m - 1]) / np.sqrt(m + 1.0)
    return P


def values_at_nodes(c, n_nodes, weighted=False):
    """Evaluate the expansion at the tensor quadrature grid.

    With weighted=False the exp(-|v|^2/4) factor is stripped (for pairing with
    the quadrature weight); with weighted=True true pointwise values of g(v)
    are returned.
    """
    N = order_of(c)
    P = hermite_poly_values(N, n_nodes)
    if weighted:
        x, _ = gh_nodes(n_nodes)
        P = P * np.exp(-x * x / 4.0)[:, None]
    vals = np.einsum("...abc,ia->...ibc", c, P)
    vals = np.einsum("...ibc,jb->...ijc", vals, P)
    return np.einsum("...ijc,kc->...ijk", vals, P)


def quadrature_inner(g, h, n_nodes):
    """Oracle inner product int g conj(h) dv by tensor Gauss-Hermite quadrature.

    Exact for expansions whenever n_nodes >= order + 2 per axis; smaller rules
    are rejected.
    """
    N = max(order_of(g), order_of(h))
    if n_nodes < N + 2:
        raise ValueError(f"need at least {N + 2} nodes per axis for order {N}, got {n_nodes}")
    _, w = gh_nodes(n_nodes)
    vg = values_at_nodes(g, n_nodes)
    vh = values_at_nodes(h, n_nodes)
    prod = vg * np.conj(vh)
    prod = np.einsum("...ijk,i->...jk", prod, w)
    prod = np.einsum("...jk,j->...k", prod, w)
    return np.einsum("...k,k->...", prod, w)


@lru_cache(maxsize=8)
def _tables_validated(n_nodes=8):
    """Oracle check of the basis identities behind the moment reads.

    Runs once per process before the first moment-table consumer relies on
    them: chi_k orthonormality, the chi4 expansion, and the Gamma/Q test
    function expansions against their defining integrands.
    """
    chis = [resize(chi0(), 3), resize(chi(1), 3), resize(chi(2), 3), resize(chi(3), 3), resize(chi4(), 3)]
    for p in range(5):
        for q in range(5):
            val = quadrature_inner(chis[p], chis[q], n_nodes)
            if abs(val - (1.0 if p == q else 0.0)) > TOL_ORACLE:
                raise AssertionError(f"chi basis not orthonormal: <chi_{p}, chi_{q}> = {val}")
    # Gamma/Q tests against (v_i v_j - delta) sqrt(M), v_i(|v|^2-3)sqrt(M)/sqrt(6):
    # checked as inner products with every chi and with psi_(1,1,0)-type elements.
    probe = zeros(3, dtype=float)
    probe[1, 1, 0] = 1.0
    g12 = resize(gamma_test(1, 2), 3)
    if abs(quadrature_inner(g12, probe, n_nodes) - 1.0) > TOL_ORACLE:
        raise AssertionError("Gamma_{12} test function expansion is wrong")
    q1 = resize(q_test(1), 3)
    v1 = resize(mult_v(chi4(), 1), 3)
    if abs(quadrature_inner(q1 - v1, q1 - v1, n_nodes)) > TOL_ORACLE:
        raise AssertionError("Q_1 test function expansion is wrong")
    return True


def validate_tables():
    return _tables_validated()


# --- empirical coercivity of -L ----------------------------------------------

@dataclass
class CoercivityEstimate:
    """Empirical infima of the microscopic dissipation ratios of -L."""
    lambda_hat: float      # inf (<-Lf,f> - |b|^2 - 2|omega|^2) / nu-norm^2 of {I-P}f
    lambda_p0: float       # inf <-Lf,f> / nu-norm^2 of {I-P0}f
    samples: int
    skipped: int
    seed: int


def dissipation_quadratic(c):
    """<-L g, g> = sum_a degree(a) |c_a|^2 (real, >= 0)."""
    return np.sum(_degree_table(order_of(c)) * np.abs(c) ** 2, axis=(-3, -2, -1))


def coercivity_estimate(samples, N, seed=0, chunk=512):
    """Sample random complex coefficient vectors and take the worst dissipation ratio.

    Degenerate draws whose microscopic part is below 1e-14 of the total norm
    are skipped.  Positivity of `lambda_hat` is the computable content of the
    coercivity of the linear operator; the value itself is an estimate.
    """
    _tables_validated()
    rng = np.random.default_rng(seed)
    best1 = np.inf
    best2 = np.inf
    skipped = 0
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        c = rng.standard_normal((m, N + 1, N + 1, N + 1)) + 1j * rng.standard_normal((m, N + 1, N + 1, N + 1))
        diss = dissipation_quadratic(c)
        a, b, omega = moments(c)
        macro, micro = project_P(c)
        tot = norm_sq(c)
        micro_sq = norm_sq(micro)
        ok = micro_sq > 1e-14 * tot
        skipped += int(np.sum(~ok))
        num1 = diss - np.sum(np.abs(b) ** 2, axis=-1) - 2.0 * np.abs(omega) ** 2
        den1 = nu_norm_sq(micro)
        r1 = num1[ok] / den1[ok]
        micro0 = c.copy()
        micro0[..., 0, 0, 0] = 0.0
        den2 = nu_norm_sq(micro0)
        ok2 = norm_sq(micro0) > 1e-14 * tot
        r2 = diss[ok2] / den2[ok2]
        if r1.size:
            best1 = min(best1, float(np.min(r1)))
        if r2.size:
            best2 = min(best2, float(np.min(r2)))
        done += m
    return CoercivityEstimate(lambda_hat=best1, lambda_p0=best2, samples=samples, skipped=skipped, seed=seed)
