"""Whole-space decay harness.

Physical-space norms of the linearly evolved solution are assembled by
quadrature over frequency space (Parseval with the convention
ghat(xi) = int exp(-i x.xi) g dx, so ||g||^2 = (2*pi)^-3 int |ghat|^2 dxi).

Initial data is a separable family: every field carries the same Gaussian
spatial profile amp * exp(-|x|^2 / (2 sigma^2)), whose transform is
amp (2 pi sigma^2)^{3/2} exp(-sigma^2 |xi|^2 / 2), so the per-mode data is
closed form and the Z_q / L^2 norms of the data are closed form as well.

The default xi-grid is radial Gauss-Legendre in log|xi| tensored with a
polar Gauss-Legendre rule (the data family is axisymmetric about the
velocity amplitude direction), with surface factor 2 pi |xi|^2.
"""

from dataclasses import dataclass

import numpy as np

from . import hermite as hm
from . import modes as md


class FitError(ValueError):
    pass


class GridError(ValueError):
    pass


@dataclass
class InitialProfile:
    """Separable Gaussian initial data for the linear whole-space problem."""
    sigma: float = 1.0
    velocity: np.ndarray = None      # Hermite coefficients of the kinetic part
    amp_rho: float = 0.0
    amp_u: np.ndarray = None         # 3-vector amplitude of the velocity field
    amp_theta: float = 0.0

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        self.velocity = hm.zeros(2, dtype=float) if self.velocity is None else np.real(np.asarray(self.velocity))
        self.amp_u = np.zeros(3) if self.amp_u is None else np.asarray(self.amp_u, float)

    def spatial_hat(self, xi_sq):
        """Fourier transform of the shared Gaussian profile at |xi|^2 = xi_sq."""
        s2 = self.sigma ** 2
        return (2.0 * np.pi * s2) ** 1.5 * np.exp(-0.5 * s2 * xi_sq)

    def mode_state(self, xi, N):
        xi = np.asarray(xi, float)
        g = self.spatial_hat(float(xi @ xi))
        return md.ModeState(xi=xi, fhat=g * hm.resize(self.velocity, N),
                            rho=g * self.amp_rho, u=g * self.amp_u, theta=g * self.amp_theta)

    def l2_norm0(self):
        """Closed-form physical-space norm of the initial data."""
        spatial_sq = (np.pi * self.sigma ** 2) ** 1.5
        amp_sq = (float(hm.norm_sq(self.velocity)) + self.amp_rho ** 2
                  + float(self.amp_u @ self.amp_u) + self.amp_theta ** 2)
        return float(np.sqrt(spatial_sq * amp_sq))

    def is_axisymmetric(self, axis=np.array([1.0, 0.0, 0.0])):
        """True when the data is invariant under rotations about `axis`.

        Sufficient check for this family: the kinetic part is isotropic
        (radial in v, i.e. built from chi0/chi4-type even isotropic tensors)
        and amp_u is parallel to the axis.  We only certify the cases used by
        the default profiles: velocity part supported on {psi_000, chi4}.
        """
        supp = np.array(np.nonzero(self.velocity)).T
        iso = all(tuple(sorted(s)) in [(0, 0, 0), (0, 0, 2)] for s in supp)
        if not iso:
            return False
        if tuple(sorted((0, 0, 2))) in [tuple(sorted(s)) for s in supp]:
            c = self.velocity
            if not (abs(c[2, 0, 0] - c[0, 2, 0]) < 1e-14 and abs(c[2, 0, 0] - c[0, 0, 2]) < 1e-14):
                return False
        u_perp = self.amp_u - (self.amp_u @ axis) * axis
        return bool(np.linalg.norm(u_perp) < 1e-14)


def default_profile(scale=1e-2):
    """Gaussian data exciting every coupled channel, including the slow fluid branch."""
    vel = hm.zeros(2, dtype=float)
    vel += hm.resize(hm.chi0(), 2)
    vel += hm.resize(hm.chi4(), 2)
    return InitialProfile(sigma=1.0, velocity=scale * vel, amp_rho=scale,
                          amp_u=scale * np.array([1.0, 0.0, 0.0]), amp_theta=scale)


@dataclass
class XiGrid:
    """Quadrature nodes/weights for int_{R^3} F(xi) d xi."""
    nodes: np.ndarray    # (M, 3)
    weights: np.ndarray  # (M,)
    kind: str
    cutoff: float

    def __len__(self):
        return len(self.weights)

    def integrate(self, values):
        return float(np.real(np.dot(self.weights, values)))

    def validate(self, sigma=1.0, tol=1e-6):
        """Quadrature of exp(-sigma^2 |xi|^2) must match the closed form."""
        r2 = np.sum(self.nodes ** 2, axis=1)
        got = self.integrate(np.exp(-sigma ** 2 * r2))
        want = (np.pi / sigma ** 2) ** 1.5
        if abs(got - want) > tol * want:
            raise GridError(f"grid fails Gaussian validation: {got} vs {want}")
        return self


def radial_grid(n_radial=120, lo=1e-3, hi=20.0, n_polar=8, axis=np.array([1.0, 0.0, 0.0])):
    """Gauss-Legendre in log|xi| tensored with polar Gauss-Legendre about `axis`.

    Valid for integrands axisymmetric about `axis`; isotropic integrands are a
    special case.  int F d3xi = int r^2 dr . 2 pi int_{-1}^{1} F d(cos phi).
    """
    sg, wg = np.polynomial.legendre.leggauss(n_radial)
    s_lo, s_hi = np.log(lo), np.log(hi)
    s = 0.5 * (s_hi - s_lo) * sg + 0.5 * (s_hi + s_lo)
    ws = 0.5 * (s_hi - s_lo) * wg
    r = np.exp(s)
    mu, wmu = np.polynomial.legendre.leggauss(n_polar)
    axis = np.asarray(axis, float)
    axis = axis / np.linalg.norm(axis)
    perp = np.array([0.0, 1.0, 0.0]) if abs(axis[0]) > 0.5 else np.array([1.0, 0.0, 0.0])
    perp = perp - (perp @ axis) * axis
    perp /= np.linalg.norm(perp)
    nodes = []
    weights = []
    for ri, wi in zip(r, ws):
        for m, wm in zip(mu, wmu):
            nodes.append(ri * (m * axis + np.sqrt(1.0 - m * m) * perp))
            weights.append(2.0 * np.pi * ri ** 3 * wi * wm)  # r^3: dr = r d(log r)
    return XiGrid(nodes=np.array(nodes), weights=np.array(weights), kind="radial", cutoff=hi)


def tensor_grid(n_per_axis=48, K=12.0):
    """Uniform tensor-product grid on [-K, K]^3 (midpoint rule)."""
    h = 2.0 * K / n_per_axis
    x = -K + h * (np.arange(n_per_axis) + 0.5)
    X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
    nodes = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    weights = np.full(len(nodes), h ** 3)
    return XiGrid(nodes=nodes, weights=weights, kind="tensor", cutoff=K)


def norm_series(profile, grid, times, N=4, m_orders=(0,), threads=1):
    """Physical-space norms sqrt((2 pi)^-3 int |xi|^{2m} E_mode(xi, t) d xi).

    E_mode is the plain per-mode sum of squares; the per-node linear evolution
    reuses one eigendecomposition across all sample times.  Returns a dict
    m -> array over times.
    """
    times = np.asarray(times, float)
    acc = {m: np.zeros(len(times)) for m in m_orders}

    def node_energy(idx):
        xi = grid.nodes[idx]
        prop = md.ModePropagator(xi, N)
        v0 = profile.mode_state(xi, N).to_vector()
        vecs = prop.evolve_many(v0, times)
        return np.sum(np.abs(vecs) ** 2, axis=1)

    energies = _parallel_map(node_energy, range(len(grid)), threads)
    r2 = np.sum(grid.nodes ** 2, axis=1)
    for idx, e_t in enumerate(energies):
        for m in m_orders:
            acc[m] += grid.weights[idx] * r2[idx] ** m * e_t
    return {m: np.sqrt(acc[m] / (2.0 * np.pi) ** 3) for m in m_orders}


def _parallel_map(fn, items, threads):
    items = list(items)
    if threads <= 1:
        return [fn(i) for i in items]
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def l2_norm_at(t, profile, grid, N=4, m=0):
    return float(norm_series(profile, grid, [t], N=N, m_orders=(m,))[m][0])


def zq_norm(profile, q):
    """Combined Z_q norm of the data: L^2_v(L^q_x) for the kinetic part plus
    L^1 of the fluid fields, for the separable Gaussian family (closed form)."""
    if q not in (1, 2):
        raise ValueError("q must be 1 or 2")
    sig = profile.sigma
    lq_spatial = (2.0 * np.pi * sig ** 2 / q) ** (1.5 / q)  # ||exp(-|x|^2/2s^2)||_{L^q}
    l1_spatial = (2.0 * np.pi * sig ** 2) ** 1.5
    kinetic = float(np.sqrt(hm.norm_sq(profile.velocity))) * lq_spatial
    fluid_amp = abs(profile.amp_rho) + float(np.sum(np.abs(profile.amp_u))) + abs(profile.amp_theta)
    return kinetic + fluid_amp * l1_spatial


@dataclass
class DecayFit:
    """Fitted decay against (1+t)^-exponent or exp(-rate t)."""
    model: str
    exponent: float
    rate: float
    window: tuple
    residual: float
    n_points: int


def fit_decay(times, norms, model="algebraic", window=None):
    """Least squares of log(norm) against log(1+t) or t inside the window."""
    times = np.asarray(times, float)
    norms = np.asarray(norms, float)
    if window is None:
        window = (float(times.min()), float(times.max()))
    mask = (times >= window[0]) & (times <= window[1])
    if int(mask.sum()) < 8:
        raise FitError(f"need at least 8 samples in window, have {int(mask.sum())}")
    if np.any(norms[mask] <= 0):
        raise FitError("nonpositive norm inside fit window")
    y = np.log(norms[mask])
    if model == "algebraic":
        x = np.log1p(times[mask])
    elif model == "exponential":
        x = times[mask]
    else:
        raise ValueError(f"unknown model {model!r}")
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    slope = float(coef[0])
    if model == "algebraic":
        return DecayFit(model=model, exponent=slope, rate=np.nan,
                        window=window, residual=resid, n_points=int(mask.sum()))
    return DecayFit(model=model, exponent=np.nan, rate=-slope,
                    window=window, residual=resid, n_points=int(mask.sum()))


def sigma_target(q, m):
    """Predicted algebraic decay exponent for Z_q data and m derivatives."""
    return 1.5 * (1.0 / q - 0.5) + 0.5 * m


@dataclass
class SigmaVerdict:
    q: int
    m: int
    target: float
    measured: float
    margin: float
    residual: float
    passed: bool


def verify_sigma(q, m, fit, tol=0.1, residual_tol=0.05):
    """Check a fitted algebraic exponent against the predicted -sigma_{q,m}."""
    if fit.model != "algebraic":
        raise ValueError("verify_sigma requires an algebraic-model fit")
    target = sigma_target(q, m)
    margin = abs(fit.exponent + target)
    ok = margin <= tol and fit.residual <= residual_tol
    return SigmaVerdict(q=q, m=m, target=target, measured=-fit.exponent,
                        margin=margin, residual=fit.residual, passed=bool(ok))


def _time_convolution(t, beta1, beta2, n=400):
    """int_0^t (1+t-s)^-beta1 (1+s)^-beta2 ds, split at t/2 with log-spaced
    Gauss-Legendre on each half (integrand peaks at both endpoints)."""
    if t == 0.0:
        return 0.0
    total = 0.0
    xg, wg = np.polynomial.legendre.leggauss(n)
    for flip in (False, True):
        # substitute s = e^u - 1 on [0, t/2] (flip swaps the roles of the factors)
        lo, hi = 0.0, np.log1p(0.5 * t)
        u = 0.5 * (hi - lo) * xg + 0.5 * (hi + lo)
        w = 0.5 * (hi - lo) * wg
        s = np.expm1(u)
        b_near, b_far = (beta2, beta1) if not flip else (beta1, beta2)
        vals = (1.0 + s) ** (-b_near) * (1.0 + t - s) ** (-b_far) * (1.0 + s)
        total += float(np.dot(w, vals))
    return total


def convolution_bound_check(beta1, beta2, T, n_t=60):
    """Sup over t <= T of the convolution integral scaled by (1+t)^min(beta1,beta2).

    Finite and stable in T; this is the numeric content of the standard
    weighted-convolution inequality the decay bootstrap relies on.
    """
    if beta1 <= 0 or beta1 == 1.0:
        raise ValueError("beta1 must be positive and != 1")
    if beta2 <= 1.0:
        raise ValueError("beta2 must be > 1")
    ts = np.concatenate([[0.0], np.exp(np.linspace(np.log(1e-2), np.log(T), n_t))])
    mn = min(beta1, beta2)
    vals = [(1.0 + t) ** mn * _time_convolution(t, beta1, beta2) for t in ts]
    return float(np.max(vals))


@dataclass
class GaussianMicroSource:
    """Admissible kinetic source with Gaussian x-profile and algebraic time decay.

    G_i(t, x, v) = amp (1+t)^{-decay} g_sigma(x) Gv_i(v),   similarly phi,
    with Gv_i, phi satisfying the admissibility constraints.
    """
    sigma: float = 1.0
    decay: float = 2.0
    Gv: tuple = None
    phiv: np.ndarray = None

    def __post_init__(self):
        if self.Gv is None:
            g = hm.zeros(3, dtype=float)
            g[1, 1, 0] = 1.0
            self.Gv = (g, 0.5 * g, np.zeros_like(g))
        if self.phiv is None:
            p = hm.zeros(3, dtype=float)
            p[2, 1, 0] = 1.0
            self.phiv = p
        src = md.make_source(self.Gv, self.phiv)
        self.Gv, self.phiv = src.G, src.phi

    def spatial_hat(self, xi_sq):
        s2 = self.sigma ** 2
        return (2.0 * np.pi * s2) ** 1.5 * np.exp(-0.5 * s2 * xi_sq)

    def mode_source(self, xi, tau, N):
        amp = self.spatial_hat(float(np.dot(xi, xi))) * (1.0 + tau) ** (-self.decay)
        return md.ModeSource(G=tuple(amp * hm.resize(g, N) for g in self.Gv),
                             phi=amp * hm.resize(self.phiv, N))

    def data_norm_sq(self, tau, q, n_nodes=12):
        """||(G, nu^-1/2 phi)(tau)||_{Z_q}^2 + ||.||_{L^2}^2 (closed spatial factors)."""
        sig = self.sigma
        lq = (2.0 * np.pi * sig ** 2 / q) ** (1.5 / q)
        l2 = (np.pi * sig ** 2) ** 0.75
        g_sq = float(sum(hm.norm_sq(g) for g in self.Gv))
        phi_nu = _nu_weighted_norm_sq(self.phiv, n_nodes)
        timefac = (1.0 + tau) ** (-2.0 * self.decay)
        return timefac * (g_sq + phi_nu) * (lq ** 2 + l2 ** 2)


def _nu_weighted_norm_sq(c, n_nodes):
    """int |g|^2 / (1 + |v|^2) dv by Gauss-Hermite quadrature (diagnostic accuracy)."""
    x, w = hm.gh_nodes(n_nodes)
    vals = hm.values_at_nodes(c, n_nodes)
    X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
    weight = 1.0 / (1.0 + X ** 2 + Y ** 2 + Z ** 2)
    W = w[:, None, None] * w[None, :, None] * w[None, None, :]
    return float(np.real(np.sum(W * weight * vals * np.conj(vals))))


def duhamel_decay_check(profile, source, grid, T, N=4, q=1, n_t=8, n_tau=33):
    """Numeric check of the inhomogeneous decay bound.

    Evaluates, at sampled times t <= T,
      LHS(t) = || int_0^t E_{t-tau}(S_f, 0,0,0) d tau ||_{L^2}^2
      RHS(t) = int_0^t (1+t-tau)^{-2 sigma_{q,0}} (data norms)^2 d tau
    and reports the largest ratio LHS/RHS (finite, stable in T).
    """
    ts = np.exp(np.linspace(np.log(max(1.0, T / 64.0)), np.log(T), n_t))
    ratios = []
    for t in ts:
        lhs = 0.0
        for idx in range(len(grid)):
            xi = grid.nodes[idx]
            st0 = md.ModeState(xi=xi, fhat=hm.zeros(N))
            out = md.duhamel_evolve(st0, lambda tau: source.mode_source(xi, tau, N), t,
                                    n_samples=n_tau)
            lhs += grid.weights[idx] * out.plain_sq()
        lhs /= (2.0 * np.pi) ** 3
        taus = np.linspace(0.0, t, 201)
        sig = sigma_target(q, 0)
        integrand = [(1.0 + t - tau) ** (-2.0 * sig) * source.data_norm_sq(tau, q) for tau in taus]
        rhs = float(np.trapezoid(integrand, taus))
        ratios.append(lhs / rhs)
    return {"times": ts, "ratios": np.array(ratios), "max_ratio": float(np.max(ratios))}
