"""Per-frequency dynamics of the linearized kinetic-fluid system.

For a spatial frequency xi the unknown is one Fourier mode
(fhat, rho, u, theta) with fhat a Hermite coefficient tensor of order N.
The generator A acts as

    d/dt fhat  = -i (v . xi) fhat + L fhat + u . (v sqrt(M)) + theta (|v|^2 - 3) sqrt(M)
    d/dt rho   = -i xi . u
    d/dt u     = -|xi|^2 u - i xi theta - i xi rho - u + b
    d/dt theta = -|xi|^2 theta - i xi . u - 3 theta + sqrt(6) omega

where b, omega are the momentum/energy moments of fhat.  The transport term
is closed by dropping raising output beyond order N.

Evolution is by dense eigendecomposition (exact up to round-off) with an RK4
fallback; nonhomogeneous sources enter through a Duhamel quadrature.
"""

from dataclasses import dataclass, field

import numpy as np

from . import hermite as hm

SQRT2 = np.sqrt(2.0)
SQRT6 = np.sqrt(6.0)

EIGEN_DIM_LIMIT = 1500  # dense eigendecomposition default below this state size


class SourceError(ValueError):
    """Nonhomogeneous source violates the admissibility constraints."""


class StabilityError(ValueError):
    """Requested RK4 step exceeds the advertised stability bound."""


@dataclass
class ModeState:
    """One Fourier mode: kinetic coefficients plus (rho, u, theta)."""
    xi: np.ndarray
    fhat: np.ndarray
    rho: complex = 0.0
    u: np.ndarray = None
    theta: complex = 0.0

    def __post_init__(self):
        self.xi = np.asarray(self.xi, dtype=float)
        self.fhat = np.asarray(self.fhat, dtype=complex)
        self.u = np.zeros(3, dtype=complex) if self.u is None else np.asarray(self.u, dtype=complex)

    @property
    def order(self):
        return hm.order_of(self.fhat)

    def moments(self):
        return hm.moments(self.fhat)

    def to_vector(self):
        n = self.fhat.size
        v = np.empty(n + 5, dtype=complex)
        v[:n] = self.fhat.ravel()
        v[n] = self.rho
        v[n + 1:n + 4] = self.u
        v[n + 4] = self.theta
        return v

    @classmethod
    def from_vector(cls, xi, N, v):
        n = (N + 1) ** 3
        return cls(xi=xi, fhat=v[:n].reshape((N + 1,) * 3), rho=v[n],
                   u=v[n + 1:n + 4].copy(), theta=v[n + 4])

    def plain_sq(self):
        """||fhat||^2 + |rho|^2 + |u|^2 + |theta|^2."""
        return float(hm.norm_sq(self.fhat) + abs(self.rho) ** 2
                     + np.sum(np.abs(self.u) ** 2) + abs(self.theta) ** 2)

    def scaled(self, s):
        return ModeState(self.xi, s * self.fhat, s * self.rho, s * self.u, s * self.theta)


def _coeff_index(N, alpha):
    return np.ravel_multi_index(alpha, ((N + 1),) * 3)


def assemble_generator(xi, N):
    """Dense generator matrix on the (N+1)^3 + 5 dimensional mode state."""
    if N < 4:
        raise ValueError("need Hermite order N >= 4")
    xi = np.asarray(xi, dtype=float)
    nf = (N + 1) ** 3
    dim = nf + 5
    A = np.zeros((dim, dim), dtype=complex)

    ident = np.eye(nf).reshape(nf, N + 1, N + 1, N + 1)
    kin = hm.apply_L(ident).astype(complex)
    for j in (1, 2, 3):
        if xi[j - 1] != 0.0:
            kin += (-1j * xi[j - 1]) * hm.mult_v(ident, j, out_order=N)
    # row = action on basis column: kin[col, ...] is A applied to basis `col`
    A[:nf, :nf] = kin.reshape(nf, nf).T

    i_rho, i_u, i_th = nf, nf + 1, nf + 4
    e = [_coeff_index(N, (1, 0, 0)), _coeff_index(N, (0, 1, 0)), _coeff_index(N, (0, 0, 1))]
    ee = [_coeff_index(N, (2, 0, 0)), _coeff_index(N, (0, 2, 0)), _coeff_index(N, (0, 0, 2))]

    for j in range(3):
        A[e[j], i_u + j] += 1.0                      # u . v sqrt(M) source
        A[ee[j], i_th] += SQRT2                      # theta (|v|^2-3) sqrt(M) source
        A[i_rho, i_u + j] += -1j * xi[j]
        A[i_u + j, i_rho] += -1j * xi[j]
        A[i_u + j, i_th] += -1j * xi[j]
        A[i_u + j, i_u + j] += -(xi @ xi) - 1.0
        A[i_u + j, e[j]] += 1.0                      # drag reads b
        A[i_th, i_u + j] += -1j * xi[j]
        A[i_th, ee[j]] += SQRT2                      # sqrt(6) omega read
    A[i_th, i_th] += -(xi @ xi) - 3.0
    return A


def generator_norm_bound(A):
    """Cheap upper bound on the spectral radius (max row sum)."""
    return float(np.max(np.sum(np.abs(A), axis=1)))


def rk4_stability_dt(A):
    """Largest step advertised as stable for the classical RK4 scheme."""
    return 2.7 / generator_norm_bound(A)


class ModePropagator:
    """Caches the generator and its eigendecomposition for one frequency."""

    def __init__(self, xi, N):
        self.xi = np.asarray(xi, dtype=float)
        self.N = N
        self.A = assemble_generator(xi, N)
        self._eig = None

    @property
    def dim(self):
        return self.A.shape[0]

    def eig(self):
        if self._eig is None:
            w, V = np.linalg.eig(self.A)
            self._eig = (w, V, np.linalg.inv(V))
        return self._eig

    def evolve_vec(self, v0, t):
        w, V, Vinv = self.eig()
        return V @ (np.exp(w * t) * (Vinv @ v0))

    def evolve_many(self, v0, times):
        """State vectors at several times, shape (len(times), dim)."""
        w, V, Vinv = self.eig()
        y = Vinv @ v0
        return (V @ (np.exp(np.multiply.outer(w, np.asarray(times, float))) * y[:, None])).T

    def evolve_rk4(self, v0, t, dt):
        bound = rk4_stability_dt(self.A)
        if dt > bound:
            raise StabilityError(f"dt = {dt} exceeds RK4 stability bound {bound:.3e}")
        steps = max(1, int(np.ceil(t / dt - 1e-12)))
        h = t / steps
        v = v0.astype(complex).copy()
        A = self.A
        for _ in range(steps):
            k1 = A @ v
            k2 = A @ (v + 0.5 * h * k1)
            k3 = A @ (v + 0.5 * h * k2)
            k4 = A @ (v + h * k3)
            v += (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        return v

    def abscissa(self, exclude_conserved=False, tol=1e-8):
        w = np.linalg.eigvals(self.A)
        if exclude_conserved and np.allclose(self.xi, 0.0):
            near_zero = np.abs(w) <= tol
            if int(np.sum(near_zero)) != 6:
                raise RuntimeError(f"expected 6 conserved directions at xi=0, found {np.sum(near_zero)}")
            w = w[~near_zero]
        return float(np.max(w.real))


_PROPAGATOR_CACHE = {}


def get_propagator(xi, N, cache=True):
    key = (tuple(np.round(np.asarray(xi, float), 14)), N)
    if not cache:
        return ModePropagator(xi, N)
    if key not in _PROPAGATOR_CACHE:
        if len(_PROPAGATOR_CACHE) > 512:
            _PROPAGATOR_CACHE.clear()
        _PROPAGATOR_CACHE[key] = ModePropagator(xi, N)
    return _PROPAGATOR_CACHE[key]


def evolve_mode(state, t, method="auto", dt=None):
    """Evolve one mode under the homogeneous linear dynamics for time t >= 0.

    method "auto" uses the exact eigendecomposition up to EIGEN_DIM_LIMIT
    state dimensions and falls back to RK4 above it."""
    if t < 0:
        raise ValueError("t must be >= 0")
    prop = get_propagator(state.xi, state.order)
    v0 = state.to_vector()
    if method == "auto":
        method = "eigen" if prop.dim <= EIGEN_DIM_LIMIT else "rk4"
    if method == "eigen":
        v = prop.evolve_vec(v0, t)
    elif method == "rk4":
        if dt is None:
            dt = 0.5 * rk4_stability_dt(prop.A)
        v = prop.evolve_rk4(v0, t, dt)
    else:
        raise ValueError(f"unknown method {method!r}")
    return ModeState.from_vector(state.xi, state.order, v)


def spectral_abscissa(xi, N, exclude_conserved=False):
    """Maximum real part of the generator's eigenvalues at this frequency."""
    return get_propagator(xi, N).abscissa(exclude_conserved=exclude_conserved)


# --- admissible nonhomogeneous sources ---------------------------------------

@dataclass
class ModeSource:
    """Kinetic source data (G, phi) with the admissibility constraints:
    zero mass and momentum moments of each G_i, zero macro part of phi."""
    G: tuple  # three Hermite coefficient tensors
    phi: np.ndarray


def make_source(G_raw, phi_raw):
    """Project raw data onto the admissible source class."""
    G = []
    for g in G_raw:
        g = np.asarray(g, dtype=complex)
        a, b, _ = hm.moments(g)
        g = g.copy()
        g[..., 0, 0, 0] -= a
        g[..., 1, 0, 0] -= b[..., 0]
        g[..., 0, 1, 0] -= b[..., 1]
        g[..., 0, 0, 1] -= b[..., 2]
        G.append(g)
    phi = np.asarray(phi_raw, dtype=complex)
    phi = phi - hm.project_macro(phi)
    return ModeSource(G=tuple(G), phi=phi)


def source_violation(src):
    """Largest moment read that the admissibility constraints require to vanish."""
    worst = 0.0
    for g in src.G:
        a, b, _ = hm.moments(g)
        worst = max(worst, abs(a), float(np.max(np.abs(b))))
    a, b, om = hm.moments(src.phi)
    worst = max(worst, abs(a), float(np.max(np.abs(b))), abs(om))
    return worst


def source_kinetic_term(src, N):
    """S_f = div_v G - (1/2) v . G + phi as an order-N coefficient tensor."""
    out = hm.resize(src.phi, N).astype(complex)
    for j in (1, 2, 3):
        out = out + hm.ddv(src.G[j - 1], j, out_order=N)
        out = out - 0.5 * hm.mult_v(src.G[j - 1], j, out_order=N)
    return out


def duhamel_evolve(state, source, t, n_samples=65, tol=1e-10):
    """Variation-of-constants solution with a sampled time-dependent source.

    `source` is a callable tau -> ModeSource (a constant ModeSource is also
    accepted).  The Duhamel integral is a composite Simpson rule over
    n_samples equally spaced sample times (n_samples odd).
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    N = state.order
    prop = get_propagator(state.xi, N)
    v = prop.evolve_vec(state.to_vector(), t)
    if t == 0:
        return ModeState.from_vector(state.xi, N, v)
    if n_samples < 3 or n_samples % 2 == 0:
        raise ValueError("n_samples must be odd and >= 3")
    src_at = source if callable(source) else (lambda tau: source)
    taus = np.linspace(0.0, t, n_samples)
    h = taus[1] - taus[0]
    weights = np.ones(n_samples)
    weights[1:-1:2] = 4.0
    weights[2:-1:2] = 2.0
    weights *= h / 3.0
    nf = (N + 1) ** 3
    w, V, Vinv = prop.eig()
    acc = np.zeros(prop.dim, dtype=complex)
    for tau, wt in zip(taus, weights):
        src = src_at(tau)
        bad = source_violation(src)
        if bad > tol:
            raise SourceError(f"source constraint violation {bad:.3e} exceeds {tol}")
        svec = np.zeros(prop.dim, dtype=complex)
        svec[:nf] = source_kinetic_term(src, N).ravel()
        acc += wt * np.exp(w * (t - tau)) * (Vinv @ svec)
    v = v + V @ acc
    return ModeState.from_vector(state.xi, N, v)


# --- Lyapunov functionals ------------------------------------------------------

@dataclass
class KappaConfig:
    """Weights of the per-mode Lyapunov functional corrections."""
    kappa1: float = 0.5
    kappa2: float = 0.5
    kappa3: float = 0.1

    def validate(self):
        if min(self.kappa1, self.kappa2, self.kappa3) <= 0:
            raise ValueError("kappa weights must be positive")
        return self


@dataclass
class EnergyReport:
    """Values of the per-mode functional and its comparison quantities."""
    ef: float
    plain_sq: float
    micro_nu: float
    drift_terms: dict = field(default_factory=dict)


def energy_cross_term(state, kappa):
    """The interaction functional (complex) before taking the real part."""
    xi = state.xi
    xi2 = float(xi @ xi)
    a, b, omega = state.moments()
    _, micro = hm.project_P(state.fhat)
    gam = np.array([[hm.gamma_moment(i, j, micro) for j in (1, 2, 3)] for i in (1, 2, 3)])
    qm = np.array([hm.q_moment(i, micro) for i in (1, 2, 3)])
    t1 = sum((1j * xi[i] * b[j] + 1j * xi[j] * b[i]) * np.conj(gam[i, j])
             for i in range(3) for j in range(3))
    t2 = sum(1j * xi[i] * omega * np.conj(qm[i]) for i in range(3))
    t3 = kappa.kappa1 * a * np.conj(1j * (SQRT6 / 5.0) * np.dot(xi, qm) - 1j * np.dot(xi, b))
    cross = (t1 + t2 + t3) / (1.0 + xi2)
    cross += kappa.kappa2 * np.dot(state.u, np.conj(1j * xi * state.rho)) / (1.0 + xi2)
    return cross


def energy_EF(state, kappa=None):
    """Per-mode Lyapunov functional and the plain sum of squares it is equivalent to."""
    kappa = KappaConfig() if kappa is None else kappa
    xi2 = float(state.xi @ state.xi)
    plain = state.plain_sq()
    _, micro = hm.project_P(state.fhat)
    _, b, omega = state.moments()
    ef = plain + kappa.kappa3 * float(np.real(energy_cross_term(state, kappa)))
    drift = {
        "u_minus_b": float(np.sum(np.abs(state.u - b) ** 2)),
        "omega_theta": float(abs(SQRT2 * omega - np.sqrt(3.0) * state.theta) ** 2),
        "xi2_u": xi2 * float(np.sum(np.abs(state.u) ** 2)),
        "xi2_theta": xi2 * float(abs(state.theta) ** 2),
    }
    return EnergyReport(ef=ef, plain_sq=plain, micro_nu=float(hm.nu_norm_sq(micro)), drift_terms=drift)


def dissipation_rate(state):
    """The exact decay rate of half the plain sum of squares under the dynamics:

        -(1/2) d/dt plain = <-L micro, micro> + |u-b|^2 + |sqrt2 omega - sqrt3 theta|^2
                          + |xi|^2 (|u|^2 + |theta|^2)
    """
    rep = energy_EF(state)
    _, micro = hm.project_P(state.fhat)
    d = rep.drift_terms
    return float(hm.dissipation_quadratic(micro) + d["u_minus_b"] + d["omega_theta"]
                 + d["xi2_u"] + d["xi2_theta"])


def random_mode_state(xi, N, rng, scale=1.0):
    fh = scale * (rng.standard_normal((N + 1,) * 3) + 1j * rng.standard_normal((N + 1,) * 3))
    u = scale * (rng.standard_normal(3) + 1j * rng.standard_normal(3))
    rho = scale * complex(rng.standard_normal(), rng.standard_normal())
    th = scale * complex(rng.standard_normal(), rng.standard_normal())
    return ModeState(xi=xi, fhat=fh, rho=rho, u=u, theta=th)


def tune_kappa(N=6, seed=7, sweep=1000, lo=0.1, hi=10.0, max_halvings=40):
    """Shrink the functional weights until E_F sits in [1/2, 2] x plain sum.

    The sweep draws random states over log-uniform |xi| in [lo, hi] with
    random directions; kappa3 is halved until the band holds.
    """
    kappa = KappaConfig()
    rng = np.random.default_rng(seed)
    mags = np.exp(rng.uniform(np.log(lo), np.log(hi), sweep))
    dirs = rng.standard_normal((sweep, 3))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    states = [random_mode_state(m * d, N, rng) for m, d in zip(mags, dirs)]
    for _ in range(max_halvings):
        ok = True
        for st in states:
            rep = energy_EF(st, kappa)
            if not (0.5 * rep.plain_sq <= rep.ef <= 2.0 * rep.plain_sq):
                ok = False
                break
        if ok:
            return kappa
        kappa = KappaConfig(kappa.kappa1, kappa.kappa2, kappa.kappa3 / 2.0)
    raise RuntimeError("could not tune kappa weights into the equivalence band")


def conserved_reads(state):
    """The four linearized conserved quantities of the zero mode:
    a, rho, b + u (3-vector), theta + (sqrt6/2) omega."""
    a, b, omega = state.moments()
    return np.concatenate([[a], [state.rho], b + state.u, [state.theta + (SQRT6 / 2.0) * omega]])
