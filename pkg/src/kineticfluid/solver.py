"""Nonlinear pseudo-spectral solver for the perturbation system on the torus.

Unknowns on [0, 2 pi)^3: kinetic coefficients f(x) (Hermite order N per axis),
fluid perturbations rho, u, theta.  The evolved equations, written with the
time derivative isolated:

  f_t     = -v . grad_x f - u . grad_v f + (1/2)(u . v) f + u . v sqrt(M)
            + theta (|v|^2 - 3) sqrt(M) + L f + theta M^(-1/2) Lap_v(sqrt(M) f)
  rho_t   = -u . grad rho - (1 + rho) div u
  u_t     = -u . grad u - ((1+theta)/(1+rho)) grad rho - grad theta
            + (1/(1+rho)) (Lap u - u (1 + a) + b)
  theta_t = -u . grad theta - theta div u - div u + sqrt(6) omega - 3 theta
            + (1/(1+rho)) (Lap theta + |u|^2 - 2 u.b + a |u|^2 - 3 a theta)
            - (rho/(1+rho)) (sqrt(6) omega - 3 theta)

x-derivatives are spectral; velocity operators are the exact ladder actions of
`hermite` closed at order N.  Every right-hand side is projected onto the 2/3
dealiasing band (state fields stay band-limited, so products of two state
fields are alias-free on the grid and the quadratic conservation laws hold to
round-off in the semi-discrete system).  Time stepping is classical RK4.

Run artifacts: a manifest of all configuration values plus a CSV time series
of the diagnostics record; checkpoints are a flat binary dump with a JSON
header (see `save_checkpoint`).
"""

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from . import hermite as hm
from . import modes as md

SQRT2 = np.sqrt(2.0)
SQRT3 = np.sqrt(3.0)
SQRT6 = np.sqrt(6.0)
VOLUME = (2.0 * np.pi) ** 3


class SimulationError(RuntimeError):
    pass


@dataclass
class FieldState:
    """Solver state: per-point Hermite coefficients plus fluid fields."""
    f: np.ndarray        # (n, n, n, N+1, N+1, N+1) real
    rho: np.ndarray      # (n, n, n)
    u: np.ndarray        # (n, n, n, 3)
    theta: np.ndarray    # (n, n, n)
    time: float = 0.0

    @property
    def n(self):
        return self.f.shape[0]

    @property
    def order(self):
        return self.f.shape[-1] - 1

    def copy(self):
        return FieldState(self.f.copy(), self.rho.copy(), self.u.copy(), self.theta.copy(), self.time)

    def moments(self):
        return hm.moments(self.f)

    def l2_norm(self):
        """Total L^2 norm of (f, rho, u, theta) over the torus."""
        mean_sq = (np.mean(np.sum(self.f ** 2, axis=(-3, -2, -1)))
                   + np.mean(self.rho ** 2) + np.mean(np.sum(self.u ** 2, axis=-1))
                   + np.mean(self.theta ** 2))
        return float(np.sqrt(VOLUME * mean_sq))


# --- spectral helpers ----------------------------------------------------------

def wavenumbers(n):
    return np.fft.fftfreq(n, d=1.0 / n)


def band_cut(n):
    """2/3-rule cutoff: modes with any |k| above this are zeroed."""
    return n // 3


def _band_mask(n):
    k = np.abs(wavenumbers(n))
    kc = band_cut(n)
    m1 = k <= kc
    return m1[:, None, None] & m1[None, :, None] & m1[None, None, :]


def dealias(field_):
    """Project a grid field (last axes arbitrary) onto the dealiasing band."""
    n = field_.shape[0]
    mask = _band_mask(n)
    fh = np.fft.fftn(field_, axes=(0, 1, 2))
    fh *= mask.reshape(mask.shape + (1,) * (field_.ndim - 3))
    return np.fft.ifftn(fh, axes=(0, 1, 2)).real


def dx(field_, axis):
    """Spectral x-derivative along axis 0..2 (Nyquist mode zeroed)."""
    n = field_.shape[0]
    k = wavenumbers(n)
    if n % 2 == 0:
        k = k.copy()
        k[n // 2] = 0.0
    shape = [1] * field_.ndim
    shape[axis] = n
    fh = np.fft.fftn(field_, axes=(axis,))
    fh *= (1j * k).reshape(shape)
    return np.fft.ifftn(fh, axes=(axis,)).real


def grad(field_):
    return [dx(field_, a) for a in range(3)]


def laplacian(field_):
    return sum(dx(dx(field_, a), a) for a in range(3))


def reality_defect(state):
    """Largest imaginary residue when the fields are treated spectrally."""
    worst = 0.0
    for f_ in (state.f, state.rho, state.u, state.theta):
        fh = np.fft.fftn(f_, axes=(0, 1, 2))
        worst = max(worst, float(np.max(np.abs(np.fft.ifftn(fh, axes=(0, 1, 2)).imag))))
    return worst


# --- right-hand side -----------------------------------------------------------

DENSITY_FLOOR = 0.05


def rhs(state, density_floor=DENSITY_FLOOR):
    """Time derivative of every field; raises on density-floor or NaN violation."""
    f, rho, u, theta = state.f, state.rho, state.u, state.theta
    N = state.order
    dens = 1.0 + rho
    if float(np.min(dens)) <= density_floor:
        raise SimulationError(f"density floor violated: min(1+rho) = {np.min(dens):.4g}")

    a, b, omega = hm.moments(f)
    uc = [u[..., 0, None, None, None], u[..., 1, None, None, None], u[..., 2, None, None, None]]

    df = hm.apply_L(f).copy()
    for j in (1, 2, 3):
        df -= hm.mult_v(dx(f, j - 1), j, out_order=N)          # -v . grad_x f
        df -= uc[j - 1] * hm.ddv(f, j, out_order=N)            # -u . grad_v f
        df += 0.5 * uc[j - 1] * hm.mult_v(f, j, out_order=N)   # +(1/2) u.v f
    df += theta[..., None, None, None] * hm.theta_op(f, out_order=N)
    df[..., 1, 0, 0] += u[..., 0]                              # u . v sqrt(M)
    df[..., 0, 1, 0] += u[..., 1]
    df[..., 0, 0, 1] += u[..., 2]
    df[..., 2, 0, 0] += SQRT2 * theta                          # theta (|v|^2-3) sqrt(M)
    df[..., 0, 2, 0] += SQRT2 * theta
    df[..., 0, 0, 2] += SQRT2 * theta

    # fluid derivatives in one stacked spectral pass: (rho, u1, u2, u3, theta)
    n = state.n
    stacked = np.stack([rho, u[..., 0], u[..., 1], u[..., 2], theta], axis=-1)
    sh = np.fft.fftn(stacked, axes=(0, 1, 2))
    kv = wavenumbers(n)
    if n % 2 == 0:
        kv = kv.copy()
        kv[n // 2] = 0.0
    kshape = [(n, 1, 1, 1), (1, n, 1, 1), (1, 1, n, 1)]
    g_all = [np.fft.ifftn(sh * (1j * kv).reshape(kshape[ax]), axes=(0, 1, 2)).real
             for ax in range(3)]
    k2 = (kv[:, None, None] ** 2 + kv[None, :, None] ** 2 + kv[None, None, :] ** 2)
    lap_all = np.fft.ifftn(sh * (-k2)[..., None], axes=(0, 1, 2)).real
    gr = [g_all[ax][..., 0] for ax in range(3)]
    gu = [[g_all[ax][..., 1 + i] for i in range(3)] for ax in range(3)]  # gu[ax][i] = d_ax u_i
    gt = [g_all[ax][..., 4] for ax in range(3)]
    lap_u = [lap_all[..., 1 + i] for i in range(3)]
    lap_t = lap_all[..., 4]
    divu = gu[0][0] + gu[1][1] + gu[2][2]

    drho = -(sum(u[..., i] * gr[i] for i in range(3)) + dens * divu)

    inv = 1.0 / dens
    du = np.empty_like(u)
    for i in range(3):
        adv = sum(u[..., j] * gu[j][i] for j in range(3))
        du[..., i] = (-adv - (1.0 + theta) * inv * gr[i] - gt[i]
                      + inv * (lap_u[i] - u[..., i] * (1.0 + a) + b[..., i]))

    u_adv_t = sum(u[..., i] * gt[i] for i in range(3))
    u_sq = np.sum(u ** 2, axis=-1)
    u_dot_b = np.sum(u * b, axis=-1)
    u_lap_u = sum(u[..., i] * lap_u[i] for i in range(3))
    relax = SQRT6 * omega - 3.0 * theta
    # the -u.Lap(u) viscous-work source balances the kinetic-energy drain of the
    # momentum diffusion; without it the total-energy integral leaks at the
    # viscous dissipation rate
    dtheta = (-u_adv_t - theta * divu - divu + relax
              + inv * (lap_t - u_lap_u + u_sq - 2.0 * u_dot_b + a * u_sq - 3.0 * a * theta)
              - rho * inv * relax)

    dfluid = dealias(np.stack([drho, du[..., 0], du[..., 1], du[..., 2], dtheta], axis=-1))
    out = FieldState(dealias(df), dfluid[..., 0], dfluid[..., 1:4], dfluid[..., 4], 1.0)
    if not np.isfinite(out.f).all() or not np.isfinite(out.rho).all():
        raise SimulationError("non-finite right-hand side")
    return out


def stability_dt(state):
    """Advertised RK4 step bound from transport, collision and diffusion rates."""
    n, N = state.n, state.order
    kc = band_cut(n)
    kmax_sq = 3.0 * kc ** 2
    transport = 2.0 * np.sqrt(3.0 * kc ** 2) * np.sqrt(N + 1.0)
    stiff = 3.0 * N + 3.0 + kmax_sq
    umax = float(np.max(np.abs(state.u))) + float(np.max(np.abs(state.theta)))
    rate = transport + stiff + 10.0 * umax * np.sqrt(N + 1.0)
    return 2.7 / rate


def _axpy(state, scale, delta):
    return FieldState(state.f + scale * delta.f, state.rho + scale * delta.rho,
                      state.u + scale * delta.u, state.theta + scale * delta.theta,
                      state.time)


def step_rk4(state, dt, density_floor=DENSITY_FLOOR, check_dt=True):
    """One classical RK4 step; invariant checks run via rhs on every stage."""
    if check_dt:
        bound = stability_dt(state)
        if dt > bound:
            raise SimulationError(f"dt = {dt} exceeds stability bound {bound:.3e}")
    k1 = rhs(state, density_floor)
    k2 = rhs(_axpy(state, 0.5 * dt, k1), density_floor)
    k3 = rhs(_axpy(state, 0.5 * dt, k2), density_floor)
    k4 = rhs(_axpy(state, dt, k3), density_floor)
    new = FieldState(
        state.f + (dt / 6.0) * (k1.f + 2 * k2.f + 2 * k3.f + k4.f),
        state.rho + (dt / 6.0) * (k1.rho + 2 * k2.rho + 2 * k3.rho + k4.rho),
        state.u + (dt / 6.0) * (k1.u + 2 * k2.u + 2 * k3.u + k4.u),
        state.theta + (dt / 6.0) * (k1.theta + 2 * k2.theta + 2 * k3.theta + k4.theta),
        state.time + dt,
    )
    if float(np.min(1.0 + new.rho)) <= density_floor:
        raise SimulationError("density floor violated after step")
    return new


# --- conserved integrals and exchange terms -------------------------------------

def conservation_integrals(state):
    """The four invariant integrals: mass of the particles and the fluid,
    total momentum, total energy (perturbation form)."""
    a, b, omega = state.moments()
    dens = 1.0 + state.rho
    i_a = np.mean(a) * VOLUME
    i_rho = np.mean(state.rho) * VOLUME
    i_mom = np.array([np.mean(b[..., i] + dens * state.u[..., i]) for i in range(3)]) * VOLUME
    kin = state.theta + 0.5 * np.sum(state.u ** 2, axis=-1)
    i_en = np.mean(dens * kin + (SQRT6 / 2.0) * omega) * VOLUME
    return np.array([i_a, i_rho, float(np.max(np.abs(i_mom))) if False else np.linalg.norm(i_mom), i_en])


def exchange_terms(state, n_nodes=None):
    """Momentum/energy exchange fields from the reconstructed distribution,
    with residuals against their moment closed forms.

    Closed forms (oracle-verified): M_ex = b - u (1 + a),
    F_ex = sqrt(6) omega - 3 theta - 3 a theta - u . b.
    """
    N = state.order
    n_nodes = N + 3 if n_nodes is None else n_nodes
    x, w = hm.gh_nodes(n_nodes)
    P = hm.hermite_poly_values(N, n_nodes)
    # int psi_a * v-monomial * sqrtM dv per axis: quadrature of P * poly with weight w
    m0 = np.einsum("i,ia->a", w, P) * (2 * np.pi) ** (-0.25)  # int psi_a(x) e^{-x^2/4} ... see below
    # For moments of F = M + sqrtM f we need S_p[a] = int x^p psi_a(x) m(x)^{1/2} dx
    # where m is the 1d Maxwellian: psi_a m^{1/2} = P_a(x) (2pi)^{-1/4} e^{-x^2/2}.
    g0 = (2.0 * np.pi) ** (-0.25)
    S0 = np.einsum("i,ia->a", w, P) * g0
    S1 = np.einsum("i,i,ia->a", w, x, P) * g0
    S2 = np.einsum("i,i,ia->a", w, x * x, P) * g0

    def contract(c, t1, t2, t3):
        out = np.einsum("...abc,a->...bc", c, t1)
        out = np.einsum("...bc,b->...c", out, t2)
        return np.einsum("...c,c->...", out, t3)

    f = state.f
    int_f = contract(f, S0, S0, S0)                       # int sqrtM f dv
    int_vf = np.stack([contract(f, S1, S0, S0),
                       contract(f, S0, S1, S0),
                       contract(f, S0, S0, S1)], axis=-1)
    int_v2f = (contract(f, S2, S0, S0) + contract(f, S0, S2, S0) + contract(f, S0, S0, S2))
    # Maxwellian contributions: int M = 1, int v M = 0, int |v|^2 M = 3
    tot = 1.0 + int_f
    mom = int_vf
    en = 3.0 + int_v2f
    momentum_exchange = mom - state.u * tot[..., None]
    energy_exchange = en - np.sum(state.u * mom, axis=-1) - 3.0 * (1.0 + state.theta) * tot

    a, b, omega = state.moments()
    m_closed = b - state.u * (1.0 + a)[..., None]
    f_closed = SQRT6 * omega - 3.0 * state.theta - 3.0 * a * state.theta - np.sum(state.u * b, axis=-1)
    res_m = float(np.max(np.abs(momentum_exchange - m_closed)))
    res_f = float(np.max(np.abs(energy_exchange - f_closed)))
    return momentum_exchange, energy_exchange, (res_m, res_f)


def positivity_probe(state, n_nodes=None):
    """Minimum of the reconstructed distribution M + sqrt(M) f over the grid
    and a tensor quadrature node set, plus the fluid density minimum."""
    N = state.order
    n_nodes = N + 4 if n_nodes is None else n_nodes
    x, _ = hm.gh_nodes(n_nodes)
    vals = hm.values_at_nodes(state.f, n_nodes, weighted=True)   # sqrt(M)-weighted basis
    X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
    sqrtM = (2.0 * np.pi) ** (-0.75) * np.exp(-(X ** 2 + Y ** 2 + Z ** 2) / 4.0)
    F = sqrtM ** 2 + sqrtM * vals
    return float(np.min(F)), float(np.min(1.0 + state.rho))


# --- energy / dissipation functionals -------------------------------------------

@dataclass
class FunctionalConfig:
    """Weights of the composite energy/dissipation functionals."""
    tau1: float = 0.05
    tau2: float = 0.05
    tau3: float = 0.1
    tau4: float = 0.05
    tau5: float = 0.05
    tau6: float = 0.05
    sobolev_order: int = 4

    def halved(self):
        return FunctionalConfig(self.tau1 / 2, self.tau2 / 2, self.tau3 / 2,
                                self.tau4 / 2, self.tau5 / 2, self.tau6 / 2, self.sobolev_order)


@dataclass
class DiagnosticsRecord:
    time: float
    E: float
    D: float
    E0: float
    E1: float
    D1: float
    E2: float
    D2: float
    conservation: np.ndarray      # the four integrals
    min_F: float
    min_density: float
    moment_residuals: np.ndarray  # L2 norms of the three moment-equation residuals
    max_imag: float

    def as_row(self):
        return ([self.time, self.E, self.D, self.E0, self.E1, self.D1, self.E2, self.D2]
                + list(self.conservation) + [self.min_F, self.min_density]
                + list(self.moment_residuals) + [self.max_imag])

    @staticmethod
    def header():
        return (["t", "E", "D", "E0", "E1", "D1", "E2", "D2",
                 "cons_a", "cons_rho", "cons_momentum", "cons_energy",
                 "min_F", "min_density", "res_mass", "res_momentum", "res_energy", "max_imag"])


def _multi_indices(max_order):
    out = []
    for total in range(max_order + 1):
        for a1 in range(total + 1):
            for a2 in range(total - a1 + 1):
                out.append((a1, a2, total - a1 - a2))
    return out


class SpectralView:
    """Band-restricted Fourier representation of a FieldState, with the
    derivative bookkeeping the functionals need."""

    def __init__(self, state):
        n = state.n
        kc = band_cut(n)
        k = wavenumbers(n)
        sel = np.where(np.abs(k) <= kc)[0]
        self.kvals = k[sel]
        idx = np.ix_(sel, sel, sel)
        self.fh = np.fft.fftn(state.f, axes=(0, 1, 2))[idx] / n ** 3
        self.rh = np.fft.fftn(state.rho)[idx] / n ** 3
        self.uh = np.fft.fftn(state.u, axes=(0, 1, 2))[idx] / n ** 3
        self.th = np.fft.fftn(state.theta)[idx] / n ** 3
        self.ah, self.bh, self.oh = hm.moments(self.fh)
        self.micro = self.fh - hm.project_macro(self.fh)
        kx = self.kvals
        self.K = [kx[:, None, None] * np.ones_like(self.rh).real,
                  kx[None, :, None] * np.ones_like(self.rh).real,
                  kx[None, None, :] * np.ones_like(self.rh).real]

    def kpow(self, alpha):
        return (self.K[0] ** alpha[0]) * (self.K[1] ** alpha[1]) * (self.K[2] ** alpha[2])

    def norm_sq(self, ghat, alpha=(0, 0, 0)):
        """VOLUME * sum |k^alpha ghat|^2 (Parseval for d^alpha g)."""
        w = self.kpow(alpha)
        if ghat.ndim > 3:
            w = w.reshape(w.shape + (1,) * (ghat.ndim - 3))
        return float(VOLUME * np.sum(np.abs(w * ghat) ** 2))

    def ip(self, ghat, hhat, alpha=(0, 0, 0)):
        """int (d^alpha g)(d^alpha h) dx for real fields g, h."""
        w = self.kpow(alpha) ** 2
        if ghat.ndim > 3:
            w = w.reshape(w.shape + (1,) * (ghat.ndim - 3))
        return float(VOLUME * np.real(np.sum(w * ghat * np.conj(hhat))))

    def deriv(self, ghat, axis):
        w = 1j * self.K[axis]
        if ghat.ndim > 3:
            w = w.reshape(w.shape + (1,) * (ghat.ndim - 3))
        return w * ghat


def _ddv_multi(c, beta):
    out = c
    for axis in (1, 2, 3):
        for _ in range(beta[axis - 1]):
            out = hm.ddv(out, axis)  # grows one order per application: exact
    return out


def energy_functionals(state, cfg=None, prev_next=None):
    """All energy/dissipation functionals of the run diagnostics.

    prev_next: optional (prev_state, next_state, dt) for the moment residuals.
    """
    cfg = FunctionalConfig() if cfg is None else cfg
    sv = SpectralView(state)
    s = cfg.sobolev_order
    alphas = _multi_indices(s)
    alphas3 = _multi_indices(s - 1)

    e1_plain = 0.0
    for al in alphas:
        e1_plain += sv.norm_sq(sv.fh, al) + sv.norm_sq(sv.rh, al) + sv.norm_sq(sv.uh, al) + sv.norm_sq(sv.th, al)

    gam = {(i, j): np.stack([hm.gamma_moment(i + 1, j + 1, sv.micro)], axis=0)[0]
           for i in range(3) for j in range(3)}
    qm = [hm.q_moment(i + 1, sv.micro) for i in range(3)]

    e0 = 0.0
    for al in alphas3:
        for i in range(3):
            for j in range(3):
                sym = sv.deriv(sv.bh[..., i], j) + sv.deriv(sv.bh[..., j], i)
                e0 += sv.ip(sym, gam[(i, j)], al)
            e0 += sv.ip(sv.deriv(sv.oh, i), qm[i], al)
        divq = sum(sv.deriv(qm[i], i) for i in range(3))
        divb = sum(sv.deriv(sv.bh[..., i], i) for i in range(3))
        e0 += (2.0 / 21.0) * sv.ip(sv.ah, (SQRT6 / 5.0) * divq - divb, al)

    cross_ur = 0.0
    for al in alphas3:
        for i in range(3):
            cross_ur += sv.ip(sv.uh[..., i], sv.deriv(sv.rh, i), al)

    e1 = e1_plain + cfg.tau1 * e0 + cfg.tau2 * cross_ur

    d1 = 0.0
    for al in alphas3:  # ||grad(a,b,omega,rho,u,theta)||_{H^{s-1}}^2
        for i in range(3):
            ali = (al[0] + (i == 0), al[1] + (i == 1), al[2] + (i == 2))
            d1 += (sv.norm_sq(sv.ah, ali) + sv.norm_sq(sv.bh, ali) + sv.norm_sq(sv.oh, ali)
                   + sv.norm_sq(sv.rh, ali) + sv.norm_sq(sv.uh, ali) + sv.norm_sq(sv.th, ali))
    drift_b = sv.bh - sv.uh
    drift_o = SQRT2 * sv.oh - SQRT3 * sv.th
    micro_nu_k = hm.nu_norm_sq(sv.micro)  # per-mode nu density
    for al in alphas:
        d1 += sv.norm_sq(drift_b, al) + sv.norm_sq(drift_o, al)
        d1 += float(VOLUME * np.sum(sv.kpow(al) ** 2 * micro_nu_k))
        for i in range(3):
            ali = (al[0] + (i == 0), al[1] + (i == 1), al[2] + (i == 2))
            d1 += sv.norm_sq(sv.uh, ali) + sv.norm_sq(sv.th, ali)

    e2 = 0.0
    d2 = 0.0
    for k in range(1, s + 1):
        for beta in _multi_indices(k):
            if sum(beta) != k:
                continue
            dvf = _ddv_multi(sv.micro, beta)
            nsq_k = hm.norm_sq(dvf)
            nu_k = hm.nu_norm_sq(dvf)
            for al in _multi_indices(s - k):
                w2 = sv.kpow(al) ** 2
                e2 += float(VOLUME * np.sum(w2 * nsq_k))
                d2 += float(VOLUME * np.sum(w2 * nu_k))

    # torus Poincare completion of the dissipation
    d_t1 = (d1 + cfg.tau4 * (sv.norm_sq(sv.ah) + sv.norm_sq(sv.rh))
            + cfg.tau5 * sv.norm_sq(sv.bh + sv.uh)
            + cfg.tau6 * sv.norm_sq((SQRT6 / 2.0) * sv.oh + sv.th))

    E = e1 + cfg.tau3 * e2
    D = d_t1 + cfg.tau3 * d2

    if prev_next is not None:
        res = moment_residuals(*prev_next)
    else:
        res = np.full(3, np.nan)

    min_F, min_dens = positivity_probe(state)
    return DiagnosticsRecord(
        time=state.time, E=E, D=D, E0=e0, E1=e1, D1=d1, E2=e2, D2=d2,
        conservation=conservation_integrals(state),
        min_F=min_F, min_density=min_dens,
        moment_residuals=res, max_imag=reality_defect(state),
    )


def functional_equivalence(state, cfg):
    """(E / plain, D_T1 / plain_D) for the equivalence-band checks."""
    cfg = cfg or FunctionalConfig()
    rec = energy_functionals(state, cfg)
    sv = SpectralView(state)
    s = cfg.sobolev_order
    plain_e = 0.0
    for al in _multi_indices(s):
        plain_e += (sv.norm_sq(sv.fh, al) + sv.norm_sq(sv.rh, al)
                    + sv.norm_sq(sv.uh, al) + sv.norm_sq(sv.th, al))
    for k in range(1, s + 1):
        for beta in _multi_indices(k):
            if sum(beta) != k:
                continue
            nsq_k = hm.norm_sq(_ddv_multi(sv.fh, beta))
            for al in _multi_indices(s - k):
                plain_e += float(VOLUME * np.sum(sv.kpow(al) ** 2 * nsq_k))
    plain_d = 0.0
    micro_nu_k = hm.nu_norm_sq(sv.micro)
    for al in _multi_indices(s):
        plain_d += float(VOLUME * np.sum(sv.kpow(al) ** 2 * micro_nu_k))
        plain_d += (sv.norm_sq(sv.ah, al) + sv.norm_sq(sv.bh, al) + sv.norm_sq(sv.oh, al)
                    + sv.norm_sq(sv.rh, al) + sv.norm_sq(sv.uh, al) + sv.norm_sq(sv.th, al))
    d_t1 = rec.D - cfg.tau3 * rec.D2
    return rec.E / plain_e, d_t1 / plain_d


def tune_tau(n=8, N=4, seed=13, sweep=100, max_halvings=40):
    """Shrink the tau weights until E sits in [1/2, 2] x the plain Sobolev sum
    over a sweep of random conservation-enforced states."""
    cfg = FunctionalConfig()
    states = [enforce_conservation_integrals(random_field_state(n, N, 1e-3, seed + i))
              for i in range(sweep)]
    for _ in range(max_halvings):
        ok = all(0.5 <= functional_equivalence(st, cfg)[0] <= 2.0 for st in states)
        if ok:
            return cfg
        cfg = cfg.halved()
    raise RuntimeError("could not tune tau weights into the equivalence band")


# --- moment-equation residuals ---------------------------------------------------

def _gamma_field(i, j, micro):
    return hm.gamma_moment(i, j, micro)


def moment_residuals(prev, nxt, dt):
    """L^2 norms of the residuals of the mass/momentum/energy moment equations.

    Centered difference between two consecutive accepted steps against the
    right sides assembled from the averaged (midpoint) state; every product is
    dealiased exactly as in the solver."""
    mid = FieldState(0.5 * (prev.f + nxt.f), 0.5 * (prev.rho + nxt.rho),
                     0.5 * (prev.u + nxt.u), 0.5 * (prev.theta + nxt.theta),
                     0.5 * (prev.time + nxt.time))
    a0, b0, o0 = prev.moments()
    a1, b1, o1 = nxt.moments()
    da = (a1 - a0) / dt
    db = (b1 - b0) / dt
    do = (o1 - o0) / dt

    a, b, omega = mid.moments()
    u, theta = mid.u, mid.theta
    _, micro = hm.project_P(mid.f)

    divb = sum(dx(b[..., i], i) for i in range(3))
    res_a = da + divb

    res_b = np.empty_like(db)
    for i in range(3):
        flux = sum(dx(_gamma_field(i + 1, j + 1, micro), j) for j in range(3))
        res_b[..., i] = (db[..., i] + dx(a, i) + (2.0 / SQRT6) * dx(omega, i) + flux
                         + b[..., i] - u[..., i] - dealias(u[..., i] * a))

    qf = [hm.q_moment(i + 1, micro) for i in range(3)]
    divq = sum(dx(qf[i], i) for i in range(3))
    u_dot_b = dealias(np.sum(u * b, axis=-1))
    # drift coupling oracle-derived from the kinetic equation: the u-dependent
    # moment read is <A_j chi4, f> u_j = (2/sqrt6) u.b (pure lowering action)
    res_o = (do + SQRT2 * (SQRT2 * omega - SQRT3 * theta) - SQRT6 * dealias(a * theta)
             + (2.0 / SQRT6) * divb - (2.0 / SQRT6) * u_dot_b + divq)

    def l2(g):
        return float(np.sqrt(VOLUME * np.mean(np.sum(g ** 2, axis=-1) if g.ndim == 4 else g ** 2)))

    return np.array([l2(res_a), l2(res_b), l2(res_o)])


# --- initial data ----------------------------------------------------------------

def random_field_state(n, N, amplitude, seed=0, smoothness=0.5):
    """Real band-limited random data exciting the kinetic and fluid channels."""
    rng = np.random.default_rng(seed)
    kc = band_cut(n)

    def rand_field(shape=()):
        k = wavenumbers(n)
        K2 = (k[:, None, None] ** 2 + k[None, :, None] ** 2 + k[None, None, :] ** 2)
        fh = (rng.standard_normal((n, n, n) + shape) + 1j * rng.standard_normal((n, n, n) + shape))
        fh *= np.exp(-smoothness * K2).reshape((n, n, n) + (1,) * len(shape))
        g = np.fft.ifftn(fh, axes=(0, 1, 2)).real
        g = dealias(g)
        scale = np.max(np.abs(g))
        return g / scale if scale > 0 else g

    f = np.zeros((n, n, n) + (N + 1,) * 3)
    # populate a few low Hermite modes per channel, macro and micro
    for alpha in [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1), (2, 0, 0), (1, 1, 0), (0, 1, 1)]:
        f[(...,) + alpha] = amplitude * rand_field()
    state = FieldState(f=f, rho=amplitude * rand_field(), u=amplitude * rand_field((3,)),
                       theta=amplitude * rand_field(), time=0.0)
    return state


def enforce_conservation_integrals(state):
    """Zero the four invariant integrals by adjusting spatial means
    (a and rho directly, then the b and omega means against the fluid fields)."""
    st = state.copy()
    st.f[..., 0, 0, 0] -= np.mean(st.f[..., 0, 0, 0])
    st.rho -= np.mean(st.rho)
    dens = 1.0 + st.rho
    for i, al in enumerate([(1, 0, 0), (0, 1, 0), (0, 0, 1)]):
        target = -np.mean(dens * st.u[..., i])
        st.f[(...,) + al] += target - np.mean(st.f[(...,) + al])
    kin = st.theta + 0.5 * np.sum(st.u ** 2, axis=-1)
    target_omega = -(2.0 / SQRT6) * np.mean(dens * kin)
    _, _, omega = st.moments()
    shift = (target_omega - np.mean(omega)) / SQRT3
    for al in [(2, 0, 0), (0, 2, 0), (0, 0, 2)]:
        st.f[(...,) + al] += shift
    return st


# --- run driver -------------------------------------------------------------------

@dataclass
class RunResult:
    records: list
    final_state: FieldState
    config: dict

    def series(self, name):
        idx = DiagnosticsRecord.header().index(name)
        return np.array([r.as_row()[idx] for r in self.records])


def run(state, dt, n_steps, cfg=None, diag_stride=10, density_floor=DENSITY_FLOOR,
        collect_states=False):
    """Advance n_steps with RK4, recording diagnostics every diag_stride steps."""
    cfg = FunctionalConfig() if cfg is None else cfg
    records = []
    states = []
    prev = None
    rec0 = energy_functionals(state, cfg)
    records.append(rec0)
    if collect_states:
        states.append(state.copy())
    for step in range(1, n_steps + 1):
        prev = state
        state = step_rk4(state, dt, density_floor)
        if step % diag_stride == 0 or step == n_steps:
            rec = energy_functionals(state, cfg, prev_next=(prev, state, dt))
            records.append(rec)
            if collect_states:
                states.append(state.copy())
    result = RunResult(records=records, final_state=state,
                       config={"dt": dt, "n_steps": n_steps, "diag_stride": diag_stride})
    if collect_states:
        result.states = states
    return result


# --- linear consistency helper ----------------------------------------------------

def state_to_modes(state):
    """Fourier modes of the state as ModeState objects (band modes only)."""
    n = state.n
    N = state.order
    kc = band_cut(n)
    k = wavenumbers(n)
    sel = np.where(np.abs(k) <= kc)[0]
    fh = np.fft.fftn(state.f, axes=(0, 1, 2)) / n ** 3
    rh = np.fft.fftn(state.rho) / n ** 3
    uh = np.fft.fftn(state.u, axes=(0, 1, 2)) / n ** 3
    th = np.fft.fftn(state.theta) / n ** 3
    out = []
    for i in sel:
        for j in sel:
            for l in sel:
                out.append(md.ModeState(xi=np.array([k[i], k[j], k[l]]),
                                        fhat=fh[i, j, l], rho=rh[i, j, l],
                                        u=uh[i, j, l], theta=th[i, j, l]))
    return out


def modes_to_state(mode_list, n, time=0.0):
    N = mode_list[0].order
    fh = np.zeros((n, n, n) + (N + 1,) * 3, dtype=complex)
    rh = np.zeros((n, n, n), dtype=complex)
    uh = np.zeros((n, n, n, 3), dtype=complex)
    th = np.zeros((n, n, n), dtype=complex)
    for st in mode_list:
        idx = tuple(int(x) % n for x in st.xi)
        fh[idx] = st.fhat
        rh[idx] = st.rho
        uh[idx] = st.u
        th[idx] = st.theta
    mk = lambda g: np.fft.ifftn(g * n ** 3, axes=(0, 1, 2)).real
    return FieldState(mk(fh), mk(rh), mk(uh), mk(th), time)


def evolve_linear(state, t):
    """Evolve the state under the linearized dynamics (mode-by-mode, exact)."""
    out = []
    for mst in state_to_modes(state):
        out.append(md.evolve_mode(mst, t))
    st = modes_to_state(out, state.n, state.time + t)
    return st


# --- checkpoint format --------------------------------------------------------------

CHECKPOINT_VERSION = 1
_BASIS_NOTE = ("orthonormal Maxwellian-weighted Hermite tensor basis; "
               "psi_0 cubed is sqrt of the standard Gaussian; index order (v1, v2, v3)")


def save_checkpoint(path, state):
    """Flat binary dump with a one-line JSON header describing the layout."""
    header = {
        "version": CHECKPOINT_VERSION,
        "n": state.n,
        "order": state.order,
        "time": state.time,
        "dtype": "float64",
        "arrays": ["f", "rho", "u", "theta"],
        "shapes": {"f": list(state.f.shape), "rho": list(state.rho.shape),
                   "u": list(state.u.shape), "theta": list(state.theta.shape)},
        "basis": _BASIS_NOTE,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode() + b"\n")
        for arr in (state.f, state.rho, state.u, state.theta):
            fh.write(np.ascontiguousarray(arr, dtype=np.float64).tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        if header["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header['version']}")
        arrays = {}
        for name in header["arrays"]:
            shape = tuple(header["shapes"][name])
            count = int(np.prod(shape))
            arrays[name] = np.frombuffer(fh.read(count * 8), dtype=np.float64).reshape(shape).copy()
    return FieldState(arrays["f"], arrays["rho"], arrays["u"], arrays["theta"], header["time"])
