"""Per-mode linear dynamics: generator structure, evolution, sources, functionals."""

import numpy as np
import pytest

from kineticfluid import hermite as hm
from kineticfluid import modes as md


def test_equilibrium_direction_at_zero_frequency():
    N = 5
    st = md.ModeState(xi=[0, 0, 0], fhat=hm.resize(hm.chi(1), N), u=[1, 0, 0])
    A = md.get_propagator(np.zeros(3), N).A
    assert np.max(np.abs(A @ st.to_vector())) < 1e-12


def test_conserved_directions_at_zero_frequency():
    prop = md.get_propagator(np.zeros(3), 5)
    w = np.linalg.eigvals(prop.A)
    assert int(np.sum(np.abs(w) < 1e-10)) == 6  # a, rho, b+u (x3), theta-omega combo
    assert prop.abscissa(exclude_conserved=True) < -1e-3


def test_abscissa_negative_off_zero():
    assert md.spectral_abscissa([1.0, 0.0, 0.0], 6) < 0.0
    assert md.spectral_abscissa([0.3, -0.4, 0.8], 5) < 0.0


def test_abscissa_gronwall_scaling():
    # |abscissa| >= c |xi|^2/(1+|xi|^2) for a single c over sampled magnitudes
    mags = [0.1, 0.5, 1.0, 2.0, 5.0, 10.0]
    cs = []
    for m in mags:
        a = md.spectral_abscissa([m, 0.0, 0.0], 5)
        cs.append(-a * (1 + m * m) / (m * m))
    assert min(cs) > 0.1


def test_moment_equation_consistency():
    """d/dt of (a, b, omega) read from the kinetic row must reproduce the
    frequency-space moment equations to 1e-10."""
    rng = np.random.default_rng(3)
    N = 5
    for _ in range(5):
        xi = rng.standard_normal(3) * 2.0
        st = md.random_mode_state(xi, N, rng)
        A = md.get_propagator(xi, N, cache=False).A
        dst = md.ModeState.from_vector(xi, N, A @ st.to_vector())
        da, db, dom = dst.moments()
        a, b, om = st.moments()
        _, micro = hm.project_P(st.fhat)
        gam = np.array([[hm.gamma_moment(i, j, micro) for j in (1, 2, 3)] for i in (1, 2, 3)])
        qm = np.array([hm.q_moment(i, micro) for i in (1, 2, 3)])
        assert abs(da + 1j * np.dot(xi, b)) < 1e-10
        want_db = -1j * xi * a - (2 / np.sqrt(6)) * 1j * xi * om - 1j * (gam @ xi) + st.u - b
        assert np.max(np.abs(db - want_db)) < 1e-10
        want_dom = (-np.sqrt(2) * (np.sqrt(2) * om - np.sqrt(3) * st.theta)
                    - (2 / np.sqrt(6)) * 1j * np.dot(xi, b) - 1j * np.dot(xi, qm))
        assert abs(dom - want_dom) < 1e-10


def test_dissipation_identity():
    """-(1/2) d/dt of the plain sum of squares equals the microscopic
    dissipation plus drifts plus |xi|^2 diffusion terms (residual < 1e-9)."""
    rng = np.random.default_rng(4)
    for _ in range(5):
        xi = rng.standard_normal(3)
        st = md.random_mode_state(xi, 5, rng)
        A = md.get_propagator(xi, 5, cache=False).A
        v = st.to_vector()
        lhs = -float(np.real(np.vdot(v, A @ v)))
        assert abs(lhs - md.dissipation_rate(st)) < 1e-9 * max(1.0, abs(lhs))


def test_evolution_identity_and_semigroup():
    rng = np.random.default_rng(5)
    st = md.random_mode_state([0.7, 0.3, -0.2], 5, rng)
    out0 = md.evolve_mode(st, 0.0)
    assert np.max(np.abs(out0.to_vector() - st.to_vector())) < 1e-12
    s1 = md.evolve_mode(md.evolve_mode(st, 0.7), 0.5)
    s2 = md.evolve_mode(st, 1.2)
    assert np.max(np.abs(s1.to_vector() - s2.to_vector())) < 1e-9


def test_rk4_order_and_stability_guard():
    rng = np.random.default_rng(6)
    st = md.random_mode_state([0.3, -0.7, 1.2], 5, rng)
    ref = md.evolve_mode(st, 1.0)
    e1 = np.max(np.abs(md.evolve_mode(st, 1.0, method="rk4", dt=0.05).to_vector() - ref.to_vector()))
    e2 = np.max(np.abs(md.evolve_mode(st, 1.0, method="rk4", dt=0.025).to_vector() - ref.to_vector()))
    assert 13.0 <= e1 / e2 <= 19.0
    prop = md.get_propagator(st.xi, 5)
    with pytest.raises(md.StabilityError):
        prop.evolve_rk4(st.to_vector(), 1.0, 10.0 * md.rk4_stability_dt(prop.A))


def test_make_source_examples():
    N = 5
    c0 = hm.resize(hm.chi0(), N)
    src = md.make_source((c0, c0, c0), c0)
    assert md.source_violation(src) < 1e-14
    for g in src.G:
        assert abs(g[0, 0, 0]) < 1e-14
    assert np.max(np.abs(src.phi)) < 1e-14  # chi0 is entirely macro
    # already-admissible data is unchanged
    g = hm.zeros(N)
    g[1, 1, 0] = 1.0
    p = hm.zeros(N)
    p[2, 1, 0] = 1.0
    src = md.make_source((g, g, g), p)
    assert np.max(np.abs(src.G[0] - g)) < 1e-14
    assert np.max(np.abs(src.phi - p)) < 1e-14
    # idempotence
    rng = np.random.default_rng(7)
    raw = [rng.standard_normal((N + 1,) * 3) for _ in range(3)]
    praw = rng.standard_normal((N + 1,) * 3)
    once = md.make_source(raw, praw)
    twice = md.make_source(once.G, once.phi)
    for a, b in zip(once.G, twice.G):
        assert np.max(np.abs(a - b)) < 1e-14
    assert np.max(np.abs(once.phi - twice.phi)) < 1e-14


def test_source_mass_moment_vanishes():
    # <chi0, div_v G - v.G/2 + phi> = 0: the mass moment sees no source
    rng = np.random.default_rng(8)
    N = 5
    src = md.make_source([rng.standard_normal((N + 1,) * 3) for _ in range(3)],
                         rng.standard_normal((N + 1,) * 3))
    skin = md.source_kinetic_term(src, N)
    assert abs(skin[0, 0, 0]) < 1e-12


def test_duhamel_zero_source_matches_homogeneous():
    rng = np.random.default_rng(9)
    st = md.random_mode_state([0.4, -1.1, 0.8], 5, rng)
    zero = md.ModeSource(G=(hm.zeros(5),) * 3, phi=hm.zeros(5))
    out = md.duhamel_evolve(st, zero, 0.8)
    ref = md.evolve_mode(st, 0.8)
    assert np.max(np.abs(out.to_vector() - ref.to_vector())) < 1e-12


def test_duhamel_constant_source_steady_state():
    rng = np.random.default_rng(10)
    N = 5
    xi = np.array([0.3, -0.7, 1.2])
    src = md.make_source([0.1 * rng.standard_normal((N + 1,) * 3) for _ in range(3)],
                         0.1 * rng.standard_normal((N + 1,) * 3))
    A = md.get_propagator(xi, N).A
    svec = np.zeros(A.shape[0], dtype=complex)
    svec[:(N + 1) ** 3] = md.source_kinetic_term(src, N).ravel()
    target = -np.linalg.solve(A, svec)
    out = md.duhamel_evolve(md.ModeState(xi=xi, fhat=hm.zeros(N)), src, 60.0, n_samples=1601)
    assert np.max(np.abs(out.to_vector() - target)) < 1e-3 * np.max(np.abs(target))


def test_duhamel_rejects_bad_source():
    N = 5
    bad = md.ModeSource(G=(hm.resize(hm.chi0(), N),) * 3, phi=hm.zeros(N))
    st = md.ModeState(xi=[1.0, 0, 0], fhat=hm.zeros(N))
    with pytest.raises(md.SourceError):
        md.duhamel_evolve(st, bad, 1.0)


def test_energy_EF_examples():
    kappa = md.KappaConfig()
    st = md.ModeState(xi=[1.0, 0, 0], fhat=hm.zeros(5))
    assert md.energy_EF(st, kappa).ef == 0.0
    # macro-free fhat, xi = 0, no fluid: every correction vanishes
    f = hm.zeros(5)
    f[1, 1, 1] = 1.3
    st = md.ModeState(xi=[0, 0, 0], fhat=f)
    rep = md.energy_EF(st, kappa)
    assert abs(rep.ef - hm.norm_sq(f)) < 1e-12
    assert abs(rep.plain_sq - hm.norm_sq(f)) < 1e-12


def test_energy_EF_equivalence_band():
    kappa = md.tune_kappa(N=5, seed=7, sweep=300)
    rng = np.random.default_rng(17)
    for _ in range(300):
        mag = np.exp(rng.uniform(np.log(0.1), np.log(10.0)))
        d = rng.standard_normal(3)
        st = md.random_mode_state(mag * d / np.linalg.norm(d), 5, rng)
        rep = md.energy_EF(st, kappa)
        assert 0.5 * rep.plain_sq <= rep.ef <= 2.0 * rep.plain_sq


def test_lyapunov_decay_along_trajectories():
    """E_F decays at rate >= lambda |xi|^2/(1+|xi|^2) with one lambda > 0."""
    kappa = md.KappaConfig()
    rng = np.random.default_rng(18)
    lams = []
    for mag in (0.2, 1.0, 4.0):
        d = rng.standard_normal(3)
        xi = mag * d / np.linalg.norm(d)
        st = md.random_mode_state(xi, 5, rng)
        prop = md.get_propagator(xi, 5, cache=False)
        pref = (1 + mag ** 2) / mag ** 2
        times = np.linspace(0.0, 8.0 * pref, 10)
        vecs = prop.evolve_many(st.to_vector(), times)
        efs = np.array([md.energy_EF(md.ModeState.from_vector(xi, 5, v), kappa).ef for v in vecs])
        assert np.all(np.diff(efs) < 1e-12 * efs[0])
        rates = -np.diff(np.log(efs)) / np.diff(times)
        lams.append(float(np.min(rates)) * pref)
    assert min(lams) > 0.0


def test_conserved_reads():
    rng = np.random.default_rng(19)
    st = md.random_mode_state([0, 0, 0], 5, rng)
    reads = md.conserved_reads(st)
    a, b, om = st.moments()
    assert abs(reads[0] - a) < 1e-14
    assert abs(reads[-1] - (st.theta + np.sqrt(6) / 2 * om)) < 1e-14
