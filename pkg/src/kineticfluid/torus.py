"""Periodic-domain linear harness on the cube torus [0, 2 pi)^3.

Unit period per axis makes the frequencies integer vectors (xi = k) and the
Poincare constant on the mean-zero subspace exactly one.  Per-mode dynamics
is delegated to `modes`; this module owns the discrete mode set, the
conservation-law projection of the zero mode, total-norm decay measurement,
and the minimum spectral gap it is compared against.
"""

from dataclasses import dataclass

import numpy as np

from . import hermite as hm
from . import modes as md

SQRT6 = np.sqrt(6.0)


@dataclass
class TorusSpectrum:
    kmax: int

    @property
    def modes(self):
        r = range(-self.kmax, self.kmax + 1)
        return [np.array((i, j, k)) for i in r for j in r for k in r]

    def canonical_orbits(self):
        """Representatives of the signed-permutation orbits: the generator
        spectrum depends on k only through the sorted absolute entries."""
        reps = {}
        for k in self.modes:
            key = tuple(sorted(abs(int(x)) for x in k))
            reps.setdefault(key, np.array(key))
        return reps


def random_torus_data(kmax, N, seed=0, amplitude=1.0, smoothness=0.5):
    """Real random band-limited data: per-mode states with conjugate symmetry.

    Mode amplitudes carry exp(-smoothness |k|^2), the spectral signature of a
    smooth field; smoothness=0 gives white data."""
    rng = np.random.default_rng(seed)
    spectrum = TorusSpectrum(kmax)
    data = {}
    for k in spectrum.modes:
        key = tuple(int(x) for x in k)
        if key in data:
            continue
        scale = amplitude * np.exp(-smoothness * float(k @ k))
        st = md.random_mode_state(np.asarray(k, float), N, rng, scale=scale)
        data[key] = st
        negkey = tuple(-x for x in key)
        if negkey != key:
            data[negkey] = md.ModeState(xi=-st.xi, fhat=np.conj(st.fhat), rho=np.conj(st.rho),
                                        u=np.conj(st.u), theta=np.conj(st.theta))
        else:
            st.fhat = st.fhat.real.astype(complex)
            st.rho = complex(st.rho.real)
            st.u = st.u.real.astype(complex)
            st.theta = complex(st.theta.real)
    return [data[k] for k in sorted(data)]


def _zero_mode_index(data):
    for i, st in enumerate(data):
        if np.allclose(st.xi, 0.0):
            return i
    raise ValueError("data has no zero mode")


def enforce_conservation(data):
    """Adjust the zero mode so the four linearized conserved quantities vanish.

    a and rho are zeroed directly; b + u and theta + (sqrt6/2) omega receive
    the minimal-norm correction on the coordinates they involve.
    """
    data = [md.ModeState(st.xi, st.fhat.copy(), st.rho, st.u.copy(), st.theta) for st in data]
    st = data[_zero_mode_index(data)]
    st.fhat[0, 0, 0] = 0.0
    st.rho = 0.0
    _, b, _ = st.moments()
    shift = 0.5 * (b + st.u)
    st.fhat[1, 0, 0] -= shift[0]
    st.fhat[0, 1, 0] -= shift[1]
    st.fhat[0, 0, 1] -= shift[2]
    st.u = st.u - shift
    # constraint g = theta + (1/sqrt2) * sum_j c_{2e_j}; gradient (1, 1/sqrt2 x3)
    csum = st.fhat[2, 0, 0] + st.fhat[0, 2, 0] + st.fhat[0, 0, 2]
    g = st.theta + csum / np.sqrt(2.0)
    denom = 1.0 + 3.0 / 2.0
    st.theta = st.theta - g / denom
    corr = (g / denom) / np.sqrt(2.0)
    st.fhat[2, 0, 0] -= corr
    st.fhat[0, 2, 0] -= corr
    st.fhat[0, 0, 2] -= corr
    return data


def conserved_drift(states_by_time):
    """Max deviation of the zero-mode conserved reads across a time series."""
    series = np.array([md.conserved_reads(st) for st in states_by_time])
    return float(np.max(np.abs(series - series[0])))


def total_norm_sq(data):
    return float(sum(st.plain_sq() for st in data))


def torus_linear_decay(data, T=30.0, samples=60, fit_window=None, threads=1):
    """Evolve all modes, record the total norm, fit an exponential decay rate.

    The default window is the second half of the run, late enough for the
    slowest mode to dominate the total norm.  Returns
    (times, norms, fit, zero_mode_drift)."""
    from .wholespace import fit_decay, _parallel_map
    if fit_window is None:
        fit_window = (0.5 * T, T)
    times = np.linspace(0.0, T, samples)
    N = data[0].order

    def mode_energy(st):
        # local propagators: the cached variant would pin ~6 MB of
        # eigendecomposition per mode across the sweep
        prop = md.ModePropagator(st.xi, N)
        vecs = prop.evolve_many(st.to_vector(), times)
        return np.sum(np.abs(vecs) ** 2, axis=1)

    energies = _parallel_map(mode_energy, data, threads)
    norms = np.sqrt(np.sum(energies, axis=0))
    izero = _zero_mode_index(data)
    zprop = md.ModePropagator(data[izero].xi, N)
    zvecs = zprop.evolve_many(data[izero].to_vector(), times)
    zstates = [md.ModeState.from_vector(data[izero].xi, N, v) for v in zvecs]
    drift = conserved_drift(zstates)
    fit = fit_decay(times, norms, model="exponential", window=fit_window)
    return times, norms, fit, drift


def min_spectral_gap(spectrum, N):
    """Min over modes of |spectral abscissa|, conserved directions excluded at k = 0.

    Signed-permutation symmetry of the generator reduces the sweep to orbit
    representatives."""
    gap = np.inf
    attained = None
    for key, rep in spectrum.canonical_orbits().items():
        absc = md.spectral_abscissa(np.asarray(rep, float), N,
                                    exclude_conserved=bool(np.all(rep == 0)))
        if -absc < gap:
            gap = -absc
            attained = key
    return float(gap), attained


@dataclass
class PoincareReport:
    max_ratio: float
    constant: float
    passed: bool


def poincare_check(field_modes, tol=1e-12):
    """Check ||g|| <= ||grad g|| for mean-zero fields given as {k: amplitude}.

    The smallest nonzero frequency on the unit torus is |k| = 1, so the
    constant is exactly one, attained on single |k| = 1 modes."""
    if isinstance(field_modes, dict):
        field_modes = [field_modes]
    worst = 0.0
    for field in field_modes:
        num = 0.0
        den = 0.0
        for k, amp in field.items():
            k2 = float(np.dot(k, k))
            if k2 == 0.0:
                if abs(amp) > tol:
                    raise ValueError("poincare_check requires zero-mean fields")
                continue
            num += abs(amp) ** 2
            den += k2 * abs(amp) ** 2
        if den > 0:
            worst = max(worst, np.sqrt(num / den))
    return PoincareReport(max_ratio=worst, constant=1.0, passed=bool(worst <= 1.0 + 1e-12))
