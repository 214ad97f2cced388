"""Campaign command line.

One subcommand per verification campaign:

    coercivity | mode-decay | whole-space | torus-linear | nonlinear

Shared flags: --config FILE (flat `key = value` lines), --out DIR, --seed N,
--threads N.  The default output directory comes from the KINETICFLUID_OUT
environment variable, falling back to ./campaign_out.  Exit codes: 0 every
verdict passed, 1 at least one verdict failed, 2 configuration error.

Each campaign writes: manifest.txt (all resolved settings), one or more CSV
series, an SVG plot, and verdicts.txt/.csv.  Identical config and seed
reproduce byte-identical CSV output.
"""

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import hermite as hm
from . import modes as md
from . import reports as rp
from . import solver as sl
from . import torus as tr
from . import wholespace as ws


class ConfigError(ValueError):
    pass


# schema: key -> (type, default_or_None_if_required, (lo, hi) or None)
_COMMON = {"seed": (int, None, (0, 2 ** 31 - 1)),
           "max_seconds": (float, 3600.0, (1.0, 86400.0))}

SCHEMAS = {
    "coercivity": {**_COMMON,
                   "N": (int, 8, (4, 16)),
                   "N_refined": (int, 12, (4, 18)),
                   "samples": (int, 10000, (100, 10 ** 7))},
    "mode-decay": {**_COMMON,
                   "N": (int, 6, (4, 10)),
                   "n_xi": (int, 50, (4, 500)),
                   "xi_min": (float, 0.1, (1e-4, 100.0)),
                   "xi_max": (float, 10.0, (1e-4, 100.0)),
                   "kappa1": (float, 0.5, (1e-6, 10.0)),
                   "kappa2": (float, 0.5, (1e-6, 10.0)),
                   "kappa3": (float, 0.1, (1e-6, 10.0))},
    "whole-space": {**_COMMON,
                    "N": (int, 4, (4, 8)),
                    "n_radial": (int, 120, (16, 2000)),
                    "n_polar": (int, 8, (1, 64)),
                    "xi_lo": (float, 1e-3, (1e-6, 1.0)),
                    "xi_hi": (float, 20.0, (1.0, 100.0)),
                    "t_min": (float, 20.0, (0.1, 1e4)),
                    "t_max": (float, 200.0, (1.0, 1e5)),
                    "n_times": (int, 40, (10, 400)),
                    "amplitude": (float, 0.01, (1e-8, 1.0))},
    "torus-linear": {**_COMMON,
                     "N": (int, 6, (4, 10)),
                     "kmax": (int, 3, (1, 6)),
                     "T": (float, 30.0, (1.0, 200.0)),
                     "samples": (int, 60, (10, 1000)),
                     "amplitude": (float, 0.01, (1e-8, 1.0)),
                     "smoothness": (float, 0.5, (0.0, 5.0))},
    "nonlinear": {**_COMMON,
                  "n": (int, 8, (4, 32)),
                  "N": (int, 4, (4, 8)),
                  "dt": (float, 1e-3, (1e-6, 0.05)),
                  "T": (float, 5.0, (0.01, 100.0)),
                  "amplitude": (float, 1e-3, (1e-8, 0.1)),
                  "diag_stride": (int, 10, (1, 1000)),
                  "tau1": (float, 0.05, (1e-6, 1.0)),
                  "tau2": (float, 0.05, (1e-6, 1.0)),
                  "tau3": (float, 0.1, (1e-6, 1.0)),
                  "tau4": (float, 0.05, (1e-6, 1.0)),
                  "tau5": (float, 0.05, (1e-6, 1.0)),
                  "tau6": (float, 0.05, (1e-6, 1.0))},
}


def parse_config_file(path):
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        values[key] = val
    return values


def resolve_config(campaign, raw, seed_flag=None):
    schema = SCHEMAS[campaign]
    cfg = {}
    for key, val in raw.items():
        if key not in schema:
            raise ConfigError(f"unknown config key {key!r} for campaign {campaign!r}")
        typ, _, bounds = schema[key]
        try:
            cfg[key] = typ(val)
        except ValueError as exc:
            raise ConfigError(f"config key {key!r}: {exc}") from None
        if bounds is not None and not (bounds[0] <= cfg[key] <= bounds[1]):
            raise ConfigError(f"config key {key!r} = {cfg[key]} outside range {bounds}")
    if seed_flag is not None:
        cfg["seed"] = int(seed_flag)
    missing = [k for k, (_, default, _) in schema.items() if default is None and k not in cfg]
    if missing:
        raise ConfigError(f"missing required config keys: {', '.join(sorted(missing))}")
    for key, (_, default, _) in schema.items():
        cfg.setdefault(key, default)
    return cfg


def write_manifest(outdir, campaign, cfg, extra=None):
    lines = [f"campaign = {campaign}", f"package_version = {__version__}"]
    for key in sorted(cfg):
        lines.append(f"{key} = {cfg[key]}")
    for key in sorted(extra or {}):
        lines.append(f"{key} = {extra[key]}")
    (outdir / "manifest.txt").write_text("\n".join(lines) + "\n")


# --- campaigns -------------------------------------------------------------------


def run_coercivity(cfg, outdir, threads=1):
    rows = []
    for N in (cfg["N"], cfg["N_refined"]):
        est = hm.coercivity_estimate(cfg["samples"], N, seed=cfg["seed"])
        rows.append([N, est.lambda_hat, est.lambda_p0, est.samples, est.skipped])
    rp.write_csv(outdir / "coercivity.csv",
                 ["N", "lambda_hat", "lambda_p0", "samples", "skipped"], rows)
    lam, lam_ref = rows[0][1], rows[1][1]
    ratio = lam_ref / lam
    verdicts = [
        rp.Verdict.lower_bound("lambda_hat > 0", 0.0, lam,
                               note=f"micro dissipation bound at N={cfg['N']}"),
        rp.Verdict.two_sided("lambda refinement ratio", 1.0, ratio, 0.25,
                             note=f"lambda(N={cfg['N_refined']}) / lambda(N={cfg['N']})"),
    ]
    rp.svg_line_plot(outdir / "coercivity.svg",
                     {"lambda_hat": ([rows[0][0], rows[1][0]], [lam, lam_ref])},
                     xlabel="Hermite order N", ylabel="empirical lambda",
                     annotation=f"ratio = {ratio:.4f}")
    return verdicts


def run_mode_decay(cfg, outdir, threads=1):
    rng = np.random.default_rng(cfg["seed"])
    kappa = md.KappaConfig(cfg["kappa1"], cfg["kappa2"], cfg["kappa3"]).validate()
    mags = np.exp(np.linspace(np.log(cfg["xi_min"]), np.log(cfg["xi_max"]), cfg["n_xi"]))
    dirs = rng.standard_normal((cfg["n_xi"], 3))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    rows = []
    c_values = []
    for mag, direc in zip(mags, dirs):
        xi = mag * direc
        st = md.random_mode_state(xi, cfg["N"], rng)
        prop = md.get_propagator(xi, cfg["N"], cache=False)
        horizon = 10.0 * (1.0 + mag ** 2) / mag ** 2
        times = np.linspace(0.0, horizon, 12)
        vecs = prop.evolve_many(st.to_vector(), times)
        efs = np.array([md.energy_EF(md.ModeState.from_vector(xi, cfg["N"], v), kappa).ef
                        for v in vecs])
        rates = -np.diff(np.log(efs)) / np.diff(times)
        worst = float(np.min(rates))
        c = worst * (1.0 + mag ** 2) / mag ** 2
        c_values.append(c)
        rows.append([mag, worst, c])
    c_star = float(np.min(c_values))
    rp.write_csv(outdir / "mode_decay.csv", ["xi_mag", "worst_rate", "c_factor"], rows)
    mags_arr = np.array([r[0] for r in rows])
    rates_arr = np.array([r[1] for r in rows])
    rp.svg_line_plot(outdir / "mode_decay.svg",
                     {"measured rate": (mags_arr, rates_arr)},
                     xlabel="|xi|", ylabel="E_F decay rate", logx=True, logy=True,
                     fit_line=(mags_arr, c_star * mags_arr ** 2 / (1 + mags_arr ** 2),
                               f"c |xi|^2/(1+|xi|^2), c = {c_star:.3f}"))
    return [rp.Verdict.lower_bound("gronwall c > 0", 0.0, c_star,
                                   note="uniform Lyapunov rate factor over the xi sweep")]


def run_whole_space(cfg, outdir, threads=1):
    profile = ws.default_profile(cfg["amplitude"])
    grid = ws.radial_grid(cfg["n_radial"], cfg["xi_lo"], cfg["xi_hi"], cfg["n_polar"]).validate()
    times = np.concatenate([[0.0], np.exp(np.linspace(np.log(1.0), np.log(cfg["t_max"]),
                                                      cfg["n_times"]))])
    res = ws.norm_series(profile, grid, times, N=cfg["N"], m_orders=(0, 1), threads=threads)
    fine = ws.radial_grid(2 * cfg["n_radial"], cfg["xi_lo"], 2.0 * cfg["xi_hi"],
                          cfg["n_polar"] + 4).validate()
    res_f = ws.norm_series(profile, fine, times, N=cfg["N"], m_orders=(0, 1), threads=threads)
    refine_err = max(float(np.max(np.abs(res[m] - res_f[m]) / res[m])) for m in (0, 1))

    window = (cfg["t_min"], cfg["t_max"])
    fit0 = ws.fit_decay(times, res[0], window=window)
    fit1 = ws.fit_decay(times, res[1], window=window)
    v0 = ws.verify_sigma(1, 0, fit0, tol=0.08)
    v1 = ws.verify_sigma(1, 1, fit1, tol=0.12)
    rp.write_csv(outdir / "whole_space.csv",
                 ["t", "norm_m0", "norm_m1", "norm_m0_refined", "norm_m1_refined"],
                 [[t, res[0][i], res[1][i], res_f[0][i], res_f[1][i]]
                  for i, t in enumerate(times)])
    mask = times > 0
    fit_y = np.exp(fit0.exponent * np.log1p(times[mask]))
    fit_y *= res[0][mask][-1] / fit_y[-1]
    rp.svg_line_plot(outdir / "whole_space.svg",
                     {"norm m=0": (times[mask], res[0][mask]),
                      "norm m=1": (times[mask], res[1][mask])},
                     xlabel="1 + t", ylabel="L2 norm", logx=True, logy=True,
                     fit_line=(times[mask], fit_y, f"slope {fit0.exponent:.3f}"),
                     annotation=f"m=1 slope {fit1.exponent:.3f}")
    return [
        rp.Verdict.two_sided("sigma(1,0)", v0.target, v0.measured, 0.08,
                             note=f"fit residual {fit0.residual:.4f}"),
        rp.Verdict.two_sided("sigma(1,1)", v1.target, v1.measured, 0.12,
                             note=f"fit residual {fit1.residual:.4f}"),
        rp.Verdict.upper_bound("grid refinement", 0.01, refine_err,
                               note="max relative norm change under grid refinement"),
    ]


def run_torus_linear(cfg, outdir, threads=1):
    data = tr.random_torus_data(cfg["kmax"], cfg["N"], seed=cfg["seed"],
                                amplitude=cfg["amplitude"], smoothness=cfg["smoothness"])
    data = tr.enforce_conservation(data)
    times, norms, fit, drift = tr.torus_linear_decay(data, T=cfg["T"], samples=cfg["samples"],
                                                     threads=threads)
    gap, attained = tr.min_spectral_gap(tr.TorusSpectrum(cfg["kmax"]), cfg["N"])
    rp.write_csv(outdir / "torus_decay.csv", ["t", "norm"],
                 [[t, v] for t, v in zip(times, norms)])
    fy = norms[-1] * np.exp(-fit.rate * (times - times[-1]))
    rp.svg_line_plot(outdir / "torus_decay.svg", {"total norm": (times, norms)},
                     xlabel="t", ylabel="norm", logy=True,
                     fit_line=(times, fy, f"rate {fit.rate:.4f}"),
                     annotation=f"min gap {gap:.4f} at k orbit {attained}")
    return [
        rp.Verdict.two_sided("decay rate vs lambda gap", gap, fit.rate, 0.05 * gap,
                             note=f"gap attained on orbit {attained}"),
        rp.Verdict.upper_bound("conserved drift", 1e-10, drift,
                               note="zero-mode conservation laws 1-4"),
        rp.Verdict.upper_bound("fit residual", 0.02, fit.residual,
                               note=f"window {fit.window}"),
    ]


def run_nonlinear(cfg, outdir, threads=1):
    fcfg = sl.FunctionalConfig(cfg["tau1"], cfg["tau2"], cfg["tau3"],
                               cfg["tau4"], cfg["tau5"], cfg["tau6"])
    state = sl.random_field_state(cfg["n"], cfg["N"], cfg["amplitude"], seed=cfg["seed"])
    state = sl.enforce_conservation_integrals(state)
    n_steps = int(round(cfg["T"] / cfg["dt"]))
    result = sl.run(state, cfg["dt"], n_steps, cfg=fcfg, diag_stride=cfg["diag_stride"])
    rows = [rec.as_row() for rec in result.records]
    rp.write_csv(outdir / "nonlinear_diagnostics.csv", sl.DiagnosticsRecord.header(), rows)
    sl.save_checkpoint(outdir / "final_state.ckpt", result.final_state)

    tser = result.series("t")
    E = result.series("E")
    D = result.series("D")
    cons = np.stack([result.series(k) for k in
                     ("cons_a", "cons_rho", "cons_momentum", "cons_energy")], axis=1)
    scale = state.l2_norm()
    drift = float(np.max(np.abs(cons - cons[0]) / max(scale, 1e-300)))
    slack = 1e-10 * cfg["diag_stride"]
    max_increase = float(np.max(np.diff(E))) if len(E) > 1 else 0.0
    min_F = float(result.series("min_F").min())
    diss_ratio = float(np.max(np.diff(E) / (np.diff(tser) * D[:-1])))
    rp.svg_line_plot(outdir / "nonlinear_energy.svg",
                     {"E(t)": (tser, E), "D(t)": (tser, D)},
                     xlabel="t", ylabel="functional", logy=True,
                     annotation=f"max dE/(dt D) = {diss_ratio:.3f}")
    return [
        rp.Verdict.upper_bound("conservation laws 1-4", 1e-8, drift,
                               note="all four invariant integrals, relative to data norm"),
        rp.Verdict.upper_bound("energy monotone", slack, max_increase,
                               note="max E increase between records"),
        rp.Verdict.lower_bound("min_F", -1e-6 - 1e-300, min_F,
                               note="reconstructed distribution at quadrature nodes"),
        rp.Verdict.upper_bound("dissipation ratio", 0.0, diss_ratio,
                               note="max dE/(dt D) along the run"),
    ]


CAMPAIGNS = {
    "coercivity": run_coercivity,
    "mode-decay": run_mode_decay,
    "whole-space": run_whole_space,
    "torus-linear": run_torus_linear,
    "nonlinear": run_nonlinear,
}


def main(argv=None):
    parser = argparse.ArgumentParser(prog="kineticfluid",
                                     description="verification campaigns for the kinetic-fluid simulator")
    sub = parser.add_subparsers(dest="campaign", required=True)
    for name in CAMPAIGNS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="flat key = value config file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", default=None, type=int, help="RNG seed (overrides config)")
        p.add_argument("--threads", default=1, type=int)
    args = parser.parse_args(argv)

    try:
        raw = parse_config_file(args.config) if args.config else {}
        cfg = resolve_config(args.campaign, raw, seed_flag=args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    outdir = Path(args.out or os.environ.get("KINETICFLUID_OUT", "campaign_out")) / args.campaign
    outdir.mkdir(parents=True, exist_ok=True)

    start = time.monotonic()
    verdicts = CAMPAIGNS[args.campaign](cfg, outdir, threads=max(1, args.threads))
    elapsed = time.monotonic() - start
    if elapsed > cfg["max_seconds"]:
        verdicts.append(rp.Verdict.upper_bound("wallclock budget (s)", cfg["max_seconds"],
                                               elapsed, note="declared resource bound"))
    write_manifest(outdir, args.campaign, cfg, extra={"threads": max(1, args.threads)})
    rp.write_verdicts(outdir / "verdicts.txt", verdicts)
    print(rp.format_verdicts(verdicts), end="")
    return 0 if all(v.passed for v in verdicts) else 1


if __name__ == "__main__":
    sys.exit(main())
