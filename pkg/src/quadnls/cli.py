"""quadnls <subcommand> --config <path> [--out <dir>] [--threads N]"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import spectral_core as sc
from . import ground_state as gs
from . import dynamics as dyn
from . import blowup as bu
from . import io
from .errors import ConfigError, NonFinite, QuadNLSError
from .functionals import FieldPair, PhysicalParams, energy, mass
from .io import REQUIRED, Section, fmt

SUBCOMMANDS = ("ground-state", "gn-constant", "evolve", "stability", "blowup-demo",
               "minimal-mass", "scan-subadditivity", "check-virial", "check-cutoffs")


# ------------------------------------------------------------ config pieces

def build_grid(s: Section, default_kind="tensor"):
    kind = s.str("grid.kind", default_kind, choices=("tensor", "radial"))
    d = s.int("grid.d", REQUIRED, positive=True)
    try:
        if kind == "radial":
            return sc.RadialGrid(d, s.int("grid.nr", REQUIRED, positive=True),
                                 s.float("grid.R_max", REQUIRED, positive=True), s.int("grid.order", 4))
        return sc.Grid(d, s.int("grid.n", REQUIRED, positive=True), s.float("grid.L", REQUIRED, positive=True))
    except QuadNLSError as exc:
        raise ConfigError(str(exc), "grid") from exc


def build_params(s: Section):
    if s.has("params.m"):
        raw = PhysicalParams.from_raw(s.float("params.m", REQUIRED, positive=True),
                                      s.float("params.M", REQUIRED, positive=True),
                                      _complex(s, "params.lam"), _complex(s, "params.mu"),
                                      s.float("params.c", REQUIRED, positive=True))
        kappa, _ = io.normalize_params(raw)
        return PhysicalParams(kappa)
    return PhysicalParams(s.float("params.kappa", REQUIRED, positive=True))


def _complex(s, key):
    v = s.str(key, REQUIRED)
    try:
        return complex(v.replace(" ", ""))
    except ValueError:
        raise ConfigError(f"{key} must be a complex number, got {v!r}", key) from None


def build_solver(s: Section):
    d = gs.SolverOptions()
    return gs.SolverOptions(tau=s.float("solver.tau", d.tau, True), tau_max=s.float("solver.tau_max", d.tau_max, True),
                            tol_energy=s.float("solver.tol_energy", d.tol_energy, True),
                            tol_residual=s.float("solver.tol_residual", d.tol_residual, True),
                            max_iter=s.int("solver.max_iter", d.max_iter, True),
                            width=s.float("solver.width", d.width, True))


def build_evolve(s: Section, **defaults):
    def get(key, conv, dflt):
        return conv(f"evolve.{key}", defaults.get(key, dflt))
    return dyn.EvolveConfig(dt=get("dt", lambda k, d: s.float(k, d, True), REQUIRED),
                            t_end=get("t_end", lambda k, d: s.float(k, d, True), REQUIRED),
                            scheme=get("scheme", lambda k, d: s.str(k, d, dyn.SCHEMES), "strang"),
                            diag_stride=get("diag_stride", lambda k, d: s.int(k, d, True), 10),
                            blowup_K_factor=get("blowup_K_factor", lambda k, d: s.float(k, d, True), 1e4),
                            dt_floor=get("dt_floor", lambda k, d: s.float(k, d, True), 1e-9),
                            adaptive=get("adaptive", s.bool, True),
                            nonlinear=get("nonlinear", lambda k, d: s.str(k, d, ("rk4", "midpoint")), "rk4"),
                            ball_radius=get("ball_radius", s.float, None),
                            boundary_tol=get("boundary_tol", lambda k, d: s.float(k, d, True), 1e-10))


def build_data(s: Section, g):
    kind = s.str("data.kind", "gaussian", choices=("gaussian", "snapshot"))
    if kind == "snapshot":
        fp = io.load_snapshot(s.str("data.path", REQUIRED))
        if fp.grid.describe() != g.describe():
            raise ConfigError("snapshot grid differs from the configured grid", "data.path")
        return FieldPair(fp.u, fp.v, g)
    w = s.float("data.width", 1.0, True)
    au, av = s.float("data.amp_u", 1.0), s.float("data.amp_v", 1.0)
    chirp = s.float("data.chirp", 0.0)
    q = g.r ** 2 if isinstance(g, sc.RadialGrid) else g.rsq
    e = np.exp(-q / (2 * w * w))
    ph = np.exp(1j * chirp * q)
    return FieldPair(au * e * ph, av * e * ph ** 2, g)


# ------------------------------------------------------------ subcommands

class Ctx:
    def __init__(self, cfg, out):
        self.cfg = cfg
        self.s = Section(cfg)
        self.out = out
        os.makedirs(out, exist_ok=True)

    def path(self, name):
        return os.path.join(self.out, name)

    def report(self, title, grid, items, checks):
        lines = io.write_report(self.path(f"{title}.txt"), title, self.cfg, grid, items, checks)
        print("\n".join(lines))
        return 0 if all(c[1] for c in checks) else 1


def cmd_ground_state(c: Ctx):
    s = c.s
    g, p, opts = build_grid(s), build_params(s), build_solver(s)
    kind = s.str("constraint.kind", REQUIRED, choices=("two-mass", "total-mass"))
    if kind == "two-mass":
        res = gs.minimize_I(s.float("constraint.a", REQUIRED, True), s.float("constraint.b", REQUIRED, True), g, p, opts)
    else:
        res = gs.minimize_J(s.float("constraint.c", REQUIRED, True), g, p, opts)
    tol = s.float("check.pohozaev_tol", 1e-6, True)
    io.save_snapshot(c.path("ground.qnls"), res.fields, {"kappa": p.kappa, "t": 0.0})
    f = res.functionals
    items = [("constraint", kind), ("energy", res.energy_value), ("omega1", res.omega1), ("omega2", res.omega2),
             ("omega", res.omega), ("M", f.M), ("K", f.K), ("P", f.P), ("residual_inf", res.residual_inf),
             ("iterations", res.iterations)]
    items += [(f"pohozaev_defect_{i}", x) for i, x in enumerate(res.pohozaev_defects, 1)]
    checks = [("negative_energy", res.energy_value < 0, fmt(res.energy_value)),
              ("pohozaev", max(res.pohozaev_defects) < tol, fmt(max(res.pohozaev_defects)))]
    return c.report("ground-state", g, items, checks)


def cmd_gn_constant(c: Ctx):
    s = c.s
    g, p = build_grid(s, "radial"), build_params(s)
    r = gs.gn_constant(g, p, tol=s.float("solver.tol", 1e-11, True))
    io.save_snapshot(c.path("ground.qnls"), r.ground_pair, {"kappa": p.kappa, "t": 0.0})
    rel = abs(r.C_opt * 2 * np.sqrt(r.M_gs) - 1)
    items = [("M_gs", r.M_gs), ("C_opt", r.C_opt), ("J_value", r.J_value), ("residual_inf", r.residual_inf),
             ("C_opt_times_2_sqrt_M_gs_minus_1", rel)]
    return c.report("gn-constant", g, items, [("sharp_constant", rel < 1e-8, fmt(rel))])


def _drift(diags):
    M0, E0 = diags[0].M, diags[0].E
    dM = max(abs(r.M - M0) for r in diags) / M0
    dE = max(abs(r.E - E0) for r in diags) / max(abs(E0), diags[0].K)
    return dM, dE


def _write_run(c, diags, final, p, t, stem):
    io.write_csv(c.path(f"{stem}.csv"), dyn.CSV_COLUMNS, io.diagnostics_rows(diags))
    io.save_snapshot(c.path(f"{stem}.qnls"), final, {"kappa": p.kappa, "t": t})


def cmd_evolve(c: Ctx):
    s = c.s
    g, p = build_grid(s), build_params(s)
    cfg = build_evolve(s)
    fp = build_data(s, g)
    final, diags, status = dyn.evolve(fp, p, cfg)
    _write_run(c, diags, final, p, status.t, "evolve")
    dM, dE = _drift(diags)
    mt, et = s.float("check.mass_tol", 1e-8, True), s.float("check.energy_tol", 1e-6, True)
    items = [("status", str(status)), ("t_final", status.t), ("steps", status.steps), ("mass_drift", dM),
             ("energy_drift", dE), ("boundary_decay", status.boundary_decay)]
    checks = [("mass", dM < mt, fmt(dM))]
    if status.kind == "Completed":
        checks.append(("energy", dE < et, fmt(dE)))
    return c.report("evolve", g, items, checks)


def cmd_stability(c: Ctx):
    s = c.s
    g, p, opts = build_grid(s), build_params(s), build_solver(s)
    res = gs.minimize_J(s.float("constraint.c", REQUIRED, True), g, p, opts)
    cfg = build_evolve(s)
    eps = s.float("stability.eps", 1e-3)
    st = dyn.stability_experiment(res, eps, cfg, p)
    io.write_csv(c.path("stability.csv"), ("t", "distance"),
                 [{"t": t, "distance": d} for t, d in zip(st.times, st.distances)])
    items = [("omega", res.omega), ("eps", eps), ("initial_distance", st.initial_distance),
             ("max_distance", st.max_distance), ("status", str(st.status))]
    if eps > 0:
        ratio = st.max_distance / st.initial_distance
        lim = s.float("check.ratio", 10.0, True)
        items.append(("ratio", ratio))
        checks = [("orbital", ratio < lim, fmt(ratio))]
    else:
        lim = s.float("check.orbit_tol", 1e-6, True)
        checks = [("orbit", st.max_distance < lim, fmt(st.max_distance))]
    return c.report("stability", g, items, checks)


def cmd_blowup_demo(c: Ctx):
    s = c.s
    g, p = build_grid(s, "radial"), build_params(s)
    seed = bu.negative_energy_seed(g, p, s.float("blowup.margin", 0.1, True))
    cfg = build_evolve(s, blowup_K_factor=1e3)
    final, diags, status = dyn.evolve(seed, p, cfg)
    _write_run(c, diags, final, p, status.t, "blowup")
    rep = energy(seed, p)
    items = [("seed_E", rep.E), ("seed_M", rep.M), ("status", str(status)), ("t_stop", status.t),
             ("t_est", status.t_est), ("K_ratio", diags[-1].K / diags[0].K)]
    checks = [("negative_energy", rep.E < 0, fmt(rep.E)),
              ("blowup_flag", status.kind == "BlowupDetected", str(status))]
    return c.report("blowup-demo", g, items, checks)


def cmd_minimal_mass(c: Ctx):
    s = c.s
    g, p = build_grid(s, "radial"), build_params(s)
    gnr = gs.gn_constant(g, p)
    cfg = build_evolve(s, scheme="yoshida4")
    rep = bu.minimal_mass_experiment(gnr, s.float("minimal.T", 1.0, True), cfg, rgrid=g,
                                     K_growth=s.float("minimal.K_growth", 100.0, True),
                                     ball_radius=s.float("minimal.ball_radius", 0.2, True))
    io.write_csv(c.path("minimal-mass.csv"), dyn.CSV_COLUMNS, io.diagnostics_rows(rep.diags))
    io.write_csv(c.path("ball-mass.csv"), ("t", "ball_over_M_gs"),
                 [{"t": t, "ball_over_M_gs": b} for t, b in rep.ball_curve])
    items = [tuple(x.split(" = ", 1)) for x in rep.lines()]
    ex = rep.exponent
    checks = [("mass", rep.mass_error < 1e-8, fmt(rep.mass_error)),
              ("tracking", rep.tracking_error < 1e-4, fmt(rep.tracking_error)),
              ("exponent", ex is not None and abs(ex + 2) <= 0.1, fmt(ex)),
              ("concentration", rep.ball_final >= 0.95, fmt(rep.ball_final))]
    return c.report("minimal-mass", g, items, checks)


def cmd_scan(c: Ctx):
    s = c.s
    g, p, opts = build_grid(s), build_params(s), build_solver(s)
    vals = s.floats("scan.pairs", REQUIRED)
    if len(vals) % 4:
        raise ConfigError("scan.pairs needs groups of four numbers a1 b1 a2 b2", "scan.pairs")
    pairs = [((vals[i], vals[i + 1]), (vals[i + 2], vals[i + 3])) for i in range(0, len(vals), 4)]
    rows = gs.subadditivity_scan(pairs, g, p, opts, workers=sc.get_threads())
    rows = [dict(a1=r["p1"][0], b1=r["p1"][1], a2=r["p2"][0], b2=r["p2"][1],
                 I1=r["I1"], I2=r["I2"], I12=r["I12"], gap=r["gap"]) for r in rows]
    cols = ("a1", "b1", "a2", "b2", "I1", "I2", "I12", "gap")
    io.write_csv(c.path("subadditivity.csv"), cols, rows)
    checks = [(f"strict_{i}", r["gap"] < 0, fmt(r["gap"])) for i, r in enumerate(rows)]
    return c.report("scan-subadditivity", g, [("pairs", len(rows))], checks)


def cmd_check_virial(c: Ctx):
    s = c.s
    g, p = build_grid(s, "radial"), build_params(s)
    cfg = build_evolve(s)
    fp = build_data(s, g)
    final, diags, status = dyn.evolve(fp, p, cfg)
    _write_run(c, diags, final, p, status.t, "virial")
    E0 = diags[0].E
    target = bu.virial_second_rhs(fp, None, p)
    id_rel = abs(target - 16 * E0) / max(abs(16 * E0), 1e-300)
    ts = np.array([r.t for r in diags])
    V = np.array([r.variance for r in diags])
    Vp = np.array([r.virial_first for r in diags])
    h = np.diff(ts)
    uniform = np.allclose(h, h[0], rtol=1e-9, atol=0) if h.size else False
    worst_dd = worst_d1 = np.nan
    if uniform and V.size >= 3:
        dd = (V[2:] - 2 * V[1:-1] + V[:-2]) / h[0] ** 2
        worst_dd = float(np.max(np.abs(dd - 16 * E0)) / abs(16 * E0))
        d1 = (V[2:] - V[:-2]) / (2 * h[0])
        worst_d1 = float(np.max(np.abs(d1 - Vp[1:-1])) / max(np.abs(Vp).max(), 1e-300))
    tol = s.float("check.tol", 0.01, True)
    items = [("E0", E0), ("virial_second_rhs", target), ("identity_rel", id_rel),
             ("second_difference_rel", worst_dd), ("first_difference_rel", worst_d1), ("status", str(status))]
    checks = [("identity_16E", id_rel < 1e-8, fmt(id_rel)),
              ("second_difference", bool(worst_dd < tol), fmt(worst_dd))]
    return c.report("check-virial", g, items, checks)


def cmd_check_cutoffs(c: Ctx):
    s = c.s
    R = s.float("cutoff.R", 1.0, True)
    n = s.int("cutoff.samples", 10000, True)
    M = s.float("cutoff.mass", None)
    if M is None:
        M = gs.gn_constant(sc.RadialGrid(4, 4096, 20.0), PhysicalParams(0.5)).M_gs
    r = np.linspace(0, 3 * R, n)
    C, eps = bu.recommended_cutoff(M, R)
    items, checks = [("C", C), ("epsilon", eps), ("mass", M)], []
    for kind in (bu.THETA2CAP, bu.EXPLICIT):
        m = bu.cutoff_inequalities(bu.CutoffSpec(R, kind), r)
        items.append((f"{kind}_min_inequality", min(m)))
        checks.append((f"{kind}_inequalities", min(m) >= -1e-12, fmt(min(m))))
    ok, margin = bu.positivity_check(bu.CutoffSpec(R, bu.EXPLICIT, eps, C), r)
    bad, bmargin = bu.positivity_check(bu.CutoffSpec(R, bu.EXPLICIT, 10.0, C), r)
    items += [("positivity_margin", margin), ("positivity_margin_eps10", bmargin)]
    checks += [("positivity", ok, fmt(margin)), ("positivity_fails_eps10", not bad, fmt(bmargin))]
    grid = sc.RadialGrid(4, 16, 3 * R)
    return c.report("check-cutoffs", grid, items, checks)


COMMANDS = {"ground-state": cmd_ground_state, "gn-constant": cmd_gn_constant, "evolve": cmd_evolve,
            "stability": cmd_stability, "blowup-demo": cmd_blowup_demo, "minimal-mass": cmd_minimal_mass,
            "scan-subadditivity": cmd_scan, "check-virial": cmd_check_virial, "check-cutoffs": cmd_check_cutoffs}


def run_subcommand(name, cfg, out="."):
    """Run one subcommand on a parsed config dict; returns the exit status."""
    if name not in COMMANDS:
        raise ConfigError(f"unknown subcommand {name!r}", "subcommand")
    return COMMANDS[name](Ctx(cfg, out))


def main(argv=None):
    ap = argparse.ArgumentParser(prog="quadnls", description="quadratic NLS system experiments")
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", required=True)
    ap.add_argument("--out", default=".")
    ap.add_argument("--threads", type=int, default=None)
    a = ap.parse_args(argv)
    if a.threads is not None:
        if a.threads < 1:
            print("error: --threads must be >= 1", file=sys.stderr)
            return 2
        sc.set_threads(a.threads)
    try:
        cfg = io.read_config(a.config)
        return run_subcommand(a.subcommand, cfg, a.out)
    except ConfigError as exc:
        print(f"config error [{exc.field}]: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NonFinite as exc:
        rec = exc.last_record
        print(f"numeric failure: {exc}; last record t={fmt(rec.t)} M={fmt(rec.M)} E={fmt(rec.E)} K={fmt(rec.K)}",
              file=sys.stderr)
        return 3
    except QuadNLSError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
