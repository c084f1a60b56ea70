"""Command-line front end.

Data go to files under the output directory; short human-readable reports
go to stdout and diagnostics to stderr. Exit status is 0 on success, 2 for
usage and configuration errors and 1 for failures during a run.
"""

import argparse
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import AUTO, ConfigError, RunConfig

log = logging.getLogger("wgm_upconvert")


class UsageError(Exception):
    pass


# -------------------------------------------------------------- helpers


def _outdir(cfg):
    d = Path(cfg["output"]["directory"])
    d.mkdir(parents=True, exist_ok=True)
    return d


def _scan(cfg, threads, keep=False):
    from .fem import dispersion_scan

    fam = cfg["solver"]["family"]
    s = cfg["solver"]
    return dispersion_scan(
        cfg.geometry(),
        cfg.indices(),
        cfg.L_range(),
        target_ghz=cfg.target_ghz(),
        family=None if fam == AUTO else fam,
        edge_length=cfg.edge_length(),
        margin=cfg.margin(),
        rim_segments=s["rim_segments"],
        threads=threads,
        count=s["eig_count"],
        tol=s["eig_tol"],
        penalty=s["penalty"],
        order=int(s["element_order"]),
        keep_solutions=keep,
    )


def _lines(cfg):
    from .phasematch import ANTI_STOKES, STOKES, PhaseMatchLine

    g = cfg.geometry()
    ph = cfg["phasematch"]
    wl = ph["pump_wavelength_nm"] * 1e-9
    mat = cfg.ring_record()
    if ph["conversion_type"] == "I":
        return [PhaseMatchLine.type_one(g, mat, wl, cfg.branch())]
    branches = [ANTI_STOKES, STOKES] if ph["branch"] == AUTO else [cfg.branch()]
    return [PhaseMatchLine.type_two(g, mat, wl, b, ph["pump_polarization"]) for b in branches]


def _tolerance(cfg):
    t = cfg["phasematch"]["tolerance_mhz"]
    if t == "min":
        return None
    if t == "microwave":
        return "microwave"
    return 2 * math.pi * t * 1e6


# -------------------------------------------------------------- commands


def cmd_design_rim(cfg, args):
    from .geometry import design_rim

    g = cfg.geometry()
    if args.cylindrical:
        rho = math.inf
    else:
        rho = design_rim(g, args.prism or cfg["geometry"]["prism"]).rho
    out = _outdir(cfg) / "rim.csv"
    with open(out, "w") as fh:
        fh.write("R_um,rho_um,rho_over_R\n")
        fh.write(f"{g.R * 1e6:.3f},{rho * 1e6:.3f},{rho / g.R:.6f}\n")
    if math.isinf(rho):
        print("rho = inf (cylindrical rim)")
    else:
        print(f"rho = {rho * 1e6:.0f} um, rho/R = {rho / g.R:.3f}")
    return 0


def cmd_dispersion(cfg, args):
    table = _scan(cfg, args.threads)
    out = _outdir(cfg)
    table.to_csv(out / "dispersion.csv")
    fams = sorted({r.family for r in table.rows if r.family})
    print(f"{len(table)} rows, family {'/'.join(fams)}, written to {out / 'dispersion.csv'}")
    for r in table.rows:
        if r.flags:
            print(f"L_c={r.L_c}: {', '.join(r.flags)}", file=sys.stderr)
    if cfg["output"]["svg"]:
        from .svg import line_plot

        L = table.L_c
        series = [("computed", L, table.omega / (2e9 * math.pi), "marker")]
        for line in _lines(cfg):
            series.append((f"matching line ({line.branch})", L, line.omega(L, 0.0) / (2e9 * math.pi), "line"))
        line_plot(series, "L_c", "f (GHz)", "fundamental ring mode", path=out / "dispersion.svg")
    return 0


def cmd_phasematch(cfg, args):
    from .phasematch import MATCH_HEADER, TYPE_II, envelope_matches, find_matches, matches_to_csv

    table = _scan(cfg, args.threads)
    cv = cfg["conversion"]
    matches = []
    notes = []
    for line in _lines(cfg):
        found = find_matches(
            table, line, _tolerance(cfg), Q_M=cv["q_microwave"], Q=cv["q_optical"],
            max_bias_V=cfg["phasematch"]["max_bias_v"],
        )
        matches += found
        if line.conversion_type == TYPE_II and not found:
            cand = envelope_matches(line, cfg.geometry(), cfg.indices()["ring"], max_bias_V=cfg["phasematch"]["max_bias_v"])
            offset = line.offset / (2 * math.pi * 1e12)
            notes.append(
                f"{line.branch}: birefringence offset {offset:+.3f} THz; no match in L_c "
                f"{table.L_c.min()}..{table.L_c.max()}"
                + ("; no L_c <= 200 can reach the guided band" if len(cand) == 0 else f"; reachable L_c exist near {cand[0]}..{cand[-1]}")
            )
    matches.sort(key=lambda m: (abs(m.detuning), m.L_c))
    out = _outdir(cfg)
    matches_to_csv(matches, out / "matches.csv")
    if matches:
        print(",".join(MATCH_HEADER))
        for m in matches:
            print(",".join(m.csv_row()))
    else:
        print("no phase matching found")
    for n in notes:
        print(n)
    return 0


def _conversion_mode(cfg):
    from .constants import Frequency
    from .fem import fundamental_mode
    from .geometry import cross_section_profile, generate_mesh

    s = cfg["solver"]
    L = cfg.conversion_L()
    L0 = cfg.L_range()[len(cfg.L_range()) // 2]
    target = cfg.target_ghz() * L / L0
    profile = cross_section_profile(
        cfg.geometry(), rim_segments=s["rim_segments"], margin=cfg.margin(), target_frequency_hz=target * 1e9
    )
    mesh = generate_mesh(profile, cfg.conversion_edge())
    sol = fundamental_mode(
        mesh, cfg.indices(), L, Frequency.from_ghz(0.9 * target), cfg.conversion_family(),
        s["eig_count"], s["eig_tol"], s["penalty"], int(s["element_order"]),
    )
    if sol is None:
        raise RuntimeError(f"no ring-guided mode of family {cfg.conversion_family()!r} at L_c={L}")
    return sol


def cmd_efficiency(cfg, args):
    from .conversion import efficiency_budget

    sol = _conversion_mode(cfg)
    cv, ph = cfg["conversion"], cfg["phasematch"]
    budget = efficiency_budget(
        sol,
        cfg.ring_record(),
        ph["conversion_type"],
        Q=cv["q_optical"],
        Q_M=cv["q_microwave"],
        P0=cv["pump_power_mw"] * 1e-3,
        P_M=cv["signal_power_w"],
        depth=cv["locus_depth_um"] * 1e-6,
        pump_wavelength=ph["pump_wavelength_nm"] * 1e-9,
        component=cfg.conversion_component(),
        weighting=cv["weighting"],
    )
    out = _outdir(cfg)
    text = budget.report()
    with open(out / "efficiency.csv", "w", newline="") as fh:
        fh.write(text)
    print(f"mode L_c={sol.L_c} f={sol.f_ghz:.4f} GHz family={sol.family}")
    sys.stdout.write(text)
    print(f"unity-efficiency pump: {budget.P0_unity * 1e3:.1f} mW")
    if cfg["output"]["svg"]:
        from .svg import field_map

        comp = {"r": 0, "phi": 1, "z": 2}.get(cfg.conversion_component())
        vals = np.abs(sol.field[:, comp]) if comp is not None else np.linalg.norm(sol.field, axis=1)
        name = cfg.conversion_component()
        field_map(sol.mesh.nodes, sol.mesh.triangles, vals, f"|E_{name}|, L_c={sol.L_c}", path=out / "field.svg")
    return 0


def _load_series(cfg, paths):
    from .fem import dispersion_scan
    from .spectra import SeriesItem, fit_spectrum, label_modes, load_spectrum

    sp = cfg["spectrum"]
    base = cfg.geometry()
    mid = 0.5 * (sp["r_in_min_mm"] + sp["r_in_max_mm"]) * 1e-3
    series = []
    for p in paths:
        trace = load_spectrum(p)
        meta = trace.metadata
        if "R_m" in meta:
            R = float(meta["R_m"])
        elif "r_outer_mm" in meta:
            R = float(meta["r_outer_mm"]) * 1e-3
        else:
            raise UsageError(f"{p}: needs a '# R_m = ...' or '# r_outer_mm = ...' metadata line")
        fits = sorted(fit_spectrum(trace, sp["prominence"]), key=lambda f: f.f0)
        if not fits:
            raise RuntimeError(f"{p}: no dips found")
        f0 = [f.f0 for f in fits]
        if "L_c" in meta:
            Ls = [int(x) for x in str(meta["L_c"]).replace(";", " ").split()]
            if len(Ls) != len(f0):
                raise UsageError(f"{p}: {len(Ls)} labels in metadata for {len(f0)} fitted dips")
        else:
            # label against the interval midpoint model on the coarse mesh
            from dataclasses import replace

            g = replace(base, R=R, R_in=mid, post_outer_radius=min(base.post_outer_radius, mid))
            table = dispersion_scan(
                g, cfg.indices(), cfg.L_range(), target_ghz=cfg.target_ghz(), edge_length=sp["fit_edge_um"] * 1e-6
            )
            Ls = [a.L_c for a in label_modes(fits, table, strict=sp["strict_labels"])]
        series.append(SeriesItem(R, tuple(f0), tuple(Ls)))
        print(f"{p}: R = {R * 1e3:.4f} mm, dips " + ", ".join(f"{f:.3f} GHz (L_c={L})" for f, L in zip(f0, Ls)))
    return series


def cmd_spectrum(cfg, args):
    from .spectra import coupling_contrast_report, fit_spectrum, label_modes, load_spectrum, report_csv

    out = _outdir(cfg)
    sp = cfg["spectrum"]
    if args.action == "fit-geometry":
        from .spectra import fit_geometry

        if args.free != "r-in":
            raise UsageError("only --free r-in is supported")
        lo, hi = args.interval or (sp["r_in_min_mm"] * 1e-3, sp["r_in_max_mm"] * 1e-3)
        series = _load_series(cfg, args.data)
        fam = cfg["solver"]["family"]
        fit = fit_geometry(
            series, cfg.geometry(), cfg.indices(), (lo, hi), edge_length=sp["fit_edge_um"] * 1e-6,
            family=None if fam == AUTO else fam, xatol=sp["fit_xatol_um"] * 1e-6,
            refine_edge=cfg.refine_edge(),
        )
        with open(out / "geometry_fit.csv", "w", newline="") as fh:
            fh.write("R_in_mm,objective_GHz2\n")
            for r, j in fit.trajectory:
                fh.write(f"{r * 1e3:.6f},{j:.6e}\n")
        print(f"R_in = {fit.R_in * 1e3:.4f} mm +- {fit.uncertainty * 1e3:.4f} mm "
              f"(misfit {fit.objective:.3g} GHz^2, {fit.n_evaluations} evaluations)")
        if fit.refined_objective is not None:
            print(f"refined misfit {fit.refined_objective:.3g} GHz^2 at edge {cfg.refine_edge() * 1e6:.1f} um")
        for f in fit.flags:
            print(f"warning: {f}", file=sys.stderr)
        return 0

    if len(args.data) != 1:
        raise UsageError(f"spectrum {args.action} takes one data file")
    trace = load_spectrum(args.data[0])
    fits = fit_spectrum(trace, sp["prominence"])
    if not fits:
        raise RuntimeError(f"{args.data[0]}: no dips found")
    labels = None
    if args.action == "label":
        if not args.dispersion:
            raise UsageError("spectrum label needs --dispersion CSV")
        from .fem import DispersionTable

        labels = label_modes(fits, DispersionTable.from_csv(args.dispersion), strict=sp["strict_labels"])
        for a in labels:
            if a.flags:
                print(f"dip {a.f0:.4f} GHz: {', '.join(a.flags)}", file=sys.stderr)
    name = "spectrum_labels.csv" if labels else "spectrum_fit.csv"
    text = report_csv(fits, labels, out / name)
    sys.stdout.write(text)
    rep = coupling_contrast_report(fits)
    print(f"max contrast C = {rep['max_contrast']:.3f} at {rep['best'].f0:.4f} GHz (Q = {rep['best'].Q:.1f})")
    if cfg["output"]["svg"]:
        from .spectra import lorentzian_dip
        from .svg import line_plot

        model = np.ones_like(trace.frequency)
        for f in fits:
            model -= 1.0 - lorentzian_dip(trace.frequency, f.f0, f.linewidth, f.C)
        line_plot(
            [("measured", trace.frequency, trace.transmission, "line"), ("fit", trace.frequency, model, "line")],
            "f (GHz)", "transmission", "", path=out / "spectrum.svg",
        )
    return 0


def cmd_dynamics(cfg, args):
    from .constants import wavelength_to_omega
    from .conversion import photon_efficiency, xi_factor
    from .dynamics import ModeAmplitudes, simulate, smallsignal_efficiency

    d = cfg["dynamics"]
    g = 1.0
    state = ModeAmplitudes(a=math.sqrt(d["pump_photons"]), c=math.sqrt(d["signal_photons"]))
    T = 2 * math.pi * d["coupling_periods"] / g
    ts = simulate(state, g, T, tolerance=d["rel_tolerance"], samples=d["samples"])
    out = _outdir(cfg)
    ts.to_csv(out / "dynamics.csv")
    drift = ts.invariant_drift()
    ok1 = drift <= 1e-9
    print(f"invariants conserved: max drift {drift:.1e} over {d['coupling_periods']:g} coupling periods "
          f"({'pass' if ok1 else 'FAIL'})")

    cv = cfg["conversion"]
    w0 = wavelength_to_omega(cfg["phasematch"]["pump_wavelength_nm"] * 1e-9)
    wc = 2 * math.pi * d["check_signal_ghz"] * 1e9
    gc = 2 * math.pi * d["check_coupling_hz"]
    P0 = cv["pump_power_mw"] * 1e-3
    xi = xi_factor(gc, cv["q_optical"], cv["q_microwave"], w0, wc)
    P_M = d["check_saturation"] / (2 * xi**2)
    ref = photon_efficiency(xi, P0, w0, wc)
    got = smallsignal_efficiency(gc, cv["q_optical"], cv["q_microwave"], w0, wc, P0, P_M)
    err = abs(got / ref - 1)
    ok2 = err <= 0.01
    print(f"small-signal agreement: {100 * err:.2f}% (steady state {got:.6g}, closed form {ref:.6g}) "
          f"({'pass' if ok2 else 'FAIL'})")
    if cfg["output"]["svg"]:
        from .svg import line_plot

        n = np.abs(ts.y) ** 2
        line_plot(
            [(name, ts.t, n[:, k], "line") for k, name in enumerate(("|a|^2", "|b+|^2", "|b-|^2", "|c|^2"))],
            "t (1/g)", "photons", "lossless evolution", path=out / "dynamics.svg",
        )
    return 0 if ok1 and ok2 else 1


def cmd_mesh(cfg, args):
    from .geometry import cross_section_profile, generate_mesh
    from .vtk import write_unstructured_grid

    s = cfg["solver"]
    profile = cross_section_profile(
        cfg.geometry(), rim_segments=s["rim_segments"], margin=cfg.margin(), target_frequency_hz=cfg.target_ghz() * 1e9
    )
    edge = args.edge_um * 1e-6 if args.edge_um else cfg.edge_length()
    mesh = generate_mesh(profile, edge)
    out = _outdir(cfg)
    write_unstructured_grid(
        out / "mesh.vtk", mesh.nodes, mesh.triangles, cell_data={"region": mesh.region.astype(float)},
        title=f"ring cross-section, edge {edge * 1e6:.1f} um",
    )
    print(f"{mesh.n_nodes} nodes, {mesh.n_triangles} triangles written to {out / 'mesh.vtk'}")
    if args.field:
        from .fem import export_vtk

        sol = _conversion_mode(cfg)
        export_vtk(sol, out / "field.vtk")
        print(f"field of L_c={sol.L_c} ({sol.f_ghz:.4f} GHz) written to {out / 'field.vtk'}")
    return 0


# -------------------------------------------------------------- parser


def _interval(text):
    return float(text)


def build_parser():
    p = argparse.ArgumentParser(prog="wgm-upconvert", description="Resonant microwave-to-optical up-converter design.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--config", metavar="PATH", help="INI run configuration")
    p.add_argument("--out", metavar="DIR", help="output directory (overrides [output] directory)")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1, metavar="N")
    p.add_argument("--svg", action="store_true", help="also write SVG plots")
    p.add_argument("--print-config", action="store_true", help="print the resolved configuration and exit")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override one config field")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command")

    q = sub.add_parser("design-rim", help="rim curvature for prism coupling")
    q.add_argument("--prism", help="prism material (default from config)")
    q.add_argument("--cylindrical", action="store_true", help="report a cylindrical rim")
    q.set_defaults(func=cmd_design_rim)

    sub.add_parser("dispersion", help="fundamental ring-mode dispersion").set_defaults(func=cmd_dispersion)
    sub.add_parser("phasematch", help="phase-matching table").set_defaults(func=cmd_phasematch)
    sub.add_parser("efficiency", help="conversion efficiency budget").set_defaults(func=cmd_efficiency)

    q = sub.add_parser("spectrum", help="transmission spectrum analysis")
    q.add_argument("action", choices=["fit", "label", "fit-geometry"])
    q.add_argument("data", nargs="+", help="spectrum CSV file(s)")
    q.add_argument("--dispersion", metavar="CSV", help="dispersion table for labelling")
    q.add_argument("--free", default="r-in", help="geometry parameter to fit (r-in)")
    q.add_argument("--interval", nargs=2, type=_interval, metavar=("LO_M", "HI_M"), help="search interval in metres")
    q.set_defaults(func=cmd_spectrum)

    sub.add_parser("dynamics", help="coupled-mode checks").set_defaults(func=cmd_dynamics)

    q = sub.add_parser("mesh", help="mesh utilities")
    q.add_argument("action", choices=["export"])
    q.add_argument("--edge-um", type=float, help="target edge length in the ring")
    q.add_argument("--field", action="store_true", help="also export the conversion mode field")
    q.set_defaults(func=cmd_mesh)
    return p


def _load_config(args):
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig.defaults()
    for item in args.set:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise UsageError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        lhs, value = item.split("=", 1)
        section, key = lhs.split(".", 1)
        if section not in cfg.values or key not in cfg.values[section]:
            raise ConfigError(section, key, "unknown field")
        cfg.set(section, key, value.strip())
    if args.out:
        cfg.set("output", "directory", args.out)
    if args.svg:
        cfg.set("output", "svg", "yes")
    cfg.validate()
    return cfg


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr
    )
    try:
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        cfg = _load_config(args)
        if args.print_config:
            sys.stdout.write(cfg.resolved().to_text())
            return 0
        if not args.command:
            parser.print_usage(sys.stderr)
            return 2
        return args.func(cfg, args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # every failure is reported by name, never as a traceback
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        if args.verbose:
            raise
        return 1


if __name__ == "__main__":
    sys.exit(main())
