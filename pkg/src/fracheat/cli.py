"""Command-line front end.

Subcommands: spectrum, apply, solve, sts, invharness, kernel.  Every
command reads one TOML experiment config (plus optional dotted-path
overrides like ``--grid.N_t=2048``), writes its tables into the output
directory, and finishes with a run record carrying content digests.

Exit codes: 0 success, 2 usage or config error, 3 numerical-quality
failure, 4 I/O error.
"""

import argparse
import os
import sys as _sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .balakrishnan import balakrishnan_apply
from .config import (build_grid, build_system, config_to_raw, load_config,
                     region_nodes)
from .errors import (ConstructionError, ContractError, NumericalError,
                     UsageError)
from .fileio import (load_field, run_started, save_field, save_json,
                     save_kernel_csv, save_multiplier_json,
                     save_table_csv, write_run_record)
from .harness import (ModelPairHarness, kernel_compare, make_sts,
                      moment_sequence, phi_eta)
from .heat import HeatKernelEvaluator
from .operators import (apply_H_minus_s, apply_Hs, frac_power,
                        heat_semigroup_apply, inv_frac_power, semigroup)
from .solve import bump_source, solve


def _parallel_map(fn, items, threads):
    if threads <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _outdir(cfg, args):
    out = cfg.output.directory
    out = os.environ.get("FRACHEAT_OUT", out)
    if args.out:
        out = args.out
    os.makedirs(out, exist_ok=True)
    return out


def _source_from_config(cfg, sys, grid):
    sc = cfg.source
    t_half = sc.t_halfwidth or cfg.grid.T / 2.0
    return bump_source(sys, grid, cfg.grid.T, center=sc.center,
                       radius=sc.radius, t_center=sc.t_center,
                       t_halfwidth=t_half, spatial_power=sc.spatial_power,
                       time_power=sc.time_power,
                       normalize=None if sc.mean_free else sc.normalize,
                       mean_free=sc.mean_free)


def cmd_spectrum(cfg, outdir, args):
    system = build_system(cfg)
    files = []
    path = os.path.join(outdir, "eigenvalues.csv")
    save_table_csv(path, ["k", "lambda"],
                   [(k, lam) for k, lam in enumerate(system.eigenvalues)])
    files.append(path)
    diag = {
        "K": system.K,
        "volume": system.volume,
        "max_gram_deviation": system.gram_deviation(),
        "lambda_1": float(system.eigenvalues[1]) if system.K > 1 else None,
        "n_nodes": system.n_nodes,
    }
    path = os.path.join(outdir, "orthonormality.json")
    save_json(path, diag)
    files.append(path)
    return files, 0


def cmd_apply(cfg, outdir, args):
    system = build_system(cfg)
    grid = build_grid(cfg)
    if not cfg.apply.input:
        raise UsageError("apply.input must name a field file base path")
    field = load_field(cfg.apply.input, system)
    if field.grid != grid:
        raise UsageError("apply.input grid does not match [grid] block")
    s = cfg.operator.s
    op = cfg.apply.operator
    files = []
    code = 0
    if op == "Hs":
        out = apply_Hs(field, s)
        mult = frac_power(s)
    elif op == "Hinv":
        out = apply_H_minus_s(field, s)
        mult = inv_frac_power(s, grid.drho)
    elif op == "semigroup":
        out = heat_semigroup_apply(field, cfg.apply.tau)
        mult = semigroup(cfg.apply.tau)
    else:
        out = balakrishnan_apply(field, s)
        mult = frac_power(s)
        oracle = apply_Hs(field, s)
        dev = (out - oracle).norm() / max(oracle.norm(), 1e-300)
        path = os.path.join(outdir, "balakrishnan_check.json")
        save_json(path, {"deviation_vs_multiplier": dev})
        files.append(path)
        if dev > 1e-6:
            code = 3
    if cfg.apply.dump_symbol:
        path = os.path.join(outdir, "symbol_diagnostics.json")
        save_multiplier_json(path, mult, system.eigenvalues,
                             grid.frequencies())
        files.append(path)
    files.extend(save_field(out, os.path.join(outdir, "output_field")))
    return files, code


def cmd_solve(cfg, outdir, args):
    system = build_system(cfg)
    grid = build_grid(cfg)
    src = _source_from_config(cfg, system, grid)
    report = solve(src, cfg.operator.s)
    files = list(save_field(report.solution, os.path.join(outdir, "solution")))
    path = os.path.join(outdir, "report.json")
    save_json(path, {
        "residual_norm": report.residual_norm,
        "residual_rel": report.residual_rel,
        "past_violation_norm": report.past_violation_norm,
        "coercivity_ratio": report.coercivity_ratio,
        "f_norm": report.f_norm,
        "flagged": report.flagged,
    })
    files.append(path)
    return files, (3 if report.flagged else 0)


def cmd_sts(cfg, outdir, args):
    system = build_system(cfg)
    grid = build_grid(cfg)
    patch = region_nodes(system, cfg.harness.patch, "patch")
    sts = make_sts(system, grid, cfg.operator.s, cfg.grid.T, patch)
    src = _source_from_config(cfg, system, grid)
    response = sts(src)
    tidx = sts.window_time_indices
    rows = []
    for i, node in enumerate(sts.patch):
        for j, tj in enumerate(tidx):
            rows.append((node, int(tj), float(response[i, j].real),
                         float(response[i, j].imag)))
    path = os.path.join(outdir, "sts_response.csv")
    save_table_csv(path, ["node", "time_index", "re", "im"], rows)
    files = [path]
    path = os.path.join(outdir, "sts_meta.json")
    save_json(path, {"patch": list(sts.patch),
                     "time_indices": [int(t) for t in tidx],
                     "horizon": cfg.grid.T, "s": cfg.operator.s})
    files.append(path)
    return files, 0


def cmd_invharness(cfg, outdir, args):
    if len(cfg.manifolds) != 2:
        raise UsageError("invharness needs manifold1 and manifold2 blocks")
    sys1 = build_system(cfg, 0)
    sys2 = build_system(cfg, 1)
    grid = build_grid(cfg)
    h = cfg.harness
    p1 = region_nodes(sys1, h.patch, "patch")
    p2 = region_nodes(sys2, h.patch, "patch")
    pair = ModelPairHarness(sys1=sys1, sys2=sys2, grid=grid,
                            s=cfg.operator.s, horizon=cfg.grid.T,
                            patch1=tuple(p1), patch2=tuple(p2))
    o1_nodes = set(region_nodes(sys1, h.omega1, "omega1").tolist())
    o2_nodes = set(region_nodes(sys1, h.omega2, "omega2").tolist())
    o1 = [i for i, n in enumerate(pair.patch1) if n in o1_nodes]
    o2 = [i for i, n in enumerate(pair.patch2) if n in o2_nodes]
    if not o1 or not o2:
        raise UsageError("harness.omega1/omega2 must lie inside the patch")

    src = _source_from_config(cfg, sys1, grid)
    positions = []
    lookup = {n: i for i, n in enumerate(pair.patch1)}
    for n in src.node_indices:
        if n not in lookup:
            raise UsageError("source support must lie inside harness.patch")
        positions.append(lookup[n])

    n_window = len(np.nonzero(grid.open_mask((-cfg.grid.T, cfg.grid.T)))[0])
    probe_t = h.probe_time_index or n_window // 2
    probe = (o2[len(o2) // 2], probe_t)

    rep = moment_sequence(pair, np.asarray(src.samples), positions,
                          src.t_interval, h.m_max, probe, o1, o2,
                          stencil_order=h.stencil_order)
    etas = np.geomspace(h.eta_lo, h.eta_hi, h.eta_n)
    phi = phi_eta(pair, np.asarray(src.samples), positions, src.t_interval,
                  probe, etas, m_max=h.m_max)
    taus = np.geomspace(h.tau_lo, h.tau_hi, h.tau_n)
    report = kernel_compare(pair, taus, moment_report=rep, phi_report=phi,
                            source_scale=float(rep.source_scales[0]),
                            threshold_distinguished=h.threshold_distinguished,
                            threshold_consistent=h.threshold_consistent,
                            threads=args.threads)

    files = []
    path = os.path.join(outdir, "moments.csv")
    save_table_csv(path, ["m", "moment_abs_at_probe", "moment_sup",
                          "source_scale"],
                   [(m, abs(rep.moments_at_probe[m]), rep.moment_sups[m],
                     rep.source_scales[m]) for m in range(h.m_max + 1)])
    files.append(path)
    path = os.path.join(outdir, "phi_eta.csv")
    save_table_csv(path, ["eta", "re", "im", "abs"],
                   [(float(e), v.real, v.imag, abs(v))
                    for e, v in zip(phi.etas, phi.samples)])
    files.append(path)
    path = os.path.join(outdir, "kernel_diff.csv")
    save_table_csv(path, ["tau", "sup_diff"],
                   list(zip(report.taus, report.kernel_sup)))
    files.append(path)
    path = os.path.join(outdir, "report.json")
    save_json(path, {
        "verdict": report.verdict,
        "kernel_sup_max": float(report.kernel_sup.max()),
        "moment_sup_max": float(rep.moment_sups.max()),
        "phi_max": report.phi_max,
        "phi_moment_max": report.phi_moment_max,
        "threshold_distinguished": report.threshold_distinguished,
        "threshold_consistent": report.threshold_consistent,
        "envelope_fit": phi.envelope,
    })
    files.append(path)
    return files, 0


def cmd_kernel(cfg, outdir, args):
    system = build_system(cfg)
    h = cfg.harness
    try:
        patch = region_nodes(system, h.patch, "patch")
    except UsageError:
        patch = np.arange(system.n_nodes)
    taus = np.geomspace(h.tau_lo, h.tau_hi, h.tau_n)
    ev = HeatKernelEvaluator(system)

    def _vals(tau):
        import warnings
        from .errors import TruncationWarning
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TruncationWarning)
            return ev.values(patch, patch, tau)

    values = _parallel_map(_vals, taus, args.threads)
    if system.dim == 1:
        coords = system.nodes[patch, 0]
    else:
        coords = patch
    path = os.path.join(outdir, "kernel.csv")
    save_kernel_csv(path, coords, coords, taus, values)
    return [path], 0


COMMANDS = {
    "spectrum": cmd_spectrum,
    "apply": cmd_apply,
    "solve": cmd_solve,
    "sts": cmd_sts,
    "invharness": cmd_invharness,
    "kernel": cmd_kernel,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fracheat",
        description="Spectral toolkit for the fractional parabolic operator "
                    "on closed manifolds")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("config", help="TOML experiment config")
    parser.add_argument("--out", default=None, help="output directory "
                        "(overrides config and FRACHEAT_OUT)")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker threads (1 = serial, bit-reproducible)")
    return parser


def main(argv=None):
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    overrides = []
    for item in extra:
        if item.startswith("--") and "=" in item:
            overrides.append(item[2:])
        else:
            parser.error("unrecognized argument %r" % item)
    try:
        if args.threads < 1:
            raise UsageError("--threads must be at least 1")
        cfg = load_config(args.config, overrides)
        outdir = _outdir(cfg, args)
        started = run_started()
        files, code = COMMANDS[args.command](cfg, outdir, args)
        record = write_run_record(outdir, config_to_raw(cfg), files,
                                  __version__, started)
        if code == 0:
            print("wrote %d files to %s" % (len(files) + 1, outdir))
        else:
            print("completed with numerical-quality flag (exit %d); "
                  "see %s" % (code, record))
        return code
    except UsageError as exc:
        print("usage error: %s" % exc, file=_sys.stderr)
        return 2
    except (ContractError, ConstructionError) as exc:
        print("usage error: %s" % exc, file=_sys.stderr)
        return 2
    except NumericalError as exc:
        print("numerical failure: %s %s" % (exc, exc.info), file=_sys.stderr)
        return 3
    except OSError as exc:
        print("i/o error: %s" % exc, file=_sys.stderr)
        return 4


if __name__ == "__main__":
    raise SystemExit(main())
