"""Experiment runner for Schottky limit-set measurements.

Subcommands
-----------
validate GROUP    ping-pong certificate for a group file (prints the report)
delta             critical-exponent estimate       -> delta.csv + delta_summary.txt
measure           Patterson-Sullivan atom table    -> measure.csv + measure_summary.txt
fourier           decay scan, L2 average, exceptional set
                                                   -> fourier.csv [+ .svg] + fourier_summary.txt
nonconc           affine non-concentration profile -> nonconc.csv
holonomy          closed-form factorization property suite
                                                   -> holonomy.csv + report on stdout

``fourier`` and ``nonconc`` read their input measure from ``[measure] file =
PATH`` when given, and otherwise run the full pipeline on ``[group] file``
(delta estimate, then the orbit measure at exponent delta + epsilon).

Determinism: identical config + seed + thread setting produces byte-identical
output files; every file opens with '# key=value' comments carrying the
config hash, package version, and seed.  Threads resolve as the --threads
flag, else the LIMSET_THREADS environment variable, else the config value.
The SVG plot is rebuilt from the emitted CSV, not from in-memory state.

Exit codes: 0 success; 2 validation failure (malformed file, overlapping
balls, failed certificate, bad parameter); 3 numerical failure (degenerate
configuration, divergent exponent, failed property suite); 4 I/O failure.

LIMSET_BUG_TAU_SIGN=1 flips the sign of the closed-form flow component
inside the holonomy suite: a deliberate negative control (the suite must
then fail).  It affects nothing else.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from limset import (__version__, _io, core, dimension, fourier, holonomy,
                    measure, nonconc, schottky)

_EXC_DELTA_EXP = 0.1    # threshold exponent reported by cmd_fourier


# ---------------------------------------------------------------------------
# Shared plumbing
# ---------------------------------------------------------------------------

def _threads_for(args, cfg=None):
    if getattr(args, "threads", None) is not None:
        return max(1, args.threads)
    env = os.environ.get("LIMSET_THREADS")
    if env is not None:
        return max(1, int(env))
    return max(1, cfg.threads) if cfg is not None else 1


def _load_config(args):
    cfg = _io.parse_experiment_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    if getattr(args, "svg", False):
        cfg.svg = True
    return cfg


def _out_dir(cfg):
    os.makedirs(cfg.out_dir, exist_ok=True)
    return cfg.out_dir


def _meta(command, config_hash, seed, threads, **extra):
    meta = {
        "command": command,
        "config": config_hash if config_hash else "none",
        "version": __version__,
        "seed": int(seed),
        "threads": int(threads),
    }
    meta.update(extra)
    return meta


def _write_summary(path, meta, lines):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key in sorted(meta):
            fh.write(f"# {key}={meta[key]}\n")
        for line in lines:
            fh.write(line + "\n")


def _input_measure(cfg, threads):
    """(measure, delta-or-None, source label) from the config.

    A nonempty [measure] file short-circuits the pipeline and loads the atom
    table directly; otherwise the group file is loaded and run through the
    delta estimate and the orbit-measure construction.
    """
    if cfg.measure_file:
        path = cfg.resolve(cfg.measure_file)
        mu, meta = _io.read_measure_file(path)
        delta = float(meta["delta"]) if "delta" in meta else None
        return mu, delta, os.path.basename(path)
    group = _io.load_group_file(cfg.resolve(cfg.group_file))
    est = dimension.estimate_delta(group, n_max=cfg.delta_n_max,
                                   tol=cfg.delta_tol, threads=threads)
    mu = measure.patterson_orbit_measure(group, est.delta,
                                         epsilon=cfg.measure_epsilon,
                                         n_max=cfg.measure_n_max)
    return mu, est.delta, group.name


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_validate(args):
    group = _io.load_group_file(args.group)
    report = group.validate()
    print(report)
    return 0 if report.ok else 2


def cmd_delta(args):
    cfg = _load_config(args)
    threads = _threads_for(args, cfg)
    out = _out_dir(cfg)
    group = _io.load_group_file(cfg.resolve(cfg.group_file))
    meta = _meta("delta", cfg.sha256, cfg.seed, threads, group=group.name)
    summary_path = os.path.join(out, "delta_summary.txt")
    try:
        est = dimension.estimate_delta(group, n_max=cfg.delta_n_max,
                                       tol=cfg.delta_tol, threads=threads)
    except core.DegenerateConfigurationError as exc:
        lines = ["status = degenerate", f"reason = {exc}"]
        _write_summary(summary_path, meta, lines)
        print("\n".join(lines))
        return 3
    trunc = dimension.shell_sums(group, est.delta, cfg.delta_n_max,
                                 threads=threads)
    rows = [(int(n), est.delta, float(trunc.values[n]), float(est.per_level[n - 1]))
            for n in est.levels]
    _io.write_csv(os.path.join(out, "delta.csv"),
                  ["n", "s", "a_n", "delta_n"], rows, meta)
    lines = [
        "status = ok",
        f"delta = {_io.fmt(est.delta)}",
        f"spread = {_io.fmt(est.spread)}",
        f"n_max = {est.n_max}",
        f"words = {int(est.counts.sum())}",
    ]
    _write_summary(summary_path, meta, lines)
    print("\n".join(lines))
    return 0


def cmd_measure(args):
    cfg = _load_config(args)
    threads = _threads_for(args, cfg)
    out = _out_dir(cfg)
    group = _io.load_group_file(cfg.resolve(cfg.group_file))
    est = dimension.estimate_delta(group, n_max=cfg.delta_n_max,
                                   tol=cfg.delta_tol, threads=threads)
    mu = measure.patterson_orbit_measure(group, est.delta,
                                         epsilon=cfg.measure_epsilon,
                                         n_max=cfg.measure_n_max)
    s = est.delta + cfg.measure_epsilon
    meta = _meta("measure", cfg.sha256, cfg.seed, threads, group=group.name,
                 delta=_io.fmt(est.delta), epsilon=_io.fmt(cfg.measure_epsilon),
                 n_max=int(cfg.measure_n_max))
    _io.write_measure_file(os.path.join(out, "measure.csv"), mu, meta)
    residual = max(measure.conformality_residual(mu, g.elem, s)
                   for g in group.gens)
    lines = [
        f"atoms = {mu.n}",
        f"mass = {_io.fmt(mu.mass)}",
        f"delta = {_io.fmt(est.delta)}",
        f"exponent = {_io.fmt(s)}",
        f"conformality_residual = {_io.fmt(residual)}",
    ]
    _write_summary(os.path.join(out, "measure_summary.txt"), meta, lines)
    print("\n".join(lines))
    return 0


def cmd_fourier(args):
    cfg = _load_config(args)
    threads = _threads_for(args, cfg)
    out = _out_dir(cfg)
    mu, delta, source = _input_measure(cfg, threads)
    count = int(np.floor(np.log2(cfg.fourier_shell_max / cfg.fourier_shell_min)
                         + 1e-9)) + 1
    spec = fourier.FrequencySpec(mode="shell", r0=cfg.fourier_shell_min,
                                 ratio=2.0, count=count,
                                 samples_per_shell=cfg.fourier_samples_per_shell,
                                 grid_step=cfg.fourier_grid_step)
    report = fourier.decay_scan(mu, spec, seed=cfg.seed, threads=threads)
    l2 = fourier.l2_average(mu, cfg.fourier_grid_max,
                            grid_step=cfg.fourier_grid_step, threads=threads)
    exc_set = fourier.exceptional_set_measure(mu, cfg.fourier_grid_max,
                                              _EXC_DELTA_EXP,
                                              grid_step=cfg.fourier_grid_step,
                                              threads=threads)
    meta = _meta("fourier", cfg.sha256, cfg.seed, threads, source=source)
    if delta is not None:
        meta["delta"] = _io.fmt(delta)
    block = report.sample_values.shape[0] // report.shell_radii.shape[0]
    nominal = np.repeat(report.shell_radii, block)
    rows = list(zip(nominal.tolist(), report.sample_dir_index.tolist(),
                    report.sample_values.real.tolist(),
                    report.sample_values.imag.tolist(),
                    np.abs(report.sample_values).tolist()))
    csv_path = os.path.join(out, "fourier.csv")
    _io.write_csv(csv_path, ["shell_radius", "direction_index", "re", "im", "abs"],
                  rows, meta)
    lines = [
        "{",
        f'  "kappa": {_io.fmt(report.kappa)},',
        f'  "fit_residual": {_io.fmt(report.fit_residual)},',
        f'  "resolution_cap": {_io.fmt(report.resolution_cap)},',
        f'  "floored": {str(report.floored).lower()},',
        f'  "shells_kept": {report.shell_radii.shape[0]},',
        f'  "truncated_shells": {report.truncated_shells},',
        f'  "l2_average": {_io.fmt(l2.value)},',
        f'  "l2_radius": {_io.fmt(l2.radius)},',
        f'  "l2_coarse": {str(l2.coarse).lower()},',
        f'  "exceptional_fraction": {_io.fmt(exc_set.fraction)},',
        f'  "exceptional_lebesgue": {_io.fmt(exc_set.lebesgue)},',
        f'  "exceptional_t": {_io.fmt(exc_set.t_value)},',
        f'  "exceptional_delta_exp": {_io.fmt(exc_set.delta_exp)}',
        "}",
    ]
    _write_summary(os.path.join(out, "fourier_summary.txt"), meta, lines)
    if cfg.svg:
        _, _, data = _io.read_csv(csv_path)
        r, a = data[:, 0], data[:, 4]
        radii = np.unique(r)
        maxima = np.array([a[r == x].max() for x in radii])
        _io.write_loglog_svg(os.path.join(out, "fourier.svg"), radii, maxima,
                             title="shell maxima of |mu-hat|",
                             xlabel="frequency radius", ylabel="max |mu-hat|")
    print("\n".join(lines))
    return 0


def cmd_nonconc(args):
    cfg = _load_config(args)
    threads = _threads_for(args, cfg)
    out = _out_dir(cfg)
    mu, _, source = _input_measure(cfg, threads)
    r_min = cfg.nonconc_r_min if cfg.nonconc_r_min > 0 else None
    profile = nonconc.affine_profile(mu, epsilons=cfg.nonconc_epsilons,
                                     ball_samples=cfg.nonconc_samples,
                                     seed=cfg.seed, r_min=r_min)
    meta = _meta("nonconc", cfg.sha256, cfg.seed, threads, source=source,
                 method=profile.method,
                 in_hyperplane=str(profile.in_hyperplane).lower(),
                 discarded=int(profile.discarded))
    rows = [(float(e), float(r), int(profile.balls_used))
            for e, r in zip(profile.epsilons, profile.ratios)]
    _io.write_csv(os.path.join(out, "nonconc.csv"),
                  ["epsilon", "worst_ratio", "ball_count_used"], rows, meta)
    lines = [f"epsilon {_io.fmt(e)}: worst slab ratio {_io.fmt(r)}"
             for e, r in zip(profile.epsilons, profile.ratios)]
    if profile.in_hyperplane:
        lines.append("flag: measure concentrates on an affine hyperplane")
    print("\n".join(lines))
    return 0


def _unit_ball(rng, d, r_max):
    u = rng.standard_normal(d)
    u /= np.linalg.norm(u)
    return rng.uniform(0.0, r_max) * u


def cmd_holonomy(args):
    """Property suite over seeded random regime inputs, d cycling 1..3.

    Round-trips compare the closed forms against the matrix factorization;
    block coherence checks each output factor against the quadratic form;
    the lambda gap is the exact |v|^2 |w|^2 / 4 identity; the cocycle law
    refactors step-wise and jointly.  Draw radii for the cocycle triples are
    clipped so every intermediate stays inside the ||.|| <= 1/2 regime.
    """
    trials = args.trials
    if trials < 10:
        raise ValueError(f"need at least 10 trials, got {trials}")
    seed = args.seed if args.seed is not None else 0
    out = args.out if args.out is not None else "out"
    os.makedirs(out, exist_ok=True)
    sign = -1.0 if os.environ.get("LIMSET_BUG_TAU_SIGN") == "1" else 1.0
    rng = np.random.default_rng(seed)
    tols = {
        "phi_round_trip": 1e-10,
        "tau_round_trip": 1e-10,
        "y_round_trip": 1e-10,
        "m_round_trip": 1e-10,
        "block_coherence": 1e-12,
        "lambda_gap_identity": 1e-12,
        "cocycle_composition": 1e-8,
    }
    worst = {name: 0.0 for name in tols}
    counts = {name: trials for name in tols}
    for i in range(trials):
        d = 1 + i % 3
        h = holonomy.random_regime_input(rng, d)
        res = holonomy.factorize_product(h.v, h.w, h.tau, h.m)
        worst["phi_round_trip"] = max(
            worst["phi_round_trip"],
            float(np.abs(res.phi - holonomy.phi_closed_form(h)).max()))
        worst["tau_round_trip"] = max(
            worst["tau_round_trip"],
            abs(res.t_out - sign * holonomy.tau_closed_form(h)))
        worst["y_round_trip"] = max(
            worst["y_round_trip"],
            float(np.abs(res.y_out - holonomy.y_closed_form(h)).max()))
        worst["m_round_trip"] = max(
            worst["m_round_trip"],
            float(np.abs(res.m_out - holonomy.m_closed_form(h)).max()))
        blocks = (core.unipotent_minus(res.y_out),
                  core.rotation_embed(res.m_out),
                  core.geodesic_flow(res.t_out, d),
                  core.unipotent_plus(res.phi))
        worst["block_coherence"] = max(
            worst["block_coherence"],
            max(core.so_residual(b) for b in blocks))
        gap = (holonomy.lambda_fn(h.v, h.w) - holonomy.lambda_linear(h.v, h.w)
               - 0.25 * float(h.v @ h.v) * float(h.w @ h.w))
        worst["lambda_gap_identity"] = max(worst["lambda_gap_identity"], abs(gap))
    n_triples = max(trials // 10, 1)
    counts["cocycle_composition"] = n_triples
    for i in range(n_triples):
        d = 1 + i % 3
        x0, x1 = _unit_ball(rng, d, 0.2), _unit_ball(rng, d, 0.2)
        w = _unit_ball(rng, d, 0.3)
        m = core.random_rotation(d, rng)
        tau = float(rng.uniform(0.0, 0.25))
        r1 = holonomy.factorize_product(x0, w, tau, m)
        r2 = holonomy.factorize_product(x1, r1.y_out, r1.t_out, r1.m_out)
        comb = holonomy.factorize_product(x1 + x0, w, tau, m)
        resid = max(abs(r2.t_out - comb.t_out),
                    float(np.abs(r2.y_out - comb.y_out).max()),
                    float(np.abs(r2.phi + r1.phi - comb.phi).max()),
                    float(np.abs(r2.m_out - comb.m_out).max()))
        worst["cocycle_composition"] = max(worst["cocycle_composition"], resid)
    passed = {name: worst[name] < tols[name] for name in tols}
    ok = all(passed.values())
    meta = _meta("holonomy", "", seed, 1, trials=trials)
    rows = [(name, counts[name], worst[name], tols[name], passed[name])
            for name in tols]
    _io.write_csv(os.path.join(out, "holonomy.csv"),
                  ["property", "trials", "max_residual", "tol", "passed"],
                  rows, meta)
    width = max(len(name) for name in tols)
    lines = [f"{name:<{width}}  trials {counts[name]:>6}  "
             f"max residual {worst[name]:.3e}  tol {tols[name]:.0e}  "
             f"{'PASS' if passed[name] else 'FAIL'}" for name in tols]
    lines.append(f"overall: {'PASS' if ok else 'FAIL'} "
                 f"({len(tols)} properties, {trials} trials, seed {seed})")
    print("\n".join(lines))
    return 0 if ok else 3


# ---------------------------------------------------------------------------
# Argument parsing and dispatch
# ---------------------------------------------------------------------------

def _add_config_flags(p, svg=False):
    p.add_argument("--config", required=True, help="experiment config file")
    p.add_argument("--out", default=None, help="output directory (overrides config)")
    p.add_argument("--seed", type=int, default=None, help="RNG seed (overrides config)")
    p.add_argument("--threads", type=int, default=None,
                   help="thread count (overrides LIMSET_THREADS and config)")
    if svg:
        p.add_argument("--svg", action="store_true",
                       help="also render the log-log SVG from the emitted CSV")


def _parser():
    p = argparse.ArgumentParser(prog="limset",
                                description="Schottky limit-set experiment runner")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a group file's ping-pong certificate")
    v.add_argument("group", help="group file to validate")
    v.set_defaults(func=cmd_validate)

    for name, func, svg in (("delta", cmd_delta, False),
                            ("measure", cmd_measure, False),
                            ("fourier", cmd_fourier, True),
                            ("nonconc", cmd_nonconc, False)):
        q = sub.add_parser(name)
        _add_config_flags(q, svg=svg)
        q.set_defaults(func=func)

    h = sub.add_parser("holonomy", help="closed-form factorization property suite")
    h.add_argument("--trials", type=int, default=10000)
    h.add_argument("--seed", type=int, default=0)
    h.add_argument("--out", default=None, help="output directory")
    h.set_defaults(func=cmd_holonomy)
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        return args.func(args)
    except _io.GroupFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except schottky.ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except core.GeometryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
