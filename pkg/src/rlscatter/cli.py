"""Command-line entry point: ``rlscatter <subcommand> ...``.

Exit codes: 0 success, 1 input or contract error, 2 partial result,
64 usage error.
"""

import argparse
import logging
import os
import sys

import numpy as np

from . import born, forward, rla, synth
from .config import ConfigError, load_config
from .grid import ReconGrid, read_grid, write_grid
from .mesh import generate_disk_mesh, refine

logger = logging.getLogger("rlscatter")

EXIT_OK, EXIT_INPUT, EXIT_PARTIAL, EXIT_USAGE = 0, 1, 2, 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class InputError(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------
def _meshes(cfg):
    mesh = generate_disk_mesh(cfg.radius, cfg.reconstruction_h)
    fine = mesh
    for _ in range(cfg.data_refinements):
        fine = refine(fine)
    return mesh, fine


def _phantom(cfg):
    if cfg.phantom == "none":
        return None
    if cfg.phantom == "grid":
        grid, values = read_grid(cfg.phantom_grid)
        return synth.Phantom("grid", grid, values)
    return synth.Phantom(cfg.phantom)


def _schedule(cfg):
    kwargs = dict(sweeps_per_k=cfg.sweeps_per_k, beta_scale=cfg.beta_scale,
                  beta=cfg.beta or None)
    if cfg.k_max == cfg.k_min:
        return rla.ContinuationSchedule([cfg.k_min], **kwargs)
    return rla.frequency_schedule(cfg.k_min, cfg.k_max, cfg.step, **kwargs)


def _out(cfg, override):
    path = override or cfg.output
    os.makedirs(path, exist_ok=True)
    return path


def _load_dataset(path):
    if not os.path.isfile(os.path.join(path, "meta")):
        raise InputError(f"{path} is not a dataset directory (no meta file)")
    return synth.load_dataset(path)


def _truth(source, grid):
    """Truth σ on ``grid`` from a grid file or a phantom name."""
    if source in ("example1", "example2"):
        return synth.Phantom(source).on_grid(grid)
    tgrid, values = read_grid(source)
    if tgrid != grid:
        raise InputError(f"truth grid {source} ({tgrid.n}x{tgrid.n}) does not match "
                         f"({grid.n}x{grid.n})")
    return values


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------
def cmd_synth(args):
    cfg = load_config(args.config)
    phantom = _phantom(cfg)
    if phantom is None:
        raise InputError("synth needs a phantom")
    out = _out(cfg, args.out)
    mesh, fine = _meshes(cfg)
    ks = _schedule(cfg).wavenumbers
    n_modes = synth.data_modes(max(ks), cfg.radius, cfg.extra_modes)
    logger.info("data mesh: %d vertices, N=%d, %d wavenumbers x %d angles",
                fine.n_vertices, n_modes, len(ks), cfg.angles)
    ds = synth.generate_data(phantom, ks, cfg.incident_angles, fine, n_modes, cfg.workers)
    if cfg.noise_level > 0:
        ds = synth.add_noise(ds, cfg.noise_level, cfg.seed)
    ds_dir = os.path.join(out, "dataset")
    synth.save_dataset(ds, ds_dir)
    grid = ReconGrid(cfg.grid_n, cfg.radius)
    write_grid(os.path.join(out, "truth.csv"), grid, phantom.on_grid(grid))
    print(ds_dir)
    if ds.partial:
        logger.warning("%d of %d traces failed", len(ds.failures),
                       len(ds.failures) + len(ds.traces))
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_forward(args):
    cfg = load_config(args.config)
    phantom = _phantom(cfg)
    if phantom is None:
        raise InputError("forward needs a phantom")
    mesh, _ = _meshes(cfg)
    k = args.k
    q = phantom.q_on_mesh(mesh, k)
    wave = forward.IncidentWave(k, args.angle)
    if args.model == "coupled":
        trace = forward.couple_fem_bem(mesh, q, wave).trace
    else:
        us = forward.solve_scattered_abc(mesh, q, wave)
        loop = mesh.boundary_loop
        u = us[loop]
        trace = forward.BoundaryTrace(mesh.boundary_angles, u, 1j * k * u)
    out = args.out or os.path.join(_out(cfg, None), f"forward_k{k:g}_{args.model}.csv")
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    forward.write_trace(out, trace, args.angle, k)
    print(out)
    return EXIT_OK


def cmd_born(args):
    cfg = load_config(args.config)
    ds = _load_dataset(args.dataset)
    k = _schedule(cfg).wavenumbers[0]
    gaps = ds.missing([k])
    if gaps:
        raise rla.DatasetGapError(gaps)
    grid = ReconGrid(cfg.grid_n, cfg.radius)
    sigma, system = born.born_initial_sigma(
        grid, ds.traces_at(k), k, ds.angles, alpha=cfg.alpha or None,
        bounds=(cfg.sigma_min, cfg.sigma_max), support=grid.mask(cfg.support_radius),
        radius=cfg.radius,
    )
    out = args.out or os.path.join(_out(cfg, None), "born.csv")
    write_grid(out, grid, sigma)
    logger.info("alpha = %.6e", system.alpha)
    print(out)
    return EXIT_OK


def cmd_reconstruct(args):
    cfg = load_config(args.config)
    ds = _load_dataset(args.dataset)
    out = _out(cfg, args.out)
    grid = ReconGrid(cfg.grid_n, cfg.radius)
    if args.truth:
        truth = _truth(args.truth, grid)
    else:
        phantom = _phantom(cfg)
        truth = None if phantom is None or cfg.phantom == "zero" else phantom.on_grid(grid)
    initial = None
    if args.initial:
        igrid, initial = read_grid(args.initial)
        if igrid != grid:
            raise InputError("initial grid does not match the reconstruction grid")
    mesh, _ = _meshes(cfg)
    schedule = _schedule(cfg)
    rec = rla.Reconstructor(mesh, grid, ds, cfg.support_radius, truth)
    snap = os.path.join(out, "snapshots") if cfg.snapshots else None
    state = rec.run(schedule, alpha=cfg.alpha or None, initial=initial, snapshot_dir=snap)
    write_grid(os.path.join(out, "sigma.csv"), grid, state.sigma)
    rla.write_log(os.path.join(out, "log.csv"), state.log)
    if state.log and state.log[-1].rel_error is not None:
        print(f"relative error {state.log[-1].rel_error:.6f}")
    print(os.path.join(out, "sigma.csv"))
    expected = schedule.sweeps_per_k * len(schedule.wavenumbers) + (initial is None)
    return EXIT_OK if len(state.log) == expected else EXIT_PARTIAL


def cmd_evaluate(args):
    grid, sigma = read_grid(args.grid)
    truth = _truth(args.truth, grid)
    err = synth.relative_error(sigma, truth, grid.inside)
    report = args.report or os.path.join(os.path.dirname(os.path.abspath(args.grid)),
                                         "report.txt")
    with open(report, "w") as f:
        f.write(f"grid = {args.grid}\ntruth = {args.truth}\nrelative_error = {err:.16e}\n")
    print(f"relative error {err:.6f}")
    return EXIT_OK


def cmd_plotdata(args):
    path = args.input
    with open(path) as f:
        header = f.readline().strip()
    stem = os.path.splitext(os.path.basename(path))[0]
    out = args.out or os.path.dirname(os.path.abspath(path))
    os.makedirs(out, exist_ok=True)
    if header == "x,y,sigma":
        grid, sigma = read_grid(path)
        matrix = os.path.join(out, f"{stem}_matrix.csv")
        with open(matrix, "w") as f:
            # first row: x coordinates; first column: y coordinates
            f.write("y\\x," + ",".join(f"{x:.16e}" for x in grid.centers_1d) + "\n")
            for iy, y in enumerate(grid.centers_1d):
                f.write(f"{y:.16e}," + ",".join(f"{v:.16e}" for v in sigma[iy]) + "\n")
        xs, vals = grid.cross_section(sigma, args.y)
        xsec = os.path.join(out, f"{stem}_xsec.csv")
        with open(xsec, "w") as f:
            f.write("x,sigma\n")
            for x, v in zip(xs, vals):
                f.write(f"{x:.16e},{v:.16e}\n")
        print(matrix)
        print(xsec)
    elif header == "k,sweep,residual_l2,rel_error":
        log = rla.read_log(path)
        series = os.path.join(out, f"{stem}_series.csv")
        last = {}
        for r in log:
            last[r.k] = r
        with open(series, "w") as f:
            f.write("k,residual_l2,rel_error\n")
            for k in sorted(last):
                r = last[k]
                err = "" if r.rel_error is None else f"{r.rel_error:.16e}"
                f.write(f"{k:.16e},{r.residual_l2:.16e},{err}\n")
        print(series)
    else:
        raise InputError(f"{path}: unrecognized file (header {header!r})")
    return EXIT_OK


# ---------------------------------------------------------------------------
def build_parser():
    p = _Parser(prog="rlscatter", description="Multi-frequency inverse medium scattering.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    s.add_argument("config")
    s.add_argument("--out", help="output directory (default: config output)")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("forward", help="one forward solve, written as a trace file")
    s.add_argument("config")
    s.add_argument("--k", type=float, required=True)
    s.add_argument("--angle", type=float, default=0.0)
    s.add_argument("--model", choices=("coupled", "abc"), default="coupled")
    s.add_argument("--out")
    s.set_defaults(func=cmd_forward)

    s = sub.add_parser("born", help="Born initial guess at the lowest wavenumber")
    s.add_argument("config")
    s.add_argument("dataset")
    s.add_argument("--out")
    s.set_defaults(func=cmd_born)

    s = sub.add_parser("reconstruct", help="recursive-linearization reconstruction")
    s.add_argument("config")
    s.add_argument("dataset")
    s.add_argument("--truth", help="truth grid file or phantom name")
    s.add_argument("--initial", help="start from this grid instead of the Born guess")
    s.add_argument("--out")
    s.set_defaults(func=cmd_reconstruct)

    s = sub.add_parser("evaluate", help="relative error of a grid against a truth")
    s.add_argument("grid")
    s.add_argument("--truth", required=True, help="truth grid file or phantom name")
    s.add_argument("--report")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("plotdata", help="plot-ready files from a grid or a log")
    s.add_argument("input")
    s.add_argument("--y", type=float, default=-0.6, help="cross-section height")
    s.add_argument("--out")
    s.set_defaults(func=cmd_plotdata)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, InputError, rla.DatasetGapError, ValueError, KeyError, OSError) as exc:
        print(f"rlscatter {args.command}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
