"""Command line entry point: ``tvrir <subcommand> [options]``."""
from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .dtw import accumulated_cost, build_dtw_matrix, sparsify, warp_matrix, warp_path
from .errors import ConfigError, DomainError
from .harness import (
    ExperimentConfig,
    Scenario,
    analytical_matrix,
    build_scenario,
    build_trajectory,
    interior_mean,
    load_config,
    misalignment,
    run_experiment,
    write_curves,
)
from .kalman import ALGORITHMS, KalmanConfig, run_filter
from .ririo import (
    read_excitation_csv,
    read_observation_csv,
    read_rirs,
    write_excitation_csv,
    write_observation_csv,
    write_rir_binary,
    write_rir_csv,
)
from .scene import Room, enumerate_image_sources
from .signals import snr_to_noise_variance, white_noise
from .transition import block_summary, fill_identity_rows, tracks_from_images, write_triplets

log = logging.getLogger("tvrir")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.replace(",", " ").split())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.replace(",", " ").split())


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat 'key = value' config file; flags override its values")
    p.add_argument("--out", default=".", help="output directory (default: current directory)")
    p.add_argument("--seed", type=int, help="RNG seed for excitation and noise")
    p.add_argument("--omega", type=int, help="spatial downsampling factor")
    p.add_argument("--scale", type=float, help="fraction of the trajectory to use, in (0, 1]")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="tvrir",
        description="Estimate early time-varying RIRs along a linear microphone trajectory.",
    )
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write the ground-truth RIR set along the trajectory")
    _common(p)
    p.add_argument("--max-order", type=int, help="highest image-source reflection order")
    p.add_argument("--format", choices=("csv", "bin"), default="csv",
                   help="csv text or raw little-endian float64 with a .hdr sidecar")
    p.add_argument("--observe", action="store_true",
                   help="also write excitation.csv and observation.csv")
    p.add_argument("--snr", type=float, help="observation SNR in dB (default: noiseless)")

    p = sub.add_parser("transition", help="write the analytical matrix from exact TOAs")
    _common(p)
    p.add_argument("--max-order", type=int, help="order of the simulated scene (matrix uses first order)")
    p.add_argument("--fill-identity", action="store_true", help="put ones on the diagonal of empty rows")

    p = sub.add_parser("dtw", help="estimate the transition matrix from two RIR files")
    _common(p)
    p.add_argument("--start", required=True, help="RIR file; its first row is h(0)")
    p.add_argument("--end", required=True, help="RIR file; its last row is h(L-1)")
    p.add_argument("--locations", type=int,
                   help="number of trajectory locations L (default: derived from the config)")
    p.add_argument("--dump-cost", action="store_true", help="also write the D and W matrices as CSV")

    p = sub.add_parser("filter", help="run one algorithm on provided signals")
    _common(p)
    p.add_argument("--algorithm", choices=ALGORITHMS, required=True)
    p.add_argument("--rirs", required=True,
                   help="RIR set; row 0 initializes the filter, all rows score the estimate")
    p.add_argument("--excitation", required=True, help="excitation CSV (k,x)")
    p.add_argument("--observation", required=True, help="observation CSV (l,k,y)")
    p.add_argument("--noise-variance", type=float, default=0.0, help="measurement noise variance R")

    p = sub.add_parser("experiment", help="reproduce one of the four simulation experiments")
    _common(p)
    p.add_argument("id", type=int, choices=(1, 2, 3, 4))
    p.add_argument("--seeds", type=_ints, help="several seeds to average, e.g. '1,2,3'")
    p.add_argument("--omegas", type=_ints, help="experiment 3 downsampling factors")
    p.add_argument("--snrs", type=_floats, help="experiment 2 SNR points in dB")
    p.add_argument("--algorithms", type=lambda s: tuple(s.replace(",", " ").split()),
                   help=f"subset of {','.join(ALGORITHMS)}")
    return ap


def _config(args, **extra) -> ExperimentConfig:
    overrides = dict(omega=args.omega, scale=args.scale, **extra)
    if args.seed is not None:
        overrides["seeds"] = (args.seed,)
    return load_config(args.config, **overrides)


def _scenario(cfg: ExperimentConfig) -> Scenario:
    return build_scenario(cfg, cfg.omega, cfg.seeds[0])


def cmd_simulate(args) -> None:
    cfg = _config(args, max_order=args.max_order)
    scn = _scenario(cfg)
    out = Path(args.out)
    if args.format == "csv":
        write_rir_csv(out / "rirs.csv", scn.rirs, cfg.fs)
    else:
        write_rir_binary(out / "rirs.f64", scn.rirs, cfg.fs)
    if args.observe:
        y = scn.y_clean
        if args.snr is not None:
            var = snr_to_noise_variance(args.snr, y)
            y = y + np.sqrt(var) * white_noise(y.size, 1.0, [cfg.seeds[0], 1])
            log.info("noise variance %r", var)
        write_excitation_csv(out / "excitation.csv", scn.excitation)
        write_observation_csv(out / "observation.csv", y, scn.omega)
    log.info("wrote %d RIRs of %d samples to %s", scn.L, cfg.N, out)


def cmd_transition(args) -> None:
    cfg = _config(args, max_order=args.max_order)
    traj = build_trajectory(cfg, cfg.omega)
    room = Room(cfg.room, cfg.wall_reflection, cfg.c)
    images = enumerate_image_sources(room, cfg.source, cfg.max_order)
    first = [i for i in images if i.order <= 1]
    scn = Scenario(cfg, cfg.omega, traj, np.zeros((traj.L, cfg.N)), np.zeros(1), np.zeros(traj.L),
                   tracks_from_images(first, traj, cfg.c), tracks_from_images(images, traj, cfg.c))
    A = analytical_matrix(scn)
    if args.fill_identity:
        A = fill_identity_rows(A)
    out = Path(args.out)
    write_triplets(A, out / "A_triplets.csv")
    (out / "A_blocks.txt").write_text(block_summary(A))


def cmd_dtw(args) -> None:
    cfg = _config(args)
    start, fs0 = read_rirs(args.start)
    end, fs1 = read_rirs(args.end)
    if fs0 != fs1 or start.shape[1] != end.shape[1]:
        raise ConfigError("start and end RIRs differ in sampling rate or length")
    h0, hL = start[0], end[-1]
    L = args.locations or build_trajectory(cfg, cfg.omega).L
    Ts = 1.0 / fs0
    eps = 0.5 * cfg.epsilon_samples * Ts
    A = build_dtw_matrix(h0, hL, L, eps, Ts, h0.size, cfg.min_segment_len, floor=cfg.dtw_floor)
    out = Path(args.out)
    write_triplets(A, out / "A_dtw_triplets.csv")
    (out / "A_dtw_blocks.txt").write_text(block_summary(A))
    if args.dump_cost:
        a, b = sparsify(h0, cfg.dtw_floor), sparsify(hL, cfg.dtw_floor)
        cm = accumulated_cost(b, a)
        np.savetxt(out / "dtw_D.csv", cm.D, delimiter=",", fmt="%r")
        np.savetxt(out / "dtw_W.csv", warp_matrix(warp_path(cm), h0.size), delimiter=",", fmt="%d")


def cmd_filter(args) -> None:
    cfg = _config(args)
    rirs, fs = read_rirs(args.rirs)
    x = read_excitation_csv(args.excitation)
    y, omega = read_observation_csv(args.observation)
    L, N = rirs.shape
    if y.size != L:
        raise ConfigError(f"{L} RIRs but {y.size} observations")
    padded = np.concatenate([np.zeros(N - 1), x])

    def regressor(l):
        return padded[l * omega:l * omega + N][::-1]

    A = None
    if args.algorithm in ("LI-A", "KF-A"):
        cfg = load_config(args.config, omega=omega, scale=args.scale, N=N, fs=fs)
        traj = build_trajectory(cfg, omega)
        if traj.L != L:
            raise ConfigError(f"config trajectory has {traj.L} locations, files have {L}")
        room = Room(cfg.room, cfg.wall_reflection, cfg.c)
        first = enumerate_image_sources(room, cfg.source, 1)
        scn = Scenario(cfg, omega, traj, rirs, x, y, tracks_from_images(first, traj, cfg.c), [])
        A = analytical_matrix(scn)
    elif args.algorithm == "KF-A_dtw":
        Ts = 1.0 / fs
        A = build_dtw_matrix(rirs[0], rirs[-1], L, 0.5 * cfg.epsilon_samples * Ts, Ts, N,
                             cfg.min_segment_len, floor=cfg.dtw_floor)
    kcfg = KalmanConfig(10 ** (cfg.process_noise_db / 10), args.noise_variance, cfg.p0_scale, cfg.alpha)
    curve = np.empty(L)

    def record(state):
        curve[state.l] = misalignment(state.h_hat, rirs[state.l])

    run_filter(args.algorithm, A, y, regressor, kcfg, rirs[0], on_state=record)
    write_curves(Path(args.out) / f"filter_{args.algorithm}.csv", {args.algorithm: curve},
                 omega * cfg.velocity / fs)
    print(f"{args.algorithm}: interior mean misalignment {interior_mean(curve):.2f} dB")


def cmd_experiment(args) -> None:
    extra = dict(omegas=args.omegas, snrs=args.snrs, algorithms=args.algorithms)
    cfg = _config(args, **extra)
    if args.seeds:
        cfg = load_config(args.config, **{**dict(omega=args.omega, scale=args.scale, **extra),
                                          "seeds": args.seeds})
    results = run_experiment(args.id, cfg, args.out)
    for stem, curves in results.items():
        means = "  ".join(f"{a}={interior_mean(c):.2f}" for a, c in curves.items())
        print(f"{stem}: interior mean dB  {means}")


COMMANDS = {
    "simulate": cmd_simulate,
    "transition": cmd_transition,
    "dtw": cmd_dtw,
    "filter": cmd_filter,
    "experiment": cmd_experiment,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore", UserWarning)
    try:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args)
    except (ConfigError, DomainError, OSError) as exc:
        print(f"tvrir: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
