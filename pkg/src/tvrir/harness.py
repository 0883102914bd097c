"""Experiment configuration, orchestration and result export."""
from __future__ import annotations

import configparser
import hashlib
import logging
import os
import platform
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .dtw import build_dtw_matrix
from .errors import ConfigError, DomainError
from .kalman import ALGORITHMS, KalmanConfig, run_filter
from .scene import Room, Trajectory, enumerate_image_sources, synthesize_rirs, toa
from .signals import make_excitation, clean_output, snr_to_noise_variance, white_noise
from .transition import (
    build_invariant_matrix,
    fill_identity_rows,
    overlap_check,
    resolve_overlaps,
    tracks_from_images,
)

log = logging.getLogger(__name__)

CLAMP_DB = -120.0
EXPERIMENTS = (1, 2, 3, 4)


@dataclass
class ExperimentConfig:
    room: tuple = (4.5, 5.8, 2.9)
    source: tuple = (1.05, 2.98, 1.17)
    traj_start: tuple = (1.94, 3.10, 1.09)
    traj_end: tuple = (1.99, 2.95, 0.37)
    fs: float = 16000.0
    velocity: float = 0.25
    c: float = 343.0
    wall_reflection: float = 0.9
    omega: int = 1
    omegas: tuple = (2, 8, 32)
    max_order: int = 1
    snr_db: float | None = None
    snrs: tuple = (6.0, 0.0, -6.0)
    epsilon_samples: int = 20
    N: int = 480
    seeds: tuple = (0,)
    algorithms: tuple = ALGORITHMS
    scale: float = 1.0
    excitation_db: float = -20.0
    process_noise_db: float = -30.0
    p0_scale: float = 1e-6
    alpha: float = 1.0
    fill_identity: bool = False
    fill_identity_dtw: bool = False
    dtw_floor: float = 0.1
    min_segment_len: int = 3

    def __post_init__(self):
        if self.fs <= 0:
            raise ConfigError("fs must be positive")
        if self.velocity <= 0:
            raise ConfigError("velocity must be positive")
        if self.omega < 1 or any(int(o) < 1 for o in self.omegas):
            raise ConfigError("omega must be a positive integer")
        if not 0 < self.scale <= 1:
            raise ConfigError("scale must lie in (0, 1]")
        if self.N <= 0 or self.epsilon_samples <= 0:
            raise ConfigError("N and epsilon_samples must be positive")
        bad = set(self.algorithms) - set(ALGORITHMS)
        if bad:
            raise ConfigError(f"unknown algorithms {sorted(bad)}; choose from {ALGORITHMS}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")

    @property
    def Ts(self) -> float:
        return 1.0 / self.fs

    @property
    def eps(self) -> float:
        return 0.5 * self.epsilon_samples * self.Ts

    def digest(self) -> str:
        return hashlib.sha256(repr(sorted(asdict(self).items())).encode()).hexdigest()[:16]


_TUPLE_FIELDS = {"room", "source", "traj_start", "traj_end", "omegas", "snrs", "seeds", "algorithms"}


def _parse_value(name: str, text: str, kind):
    text = text.strip()
    if name in _TUPLE_FIELDS:
        items = [t for t in text.replace(",", " ").split() if t]
        if name == "algorithms":
            return tuple(items)
        if name in ("omegas", "seeds"):
            return tuple(int(t) for t in items)
        return tuple(float(t) for t in items)
    if name == "snr_db":
        return None if text.lower() in ("", "none") else float(text)
    if kind in (bool, "bool"):
        return text.lower() in ("1", "true", "yes", "on")
    if kind in (int, "int"):
        return int(text)
    return float(text)


def parse_config(text: str) -> dict:
    """Parse flat ``key = value`` text (``#`` comments) into config overrides."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        cp.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    kinds = {f.name: f.type for f in fields(ExperimentConfig)}
    out = {}
    for key, value in cp["config"].items():
        if key not in kinds:
            raise ConfigError(f"unknown config key {key!r}")
        kind = kinds[key]
        kind = kind.split(" ")[0] if isinstance(kind, str) else kind
        try:
            out[key] = _parse_value(key, value, kind)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {value!r}") from exc
    return out


def load_config(path=None, **overrides) -> ExperimentConfig:
    values = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        values.update(parse_config(p.read_text()))
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)


def misalignment(h_hat, h_true) -> float:
    """Normalized misalignment in dB, clamped below at -120 dB."""
    h_hat = np.asarray(getattr(h_hat, "samples", h_hat), dtype=float)
    h_true = np.asarray(getattr(h_true, "samples", h_true), dtype=float)
    if h_hat.shape != h_true.shape:
        raise ValueError("estimate and ground truth differ in length")
    ref = np.linalg.norm(h_true)
    if ref == 0:
        raise DomainError("ground-truth RIR is all zero")
    err = np.linalg.norm(h_hat - h_true)
    if err == 0:
        return CLAMP_DB
    return max(CLAMP_DB, 20 * np.log10(err / ref))


def derive_L(traj_length: float, velocity: float, fs: float, omega: int) -> int:
    """Number of observed locations for spatial period ``omega * velocity / fs``."""
    spacing = omega * velocity / fs
    # guard against 0.99999... from float division at exact multiples
    return int(np.floor(traj_length / spacing + 1e-9)) + 1


def interior_mean(curve, trim: float = 0.1) -> float:
    """Mean over locations excluding the first and last ``trim`` fraction."""
    curve = np.asarray(curve, dtype=float)
    k = int(np.floor(trim * curve.size))
    return float(np.mean(curve[k:curve.size - k]))


@dataclass
class Scenario:
    """Ground truth and excitation shared by all algorithms at one parameter point."""

    config: ExperimentConfig
    omega: int
    trajectory: Trajectory
    rirs: np.ndarray
    excitation: np.ndarray
    y_clean: np.ndarray
    first_order_tracks: list = field(repr=False, default_factory=list)
    all_tracks: list = field(repr=False, default_factory=list)

    @property
    def L(self) -> int:
        return self.rirs.shape[0]

    def regressor(self, l: int) -> np.ndarray:
        N = self.config.N
        k = l * self.omega
        return self._padded[k:k + N][::-1]

    def __post_init__(self):
        self._padded = np.concatenate([np.zeros(self.config.N - 1), self.excitation])


def build_trajectory(cfg: ExperimentConfig, omega: int) -> Trajectory:
    start = np.asarray(cfg.traj_start, dtype=float)
    end = np.asarray(cfg.traj_end, dtype=float)
    length = cfg.scale * float(np.linalg.norm(end - start))
    L = derive_L(length, cfg.velocity, cfg.fs, omega)
    if L < 2:
        raise ConfigError("trajectory shorter than one spatial period")
    spacing = omega * cfg.velocity / cfg.fs
    unit = (end - start) / np.linalg.norm(end - start)
    # last location sits on the spatial grid, at or just before the nominal end
    return Trajectory(start, start + (L - 1) * spacing * unit, L)


def build_scenario(cfg: ExperimentConfig, omega: int, seed: int) -> Scenario:
    room = Room(cfg.room, cfg.wall_reflection, cfg.c)
    images = enumerate_image_sources(room, cfg.source, cfg.max_order)
    traj = build_trajectory(cfg, omega)
    positions = traj.positions()
    # distance to a point is convex along a line, so the endpoints bound every TOA
    late = {img.order for img in images
            if max(toa(img, traj.start, cfg.c), toa(img, traj.end, cfg.c)) * cfg.fs >= cfg.N}
    if late and min(late) <= 1:
        raise ConfigError(f"RIR window of {cfg.N} samples is shorter than a first-order arrival")
    if late:
        warnings.warn(f"arrivals of order {sorted(late)} lie beyond the {cfg.N}-sample window; "
                      "only their sinc tails enter the early RIR", stacklevel=2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        rirs = synthesize_rirs(images, positions, cfg.fs, cfg.N, cfg.c)
    x = make_excitation(traj.L, omega, cfg.N, 10 ** (cfg.excitation_db / 10), seed=[seed, 0]).samples
    y = clean_output(x, rirs, omega)
    first = [img for img in images if img.order <= 1]
    return Scenario(cfg, omega, traj, rirs, x, y,
                    tracks_from_images(first, traj, cfg.c), tracks_from_images(images, traj, cfg.c))


def analytical_matrix(scn: Scenario):
    """Location-invariant matrix from exact first-order TOAs."""
    cfg = scn.config
    if scn.config.max_order > 1:
        report = overlap_check(scn.all_tracks, cfg.eps, scn.L)
        if not report:
            warnings.warn(
                f"{len(report.pairs)} overlapping reflection pairs up to order {cfg.max_order}; "
                "building the matrix from first-order reflections only", stacklevel=2)
    tracks = scn.first_order_tracks
    report = overlap_check(tracks, cfg.eps, scn.L)
    if not report:
        warnings.warn(f"first-order intervals overlap {report.pairs}; cutting at overlap midpoints",
                      stacklevel=2)
        tracks = resolve_overlaps(tracks, cfg.eps, scn.L, cfg.Ts)
    A = build_invariant_matrix(tracks, cfg.eps, cfg.Ts, cfg.N, scn.L, check=False)
    return fill_identity_rows(A) if cfg.fill_identity else A


def dtw_matrix(scn: Scenario):
    cfg = scn.config
    A = build_dtw_matrix(scn.rirs[0], scn.rirs[-1], scn.L, cfg.eps, cfg.Ts, cfg.N,
                         cfg.min_segment_len, floor=cfg.dtw_floor)
    return fill_identity_rows(A) if cfg.fill_identity_dtw else A


def run_point(cfg: ExperimentConfig, omega: int, snr_db: float | None, seed: int,
              matrices: dict | None = None, scenario: Scenario | None = None) -> dict[str, np.ndarray]:
    """Misalignment curves of every configured algorithm at one parameter point."""
    scn = scenario or build_scenario(cfg, omega, seed)
    if snr_db is None:
        noise_var = 0.0
        y = scn.y_clean
    else:
        noise_var = snr_to_noise_variance(snr_db, scn.y_clean)
        y = scn.y_clean + np.sqrt(noise_var) * white_noise(scn.L, 1.0, [seed, 1])
    kcfg = KalmanConfig(10 ** (cfg.process_noise_db / 10), noise_var, cfg.p0_scale, cfg.alpha)
    matrices = matrices if matrices is not None else {}
    need_A = {"LI-A", "KF-A"} & set(cfg.algorithms)
    if need_A and "A" not in matrices:
        matrices["A"] = analytical_matrix(scn)
    if "KF-A_dtw" in cfg.algorithms and "A_dtw" not in matrices:
        matrices["A_dtw"] = dtw_matrix(scn)
    which = {"LI-A": "A", "KF-A": "A", "KF-A_dtw": "A_dtw", "KF-alpha": None}
    curves = {}
    for alg in cfg.algorithms:
        out = np.empty(scn.L)

        def record(state, out=out):
            out[state.l] = misalignment(state.h_hat, scn.rirs[state.l])

        A = matrices.get(which[alg])
        log.info("omega=%d snr=%s seed=%d: running %s over %d locations", omega, snr_db, seed, alg, scn.L)
        run_filter(alg, A, y, scn.regressor, kcfg, scn.rirs[0], on_state=record)
        if not np.all(np.isfinite(out)):
            log.warning("%s diverged (non-finite misalignment)", alg)
        curves[alg] = out
    return curves


def experiment_points(exp_id: int, cfg: ExperimentConfig) -> list[tuple[str, ExperimentConfig, int, float | None]]:
    """(file stem, config, omega, snr) for every parameter point of an experiment."""
    if exp_id == 1:
        return [("exp1", replace(cfg, max_order=1), cfg.omega, None)]
    if exp_id == 2:
        c = replace(cfg, max_order=1)
        return [(f"exp2_snr{_fmt_num(s)}", c, cfg.omega, float(s)) for s in cfg.snrs]
    if exp_id == 3:
        c = replace(cfg, max_order=1)
        return [(f"exp3_omega{int(o)}", c, int(o), None) for o in cfg.omegas]
    if exp_id == 4:
        return [("exp4", replace(cfg, max_order=2, fill_identity=True), cfg.omega, None)]
    raise ConfigError(f"unknown experiment {exp_id}; choose from {EXPERIMENTS}")


def _fmt_num(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def run_experiment(exp_id: int, cfg: ExperimentConfig, out_dir=None) -> dict[str, dict[str, np.ndarray]]:
    """Run every parameter point; optionally write ``<stem>.csv`` and ``<stem>_meta.txt``.

    With several seeds the per-location dB values are averaged.
    """
    results = {}
    for stem, pcfg, omega, snr in experiment_points(exp_id, cfg):
        per_seed = []
        # observations differ per SNR but the matrices depend only on geometry
        shared: dict = {}
        for seed in pcfg.seeds:
            scn = build_scenario(pcfg, omega, seed)
            per_seed.append(run_point(pcfg, omega, snr, seed, shared, scn))
        curves = {alg: np.mean([c[alg] for c in per_seed], axis=0) for alg in pcfg.algorithms}
        results[stem] = curves
        if out_dir is not None:
            spacing = omega * pcfg.velocity / pcfg.fs
            write_curves(Path(out_dir) / f"{stem}.csv", curves, spacing)
            write_metadata(Path(out_dir) / f"{stem}_meta.txt", pcfg, exp_id, omega, snr, curves)
    return results


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="\n") as f:
        f.write(text)
    os.replace(tmp, path)


def write_curves(path, curves: dict[str, np.ndarray], spacing: float) -> None:
    """CSV with ``l, position_m`` and one misalignment column per algorithm."""
    algs = list(curves)
    L = len(next(iter(curves.values())))
    lines = [",".join(["l", "position_m", *algs])]
    for l in range(L):
        vals = [repr(float(curves[a][l])) for a in algs]
        lines.append(",".join([str(l), repr(l * spacing), *vals]))
    _atomic_write(Path(path), "\n".join(lines) + "\n")


def read_curves(path) -> dict[str, np.ndarray]:
    with open(path) as f:
        header = f.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {name: data[:, i] for i, name in enumerate(header)}


def write_metadata(path, cfg: ExperimentConfig, exp_id: int, omega: int, snr, curves) -> None:
    lines = [
        f"experiment = {exp_id}",
        f"omega = {omega}",
        f"snr_db = {snr}",
        f"config_digest = {cfg.digest()}",
    ]
    lines += [f"config.{k} = {v}" for k, v in asdict(cfg).items()]
    lines += [f"interior_mean_dB.{a} = {interior_mean(c)!r}" for a, c in curves.items()]
    lines += [
        f"version.tvrir = {__version__}",
        f"version.python = {platform.python_version()}",
        f"version.numpy = {np.__version__}",
        f"version.scipy = {scipy.__version__}",
    ]
    _atomic_write(Path(path), "\n".join(lines) + "\n")
