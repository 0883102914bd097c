"""File formats for RIR sets, excitation and observations.

RIR set CSV::

    fs,N,L
    16000.0,480,3
    <N comma-separated samples for location 0>
    ...

Raw binary: ``<name>.f64`` holds ``L*N`` little-endian float64 values in
location-major order; ``<name>.f64.hdr`` is a ``key = value`` text sidecar
with ``fs``, ``N``, ``L`` and ``dtype``.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ConfigError


def _fmt(v) -> str:
    return repr(float(v))


def write_rir_csv(path, rirs: np.ndarray, fs: float) -> None:
    rirs = np.atleast_2d(np.asarray(rirs, dtype=float))
    L, N = rirs.shape
    with open(path, "w", newline="\n") as f:
        f.write("fs,N,L\n")
        f.write(f"{_fmt(fs)},{N},{L}\n")
        for row in rirs:
            f.write(",".join(map(_fmt, row)) + "\n")


def read_rir_csv(path) -> tuple[np.ndarray, float]:
    """Return ``(rirs, fs)`` with ``rirs`` shaped ``(L, N)``."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"RIR file not found: {path}")
    with open(path) as f:
        header = f.readline().strip()
        if header != "fs,N,L":
            raise ConfigError(f"{path}: expected header 'fs,N,L', got {header!r}")
        fs, N, L = f.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=2, ndmin=2)
    if data.shape != (int(L), int(N)):
        raise ConfigError(f"{path}: header says {L}x{N}, body is {data.shape[0]}x{data.shape[1]}")
    return data, float(fs)


def write_rir_binary(path, rirs: np.ndarray, fs: float) -> None:
    rirs = np.atleast_2d(np.asarray(rirs, dtype="<f8"))
    L, N = rirs.shape
    path = Path(path)
    rirs.tofile(path)
    Path(str(path) + ".hdr").write_text(
        f"fs = {_fmt(fs)}\nN = {N}\nL = {L}\ndtype = <f8\norder = location-major\n")


def read_rir_binary(path) -> tuple[np.ndarray, float]:
    path = Path(path)
    hdr = {}
    for line in Path(str(path) + ".hdr").read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            hdr[k.strip()] = v.strip()
    N, L = int(hdr["N"]), int(hdr["L"])
    data = np.fromfile(path, dtype="<f8")
    if data.size != N * L:
        raise ConfigError(f"{path}: expected {N * L} values, found {data.size}")
    return data.reshape(L, N), float(hdr["fs"])


def read_rirs(path) -> tuple[np.ndarray, float]:
    p = Path(path)
    if p.suffix == ".f64":
        return read_rir_binary(p)
    return read_rir_csv(p)


def write_observation_csv(path, y: np.ndarray, omega: int) -> None:
    with open(path, "w", newline="\n") as f:
        f.write("l,k,y\n")
        for l, v in enumerate(y):
            f.write(f"{l},{l * omega},{_fmt(v)}\n")


def read_observation_csv(path) -> tuple[np.ndarray, int]:
    """Return ``(y, omega)``; omega is inferred from the ``k`` column."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    omega = int(data[1, 1] - data[0, 1]) if data.shape[0] > 1 else 1
    return data[:, 2], max(omega, 1)


def write_excitation_csv(path, x: np.ndarray) -> None:
    with open(path, "w", newline="\n") as f:
        f.write("k,x\n")
        for k, v in enumerate(x):
            f.write(f"{k},{_fmt(v)}\n")


def read_excitation_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)[:, 1]
