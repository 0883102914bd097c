"""Excitation, moving-microphone observation and noise scaling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

EXCITATION_DB = -20.0


def rng(seed: int) -> np.random.Generator:
    # PCG64 is pinned so that CSV outputs stay reproducible across numpy versions
    return np.random.Generator(np.random.PCG64(seed))


@dataclass
class Excitation:
    samples: np.ndarray
    variance: float
    seed: int


@dataclass
class Observation:
    y: np.ndarray
    omega: int
    noise_variance: float

    def __post_init__(self):
        if self.omega < 1:
            raise DomainError("omega must be a positive integer")


def white_noise(length: int, variance: float, seed: int) -> np.ndarray:
    if length <= 0:
        raise DomainError("length must be positive")
    if variance < 0:
        raise DomainError("variance must be non-negative")
    return np.sqrt(variance) * rng(seed).standard_normal(length)


def make_excitation(L: int, omega: int, N: int, variance: float = 10 ** (EXCITATION_DB / 10),
                    seed: int = 0) -> Excitation:
    """White Gaussian excitation long enough for ``L`` locations at spacing ``omega``."""
    return Excitation(white_noise(L * omega + N, variance, seed), variance, seed)


def _samples(x) -> np.ndarray:
    return x.samples if isinstance(x, Excitation) else np.asarray(x, dtype=float)


def regressor(x, l: int, omega: int, N: int) -> np.ndarray:
    """``(x(k), x(k-1), ..., x(k-N+1))`` with ``k = l * omega``; zero before ``k = 0``."""
    s = _samples(x)
    k = l * omega
    if k < 0:
        raise DomainError("time index must be non-negative")
    if k >= s.size:
        raise DomainError(f"excitation too short for time index {k}")
    out = np.zeros(N)
    m = min(N, k + 1)
    out[:m] = s[k::-1][:m]
    return out


def regressors(x, L: int, omega: int, N: int) -> np.ndarray:
    """Stacked regressors for ``l = 0..L-1``, shape ``(L, N)``."""
    s = _samples(x)
    need = (L - 1) * omega + 1
    if s.size < need:
        raise DomainError(f"excitation has {s.size} samples, {need} needed")
    padded = np.concatenate([np.zeros(N - 1), s[:need]])
    windows = np.lib.stride_tricks.sliding_window_view(padded, N)
    # window j covers x(j-N+1)..x(j); reverse for newest-first ordering
    return windows[np.arange(L) * omega, ::-1].copy()


def clean_output(x, rirs: np.ndarray, omega: int) -> np.ndarray:
    rirs = np.atleast_2d(np.asarray(rirs, dtype=float))
    X = regressors(x, rirs.shape[0], omega, rirs.shape[1])
    return np.einsum("ln,ln->l", X, rirs)


def observe(x, rirs, omega: int, noise_variance: float = 0.0, seed: int = 0) -> Observation:
    """Noisy microphone samples ``y(l) = x(l*omega)^T h(l) + v(l)``.

    ``rirs`` is an ``(L, N)`` array or a list of :class:`~tvrir.scene.Rir`.
    """
    if isinstance(rirs, (list, tuple)):
        lengths = {getattr(r, "N", None) for r in rirs}
        rates = {getattr(r, "fs", None) for r in rirs}
        if len(lengths) != 1 or len(rates) != 1:
            raise ValueError("all RIRs must share length and sampling rate")
        rirs = np.stack([r.samples for r in rirs])
    if noise_variance < 0:
        raise DomainError("noise variance must be non-negative")
    y = clean_output(x, rirs, omega)
    if noise_variance > 0:
        y = y + white_noise(y.size, noise_variance, seed)
    return Observation(y, omega, noise_variance)


def snr_to_noise_variance(snr_db: float, y_clean) -> float:
    y = np.asarray(y_clean, dtype=float)
    if y.size == 0 or not np.any(y):
        raise DomainError("clean signal is empty or all zero")
    return float(np.mean(y**2) / 10 ** (snr_db / 10))
