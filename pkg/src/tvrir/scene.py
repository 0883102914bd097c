"""Shoebox room geometry, image sources and bandlimited RIR synthesis."""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

SPEED_OF_SOUND = 343.0
WALL_REFLECTION = 0.9


def sinc(x):
    """Normalized sinc that is exactly 0 or 1 at integer arguments."""
    x = np.asarray(x, dtype=float)
    out = np.where(x == np.round(x), (x == 0).astype(float), np.sinc(x))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class Room:
    dims: tuple[float, float, float]
    wall_reflection: float = WALL_REFLECTION
    speed_of_sound: float = SPEED_OF_SOUND

    def __post_init__(self):
        dims = tuple(float(d) for d in self.dims)
        if len(dims) != 3 or min(dims) <= 0:
            raise DomainError(f"room dimensions must be three positive lengths, got {self.dims}")
        if not 0 < self.wall_reflection <= 1:
            raise DomainError("wall_reflection must lie in (0, 1]")
        if self.speed_of_sound <= 0:
            raise DomainError("speed_of_sound must be positive")
        object.__setattr__(self, "dims", dims)

    def contains(self, point) -> bool:
        p = np.asarray(point, dtype=float)
        return bool(np.all(p > 0) and np.all(p < np.asarray(self.dims)))


@dataclass(frozen=True)
class ImageSource:
    position: np.ndarray
    order: int
    base_amplitude: float


@dataclass(frozen=True)
class Trajectory:
    """Linear microphone path sampled at ``L`` equidistant locations."""

    start: np.ndarray
    end: np.ndarray
    L: int

    def __post_init__(self):
        if self.L < 2:
            raise DomainError("a trajectory needs at least two locations")
        object.__setattr__(self, "start", np.asarray(self.start, dtype=float))
        object.__setattr__(self, "end", np.asarray(self.end, dtype=float))

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.end - self.start))

    @property
    def spacing(self) -> float:
        return self.length / (self.L - 1)

    def positions(self) -> np.ndarray:
        """All ``L`` microphone positions as an ``(L, 3)`` array."""
        frac = np.arange(self.L)[:, None] / (self.L - 1)
        return self.start + frac * (self.end - self.start)


@dataclass
class Rir:
    samples: np.ndarray
    fs: float
    location_index: int = 0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise DomainError("an RIR must be a non-empty 1-D vector")
        if not np.all(np.isfinite(self.samples)):
            raise DomainError("RIR samples must be finite")

    @property
    def N(self) -> int:
        return self.samples.size


def _axis_images(coord: float, length: float, max_order: int):
    # (image coordinate, reflections along this axis)
    out = []
    for m in range(-max_order, max_order + 1):
        out.append((2 * m * length + coord, 2 * abs(m)))
        out.append((2 * m * length - coord, abs(2 * m - 1)))
    return [c for c in out if c[1] <= max_order]


def enumerate_image_sources(room: Room, src, max_order: int) -> list[ImageSource]:
    """Every lattice image of ``src`` with reflection order ``<= max_order``.

    Sorted by order, then lexicographically by position.
    """
    src = np.asarray(src, dtype=float)
    if max_order < 0:
        raise DomainError("max_order must be non-negative")
    if not room.contains(src):
        raise DomainError(f"source {src.tolist()} is not strictly inside the room")
    per_axis = [_axis_images(src[i], room.dims[i], max_order) for i in range(3)]
    images = []
    for (x, ox), (y, oy), (z, oz) in itertools.product(*per_axis):
        order = ox + oy + oz
        if order <= max_order:
            images.append((order, (x, y, z)))
    images.sort()
    return [
        ImageSource(np.array(pos), order, room.wall_reflection**order)
        for order, pos in images
    ]


def _distance(img: ImageSource, mic) -> float:
    d = float(np.linalg.norm(np.asarray(img.position) - np.asarray(mic, dtype=float)))
    if d == 0.0:
        raise DomainError("image source coincides with the microphone")
    return d


def toa(img: ImageSource, mic, c: float = SPEED_OF_SOUND) -> float:
    """Time of arrival in seconds."""
    if c <= 0:
        raise DomainError("speed of sound must be positive")
    return _distance(img, mic) / c


def amplitude(img: ImageSource, mic) -> float:
    """Reflection gain with 1/r spherical spreading."""
    return img.base_amplitude / _distance(img, mic)


def image_arrays(images: list[ImageSource]) -> tuple[np.ndarray, np.ndarray]:
    """Stack image positions ``(R, 3)`` and base amplitudes ``(R,)``."""
    pos = np.array([img.position for img in images], dtype=float).reshape(-1, 3)
    amp = np.array([img.base_amplitude for img in images], dtype=float)
    return pos, amp


def synthesize_rir(images, mic, fs: float, N: int, c: float = SPEED_OF_SOUND,
                   location_index: int = 0) -> Rir:
    """Bandlimited ISM response ``h(n) = sum_r a_r sinc(n - tau_r fs)``."""
    h = synthesize_rirs(images, np.asarray(mic, dtype=float)[None, :], fs, N, c)[0]
    return Rir(h, fs, location_index)


def synthesize_rirs(images, mics, fs: float, N: int, c: float = SPEED_OF_SOUND,
                    chunk: int = 512) -> np.ndarray:
    """RIRs for many microphone positions at once, shape ``(M, N)``."""
    pos, base = image_arrays(images)
    mics = np.atleast_2d(np.asarray(mics, dtype=float))
    out = np.empty((mics.shape[0], N))
    n = np.arange(N, dtype=float)
    latest = 0.0
    for lo in range(0, mics.shape[0], chunk):
        m = mics[lo:lo + chunk]
        dist = np.linalg.norm(m[:, None, :] - pos[None, :, :], axis=2)
        if np.any(dist == 0):
            raise DomainError("image source coincides with a microphone")
        delay = dist * (fs / c)
        latest = max(latest, float(delay.max()))
        gain = base[None, :] / dist
        # (M, R, N) would be large, so accumulate per image
        acc = np.zeros((m.shape[0], N))
        for r in range(pos.shape[0]):
            acc += gain[:, r, None] * sinc(n[None, :] - delay[:, r, None])
        out[lo:lo + chunk] = acc
    if latest >= N:
        warnings.warn(f"latest arrival at {latest:.1f} samples exceeds the {N}-sample window",
                      stacklevel=2)
    return out


def trajectory_position(traj: Trajectory, l: int) -> np.ndarray:
    if not 0 <= l <= traj.L - 1:
        raise IndexError(f"location {l} outside 0..{traj.L - 1}")
    return traj.start + (l / (traj.L - 1)) * (traj.end - traj.start)
