"""Sinc-block state-transition matrices built from reflection tracks.

All times are seconds; ``Ts`` is the sampling period. A reflection ``r`` is
*active* at RIR sample ``n`` when ``n * Ts`` lies in its (closed) occupied
interval. Rows of a matrix with no active reflection are zero.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .scene import SPEED_OF_SOUND, ImageSource, Trajectory, sinc, toa

# absorbs float round-off when interval edges land on integer sample indices
_EDGE_TOL = 1e-9


@dataclass(frozen=True)
class ToaInterval:
    lo: float
    hi: float

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    def shift(self, dt: float) -> "ToaInterval":
        return ToaInterval(self.lo + dt, self.hi + dt)

    def overlaps(self, other: "ToaInterval") -> bool:
        return self.lo <= other.hi and other.lo <= self.hi

    def contains(self, t: float, Ts: float = 1.0) -> bool:
        return self.lo / Ts - _EDGE_TOL <= t / Ts <= self.hi / Ts + _EDGE_TOL

    def sample_range(self, Ts: float, N: int) -> range:
        """Sample indices ``n`` with ``lo <= n*Ts <= hi``, clipped to ``[0, N)``."""
        first = max(int(np.ceil(self.lo / Ts - _EDGE_TOL)), 0)
        last = min(int(np.floor(self.hi / Ts + _EDGE_TOL)), N - 1)
        return range(first, max(last + 1, first))


@dataclass(frozen=True)
class ReflectionTrack:
    """Linear TOA model of one reflection along the trajectory.

    ``interval`` optionally overrides the occupied interval used by the
    location-invariant construction (e.g. when it was estimated by DTW).
    """

    toa_start: float
    toa_end: float
    tdoa: float
    gain_ratio: float = 1.0
    interval: ToaInterval | None = None

    @classmethod
    def from_endpoints(cls, toa_start: float, toa_end: float, L: int, **kw) -> "ReflectionTrack":
        return cls(toa_start, toa_end, (toa_end - toa_start) / (L - 1), **kw)

    def toa_at(self, l: int) -> float:
        return self.toa_start + l * self.tdoa

    def variant_interval(self, l: int, eps: float) -> ToaInterval:
        t = self.toa_at(l)
        return ToaInterval(t - eps, t + eps)

    def invariant_interval(self, eps: float, L: int) -> ToaInterval:
        """Interval occupied over ``l = 1..L-1``, padded by ``eps``."""
        if self.interval is not None:
            return self.interval
        a, b = self.toa_at(1), self.toa_at(L - 1)
        return ToaInterval(min(a, b) - eps, max(a, b) + eps)

    def shifted_interval(self, eps: float, L: int) -> ToaInterval:
        """Source-side interval, the occupied interval moved back one step."""
        return self.invariant_interval(eps, L).shift(-self.tdoa)


@dataclass(frozen=True)
class Block:
    rows: range
    cols: range
    values: np.ndarray
    reflection: int


@dataclass(frozen=True)
class TransitionMatrix:
    """Dense ``N x N`` matrix together with its per-reflection sinc blocks."""

    entries: np.ndarray
    blocks: tuple[Block, ...] = ()
    identity_rows: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))

    @property
    def N(self) -> int:
        return self.entries.shape[0]

    @property
    def active_rows(self) -> np.ndarray:
        return np.flatnonzero(np.any(self.entries != 0, axis=1))

    def apply(self, v: np.ndarray) -> np.ndarray:
        """Matrix-vector product using the block structure only."""
        v = np.asarray(v, dtype=float)
        out = np.zeros(self.N)
        for b in self.blocks:
            out[b.rows.start:b.rows.stop] += b.values @ v[b.cols.start:b.cols.stop]
        out[self.identity_rows] += v[self.identity_rows]
        return out

    def to_sparse(self) -> sparse.csr_matrix:
        return sparse.csr_matrix(self.entries)

    def __matmul__(self, other):
        return self.entries @ other


def _assemble(blocks: list[Block], N: int) -> TransitionMatrix:
    A = np.zeros((N, N))
    for b in blocks:
        A[b.rows.start:b.rows.stop, b.cols.start:b.cols.stop] += b.values
    A.setflags(write=False)
    return TransitionMatrix(A, tuple(blocks))


def _sinc_block(rows: range, cols: range, shift: float, gain: float) -> np.ndarray:
    n = np.asarray(rows, dtype=float)[:, None]
    m = np.asarray(cols, dtype=float)[None, :]
    return gain * sinc(n - shift - m)


def tracks_from_images(images: list[ImageSource], traj: Trajectory,
                       c: float = SPEED_OF_SOUND) -> list[ReflectionTrack]:
    """Exact endpoint TOAs per image source, far-field gain ratio of one."""
    if not images:
        raise ValueError("no image sources given")
    return [
        ReflectionTrack.from_endpoints(toa(img, traj.start, c), toa(img, traj.end, c), traj.L)
        for img in images
    ]


def active_set_variant(tracks, l: int, n: int, eps: float, Ts: float) -> set[int]:
    return {r for r, t in enumerate(tracks) if t.variant_interval(l, eps).contains(n * Ts, Ts)}


def active_set_invariant(tracks, n: int, eps: float, Ts: float, L: int) -> set[int]:
    return {r for r, t in enumerate(tracks) if t.invariant_interval(eps, L).contains(n * Ts, Ts)}


@dataclass
class OverlapReport:
    passed: bool
    pairs: list[tuple[int, int]]

    def __bool__(self):
        return self.passed


def overlap_check(tracks, eps: float, L: int) -> OverlapReport:
    """Pairwise disjointness of the source-side intervals of all tracks."""
    iv = [t.shifted_interval(eps, L) for t in tracks]
    pairs = [(i, j) for i in range(len(iv)) for j in range(i + 1, len(iv)) if iv[i].overlaps(iv[j])]
    return OverlapReport(not pairs, pairs)


def separate_intervals(intervals: list[ToaInterval], Ts: float) -> list[ToaInterval | None]:
    """Cut overlapping intervals at the midpoint of each overlap.

    The later-starting interval takes everything after the cut, so a nested
    interval inherits the tail of the one containing it and the union is
    preserved up to the small gap. Returns one entry per input, ``None``
    where an interval was consumed entirely.
    """
    order = sorted(range(len(intervals)), key=lambda i: (intervals[i].lo, intervals[i].hi))
    iv: list[ToaInterval | None] = [intervals[i] for i in order]
    gap = 1e-6 * Ts
    changed = True
    while changed:
        changed = False
        for p in range(len(iv) - 1):
            x, y = iv[p], iv[p + 1]
            if not x.overlaps(y):
                continue
            mid = 0.5 * (y.lo + min(x.hi, y.hi))
            iv[p] = ToaInterval(x.lo, mid) if mid >= x.lo else None
            hi = max(x.hi, y.hi)
            iv[p + 1] = ToaInterval(mid + gap, hi) if mid + gap <= hi else None
            changed = True
            break
        if None in iv:
            keep = [k for k, v in enumerate(iv) if v is not None]
            order = [order[k] for k in keep]
            iv = [iv[k] for k in keep]
        # re-sort: a cut can reorder neighbours when intervals were nested
        pairs = sorted(zip(iv, order), key=lambda t: (t[0].lo, t[0].hi))
        iv, order = [t[0] for t in pairs], [t[1] for t in pairs]
    out: list[ToaInterval | None] = [None] * len(intervals)
    for k, v in zip(order, iv):
        out[k] = v
    return out


def resolve_overlaps(tracks, eps: float, L: int, Ts: float) -> list[ReflectionTrack]:
    """Tracks with explicit intervals whose source-side parts are disjoint.

    Tracks whose interval vanishes in the process are dropped.
    """
    shifted = separate_intervals([t.shifted_interval(eps, L) for t in tracks], Ts)
    return [
        ReflectionTrack(t.toa_start, t.toa_end, t.tdoa, t.gain_ratio, sv.shift(t.tdoa))
        for t, sv in zip(tracks, shifted) if sv is not None
    ]


def build_variant_matrix(tracks, l: int, eps: float, Ts: float, N: int) -> TransitionMatrix:
    """Location-variant matrix mapping ``h(l-1)`` to ``h(l)``."""
    if l < 1:
        raise ValueError("location index must be at least 1")
    prev = [t.variant_interval(l - 1, eps) for t in tracks]
    bad = [(i, j) for i in range(len(prev)) for j in range(i + 1, len(prev)) if prev[i].overlaps(prev[j])]
    if bad:
        warnings.warn(f"reflection intervals overlap at l-1={l - 1}: {bad}", stacklevel=2)
    blocks = []
    for r, t in enumerate(tracks):
        rows = t.variant_interval(l, eps).sample_range(Ts, N)
        cols = prev[r].sample_range(Ts, N)
        if len(rows) and len(cols):
            blocks.append(Block(rows, cols, _sinc_block(rows, cols, t.tdoa / Ts, t.gain_ratio), r))
    return _assemble(blocks, N)


def build_invariant_matrix(tracks, eps: float, Ts: float, N: int, L: int,
                           check: bool = True) -> TransitionMatrix:
    """Location-invariant matrix valid for every step along the trajectory."""
    if check:
        report = overlap_check(tracks, eps, L)
        if not report:
            warnings.warn(f"reflection intervals overlap: {report.pairs}", stacklevel=2)
    blocks = []
    for r, t in enumerate(tracks):
        rows = t.invariant_interval(eps, L).sample_range(Ts, N)
        cols = t.shifted_interval(eps, L).sample_range(Ts, N)
        if len(rows) and len(cols):
            blocks.append(Block(rows, cols, _sinc_block(rows, cols, t.tdoa / Ts, t.gain_ratio), r))
    return _assemble(blocks, N)


def fill_identity_rows(A: TransitionMatrix) -> TransitionMatrix:
    """Put a one on the diagonal of every all-zero row."""
    empty = np.flatnonzero(~np.any(A.entries != 0, axis=1))
    if empty.size == 0:
        return A
    E = A.entries.copy()
    E[empty, empty] = 1.0
    E.setflags(write=False)
    return TransitionMatrix(E, A.blocks, np.union1d(A.identity_rows, empty))


def cross_term(gains, prev_toas, prev_amps, shifts, active, n: int, Ts: float,
               n_prime: np.ndarray) -> float:
    """Neglected interference ``e(l, n)`` evaluated as an explicit sum over ``n_prime``.

    ``active`` are the reflections active at row ``n``; ``shifts`` are their
    per-step TDOAs in seconds; ``prev_toas``/``prev_amps`` describe all
    reflections at the previous location.
    """
    total = 0.0
    for r in active:
        head = gains[r] * sinc(n - shifts[r] / Ts - n_prime)
        for rp in range(len(prev_toas)):
            if rp == r:
                continue
            total += float(np.sum(head * prev_amps[rp] * sinc(n_prime - prev_toas[rp] / Ts)))
    return total


def write_triplets(A: TransitionMatrix, path) -> None:
    rows, cols = np.nonzero(A.entries)
    with open(path, "w") as f:
        f.write("row,col,value\n")
        for i, j in zip(rows, cols):
            f.write(f"{i},{j},{float(A.entries[i, j])!r}\n")


def read_triplets(path, N: int) -> np.ndarray:
    A = np.zeros((N, N))
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.size:
        A[data[:, 0].astype(int), data[:, 1].astype(int)] = data[:, 2]
    return A


def block_summary(A: TransitionMatrix) -> str:
    lines = [f"N={A.N} nonzeros={int(np.count_nonzero(A.entries))} blocks={len(A.blocks)}"]
    for b in A.blocks:
        lines.append(
            f"reflection {b.reflection}: rows {b.rows.start}..{b.rows.stop - 1} "
            f"cols {b.cols.start}..{b.cols.stop - 1}"
        )
    if A.identity_rows.size:
        lines.append(f"identity rows: {A.identity_rows.size}")
    return "\n".join(lines) + "\n"
