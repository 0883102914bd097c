"""Estimate the location-invariant transition matrix from two endpoint RIRs.

The two RIRs are aligned by dynamic time warping; diagonal runs of the warp
path give integer shifts between matching reflections, from which per-step
TDOAs and occupied intervals are derived.

Indexing: ``D`` is ``(N+1) x (N+1)`` with the extra leading row/column used
only for initialization, so ``D[n+1, m+1]`` belongs to sample pair
``(n, m)`` where ``n`` indexes the end RIR and ``m`` the start RIR.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .scene import Rir
from .transition import (
    ReflectionTrack,
    ToaInterval,
    TransitionMatrix,
    build_invariant_matrix,
    separate_intervals,
)

# preference order when predecessors tie: diagonal, vertical, horizontal
_STEPS = ((1, 1), (1, 0), (0, 1))


@dataclass(frozen=True)
class CostMatrix:
    D: np.ndarray
    cost: np.ndarray

    @property
    def N(self) -> int:
        return self.cost.shape[0]


@dataclass(frozen=True)
class DiagonalSegment:
    start: tuple[float, float]
    end: tuple[float, float]
    offset: int
    length: int
    anchor: tuple[int, int] | None = None
    salience: float = 0.0


def _values(h) -> np.ndarray:
    return h.samples if isinstance(h, Rir) else np.asarray(h, dtype=float)


def accumulated_cost(h_end, h_start) -> CostMatrix:
    """Accumulated alignment cost with absolute sample difference as local cost."""
    a, b = _values(h_end), _values(h_start)
    if a.shape != b.shape:
        raise ValueError(f"RIR lengths differ: {a.shape} vs {b.shape}")
    N = a.size
    cost = np.abs(a[:, None] - b[None, :])
    D = np.full((N + 1, N + 1), np.inf)
    D[0, 0] = 0.0
    # sweep anti-diagonals i + j = k; each depends only on k-1 and k-2
    for k in range(2, 2 * N + 1):
        i = np.arange(max(1, k - N), min(N, k - 1) + 1)
        j = k - i
        best = np.minimum(np.minimum(D[i - 1, j - 1], D[i - 1, j]), D[i, j - 1])
        D[i, j] = cost[i - 1, j - 1] + best
    return CostMatrix(D, cost)


def warp_path(cm: CostMatrix) -> list[tuple[int, int]]:
    """Greedy backtrack from the terminal corner, returned in forward order."""
    D = cm.D
    i = j = cm.N
    path = [(i - 1, j - 1)]
    while (i, j) != (1, 1):
        best = None
        for di, dj in _STEPS:
            cand = D[i - di, j - dj]
            if best is None or cand < best[0]:
                best = (cand, di, dj)
        i, j = i - best[1], j - best[2]
        path.append((i - 1, j - 1))
    path.reverse()
    return path


def path_cost(cm: CostMatrix, path) -> float:
    idx = np.asarray(path)
    return float(cm.cost[idx[:, 0], idx[:, 1]].sum())


def warp_matrix(path, N: int) -> np.ndarray:
    W = np.zeros((N, N), dtype=np.int8)
    idx = np.asarray(path)
    W[idx[:, 0], idx[:, 1]] = 1
    return W


def _as_path(W_or_path):
    if isinstance(W_or_path, np.ndarray) and W_or_path.ndim == 2 and W_or_path.shape[0] == W_or_path.shape[1] \
            and W_or_path.shape[1] != 2:
        # a monotone path is recovered by lexicographic order of its cells
        return [tuple(p) for p in np.argwhere(W_or_path)]
    return [tuple(p) for p in W_or_path]


def extract_segments(W_or_path, min_segment_len: int = 3) -> list[DiagonalSegment]:
    """Maximal diagonal runs of the warp path with at least ``min_segment_len`` cells."""
    path = _as_path(W_or_path)
    segments = []
    run = [path[0]]
    for prev, cur in zip(path, path[1:]):
        if cur[0] - prev[0] == 1 and cur[1] - prev[1] == 1:
            run.append(cur)
            continue
        segments.append(run)
        run = [cur]
    segments.append(run)
    return [
        DiagonalSegment(tuple(map(int, r[0])), tuple(map(int, r[-1])), int(r[0][0] - r[0][1]), len(r))
        for r in segments if len(r) >= min_segment_len
    ]


def locate_reflections(segments, h_end, h_start, half_width: float,
                       rel_threshold: float = 0.05) -> list[DiagonalSegment]:
    """Reflection-sized sub-segments centred on aligned peaks.

    Along each run, local maxima of ``min(|h_end(n)|, |h_start(m)|)`` above
    ``rel_threshold`` times the largest such value become anchors; anchors
    closer than two half-widths to a stronger one are suppressed. Each
    anchor yields a segment spanning ``anchor +/- half_width``.
    """
    a, b = np.abs(_values(h_end)), np.abs(_values(h_start))
    cands = []
    for seg in segments:
        n = np.arange(seg.start[0], seg.end[0] + 1)
        m = n - seg.offset
        s = np.minimum(a[n], b[m])
        left = np.concatenate([[-np.inf], s[:-1]])
        right = np.concatenate([s[1:], [-np.inf]])
        for k in np.flatnonzero((s >= left) & (s >= right) & (s > 0)):
            cands.append((float(s[k]), int(n[k]), int(m[k]), seg.offset))
    if not cands:
        return []
    top = max(c[0] for c in cands)
    cands.sort(key=lambda c: (-c[0], c[1]))
    kept = []
    for c in cands:
        if c[0] < rel_threshold * top:
            break
        if any(abs(c[1] - k[1]) <= 2 * half_width and abs(c[2] - k[2]) <= 2 * half_width for k in kept):
            continue
        kept.append(c)
    kept.sort(key=lambda c: c[1])
    out = []
    for s, n, m, off in kept:
        out.append(DiagonalSegment(
            (n - half_width, m - half_width), (n + half_width, m + half_width), off,
            int(2 * half_width) + 1, (n, m), s,
        ))
    return out


def estimate_tracks(segments, L: int, Ts: float) -> list[ReflectionTrack]:
    """Per-step TDOA and occupied interval for each diagonal segment.

    Source-side intervals that overlap are cut at the overlap midpoint so that
    the tracks satisfy the disjointness condition.
    """
    raw = []
    for seg in segments:
        shift = seg.offset / (L - 1)  # per-step shift in samples
        (n_st, m_st), (n_en, m_en) = seg.start, seg.end
        lo = Ts * min(m_st + shift, n_st)
        hi = Ts * max(n_en, m_en + shift)
        anchor = seg.anchor or (0.5 * (n_st + n_en), 0.5 * (m_st + m_en))
        raw.append((ReflectionTrack(Ts * anchor[1], Ts * anchor[0], shift * Ts), ToaInterval(lo, hi)))
    shifted = separate_intervals([iv.shift(-t.tdoa) for t, iv in raw], Ts)
    tracks = []
    for (t, _), sv in zip(raw, shifted):
        if sv is not None:
            tracks.append(ReflectionTrack(t.toa_start, t.toa_end, t.tdoa, interval=sv.shift(t.tdoa)))
    return tracks


def sparsify(h, floor: float) -> np.ndarray:
    """Zero every sample below ``floor`` times the peak magnitude."""
    h = _values(h)
    if floor <= 0 or not np.any(h):
        return h.copy()
    return np.where(np.abs(h) >= floor * np.abs(h).max(), h, 0.0)


def dtw_tracks(h_start, h_end, L: int, eps: float, Ts: float, min_segment_len: int = 3,
               rel_threshold: float = 0.05, floor: float = 0.1) -> list[ReflectionTrack]:
    """Reflection tracks estimated by aligning the two endpoint RIRs.

    Sinc tails below ``floor`` of the peak are removed first; otherwise the
    cost of moving the warp path between reflections makes it prefer
    pairing neighbouring peaks of similar height.
    """
    a, b = sparsify(h_start, floor), sparsify(h_end, floor)
    runs = extract_segments(warp_path(accumulated_cost(b, a)), min_segment_len)
    return estimate_tracks(locate_reflections(runs, b, a, eps / Ts, rel_threshold), L, Ts)


def build_dtw_matrix(h_start, h_end, L: int, eps: float, Ts: float, N: int | None = None,
                     min_segment_len: int = 3, rel_threshold: float = 0.05,
                     floor: float = 0.1) -> TransitionMatrix:
    """Transition matrix estimated from the endpoint RIRs alone.

    Falls back to the identity (with a warning) when no reflection is found.
    """
    N = _values(h_start).size if N is None else N
    tracks = dtw_tracks(h_start, h_end, L, eps, Ts, min_segment_len, rel_threshold, floor)
    if not tracks:
        warnings.warn("no diagonal segments found, falling back to identity", stacklevel=2)
        eye = np.eye(N)
        eye.setflags(write=False)
        return TransitionMatrix(eye, (), np.arange(N))
    return build_invariant_matrix(tracks, eps, Ts, N, L, check=False)
