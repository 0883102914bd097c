"""Explicit evaluation of the neglected cross term for two-reflection responses."""
import numpy as np

from tvrir.scene import amplitude, sinc, toa
from tvrir.transition import (
    ReflectionTrack, active_set_invariant, active_set_variant, cross_term, overlap_check, tracks_from_images,
)

FS = 16000.0
TS = 1 / FS
EPS = 10 * TS
N_PRIME = np.arange(-4000, 4480)


def variant_ratio(img_r, img_q, mic_prev, mic_now):
    """max_n |e(l, n)| / max_n |h(l, n)| for a two-reflection response."""
    imgs = [img_r, img_q]
    prev_t = [toa(i, mic_prev) for i in imgs]
    now_t = [toa(i, mic_now) for i in imgs]
    prev_a = [amplitude(i, mic_prev) for i in imgs]
    now_a = [amplitude(i, mic_now) for i in imgs]
    gains = [now_a[k] / prev_a[k] for k in range(2)]
    shifts = [now_t[k] - prev_t[k] for k in range(2)]
    tracks = [ReflectionTrack(prev_t[k], now_t[k], shifts[k]) for k in range(2)]
    n = np.arange(0, 600)
    h = sum(now_a[k] * sinc(n - now_t[k] / TS) for k in range(2))
    worst = 0.0
    for row in range(600):
        act = sorted(active_set_variant(tracks, 1, row, EPS, TS))
        if act:
            e = cross_term(gains, prev_t, prev_a, shifts, act, row, TS, N_PRIME)
            worst = max(worst, abs(e))
    disjoint = not tracks[0].variant_interval(0, EPS).overlaps(tracks[1].variant_interval(0, EPS))
    return worst / np.abs(h).max(), disjoint


def invariant_ratio(img_pair, traj):
    tracks = tracks_from_images(img_pair, traj)
    L = traj.L
    pos = traj.positions()
    worst, peak = 0.0, 0.0
    rows = np.arange(0, 600)
    act_rows = [(n, sorted(active_set_invariant(tracks, n, EPS, TS, L))) for n in rows]
    for l in range(1, L):
        prev_t = [toa(im, pos[l - 1]) for im in img_pair]
        prev_a = [amplitude(im, pos[l - 1]) for im in img_pair]
        now_a = [amplitude(im, pos[l]) for im in img_pair]
        now_t = [toa(im, pos[l]) for im in img_pair]
        gains = [now_a[k] / prev_a[k] for k in range(2)]
        shifts = [t.tdoa for t in tracks]
        h = sum(now_a[k] * sinc(rows - now_t[k] / TS) for k in range(2))
        peak = max(peak, np.abs(h).max())
        for n, act in act_rows:
            if act:
                worst = max(worst, abs(cross_term(gains, prev_t, prev_a, shifts, act, n, TS, N_PRIME)))
    return worst / peak, bool(overlap_check(tracks, EPS, L))
