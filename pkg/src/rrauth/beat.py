"""R-peak detection and RR-interval framing.

The detector is a derivative-energy detector: difference, square, smooth,
threshold against a rolling energy maximum, suppress within a refractory
window, then refine each event to the local signal maximum. Frames resample
each R-to-R segment onto a fixed-length grid anchored at both peaks.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass

import numpy as np

from rrauth.signal import EcgRecord

DEFAULT_FRAME_LEN = 220

__all__ = ["PeakList", "RrFrame", "FrameSet", "detect_rpeaks", "frame_rr",
           "DEFAULT_FRAME_LEN"]


@dataclass(frozen=True, eq=False)
class PeakList:
    """Strictly increasing sample indices of detected R-peaks."""

    indices: np.ndarray

    def __post_init__(self) -> None:
        idx = np.asarray(self.indices, dtype=int)
        if idx.ndim != 1:
            raise ValueError("peak indices must be one-dimensional")
        if idx.size and (np.any(np.diff(idx) <= 0) or idx[0] < 0):
            raise ValueError("peak indices must be strictly increasing and non-negative")
        idx.flags.writeable = False
        object.__setattr__(self, "indices", idx)

    def __len__(self) -> int:
        return self.indices.size


@dataclass(frozen=True, eq=False)
class RrFrame:
    """One RR interval resampled to a fixed number of amplitudes (mV)."""

    values: np.ndarray
    span: tuple[int, int]  # (start, end) sample indices in the source record

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(values)):
            raise ValueError("frame values must be finite")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True, eq=False)
class FrameSet:
    """All frames cut from one record, labeled with the source entity."""

    entity_id: str
    frames: tuple[RrFrame, ...]
    frame_len: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "frames", tuple(self.frames))
        for f in self.frames:
            if len(f) != self.frame_len:
                raise ValueError("all frames must share the frame length")

    def __len__(self) -> int:
        return len(self.frames)

    def matrix(self) -> np.ndarray:
        """Frames stacked as a (n_frames, frame_len) array."""
        if not self.frames:
            return np.empty((0, self.frame_len))
        return np.vstack([f.values for f in self.frames])


def _rolling_max(x: np.ndarray, win: int) -> np.ndarray:
    """Centered rolling maximum; windows shrink at the edges."""
    n = x.size
    if win >= n:
        return np.full(n, x.max() if n else 0.0)
    half = win // 2
    out = np.empty(n)
    view = np.lib.stride_tricks.sliding_window_view(x, win)
    out[half : half + n - win + 1] = view.max(axis=1)
    for i in range(half):
        out[i] = x[: i - half + win].max()
    for i in range(half + n - win + 1, n):
        out[i] = x[i - half :].max()
    return out


def detect_rpeaks(record: EcgRecord, refractory_s: float = 0.25,
                  thresh_frac: float = 0.4) -> PeakList:
    """Locate R-peaks in a baseline-centered record.

    Candidates are energy samples above ``thresh_frac`` of the rolling 2 s
    energy maximum; the strongest candidate wins within each refractory
    window, and every kept event is refined to the raw local maximum within
    +/-50 ms.
    """
    x = record.samples
    fs = record.fs
    n = x.size
    if n < fs * 1.0:
        raise ValueError(f"record of {n / fs:.3f}s is shorter than 1 s")
    ma_win = int(round(0.150 * fs))
    if ma_win < 3:
        raise ValueError(f"fs={fs} Hz is too low: 150 ms smoothing window "
                         f"spans {ma_win} samples (need >= 3)")

    diff = np.diff(x)
    energy = diff * diff
    kernel = np.ones(ma_win)
    # renormalized moving average so edges are not damped by zero padding
    smooth = np.convolve(energy, kernel, mode="same")
    smooth /= np.convolve(np.ones(energy.size), kernel, mode="same")

    ceiling = _rolling_max(smooth, int(round(2.0 * fs)))
    candidates = np.nonzero(smooth > thresh_frac * ceiling)[0]
    if candidates.size == 0:
        return PeakList(np.empty(0, dtype=int))

    # refractory suppression: strongest energy first, index ascending on ties
    refractory = refractory_s * fs
    order = np.lexsort((candidates, -smooth[candidates]))
    kept: list[int] = []
    for c in candidates[order].tolist():
        pos = bisect.bisect_left(kept, c)
        if pos > 0 and c - kept[pos - 1] < refractory:
            continue
        if pos < len(kept) and kept[pos] - c < refractory:
            continue
        kept.insert(pos, c)

    # refine to raw local maxima
    w = int(round(0.050 * fs))
    refined = []
    for c in kept:
        lo = max(0, c - w)
        hi = min(n, c + w + 1)
        refined.append(lo + int(np.argmax(x[lo:hi])))

    # refinement can merge or reorder events; re-enforce the refractory gap
    final: list[int] = []
    for p in sorted(set(refined)):
        if final and p - final[-1] < refractory:
            if x[p] > x[final[-1]]:
                final[-1] = p
        else:
            final.append(p)
    return PeakList(np.asarray(final, dtype=int))


def frame_rr(record: EcgRecord, peaks: PeakList,
             frame_len: int = DEFAULT_FRAME_LEN) -> FrameSet:
    """Resample each consecutive R-to-R segment onto `frame_len` points.

    The grid spans both endpoints, so frame[0] and frame[-1] sit exactly on
    the anchoring R-peaks; interior values come from linear interpolation.
    """
    if frame_len < 2:
        raise ValueError(f"frame_len must be >= 2, got {frame_len}")
    idx = peaks.indices
    if idx.size and idx[-1] >= record.samples.size:
        raise ValueError(f"peak index {int(idx[-1])} out of bounds for record "
                         f"of {record.samples.size} samples")
    frames = []
    x = record.samples
    for a, b in zip(idx[:-1], idx[1:]):
        grid = np.linspace(a, b, frame_len)
        seg = np.interp(grid, np.arange(a, b + 1), x[a : b + 1])
        frames.append(RrFrame(values=seg, span=(int(a), int(b))))
    return FrameSet(entity_id=record.subject_id, frames=tuple(frames), frame_len=frame_len)
