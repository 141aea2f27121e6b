import numpy as np
import pytest

from rrauth.beat import FrameSet, PeakList, RrFrame, detect_rpeaks, frame_rr
from rrauth.signal import EcgRecord, preprocess, synth_ecg

from conftest import quiet_profile

FS = 360.0


def detect_on(profile, duration_s=60.0, fs=FS):
    rec, truth = synth_ecg(profile, duration_s, fs)
    return preprocess(rec), truth


class TestDetect:
    def test_matches_ground_truth(self):
        clean, truth = detect_on(quiet_profile(seed=1, noise_sd=0.02))
        peaks = detect_rpeaks(clean)
        assert abs(len(peaks) - len(truth)) <= 1
        tol = int(round(0.010 * FS))
        for t in truth:
            assert np.min(np.abs(peaks.indices - t)) <= tol

    def test_all_zero_signal(self):
        rec = EcgRecord("z", FS, np.zeros(int(2 * FS)))
        assert len(detect_rpeaks(rec)) == 0

    def test_two_beats(self):
        rec, truth = synth_ecg(quiet_profile(), 2.0, FS)
        peaks = detect_rpeaks(preprocess(rec))
        assert len(peaks) == 2
        assert abs(int(np.diff(peaks.indices)[0]) - 360) <= 1

    def test_refractory_gap_enforced(self):
        clean, _ = detect_on(quiet_profile(seed=5, rr_jitter=0.06, noise_sd=0.02,
                                           heart_rate_bpm=90.0), 30.0)
        peaks = detect_rpeaks(clean, refractory_s=0.25)
        assert np.all(np.diff(peaks.indices) >= 0.25 * FS)

    def test_record_too_short(self):
        rec = EcgRecord("s", FS, np.zeros(100))
        with pytest.raises(ValueError, match="shorter than 1 s"):
            detect_rpeaks(rec)

    def test_fs_too_low_for_smoothing(self):
        rec = EcgRecord("s", 10.0, np.zeros(20))
        with pytest.raises(ValueError, match="150 ms"):
            detect_rpeaks(rec)


class TestPeakList:
    def test_not_increasing(self):
        with pytest.raises(ValueError):
            PeakList(np.array([5, 5, 9]))

    def test_negative(self):
        with pytest.raises(ValueError):
            PeakList(np.array([-1, 5]))


class TestFrameRr:
    def test_count_and_length(self):
        rec = EcgRecord("x", FS, np.random.default_rng(0).normal(size=4000))
        peaks = PeakList(np.array([100, 800, 1500, 2200, 2900]))
        fs = frame_rr(rec, peaks, 220)
        assert len(fs) == 4
        assert all(len(f) == 220 for f in fs.frames)

    def test_linear_ramp_closed_form(self):
        n = 1001
        rec = EcgRecord("r", FS, np.linspace(0.0, 1.0, n))
        fs = frame_rr(rec, PeakList(np.array([0, n - 1])), 220)
        frame = fs.frames[0].values
        assert frame[0] == 0.0
        assert frame[-1] == 1.0
        expect = np.arange(220) / 219
        assert np.max(np.abs(frame - expect)) < 1e-12

    @pytest.mark.parametrize("npeaks", [0, 1])
    def test_too_few_peaks_empty(self, npeaks):
        rec = EcgRecord("x", FS, np.zeros(1000))
        fs = frame_rr(rec, PeakList(np.arange(npeaks) * 100), 220)
        assert len(fs) == 0

    def test_frame_len_too_small(self):
        rec = EcgRecord("x", FS, np.zeros(1000))
        with pytest.raises(ValueError, match="frame_len"):
            frame_rr(rec, PeakList(np.array([0, 500])), 1)

    def test_peak_out_of_bounds(self):
        rec = EcgRecord("x", FS, np.zeros(1000))
        with pytest.raises(ValueError, match="out of bounds"):
            frame_rr(rec, PeakList(np.array([0, 1000])), 220)

    def test_endpoints_anchored_exactly(self):
        rng = np.random.default_rng(1)
        rec = EcgRecord("x", FS, rng.normal(size=2000))
        peaks = PeakList(np.array([13, 641, 1388]))
        fs = frame_rr(rec, peaks, 220)
        for frame, (a, b) in zip(fs.frames, [(13, 641), (641, 1388)]):
            assert frame.values[0] == rec.samples[a]
            assert frame.values[-1] == rec.samples[b]
            assert frame.span == (a, b)

    def test_interpolation_stays_in_segment_range(self):
        rng = np.random.default_rng(2)
        rec = EcgRecord("x", FS, rng.normal(size=3000))
        peaks = PeakList(np.sort(rng.choice(3000, size=6, replace=False)))
        fs = frame_rr(rec, peaks, 220)
        for frame in fs.frames:
            a, b = frame.span
            seg = rec.samples[a : b + 1]
            assert frame.values.min() >= seg.min() - 1e-12
            assert frame.values.max() <= seg.max() + 1e-12

    def test_offset_invariance(self):
        rng = np.random.default_rng(3)
        base = rng.normal(size=2000)
        peaks = PeakList(np.array([50, 700, 1300, 1900]))
        f0 = frame_rr(EcgRecord("x", FS, base), peaks, 220).matrix()
        f1 = frame_rr(EcgRecord("x", FS, base + 2.5), peaks, 220).matrix()
        assert np.max(np.abs((f1 - f0) - 2.5)) < 1e-12

    def test_periodic_signal_gives_identical_frames(self):
        rec, _ = synth_ecg(quiet_profile(), 20.0, FS)
        clean = preprocess(rec)
        frames = frame_rr(clean, detect_rpeaks(clean), 220).matrix()
        diffs = np.abs(np.diff(frames, axis=0))
        assert diffs.max() <= 1e-6


def test_frameset_rejects_mismatched_lengths():
    f1 = RrFrame(np.zeros(220), (0, 10))
    f2 = RrFrame(np.zeros(100), (10, 20))
    with pytest.raises(ValueError):
        FrameSet("x", (f1, f2), 220)
