import numpy as np
import pytest

from rrauth.authcore import ReferenceDb, enroll
from rrauth.signal import (EcgRecord, SubjectProfile, Wave, cohort_profiles,
                           slice_seconds, synth_ecg)

FS = 360.0
COHORT_SEED = 42
EPOCH = "1970-01-01T00:00:00+00:00"


def quiet_profile(seed: int = 0, heart_rate_bpm: float = 60.0,
                  rr_jitter: float = 0.0, noise_sd: float = 0.0) -> SubjectProfile:
    """Narrow, well-separated waves; handy when exact alignment matters."""
    waves = {
        "P": Wave(phase=0.14, width=0.030, amplitude=0.15),
        "Q": Wave(phase=0.31, width=0.010, amplitude=-0.12),
        "R": Wave(phase=0.35, width=0.018, amplitude=1.0),
        "S": Wave(phase=0.40, width=0.012, amplitude=-0.25),
        "T": Wave(phase=0.65, width=0.060, amplitude=0.30),
    }
    return SubjectProfile(heart_rate_bpm=heart_rate_bpm, rr_jitter=rr_jitter,
                          waves=waves, noise_sd=noise_sd, seed=seed)


@pytest.fixture(scope="session")
def small_cohort():
    """3 enrolled + 1 unknown, 65 s each: enough for auth and trial tests."""
    profiles = cohort_profiles(4, seed=COHORT_SEED)
    records = []
    for k, prof in enumerate(profiles):
        sid = f"e{k + 1:02d}" if k < 3 else "u01"
        rec, _ = synth_ecg(prof, 65.0, FS)
        records.append((sid, k < 3, EcgRecord(sid, rec.fs, rec.samples)))
    return records


@pytest.fixture(scope="session")
def small_db(small_cohort):
    db = ReferenceDb(frame_len=220)
    for sid, enrolled, rec in small_cohort:
        if enrolled:
            enroll(db, sid, rec, enrolled_at=EPOCH)
    return db


@pytest.fixture(scope="session")
def small_pool(small_cohort):
    """Probe slices disjoint from the 50 s training windows."""
    return [(slice_seconds(rec, 50.0), sid if enrolled else None)
            for sid, enrolled, rec in small_cohort]
