"""Command-line frontend.

Commands: gen (synthetic cohort), frames (frame dump), enroll, auth, eval,
sweep, bench, rank. All randomness is seed-derived, so identical invocations
on identical inputs produce byte-identical outputs. Exit codes: 0 success
(a quality rejection is a reported outcome, not an error), 1 domain error,
2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from rrauth import authcore, evalx, infotheory, learners
from rrauth import signal as ecgsig
from rrauth.authcore import ReferenceDb, load_db, save_db
from rrauth.beat import DEFAULT_FRAME_LEN, detect_rpeaks, frame_rr

EPOCH_TIMESTAMP = "1970-01-01T00:00:00+00:00"  # fixed default keeps runs replayable

__all__ = ["main", "build_parser", "RunConfig"]


@dataclass(frozen=True)
class RunConfig:
    """Resolved per-invocation parameters, echoed in the run header."""

    command: str
    values: tuple[tuple[str, object], ...]

    def header(self) -> str:
        pairs = " ".join(f"{k}={v}" for k, v in self.values)
        return f"# rrauth {self.command}\n# {pairs}"


def _print_header(command: str, **values) -> None:
    print(RunConfig(command=command, values=tuple(values.items())).header())


def _float_csv(value: float) -> str:
    return repr(float(value))


# ---------------------------------------------------------------------------
# manifest handling


def _write_manifest(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_manifest(path) -> tuple[dict, Path]:
    path = Path(path)
    if not path.exists():
        raise ValueError(f"manifest {path} does not exist")
    doc = json.loads(path.read_text(encoding="utf-8"))
    if "subjects" not in doc:
        raise ValueError(f"{path}: not a cohort manifest")
    return doc, path.parent


def _manifest_records(doc: dict, base: Path, offset_s: float):
    """Yield (subject dict, record sliced from offset_s) for each subject."""
    for subject in doc["subjects"]:
        record = ecgsig.load_csv(base / subject["file"], subject_id=subject["id"])
        if offset_s > 0:
            record = ecgsig.slice_seconds(record, offset_s)
        yield subject, record


# ---------------------------------------------------------------------------
# commands


def cmd_gen(args) -> int:
    if args.enrolled < 1:
        raise ValueError(f"need at least 1 enrolled subject, got {args.enrolled}")
    if args.unknown < 0:
        raise ValueError(f"unknown count must be >= 0, got {args.unknown}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _print_header("gen", seed=args.seed, enrolled=args.enrolled, unknown=args.unknown,
                  fs=args.fs, duration_s=args.duration_s, min_sep_mse=args.min_sep)

    total = args.enrolled + args.unknown
    profiles = ecgsig.cohort_profiles(total, args.seed, min_separation_mse=args.min_sep,
                                      frame_len=args.frame_len)
    subjects = []
    for k, profile in enumerate(profiles):
        role = "enrolled" if k < args.enrolled else "unknown"
        sid = f"e{k + 1:02d}" if role == "enrolled" else f"u{k - args.enrolled + 1:02d}"
        record, _ = ecgsig.synth_ecg(profile, args.duration_s, args.fs)
        record = ecgsig.EcgRecord(sid, record.fs, record.samples)
        ecgsig.save_csv(record, out / f"{sid}.csv")
        subjects.append({
            "id": sid,
            "role": role,
            "file": f"{sid}.csv",
            "seed": profile.seed,
            "profile": ecgsig.profile_to_dict(profile),
        })
    manifest = {
        "format": "rrauth-cohort",
        "version": "1",
        "seed": args.seed,
        "fs": args.fs,
        "duration_s": args.duration_s,
        "subjects": subjects,
    }
    _write_manifest(out / "manifest.json", manifest)
    print(f"wrote {total} records + manifest to {out}")
    return 0


def cmd_frames(args) -> int:
    record = ecgsig.load_csv(args.input)
    _print_header("frames", input=args.input, frame_len=args.frame_len)
    clean = ecgsig.preprocess(record)
    peaks = detect_rpeaks(clean)
    frames = frame_rr(clean, peaks, args.frame_len)
    lines = [",".join(_float_csv(v) for v in f.values.tolist()) for f in frames.frames]
    Path(args.dump).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"peaks={len(peaks)} frames={len(frames)} -> {args.dump}")
    return 0


def cmd_enroll(args) -> int:
    db_path = Path(args.db)
    db = load_db(db_path) if db_path.exists() else ReferenceDb(frame_len=args.frame_len)
    if db.frame_len != args.frame_len:
        raise ValueError(f"database frame length {db.frame_len} != --frame-len {args.frame_len}")
    _print_header("enroll", db=args.db, frame_len=args.frame_len,
                  train_window_s=args.train_window_s, min_leaf=args.min_leaf)

    targets: list[tuple[str, ecgsig.EcgRecord]] = []
    if args.manifest:
        doc, base = _load_manifest(args.manifest)
        for subject in doc["subjects"]:
            if subject["role"] != "enrolled":
                continue
            targets.append((subject["id"],
                            ecgsig.load_csv(base / subject["file"], subject_id=subject["id"])))
    else:
        if not args.input or not args.id:
            raise ValueError("enroll needs either --manifest or --input with --id")
        targets.append((args.id, ecgsig.load_csv(args.input, subject_id=args.id)))

    for entity_id, record in targets:
        entry = authcore.enroll(db, entity_id, record,
                                train_window_s=args.train_window_s,
                                allow_short=args.allow_short,
                                min_leaf_size=args.min_leaf,
                                max_depth=args.max_depth,
                                enrolled_at=args.enrolled_at)
        print(f"enrolled {entity_id}: frames={entry.stats.mses.size} "
              f"mean_mse={entry.stats.mean!r} ucl={entry.stats.ucl!r}")
    save_db(db, db_path)
    print(f"database: {len(db.entries)} entities -> {db_path}")
    return 0


def _resolve_gate(db: ReferenceDb, gate_ucl) -> float:
    if gate_ucl is not None:
        return gate_ucl
    return float(np.median([e.stats.ucl for e in db.entries.values()]))


def cmd_auth(args) -> int:
    db = load_db(args.db)
    record = ecgsig.load_csv(args.input)
    if args.offset_s > 0:
        record = ecgsig.slice_seconds(record, args.offset_s)
    gate = _resolve_gate(db, args.gate_ucl)
    _print_header("auth", db=args.db, input=args.input, gate_ucl=gate,
                  test_window_s=args.test_window_s, apr_min=args.apr_min,
                  id_margin=args.id_margin, offset_s=args.offset_s)
    decision = authcore.authenticate(db, record, gate,
                                     test_window_s=args.test_window_s,
                                     apr_min=args.apr_min, id_margin=args.id_margin)
    if decision.kind == authcore.REJECTED:
        print(f"decision=Rejected apr={decision.apr!r}")
    elif decision.kind == authcore.KNOWN:
        print(f"decision=Known:{decision.entity_id} score={decision.score!r} "
              f"apr={decision.apr!r}")
    else:
        print(f"decision=Unknown score={decision.score!r} apr={decision.apr!r}")
    return 0


def _build_pool(db: ReferenceDb, manifest_path, offset_s: float):
    doc, base = _load_manifest(manifest_path)
    pool = []
    for subject, record in _manifest_records(doc, base, offset_s):
        truth = subject["id"] if subject["role"] == "enrolled" else None
        pool.append((record, truth))
    return pool


def cmd_eval(args) -> int:
    db = load_db(args.db)
    offset = args.offset_s if args.offset_s is not None else args.train_window_s
    pool = _build_pool(db, args.manifest, offset)
    gate = _resolve_gate(db, args.gate_ucl)
    _print_header("eval", db=args.db, manifest=args.manifest, trials=args.trials,
                  gate_ucl=gate, seed=args.seed, test_window_s=args.test_window_s,
                  apr_min=args.apr_min, id_margin=args.id_margin, offset_s=offset)
    cm, _ = evalx.run_trials(db, pool, n=args.trials, gate_ucl=gate, seed=args.seed,
                             test_window_s=args.test_window_s,
                             apr_min=args.apr_min, id_margin=args.id_margin)
    chi, degenerate = evalx.accuracy(cm)
    op = evalx.overall_performance(cm.accepted, cm.total, chi)
    print(evalx.format_confusion(cm))
    suffix = " (no accepted trials)" if degenerate else ""
    print(f"phi={cm.accepted} N={cm.total} accuracy={chi!r}{suffix} op={op!r}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "confusion.csv").write_text(evalx.confusion_csv(cm), encoding="utf-8")
        print(f"wrote {out / 'confusion.csv'}")
    return 0


def _parse_grid(spec: str) -> np.ndarray:
    parts = spec.split(":")
    if len(parts) != 3:
        raise ValueError(f"grid spec must be lo:hi:steps, got {spec!r}")
    try:
        lo, hi, steps = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ValueError(f"grid spec must be lo:hi:steps, got {spec!r}") from None
    if steps < 1:
        raise ValueError(f"grid needs >= 1 step, got {steps}")
    if steps > 1 and hi <= lo:
        raise ValueError(f"grid needs hi > lo, got {spec!r}")
    return np.linspace(lo, hi, steps)


def cmd_sweep(args) -> int:
    db = load_db(args.db)
    offset = args.offset_s if args.offset_s is not None else args.train_window_s
    pool = _build_pool(db, args.manifest, offset)
    if args.grid:
        grid = _parse_grid(args.grid)
    else:
        grid = evalx.auto_grid(db, points=args.grid_points)
    _print_header("sweep", db=args.db, manifest=args.manifest, trials=args.trials,
                  seed=args.seed, grid_points=grid.size, grid_lo=float(grid[0]),
                  grid_hi=float(grid[-1]), test_window_s=args.test_window_s,
                  apr_min=args.apr_min, id_margin=args.id_margin, offset_s=offset)
    points, best = evalx.sweep_ucl(db, pool, grid, n=args.trials, seed=args.seed,
                                   test_window_s=args.test_window_s,
                                   apr_min=args.apr_min, id_margin=args.id_margin)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(evalx.sweep_csv(points), encoding="utf-8")
    print(f"wrote {len(points)} grid points -> {out / 'sweep.csv'}")
    print(f"best ucl={best.ucl!r} phi={best.accepted} N={best.n_trials} "
          f"accuracy={best.accuracy!r} op={best.op!r}")
    return 0


def _training_pairs(record, frame_len, train_window_s):
    clean = ecgsig.preprocess(record)
    n_keep = min(len(clean), int(round(train_window_s * clean.fs)))
    clean = ecgsig.EcgRecord(clean.subject_id, clean.fs, clean.samples[:n_keep])
    peaks = detect_rpeaks(clean)
    frames = frame_rr(clean, peaks, frame_len)
    matrix = frames.matrix()
    if matrix.shape[0] < 1:
        raise ValueError("record produced no frames")
    X = np.tile(np.arange(frame_len, dtype=float), matrix.shape[0]).reshape(-1, 1)
    return X, matrix.ravel()


def cmd_bench(args) -> int:
    record = ecgsig.load_csv(args.input)
    X, y = _training_pairs(record, args.frame_len, args.train_window_s)
    if X.shape[0] > args.limit:
        keep = np.random.default_rng(args.seed).choice(X.shape[0], size=args.limit,
                                                       replace=False)
        keep.sort()
        X, y = X[keep], y[keep]
    _print_header("bench", input=args.input, pairs=X.shape[0],
                  min_leaf=args.min_leaf, kernel_scale=args.kernel_scale,
                  svr_c=args.svr_c, seed=args.seed)

    t0 = time.perf_counter()
    dt_model = learners.train_dt(X, y, learners.DtParams(min_leaf_size=args.min_leaf))
    dt_time = time.perf_counter() - t0
    dt_rep = learners.fit_report(lambda row: learners.predict_dt(dt_model, row),
                                 X, y, dt_time)

    t0 = time.perf_counter()
    svr_model = learners.train_svr(X, y, C=args.svr_c, epsilon=args.svr_epsilon,
                                   kernel_scale=args.kernel_scale,
                                   max_sweeps=args.svr_max_sweeps)
    svr_time = time.perf_counter() - t0
    svr_pred = learners.kernel_predict_batch(svr_model, X)
    svr_err = svr_pred - y
    svr_rep = learners.FitReport(rmse=float(np.sqrt(np.mean(svr_err ** 2))),
                                 mae=float(np.mean(np.abs(svr_err))),
                                 train_time=svr_time)

    rows = [
        ("RMSE (mV)", dt_rep.rmse, svr_rep.rmse),
        ("MAE (mV)", dt_rep.mae, svr_rep.mae),
        ("Training Time (s)", dt_rep.train_time, svr_rep.train_time),
    ]
    print(f"{'metric':<20}{'DT (fine tree)':>18}{'SVR (fine Gaussian)':>22}")
    for name, dt_v, svr_v in rows:
        print(f"{name:<20}{dt_v:>18.6f}{svr_v:>22.6f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        lines = ["metric,dt,svr"]
        for name, dt_v, svr_v in rows:
            lines.append(f"{name},{dt_v!r},{svr_v!r}")
        (out / "bench.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        print(f"wrote {out / 'bench.csv'}")
    return 0


def cmd_rank(args) -> int:
    doc, base = _load_manifest(args.manifest)
    _print_header("rank", manifest=args.manifest, bins=args.bins, k=args.k,
                  frame_len=args.frame_len, train_window_s=args.train_window_s)
    sets = []
    for subject in doc["subjects"]:
        if subject["role"] != "enrolled":
            continue
        record = ecgsig.load_csv(base / subject["file"], subject_id=subject["id"])
        clean = ecgsig.preprocess(record)
        n_keep = min(len(clean), int(round(args.train_window_s * clean.fs)))
        clean = ecgsig.EcgRecord(clean.subject_id, clean.fs, clean.samples[:n_keep])
        frames = frame_rr(clean, detect_rpeaks(clean), args.frame_len)
        sets.append(frames)
    ranking = infotheory.rank_features(sets, bins=args.bins, top_k=args.k)
    lines = ["position,mi_bits"]
    lines.extend(f"{pos},{mi!r}" for pos, mi in ranking.entries)
    text = "\n".join(lines) + "\n"
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "ranking.csv").write_text(text, encoding="utf-8")
        print(f"wrote {out / 'ranking.csv'}")
    print(text, end="")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_auth_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--gate-ucl", type=float, default=None, metavar="MV2",
                   help="quality gate threshold in mV^2 "
                        "(default: median of enrolled training UCLs)")
    p.add_argument("--test-window-s", type=float, default=15.0, metavar="S",
                   help="probe truncation window in seconds (default 15)")
    p.add_argument("--apr-min", type=float, default=0.5, metavar="FRAC",
                   help="minimum accepted-frame fraction before rejection (default 0.5)")
    p.add_argument("--id-margin", type=float, default=1.0, metavar="X",
                   help="identify as known iff score <= margin * entity UCL (default 1.0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rrauth",
        description="ECG biometric authentication via RR-interval framing.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a seeded synthetic cohort")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--enrolled", type=int, default=10, help="enrolled subject count")
    p.add_argument("--unknown", type=int, default=2, help="unknown subject count")
    p.add_argument("--seed", type=int, default=42, help="cohort seed")
    p.add_argument("--fs", type=float, default=360.0, help="sampling frequency in Hz")
    p.add_argument("--duration-s", type=float, default=65.0,
                   help="record length in seconds (train + test, default 65)")
    p.add_argument("--min-sep", type=float, default=0.010, metavar="MV2",
                   help="minimum pairwise mean-square template separation "
                        "in mV^2 (default 0.010)")
    p.add_argument("--frame-len", type=int, default=DEFAULT_FRAME_LEN)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("frames", help="dump RR frames of a record as CSV")
    p.add_argument("--input", required=True, help="ECG CSV path")
    p.add_argument("--dump", required=True, help="output CSV (one row per frame)")
    p.add_argument("--frame-len", type=int, default=DEFAULT_FRAME_LEN,
                   help="samples per frame (default 220)")
    p.set_defaults(func=cmd_frames)

    p = sub.add_parser("enroll", help="enroll subjects into a reference database")
    p.add_argument("--db", required=True, help="database JSON path (created if absent)")
    p.add_argument("--manifest", help="cohort manifest; enrolls every 'enrolled' subject")
    p.add_argument("--input", help="single ECG CSV to enroll")
    p.add_argument("--id", help="entity id for --input")
    p.add_argument("--frame-len", type=int, default=DEFAULT_FRAME_LEN)
    p.add_argument("--train-window-s", type=float, default=50.0, metavar="S",
                   help="training truncation window in seconds (default 50)")
    p.add_argument("--min-leaf", type=int, default=4, help="tree minimum leaf size")
    p.add_argument("--max-depth", type=int, default=32, help="tree depth limit")
    p.add_argument("--allow-short", action="store_true",
                   help="accept records shorter than the training window")
    p.add_argument("--enrolled-at", default=EPOCH_TIMESTAMP,
                   help="stored enrollment timestamp (fixed default keeps "
                        "re-runs byte-identical)")
    p.set_defaults(func=cmd_enroll)

    p = sub.add_parser("auth", help="authenticate one probe record")
    p.add_argument("--db", required=True)
    p.add_argument("--input", required=True, help="probe ECG CSV")
    p.add_argument("--offset-s", type=float, default=0.0, metavar="S",
                   help="skip this many seconds before the probe window (default 0)")
    _add_auth_flags(p)
    p.set_defaults(func=cmd_auth)

    p = sub.add_parser("eval", help="run seeded authentication trials; print the matrix")
    p.add_argument("--db", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-window-s", type=float, default=50.0, metavar="S",
                   help="used as the default probe offset into each record")
    p.add_argument("--offset-s", type=float, default=None, metavar="S",
                   help="probe offset; defaults to --train-window-s so tests "
                        "never reuse training samples")
    p.add_argument("--out", help="directory for confusion.csv")
    _add_auth_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="sweep the gate UCL and report overall performance")
    p.add_argument("--db", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid", metavar="LO:HI:STEPS",
                   help="explicit UCL grid (mV^2); omit for --grid-auto behavior")
    p.add_argument("--grid-auto", action="store_true",
                   help="40 points spanning 0.5x..3x the median training UCL (default)")
    p.add_argument("--grid-points", type=int, default=40)
    p.add_argument("--train-window-s", type=float, default=50.0, metavar="S")
    p.add_argument("--offset-s", type=float, default=None, metavar="S")
    p.add_argument("--out", required=True, help="directory for sweep.csv")
    _add_auth_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", help="compare tree vs kernel regression on one record")
    p.add_argument("--input", required=True, help="ECG CSV supplying training pairs")
    p.add_argument("--frame-len", type=int, default=DEFAULT_FRAME_LEN)
    p.add_argument("--train-window-s", type=float, default=50.0, metavar="S")
    p.add_argument("--limit", type=int, default=2000,
                   help="max training pairs; larger sets are subsampled (default 2000)")
    p.add_argument("--seed", type=int, default=0, help="subsampling seed")
    p.add_argument("--min-leaf", type=int, default=4)
    p.add_argument("--kernel-scale", type=float, default=0.35)
    p.add_argument("--svr-c", type=float, default=1.0)
    p.add_argument("--svr-epsilon", type=float, default=None,
                   help="tube width; default IQR/13.49")
    p.add_argument("--svr-max-sweeps", type=int, default=30)
    p.add_argument("--out", help="directory for bench.csv")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("rank", help="rank frame positions by mutual information")
    p.add_argument("--manifest", required=True)
    p.add_argument("--bins", type=int, default=16)
    p.add_argument("--k", type=int, default=32, help="positions to report")
    p.add_argument("--frame-len", type=int, default=DEFAULT_FRAME_LEN)
    p.add_argument("--train-window-s", type=float, default=50.0, metavar="S")
    p.add_argument("--out", help="directory for ranking.csv")
    p.set_defaults(func=cmd_rank)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"{args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
