import numpy as np
import pytest

from rrauth.evalx import (ConfusionMatrix, accuracy, auto_grid, confusion_csv,
                          format_confusion, overall_performance, run_trials,
                          sweep_csv, sweep_ucl)


def table2():
    return ConfusionMatrix(kk_correct=72, kk_wrong=0, ku=3, uk=16, uu=9)


def table3():
    return ConfusionMatrix(kk_correct=79, kk_wrong=0, ku=3, uk=1, uu=9,
                           rejected=8)


class TestConfusionMatrix:
    def test_counts(self):
        cm = table3()
        assert cm.accepted == 92
        assert cm.total == 100

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            ConfusionMatrix(kk_correct=-1)

    def test_csv_shape(self):
        text = confusion_csv(table3())
        header, row, _ = text.split("\n")
        assert header == "kk_correct,kk_wrong,ku,uk,uu,rejected,N"
        assert row == "79,0,3,1,9,8,100"

    def test_text_table_cells_sum_to_total(self):
        cm = table3()
        text = format_confusion(cm)
        lines = text.splitlines()
        kk, ku = (int(v) for v in lines[1].split()[2:])
        uk, uu = (int(v) for v in lines[2].split()[2:])
        rejected = int(lines[3].split(":")[1])
        assert kk + ku + uk + uu + rejected == cm.total


class TestAccuracy:
    def test_first_experiment(self):
        chi, degenerate = accuracy(table2())
        assert not degenerate
        assert chi == pytest.approx(0.81)

    def test_second_experiment(self):
        chi, _ = accuracy(table3())
        assert chi == pytest.approx(88 / 92, abs=1e-9)

    def test_degenerate_denominator(self):
        chi, degenerate = accuracy(ConfusionMatrix(rejected=10))
        assert chi == 0.0 and degenerate


class TestOverallPerformance:
    def test_published_tuples(self):
        assert overall_performance(100, 100, 0.81) == pytest.approx(0.81)
        assert overall_performance(92, 100, 88 / 92) == pytest.approx(0.88, abs=5e-3)
        assert overall_performance(61, 70, 0.95) == pytest.approx(0.8279, abs=5e-4)

    def test_nothing_accepted(self):
        assert overall_performance(0, 50, 1.0) == 0.0

    def test_accepted_exceeds_total(self):
        with pytest.raises(ValueError):
            overall_performance(11, 10, 0.5)

    def test_chi_out_of_range(self):
        with pytest.raises(ValueError):
            overall_performance(5, 10, 1.5)

    def test_bounds(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            total = int(rng.integers(1, 200))
            accepted = int(rng.integers(0, total + 1))
            chi = float(rng.uniform())
            op = overall_performance(accepted, total, chi)
            assert 0.0 <= op <= min(accepted / total, chi) + 1e-12


class TestRunTrials:
    def test_enrolled_only_pool_with_open_gate(self, small_db, small_pool):
        enrolled_pool = [(r, t) for r, t in small_pool if t is not None]
        cm, outcomes = run_trials(small_db, enrolled_pool, n=40, gate_ucl=np.inf,
                                  seed=5)
        assert cm.ku == 0 and cm.uu == 0 and cm.rejected == 0
        assert cm.total == 40
        assert len(outcomes) == 40

    def test_deterministic(self, small_db, small_pool):
        cm1, o1 = run_trials(small_db, small_pool, n=25, gate_ucl=0.002, seed=9)
        cm2, o2 = run_trials(small_db, small_pool, n=25, gate_ucl=0.002, seed=9)
        assert cm1 == cm2
        assert [o.pool_index for o in o1] == [o.pool_index for o in o2]
        assert [o.decision.kind for o in o1] == [o.decision.kind for o in o2]

    def test_matrix_conservation(self, small_db, small_pool):
        cm, _ = run_trials(small_db, small_pool, n=37, gate_ucl=0.001, seed=2)
        assert (cm.kk_correct + cm.kk_wrong + cm.ku + cm.uk + cm.uu
                + cm.rejected) == 37

    def test_unknown_truth_must_be_none_or_enrolled(self, small_db, small_pool):
        bad_pool = [(small_pool[0][0], "ghost")]
        with pytest.raises(ValueError, match="ghost"):
            run_trials(small_db, bad_pool, n=5, gate_ucl=0.01, seed=0)

    def test_empty_pool(self, small_db):
        with pytest.raises(ValueError, match="pool"):
            run_trials(small_db, [], n=5, gate_ucl=0.01, seed=0)

    def test_bad_n(self, small_db, small_pool):
        with pytest.raises(ValueError, match="n must be"):
            run_trials(small_db, small_pool, n=0, gate_ucl=0.01, seed=0)


class TestSweep:
    def test_single_point_is_argmax(self, small_db, small_pool):
        points, best = sweep_ucl(small_db, small_pool, [0.002], n=20, seed=3)
        assert len(points) == 1
        assert best == points[0]

    def test_below_min_mse_accepts_nothing(self, small_db, small_pool):
        points, _ = sweep_ucl(small_db, small_pool, [1e-15], n=20, seed=3)
        assert points[0].accepted == 0
        assert points[0].op == 0.0

    def test_accepted_non_decreasing_in_ucl(self, small_db, small_pool):
        grid = auto_grid(small_db, points=12)
        points, _ = sweep_ucl(small_db, small_pool, grid, n=50, seed=11)
        phis = [p.accepted for p in points]
        assert all(a <= b for a, b in zip(phis, phis[1:]))

    def test_op_identity_per_point(self, small_db, small_pool):
        points, _ = sweep_ucl(small_db, small_pool, auto_grid(small_db, points=6),
                              n=30, seed=4)
        for p in points:
            assert p.op == pytest.approx((p.accepted / p.n_trials) * p.accuracy,
                                         abs=1e-12)

    def test_argmax_dominates(self, small_db, small_pool):
        points, best = sweep_ucl(small_db, small_pool, auto_grid(small_db, points=8),
                                 n=30, seed=6)
        assert all(best.op >= p.op for p in points)
        first_max = min(p.ucl for p in points if p.op == best.op)
        assert best.ucl == first_max  # ties toward the smaller UCL

    def test_empty_grid(self, small_db, small_pool):
        with pytest.raises(ValueError, match="grid"):
            sweep_ucl(small_db, small_pool, [], n=10, seed=0)

    def test_non_increasing_grid(self, small_db, small_pool):
        with pytest.raises(ValueError, match="increasing"):
            sweep_ucl(small_db, small_pool, [0.002, 0.001], n=10, seed=0)

    def test_csv_replayable(self, small_db, small_pool):
        grid = auto_grid(small_db, points=5)
        p1, _ = sweep_ucl(small_db, small_pool, grid, n=15, seed=8)
        p2, _ = sweep_ucl(small_db, small_pool, grid, n=15, seed=8)
        assert sweep_csv(p1) == sweep_csv(p2)
        assert sweep_csv(p1).splitlines()[0] == "ucl,phi,N,accuracy,op"
