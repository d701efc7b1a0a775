import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mibracket.config import RunConfig
from mibracket.data import SyntheticSpec, synth_generate, zscore_array
from mibracket.errors import DomainError, UsageError
from mibracket.fusion import (
    TrainTrace,
    adaptive_weight,
    blend,
    early_stop_check,
    fuse,
    train_member,
    train_pair,
)
from oracles import sliding_window_stop

finite = st.floats(-5, 5, allow_nan=False)


class TestAdaptiveWeight:
    @pytest.mark.parametrize("delta, w", [(0.0, 0.3), (0.14, 0.3), (1.0, 0.3), (2.0, 0.5), (4.0, 0.6), (50.0, 0.6)])
    def test_examples(self, delta, w):
        np.testing.assert_allclose(adaptive_weight(delta), w, rtol=1e-15)

    def test_jump_just_above_knee(self):
        np.testing.assert_allclose(adaptive_weight(1.0 + 1e-12), 0.4, rtol=1e-9)

    def test_invalid(self):
        with pytest.raises(UsageError):
            adaptive_weight(-0.1)
        with pytest.raises(DomainError):
            adaptive_weight(math.inf)


class TestFuse:
    @pytest.mark.parametrize(
        "triple, final",
        [
            ((0.00, 0.14, 0.25), 0.12),
            ((0.00, 0.07, 0.26), 0.10),
            ((0.00, 0.10, 0.21), 0.10),
            ((0.24, 0.59, 0.60), 0.47),
        ],
    )
    def test_table_rows(self, triple, final):
        assert abs(fuse(*triple).final - final) <= 0.005

    def test_exact_blends(self):
        np.testing.assert_allclose(fuse(0.0, 0.14, 0.25).final, 0.124, rtol=1e-12)
        b = fuse(0.24, 0.59, 0.60)
        np.testing.assert_allclose([b.delta, b.weight, b.final], [0.35, 0.3, 0.4705], rtol=1e-12)

    @given(finite)
    def test_agreeing_estimates_fixed_point(self, x):
        np.testing.assert_allclose(fuse(x, x, x).final, x, rtol=1e-12, atol=1e-15)

    @given(finite, st.floats(0, 1), finite)
    def test_linear_coefficients_inside_knee(self, mine, width, ksg):
        b = fuse(mine, mine + width, ksg)
        np.testing.assert_allclose(b.final, 0.35 * mine + 0.35 * (mine + width) + 0.3 * ksg, rtol=1e-12, atol=1e-12)

    @given(finite, st.floats(0, 6), finite, st.floats(1e-3, 2))
    def test_strictly_increasing_in_ksg(self, mine, width, ksg, step):
        assert fuse(mine, mine + width, ksg + step).final > fuse(mine, mine + width, ksg).final

    @given(finite, st.floats(1e-6, 3), st.floats(0, 10))
    def test_enforcement_when_mine_exceeds_club(self, club, excess, below):
        ksg = club - below
        raw_mine = club + excess
        b = fuse(raw_mine, club, ksg)
        assert b.mine == club and b.delta == 0.0 and b.raw_mine == raw_mine
        unenforced = blend(raw_mine, club, ksg, 0.3)
        assert abs(b.final - ksg) <= abs(unenforced - ksg) + 1e-12

    def test_enforcement_can_move_final_away_when_ksg_is_high(self):
        # documented limit of the enforcement property: holds only for ksg <= club
        b = fuse(1.0, 0.5, 0.75)
        assert abs(b.final - 0.75) > abs(blend(1.0, 0.5, 0.75, 0.3) - 0.75)

    def test_floored_mine_for_reporting(self):
        b = fuse(-0.04, 0.1, 0.0)
        assert b.mine == -0.04 and b.mine_floored == 0.0

    def test_nonfinite_rejected(self):
        with pytest.raises(DomainError):
            fuse(math.nan, 0.1, 0.1)


class TestEarlyStop:
    def test_six_then_one_above(self):
        assert not early_stop_check([0.05] * 6 + [0.2])

    def test_exactly_seven(self):
        assert early_stop_check([0.05] * 7)
        assert early_stop_check([0.9, 0.5] + [0.05] * 7)

    def test_threshold_is_strict(self):
        assert not early_stop_check([0.1] * 7)

    @given(st.lists(st.floats(0, 0.2), max_size=30))
    def test_matches_sliding_window(self, deltas):
        assert early_stop_check(deltas) == sliding_window_stop(deltas)


class TestTraceWindow:
    def test_short_trace_uses_all_epochs(self):
        t = TrainTrace(0, 0, mine=[1.0, 2.0, 3.0], club=[2.0, 4.0, 6.0])
        assert t.window_means(10) == (2.0, 4.0)

    def test_last_ten(self):
        t = TrainTrace(0, 0, mine=list(range(20)), club=list(range(20)))
        assert t.window_means(10) == (14.5, 14.5)

    def test_empty(self):
        with pytest.raises(UsageError):
            TrainTrace(0, 0).window_means()


@pytest.fixture(scope="module")
def small_pair():
    x, y, _ = synth_generate(SyntheticSpec(rho=0.5, n=300, seed=5))
    return x, y


class TestTrainPair:
    def test_single_member_is_plain_window_mean(self, small_pair):
        cfg = RunConfig(ensemble=1, epochs=12, early_stop_delta=0.0)
        res = train_pair(*small_pair, cfg, seed=3)
        (t,) = res.traces
        assert t.epochs == 12 and t.stopped_epoch is None
        assert res.member_mine == [float(np.mean(t.mine[-10:]))]
        assert res.member_club == [float(np.mean(t.club[-10:]))]

    def test_identical_seeds_bit_identical(self, small_pair):
        cfg = RunConfig(epochs=6)
        a = train_pair(*small_pair, cfg, seed=21).to_dict()
        b = train_pair(*small_pair, cfg, seed=21).to_dict()
        assert a == b
        c = train_pair(*small_pair, cfg, seed=22).to_dict()
        assert c["bracket"] != a["bracket"]

    def test_workers_do_not_change_results(self, small_pair):
        cfg = RunConfig(epochs=4)
        serial = train_pair(*small_pair, cfg, seed=8, workers=1).to_dict()
        parallel = train_pair(*small_pair, cfg, seed=8, workers=2).to_dict()
        assert serial == parallel

    def test_member_replays_independently(self, small_pair):
        cfg = RunConfig(epochs=5)
        res = train_pair(*small_pair, cfg, seed=4)
        xz, yz = (zscore_array(m.values)[0] for m in small_pair)
        again = train_member(xz, yz, cfg, res.seeds["members"][2], member=2)
        assert again.mine == res.traces[2].mine

    def test_independent_pair_final_and_early_stop(self):
        x, y, _ = synth_generate(SyntheticSpec(rho=0.0, n=500, seed=31))
        res = train_pair(x, y, RunConfig(), seed=31)
        assert abs(res.final) <= 0.08
        assert all(t.stopped_epoch is not None and t.stopped_epoch < 20 for t in res.traces)

    def test_row_mismatch(self, small_pair):
        with pytest.raises(UsageError):
            train_pair(small_pair[0], small_pair[1].take(np.arange(10)), RunConfig(epochs=1))

