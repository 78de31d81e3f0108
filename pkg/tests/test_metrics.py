import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from avam.demo import DemoFrame, DemoTrajectory, KeyframeSet, discover_keyframes, scripted_demo
from avam.env import EXECUTION_FAILURE, SUCCESS, TIMEOUT, ActiveVisionEnv
from avam.geometry import GripperPose, Viewpoint
from avam.metrics import (
    CSV_COLUMNS,
    EpisodeRecord,
    MetricsError,
    StepEntry,
    aiig,
    assig,
    episode_stats,
    read_report_csv,
    relative_tor,
    report_csv,
    tor,
)
from avam.scene import make_layout


def record(outcome, entries):
    steps = [StepEntry(*e) for e in entries]
    return EpisodeRecord(steps, outcome, len(steps))


def flat(outcome, n, interaction=True):
    return record(outcome, [(0.5, 0.5, 0.5, interaction)] * n)


entropy = st.floats(0.0, 1.0)
entries = st.lists(st.tuples(entropy, entropy, entropy, st.booleans()), min_size=1, max_size=10)
episodes = st.lists(st.tuples(st.sampled_from([SUCCESS, TIMEOUT, EXECUTION_FAILURE]), entries), min_size=1, max_size=8)


class TestGains:
    def test_assig_example(self):
        avg, mx = assig([record(SUCCESS, [(0.8, 0.5, 0.8, True), (0.4, 0.4, 0.8, True)])])
        assert avg == pytest.approx(0.3) and mx == pytest.approx(0.3)

    def test_aiig_example(self):
        avg, _ = aiig([record(SUCCESS, [(0.9, 0.5, 0.9, True), (0.6, 0.6, 0.6, True)])])
        assert avg == pytest.approx(0.4)

    def test_static_is_zero(self):
        eps = [record(TIMEOUT, [(0.7, 0.7, 0.7, False)] * 10) for _ in range(3)]
        assert assig(eps) == (0.0, 0.0)

    def test_max_is_per_episode(self):
        eps = [record(SUCCESS, [(0.9, 0.1, 0.9, True)]), record(SUCCESS, [(0.5, 0.4, 0.5, True)])]
        avg, mx = assig(eps)
        assert mx == pytest.approx(0.8) and avg == pytest.approx(0.45)

    def test_empty(self):
        with pytest.raises(MetricsError):
            assig([])


class TestEpisodeStats:
    def test_outcome_example(self):
        r = episode_stats([flat(SUCCESS, 3), flat(TIMEOUT, 10), flat(EXECUTION_FAILURE, 4)])
        assert (r.sr, r.to, r.ef) == (1 / 3, 1 / 3, 1 / 3)
        assert r.el_mean == pytest.approx(17 / 3)

    def test_all_interactive(self):
        r = episode_stats([flat(SUCCESS, 4), flat(SUCCESS, 2)])
        assert r.ni_mean == 0 and r.fi_mean == 1 and r.sr == 1.0

    def test_fi_without_interaction(self):
        r = episode_stats([record(TIMEOUT, [(0.5, 0.5, 0.5, False)] * 3 + [(0.5, 0.5, 0.5, True)]),
                           flat(TIMEOUT, 10, interaction=False)])
        assert r.fi_mean == pytest.approx((4 + 10) / 2)
        assert r.ni_mean == pytest.approx((3 + 10) / 2)

    def test_single_episode_std_zero(self):
        r = episode_stats([flat(SUCCESS, 3)])
        assert r.el_std == r.fi_std == r.ni_std == 0.0

    def test_static_camera_aiig_na(self):
        r = episode_stats([flat(SUCCESS, 3)], movable_camera=False)
        assert r.aiig_avg is None and r.row("static")["AIIG_avg"] == "N/A"

    @given(episodes, st.randoms(use_true_random=False))
    def test_partition_and_permutation(self, eps, rnd):
        recs = [record(k, e) for k, e in eps]
        a = episode_stats(recs)
        shuffled = list(recs)
        rnd.shuffle(shuffled)
        assert a == episode_stats(shuffled)
        assert abs(a.sr + a.to + a.ef - 1.0) <= 1e-12
        for v in (a.assig_avg, a.assig_max, a.aiig_avg, a.aiig_max):
            assert -10.0 <= v <= 10.0

    def test_record_validation(self):
        with pytest.raises(MetricsError):
            EpisodeRecord((StepEntry(1.5, 0, 0, False),), SUCCESS, 1)
        with pytest.raises(MetricsError):
            EpisodeRecord((), SUCCESS, 2)
        with pytest.raises(MetricsError):
            EpisodeRecord((), "Crash", 0)

    def test_csv_round_trip(self):
        r = episode_stats([flat(SUCCESS, 3), flat(TIMEOUT, 10)])
        s = episode_stats([flat(SUCCESS, 3)], movable_camera=False)
        text = report_csv([("ours", r), ("static", s)])
        assert text.splitlines()[0] == ",".join(CSV_COLUMNS)
        rows = read_report_csv(text)
        assert rows[0]["SR"] == r.sr and rows[0]["EL_mean"] == r.el_mean and rows[1]["AIIG_max"] == "N/A"


class TestTor:
    def test_relative(self):
        assert relative_tor(0.8, 0.4) == 2.0
        assert relative_tor(0.37, 0.37) == 1.0
        with pytest.raises(MetricsError):
            relative_tor(0.5, 0.0)

    def test_sum_of_keyframes(self, monkeypatch):
        env = ActiveVisionEnv()
        vals = iter([0.3, 0.5])
        monkeypatch.setattr(env, "view_entropy", lambda v, f: next(vals))
        layout = make_layout("hidden-reach", 0)
        frames = [DemoFrame(i, Viewpoint.from_degrees(55, 0), GripperPose((0, 0, 0.3))) for i in range(4)]
        traj = DemoTrajectory(frames, "hidden-reach", 0, layout)
        assert tor([(traj, KeyframeSet(((0, 1), (2, 3)), 4))], "oracle", env) == pytest.approx(0.8)

    def test_fully_revealed_is_zero(self):
        frames = [DemoFrame(i, Viewpoint.from_degrees(35, 30), GripperPose((0.0, -0.2, 0.35))) for i in range(3)]
        traj = DemoTrajectory(frames, "hidden-reach", 0, make_layout("hidden-reach", 0))
        assert tor([(traj, discover_keyframes(traj))], "oracle") == 0.0

    def test_top_down_worse_than_oracle(self):
        env = ActiveVisionEnv()
        demos = []
        for seed in range(3):
            t = scripted_demo(env, "hidden-reach", seed)
            demos.append((t, discover_keyframes(t)))
        top = tor(demos, Viewpoint.from_degrees(15, 0), env)
        oracle = tor(demos, "oracle", env)
        assert top > oracle >= 0.0
        assert relative_tor(top, oracle) > 1.0

    def test_rejects_missing_keyframes(self):
        frames = [DemoFrame(0, Viewpoint.from_degrees(55, 0), GripperPose((0, 0, 0.3)))]
        traj = DemoTrajectory(frames, "hidden-reach", 0, make_layout("hidden-reach", 0))
        with pytest.raises(MetricsError):
            tor([(traj, None)], "oracle")
        with pytest.raises(MetricsError):
            tor([], "oracle")
