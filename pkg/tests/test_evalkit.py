import numpy as np
import pytest

from oracles import reference_average_precision

from statechange.core import (AnnotationInterval, AnnotationTrack,
                              Architecture, FrameScores, LabelKind,
                              Localization)
from statechange.evalkit import (average_precision, classification_accuracy,
                                 mean_average_precision, pca_export,
                                 pca_rows_to_csv, precision_at_1,
                                 top_two_directions)
from statechange.model import init_params
from statechange.synth import SynthConfig, generate


def track(video_id, intervals):
    return AnnotationTrack(video_id, tuple(
        AnnotationInterval(LabelKind(kind), start, end)
        for kind, start, end in intervals))


class TestPrecisionAt1:
    def test_all_inside_intervals(self):
        predictions = [("v0", Localization(5, 20, 35, 0.9, 0))]
        annotations = [track("v0", [("s1", 4, 6), ("a", 18, 22), ("s2", 30, 40)])]
        assert precision_at_1(predictions, annotations) == (1.0, 1.0)

    def test_partial_state_credit(self):
        # s1 correct, s2 wrong, action correct -> (0.5, 1.0)
        predictions = [("v0", Localization(5, 20, 50, 0.9, 0))]
        annotations = [track("v0", [("s1", 4, 6), ("a", 18, 22), ("s2", 30, 40)])]
        assert precision_at_1(predictions, annotations) == (0.5, 1.0)

    def test_inclusive_boundaries(self):
        predictions = [("v0", Localization(4, 22, 40, 0.9, 0))]
        annotations = [track("v0", [("s1", 4, 6), ("a", 18, 22), ("s2", 30, 40)])]
        assert precision_at_1(predictions, annotations) == (1.0, 1.0)

    def test_macro_average_over_categories(self):
        predictions = [("v0", Localization(0, 1, 2, 0.9, 0)),
                       ("v1", Localization(0, 1, 2, 0.9, 1)),
                       ("v2", Localization(0, 1, 2, 0.9, 1))]
        annotations = [
            track("v0", [("s1", 0, 0), ("a", 1, 1), ("s2", 2, 2)]),  # all right
            track("v1", [("s1", 0, 0), ("a", 1, 1), ("s2", 2, 2)]),  # all right
            track("v2", [("s1", 5, 6), ("a", 7, 7), ("s2", 8, 9)]),  # all wrong
        ]
        state, action = precision_at_1(predictions, annotations)
        # category 0: (1, 1); category 1: mean of (1, 1) and (0, 0) = (.5, .5)
        assert state == pytest.approx(0.75)
        assert action == pytest.approx(0.75)

    def test_missing_annotation_errors(self):
        predictions = [("v0", Localization(0, 1, 2, 0.9, 0))]
        with pytest.raises(ValueError, match="missing annotation"):
            precision_at_1(predictions, [])

    def test_permutation_invariance(self):
        rng = np.random.default_rng(3)
        predictions, annotations = [], []
        for i in range(12):
            t = 30
            frames = sorted(rng.choice(t, size=3, replace=False).tolist())
            predictions.append(
                (f"v{i}", Localization(*frames, 0.5, int(rng.integers(3)))))
            annotations.append(track(f"v{i}", [("s1", 0, 5), ("a", 10, 15),
                                               ("s2", 20, 29)]))
        base = precision_at_1(predictions, annotations)
        order = rng.permutation(12)
        shuffled = precision_at_1([predictions[i] for i in order],
                                  [annotations[i] for i in order])
        assert shuffled == base


class TestAveragePrecision:
    def test_hand_example(self):
        ap = average_precision(np.array([0.9, 0.8, 0.1, 0.0]),
                               np.array([True, False, True, False]))
        assert ap == pytest.approx((1.0 + 2.0 / 3.0) / 2.0, abs=1e-12)

    def test_single_positive_at_last_rank(self):
        ap = average_precision(np.array([0.9, 0.6, 0.3, 0.1]),
                               np.array([False, False, False, True]))
        assert ap == pytest.approx(0.25, abs=1e-15)

    def test_no_positives_returns_none(self):
        assert average_precision(np.array([0.5, 0.4]),
                                 np.array([False, False])) is None

    def test_matches_reference(self):
        rng = np.random.default_rng(6)
        for _ in range(200):
            t = int(rng.integers(1, 40))
            scores = rng.choice([0.0, 0.25, 0.5, 0.75, 1.0], size=t)
            positives = rng.uniform(size=t) < 0.3
            expected = reference_average_precision(scores, positives)
            got = average_precision(scores, positives)
            if expected is None:
                assert got is None
            else:
                assert got == pytest.approx(expected, abs=1e-12)


class TestMeanAveragePrecision:
    def test_indicator_probabilities_score_one(self):
        annotations = [track("v0", [("s1", 0, 1), ("a", 3, 4), ("s2", 6, 7)])]
        probs = np.zeros((8, 3))
        probs[0:2, 0] = 1.0
        probs[3:5, 1] = 1.0
        probs[6:8, 2] = 1.0
        assert mean_average_precision({"v0": probs}, annotations) == 1.0

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(8)
        annotations = [track("v0", [("s1", 0, 2), ("a", 5, 8), ("s2", 10, 12)])]
        probs = rng.uniform(size=(15, 3))
        base = mean_average_precision({"v0": probs}, annotations)
        squashed = mean_average_precision({"v0": probs ** 3}, annotations)
        assert squashed == pytest.approx(base, abs=1e-12)

    def test_zero_positive_class_skipped(self):
        annotations = [track("v0", [("s1", 0, 0)])]  # no action or s2 spans
        probs = np.zeros((4, 3))
        probs[0, 0] = 1.0
        assert mean_average_precision({"v0": probs}, annotations) == 1.0

    def test_in_unit_interval(self):
        rng = np.random.default_rng(9)
        annotations = []
        probs = {}
        for i in range(10):
            annotations.append(track(f"v{i}", [("s1", 0, 2), ("a", 4, 6),
                                               ("s2", 8, 9)]))
            probs[f"v{i}"] = rng.uniform(size=(10, 3))
        value = mean_average_precision(probs, annotations)
        assert 0.0 <= value <= 1.0


class TestClassificationAccuracy:
    def test_perfect_scores(self):
        scores = []
        labels = []
        for label in range(3):
            state = np.full((4, 6), 1e-6)
            action = np.full((4, 4), 1e-6)
            state[:, 2 * label] = state[:, 2 * label + 1] = 0.9
            action[:, label] = 0.9
            scores.append(FrameScores(state, action, Architecture.JOINT_TWO_HEAD))
            labels.append(label)
        assert classification_accuracy(scores, labels) == 1.0

    def test_random_scores_near_chance(self):
        rng = np.random.default_rng(10)
        n, count = 4, 3000
        scores, labels = [], []
        for _ in range(count):
            state = rng.dirichlet(np.ones(2 * n + 1), size=3)
            action = rng.dirichlet(np.ones(n + 1), size=3)
            scores.append(FrameScores(state, action, Architecture.JOINT_TWO_HEAD))
            labels.append(int(rng.integers(n)))
        accuracy = classification_accuracy(scores, labels)
        sigma = np.sqrt(0.25 * 0.75 / count)
        assert abs(accuracy - 0.25) <= 3 * sigma


class TestRandomPredictionBaseline:
    def test_matches_block_coverage_expectation(self):
        """A uniformly guessed frame lands inside a role's blocks with
        probability |blocks| / T; check each role's empirical rate through
        the metric over 1000 trials."""
        cfg = SynthConfig(n_categories=2, videos_per_category=5, noise_videos=0,
                          frames_per_video=60, feature_dim=8, seed=4,
                          heldout_per_category=1)
        data = generate(cfg)
        coverage = cfg.block_frames / cfg.frames_per_video
        rng = np.random.default_rng(0)
        annotations = {a.video_id: a for a in data.annotations}
        t = cfg.frames_per_video
        state_hits, action_hits = [], []
        for _ in range(1000):
            video = data.videos[int(rng.integers(len(data.videos)))]
            ann = annotations[video.id]
            # One independent uniform guess per role, each evaluated through
            # the metric with the other two roles pinned to filler frames.
            s1_guess = int(rng.integers(0, t - 2))
            s2_guess = int(rng.integers(2, t))
            a_guess = int(rng.integers(1, t - 1))
            s1_loc = Localization(s1_guess, s1_guess + 1, s1_guess + 2, 0.5,
                                  video.label)
            s2_loc = Localization(s2_guess - 2, s2_guess - 1, s2_guess, 0.5,
                                  video.label)
            a_loc = Localization(a_guess - 1, a_guess, a_guess + 1, 0.5,
                                 video.label)
            s1_state, _ = precision_at_1([(video.id, s1_loc)], [ann])
            s2_state, _ = precision_at_1([(video.id, s2_loc)], [ann])
            _, action = precision_at_1([(video.id, a_loc)], [ann])
            # Recover the single-role hits from the half-credit state scores.
            s2_of_s1loc = ann.contains(LabelKind.S2, s1_loc.s2_frame)
            s1_of_s2loc = ann.contains(LabelKind.S1, s2_loc.s1_frame)
            state_hits.append(2 * s1_state - s2_of_s1loc)
            state_hits.append(2 * s2_state - s1_of_s2loc)
            action_hits.append(action)
        assert abs(np.mean(state_hits) - coverage) <= 0.05
        assert abs(np.mean(action_hits) - coverage) <= 0.05


class TestPcaExport:
    def _params(self, d=6):
        return init_params("joint2", 2, d, 8, seed=0)

    def _videos(self, reps, d=6, t=12):
        from statechange.core import VideoFeatures
        videos = []
        rng = np.random.default_rng(2)
        for i, rep in enumerate(reps):
            frames = np.tile(np.asarray(rep, dtype=float), (t, 1))
            frames += 0.0 * rng.standard_normal((t, d))
            videos.append(VideoFeatures(f"v{i}", i % 2, frames))
        return videos

    def test_collinear_videos_have_zero_pc2(self):
        d = 6
        direction = np.ones(d) / np.sqrt(d)
        reps = [i * direction for i in range(5)]
        rows = pca_export(self._params(d), self._videos(reps, d))
        assert max(abs(row[3]) for row in rows) < 1e-8

    def test_identical_videos_get_zero_coordinates(self):
        reps = [np.ones(6)] * 4
        rows = pca_export(self._params(), self._videos(reps))
        assert all(row[2] == 0.0 and row[3] == 0.0 for row in rows)

    def test_variance_ordering(self):
        rng = np.random.default_rng(5)
        reps = rng.standard_normal((20, 6)) * np.array([5, 2, 1, 1, 1, 1.0])
        rows = pca_export(self._params(), self._videos(reps))
        coords = np.array([[row[2], row[3]] for row in rows])
        var1, var2 = coords.var(axis=0)
        assert var1 >= var2
        centered = np.array(reps) - np.mean(reps, axis=0)
        random_dir = rng.standard_normal(6)
        random_dir /= np.linalg.norm(random_dir)
        assert var2 >= (centered @ random_dir).var() - 1e-8 or var1 >= (
            centered @ random_dir).var()

    def test_matches_dense_eigensolver(self):
        rng = np.random.default_rng(12)
        for d in (4, 8, 32):
            scales = np.full(d, 0.8)
            scales[:2] = (6.0, 3.0)  # clear top-2 eigengap
            data = rng.standard_normal((40, d)) * scales
            directions = top_two_directions(data)
            centered = data - data.mean(axis=0)
            cov = centered.T @ centered / (len(data) - 1)
            eigvals, eigvecs = np.linalg.eigh(cov)
            dense = eigvecs[:, np.argsort(eigvals)[::-1][:2]]
            ours = np.stack(directions, axis=1)
            overlap = np.linalg.svd(dense.T @ ours, compute_uv=False)
            angles = np.arccos(np.clip(overlap, 0.0, 1.0))
            assert angles.max() <= 1e-6

    def test_requires_three_videos(self):
        with pytest.raises(ValueError, match="3 videos"):
            pca_export(self._params(), self._videos([np.ones(6)] * 2))

    def test_csv_format(self):
        rows = [("v0", 0, 1.0, -2.0)]
        text = pca_rows_to_csv(rows)
        assert text.splitlines()[0] == "video_id,label,pc1,pc2"
        assert text.splitlines()[1] == "v0,0,1.0,-2.0"
