import numpy as np
import pytest

from statechange.core import (Architecture, Category, CategoryCatalog,
                              FrameScores, LabelKind, Localization,
                              PseudoLabel, VideoFeatures, seconds_to_frames,
                              validate_dataset)


def make_catalog(n=2):
    return CategoryCatalog(tuple(
        Category(f"c{i}", f"c{i}_start", f"c{i}_end", f"c{i}_act")
        for i in range(n)))


class TestCatalog:
    def test_rejects_empty_and_duplicates(self):
        with pytest.raises(ValueError):
            CategoryCatalog(())
        dup = Category("x", "a", "b", "c")
        with pytest.raises(ValueError, match="unique"):
            CategoryCatalog((dup, dup))

    def test_index_layout_bijection(self):
        catalog = make_catalog(4)
        for c in range(catalog.n):
            assert catalog.state_class_owner(catalog.s1_class(c)) == (c, LabelKind.S1)
            assert catalog.state_class_owner(catalog.s2_class(c)) == (c, LabelKind.S2)
            assert catalog.action_class_owner(catalog.action_class(c)) == (c, LabelKind.A)
        assert catalog.state_class_owner(catalog.state_background_class) is None
        assert catalog.action_class_owner(catalog.action_background_class) is None

    def test_index_of(self):
        catalog = make_catalog(3)
        assert catalog.index_of("c1") == 1
        with pytest.raises(ValueError, match="valid"):
            catalog.index_of("nope")


class TestSecondsToFrames:
    def test_basic(self):
        assert seconds_to_frames(2.0, 1.0) == 2
        assert seconds_to_frames(2.0, 2.0) == 4
        assert seconds_to_frames(0.1, 1.0) == 1  # minimum of one frame
        assert seconds_to_frames(2.5, 1.0) == 3  # round to nearest

    def test_rejects_bad_fps(self):
        with pytest.raises(ValueError):
            seconds_to_frames(2.0, 0.0)


class TestValidateDataset:
    def test_minimal_legal_video_passes(self):
        catalog = make_catalog(2)
        video = VideoFeatures("v", 1, np.zeros((3, 2)))
        report = validate_dataset(catalog, [video])
        assert report.all_ok

    def test_too_short_fails(self):
        report = validate_dataset(make_catalog(2),
                                  [VideoFeatures("v", 0, np.zeros((2, 2)))])
        assert not report.all_ok
        assert any("too short for causal triple" in r
                   for r in report.entries[0].reasons)

    def test_label_out_of_range_fails(self):
        report = validate_dataset(make_catalog(2),
                                  [VideoFeatures("v", 5, np.zeros((3, 2)))])
        assert any("label out of range" in r for r in report.entries[0].reasons)

    def test_nonfinite_fails(self):
        frames = np.zeros((3, 2))
        frames[1, 1] = np.nan
        report = validate_dataset(make_catalog(1), [VideoFeatures("v", 0, frames)])
        assert any("non-finite" in r for r in report.entries[0].reasons)

    def test_deterministic_and_side_effect_free(self):
        catalog = make_catalog(2)
        videos = [VideoFeatures("a", 0, np.ones((3, 2))),
                  VideoFeatures("b", 9, np.ones((4, 2)))]
        first = validate_dataset(catalog, videos)
        second = validate_dataset(catalog, videos)
        assert first == second
        assert np.array_equal(videos[0].frames, np.ones((3, 2)))


class TestFrameScores:
    def test_tracks_layouts(self):
        t, n = 4, 3
        rng = np.random.default_rng(0)
        # joint2 with background: interleaved state classes
        state = rng.dirichlet(np.ones(2 * n + 1), size=t)
        action = rng.dirichlet(np.ones(n + 1), size=t)
        scores = FrameScores(state, action, Architecture.JOINT_TWO_HEAD)
        assert scores.n_categories == n
        assert scores.has_state_background
        s1, a, s2 = scores.tracks(1)
        assert np.array_equal(s1, state[:, 2])
        assert np.array_equal(s2, state[:, 3])
        assert np.array_equal(a, action[:, 1])
        scores.validate()

    def test_per_category_blocks(self):
        t, n = 5, 2
        rng = np.random.default_rng(1)
        state = np.concatenate([rng.dirichlet(np.ones(3), size=t)
                                for _ in range(n)], axis=1)
        action = rng.uniform(size=(t, n))
        scores = FrameScores(state, action, Architecture.MULTI_CLASSIFIER)
        assert scores.state_block_width == 3
        assert scores.has_state_background
        s1, a, s2 = scores.tracks(1)
        assert np.array_equal(s1, state[:, 3])
        assert np.array_equal(s2, state[:, 4])
        scores.validate()

    def test_validate_catches_bad_rows(self):
        state = np.full((3, 4), 0.4)
        action = np.full((3, 3), 0.2)
        scores = FrameScores(state, action, Architecture.JOINT_TWO_HEAD)
        with pytest.raises(ValueError, match="sum"):
            scores.validate()


class TestLocalizationAndLabels:
    def test_localization_ordering_enforced(self):
        with pytest.raises(ValueError, match="ordered"):
            Localization(2, 2, 3, 0.5, 0)
        loc = Localization(0, 1, 2, 0.25, 1)
        assert loc.frame_of(LabelKind.A) == 1

    def test_pseudo_label_validation(self):
        with pytest.raises(ValueError):
            PseudoLabel("v", -1, 0, LabelKind.S1)
        with pytest.raises(ValueError):
            PseudoLabel("v", 0, 0, LabelKind.S1, weight=-0.5)
        label = PseudoLabel("v", 0, 0, "s1")
        assert label.kind is LabelKind.S1
