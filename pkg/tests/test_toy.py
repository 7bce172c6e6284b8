import numpy as np
import pytest

from oodkit import (
    DataError,
    ToyConfig,
    build_index,
    fit_softmax_head,
    grid_scores,
    make_toy,
    with_logits,
)
from oodkit.toy import toy_auroc, write_pgm


def small_config(**over):
    defaults = dict(n_per_class=80, grid_resolution=8, seed=0)
    defaults.update(over)
    return ToyConfig(**defaults)


class TestMakeToy:
    def test_deterministic_per_seed(self):
        a = make_toy(small_config())
        b = make_toy(small_config())
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.features, y.features)

    def test_counts(self):
        train, near, far = make_toy(small_config(n_per_class=100))
        assert train.n == 200
        assert near.n == 100 and far.n == 100
        np.testing.assert_array_equal(np.bincount(train.labels), [100, 100])

    def test_far_ring_distance(self):
        cfg = small_config()
        _, _, far = make_toy(cfg)
        delta = np.linalg.norm(cfg.class_means[1] - cfg.class_means[0])
        for mean in cfg.class_means:
            dists = np.linalg.norm(far.features - mean, axis=1)
            assert dists.min() >= 5.0 * delta

    def test_near_band_geometry(self):
        cfg = small_config()
        train, near, _ = make_toy(cfg)
        means = cfg.class_means
        u = (means[1] - means[0]) / np.linalg.norm(means[1] - means[0])
        mid = means.mean(axis=0)
        off = (near.features - mid) @ u
        assert np.all(np.abs(off) <= 0.5 * cfg.class_std + 1e-12)

    def test_config_validation(self):
        with pytest.raises(DataError):
            ToyConfig(class_std=0.0)
        with pytest.raises(DataError):
            ToyConfig(grid_resolution=1)
        with pytest.raises(DataError):
            ToyConfig(class_means=np.zeros((3, 2)))


class TestFitHead:
    def test_separable_blobs_reach_high_accuracy(self):
        train, _, _ = make_toy(ToyConfig(seed=0))
        head = fit_softmax_head(train)  # default lr=0.1, iters=2000
        acc = (np.argmax(head.logits(train.features), 1) == train.labels).mean()
        assert acc >= 0.99

    def test_symmetric_blobs_boundary_crosses_origin(self):
        # large blobs so sampling asymmetry stays well inside the tolerance
        cfg = ToyConfig(
            class_means=np.array([[-1.5, 0.0], [1.5, 0.0]]),
            class_std=0.5,
            n_per_class=1000,
            seed=0,
        )
        train, _, _ = make_toy(cfg)
        head = fit_softmax_head(train)
        # decision boundary on the x-axis: (W0 - W1) . (x, 0) + (b0 - b1) = 0
        dw = head.W[0] - head.W[1]
        db = head.b[0] - head.b[1]
        x_cross = -db / dw[0]
        assert abs(x_cross) <= 0.1 * cfg.class_std

    def test_zero_learning_rate_keeps_zero_init(self):
        train, _, _ = make_toy(small_config())
        head = fit_softmax_head(train, lr=0.0, iters=50)
        np.testing.assert_array_equal(head.W, 0.0)
        np.testing.assert_array_equal(head.b, 0.0)

    def test_single_class_rejected(self):
        from oodkit import FeatureBank

        bank = FeatureBank(
            features=np.random.default_rng(0).standard_normal((10, 2)),
            K=2,
            labels=np.zeros(10, dtype=int),
        )
        with pytest.raises(DataError):
            fit_softmax_head(bank)


class TestGridScores:
    def fitted(self, cfg):
        train, _, _ = make_toy(cfg)
        head = fit_softmax_head(train, iters=300)
        index = build_index(with_logits(train, head), head)
        return head, index

    def test_resolution_two_evaluates_corners(self, tmp_path):
        cfg = small_config(grid_resolution=2, grid_extent=5.0)
        head, index = self.fitted(cfg)
        grid = grid_scores(head, index, "energy", cfg, out_dir=tmp_path)
        assert grid.shape == (2, 2)
        from oodkit.confidence import confidence_scores

        corner = np.array([[-5.0, -5.0]])
        want = confidence_scores("energy", head.logits(corner), corner)[0]
        assert grid[0, 0] == pytest.approx(want, rel=1e-12)

    def test_energy_dips_between_means(self):
        cfg = ToyConfig(seed=0)
        head, index = self.fitted(cfg)
        from oodkit.confidence import confidence_scores

        pts = np.vstack([cfg.class_means, cfg.class_means.mean(axis=0)])
        vals = confidence_scores("energy", head.logits(pts), pts)
        assert vals[2] < vals[0] and vals[2] < vals[1]

    def test_unknown_score_rejected(self):
        cfg = small_config()
        head, index = self.fitted(cfg)
        with pytest.raises(DataError, match="unknown"):
            grid_scores(head, index, "not-a-score", cfg)

    def test_emission_deterministic(self, tmp_path):
        cfg = small_config()
        head, index = self.fitted(cfg)
        grid_scores(head, index, "nnguide", cfg, out_dir=tmp_path / "a")
        grid_scores(head, index, "nnguide", cfg, out_dir=tmp_path / "b")
        for suffix in ("csv", "pgm"):
            assert (tmp_path / "a" / f"nnguide.{suffix}").read_bytes() == (
                tmp_path / "b" / f"nnguide.{suffix}"
            ).read_bytes()

    def test_csv_matches_grid_values(self, tmp_path):
        cfg = small_config(grid_resolution=4)
        head, index = self.fitted(cfg)
        grid = grid_scores(head, index, "knn", cfg, out_dir=tmp_path)
        rows = [
            [float(v) for v in line.split(",")]
            for line in (tmp_path / "knn.csv").read_text().splitlines()
        ]
        np.testing.assert_array_equal(np.array(rows), grid)


class TestPgm:
    def test_constant_grid_renders_mid_gray(self, tmp_path):
        path = tmp_path / "c.pgm"
        write_pgm(path, np.full((3, 4), 2.5))
        raw = path.read_bytes()
        assert raw.startswith(b"P5\n4 3\n255\n")
        assert set(raw[len(b"P5\n4 3\n255\n") :]) == {127}

    def test_min_max_normalization(self, tmp_path):
        path = tmp_path / "g.pgm"
        write_pgm(path, np.array([[0.0, 1.0], [0.5, 1.0]]))
        pixels = path.read_bytes()[len(b"P5\n2 2\n255\n") :]
        assert list(pixels) == [0, 255, 128, 255]


class TestOrderingClaims:
    """The qualitative far/near behavior on two seeds; the acceptance
    suite repeats this over five."""

    def test_far_ring_guided_beats_energy(self):
        for seed in (0, 1):
            cfg = ToyConfig(seed=seed)
            _, far_nng = toy_auroc(cfg, "nnguide")
            _, far_energy = toy_auroc(cfg, "energy")
            assert far_nng >= far_energy

    def test_near_band_guided_beats_knn(self):
        for seed in (0, 1):
            cfg = ToyConfig(seed=seed)
            near_nng, _ = toy_auroc(cfg, "nnguide")
            near_knn, _ = toy_auroc(cfg, "knn")
            assert near_nng >= near_knn
