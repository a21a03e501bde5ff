import numpy as np
import pytest

from croprefine.evaluate import compute_ndvi
from croprefine.mocksegmenter import CentroidModel, fit_centroids, predict_probs
from croprefine.regiongrow import argmax_labels
from croprefine.synthetic import make_field_labels, make_phenologies


def toy_training(rng, t=8, k=3, size=24, noise=0.02):
    series = rng.uniform(-0.2, 0.9, (k, t))
    labels = rng.integers(1, k + 1, (size, size)).astype(np.uint8)
    ndvi = series[labels - 1].transpose(2, 0, 1) + rng.normal(0, noise, (t, size, size))
    return series, labels, ndvi


class TestFit:
    def test_centroid_is_class_mean(self):
        rng = np.random.default_rng(0)
        series, labels, ndvi = toy_training(rng)
        model = fit_centroids([(ndvi, labels)], num_classes=3)
        for k in range(3):
            mask = labels == k + 1
            np.testing.assert_allclose(model.centroids[k], ndvi[:, mask].mean(axis=1))

    def test_missing_class_excluded(self, caplog):
        rng = np.random.default_rng(1)
        _, labels, ndvi = toy_training(rng)
        with caplog.at_level("WARNING"):
            model = fit_centroids([(ndvi, labels)], num_classes=4)
        assert not model.present[3]
        assert "no training pixels" in caplog.text

    def test_empty_training_rejected(self):
        with pytest.raises(ValueError):
            fit_centroids([], num_classes=2)

    def test_all_unknown_rejected(self):
        ndvi = np.zeros((4, 8, 8))
        labels = np.zeros((8, 8), dtype=np.uint8)
        with pytest.raises(ValueError):
            fit_centroids([(ndvi, labels)], num_classes=2)


class TestPredict:
    def test_probabilities_sum_to_one(self):
        rng = np.random.default_rng(2)
        series, labels, ndvi = toy_training(rng)
        model = fit_centroids([(ndvi, labels)], num_classes=3)
        probs = predict_probs(model, ndvi)
        assert probs.shape == (24, 24, 3)
        np.testing.assert_allclose(probs.sum(axis=-1), 1.0, atol=1e-5)
        assert probs.min() >= 0.0

    def test_centroid_exact_pixel_is_confident(self):
        t, k = 6, 3
        rng = np.random.default_rng(3)
        centroids = rng.uniform(-0.5, 0.9, (k, t))
        model = CentroidModel(centroids=centroids, present=np.ones(k, dtype=bool))
        ndvi = centroids.T[:, :, None]  # (T, K, 1): column j sits on centroid j
        probs = predict_probs(model, ndvi)
        for j in range(k):
            assert probs[j, 0].argmax() == j
            assert probs[j, 0, j] > 0.9

    def test_absent_class_gets_zero(self):
        rng = np.random.default_rng(4)
        _, labels, ndvi = toy_training(rng)
        model = fit_centroids([(ndvi, labels)], num_classes=4)
        probs = predict_probs(model, ndvi)
        assert not probs[..., 3].any()
        np.testing.assert_allclose(probs.sum(axis=-1), 1.0, atol=1e-5)

    def test_chunking_matches_unchunked(self):
        rng = np.random.default_rng(5)
        series, labels, ndvi = toy_training(rng, size=16)
        model = fit_centroids([(ndvi, labels)], num_classes=3)
        full = predict_probs(model, ndvi)
        # brute-force single-pixel predictions
        for i in range(0, 16, 5):
            for j in range(0, 16, 5):
                single = predict_probs(model, ndvi[:, i : i + 1, j : j + 1])
                np.testing.assert_allclose(full[i, j], single[0, 0], atol=1e-6)


class TestSyntheticAccuracy:
    def test_recovers_planted_phenologies(self):
        rng = np.random.default_rng(6)
        k, t, size = 4, 24, 64
        series = make_phenologies(k, t)
        labels = make_field_labels(size, k, field_size=16, rng=rng)
        ndvi = series[labels - 1].transpose(2, 0, 1) + rng.normal(0, 0.03, (t, size, size))
        model = fit_centroids([(ndvi, labels)], num_classes=k)
        probs = predict_probs(model, ndvi)
        predicted = argmax_labels(probs)
        assert (predicted == labels).mean() >= 0.90

    def test_ndvi_roundtrip_through_bands(self):
        # bands synthesized from an NDVI target must reproduce it
        from croprefine.synthetic import ndvi_to_bands

        rng = np.random.default_rng(7)
        target = rng.uniform(-0.3, 0.9, (5, 8, 8))
        red, nir = ndvi_to_bands(target)
        stack = np.stack([red, nir], axis=-1)
        recovered = compute_ndvi(stack, red_index=0, nir_index=1)
        np.testing.assert_allclose(recovered, target, atol=1e-9)
