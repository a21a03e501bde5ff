import numpy as np
import pytest

from conftest import make_grid
from stattseg.patches import assemble_input, extract_patches, patch_positions


class TestPositions:
    def test_closed_form_full_grid(self):
        positions = patch_positions(1098)
        assert len(positions) == (1098 - 32) // 16 + 1 == 67
        # enumeration agrees with the closed form
        assert positions == [p for p in range(0, 1098) if p % 16 == 0 and p + 32 <= 1098]

    def test_candidate_count_full_grid(self):
        assert len(patch_positions(1098)) ** 2 == 4489

    def test_exact_fit(self):
        assert patch_positions(32) == [0]

    def test_too_small_rejected(self):
        with pytest.raises(ValueError):
            patch_positions(31)


class TestExtract:
    def test_single_patch_grid(self):
        rng = np.random.default_rng(0)
        stack, validity, labels = make_grid(rng, size=32)
        patches = extract_patches(stack, validity, labels, "g")
        assert len(patches) == 1
        assert patches[0].input.shape == (6, 3, 32, 32)
        assert patches[0].target.shape == (16, 16)
        assert patches[0].offset == (0, 0)

    def test_all_unknown_dropped(self):
        stack = np.zeros((4, 64, 64, 2), dtype=np.float32)
        labels = np.zeros((64, 64), dtype=np.uint8)
        assert extract_patches(stack, np.ones(4, bool), labels) == []

    def test_target_is_centered_window(self):
        rng = np.random.default_rng(1)
        stack, validity, labels = make_grid(rng, size=64)
        for p in extract_patches(stack, validity, labels, "g"):
            i, j = p.offset
            np.testing.assert_array_equal(p.target, labels[i + 8 : i + 24, j + 8 : j + 24])

    def test_input_matches_source_window(self):
        rng = np.random.default_rng(2)
        stack, validity, labels = make_grid(rng, size=64)
        full = assemble_input(stack, validity)
        for p in extract_patches(stack, validity, labels, "g"):
            i, j = p.offset
            np.testing.assert_array_equal(p.input, full[:, :, i : i + 32, j : j + 32])

    def test_misaligned_labels_rejected(self):
        stack = np.zeros((4, 64, 64, 2), dtype=np.float32)
        with pytest.raises(ValueError):
            extract_patches(stack, np.ones(4, bool), np.zeros((32, 32), dtype=np.uint8))


class TestValidityChannel:
    def test_flag_values(self):
        stack = np.random.default_rng(3).random((4, 32, 32, 2)).astype(np.float32)
        validity = np.array([True, False, True, False])
        full = assemble_input(stack, validity)
        assert full.shape == (4, 3, 32, 32)
        np.testing.assert_array_equal(full[:, -1, 0, 0], [1.0, 0.0, 1.0, 0.0])
        np.testing.assert_allclose(full[:, :2], np.moveaxis(stack, -1, 1))
