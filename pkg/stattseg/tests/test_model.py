import numpy as np
import pytest
import torch

from stattseg.config import ModelConfig
from stattseg.model import Statt, masked_loss, pixel_accuracy


def micro(k=4, c=3):
    return Statt(ModelConfig.micro(num_classes=k, in_channels=c))


class TestShapes:
    def test_full_class_output_shape(self):
        model = micro(k=28, c=11)
        logits = model(torch.randn(1, 4, 11, 32, 32))
        assert logits.permute(0, 2, 3, 1).shape == (1, 16, 16, 28)

    def test_shape_algebra_across_configs(self):
        for cfg in (ModelConfig.micro(5, 2),
                    ModelConfig(num_classes=3, in_channels=4,
                                encoder_channels=(4, 4, 8, 8, 12, 12),
                                decoder_channels=(8, 8, 4, 4),
                                upsample_channels=(8, 4),
                                lstm_hidden=6, attention_width=4)):
            out = Statt(cfg)(torch.randn(2, 3, cfg.in_channels, 32, 32))
            assert out.shape == (2, cfg.num_classes, 16, 16)

    def test_wrong_spatial_size_rejected(self):
        with pytest.raises(ValueError, match="32x32"):
            micro()(torch.randn(1, 4, 3, 16, 16))

    def test_wrong_channels_rejected(self):
        with pytest.raises(ValueError, match="channels"):
            micro(c=3)(torch.randn(1, 4, 5, 32, 32))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ModelConfig(encoder_channels=(8, 8)).validate()
        with pytest.raises(ValueError):
            ModelConfig(num_classes=0).validate()
        ModelConfig().validate()


class TestProbabilities:
    def test_softmax_rows_sum_to_one(self):
        model = micro()
        logits = model(torch.randn(3, 5, 3, 32, 32))
        probs = torch.softmax(logits, dim=1)
        sums = probs.sum(dim=1)
        assert torch.allclose(sums, torch.ones_like(sums), atol=1e-5)

    def test_attention_weights_sum_to_one(self):
        model = micro()
        _, weights = model(torch.randn(3, 7, 3, 32, 32), return_attention=True)
        assert weights.shape == (3, 7, 8, 8)
        assert (weights >= 0).all()
        sums = weights.sum(dim=1)
        assert torch.allclose(sums, torch.ones_like(sums), atol=1e-5)


class TestLossMasking:
    def test_all_unknown_zero_loss(self):
        model = micro()
        targets = torch.zeros(2, 16, 16, dtype=torch.long)
        loss = masked_loss(model(torch.randn(2, 4, 3, 32, 32)), targets)
        assert loss.item() == 0.0

    def test_all_unknown_patch_contributes_nothing(self):
        torch.manual_seed(0)
        model = micro()
        x = torch.randn(2, 4, 3, 32, 32)
        targets = torch.zeros(2, 16, 16, dtype=torch.long)
        targets[0] = torch.randint(1, 5, (16, 16))
        base = masked_loss(model(x), targets).item()
        perturbed = x.clone()
        perturbed[1] += torch.randn_like(perturbed[1])  # only the masked patch
        assert masked_loss(model(perturbed), targets).item() == pytest.approx(base)

    def test_known_pixels_drive_loss(self):
        torch.manual_seed(1)
        model = micro()
        x = torch.randn(1, 4, 3, 32, 32)
        good = torch.ones(1, 16, 16, dtype=torch.long)
        logits = model(x)
        flipped = masked_loss(-logits, good)
        assert masked_loss(logits, good).item() != pytest.approx(flipped.item())


def test_pixel_accuracy_counts_known_only():
    logits = torch.zeros(1, 3, 2, 2)
    logits[0, 1] = 5.0  # predicts class code 2 everywhere
    targets = torch.tensor([[[2, 2], [0, 1]]])
    assert pixel_accuracy(logits, targets) == pytest.approx(2 / 3)
    assert pixel_accuracy(logits, torch.zeros(1, 2, 2, dtype=torch.long)) == 0.0


def test_attention_gradient_flows():
    model = micro()
    x = torch.randn(1, 4, 3, 32, 32, requires_grad=True)
    logits = model(x)
    masked_loss(logits, torch.ones(1, 16, 16, dtype=torch.long)).backward()
    assert x.grad is not None and np.isfinite(x.grad.numpy()).all()
