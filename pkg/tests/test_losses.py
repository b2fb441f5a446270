"""Loss arithmetic against hand values and scalar-loop oracles."""

import numpy as np
import pytest
import torch

from facedub import (ContractError, IdentityExtractor, LossWeights,
                     RandomConvExtractor, Vgg19Extractor, lsgan_d_loss,
                     lsgan_g_loss, perception_loss, sync_loss, total_g_loss)


class TestWeights:
    def test_defaults(self):
        w = LossWeights()
        assert w.lambda_p == 10.0
        assert w.lambda_sync == 0.1

    def test_rejects_negative(self):
        with pytest.raises(ContractError):
            LossWeights(lambda_p=-1.0)


class TestPerceptionLoss:
    def test_identical_images_give_zero(self):
        img = torch.rand(3, 8, 8)
        assert float(perception_loss(img, img.clone(), IdentityExtractor())) == 0.0

    def test_symmetric_in_arguments(self):
        a = torch.rand(3, 8, 8)
        b = torch.rand(3, 8, 8)
        ex = IdentityExtractor()
        assert float(perception_loss(a, b, ex)) == pytest.approx(
            float(perception_loss(b, a, ex)), abs=1e-12)

    def test_hand_value_identity_extractor(self):
        # 1x2x2 all-zeros vs all-ones, identity stage:
        # native term 4/(2*2*1) = 1, half-scale term 1/(1*1*1) = 1, mean = 1
        a = torch.zeros(1, 2, 2)
        b = torch.ones(1, 2, 2)
        value = float(perception_loss(a, b, IdentityExtractor()))
        assert value == pytest.approx(1.0, abs=1e-10)

    def test_matches_scalar_oracle_random(self):
        rng = np.random.default_rng(0)
        a = torch.from_numpy(rng.random((3, 6, 4), dtype=np.float32))
        b = torch.from_numpy(rng.random((3, 6, 4), dtype=np.float32))
        # oracle: explicit loops over both scales with 2x2 averaging
        def downsample(x):
            return 0.25 * (x[:, ::2, ::2] + x[:, 1::2, ::2] + x[:, ::2, 1::2] + x[:, 1::2, 1::2])
        terms = []
        for x, y in ((a, b), (downsample(a), downsample(b))):
            total = 0.0
            c, h, w = x.shape
            for ci in range(c):
                for i in range(h):
                    for j in range(w):
                        total += abs(float(x[ci, i, j]) - float(y[ci, i, j]))
            terms.append(total / (c * h * w))
        expected = sum(terms) / 2
        got = float(perception_loss(a, b, IdentityExtractor()))
        assert got == pytest.approx(expected, abs=1e-6)

    def test_rejects_odd_sizes(self):
        with pytest.raises(ContractError):
            perception_loss(torch.rand(3, 5, 4), torch.rand(3, 5, 4), IdentityExtractor())

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ContractError):
            perception_loss(torch.rand(3, 4, 4), torch.rand(3, 4, 6), IdentityExtractor())

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        out = torch.from_numpy(rng.random((1, 4, 4))).requires_grad_(True)
        real = torch.from_numpy(rng.random((1, 4, 4)))
        ex = IdentityExtractor()
        loss = perception_loss(out, real, ex)
        (grad,) = torch.autograd.grad(loss, out)
        step = 1e-6
        flat = out.detach().reshape(-1)
        for k in range(flat.numel()):
            orig = flat[k].item()
            flat[k] = orig + step
            hi = float(perception_loss(out.detach(), real, ex))
            flat[k] = orig - step
            lo = float(perception_loss(out.detach(), real, ex))
            flat[k] = orig
            fd = (hi - lo) / (2 * step)
            an = grad.reshape(-1)[k].item()
            assert abs(an - fd) <= 1e-5 * max(abs(an), abs(fd)) + 1e-9

    def test_frozen_extractor_receives_no_gradient(self):
        ex = RandomConvExtractor(seed=3)
        out = torch.rand(3, 8, 8, requires_grad=True)
        real = torch.rand(3, 8, 8)
        loss = perception_loss(out, real, ex)
        loss.backward()
        assert out.grad is not None
        for p in ex.parameters():
            assert not p.requires_grad
            assert p.grad is None


class TestLsGan:
    def test_perfect_discriminator_zero_loss(self):
        assert float(lsgan_d_loss(torch.ones(1, 4, 4), torch.zeros(1, 4, 4))) == 0.0

    def test_half_scores(self):
        half = torch.full((1, 3, 3), 0.5)
        assert float(lsgan_d_loss(half, half)) == pytest.approx(0.25, abs=1e-10)

    def test_d_matches_scalar_oracle(self):
        rng = np.random.default_rng(2)
        real = torch.from_numpy(rng.standard_normal((1, 5, 4)))
        fake = torch.from_numpy(rng.standard_normal((1, 5, 4)))
        acc_r = sum((float(v) - 1.0) ** 2 for v in real.reshape(-1)) / real.numel()
        acc_f = sum(float(v) ** 2 for v in fake.reshape(-1)) / fake.numel()
        expected = 0.5 * acc_r + 0.5 * acc_f
        assert float(lsgan_d_loss(real, fake)) == pytest.approx(expected, abs=1e-10)

    def test_g_edge_values(self):
        assert float(lsgan_g_loss(torch.ones(1, 4, 4))) == 0.0
        assert float(lsgan_g_loss(torch.zeros(1, 4, 4))) == pytest.approx(1.0, abs=1e-12)

    def test_g_matches_scalar_oracle(self):
        rng = np.random.default_rng(3)
        fake = torch.from_numpy(rng.standard_normal((2, 3, 3)))
        expected = sum((float(v) - 1.0) ** 2 for v in fake.reshape(-1)) / fake.numel()
        assert float(lsgan_g_loss(fake)) == pytest.approx(expected, abs=1e-10)


class TestSyncLoss:
    @pytest.mark.parametrize("score,expected", [(1.0, 0.0), (0.0, 1.0), (0.6, 0.16)])
    def test_values(self, score, expected):
        value = float(sync_loss(torch.tensor(score, dtype=torch.float64)))
        assert value == pytest.approx(expected, abs=1e-10)

    def test_batch_mean(self):
        scores = torch.tensor([1.0, 0.0])
        assert float(sync_loss(scores)) == pytest.approx(0.5, abs=1e-12)


class TestTotal:
    def test_zeros(self):
        z = torch.tensor(0.0)
        assert float(total_g_loss(z, z, z)) == 0.0

    def test_default_weighting(self):
        one = torch.tensor(1.0, dtype=torch.float64)
        assert float(total_g_loss(one, one, one)) == pytest.approx(11.1, abs=1e-10)

    def test_mixed_values(self):
        v = total_g_loss(torch.tensor(0.5, dtype=torch.float64),
                         torch.tensor(0.2, dtype=torch.float64),
                         torch.tensor(0.3, dtype=torch.float64))
        assert float(v) == pytest.approx(5.32, abs=1e-10)

    def test_custom_weights(self):
        v = total_g_loss(torch.tensor(1.0), torch.tensor(1.0), torch.tensor(1.0),
                         LossWeights(lambda_p=2.0, lambda_sync=0.5))
        assert float(v) == pytest.approx(3.5, abs=1e-12)


class TestExtractors:
    def test_random_conv_is_deterministic(self):
        a = RandomConvExtractor(seed=11)
        b = RandomConvExtractor(seed=11)
        img = torch.rand(1, 3, 16, 16)
        for sa, sb in zip(a.stages(img), b.stages(img)):
            assert torch.equal(sa, sb)

    def test_vgg_structure_and_freezing(self):
        ex = Vgg19Extractor()
        img = torch.rand(1, 3, 64, 64)
        stages = ex.stages(img)
        assert len(stages) == 5
        assert [s.shape[1] for s in stages] == [64, 128, 256, 512, 512]
        assert [s.shape[2] for s in stages] == [64, 32, 16, 8, 4]
        assert all(not p.requires_grad for p in ex.parameters())

    def test_vgg_missing_weights_file(self):
        from facedub import ConfigurationError

        with pytest.raises(ConfigurationError):
            Vgg19Extractor.from_weights("/nonexistent/vgg19.pth")

    def test_vgg_loads_torchvision_layout(self, tmp_path):
        donor = Vgg19Extractor()
        state = {}
        for idx_str, conv in donor.convs.items():
            torch.nn.init.normal_(conv.weight, std=0.05)
            torch.nn.init.normal_(conv.bias, std=0.05)
            state[f"features.{idx_str}.weight"] = conv.weight.detach().clone()
            state[f"features.{idx_str}.bias"] = conv.bias.detach().clone()
        path = tmp_path / "vgg19.pth"
        torch.save(state, path)
        loaded = Vgg19Extractor.from_weights(str(path))
        img = torch.rand(1, 3, 32, 32)
        for sa, sb in zip(donor.stages(img), loaded.stages(img)):
            assert torch.equal(sa, sb)
