import numpy as np
import pytest
import torch
from numpy.testing import assert_allclose

from pfen.model import (SCHEMA_VERSION, VAR_FLOOR, FeatureExtractor, build_net,
                        load_net, mixture_log_density, mixture_nll,
                        property_head, save_net)


def _net(seed=0, width=2, components=5):
    return build_net(["TC"], width, components, seed=seed).extractors["TC"]


class TestFeatureExtractor:

    def test_output_shape(self):
        ext = _net(seed=1)
        out = ext(torch.randn(3, 40, 2))
        assert out.shape == (3, 5, 6)

    def test_single_point_set(self):
        ext = _net(seed=2)
        out = ext(torch.randn(1, 1, 2))
        assert out.shape == (1, 5, 6)
        assert torch.isfinite(out).all()

    def test_set_length_does_not_change_shape(self):
        ext = _net(seed=3)
        for length in (1, 7, 128, 300):
            assert ext(torch.randn(2, length, 2)).shape == (2, 5, 6)

    def test_wrong_width_rejected(self):
        ext = _net(seed=4)
        with pytest.raises(ValueError, match="2"):
            ext(torch.randn(2, 10, 3))

    def test_empty_set_rejected(self):
        ext = _net(seed=4)
        with pytest.raises(ValueError, match="point"):
            ext(torch.randn(2, 0, 2))

    def test_bad_width_at_build(self):
        with pytest.raises(ValueError, match="width"):
            FeatureExtractor(4)

    def test_gain_column_variant(self):
        ext = _net(seed=5, width=3)
        out = ext(torch.randn(2, 30, 3))
        assert out.shape == (2, 5, 6)

    def test_permutation_invariance(self):
        ext = _net(seed=6).eval()
        rng = torch.Generator().manual_seed(0)
        x = torch.randn(2, 64, 2, generator=rng)
        base = ext(x)
        for _ in range(5):
            perm = torch.randperm(64, generator=rng)
            assert (ext(x[:, perm]) - base).abs().max() < 1e-5

    def test_duplicated_set_matches(self):
        # softmax attention weights renormalize, so listing every point
        # twice is the same multiset up to float summation order
        ext = _net(seed=7).eval()
        x = torch.randn(1, 50, 2)
        doubled = torch.cat([x, x], dim=1)
        assert (ext(doubled) - ext(x)).abs().max() < 1e-5

    def test_batch_rows_independent(self):
        ext = _net(seed=8).eval()
        x = torch.randn(4, 20, 2)
        whole = ext(x)
        one = ext(x[2:3])
        assert (whole[2:3] - one).abs().max() < 1e-5


class TestPropertyHead:

    def test_zero_input_reference_values(self):
        weights, means, covs = property_head(torch.zeros(5, 6))
        assert_allclose(weights.numpy(), np.full(5, 0.2), rtol=1e-6)
        assert_allclose(means.numpy(), np.zeros((5, 2)))
        expect = np.log(2.0)
        assert_allclose(covs[:, 0, 0].numpy(), np.full(5, expect), rtol=1e-5)
        assert_allclose(covs[:, 1, 1].numpy(), np.full(5, expect), rtol=1e-5)
        assert_allclose(covs[:, 0, 1].numpy(), np.zeros(5), atol=1e-12)

    def test_weights_always_normalized(self):
        rng = torch.Generator().manual_seed(1)
        raw = torch.randn(100, 5, 6, generator=rng) * 10.0
        weights, _, _ = property_head(raw)
        assert_allclose(weights.sum(-1).numpy(), np.ones(100), rtol=1e-6)

    def test_covariances_positive_definite(self):
        rng = torch.Generator().manual_seed(2)
        raw = torch.randn(200, 5, 6, generator=rng) * 5.0
        _, _, covs = property_head(raw)
        c = covs.double().numpy().reshape(-1, 2, 2)
        assert_allclose(c[:, 0, 1], c[:, 1, 0])
        assert np.linalg.eigvalsh(c).min() > 0.0

    def test_saturated_correlation_stays_definite(self):
        raw = torch.zeros(1, 5, 6)
        raw[..., 4] = 100.0
        _, _, covs = property_head(raw)
        c = covs.double().numpy().reshape(-1, 2, 2)
        assert np.linalg.eigvalsh(c).min() > 0.0

    def test_underflowed_variance_floored(self):
        raw = torch.zeros(1, 5, 6)
        raw[..., 3] = -200.0
        raw[..., 5] = -200.0
        _, _, covs = property_head(raw)
        assert covs[0, 0, 0, 0].item() >= VAR_FLOOR * 0.99
        c = covs.double().numpy().reshape(-1, 2, 2)
        assert np.linalg.eigvalsh(c).min() > 0.0

    def test_wrong_trailing_width(self):
        with pytest.raises(ValueError, match="6"):
            property_head(torch.zeros(5, 4))

    def test_mean_passthrough(self):
        raw = torch.zeros(2, 5, 6)
        raw[..., 1] = 1.5
        raw[..., 2] = -0.25
        _, means, _ = property_head(raw)
        assert_allclose(means.numpy(), np.broadcast_to([1.5, -0.25], (2, 5, 2)))


class TestMixtureDensity:

    def _hand_density(self, weights, means, covs, points):
        total = np.zeros(len(points))
        for w, mu, cov in zip(weights, means, covs):
            diff = points - mu
            inv = np.linalg.inv(cov)
            quad = np.einsum("li,ij,lj->l", diff, inv, diff)
            total += w * np.exp(-0.5 * quad) / (2.0 * np.pi * np.sqrt(np.linalg.det(cov)))
        return np.log(total)

    def test_matches_hand_computation(self):
        weights = np.array([0.3, 0.7])
        means = np.array([[0.0, 0.0], [1.0, -1.0]])
        covs = np.array([np.eye(2) * 0.5, [[0.4, 0.1], [0.1, 0.3]]])
        rng = np.random.default_rng(3)
        points = rng.normal(size=(50, 2))
        got = mixture_log_density(
            torch.tensor(weights)[None], torch.tensor(means)[None],
            torch.tensor(covs)[None], torch.tensor(points)[None])
        assert_allclose(got[0].numpy(), self._hand_density(weights, means, covs, points),
                        rtol=1e-10)

    def test_nll_is_mean_negative_log_density(self):
        rng = torch.Generator().manual_seed(4)
        raw = torch.randn(2, 5, 6, generator=rng)
        points = torch.randn(2, 30, 2, generator=rng)
        weights, means, covs = property_head(raw)
        direct = -mixture_log_density(weights, means, covs, points).mean()
        assert_allclose(mixture_nll(raw, points).item(), direct.item(), rtol=1e-6)


class TestSaveLoad:

    def test_roundtrip_outputs_identical(self, tmp_path):
        net = build_net(["TC"], 2, seed=11)
        path = tmp_path / "model.pt"
        save_net(net, path)
        back = load_net(path)
        x = torch.randn(2, 40, 2)
        with torch.no_grad():
            a = net.extractors["TC"](x)
            b = back.extractors["TC"](x)
        assert torch.equal(a, b)
        assert back.input_width == 2 and back.components == 5

    def test_schema_version_refused(self, tmp_path):
        net = build_net(["TC"], 2, seed=12)
        path = tmp_path / "model.pt"
        save_net(net, path)
        payload = torch.load(path, map_location="cpu")
        payload["schema_version"] = SCHEMA_VERSION + 1
        torch.save(payload, path)
        with pytest.raises(ValueError, match="schema version"):
            load_net(path)

    def test_multi_class_net(self, tmp_path):
        net = build_net(["TI", "TC", "TL"], 3, components=4, seed=13)
        path = tmp_path / "model.pt"
        save_net(net, path)
        back = load_net(path)
        assert back.classes() == ["TC", "TI", "TL"]
        weights, means, covs = back.params_for("TL", torch.randn(1, 16, 3))
        assert weights.shape == (1, 4) and covs.shape == (1, 4, 2, 2)

    def test_unknown_class_query(self):
        net = build_net(["TC"], 2, seed=14)
        with pytest.raises(KeyError, match="TI"):
            net.params_for("TI", torch.randn(1, 8, 2))
