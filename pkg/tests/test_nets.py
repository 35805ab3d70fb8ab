"""
U-Net generators with a hard-shared encoder prefix, PatchGAN
discriminators and the frozen feature extractor.
"""

# Third party packages
import numpy as np
import pytest

# pyexo2ego libs
from pyexo2ego.libs.autodiff import Tensor, backward, no_grad, reduce_mean
from pyexo2ego.libs.nets import (
    FeatureExtractor,
    GeneratorPair,
    NetsException,
    PatchDiscriminator,
    PGANModel,
    SharedWeightsError,
    UNetConfig,
    assert_shared,
    prepare_inputs,
    segmentation_channel,
)
from pyexo2ego.libs.utils import make_rng


def _images(rng: np.random.Generator, batch: int, side: int, channels: int = 3) -> Tensor:
    return Tensor(rng.uniform(-1.0, 1.0, size=(batch, channels, side, side)).astype(np.float32))


# ------------------------
# Configuration
# ------------------------

def test_config_rejects_prefix_beyond_depth():
    with pytest.raises(NetsException, match="shared_prefix"):
        UNetConfig(depth=2, shared_prefix=3).validate()


@pytest.mark.parametrize("side", [18, 2, 30])
def test_check_side_rejects_indivisible_sides(side):
    with pytest.raises(NetsException, match="not divisible"):
        UNetConfig(depth=2).check_side(side)


def test_encoder_widths_cap_at_eight_times_base():
    config = UNetConfig(base_width=4, depth=6)
    assert [config.width(level) for level in range(1, 7)] == [4, 8, 16, 32, 32, 32]


# ------------------------
# Generators
# ------------------------

def test_generator_output_shape_and_range(rng, tiny_net):
    pair = GeneratorPair.build(tiny_net, make_rng(0))
    out = pair.generate("g1", _images(rng, 2, 16))
    assert out.shape == (2, 3, 16, 16)
    assert np.all(np.abs(out.data) < 1.0)


def test_shared_prefix_is_aliased_after_construction():
    config = UNetConfig(base_width=4, depth=3, shared_prefix=2)
    pair = GeneratorPair.build(config, make_rng(0))
    assert_shared(pair)
    assert pair.encoders["g1"].layers[1] is pair.encoders["g2"].layers[1]
    assert pair.encoders["g1"].layers[2] is not pair.encoders["g2"].layers[2]


def test_equal_values_in_separate_storage_are_not_shared(tiny_net):
    pair = GeneratorPair.build(tiny_net, make_rng(0), alias_shared=False)
    with pytest.raises(SharedWeightsError) as info:
        assert_shared(pair)
    assert info.value.layer_index == 1


def test_shared_layers_agree_on_identical_inputs(rng):
    config = UNetConfig(base_width=4, depth=3, shared_prefix=2)
    pair = GeneratorPair.build(config, make_rng(0))
    x = _images(rng, 1, 16)
    with no_grad():
        enc1, enc2 = pair.encode("g1", x), pair.encode("g2", x)
    for level in range(2):
        np.testing.assert_array_equal(enc1.skips[level].data, enc2.skips[level].data)
    assert not np.array_equal(enc1.skips[2].data, enc2.skips[2].data)


def test_shared_parameters_pool_gradients_of_both_generators(rng, tiny_net):
    pair = GeneratorPair.build(tiny_net, make_rng(0), dtype=np.float64)
    shared = pair.encoders["g1"].layers[0].conv.weight
    exo = Tensor(rng.uniform(-1, 1, size=(1, 3, 16, 16)))
    ego = Tensor(rng.uniform(-1, 1, size=(1, 3, 16, 16)))

    backward(reduce_mean(pair.generate("g1", exo)))
    first = shared.grad.copy()
    shared.zero_grad()
    backward(reduce_mean(pair.generate("g2", ego)))
    second = shared.grad.copy()
    shared.zero_grad()

    backward(reduce_mean(pair.generate("g1", exo)) + reduce_mean(pair.generate("g2", ego)))
    np.testing.assert_allclose(shared.grad, first + second, rtol=1e-5, atol=1e-12)


def test_cross_decoding_accepts_the_other_encoder(rng, tiny_net):
    pair = GeneratorPair.build(tiny_net, make_rng(0))
    with no_grad():
        out = pair.decode("g2", pair.encode("g1", _images(rng, 1, 16)))
    assert out.shape == (1, 3, 16, 16)


def test_unknown_generator_is_rejected(rng, tiny_net):
    pair = GeneratorPair.build(tiny_net, make_rng(0))
    with pytest.raises(NetsException, match="g3"):
        pair.generate("g3", _images(rng, 1, 16))


def test_encoder_rejects_wrong_channels(rng, tiny_net):
    pair = GeneratorPair.build(tiny_net, make_rng(0))
    with pytest.raises(NetsException, match="input channels"):
        pair.encode("g1", _images(rng, 1, 16, channels=4))


def test_shared_layers_appear_once_in_parameter_map():
    config = UNetConfig(base_width=4, depth=3, shared_prefix=2)
    params = GeneratorPair.build(config, make_rng(0)).named_parameters()
    assert "shared/enc1.weight" in params and "shared/enc2.bias" in params
    assert not any(name.startswith(("g1/enc1", "g2/enc2")) for name in params)
    assert len({id(t) for t in params.values()}) == len(params)


def test_construction_is_seeded(tiny_net):
    first = PGANModel(tiny_net, seed=4).named_parameters()
    second = PGANModel(tiny_net, seed=4).named_parameters()
    assert first.keys() == second.keys()
    for name in first:
        np.testing.assert_array_equal(first[name].data, second[name].data)


# ------------------------
# Discriminator and Features
# ------------------------

def test_patch_discriminator_output_grid(rng):
    disc = PatchDiscriminator(make_rng(0), in_channels=6)
    logits = disc(_images(rng, 2, 32), _images(rng, 2, 32))
    assert logits.shape == (2, 1, 6, 6)


def test_discriminator_rejects_wrong_stacked_channels(rng):
    disc = PatchDiscriminator(make_rng(0), in_channels=6)
    with pytest.raises(NetsException, match="stacked channels"):
        disc(_images(rng, 1, 16, channels=4), _images(rng, 1, 16))


def test_feature_extractor_is_frozen_and_seeded(rng):
    psi = FeatureExtractor(psi_seed=9)
    again = FeatureExtractor(psi_seed=9)
    for stage, twin in zip(psi.stages, again.stages):
        assert not stage.weight.requires_grad
        np.testing.assert_array_equal(stage.weight.data, twin.weight.data)

    image = Tensor(rng.uniform(-1, 1, size=(2, 3, 16, 16)).astype(np.float32), requires_grad=True)
    features = psi.extract(image)
    assert [f.shape for f in features] == [(2, 32, 8, 8), (2, 64, 4, 4)]
    backward(reduce_mean(features[-1]))
    assert image.grad is not None
    assert psi.stages[0].weight.grad is None


# ------------------------
# Inputs and Model Bundle
# ------------------------

def test_prepare_inputs_conditions_on_target_view_segmentation(rng):
    exo = rng.uniform(-1, 1, size=(2, 3, 8, 8)).astype(np.float32)
    ego = rng.uniform(-1, 1, size=(2, 3, 8, 8)).astype(np.float32)
    exo_seg = np.zeros((2, 8, 8), dtype=np.uint8)
    ego_seg = np.full((2, 8, 8), 3, dtype=np.uint8)

    plain = prepare_inputs(exo, ego, exo_seg, ego_seg, 4, conditioning=False)
    assert plain.g1_input is plain.exo and plain.g2_input is plain.ego

    inputs = prepare_inputs(exo, ego, exo_seg, ego_seg, 4, conditioning=True)
    assert inputs.g1_input.shape == (2, 4, 8, 8)
    np.testing.assert_allclose(inputs.g1_input.data[:, 3], np.ones((2, 8, 8)), rtol=1e-6)
    np.testing.assert_allclose(inputs.g2_input.data[:, 3], -np.ones((2, 8, 8)), rtol=1e-6)


def test_segmentation_channel_spans_unit_range():
    seg = np.array([[[0, 1, 2, 3]]], dtype=np.uint8)
    np.testing.assert_allclose(segmentation_channel(seg, 4)[0, 0, 0], [-1, -1 / 3, 1 / 3, 1], rtol=1e-6)


def test_conditioned_model_builds_wider_inputs(rng):
    config = UNetConfig(base_width=4, depth=2, shared_prefix=1, conditioning_channels=1)
    model = PGANModel(config)
    cond = Tensor(rng.uniform(-1, 1, size=(1, 4, 16, 16)).astype(np.float32))
    with no_grad():
        fake = model.generate("g1", cond)
        logits = model.discriminate("d1", cond, fake)
    assert fake.shape == (1, 3, 16, 16)
    assert logits.shape[:2] == (1, 1)


def test_model_parameter_groups_are_disjoint(tiny_net):
    model = PGANModel(tiny_net)
    g_params, d_params = model.generator_parameters(), model.discriminator_parameters()
    assert not set(g_params) & set(d_params)
    assert all(name.startswith(("d1/", "d2/")) for name in d_params)
    assert len(model.named_parameters()) == len(g_params) + len(d_params)
