#!/usr/bin/env python3
"""
Tests for the matting network, presets and checkpoint archives
"""

import concurrent.futures
import sys

import torch

from harness import cleanup, raises, run_tests, scratch_dir

from analysis.benchmark import benchmark_preset
from model.checkpoint import load_checkpoint, read_header, save_checkpoint
from model.network import (NetworkConfig, build, clone_parameters, count_parameters, forward,
                           load_encoder_weights)
from utils.errors import CheckpointError, ConfigError, InvalidInputError

SMALL = NetworkConfig(encoder_depth="small", width_multiplier=0.5, base_width=16,
                      aspp_channels=32, decoder_channels=(32, 24, 16, 16))


def _same_params(a, b):
    sa, sb = a.state_dict(), b.state_dict()
    return sa.keys() == sb.keys() and all(torch.equal(sa[k], sb[k]) for k in sa)


def test_build_deterministic():
    assert _same_params(build(SMALL, 3), build(SMALL, 3))
    assert not _same_params(build(SMALL, 3), build(SMALL, 4))


def test_build_in_threads_matches_sequential():
    seeds = list(range(8))
    expected = {s: build(SMALL, s) for s in seeds}
    for _ in range(3):
        with concurrent.futures.ThreadPoolExecutor(max_workers=8) as executor:
            built = dict(zip(seeds, executor.map(lambda s: build(SMALL, s), seeds)))
        mismatched = [s for s in seeds if not _same_params(built[s], expected[s])]
        assert not mismatched, f"thread builds differ for seeds {mismatched}"
    torch.manual_seed(1)
    a = build(SMALL, 5)
    torch.manual_seed(2)
    assert _same_params(a, build(SMALL, 5))


def test_preset_ordering():
    half = count_parameters(build(NetworkConfig("small", 0.5)))
    full = count_parameters(build(NetworkConfig("small", 1.0)))
    large = build(NetworkConfig("large", 1.0))
    assert half < full < count_parameters(large)
    names = set(large.state_dict())
    assert names == set(build(NetworkConfig("large", 1.0), 9).state_dict())


def test_preset_throughput_ordering():
    half = benchmark_preset("small", 0.5, edge=64, iters=5, warmup=1)
    large = benchmark_preset("large", 1.0, edge=64, iters=5, warmup=1)
    assert (half.timed_iters, half.warmup_iters, len(half.samples_ms)) == (5, 1, 5)
    assert half.n_parameters < large.n_parameters
    assert half.images_per_sec >= large.images_per_sec


def test_invalid_config():
    assert raises(ConfigError, build, NetworkConfig(encoder_depth="huge"))
    assert raises(ConfigError, build, NetworkConfig(width_multiplier=0.75))


def test_forward_shapes_and_range():
    net = build(SMALL).eval()
    x = torch.rand(2, 3, 128, 128)
    matte, boundary = forward(net, x)
    assert matte.shape == boundary.shape == (2, 1, 128, 128)
    assert matte.min() >= 0 and matte.max() <= 1
    m2, b2 = forward(net, x)
    assert torch.equal(matte, m2) and torch.equal(boundary, b2)

    odd, _ = forward(net, torch.rand(1, 3, 37, 50))
    assert odd.shape == (1, 1, 37, 50)
    assert raises(InvalidInputError, forward, net, torch.rand(1, 4, 32, 32))


def test_output_range_under_extreme_weights():
    net = build(SMALL).eval()
    with torch.no_grad():
        for p in net.parameters():
            p.mul_(5.0)
    matte, boundary = forward(net, torch.rand(1, 3, 32, 32))
    assert matte.min() >= 0 and matte.max() <= 1
    assert boundary.min() >= 0 and boundary.max() <= 1


def test_gradient_matches_finite_difference():
    net = build(SMALL, 1).double().eval()
    x = torch.rand(1, 3, 32, 32, dtype=torch.float64, generator=torch.Generator().manual_seed(0))
    target = torch.rand(1, 1, 32, 32, dtype=torch.float64, generator=torch.Generator().manual_seed(1))
    param = net.matte_head[2].bias

    def loss():
        return ((forward(net, x)[0] - target) ** 2).mean()

    net.zero_grad()
    loss().backward()
    analytic = float(param.grad[0])

    eps = 1e-6
    with torch.no_grad():
        param[0] += eps
        up = float(loss())
        param[0] -= 2 * eps
        down = float(loss())
        param[0] += eps
    numeric = (up - down) / (2 * eps)
    assert abs(analytic - numeric) <= 1e-3 * max(abs(numeric), 1e-8), (analytic, numeric)


def test_clone_independent():
    src = build(SMALL).eval()
    clone = clone_parameters(src)
    x = torch.rand(1, 3, 32, 32)
    assert torch.equal(forward(src, x)[0], forward(clone, x)[0])
    assert _same_params(clone_parameters(clone), src)
    with torch.no_grad():
        next(src.parameters()).add_(1.0)
    assert not _same_params(clone, src)


def test_encoder_weight_hook():
    net = build(SMALL, 0)
    donor = build(SMALL, 5)
    missing, unexpected = load_encoder_weights(net, donor.encoder.state_dict())
    assert not missing and not unexpected
    assert _same_params(net.encoder, donor.encoder)


def test_checkpoint_round_trip():
    root = scratch_dir("ckpt_")
    try:
        net = build(SMALL, 2)
        a = save_checkpoint(net, root / "a.ckpt", {"stage": "seg_pretrain", "step": 7})
        b = save_checkpoint(net, root / "b.ckpt", {"stage": "seg_pretrain", "step": 7})
        assert a.read_bytes() == b.read_bytes()

        loaded, meta = load_checkpoint(a)
        assert meta["step"] == 7 and loaded.config == SMALL
        assert _same_params(loaded, net)
        assert read_header(a)["format_version"] == 1

        (root / "bad.ckpt").write_bytes(b"not a zip")
        assert raises(CheckpointError, load_checkpoint, root / "bad.ckpt")
    finally:
        cleanup(root)


def main():
    return run_tests("NETWORK TESTS", [
        ("deterministic build", test_build_deterministic),
        ("threaded builds", test_build_in_threads_matches_sequential),
        ("preset parameter ordering", test_preset_ordering),
        ("preset throughput ordering", test_preset_throughput_ordering),
        ("invalid config", test_invalid_config),
        ("forward shapes and range", test_forward_shapes_and_range),
        ("range under extreme weights", test_output_range_under_extreme_weights),
        ("finite-difference gradient", test_gradient_matches_finite_difference),
        ("clone independence", test_clone_independent),
        ("encoder weight hook", test_encoder_weight_hook),
        ("checkpoint round trip", test_checkpoint_round_trip),
    ])


if __name__ == "__main__":
    sys.exit(main())
