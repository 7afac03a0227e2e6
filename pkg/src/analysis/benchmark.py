"""
Inference throughput: timed forward passes of batch 1 at a square input
after a fixed warmup, reported as images/sec and latency percentiles.
"""

import time
from dataclasses import asdict, dataclass

import numpy as np
import torch

from model.checkpoint import load_checkpoint
from model.network import NetworkConfig, build, count_parameters, forward
from utils.errors import InvalidInputError

DEFAULT_WARMUP = 3


@dataclass
class ThroughputReport:
    source: str
    edge: int
    n_parameters: int
    warmup_iters: int
    timed_iters: int
    images_per_sec: float
    latency_ms_mean: float
    latency_ms_p50: float
    latency_ms_p90: float
    latency_ms_p99: float
    device: str
    hardware: str
    samples_ms: list

    def to_dict(self):
        return asdict(self)


def preset_network(encoder_depth, width_multiplier, seed=0):
    return build(NetworkConfig(encoder_depth=encoder_depth, width_multiplier=width_multiplier), seed)


def measure_throughput(net, edge=512, iters=10, warmup=DEFAULT_WARMUP, device="cpu",
                       hardware="", source=""):
    """Warmup passes are run and discarded; `iters` timed passes feed the statistics"""
    if edge <= 0 or iters <= 0 or warmup < 0:
        raise InvalidInputError("edge and iters must be positive, warmup >= 0")

    device = torch.device(device)
    net = net.to(device).eval()
    x = torch.rand(1, net.config.in_channels, edge, edge, generator=torch.Generator().manual_seed(0)).to(device)

    def run_once():
        start = time.perf_counter()
        with torch.no_grad():
            forward(net, x)
        if device.type == "cuda":
            torch.cuda.synchronize()
        return (time.perf_counter() - start) * 1e3

    for _ in range(warmup):
        run_once()
    samples = np.array([run_once() for _ in range(iters)])

    return ThroughputReport(
        source=source,
        edge=edge,
        n_parameters=count_parameters(net),
        warmup_iters=warmup,
        timed_iters=len(samples),
        images_per_sec=float(1e3 / samples.mean()),
        latency_ms_mean=float(samples.mean()),
        latency_ms_p50=float(np.percentile(samples, 50)),
        latency_ms_p90=float(np.percentile(samples, 90)),
        latency_ms_p99=float(np.percentile(samples, 99)),
        device=str(device),
        hardware=hardware,
        samples_ms=[round(float(s), 4) for s in samples],
    )


def benchmark_checkpoint(path, edge=512, iters=10, warmup=DEFAULT_WARMUP, device="cpu", hardware=""):
    net, _ = load_checkpoint(path)
    return measure_throughput(net, edge, iters, warmup, device, hardware, source=str(path))


def benchmark_preset(encoder_depth, width_multiplier, edge=512, iters=10, warmup=DEFAULT_WARMUP,
                     device="cpu", hardware=""):
    net = preset_network(encoder_depth, width_multiplier)
    return measure_throughput(net, edge, iters, warmup, device, hardware,
                              source=f"preset:{encoder_depth}x{width_multiplier:g}")
