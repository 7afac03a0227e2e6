"""
Checkpoint archive: a zip holding `header.json` (format version, network
config, tensor table, free-form metadata) and one raw little-endian
payload per tensor. Float tensors are stored as 32-bit floats, integer
buffers as 64-bit ints. Entry timestamps are fixed so identical networks
give identical archives.
"""

import json
import zipfile
from pathlib import Path

import numpy as np
import torch

from model.network import NetworkConfig, build
from utils.errors import CheckpointError

FORMAT_VERSION = 1
_FIXED_TIME = (1980, 1, 1, 0, 0, 0)


def _entry(name):
    info = zipfile.ZipInfo(name, date_time=_FIXED_TIME)
    info.compress_type = zipfile.ZIP_STORED
    return info


def save_checkpoint(net, path, meta=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    tensors = []
    payloads = []
    for i, (name, t) in enumerate(net.state_dict().items()):
        t = t.detach().cpu()
        if t.is_floating_point():
            arr, dtype = t.to(torch.float32).numpy().astype("<f4"), "float32"
        else:
            arr, dtype = t.to(torch.int64).numpy().astype("<i8"), "int64"
        tensors.append({"name": name, "shape": list(arr.shape), "dtype": dtype, "file": f"tensors/{i:05d}.bin"})
        payloads.append(arr.tobytes())

    header = {
        "format_version": FORMAT_VERSION,
        "config": net.config.to_dict(),
        "tensors": tensors,
        "meta": meta or {},
    }

    tmp = path.with_suffix(path.suffix + ".tmp")
    with zipfile.ZipFile(tmp, "w") as zf:
        zf.writestr(_entry("header.json"), json.dumps(header, indent=2, sort_keys=True))
        for spec, payload in zip(tensors, payloads):
            zf.writestr(_entry(spec["file"]), payload)
    tmp.replace(path)
    return path


def read_header(path):
    try:
        with zipfile.ZipFile(path) as zf:
            return json.loads(zf.read("header.json"))
    except (OSError, KeyError, zipfile.BadZipFile, ValueError) as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}")


def load_checkpoint(path):
    """Returns (network, meta); the network is rebuilt from the stored config"""
    header = read_header(path)
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format {header.get('format_version')} in {path}")

    net = build(NetworkConfig.from_dict(header["config"]))
    state = {}
    with zipfile.ZipFile(path) as zf:
        for spec in header["tensors"]:
            np_dtype = "<f4" if spec["dtype"] == "float32" else "<i8"
            arr = np.frombuffer(zf.read(spec["file"]), dtype=np_dtype).reshape(spec["shape"])
            state[spec["name"]] = torch.from_numpy(arr.copy())
    try:
        net.load_state_dict(state, strict=True)
    except RuntimeError as e:
        raise CheckpointError(f"checkpoint {path} does not match its config: {e}")
    return net, header.get("meta", {})
