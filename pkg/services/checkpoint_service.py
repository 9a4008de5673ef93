"""
Checkpoint files

Layout (little-endian):
    magic 'RGCK', u16 version,
    u32 length + UTF-8 JSON architecture block
        {"network": ..., "heads": ..., "k": ..., "epoch": ..., "has_velocity": ...}
    one parameter block per trainable array, in model_parameters order:
        u16 name length, name, u8 ndim, u32 dims..., float64 data
    the same blocks for the optimizer velocity when has_velocity is set
"""
import json
import logging
import struct
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from models.filters import FilterBank
from models.heads import HeadBank
from models.network import LayerConfig, RGNetwork
from models.training import Checkpoint
from utils.constants import CHECKPOINT_MAGIC, CHECKPOINT_VERSION
from utils.errors import ArchitectureMismatchError, FormatError, RGNetError, VersionMismatchError
from .dataset_io import _Reader
from .training import model_parameters

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def network_from_dict(data: dict) -> RGNetwork:
    """Zero-initialised network with the given architecture"""
    layers = [LayerConfig.from_dict(d) for d in data['layers']]
    filters = [FilterBank(np.zeros((c.out_channels, c.in_channels) + c.kernel), c.stride, c.pad) for c in layers]
    biases = [np.zeros(c.out_channels) for c in layers]
    return RGNetwork(layers=layers, filters=filters, biases=biases, input_dims=tuple(data['input_dims']))


def heads_from_dict(data: dict, net: RGNetwork) -> HeadBank:
    shapes = net.layer_shapes()
    top_size = int(np.prod(shapes[-1]))
    taps = []
    for layer in data['taps']:
        if not 1 <= layer <= net.n_layers:
            raise RGNetError(f"tap references layer {layer}, network has {net.n_layers}")
        taps.append((layer, shapes[layer - 1][0]))
    return HeadBank.zeros(data['n_keypoints'], top_size, tuple(data['coarse_grid']), taps)


def _pack_params(params: Dict[str, np.ndarray]) -> List[bytes]:
    parts = []
    for name, value in params.items():
        raw = name.encode('utf-8')
        parts.append(struct.pack('<H', len(raw)) + raw)
        parts.append(struct.pack('<B', value.ndim) + struct.pack(f'<{value.ndim}I', *value.shape))
        parts.append(np.ascontiguousarray(value, dtype='<f8').tobytes())
    return parts


def _read_params(reader: _Reader, expected: Dict[str, Tuple[int, ...]], label: str) -> Dict[str, np.ndarray]:
    out = {}
    for name, shape in expected.items():
        (length,) = struct.unpack('<H', reader.take(2, f"{label} name"))
        found = reader.take(length, f"{label} name").decode('utf-8', errors='replace')
        if found != name:
            raise FormatError(f"expected parameter '{name}', found '{found}'", offset=reader.offset, section=label)
        (ndim,) = struct.unpack('<B', reader.take(1, f"{label} {name}"))
        dims = struct.unpack(f'<{ndim}I', reader.take(4 * ndim, f"{label} {name}"))
        if tuple(dims) != tuple(shape):
            raise FormatError(f"parameter '{name}' has shape {dims}, architecture implies {shape}",
                              offset=reader.offset, section=label)
        count = int(np.prod(dims)) if dims else 1
        out[name] = reader.array('<f8', count, f"{label} {name}").reshape(dims).astype(np.float64)
    return out


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    arch = {
        'network': ckpt.net.to_dict(),
        'heads': ckpt.heads.to_dict(),
        'k': ckpt.k,
        'epoch': ckpt.epoch,
        'has_velocity': bool(ckpt.velocity),
    }
    blob = json.dumps(arch, sort_keys=True).encode('utf-8')
    params = model_parameters(ckpt.net, ckpt.heads)
    parts = [CHECKPOINT_MAGIC, struct.pack('<HI', CHECKPOINT_VERSION, len(blob)), blob]
    parts.extend(_pack_params(params))
    if ckpt.velocity:
        parts.extend(_pack_params({name: ckpt.velocity.get(name, np.zeros_like(p)) for name, p in params.items()}))
    return b''.join(parts)


def decode_checkpoint(data: bytes) -> Checkpoint:
    """
    Raises:
        FormatError: bad magic, truncation, malformed architecture block or parameter blocks
        VersionMismatchError: unsupported format version
    """
    reader = _Reader(data)
    magic = reader.take(4, "header")
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"not a checkpoint file (magic {magic!r})", offset=0, section="header")
    version, length = struct.unpack('<HI', reader.take(6, "header"))
    if version != CHECKPOINT_VERSION:
        raise VersionMismatchError("checkpoint", version, CHECKPOINT_VERSION)
    start = reader.offset
    try:
        arch = json.loads(reader.take(length, "architecture").decode('utf-8'))
        net = network_from_dict(arch['network'])
        heads = heads_from_dict(arch['heads'], net)
    except FormatError:
        raise
    except (ValueError, KeyError, TypeError) as e:
        raise FormatError(f"malformed architecture block: {e}", offset=start, section="architecture") from e

    params = model_parameters(net, heads)
    shapes = {name: p.shape for name, p in params.items()}
    for name, value in _read_params(reader, shapes, "parameters").items():
        params[name][...] = value
    velocity = None
    if arch.get('has_velocity'):
        velocity = _read_params(reader, shapes, "velocity")
    if reader.offset != len(data):
        raise FormatError(f"{len(data) - reader.offset} unexpected trailing bytes",
                          offset=reader.offset, section="trailer")
    return Checkpoint(net=net, heads=heads, k=int(arch.get('k', 1)), epoch=arch.get('epoch'), velocity=velocity)


def check_architecture(ckpt: Checkpoint, net: RGNetwork, heads: Optional[HeadBank] = None) -> None:
    """
    Raises:
        ArchitectureMismatchError: naming the first layer (or head) that differs
    """
    if tuple(ckpt.net.input_dims) != tuple(net.input_dims):
        raise ArchitectureMismatchError("input", f"checkpoint expects {ckpt.net.input_dims}, "
                                                 f"configuration gives {net.input_dims}")
    if ckpt.net.n_layers != net.n_layers:
        raise ArchitectureMismatchError(f"layer {min(ckpt.net.n_layers, net.n_layers) + 1}",
                                        f"checkpoint has {ckpt.net.n_layers} layers, configuration {net.n_layers}")
    for i, (a, b) in enumerate(zip(ckpt.net.layers, net.layers), start=1):
        if a.to_dict() != b.to_dict():
            raise ArchitectureMismatchError(f"layer {i}", f"checkpoint {a.to_dict()} vs configuration {b.to_dict()}")
    if heads is not None and ckpt.heads.to_dict() != heads.to_dict():
        raise ArchitectureMismatchError("heads", f"checkpoint {ckpt.heads.to_dict()} vs configuration {heads.to_dict()}")


def save_checkpoint(ckpt: Checkpoint, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(ckpt))
    logger.info("saved checkpoint to %s", path)
    return path


def load_checkpoint(path: PathLike, net: Optional[RGNetwork] = None,
                    heads: Optional[HeadBank] = None) -> Checkpoint:
    """
    Read a checkpoint, optionally checking it against an expected architecture

    Args:
        path: checkpoint file
        net, heads: expected architecture (parameter values are ignored)
    """
    ckpt = decode_checkpoint(Path(path).read_bytes())
    if net is not None:
        check_architecture(ckpt, net, heads)
    return ckpt
