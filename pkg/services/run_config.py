"""
Run configuration documents

A run config is a KEY=VALUE document (dotenv syntax). Keys not given
fall back to the defaults in config.py; RGNET_<KEY> environment
variables override the document, and explicit overrides (command-line
flags) override both.
"""
import logging
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np
from dotenv import dotenv_values

import config
from models.filters import FilterBank
from models.heads import HeadBank
from models.network import LayerConfig, RGNetwork
from models.training import TrainConfig
from utils.errors import ConfigError, RGNetError
from utils.validators import validate_layer_spec, validate_positive, validate_taps

logger = logging.getLogger(__name__)

# key -> (type, default)
SCHEMA = {
    'INPUT_CHANNELS': (int, config.DEFAULT_INPUT_CHANNELS),
    'IMAGE_SIZE': (int, config.DEFAULT_IMAGE_SIZE),
    'N_KEYPOINTS': (int, config.DEFAULT_N_KEYPOINTS),
    'LAYERS': (str, config.DEFAULT_LAYERS),
    'TAPS': (str, config.DEFAULT_TAPS),
    'COARSE_SIZE': (int, config.DEFAULT_COARSE_SIZE),
    'LEARNING_RATE': (float, config.DEFAULT_LEARNING_RATE),
    'MOMENTUM': (float, config.DEFAULT_MOMENTUM),
    'WEIGHT_DECAY': (float, config.DEFAULT_WEIGHT_DECAY),
    'BATCH_SIZE': (int, config.DEFAULT_BATCH_SIZE),
    'EPOCHS': (int, config.DEFAULT_EPOCHS),
    'K': (int, config.DEFAULT_K),
    'LR_DECAY_PER_FINER_SCALE': (float, config.DEFAULT_LR_DECAY_PER_FINER_SCALE),
    'POSITIVE_RADIUS': (float, config.DEFAULT_POSITIVE_RADIUS),
    'SEED': (int, config.DEFAULT_SEED),
    'INIT_SCALE': (float, config.DEFAULT_INIT_SCALE),
    'VISIBILITY_THRESHOLD': (float, config.DEFAULT_VISIBILITY_THRESHOLD),
}


@dataclass
class RunConfig:
    input_channels: int = config.DEFAULT_INPUT_CHANNELS
    image_size: int = config.DEFAULT_IMAGE_SIZE
    n_keypoints: int = config.DEFAULT_N_KEYPOINTS
    layers: List[LayerConfig] = field(default_factory=list)
    taps: List[int] = field(default_factory=list)
    coarse_size: int = config.DEFAULT_COARSE_SIZE
    train: TrainConfig = field(default_factory=TrainConfig)
    init_scale: float = config.DEFAULT_INIT_SCALE
    visibility_threshold: float = config.DEFAULT_VISIBILITY_THRESHOLD

    @property
    def input_dims(self) -> Tuple[int, int, int]:
        return (self.input_channels, self.image_size, self.image_size)


def parse_layers(spec: str, input_channels: int) -> List[LayerConfig]:
    """
    Parse 'out/kernel/stride/nms[/pad],...' into layer configs

    Raises:
        ConfigError: malformed entry
    """
    layers = []
    channels = input_channels
    for entry in (e.strip() for e in spec.split(',') if e.strip()):
        ok, message = validate_layer_spec(entry)
        if not ok:
            raise ConfigError(f"LAYERS: {message}")
        parts = entry.split('/')
        out, kernel, stride = int(parts[0]), int(parts[1]), int(parts[2])
        nms = None if parts[3] == '-' else tuple(int(g) for g in parts[3].split('x'))
        pad = int(parts[4]) if len(parts) > 4 else None
        layers.append(LayerConfig(channels, out, (kernel, kernel), stride, nms, pad))
        channels = out
    if not layers:
        raise ConfigError("LAYERS: at least one layer is required")
    return layers


def _convert(key: str, raw: str):
    kind, _ = SCHEMA[key]
    try:
        return kind(raw.strip()) if kind is not str else raw.strip()
    except ValueError:
        raise ConfigError(f"{key}: expected {kind.__name__}, got '{raw}'") from None


def read_document(path: Optional[Path] = None, environ: Optional[Mapping[str, str]] = None,
                  overrides: Optional[Mapping[str, object]] = None) -> Dict[str, object]:
    """
    Merge defaults, document, environment and overrides into typed values

    Raises:
        ConfigError: unknown key, unreadable value or missing file
    """
    values = {key: default for key, (_, default) in SCHEMA.items()}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        for key, raw in dotenv_values(path).items():
            key = key.upper()
            if key not in SCHEMA:
                raise ConfigError(f"{path}: unknown key '{key}' (known keys: {', '.join(SCHEMA)})")
            if raw is None:
                raise ConfigError(f"{path}: key '{key}' has no value")
            values[key] = _convert(key, raw)

    environ = os.environ if environ is None else environ
    for key in SCHEMA:
        raw = environ.get(config.ENV_PREFIX + key)
        if raw is not None:
            values[key] = _convert(key, raw)

    for key, value in (overrides or {}).items():
        if value is None:
            continue
        key = key.upper()
        if key not in SCHEMA:
            raise ConfigError(f"unknown override '{key}'")
        values[key] = _convert(key, str(value))
    return values


def load_run_config(path: Optional[Path] = None, environ: Optional[Mapping[str, str]] = None,
                    overrides: Optional[Mapping[str, object]] = None) -> RunConfig:
    v = read_document(path, environ, overrides)
    for key in ('INPUT_CHANNELS', 'IMAGE_SIZE', 'N_KEYPOINTS', 'COARSE_SIZE', 'INIT_SCALE'):
        ok, message = validate_positive(v[key], key)
        if not ok:
            raise ConfigError(message)
    layers = parse_layers(v['LAYERS'], v['INPUT_CHANNELS'])
    ok, message = validate_taps(v['TAPS'], len(layers))
    if not ok:
        raise ConfigError(f"TAPS: {message}")
    taps = [int(t) for t in v['TAPS'].split(',')] if v['TAPS'].strip() else []

    train = TrainConfig(
        learning_rate=v['LEARNING_RATE'],
        momentum=v['MOMENTUM'],
        weight_decay=v['WEIGHT_DECAY'],
        batch_size=v['BATCH_SIZE'],
        epochs=v['EPOCHS'],
        k=v['K'],
        lr_decay_per_finer_scale=v['LR_DECAY_PER_FINER_SCALE'],
        positive_radius=v['POSITIVE_RADIUS'],
        seed=v['SEED'],
    )
    cfg = RunConfig(
        input_channels=v['INPUT_CHANNELS'],
        image_size=v['IMAGE_SIZE'],
        n_keypoints=v['N_KEYPOINTS'],
        layers=layers,
        taps=taps,
        coarse_size=v['COARSE_SIZE'],
        train=train,
        init_scale=v['INIT_SCALE'],
        visibility_threshold=v['VISIBILITY_THRESHOLD'],
    )
    check_geometry(cfg)
    logger.debug("run config: %s", cfg)
    return cfg


def check_geometry(cfg: RunConfig) -> List[Tuple[int, int, int]]:
    """
    Layer shapes of the configured network; each head resolution must divide the next

    Raises:
        ConfigError: layers that shrink to nothing, untileable NMS groups or incompatible heads
    """
    try:
        net = RGNetwork(
            layers=cfg.layers,
            filters=[_zero_filter(c) for c in cfg.layers],
            biases=[np.zeros(c.out_channels) for c in cfg.layers],
            input_dims=cfg.input_dims,
        )
    except RGNetError as e:
        raise ConfigError(f"LAYERS: {e}") from e
    shapes = net.layer_shapes()
    height = width = cfg.coarse_size
    for layer in cfg.taps:
        _, h, w = shapes[layer - 1]
        if h % height or w % width:
            raise ConfigError(f"TAPS: layer {layer} resolution {h}x{w} is not a multiple of {height}x{width}")
        height, width = h, w
    return shapes


def _zero_filter(c: LayerConfig):
    return FilterBank(np.zeros((c.out_channels, c.in_channels) + c.kernel), c.stride, c.pad)


def build_model(cfg: RunConfig, seed: Optional[int] = None) -> Tuple[RGNetwork, HeadBank]:
    """
    Seeded initial parameters: He-normal filters scaled by init_scale, zero biases and heads
    """
    seed = cfg.train.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    net = RGNetwork.random(cfg.layers, cfg.input_dims, rng, scale=cfg.init_scale)
    shapes = net.layer_shapes()
    heads = HeadBank.zeros(
        cfg.n_keypoints,
        int(np.prod(shapes[-1])),
        (cfg.coarse_size, cfg.coarse_size),
        [(layer, shapes[layer - 1][0]) for layer in cfg.taps],
    )
    return net, heads


def with_k(cfg: RunConfig, k: int) -> RunConfig:
    """Copy of cfg training with k inference passes"""
    return replace(cfg, train=replace(cfg.train, k=k))


def with_seed(cfg: RunConfig, seed: int) -> RunConfig:
    return replace(cfg, train=replace(cfg.train, seed=seed))
