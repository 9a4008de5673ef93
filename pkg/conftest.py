import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from models.filters import FilterBank
from models.network import LayerConfig, RGNetwork


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow experiments")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def random_net(rng, input_dims, layers, scale=0.5, bias_scale=0.5):
    """
    Network with normal random filters and biases

    layers: (out_channels, kernel, stride, nms_group, pad) tuples
    """
    configs, filters, biases = [], [], []
    channels = input_dims[0]
    for out, kernel, stride, nms, pad in layers:
        cfg = LayerConfig(channels, out, kernel, stride, nms, pad)
        configs.append(cfg)
        filters.append(FilterBank(rng.normal(0.0, scale, size=(out, channels) + cfg.kernel), stride, cfg.pad))
        biases.append(rng.normal(0.0, bias_scale, size=out))
        channels = out
    return RGNetwork(layers=configs, filters=filters, biases=biases, input_dims=input_dims)
