"""
Dataset files

Binary layout (little-endian):
    header:  magic 'RGDS', u16 version, u32 n_samples, u32 image_size,
             u32 n_keypoints, u32 channels, f64 occlusion_rate,
             f64 ambiguity, f64 noise_std, i64 seed
    samples: float32 image (C*S*S, row-major), float32 keypoints (M*2, x then y),
             u8 visibility (M)

A manifest directory holds one PGM per sample plus manifest.txt, one
line per sample: file name followed by x y visible per keypoint.
"""
import logging
import struct
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image

from models.dataset import Dataset, DatasetSpec, Sample
from utils.constants import DATASET_MAGIC, DATASET_VERSION
from utils.errors import ConfigError, FormatError, VersionMismatchError

logger = logging.getLogger(__name__)

_HEADER = struct.Struct('<4sHIIIIdddq')
MANIFEST_NAME = "manifest.txt"

PathLike = Union[str, Path]


class _Reader:
    """Bounds-checked cursor over a byte buffer"""

    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, n_bytes: int, section: str) -> bytes:
        end = self.offset + n_bytes
        if end > len(self.data):
            raise FormatError(f"file truncated: need {n_bytes} bytes, {len(self.data) - self.offset} remain",
                              offset=self.offset, section=section)
        chunk = self.data[self.offset:end]
        self.offset = end
        return chunk

    def array(self, dtype, count: int, section: str) -> np.ndarray:
        dtype = np.dtype(dtype)
        return np.frombuffer(self.take(dtype.itemsize * count, section), dtype=dtype, count=count)


def encode_dataset(dataset: Dataset) -> bytes:
    spec = dataset.spec
    channels = dataset[0].image.shape[0] if len(dataset) else 1
    parts = [_HEADER.pack(DATASET_MAGIC, DATASET_VERSION, len(dataset), spec.image_size, spec.n_keypoints,
                          channels, spec.occlusion_rate, spec.ambiguity, spec.noise_std, spec.seed)]
    for sample in dataset:
        parts.append(sample.image.astype('<f4').tobytes())
        parts.append(sample.keypoints.astype('<f4').tobytes())
        parts.append(sample.visibility.astype(np.uint8).tobytes())
    return b''.join(parts)


def decode_dataset(data: bytes) -> Dataset:
    """
    Raises:
        FormatError: bad magic, truncation or trailing bytes, naming the section and offset
        VersionMismatchError: unsupported format version
    """
    reader = _Reader(data)
    if len(data) >= 4 and data[:4] != DATASET_MAGIC:
        raise FormatError(f"not a dataset file (magic {data[:4]!r})", offset=0, section="header")
    head = reader.take(_HEADER.size, "header")
    magic, version, n, size, m, channels, occlusion, ambiguity, noise, seed = _HEADER.unpack(head)
    if version != DATASET_VERSION:
        raise VersionMismatchError("dataset", version, DATASET_VERSION)
    try:
        spec = DatasetSpec(n_samples=n, image_size=size, n_keypoints=m, occlusion_rate=occlusion,
                           ambiguity=ambiguity, noise_std=noise, seed=seed)
    except ConfigError as e:
        raise FormatError(f"invalid dataset header: {e}", offset=6, section="header") from e

    samples = []
    for i in range(n):
        image = reader.array('<f4', channels * size * size, f"sample {i} image")
        keypoints = reader.array('<f4', m * 2, f"sample {i} keypoints")
        visibility = reader.array(np.uint8, m, f"sample {i} visibility")
        samples.append(Sample(
            image=image.astype(np.float64).reshape(channels, size, size),
            keypoints=keypoints.astype(np.float64).reshape(m, 2),
            visibility=visibility.astype(bool),
        ))
    if reader.offset != len(data):
        raise FormatError(f"{len(data) - reader.offset} unexpected trailing bytes",
                          offset=reader.offset, section="trailer")
    return Dataset(spec=spec, samples=samples)


def write_dataset(dataset: Dataset, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_dataset(dataset))
    logger.info("wrote %d samples to %s", len(dataset), path)
    return path


def load_dataset(path: PathLike) -> Dataset:
    path = Path(path)
    dataset = decode_dataset(path.read_bytes())
    logger.debug("loaded %d samples from %s", len(dataset), path)
    return dataset


def to_gray8(values: np.ndarray) -> np.ndarray:
    """Map [0, 1] to 0..255 as floor(255 v + 0.5)"""
    return np.floor(255.0 * np.clip(values, 0.0, 1.0) + 0.5).astype(np.uint8)


def write_pgm(values: np.ndarray, path: PathLike) -> Path:
    """Binary (P5) greymap, maxval 255"""
    path = Path(path)
    Image.fromarray(to_gray8(values)).save(path, format='PPM')
    return path


def write_manifest(dataset: Dataset, directory: PathLike) -> Path:
    """
    One PGM per sample (first channel) plus a text manifest

    Images are quantized to 8 bits, so a manifest round trip is lossy.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    spec = dataset.spec
    lines = [f"# image_size={spec.image_size} n_keypoints={spec.n_keypoints} seed={spec.seed}"]
    for i, sample in enumerate(dataset):
        name = f"sample_{i:05d}.pgm"
        write_pgm(sample.image[0], directory / name)
        fields = [name]
        for (x, y), visible in zip(sample.keypoints, sample.visibility):
            fields.extend([repr(float(x)), repr(float(y)), str(int(visible))])
        lines.append(" ".join(fields))
    manifest = directory / MANIFEST_NAME
    manifest.write_text("\n".join(lines) + "\n")
    logger.info("wrote manifest with %d images to %s", len(dataset), directory)
    return manifest


def load_manifest(path: PathLike) -> Dataset:
    """
    Read a manifest file (or the directory holding one)

    Raises:
        FormatError: malformed line, with its line number
    """
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    samples = []
    n_keypoints = None
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith('#'):
            continue
        fields = line.split()
        if (len(fields) - 1) % 3 or len(fields) < 4:
            raise FormatError(f"line {lineno}: expected a file name and x y visible triples", section=str(path))
        m = (len(fields) - 1) // 3
        if n_keypoints is not None and m != n_keypoints:
            raise FormatError(f"line {lineno}: {m} keypoints, previous lines have {n_keypoints}", section=str(path))
        n_keypoints = m
        try:
            values = np.array([float(v) for v in fields[1:]]).reshape(m, 3)
        except ValueError as e:
            raise FormatError(f"line {lineno}: {e}", section=str(path)) from e
        with Image.open(path.parent / fields[0]) as img:
            pixels = np.asarray(img.convert('L'), dtype=np.float64) / 255.0
        samples.append(Sample(
            image=pixels.astype(np.float32).astype(np.float64)[None],
            keypoints=values[:, :2].astype(np.float32).astype(np.float64),
            visibility=values[:, 2] != 0,
        ))
    if not samples:
        raise FormatError("manifest lists no samples", section=str(path))
    spec = DatasetSpec(n_samples=len(samples), image_size=samples[0].image_size, n_keypoints=n_keypoints)
    return Dataset(spec=spec, samples=samples)
