"""File formats: model files, IDX datasets, PNG images and masks."""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import InvalidArgumentError
from .model import Dataset, MlpClassifier

# Model file, all little-endian:
#   magic   8 bytes  b"LPVCEMLP"
#   version u32      (1)
#   layers  u32      number of dense layers L
#   act     u32      1 = softplus between layers
#   temp    f64      temperature
#   shape   3 x u32  image H, W, C (zeros if unknown)
#   dims    (L+1) x u32
#   then per layer: weight (in x out, row-major) f64, bias (out) f64
MODEL_MAGIC = b"LPVCEMLP"
MODEL_VERSION = 1
_ACT_SOFTPLUS = 1


def save_model(model: MlpClassifier, path) -> None:
    dims = [model.weights[0].shape[0]] + [W.shape[1] for W in model.weights]
    shape = tuple(model.image_shape) if model.image_shape else (0, 0, 0)
    buf = [MODEL_MAGIC,
           struct.pack("<III", MODEL_VERSION, len(model.weights), _ACT_SOFTPLUS),
           struct.pack("<d", float(model.temperature)),
           struct.pack("<III", *shape),
           struct.pack(f"<{len(dims)}I", *dims)]
    for W, b in zip(model.weights, model.biases):
        buf.append(np.ascontiguousarray(W, dtype="<f8").tobytes())
        buf.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(buf))


def load_model(path) -> MlpClassifier:
    raw = Path(path).read_bytes()
    if raw[:8] != MODEL_MAGIC:
        raise InvalidArgumentError(f"{path}: not a model file")
    version, n_layers, act = struct.unpack_from("<III", raw, 8)
    if version != MODEL_VERSION or act != _ACT_SOFTPLUS:
        raise InvalidArgumentError(f"{path}: unsupported model version {version}/activation {act}")
    (temp,) = struct.unpack_from("<d", raw, 20)
    shape = struct.unpack_from("<III", raw, 28)
    off = 40
    dims = struct.unpack_from(f"<{n_layers + 1}I", raw, off)
    off += 4 * (n_layers + 1)
    Ws, bs = [], []
    for a, b in zip(dims[:-1], dims[1:]):
        W = np.frombuffer(raw, dtype="<f8", count=a * b, offset=off).reshape(a, b)
        off += 8 * a * b
        bias = np.frombuffer(raw, dtype="<f8", count=b, offset=off)
        off += 8 * b
        Ws.append(W.astype(np.float64))
        bs.append(bias.astype(np.float64))
    if off != len(raw):
        raise InvalidArgumentError(f"{path}: trailing or missing bytes")
    return MlpClassifier(Ws, bs, temp, tuple(shape) if any(shape) else None)


_IDX_TYPES = {0x08: np.dtype(">u1"), 0x09: np.dtype(">i1"), 0x0B: np.dtype(">i2"),
              0x0C: np.dtype(">i4"), 0x0D: np.dtype(">f4"), 0x0E: np.dtype(">f8")}


def read_idx(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[0] != 0 or raw[1] != 0 or raw[2] not in _IDX_TYPES:
        raise InvalidArgumentError(f"{path}: bad IDX magic number")
    dt, nd = _IDX_TYPES[raw[2]], raw[3]
    dims = struct.unpack_from(f">{nd}I", raw, 4)
    data = np.frombuffer(raw, dtype=dt, offset=4 + 4 * nd)
    if data.size != int(np.prod(dims)):
        raise InvalidArgumentError(f"{path}: size does not match header {dims}")
    return data.reshape(dims)


def write_idx(path, array: np.ndarray) -> None:
    a = np.asarray(array, dtype=np.uint8)
    header = bytes([0, 0, 0x08, a.ndim]) + struct.pack(f">{a.ndim}I", *a.shape)
    Path(path).write_bytes(header + a.tobytes())


def load_idx_dataset(images_path, labels_path, seed: int = 0,
                     fractions=(0.6, 0.2, 0.2)) -> Dataset:
    """Images (N x H x W [x C] bytes) scaled by 1/255, random train/calibration/test split."""
    imgs = read_idx(images_path)
    labels = read_idx(labels_path).astype(np.int64).ravel()
    if len(imgs) != len(labels):
        raise InvalidArgumentError("image and label counts differ")
    shape = imgs.shape[1:] + ((1,) if imgs.ndim == 3 else ())
    X = imgs.reshape(len(imgs), -1).astype(np.float64) / 255.0
    n = len(labels)
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_train = int(round(fractions[0] * n))
    n_cal = int(round(fractions[1] * n))
    split = np.empty(n, dtype=object)
    split[order[:n_train]] = "train"
    split[order[n_train:n_train + n_cal]] = "calibration"
    split[order[n_train + n_cal:]] = "test"
    return Dataset(X, labels, split.astype(str), int(labels.max()) + 1, tuple(shape))


def quantize(x) -> np.ndarray:
    return np.round(255.0 * np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)).astype(np.uint8)


def save_png(path, image, shape=None) -> None:
    """Write an H x W or H x W x C array in [0, 1] (C in {1, 3}) as 8-bit PNG."""
    a = np.asarray(image, dtype=np.float64)
    if shape is not None:
        a = a.reshape(shape)
    if a.ndim == 3 and a.shape[2] == 1:
        a = a[:, :, 0]
    Image.fromarray(quantize(a)).save(path, format="PNG")


def load_png(path) -> np.ndarray:
    """Read a PNG as float H x W x C in [0, 1]; gray gives C = 1, color gives C = 3."""
    img = Image.open(path)
    if img.mode not in ("L", "RGB"):
        img = img.convert("RGB" if "A" in img.mode or img.mode in ("P", "CMYK") else "L")
    a = np.asarray(img, dtype=np.float64) / 255.0
    return a[:, :, None] if a.ndim == 2 else a


def load_mask(path) -> np.ndarray:
    a = np.asarray(Image.open(path))
    if a.ndim == 3:
        a = a.any(axis=2)
    return a != 0


def panel(images, gap: int = 1) -> np.ndarray:
    """Concatenate equally shaped H x W x C images horizontally with white gaps."""
    imgs = [np.asarray(i, dtype=np.float64) for i in images]
    h, _, c = imgs[0].shape
    sep = np.ones((h, gap, c))
    parts = []
    for i, im in enumerate(imgs):
        if im.shape[0] != h or im.shape[2] != c:
            raise InvalidArgumentError("panel images must share height and channels")
        if i:
            parts.append(sep)
        parts.append(im)
    return np.concatenate(parts, axis=1)
