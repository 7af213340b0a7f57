"""Single-file checkpoints: magic, version, JSON config, seed, named float64 arrays, optional Adam state.

Layout (all integers little-endian)::

    b"CARANET\\x00"  u32 version
    u32 len + UTF-8 JSON (model config, sorted keys)
    i64 seed
    u32 count, then per array: u16 name len + name, u8 ndim, u32 dims..., raw <f8 data
    u8 has_optimizer; if set: f64 lr, beta1, beta2, eps, u64 step, then m and v as array blocks
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import CaraNet, ModelConfig
from .optim import AdamState

MAGIC = b"CARANET\x00"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: ModelConfig
    seed: int
    params: dict[str, np.ndarray]
    optimizer: AdamState | None = None

    @classmethod
    def from_model(cls, model: CaraNet, optimizer: AdamState | None = None) -> "Checkpoint":
        return cls(model.config, model.seed, model.state_dict(), optimizer)

    def build_model(self) -> CaraNet:
        model = CaraNet(self.config, self.seed)
        model.load_state_dict(self.params)
        return model


def _write_arrays(buf: io.BytesIO, arrays: list[tuple[str, np.ndarray]]) -> None:
    buf.write(struct.pack("<I", len(arrays)))
    for name, arr in arrays:
        raw = name.encode()
        arr = np.ascontiguousarray(arr, dtype="<f8")
        buf.write(struct.pack("<H", len(raw)) + raw)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(arr.tobytes())


class _Reader:
    def __init__(self, data: bytes, path):
        self.data, self.pos, self.path = data, 0, path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"{self.path}: truncated checkpoint")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def arrays(self) -> list[tuple[str, np.ndarray]]:
        (count,) = self.unpack("<I")
        out = []
        for _ in range(count):
            (n,) = self.unpack("<H")
            name = self.take(n).decode()
            (ndim,) = self.unpack("<B")
            shape = self.unpack(f"<{ndim}I")
            size = int(np.prod(shape, dtype=np.int64))
            arr = np.frombuffer(self.take(8 * size), dtype="<f8").reshape(shape).astype(np.float64)
            out.append((name, arr))
        return out


def dumps(ckpt: Checkpoint) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC + struct.pack("<I", VERSION))
    cfg = json.dumps(ckpt.config.to_dict(), sort_keys=True, separators=(",", ":")).encode()
    buf.write(struct.pack("<I", len(cfg)) + cfg)
    buf.write(struct.pack("<q", ckpt.seed))
    names = list(ckpt.params)
    _write_arrays(buf, [(n, ckpt.params[n]) for n in names])
    opt = ckpt.optimizer
    if opt is None or not opt.m:
        buf.write(b"\x00")
    else:
        buf.write(b"\x01" + struct.pack("<ddddQ", opt.lr, opt.beta1, opt.beta2, opt.eps, opt.step))
        _write_arrays(buf, list(zip(names, opt.m)))
        _write_arrays(buf, list(zip(names, opt.v)))
    return buf.getvalue()


def loads(data: bytes, path: str | Path = "<bytes>") -> Checkpoint:
    r = _Reader(data, path)
    if r.take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    (n,) = r.unpack("<I")
    try:
        config = ModelConfig.from_dict(json.loads(r.take(n)))
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: bad model config: {exc}") from exc
    (seed,) = r.unpack("<q")
    params = dict(r.arrays())
    optimizer = None
    (flag,) = r.unpack("<B")
    if flag:
        lr, b1, b2, eps, step = r.unpack("<ddddQ")
        m = [a for _, a in r.arrays()]
        v = [a for _, a in r.arrays()]
        optimizer = AdamState(lr, b1, b2, eps, step, m, v)
    if r.pos != len(data):
        raise CheckpointError(f"{path}: trailing bytes after checkpoint")
    return Checkpoint(config, seed, params, optimizer)


def save(path: str | Path, ckpt: Checkpoint) -> None:
    Path(path).write_bytes(dumps(ckpt))


def load(path: str | Path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return loads(path.read_bytes(), path)
