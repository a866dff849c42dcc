"""Weight export in the simulator's binary format.

Layout (little-endian): magic "DKWS", version u16=1, dims (n_in, n_hid,
n_out as u16), seven matrix records {id u8, rows u16, cols u16, scale_exp
i8, int8 row-major payload} in the order W_xr W_xu W_xc W_hr W_hu W_hc W_fc,
four bias records {id u8, len u16, int32 payload} in the order b_r b_u b_c
b_fc, then a CRC32 of all prior bytes.  Weights export at scale 2^-7 and
biases on the Q21 accumulator grid.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np
import torch

from .model import WEIGHT_LIMIT, WEIGHT_SCALE, DeltaGRUNet

MAGIC = b"DKWS"
VERSION = 1
SCALE_EXP = -7
BIAS_SCALE = 1 << 21
MATRIX_ORDER = ("W_xr", "W_xu", "W_xc", "W_hr", "W_hu", "W_hc", "W_fc")
BIAS_ORDER = ("b_r", "b_u", "b_c", "b_fc")
_I32 = (-(1 << 31), (1 << 31) - 1)


def quantized_arrays(model: DeltaGRUNet) -> dict[str, np.ndarray]:
    out = {}
    with torch.no_grad():
        for name in MATRIX_ORDER:
            w = getattr(model, name).cpu().numpy()
            q = np.clip(np.round(w * WEIGHT_SCALE), -WEIGHT_LIMIT, WEIGHT_LIMIT)
            out[name] = q.astype(np.int8)
        for name in BIAS_ORDER:
            b = getattr(model, name).cpu().numpy()
            out[name] = np.clip(np.round(b * BIAS_SCALE), *_I32).astype(np.int32)
    return out


def export_weights(model: DeltaGRUNet, path) -> None:
    arrays = quantized_arrays(model)
    out = bytearray()
    out += MAGIC
    out += struct.pack("<HHHH", VERSION, model.n_in, model.n_hid, model.n_out)
    for mid, name in enumerate(MATRIX_ORDER):
        m = arrays[name]
        out += struct.pack("<BHHb", mid, m.shape[0], m.shape[1], SCALE_EXP)
        out += m.astype("<i1").tobytes(order="C")
    for bid, name in enumerate(BIAS_ORDER):
        b = arrays[name]
        out += struct.pack("<BH", bid, len(b))
        out += b.astype("<i4").tobytes()
    out += struct.pack("<I", zlib.crc32(bytes(out)))
    with open(path, "wb") as f:
        f.write(bytes(out))


def load_exported_into_model(path, model: DeltaGRUNet) -> None:
    """Read an exported file back into float parameters (for round trips)."""
    data = open(path, "rb").read()
    if data[:4] != MAGIC or zlib.crc32(data[:-4]) != struct.unpack("<I", data[-4:])[0]:
        raise ValueError("bad weight file")
    pos = 4
    _, n_in, n_hid, n_out = struct.unpack_from("<HHHH", data, pos)
    pos += 8
    if (n_in, n_hid, n_out) != (model.n_in, model.n_hid, model.n_out):
        raise ValueError("dimension mismatch")
    with torch.no_grad():
        for name in MATRIX_ORDER:
            _, rows, cols, exp = struct.unpack_from("<BHHb", data, pos)
            pos += 6
            payload = np.frombuffer(data, dtype="<i1", count=rows * cols, offset=pos)
            pos += rows * cols
            getattr(model, name).copy_(
                torch.from_numpy(payload.reshape(rows, cols).astype(np.float32))
                * (2.0 ** exp)
            )
        for name in BIAS_ORDER:
            _, length = struct.unpack_from("<BH", data, pos)
            pos += 3
            payload = np.frombuffer(data, dtype="<i4", count=length, offset=pos)
            pos += 4 * length
            getattr(model, name).copy_(
                torch.from_numpy(payload.astype(np.float32)) / BIAS_SCALE
            )
