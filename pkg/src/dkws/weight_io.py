"""Binary weight file shared with the trainer.

Little-endian layout:

    magic    4 bytes  "DKWS"
    version  u16      1
    n_in     u16
    n_hid    u16
    n_out    u16
    7 matrix records, in order W_xr W_xu W_xc W_hr W_hu W_hc W_fc:
        id u8, rows u16, cols u16, scale_exp i8, rows*cols int8 row-major
    4 bias records, in order b_r b_u b_c b_fc:
        id u8, len u16, len * int32
    crc32    u32      zlib CRC32 of every prior byte

The validator rejects bad magic, version, dimensions, scale exponents and
checksum before any array is handed to the engine.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .delta_gru import BIAS_NAMES, MATRIX_NAMES, WEIGHT_FRAC, NetworkWeights

MAGIC = b"DKWS"
VERSION = 1
_MAX_DIM = 4096


class WeightFileError(ValueError):
    """Raised with a short category prefix: magic/version/dims/record/crc."""


def write_weights(w: NetworkWeights, path) -> None:
    out = bytearray()
    out += MAGIC
    out += struct.pack("<HHHH", VERSION, w.n_in, w.n_hid, w.n_out)
    for mid, name in enumerate(MATRIX_NAMES):
        m = getattr(w, name)
        rows, cols = m.shape
        out += struct.pack("<BHHb", mid, rows, cols, w.scale_exp[name])
        out += m.astype("<i1").tobytes(order="C")
    for bid, name in enumerate(BIAS_NAMES):
        b = getattr(w, name)
        out += struct.pack("<BH", bid, len(b))
        out += b.astype("<i4").tobytes()
    out += struct.pack("<I", zlib.crc32(bytes(out)))
    with open(path, "wb") as f:
        f.write(bytes(out))


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise WeightFileError("record: truncated file")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_weights(path) -> NetworkWeights:
    with open(path, "rb") as f:
        data = f.read()
    return parse_weights(data)


def parse_weights(data: bytes) -> NetworkWeights:
    if len(data) < 16:
        raise WeightFileError("magic: file too short")
    if data[:4] != MAGIC:
        raise WeightFileError(f"magic: expected {MAGIC!r}, got {data[:4]!r}")
    (stored_crc,) = struct.unpack("<I", data[-4:])
    if zlib.crc32(data[:-4]) != stored_crc:
        raise WeightFileError("crc: checksum mismatch")
    cur = _Cursor(data[:-4])
    cur.take(4)
    version, n_in, n_hid, n_out = cur.unpack("<HHHH")
    if version != VERSION:
        raise WeightFileError(f"version: unsupported {version}")
    for name, dim in (("n_in", n_in), ("n_hid", n_hid), ("n_out", n_out)):
        if not (1 <= dim <= _MAX_DIM):
            raise WeightFileError(f"dims: {name}={dim} out of range")
    expected_shapes = {
        "W_xr": (n_hid, n_in), "W_xu": (n_hid, n_in), "W_xc": (n_hid, n_in),
        "W_hr": (n_hid, n_hid), "W_hu": (n_hid, n_hid), "W_hc": (n_hid, n_hid),
        "W_fc": (n_out, n_hid),
    }
    mats, scales = {}, {}
    for mid, name in enumerate(MATRIX_NAMES):
        rid, rows, cols, scale_exp = cur.unpack("<BHHb")
        if rid != mid:
            raise WeightFileError(f"record: matrix id {rid}, expected {mid}")
        if (rows, cols) != expected_shapes[name]:
            raise WeightFileError(
                f"dims: {name} is {rows}x{cols}, expected {expected_shapes[name]}"
            )
        if not (-WEIGHT_FRAC <= scale_exp <= 0):
            raise WeightFileError(f"record: scale_exp {scale_exp} outside [-7, 0]")
        payload = cur.take(rows * cols)
        mats[name] = np.frombuffer(payload, dtype="<i1").reshape(rows, cols).astype(np.int8)
        scales[name] = int(scale_exp)
    expected_lens = {"b_r": n_hid, "b_u": n_hid, "b_c": n_hid, "b_fc": n_out}
    biases = {}
    for bid, name in enumerate(BIAS_NAMES):
        rid, length = cur.unpack("<BH")
        if rid != bid:
            raise WeightFileError(f"record: bias id {rid}, expected {bid}")
        if length != expected_lens[name]:
            raise WeightFileError(f"dims: {name} length {length}, expected {expected_lens[name]}")
        payload = cur.take(4 * length)
        biases[name] = np.frombuffer(payload, dtype="<i4").astype(np.int32)
    if cur.pos != len(cur.data):
        raise WeightFileError("record: trailing bytes before checksum")
    return NetworkWeights(**mats, **biases, scale_exp=scales)


def validate_weight_file(path) -> None:
    """Parse and discard; raises WeightFileError on any defect."""
    read_weights(path)
