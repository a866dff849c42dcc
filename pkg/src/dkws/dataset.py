"""Speech-commands audio ingestion.

Parses 16-bit mono PCM WAV files byte-exactly (malformed input is rejected,
never guessed at), resamples 16 kHz material to 8 kHz with an integer
31-tap half-band-style FIR, quantizes to 12-bit samples, and assembles the
train/val/test splits of a speech-commands v2 directory tree, synthesizing
the silence class from background-noise crops and down-sampling the unknown
class to keyword balance.  Everything is deterministic under a fixed seed.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .delta_gru import rne_shift_arr

CLASSES_12 = (
    "silence", "unknown", "down", "go", "left", "no",
    "off", "on", "right", "stop", "up", "yes",
)
KEYWORDS = CLASSES_12[2:]
SILENCE_ID = 0
UNKNOWN_ID = 1
LABEL_IDS = {name: i for i, name in enumerate(CLASSES_12)}

SAMPLES_PER_UTTERANCE = 8000  # exactly 1 s at 8 kHz
TARGET_RATE = 8000
SOURCE_RATE = 16000
BACKGROUND_DIR = "_background_noise_"


class WavError(ValueError):
    pass


class DatasetError(ValueError):
    pass


# ---------------------------------------------------------------------------
# WAV parsing / writing

def load_wav(data: bytes) -> tuple[int, np.ndarray]:
    """Decode a mono 16-bit PCM RIFF/WAVE byte string exactly."""
    if len(data) < 12:
        raise WavError("too short for a RIFF header")
    if data[0:4] != b"RIFF":
        raise WavError("missing RIFF tag")
    (riff_size,) = struct.unpack("<I", data[4:8])
    if riff_size + 8 > len(data):
        raise WavError("RIFF size exceeds file length")
    if data[8:12] != b"WAVE":
        raise WavError("missing WAVE tag")
    pos = 12
    fmt = None
    samples = None
    while pos + 8 <= len(data):
        tag = data[pos : pos + 4]
        (size,) = struct.unpack("<I", data[pos + 4 : pos + 8])
        body_start = pos + 8
        if body_start + size > len(data):
            raise WavError(f"chunk {tag!r} truncated")
        body = data[body_start : body_start + size]
        if tag == b"fmt ":
            if size < 16:
                raise WavError("fmt chunk too small")
            code, channels, rate, _byte_rate, _align, bits = struct.unpack("<HHIIHH", body[:16])
            if code != 1:
                raise WavError(f"unsupported format code {code} (PCM required)")
            if channels != 1:
                raise WavError(f"unsupported channel count {channels} (mono required)")
            if bits != 16:
                raise WavError(f"unsupported sample width {bits} (16-bit required)")
            fmt = rate
        elif tag == b"data":
            if size % 2 != 0:
                raise WavError("data chunk holds a partial sample")
            samples = np.frombuffer(body, dtype="<i2").astype(np.int16)
        pos = body_start + size + (size & 1)  # chunks are word-aligned
    if fmt is None:
        raise WavError("missing fmt chunk")
    if samples is None:
        raise WavError("missing data chunk")
    return fmt, samples


def wav_bytes(sample_rate: int, samples: np.ndarray) -> bytes:
    pcm = np.asarray(samples, dtype="<i2").tobytes()
    body = (
        b"WAVE"
        + b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, sample_rate, sample_rate * 2, 2, 16)
        + b"data" + struct.pack("<I", len(pcm)) + pcm
    )
    return b"RIFF" + struct.pack("<I", len(body)) + body


def write_wav(path, sample_rate: int, samples: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(wav_bytes(sample_rate, samples))


# ---------------------------------------------------------------------------
# resampling and sample quantization

_TAPS_N = 31
_TAPS_FRAC = 15


def _design_decimation_taps() -> np.ndarray:
    """Hamming-windowed sinc, cutoff half the output Nyquist, Q{16,15} raws.

    The center tap is adjusted so the taps sum to exactly 2**15: DC passes
    bit-exactly through the integer convolution.
    """
    n = np.arange(_TAPS_N)
    m = n - (_TAPS_N - 1) / 2
    fc = 0.125  # 2 kHz at a 16 kHz input rate
    ideal = 2 * fc * np.sinc(2 * fc * m)
    window = 0.54 - 0.46 * np.cos(2 * np.pi * n / (_TAPS_N - 1))
    h = ideal * window
    h /= h.sum()
    raws = np.round(h * (1 << _TAPS_FRAC)).astype(np.int64)
    raws[(_TAPS_N - 1) // 2] += (1 << _TAPS_FRAC) - raws.sum()
    return raws


DECIMATION_TAPS = _design_decimation_taps()


def fir_response(taps_raw: np.ndarray, freq_hz: float, sample_rate_hz: int) -> complex:
    w = 2 * math.pi * freq_hz / sample_rate_hz
    return sum(
        int(t) * complex(math.cos(-w * i), math.sin(-w * i)) for i, t in enumerate(taps_raw)
    ) / (1 << _TAPS_FRAC)


def resample_16k_to_8k(samples: np.ndarray) -> np.ndarray:
    """Low-pass then decimate by two; integer arithmetic, ceil(n/2) outputs."""
    x = np.asarray(samples, dtype=np.int64)
    n_out = (len(x) + 1) // 2
    if n_out == 0:
        return np.zeros(0, dtype=np.int16)
    center = (_TAPS_N - 1) // 2
    padded = np.concatenate([np.zeros(center, dtype=np.int64), x,
                             np.zeros(center, dtype=np.int64)])
    acc = np.zeros(n_out, dtype=np.int64)
    # y[k] = sum_i h[i] * x[2k + i - center], x zero-padded at both ends
    for i, t in enumerate(DECIMATION_TAPS):
        if t == 0:
            continue
        acc += int(t) * padded[i : i + 2 * n_out : 2][:n_out]
    y = rne_shift_arr(acc, _TAPS_FRAC)
    return np.clip(y, -32768, 32767).astype(np.int16)


def quantize_12b(samples: np.ndarray) -> np.ndarray:
    """int16 -> 12-bit: arithmetic shift by 4 with round-to-nearest-even, saturate."""
    x = np.asarray(samples, dtype=np.int64)
    y = rne_shift_arr(x, 4)
    return np.clip(y, -2048, 2047).astype(np.int16)


# ---------------------------------------------------------------------------
# dataset records and splits

@dataclass(frozen=True)
class Utterance:
    samples: np.ndarray  # 12-bit values in int16, exactly 8000 long
    label: int
    keyword: str
    split: str


@dataclass(frozen=True)
class UtteranceRecord:
    kind: str          # "file" or "silence"
    rel_path: str      # wav path relative to the dataset root
    offset: int        # crop start (source-rate samples) for silence records
    label: int
    keyword: str
    split: str


def _read_list(root: Path, name: str) -> set[str]:
    p = root / name
    if not p.exists():
        raise DatasetError(f"missing {name} in {root}")
    return {line.strip() for line in p.read_text(encoding="utf-8").splitlines() if line.strip()}


def build_dataset(
    root,
    silence_fraction: float = 0.1,
    unknown_balance: bool = True,
    seed: int = 0,
) -> dict[str, list[UtteranceRecord]]:
    """Assemble split -> records from a speech-commands v2 directory tree.

    Files named by validation_list.txt / testing_list.txt go to val / test,
    the rest to train.  Non-keyword words become unknown candidates,
    down-sampled per split to the mean keyword class size when
    unknown_balance is set.  Silence records are seeded 1 s crops of the
    background-noise files, 10% of each split by default.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} is not a directory")
    val_list = _read_list(root, "validation_list.txt")
    test_list = _read_list(root, "testing_list.txt")
    rng = np.random.default_rng(seed)

    words = sorted(
        d.name for d in root.iterdir() if d.is_dir() and d.name != BACKGROUND_DIR
    )
    if not words:
        raise DatasetError(f"no word directories under {root}")
    splits: dict[str, list[UtteranceRecord]] = {"train": [], "val": [], "test": []}
    unknown_pool: dict[str, list[UtteranceRecord]] = {"train": [], "val": [], "test": []}
    for word in words:
        for wav in sorted((root / word).glob("*.wav")):
            rel = f"{word}/{wav.name}"
            split = "val" if rel in val_list else "test" if rel in test_list else "train"
            if word in KEYWORDS:
                splits[split].append(
                    UtteranceRecord("file", rel, 0, LABEL_IDS[word], word, split)
                )
            else:
                unknown_pool[split].append(
                    UtteranceRecord("file", rel, 0, UNKNOWN_ID, word, split)
                )

    for split, records in splits.items():
        pool = unknown_pool[split]
        keyword_counts = [
            sum(1 for r in records if r.label == LABEL_IDS[k]) for k in KEYWORDS
        ]
        present = [c for c in keyword_counts if c > 0]
        if unknown_balance and present and pool:
            target = min(len(pool), max(1, round(sum(present) / len(present))))
            idx = sorted(rng.choice(len(pool), size=target, replace=False).tolist())
            records.extend(pool[i] for i in idx)
        else:
            records.extend(pool)

    noise_files = sorted((root / BACKGROUND_DIR).glob("*.wav")) if (
        root / BACKGROUND_DIR
    ).is_dir() else []
    if silence_fraction > 0 and noise_files:
        noise_lens = {}
        for nf in noise_files:
            rate, samples = load_wav(nf.read_bytes())
            span = SAMPLES_PER_UTTERANCE * rate // TARGET_RATE
            noise_lens[nf.name] = (len(samples), span)
        for split, records in splits.items():
            n_silence = max(1, round(silence_fraction * len(records))) if records else 0
            for _ in range(n_silence):
                nf = noise_files[int(rng.integers(0, len(noise_files)))]
                total, span = noise_lens[nf.name]
                if total <= span:
                    offset = 0
                else:
                    offset = int(rng.integers(0, total - span))
                records.append(
                    UtteranceRecord(
                        "silence", f"{BACKGROUND_DIR}/{nf.name}", offset,
                        SILENCE_ID, "silence", split,
                    )
                )
    for records in splits.values():
        records.sort(key=lambda r: (r.kind, r.rel_path, r.offset))
    return splits


def load_utterance(root, record: UtteranceRecord) -> Utterance:
    """Decode, resample to 8 kHz, quantize to 12 bits, pad/crop to 1 s."""
    rate, samples = load_wav((Path(root) / record.rel_path).read_bytes())
    if record.kind == "silence":
        span = SAMPLES_PER_UTTERANCE * rate // TARGET_RATE
        samples = samples[record.offset : record.offset + span]
    if rate == SOURCE_RATE:
        samples = resample_16k_to_8k(samples)
    elif rate != TARGET_RATE:
        raise DatasetError(f"unsupported sample rate {rate} in {record.rel_path}")
    samples = quantize_12b(samples)
    if len(samples) < SAMPLES_PER_UTTERANCE:
        samples = np.concatenate(
            [samples, np.zeros(SAMPLES_PER_UTTERANCE - len(samples), dtype=np.int16)]
        )
    else:
        samples = samples[:SAMPLES_PER_UTTERANCE]
    return Utterance(samples, record.label, record.keyword, record.split)


# ---------------------------------------------------------------------------
# preprocessed cache: magic, version, count, then {label u8, 8000 x i16}

CACHE_MAGIC = b"DKWC"
CACHE_VERSION = 1


def write_cache(utterances, path) -> None:
    with open(path, "wb") as f:
        recs = list(utterances)
        f.write(CACHE_MAGIC + struct.pack("<HI", CACHE_VERSION, len(recs)))
        for u in recs:
            if len(u.samples) != SAMPLES_PER_UTTERANCE:
                raise DatasetError("cache records must hold exactly 8000 samples")
            f.write(struct.pack("<B", u.label))
            f.write(np.asarray(u.samples, dtype="<i2").tobytes())


def read_cache(path) -> list[tuple[int, np.ndarray]]:
    data = Path(path).read_bytes()
    if data[:4] != CACHE_MAGIC:
        raise DatasetError("bad cache magic")
    version, count = struct.unpack("<HI", data[4:10])
    if version != CACHE_VERSION:
        raise DatasetError(f"unsupported cache version {version}")
    rec_size = 1 + 2 * SAMPLES_PER_UTTERANCE
    if len(data) != 10 + rec_size * count:
        raise DatasetError("cache size does not match record count")
    out = []
    pos = 10
    for _ in range(count):
        label = data[pos]
        samples = np.frombuffer(data[pos + 1 : pos + rec_size], dtype="<i2").astype(np.int16)
        out.append((label, samples))
        pos += rec_size
    return out
