"""Filter-bank file: the text contract between filter design and the extractor.

Layout (see README for the full key table):

    format_version = 1
    sample_rate = 8000
    n_channels = 16
    b_bits = 12
    a_bits = 8
    frac_b = 11
    frac_a = 6
    channel.<i>.center_hz = 586.43
    channel.<i>.enabled = 1
    channel.<i>.offset_raw = 0        # Q{16,6}, log2-domain
    channel.<i>.scale_raw = 256       # Q{16,12}
    channel.<i>.sos.<j>.b0_raw = 192  # Q{b_bits, frac_b}; b2 = -b0, b1 = 0
    channel.<i>.sos.<j>.a1_raw = -105 # Q{a_bits, frac_a}
    channel.<i>.sos.<j>.a2_raw = 57

CSD shift lists are derived data and are recomputed on load.
"""

from __future__ import annotations

from .fixed_point import FixedValue, QFormat
from .filter_design import (
    OFFSET_FMT,
    SCALE_FMT,
    ChannelSpec,
    FilterBank,
    QuantizedSOS,
    csd_shifts,
    stability_check,
)
from . import kvfile

FORMAT_VERSION = 1


class BankFileError(ValueError):
    pass


def write_bank(bank: FilterBank, path) -> None:
    items: dict[str, object] = {
        "format_version": FORMAT_VERSION,
        "sample_rate": bank.sample_rate_hz,
        "n_channels": bank.n_channels,
        "b_bits": bank.channels[0].sos[0].b0.fmt.total_bits,
        "a_bits": bank.channels[0].sos[0].a1.fmt.total_bits,
        "frac_b": bank.channels[0].sos[0].frac_b,
        "frac_a": bank.channels[0].sos[0].frac_a,
    }
    for i, ch in enumerate(bank.channels):
        p = f"channel.{i}"
        items[f"{p}.center_hz"] = repr(float(ch.center_freq_hz))
        items[f"{p}.enabled"] = int(ch.enabled)
        items[f"{p}.offset_raw"] = ch.offset.raw
        items[f"{p}.scale_raw"] = ch.scale.raw
        for j, sec in enumerate(ch.sos):
            sp = f"{p}.sos.{j}"
            items[f"{sp}.b0_raw"] = sec.b0.raw
            items[f"{sp}.a1_raw"] = sec.a1.raw
            items[f"{sp}.a2_raw"] = sec.a2.raw
    kvfile.dump(items, path, header="dkws filter bank")


def _get(items: dict[str, str], key: str) -> str:
    if key not in items:
        raise BankFileError(f"missing key {key!r}")
    return items[key]


def read_bank(path) -> FilterBank:
    try:
        items = kvfile.load(path)
    except kvfile.KVError as e:
        raise BankFileError(str(e)) from e
    if int(_get(items, "format_version")) != FORMAT_VERSION:
        raise BankFileError(f"unsupported format_version {items['format_version']}")
    fs = int(_get(items, "sample_rate"))
    n = int(_get(items, "n_channels"))
    b_bits = int(_get(items, "b_bits"))
    a_bits = int(_get(items, "a_bits"))
    frac_b = int(_get(items, "frac_b"))
    frac_a = int(_get(items, "frac_a"))
    bfmt, afmt = QFormat(b_bits, frac_b), QFormat(a_bits, frac_a)
    channels = []
    for i in range(n):
        p = f"channel.{i}"
        secs = []
        for j in range(2):
            sp = f"{p}.sos.{j}"
            b0 = FixedValue(int(_get(items, f"{sp}.b0_raw")), bfmt)
            a1 = FixedValue(int(_get(items, f"{sp}.a1_raw")), afmt)
            a2 = FixedValue(int(_get(items, f"{sp}.a2_raw")), afmt)
            sec = QuantizedSOS(
                b0=b0, b2=FixedValue(-b0.raw, bfmt), a1=a1, a2=a2,
                csd_b0=csd_shifts(b0), csd_a1=csd_shifts(a1), csd_a2=csd_shifts(a2),
            )
            if not stability_check(sec):
                raise BankFileError(f"channel {i} section {j} is unstable")
            secs.append(sec)
        channels.append(
            ChannelSpec(
                center_freq_hz=float(_get(items, f"{p}.center_hz")),
                sos=tuple(secs),
                offset=FixedValue(int(_get(items, f"{p}.offset_raw")), OFFSET_FMT),
                scale=FixedValue(int(_get(items, f"{p}.scale_raw")), SCALE_FMT),
                enabled=bool(int(_get(items, f"{p}.enabled"))),
            )
        )
    return FilterBank(tuple(channels), fs)
