"""Bit-exact file formats: GSF fields, Middlebury FLO flows, PPM/FRM frames,
JSON weight/bank documents, and the bench/stability CSVs.

All binary formats are little-endian.  Save followed by load reproduces the
in-memory object bit-exactly (in-memory float64 values are expected to be
f32-representable for the f32-on-disk formats; loaders always produce such
values).  Malformed magic numbers and truncated payloads raise FormatError
naming the byte offset.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from splatvid.core import Density, FlowField, FrameBuffer, GaussianField
from splatvid.cpb import CpbBank, FuserWeights
from splatvid.metrics import StabilityReport

GSF_MAGIC = b"GSF1"
FRM_MAGIC = b"FRM1"
FLO_MAGIC = 202021.25
WEIGHTS_FORMAT = "gsw1"


class FormatError(ValueError):
    """Malformed file: bad magic, truncation, or inconsistent declared sizes."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


def _read_exact(data: bytes, offset: int, count: int, what: str) -> bytes:
    if offset + count > len(data):
        raise FormatError(f"truncated while reading {what}", offset)
    return data[offset : offset + count]


def _check_finite(arr: np.ndarray, what: str, offset: int) -> None:
    if not np.all(np.isfinite(arr)):
        raise FormatError(f"non-finite values in {what}", offset)


# --- GSF -------------------------------------------------------------------

def save_gsf(path, f: GaussianField) -> None:
    n = f.n_gaussians
    rec = np.empty((n, 8), dtype="<f4")
    rec[:, 0:2] = f.offsets
    rec[:, 2:4] = f.sigmas
    rec[:, 4] = f.rhos
    rec[:, 5:8] = f.colors
    header = GSF_MAGIC + struct.pack(
        "<IIBfI",
        f.lr_width,
        f.lr_height,
        0 if f.density is Density.ONE_PER_PIXEL else 1,
        f.timestamp,
        n,
    )
    Path(path).write_bytes(header + rec.tobytes())


def load_gsf(path) -> GaussianField:
    data = Path(path).read_bytes()
    if _read_exact(data, 0, 4, "magic") != GSF_MAGIC:
        raise FormatError(f"bad GSF magic {data[:4]!r}", 0)
    lr_w, lr_h, dens, ts, count = struct.unpack(
        "<IIBfI", _read_exact(data, 4, 17, "header")
    )
    if dens not in (0, 1):
        raise FormatError(f"bad density byte {dens}", 12)
    density = Density.ONE_PER_PIXEL if dens == 0 else Density.ONE_PER_FOUR_PIXELS
    gw, gh = density.grid_shape(lr_w, lr_h)
    if count != gw * gh:
        raise FormatError(f"declared count {count} != grid size {gw * gh}", 17)
    payload = _read_exact(data, 21, count * 32, "gaussian records")
    rec = np.frombuffer(payload, dtype="<f4").reshape(count, 8).astype(np.float64)
    _check_finite(rec, "gaussian records", 21)
    return GaussianField(
        lr_width=lr_w,
        lr_height=lr_h,
        density=density,
        offsets=rec[:, 0:2],
        sigmas=rec[:, 2:4],
        rhos=rec[:, 4],
        colors=rec[:, 5:8],
        timestamp=float(np.float32(ts)),
        max_offset=np.inf,
    )


# --- FLO (Middlebury) ------------------------------------------------------

def save_flo(path, flow: FlowField) -> None:
    header = struct.pack("<fii", FLO_MAGIC, flow.width, flow.height)
    Path(path).write_bytes(header + flow.vectors.astype("<f4").tobytes())


def load_flo(path) -> FlowField:
    data = Path(path).read_bytes()
    (tag,) = struct.unpack("<f", _read_exact(data, 0, 4, "magic"))
    if tag != np.float32(FLO_MAGIC):
        raise FormatError(f"bad FLO magic {tag!r}", 0)
    w, h = struct.unpack("<ii", _read_exact(data, 4, 8, "dimensions"))
    if w <= 0 or h <= 0:
        raise FormatError(f"bad FLO dimensions {w}x{h}", 4)
    payload = _read_exact(data, 12, w * h * 8, "flow vectors")
    vec = np.frombuffer(payload, dtype="<f4").reshape(h, w, 2).astype(np.float64)
    _check_finite(vec, "flow vectors", 12)
    return FlowField(vec)


# --- Frames ----------------------------------------------------------------

def save_ppm(path, frame: FrameBuffer) -> None:
    """Viewable 8-bit output: values = round(clamp01(v) * 255)."""
    header = f"P6\n{frame.width} {frame.height}\n255\n".encode("ascii")
    body = np.round(np.clip(frame.pixels, 0.0, 1.0) * 255.0).astype(np.uint8)
    Path(path).write_bytes(header + body.tobytes())


def load_ppm(path) -> FrameBuffer:
    data = Path(path).read_bytes()
    if not data.startswith(b"P6"):
        raise FormatError(f"bad PPM magic {data[:2]!r}", 0)
    parts = data.split(b"\n", 3)
    if len(parts) < 4:
        raise FormatError("truncated PPM header", len(data))
    try:
        w, h = map(int, parts[1].split())
        maxval = int(parts[2])
    except ValueError as exc:
        raise FormatError(f"bad PPM header: {exc}", 2) from exc
    if maxval != 255:
        raise FormatError(f"unsupported PPM maxval {maxval}", 2)
    offset = len(data) - len(parts[3])
    body = _read_exact(data, offset, w * h * 3, "pixel data")
    px = np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3).astype(np.float64)
    return FrameBuffer(px / 255.0)


def save_frm(path, frame: FrameBuffer) -> None:
    """Lossless f32 intermediate frame."""
    header = FRM_MAGIC + struct.pack("<II", frame.width, frame.height)
    Path(path).write_bytes(header + frame.pixels.astype("<f4").tobytes())


def load_frm(path) -> FrameBuffer:
    data = Path(path).read_bytes()
    if _read_exact(data, 0, 4, "magic") != FRM_MAGIC:
        raise FormatError(f"bad FRM magic {data[:4]!r}", 0)
    w, h = struct.unpack("<II", _read_exact(data, 4, 8, "dimensions"))
    payload = _read_exact(data, 12, w * h * 12, "pixel data")
    px = np.frombuffer(payload, dtype="<f4").reshape(h, w, 3).astype(np.float64)
    _check_finite(px, "pixel data", 12)
    return FrameBuffer(px)


# --- Weights / bank JSON ---------------------------------------------------

def save_weights(path, entries: dict[str, np.ndarray]) -> None:
    doc = {
        "format": WEIGHTS_FORMAT,
        "entries": {
            name: {
                "shape": list(np.asarray(arr).shape),
                "data": np.asarray(arr, dtype=np.float64).ravel().tolist(),
            }
            for name, arr in entries.items()
        },
    }
    Path(path).write_text(json.dumps(doc))


def load_weights(path) -> dict[str, np.ndarray]:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"bad weights JSON: {exc}", exc.pos) from exc
    if not isinstance(doc, dict) or doc.get("format") != WEIGHTS_FORMAT:
        raise FormatError(f"bad weights format tag {doc.get('format')!r}", 0)
    unknown = set(doc) - {"format", "entries"}
    if unknown:
        raise FormatError(f"unknown top-level keys {sorted(unknown)}", 0)
    out = {}
    for name, entry in doc.get("entries", {}).items():
        bad = set(entry) - {"shape", "data"}
        if bad:
            raise FormatError(f"unknown keys {sorted(bad)} in entry {name!r}", 0)
        arr = np.array(entry["data"], dtype=np.float64)
        if arr.size != int(np.prod(entry["shape"])):
            raise FormatError(
                f"entry {name!r}: {arr.size} values for shape {entry['shape']}", 0
            )
        _check_finite(arr, f"entry {name!r}", 0)
        out[name] = arr.reshape(entry["shape"])
    return out


def save_bank(path, bank: CpbBank) -> None:
    save_weights(path, {"bank": bank.params})


def load_bank(path) -> CpbBank:
    entries = load_weights(path)
    if "bank" not in entries:
        raise FormatError("bank file missing 'bank' entry", 0)
    return CpbBank(entries["bank"])


def save_fuser(path, w: FuserWeights) -> None:
    save_weights(path, {"fuser.weight": w.weights, "fuser.bias": w.bias})


def load_fuser(path) -> FuserWeights:
    entries = load_weights(path)
    try:
        return FuserWeights(entries["fuser.weight"], entries["fuser.bias"])
    except KeyError as exc:
        raise FormatError(f"fuser file missing entry {exc}", 0) from exc


# --- CSV reports -----------------------------------------------------------

BENCH_CSV_HEADER = [
    "temporal_scale",
    "spatial_scale",
    "shared_ms",
    "per_frame_ms_mean",
    "total_ms",
    "runs",
]


def save_bench_csv(path, records) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(BENCH_CSV_HEADER)
        for r in records:
            writer.writerow(
                [r.temporal_scale, r.spatial_scale, r.shared_ms, r.per_frame_ms_mean, r.total_ms, r.runs]
            )


def save_stability_csv(path, report: StabilityReport) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["gap", "pixel_pearson", "pixel_cosine", "cov_pearson", "cov_cosine"])
        for i, g in enumerate(report.gaps):
            writer.writerow(
                [
                    g,
                    report.pixel_pearson[i],
                    report.pixel_cosine[i],
                    report.cov_pearson[i],
                    report.cov_cosine[i],
                ]
            )
