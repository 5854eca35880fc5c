"""Bit-exact binary container plus plain-text artifact writers.

Binary container ("LSDV"): 4-byte magic, u16 version, u8 record kind, then
kind-specific little-endian dimensions and a float64 payload (complex data
interleaved real/imag, C order).  Round trips are bitwise exact.

Record kinds: 0 volume (H, W, T), 1 k-space (C, H, W, T) with its mask,
2 mask, 3 coil maps (C, H, W), 4 flat parameter vector.

Also provides 8-bit PGM (P5) image dumps with linear windowing, a minimal
SVG line-plot writer and RFC-4180 CSV.  All writers go through a temp file
plus atomic rename.
"""

import os
import struct
import tempfile

import numpy as np

from .forward_model import CoilSensitivities, KSpaceData, SamplingMask
from .volume import CineVolume

__all__ = [
    "FormatError",
    "write_volume", "read_volume",
    "write_kspace", "read_kspace",
    "write_mask", "read_mask",
    "write_coils", "read_coils",
    "write_params", "read_params",
    "write_pgm", "write_svg_lines", "write_csv",
    "atomic_write_bytes", "atomic_write_text",
]

MAGIC = b"LSDV"
VERSION = 1
KIND_VOLUME, KIND_KSPACE, KIND_MASK, KIND_COILS, KIND_PARAMS = range(5)
MAX_DIM = 1 << 20


class FormatError(ValueError):
    """Malformed LSDV file (bad magic, version, kind, dims or payload)."""


def atomic_write_bytes(path: str, payload: bytes) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".lsdv-tmp-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


class _Reader:
    def __init__(self, blob: bytes, path: str):
        self.blob = blob
        self.off = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.blob):
            raise FormatError(f"{self.path}: truncated payload "
                              f"(need {n} bytes at offset {self.off})")
        out = self.blob[self.off:self.off + n]
        self.off += n
        return out

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u8(self) -> int:
        return self.take(1)[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self.take(8))[0]

    def dim(self, name: str) -> int:
        v = self.u32()
        if v == 0 or v > MAX_DIM:
            raise FormatError(f"{self.path}: dimension {name}={v} out of range")
        return v

    def array(self, dtype, count: int) -> np.ndarray:
        itemsize = np.dtype(dtype).itemsize
        return np.frombuffer(self.take(count * itemsize), dtype=dtype).copy()

    def done(self):
        if self.off != len(self.blob):
            raise FormatError(f"{self.path}: {len(self.blob) - self.off} "
                              "trailing bytes after payload")


def _open(path: str, kind: int) -> _Reader:
    with open(path, "rb") as f:
        r = _Reader(f.read(), path)
    if r.take(4) != MAGIC:
        raise FormatError(f"{path}: bad magic, not an LSDV file")
    version = r.u16()
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    got = r.u8()
    if got != kind:
        raise FormatError(f"{path}: record kind {got}, expected {kind}")
    return r


def _header(kind: int) -> bytes:
    return MAGIC + struct.pack("<HB", VERSION, kind)


def _mask_bytes(mask: SamplingMask) -> bytes:
    sel = mask.selected.astype("<u4")
    return (struct.pack("<IIdI", mask.width, mask.center_lines,
                        mask.af, len(sel))
            + sel.tobytes())


def _read_mask_block(r: _Reader) -> SamplingMask:
    width = r.dim("W")
    center = r.u32()
    af = r.f64()
    nsel = r.u32()
    if nsel > width:
        raise FormatError(f"{r.path}: mask has {nsel} lines for width {width}")
    selected = r.array("<u4", nsel).astype(np.int64)
    return SamplingMask(width=width, selected=selected,
                        center_lines=center, af=af)


def write_volume(path: str, v: CineVolume) -> None:
    h, w, t = v.dims
    atomic_write_bytes(path, _header(KIND_VOLUME)
                       + struct.pack("<III", h, w, t)
                       + np.ascontiguousarray(v.data, dtype="<c16").tobytes())


def read_volume(path: str) -> CineVolume:
    r = _open(path, KIND_VOLUME)
    h, w, t = r.dim("H"), r.dim("W"), r.dim("T")
    data = r.array("<c16", h * w * t).reshape(h, w, t)
    r.done()
    return CineVolume(data)


def write_kspace(path: str, y: KSpaceData) -> None:
    c, h, w, t = y.dims
    atomic_write_bytes(path, _header(KIND_KSPACE)
                       + struct.pack("<IIII", c, h, w, t)
                       + _mask_bytes(y.mask)
                       + np.ascontiguousarray(y.samples, dtype="<c16").tobytes())


def read_kspace(path: str) -> KSpaceData:
    r = _open(path, KIND_KSPACE)
    c, h, w, t = (r.dim(n) for n in "CHWT")
    mask = _read_mask_block(r)
    samples = r.array("<c16", c * h * w * t).reshape(c, h, w, t)
    r.done()
    return KSpaceData(samples=samples, mask=mask)


def write_mask(path: str, mask: SamplingMask) -> None:
    atomic_write_bytes(path, _header(KIND_MASK) + _mask_bytes(mask))


def read_mask(path: str) -> SamplingMask:
    r = _open(path, KIND_MASK)
    mask = _read_mask_block(r)
    r.done()
    return mask


def write_coils(path: str, coils: CoilSensitivities) -> None:
    c, h, w = coils.maps.shape
    atomic_write_bytes(path, _header(KIND_COILS)
                       + struct.pack("<III", c, h, w)
                       + np.ascontiguousarray(coils.maps, dtype="<c16").tobytes())


def read_coils(path: str) -> CoilSensitivities:
    r = _open(path, KIND_COILS)
    c, h, w = r.dim("C"), r.dim("H"), r.dim("W")
    maps = r.array("<c16", c * h * w).reshape(c, h, w)
    r.done()
    return CoilSensitivities(maps)


def write_params(path: str, values: np.ndarray) -> None:
    flat = np.ascontiguousarray(values, dtype="<f8").ravel()
    atomic_write_bytes(path, _header(KIND_PARAMS)
                       + struct.pack("<I", flat.size) + flat.tobytes())


def read_params(path: str) -> np.ndarray:
    r = _open(path, KIND_PARAMS)
    n = r.u32()
    out = r.array("<f8", n)
    r.done()
    return out


def write_pgm(path: str, image: np.ndarray,
              window: tuple[float, float] | None = None) -> None:
    """8-bit binary PGM with linear windowing of a real 2D image."""
    img = np.asarray(image, dtype=float)
    if img.ndim != 2:
        raise ValueError("PGM writer expects a 2D real image")
    if not np.all(np.isfinite(img)):
        raise ValueError("non-finite pixel values")
    if window is None:
        lo, hi = float(img.min()), float(img.max())
    else:
        lo, hi = window
    span = hi - lo if hi > lo else 1.0
    scaled = np.clip((img - lo) / span, 0.0, 1.0)
    pixels = np.round(scaled * 255.0).astype(np.uint8)
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii")
    atomic_write_bytes(path, header + pixels.tobytes())


def write_svg_lines(path: str, series: list[tuple[np.ndarray, np.ndarray, str]],
                    title: str = "", xlabel: str = "", ylabel: str = "",
                    size: tuple[int, int] = (640, 420)) -> None:
    """Minimal SVG line plot: one polyline per (x, y, label) series."""
    width, height = size
    m_l, m_r, m_t, m_b = 60, 20, 30, 45
    xs_all = np.concatenate([np.asarray(x, dtype=float) for x, _, _ in series])
    ys_all = np.concatenate([np.asarray(y, dtype=float) for _, y, _ in series])
    finite = np.isfinite(ys_all)
    x0, x1 = float(xs_all.min()), float(xs_all.max())
    y0 = float(ys_all[finite].min()) if finite.any() else 0.0
    y1 = float(ys_all[finite].max()) if finite.any() else 1.0
    if x1 <= x0:
        x1 = x0 + 1.0
    if y1 <= y0:
        y1 = y0 + 1.0

    def px(x):
        return m_l + (x - x0) / (x1 - x0) * (width - m_l - m_r)

    def py(y):
        return height - m_b - (y - y0) / (y1 - y0) * (height - m_t - m_b)

    palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{m_l}" y1="{height - m_b}" x2="{width - m_r}" '
        f'y2="{height - m_b}" stroke="black"/>',
        f'<line x1="{m_l}" y1="{m_t}" x2="{m_l}" y2="{height - m_b}" '
        f'stroke="black"/>',
    ]
    if title:
        parts.append(f'<text x="{width / 2}" y="20" text-anchor="middle" '
                     f'font-size="14">{title}</text>')
    if xlabel:
        parts.append(f'<text x="{width / 2}" y="{height - 10}" '
                     f'text-anchor="middle" font-size="12">{xlabel}</text>')
    if ylabel:
        parts.append(f'<text x="15" y="{height / 2}" text-anchor="middle" '
                     f'font-size="12" transform="rotate(-90 15 {height / 2})">'
                     f'{ylabel}</text>')
    parts.append(f'<text x="{m_l}" y="{height - m_b + 15}" font-size="10">'
                 f'{x0:.4g}</text>')
    parts.append(f'<text x="{width - m_r}" y="{height - m_b + 15}" '
                 f'text-anchor="end" font-size="10">{x1:.4g}</text>')
    parts.append(f'<text x="{m_l - 5}" y="{height - m_b}" text-anchor="end" '
                 f'font-size="10">{y0:.4g}</text>')
    parts.append(f'<text x="{m_l - 5}" y="{m_t + 4}" text-anchor="end" '
                 f'font-size="10">{y1:.4g}</text>')
    for i, (xs, ys, label) in enumerate(series):
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        keep = np.isfinite(ys)
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}"
                       for x, y in zip(xs[keep], ys[keep]))
        color = palette[i % len(palette)]
        parts.append(f'<polyline fill="none" stroke="{color}" '
                     f'stroke-width="1.5" points="{pts}"/>')
        if label:
            parts.append(f'<text x="{width - m_r - 5}" '
                         f'y="{m_t + 14 * (i + 1)}" text-anchor="end" '
                         f'font-size="11" fill="{color}">{label}</text>')
    parts.append("</svg>\n")
    atomic_write_text(path, "\n".join(parts))


def _csv_cell(v) -> str:
    s = v if isinstance(v, str) else repr(v) if isinstance(v, float) else str(v)
    if any(ch in s for ch in ',"\r\n'):
        s = '"' + s.replace('"', '""') + '"'
    return s


def write_csv(path: str, header: list[str], rows: list[list]) -> None:
    lines = [",".join(_csv_cell(c) for c in header)]
    lines += [",".join(_csv_cell(c) for c in row) for row in rows]
    atomic_write_text(path, "\r\n".join(lines) + "\r\n")
