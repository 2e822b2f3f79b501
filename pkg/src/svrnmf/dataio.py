"""Synthetic data generation, outlier injection, and matrix/image file formats.

Formats:
  * matrix CSV: comma-separated rows, newline-terminated, no header;
  * matrix binary: magic "NNMF1", u64 LE rows, u64 LE cols, then
    row-major little-endian float64 entries;
  * images: plain PGM, P2 (ASCII) and P5 (binary).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import require_nonneg_matrix, seeded_rng

BINARY_MAGIC = b"NNMF1"


class DataFormatError(ValueError):
    """A file violated its format contract; the message locates the fault."""

    def __init__(self, path, message: str, line: int | None = None,
                 col: int | None = None):
        where = str(path)
        if line is not None:
            where += f":{line}"
            if col is not None:
                where += f":{col}"
        super().__init__(f"{where}: {message}")
        self.path = str(path)
        self.line = line
        self.col = col


@dataclass(frozen=True)
class SyntheticSpec:
    """Shape, ground-truth rank, and seed of a generated dataset."""

    n_features: int
    n_samples: int
    rank: int
    seed: int = 0

    def __post_init__(self):
        if self.n_features < 1 or self.n_samples < 1 or self.rank < 1:
            raise ValueError(
                f"dimensions must be positive, got "
                f"({self.n_features}, {self.n_samples}, {self.rank})"
            )
        if self.rank > min(self.n_features, self.n_samples):
            raise ValueError(
                f"rank {self.rank} exceeds min({self.n_features}, {self.n_samples})"
            )
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")


@dataclass(frozen=True)
class OutlierSpec:
    """Density and additive uniform range of injected corruptions."""

    density: float
    low: float
    high: float
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= float(self.density) <= 1.0):
            raise ValueError(f"density must be in [0, 1], got {self.density}")
        if not (0.0 <= float(self.low) <= float(self.high)):
            raise ValueError(
                f"need 0 <= low <= high, got low={self.low}, high={self.high}"
            )
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")


def normalization_projector(M) -> np.ndarray:
    """Scale a nonnegative matrix into [0, 1] by its global maximum.

    Preserves entry ratios and leaves a matrix with maximum 1 unchanged.
    """
    M = require_nonneg_matrix(M, "matrix")
    peak = float(M.max())
    if peak == 0.0:
        raise ValueError("cannot normalize an all-zero matrix")
    return M / peak


def gen_synthetic(spec: SyntheticSpec):
    """Ground-truth low-rank data: V = normalize(W_true @ H_true).

    Factor entries are absolute values of zero-mean Gaussians with
    variance 1/sqrt(rank); taking magnitudes keeps that second moment.
    Returns (V, W_true, H_true) with V in [0, 1] and max entry exactly 1.
    """
    rng = seeded_rng(spec.seed)
    sigma = (1.0 / np.sqrt(spec.rank)) ** 0.5
    W_true = np.abs(rng.normal(0.0, sigma, (spec.n_features, spec.rank)))
    H_true = np.abs(rng.normal(0.0, sigma, (spec.rank, spec.n_samples)))
    V = normalization_projector(W_true @ H_true)
    return V, W_true, H_true


def inject_outliers(V, spec: OutlierSpec):
    """Additively corrupt entries chosen i.i.d. with the given density.

    Each corrupted entry gains an independent uniform draw from
    [low, high]; clean entries are untouched. Returns the corrupted
    matrix and the boolean corruption mask. Corruption never decreases
    an entry.
    """
    V = require_nonneg_matrix(V, "V")
    rng = seeded_rng(spec.seed)
    mask = rng.random(V.shape) < spec.density
    draws = rng.uniform(spec.low, spec.high, V.shape)
    return V + np.where(mask, draws, 0.0), mask


# ---------------------------------------------------------------------------
# matrix files


def save_matrix(M, path, format: str | None = None) -> None:
    """Write a matrix as CSV or binary; format inferred from extension.

    CSV floats use shortest round-trip formatting, so a save/load cycle
    reproduces every entry exactly; the binary format is bit-exact by
    construction.
    """
    M = require_nonneg_matrix(M, "matrix")
    path = Path(path)
    fmt = format or ("csv" if path.suffix.lower() == ".csv" else "binary")
    if fmt == "csv":
        lines = [",".join(repr(float(x)) for x in row) for row in M]
        path.write_text("\n".join(lines) + "\n", encoding="ascii")
    elif fmt == "binary":
        rows, cols = M.shape
        payload = BINARY_MAGIC + struct.pack("<QQ", rows, cols)
        payload += np.ascontiguousarray(M, dtype="<f8").tobytes()
        path.write_bytes(payload)
    else:
        raise ValueError(f"unknown matrix format {fmt!r}")


def load_matrix(path, format: str | None = None) -> np.ndarray:
    """Read a matrix file, validating shape, sign, and finiteness."""
    path = Path(path)
    fmt = format or ("csv" if path.suffix.lower() == ".csv" else "binary")
    if fmt == "csv":
        return _load_csv(path)
    if fmt == "binary":
        return _load_binary(path)
    raise ValueError(f"unknown matrix format {fmt!r}")


def _load_csv(path: Path) -> np.ndarray:
    rows = []
    width = None
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise DataFormatError(
                    path, f"expected {width} columns, found {len(cells)}",
                    line=lineno,
                )
            row = []
            for colno, cell in enumerate(cells, start=1):
                try:
                    value = float(cell)
                except ValueError:
                    raise DataFormatError(
                        path, f"non-numeric token {cell.strip()!r}",
                        line=lineno, col=colno,
                    ) from None
                if not np.isfinite(value):
                    raise DataFormatError(
                        path, f"non-finite entry {cell.strip()!r}",
                        line=lineno, col=colno,
                    )
                if value < 0.0:
                    raise DataFormatError(
                        path, f"negative entry {value!r}",
                        line=lineno, col=colno,
                    )
                row.append(value)
            rows.append(row)
    if not rows:
        raise DataFormatError(path, "empty matrix file")
    return np.array(rows, dtype=np.float64)


def _load_binary(path: Path) -> np.ndarray:
    blob = Path(path).read_bytes()
    header = len(BINARY_MAGIC) + 16
    if len(blob) < header or not blob.startswith(BINARY_MAGIC):
        raise DataFormatError(path, "missing NNMF1 magic header")
    rows, cols = struct.unpack_from("<QQ", blob, len(BINARY_MAGIC))
    expected = header + rows * cols * 8
    if rows < 1 or cols < 1 or len(blob) != expected:
        raise DataFormatError(
            path,
            f"payload length {len(blob)} does not match {rows}x{cols} entries",
        )
    M = np.frombuffer(blob, dtype="<f8", offset=header).reshape(rows, cols)
    M = np.ascontiguousarray(M, dtype=np.float64)
    if not np.isfinite(M).all():
        raise DataFormatError(path, "matrix contains non-finite entries")
    if (M < 0.0).any():
        raise DataFormatError(path, "matrix contains negative entries")
    return M


# ---------------------------------------------------------------------------
# PGM images


def read_pgm(path):
    """Read a plain (P2) or raw (P5) PGM image; returns (pixels, maxval)."""
    path = Path(path)
    blob = path.read_bytes()

    tokens = []
    pos = 0
    # Header tokens: magic, width, height, maxval; '#' starts a comment.
    while len(tokens) < 4 and pos < len(blob):
        c = blob[pos:pos + 1]
        if c.isspace():
            pos += 1
        elif c == b"#":
            nl = blob.find(b"\n", pos)
            pos = len(blob) if nl < 0 else nl + 1
        else:
            end = pos
            while end < len(blob) and not blob[end:end + 1].isspace():
                end += 1
            tokens.append(blob[pos:end])
            pos = end
    if len(tokens) < 4:
        raise DataFormatError(path, "truncated PGM header")
    magic = tokens[0]
    if magic not in (b"P2", b"P5"):
        raise DataFormatError(path, f"unsupported PGM magic {magic!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:4])
    except ValueError:
        raise DataFormatError(path, "non-numeric PGM header field") from None
    if width < 1 or height < 1 or not (0 < maxval < 65536):
        raise DataFormatError(
            path, f"bad PGM dimensions {width}x{height} maxval {maxval}"
        )
    count = width * height
    if magic == b"P2":
        body = blob[pos:].split()
        if len(body) != count:
            raise DataFormatError(
                path, f"expected {count} pixels, found {len(body)}"
            )
        try:
            pixels = np.array([int(t) for t in body], dtype=np.int64)
        except ValueError:
            raise DataFormatError(path, "non-numeric pixel token") from None
    else:
        pos += 1  # single whitespace byte after maxval
        itemsize = 1 if maxval < 256 else 2
        raw = blob[pos:pos + count * itemsize]
        if len(raw) != count * itemsize:
            raise DataFormatError(
                path, f"expected {count * itemsize} pixel bytes, found {len(raw)}"
            )
        dtype = np.uint8 if itemsize == 1 else ">u2"
        pixels = np.frombuffer(raw, dtype=dtype).astype(np.int64)
    if (pixels < 0).any() or (pixels > maxval).any():
        raise DataFormatError(path, f"pixel value outside [0, {maxval}]")
    return pixels.reshape(height, width), maxval


def write_pgm(path, pixels, maxval: int = 255) -> None:
    """Write a raw (P5) PGM image from a 2-D integer array."""
    pixels = np.asarray(pixels)
    if pixels.ndim != 2:
        raise ValueError(f"pixels must be 2-D, got shape {pixels.shape}")
    if not (0 < maxval < 256):
        raise ValueError(f"maxval must be in (0, 255], got {maxval}")
    if (pixels < 0).any() or (pixels > maxval).any():
        raise ValueError(f"pixel values must lie in [0, {maxval}]")
    height, width = pixels.shape
    header = f"P5\n{width} {height}\n{maxval}\n".encode("ascii")
    Path(path).write_bytes(header + pixels.astype(np.uint8).tobytes())


def load_image_dir(path, width: int, height: int, max_level: int) -> np.ndarray:
    """Stack a directory of equal-size PGM images into one data matrix.

    Each image becomes one column (row-major pixel order), clamped at
    max_level and scaled by it, so the result lives in [0, 1] with
    width * height rows. Files are taken in sorted name order.
    """
    root = Path(path)
    if not root.is_dir():
        raise DataFormatError(root, "not a directory")
    files = sorted(p for p in root.iterdir() if p.suffix.lower() == ".pgm")
    if not files:
        raise DataFormatError(root, "no .pgm images found")
    if max_level < 1:
        raise ValueError(f"max_level must be >= 1, got {max_level}")
    columns = []
    for f in files:
        pixels, _ = read_pgm(f)
        if pixels.shape != (height, width):
            raise DataFormatError(
                f,
                f"image is {pixels.shape[1]}x{pixels.shape[0]}, "
                f"expected {width}x{height}",
            )
        clamped = np.minimum(pixels, max_level).astype(np.float64)
        columns.append(clamped.reshape(-1) / max_level)
    return np.column_stack(columns)
