"""Single-file NIfTI-1 reader/writer for the subset this toolkit needs.

Supported: little-endian, 3-D, single-file ("n+1") volumes with datatype
uint8, int16, float32, or float64, plus transparent RFC-1952 (.nii.gz)
compression via the stdlib. Everything else is rejected with an explicit
error rather than guessed at. Orientation fields (qform/sform) are parsed
into the header object but never used: physical volume depends only on
pixdim spacing.

Voxel payload order matches :mod:`ascivol.grid`: x fastest, so the flat
array maps voxel (i, j, k) to offset ``i + nx*(j + ny*k)``.
"""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    IoFailureError,
    TruncatedFileError,
    UnsupportedDatatypeError,
    UnsupportedDimsError,
)
from .grid import VoxelGrid, VoxelSpacing

HEADER_SIZE = 348
# Single-file form: 4 extension bytes follow the header, data at 352.
DEFAULT_VOX_OFFSET = 352
MAGIC_SINGLE = b"n+1\x00"

# NIfTI-1 datatype codes accepted by this subset.
DTYPE_BY_CODE = {
    2: np.dtype("<u1"),   # uint8
    4: np.dtype("<i2"),   # int16
    16: np.dtype("<f4"),  # float32
    64: np.dtype("<f8"),  # float64
}
CODE_BY_NAME = {"uint8": 2, "int16": 4, "float32": 16, "float64": 64}
GZIP_MAGIC = b"\x1f\x8b"


@dataclass
class NiftiHeader:
    """Decoded fields of a 348-byte NIfTI-1 header."""

    dim: tuple[int, ...]          # dim[0..7]
    datatype: int
    bitpix: int
    pixdim: tuple[float, ...]     # pixdim[0..7]
    vox_offset: float
    scl_slope: float
    scl_inter: float
    magic: bytes
    qform_code: int = 0
    sform_code: int = 0

    def validate(self):
        if self.magic != MAGIC_SINGLE:
            raise BadMagicError(
                f"magic {self.magic!r} is not the single-file NIfTI-1 magic 'n+1\\0'"
            )
        if self.dim[0] != 3:
            raise UnsupportedDimsError(
                f"only 3-D volumes are supported, got dim[0] = {self.dim[0]}"
            )
        if self.datatype not in DTYPE_BY_CODE:
            raise UnsupportedDatatypeError(
                f"datatype code {self.datatype} not in supported set "
                f"{sorted(DTYPE_BY_CODE)}"
            )
        expected_bits = DTYPE_BY_CODE[self.datatype].itemsize * 8
        if self.bitpix != expected_bits:
            raise UnsupportedDatatypeError(
                f"bitpix {self.bitpix} inconsistent with datatype "
                f"{self.datatype} (expected {expected_bits})"
            )
        for axis in (1, 2, 3):
            p = self.pixdim[axis]
            if not np.isfinite(p) or p <= 0:
                raise ValueError(f"pixdim[{axis}] must be finite and > 0, got {p}")


def _read_bytes(path: Path) -> bytes:
    try:
        with open(path, "rb") as f:
            head = f.read(2)
            f.seek(0)
            if head == GZIP_MAGIC:
                with gzip.GzipFile(fileobj=f) as gz:
                    return gz.read()
            return f.read()
    except FileNotFoundError as exc:
        raise IoFailureError(f"cannot read {path}: {exc}") from exc
    except (OSError, EOFError, gzip.BadGzipFile) as exc:
        raise IoFailureError(f"cannot read {path}: {exc}") from exc


def parse_header(buf: bytes) -> NiftiHeader:
    """Decode a little-endian NIfTI-1 header from the first 348 bytes."""
    if len(buf) < HEADER_SIZE:
        raise TruncatedFileError(
            f"file holds {len(buf)} bytes, shorter than the {HEADER_SIZE}-byte header"
        )
    sizeof_hdr = struct.unpack_from("<i", buf, 0)[0]
    if sizeof_hdr != HEADER_SIZE:
        if sizeof_hdr == struct.unpack(">i", struct.pack("<i", HEADER_SIZE))[0]:
            raise BadMagicError("big-endian NIfTI-1 is not supported")
        raise BadMagicError(f"sizeof_hdr {sizeof_hdr} != {HEADER_SIZE}; not NIfTI-1")
    dim = struct.unpack_from("<8h", buf, 40)
    datatype, bitpix = struct.unpack_from("<2h", buf, 70)
    pixdim = struct.unpack_from("<8f", buf, 76)
    vox_offset, scl_slope, scl_inter = struct.unpack_from("<fff", buf, 108)
    qform_code, sform_code = struct.unpack_from("<2h", buf, 252)
    magic = buf[344:348]
    return NiftiHeader(
        dim=dim,
        datatype=datatype,
        bitpix=bitpix,
        pixdim=pixdim,
        vox_offset=vox_offset,
        scl_slope=scl_slope,
        scl_inter=scl_inter,
        magic=magic,
        qform_code=qform_code,
        sform_code=sform_code,
    )


def read_volume(path: str | Path, expected_kind: str = "intensity") -> VoxelGrid:
    """Read a volume and validate it against ``expected_kind``.

    Values are rescaled by scl_slope/scl_inter when scl_slope != 0.
    Binary grids must contain only {0, 1} after rescale (tolerance 1e-6).
    """
    buf = _read_bytes(Path(path))
    header = parse_header(buf)
    header.validate()

    nx, ny, nz = header.dim[1], header.dim[2], header.dim[3]
    if nx <= 0 or ny <= 0 or nz <= 0:
        raise UnsupportedDimsError(f"non-positive dims {(nx, ny, nz)}")
    dtype = DTYPE_BY_CODE[header.datatype]
    offset = int(header.vox_offset)
    n_bytes = nx * ny * nz * dtype.itemsize
    if len(buf) < offset + n_bytes:
        raise TruncatedFileError(
            f"payload needs {offset + n_bytes} bytes, file holds {len(buf)}"
        )
    raw = np.frombuffer(buf, dtype=dtype, count=nx * ny * nz, offset=offset)
    values = raw.astype(np.float64)
    slope, inter = header.scl_slope, header.scl_inter
    if np.isfinite(slope) and slope != 0.0:
        inter = inter if np.isfinite(inter) else 0.0
        values = values * np.float64(slope) + np.float64(inter)
    spacing = VoxelSpacing(*(float(header.pixdim[a]) for a in (1, 2, 3)))
    return VoxelGrid((nx, ny, nz), spacing, values, expected_kind)


def write_volume(grid: VoxelGrid, path: str | Path, datatype: str | None = None):
    """Write a grid as single-file NIfTI-1; gzip when the path ends in .gz.

    ``datatype`` picks the on-disk encoding ('uint8', 'int16', 'float32',
    'float64'); default is uint8 for binary grids and float32 otherwise.
    Integer encodings require exactly representable values. Compressed
    output is written with a zeroed gzip timestamp so identical grids
    produce identical bytes.
    """
    if datatype is None:
        datatype = "uint8" if grid.kind == "binary" else "float32"
    if datatype not in CODE_BY_NAME:
        raise UnsupportedDatatypeError(
            f"datatype {datatype!r} not in {sorted(CODE_BY_NAME)}"
        )
    code = CODE_BY_NAME[datatype]
    dtype = DTYPE_BY_CODE[code]
    payload = _encode_values(grid.values, dtype, datatype)
    header = _pack_header(grid, code, dtype.itemsize * 8)
    blob = header + b"\x00\x00\x00\x00" + payload.tobytes()

    path = Path(path)
    try:
        if path.suffix == ".gz":
            with open(path, "wb") as raw:
                with gzip.GzipFile(
                    filename="", mode="wb", fileobj=raw, mtime=0, compresslevel=6
                ) as gz:
                    gz.write(blob)
        else:
            with open(path, "wb") as f:
                f.write(blob)
    except OSError as exc:
        raise IoFailureError(f"cannot write {path}: {exc}") from exc


def _encode_values(values: np.ndarray, dtype: np.dtype, name: str) -> np.ndarray:
    if dtype.kind in "ui":
        info = np.iinfo(dtype)
        bad = (values != np.round(values)) | (values < info.min) | (values > info.max)
        if bad.any():
            raise IoFailureError(
                f"values not exactly representable as {name}; "
                "choose a float datatype"
            )
    return values.astype(dtype)


def _pack_header(grid: VoxelGrid, datatype_code: int, bitpix: int) -> bytes:
    nx, ny, nz = grid.dims
    dx, dy, dz = grid.spacing.as_tuple()
    buf = bytearray(HEADER_SIZE)
    struct.pack_into("<i", buf, 0, HEADER_SIZE)
    struct.pack_into("<8h", buf, 40, 3, nx, ny, nz, 1, 1, 1, 1)
    struct.pack_into("<2h", buf, 70, datatype_code, bitpix)
    struct.pack_into("<8f", buf, 76, 1.0, dx, dy, dz, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<fff", buf, 108, float(DEFAULT_VOX_OFFSET), 1.0, 0.0)
    descrip = b"ascivol"
    buf[148:148 + len(descrip)] = descrip
    # qform/sform left 0: orientation is out of scope for volumetry.
    buf[344:348] = MAGIC_SINGLE
    return bytes(buf)
