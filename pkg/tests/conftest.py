"""Shared fixtures and independent oracles.

The NIfTI writer and the flood-fill labeller here are deliberately written
from scratch (struct packing, BFS) so round-trip and component tests check
the package against something it does not share code with.
"""
import struct
from collections import deque

import numpy as np
import pytest

from ascivol.grid import VoxelGrid, VoxelSpacing

DTYPE_CODES = {"uint8": (2, "<u1"), "int16": (4, "<i2"),
               "float32": (16, "<f4"), "float64": (64, "<f8")}


def independent_nifti_bytes(
    dims,
    spacing,
    flat_values,
    datatype="float32",
    scl_slope=0.0,
    scl_inter=0.0,
    magic=b"n+1\x00",
    dim0=3,
    vox_offset=352,
):
    """Hand-packed single-file NIfTI-1 blob, independent of the package."""
    code, np_dtype = DTYPE_CODES[datatype]
    header = bytearray(348)
    struct.pack_into("<i", header, 0, 348)
    nx, ny, nz = dims
    struct.pack_into("<8h", header, 40, dim0, nx, ny, nz, 1, 1, 1, 1)
    itemsize = np.dtype(np_dtype).itemsize
    struct.pack_into("<2h", header, 70, code, itemsize * 8)
    dx, dy, dz = spacing
    struct.pack_into("<8f", header, 76, 1.0, dx, dy, dz, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<fff", header, 108, float(vox_offset), scl_slope, scl_inter)
    header[344:348] = magic
    payload = np.asarray(flat_values, dtype=np_dtype).tobytes()
    pad = b"\x00" * (vox_offset - 348)
    return bytes(header) + pad + payload


def flood_fill_components(volume, connectivity):
    """BFS connected-component oracle on a 3-D boolean array.

    Returns component sizes sorted descending. ``connectivity`` is 6 or 26.
    """
    volume = np.asarray(volume, dtype=bool)
    if connectivity == 6:
        neighbors = [
            (1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)
        ]
    else:
        neighbors = [
            (di, dj, dk)
            for di in (-1, 0, 1)
            for dj in (-1, 0, 1)
            for dk in (-1, 0, 1)
            if (di, dj, dk) != (0, 0, 0)
        ]
    seen = np.zeros(volume.shape, dtype=bool)
    sizes = []
    for start in zip(*np.nonzero(volume)):
        if seen[start]:
            continue
        queue = deque([start])
        seen[start] = True
        size = 0
        while queue:
            i, j, k = queue.popleft()
            size += 1
            for di, dj, dk in neighbors:
                n = (i + di, j + dj, k + dk)
                if (
                    0 <= n[0] < volume.shape[0]
                    and 0 <= n[1] < volume.shape[1]
                    and 0 <= n[2] < volume.shape[2]
                    and volume[n]
                    and not seen[n]
                ):
                    seen[n] = True
                    queue.append(n)
        sizes.append(size)
    return sorted(sizes, reverse=True)


def percentile_oracle(values, p):
    """Brute-force sort-and-interpolate percentile."""
    v = sorted(float(x) for x in values)
    rank = p / 100.0 * (len(v) - 1)
    low = int(np.floor(rank))
    if low == len(v) - 1:
        return v[-1]
    frac = rank - low
    return v[low] + frac * (v[low + 1] - v[low])


def make_grid(values3d, spacing=(1.0, 1.0, 1.0), kind="binary"):
    """Grid from an (nx, ny, nz) array using the package's x-fastest layout."""
    arr = np.asarray(values3d, dtype=np.float64)
    return VoxelGrid(
        arr.shape, VoxelSpacing(*spacing), arr.reshape(-1, order="F"), kind
    )


@pytest.fixture
def tmp_mask_file(tmp_path):
    """Factory writing a binary mask NIfTI and returning its path."""
    from ascivol.niftiio import write_volume

    def _write(values3d, spacing=(1.0, 1.0, 1.0), name="mask.nii"):
        grid = make_grid(values3d, spacing, "binary")
        path = tmp_path / name
        write_volume(grid, path)
        return path

    return _write
