"""Disk formats: binary little-endian PLY meshes, PFM depth rasters, PNG images/masks.

Images are 8-bit RGB PNG; masks are 8-bit grayscale PNG with 255 = 1; depth is
single-channel little-endian PFM in meters. PLY vertices carry x y z (float32)
plus red green blue (uint8); faces are uchar-counted int32 index lists.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

from .errors import DimensionMismatchError
from .geometry import TriMesh

_VERTEX_DTYPE = np.dtype([("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
                          ("red", "u1"), ("green", "u1"), ("blue", "u1")])
_FACE_DTYPE = np.dtype([("n", "u1"), ("i0", "<i4"), ("i1", "<i4"), ("i2", "<i4")])


def write_ply(path, mesh: TriMesh) -> None:
    header = (
        "ply\n"
        "format binary_little_endian 1.0\n"
        f"element vertex {mesh.num_vertices}\n"
        "property float x\nproperty float y\nproperty float z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        f"element face {mesh.num_faces}\n"
        "property list uchar int vertex_indices\n"
        "end_header\n"
    )
    verts = np.empty(mesh.num_vertices, dtype=_VERTEX_DTYPE)
    pos = mesh.vertices.astype(np.float32)
    rgb = np.clip(np.rint(mesh.colors * 255.0), 0, 255).astype(np.uint8)
    verts["x"], verts["y"], verts["z"] = pos[:, 0], pos[:, 1], pos[:, 2]
    verts["red"], verts["green"], verts["blue"] = rgb[:, 0], rgb[:, 1], rgb[:, 2]
    faces = np.empty(mesh.num_faces, dtype=_FACE_DTYPE)
    faces["n"] = 3
    faces["i0"], faces["i1"], faces["i2"] = mesh.faces[:, 0], mesh.faces[:, 1], mesh.faces[:, 2]
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(verts.tobytes())
        fh.write(faces.tobytes())


def read_ply(path) -> TriMesh:
    with open(path, "rb") as fh:
        data = fh.read()
    end = data.index(b"end_header\n") + len(b"end_header\n")
    lines = data[:end].decode("ascii").splitlines()
    if lines[0] != "ply" or "format binary_little_endian 1.0" not in lines[1]:
        raise DimensionMismatchError("unsupported PLY header")
    n_vert = n_face = 0
    for ln in lines:
        parts = ln.split()
        if parts[:2] == ["element", "vertex"]:
            n_vert = int(parts[2])
        elif parts[:2] == ["element", "face"]:
            n_face = int(parts[2])
    body = data[end:]
    verts = np.frombuffer(body, dtype=_VERTEX_DTYPE, count=n_vert)
    faces = np.frombuffer(body, dtype=_FACE_DTYPE, count=n_face,
                          offset=n_vert * _VERTEX_DTYPE.itemsize)
    positions = np.stack([verts["x"], verts["y"], verts["z"]], axis=1).astype(np.float64)
    colors = np.stack([verts["red"], verts["green"], verts["blue"]], axis=1).astype(np.float32) / 255.0
    tri = np.stack([faces["i0"], faces["i1"], faces["i2"]], axis=1).astype(np.int32)
    return TriMesh(positions, colors, tri)


def write_pfm(path, depth: np.ndarray) -> None:
    """Single-channel little-endian PFM; rows stored bottom-to-top per the format."""
    arr = np.asarray(depth, dtype="<f4")
    if arr.ndim != 2:
        raise DimensionMismatchError("PFM writer expects a 2-D raster")
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(b"Pf\n")
        fh.write(f"{w} {h}\n".encode("ascii"))
        fh.write(b"-1.0\n")
        fh.write(arr[::-1].tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"Pf":
            raise DimensionMismatchError("not a single-channel PFM file")
        w, h = map(int, fh.readline().split())
        scale = float(fh.readline())
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(fh.read(4 * w * h), dtype=dtype).reshape(h, w)
    return np.ascontiguousarray(data[::-1]).astype(np.float32)


def write_image_png(path, image: np.ndarray) -> None:
    """Float [0,1] (H,W,3) -> 8-bit RGB PNG."""
    arr = np.clip(np.rint(np.asarray(image, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def read_image_png(path) -> np.ndarray:
    arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.float32)
    return arr / 255.0


def write_mask_png(path, mask: np.ndarray) -> None:
    arr = np.where(np.asarray(mask) > 0, 255, 0).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path, format="PNG")


def read_mask_png(path) -> np.ndarray:
    arr = np.asarray(Image.open(path).convert("L"))
    return (arr > 127).astype(np.uint8)


def quantize_image(image: np.ndarray) -> np.ndarray:
    """Snap float colors to the 8-bit grid so PNG round trips are lossless."""
    q = np.clip(np.rint(np.asarray(image, dtype=np.float64) * 255.0), 0, 255)
    return (q / 255.0).astype(np.float32)


def encode_png_bytes(image: np.ndarray) -> bytes:
    import io as _io

    buf = _io.BytesIO()
    arr = np.clip(np.rint(np.asarray(image, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def decode_png_bytes(data: bytes) -> np.ndarray:
    import io as _io

    arr = np.asarray(Image.open(_io.BytesIO(data)).convert("RGB"), dtype=np.float32)
    return arr / 255.0


def encode_mask_png_bytes(mask: np.ndarray) -> bytes:
    import io as _io

    buf = _io.BytesIO()
    arr = np.where(np.asarray(mask) > 0, 255, 0).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def decode_mask_png_bytes(data: bytes) -> np.ndarray:
    import io as _io

    arr = np.asarray(Image.open(_io.BytesIO(data)).convert("L"))
    return (arr > 127).astype(np.uint8)


def encode_pfm_bytes(depth: np.ndarray) -> bytes:
    arr = np.asarray(depth, dtype="<f4")
    h, w = arr.shape
    return b"Pf\n" + f"{w} {h}\n".encode("ascii") + b"-1.0\n" + arr[::-1].tobytes()


def decode_pfm_bytes(data: bytes) -> np.ndarray:
    import io as _io

    fh = _io.BytesIO(data)
    if fh.readline().strip() != b"Pf":
        raise DimensionMismatchError("not a single-channel PFM buffer")
    w, h = map(int, fh.readline().split())
    scale = float(fh.readline())
    dtype = "<f4" if scale < 0 else ">f4"
    raster = np.frombuffer(fh.read(4 * w * h), dtype=dtype).reshape(h, w)
    return np.ascontiguousarray(raster[::-1]).astype(np.float32)
