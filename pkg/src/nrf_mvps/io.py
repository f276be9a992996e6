"""Small readers/writers: PFM images, 8-bit PNG masks, binary PLY meshes."""

from __future__ import annotations

import os
import re
import struct
from pathlib import Path

import numpy as np
from PIL import Image


def write_pfm(path, data) -> None:
    """Little-endian PFM.  ``data`` is (H, W) or (H, W, 3); row 0 is the top row."""
    data = np.asarray(data, dtype="<f4")
    if data.ndim == 2:
        tag = b"Pf"
    elif data.ndim == 3 and data.shape[2] == 3:
        tag = b"PF"
    else:
        raise ValueError(f"PFM needs (H,W) or (H,W,3) data, got {data.shape}")
    h, w = data.shape[:2]
    with open(path, "wb") as f:
        f.write(tag + b"\n")
        f.write(f"{w} {h}\n".encode())
        f.write(b"-1.0\n")
        # PFM stores rows bottom-to-top
        f.write(np.ascontiguousarray(data[::-1]).tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        tag = f.readline().strip()
        if tag not in (b"PF", b"Pf"):
            raise ValueError(f"{path}: not a PFM file")
        dims = f.readline().decode()
        m = re.match(r"^\s*(\d+)\s+(\d+)\s*$", dims)
        if not m:
            raise ValueError(f"{path}: malformed PFM header")
        w, h = int(m.group(1)), int(m.group(2))
        scale = float(f.readline().decode().strip())
        dtype = "<f4" if scale < 0 else ">f4"
        channels = 3 if tag == b"PF" else 1
        raw = np.frombuffer(f.read(), dtype=dtype)
    if raw.size != w * h * channels:
        raise ValueError(f"{path}: expected {w * h * channels} floats, found {raw.size}")
    shape = (h, w, 3) if channels == 3 else (h, w)
    return raw.reshape(shape)[::-1].astype(np.float32)


def write_mask_png(path, mask) -> None:
    Image.fromarray(np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)).save(path)


def read_mask_png(path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("L")) > 127


def write_png(path, image_linear) -> None:
    """sRGB-encode a linear [0,1] image and write an 8-bit PNG."""
    x = np.clip(np.asarray(image_linear, dtype=np.float64), 0.0, 1.0)
    srgb = np.where(x <= 0.0031308, 12.92 * x, 1.055 * np.power(x, 1 / 2.4) - 0.055)
    Image.fromarray(np.round(srgb * 255).astype(np.uint8)).save(path)


def write_ply(path, vertices, triangles, normals=None) -> None:
    """Binary little-endian PLY with float32 vertices and int32 faces."""
    v = np.asarray(vertices, dtype="<f4").reshape(-1, 3)
    f = np.asarray(triangles, dtype="<i4").reshape(-1, 3)
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {len(v)}",
              "property float x", "property float y", "property float z"]
    if normals is not None:
        header += ["property float nx", "property float ny", "property float nz"]
        v = np.hstack([v, np.asarray(normals, dtype="<f4").reshape(-1, 3)])
    header += [f"element face {len(f)}", "property list uchar int vertex_indices", "end_header"]
    faces = np.empty(len(f), dtype=[("n", "u1"), ("idx", "<i4", (3,))])
    faces["n"] = 3
    faces["idx"] = f
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(np.ascontiguousarray(v, dtype="<f4").tobytes())
        fh.write(faces.tobytes())


def read_ply(path):
    """Read the PLY layout written by :func:`write_ply`.  Returns (vertices, triangles, normals)."""
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"ply":
            raise ValueError(f"{path}: not a PLY file")
        n_vert = n_face = 0
        vprops = []
        while True:
            line = fh.readline()
            if not line:
                raise ValueError(f"{path}: truncated header")
            tok = line.decode("ascii").split()
            if tok[:1] == ["format"] and tok[1] != "binary_little_endian":
                raise ValueError(f"{path}: only binary_little_endian PLY is supported")
            if tok[:2] == ["element", "vertex"]:
                n_vert = int(tok[2])
                current = "vertex"
            elif tok[:2] == ["element", "face"]:
                n_face = int(tok[2])
                current = "face"
            elif tok[:1] == ["property"] and current == "vertex":
                vprops.append(tok[2])
            elif tok[:1] == ["end_header"]:
                break
        v = np.frombuffer(fh.read(4 * len(vprops) * n_vert), dtype="<f4").reshape(n_vert, len(vprops))
        faces = np.frombuffer(fh.read(13 * n_face), dtype=[("n", "u1"), ("idx", "<i4", (3,))])
    if n_face and np.any(faces["n"] != 3):
        raise ValueError(f"{path}: only triangle faces are supported")
    normals = v[:, 3:6].astype(np.float64) if len(vprops) >= 6 else None
    return v[:, :3].astype(np.float64), faces["idx"].astype(np.int64), normals


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    if not os.access(p, os.W_OK):
        raise PermissionError(f"{p} is not writable")
    return p
