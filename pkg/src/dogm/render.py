"""PPM rendering of DOGM snapshots.

Palette: free space light gray, static or unclassified occupancy black,
unknown dark gray.  Dynamic mass is drawn with a hue given by the velocity
direction (0 rad is red, counter-clockwise through yellow and green) and
replaces the blend entirely once ``m_D > 0.5``.  Image row 0 is the
largest ``y``.
"""

from __future__ import annotations

import re

import numpy as np

from .evidential import Dogm
from .grid import D, F, OMEGA, S, SD

FREE_GRAY = 210
UNKNOWN_GRAY = 96
OCCUPIED_GRAY = 0
NO_VELOCITY_RGB = (255, 255, 255)
FULL_COLOR_THRESHOLD = 0.5


class SnapshotDecodeError(ValueError):
    pass


def hue_rgb(angle) -> np.ndarray:
    """Fully saturated RGB in [0, 1] for direction ``angle``; same as ``colorsys.hsv_to_rgb(h, 1, 1)``."""
    h = np.mod(np.asarray(angle, dtype=float), 2 * np.pi) / (2 * np.pi)
    h6 = h * 6.0
    sector = np.floor(h6).astype(int) % 6
    f = h6 - np.floor(h6)
    one, zero = np.ones_like(f), np.zeros_like(f)
    q, t = 1.0 - f, f
    table = [(one, t, zero), (q, one, zero), (zero, one, t), (zero, q, one), (t, zero, one), (one, zero, q)]
    out = np.zeros(h.shape + (3,))
    for k, (r, g, b) in enumerate(table):
        sel = sector == k
        out[sel] = np.stack([r[sel], g[sel], b[sel]], axis=-1)
    return out


def frame_rgb(dogm: Dogm) -> np.ndarray:
    """``(n, n, 3)`` uint8 image with row 0 at the top (largest y)."""
    m = dogm.masses
    vx, vy = dogm.moments[..., 0], dogm.moments[..., 1]
    no_v = np.isnan(vx) | np.isnan(vy)
    color = hue_rgb(np.arctan2(np.where(no_v, 0.0, vy), np.where(no_v, 0.0, vx))) * 255.0
    color[no_v] = NO_VELOCITY_RGB
    gray = m[..., F] * FREE_GRAY + (m[..., S] + m[..., SD]) * OCCUPIED_GRAY + m[..., OMEGA] * UNKNOWN_GRAY
    rgb = gray[..., None] + m[..., D, None] * color
    full = m[..., D] > FULL_COLOR_THRESHOLD
    rgb[full] = color[full]
    img = np.clip(np.floor(rgb + 0.5), 0, 255).astype(np.uint8)
    return img[::-1]


def encode_ppm(img: np.ndarray) -> bytes:
    h, w = img.shape[:2]
    return b"P6\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(img, dtype=np.uint8).tobytes()


_PPM_HEADER = re.compile(rb"P6\s+(\d+)\s+(\d+)\s+255\s")


def decode_ppm(data: bytes) -> np.ndarray:
    hit = _PPM_HEADER.match(data)
    if hit is None:
        raise SnapshotDecodeError("not a binary 8-bit PPM")
    w, h = int(hit.group(1)), int(hit.group(2))
    body = np.frombuffer(data, dtype=np.uint8, offset=hit.end())
    if body.size != w * h * 3:
        raise SnapshotDecodeError("PPM body has the wrong size")
    return body.reshape(h, w, 3)


def render_frame(snapshot) -> bytes:
    """PPM bytes for a DOGM object or its serialized snapshot."""
    if isinstance(snapshot, (bytes, bytearray, memoryview)):
        try:
            snapshot = Dogm.from_bytes(bytes(snapshot))
        except ValueError as exc:
            raise SnapshotDecodeError(str(exc)) from None
    return encode_ppm(frame_rgb(snapshot))
