"""File formats: binary images, scene truth CSV, occupancy CSV.

The image format is self-describing: a single JSON header line followed
by the pixel payload as little-endian 64-bit floats in row-major order.
Round trips are bit-exact.
"""

from __future__ import annotations

import csv
import json

import numpy as np

from .errors import ImageFormatError, ParameterError
from .geometry import ArrayGeometry
from .simulate import Image, SceneTruth

IMAGE_FORMAT_VERSION = 1


def save_image(path, image: Image) -> None:
    header = {
        "height": image.height,
        "width": image.width,
        "dtype": "f64",
        "endian": "little",
        "version": IMAGE_FORMAT_VERSION,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("ascii") + b"\n")
        fh.write(image.values.astype("<f8").tobytes())


def load_image(path) -> Image:
    with open(path, "rb") as fh:
        line = fh.readline()
        if not line.endswith(b"\n"):
            raise ImageFormatError("missing newline-terminated header")
        try:
            header = json.loads(line.decode("ascii"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ImageFormatError(f"malformed header: {exc}") from exc
        if not isinstance(header, dict):
            raise ImageFormatError("header is not a JSON object")
        version = header.get("version")
        if version != IMAGE_FORMAT_VERSION:
            raise ImageFormatError(
                f"unsupported version {version!r}, expected {IMAGE_FORMAT_VERSION}"
            )
        if header.get("dtype") != "f64" or header.get("endian") != "little":
            raise ImageFormatError("unsupported dtype or endianness")
        try:
            height = int(header["height"])
            width = int(header["width"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ImageFormatError(f"bad dimensions in header: {exc}") from exc
        if height <= 0 or width <= 0:
            raise ImageFormatError("image dimensions must be positive")
        payload = fh.read()
    expected = height * width * 8
    if len(payload) != expected:
        raise ImageFormatError(
            f"payload has {len(payload)} bytes, expected {expected}"
        )
    values = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    return Image(height=height, width=width, values=values)


def save_image_csv(path, image: Image) -> None:
    """Debug-friendly fallback: one row of pixels per line, full precision."""
    np.savetxt(path, image.as_2d(), fmt="%.17g", delimiter=",")


def load_image_csv(path) -> Image:
    grid = np.atleast_2d(np.loadtxt(path, delimiter=","))
    return Image(height=grid.shape[0], width=grid.shape[1], values=grid.ravel())


TRUTH_FIELDS = ["site_index", "occupied", "brightness"]


def save_truth_csv(path, scene: SceneTruth) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRUTH_FIELDS)
        for i in range(scene.n_sites):
            writer.writerow(
                [i, int(scene.occupied[i]), repr(float(scene.brightness[i]))]
            )


def load_truth_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Returns (occupied, brightness) arrays in site order."""
    with open(path, "r", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != TRUTH_FIELDS:
            raise ParameterError(f"unexpected truth CSV header: {reader.fieldnames}")
        rows = sorted(reader, key=lambda r: int(r["site_index"]))
    occupied = np.array([bool(int(r["occupied"])) for r in rows])
    brightness = np.array([float(r["brightness"]) for r in rows])
    return occupied, brightness


OCCUPANCY_FIELDS = ["site_index", "row", "col", "occupied", "xhat"]


def save_occupancy_csv(path, geom: ArrayGeometry, occupied, xhat) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(OCCUPANCY_FIELDS)
        for i in range(geom.n_sites):
            r, c = geom.site_grid_index(i)
            writer.writerow([i, r, c, int(occupied[i]), repr(float(xhat[i]))])


def load_occupancy_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Returns (occupied, xhat) arrays in site order."""
    with open(path, "r", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != OCCUPANCY_FIELDS:
            raise ParameterError(
                f"unexpected occupancy CSV header: {reader.fieldnames}"
            )
        rows = sorted(reader, key=lambda r: int(r["site_index"]))
    occupied = np.array([bool(int(r["occupied"])) for r in rows])
    xhat = np.array([float(r["xhat"]) for r in rows])
    return occupied, xhat
