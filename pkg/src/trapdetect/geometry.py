"""Array geometry, Gaussian PSF model, and the sparse measurement matrix.

The measurement matrix maps per-site brightnesses (total photoelectrons
attributable to one site) to expected pixel values. Each column is the
pixel-sampled image of one site, normalized to unit sum, so brightness
stays expressed in photoelectrons end to end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import GeometryError, ParameterError

# FWHM of an Airy pattern, in units of wavelength / numerical aperture.
AIRY_FWHM_COEFF = 0.514


@dataclass(frozen=True)
class ArrayGeometry:
    """Regular lattice of trap sites inside a pixel frame.

    Coordinates are (row, col) in pixels; sub-pixel centers are allowed.
    """

    n_rows: int
    n_cols: int
    spacing_px: float
    margin_px: float
    site_centers: np.ndarray  # (n_sites, 2) float64
    image_height: int
    image_width: int

    def __post_init__(self):
        centers = np.ascontiguousarray(self.site_centers, dtype=np.float64)
        if centers.shape != (self.n_rows * self.n_cols, 2):
            raise GeometryError(
                f"expected {self.n_rows * self.n_cols} site centers, "
                f"got shape {centers.shape}"
            )
        inset = self.margin_px
        lo = centers.min(axis=0)
        hi = centers.max(axis=0)
        if (lo < inset - 1e-9).any() or (
            hi > np.array([self.image_height, self.image_width]) - 1 - inset + 1e-9
        ).any():
            raise GeometryError("site centers leave the frame inset by margin_px")
        centers.setflags(write=False)
        object.__setattr__(self, "site_centers", centers)

    @property
    def n_sites(self) -> int:
        return self.n_rows * self.n_cols

    @property
    def n_pixels(self) -> int:
        return self.image_height * self.image_width

    def site_grid_index(self, site: int) -> tuple[int, int]:
        """Lattice (row, col) index of a site from its flat index."""
        return divmod(site, self.n_cols)


@dataclass(frozen=True)
class PSFModel:
    """Gaussian point spread function, parameterized by its half width
    at half maximum, truncated to a finite disk for sparsity."""

    hwhm_px: float
    truncation_radius_px: float | None = None

    def __post_init__(self):
        if not self.hwhm_px > 0:
            raise ParameterError(f"hwhm_px must be > 0, got {self.hwhm_px}")
        if self.truncation_radius_px is None:
            object.__setattr__(self, "truncation_radius_px", 4.0 * self.hwhm_px)
        if self.truncation_radius_px < 3.0 * self.hwhm_px - 1e-12:
            raise ParameterError(
                "truncation_radius_px must be at least 3 half widths; "
                f"got {self.truncation_radius_px} for hwhm {self.hwhm_px}"
            )


@dataclass(frozen=True)
class MeasurementMatrix:
    """Sparse pixels-by-sites forward map with unit-sum columns."""

    matrix: sp.csr_matrix
    n_pixels: int
    n_sites: int
    image_height: int
    image_width: int
    _csc: sp.csc_matrix | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.matrix.shape != (self.n_pixels, self.n_sites):
            raise ParameterError("matrix shape disagrees with pixel/site counts")

    @property
    def csc(self) -> sp.csc_matrix:
        """Column-compressed view, cached for repeated column slicing."""
        if self._csc is None:
            object.__setattr__(self, "_csc", self.matrix.tocsc())
        return self._csc

    def select_sites(self, site_indices: np.ndarray) -> "MeasurementMatrix":
        """Sub-matrix keeping only the given site columns."""
        sub = self.csc[:, site_indices].tocsr()
        return MeasurementMatrix(
            matrix=sub,
            n_pixels=self.n_pixels,
            n_sites=int(len(site_indices)),
            image_height=self.image_height,
            image_width=self.image_width,
        )


def build_geometry(
    n_rows: int, n_cols: int, spacing_px: float, margin_px: float
) -> ArrayGeometry:
    """Lay out a rectangular lattice and size the surrounding pixel frame.

    The frame is the lattice extent plus the margin on every side, rounded
    up to whole pixels.
    """
    for name, v in (
        ("n_rows", n_rows),
        ("n_cols", n_cols),
        ("spacing_px", spacing_px),
        ("margin_px", margin_px),
    ):
        if not v > 0:
            raise ParameterError(f"{name} must be > 0, got {v}")

    rows = np.arange(n_rows, dtype=np.float64) * spacing_px + margin_px
    cols = np.arange(n_cols, dtype=np.float64) * spacing_px + margin_px
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    centers = np.column_stack([rr.ravel(), cc.ravel()])

    def extent(n):
        # Highest center coordinate plus margin, converted to a pixel count.
        return int(math.ceil((n - 1) * spacing_px + 2.0 * margin_px + 1.0 - 1e-9))

    return ArrayGeometry(
        n_rows=int(n_rows),
        n_cols=int(n_cols),
        spacing_px=float(spacing_px),
        margin_px=float(margin_px),
        site_centers=centers,
        image_height=extent(n_rows),
        image_width=extent(n_cols),
    )


def psf_weight(psf: PSFModel, dx, dy):
    """Unnormalized Gaussian weight at offset (dx, dy) from the center.

    Zero beyond the truncation radius. Accepts scalars or arrays.
    """
    d2 = np.asarray(dx, dtype=np.float64) ** 2 + np.asarray(dy, dtype=np.float64) ** 2
    w = np.exp(-math.log(2.0) * d2 / psf.hwhm_px**2)
    w = np.where(d2 <= psf.truncation_radius_px**2, w, 0.0)
    if np.ndim(dx) == 0 and np.ndim(dy) == 0:
        return float(w)
    return w


def build_measurement_matrix(geom: ArrayGeometry, psf: PSFModel) -> MeasurementMatrix:
    """Assemble the sparse forward map from the geometry and PSF.

    Column j samples the Gaussian at pixel centers inside the truncation
    disk around site j and is L1-normalized, so a brightness of b photo-
    electrons at site j contributes exactly b to the clean image sum.
    """
    radius = psf.truncation_radius_px
    h, w = geom.image_height, geom.image_width
    n_sites = geom.n_sites

    col_indices = []
    row_indices = []
    values = []
    for j in range(n_sites):
        cr, cc = geom.site_centers[j]
        r0, r1 = math.ceil(cr - radius), math.floor(cr + radius)
        c0, c1 = math.ceil(cc - radius), math.floor(cc + radius)
        if r0 < 0 or c0 < 0 or r1 > h - 1 or c1 > w - 1:
            raise GeometryError(
                f"truncation disk of site {j} exits the image frame; "
                "increase margin_px"
            )
        pr = np.arange(r0, r1 + 1, dtype=np.float64)
        pc = np.arange(c0, c1 + 1, dtype=np.float64)
        dr, dc = np.meshgrid(pr - cr, pc - cc, indexing="ij")
        inside = dr**2 + dc**2 <= radius**2
        weights = np.exp(-math.log(2.0) * (dr**2 + dc**2) / psf.hwhm_px**2)[inside]
        pix = (
            (pr[:, None].astype(np.int64) * w + pc[None, :].astype(np.int64))
        )[inside]
        weights = weights / weights.sum()
        row_indices.append(pix)
        col_indices.append(np.full(pix.size, j, dtype=np.int64))
        values.append(weights)

    mat = sp.coo_matrix(
        (
            np.concatenate(values),
            (np.concatenate(row_indices), np.concatenate(col_indices)),
        ),
        shape=(h * w, n_sites),
    ).tocsr()
    return MeasurementMatrix(
        matrix=mat,
        n_pixels=h * w,
        n_sites=n_sites,
        image_height=h,
        image_width=w,
    )


def diffraction_ratio(
    wavelength: float, numerical_aperture: float, spacing: float
) -> float:
    """Ratio of lattice spacing to the diffraction-limited PSF width.

    The PSF width is taken as the FWHM of the Airy pattern,
    AIRY_FWHM_COEFF * wavelength / NA. Any consistent length unit works.
    """
    for name, v in (
        ("wavelength", wavelength),
        ("numerical_aperture", numerical_aperture),
        ("spacing", spacing),
    ):
        if not v > 0:
            raise ParameterError(f"{name} must be > 0, got {v}")
    if numerical_aperture > 1.0:
        raise ParameterError(
            f"numerical_aperture must be <= 1, got {numerical_aperture}"
        )
    r_psf = AIRY_FWHM_COEFF * wavelength / numerical_aperture
    return spacing / r_psf
