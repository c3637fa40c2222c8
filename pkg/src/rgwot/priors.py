"""Cost construction: visual cost, temporal prior, banded structural priors,
virtual-frame augmentation and background masking.

The structural costs are never materialized for large inputs; they are kept
as band parameters and consumed by the banded kernel. `BandSpec.dense()`
exists for small instances and tests.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import AlreadyAugmented, InvalidRadius, ShapeMismatch, ZeroNormRow

_BAND_EPS = 1e-9  # guards floor(n * r) against cases like 50 * 0.02 -> 0.9999...


def _as_matrix(x) -> np.ndarray:
    data = getattr(x, "data", x)
    return np.asarray(data, dtype=np.float64)


def visual_cost(X, Y) -> np.ndarray:
    """Cosine distance matrix: C_ij = 1 - cos(x_i, y_j), in [0, 2]."""
    xm = _as_matrix(X)
    ym = _as_matrix(Y)
    if xm.shape[1] != ym.shape[1]:
        raise ShapeMismatch(f"embedding widths differ: {xm.shape[1]} vs {ym.shape[1]}")
    xn = np.linalg.norm(xm, axis=1)
    yn = np.linalg.norm(ym, axis=1)
    for norms, side in ((xn, "x"), (yn, "y")):
        bad = np.flatnonzero(norms == 0.0)
        if bad.size:
            raise ZeroNormRow(int(bad[0]), side)
    c = 1.0 - (xm / xn[:, None]) @ (ym / yn[:, None]).T
    return np.clip(c, 0.0, 2.0)


def temporal_prior(n: int, m: int) -> np.ndarray:
    """R_ij = |i/N - j/M| with 1-based frame indices."""
    i = np.arange(1, n + 1, dtype=np.float64) / n
    j = np.arange(1, m + 1, dtype=np.float64) / m
    return np.abs(i[:, None] - j[None, :])


@dataclass(frozen=True)
class BandSpec:
    """Band parameters of one structural cost matrix.

    For the x side the matrix is `value` (= 1/r) when 1 <= |i-k| <= radius
    and zero elsewhere. For the y side it is zero on that band and one
    elsewhere, diagonal included.
    """

    size: int
    radius: int
    value: float
    side: str  # "x" or "y"

    def dense(self) -> np.ndarray:
        delta = np.abs(np.subtract.outer(np.arange(self.size), np.arange(self.size)))
        in_band = (delta >= 1) & (delta <= self.radius)
        if self.side == "x":
            return np.where(in_band, self.value, 0.0)
        return np.where(in_band, 0.0, 1.0)


def structural_priors(n: int, m: int, r: float) -> tuple[BandSpec, BandSpec]:
    """Band parameters of C_x (attractive, scaled 1/r) and C_y (repulsive)."""
    if not 0.0 < r <= 1.0:
        raise InvalidRadius(f"r must lie in (0, 1], got {r}")
    wx = int(np.floor(n * r + _BAND_EPS))
    wy = int(np.floor(m * r + _BAND_EPS))
    return (
        BandSpec(size=n, radius=wx, value=1.0 / r, side="x"),
        BandSpec(size=m, radius=wy, value=1.0, side="y"),
    )


@dataclass(frozen=True)
class CostBundle:
    """Everything the solver needs for one video pair.

    C is the visual cost, R the temporal prior, C_tilde = C + rho * R, all
    over real frames plus (after augmentation) one virtual row and column.
    Band specs cover real frames only; the virtual frame carries no
    structural cost.
    """

    C: np.ndarray
    R: np.ndarray
    C_tilde: np.ndarray
    band_x: BandSpec
    band_y: BandSpec
    p: np.ndarray
    q: np.ndarray
    rho: float
    virtual: bool = False

    @property
    def n_real(self) -> int:
        return self.band_x.size

    @property
    def m_real(self) -> int:
        return self.band_y.size


def build_cost_bundle(X, Y, hyper) -> CostBundle:
    """Assemble the fused cost for a pair of embedding matrices."""
    c = visual_cost(X, Y)
    n, m = c.shape
    r_mat = temporal_prior(n, m)
    band_x, band_y = structural_priors(n, m, hyper.r)
    bundle = CostBundle(
        C=c,
        R=r_mat,
        C_tilde=c + hyper.rho * r_mat,
        band_x=band_x,
        band_y=band_y,
        p=np.full(n, 1.0 / n),
        q=np.full(m, 1.0 / m),
        rho=hyper.rho,
    )
    if hyper.use_virtual:
        bundle = augment_virtual(bundle)
    return bundle


def augment_virtual(bundle: CostBundle) -> CostBundle:
    """Append one virtual frame per side as a background sink.

    The virtual row/column of C_tilde is the mean of the real entries; R is
    padded with zeros so C_tilde = C + rho * R keeps holding elementwise.
    Marginals become uniform over N+1 (respectively M+1) frames.
    """
    if bundle.virtual:
        raise AlreadyAugmented("cost bundle already has a virtual frame")
    n, m = bundle.C_tilde.shape
    fill = float(bundle.C_tilde.mean())
    ct = np.full((n + 1, m + 1), fill)
    ct[:n, :m] = bundle.C_tilde
    c = np.full((n + 1, m + 1), fill)
    c[:n, :m] = bundle.C
    r_mat = np.zeros((n + 1, m + 1))
    r_mat[:n, :m] = bundle.R
    return replace(
        bundle,
        C=c,
        R=r_mat,
        C_tilde=ct,
        p=np.full(n + 1, 1.0 / (n + 1)),
        q=np.full(m + 1, 1.0 / (m + 1)),
        virtual=True,
    )


def background_mask(coupling, zeta: float) -> tuple[np.ndarray, np.ndarray]:
    """Flag frames with no confident real match in the other video.

    A frame's score is its largest matching probability with any real frame
    on the other side: max over real columns of T_ij divided by the full row
    mass (virtual column included). The frame is background when that
    probability stays below zeta, i.e. not even the best candidate claims a
    zeta share of the row. Columns are scored symmetrically. zeta = 0
    disables masking: a probability can never fall below zero.
    """
    t = coupling.T
    n_all, m_all = t.shape
    n = n_all - 1 if coupling.virtual else n_all
    m = m_all - 1 if coupling.virtual else m_all
    if zeta <= 0.0:
        return np.zeros(n, dtype=bool), np.zeros(m, dtype=bool)
    real = t[:n, :m]
    row_total = t[:n, :].sum(axis=1)
    col_total = t[:, :m].sum(axis=0)
    row_score = real.max(axis=1) / np.where(row_total > 0, row_total, 1.0)
    col_score = real.max(axis=0) / np.where(col_total > 0, col_total, 1.0)
    return row_score < zeta, col_score < zeta
