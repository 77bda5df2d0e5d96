"""Segmentation-guided rail correction and least-squares rail polynomials."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from numpy.polynomial import Polynomial

from .geometry import RAIL_TRACK, ValidationError
from .tree import EgoPath


@dataclass(frozen=True)
class SnapConfig:
    w_snap: float = 10.0
    enforce_monotone_width: bool = True

    def __post_init__(self) -> None:
        if self.w_snap < 0:
            raise ValidationError("w_snap must be >= 0")


@dataclass(frozen=True)
class FittedPath:
    """Rails as polynomials x = p(y); coefficients highest power first."""

    left_coeffs: tuple[float, ...]
    right_coeffs: tuple[float, ...]
    degree: int
    y_range: tuple[int, int]

    def left_at(self, y):
        return np.polyval(self.left_coeffs, y)

    def right_at(self, y):
        return np.polyval(self.right_coeffs, y)


def _nearest_rail_columns(
    is_rail: np.ndarray,
    ys: np.ndarray,
    xs: np.ndarray,
    w_snap: float,
    rail_prob: Optional[np.ndarray],
) -> np.ndarray:
    """Nearest rail-track column within ``w_snap`` per (y, x); -1 where none.

    Ties go to the higher rail probability when given, else to the left column.
    """
    reach = int(np.ceil(w_snap)) + 1
    offsets = np.arange(-reach, reach + 1)
    cols = np.floor(xs)[:, None].astype(np.int64) + offsets[None, :]
    width = is_rail.shape[1]
    inside = (cols >= 0) & (cols < width)
    safe = np.clip(cols, 0, width - 1)
    dist = np.abs(cols - xs[:, None])
    ok = inside & (dist <= w_snap) & is_rail[ys[:, None], safe]
    dist = np.where(ok, dist, np.inf)
    best = dist.min(axis=1)
    tied = ok & (dist == best[:, None])
    if rail_prob is not None:
        score = np.where(tied, rail_prob[ys[:, None], safe], -np.inf)
        pick = score.argmax(axis=1)
    else:
        pick = tied.argmax(axis=1)
    chosen = cols[np.arange(cols.shape[0]), pick]
    return np.where(np.isfinite(best), chosen, -1)


def snap_to_segmentation(
    path: EgoPath,
    seg: np.ndarray,
    cfg: SnapConfig = SnapConfig(),
    rail_prob: Optional[np.ndarray] = None,
) -> EgoPath:
    """Move each rail x to the nearest rail-track column within ``w_snap``.

    Rows are visited bottom-up. With ``enforce_monotone_width`` a move is
    rejected when it would make the rail area wider than on the previous
    (lower) row of the path; a move that would cross the rails is always
    rejected. Accepted moves re-center the track point between the rails.
    ``rail_prob`` is an optional ``(H, W)`` rail-class probability grid used
    to break ties between equally near columns.
    """
    if rail_prob is not None and rail_prob.shape != seg.shape:
        raise ValidationError("rail probability grid and mask dims differ")
    is_rail = np.asarray(seg) == RAIL_TRACK
    if not path.triplets:
        return path
    ys = np.array([t.y for t in path.triplets], dtype=np.int64)
    if ys.min() < 0 or ys.max() >= is_rail.shape[0]:
        raise ValidationError("path rows fall outside the segmentation mask")
    snap_l = _nearest_rail_columns(is_rail, ys, np.array([t.x_left for t in path.triplets]), cfg.w_snap, rail_prob)
    snap_r = _nearest_rail_columns(is_rail, ys, np.array([t.x_right for t in path.triplets]), cfg.w_snap, rail_prob)
    out = []
    prev_width: Optional[float] = None
    for t, cl, cr in zip(path.triplets, snap_l.tolist(), snap_r.tolist()):
        xl, xr = t.x_left, t.x_right
        for new_l, new_r in ((cl, None), (None, cr)):
            cand_l = xl if new_l is None or new_l < 0 else float(new_l)
            cand_r = xr if new_r is None or new_r < 0 else float(new_r)
            if (cand_l, cand_r) == (xl, xr) or cand_l > cand_r:
                continue
            if cfg.enforce_monotone_width and prev_width is not None and cand_r - cand_l > prev_width:
                continue
            xl, xr = cand_l, cand_r
        if (xl, xr) != (t.x_left, t.x_right):
            t = replace(t, x_left=xl, x_center=(xl + xr) / 2.0, x_right=xr)
        out.append(t)
        prev_width = t.x_right - t.x_left
    return EgoPath(tuple(out), path.edges)


def fit_polynomial(y: np.ndarray, x: np.ndarray, degree: int) -> tuple[np.ndarray, int]:
    """Least-squares fit of x as a polynomial in y.

    Solved by QR in the centered, scaled variable ``u = (y - mean) / half_range``
    and mapped back to powers of y. The degree drops until the design matrix
    has full column rank. Returns ``(coeffs, degree)``, highest power first.
    """
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if y.size < 2:
        raise ValidationError("need at least 2 points to fit a rail")
    if degree < 1:
        raise ValidationError("degree must be >= 1")
    mid = (y.max() + y.min()) / 2.0
    half = (y.max() - y.min()) / 2.0 or 1.0
    u = (y - mid) / half
    degree = min(degree, y.size - 1)
    while True:
        q, r = np.linalg.qr(np.vander(u, degree + 1, increasing=True))
        diag = np.abs(np.diag(r))
        if degree == 0 or diag.min() > 1e-10 * diag.max():
            break
        degree -= 1
    in_u = Polynomial(np.linalg.solve(r, q.T @ x))
    in_y = in_u(Polynomial([-mid / half, 1.0 / half]))
    coeffs = np.zeros(degree + 1)
    coeffs[: in_y.coef.size] = in_y.coef
    return coeffs[::-1], degree


def fit_rail_polynomials(path: EgoPath, degree: int = 3) -> FittedPath:
    if len(path) < 2:
        raise ValidationError("need at least 2 triplets to fit a rail")
    y = np.array([t.y for t in path.triplets], dtype=np.float64)
    left, dl = fit_polynomial(y, [t.x_left for t in path.triplets], degree)
    right, dr = fit_polynomial(y, [t.x_right for t in path.triplets], degree)
    # both rails share the support rows, so rank reduction lands on one degree
    assert dl == dr
    return FittedPath(
        tuple(float(c) for c in left),
        tuple(float(c) for c in right),
        dl,
        (int(y.min()), int(y.max())),
    )
