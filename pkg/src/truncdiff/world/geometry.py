"""Polyline helpers shared by the scene generator and the scorer."""

from __future__ import annotations

import numpy as np


def segment_lengths(poly: np.ndarray) -> np.ndarray:
    return np.linalg.norm(np.diff(poly, axis=0), axis=1)


def arc_lengths(poly: np.ndarray) -> np.ndarray:
    return np.concatenate([[0.0], np.cumsum(segment_lengths(poly))])


def project(points: np.ndarray, poly: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Closest-point projection of ``points`` (P, 2) onto a polyline.

    Returns (distance, arc-length coordinate), each of shape (P,). On ties
    the earliest segment wins.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    a = poly[:-1]
    seg = poly[1:] - a
    seg_len2 = (seg**2).sum(axis=1)
    rel = points[:, None, :] - a[None, :, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        u = (rel * seg[None]).sum(axis=2) / seg_len2[None]
    u = np.where(seg_len2[None] > 0, np.clip(u, 0.0, 1.0), 0.0)
    closest = a[None] + u[..., None] * seg[None]
    d = np.linalg.norm(points[:, None, :] - closest, axis=2)
    j = d.argmin(axis=1)
    rows = np.arange(len(points))
    s = arc_lengths(poly)[j] + u[rows, j] * np.sqrt(seg_len2[j])
    return d[rows, j], s


def resample(poly: np.ndarray, n: int) -> np.ndarray:
    """``n`` points uniformly spaced by arc length, endpoints included."""
    return points_at(poly, np.linspace(0.0, arc_lengths(poly)[-1], n))


def points_at(poly: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Points at arc-length coordinates ``s``, extrapolating past the end."""
    cum = arc_lengths(poly)
    s = np.asarray(s, dtype=np.float64)
    j = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(poly) - 2)
    seg = poly[j + 1] - poly[j]
    seg_len = cum[j + 1] - cum[j]
    u = (s - cum[j]) / seg_len
    return poly[j] + u[:, None] * seg
