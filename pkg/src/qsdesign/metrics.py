"""Evaluation metrics: integrated squared error, peak detection, peak-count
mismatch rate and angular error between dominant peak pairs.

Integrated squared error is computed exactly in coefficient space (the
basis is orthonormal, so Parseval applies). Peaks are strict local maxima
over a spiral detection grid whose adjacency folds antipodes together,
refined by a few tangent-plane ascent steps on the harmonic expansion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ValidationError
from .sphere import ShBasis

DEFAULT_PEAK_GRID_SIZE = 4096
DEFAULT_RELATIVE_THRESHOLD = 0.3
NEIGHBOR_COUNT = 8
REFINE_STEPS = 10
REFINE_STEP_DEGREES = 0.5
PEAK_MERGE_DEGREES = 5.0

_DETECTION_CACHE: dict = {}


def integrated_squared_error(coeffs_a, coeffs_b) -> float:
    """Exact integral of the squared difference of two expansions."""
    a = np.asarray(coeffs_a, dtype=float)
    b = np.asarray(coeffs_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValidationError("coefficient vectors must share one basis")
    diff = a - b
    return float(diff @ diff)


@dataclass
class PeakSet:
    """Detected peaks sorted by descending value, one axis per antipodal pair."""

    directions: np.ndarray  # (P, 3), hemisphere representatives
    values: np.ndarray  # (P,), strictly positive
    grid_size: int

    def __len__(self):
        return self.directions.shape[0]


def _detection_grid(size: int):
    # Hemisphere spiral with antipodally folded adjacency: even expansions
    # are fully determined by one hemisphere, and keeping exact antipodal
    # twins out of the grid lets strict local maxima survive.
    if size not in _DETECTION_CACHE:
        i = np.arange(size)
        z = 1.0 - (i + 0.5) / size
        r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        phi = i * np.pi * (3.0 - np.sqrt(5.0))
        dirs = np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
        neighbors = np.empty((size, NEIGHBOR_COUNT), dtype=np.int64)
        chunk = 512
        for start in range(0, size, chunk):
            stop = min(start + chunk, size)
            prox = np.abs(dirs[start:stop] @ dirs.T)  # folded angular proximity
            prox[np.arange(stop - start), np.arange(start, stop)] = -np.inf
            neighbors[start:stop] = np.argpartition(prox, -NEIGHBOR_COUNT, axis=1)[
                :, -NEIGHBOR_COUNT:
            ]
        _DETECTION_CACHE[size] = (dirs, neighbors)
    return _DETECTION_CACHE[size]


_BASIS_MATRIX_CACHE: dict = {}


def _detection_basis_matrix(size: int, basis: ShBasis) -> np.ndarray:
    key = (size, basis.max_degree)
    if key not in _BASIS_MATRIX_CACHE:
        dirs, _ = _detection_grid(size)
        _BASIS_MATRIX_CACHE[key] = basis.evaluate(dirs)
    return _BASIS_MATRIX_CACHE[key]


def _cross3(a, b):
    return np.array(
        [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
    )


def _refine_peak(coeffs, basis: ShBasis, start, value, step_degrees: float, steps: int):
    point = np.asarray(start, dtype=float).copy()
    step = np.radians(step_degrees)
    fd = 1e-5
    for _ in range(steps):
        helper = np.array([1.0, 0.0, 0.0]) if abs(point[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        e1 = _cross3(point, helper)
        e1 /= np.linalg.norm(e1)
        e2 = _cross3(point, e1)
        probes = np.vstack(
            [point + fd * e1, point - fd * e1, point + fd * e2, point - fd * e2]
        )
        probes /= np.linalg.norm(probes, axis=1, keepdims=True)
        vals = basis.evaluate(probes) @ coeffs
        grad = (vals[0] - vals[1]) / (2 * fd) * e1 + (vals[2] - vals[3]) / (2 * fd) * e2
        norm = np.linalg.norm(grad)
        if norm < 1e-14:
            break
        candidate = point + step * (grad / norm)
        candidate /= np.linalg.norm(candidate)
        cand_value = float(basis.evaluate(candidate) @ coeffs)
        if cand_value > value:
            point, value = candidate, cand_value
        else:
            step *= 0.5
    if point[2] < 0.0 or (point[2] == 0.0 and point[0] < 0.0):
        point = -point
    return point, value


def find_peaks(
    coeffs,
    basis: ShBasis,
    grid_size: int = DEFAULT_PEAK_GRID_SIZE,
    relative_threshold: float = DEFAULT_RELATIVE_THRESHOLD,
    merge_degrees: float = PEAK_MERGE_DEGREES,
    refine_steps: int = REFINE_STEPS,
    refine_step_degrees: float = REFINE_STEP_DEGREES,
) -> PeakSet:
    """Local maxima of a harmonic expansion, folded over antipodes.

    Grid points strictly greater than their 8 angularly-nearest neighbors
    (antipodal proximity) seed tangent-ascent refinement; peaks below
    `relative_threshold` times the global maximum or with non-positive
    values are discarded, and refined peaks closer than `merge_degrees`
    keep only the higher one.
    """
    if grid_size < 1:
        raise ValidationError("detection grid must be non-empty")
    if not 0.0 <= relative_threshold <= 1.0:
        raise ValidationError("relative_threshold must lie in [0, 1]")
    coeffs = basis.check_coefficients(coeffs)
    dirs, neighbors = _detection_grid(grid_size)
    values = _detection_basis_matrix(grid_size, basis) @ coeffs
    mask = _kernels.local_maxima(values, neighbors)
    order = np.argsort(values[mask])[::-1]
    seeds = dirs[mask][order]
    seed_values = values[mask][order]
    top = float(values.max())
    cutoff = relative_threshold * top
    kept_dirs, kept_vals = [], []
    cos_merge = np.cos(np.radians(merge_degrees))
    for seed, seed_value in zip(seeds, seed_values):
        # grid maxima sit within ~2 degrees of the refined peak, so ascent
        # gains only a few percent; seeds far below threshold cannot recover
        if seed_value <= 0.0 or (cutoff > 0.0 and seed_value < 0.5 * cutoff):
            continue
        direction, value = _refine_peak(
            coeffs, basis, seed, float(seed_value), refine_step_degrees, refine_steps
        )
        if value <= 0.0 or value < cutoff:
            continue
        if any(abs(direction @ d) > cos_merge for d in kept_dirs):
            continue
        kept_dirs.append(direction)
        kept_vals.append(value)
    if kept_dirs:
        vals = np.asarray(kept_vals)
        order = np.argsort(vals)[::-1]
        return PeakSet(np.asarray(kept_dirs)[order], vals[order], grid_size)
    return PeakSet(np.zeros((0, 3)), np.zeros(0), grid_size)


def peak_angle_degrees(peaks: PeakSet) -> float:
    """Angle between the two highest peaks, folded to [0, 90]; 0 for < 2 peaks."""
    if len(peaks) < 2:
        return 0.0
    cosang = np.clip(abs(float(peaks.directions[0] @ peaks.directions[1])), 0.0, 1.0)
    return float(np.degrees(np.arccos(cosang)))


def false_peak_fraction(estimates, truths) -> float:
    """Share of items whose detected peak count differs from the truth's."""
    if len(estimates) != len(truths):
        raise ValidationError("estimate and truth lists must have equal length")
    if not truths:
        raise ValidationError("need at least one item")
    wrong = sum(1 for e, t in zip(estimates, truths) if len(e) != len(t))
    return wrong / len(truths)


def angular_error(estimate: PeakSet, truth: PeakSet) -> float:
    """Absolute difference of the dominant-pair angles, in degrees.

    The angle of a peak set is 0 when it has fewer than two peaks (an empty
    estimate therefore counts as single-fiber); the truth must be non-empty.
    """
    if len(truth) < 1:
        raise ValidationError("truth peak set must be non-empty")
    return abs(peak_angle_degrees(estimate) - peak_angle_degrees(truth))
