"""Signal reconstruction from directional samples.

Two estimators are provided. `shls_fit` is the classic penalized
least-squares fit of basis coefficients with a Laplace-Beltrami roughness
penalty (smoothing level chosen by generalized cross validation). For
sparse samples, `conditional_fit` shrinks toward a Gaussian-process prior:
it computes the conditional mean of the leading prior eigen-coefficients
given the observed values and maps it back to the full coefficient vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import DegeneracyError, ValidationError
from .prior import VoxelPrior
from .sphere import ShBasis, as_unit_vectors, laplace_beltrami_penalty

DEFAULT_GCV_GRID = np.logspace(-7.0, -1.0, 20)


@dataclass
class FitResult:
    """Fitted coefficient vector plus estimator-specific extras."""

    coefficients: np.ndarray
    scores: np.ndarray | None = None  # conditional mean of the latent coefficients
    lambda_used: float | None = None  # smoothing level (penalized fits only)


def _check_observations(points, values):
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        pts = pts.reshape(0, 3)
    pts, _ = as_unit_vectors(np.atleast_2d(pts), "observation points")
    vals = np.asarray(values, dtype=float).ravel()
    if vals.shape[0] != pts.shape[0]:
        raise ValidationError("number of values must match number of points")
    return pts, vals


def shls_fit(points, values, basis: ShBasis, smoothing: float = 0.0) -> FitResult:
    """Penalized least-squares coefficients from observed directional samples.

    Solves (Phi' Phi + smoothing * R) c = Phi' s exactly, with R the
    diagonal Laplace-Beltrami penalty. With smoothing = 0 at least J
    observations are required and the design must have full column rank.
    """
    pts, vals = _check_observations(points, values)
    if smoothing < 0.0:
        raise ValidationError("smoothing must be non-negative")
    m = pts.shape[0]
    if m < 1:
        raise ValidationError("need at least one observation")
    if smoothing == 0.0 and m < basis.dimension:
        raise ValidationError(
            f"unpenalized fit needs at least {basis.dimension} observations, got {m}"
        )
    phi = basis.evaluate(pts)
    normal = phi.T @ phi + smoothing * laplace_beltrami_penalty(basis)
    try:
        factor = linalg.cho_factor(normal, check_finite=False)
    except linalg.LinAlgError as exc:
        raise DegeneracyError(f"singular normal equations (smoothing={smoothing:g})") from exc
    coeffs = linalg.cho_solve(factor, phi.T @ vals, check_finite=False)
    return FitResult(coefficients=coeffs, lambda_used=float(smoothing))


def gcv_select(points, values, basis: ShBasis, grid=None):
    """Pick the smoothing level minimizing generalized cross validation.

    GCV(lambda) = M * RSS(lambda) / (M - trace H(lambda))^2 over the given
    grid; grid values whose effective dof trace reaches M are skipped; ties
    resolve toward the larger lambda.

    Returns
    -------
    (lambda_star, FitResult)
    """
    pts, vals = _check_observations(points, values)
    lambdas = np.sort(np.asarray(DEFAULT_GCV_GRID if grid is None else grid, dtype=float))
    if lambdas.size < 1 or np.any(lambdas <= 0.0):
        raise ValidationError("GCV grid must be non-empty with positive entries")
    m = pts.shape[0]
    phi = basis.evaluate(pts)
    gram = phi.T @ phi
    penalty = laplace_beltrami_penalty(basis)
    best = None
    for lam in lambdas:
        normal = gram + lam * penalty
        try:
            factor = linalg.cho_factor(normal, check_finite=False)
        except linalg.LinAlgError:
            continue
        coeffs = linalg.cho_solve(factor, phi.T @ vals, check_finite=False)
        rss = float(np.sum((vals - phi @ coeffs) ** 2))
        trace_h = float(np.trace(linalg.cho_solve(factor, gram, check_finite=False)))
        dof_gap = m - trace_h
        if dof_gap <= 1e-9 * m:
            continue
        score = m * rss / dof_gap**2
        if best is None or score <= best[0]:
            best = (score, float(lam), coeffs)
    if best is None:
        raise DegeneracyError("GCV degenerate: every grid value exhausts the degrees of freedom")
    _, lam_star, coeffs = best
    return lam_star, FitResult(coefficients=coeffs, lambda_used=lam_star)


def conditional_scores(points, values, prior: VoxelPrior, basis: ShBasis) -> np.ndarray:
    """Conditional mean of the prior's latent eigen-coefficients given data.

    With zero observations this is the zero vector (the prior mean carries
    the whole estimate). The observation Gram matrix is inverted through a
    Cholesky factorization; it is positive definite whenever the prior
    noise variance is positive.
    """
    pts, vals = _check_observations(points, values)
    if basis.dimension != prior.dimension:
        raise ValidationError("prior dimension does not match the basis")
    k = prior.rank
    if pts.shape[0] == 0:
        return np.zeros(k)
    phi = basis.evaluate(pts)
    psi = phi @ prior.eigenvectors  # (M, K) eigenfunction values
    lam = prior.eigenvalues
    gram = (psi * lam) @ psi.T + prior.noise_variance * np.eye(pts.shape[0])
    residual = vals - phi @ prior.mean
    try:
        factor = linalg.cho_factor(gram, check_finite=False)
    except linalg.LinAlgError as exc:  # unreachable for positive noise variance
        raise DegeneracyError("observation Gram matrix is not positive definite") from exc
    return lam * (psi.T @ linalg.cho_solve(factor, residual, check_finite=False))


def conditional_fit(points, values, prior: VoxelPrior, basis: ShBasis) -> FitResult:
    """Posterior-mean coefficients: prior mean plus the latent update.

    The estimate always lies in the affine subspace spanned by the prior's
    leading eigenvectors around its mean.
    """
    scores = conditional_scores(points, values, prior, basis)
    coeffs = prior.mean + prior.eigenvectors @ scores
    return FitResult(coefficients=coeffs, scores=scores)
