"""Kalman filtering with an input-dependent observation matrix.

The gain here carries a leading minus sign and the mean update subtracts
gain times innovation; the covariance recursion is the matching
``A S A^T + L C S A^T + sigma_w`` form, symmetrized after evaluation.
An information-form covariance update (valid for strictly PD covariances)
is provided as an independent route for cross-checks, along with a dense
grid Bayes oracle for scalar systems.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .core import BeliefState, min_eigenvalue, observation_matrix, symmetrize

COND_LIMIT = 1e14


@dataclass(frozen=True)
class KalmanStep:
    """One filter step: gain, innovation, and the next predicted belief."""

    gain: np.ndarray
    innovation: np.ndarray
    next_belief: BeliefState


def _spd_solve(mat, rhs, context):
    vals = np.linalg.eigvalsh(symmetrize(mat))
    if vals.min() <= 0.0 or vals.max() / vals.min() > COND_LIMIT:
        raise ValueError(context)
    return cho_solve(cho_factor(symmetrize(mat), lower=True), rhs)


def kalman_gain(belief, sys, noise, u):
    """Input-dependent gain -A S C(u)^T (C(u) S C(u)^T + sigma_z)^(-1)."""
    c = observation_matrix(sys, u)
    s = belief.cov
    innov_cov = c @ s @ c.T + noise.sigma_z
    # solve for (innov_cov)^(-1) C S A^T, then transpose; keeps the solve SPD
    rhs = c @ s @ sys.a.T
    return -_spd_solve(innov_cov, rhs, "innovation covariance singular").T


def kf_step(belief, sys, noise, u, y):
    """Advance the predicted belief through one input/output pair."""
    u = np.asarray(u, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    c = observation_matrix(sys, u)
    gain = kalman_gain(belief, sys, noise, u)
    innovation = y - c @ belief.mean
    mean_next = sys.a @ belief.mean + sys.b @ u - gain @ innovation
    cov_next = (sys.a @ belief.cov @ sys.a.T
                + gain @ c @ belief.cov @ sys.a.T
                + noise.sigma_w)
    cov_next = symmetrize(cov_next)
    return KalmanStep(gain=gain, innovation=innovation,
                      next_belief=BeliefState(mean=mean_next, cov=cov_next))


def cov_update_information_form(cov, sys, noise, u):
    """Covariance propagation via A (S^-1 + C^T sigma_z^-1 C)^-1 A^T + sigma_w.

    Requires a strictly PD input covariance; used as a cross-check of
    kf_step and inside the stage cost-to-go evaluation.
    """
    cov = symmetrize(np.asarray(cov, dtype=float))
    if min_eigenvalue(cov) <= 0.0:
        raise ValueError("information form requires PD covariance")
    c = observation_matrix(sys, u)
    n = sys.n
    cov_inv = cho_solve(cho_factor(cov, lower=True), np.eye(n))
    cz = cho_solve(cho_factor(symmetrize(noise.sigma_z), lower=True), c)
    info = cov_inv + c.T @ cz
    inner = cho_solve(cho_factor(symmetrize(info), lower=True), np.eye(n))
    return symmetrize(sys.a @ inner @ sys.a.T + noise.sigma_w)


def grid_bayes_oracle(sys, noise, inputs, outputs, grid=None):
    """Posterior moments of the latest predicted state from a dense grid.

    Scalar systems only.  Pushes a discretized density through the
    dynamics (convolution against the process-noise kernel) and the
    Gaussian output likelihoods, and returns the mean/variance of the
    resulting predicted posterior.  With no observations, returns the
    prior moments.  Raises "grid truncation" if posterior mass touches
    the grid boundary.
    """
    if not (sys.n == 1 and sys.m == 1 and sys.p == 1):
        raise ValueError("grid oracle requires a scalar system")
    a = float(sys.a[0, 0])
    b = float(sys.b[0, 0])
    sw = float(noise.sigma_w[0, 0])
    sz = float(noise.sigma_z[0, 0])
    mu0 = float(noise.x0_mean[0])
    v0 = float(noise.sigma_0[0, 0])
    inputs = [float(np.asarray(u).reshape(-1)[0]) for u in inputs]
    outputs = [float(np.asarray(y).reshape(-1)[0]) for y in outputs]
    if len(inputs) != len(outputs):
        raise ValueError("inputs and outputs must have equal length")
    if not inputs:
        return mu0, v0
    if sw <= 0.0:
        raise ValueError("grid oracle requires positive process noise")

    if grid is None:
        # envelope of the open-loop predictive moments, +/- 8 sigma
        mu, var = mu0, v0
        lo = mu - 8.0 * np.sqrt(var)
        hi = mu + 8.0 * np.sqrt(var)
        for u in inputs:
            mu = a * mu + b * u
            var = a * a * var + sw
            lo = min(lo, mu - 8.0 * np.sqrt(var))
            hi = max(hi, mu + 8.0 * np.sqrt(var))
        points = 4001
    else:
        lo, hi, points = float(grid[0]), float(grid[1]), int(grid[2])
    xs = np.linspace(lo, hi, points)
    dx = xs[1] - xs[0]

    density = np.exp(-0.5 * (xs - mu0) ** 2 / v0)
    density /= density.sum() * dx

    def check_boundary(rho):
        if (rho[0] + rho[-1]) * dx > 1e-6:
            raise ValueError("grid truncation")

    check_boundary(density)
    shift = xs[:, None] - a * xs[None, :]
    for u, y in zip(inputs, outputs):
        c = float(observation_matrix(sys, [u])[0, 0])
        lik = np.exp(-0.5 * (y - c * xs) ** 2 / sz)
        density = density * lik
        density /= density.sum() * dx
        check_boundary(density)
        kernel = np.exp(-0.5 * (shift - b * u) ** 2 / sw)
        density = kernel @ density * dx / np.sqrt(2.0 * np.pi * sw)
        density /= density.sum() * dx
        check_boundary(density)
    mean = float((xs * density).sum() * dx)
    var = float(((xs - mean) ** 2 * density).sum() * dx)
    return mean, var
