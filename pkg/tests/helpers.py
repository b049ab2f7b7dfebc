"""Independent reference implementations used as test oracles.

Everything here is deliberately coded on a different route from the
package (textbook predict/update filter with explicit inverses,
update-then-predict ordering) so agreement is a real cross-check.
"""

import numpy as np


def standard_riccati_gains(a, b, q, q_t, r, horizon):
    """Finite-horizon LQR feedback gains via a plain backward loop."""
    ks = [None] * (horizon + 1)
    gains = [None] * horizon
    ks[horizon] = np.asarray(q_t, dtype=float)
    for t in reversed(range(horizon)):
        kn = ks[t + 1]
        inner = np.linalg.inv(b.T @ kn @ b + r)
        gains[t] = -inner @ (b.T @ kn @ a)
        ks[t] = a.T @ kn @ a - a.T @ kn @ b @ inner @ b.T @ kn @ a + q
    return ks, gains


def standard_kf_update_predict(mean, cov, a, b, c, sigma_w, sigma_z, u, y):
    """Textbook filter step: measurement update, then time update."""
    innov = y - c @ mean
    s = c @ cov @ c.T + sigma_z
    gain = cov @ c.T @ np.linalg.inv(s)
    mean_f = mean + gain @ innov
    cov_f = (np.eye(cov.shape[0]) - gain @ c) @ cov
    mean_next = a @ mean_f + b @ u
    cov_next = a @ cov_f @ a.T + sigma_w
    return mean_next, cov_next


def standard_lqg_rollout(a, b, c, q, q_t, r, sigma_w, sigma_z, x0_mean,
                         sigma_0, horizon, stream):
    """Closed-loop LQG rollout with a time-invariant observation matrix.

    Consumes stream draws in the same order as the package rollout
    (initial state, then per step process noise then measurement noise)
    so seed-matched comparisons see identical noise realizations.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    n = a.shape[0]
    m = c.shape[0]
    _, gains = standard_riccati_gains(a, b, q, q_t, r, horizon)

    chol0 = np.linalg.cholesky(sigma_0)
    x = x0_mean + chol0 @ stream.standard_normal(n)
    mean = np.asarray(x0_mean, dtype=float).copy()
    cov = np.asarray(sigma_0, dtype=float).copy()
    chol_w = np.linalg.cholesky(sigma_w)
    chol_z = np.linalg.cholesky(sigma_z)

    states = [x.copy()]
    inputs = []
    outputs = []
    means = [mean.copy()]
    covs = [cov.copy()]
    for t in range(horizon):
        u = gains[t] @ mean
        w = chol_w @ stream.standard_normal(n)
        z = chol_z @ stream.standard_normal(m)
        y = c @ x + z
        inputs.append(u.copy())
        outputs.append(y.copy())
        mean, cov = standard_kf_update_predict(mean, cov, a, b, c, sigma_w,
                                               sigma_z, u, y)
        x = a @ x + b @ u + w
        states.append(x.copy())
        means.append(mean.copy())
        covs.append(cov.copy())
    return {
        "states": np.array(states),
        "inputs": np.array(inputs),
        "outputs": np.array(outputs),
        "means": np.array(means),
        "covs": np.array(covs),
    }


def random_spd(rng, n, scale=1.0):
    m = rng.standard_normal((n, n))
    return scale * (m @ m.T + n * np.eye(n))


def grid_local_minima(us, values):
    """Indices of strict interior local minima of a sampled function."""
    interior = (values[1:-1] < values[:-2]) & (values[1:-1] < values[2:])
    return np.where(interior)[0] + 1
