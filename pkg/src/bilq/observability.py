"""Input-dependent observability diagnostics.

The observability test sums n terms (A^k)^T C(u_k)^T C(u_k) A^k along an
input sequence; a time-invariant sufficient condition projects the static
observation matrix away from the span of the input-dependent ones and
checks observability of that projection.  A forward covariance probe gives
the matching empirical boundedness check.
"""

from dataclasses import dataclass

import numpy as np

from .core import BeliefState, observation_matrix, symmetrize
from .kalman import kf_step

DEFAULT_DELTA = 1e-8
GS_DROP_TOL = 1e-10


@dataclass(frozen=True)
class GramianReport:
    gramian: np.ndarray
    min_eigenvalue: float
    delta: float
    uniformly_observable: bool


def gramian(sys, inputs, delta=DEFAULT_DELTA):
    """Observability test over the first n inputs of the supplied window."""
    n = sys.n
    inputs = list(inputs)
    if len(inputs) < n:
        raise ValueError(f"need at least {n} inputs, got {len(inputs)}")
    total = np.zeros((n, n))
    a_pow = np.eye(n)
    for k in range(n):
        c = observation_matrix(sys, inputs[k])
        ca = c @ a_pow
        total += ca.T @ ca
        a_pow = sys.a @ a_pow
    total = symmetrize(total)
    low = float(np.linalg.eigvalsh(total).min())
    return GramianReport(gramian=total, min_eigenvalue=low, delta=float(delta),
                         uniformly_observable=low > float(delta))


def _frobenius_basis(matrices):
    """Frobenius-orthonormal basis of span{matrices} via modified Gram-Schmidt."""
    basis = []
    norms = [float(np.linalg.norm(m)) for m in matrices]
    scale = max(norms, default=0.0)
    if scale == 0.0:
        return basis
    for mat in matrices:
        residual = mat.astype(float).copy()
        for e in basis:
            residual -= float(np.sum(e * residual)) * e
        norm = float(np.linalg.norm(residual))
        if norm > GS_DROP_TOL * scale:
            basis.append(residual / norm)
    return basis


def orthogonal_complement_c0(sys):
    """Project the static observation matrix away from span{ck} (Frobenius)."""
    basis = _frobenius_basis(sys.ck)
    result = sys.c0.astype(float).copy()
    for e in basis:
        result -= float(np.sum(e * result)) * e
    return result


def gramian_decomposition(sys, inputs):
    """Split the observability sum into static, cross, and input parts.

    Returns (o1, o2, o3) where o1 uses only the projected static matrix,
    o3 only the remainder c(u) - c0_perp, and o2 the cross terms; the
    three add back to the full test matrix.
    """
    n = sys.n
    inputs = list(inputs)
    if len(inputs) < n:
        raise ValueError(f"need at least {n} inputs, got {len(inputs)}")
    c0_perp = orthogonal_complement_c0(sys)
    o1 = np.zeros((n, n))
    o2 = np.zeros((n, n))
    o3 = np.zeros((n, n))
    a_pow = np.eye(n)
    for k in range(n):
        cbar = observation_matrix(sys, inputs[k]) - c0_perp
        t1 = c0_perp @ a_pow
        t3 = cbar @ a_pow
        o1 += t1.T @ t1
        o2 += t1.T @ t3 + t3.T @ t1
        o3 += t3.T @ t3
        a_pow = sys.a @ a_pow
    return symmetrize(o1), symmetrize(o2), symmetrize(o3)


@dataclass(frozen=True)
class Prop1Report:
    ok: bool
    min_eigenvalue: float
    c0_perp: np.ndarray
    norm_o1: float = float("nan")
    norm_o2: float = float("nan")
    norm_o3: float = float("nan")


def check_proposition1(sys, inputs=None, delta=DEFAULT_DELTA):
    """Sufficient condition for bounded filter covariance under any inputs.

    True iff the pair (a, c0_perp) is observable: the time-invariant test
    matrix built from c0_perp alone has min eigenvalue above delta.  When
    an input sequence is supplied, the report carries the spectral norms
    of the three-part decomposition along it.
    """
    c0_perp = orthogonal_complement_c0(sys)
    n = sys.n
    o1 = np.zeros((n, n))
    a_pow = np.eye(n)
    for _ in range(n):
        t = c0_perp @ a_pow
        o1 += t.T @ t
        a_pow = sys.a @ a_pow
    low = float(np.linalg.eigvalsh(symmetrize(o1)).min())
    ok = low > delta
    if inputs is None:
        return Prop1Report(ok=ok, min_eigenvalue=low, c0_perp=c0_perp)
    d1, d2, d3 = gramian_decomposition(sys, inputs)
    return Prop1Report(ok=ok, min_eigenvalue=low, c0_perp=c0_perp,
                       norm_o1=float(np.linalg.norm(d1, 2)),
                       norm_o2=float(np.linalg.norm(d2, 2)),
                       norm_o3=float(np.linalg.norm(d3, 2)))


@dataclass(frozen=True)
class BoundednessReport:
    max_norm: float
    exceeded: bool
    threshold: float
    norms: np.ndarray
    traces: np.ndarray
    inputs: np.ndarray


def covariance_boundedness_probe(sys, noise, input_policy, horizon, threshold):
    """Roll the covariance recursion forward and watch its spectral norm.

    input_policy(t, belief) -> input vector; the probe feeds the filter
    its own predicted outputs (zero innovation), so belief-feedback
    policies close the loop deterministically.  Empirical only: a finite
    horizon cannot prove boundedness.
    """
    horizon = int(horizon)
    if horizon < sys.n:
        raise ValueError("horizon must be at least n")
    belief = BeliefState(mean=noise.x0_mean, cov=noise.sigma_0)
    norms = np.empty(horizon + 1)
    traces = np.empty(horizon + 1)
    inputs = np.empty((horizon, sys.p))
    norms[0] = np.linalg.norm(belief.cov, 2)
    traces[0] = np.trace(belief.cov)
    for t in range(horizon):
        u = np.asarray(input_policy(t, belief), dtype=float).reshape(-1)
        inputs[t] = u
        y_predicted = observation_matrix(sys, u) @ belief.mean
        belief = kf_step(belief, sys, noise, u, y_predicted).next_belief
        norms[t + 1] = np.linalg.norm(belief.cov, 2)
        traces[t + 1] = np.trace(belief.cov)
    max_norm = float(norms.max())
    return BoundednessReport(max_norm=max_norm, exceeded=max_norm > threshold,
                             threshold=float(threshold), norms=norms,
                             traces=traces, inputs=inputs)
