"""Shared domain types, validation, and deterministic random streams.

Conventions used throughout the package:

- all matrices are dense float64 numpy arrays, row-major;
- systems are tiny (n <= 10), so every solve goes through direct dense
  factorizations;
- covariance-producing operations re-symmetrize their output, and a matrix
  is accepted as PSD when its minimum eigenvalue is >= -1e-10.
"""

import json
from dataclasses import dataclass, field

import numpy as np

PSD_TOL = 1e-10
SYM_TOL = 1e-10


def _as_matrix(x, name):
    a = np.asarray(x, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"{name} must be a 2-d matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    a = a.copy()
    a.setflags(write=False)
    return a


def _as_vector(x, name):
    v = np.asarray(x, dtype=float).reshape(-1)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has non-finite entries")
    v = v.copy()
    v.setflags(write=False)
    return v


def symmetrize(s):
    """Return (S + S^T)/2; guards against eigenvalue drift over long rollouts."""
    return 0.5 * (s + s.T)


def is_symmetric(s, tol=SYM_TOL):
    scale = max(1.0, float(np.abs(s).max()) if s.size else 1.0)
    return float(np.abs(s - s.T).max()) <= tol * scale


def min_eigenvalue(s):
    return float(np.linalg.eigvalsh(symmetrize(s)).min())


@dataclass(frozen=True)
class BilinearSystem:
    """State transition pair (a, b) and observation family c0, ck[0..p-1].

    The effective observation matrix for an input u is
    ``c0 + sum_k u[k] * ck[k]``; ck must contain one matrix per input channel.
    Shapes and finiteness are enforced at construction; count and numeric
    invariants are reported by :func:`validate_system`.
    """

    a: np.ndarray
    b: np.ndarray
    c0: np.ndarray
    ck: tuple

    def __post_init__(self):
        a = _as_matrix(self.a, "a")
        b = _as_matrix(self.b, "b")
        c0 = _as_matrix(self.c0, "c0")
        if a.shape[0] != a.shape[1]:
            raise ValueError(f"a must be square, got {a.shape}")
        n = a.shape[0]
        if b.shape[0] != n:
            raise ValueError(f"b must have {n} rows, got {b.shape}")
        if c0.shape[1] != n:
            raise ValueError(f"c0 must have {n} columns, got {c0.shape}")
        ck = tuple(_as_matrix(c, f"ck[{i}]") for i, c in enumerate(self.ck))
        for i, c in enumerate(ck):
            if c.shape != c0.shape:
                raise ValueError(f"ck[{i}] shape {c.shape} != c0 shape {c0.shape}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c0", c0)
        object.__setattr__(self, "ck", ck)

    @property
    def n(self):
        return self.a.shape[0]

    @property
    def m(self):
        return self.c0.shape[0]

    @property
    def p(self):
        return self.b.shape[1]


@dataclass(frozen=True)
class NoiseSpec:
    """Process/measurement noise covariances and the initial state prior."""

    sigma_w: np.ndarray
    sigma_z: np.ndarray
    x0_mean: np.ndarray
    sigma_0: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "sigma_w", _as_matrix(self.sigma_w, "sigma_w"))
        object.__setattr__(self, "sigma_z", _as_matrix(self.sigma_z, "sigma_z"))
        object.__setattr__(self, "x0_mean", _as_vector(self.x0_mean, "x0_mean"))
        object.__setattr__(self, "sigma_0", _as_matrix(self.sigma_0, "sigma_0"))


@dataclass(frozen=True)
class CostSpec:
    """Stage cost q/r and terminal cost q_t; all must be symmetric PD."""

    q: np.ndarray
    q_t: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", _as_matrix(self.q, "q"))
        object.__setattr__(self, "q_t", _as_matrix(self.q_t, "q_t"))
        object.__setattr__(self, "r", _as_matrix(self.r, "r"))


@dataclass(frozen=True)
class BeliefState:
    """Predicted state estimate and its error covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = _as_vector(self.mean, "mean")
        cov = _as_matrix(self.cov, "cov")
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"cov shape {cov.shape} does not match mean size {mean.size}")
        if not is_symmetric(cov, SYM_TOL):
            raise ValueError("cov not symmetric")
        if cov.size and min_eigenvalue(cov) < -PSD_TOL:
            raise ValueError("cov not PSD")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations

    def add(self, message):
        self.violations.append(message)


def _check_sym_pd(report, mat, name, *, strict):
    scale = max(1.0, float(np.abs(mat).max()) if mat.size else 1.0)
    if float(np.abs(mat - mat.T).max()) > 1e-12 * scale:
        report.add(f"{name} not symmetric")
        return
    lo = min_eigenvalue(mat)
    if strict and lo <= 0.0:
        report.add(f"{name} not positive definite")
    elif not strict and lo < -PSD_TOL:
        report.add(f"{name} not positive semidefinite")


def validate_system(sys, noise, cost):
    """Cross-check a system/noise/cost triple; returns a ValidationReport.

    Report-style: never raises, callers decide whether to abort.
    """
    report = ValidationReport()
    n, m, p = sys.n, sys.m, sys.p
    if len(sys.ck) != p:
        report.add("ck count mismatch")
    if noise.sigma_w.shape != (n, n):
        report.add(f"sigma_w shape {noise.sigma_w.shape} != ({n}, {n})")
    else:
        _check_sym_pd(report, noise.sigma_w, "sigma_w", strict=False)
    if noise.sigma_z.shape != (m, m):
        report.add(f"sigma_z shape {noise.sigma_z.shape} != ({m}, {m})")
    else:
        _check_sym_pd(report, noise.sigma_z, "sigma_z", strict=True)
    if noise.x0_mean.shape != (n,):
        report.add(f"x0_mean length {noise.x0_mean.size} != {n}")
    if noise.sigma_0.shape != (n, n):
        report.add(f"sigma_0 shape {noise.sigma_0.shape} != ({n}, {n})")
    else:
        _check_sym_pd(report, noise.sigma_0, "sigma_0", strict=True)
    for mat, name, dim in ((cost.q, "q", n), (cost.q_t, "q_t", n), (cost.r, "r", p)):
        if mat.shape != (dim, dim):
            report.add(f"{name} shape {mat.shape} != ({dim}, {dim})")
        else:
            _check_sym_pd(report, mat, name, strict=True)
    return report


def observation_matrix(sys, u):
    """Effective observation matrix c0 + sum_k u[k]*ck[k].

    Summation runs in ascending k for bit-reproducibility.
    """
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.size != sys.p:
        raise ValueError(f"input length {u.size} != p = {sys.p}")
    if len(sys.ck) != sys.p:
        raise ValueError("ck count mismatch")
    c = sys.c0.copy()
    for k in range(sys.p):
        c = c + u[k] * sys.ck[k]
    return c


class RngStream:
    """Counter-based random stream: Philox keyed by (seed, stream_id).

    Gaussian variates come from Box-Muller over the raw bit stream, so a
    given (seed, stream_id) replays the same sequence on every run.  Each
    stream is meant to be owned by a single rollout; substreams carve out
    independent key space (e.g. for initial-estimate draws) without
    disturbing the owner's sequence.
    """

    def __init__(self, seed, stream_id=0):
        seed = int(seed)
        stream_id = int(stream_id)
        if not 0 <= seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if not 0 <= stream_id < 2 ** 64:
            raise ValueError("stream_id must be a 64-bit unsigned integer")
        self.seed = seed
        self.stream_id = stream_id
        self._bits = np.random.Philox(key=seed + (stream_id << 64))

    def substream(self, tag):
        """Independent stream with the same seed and a tagged id."""
        return RngStream(self.seed, self.stream_id ^ ((int(tag) + 1) << 48))

    def standard_normal(self, n):
        """n i.i.d. standard normal draws (Box-Muller pairs, cos/sin interleaved)."""
        n = int(n)
        if n <= 0:
            return np.empty(0)
        pairs = (n + 1) // 2
        raw = self._bits.random_raw(2 * pairs)
        u1 = ((raw[:pairs] >> np.uint64(11)).astype(float) + 1.0) * 2.0 ** -53
        u2 = (raw[pairs:] >> np.uint64(11)).astype(float) * 2.0 ** -53
        radius = np.sqrt(-2.0 * np.log(u1))
        angle = 2.0 * np.pi * u2
        z = np.empty(2 * pairs)
        z[0::2] = radius * np.cos(angle)
        z[1::2] = radius * np.sin(angle)
        return z[:n]


def sample_gaussian(stream, mean, cov):
    """Draw one multivariate normal vector from the stream.

    Uses the lower Cholesky factor when cov is PD and a symmetric
    eigendecomposition otherwise (PSD-singular covariances are fine;
    cov = 0 returns the mean exactly).
    """
    mean = np.asarray(mean, dtype=float).reshape(-1)
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (mean.size, mean.size):
        raise ValueError("cov shape does not match mean")
    try:
        factor = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(symmetrize(cov))
        if vals.min() < -1e-8:
            raise ValueError("not PSD")
        factor = vecs * np.sqrt(np.clip(vals, 0.0, None))
    z = stream.standard_normal(mean.size)
    return mean + factor @ z


def config_from_dict(data):
    """Build (system, noise, cost, horizon, runs, seed) from a config mapping."""
    try:
        sys_d = data["system"]
        noise_d = data["noise"]
        cost_d = data["cost"]
        system = BilinearSystem(a=sys_d["a"], b=sys_d["b"], c0=sys_d["c0"],
                                ck=tuple(sys_d["ck"]))
        noise = NoiseSpec(sigma_w=noise_d["sigma_w"], sigma_z=noise_d["sigma_z"],
                          x0_mean=noise_d["x0_mean"], sigma_0=noise_d["sigma_0"])
        cost = CostSpec(q=cost_d["q"], q_t=cost_d["q_t"], r=cost_d["r"])
        horizon = int(data["horizon"])
        runs = int(data["runs"])
        seed = int(data["seed"])
    except KeyError as exc:
        raise ValueError(f"config missing field {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        raise ValueError(f"config field invalid: {exc}") from exc
    return system, noise, cost, horizon, runs, seed


def load_config(path):
    """Load a JSON experiment config; raises ValueError with line/field context."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: line {exc.lineno} col {exc.colno}: {exc.msg}") from exc
    try:
        return config_from_dict(data)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from exc


def config_to_dict(system, noise, cost, horizon, runs, seed):
    return {
        "system": {
            "a": system.a.tolist(),
            "b": system.b.tolist(),
            "c0": system.c0.tolist(),
            "ck": [c.tolist() for c in system.ck],
        },
        "noise": {
            "sigma_w": noise.sigma_w.tolist(),
            "sigma_z": noise.sigma_z.tolist(),
            "x0_mean": noise.x0_mean.tolist(),
            "sigma_0": noise.sigma_0.tolist(),
        },
        "cost": {"q": cost.q.tolist(), "q_t": cost.q_t.tolist(), "r": cost.r.tolist()},
        "horizon": int(horizon),
        "runs": int(runs),
        "seed": int(seed),
    }
