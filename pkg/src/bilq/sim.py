"""Closed-loop rollouts and Monte Carlo aggregation.

Rollout protocol per step t: the action u_t is computed from information
available before the output y_t exists (the controller never reads y_t or,
except in the perfect-observation mode, x_t); then the process and
measurement noises are drawn in a fixed order (w_t, then z_t), the output
is emitted, the filter advances, and the state transitions.  The fixed
draw order means runs with the same (seed, run index) share noise
realizations across controller and observation variants, which pairs the
comparisons.
"""

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .core import (BeliefState, RngStream, observation_matrix, sample_gaussian)
from .kalman import kf_step
from .control import (bellman_minimize_Tm2, bellman_params_at_stage, lqg_policy,
                      riccati_recursion, scalar_critical_points,
                      scalar_gap_params, scalar_optimal_controller_T2,
                      select_rollout_action)

POLICY_KINDS = ("perfect_state_lqr", "separation_lqg", "scalar_nonlinear_t2",
                "numeric_bellman")
INIT_ESTIMATES = ("prior_mean", "sampled_from_prior")
METRICS = ("stage_cost", "cum_cost", "u_norm", "est_err", "cov_trace")

INIT_ESTIMATE_SUBSTREAM = 0


@dataclass(frozen=True)
class PolicyConfig:
    kind: str
    init_estimate: str = "prior_mean"

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.init_estimate not in INIT_ESTIMATES:
            raise ValueError(f"unknown init_estimate {self.init_estimate!r}")


@dataclass(frozen=True)
class TrajectoryRecord:
    """One rollout: states x_0..x_T, inputs u_0..u_{T-1}, outputs y_0..y_{T-1},
    predicted estimates/covariances, and realized costs."""

    states: np.ndarray
    inputs: np.ndarray
    outputs: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    stage_costs: np.ndarray
    terminal_cost: float

    @property
    def horizon(self):
        return self.inputs.shape[0]

    def metric(self, name):
        """Per-step series for t = 0..T; the t = T slot of stage_cost and
        cum_cost carries the terminal cost (u_norm is 0 there)."""
        T = self.horizon
        if name == "stage_cost":
            return np.concatenate([self.stage_costs, [self.terminal_cost]])
        if name == "cum_cost":
            running = np.cumsum(self.stage_costs)
            return np.concatenate([running, [running[-1] + self.terminal_cost]])
        if name == "u_norm":
            return np.concatenate([np.linalg.norm(self.inputs, axis=1), [0.0]])
        if name == "est_err":
            return np.linalg.norm(self.states - self.means, axis=1)
        if name == "cov_trace":
            return np.trace(self.covs, axis1=1, axis2=2)
        raise ValueError(f"unknown metric {name!r}")


def _validate_policy(policy, sys, horizon):
    if policy.kind == "scalar_nonlinear_t2":
        if not (sys.n == 1 and sys.m == 1 and sys.p == 1):
            raise ValueError("scalar_nonlinear_t2 requires a scalar system")
        if horizon != 2:
            raise ValueError("scalar_nonlinear_t2 requires horizon 2")
    if policy.kind == "numeric_bellman" and sys.p > 3:
        raise ValueError("numeric_bellman requires p <= 3")


def rollout(sys, noise, cost, policy, horizon, stream):
    """Simulate one closed-loop trajectory; deterministic given the stream."""
    T = int(horizon)
    if T < 1:
        raise ValueError("horizon must be >= 1")
    _validate_policy(policy, sys, T)
    tables = riccati_recursion(cost, sys, T)
    n, m, p = sys.n, sys.m, sys.p

    x = sample_gaussian(stream, noise.x0_mean, noise.sigma_0)
    belief = None
    if policy.kind != "perfect_state_lqr":
        if policy.init_estimate == "sampled_from_prior":
            init_stream = stream.substream(INIT_ESTIMATE_SUBSTREAM)
            mean0 = sample_gaussian(init_stream, noise.x0_mean, noise.sigma_0)
        else:
            mean0 = noise.x0_mean
        belief = BeliefState(mean=mean0, cov=noise.sigma_0)

    t2_controller = None

    def action(t):
        nonlocal t2_controller
        if policy.kind == "perfect_state_lqr":
            return lqg_policy(tables, t, x)
        if policy.kind == "separation_lqg":
            return lqg_policy(tables, t, belief.mean)
        if policy.kind == "scalar_nonlinear_t2":
            if t == 0:
                params = scalar_gap_params(sys, noise, cost,
                                           prior_var=belief.cov[0, 0],
                                           x_hat0=belief.mean[0])
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    t2_controller = scalar_optimal_controller_T2(params)
                return np.array([select_rollout_action(t2_controller.u0_candidates)])
            return np.array([t2_controller.u1_rule(belief.mean[0])])
        # numeric_bellman: estimation-aware stage objective until the last
        # stage, where the certainty-equivalent action is exact
        if t == T - 1:
            return lqg_policy(tables, t, belief.mean)
        bp = bellman_params_at_stage(sys, noise, cost, tables, t, belief)
        u_star, _ = bellman_minimize_Tm2(bp)
        return u_star

    states = np.empty((T + 1, n))
    inputs = np.empty((T, p))
    outputs = np.empty((T, m))
    means = np.empty((T + 1, n))
    covs = np.empty((T + 1, n, n))
    stage_costs = np.empty(T)
    zero_n = np.zeros(n)
    zero_m = np.zeros(m)

    for t in range(T):
        states[t] = x
        if belief is None:
            means[t] = x
            covs[t] = 0.0
        else:
            means[t] = belief.mean
            covs[t] = belief.cov
        u = np.asarray(action(t), dtype=float).reshape(-1)
        w = sample_gaussian(stream, zero_n, noise.sigma_w)
        z = sample_gaussian(stream, zero_m, noise.sigma_z)
        y = observation_matrix(sys, u) @ x + z
        inputs[t] = u
        outputs[t] = y
        stage_costs[t] = float(x @ cost.q @ x + u @ cost.r @ u)
        if belief is not None:
            belief = kf_step(belief, sys, noise, u, y).next_belief
        x = sys.a @ x + sys.b @ u + w

    states[T] = x
    if belief is None:
        means[T] = x
        covs[T] = 0.0
    else:
        means[T] = belief.mean
        covs[T] = belief.cov
    terminal_cost = float(x @ cost.q_t @ x)
    return TrajectoryRecord(states=states, inputs=inputs, outputs=outputs,
                            means=means, covs=covs, stage_costs=stage_costs,
                            terminal_cost=terminal_cost)


@dataclass(frozen=True)
class PercentileSeries:
    metric: str
    p25: np.ndarray
    p50: np.ndarray
    p75: np.ndarray


@dataclass(frozen=True)
class SimConfig:
    system: object
    noise: object
    cost: object
    policy: PolicyConfig
    horizon: int


@dataclass(frozen=True)
class MonteCarloResult:
    records: tuple
    percentiles: dict


def monte_carlo(config, runs, seed, max_workers=None):
    """Independent rollouts on streams (seed, 0..runs-1) with percentile
    aggregation; output is identical for any worker count."""
    runs = int(runs)
    if runs < 1:
        raise ValueError("runs must be >= 1")

    def one(run):
        return rollout(config.system, config.noise, config.cost, config.policy,
                       config.horizon, RngStream(seed, run))

    if max_workers is not None and max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            records = tuple(pool.map(one, range(runs)))
    else:
        records = tuple(one(run) for run in range(runs))
    return MonteCarloResult(records=records,
                            percentiles=aggregate_percentiles(records))


def aggregate_percentiles(records):
    """Linear-interpolation order-statistic percentiles per metric and step."""
    percentiles = {}
    for name in METRICS:
        data = np.stack([rec.metric(name) for rec in records])
        q = np.percentile(data, [25.0, 50.0, 75.0], axis=0, method="linear")
        percentiles[name] = PercentileSeries(metric=name, p25=q[0], p50=q[1], p75=q[2])
    return percentiles


@dataclass(frozen=True)
class LandscapeTable:
    u: np.ndarray
    f_total: np.ndarray
    f_lqg: np.ndarray
    g: np.ndarray
    params: object
    critical_points: tuple


def landscape_sweep(sys, noise, cost, offset, grid=(-3.0, 3.0, 1201)):
    """Sweep the scalar stage objective with the observation offset placed
    `offset` away from the certainty-equivalent action.

    The static coefficient is set so that the estimation penalty peaks at
    u_lqg + offset; returns the decomposed objective on the grid plus the
    critical points.
    """
    base = scalar_gap_params(sys, noise, cost, prior_var=float(noise.sigma_0[0, 0]))
    c0 = base.c1 * (base.beta * base.x_hat0 / base.alpha - float(offset))
    params = replace(base, c0=c0)
    lo, hi, points = float(grid[0]), float(grid[1]), int(grid[2])
    us = np.linspace(lo, hi, points)
    f_lqg = params.alpha * us * us + 2.0 * params.beta * params.x_hat0 * us
    cvals = params.c0 + params.c1 * us
    g = params.gamma / (cvals * cvals + params.kappa)
    return LandscapeTable(u=us, f_total=f_lqg + g, f_lqg=f_lqg, g=g,
                          params=params,
                          critical_points=tuple(scalar_critical_points(params)))


def format_float(x):
    return f"{float(x):.17g}"


def write_trajectory_csv(path, records):
    """One row per (run, t); the t = T row carries the terminal cost."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("run,t,stage_cost,cum_cost,u_norm,est_err,cov_trace\n")
        for run, rec in enumerate(records):
            series = {name: rec.metric(name) for name in METRICS}
            for t in range(rec.horizon + 1):
                fields = [str(run), str(t)]
                fields += [format_float(series[name][t]) for name in METRICS]
                fh.write(",".join(fields) + "\n")


def write_summary_csv(path, blocks):
    """blocks: iterable of (percentiles dict, policy label, obs_model label)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("t,metric,p25,p50,p75,policy,obs_model\n")
        for percentiles, policy, obs_model in blocks:
            for name in METRICS:
                series = percentiles[name]
                for t in range(series.p50.size):
                    fh.write(",".join([
                        str(t), name,
                        format_float(series.p25[t]),
                        format_float(series.p50[t]),
                        format_float(series.p75[t]),
                        policy, obs_model,
                    ]) + "\n")


def write_landscape_csv(path, table):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("u,f_total,f_lqg,g\n")
        for i in range(table.u.size):
            fh.write(",".join([
                format_float(table.u[i]),
                format_float(table.f_total[i]),
                format_float(table.f_lqg[i]),
                format_float(table.g[i]),
            ]) + "\n")


def write_critical_points_csv(path, critical_points):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("u,kind,f_value,second_derivative\n")
        for pt in critical_points:
            fh.write(",".join([
                format_float(pt.u), pt.kind,
                format_float(pt.f_value),
                format_float(pt.second_derivative),
            ]) + "\n")
