"""Command-line entry point.

Each command writes CSV artifacts (17-significant-digit doubles, '\\n'
line endings) and ends by printing one JSON status line; the exit code is
0 iff every asserted postcondition held.  BILQ_THREADS caps the number of
parallel Monte Carlo workers (default 1); outputs are byte-identical for
any worker count.
"""

import json
import os
from dataclasses import dataclass, replace
from pathlib import Path

import click
import numpy as np

from .core import RngStream, config_to_dict, load_config, validate_system
from .control import (lqg_policy, riccati_recursion, scalar_critical_points,
                      scalar_gap_params, LOCAL_MAX, LOCAL_MIN)
from .observability import check_proposition1, covariance_boundedness_probe, gramian
from .presets import double_integrator_config, orthogonal_config, scalar_config
from .sim import (INIT_ESTIMATES, POLICY_KINDS, PolicyConfig, SimConfig,
                  format_float, landscape_sweep, monte_carlo,
                  write_critical_points_csv, write_landscape_csv,
                  write_summary_csv, write_trajectory_csv)

DEFAULT_HORIZON = 100
PROBE_THRESHOLD = 1e6


@dataclass(frozen=True)
class ExperimentSpec:
    """Resolved invocation: experiment name, config source, output target,
    and the effective overrides (echoed in the final status line)."""

    name: str
    config_path: str = None
    out_path: str = None
    overrides: dict = None


def _max_workers():
    raw = os.environ.get("BILQ_THREADS", "")
    try:
        return max(int(raw), 1)
    except ValueError:
        return 1


def _finish(spec, failures):
    status = {"command": spec.name,
              "config": spec.config_path,
              "out": spec.out_path,
              "overrides": spec.overrides,
              "status": "fail" if failures else "ok",
              "failures": list(failures)}
    click.echo(json.dumps(status, sort_keys=True))
    if failures:
        raise SystemExit(1)


def _load_config_or_fail(path):
    try:
        return load_config(path)
    except (OSError, ValueError) as exc:
        raise click.ClickException(str(exc))


def _check_classifications(points):
    failures = []
    for pt in points:
        if not np.isfinite(pt.u):
            failures.append(f"non-finite critical point {pt!r}")
        if np.isfinite(pt.second_derivative) and abs(pt.second_derivative) > 1e-10:
            expected = LOCAL_MIN if pt.second_derivative > 0 else LOCAL_MAX
            if pt.kind != expected:
                failures.append(f"classification inconsistent at u={pt.u!r}")
    return failures


@click.group()
def main():
    """Estimation/control experiments for bilinear-observation systems."""


@main.command("scalar-landscape")
@click.option("--offset", type=float, default=0.0, show_default=True,
              help="Distance from the certainty-equivalent action to the "
                   "estimation-penalty peak.")
@click.option("--grid", type=(float, float, int), default=(-3.0, 3.0, 1201),
              show_default=True, metavar="LO HI N")
@click.option("--c1", type=float, default=None,
              help="Input-dependent observation coefficient (default: the "
                   "quadratic stage weight).")
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def cmd_scalar_landscape(offset, grid, c1, out):
    """Sweep the scalar stage objective and classify its critical points."""
    if abs(offset) > 1.0:
        click.echo("warning: offset outside [-1, 1]", err=True)
    system, noise, cost = scalar_config(c1=c1)
    table = landscape_sweep(system, noise, cost, offset, grid)
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_landscape_csv(out, table)
    report_path = out.with_name(out.stem + "_critical_points.csv")
    write_critical_points_csv(report_path, table.critical_points)
    spec = ExperimentSpec(name="scalar-landscape", config_path=None,
                          out_path=str(out),
                          overrides={"offset": offset, "grid": list(grid), "c1": c1})
    failures = _check_classifications(table.critical_points)
    if not np.all(np.isfinite(table.f_total)):
        failures.append("non-finite landscape values")
    _finish(spec, failures)


@main.command("double-integrator")
@click.option("--runs", type=int, default=50, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--c1", type=float, default=1.0, show_default=True,
              help="Force scaling of the bilinear position sensor.")
@click.option("--out", type=click.Path(file_okay=False), required=True)
def cmd_double_integrator(runs, seed, c1, out):
    """Compare perfect / linear / bilinear observations on the integrator.

    All three variants share noise realizations run-by-run.  With runs >=
    10 the headline orderings (bilinear costs more, its covariance trace
    grows, the linear one plateaus) are asserted.
    """
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    horizon = DEFAULT_HORIZON
    workers = _max_workers()
    variants = (
        ("perfect", PolicyConfig("perfect_state_lqr", "sampled_from_prior")),
        ("linear", PolicyConfig("separation_lqg", "sampled_from_prior")),
        ("bilinear", PolicyConfig("separation_lqg", "sampled_from_prior")),
    )
    results = {}
    blocks = []
    for name, policy in variants:
        system, noise, cost = double_integrator_config(obs_model=name, c1=c1)
        config = SimConfig(system, noise, cost, policy, horizon)
        res = monte_carlo(config, runs, seed, max_workers=workers)
        write_trajectory_csv(outdir / f"trajectories_{name}.csv", res.records)
        blocks.append((res.percentiles, policy.kind, name))
        results[name] = res
    write_summary_csv(outdir / "summary.csv", blocks)

    failures = []
    if runs >= 10:
        bil = results["bilinear"].percentiles
        lin = results["linear"].percentiles
        if not bil["cum_cost"].p50[horizon] > lin["cum_cost"].p50[horizon]:
            failures.append("bilinear median cumulative cost does not exceed linear")
        if not bil["cov_trace"].p50[horizon] > 2.0 * bil["cov_trace"].p50[20]:
            failures.append("bilinear median covariance trace did not double from t=20")
        lin_20 = lin["cov_trace"].p50[20]
        lin_end = lin["cov_trace"].p50[horizon]
        if not abs(lin_end - lin_20) <= 0.1 * lin_20:
            failures.append("linear median covariance trace not stable")
    spec = ExperimentSpec(name="double-integrator", config_path=None,
                          out_path=str(outdir),
                          overrides={"runs": runs, "seed": seed, "c1": c1})
    _finish(spec, failures)


@main.command("orthogonal")
@click.option("--runs", type=int, default=50, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--variant", type=click.Choice(["a", "b"]), default="a",
              show_default=True, help="Which static observation draw to use.")
@click.option("--out", type=click.Path(file_okay=False), required=True)
def cmd_orthogonal(runs, seed, variant, out):
    """Random system whose static observation matrix is orthogonal to the
    input-dependent ones; covariance must stay bounded for any inputs."""
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    horizon = DEFAULT_HORIZON
    workers = _max_workers()
    base_stream = RngStream(seed)
    sys_bil, noise, cost = orthogonal_config(base_stream, variant=variant,
                                             obs_model="bilinear")
    sys_lin, _, _ = orthogonal_config(base_stream, variant=variant,
                                      obs_model="linear")

    tables = riccati_recursion(cost, sys_bil, horizon)
    probe = covariance_boundedness_probe(
        sys_bil, noise, lambda t, belief: lqg_policy(tables, t, belief.mean),
        horizon, PROBE_THRESHOLD)
    prop = check_proposition1(sys_bil, inputs=probe.inputs[:sys_bil.n])
    tail = float(probe.norms[50:horizon + 1].max())
    head = float(probe.norms[1:51].max())

    (outdir / f"system_{variant}.json").write_text(
        json.dumps(config_to_dict(sys_bil, noise, cost, horizon, runs, seed),
                   sort_keys=True, indent=1),
        encoding="utf-8")
    (outdir / "prop1_report.json").write_text(
        json.dumps({
            "variant": variant,
            "ok": prop.ok,
            "min_eigenvalue": prop.min_eigenvalue,
            "norm_o1": prop.norm_o1,
            "norm_o2": prop.norm_o2,
            "norm_o3": prop.norm_o3,
            "probe_max_norm": probe.max_norm,
            "probe_head_max": head,
            "probe_tail_max": tail,
        }, sort_keys=True, indent=1),
        encoding="utf-8")

    blocks = []
    for name, system in (("linear", sys_lin), ("bilinear", sys_bil)):
        config = SimConfig(system, noise, cost,
                           PolicyConfig("separation_lqg", "sampled_from_prior"),
                           horizon)
        res = monte_carlo(config, runs, seed, max_workers=workers)
        write_trajectory_csv(outdir / f"trajectories_{name}.csv", res.records)
        blocks.append((res.percentiles, "separation_lqg", name))
    write_summary_csv(outdir / "summary.csv", blocks)

    failures = []
    if not prop.ok:
        failures.append("sufficient observability condition failed")
    if tail > 1.05 * head:
        failures.append("covariance norm still growing in the second half")
    spec = ExperimentSpec(name="orthogonal", config_path=None,
                          out_path=str(outdir),
                          overrides={"runs": runs, "seed": seed, "variant": variant})
    _finish(spec, failures)


@main.command("simulate")
@click.option("--config", "config_path", type=click.Path(dir_okay=False),
              required=True)
@click.option("--runs", type=int, default=None, help="Override config runs.")
@click.option("--seed", type=int, default=None, help="Override config seed.")
@click.option("--policy", type=click.Choice(POLICY_KINDS),
              default="separation_lqg", show_default=True)
@click.option("--init-estimate", type=click.Choice(INIT_ESTIMATES),
              default="sampled_from_prior", show_default=True)
@click.option("--out", type=click.Path(file_okay=False), required=True)
def cmd_simulate(config_path, runs, seed, policy, init_estimate, out):
    """Monte Carlo rollouts of a JSON-configured system."""
    system, noise, cost, horizon, cfg_runs, cfg_seed = _load_config_or_fail(config_path)
    report = validate_system(system, noise, cost)
    runs = cfg_runs if runs is None else runs
    seed = cfg_seed if seed is None else seed
    spec = ExperimentSpec(name="simulate", config_path=str(config_path),
                          out_path=str(out),
                          overrides={"runs": runs, "seed": seed, "policy": policy,
                                     "init_estimate": init_estimate})
    if not report.ok:
        _finish(spec, [f"config invalid: {v}" for v in report.violations])
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    config = SimConfig(system, noise, cost, PolicyConfig(policy, init_estimate),
                       horizon)
    res = monte_carlo(config, runs, seed, max_workers=_max_workers())
    write_trajectory_csv(outdir / "trajectories.csv", res.records)
    write_summary_csv(outdir / "summary.csv",
                      [(res.percentiles, policy, "config")])
    failures = []
    for name, series in res.percentiles.items():
        if not (np.all(series.p25 <= series.p50 + 1e-15)
                and np.all(series.p50 <= series.p75 + 1e-15)):
            failures.append(f"percentile ordering violated for {name}")
    for rec in res.records:
        if rec.stage_costs.min() < 0.0 or rec.terminal_cost < 0.0:
            failures.append("negative realized cost")
            break
    _finish(spec, failures)


@main.command("observability")
@click.option("--config", "config_path", type=click.Path(dir_okay=False),
              required=True)
@click.option("--horizon", type=int, default=DEFAULT_HORIZON, show_default=True)
@click.option("--delta", type=float, default=1e-8, show_default=True,
              help="Positive-definiteness margin for the observability test.")
def cmd_observability(config_path, horizon, delta):
    """Observability diagnostics along a simulated closed-loop input sequence."""
    system, noise, cost, _, _, _ = _load_config_or_fail(config_path)
    spec = ExperimentSpec(name="observability", config_path=str(config_path),
                          out_path=None,
                          overrides={"horizon": horizon, "delta": delta})
    report = validate_system(system, noise, cost)
    if not report.ok:
        _finish(spec, [f"config invalid: {v}" for v in report.violations])
    n = system.n
    if horizon < n:
        raise click.ClickException(f"horizon must be at least n = {n}")
    tables = riccati_recursion(cost, system, horizon)
    probe = covariance_boundedness_probe(
        system, noise, lambda t, belief: lqg_policy(tables, t, belief.mean),
        horizon, PROBE_THRESHOLD)
    click.echo("window_start,gramian_min_eigenvalue,uniformly_observable")
    for start in range(horizon - n + 1):
        rep = gramian(system, probe.inputs[start:start + n], delta=delta)
        click.echo(f"{start},{format_float(rep.min_eigenvalue)},{rep.uniformly_observable}")
    prop = check_proposition1(system, inputs=probe.inputs[:n], delta=delta)
    click.echo(f"proposition1_ok,{prop.ok}")
    click.echo(f"proposition1_min_eigenvalue,{format_float(prop.min_eigenvalue)}")
    click.echo(f"probe_max_norm,{format_float(probe.max_norm)}")
    click.echo(f"probe_exceeded_threshold,{probe.exceeded}")
    click.echo(f"probe_final_trace,{format_float(probe.traces[-1])}")
    _finish(spec, [])


@main.command("critical-points")
@click.option("--config", "config_path", type=click.Path(dir_okay=False),
              default=None, help="Scalar system config (default: built-in).")
@click.option("--x0hat", type=float, default=None)
@click.option("--c0", type=float, default=None)
@click.option("--c1", type=float, default=None)
def cmd_critical_points(config_path, x0hat, c0, c1):
    """Classify the critical points of the scalar stage objective."""
    if config_path is not None:
        system, noise, cost, _, _, _ = _load_config_or_fail(config_path)
        if not (system.n == 1 and system.m == 1 and system.p == 1):
            raise click.ClickException("critical-points requires a scalar system")
    else:
        system, noise, cost = scalar_config()
    params = scalar_gap_params(system, noise, cost,
                               prior_var=float(noise.sigma_0[0, 0]),
                               x_hat0=x0hat)
    updates = {}
    if c0 is not None:
        updates["c0"] = c0
    if c1 is not None:
        updates["c1"] = c1
    if updates:
        params = replace(params, **updates)
    if params.c1 == 0.0:
        raise click.ClickException("use LQG closed form (c1 = 0)")
    points = scalar_critical_points(params)
    click.echo("u,kind,f_value,second_derivative")
    for pt in points:
        click.echo(f"{format_float(pt.u)},{pt.kind},{format_float(pt.f_value)},"
                   f"{format_float(pt.second_derivative)}")
    spec = ExperimentSpec(name="critical-points",
                          config_path=None if config_path is None else str(config_path),
                          out_path=None,
                          overrides={"x0hat": x0hat, "c0": c0, "c1": c1})
    _finish(spec, _check_classifications(points))


if __name__ == "__main__":
    main()
