"""Command-line front end.

Exit codes: 0 success, 1 configuration or usage error, 2 safety violation,
3 numerical or controller failure.
"""

from __future__ import annotations

import sys
import time
from pathlib import Path

import click

from .config import builtin_scenario_path, load_scenario
from .equilibrium import closed_form_equilibrium
from .errors import ConfigError
from .reporting import (
    format_table,
    steady_state_table,
    summary_dict,
    write_json,
    write_sweep_csv,
    write_table_csv,
    write_trace_csv,
)
from .simulation import CONTROLLERS, exit_status, run

EXIT_CONFIG = 1


def _load(path, **overrides):
    target = path or builtin_scenario_path()
    return load_scenario(target, **overrides)


scenario_arg = click.argument("scenario", required=False, type=click.Path(exists=True, dir_okay=False))
out_opt = click.option("--out", "out_dir", type=click.Path(file_okay=False), default="out", show_default=True)
plot_opt = click.option("--plot/--no-plot", default=True, show_default=True, help="Also write PNG figures.")


@click.group()
def cli():
    """Safety-critical control of a single-bus DC microgrid.

    SCENARIO is a JSON scenario file; without it the bundled five-converter
    reference grid is used.
    """


@cli.command("run")
@scenario_arg
@click.option("--controller", type=click.Choice(CONTROLLERS))
@click.option("--t-final", type=float, help="Simulated time [s].")
@click.option("--dt-plant", type=float, help="Plant step [s].")
@click.option("--dt-control", type=float, help="Controller period [s].")
@out_opt
@click.option("--seed", type=int, help="Recorded in summary.json; runs are deterministic.")
@click.option("--raw-trace", is_flag=True, help="Record every plant step instead of every control period.")
@plot_opt
def cmd_run(scenario, controller, t_final, dt_plant, dt_control, out_dir, seed, raw_trace, plot):
    """Simulate one scenario and write trace.csv and summary.json."""
    sf = _load(scenario, controller=controller, t_final=t_final, dt_plant=dt_plant, dt_control=dt_control,
               raw_trace=raw_trace or None)
    sc = sf.scenario
    t0 = time.perf_counter()
    trace = run(sc)
    wall = time.perf_counter() - t0
    out = Path(out_dir)
    write_trace_csv(out / "trace.csv", trace)
    write_json(out / "summary.json", summary_dict(trace.summary, {
        "scenario": sf.name, "controller": sc.controller, "seed": seed, "wall_time_s": wall,
        "v_bus_target": sc.v_bus_target,
    }))
    if plot:
        from .plotting import plot_trace

        plot_trace(trace, sc.params, out / "trace.png", sc.v_bus_target, f"{sf.name}: {sc.controller}")
    s = trace.summary
    click.echo(
        f"{sc.controller}: status={s.status} converged={s.converged} v_bus_avg={s.v_bus_avg:.4f} "
        f"safety_violated={s.safety_violated} min_b={s.min_b:.6g} wall={wall:.1f}s"
    )
    if s.message:
        click.echo(f"  {s.message}")
    sys.exit(exit_status(s))


@cli.command("table2")
@scenario_arg
@click.option("--t-final", type=float)
@out_opt
@plot_opt
def cmd_table2(scenario, t_final, out_dir, plot):
    """Run the SCC and droop controllers and tabulate averaged steady states."""
    traces = {}
    sf = None
    for name in ("scc", "droop"):
        sf = _load(scenario, controller=name, t_final=t_final)
        traces[name] = run(sf.scenario)
    sc = sf.scenario
    eq = closed_form_equilibrium(sc.v_bus_target, sc.params)
    rows = steady_state_table(eq, sc.x0, {k: v.summary for k, v in traces.items()})
    out = Path(out_dir)
    write_table_csv(out / "table2.csv", rows, list(traces))
    text = format_table(rows, list(traces))
    (out / "table2.txt").write_text(text)
    write_json(out / "table2_summary.json", {k: summary_dict(v.summary) for k, v in traces.items()})
    if plot:
        from .plotting import plot_comparison

        plot_comparison(traces, sc.params, out / "table2.png", sc.v_bus_target)
    click.echo(text, nl=False)
    failed = any(tr.summary.status in ("numerical_failure", "controller_error") for tr in traces.values())
    sys.exit(3 if failed else 0)


@cli.command("sweep")
@scenario_arg
@out_opt
@click.option("--samples", type=int, help="Number of random initial states.")
@click.option("--seed", type=int)
@click.option("--t-final", type=float)
@click.option("--controller", "controllers", multiple=True, type=click.Choice(CONTROLLERS),
              help="Repeatable; default scc and droop.")
@plot_opt
def cmd_sweep(scenario, out_dir, samples, seed, t_final, controllers, plot):
    """Random initial-state sweep; worker count from MICROGRID_SCC_WORKERS."""
    from dataclasses import replace

    from .sweep import run_sweep

    sf = _load(scenario)
    spec = sf.sweep
    changes = {k: v for k, v in (("samples", samples), ("seed", seed), ("t_final", t_final)) if v is not None}
    spec = replace(spec, **changes)
    records = run_sweep(sf.scenario, spec, controllers or ("scc", "droop"))
    out = Path(out_dir)
    write_sweep_csv(out / "sweep.csv", records)
    if plot:
        from .plotting import plot_sweep

        plot_sweep(records, out / "sweep.png")
    for name in controllers or ("scc", "droop"):
        rows = [r for r in records if r["controller"] == name]
        ok = sum(r["converged"] for r in rows)
        bad = sum(r["safety_violated"] for r in rows)
        click.echo(f"{name}: converged {ok}/{len(rows)}, safety violations {bad}/{len(rows)}")
    sys.exit(0)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        return EXIT_CONFIG
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return EXIT_CONFIG
    except click.ClickException as exc:
        exc.show()
        return EXIT_CONFIG
    except SystemExit as exc:
        return int(exc.code or 0)
    return 0


def entry() -> None:
    sys.exit(main())
