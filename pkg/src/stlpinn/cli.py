"""Command-line surface.

Exit codes: 0 on success, 1 on usage/config errors, 2 on numerical failures
(singular systems, solver breakdowns, corrupt files).
"""

import sys

import click
import numpy as np

from . import experiments
from .checkpoint import load_checkpoint, save_checkpoint
from .equations import instantiate, stiffness_ratio
from .errors import StlError
from .results import render_solution_plot, write_solution_csv
from .solvers import Tolerances, godunov_split_solve, radau_solve, rk45_solve
from .transfer import transfer_linear, transfer_nonlinear


@click.group()
def cli():
    """Stiff-regime transfer for multi-head physics-informed networks."""


@cli.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True), help="Experiment config JSON.")
@click.option("--out", "out_path", required=True, type=click.Path(),
              help="Checkpoint output path.")
def train(config_path, out_path):
    """Train a multi-head checkpoint from a config file."""
    cfg = experiments.load_config(config_path)
    ckpt = experiments._train_checkpoint(cfg, cfg.train.seed)
    save_checkpoint(ckpt, out_path)
    final = ckpt.loss_history[-1]["total"] if ckpt.loss_history else float("nan")
    click.echo(f"saved {out_path} (final loss {final:.3e})")


@cli.command()
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path(exists=True))
@click.option("--alpha", required=True, type=float)
@click.option("--p", "p_order", type=int, default=None,
              help="Perturbation order for the nonlinear family.")
@click.option("--beta", type=float, default=None,
              help="Override the nonlinearity coefficient.")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--plot", "plot_path", type=click.Path(), default=None,
              help="Also render the solution as an SVG figure.")
@click.option("--points", type=int, default=512, show_default=True)
def transfer(ckpt_path, alpha, p_order, beta, out_path, plot_path, points):
    """One-shot transfer of a trained checkpoint to a new stiffness."""
    ckpt = load_checkpoint(ckpt_path)
    base = ckpt.head_specs[0]
    params = dict(base.params)
    if beta is not None:
        params["beta"] = beta
    target = instantiate(base.family, alpha, params, T=base.T)
    if target.nonlinearity is not None:
        sol = transfer_nonlinear(ckpt, target, 5 if p_order is None else p_order)
    else:
        sol = transfer_linear(ckpt, target)
    if target.is_ode:
        t = np.linspace(0.0, target.T, points)
        u = sol.u(t[:, None])
        write_solution_csv(out_path, t, u)
        if plot_path:
            render_solution_plot(plot_path, t, u,
                                 title=f"{base.family} transfer alpha={alpha:g}")
    else:
        nt, nx = ckpt.loss_config.grid_shape
        t = np.linspace(0.0, target.T, nt)
        x = np.linspace(0.0, target.L[0], nx)
        tt, xx = np.meshgrid(t, x, indexing="ij")
        u = sol.u(np.column_stack([tt.ravel(), xx.ravel()])).reshape(nt, nx, -1)
        write_solution_csv(out_path, t, u, x=x)
        if plot_path:
            render_solution_plot(plot_path, x, u[-1],
                                 title=f"{base.family} final profile "
                                       f"alpha={alpha:g}")
    click.echo(
        f"wrote {out_path} (setup {sol.factor_seconds * 1e3:.2f} ms, "
        f"solve {sol.solve_seconds * 1e3:.2f} ms)"
    )


@cli.command()
@click.option("--family", required=True,
              type=click.Choice(["oho", "ncff", "duffing", "ar"]))
@click.option("--alpha", required=True, type=float)
@click.option("--method", required=True,
              type=click.Choice(["rk45", "radau", "lw-radau"]))
@click.option("--rtol", type=float, default=1e-8, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--plot", "plot_path", type=click.Path(), default=None)
@click.option("--points", type=int, default=512, show_default=True)
def solve(family, alpha, method, rtol, out_path, plot_path, points):
    """Reference solve of a built-in family."""
    spec = instantiate(family, alpha)
    tol = Tolerances(rtol=rtol, atol=rtol)
    if method == "lw-radau":
        if spec.is_ode:
            raise click.UsageError("lw-radau applies to the transport family only")
        sol = godunov_split_solve(spec, (75, 125), tol, reaction="radau")
        write_solution_csv(out_path, sol.t, sol.y, x=sol.x)
        if plot_path:
            render_solution_plot(plot_path, sol.x, sol.y[-1],
                                 title=f"ar final profile alpha={alpha:g}")
    else:
        if not spec.is_ode:
            raise click.UsageError(f"{method} applies to ODE families only")
        t = np.linspace(0.0, spec.T, points)
        runner = rk45_solve if method == "rk45" else radau_solve
        sol = runner(spec, tol, t)
        write_solution_csv(out_path, sol.t, sol.y)
        if plot_path:
            render_solution_plot(plot_path, sol.t, sol.y,
                                 title=f"{family} {method} alpha={alpha:g}")
    click.echo(
        f"wrote {out_path} ({sol.n_steps} steps, {sol.n_rejected} rejected, "
        f"{sol.wall_clock_s * 1e3:.2f} ms)"
    )


@cli.command()
@click.argument("protocol", type=click.Choice(["perf", "scale", "repar"]))
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True))
@click.option("--out-dir", required=True, type=click.Path())
def bench(protocol, config_path, out_dir):
    """Run one of the benchmark protocols; writes CSV plus SVG figures."""
    cfg = experiments.load_config(config_path)
    if protocol == "perf":
        rows = experiments.run_performance(cfg, out_dir)
        click.echo(f"wrote {len(rows)} rows to {out_dir}/performance.csv")
    elif protocol == "scale":
        rows = experiments.run_scalability(cfg, out_dir)
        click.echo(f"wrote {len(rows)} rows to {out_dir}/scalability.csv")
    else:
        rows, summary = experiments.run_reparametrization(cfg, out_dir)
        click.echo(
            f"{len(rows)} solves: mean MAE {summary['mean_mae']:.3e}, "
            f"mean solve {summary['mean_solve_s'] * 1e3:.3f} ms "
            f"(operator assembly {summary['assemble_s'] * 1e3:.2f} ms)"
        )


@cli.command()
@click.option("--family", required=True,
              type=click.Choice(["oho", "ncff", "duffing", "ar"]))
@click.option("--alpha", required=True, type=float)
def stiffness(family, alpha):
    """Stiffness-ratio diagnostic of a family instance."""
    report = stiffness_ratio(instantiate(family, alpha))
    lam1, lam2 = report.eigenvalues

    def fmt(z):
        return f"{z.real:.6g}" if z.imag == 0 else f"{z.real:.6g}{z.imag:+.6g}j"

    click.echo(f"eigenvalues: {fmt(lam1)}, {fmt(lam2)}")
    click.echo(f"stiffness ratio: {report.sr:.6g}")
    if report.sr < 20:
        click.echo("classification: not stiff (SR < 20)")
    elif report.sr >= 1000:
        click.echo("classification: stiff (SR >= 1000)")
    else:
        click.echo("classification: moderately stiff")


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        sys.exit(1)
    except click.Abort:
        sys.exit(1)
    except StlError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
