"""Command-line entry points for the demonstration-augmentation pipeline.

Each subcommand wraps one pipeline stage so the stages can be chained
through files: demo -> augment / collect -> fit, plus the experiment
suite runner and the local UI service.
"""

import json
import pathlib

import click

from .demo_pipeline import (Dataset, DemoTrajectory, FunnelPlan,
                            augment_contact, generate_funnel_poses,
                            generate_grasp_labels, scripted_demonstration,
                            segment_trajectory)
from .mechanism import Episode, load_fixture

FIXTURES = ("lock1", "lock2", "lock3", "drawer_a", "drawer_b")

# the harness collection variant: the default cone plus near-overhead
# rings covering the straight-down approach corridor
INNER_FUNNEL = FunnelPlan(
    radii=(0.12, 0.095, 0.07, 0.045, 0.02,
           0.03, 0.022, 0.015, 0.008, 0.003),
    heights=(0.35, 0.30, 0.25, 0.20, 0.15,
             0.35, 0.30, 0.25, 0.20, 0.15))
FUNNELS = {"default": FunnelPlan(), "cone+inner": INNER_FUNNEL}


@click.group()
def main():
    """Single-demonstration learning for articulated mechanisms."""


@main.command()
@click.option("--fixture", required=True, type=click.Choice(FIXTURES))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--dt", default=0.02, show_default=True)
def demo(fixture, out, dt):
    """Record a scripted oracle demonstration on a bundled fixture."""
    traj = scripted_demonstration(load_fixture(fixture), dt=dt)
    traj.save(out)
    click.echo(f"wrote {len(traj.t)} samples to {out}")


@main.command()
@click.option("--demo", "demo_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--fixture", required=True, type=click.Choice(FIXTURES))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def augment(demo_path, fixture, out):
    """Probe contact-force hypotheses and write the augmented plan."""
    traj = DemoTrajectory.load(demo_path)
    segments = segment_trajectory(traj.opening_span())
    episode = Episode(load_fixture(fixture))
    episode.attach()
    plan = augment_contact(episode, segments)
    plan.save(out)
    for i, prov in enumerate(plan.provenance):
        click.echo(f"segment {i}: f_hat from {prov}")
    for w in plan.warnings:
        click.echo(f"warning: {w}", err=True)
    click.echo(f"wrote plan ({plan.k} segments) to {out}")


@main.command()
@click.option("--demo", "demo_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--funnel", default="default", show_default=True,
              type=click.Choice(sorted(FUNNELS)))
@click.option("--out", required=True, type=click.Path(file_okay=False))
def collect(demo_path, funnel, out):
    """Render the funnel-trajectory views and write the labeled dataset."""
    from .harness import DEFAULT_CAM, OBJECT_WIDTH
    from .perception import make_handle_scene, render_scene

    grasp = DemoTrajectory.load(demo_path).grasp_pose
    scene = make_handle_scene(grasp, OBJECT_WIDTH)
    render = lambda c, p: render_scene(scene, c, p.compose(c.hand_eye))
    poses = generate_funnel_poses(grasp, FUNNELS[funnel])
    dataset = generate_grasp_labels(poses, grasp, DEFAULT_CAM, OBJECT_WIDTH,
                                    scene, render)
    dataset.save(out)
    click.echo(f"wrote {len(dataset)} labeled views to {out}")


@main.command()
@click.option("--dataset", "dataset_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def fit(dataset_dir, out):
    """Fit the k-NN yaw estimator index from a labeled dataset."""
    from .perception import fit_yaw_estimator

    estimator = fit_yaw_estimator(Dataset.load(dataset_dir))
    estimator.save(out)
    click.echo(f"wrote estimator index ({len(estimator.yaws)} views) to {out}")


@main.command()
@click.option("--suite", default="table1", show_default=True)
@click.option("--seed", default=7, show_default=True, type=int)
@click.option("--config", "config_path", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="JSON suite config overriding --suite/--seed; "
                   "see schemas/suite_config.schema.json.")
@click.option("--out", required=True, type=click.Path(file_okay=False))
def run(suite, seed, config_path, out):
    """Run the experiment suite and write the report."""
    from .harness import ConfigError, run_suite

    if config_path is not None:
        with open(config_path) as f:
            cfg = json.load(f)
        if "seed" not in cfg:
            raise click.ClickException("suite config must set a seed")
        suite = cfg.get("suite", suite)
        seed = int(cfg["seed"])
    try:
        report = run_suite(suite, seed=seed)
    except ConfigError as e:
        raise click.ClickException(str(e))
    out_dir = pathlib.Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_bytes(report.to_json_bytes())
    text = report.to_text()
    (out_dir / "report.txt").write_text(text + "\n")
    click.echo(text)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8080, show_default=True, type=int)
def serve(host, port):
    """Serve the local HTTP+JSON API for the companion UI."""
    from .server import serve_api

    serve_api(host=host, port=port)


if __name__ == "__main__":
    main()
