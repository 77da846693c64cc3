"""Command-line entry point: dataset generation, training, sweeps, and cluster export.

Exit codes: 0 success, 1 runtime error, 2 configuration error. Every command
writes a manifest JSON recording its resolved configuration, seed, and output
paths, so any run is reproducible from the manifest alone. The EHCPOOL_SEED
environment variable supplies the seed when --seed is omitted.
"""

from __future__ import annotations

import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import click
import numpy as np

from . import __version__
from .errors import CheckpointMismatch, ConfigError, EhcPoolError
from .graphs import GraphArrays, load_dataset, save_dataset
from .network import Batch, ModelConfig, Network
from .pooling import assignment_record
from .synth import SynthSpec, WindowConfig, gen_dataset
from .training import (
    cross_validate,
    sensitivity_sweep,
    train_network,
    write_loss_history_csv,
    write_metrics_csv,
    write_sweep_csv,
)


def _resolve_seed(seed: int | None) -> int:
    if seed is not None:
        return seed
    env = os.environ.get("EHCPOOL_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise click.UsageError(f"EHCPOOL_SEED must be an integer, got {env!r}") from exc
    return 0


def _write_manifest(path: Path, command: str, seed: int, config: dict,
                    outputs: list[str]) -> None:
    manifest = {
        "command": command,
        "engine_version": __version__,
        "created": datetime.now(timezone.utc).isoformat(),
        "seed": seed,
        "config": config,
        "outputs": outputs,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)


def _parse_int_list(text: str, flag: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip() != ""]
    except ValueError as exc:
        raise click.UsageError(f"{flag} must be comma-separated integers, got {text!r}") from exc
    if not values:
        raise click.UsageError(f"{flag} must not be empty")
    return values


def _model_config(gamma, beta_cap, delta, lr, epochs, batch_size, folds, repeats,
                  conv_channels, filter_hidden, ablation, seed, jobs) -> ModelConfig:
    channels = _parse_int_list(conv_channels, "--conv-channels")
    if len(channels) != 2:
        raise click.UsageError("--conv-channels needs exactly two values, e.g. '16,16'")
    try:
        cfg = ModelConfig(conv_channels=tuple(channels), filter_hidden=filter_hidden,
                          gamma=gamma, beta_cap=beta_cap, delta=delta, lr=lr,
                          epochs=epochs, batch_size=batch_size, seed=seed,
                          folds=folds, repeats=repeats, jobs=jobs)
        return cfg.with_ablation(ablation)
    except ConfigError as exc:
        raise click.UsageError(str(exc)) from exc


@click.group()
@click.version_option(version=__version__)
def main():
    """Edge-aware hard-clustering graph pooling toolkit."""


@main.command("gen")
@click.option("--nodes", default=16, show_default=True, type=int)
@click.option("--per-class", default=100, show_default=True, type=int)
@click.option("--signal", default="edge", show_default=True,
              type=click.Choice(["edge", "node"]))
@click.option("--strength", default=1.0, show_default=True, type=float)
@click.option("--noise", default=1.0, show_default=True, type=float)
@click.option("--subnet", default="0,1,2", show_default=True,
              help="comma-separated planted subnetwork node indices")
@click.option("--length", default=295, show_default=True, type=int,
              help="time series length")
@click.option("--window", default=95, show_default=True, type=int)
@click.option("--step", default=10, show_default=True, type=int)
@click.option("--seed", default=None, type=int)
@click.option("--out", required=True, type=click.Path(dir_okay=False, path_type=Path))
def cmd_gen(nodes, per_class, signal, strength, noise, subnet, length, window, step,
            seed, out):
    """Generate a planted-signal synthetic dataset (JSON lines)."""
    seed = _resolve_seed(seed)
    try:
        wc = WindowConfig(width=window, step=step, length=length)
        spec = SynthSpec(nodes=nodes, subnet=tuple(_parse_int_list(subnet, "--subnet")),
                         signal=f"{signal}_signal", strength=strength,
                         graphs_per_class=per_class, noise=noise, seed=seed)
    except ConfigError as exc:
        raise click.UsageError(str(exc)) from exc
    try:
        ds = gen_dataset(spec, wc)
        out.parent.mkdir(parents=True, exist_ok=True)
        save_dataset(ds, out)
        manifest_path = out.with_suffix(out.suffix + ".manifest.json")
        _write_manifest(manifest_path, "gen", seed, ds.metadata, [str(out)])
    except EhcPoolError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(f"wrote {len(ds)} graphs to {out}")


_TRAIN_OPTIONS = [
    click.option("--data", "data_path", required=True,
                 type=click.Path(exists=True, dir_okay=False, path_type=Path)),
    click.option("--gamma", default=5, show_default=True, type=int),
    click.option("--beta-cap", default=3, show_default=True, type=int),
    click.option("--delta", default=0.0, show_default=True, type=float),
    click.option("--lr", default=0.001, show_default=True, type=float),
    click.option("--epochs", default=500, show_default=True, type=int),
    click.option("--folds", default=5, show_default=True, type=int),
    click.option("--repeats", default=10, show_default=True, type=int),
    click.option("--batch-size", default=8, show_default=True, type=int),
    click.option("--conv-channels", default="16,16", show_default=True),
    click.option("--filter-hidden", default=None, type=int),
    click.option("--ablation", default="none", show_default=True,
                 type=click.Choice(["none", "node-only", "edge-only",
                                    "feature-select", "fc-agg"])),
    click.option("--jobs", default=1, show_default=True, type=int),
    click.option("--seed", default=None, type=int),
]


def _with_train_options(fn):
    for opt in reversed(_TRAIN_OPTIONS):
        fn = opt(fn)
    return fn


@main.command("train")
@_with_train_options
@click.option("--save-model", default=None, type=click.Path(dir_okay=False, path_type=Path),
              help="also train on the full dataset and write a checkpoint here")
@click.option("--out", "out_dir", required=True,
              type=click.Path(file_okay=False, path_type=Path))
def cmd_train(data_path, gamma, beta_cap, delta, lr, epochs, folds, repeats,
              batch_size, conv_channels, filter_hidden, ablation, jobs, seed,
              save_model, out_dir):
    """Cross-validate on a dataset; write metrics.csv and loss_history.csv."""
    seed = _resolve_seed(seed)
    cfg = _model_config(gamma, beta_cap, delta, lr, epochs, batch_size, folds,
                        repeats, conv_channels, filter_hidden, ablation, seed, jobs)
    try:
        dataset = load_dataset(data_path)
        summary = cross_validate(dataset, cfg)
        out_dir.mkdir(parents=True, exist_ok=True)
        metrics_path = out_dir / "metrics.csv"
        history_path = out_dir / "loss_history.csv"
        write_metrics_csv(summary, metrics_path)
        write_loss_history_csv(summary, history_path)
        outputs = [str(metrics_path), str(history_path)]
        if save_model is not None:
            rng = np.random.default_rng(np.random.SeedSequence([cfg.seed]))
            net = Network(dataset.node_dim, dataset.edge_dim, cfg, rng)
            train_network(net, dataset.graphs, cfg, rng)
            net.save(save_model)
            outputs.append(str(save_model))
        from .network import _config_to_json

        _write_manifest(out_dir / "manifest.json", "train", seed,
                        {"data": str(data_path), "ablation": ablation,
                         "model": _config_to_json(cfg)}, outputs)
    except EhcPoolError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(f"ACC {summary.mean('acc'):.4f} ({summary.std('acc'):.4f}) "
               f"over {len(summary.results)} fold runs")


@main.command("sweep")
@_with_train_options
@click.option("--gammas", default="1,2,3,4,5", show_default=True)
@click.option("--beta-caps", default="2,3,4", show_default=True)
@click.option("--out", "out_dir", required=True,
              type=click.Path(file_okay=False, path_type=Path))
def cmd_sweep(data_path, gamma, beta_cap, delta, lr, epochs, folds, repeats,
              batch_size, conv_channels, filter_hidden, ablation, jobs, seed,
              gammas, beta_caps, out_dir):
    """Grid of cross-validations over gamma and the cluster-size cap."""
    seed = _resolve_seed(seed)
    cfg = _model_config(gamma, beta_cap, delta, lr, epochs, batch_size, folds,
                        repeats, conv_channels, filter_hidden, ablation, seed, jobs)
    gamma_list = _parse_int_list(gammas, "--gammas")
    cap_list = _parse_int_list(beta_caps, "--beta-caps")
    try:
        dataset = load_dataset(data_path)
        cells = sensitivity_sweep(dataset, gamma_list, cap_list, cfg)
        out_dir.mkdir(parents=True, exist_ok=True)
        sweep_path = out_dir / "sweep.csv"
        write_sweep_csv(cells, sweep_path)
        from .network import _config_to_json

        _write_manifest(out_dir / "manifest.json", "sweep", seed,
                        {"data": str(data_path), "gammas": gamma_list,
                         "beta_caps": cap_list, "model": _config_to_json(cfg)},
                        [str(sweep_path)])
    except EhcPoolError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(f"wrote {len(cells)} sweep cells to {sweep_path}")


@main.command("export-clusters")
@click.option("--model", "model_path", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--data", "data_path", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--out", required=True, type=click.Path(dir_okay=False, path_type=Path))
def cmd_export_clusters(model_path, data_path, out):
    """Run pooling on every graph and export cluster assignments as JSON lines."""
    try:
        net = Network.load(model_path)
        dataset = load_dataset(data_path)
        if dataset.node_dim != net.node_dim or dataset.edge_dim != net.edge_dim:
            raise CheckpointMismatch(
                f"checkpoint dims ({net.node_dim},{net.edge_dim}) do not match "
                f"data dims ({dataset.node_dim},{dataset.edge_dim})")
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", encoding="utf-8") as fh:
            for gid, g in enumerate(dataset):
                batch = Batch([g], [GraphArrays(g)])
                _, assignments = net.forward_batch(batch, training=False)
                fh.write(json.dumps(assignment_record(gid, assignments[0],
                                                      g.edge_list)) + "\n")
        _write_manifest(out.with_suffix(out.suffix + ".manifest.json"),
                        "export-clusters", 0,
                        {"model": str(model_path), "data": str(data_path)}, [str(out)])
    except EhcPoolError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(f"exported {len(dataset)} assignments to {out}")


if __name__ == "__main__":
    sys.exit(main())
