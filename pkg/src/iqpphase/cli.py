"""Command-line interface.

Every option can also be set in a YAML file passed with ``--config``; the
file holds one mapping per subcommand, keyed by the subcommand name, e.g.::

    simulate:
      n_qubits: 12
      q: 0.04
      seed: 7
    train-ebm:
      epochs: 2000
"""
from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click
import numpy as np
import yaml

from . import circuit, diagnostics, ebm, experiments, hamiltonian
from .errors import IQPError


def _load_config(ctx, _param, value):
    if value is None:
        return None
    with open(value) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise click.BadParameter("config file must contain a mapping of subcommand sections")
    ctx.default_map = {cmd: dict(section or {}) for cmd, section in data.items()}
    return value


def instance_options(f):
    """Options selecting a circuit: either ``--instance FILE`` or (N, q, seed)."""
    f = click.option("--family", type=click.Choice(circuit.FAMILIES), default="D", show_default=True,
                     help="D: Z_{not i} circuit (distribution p); F: conventional IQP (r).")(f)
    f = click.option("--seed", type=int, default=0, show_default=True)(f)
    f = click.option("--q", "q", type=click.FloatRange(0.0, 1.0), default=0.0, show_default=True,
                     help="Two-qubit gate density.")(f)
    f = click.option("--n-qubits", "-n", type=int, default=8, show_default=True)(f)
    f = click.option("--instance", "instance_path", type=click.Path(exists=True, dir_okay=False),
                     help="Instance JSON (overrides --n-qubits/--q/--seed).")(f)
    return f


def _instance(instance_path, n_qubits, q, seed):
    if instance_path:
        return circuit.CircuitInstance.from_json(Path(instance_path))
    return circuit.sample_instance(n_qubits, q, seed)


def _distribution(dist_path, instance_path, n_qubits, q, seed, family):
    if dist_path:
        return np.load(dist_path)
    return circuit.distribution(_instance(instance_path, n_qubits, q, seed), family)


def _emit(obj):
    click.echo(json.dumps(obj, indent=2))


@click.group()
@click.option("--config", type=click.Path(exists=True, dir_okay=False), callback=_load_config,
              is_eager=True, expose_value=False, help="YAML file with per-subcommand defaults.")
@click.option("-v", "--verbose", count=True)
def main(verbose):
    """Exact simulation and parent-Hamiltonian analysis of gate-density IQP circuits."""
    logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2), format="%(levelname)s %(message)s")


@main.command()
@instance_options
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Distribution file (.npy).")
@click.option("--instance-out", type=click.Path(dir_okay=False), help="Also write the instance JSON.")
def simulate(instance_path, n_qubits, q, seed, family, out, instance_out):
    """Simulate one instance and write its output distribution."""
    inst = _instance(instance_path, n_qubits, q, seed)
    probs = circuit.distribution(inst, family)
    np.save(out, probs)
    if instance_out:
        inst.to_json(instance_out)
    _emit({"n_qubits": inst.n_qubits, "q": inst.q, "seed": inst.seed, "family": family,
           "couplings": len(inst.phi), "degenerate": inst.degenerate, "out": str(out)})


@main.command()
@click.option("--dist", "dist_path", type=click.Path(exists=True, dir_okay=False),
              help="Distribution .npy (otherwise simulate from instance options).")
@instance_options
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Binary spectrum file.")
def reconstruct(dist_path, instance_path, n_qubits, q, seed, family, out):
    """Reconstruct the coupling spectrum J(y) and write it with a JSON summary."""
    spec = hamiltonian.reconstruct(_distribution(dist_path, instance_path, n_qubits, q, seed, family))
    hamiltonian.save_spectrum(spec, out)
    _emit(spec.summary())


@main.command()
@click.option("--spectrum", "spectrum_path", type=click.Path(exists=True, dir_okay=False),
              help="Binary spectrum file (otherwise simulate from instance options).")
@instance_options
@click.option("--epsilon", type=float, default=1e-3, show_default=True, help="Target L1 error.")
@click.option("--out", type=click.Path(dir_okay=False), help="Write the truncated spectrum here.")
def truncate(spectrum_path, instance_path, n_qubits, q, seed, family, epsilon, out):
    """Find the largest truncation threshold meeting an L1 target."""
    if spectrum_path:
        dist = hamiltonian.reconstruct_distribution(hamiltonian.load_spectrum(spectrum_path))
    else:
        dist = _distribution(None, instance_path, n_qubits, q, seed, family)
    res = hamiltonian.find_truncation_threshold(dist, epsilon)
    if out:
        hamiltonian.save_spectrum(res.truncated, out)
    _emit({"epsilon": epsilon, "delta": res.delta, "support_size": res.support_size,
           "l1": res.l1, "degenerate": res.degenerate})


@main.command()
@instance_options
@click.option("--floor", type=float, default=diagnostics.DEFAULT_FLOOR, show_default=True,
              help="Discard eigenvalues below this before forming gap ratios.")
@click.option("--ratios-out", type=click.Path(dir_okay=False), help="CSV of unfolded gap ratios.")
def spectra(instance_path, n_qubits, q, seed, family, floor, ratios_out):
    """Entanglement entropy and gap ratios of the half-chain spectrum."""
    inst = _instance(instance_path, n_qubits, q, seed)
    spec = diagnostics.entanglement_spectrum(circuit.output_state(inst, family))
    u = diagnostics.gap_ratios(spec, floor)
    folded = diagnostics.fold_ratios(u)
    if ratios_out:
        diagnostics.write_series_csv(ratios_out, {"u": u})
    _emit({
        "entropy": diagnostics.entanglement_entropy(spec),
        "n_ratios": int(u.size),
        "folded_mean": float(folded.mean()) if folded.size else None,
        "ks_goe": diagnostics.ks_distance(folded, "GOE") if folded.size else None,
        "ks_gue": diagnostics.ks_distance(folded, "GUE") if folded.size else None,
        "ratios": u.tolist(),
    })


@main.command("kl-pt")
@click.option("--dist", "dist_path", type=click.Path(exists=True, dir_okay=False))
@instance_options
@click.option("--bins", type=int, default=diagnostics.PT_BINS, show_default=True)
@click.option("--hist-out", type=click.Path(dir_okay=False), help="CSV of the observed histogram.")
def kl_pt(dist_path, instance_path, n_qubits, q, seed, family, bins, hist_out):
    """KL divergence of the binned outcome probabilities to Porter-Thomas."""
    dist = _distribution(dist_path, instance_path, n_qubits, q, seed, family)
    if hist_out:
        observed, _ = diagnostics.porter_thomas_histogram(dist, bins)
        diagnostics.write_histogram_csv(hist_out, observed)
    _emit({"kl_pt": diagnostics.kl_to_porter_thomas(dist, bins)})


@main.command("train-ebm")
@instance_options
@click.option("--optimizer", type=click.Choice(ebm.ARCHITECTURES), default="adam", show_default=True)
@click.option("--alpha", type=int, default=30, show_default=True, help="Hidden width multiplier (adam).")
@click.option("--learning-rate", type=float, default=1e-3, show_default=True)
@click.option("--beta1", type=float, default=0.9, show_default=True)
@click.option("--beta2", type=float, default=0.999, show_default=True)
@click.option("--batch-size", type=int, default=1024, show_default=True)
@click.option("--epochs", type=int, default=1000, show_default=True)
@click.option("--damping", type=float, default=None, help="NGD damping (default 1e-3 tr(F)/dim).")
@click.option("--trace-out", type=click.Path(dir_okay=False), required=True, help="JSON-lines trace.")
@click.option("--model-out", type=click.Path(dir_okay=False), help="Binary checkpoint.")
def train_ebm(instance_path, n_qubits, q, seed, family, optimizer, alpha, learning_rate, beta1,
              beta2, batch_size, epochs, damping, trace_out, model_out):
    """Train an energy-based model on the circuit distribution (family F by default in sweeps)."""
    inst = _instance(instance_path, n_qubits, q, seed)
    target = circuit.distribution(inst, family)
    cfg = ebm.TrainConfig(optimizer, learning_rate, beta1, beta2, batch_size, epochs, damping,
                          seed=seed)
    model = ebm.init_model(inst.n_qubits, optimizer, alpha, seed=seed)
    try:
        result = ebm.train(target, cfg, model)
        trace = result.trace
    except ebm.TrainingDiverged as exc:
        ebm.write_trace(exc.trace, trace_out)
        raise
    ebm.write_trace(trace, trace_out)
    if model_out:
        ebm.save_model(result.model, model_out)
    _emit({"epochs": len(trace), "params": ebm.param_count(model),
           "final": trace[-1] if trace else None})


@main.command()
@click.argument("sweep_config", type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=None, help="Override master_seed from the sweep file.")
@click.option("--workers", type=int, default=None, help="Override the worker count.")
@click.option("--output-dir", type=click.Path(file_okay=False), default=None)
def sweep(sweep_config, seed, workers, output_dir):
    """Run or resume an (N, q) sweep described by a YAML SweepConfig."""
    with open(sweep_config) as fh:
        data = yaml.safe_load(fh) or {}
    if seed is not None:
        data["master_seed"] = seed
    if workers is not None:
        data["workers"] = workers
    if output_dir is not None:
        data["output_dir"] = output_dir
    cfg = experiments.SweepConfig.from_dict(data)
    with click.progressbar(length=sum(1 for _ in cfg.tasks()), label="instances") as bar:
        report = experiments.run_sweep(cfg, progress=lambda _rec: bar.update(1))
    click.echo(f"{len(report.records)} records, {len(report.rows)} aggregate rows in {cfg.output_dir}")


@main.command()
@click.argument("records", type=click.Path(exists=True, dir_okay=False))
@click.option("--format", "fmt", type=click.Choice(["csv", "json", "both"]), default="csv",
              show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True,
              help="Output path; with --format both the suffix is replaced per format.")
def export(records, fmt, out):
    """Aggregate a records.jsonl file into a per-(N, q) table."""
    report = experiments.aggregate(experiments.RecordStore(records).load())
    out = Path(out)
    for f in (["csv", "json"] if fmt == "both" else [fmt]):
        path = out.with_suffix("." + f) if fmt == "both" else out
        experiments.export(report, f, path)
        click.echo(str(path))


def run():
    try:
        main(standalone_mode=True)
    except IQPError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
