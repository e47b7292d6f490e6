"""Batch entry point: fit, relabel, classify, calibrate, summarize.

``mixalign --input data.csv --out results/`` runs the whole pipeline and
writes chain.bin, labels.csv, calibrated.csv, diagnostics.csv,
marginals.csv, and run_manifest.json into the output directory. Sweep
mode (``--sweep 0.2,1.0``) repeats the pipeline per coarsening level in
per-zeta subdirectories and adds sweep.csv. Flags override values from
``--config`` (a JSON file; a previously written manifest also works).
"""

import argparse
import json
import logging
import os
import sys
import traceback
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import scipy

from . import __version__, calibrate, chainio, dataio, diagnostics, sampler
from .sampler import SamplerConfig
from .state import Hyper

logger = logging.getLogger(__name__)

WORKERS_ENV = "MIXALIGN_WORKERS"
FAILURE_MARKER = "FAILED"


@dataclass
class RunConfig:
    """Everything a run needs; serialized verbatim into the manifest."""

    input_path: str
    output_dir: str
    zeta: float = 0.2
    k_max: int = 150
    particles: int = 20
    merge_threshold: float = 0.25
    a_eta: float = 1.0
    b_eta: float = 1.0
    n_iter: int = 2000
    n_burn: int = 1000
    thin: int = 5
    seed: int = 0
    workers: int = 1
    mh_adapt_target: float = 0.35
    merge_check_every: int = 1
    min_weight: float = 0.01
    marginal_bins: int = 64
    zetas: list = None  # sweep mode when set
    do_calibrate: bool = True
    do_diagnostics: bool = True

    def hyper_for(self, data, zeta=None):
        return Hyper.from_data(
            data,
            zeta=self.zeta if zeta is None else zeta,
            K=self.k_max,
            M=self.particles,
            merge_threshold=self.merge_threshold,
            a_eta=self.a_eta,
            b_eta=self.b_eta,
        )

    def sampler_config(self):
        return SamplerConfig(
            n_iter=self.n_iter,
            n_burn=self.n_burn,
            thin=self.thin,
            seed=self.seed,
            mh_adapt_target=self.mh_adapt_target,
            merge_check_every=self.merge_check_every,
            workers=self.workers,
        )


def _write_manifest(config, out_dir):
    manifest = {
        "config": asdict(config),
        "seed": config.seed,
        "versions": {
            "mixalign": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": sys.version.split()[0],
        },
    }
    with open(os.path.join(out_dir, "run_manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)


def _run_single(config, data, out_dir, zeta=None):
    """Fit and write all artifacts for one coarsening level; returns the
    (counts, alignment) summary."""
    hyper = config.hyper_for(data, zeta)
    chain = sampler.run(data, hyper, config.sampler_config())
    chainio.write_chain(os.path.join(out_dir, "chain.bin"), chain, data.n)
    aligned = calibrate.relabel(chain)
    labels = calibrate.classify(aligned)
    dataio.write_labels(os.path.join(out_dir, "labels.csv"), data, labels)
    counts = None
    score = float("nan")
    if config.do_calibrate:
        result = calibrate.calibrate(chain, data, labels)
        dataio.write_calibrated(
            os.path.join(out_dir, "calibrated.csv"), data, result
        )
    if config.do_diagnostics:
        counts = diagnostics.active_clusters(labels, data, config.min_weight)
        if config.do_calibrate:
            score = diagnostics.alignment_score(data, result)
        dataio.write_diagnostics(
            os.path.join(out_dir, "diagnostics.csv"),
            data,
            counts,
            score,
            config.min_weight,
        )
        table = diagnostics.marginal_export(
            result.y_tilde if config.do_calibrate else data.y,
            data.sample_of,
            data.J,
            config.marginal_bins,
        )
        dataio.write_marginals(os.path.join(out_dir, "marginals.csv"), data, table)
    return counts, score


def run_pipeline(config):
    """Execute the configured pipeline; returns a process exit status.

    On failure the partially written artifacts are retained and a FAILED
    marker file holding the traceback is left in the output directory.
    """
    out_dir = config.output_dir
    os.makedirs(out_dir, exist_ok=True)
    try:
        _write_manifest(config, out_dir)
        data = dataio.ingest(config.input_path)
        if config.zetas:
            rows = []
            for zeta in config.zetas:
                sub = os.path.join(out_dir, f"zeta_{zeta:g}")
                os.makedirs(sub, exist_ok=True)
                try:
                    counts, score = _run_single(config, data, sub, zeta=zeta)
                    constant = counts is not None and bool(np.all(counts == counts[0]))
                    rows.append(
                        diagnostics.SweepRow(zeta, counts, score, constant)
                    )
                except Exception as exc:
                    logger.error("sweep run zeta=%s failed: %s", zeta, exc)
                    rows.append(
                        diagnostics.SweepRow(zeta, None, float("nan"), False, str(exc))
                    )
            dataio.write_sweep(os.path.join(out_dir, "sweep.csv"), data, rows)
        else:
            _run_single(config, data, out_dir)
        return 0
    except Exception:
        with open(os.path.join(out_dir, FAILURE_MARKER), "w") as fh:
            fh.write(traceback.format_exc())
        logger.error("pipeline failed:\n%s", traceback.format_exc())
        return 1


def _config_from_args(args):
    values = {}
    if args.config:
        with open(args.config) as fh:
            loaded = json.load(fh)
        # a manifest written by a previous run is also a valid config file
        values.update(loaded.get("config", loaded))
    flag_map = {
        "input": "input_path",
        "out": "output_dir",
        "zeta": "zeta",
        "k_max": "k_max",
        "iters": "n_iter",
        "burn": "n_burn",
        "thin": "thin",
        "seed": "seed",
        "particles": "particles",
        "merge_threshold": "merge_threshold",
        "workers": "workers",
        "min_weight": "min_weight",
    }
    for flag, key in flag_map.items():
        val = getattr(args, flag)
        if val is not None:
            values[key] = val
    if args.sweep is not None:
        values["zetas"] = [float(z) for z in args.sweep.split(",") if z.strip()]
    if args.no_calibrate:
        values["do_calibrate"] = False
    if args.no_diagnostics:
        values["do_diagnostics"] = False
    if "workers" not in values or values["workers"] is None:
        values["workers"] = int(os.environ.get(WORKERS_ENV, "1"))
    if "input_path" not in values or "output_dir" not in values:
        raise SystemExit("--input and --out are required (via flags or --config)")
    return RunConfig(**values)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mixalign",
        description="Joint clustering and cross-sample calibration of "
        "multi-sample tabular data.",
    )
    parser.add_argument("--input", help="input CSV (sample_id + marker columns)")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--config", help="JSON config file (flags override it)")
    parser.add_argument("--zeta", type=float, help="coarsening level in (0, 1]")
    parser.add_argument("--k-max", dest="k_max", type=int, help="cluster truncation")
    parser.add_argument("--iters", type=int, help="total sweeps")
    parser.add_argument("--burn", type=int, help="burn-in sweeps")
    parser.add_argument("--thin", type=int, help="store every thin-th sweep")
    parser.add_argument("--seed", type=int, help="RNG seed")
    parser.add_argument("--particles", type=int, help="PMC particles per cluster")
    parser.add_argument(
        "--merge-threshold",
        dest="merge_threshold",
        type=float,
        help="symmetrized-KL merge cutoff",
    )
    parser.add_argument(
        "--sweep", help="comma-separated zetas; run once per value"
    )
    parser.add_argument(
        "--workers",
        type=int,
        help=f"parallel workers (default ${WORKERS_ENV} or 1)",
    )
    parser.add_argument(
        "--min-weight",
        dest="min_weight",
        type=float,
        help="relative-frequency cutoff for active-cluster counts",
    )
    parser.add_argument("--no-calibrate", action="store_true")
    parser.add_argument("--no-diagnostics", action="store_true")
    parser.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    config = _config_from_args(args)
    return run_pipeline(config)


if __name__ == "__main__":
    sys.exit(main())
