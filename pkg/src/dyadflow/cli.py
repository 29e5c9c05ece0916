"""Batch command line: ``dyadflow <command> --config cfg.json --seed S --out DIR``.

Every invocation writes ``manifest.json`` into the output directory, also
when the command fails, recording the config hash, seed, library versions,
wall time, exit status and the sha256 of each file produced.

Exit codes: 0 success, 2 input error, 3 provenance refusal, 4 numerical
failure, 1 anything unexpected.
"""

import argparse
import hashlib
import json
import logging
import platform
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import io as dio
from .errors import DyadflowError, InputError, NumericalError
from .gof import STATISTICS, posterior_predictive_gof
from .mcmc import McmcConfig, PosteriorSamples, credible_interval, fit_srm, summarize_posterior
from .network import (IN, OUT, betweenness_scores, closeness_scores, degree_scores,
                      louvain_communities, strength_scores)
from .rng import substream
from .srm import SrmSpec, assemble_design, with_geo_covariates
from .twostage import (EFFECT_SIZE_NOTE, OWN_LEVELS, PredictedTransfers, QualityModelSpec,
                       check_provenance, fit_quality_model, heatmap_export,
                       overall_quality, predict_transfers, summarize_quality)

log = logging.getLogger("dyadflow")

COMMANDS = ("netstats", "communities", "fit-stage1", "gof", "predict", "fit-stage2",
            "simulate", "recovery", "pipeline")
STAGE1_POSTERIOR = "stage1_posterior.json"
STAGE2_POSTERIOR = "stage2_posterior.json"
TRANSFERS = "predicted_transfers.json"


@dataclass
class PipelineConfig:
    """Everything a command needs; paths are resolved against the config file's folder."""

    seed: int = None
    out: str = None
    inputs: dict = field(default_factory=dict)        # nodes, dyads, edges
    artifacts: dict = field(default_factory=dict)     # stage1_posterior, predicted_transfers
    srm_spec: dict = field(default_factory=dict)
    quality_spec: dict = field(default_factory=dict)
    mcmc: dict = field(default_factory=dict)
    stage2_mcmc: dict = None
    dc_threshold: float = 30.0
    outcome: str = "deaths"
    truth: dict = None
    recovery: dict = field(default_factory=lambda: {"replicates": 20, "stage": 1})
    gof_draws: int = None
    base_dir: str = "."

    @classmethod
    def from_dict(cls, d, base_dir="."):
        known = set(cls.__dataclass_fields__) - {"base_dir"}
        unknown = set(d) - known
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d, base_dir=str(base_dir))

    @classmethod
    def load(cls, path):
        path = Path(path)
        if not path.is_file():
            raise InputError(f"config file not found: {path}")
        try:
            d = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
        if not isinstance(d, dict):
            raise InputError(f"{path}: config must be a JSON object")
        return cls.from_dict(d, path.parent)

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "base_dir"}

    def hash(self):
        return hashlib.sha256(dio.dumps(self.to_dict()).encode()).hexdigest()

    def path(self, value):
        p = Path(value)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def input_path(self, name):
        if name not in self.inputs:
            raise InputError(f"config has no input path for {name!r}")
        return self.path(self.inputs[name])

    def srm(self):
        return SrmSpec.from_dict(self.srm_spec)

    def quality(self):
        return QualityModelSpec.from_dict(self.quality_spec)

    def mcmc_config(self, stream, base=None):
        """MCMC settings with a seed derived from the run seed and ``stream``."""
        d = dict(self.mcmc if base is None else base)
        d["seed"] = int(substream(self.seed, stream).integers(2**62))
        return McmcConfig.from_dict(d)


class Run:
    """Output directory plus the bookkeeping for its manifest."""

    def __init__(self, out, command, config, argv):
        self.out = Path(out)
        self.command = command
        self.config = config
        self.argv = list(argv)
        self.outputs = []
        self.start = time.perf_counter()
        self.config_hash = None

    def file(self, name):
        path = self.out / name
        if path not in self.outputs:
            self.outputs.append(path)
        return path

    def csv(self, name, header, rows):
        return dio.write_csv(self.file(name), header, rows)

    def json(self, name, obj):
        return dio.write_json(self.file(name), obj)

    def text(self, name, text):
        return dio.write_text(self.file(name), text)

    def artifact(self, key, default_name):
        """Upstream artifact: explicit config path, else the file in the output folder."""
        if key in self.config.artifacts:
            return self.config.path(self.config.artifacts[key])
        return self.out / default_name

    def manifest(self, status, exit_code, error=None):
        import numba
        import scipy

        cfg = self.config
        outputs = {str(p.relative_to(self.out)): dio.sha256_file(p)
                   for p in self.outputs if p.is_file()}
        return {
            "command": self.command,
            "argv": self.argv,
            "config_hash": self.config_hash,
            "seed": cfg.seed if cfg is not None else None,
            "versions": {"dyadflow": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__,
                         "numba": numba.__version__},
            "wall_time_seconds": time.perf_counter() - self.start,
            "status": status,
            "exit_code": exit_code,
            "error": error,
            "outputs": outputs,
        }


# -- loading ------------------------------------------------------------------


def load_inputs(cfg):
    """Node table (with geographic covariates), dyad table and network."""
    nodes = dio.read_nodes(cfg.input_path("nodes"))
    dyads = dio.read_dyads(cfg.input_path("dyads"), nodes.nodes)
    net = dio.read_edges(cfg.input_path("edges"), nodes.nodes)
    if "DC" not in nodes.columns or "BW" not in nodes.columns:
        nodes = with_geo_covariates(nodes, dyads, cfg.dc_threshold)
    return nodes, dyads, net


def load_posterior(path):
    if not Path(path).is_file():
        raise InputError(f"stage-one posterior not found: {path} (run fit-stage1 first)")
    try:
        return PosteriorSamples.from_json(Path(path).read_text(encoding="utf-8"))
    except (KeyError, ValueError) as exc:
        raise InputError(f"{path}: not a stage-one posterior ({exc})") from None


def stage1_design(cfg, samples=None):
    nodes, dyads, net = load_inputs(cfg)
    spec = cfg.srm() if samples is None else SrmSpec.from_dict(samples.spec)
    return assemble_design(nodes, dyads, net, spec), nodes, net


# -- commands -----------------------------------------------------------------


def _group_rows(net):
    ind, in_c = degree_scores(net, IN)
    outd, out_c = degree_scores(net, OUT)
    ins, outs = strength_scores(net, IN), strength_scores(net, OUT)
    cin, cout = closeness_scores(net, IN), closeness_scores(net, OUT)
    bw = betweenness_scores(net) if net.n else {}
    rows = [(v, ind[v], outd[v], ins[v], outs[v], cin[v], cout[v], bw[v]) for v in net.nodes]
    return rows, (net.n, net.total(), in_c, out_c)


def cmd_netstats(run):
    cfg = run.config
    nodes = dio.read_nodes(cfg.input_path("nodes"))
    net = dio.read_edges(cfg.input_path("edges"), nodes.nodes)
    groups = [("all", net.nodes)]
    if "Public" in nodes.columns:
        public = dict(zip(nodes.nodes, nodes.column("Public")))
        groups += [("public", [v for v in net.nodes if public[v] == 1]),
                   ("private", [v for v in net.nodes if public[v] == 0])]
    header = ["node", "in_degree", "out_degree", "in_strength", "out_strength",
              "in_closeness", "out_closeness", "betweenness"]
    graph_rows = []
    for name, keep in groups:
        rows, (n, total, in_c, out_c) = _group_rows(net.subnetwork(keep))
        run.csv(f"netstats_nodes_{name}.csv", header, rows)
        graph_rows.append((name, n, total, in_c, out_c))
    run.csv("netstats_graph.csv", ["group", "n_nodes", "total_count", "in_degree_centralization",
                                   "out_degree_centralization"], graph_rows)


def cmd_communities(run):
    cfg = run.config
    nodes = dio.read_nodes(cfg.input_path("nodes"))
    net = dio.read_edges(cfg.input_path("edges"), nodes.nodes)
    part = louvain_communities(net, seed=int(substream(cfg.seed, "louvain").integers(2**62)))
    coords = [c for c in ("x", "y") if c in nodes.columns]
    values = {c: dict(zip(nodes.nodes, nodes.columns[c])) for c in coords}
    rows = [(v, part.assignment[v], part.modularity, *(values[c][v] for c in coords))
            for v in net.nodes]
    run.csv("communities.csv", ["node", "community", "modularity", *coords], rows)


def _summary_rows(names, draws, rows):
    lo, hi = credible_interval(draws)
    out = []
    for k, r in enumerate(rows):
        out.append((r["parameter"], r["mean"], r["sd"], lo[k], hi[k], r["pseudo_p"], r["stars"]))
    return out


SUMMARY_HEADER = ["parameter", "mean", "sd", "ci_low", "ci_high", "pseudo_p", "stars"]


def cmd_fit_stage1(run):
    cfg = run.config
    design, _, _ = stage1_design(cfg)
    samples = fit_srm(design, cfg.mcmc_config("fit-stage1"))
    run.csv("stage1_summary.csv", SUMMARY_HEADER,
            _summary_rows(samples.names, samples.draws, summarize_posterior(samples)))
    run.csv("stage1_draws.csv", ["draw", *samples.names],
            [(k, *row) for k, row in enumerate(samples.draws)])
    run.text(STAGE1_POSTERIOR, samples.to_json() + "\n")
    run.json("stage1_acceptance.json", samples.acceptance)


def cmd_gof(run):
    cfg = run.config
    samples = load_posterior(run.artifact("stage1_posterior", STAGE1_POSTERIOR))
    design, _, net = stage1_design(cfg, samples)
    if cfg.gof_draws is not None:
        keep = np.linspace(0, samples.n_draws - 1, int(cfg.gof_draws)).round().astype(int)
        samples = PosteriorSamples(samples.names, samples.draws[keep], samples.beta_draws[keep],
                                   samples.a_draws[keep], samples.b_draws[keep], samples.nodes,
                                   samples.acceptance, samples.spec, samples.config)
    report = posterior_predictive_gof(samples, design, net.matrix(design.nodes),
                                      seed=int(substream(cfg.seed, "gof").integers(2**62)))
    run.text("gof_report.json", report.to_json() + "\n")
    for stat in STATISTICS:
        run.csv(f"gof_{stat}.csv", ["draw", "value"], report.histogram_rows(stat))
    obs = report.observed.as_tuple()
    run.csv("gof_summary.csv", ["statistic", "observed", "quantile", "flagged"],
            [(s, obs[k], report.quantiles[s], s in report.flagged()) for k, s in enumerate(STATISTICS)])


def _predict(run):
    cfg = run.config
    samples = load_posterior(run.artifact("stage1_posterior", STAGE1_POSTERIOR))
    # refuse before touching the data
    check_provenance({"include_quality": samples.include_quality, "effects_excluded": True,
                      "stage1_spec": samples.spec})
    design, _, _ = stage1_design(cfg, samples)
    return predict_transfers(samples, design)


def cmd_predict(run):
    pred = _predict(run)
    run.text(TRANSFERS, pred.to_json() + "\n")
    n = len(pred.nodes)
    rows = [(pred.nodes[i], pred.nodes[j], pred.matrix[i, j]) for i in range(n) for j in range(n) if i != j]
    run.csv("predicted_transfers.csv", ["src", "dst", "predicted"], rows)


def _load_transfers(run):
    path = run.artifact("predicted_transfers", TRANSFERS)
    if path.is_file():
        try:
            return PredictedTransfers.from_json(path.read_text(encoding="utf-8"))
        except (KeyError, json.JSONDecodeError) as exc:
            raise InputError(f"{path}: not a predicted-transfers file ({exc})") from None
    return _predict(run)


def cmd_fit_stage2(run):
    cfg = run.config
    transfers = _load_transfers(run)
    nodes, _, net = load_inputs(cfg)
    if cfg.outcome not in nodes.columns:
        raise InputError(f"node table has no outcome column {cfg.outcome!r}")
    outcome = overall_quality(nodes.nodes, nodes.column(cfg.outcome))
    config2 = cfg.mcmc_config("fit-stage2", cfg.stage2_mcmc if cfg.stage2_mcmc is not None else cfg.mcmc)
    post, design = fit_quality_model(outcome, transfers, cfg.quality(), config2, nodes)
    rows = summarize_quality(post)
    es = 100.0 * (1.0 - np.exp(post.column("transfers")))
    lo, hi = credible_interval(np.column_stack([post.draws, es]))
    out = [(r["parameter"], r["mean"], r["sd"], lo[k], hi[k], r["pseudo_p"], r["stars"])
           for k, r in enumerate(rows)]
    run.csv("stage2_summary.csv", SUMMARY_HEADER, out)
    run.text("stage2_notes.txt", EFFECT_SIZE_NOTE + "\n")
    run.text(STAGE2_POSTERIOR, post.to_json() + "\n")
    header = ["row_id", "col_id", "observed_transfers", "predicted_per_discharge", "log_value", "is_zero"]
    run.csv("heatmap_all.csv", header, heatmap_export(post, design, nodes, net))
    if "Public" in nodes.columns and cfg.quality().ownership:
        for level in OWN_LEVELS:
            run.csv(f"heatmap_{level}.csv", header, heatmap_export(post, design, nodes, net, level))


def cmd_simulate(run):
    from .synth import SyntheticTruth, simulate_stage1

    cfg = run.config
    if cfg.truth is None:
        raise InputError("config has no 'truth' section to simulate from")
    truth = SyntheticTruth.from_dict({**cfg.truth, "seed": int(cfg.seed)})
    nodes, dyads, net = simulate_stage1(truth)
    dio.write_nodes(run.file("data/nodes.csv"), nodes)
    dio.write_dyads(run.file("data/dyads.csv"), dyads)
    dio.write_edges(run.file("data/edges.csv"), net)
    run.json("data/truth.json", truth.to_dict())
    return {"nodes": str(run.out / "data/nodes.csv"), "dyads": str(run.out / "data/dyads.csv"),
            "edges": str(run.out / "data/edges.csv")}


def cmd_recovery(run):
    from .synth import SyntheticTruth, recovery_experiment

    cfg = run.config
    if cfg.truth is None:
        raise InputError("config has no 'truth' section for the recovery experiment")
    rec = dict(cfg.recovery)
    replicates, stage = int(rec.get("replicates", 20)), int(rec.get("stage", 1))
    truth = SyntheticTruth.from_dict({**cfg.truth, "seed": int(cfg.seed)})

    def progress(r, result):
        log.info("replicate %d done in %.1fs", r, result["seconds"])

    report = recovery_experiment(truth, replicates, McmcConfig.from_dict(cfg.mcmc), stage, progress)
    for r in report["runs"]:
        r.pop("seconds", None)  # keeps the report reproducible
    run.json("recovery.json", report)


def cmd_pipeline(run):
    cfg = run.config
    if cfg.truth is not None and not cfg.inputs:
        cfg.inputs = {k: str(Path(v).resolve()) for k, v in cmd_simulate(run).items()}
    for step in (cmd_netstats, cmd_communities, cmd_fit_stage1, cmd_gof, cmd_predict, cmd_fit_stage2):
        log.info("pipeline step %s", step.__name__[4:])
        step(run)


HANDLERS = {"netstats": cmd_netstats, "communities": cmd_communities, "fit-stage1": cmd_fit_stage1,
            "gof": cmd_gof, "predict": cmd_predict, "fit-stage2": cmd_fit_stage2,
            "simulate": cmd_simulate, "recovery": cmd_recovery, "pipeline": cmd_pipeline}


# -- entry point --------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="dyadflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--seed", type=int, help="run seed (overrides the config)")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--threads", type=int, default=1, help="numba worker threads")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _set_threads(n):
    import numba

    if n < 1:
        raise InputError("--threads must be at least 1")
    with warnings.catch_warnings():
        # numba complains about an old TBB even when it falls back to another layer
        warnings.simplefilter("ignore")
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out) if args.out else None
    run = Run(out or Path("."), args.command, None, argv)
    code, status, error = 0, "ok", None
    try:
        cfg = PipelineConfig.load(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if out is None:
            if not cfg.out:
                raise InputError("no output directory: pass --out or set 'out' in the config")
            out = cfg.path(cfg.out)
        run.out, run.config, run.config_hash = out, cfg, cfg.hash()
        if cfg.seed is None:
            raise InputError("no seed: pass --seed or set 'seed' in the config")
        if not 0 <= int(cfg.seed) < 2**64:
            raise InputError("seed must be an unsigned 64-bit integer")
        _set_threads(args.threads)
        run.out.mkdir(parents=True, exist_ok=True)
        HANDLERS[args.command](run)
    except DyadflowError as exc:
        code, status, error = exc.exit_code, type(exc).__name__, str(exc)
        if isinstance(exc, NumericalError) and exc.state:
            run.json("numerical_failure_state.json", exc.state)
        print(f"dyadflow {args.command}: {exc}", file=sys.stderr)
    except Exception as exc:  # noqa: BLE001 - still want a manifest
        code, status, error = 1, type(exc).__name__, str(exc)
        log.exception("unexpected failure")
    run.out.mkdir(parents=True, exist_ok=True)
    dio.write_json(run.out / "manifest.json", run.manifest(status, code, error))
    return code


if __name__ == "__main__":
    sys.exit(main())
