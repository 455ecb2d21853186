import os
import math
import logging
from typing import Any, Dict, List, Optional, Sequence
from .handler import (
    DiffusionGraph, RunConfig, RunStorage, generate_graph
)
from .modules import (
    CSVExporter, MethodSuite, CheckReport, evaluation_order, run_sweep, run_verification
)
from .modules.metrics import aggregate
from .utility import BUG_TAG, INFO_TAG, ReplayLabError, hash_file, flatten_json

RUNS_DIR = 'runs'
LOG_FILE = 'replaylab.log'


def setup_logging(enable_log: bool, log_dir: str = RUNS_DIR):
    if enable_log:
        if not os.path.exists(log_dir):
            os.makedirs(log_dir)
        logging.basicConfig(filename=os.path.join(log_dir, LOG_FILE), level=logging.INFO,
                            format='%(asctime)s - %(levelname)s - %(message)s')


def _finite_or_none(value: float) -> Optional[float]:
    return value if isinstance(value, float) and math.isfinite(value) else None


class ReplayLab:
    """
    One experiment run: a validated config bound to its run directory.

    The run directory holds the config snapshot, the manifest, checkpoints,
    episode records, field logs and the CSV reports. Everything in it except
    the optional log file is a deterministic function of the config.

    Args:
        config (RunConfig): The validated run config.
        run_id (Optional[str]): Directory name under ``runs_dir``. Defaults to
            ``run-`` plus the first 12 hex digits of the config hash.
        runs_dir (str): Parent directory of all runs. Defaults to "runs".
        workers (int): Parallel episode workers. Defaults to 1.
        enable_log (bool): Enables logging to ``replaylab.log`` in the run directory. Defaults to False.
    """
    def __init__(self, config: RunConfig, run_id: Optional[str] = None, runs_dir: str = RUNS_DIR,
                 workers: int = 1, enable_log: bool = False):
        self.config = config
        self.run_id = run_id or f"run-{config.config_hash[:12]}"
        self.run_dir = os.path.join(runs_dir, self.run_id)
        self.workers = max(1, int(workers))
        self.enable_log = enable_log
        self.storage = RunStorage(self.run_dir, enable_log)
        self.csv_exporter = CSVExporter(self.run_dir)
        setup_logging(self.enable_log, self.run_dir)

    @classmethod
    def from_config_file(cls, path: str, run_id: Optional[str] = None, runs_dir: str = RUNS_DIR,
                         workers: int = 1, enable_log: bool = False) -> "ReplayLab":
        """Load and validate a config file (honouring ``REPLAYLAB_SEED``) before anything is computed."""
        return cls(RunConfig.load(path), run_id, runs_dir, workers, enable_log)

    @classmethod
    def open(cls, run_dir: str, workers: int = 1, enable_log: bool = False) -> "ReplayLab":
        """Reopen an existing run from its config snapshot."""
        snapshot = RunStorage(run_dir).load_json(os.path.join(run_dir, "config.json"))
        runs_dir, run_id = os.path.split(os.path.normpath(run_dir))
        return cls(RunConfig(snapshot), run_id, runs_dir or ".", workers, enable_log)

    def _suite(self) -> MethodSuite:
        return MethodSuite(self.config, self.storage, workers=self.workers, enable_log=self.enable_log)

    def _snapshot_config(self) -> None:
        self.storage.save_config(self.config.canonical())

    # ==================================================
    #                     GRAPHS
    # --------------------------------------------------
    # ==================================================

    @staticmethod
    def generate_graph(nodes: int, branching: float, sens_fraction: float, seed: int, out: str) -> DiffusionGraph:
        """
        Generate a diffusion graph and write it as canonical JSON.

        Args:
            nodes (int): Node count.
            branching (float): Target mean branching factor.
            sens_fraction (float): Fraction of nodes in the sensitive subgraph.
            seed (int): Graph seed.
            out (str): Output file.

        Returns:
            DiffusionGraph: The generated graph.
        """
        graph = generate_graph(nodes, branching, seed=seed, sens_fraction=sens_fraction)
        RunStorage(os.path.dirname(out) or ".").save_json(out, graph.to_json())
        print(f"🎉 Graph written to {out}: {graph.node_count} nodes, {graph.edge_count} edges, "
              f"{int(graph.sensitive.sum())} sensitive")
        return graph

    # ==================================================
    #                 TRAIN / EVALUATE
    # --------------------------------------------------
    # ==================================================

    def train(self, method_id: str, graph_seed: int) -> Dict[str, Any]:
        """
        Train one method on one graph and store its frozen checkpoint.

        Methods that evaluate another method's checkpoint (Shield, Shield-UM,
        RAPO-off@rep) copy it byte for byte, so the source must be trained first.
        """
        self._snapshot_config()
        checkpoint = self._suite().train(method_id, graph_seed)
        path = self.storage.checkpoint_path(method_id, graph_seed)
        print(f"🎉 {method_id} checkpoint for graph {graph_seed} saved to {path}")
        return checkpoint

    def rsd_eval(self, method_id: str, graph_seed: int) -> Dict[str, Any]:
        """
        Run the RSD episodes of one stored checkpoint.

        GE records of the same graph (and RAPO records for Shield-UM) must
        already be in the run directory; they are read back, not re-run.

        Returns:
            Dict[str, Any]: The method's aggregated report row on this graph.
        """
        self._snapshot_config()
        suite = self._suite()
        if method_id != "GE":
            suite.restore("GE", graph_seed)
        if method_id == "Shield-UM":
            suite.restore("RAPO", graph_seed)
        result = suite.evaluate(method_id, graph_seed)
        row = aggregate(method_id, graph_seed, result.reports)
        self.csv_exporter.export([row], f"eval_{method_id}_{graph_seed}.csv")
        print(f"🎉 {method_id} on graph {graph_seed}: RAG {row['rag_mean']:.4f}, "
              f"ReplayRet {row['replay_ret_mean']:.4f} over {row['episodes']} episodes")
        return row

    # ==================================================
    #                      RUNS
    # --------------------------------------------------
    # ==================================================

    def _outputs(self) -> List[str]:
        paths = []
        for root, _, files in os.walk(self.run_dir):
            for name in files:
                if name in ("manifest.json", LOG_FILE):
                    continue
                paths.append(self.storage.relpath(os.path.join(root, name)))
        return sorted(paths)

    def _write_manifest(self, suite: MethodSuite, methods: Sequence[str], rows: Sequence[Dict[str, Any]],
                        error: Optional[str] = None) -> Dict[str, Any]:
        status = {m: dict(suite.status.get(m, {"status": "pending", "graphs": []})) for m in methods}
        if error is not None:
            for entry in status.values():
                if entry["status"] != "done":
                    entry["status"] = "failed"
        rho, p_value = suite.correlation(rows) if rows else (math.nan, math.nan)
        manifest = {
            "run_id": self.run_id,
            "config_hash": self.config.config_hash,
            "config_snapshot_hash": hash_file(self.storage.path("config.json")),
            "seeds": {
                "master": self.config.master_seed,
                "graph_seeds": self.config.graph_seeds,
                "episode_seeds": self.config.episode_seeds(),
            },
            "methods": status,
            "outputs": self._outputs(),
            "shield_tunings": suite.shield_tunings(),
            "odds_rag_spearman": {"rho": _finite_or_none(rho), "p_value": _finite_or_none(p_value)},
            "error": error,
        }
        self.storage.save_manifest(manifest)
        return manifest

    def run(self, methods: Optional[Sequence[str]] = None) -> Dict[str, Any]:
        """
        Train, freeze and evaluate every configured method on every graph seed.

        Writes report.csv, summary.csv, significance.csv, the JSONL records and
        the manifest. A failure still writes the manifest, marking the methods
        that did not finish, then re-raises.

        Returns:
            Dict[str, Any]: The manifest.
        """
        methods = list(self.config.methods if methods is None else methods)
        self._snapshot_config()
        suite = self._suite()
        try:
            rows = suite.run(methods)
        except ReplayLabError as e:
            self._write_manifest(suite, evaluation_order(methods), [], error=str(e))
            print(f"{BUG_TAG} Run {self.run_id} stopped: {e}")
            if self.enable_log:
                logging.error(f"Run {self.run_id} failed: {e}")
            raise
        manifest = self._write_manifest(suite, evaluation_order(methods), rows)
        print(f"🎉 Run {self.run_id} finished: {len(rows)} report rows in {self.storage.path('report.csv')}")
        return manifest

    def sweep(self) -> List[Dict[str, Any]]:
        """RAPO over the configured (w_H, eta) grid; rows go to sweep.csv."""
        self._snapshot_config()
        rows = run_sweep(self.config, self.storage, workers=self.workers, enable_log=self.enable_log)
        print(f"🎉 Sweep finished: {len(rows)} grid points in {self.storage.path('sweep.csv')}")
        return rows

    def report(self) -> List[Dict[str, Any]]:
        """
        Rebuild report.csv, summary.csv and significance.csv from the stored
        JSONL records, without running any episode.
        """
        methods = self.config.methods
        suite = self._suite()
        for graph_seed in self.config.graph_seeds:
            for method_id in evaluation_order(methods):
                suite.restore(method_id, graph_seed)
        rows = suite.write_reports(methods)
        rho, _ = suite.correlation(rows)
        print(f"🎉 Report rebuilt from stored records: {len(rows)} rows")
        if math.isfinite(rho):
            print(f"{INFO_TAG} Spearman(OddsRatio, RAG) over {len(rows)} runs: {rho:.3f}")
        return rows

    def describe(self) -> Dict[str, Any]:
        """The validated config as flat slash paths."""
        return flatten_json(self.config.data)

    # ==================================================
    #                  VERIFICATION
    # --------------------------------------------------
    # ==================================================

    @staticmethod
    def verify(trials: int = 10_000, episodes: int = 100, seed: int = 0) -> List[CheckReport]:
        """Run the verification suite and print one pass/fail line per check."""
        reports = run_verification(trials, episodes, seed)
        for report in reports:
            if report.passed:
                print(f"🎉 {report.summary()}")
            else:
                print(f"{BUG_TAG} {report.summary()}")
        return reports
