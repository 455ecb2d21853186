import os
import json
import logging
from typing import Any, Dict, Iterator, List, Optional

from ..utility.errors import BUG_TAG, ProtocolError
from ..utility.utils import canonical_json, hash_file, to_jsonable


class RunStorage:
    """
    Handles the files of one run directory: config snapshot, manifest,
    checkpoints, episode records and field logs.

    Layout under ``run_dir``::

        config.json
        manifest.json
        checkpoints/{method}/{graph_seed}.json
        {method}/{graph_seed}/{episode_seed}.jsonl
        {method}/{graph_seed}/{episode_seed}.fields.jsonl
    """
    def __init__(self, run_dir: str, enable_log: bool = False):
        """
        Initializes the RunStorage class.

        Args:
            run_dir (str): Directory owned by this run; created if missing.
            enable_log (bool, optional): Whether to enable logging. Defaults to False.
        """
        self.run_dir = run_dir
        self.enable_log = enable_log
        self._ensure_dir(run_dir)

    def _ensure_dir(self, path: str) -> None:
        if not os.path.exists(path):
            try:
                os.makedirs(path)
            except OSError as e:
                print(f"{BUG_TAG} Couldn't make the run directory '{path}': {e}")
                raise

    def path(self, *parts: Any) -> str:
        return os.path.join(self.run_dir, *(str(p) for p in parts))

    def relpath(self, path: str) -> str:
        return os.path.relpath(path, self.run_dir).replace(os.sep, "/")

    # ==================================================
    #                   RAW FILES
    # --------------------------------------------------
    # ==================================================

    def _write_text(self, path: str, text: str) -> str:
        self._ensure_dir(os.path.dirname(path))
        try:
            with open(path, "w", encoding="utf-8", newline="\n") as file:
                file.write(text)
            if self.enable_log:
                logging.info(f"Wrote {path}")
        except OSError as e:
            print(f"{BUG_TAG} Could not write '{path}': {e}")
            raise
        return path

    def save_json(self, path: str, data: Any) -> str:
        """Write ``data`` as canonical JSON (sorted keys, floats round-trip exactly)."""
        return self._write_text(path, canonical_json(data) + "\n")

    def load_json(self, path: str) -> Any:
        try:
            with open(path, "r", encoding="utf-8") as file:
                data = json.load(file)
            if self.enable_log:
                logging.info(f"Loaded {path}")
            return data
        except (OSError, json.JSONDecodeError) as e:
            print(f"{BUG_TAG} Unable to load '{path}': {e}")
            raise

    def save_jsonl(self, path: str, rows: List[Any]) -> str:
        return self._write_text(path, "".join(canonical_json(row) + "\n" for row in rows))

    def load_jsonl(self, path: str) -> List[Any]:
        try:
            with open(path, "r", encoding="utf-8") as file:
                return [json.loads(line) for line in file if line.strip()]
        except (OSError, json.JSONDecodeError) as e:
            print(f"{BUG_TAG} Unable to load '{path}': {e}")
            raise

    # ==================================================
    #                  RUN ARTEFACTS
    # --------------------------------------------------
    # ==================================================

    def save_config(self, canonical_text: str) -> str:
        """Snapshot the validated config byte-for-byte as its hash was computed."""
        return self._write_text(self.path("config.json"), canonical_text)

    def checkpoint_path(self, method: str, graph_seed: int) -> str:
        return self.path("checkpoints", method, f"{graph_seed}.json")

    def save_checkpoint(self, method: str, graph_seed: int, checkpoint: Dict[str, Any]) -> str:
        path = self.save_json(self.checkpoint_path(method, graph_seed), checkpoint)
        if self.enable_log:
            logging.info(f"Checkpoint saved for {method} on graph {graph_seed}")
        return path

    def load_checkpoint(self, method: str, graph_seed: int) -> Dict[str, Any]:
        path = self.checkpoint_path(method, graph_seed)
        if not os.path.exists(path):
            raise ProtocolError(f"Missing checkpoint for method '{method}' on graph seed {graph_seed}: {path}")
        return self.load_json(path)

    def checkpoint_hash(self, method: str, graph_seed: int) -> str:
        return hash_file(self.checkpoint_path(method, graph_seed))

    def record_path(self, method: str, graph_seed: int, episode_seed: int) -> str:
        return self.path(method, graph_seed, f"{episode_seed}.jsonl")

    def fields_path(self, method: str, graph_seed: int, episode_seed: int) -> str:
        return self.path(method, graph_seed, f"{episode_seed}.fields.jsonl")

    def save_record(self, method: str, graph_seed: int, episode_seed: int, record: Dict[str, Any]) -> List[str]:
        """One record per JSONL file, plus the scar-evolution log next to it."""
        record_file = self.save_jsonl(self.record_path(method, graph_seed, episode_seed), [record])
        fields_file = self.save_jsonl(self.fields_path(method, graph_seed, episode_seed),
                                      record.get("field_snapshots", []))
        return [record_file, fields_file]

    def iter_records(self, method: str) -> Iterator[Dict[str, Any]]:
        """Stored records of ``method``, ordered by (graph seed, episode seed)."""
        base = self.path(method)
        if not os.path.isdir(base):
            return
        for graph_dir in sorted(os.listdir(base), key=_numeric_key):
            folder = os.path.join(base, graph_dir)
            if not os.path.isdir(folder):
                continue
            names = [n for n in os.listdir(folder) if n.endswith(".jsonl") and not n.endswith(".fields.jsonl")]
            for name in sorted(names, key=lambda n: _numeric_key(n.split(".")[0])):
                yield from self.load_jsonl(os.path.join(folder, name))

    def save_manifest(self, manifest: Dict[str, Any]) -> str:
        path = self.save_json(self.path("manifest.json"), to_jsonable(manifest))
        if self.enable_log:
            logging.info(f"Manifest written to {path}")
        return path

    def load_manifest(self) -> Optional[Dict[str, Any]]:
        path = self.path("manifest.json")
        return self.load_json(path) if os.path.exists(path) else None


def _numeric_key(name: str):
    return (0, int(name), "") if name.lstrip("-").isdigit() else (1, 0, name)
