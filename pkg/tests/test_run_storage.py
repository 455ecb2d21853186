import numpy as np
import pytest

from ReplayLab.handler.run_storage import RunStorage
from ReplayLab.modules.csv import CSVExporter
from ReplayLab.utility.errors import ProtocolError
from ReplayLab.utility.utils import canonical_json, flatten_json, hash_file, hash_json, to_jsonable


@pytest.fixture
def storage(tmp_path):
    return RunStorage(str(tmp_path / "run"))


class TestUtils:
    def test_to_jsonable(self):
        data = {"a": np.array([1, 2]), "b": np.float64(0.5), "c": (np.int64(3),), "d": {2, 1}, "e": np.bool_(True)}
        assert to_jsonable(data) == {"a": [1, 2], "b": 0.5, "c": [3], "d": [1, 2], "e": True}

    def test_canonical_json_sorts_keys(self):
        assert canonical_json({"b": 1, "a": [0.1]}) == '{"a":[0.1],"b":1}'
        assert hash_json({"b": 1, "a": 2}) == hash_json({"a": 2, "b": 1})

    def test_flatten(self):
        assert flatten_json({"rsd": {"T_exp": 5}, "methods": ["GE"]}) == {"rsd/T_exp": 5, "methods": ["GE"]}


class TestRunStorage:
    def test_json_round_trip(self, storage):
        path = storage.save_json(storage.path("nested", "x.json"), {"b": 2, "a": [1.5]})
        assert storage.load_json(path) == {"a": [1.5], "b": 2}
        assert storage.relpath(path) == "nested/x.json"

    def test_checkpoint(self, storage):
        storage.save_checkpoint("RAPO", 3, {"weights": [1.0]})
        assert storage.load_checkpoint("RAPO", 3) == {"weights": [1.0]}
        assert storage.checkpoint_hash("RAPO", 3) == hash_file(storage.checkpoint_path("RAPO", 3))

    def test_missing_checkpoint(self, storage):
        with pytest.raises(ProtocolError):
            storage.load_checkpoint("RAPO", 0)

    def test_records_in_seed_order(self, storage):
        for graph_seed, episode_seed in [(10, 2), (2, 11), (2, 3), (10, 1)]:
            storage.save_record("GE", graph_seed, episode_seed,
                                {"graph_seed": graph_seed, "episode_seed": episode_seed,
                                 "field_snapshots": [{"step": 1}]})
        order = [(r["graph_seed"], r["episode_seed"]) for r in storage.iter_records("GE")]
        assert order == [(2, 3), (2, 11), (10, 1), (10, 2)]
        assert storage.load_jsonl(storage.fields_path("GE", 2, 3)) == [{"step": 1}]

    def test_no_records(self, storage):
        assert list(storage.iter_records("SS")) == []

    def test_manifest(self, storage):
        assert storage.load_manifest() is None
        storage.save_manifest({"seeds": (np.int64(1),)})
        assert storage.load_manifest() == {"seeds": [1]}

    def test_writes_are_byte_identical(self, storage):
        a = storage.save_json(storage.path("a.json"), {"x": 0.1, "y": [1, 2]})
        b = storage.save_json(storage.path("b.json"), {"y": [1, 2], "x": 0.1})
        assert hash_file(a) == hash_file(b)


class TestCSVExporter:
    def test_export_and_read(self, tmp_path):
        exporter = CSVExporter(str(tmp_path))
        exporter.export([{"method": "GE", "rag": 0.1}, {"method": "RAPO", "rag": 1 / 3}], "r.csv")
        rows = exporter.read("r.csv")
        assert rows == [{"method": "GE", "rag": "0.1"}, {"method": "RAPO", "rag": repr(1 / 3)}]

    def test_column_order(self, tmp_path):
        exporter = CSVExporter(str(tmp_path))
        path = exporter.export([{"b": 1, "a": 2}], "c.csv", columns=["a", "b"])
        with open(path, encoding="utf-8") as handle:
            assert handle.readline() == "a,b\n"

    def test_empty_rows_with_columns(self, tmp_path):
        exporter = CSVExporter(str(tmp_path))
        exporter.export([], "e.csv", columns=["method"])
        assert exporter.read("e.csv") == []
