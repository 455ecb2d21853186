import csv
import os
from typing import Any, Dict, List, Optional, Sequence

from ..utility.errors import BUG_TAG


def _cell(value: Any) -> Any:
    if isinstance(value, float):
        return repr(value)
    return value


class CSVExporter:
    """
    Writes report rows (lists of dicts) to CSV files in a run directory.

    Floats are written with ``repr`` so identical rows always give
    byte-identical files.
    """
    def __init__(self, output_dir: str):
        """
        Initializes the CSVExporter with the directory where CSV files will be saved.

        Args:
            output_dir (str): The directory where the CSV files will be saved.
        """
        self.output_dir = output_dir

    def export(self, rows: List[Dict[str, Any]], filename: str = "report.csv",
               columns: Optional[Sequence[str]] = None) -> str:
        """
        Exports rows to a CSV file with a header row.

        Args:
            rows (List[Dict[str, Any]]): The rows to export.
            filename (str, optional): The name of the CSV file to create. Defaults to "report.csv".
            columns (Optional[Sequence[str]]): Column order; defaults to the first row's keys.

        Returns:
            str: The path to the created CSV file.
        """
        filepath = os.path.join(self.output_dir, filename)
        headers = list(columns) if columns is not None else (list(rows[0].keys()) if rows else [])
        try:
            with open(filepath, mode="w", newline='', encoding="utf-8") as csv_file:
                writer = csv.DictWriter(csv_file, fieldnames=headers, lineterminator="\n")
                writer.writeheader()
                writer.writerows({k: _cell(row.get(k)) for k in headers} for row in rows)
            return filepath
        except OSError as e:
            print(f"{BUG_TAG} CSV export error: {e}")
            raise

    def read(self, filename: str) -> List[Dict[str, str]]:
        """Rows of a previously exported file, as strings."""
        with open(os.path.join(self.output_dir, filename), newline='', encoding="utf-8") as csv_file:
            return list(csv.DictReader(csv_file))
