import csv
import io
import json
import logging
import math
from pathlib import Path
from typing import Any, Iterable, List, Union

import numpy as np

logger = logging.getLogger(__name__)


class ReportWriter:
    def __init__(self, digits: int = 17, indent: int = 2):
        self.digits = digits
        self.indent = indent

    def ensure_parent(self, path: Union[str, Path]) -> Path:
        """Create the parent directory of an output file if it doesn't exist"""
        path = Path(path)
        if path.parent and not path.parent.exists():
            path.parent.mkdir(parents=True)
        return path

    def format_float(self, value: float) -> str:
        if not math.isfinite(value):
            return "null"
        return format(value, f".{self.digits}g")

    def _encode(self, obj: Any, level: int) -> str:
        pad = " " * (self.indent * (level + 1))
        close = " " * (self.indent * level)
        if isinstance(obj, np.ndarray):
            obj = obj.tolist()
        if isinstance(obj, (bool, np.bool_)):
            return "true" if obj else "false"
        if isinstance(obj, (int, np.integer)):
            return str(int(obj))
        if isinstance(obj, (float, np.floating)):
            return self.format_float(float(obj))
        if obj is None or isinstance(obj, str):
            return json.dumps(obj)
        if isinstance(obj, dict):
            if not obj:
                return "{}"
            items = [f"{pad}{json.dumps(str(k))}: {self._encode(v, level + 1)}" for k, v in obj.items()]
            return "{\n" + ",\n".join(items) + "\n" + close + "}"
        if isinstance(obj, (list, tuple)):
            if not obj:
                return "[]"
            if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
                return "[" + ", ".join(self._encode(v, level + 1) for v in obj) + "]"
            items = [pad + self._encode(v, level + 1) for v in obj]
            return "[\n" + ",\n".join(items) + "\n" + close + "]"
        raise TypeError(f"Cannot encode {type(obj).__name__} in a report")

    def dumps(self, payload: Any) -> str:
        """JSON text with floats at fixed significant digits"""
        return self._encode(payload, 0) + "\n"

    def write_json(self, path: Union[str, Path], payload: Any) -> Path:
        try:
            path = self.ensure_parent(path)
            path.write_text(self.dumps(payload), encoding="utf-8")
            return path
        except OSError as e:
            logger.error(f"Error writing report {path}: {e}")
            raise

    def dumps_csv(self, header: List[str], rows: Iterable[List[Any]]) -> str:
        """CSV text with floats at fixed significant digits"""
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([self.format_float(v) if isinstance(v, float) else v for v in row])
        return buffer.getvalue()

    def write_csv(self, path: Union[str, Path], header: List[str], rows: Iterable[List[Any]]) -> Path:
        try:
            path = self.ensure_parent(path)
            path.write_text(self.dumps_csv(header, rows), encoding="utf-8")
            return path
        except OSError as e:
            logger.error(f"Error writing table {path}: {e}")
            raise


# Create global report writer instance
report_writer = ReportWriter()
