import csv
import os
from typing import Any, Iterable, List, Sequence, Union

import numpy as np

from landau_lab.core.utils.config import CSV_FLOAT_FORMAT


def format_cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), CSV_FLOAT_FORMAT)
    return str(value)


def write_csv(
    path: Union[str, os.PathLike], header: Sequence[str], rows: Iterable[Sequence[Any]]
) -> Union[str, os.PathLike]:
    """
    Write rows with a fixed column order and round-trip float formatting.

    Returns:
        the path written.
    """
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"Row {row} does not match header {header}.")
            writer.writerow([format_cell(v) for v in row])
    return path


def read_csv(path: Union[str, os.PathLike]) -> List[List[str]]:
    with open(path, newline="") as f:
        return list(csv.reader(f))
