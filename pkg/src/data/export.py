"""
Dataset CSV export/import.

Format: header ``class,id,x0,...,x{d-1}``, one row per sample. Values are
written with repr() so an export/import cycle is lossless.
"""

import csv
from pathlib import Path
from typing import Union

import numpy as np
from loguru import logger

from src.data.domain import LabeledDataset
from src.utils.errors import ContractError


def export_dataset(dataset: LabeledDataset, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class", "id"] + [f"x{j}" for j in range(dataset.input_dim)])
        for label, row_id, row in zip(dataset.y, dataset.ids, dataset.x):
            writer.writerow([int(label), int(row_id)] + [repr(float(v)) for v in row])
    logger.info(f"Exported {len(dataset)} rows to {path}")
    return path


def import_dataset(path: Union[str, Path]) -> LabeledDataset:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["class", "id"]:
            raise ContractError(f"{path}: expected header starting with class,id")
        dim = len(header) - 2
        labels, ids, rows = [], [], []
        for line_no, record in enumerate(reader, start=2):
            if len(record) != dim + 2:
                raise ContractError(f"{path}:{line_no}: expected {dim + 2} fields, got {len(record)}")
            labels.append(int(record[0]))
            ids.append(int(record[1]))
            rows.append([float(v) for v in record[2:]])

    x = np.array(rows, dtype=np.float64).reshape(len(rows), dim)
    return LabeledDataset(
        x=x, y=np.array(labels, dtype=np.int64), ids=np.array(ids, dtype=np.int64)
    )
