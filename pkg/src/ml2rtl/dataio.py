"""CSV dataset and prediction I/O.

Dataset files carry a header row, float feature columns, and a final integer
label column.  Prediction files carry the row index, the decided class, and
one column per score.
"""

from __future__ import annotations

import csv
import io

import numpy as np

from .model_ir import Dataset


def load_dataset_csv(path: str) -> Dataset:
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or len(header) < 2:
            raise ValueError(f"{path}: need a header row with at least two columns")
        feats = []
        labels = []
        for ln, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}:{ln}: expected {len(header)} columns, got {len(row)}")
            feats.append([float(x) for x in row[:-1]])
            labels.append(int(row[-1]))
    return Dataset(np.array(feats, dtype=np.float64), np.array(labels, dtype=np.int64))


def save_dataset_csv(data: Dataset, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow([f"f{i}" for i in range(data.features.shape[1])] + ["label"])
        for row, label in zip(data.features, data.labels):
            w.writerow([repr(float(x)) for x in row] + [int(label)])


def dataset_csv_bytes(data: Dataset) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow([f"f{i}" for i in range(data.features.shape[1])] + ["label"])
    for row, label in zip(data.features, data.labels):
        w.writerow([repr(float(x)) for x in row] + [int(label)])
    return buf.getvalue().encode("utf-8")


def save_predictions_csv(path: str, preds, scores_list) -> None:
    n_scores = len(scores_list[0].scores) if scores_list else 0
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(["row", "predicted_class"] + [f"score{i}" for i in range(n_scores)])
        for i, (p, s) in enumerate(zip(preds, scores_list)):
            values = [v.value if hasattr(v, "value") else float(v) for v in s.scores]
            w.writerow([i, int(p)] + [repr(v) for v in values])
