"""Dataset container and the delimited file schema.

Columns: s_1..s_dM (structured coordinates), x_1..x_p (unstructured
features), y (response), and optionally f_true (noise-free function values
for error metrics on synthetic data).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd


@dataclass
class Dataset:
    structured: np.ndarray
    unstructured: np.ndarray
    y: np.ndarray | None = None
    f_true: np.ndarray | None = None

    def __post_init__(self):
        self.structured = np.atleast_2d(np.asarray(self.structured, dtype=float))
        self.unstructured = np.asarray(self.unstructured, dtype=float)
        if self.unstructured.ndim == 1:
            self.unstructured = self.unstructured[:, None]
        if self.unstructured.size == 0:
            self.unstructured = np.zeros((self.structured.shape[0], 0))
        if self.y is not None:
            self.y = np.asarray(self.y, dtype=float)
        if self.f_true is not None:
            self.f_true = np.asarray(self.f_true, dtype=float)
        n = self.structured.shape[0]
        if self.unstructured.shape[0] != n:
            raise ValueError("structured and unstructured row counts differ")
        if self.y is not None and len(self.y) != n:
            raise ValueError("y length does not match the feature rows")
        if self.f_true is not None and len(self.f_true) != n:
            raise ValueError("f_true length does not match the feature rows")

    @property
    def n(self) -> int:
        return self.structured.shape[0]

    @property
    def d_m(self) -> int:
        return self.structured.shape[1]

    @property
    def p(self) -> int:
        return self.unstructured.shape[1]

    def to_frame(self) -> pd.DataFrame:
        cols = {f"s_{i + 1}": self.structured[:, i] for i in range(self.d_m)}
        for j in range(self.p):
            cols[f"x_{j + 1}"] = self.unstructured[:, j]
        if self.y is not None:
            cols["y"] = self.y
        if self.f_true is not None:
            cols["f_true"] = self.f_true
        return pd.DataFrame(cols)

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False)

    @classmethod
    def from_csv(cls, path, require_y: bool = True) -> "Dataset":
        try:
            frame = pd.read_csv(path)
        except Exception as exc:  # surface the parser's line diagnostics
            raise ValueError(f"malformed CSV {path}: {exc}") from exc
        return cls.from_frame(frame, require_y=require_y, origin=str(path))

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, require_y: bool = True,
                   origin: str = "data") -> "Dataset":
        s_cols = _numbered(frame.columns, "s_")
        x_cols = _numbered(frame.columns, "x_")
        if not s_cols:
            raise ValueError(f"{origin}: no structured columns s_1..s_d found")
        y = None
        if "y" in frame.columns:
            y = frame["y"].to_numpy(dtype=float)
        elif require_y:
            raise ValueError(f"{origin}: required column 'y' is missing")
        f_true = frame["f_true"].to_numpy(dtype=float) if "f_true" in frame.columns else None
        structured = frame[s_cols].to_numpy(dtype=float)
        unstructured = frame[x_cols].to_numpy(dtype=float) if x_cols \
            else np.zeros((len(frame), 0))
        for name, arr in (("structured", structured), ("unstructured", unstructured)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{origin}: non-finite values in {name} columns")
        if y is not None and not np.all(np.isfinite(y)):
            raise ValueError(f"{origin}: non-finite values in y")
        return cls(structured, unstructured, y, f_true)


def _numbered(columns, prefix: str) -> list[str]:
    found = {}
    for col in columns:
        if col.startswith(prefix) and col[len(prefix):].isdigit():
            found[int(col[len(prefix):])] = col
    if not found:
        return []
    idx = sorted(found)
    if idx != list(range(1, len(idx) + 1)):
        raise ValueError(f"columns {prefix}1..{prefix}{len(idx)} must be contiguous")
    return [found[i] for i in idx]
