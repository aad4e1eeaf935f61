"""Plain-text sparse-triplet dumps: a ``rows cols nnz`` header, then ``row col value`` lines."""
from __future__ import annotations

from pathlib import Path

import numpy as np
import scipy.sparse as sp


def write_triplets(path, A) -> None:
    A = sp.coo_matrix(A)
    order = np.lexsort((A.col, A.row))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(f"{A.shape[0]} {A.shape[1]} {A.nnz}\n")
        for k in order:
            fh.write(f"{A.row[k]} {A.col[k]} {float(A.data[k])!r}\n")


def read_triplets(path) -> sp.csr_matrix:
    lines = Path(path).read_text(encoding="ascii").splitlines()
    rows, cols, nnz = (int(t) for t in lines[0].split())
    body = lines[1:]
    if len(body) != nnz:
        raise ValueError(f"{path}: header declares {nnz} entries, found {len(body)}")
    if nnz == 0:
        return sp.csr_matrix((rows, cols))
    data = np.array([ln.split() for ln in body], dtype=object)
    return sp.csr_matrix(
        (data[:, 2].astype(float), (data[:, 0].astype(np.int64), data[:, 1].astype(np.int64))), shape=(rows, cols)
    )
