"""Input validation helpers shared by the estimator API."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .model import AnswerMatrix


def as_answer_matrix(X) -> AnswerMatrix:
    """Coerce estimator input into an :class:`AnswerMatrix`.

    Accepts an AnswerMatrix, a scipy sparse matrix, or a dense array; values
    must lie in {-1, 0, +1} with 0 meaning unanswered.
    """
    if isinstance(X, AnswerMatrix):
        return X
    if sp.issparse(X):
        coo = X.tocoo()
        data = np.asarray(coo.data)
        if not np.isin(data, (-1, 1)).all():
            raise ValueError("sparse answer matrices may only store -1/+1 entries")
        return AnswerMatrix(workers=coo.row.astype(np.int64),
                            tasks=coo.col.astype(np.int64),
                            answers=data.astype(np.int8),
                            n_workers=X.shape[0], n_tasks=X.shape[1])
    X = np.asarray(X)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-d worker-by-task array, got shape {X.shape}")
    return AnswerMatrix.from_dense(X)


def check_positive(name: str, value: float) -> float:
    if value is None or not value > 0:
        raise ValueError(f"{name} must be positive, got {value!r}")
    return float(value)
