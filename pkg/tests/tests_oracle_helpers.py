"""Shared helpers for building in-memory examples from raw arrays."""

import numpy as np

from cabblab.labeling import ClickExample


def batch_from_arrays(X, leaf_ids, y1, y2, alpha):
    return [
        ClickExample(
            session_id=f"s{i}",
            user_id="u",
            product_id="p",
            timestamp_ms=i,
            y1=int(y1[i]),
            y2=int(y2[i]),
            alpha=float(alpha[i]),
            purchased_others=frozenset(),
            features=np.asarray(X[i], dtype=np.float64),
            leaf_id=int(leaf_ids[i]),
        )
        for i in range(X.shape[0])
    ]