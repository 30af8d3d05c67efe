"""
Madelon benchmark
=================

Usage::

    python demos/04_madelon.py /path/to/madelon_dir

The directory must hold ``madelon_train.data``, ``madelon_train.labels``,
``madelon_valid.data`` and ``madelon_valid.labels``. Expect a long run on
one core since each class has 1000 training points of dimension 500.
"""

import sys
import time
from pathlib import Path

from hdkernel.classify import evaluate, train_one_vs_all
from hdkernel.dataio import load_feature_table

root = Path(sys.argv[1] if len(sys.argv) > 1 else ".")
train = load_feature_table(root / "madelon_train.data", root / "madelon_train.labels")
test = load_feature_table(root / "madelon_valid.data", root / "madelon_valid.labels")
print(f"train {train.features.shape}, valid {test.features.shape}")

for family, s in (("hdda-mahalanobis", 0.2), ("gaussian", 0.1)):
    t0 = time.perf_counter()
    model = train_one_vs_all(train, family, scree_s=s)
    print(evaluate(model, test).render_table())
    print(f"{family}: {time.perf_counter() - t0:.0f} s")
