"""Load, clean, standardize and window a flow CSV.

Run from the repository root:  python demos/01_flow_pipeline.py
"""
import os
import tempfile

import numpy as np

from iomt_detect import flowdata as fd
from iomt_detect.synthgen import Segment, SegmentSpec, generate, write_segment

# A small synthetic capture stands in for a real export.
spec = SegmentSpec(Segment.ATTACK_SPECIFIC, n=200, attack_ratio=0.3, seed=0)
m = generate(spec)

# Punch a few holes so imputation has something to do.
m.values[3, 0] = np.nan
m.values[10, 2] = np.inf

tmp = tempfile.mkdtemp()
path = os.path.join(tmp, "flows.csv")
write_segment(m, spec, path)
m = fd.load_flow_csv(path)
print(f"loaded {m.n} rows x {m.d} features, {int(m.labels.sum())} labeled attacks")
print("non-finite cells:", int(m.nonfinite_mask().sum()))

# Statistics come from the training split only, then get reused on test rows.
train, test = fd.stratified_split(m, 0.25, seed=0)
means = fd.finite_column_means(train)
train, test = fd.impute_mean(train, means), fd.impute_mean(test, means)
scaler = fd.fit_standardizer(train)
train_z = scaler.apply(train)
print("train means after scaling:", np.round(train_z.values.mean(axis=0), 12))
print("train stds after scaling: ", np.round(train_z.values.std(axis=0), 12))

# Windows of 4 consecutive records; a window carries its last record's label.
X, y, last = fd.windows_from_matrix(scaler.apply(fd.impute_mean(m, means)), 4)
print(f"{len(X)} windows of shape {X.shape[1:]}, {int(y.sum())} labeled attack")
