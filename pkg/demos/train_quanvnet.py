"""Trainable vs frozen quanvolution filter on a synthetic 3-class problem.

Uses the synthetic blob generator so it runs in seconds without MNIST. Pass
an IDX directory as the first argument to use real digits instead.
"""
import sys

from qhybrid.datasets import SubsetSpec, downsample_maxpool, find_idx_pair, load_idx, make_subset, synth_dataset
from qhybrid.hybrid import TrainSpec, compare_runs, train_quanvnet
from qhybrid.nn import OptimizerSpec

if len(sys.argv) > 1:
    source = downsample_maxpool(load_idx(*find_idx_pair(sys.argv[1])))
    train, val = make_subset(source, SubsetSpec("mnist", (2, 4, 6), 100, seed=0))
else:
    train, val = make_subset(synth_dataset(3, 300, seed=0), SubsetSpec("synth", (0, 1, 2), 60, seed=0))
print(f"train {len(train.labels)}, validation {len(val.labels)}, image {train.images.shape[1:]}")

spec = TrainSpec(OptimizerSpec("adagrad", 0.5), epochs=5, batch=30, seed=0)

print("trainable filter")
_, trainable = train_quanvnet(train, val, spec, trainable=True, log=print)
print("frozen filter")
_, frozen = train_quanvnet(train, val, spec, trainable=False, log=print)

print(compare_runs(trainable, frozen).summary("trainable", "frozen"))
print(f"circuit executions: {trainable[-1].circuit_executions} vs {frozen[-1].circuit_executions}")
