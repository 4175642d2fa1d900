"""
The FSKNet layer table
======================

Build the network for a 19x19 patch of a 200-band scene with 16 classes
and look at what it is made of.
"""

import numpy as np
from fsknet import FsknetConfig, build

config = FsknetConfig(patch=19, bands=200, classes=16)

# The spectral axis is squeezed to a single band by three strided 3D convs.
# The planner picks kernel and stride for each stage from the band count.
print(config.spectral_stages)

graph = build(config, seed=0)
report = graph.param_report()
print(report.format())

# Most of the weights sit in the two deformable branches of the selective
# kernel block: a 3x3 offset predictor plus the regular K x K kernel.
for name in ("deformableconv_1", "deformableconv_2"):
    layer = graph[name]
    print(name, {k: v.shape for k, v in layer.params.items()}, layer.param_count())

# Multiply-accumulate counts, layer by layer.
print(graph.flops_report().format())

# A forward pass on random patches gives one probability row per sample.
x = np.random.default_rng(0).standard_normal((2, 19, 19, 200, 1)).astype(np.float32)
probs = graph.forward(x, training=False)
print(probs.shape, probs.sum(axis=1))
