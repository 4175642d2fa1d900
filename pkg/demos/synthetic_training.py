"""
Training on a synthetic scene
=============================

Generate a small labelled cube, split its pixels per class, cut patches
around them and train FSKNet for a few epochs. The same steps run from the
shell with ``fsknet synth`` and ``fsknet train``.
"""

import numpy as np
from fsknet import FsknetConfig, build
from fsknet.data import SplitSpec, extract_patches, normalize, stratified_split, synth_cube
from fsknet.metrics import format_table
from fsknet.training import TrainConfig, evaluate, fit

# Every Voronoi region carries one class spectrum plus Gaussian noise.
cube = normalize(synth_cube(height=24, width=24, bands=60, classes=3, noise_sigma=0.05, seed=0))
print(cube.reflectance.shape, np.bincount(cube.labels.ravel()))

split = stratified_split(cube, SplitSpec("5:1:4", seed=0))
print(len(split.train), len(split.val), len(split.test))

patch = 13
train = extract_patches(cube, patch, split.train)
val = extract_patches(cube, patch, split.val)
test = extract_patches(cube, patch, split.test)
print(train.patches.shape)

graph = build(FsknetConfig(patch=patch, bands=cube.bands, classes=cube.class_count), seed=0)
report = fit(graph, train, val, TrainConfig(epochs=3, batch_size=32, seed=0),
             callback=lambda e: print(f"epoch {e['epoch']}  loss {e['loss']:.4f}  val OA {e['val_oa']:.4f}"))

result = evaluate(graph, test)
print(result["confusion"])
print(format_table({"test": result}))
