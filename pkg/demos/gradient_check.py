"""
Checking every backward pass
============================

Each layer's analytic gradient is compared with central differences in
float64. A full FSKNet with narrow channels is checked end to end under
the cross-entropy loss.
"""

import numpy as np
from fsknet import layers as L
from fsknet.training import gradcheck_layer, gradcheck_suite

report = gradcheck_suite(seed=0, trials=30)
print(report.format())
print("all passed:", report.passed)

# The harness is not a rubber stamp: a backward pass with the wrong sign fails.
class Flipped(L.Dense):
    def backward(self, grad):
        return -super().backward(grad)

rng = np.random.default_rng(1)
bad = Flipped("flipped", 3)
bad.build([(4,)], rng, np.float64)
for entry in gradcheck_layer(bad, [rng.standard_normal((2, 4))]):
    print(entry.group, "PASS" if entry.passed else "FAIL", f"{entry.max_rel_error:.2e}")
