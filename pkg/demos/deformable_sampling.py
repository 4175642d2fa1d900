"""
Deformable convolution as a flow field
======================================

A deformable layer first predicts a displacement (dy, dx) for every
channel at every pixel, resamples the feature map there with bilinear
interpolation, then runs an ordinary convolution.
"""

import numpy as np
from fsknet import layers as L

rng = np.random.default_rng(0)
x = rng.standard_normal((1, 6, 6, 2))

# Shift every sample one pixel to the right: channel c reads column w + 1.
offsets = np.zeros((1, 6, 6, 4))
offsets[..., 1::2] = 1.0
shifted = L.bilinear_sample(x, offsets)
print(np.allclose(shifted[0, :, :-1], x[0, :, 1:]))

# Half-pixel offsets average the two neighbours.
offsets[..., 1::2] = 0.5
half = L.bilinear_sample(x, offsets)
print(np.allclose(half[0, :, :-1], 0.5 * (x[0, :, :-1] + x[0, :, 1:])))

# Positions past the border are clamped, so the last column repeats.
print(np.allclose(shifted[0, :, -1], x[0, :, -1]))

# The offset predictor starts at zero, so an untrained deformable layer is
# exactly a same-padding convolution.
deform = L.DeformableConv2D("deform", 3, kernel_size=3)
deform.build([(6, 6, 2)], rng, np.float64)
plain = L.Conv("plain", 3, (3, 3), padding="same")
plain.build([(6, 6, 2)], rng, np.float64)
plain.params["kernel"] = deform.params["kernel"]
print(np.abs(deform.forward(x) - plain.forward(x)).max())

# Once the offset kernel moves, the sampling grid bends.
deform.params["offset_kernel"] = rng.standard_normal(deform.params["offset_kernel"].shape) * 0.3
field = deform.offsets(x)
print("mean |offset|:", np.abs(field).mean())
