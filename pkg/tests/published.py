"""Reference values transcribed from the published FSKNet layer table."""

# Output Size and Param columns of the published layer table, in row order
# (activations are not listed there; the duplicated BN names are renumbered).
LAYER_TABLE = [
    ("input_1", (19, 19, 200, 1), 0),
    ("conv3d_1", (17, 17, 28, 16), 1008),
    ("batch_normalization_1", (17, 17, 28, 16), 64),
    ("conv3d_2", (15, 15, 5, 32), 23040),
    ("batch_normalization_2", (15, 15, 5, 32), 128),
    ("conv3d_3", (13, 13, 1, 64), 55296),
    ("batch_normalization_3", (13, 13, 1, 64), 256),
    ("separable_conv3d_1", (11, 11, 1, 128), 8768),
    ("reshape_1", (11, 11, 128), 0),
    ("conv2d_1", (11, 11, 32), 4096),
    ("batch_normalization_4", (11, 11, 32), 128),
    ("deformableconv_1", (11, 11, 64), 36864),
    ("deformableconv_2", (11, 11, 64), 69632),
    ("batch_normalization_5", (11, 11, 64), 256),
    ("batch_normalization_6", (11, 11, 64), 256),
    ("add_1", (11, 11, 64), 0),
    ("global_average_pooling2d_1", (64,), 0),
    ("reshape_2", (1, 1, 64), 0),
    ("dense_1", (1, 1, 4), 256),
    ("dense_2", (1, 1, 64), 256),
    ("multiply_1", (11, 11, 64), 0),
    ("multiply_2", (11, 11, 64), 0),
    ("add_2", (11, 11, 64), 0),
    ("separable_conv2d_1", (9, 9, 64), 4672),
    ("separable_conv2d_2", (7, 7, 128), 8768),
    ("global_average_pooling2d_2", (128,), 0),
    ("dense_3", (16,), 2064),
]

TOTALS = (215808, 215264, 544)
