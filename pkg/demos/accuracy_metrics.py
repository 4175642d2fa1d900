"""
OA, AA and Kappa
================

Overall accuracy counts every sample once, average accuracy weights every
class once, and kappa discounts the agreement expected by chance.
"""

import numpy as np
from fsknet.metrics import confusion_matrix, format_table, summarize

cm = np.array([[2, 1],
               [0, 3]])
print(summarize(cm))        # OA 5/6, AA 5/6, kappa 2/3

# A classifier that always answers "1" on a skewed test set looks good on OA
# and is exposed by AA and kappa.
truth = np.array([1] * 90 + [2] * 10)
lazy = np.ones(100, dtype=int)
lazy_cm = confusion_matrix(truth, lazy, classes=2)
print(lazy_cm)
print(format_table({"lazy": summarize(lazy_cm)}))

# Random guessing, independent of the truth, has kappa near zero.
rng = np.random.default_rng(0)
truth = rng.integers(1, 5, 5000)
guess = rng.integers(1, 5, 5000)
print(format_table({"random": summarize(confusion_matrix(truth, guess, 4))}))
