"""
OSPA in a few lines
===================

The cutoff c caps the cost of each mismatched point and sets the price of
a cardinality error.
"""

# %%
import numpy as np

from rfsmta.metrics import OspaParams, ospa

X = np.array([[0.0, 0.0], [10.0, 0.0]])
print(ospa(X, X))                              # identical sets
print(ospa(X, X[::-1]))                        # order does not matter
print(ospa(X, []), ospa([], []))               # empty against nonempty is c; two empty sets are 0

# %%
Y = X + [0.5, 0.0]
for c in (1.0, 2.0, 5.0):
    print(f"c={c}: shift only {ospa(X, Y, OspaParams(c)):.3f}   shift plus a false point "
          f"{ospa(X, np.vstack([Y, [[50.0, 50.0]]]), OspaParams(c)):.3f}")
