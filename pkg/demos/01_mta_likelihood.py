"""
Association likelihoods for a small scan
========================================

Two tracks, three measurements, Poisson clutter. We list every
measurement-to-track association, score it and compare the summed score
with the multitarget likelihood evaluated directly.
"""

# %%
import numpy as np

from rfsmta.association import TrackSet, count_mtas, enumerate_mtas, map_mta, mta_posterior
from rfsmta.association import association_likelihood, total_association_log_likelihood
from rfsmta.models import GaussianDensity, SensorModel

s = SensorModel(H=[[1.0]], R=[[0.5]], p_D=0.9, clutter_rate=1.0, region=[[-20.0, 20.0]])
tracks = TrackSet((GaussianDensity([0.0], [[1.0]]), GaussianDensity([4.0], [[1.0]])))
Z = np.array([[0.3], [3.6], [-12.0]])
print("associations for n=2, m=3:", count_mtas(2, 3))

# %%
# Each association maps track i to a measurement index (1-based) or to 0 for a miss.
for a in enumerate_mtas(2, 3):
    print(a.assignments, f"{association_likelihood(a, Z, tracks, s):.3e}")
print("sum:", np.exp(total_association_log_likelihood(Z, tracks, s)))

# %%
# The default prior is uniform over associations. The MAP pairs each track with its nearby return.
post = mta_posterior(Z, tracks, s)
m, best = map_mta(post)
print("MAP association:", best.assignments, "posterior", round(dict(post.items())[(m, best)], 4))
