"""Two generators that clients cannot tell apart, with different pooled scores.

The analytic construction shifts the pooled-moment generator's mean
along a direction orthogonal to every client mean and swaps its
covariance for the weighted mean of client covariances.  The report
measures every claim instead of assuming it: on this instance the
per-client scores do NOT match exactly (residual ~0.83) and the
measured pooled-score gap sits below the nominal bound 2u.

A numerical search then finds a pair whose per-client scores match to
1e-6 while the pooled scores still differ by ~0.69.
"""

import numpy as np

from fedeval import Client, ClientSet, GaussianStats, construct, search_matched_pair

eye = np.eye(3)
clients = ClientSet(
    [
        Client(id="c1", stats=GaussianStats(n=100, mean=[1.0, 0.0, 0.0], cov=eye)),
        Client(id="c2", stats=GaussianStats(n=100, mean=[-1.0, 0.0, 0.0], cov=eye)),
    ]
)

report = construct(clients)
print("analytic construction:")
print("  u =", report.u, " beta =", report.beta)
print("  per-client scores, pooled-moment generator:", np.round(report.per_client_fid_hat, 5))
print("  per-client scores, shifted generator:      ", np.round(report.per_client_fid_prime, 5))
print("  per-client residuals:", np.round(report.per_client_residuals, 5), "(not matched!)")
print("  pooled score gap:", round(report.measured_gap, 5), "vs nominal bound", report.claimed_gap_lower_bound)

print("\nnumerical search for a genuinely matched pair:")
found = search_matched_pair(clients, seed=0, budget=10000)
print("  converged:", found.converged, "after", found.evaluations, "evaluations")
print("  residual sum:", sum(found.per_client_residuals))
print("  measured pooled-score gap:", round(found.measured_gap, 6))
print("  -> per-client scores alone cannot rank these two generators")
