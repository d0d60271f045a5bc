"""Construct and measure matched-score generator pairs.

Given heterogeneous clients, build two Gaussian generators that are
intended to receive identical per-client distance scores while their
scores against the pooled reference differ:

* ``g_hat``  -- the pooled-moment Gaussian (zero distance to the pooled
  reference by construction);
* ``g_prime`` -- mean shifted by ``sqrt(u)`` along a unit direction
  ``beta`` orthogonal to every client mean, covariance equal to the
  weighted mean of client covariances, where ``u`` is the trace of the
  between-client mean spread.

Every reported number is obtained by direct distance evaluation, never
by assuming the construction works: per-client residuals quantify how
far the two generators actually are from sharing scores (on generic
instances they do not share them exactly), and the measured pooled-score
gap is reported next to the nominal lower bound ``2u``.

:func:`search_matched_pair` additionally runs a derivative-free search
for a generator that matches ``g_hat``'s per-client scores numerically
while keeping the pooled-score gap as large as possible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import minimize

from .frechet import frechet_distance
from .statkit import ClientSet, GaussianModel, pool_moments

DEGENERATE_U_TOL = 1e-10
SIGN_FIX_TOL = 1e-12
RESIDUAL_TARGET = 1e-6


@dataclass
class CounterexampleReport:
    """Everything measured about a matched-score generator pair."""

    g_hat: GaussianModel
    g_prime: GaussianModel
    u: float
    beta: np.ndarray
    per_client_fid_hat: list[float]
    per_client_fid_prime: list[float]
    per_client_residuals: list[float]
    fid_all_hat: float
    fid_all_prime: float
    measured_gap: float
    claimed_gap_lower_bound: float
    converged: bool = True
    evaluations: int = 0

    def to_json_dict(self) -> dict:
        return {
            "g_hat": self.g_hat.to_json_dict(),
            "g_prime": self.g_prime.to_json_dict(),
            "u": self.u,
            "beta": self.beta.tolist(),
            "per_client_fid_hat": self.per_client_fid_hat,
            "per_client_fid_prime": self.per_client_fid_prime,
            "per_client_residuals": self.per_client_residuals,
            "fid_all_hat": self.fid_all_hat,
            "fid_all_prime": self.fid_all_prime,
            "measured_gap": self.measured_gap,
            "claimed_gap_lower_bound": self.claimed_gap_lower_bound,
            "converged": self.converged,
            "evaluations": self.evaluations,
        }


def _mean_complement_basis(means: np.ndarray) -> np.ndarray:
    """Orthonormal basis (columns) of the complement of span{client means}."""
    basis = null_space(means)
    if basis.size == 0:
        raise ValueError(
            "no orthogonal direction: client means span the embedding space"
        )
    for col in range(basis.shape[1]):
        v = basis[:, col]
        idx = np.flatnonzero(np.abs(v) > SIGN_FIX_TOL)
        if idx.size and v[idx[0]] < 0:
            basis[:, col] = -v
    return basis


def _spread_trace(means: np.ndarray, weights: np.ndarray) -> float:
    """Trace of the weighted between-client mean spread."""
    mean_hat = weights @ means
    return float(weights @ np.sum(means**2, axis=1) - np.sum(mean_hat**2))


def _measure(clients: ClientSet, g_hat, g_prime, u, beta, converged=True, evaluations=0):
    stats = clients.stats_list()
    pooled = pool_moments(clients)
    hat = [frechet_distance(s, g_hat).value for s in stats]
    prime = [frechet_distance(s, g_prime).value for s in stats]
    residuals = [abs(a - b) for a, b in zip(prime, hat)]
    fid_all_hat = frechet_distance(pooled, g_hat).value
    fid_all_prime = frechet_distance(pooled, g_prime).value
    return CounterexampleReport(
        g_hat=g_hat,
        g_prime=g_prime,
        u=u,
        beta=beta,
        per_client_fid_hat=hat,
        per_client_fid_prime=prime,
        per_client_residuals=residuals,
        fid_all_hat=fid_all_hat,
        fid_all_prime=fid_all_prime,
        measured_gap=fid_all_prime - fid_all_hat,
        claimed_gap_lower_bound=2.0 * u,
        converged=converged,
        evaluations=evaluations,
    )


def construct(clients: ClientSet) -> CounterexampleReport:
    """Build the analytic generator pair and measure every claim about it.

    Requires fewer clients than embedding dimensions (so an orthogonal
    mean direction exists) and at least two distinct client means (so
    the spread ``u`` is positive).
    """
    stats = clients.stats_list()
    means = np.stack([s.mean for s in stats])
    k, d = means.shape
    if k >= d:
        raise ValueError(
            f"no orthogonal direction: need fewer clients ({k}) than dimensions ({d})"
        )
    weights = clients.weights
    u = _spread_trace(means, weights)
    if u <= DEGENERATE_U_TOL:
        raise ValueError("u = 0, construction degenerate: client means coincide")
    beta = _mean_complement_basis(means)[:, 0]
    pooled = pool_moments(clients)
    g_hat = GaussianModel(mean=pooled.mean, cov=pooled.cov)
    cov_prime = np.einsum("i,ijk->jk", weights, np.stack([s.cov for s in stats]))
    cov_prime = (cov_prime + cov_prime.T) / 2.0
    g_prime = GaussianModel(mean=pooled.mean + np.sqrt(u) * beta, cov=cov_prime)
    return _measure(clients, g_hat, g_prime, u, beta)


def search_matched_pair(
    clients: ClientSet, seed: int = 0, budget: int = 10000
) -> CounterexampleReport:
    """Search for a generator matching the pooled-moment generator's
    per-client scores while maximizing the pooled-score gap.

    The candidate mean moves in the affine space "pooled mean plus the
    complement of span{client means}" and the covariance is
    parameterized through its lower-triangular factor, so candidates
    stay PSD.  Per-client score mismatches are driven to zero through an
    escalating quadratic penalty while the pooled-score gap enters the
    objective with a negative sign.  Deterministic for a fixed seed; if
    the budget runs out before the per-client residual sum reaches
    1e-6, the best iterate is returned flagged as not converged.
    """
    stats = clients.stats_list()
    means = np.stack([s.mean for s in stats])
    k, d = means.shape
    if k >= d:
        raise ValueError(
            f"no orthogonal direction: need fewer clients ({k}) than dimensions ({d})"
        )
    weights = clients.weights
    u = _spread_trace(means, weights)
    if k >= 2 and u <= DEGENERATE_U_TOL:
        raise ValueError("u = 0, construction degenerate: client means coincide")
    basis = _mean_complement_basis(means)
    m_free = basis.shape[1]
    pooled = pool_moments(clients)
    g_hat = GaussianModel(mean=pooled.mean, cov=pooled.cov)
    targets = np.array([frechet_distance(s, g_hat).value for s in stats])
    fid_all_hat = frechet_distance(pooled, g_hat).value

    tril = np.tril_indices(d)
    chol0 = np.linalg.cholesky(pooled.cov + 1e-9 * np.eye(d))
    rng = np.random.default_rng(seed)
    theta = np.concatenate([1e-3 * rng.standard_normal(m_free), chol0[tril]])

    evaluations = 0

    def candidate(theta):
        mean = pooled.mean + basis @ theta[:m_free]
        chol = np.zeros((d, d))
        chol[tril] = theta[m_free:]
        return GaussianModel(mean=mean, cov=chol @ chol.T)

    def residuals_and_gap(model):
        scores = np.array([frechet_distance(s, model).value for s in stats])
        gap = frechet_distance(pooled, model).value - fid_all_hat
        return scores - targets, gap

    stages = [1e2, 1e4, 1e6, 1e8]
    per_stage = max(budget // len(stages), 1)
    for penalty in stages:

        def objective(t):
            nonlocal evaluations
            evaluations += 1
            r, gap = residuals_and_gap(candidate(t))
            return penalty * float(r @ r) - abs(gap)

        result = minimize(
            objective,
            theta,
            method="Nelder-Mead",
            options={
                "maxfev": per_stage,
                "xatol": 1e-12,
                "fatol": 1e-14,
                "adaptive": True,
            },
        )
        theta = result.x

    best = candidate(theta)
    residuals, _ = residuals_and_gap(best)
    converged = bool(np.sum(np.abs(residuals)) <= RESIDUAL_TARGET)
    return _measure(
        clients,
        g_hat,
        best,
        u,
        basis[:, 0],
        converged=converged,
        evaluations=evaluations,
    )
