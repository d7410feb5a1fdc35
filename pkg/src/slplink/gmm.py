"""Two-dimensional Gaussian mixtures fitted by expectation-maximization.

Densities follow the real bivariate convention

    f(y) = sum_n w_n * exp(-0.5 (y-mu_n)' inv(S_n) (y-mu_n)) / (2 pi sqrt(det S_n))

with full per-component covariances.  All covariance algebra is done in
closed 2x2 form.  The fit adds a diagonal floor of 1e-6 times the sample
variance, so every returned covariance stays positive definite even for
degenerate, stripe shaped sample clouds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

COV_FLOOR_FACTOR = 1e-6
DEFAULT_COMPONENTS = 5
DEFAULT_MAX_ITER = 200
DEFAULT_TOL = 1e-6

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class GmmParams:
    """weights (N,), means (N, 2), covs (N, 2, 2)."""

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray

    @property
    def n_components(self) -> int:
        return self.weights.size

    def validate(self, tol: float = 1e-6) -> None:
        w, mu, cov = np.asarray(self.weights), np.asarray(self.means), np.asarray(self.covs)
        n = w.size
        if w.ndim != 1 or mu.shape != (n, 2) or cov.shape != (n, 2, 2):
            raise ValueError(f"inconsistent shapes: {w.shape} {mu.shape} {cov.shape}")
        if not (np.isfinite(w).all() and np.isfinite(mu).all() and np.isfinite(cov).all()):
            raise ValueError("parameters hold non-finite values")
        if np.any(w < -tol) or abs(w.sum() - 1.0) > tol:
            raise ValueError(f"weights must be a distribution, got sum {w.sum()!r}")
        if np.any(np.abs(cov[:, 0, 1] - cov[:, 1, 0]) > tol):
            raise ValueError("covariances must be symmetric")
        if np.any(_eigmin(cov) <= 0.0):
            raise ValueError("covariances must be positive definite")

    def to_dict(self) -> dict:
        return {
            "weights": np.asarray(self.weights).tolist(),
            "means": np.asarray(self.means).tolist(),
            "covs": np.asarray(self.covs).tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GmmParams":
        params = cls(
            weights=np.asarray(data["weights"], dtype=float),
            means=np.asarray(data["means"], dtype=float),
            covs=np.asarray(data["covs"], dtype=float),
        )
        params.validate()
        return params


def _eigmin(covs: np.ndarray) -> np.ndarray:
    a, b, c = covs[:, 0, 0], covs[:, 0, 1], covs[:, 1, 1]
    half_tr = 0.5 * (a + c)
    radius = np.sqrt((0.5 * (a - c)) ** 2 + b**2)
    return half_tr - radius


def _component_logpdf(y: np.ndarray, means: np.ndarray, covs: np.ndarray) -> np.ndarray:
    """(L, N) per-component log densities for points y of shape (L, 2)."""
    dx = y[:, None, 0] - means[None, :, 0]
    dy = y[:, None, 1] - means[None, :, 1]
    a, b, c = covs[:, 0, 0], covs[:, 0, 1], covs[:, 1, 1]
    det = a * c - b * b
    quad = (c * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det
    return -_LOG_2PI - 0.5 * np.log(det) - 0.5 * quad


def gmm_logpdf(y: np.ndarray, params: GmmParams) -> np.ndarray:
    """Log mixture density at points y, shape (L, 2) or a single (2,)."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    comp = _component_logpdf(y, np.asarray(params.means), np.asarray(params.covs))
    comp = comp + np.log(np.maximum(np.asarray(params.weights), 1e-300))
    top = comp.max(axis=1)
    out = top + np.log(np.exp(comp - top[:, None]).sum(axis=1))
    return out


def gmm_pdf(y: np.ndarray, params: GmmParams) -> np.ndarray:
    return np.exp(gmm_logpdf(y, params))


def _kmeanspp_centers(samples: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    centers = [samples[rng.integers(samples.shape[0])]]
    for _ in range(n - 1):
        diff = samples[:, None, :] - np.asarray(centers)[None, :, :]
        d2 = (diff**2).sum(axis=2).min(axis=1)
        total = d2.sum()
        if total <= 0.0:
            idx = rng.integers(samples.shape[0])
        else:
            idx = rng.choice(samples.shape[0], p=d2 / total)
        centers.append(samples[idx])
    return np.asarray(centers)


def em_fit_trace(samples: np.ndarray, n_components: int = DEFAULT_COMPONENTS,
                 seed: int = 0, max_iter: int = DEFAULT_MAX_ITER,
                 tol: float = DEFAULT_TOL) -> tuple[GmmParams, np.ndarray]:
    """Fit a mixture and return (params, per-iteration total log-likelihood).

    Initialization is k-means++ seeding of the means; covariances start at the
    sample covariance.  Convergence is a relative change of the total
    log-likelihood below tol; the trajectory is non-decreasing up to rounding.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[1] != 2:
        raise ValueError(f"samples must be (L, 2), got {samples.shape}")
    n_samples = samples.shape[0]
    if n_samples < n_components:
        raise ValueError(f"{n_samples} samples cannot support {n_components} components")

    rng = np.random.default_rng(seed)
    sample_var = float(samples.var(axis=0).mean())
    floor = COV_FLOOR_FACTOR * max(sample_var, 1e-30)

    means = _kmeanspp_centers(samples, n_components, rng).copy()
    base_cov = np.cov(samples.T) if n_samples > 1 else np.eye(2)
    base_cov = np.atleast_2d(base_cov) + floor * np.eye(2)
    covs = np.repeat(base_cov[None, :, :], n_components, axis=0)
    weights = np.full(n_components, 1.0 / n_components)

    history = []
    prev_ll = -np.inf
    for _ in range(max_iter):
        log_comp = _component_logpdf(samples, means, covs) + np.log(np.maximum(weights, 1e-300))
        top = log_comp.max(axis=1)
        log_norm = top + np.log(np.exp(log_comp - top[:, None]).sum(axis=1))
        ll = float(log_norm.sum())
        history.append(ll)
        resp = np.exp(log_comp - log_norm[:, None])

        nk = resp.sum(axis=0)
        nk_safe = np.maximum(nk, 1e-12)
        weights = nk / n_samples
        means = (resp.T @ samples) / nk_safe[:, None]
        dx = samples[:, None, 0] - means[None, :, 0]
        dy = samples[:, None, 1] - means[None, :, 1]
        a = (resp * dx * dx).sum(axis=0) / nk_safe
        b = (resp * dx * dy).sum(axis=0) / nk_safe
        c = (resp * dy * dy).sum(axis=0) / nk_safe
        covs = np.empty((n_components, 2, 2))
        covs[:, 0, 0] = a + floor
        covs[:, 0, 1] = covs[:, 1, 0] = b
        covs[:, 1, 1] = c + floor

        if np.isfinite(prev_ll) and abs(ll - prev_ll) <= tol * max(1.0, abs(ll)):
            break
        prev_ll = ll

    weights = weights / weights.sum()
    params = GmmParams(weights=weights, means=means, covs=covs)
    params.validate()
    return params, np.asarray(history)


def em_fit(samples: np.ndarray, n_components: int = DEFAULT_COMPONENTS, seed: int = 0,
           max_iter: int = DEFAULT_MAX_ITER, tol: float = DEFAULT_TOL) -> GmmParams:
    """Fit a mixture, discarding the likelihood trajectory."""
    return em_fit_trace(samples, n_components, seed, max_iter, tol)[0]
