"""Scikit-learn style front end for the repulsive mixture sampler."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_is_fitted

from . import mcmc, mixture, partition
from .ensembles import EnsembleParams
from .mixture import Dataset, Hyper, Kernel, MixtureModel
from .priors import CoulombPrior

__all__ = ["CoulombMixture"]


class CoulombMixture(ClusterMixin, BaseEstimator):
    """Bayesian mixture with a repulsive eigenvalue prior on the locations.

    The number of components is random (shifted Poisson prior) unless
    ``fixed_M`` is set.  After fitting, ``labels_`` holds the partition of
    the training data that minimises the posterior expected Binder loss.

    Parameters
    ----------
    kernel : {"gaussian", "binomial"}
        Gaussian kernels use a full covariance per component (variance in
        one dimension).  Binomial kernels take integer counts.
    trials : int, optional
        Number of binomial trials.
    family : {"hermite", "laguerre", "jacobi"}
        Ensemble used in every dimension.
    alpha, beta : float
        Ensemble shape parameters (Laguerre ``alpha``; Jacobi both).
    link : {"identity", "log", "logit"}, optional
        Defaults to identity, except logit for the Jacobi family.
    zeta : float
        Initial (or fixed, if ``infer_zeta=False``) repulsion strength.
    infer_zeta : bool
    gamma_s, Lambda, nu : float
        Weight shape, Poisson rate for ``M - 1`` and covariance degrees of
        freedom.
    fixed_M : int, optional
    n_iter, n_burnin, thin : int
    random_state : int or numpy Generator, optional

    Attributes
    ----------
    labels_ : ndarray of shape (n_samples,)
        Binder partition, labels ``0..K-1``.
    n_clusters_ : int
    chain_ : ChainOutput
    psm_ : ndarray of shape (n_samples, n_samples)
        Posterior co-clustering probabilities.
    kn_posterior_ : dict
        Posterior of the number of occupied components.
    model_ : MixtureModel
    """

    def __init__(self, kernel="gaussian", trials=None, family="hermite", alpha=0.0, beta=0.0,
                 link=None, zeta=1.0, infer_zeta=True, gamma_s=1.0, Lambda=1.0, nu=6.0,
                 fixed_M=None, n_iter=2000, n_burnin=1000, thin=2, random_state=None):
        self.kernel = kernel
        self.trials = trials
        self.family = family
        self.alpha = alpha
        self.beta = beta
        self.link = link
        self.zeta = zeta
        self.infer_zeta = infer_zeta
        self.gamma_s = gamma_s
        self.Lambda = Lambda
        self.nu = nu
        self.fixed_M = fixed_M
        self.n_iter = n_iter
        self.n_burnin = n_burnin
        self.thin = thin
        self.random_state = random_state

    def _build_model(self, d: int) -> MixtureModel:
        if self.kernel == "gaussian":
            kern = Kernel("gaussian1d") if d == 1 else Kernel("gaussiand", dim=d)
        elif self.kernel == "binomial":
            if d != 1:
                raise ValueError("binomial data must have a single column")
            kern = Kernel("binomial", trials=self.trials)
        else:
            raise ValueError(f"unknown kernel {self.kernel!r}")
        link = self.link or ("logit" if self.family == "jacobi" else "identity")
        ens = EnsembleParams(self.family, self.zeta, self.alpha, self.beta)
        prior = CoulombPrior((ens,) * d, (link,) * d)
        hyper = Hyper(gamma_s=self.gamma_s, Lambda=self.Lambda, nu=self.nu)
        return MixtureModel(prior, kern, hyper)

    def _check_X(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[0] < 1:
            raise ValueError("X must be a non-empty 2-d array")
        return X

    def fit(self, X, y=None):
        X = self._check_X(X)
        self.model_ = self._build_model(X.shape[1])
        config = mcmc.SamplerConfig(
            n_iter=self.n_iter, n_burnin=self.n_burnin, thin=self.thin,
            adapt_iters=min(100, self.n_burnin), fixed_M=self.fixed_M,
            infer_zeta=self.infer_zeta, zeta_init=self.zeta,
        )
        rng = np.random.default_rng(self.random_state)
        self.chain_ = mcmc.run_chain(config, Dataset(X), self.model_, rng)
        if len(self.chain_) == 0:
            raise ValueError("no draws retained; increase n_iter or decrease thin")
        self.psm_ = partition.cocluster_matrix(self.chain_.z)
        self.labels_ = partition.binder_estimate(self.chain_.z, self.psm_) - 1
        self.n_clusters_ = int(self.labels_.max()) + 1
        self.kn_posterior_ = partition.kn_posterior(self.chain_.z)
        self.n_features_in_ = X.shape[1]
        return self

    def _cluster_log_probs(self, X) -> np.ndarray:
        # average over draws of the predictive probability of joining the
        # component that holds most of each Binder cluster
        X = self._check_X(X)
        out = np.full((X.shape[0], self.n_clusters_), -np.inf)
        draws = list(self.chain_.states())
        for s in draws:
            logw = np.log(s.S) - np.log(np.sum(s.S))
            lk = mixture.log_kernel_matrix(self.model_.kernel, s.kernel_params, s.locations, X)
            for c in range(self.n_clusters_):
                h = np.bincount(s.z[self.labels_ == c], minlength=s.M).argmax()
                out[:, c] = np.logaddexp(out[:, c], logw[h] + lk[:, h])
        return out - np.log(len(draws))

    def predict(self, X) -> np.ndarray:
        """Assign new observations to the fitted Binder clusters."""
        check_is_fitted(self, "labels_")
        return np.argmax(self._cluster_log_probs(X), axis=1)

    def score_samples(self, X) -> np.ndarray:
        """Log posterior predictive density at each row of ``X``."""
        check_is_fitted(self, "labels_")
        X = self._check_X(X)
        dens = mixture.predictive_density_grid(self.chain_.states(), X, self.model_)
        return np.log(dens)
