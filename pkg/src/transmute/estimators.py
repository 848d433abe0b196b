"""Estimator-style wrappers around the functional API."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_choice, check_functions, check_interval, maybe_real
from .eigenspace import SpectralFamily, spectral_grid
from .glm import FredholmKernel, marchenko_recover_potential, solve_glm
from .numgrid import GridFunction, make_grid, trapezoid_weights
from .transmutation import build_delsarte, delsarte_inverse, shift_density


class DelsarteTransform(TransformerMixin, BaseEstimator):
    """Volterra transmutation fitted to seed functions sampled on a uniform 1D grid.

    fit(X, y) takes the direct seeds X and, optionally, adjoint seeds y (defaults
    to X) as arrays of shape (K, n). transform / inverse_transform apply the
    operator and its inverse to each row of their argument.
    """

    def __init__(self, interval=(0.0, 1.0), omega_x0=None, orientation="plus", quadrature="cubic", weights=None):
        self.interval = interval
        self.omega_x0 = omega_x0
        self.orientation = orientation
        self.quadrature = quadrature
        self.weights = weights

    def fit(self, X, y=None):
        psi = check_functions(X, name="X")
        phi = psi if y is None else check_functions(y, psi.shape[1], name="y")
        if phi.shape[0] != psi.shape[0]:
            raise ValueError("X and y must hold the same number of seeds")
        check_choice(self.orientation, {"plus", "minus"}, "orientation")
        check_choice(self.quadrature, {"cubic", "trapezoid"}, "quadrature")
        K, n = psi.shape
        self.grid_ = make_grid([check_interval(self.interval)], [n])
        sigma = spectral_grid(np.arange(1, K + 1), self.weights)
        fam = lambda v, side: SpectralFamily(self.grid_, sigma, v[..., None], side=side)
        self.operator_, psi_t = build_delsarte(fam(phi, "adjoint"), fam(psi, "direct"), self.omega_x0,
                                               self.orientation, density=shift_density, quadrature=self.quadrature)
        self.inverse_ = delsarte_inverse(self.operator_)
        self.transformed_ = maybe_real(psi_t.values[..., 0], X)
        self.n_features_in_ = n
        return self

    def transform(self, X):
        check_is_fitted(self, "operator_")
        F = check_functions(X, self.n_features_in_)
        return maybe_real(self.operator_.matrix @ F.T, X).T

    def inverse_transform(self, X):
        check_is_fitted(self, "inverse_")
        F = check_functions(X, self.n_features_in_)
        return maybe_real(self.inverse_.matrix @ F.T, X).T


class GLMSolver(TransformerMixin, BaseEstimator):
    """Solve K + F + K F = 0 for a Volterra kernel given Fredholm samples F (n x n)."""

    def __init__(self, interval=(0.0, 1.0), orientation="plus", quadrature="trapezoid"):
        self.interval = interval
        self.orientation = orientation
        self.quadrature = quadrature

    def fit(self, X, y=None):
        F = check_functions(X, name="X")
        n = F.shape[1]
        if F.shape[0] != n:
            raise ValueError("Fredholm samples must be square")
        check_choice(self.orientation, {"plus", "minus"}, "orientation")
        check_choice(self.quadrature, {"cubic", "trapezoid"}, "quadrature")
        self.grid_ = make_grid([check_interval(self.interval)], [n])
        phi = FredholmKernel(self.grid_, F[:, :, None, None], trapezoid_weights(self.grid_))
        self.volterra_ = solve_glm(phi, self.orientation, self.quadrature)
        self.kernel_ = maybe_real(self.volterra_.values[:, :, 0, 0], X)
        self.trace_ = np.diagonal(self.kernel_).copy()
        self.n_features_in_ = n
        return self

    def transform(self, X):
        """Apply 1 + K with trapezoid weights to each row."""
        check_is_fitted(self, "kernel_")
        F = check_functions(X, self.n_features_in_)
        w = trapezoid_weights(self.grid_)
        out = F + (self.volterra_.values[:, :, 0, 0] * w[None, :] @ F.T).T
        return maybe_real(out, X)

    def potential(self, q0=None):
        """q~ = q0 - 2 d/dx K(x, x) for the fitted kernel."""
        check_is_fitted(self, "kernel_")
        q0 = np.zeros(self.n_features_in_) if q0 is None else np.asarray(q0)
        q = marchenko_recover_potential(self.volterra_, GridFunction(self.grid_, q0))
        return maybe_real(q.values[:, 0], q0)
