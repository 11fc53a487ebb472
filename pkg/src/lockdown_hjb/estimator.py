"""Scikit-learn style wrapper: ``fit`` solves the value function, ``predict``
returns the feedback lockdown at given states."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_states
from .dynamics import ModelParams, MortalityCurve
from .hamiltonian import Region
from .hjb_solver import fd_costate_array, interpolate, solve_value_function
from .policy import PolicyReport, feedback_array, simulate_closed_loop


class LockdownPolicyEstimator(BaseEstimator):
    """Optimal-lockdown feedback for one parameter set.

    ``X`` is always an ``(n_samples, 2)`` array of ``(s, i)`` states. ``fit``
    ignores its arguments beyond validation; the model is determined by the
    hyperparameters alone.
    """

    def __init__(self, beta=0.2, gamma=1.0 / 14.0, theta=0.8, l_bar=0.7, nu=0.5, r=0.05,
                 w=1.0, chi=5.0, phi_kind="constant", phi0=0.01, phi_slope=0.0,
                 phi_cap=None, n=100, dt=None, m=21, tol=1e-6, max_iter=200_000,
                 analytic_candidate=True, workers=1):
        self.beta = beta
        self.gamma = gamma
        self.theta = theta
        self.l_bar = l_bar
        self.nu = nu
        self.r = r
        self.w = w
        self.chi = chi
        self.phi_kind = phi_kind
        self.phi0 = phi0
        self.phi_slope = phi_slope
        self.phi_cap = phi_cap
        self.n = n
        self.dt = dt
        self.m = m
        self.tol = tol
        self.max_iter = max_iter
        self.analytic_candidate = analytic_candidate
        self.workers = workers

    @classmethod
    def from_params(cls, params: ModelParams, **solver) -> "LockdownPolicyEstimator":
        return cls(beta=params.beta, gamma=params.gamma, theta=params.theta,
                   l_bar=params.l_bar, nu=params.nu, r=params.r, w=params.w,
                   chi=params.chi, phi_kind=params.phi.kind, phi0=params.phi.phi0,
                   phi_slope=params.phi.slope, phi_cap=params.phi.cap, **solver)

    def model_params(self) -> ModelParams:
        phi = MortalityCurve(self.phi_kind, self.phi0, self.phi_slope, self.phi_cap)
        return ModelParams(self.beta, self.gamma, self.theta, self.l_bar, self.nu, self.r,
                           self.w, self.chi, phi)

    def fit(self, X=None, y=None):
        if X is not None:
            check_states(X)
        self.params_ = self.model_params()
        self.field_ = solve_value_function(
            self.params_, n=self.n, dt=self.dt, m=self.m, tol=self.tol,
            max_iter=self.max_iter, analytic_candidate=self.analytic_candidate,
            workers=self.workers,
        )
        self.n_iter_ = self.field_.n_iter
        self.residual_ = self.field_.residual
        return self

    def predict(self, X) -> np.ndarray:
        """Feedback lockdown level at each state."""
        check_is_fitted(self, "field_")
        levels, _, _, _ = feedback_array(self.field_, check_states(X), self.params_)
        return levels

    def transform(self, X) -> np.ndarray:
        """Finite-difference costate ``(dV/ds, dV/di)`` at each state."""
        check_is_fitted(self, "field_")
        p, q = fd_costate_array(self.field_, check_states(X))
        return np.column_stack([p, q])

    def value(self, X) -> np.ndarray:
        check_is_fitted(self, "field_")
        return interpolate(self.field_, check_states(X))

    def score_samples(self, X) -> np.ndarray:
        """Negated value: higher means a cheaper state."""
        return -self.value(X)

    def regions(self, X) -> np.ndarray:
        check_is_fitted(self, "field_")
        _, codes, _, _ = feedback_array(self.field_, check_states(X), self.params_)
        return np.array([Region(int(c)).name for c in codes])

    def simulate(self, x0, horizon=None, dt=None) -> PolicyReport:
        check_is_fitted(self, "field_")
        x = check_states(np.atleast_2d(x0))[0]
        return simulate_closed_loop(self.field_, x, horizon, dt, self.params_)
