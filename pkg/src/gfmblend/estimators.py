"""scikit-learn style wrappers around the blend optimiser and the LM network."""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .blend import (
    BlendWeights,
    ObjectiveSpec,
    OptimizeConfig,
    brute_force_weights,
    objective_mse,
    optimize_weights,
)
from .errors import InvalidInputError
from .neural import Dataset, MlpNetwork, TrainConfig, lm_train, mlp_forward
from .sm_model import OMEGA_BASE


class BlendWeightOptimizer(BaseEstimator):
    """Select blend weights from sampled controller frequencies.

    ``X`` has one row per time sample and one column per control law in
    the order droop, VSM, PSL, VOC (rad/s).  ``method`` is ``"pgd"`` for
    the projected-gradient solver or ``"brute"`` for the grid scan.
    """

    def __init__(
        self,
        omega_target=OMEGA_BASE,
        start=(0.25, 0.25, 0.25, 0.25),
        method="pgd",
        max_iter=500,
        tol=1e-10,
        grid_step=0.005,
    ):
        self.omega_target = omega_target
        self.start = start
        self.method = method
        self.max_iter = max_iter
        self.tol = tol
        self.grid_step = grid_step

    def _spec(self, n):
        return ObjectiveSpec(np.arange(n, dtype=float), self.omega_target)

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_samples=2)
        if X.shape[1] != 4:
            raise InvalidInputError(f"expected 4 columns (droop, vsm, psl, voc), got {X.shape[1]}")
        traces = X.T
        spec = self._spec(X.shape[0])
        if self.method == "pgd":
            cfg = OptimizeConfig(max_iter=self.max_iter, tol=self.tol)
            w, log = optimize_weights(traces, spec, BlendWeights(*self.start), cfg)
            self.iteration_log_ = log
        elif self.method == "brute":
            w = brute_force_weights(traces, spec, self.grid_step)
            self.iteration_log_ = None
        else:
            raise InvalidInputError(f"unknown method {self.method!r}")
        self.weights_ = w
        self.coef_ = w.as_array()
        self.objective_ = objective_mse(w, traces, spec)
        self.n_features_in_ = 4
        return self

    def predict(self, X):
        """Blended frequency for each row of ``X``."""
        check_is_fitted(self, "coef_")
        X = check_array(X)
        if X.shape[1] != 4:
            raise InvalidInputError(f"expected 4 columns, got {X.shape[1]}")
        return X @ self.coef_

    def score(self, X, y=None):
        """Negative mean squared frequency error, so larger is better."""
        resid = self.omega_target - self.predict(X)
        return -float(np.mean(resid**2))


class LMRegressor(RegressorMixin, BaseEstimator):
    """One-hidden-layer tanh network trained by Levenberg-Marquardt.

    Inputs and targets are standardised internally.  ``fit`` carves its own
    validation and test rows out of the data with ``split`` and ``seed``.
    """

    def __init__(
        self,
        hidden=16,
        max_epochs=1000,
        mu_init=1e-3,
        val_patience=6,
        split=(0.70, 0.15, 0.15),
        seed=0,
    ):
        self.hidden = hidden
        self.max_epochs = max_epochs
        self.mu_init = mu_init
        self.val_patience = val_patience
        self.split = split
        self.seed = seed

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True, multi_output=True)
        y2 = y.reshape(len(y), -1)
        x_scale = X.std(axis=0)
        y_scale = y2.std(axis=0)
        net = MlpNetwork.initialize(
            (X.shape[1], self.hidden, y2.shape[1]),
            seed=self.seed,
            in_offset=X.mean(axis=0),
            in_scale=np.where(x_scale > 0, x_scale, 1.0),
            out_offset=y2.mean(axis=0),
            out_scale=np.where(y_scale > 0, y_scale, 1.0),
        )
        data = Dataset.from_arrays(X, y2, self.split, self.seed)
        cfg = TrainConfig(
            mu_init=self.mu_init,
            max_epochs=self.max_epochs,
            val_patience=self.val_patience,
            split=tuple(self.split),
            seed=self.seed,
        )
        self.net_, self.record_ = lm_train(net, data, cfg)
        self.dataset_ = data
        self.n_features_in_ = X.shape[1]
        self._multi = y.ndim == 2
        return self

    def predict(self, X):
        check_is_fitted(self, "net_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise InvalidInputError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        out = mlp_forward(self.net_, X)
        return out if self._multi else out.ravel()
