"""scikit-learn compatible wrappers.

``GazePatchExtractor`` turns recordings into one patch row per fixation and
``GazeNMF`` factorizes such rows, so both compose in a ``Pipeline``::

    Pipeline([("patches", GazePatchExtractor(stencil=(31, 31))),
              ("nmf", GazeNMF(n_components=4))])

Rows are samples here, as scikit-learn expects, so the matrices are the
transpose of :class:`~gazenmf.patchgrid.PatchMatrix` values.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted, check_non_negative, validate_data

from .fixation import FixationParams
from .nmf import FactorizationOptions, factorize, solve_coefficients
from .patchgrid import PatchMatrix, StencilSpec
from .pipeline import preprocess


class GazeNMF(TransformerMixin, BaseEstimator):
    """Nonnegative factorization of patch rows into ``n_components`` parts.

    Parameters
    ----------
    n_components : int, default=8
        Rank of the factorization.
    algorithm : {"mu", "hals"}, default="mu"
        Multiplicative updates or hierarchical alternating least squares.
    max_iter : int, default=100
    tol : float, default=1e-4
        Relative objective change ``|f_t - f_{t-1}| / (1 + f_{t-1})`` at which
        a replicate stops.
    n_replicates : int, default=3
        Independent seeded restarts; the lowest objective is kept.
    random_state : int or None, default=None
        Base seed for the PCG64 initialization (``None`` means 0).
    epsilon : float, default=1e-9
    n_threads : int or None, default=None
        Cap on BLAS threads. Results do not depend on it.

    Attributes
    ----------
    components_ : ndarray of shape (n_components, n_features)
        Spatial components (``W`` transposed).
    factorization_ : Factorization
    n_iter_ : int
    reconstruction_err_ : float
        Frobenius norm ``‖X - W H‖_F``.
    """

    def __init__(
        self,
        n_components=8,
        *,
        algorithm="mu",
        max_iter=100,
        tol=1e-4,
        n_replicates=3,
        random_state=None,
        epsilon=1e-9,
        n_threads=None,
    ):
        self.n_components = n_components
        self.algorithm = algorithm
        self.max_iter = max_iter
        self.tol = tol
        self.n_replicates = n_replicates
        self.random_state = random_state
        self.epsilon = epsilon
        self.n_threads = n_threads

    def _options(self):
        seed = 0 if self.random_state is None else int(self.random_state)
        return FactorizationOptions(
            k=self.n_components, max_iters=self.max_iter, rel_tol=self.tol,
            replicates=self.n_replicates, seed=seed, algorithm=self.algorithm,
            epsilon=self.epsilon,
        )

    def fit_transform(self, X, y=None):
        # 0 < k < min(shape) leaves no valid rank below two samples or features
        X = validate_data(self, X, dtype=np.float64, ensure_min_samples=2, ensure_min_features=2)
        check_non_negative(X, "GazeNMF.fit")
        F = factorize(X.T, self._options(), threads=self.n_threads)
        self.factorization_ = F
        self.components_ = F.W.T.copy()
        self.n_components_ = F.k
        self.n_iter_ = F.iterations_run
        self.reconstruction_err_ = float(np.sqrt(2.0 * F.final_objective))
        return F.H.T.copy()

    def fit(self, X, y=None):
        self.fit_transform(X)
        return self

    def transform(self, X):
        check_is_fitted(self)
        X = validate_data(self, X, dtype=np.float64, reset=False)
        check_non_negative(X, "GazeNMF.transform")
        H = solve_coefficients(X.T, self.components_.T, max_iters=self.max_iter, epsilon=self.epsilon)
        return H.T

    def inverse_transform(self, X):
        check_is_fitted(self)
        return np.asarray(X, dtype=np.float64) @ self.components_

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.input_tags.positive_only = True
        return tags


class GazePatchExtractor(TransformerMixin, BaseEstimator):
    """Recordings to gaze-centred patch rows, one per detected fixation.

    ``transform`` takes a sequence of :class:`~gazenmf.ingest.Recording` and
    returns an ``(n_fixations, 3 * width * height)`` array. The last
    :class:`PatchMatrix`, including column provenance, is kept as
    ``patch_matrix_``.
    """

    def __init__(self, stencil=(251, 251), min_fixation_ms=200, dispersion_px=25.0, downscale=1, n_threads=1):
        self.stencil = stencil
        self.min_fixation_ms = min_fixation_ms
        self.dispersion_px = dispersion_px
        self.downscale = downscale
        self.n_threads = n_threads

    def fit(self, recordings, y=None):
        self.stencil_ = StencilSpec(*self.stencil)
        self.fixation_params_ = FixationParams(self.dispersion_px, self.min_fixation_ms)
        return self

    def extract(self, recordings) -> PatchMatrix:
        check_is_fitted(self)
        return preprocess(recordings, self.stencil_, self.fixation_params_, self.downscale, self.n_threads)

    def transform(self, recordings):
        self.patch_matrix_ = self.extract(recordings)
        return np.ascontiguousarray(self.patch_matrix_.values.T)

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.requires_fit = True
        tags.input_tags.two_d_array = False
        return tags
