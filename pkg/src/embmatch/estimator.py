"""Scikit-learn style facade over the matching pipeline.

``TemplateMatcher`` is fitted on a template bank and scores proposal sets,
so the engine composes with sklearn-style tooling (``get_params`` /
``set_params``, fit/transform/predict conventions).
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from sklearn.base import BaseEstimator

from .core import ConfigurationError, DataError, Proposal, ScoringConfig, TemplateBank, validate_bank
from .scoring import AggregationSpec, MatchResult, match, row_argmax
from .storage import load_bank


class TemplateMatcher(BaseEstimator):
    """Scores object proposals against a fitted multi-view template bank.

    Parameters mirror :class:`~embmatch.core.ScoringConfig` plus the view
    aggregation rule.  ``fit`` accepts a :class:`TemplateBank` or a path to a
    bank archive; ``transform`` returns the final proposal-by-class score
    matrix and ``predict`` the per-proposal argmax class.
    """

    def __init__(
        self,
        e: float = 1.5,
        alpha: float = 0.5,
        beta: float = 0.8,
        tau: float = 0.02,
        gamma: float = 0.1,
        top_k: int = 5,
        metric: str = "tanimoto",
        score_floor: Optional[float] = None,
        pooling: str = "gem",
        aggregation: str = "topk_mean",
    ):
        self.e = e
        self.alpha = alpha
        self.beta = beta
        self.tau = tau
        self.gamma = gamma
        self.top_k = top_k
        self.metric = metric
        self.score_floor = score_floor
        self.pooling = pooling
        self.aggregation = aggregation

    def _config(self) -> ScoringConfig:
        return ScoringConfig(
            e=self.e,
            alpha=self.alpha,
            beta=self.beta,
            tau=self.tau,
            gamma=self.gamma,
            top_k=self.top_k,
            metric=self.metric,
            score_floor=self.score_floor,
            pooling=self.pooling,
        )

    def _aggregation(self) -> AggregationSpec:
        return AggregationSpec(self.aggregation, self.top_k if isinstance(self.top_k, int) else 1)

    def fit(self, X: Union[TemplateBank, str, Path], y=None) -> "TemplateMatcher":
        """Validate and store the template bank."""
        self._config()
        self._aggregation()
        bank = load_bank(X) if isinstance(X, (str, Path)) else X
        if not isinstance(bank, TemplateBank):
            raise ConfigurationError(f"fit expects a TemplateBank or a bank path, got {type(X).__name__}")
        violations = validate_bank(bank)
        if violations:
            raise DataError(
                violations[0].code,
                f"bank failed validation ({len(violations)} violations): {violations[0]}",
            )
        self.bank_ = bank
        self.classes_ = np.asarray(bank.class_ids, dtype=object)
        self.n_features_in_ = bank.dim
        return self

    def _check_fitted(self) -> TemplateBank:
        if not hasattr(self, "bank_"):
            raise ConfigurationError("this TemplateMatcher is not fitted yet; call fit first")
        return self.bank_

    def match(self, proposals: Sequence[Proposal]) -> MatchResult:
        """Full pipeline output: all four score stages plus detections."""
        bank = self._check_fitted()
        return match(tuple(proposals), bank, self._config(), self._aggregation())

    def transform(self, proposals: Sequence[Proposal]) -> np.ndarray:
        """Final-stage score matrix, one row per proposal, one column per class."""
        return self.match(proposals).final.values

    def decision_function(self, proposals: Sequence[Proposal]) -> np.ndarray:
        return self.transform(proposals)

    def predict(self, proposals: Sequence[Proposal]) -> np.ndarray:
        """Per-proposal argmax class id (ties break toward the lowest class index)."""
        scores = self.transform(proposals)
        if scores.shape[0] == 0:
            return np.asarray([], dtype=object)
        return self.classes_[row_argmax(scores)]
