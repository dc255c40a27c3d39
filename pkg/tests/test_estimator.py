"""Sklearn-style facade: params, fitting, and prediction."""

import numpy as np
import pytest
from sklearn.base import clone

from embmatch import (
    ConfigurationError,
    DataError,
    TemplateBank,
    TemplateClass,
    TemplateMatcher,
    TemplateView,
    WorldSpec,
    generate_world,
    save_bank,
)

from helpers import make_proposal, make_raw_bank


class TestParams:
    def test_get_params_round_trip(self):
        est = TemplateMatcher(alpha=0.7, metric="cosine")
        params = est.get_params()
        assert params["alpha"] == 0.7
        assert params["metric"] == "cosine"
        assert TemplateMatcher(**params).get_params() == params

    def test_set_params(self):
        est = TemplateMatcher()
        est.set_params(beta=0.5, top_k=3)
        assert est.beta == 0.5
        assert est.top_k == 3

    def test_clone(self):
        est = TemplateMatcher(gamma=0.2)
        twin = clone(est)
        assert twin.get_params() == est.get_params()

    def test_invalid_params_fail_at_fit(self):
        rng = np.random.default_rng(60)
        bank = make_raw_bank(rng)
        with pytest.raises(ConfigurationError):
            TemplateMatcher(tau=0.0).fit(bank)
        with pytest.raises(ConfigurationError):
            TemplateMatcher(aggregation="median").fit(bank)


class TestFit:
    def test_fit_with_bank_object(self):
        rng = np.random.default_rng(61)
        bank = make_raw_bank(rng, n_classes=3)
        est = TemplateMatcher().fit(bank)
        assert est.bank_ is bank
        assert list(est.classes_) == ["cls0", "cls1", "cls2"]
        assert est.n_features_in_ == bank.dim

    def test_fit_with_path(self, tmp_path):
        rng = np.random.default_rng(62)
        bank = make_raw_bank(rng)
        save_bank(bank, tmp_path / "bank")
        est = TemplateMatcher().fit(str(tmp_path / "bank"))
        assert est.bank_.class_ids == bank.class_ids

    def test_fit_rejects_invalid_bank(self):
        view = TemplateView(cls_embedding=[1.0, np.nan], patch_descriptor=[1.0, 0.0])
        bank = TemplateBank(
            classes=(TemplateClass("a", (view,)),), dim=2, pooled=True, pooled_exponent=1.5
        )
        with pytest.raises(DataError):
            TemplateMatcher().fit(bank)

    def test_fit_rejects_wrong_type(self):
        with pytest.raises(ConfigurationError):
            TemplateMatcher().fit(42)

    def test_unfitted_raises(self):
        rng = np.random.default_rng(63)
        with pytest.raises(ConfigurationError, match="not fitted"):
            TemplateMatcher().transform([make_proposal(rng, d=6)])


class TestPredict:
    def test_transform_shape_and_predict_labels(self):
        world = generate_world(WorldSpec(seed=64, proposal_noise=0.1, hard_negative_rate=0.0, clutter_rate=0.0, n_images=3))
        est = TemplateMatcher().fit(world.bank)
        scores = est.transform(world.proposals)
        assert scores.shape == (len(world.proposals), world.bank.n_classes)
        gt_class = {g.image_id + str(g.bbox): g.class_id for g in world.gt.instances}
        predicted = est.predict(world.proposals)
        truth = [gt_class[p.image_id + str(p.bbox)] for p in world.proposals]
        assert (predicted == np.asarray(truth, dtype=object)).mean() > 0.95

    def test_predict_empty(self):
        rng = np.random.default_rng(65)
        est = TemplateMatcher().fit(make_raw_bank(rng))
        assert est.predict([]).shape == (0,)

    def test_match_exposes_stages(self):
        rng = np.random.default_rng(66)
        bank = make_raw_bank(rng)
        proposals = [make_proposal(rng, d=6, pid=f"p{i}") for i in range(3)]
        result = TemplateMatcher().fit(bank).match(proposals)
        assert result.final.shape == (3, 3)
        assert len(result.detections) == 9

    def test_decision_function_matches_transform(self):
        rng = np.random.default_rng(67)
        bank = make_raw_bank(rng)
        proposals = [make_proposal(rng, d=6, pid=f"p{i}") for i in range(2)]
        est = TemplateMatcher().fit(bank)
        np.testing.assert_array_equal(
            est.transform(proposals), est.decision_function(proposals)
        )

    def test_params_change_scores(self):
        rng = np.random.default_rng(68)
        bank = make_raw_bank(rng)
        proposals = [make_proposal(rng, d=6, pid=f"p{i}") for i in range(2)]
        tan = TemplateMatcher(metric="tanimoto").fit(bank).transform(proposals)
        cos = TemplateMatcher(metric="cosine").fit(bank).transform(proposals)
        assert not np.allclose(tan, cos)
