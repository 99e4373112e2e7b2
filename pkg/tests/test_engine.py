import numpy as np
import pytest

from topo_transfer.engine import ManifestSource, ScoringConfig, fused_scores, plan_case, plan_cases, score_zoo
from topo_transfer.errors import TooFewModelsError
from topo_transfer.fusion import FusionConfig
from topo_transfer.io import load_manifest
from topo_transfer.sampling import SamplingConfig
from topo_transfer.synth import FRAGMENTED, STRUCTURED, synthetic_zoo

SMALL = ScoringConfig(sampling=SamplingConfig(budget=200))


@pytest.fixture(scope="module")
def zoo():
    return synthetic_zoo(STRUCTURED, seed=5, models=4, cases=2, shape=(16, 16, 16))


class TestScoring:
    def test_threads_do_not_change_results(self, zoo):
        one = score_zoo(zoo, SMALL)
        many = score_zoo(zoo, ScoringConfig(sampling=SamplingConfig(budget=200), threads=4))
        assert [(m.model_id, m.grtd, m.lbtc) for m in one] == [(m.model_id, m.grtd, m.lbtc) for m in many]

    def test_plans_depend_on_labels_only(self, zoo):
        a = plan_cases(zoo, SMALL)
        b = plan_cases(zoo, SMALL)
        assert len(a) == 2
        for p, q in zip(a, b):
            np.testing.assert_array_equal(p.sample_index, q.sample_index)
            assert [x.voxel_index for x, _ in p.patches] == [x.voxel_index for x, _ in q.patches]

    def test_disk_round_trip_matches_memory(self, zoo, tmp_path):
        manifest = load_manifest(zoo.write(tmp_path))
        disk = score_zoo(ManifestSource(manifest), SMALL)
        memory = score_zoo(zoo, SMALL)
        assert [(m.grtd, m.lbtc, m.truth) for m in disk] == [(m.grtd, m.lbtc, m.truth) for m in memory]

    def test_metrics_shape(self, zoo):
        metrics = score_zoo(zoo, SMALL, cases=[1])
        for m in metrics:
            assert m.grtd <= 0
            assert 0 <= m.lbtc <= 1
            assert len(m.grtd_cases) == 1
            assert len(m.grtd_cases[0].per_stage) == 2

    def test_quality_order_recovered(self):
        zoo = synthetic_zoo(FRAGMENTED, seed=1, models=4)
        metrics = score_zoo(zoo)
        lbtc = [m.lbtc for m in metrics]
        assert lbtc == sorted(lbtc)


class TestFusedScores:
    def test_scores(self, zoo):
        metrics = score_zoo(zoo, SMALL)
        scores = fused_scores(metrics, FusionConfig(1.0, 0.0, zoo.num_classes))
        assert [s.model_id for s in scores] == zoo.model_ids()
        assert all(0 <= s.fused <= 1 for s in scores)
        assert scores[0].alpha == pytest.approx(0.8)

    def test_one_model(self, zoo):
        metrics = score_zoo(zoo, SMALL)[:1]
        with pytest.raises(TooFewModelsError):
            fused_scores(metrics, FusionConfig())



class TestDegenerateCases:
    def test_case_without_boundary_has_no_patches(self, caplog):
        plan = plan_case(np.zeros((8, 8, 8), dtype=np.int32), 0, SMALL)
        assert plan.patches == ()
        assert plan.sample_index.size == 200
        assert "no usable boundary patch" in caplog.text
