import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from geomimic.estimator import ConstraintSelector, check_videos
from geomimic.geometry import ConstraintType

from test_training import two_category_videos


@pytest.fixture(scope="module")
def fitted():
    videos = two_category_videos(n_frames=16, videos_per_cat=4)
    est = ConstraintSelector(
        constraint="pp",
        outer_iters=30,
        temporal_steps=3,
        sim_steps=2,
        batch_size=8,
        stride=1,
        lr_temporal=1e-2,
        hidden_width=6,
        embedding_dim=4,
        rounds=2,
        seed=0,
    )
    return est.fit(videos), videos


class TestSklearnProtocol:
    def test_get_set_params_roundtrip(self):
        est = ConstraintSelector(constraint="ll", alpha=3.0)
        params = est.get_params()
        assert params["constraint"] == "ll"
        assert params["alpha"] == 3.0
        est.set_params(alpha=7.0)
        assert est.alpha == 7.0

    def test_clone_preserves_params(self):
        est = ConstraintSelector(outer_iters=5, seed=3)
        cloned = clone(est)
        assert cloned.get_params() == est.get_params()

    def test_predict_before_fit_raises(self):
        with pytest.raises(NotFittedError):
            ConstraintSelector().predict([[]])

    def test_fit_returns_self_and_sets_state(self, fitted):
        est, _ = fitted
        assert hasattr(est, "params_")
        assert hasattr(est, "metrics_")
        assert not est.aborted_


class TestBehaviour:
    def test_predict_keys(self, fitted):
        est, videos = fitted
        frames = [videos[0].frames[0], videos[0].frames[-1]]
        keys = est.predict(frames)
        assert len(keys) == 2
        assert all(isinstance(k, tuple) and len(k) == 2 for k in keys)

    def test_transform_shape(self, fitted):
        est, videos = fitted
        z = est.transform([videos[0].frames[0], videos[1].frames[3]])
        assert z.shape == (2, est.embedding_dim)
        assert np.isfinite(z).all()

    def test_score_uses_ground_truth(self, fitted):
        est, videos = fitted
        labeled = []
        for v in videos[:2]:
            labeled.append(
                type(v)(
                    video_id=v.video_id,
                    category_id=v.category_id,
                    frames=v.frames,
                    frame_indices=list(v.frame_indices),
                    ground_truth={ConstraintType.POINT_TO_POINT: (0, 1)},
                )
            )
        score = est.score(labeled)
        assert 0.0 <= score <= 1.0

    def test_check_videos_rejects_mixed_dims(self):
        videos = two_category_videos(n_frames=6, videos_per_cat=1, dim=6)
        other = two_category_videos(n_frames=6, videos_per_cat=1, dim=8)
        with pytest.raises(ValueError, match="dimension"):
            check_videos([videos[0], other[0]])

    def test_check_videos_rejects_non_videos(self):
        with pytest.raises(TypeError):
            check_videos([1, 2, 3])
