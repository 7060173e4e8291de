import math

import numpy as np
import pytest

from geomimic.exceptions import EmptyDataset, MissingCorrespondence, ShapeMismatch
from geomimic.geometry import ConstraintType, PixelPoint
from geomimic.graphs import FeaturePoint, GraphInstance, spec_for
from geomimic.model import gradient, init_params, select
from geomimic.training import (
    DemoVideo,
    TrainConfig,
    build_frame_candidates,
    covgs_il,
    momentum_blend,
    prepare_datasets,
    similarity_loss,
    similarity_loss_tensor,
    temporal_loss_tensor,
    temporal_order_loss,
    _similarity_batch_arrays,
    _temporal_batch_arrays,
)
from geomimic.graphs import EnumerationLimits

PP = ConstraintType.POINT_TO_POINT
LL = ConstraintType.LINE_TO_LINE


def pp_instance(ids, coords, descriptors):
    return GraphInstance(
        spec_for(PP),
        tuple(
            FeaturePoint(i, np.asarray(d, dtype=float), PixelPoint(*c))
            for i, c, d in zip(ids, coords, descriptors)
        ),
    )


def small_params(ctype=PP, seed=0, dim=6):
    return init_params(ctype, descriptor_dim=dim, hidden_width=6, embedding_dim=4, rounds=2, seed=seed)


def random_walk_video(video_id, category_id, n_features, n_frames, seed, dim=6):
    rng = np.random.default_rng(seed)
    descriptors = rng.normal(size=(n_features, dim))
    coords = rng.uniform(50, 400, size=(n_features, 2))
    frames = []
    for _ in range(n_frames):
        coords = coords + rng.normal(scale=3.0, size=coords.shape)
        frames.append(
            [
                FeaturePoint(i, descriptors[i], PixelPoint(*coords[i]))
                for i in range(n_features)
            ]
        )
    return DemoVideo(video_id=video_id, category_id=category_id, frames=frames)


class TestPrepareDatasets:
    def test_sample_count_single_video(self):
        video = random_walk_video("v0", "a", 4, 5, seed=0)
        samples, frames = prepare_datasets([video], PP, stride=1)
        assert len(samples) == 4
        assert len(frames) == 5

    def test_stride_longer_than_video(self):
        video = random_walk_video("v0", "a", 4, 5, seed=0)
        with pytest.raises(EmptyDataset):
            prepare_datasets([video], PP, stride=10)

    def test_short_video_contributes_nothing(self):
        long = random_walk_video("v0", "a", 4, 6, seed=0)
        short = random_walk_video("v1", "a", 4, 3, seed=1)
        samples, _ = prepare_datasets([long, short], PP, stride=4)
        assert {s.video_id for s in samples} == {"v0"}

    def test_shuffle_deterministic(self):
        videos = [random_walk_video(f"v{i}", "a", 4, 6, seed=i) for i in range(3)]
        s1, f1 = prepare_datasets(videos, PP, seed=5)
        s2, f2 = prepare_datasets(videos, PP, seed=5)
        assert [(s.video_id, s.earlier.frame_pos) for s in s1] == [
            (s.video_id, s.earlier.frame_pos) for s in s2
        ]
        s3, _ = prepare_datasets(videos, PP, seed=6)
        assert [(s.video_id, s.earlier.frame_pos) for s in s1] != [
            (s.video_id, s.earlier.frame_pos) for s in s3
        ]

    def test_max_candidates_subsamples(self):
        videos = [random_walk_video("v0", "a", 8, 4, seed=0)]
        samples, frames = prepare_datasets(videos, PP, max_candidates=5)
        assert all(len(s.idx_earlier) == 5 for s in samples)
        assert all(len(f.bindings) <= 5 for f in frames)

    def test_keys_are_canonical_rows(self):
        video = random_walk_video("v0", "a", 5, 3, seed=2)
        fc = build_frame_candidates(video, 0, LL, EnumerationLimits())
        from geomimic.graphs import canonical_key_for

        spec = spec_for(LL)
        for row in fc.keys:
            assert tuple(row) == canonical_key_for(spec, tuple(row))


class TestTemporalOrderLoss:
    def test_zero_progress_is_log_two(self):
        d = np.ones(6)
        earlier = [pp_instance([0, 1], [(0, 0), (3, 0)], [d, d])]
        later = [pp_instance([0, 1], [(10, 0), (13, 0)], [d, d])]
        loss = temporal_order_loss(small_params(), None, earlier, later, alpha=1.0)
        assert loss == pytest.approx(math.log(2.0), abs=1e-12)

    def test_hand_computed_logistic(self):
        d = np.ones(6)
        earlier = [pp_instance([0, 1], [(0, 0), (3, 0)], [d, d])]  # error 3
        later = [pp_instance([0, 1], [(0, 0), (1, 0)], [d, d])]  # error 1
        loss = temporal_order_loss(small_params(), None, earlier, later, alpha=1.0)
        assert loss == pytest.approx(-math.log(1.0 / (1.0 + math.exp(-2.0))), abs=1e-9)
        assert loss == pytest.approx(0.126928, abs=1e-5)

    def test_high_confidence_limit(self):
        d = np.ones(6)
        earlier = [pp_instance([0, 1], [(0, 0), (50, 0)], [d, d])]
        later = [pp_instance([0, 1], [(0, 0), (1, 0)], [d, d])]
        loss = temporal_order_loss(small_params(), None, earlier, later, alpha=1e6)
        assert loss == pytest.approx(0.0, abs=1e-12)

    def test_missing_correspondence(self):
        d = np.ones(6)
        earlier = [pp_instance([0, 1], [(0, 0), (3, 0)], [d, d])]
        later = [pp_instance([2, 3], [(0, 0), (1, 0)], [d, d])]
        with pytest.raises(MissingCorrespondence):
            temporal_order_loss(small_params(), None, earlier, later, alpha=1.0)

    def test_one_sided_candidate_skipped(self):
        d = np.ones(6)
        earlier = [
            pp_instance([0, 1], [(0, 0), (3, 0)], [d, d]),
            pp_instance([0, 2], [(0, 0), (9, 0)], [d, d]),
        ]
        later = [pp_instance([0, 1], [(10, 0), (13, 0)], [d, d])]
        loss = temporal_order_loss(small_params(), None, earlier, later, alpha=1.0)
        assert loss == pytest.approx(math.log(2.0), abs=1e-12)

    def test_score_shift_invariance(self):
        # adding a constant to every score leaves the selection softmax alone
        rng = np.random.default_rng(0)
        params = small_params(seed=3)
        earlier = [
            pp_instance([2 * i, 2 * i + 1], rng.uniform(0, 100, (2, 2)), rng.normal(size=(2, 6)))
            for i in range(4)
        ]
        later = [
            pp_instance(inst.feature_ids, rng.uniform(0, 100, (2, 2)),
                        [f.descriptor for f in inst.bindings])
            for inst in earlier
        ]
        base = temporal_order_loss(params, None, earlier, later, alpha=2.0)
        shifted = params.copy()
        shifted.arrays["score_b2"] = shifted.arrays["score_b2"] + 57.0
        again = temporal_order_loss(shifted, None, earlier, later, alpha=2.0)
        assert again == pytest.approx(base, abs=1e-9)


class TestSimilarityLoss:
    def frame(self, rng, descriptors):
        return [
            FeaturePoint(i, descriptors[i], PixelPoint(*rng.uniform(0, 100, 2)))
            for i in range(len(descriptors))
        ]

    def test_identical_weighted_embeddings_give_minus_one(self):
        rng = np.random.default_rng(0)
        descriptors = rng.normal(size=(2, 6))
        f1 = self.frame(rng, descriptors)
        f2 = self.frame(rng, descriptors)  # same descriptors, different coords
        loss = similarity_loss(small_params(), [(f1, f2)])
        assert loss == pytest.approx(-1.0, abs=1e-9)

    def test_scale_of_either_embedding_is_normalized_away(self):
        # single-candidate frames make the weighted embedding the raw z;
        # scaling the readout scales z without touching selection
        rng = np.random.default_rng(1)
        f1 = self.frame(rng, rng.normal(size=(2, 6)))
        f2 = self.frame(rng, rng.normal(size=(2, 6)))
        params = small_params(seed=2)
        base = similarity_loss(params, [(f1, f2)])
        scaled = params.copy()
        scaled.arrays["readout_w"] = scaled.arrays["readout_w"] * 7.5
        scaled.arrays["readout_b"] = scaled.arrays["readout_b"] * 7.5
        assert similarity_loss(scaled, [(f1, f2)]) == pytest.approx(base, abs=1e-9)

    def test_range_and_mean_over_pairs(self):
        rng = np.random.default_rng(2)
        pairs = [
            (self.frame(rng, rng.normal(size=(3, 6))), self.frame(rng, rng.normal(size=(3, 6))))
            for _ in range(4)
        ]
        loss = similarity_loss(small_params(), pairs)
        assert -1.0 <= loss <= 1.0

    def test_empty_pairs_rejected(self):
        with pytest.raises(EmptyDataset):
            similarity_loss(small_params(), [])


class TestMomentumBlend:
    def test_arithmetic(self):
        a, b = small_params(seed=0), small_params(seed=1)
        for arr in a.arrays.values():
            arr[:] = 1.0
        for arr in b.arrays.values():
            arr[:] = 0.0
        out = momentum_blend(a, b, beta=0.9)
        for arr in out.arrays.values():
            np.testing.assert_allclose(arr, 0.9)

    def test_identical_params_unchanged(self):
        a = small_params(seed=0)
        out = momentum_blend(a, a.copy(), beta=0.5)
        for name, arr in out.arrays.items():
            np.testing.assert_array_equal(arr, a.arrays[name])

    def test_output_within_elementwise_interval(self):
        a, b = small_params(seed=0), small_params(seed=1)
        out = momentum_blend(a, b, beta=0.37)
        for name in a.arrays:
            low = np.minimum(a.arrays[name], b.arrays[name])
            high = np.maximum(a.arrays[name], b.arrays[name])
            assert (out.arrays[name] >= low - 1e-15).all()
            assert (out.arrays[name] <= high + 1e-15).all()

    def test_shape_mismatch(self):
        a = small_params(seed=0)
        b = init_params(PP, descriptor_dim=6, hidden_width=7, embedding_dim=4, rounds=2)
        with pytest.raises(ShapeMismatch):
            momentum_blend(a, b, beta=0.5)

    def test_beta_one_rejected_by_config(self):
        with pytest.raises(ValueError):
            TrainConfig(beta=1.0)


class TestLossGradients:
    def test_temporal_gradcheck_every_group(self):
        rng = np.random.default_rng(0)
        videos = [random_walk_video(f"v{i}", "ab"[i % 2], 5, 4, seed=i) for i in range(2)]
        samples, _ = prepare_datasets(videos, PP, seed=0)
        batch = samples[:3]
        arrays = _temporal_batch_arrays(batch, alpha=2.0)
        params = small_params(seed=1)

        def loss_fn(tensors, arr):
            return temporal_loss_tensor(tensors, arr, PP, params.rounds, 1.0)

        self._gradcheck(params, loss_fn, arrays, rng)

    def test_similarity_gradcheck_every_group(self):
        rng = np.random.default_rng(1)
        videos = [random_walk_video(f"v{i}", "ab"[i % 2], 5, 4, seed=i) for i in range(2)]
        _, frames = prepare_datasets(videos, PP, seed=0)
        a = [f for f in frames if f.category_id == "a"]
        b = [f for f in frames if f.category_id == "b"]
        arrays = _similarity_batch_arrays([(a[0], b[0]), (a[1], b[1])])
        params = small_params(seed=2)

        def loss_fn(tensors, arr):
            return similarity_loss_tensor(tensors, arr, PP, params.rounds, 1.0)

        self._gradcheck(params, loss_fn, arrays, rng)

    @staticmethod
    def _gradcheck(params, loss_fn, arrays, rng, h=1e-5, rel=1e-4):
        from geomimic.autodiff import Tensor

        grads = gradient(params, loss_fn, arrays)

        def value():
            tensors = {k: Tensor(v) for k, v in params.arrays.items()}
            return float(loss_fn(tensors, arrays).data)

        for name, arr in params.arrays.items():
            flat = arr.ravel()
            picks = rng.choice(flat.size, size=min(3, flat.size), replace=False)
            for i in picks:
                orig = flat[i]
                flat[i] = orig + h
                plus = value()
                flat[i] = orig - h
                minus = value()
                flat[i] = orig
                numeric = (plus - minus) / (2 * h)
                analytic = grads[name].ravel()[i]
                assert analytic == pytest.approx(numeric, rel=rel, abs=1e-7), name


def two_category_videos(n_frames=12, videos_per_cat=3, dim=6):
    """Synthetic tracks where the pair (0, 1) closes monotonically and a
    distractor pair separates; functional descriptors shared across categories."""
    rng = np.random.default_rng(99)
    proto = rng.normal(size=(2, dim))
    videos = []
    for cat in "ab":
        for v in range(videos_per_cat):
            vrng = np.random.default_rng([ord(cat), v])
            descs = np.stack(
                [
                    proto[0] + 0.05 * vrng.normal(size=dim),
                    proto[1] + 0.05 * vrng.normal(size=dim),
                    vrng.normal(size=dim),
                    vrng.normal(size=dim),
                ]
            )
            frames = []
            for t in range(n_frames):
                u = t / (n_frames - 1)
                gap = 120.0 * (1 - u) + 1e-3
                spread = 20.0 + 100.0 * u
                coords = np.array(
                    [
                        [200.0, 200.0],
                        [200.0 + gap, 200.0],
                        [80.0, 300.0 - spread],
                        [80.0 + spread, 300.0],
                    ]
                ) + vrng.normal(scale=0.2, size=(4, 2))
                frames.append(
                    [FeaturePoint(i, descs[i], PixelPoint(*coords[i])) for i in range(4)]
                )
            videos.append(
                DemoVideo(video_id=f"{cat}{v}", category_id=cat, frames=frames)
            )
    return videos


class TestCovgsIl:
    def config(self, **kw):
        base = dict(
            outer_iters=3,
            temporal_steps=2,
            sim_steps=2,
            batch_size=4,
            sim_batch_size=4,
            hidden_width=6,
            embedding_dim=4,
            rounds=2,
            seed=0,
        )
        base.update(kw)
        return TrainConfig(**base)

    def test_runs_and_logs_metrics(self):
        result = covgs_il(two_category_videos(), PP, self.config())
        assert len(result.metrics) == 3
        assert not result.aborted
        for row in result.metrics:
            assert np.isfinite(row["temporal_loss"])
            assert np.isfinite(row["sim_loss"])
            assert np.isfinite(row["grad_norm"])

    def test_bit_reproducible(self):
        r1 = covgs_il(two_category_videos(), PP, self.config())
        r2 = covgs_il(two_category_videos(), PP, self.config())
        for name, arr in r1.params.arrays.items():
            assert arr.tobytes() == r2.params.arrays[name].tobytes()
        assert [m["temporal_loss"] for m in r1.metrics] == [
            m["temporal_loss"] for m in r2.metrics
        ]

    def test_seed_changes_result(self):
        r1 = covgs_il(two_category_videos(), PP, self.config())
        r2 = covgs_il(two_category_videos(), PP, self.config(seed=1))
        assert any(
            r1.params.arrays[n].tobytes() != r2.params.arrays[n].tobytes()
            for n in r1.params.arrays
        )

    def test_single_category_rejected(self):
        videos = [v for v in two_category_videos() if v.category_id == "a"]
        with pytest.raises(EmptyDataset):
            covgs_il(videos, PP, self.config())

    def test_sim_steps_zero_is_plain_temporal_training(self):
        result = covgs_il(two_category_videos(), PP, self.config(sim_steps=0))
        assert not result.aborted
        assert all(math.isnan(m["sim_loss"]) for m in result.metrics)

    def test_nonfinite_loss_aborts_with_last_good(self):
        # an infinite learning rate poisons the params after the first step,
        # so the second temporal step evaluates a NaN loss
        result = covgs_il(
            two_category_videos(), PP, self.config(lr_temporal=float("inf"), outer_iters=5)
        )
        assert result.aborted
        for arr in result.params.arrays.values():
            assert np.isfinite(arr).all()

    def test_learns_the_closing_pair(self):
        videos = two_category_videos(n_frames=16, videos_per_cat=4)
        config = self.config(
            outer_iters=40, temporal_steps=3, sim_steps=2, batch_size=8, seed=0
        )
        result = covgs_il(videos, PP, config)
        from geomimic.graphs import enumerate_instances

        hits = 0
        total = 0
        for video in videos:
            for frame in video.frames[:: len(video.frames) // 3]:
                candidates = enumerate_instances(frame, PP)
                top = select(result.params, candidates, p=1).top[0]
                total += 1
                hits += top.canonical_key == (0, 1)
        assert hits / total >= 0.9, f"selected the closing pair in {hits}/{total} frames"
