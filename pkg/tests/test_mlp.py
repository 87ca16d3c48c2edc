import json
import math

import numpy as np
import pytest

from modens import (ComponentDistribution, Dataset, EnsembleModel, Family, Head,
                    ModelFileError, TrainConfig, fit_propensity,
                    forward, load_model, predict_components,
                    predict_components_batch, predict_propensity,
                    predict_propensity_batch, save_model, train_ensemble,
                    train_member)
from modens.mlp import init_params, nll, nll_and_grads


def zero_params(layer_sizes, head):
    rng = np.random.default_rng(0)
    p = init_params(layer_sizes, head, rng)
    for w in p.weights:
        w[:] = 0.0
    for b in p.biases:
        b[:] = 0.0
    return p


def numeric_gradients(params, X, target, step=1e-5):
    """Central finite differences over every parameter."""
    gw = [np.zeros_like(w) for w in params.weights]
    gb = [np.zeros_like(b) for b in params.biases]
    for l, w in enumerate(params.weights):
        it = np.nditer(w, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = w[idx]
            w[idx] = orig + step
            up = nll(params, X, target)
            w[idx] = orig - step
            dn = nll(params, X, target)
            w[idx] = orig
            gw[l][idx] = (up - dn) / (2 * step)
    for l, b in enumerate(params.biases):
        for i in range(b.shape[0]):
            orig = b[i]
            b[i] = orig + step
            up = nll(params, X, target)
            b[i] = orig - step
            dn = nll(params, X, target)
            b[i] = orig
            gb[l][i] = (up - dn) / (2 * step)
    return gw, gb


def grad_relative_error(params, X, target):
    _, gw, gb = nll_and_grads(params, X, target)
    nw, nb = numeric_gradients(params, X, target)
    num = np.concatenate([a.ravel() for a in gw + gb])
    ref = np.concatenate([a.ravel() for a in nw + nb])
    denom = max(np.linalg.norm(ref), 1e-8)
    return float(np.linalg.norm(num - ref) / denom)


def small_data(rng, n=40, d=3):
    X = rng.normal(0, 1, (n, d))
    t = rng.integers(0, 2, n)
    y = X @ rng.normal(0, 1, d) + 0.5 * t + rng.normal(0, 0.3, n)
    return Dataset(covariates=X, treatments=t, outcomes=y)


class TestForward:
    def test_zero_gaussian_net_is_standard_normal(self):
        p = zero_params((4, 5, 2), Head.GAUSSIAN)
        d = forward(p, np.zeros(3), t=1)
        assert isinstance(d, ComponentDistribution)
        assert d.family is Family.GAUSSIAN
        assert d.location == 0.0
        assert d.scale == 1.0

    def test_zero_cauchy_net(self):
        p = zero_params((3, 4, 2), Head.CAUCHY)
        d = forward(p, np.ones(2), t=0)
        assert d.family is Family.CAUCHY
        assert (d.location, d.scale) == (0.0, 1.0)

    def test_zero_propensity_net_is_half(self):
        p = zero_params((3, 4, 1), Head.PROPENSITY)
        assert forward(p, np.zeros(3)) == pytest.approx(0.5)

    def test_dimension_mismatch_rejected(self):
        p = zero_params((4, 5, 2), Head.GAUSSIAN)
        with pytest.raises(ValueError):
            forward(p, np.zeros(5), t=1)
        with pytest.raises(ValueError):
            forward(p, np.zeros(3))  # missing treatment


class TestGradients:
    @pytest.mark.parametrize("head", [Head.GAUSSIAN, Head.CAUCHY, Head.PROPENSITY])
    def test_backprop_matches_central_differences(self, head, rng):
        for trial in range(6):
            n, d_in = 7, 4
            sizes = (d_in, 5, 3, head.out_dim)
            p = init_params(sizes, head, np.random.default_rng(100 + trial))
            X = rng.normal(0, 1, (n, d_in))
            if head is Head.PROPENSITY:
                target = rng.integers(0, 2, n).astype(float)
            else:
                target = rng.normal(0, 2, n)
            assert grad_relative_error(p, X, target) <= 1e-4


class TestTrainMember:
    def test_constant_outcome_recovers_location(self, rng):
        c = 3.7
        n = 60
        data = Dataset(covariates=rng.normal(0, 1, (n, 2)),
                       treatments=rng.integers(0, 2, n),
                       outcomes=np.full(n, c))
        cfg = TrainConfig(hidden=(8,), epochs=400, head=Head.GAUSSIAN)
        p = train_member(data, cfg, seed=5)
        for i in range(10):
            d = forward(p, data.covariates[i], int(data.treatments[i]))
            assert abs(d.location - c) <= abs(c) * 0.01 + 0.01
            assert d.scale > 0

    def test_separable_propensity_reaches_auc_one(self):
        # logistic MLE on 20 linearly separable points orders them perfectly
        x = np.linspace(-1, 1, 20).reshape(-1, 1)
        t = (x[:, 0] > 0).astype(int)
        data = Dataset(covariates=x, treatments=t, outcomes=np.zeros(20))
        cfg = TrainConfig(hidden=(4,), epochs=600, head=Head.GAUSSIAN)
        p = fit_propensity(data, cfg, seed=1)
        preds = predict_propensity_batch(p, x)
        assert preds[t == 1].min() > preds[t == 0].max()  # AUC = 1.0

    def test_different_seeds_differ(self, rng):
        data = small_data(rng)
        cfg = TrainConfig(hidden=(6,), epochs=50, head=Head.GAUSSIAN)
        p1 = train_member(data, cfg, seed=1)
        p2 = train_member(data, cfg, seed=2)
        assert any(not np.array_equal(a, b)
                   for a, b in zip(p1.weights, p2.weights))

    def test_final_nll_not_worse_than_initial(self, rng):
        data = small_data(rng, n=50)
        cfg = TrainConfig(hidden=(6,), epochs=30, head=Head.GAUSSIAN, standardize=False)
        p = train_member(data, cfg, seed=9)
        rng_replay = np.random.default_rng(9)
        idx = rng_replay.integers(0, data.n, size=data.n)  # the bootstrap draw
        init = init_params((4, 6, 2), Head.GAUSSIAN, rng_replay)
        X = np.column_stack([data.covariates, data.treatments.astype(float)])[idx]
        y = data.outcomes[idx]
        assert nll(p, X, y) <= nll(init, X, y) + 1e-12

    def test_cauchy_member_trains_on_heavy_tails(self, rng):
        n = 300
        X = rng.normal(0, 1, (n, 2))
        t = rng.integers(0, 2, n)
        u = 3.0 * X[:, 0] + 2.0 * t
        y = u + rng.standard_cauchy(n)
        data = Dataset(covariates=X, treatments=t, outcomes=y)
        cfg = TrainConfig(hidden=(8,), epochs=250, head=Head.CAUCHY, warmup_epochs=150)
        p = train_member(data, cfg, seed=2)
        assert p.head is Head.CAUCHY
        locs = np.array([forward(p, X[i], int(t[i])).location for i in range(n)])
        assert np.median(np.abs(locs - u)) < np.median(np.abs(np.median(y) - u))


class TestTrainEnsemble:
    def test_singleton_matches_member_seed_plus_one(self, rng):
        data = small_data(rng)
        cfg = TrainConfig(hidden=(5,), epochs=40, head=Head.GAUSSIAN)
        model = train_ensemble(data, cfg, seed=10, m=1)
        member = train_member(data, cfg, seed=11)
        for a, b in zip(model.members[0].weights, member.weights):
            assert np.array_equal(a, b)

    def test_deterministic_given_seed(self, rng, tmp_path):
        data = small_data(rng)
        cfg = TrainConfig(hidden=(5,), epochs=40, head=Head.GAUSSIAN)
        m1 = train_ensemble(data, cfg, seed=4, m=3)
        m2 = train_ensemble(data, cfg, seed=4, m=3)
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        save_model(m1, p1)
        save_model(m2, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_emitted_scales_positive(self, rng):
        data = small_data(rng)
        cfg = TrainConfig(hidden=(5,), epochs=60, head=Head.GAUSSIAN)
        model = train_ensemble(data, cfg, seed=4, m=3)
        _, scales = predict_components_batch(model, data.covariates, data.treatments)
        assert (scales >= 1e-6).all()

    def test_sixteen_members_beat_untrained_init_held_out(self):
        from modens import GeneratorConfig, generate_dataset

        gen = GeneratorConfig(seed=13, n_train=256, n_valid=128, n_test=32,
                              noise_family="gaussian", noise_scale=4.0)
        train, valid, _ = generate_dataset(None, gen)
        cfg = TrainConfig(hidden=(8,), epochs=120, head=Head.GAUSSIAN,
                          standardize=False)
        seed = 30
        model = train_ensemble(train, cfg, seed=seed, m=16)
        X_val = np.column_stack([valid.covariates, valid.treatments.astype(float)])
        better = 0
        for j, member in enumerate(model.members, start=1):
            replay = np.random.default_rng(seed + j)
            replay.integers(0, train.n, size=train.n)  # the bootstrap draw
            init = init_params(member.layer_sizes, Head.GAUSSIAN, replay)
            if nll(member, X_val, valid.outcomes) < nll(init, X_val, valid.outcomes):
                better += 1
        assert better >= 15


class TestPredict:
    def test_single_member_matches_forward(self, rng):
        data = small_data(rng)
        cfg = TrainConfig(hidden=(5,), epochs=30, head=Head.GAUSSIAN)
        model = train_ensemble(data, cfg, seed=2, m=1)
        x = data.covariates[0]
        comps = predict_components(model, x, 1)
        ref = forward(model.members[0], x, 1)
        assert comps[0].location == ref.location
        assert comps[0].scale == ref.scale

    def test_member_order_preserved_under_permutation(self, rng):
        data = small_data(rng)
        cfg = TrainConfig(hidden=(5,), epochs=30, head=Head.GAUSSIAN)
        model = train_ensemble(data, cfg, seed=2, m=4)
        perm = [2, 0, 3, 1]
        permuted = EnsembleModel(members=tuple(model.members[i] for i in perm),
                                 seed=model.seed)
        x = data.covariates[1]
        a = predict_components(model, x, 0)
        b = predict_components(permuted, x, 0)
        for i, j in enumerate(perm):
            assert a[j].location == b[i].location

    def test_propensity_complement(self, rng):
        data = small_data(rng)
        cfg = TrainConfig(hidden=(4,), epochs=40, head=Head.GAUSSIAN)
        p = fit_propensity(data, cfg, seed=3)
        e1 = predict_propensity(p, data.covariates[0])
        assert 0.0 < e1 < 1.0
        # e0 is defined as the exact complement
        assert (1.0 - e1) + e1 == 1.0

    def test_coin_flip_treatments_give_half(self, rng):
        n = 400
        X = rng.normal(0, 1, (n, 3))
        t = rng.integers(0, 2, n)  # independent of X
        data = Dataset(covariates=X, treatments=t, outcomes=np.zeros(n))
        cfg = TrainConfig(hidden=(4,), epochs=150, head=Head.GAUSSIAN)
        p = fit_propensity(data, cfg, seed=8)
        preds = predict_propensity_batch(p, rng.normal(0, 1, (200, 3)))
        assert abs(preds.mean() - 0.5) <= 0.05


class TestSerialization:
    def test_round_trip_structural_equality(self, rng, tmp_path):
        data = small_data(rng)
        cfg = TrainConfig(hidden=(5,), epochs=30, head=Head.CAUCHY, warmup_epochs=20)
        model = train_ensemble(data, cfg, seed=6, m=2)
        path = tmp_path / "model.json"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.head is model.head
        assert loaded.seed == model.seed
        assert loaded.m == model.m
        for a, b in zip(model.members, loaded.members):
            assert a.layer_sizes == b.layer_sizes
            for wa, wb in zip(a.weights, b.weights):
                assert np.array_equal(wa, wb)

    def test_loaded_predictions_bit_identical(self, rng, tmp_path):
        data = small_data(rng)
        cfg = TrainConfig(hidden=(5,), epochs=30, head=Head.GAUSSIAN)
        model = train_ensemble(data, cfg, seed=6, m=2)
        path = tmp_path / "model.json"
        save_model(model, path)
        loaded = load_model(path)
        x = data.covariates[3]
        for a, b in zip(predict_components(model, x, 1), predict_components(loaded, x, 1)):
            assert a.location == b.location
            assert a.scale == b.scale

    def test_truncated_file_is_parse_error(self, rng, tmp_path):
        data = small_data(rng)
        cfg = TrainConfig(hidden=(5,), epochs=20, head=Head.GAUSSIAN)
        model = train_ensemble(data, cfg, seed=6, m=1)
        path = tmp_path / "model.json"
        save_model(model, path)
        blob = path.read_text()
        path.write_text(blob[: len(blob) // 2])
        with pytest.raises(ModelFileError, match="line"):
            load_model(path)

    def test_wrong_schema_version(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text(json.dumps({"schema_version": 99}))
        with pytest.raises(ModelFileError, match="schema_version"):
            load_model(path)


class TestBootstrap:
    def test_row_inclusion_frequency(self):
        # P(row in resample) = 1 - (1 - 1/n)^n; check within 3 SEs
        n, reps = 64, 400
        expected = 1.0 - (1.0 - 1.0 / n) ** n
        hits = np.zeros(n)
        for s in range(reps):
            rng = np.random.default_rng(s)
            idx = rng.integers(0, n, size=n)
            hits[np.unique(idx)] += 1
        freq = hits.mean() / reps
        se = math.sqrt(expected * (1 - expected) / (n * reps))
        assert abs(freq - expected) <= 3 * se
