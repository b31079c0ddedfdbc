import math

import numpy as np
import pytest

from iqpphase import InvalidInputError, NumericalError, ResourceError
from iqpphase.circuit import distribution, sample_instance
from iqpphase.ebm import (
    AdamState,
    MlpEnergyModel,
    NgdState,
    TrainConfig,
    TrainingDiverged,
    adam_step,
    ce_gradient,
    cross_entropy,
    energies,
    energy,
    exact_ce_gradient,
    exact_sample,
    fisher_matrix,
    init_model,
    kl,
    load_model,
    model_distribution,
    ngd_step,
    param_count,
    read_trace,
    save_model,
    softmax,
    spins,
    train,
    write_trace,
)

from oracles import loop_forward, two_pass_covariance


def linear_model(w):
    return MlpEnergyModel((len(w), 1), (False,), np.asarray(w, dtype=float))


def tiny_model(seed=0, hidden=8, n=2):
    model = MlpEnergyModel((n, hidden, 1), (True, False))
    model.params[:] = np.random.default_rng(seed).normal(size=param_count(model))
    return model


class TestArchitecture:
    @pytest.mark.parametrize("n,count", [(8, 60_240), (20, 373_800)])
    def test_adam_counts(self, n, count):
        dims = (n, 30 * n, 30 * n, 1)
        model = MlpEnergyModel(dims, (True, True, False))
        assert param_count(model) == count

    def test_adam_init_count(self):
        assert param_count(init_model(8, "adam", 30)) == 60_240

    def test_ngd_count(self):
        assert param_count(init_model(8, "ngd")) == 800

    def test_small_dims(self):
        assert param_count(MlpEnergyModel((2, 3, 1), (True, True))) == 2 * 3 + 3 + 3 + 1

    def test_init_scheme_and_determinism(self):
        a, b = init_model(4, "adam", 2, seed=3), init_model(4, "adam", 2, seed=3)
        np.testing.assert_array_equal(a.params, b.params)
        assert not np.array_equal(a.params, init_model(4, "adam", 2, seed=4).params)
        assert np.all(np.abs(a.weights[0]) <= 1 / math.sqrt(4))
        assert np.all(np.abs(a.weights[1]) <= 1 / math.sqrt(8))

    def test_views_share_memory(self):
        m = init_model(3, "ngd", seed=1)
        m.params[0] = 42.0
        assert m.weights[0][0, 0] == 42.0
        assert m.copy().params is not m.params

    def test_validation(self):
        with pytest.raises(InvalidInputError):
            init_model(0)
        with pytest.raises(InvalidInputError):
            init_model(4, "sgd")
        with pytest.raises(InvalidInputError):
            MlpEnergyModel((2, 3, 2), (True, False))
        with pytest.raises(InvalidInputError):
            MlpEnergyModel((2, 1), (False,), np.zeros(3))


class TestEnergy:
    def test_zero_model(self):
        m = MlpEnergyModel((4, 5, 1), (True, False))
        np.testing.assert_array_equal(energies(m), 0)
        np.testing.assert_allclose(model_distribution(m), 1 / 16)

    def test_linear(self):
        w = np.array([0.3, -1.2, 0.7])
        s = spins(np.arange(8), 3)
        np.testing.assert_allclose(energies(linear_model(w)), s @ w, atol=1e-15)
        assert energy(linear_model(w), 0b101) == pytest.approx(-0.3 - 1.2 - 0.7)

    @pytest.mark.parametrize("arch", ["adam", "ngd"])
    def test_loop_oracle(self, arch):
        m = init_model(4, arch, alpha=3, seed=7)
        for x in range(16):
            assert energy(m, x) == pytest.approx(loop_forward(m, x), abs=1e-12)

    def test_distribution_linear_product(self):
        w = np.array([0.4, -0.9])
        p = model_distribution(linear_model(w))
        bit_p1 = [1 / (1 + math.exp(2 * wi)) for wi in w]  # P(bit = 1) since spin = -1
        expected = [(bit_p1[0] if x & 1 else 1 - bit_p1[0]) * (bit_p1[1] if x & 2 else 1 - bit_p1[1]) for x in range(4)]
        np.testing.assert_allclose(p, expected, atol=1e-15)

    def test_distribution_brute_force(self):
        m = init_model(6, "adam", alpha=2, seed=2)
        f = np.array([loop_forward(m, x) for x in range(64)])
        expected = np.exp(f) / np.exp(f).sum()
        p = model_distribution(m)
        np.testing.assert_allclose(p, expected, atol=1e-14)
        assert abs(p.sum() - 1) < 1e-12

    def test_shift_invariance_of_softmax(self):
        m = init_model(4, "adam", alpha=2, seed=5)
        p = model_distribution(m)
        np.testing.assert_allclose(softmax(energies(m) + 800.0), p, atol=1e-15)

    def test_resource_limit(self):
        with pytest.raises(ResourceError):
            model_distribution(MlpEnergyModel((23, 1), (False,)))


class TestSampling:
    def test_point_mass(self):
        d = np.zeros(16)
        d[11] = 1.0
        assert set(exact_sample(d, 1000, 0).tolist()) == {11}

    def test_uniform_frequencies(self):
        s = exact_sample(np.full(4, 0.25), 100_000, 1)
        freq = np.bincount(s, minlength=4) / s.size
        np.testing.assert_allclose(freq, 0.25, atol=0.01)

    def test_tv(self, rng):
        d = rng.random(16)
        d /= d.sum()
        s = exact_sample(d, 100_000, 2)
        assert 0.5 * np.abs(np.bincount(s, minlength=16) / s.size - d).sum() < 0.02

    def test_deterministic(self):
        d = np.array([0.1, 0.2, 0.3, 0.4])
        np.testing.assert_array_equal(exact_sample(d, 50, 9), exact_sample(d, 50, 9))

    def test_zero_mass_never_drawn(self):
        d = np.array([0.0, 0.5, 0.0, 0.5])
        assert set(exact_sample(d, 10_000, 3).tolist()) <= {1, 3}


class TestCeGradient:
    def test_equal_samples_zero(self):
        m = tiny_model()
        s = [0, 1, 1, 3]
        np.testing.assert_array_equal(ce_gradient(m, s, list(reversed(s))), 0)

    def test_finite_differences(self, rng):
        m = tiny_model(seed=1)
        target = rng.random(4)
        target /= target.sum()
        g = exact_ce_gradient(m, target)
        h = 1e-5
        fd = np.empty_like(g)
        for k in range(param_count(m)):
            old = m.params[k]
            m.params[k] = old + h
            up = cross_entropy(m, target)
            m.params[k] = old - h
            down = cross_entropy(m, target)
            m.params[k] = old
            fd[k] = -(up - down) / (2 * h)
        assert np.max(np.abs(g - fd) / np.maximum(np.abs(fd), 1e-3)) < 1e-4

    def test_linear_closed_form(self, rng):
        w = rng.normal(size=3)
        m = linear_model(w)
        target = rng.random(8)
        target /= target.sum()
        s = spins(np.arange(8), 3)
        expected = target @ s - model_distribution(m) @ s
        np.testing.assert_allclose(exact_ce_gradient(m, target), expected, atol=1e-14)

    def test_full_batch_linear(self):
        # weights 0.5 log 3 make each spin +1 with probability 3/4, a dyadic law
        m = linear_model([0.5 * math.log(3)] * 2)
        p_w = model_distribution(m)
        np.testing.assert_allclose(p_w * 16, [9, 3, 3, 1], atol=1e-12)
        target = np.array([1, 2, 4, 1]) / 8
        t_samples = np.repeat(np.arange(4), (target * 16).astype(int))
        m_samples = np.repeat(np.arange(4), [9, 3, 3, 1])
        sampled = ce_gradient(m, t_samples, m_samples)
        exact = exact_ce_gradient(m, target)
        assert np.linalg.norm(sampled - exact) / np.linalg.norm(exact) < 1e-6

    def test_full_batch_mlp(self, rng):
        # hidden layers random, output weights zero: p_W is uniform and every sample set is exact
        m = init_model(3, "adam", alpha=2, seed=4)
        m.weights[-1][...] = 0.0
        target = np.array([3, 1, 0, 2, 5, 1, 3, 1]) / 16
        t_samples = np.repeat(np.arange(8), (target * 16).astype(int))
        m_samples = np.arange(8)
        sampled = ce_gradient(m, t_samples, m_samples)
        exact = exact_ce_gradient(m, target)
        assert np.linalg.norm(exact) > 0
        assert np.linalg.norm(sampled - exact) / np.linalg.norm(exact) < 1e-6

    def test_empty(self):
        with pytest.raises(InvalidInputError):
            ce_gradient(tiny_model(), [], [0])


class TestAdam:
    def test_zero_gradient(self):
        m = tiny_model()
        before = m.params.copy()
        adam_step(m, AdamState.zeros(m), np.zeros_like(m.params), TrainConfig())
        np.testing.assert_array_equal(m.params, before)

    def test_first_step(self, rng):
        m = tiny_model()
        before = m.params.copy()
        g = rng.normal(size=param_count(m))
        cfg = TrainConfig(learning_rate=0.01)
        state = adam_step(m, AdamState.zeros(m), g, cfg)
        assert state.t == 1
        np.testing.assert_allclose(m.params - before, -0.01 * g / (np.abs(g) + 1e-8), atol=1e-15)

    def test_quadratic_bowl(self):
        m = linear_model([3.0, -2.0, 0.5])
        centre = np.array([1.0, 1.0, 1.0])
        cfg = TrainConfig(learning_rate=1e-3)
        state = AdamState.zeros(m)
        losses = []
        for _ in range(100):
            adam_step(m, state, m.params - centre, cfg)
            losses.append(0.5 * np.sum((m.params - centre) ** 2))
        assert np.all(np.diff(losses) < 0)


class TestFisher:
    def test_identical_samples(self):
        m = tiny_model()
        np.testing.assert_array_equal(fisher_matrix(m, [2] * 10), 0)

    def test_two_pass_oracle(self):
        m = tiny_model(seed=2, hidden=3)
        samples = [0, 1, 1, 2, 3, 3, 3]
        rows = [ce_gradient(m, [s], [0]) + ce_gradient(m, [0], [0]) for s in samples]
        # rows above are grad f(x_s) - grad f(x_0); covariance is shift invariant
        np.testing.assert_allclose(fisher_matrix(m, samples), two_pass_covariance(rows), atol=1e-12)

    def test_psd(self):
        m = init_model(4, "ngd", seed=3)
        s = exact_sample(model_distribution(m), 256, 0)
        F = fisher_matrix(m, s)
        np.testing.assert_allclose(F, F.T, atol=1e-14)
        assert np.linalg.eigvalsh(F).min() >= -1e-10


class TestNgd:
    def test_identity(self, rng):
        m = linear_model([0.1, 0.2])
        g = rng.normal(size=2)
        cfg = TrainConfig(optimizer="ngd", learning_rate=0.1, damping=0.0)
        ngd_step(m, NgdState.zeros(m), np.eye(2), g, cfg)
        np.testing.assert_allclose(m.params, [0.1, 0.2] - 0.1 * g, atol=1e-15)

    def test_newton_step(self):
        H = np.array([[3.0, 1.0], [1.0, 2.0]])
        w_star = np.array([0.7, -1.3])
        m = linear_model([2.0, 2.0])
        g = H @ (m.params - w_star)
        cfg = TrainConfig(optimizer="ngd", learning_rate=1.0, damping=0.0)
        ngd_step(m, NgdState.zeros(m), H, g, cfg)
        np.testing.assert_allclose(m.params, w_star, atol=1e-12)

    def test_large_damping(self, rng):
        m = linear_model([0.0, 0.0])
        g = rng.normal(size=2)
        cfg = TrainConfig(optimizer="ngd", learning_rate=1.0, damping=1e8)
        ngd_step(m, NgdState.zeros(m), np.eye(2), g, cfg)
        np.testing.assert_allclose(m.params * 1e8, -g, rtol=1e-7)

    def test_singular(self):
        m = linear_model([0.0, 0.0])
        cfg = TrainConfig(optimizer="ngd", damping=0.0)
        with pytest.raises(NumericalError, match="condition"):
            ngd_step(m, NgdState.zeros(m), np.zeros((2, 2)), np.ones(2), cfg)

    def test_shape_mismatch(self):
        m = linear_model([0.0, 0.0])
        with pytest.raises(InvalidInputError):
            ngd_step(m, NgdState.zeros(m), np.eye(3), np.ones(2), TrainConfig(optimizer="ngd"))


class TestTrain:
    def test_self_target(self):
        m = init_model(4, "adam", alpha=2, seed=0)
        target = model_distribution(m)
        res = train(target, TrainConfig(epochs=100, batch_size=1024), m)
        assert max(r["kl_forward"] for r in res.trace) < 1e-3
        assert [r["epoch"] for r in res.trace] == list(range(1, 101))

    def test_deterministic(self):
        target = distribution(sample_instance(4, 0.5, 1), "F")

        def run():
            res = train(target, TrainConfig(epochs=20, batch_size=64, seed=5), init_model(4, "adam", 2, seed=1))
            return [{k: v for k, v in r.items() if k != "wall_ms"} for r in res.trace], res.model.params

        (t1, p1), (t2, p2) = run(), run()
        assert t1 == t2
        np.testing.assert_array_equal(p1, p2)

    def test_learns_product_target(self):
        target = distribution(sample_instance(4, 0.0, 3), "F")
        res = train(target, TrainConfig(epochs=300, learning_rate=1e-2, seed=0), init_model(4, "adam", 4, seed=0))
        assert res.final_kl < 0.5 * res.trace[0]["kl_forward"]
        assert res.final_kl < 0.05

    def test_callback_early_stop(self):
        target = distribution(sample_instance(4, 0.5, 3), "F")
        seen = []
        res = train(target, TrainConfig(epochs=50), init_model(4, "ngd"), callback=lambda r: seen.append(r) or r["epoch"] == 7)
        assert len(res.trace) == 7 and seen == res.trace

    def test_ngd_runs(self):
        target = distribution(sample_instance(4, 0.5, 3), "F")
        m = init_model(4, "ngd", seed=0)
        kl0 = kl(target, model_distribution(m))
        res = train(target, TrainConfig(optimizer="ngd", learning_rate=1e-2, epochs=100, seed=0), m)
        assert res.final_kl < kl0

    def test_divergence(self):
        target = distribution(sample_instance(4, 0.5, 3), "F")
        m = init_model(4, "adam", 2, seed=0)
        with pytest.raises(TrainingDiverged) as info:
            train(target, TrainConfig(epochs=50, learning_rate=1e308), m)
        assert len(info.value.trace) >= 1

    def test_size_mismatch(self):
        with pytest.raises(InvalidInputError):
            train(np.full(8, 1 / 8), TrainConfig(epochs=1), init_model(4, "ngd"))

    def test_config_validation(self):
        for bad in ({"learning_rate": 0}, {"beta1": 1.0}, {"batch_size": 0}, {"optimizer": "sgd"}, {"damping": -1}):
            with pytest.raises(InvalidInputError):
                TrainConfig(**bad)


class TestLearningTrends:
    def test_smoothed_descent_q0(self):
        target = distribution(sample_instance(8, 0.0, 5), "F")
        res = train(target, TrainConfig(epochs=400, seed=0), init_model(8, "adam", 30, seed=0))
        blocks = np.array([r["kl_forward"] for r in res.trace]).reshape(-1, 50).mean(axis=1)
        assert np.all(np.diff(blocks) <= 0)
        assert blocks[-1] < 1e-2

    @pytest.mark.slow
    def test_converged_kl_grows_with_n(self):
        def median_kl(n):
            vals = []
            for k in range(3):
                target = distribution(sample_instance(n, 0.1, 200 + k), "F")
                res = train(target, TrainConfig(epochs=400, seed=k), init_model(n, "adam", 30, seed=k))
                vals.append(np.mean([r["kl_forward"] for r in res.trace[-40:]]))
            return np.median(vals)

        assert median_kl(12) > median_kl(8)


class TestPersistence:
    def test_model_roundtrip(self, tmp_path):
        m = init_model(5, "adam", alpha=2, seed=11)
        save_model(m, tmp_path / "m.bin")
        back = load_model(tmp_path / "m.bin")
        assert back.layer_dims == m.layer_dims and back.has_bias == m.has_bias
        np.testing.assert_array_equal(back.params, m.params)
        np.testing.assert_array_equal(energies(back), energies(m))

    def test_bad_checkpoint(self, tmp_path):
        (tmp_path / "x.bin").write_bytes(b"XXXX" + bytes(8))
        with pytest.raises(InvalidInputError):
            load_model(tmp_path / "x.bin")

    def test_trace_roundtrip(self, tmp_path):
        trace = [{"epoch": 1, "kl_forward": 0.1, "kl_reverse": 0.2, "grad_norm": 3.0, "wall_ms": 1.5}]
        write_trace(trace, tmp_path / "t.jsonl")
        assert read_trace(tmp_path / "t.jsonl") == trace
