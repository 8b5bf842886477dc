import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from piostack.base_learner import (
    BaseProbabilities,
    LinearHead,
    TrainConfig,
    bce_with_logits,
    forward_logits,
    gradient,
    head_from_json,
    head_to_json,
    mean_bce_with_logits,
    predict,
    predict_proba,
    read_probability_file,
    read_vectors_file,
    sigmoid,
    train,
    write_probability_file,
    write_vectors_file,
)
from piostack.errors import DivergenceError, SchemaError, ValidationError


class TestForwardLogits:
    def test_zero_input_zero_bias(self):
        head = LinearHead.zeros(4)
        assert np.array_equal(forward_logits(np.zeros(4), head), np.zeros(3))

    def test_identity_head(self):
        head = LinearHead(weights=np.eye(3), bias=np.zeros(3))
        assert np.array_equal(forward_logits(np.array([1.0, 2.0, 3.0]), head),
                              np.array([1.0, 2.0, 3.0]))

    def test_matches_double_loop_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            d = int(rng.integers(1, 8))
            head = LinearHead(weights=rng.normal(size=(d, 3)), bias=rng.normal(size=3))
            h = rng.normal(size=d)
            s = forward_logits(h, head)
            oracle = [
                sum(h[j] * head.weights[j, i] for j in range(d)) + head.bias[i]
                for i in range(3)
            ]
            np.testing.assert_allclose(s, oracle, rtol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            forward_logits(np.zeros(5), LinearHead.zeros(4))


class TestSigmoid:
    def test_zero_is_half(self):
        assert sigmoid(np.array(0.0)) == 0.5

    def test_symmetry_on_grid(self):
        s = np.linspace(-30, 30, 601)
        np.testing.assert_allclose(sigmoid(s) + sigmoid(-s), 1.0, atol=1e-12)

    def test_saturation_is_stable(self):
        out = sigmoid(np.array([1000.0, -1000.0]))
        assert np.all(np.isfinite(out))
        assert out[0] == pytest.approx(1.0) and out[1] == pytest.approx(0.0)

    @given(st.floats(-1e3, 1e3))
    def test_range(self, s):
        y = float(sigmoid(np.array(s)))
        assert 0.0 <= y <= 1.0


def _naive_bce(s, t):
    """Direct textbook evaluation through the sigmoid.

    Runs at 40 decimal digits: in float64 the 1 - y factor cancels
    catastrophically once |s| > ~16, which would corrupt the oracle, not
    the unit under test.
    """
    from mpmath import mp, mpf, exp, log

    mp.dps = 40
    total = mpf(0)
    for si, ti in zip(s, t):
        y = 1 / (1 + exp(-mpf(float(si))))
        total -= mpf(float(ti)) * log(y) + (1 - mpf(float(ti))) * log(1 - y)
    return float(total)


class TestBceWithLogits:
    def test_zero_logits_closed_form(self):
        for t in ([0, 0, 0], [1, 1, 1], [1, 0, 1]):
            assert bce_with_logits(np.zeros(3), np.array(t, float)) == pytest.approx(
                3 * math.log(2), abs=1e-12
            )

    def test_saturated_correct_logits_floor(self):
        s = np.array([40.0, -40.0, 40.0])
        t = np.array([1.0, 0.0, 1.0])
        assert 0.0 <= bce_with_logits(s, t) < 1e-12

    def test_matches_naive_form(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            s = rng.uniform(-20, 20, size=3)
            t = rng.integers(0, 2, size=3).astype(float)
            assert bce_with_logits(s, t) == pytest.approx(_naive_bce(s, t), abs=1e-9)

    def test_nonnegative(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            s = rng.uniform(-50, 50, size=3)
            t = rng.integers(0, 2, size=3).astype(float)
            assert bce_with_logits(s, t) >= 0.0


class TestGradient:
    def test_stationary_at_fit(self):
        # logits match targets exactly in probability space -> zero gradient
        s = np.array([40.0, -40.0, 40.0])
        t = np.array([1.0, 0.0, 1.0])
        h = np.array([1.0, 2.0])
        dw, db = gradient(s, t, h)
        np.testing.assert_allclose(dw, 0.0, atol=1e-12)
        np.testing.assert_allclose(db, 0.0, atol=1e-12)

    def test_zero_input_vector(self):
        s = np.array([1.0, -1.0, 0.0])
        t = np.array([0.0, 1.0, 1.0])
        dw, db = gradient(s, t, np.zeros(4))
        assert np.array_equal(dw, np.zeros((4, 3)))
        np.testing.assert_allclose(db, sigmoid(s) - t, atol=1e-15)

    def test_matches_central_finite_differences(self):
        rng = np.random.default_rng(17)
        step = 1e-5
        for _ in range(100):
            d = int(rng.integers(1, 6))
            head = LinearHead(weights=rng.normal(size=(d, 3)), bias=rng.normal(size=3))
            h = rng.normal(size=d)
            t = rng.integers(0, 2, size=3).astype(float)
            s = forward_logits(h, head)
            dw, db = gradient(s, t, h)

            def loss_at(weights, bias):
                return bce_with_logits(h @ weights + bias, t)

            for j in range(d):
                for i in range(3):
                    wp, wm = head.weights.copy(), head.weights.copy()
                    wp[j, i] += step
                    wm[j, i] -= step
                    fd = (loss_at(wp, head.bias) - loss_at(wm, head.bias)) / (2 * step)
                    assert dw[j, i] == pytest.approx(fd, rel=1e-6, abs=1e-8)
            for i in range(3):
                bp, bm = head.bias.copy(), head.bias.copy()
                bp[i] += step
                bm[i] -= step
                fd = (loss_at(head.weights, bp) - loss_at(head.weights, bm)) / (2 * step)
                assert db[i] == pytest.approx(fd, rel=1e-6, abs=1e-8)


def _separable_fixture(n=200, seed=42):
    rng = np.random.default_rng(seed)
    H = np.sign(rng.uniform(-1, 1, size=(n, 2)) - 0.2)
    T = np.stack([H[:, 0] > 0, H[:, 1] > 0, (H[:, 0] > 0) & (H[:, 1] > 0)], axis=1)
    return H, T.astype(float)


class TestTrain:
    def test_separable_reaches_low_loss(self):
        H, T = _separable_fixture()
        head = train((H, T), TrainConfig(learning_rate=0.5, epochs=50, seed=1))
        assert head.loss_history[-1] < 0.1
        assert head.loss_history[-1] <= head.loss_history[0]

    def test_single_example_strictly_decreases(self):
        h = np.array([[1.0, -0.5]])
        t = np.array([[1.0, 0.0, 1.0]])
        head = train((h, t), TrainConfig(epochs=5, seed=0))
        losses = head.loss_history
        assert len(losses) == 6
        assert all(b < a for a, b in zip(losses, losses[1:]))

    def test_deterministic_given_seed(self):
        H, T = _separable_fixture(seed=9)
        a = train((H, T), TrainConfig(seed=33))
        b = train((H, T), TrainConfig(seed=33))
        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.bias, b.bias)
        c = train((H, T), TrainConfig(seed=34))
        assert not np.array_equal(a.weights, c.weights)

    def test_accepts_pair_sequence(self):
        pairs = [(np.array([1.0, 0.0]), np.array([1.0, 0.0, 0.0])),
                 (np.array([0.0, 1.0]), np.array([0.0, 1.0, 0.0]))]
        head = train(pairs, TrainConfig(epochs=2, seed=0))
        assert head.input_dim == 2

    def test_divergence_names_epoch(self):
        H, T = _separable_fixture(seed=2)
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(DivergenceError) as err:
                train((H * 1e150, T), TrainConfig(learning_rate=1e160, epochs=3, seed=0))
        assert err.value.epoch >= 1

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            train([], TrainConfig())


class TestPredict:
    def test_zero_head_gives_half(self):
        head = LinearHead.zeros(3)
        np.testing.assert_array_equal(predict_proba(head, np.zeros((2, 3))), 0.5)

    def test_equals_composition_bitwise(self):
        rng = np.random.default_rng(3)
        head = LinearHead(weights=rng.normal(size=(4, 3)), bias=rng.normal(size=3))
        H = rng.normal(size=(10, 4))
        assert np.array_equal(predict_proba(head, H), sigmoid(forward_logits(H, head)))

    def test_batch_order_invariance(self):
        rng = np.random.default_rng(4)
        head = LinearHead(weights=rng.normal(size=(4, 3)), bias=rng.normal(size=3))
        H = rng.normal(size=(12, 4))
        perm = rng.permutation(12)
        np.testing.assert_array_equal(predict_proba(head, H)[perm], predict_proba(head, H[perm]))

    def test_payload_records(self):
        head = LinearHead.zeros(2)
        records = predict(head, np.zeros((2, 2)), ["a", "b"], "m1")
        assert [r.instance_id for r in records] == ["a", "b"]
        assert all(r.p == (0.5, 0.5, 0.5) for r in records)


class TestProbabilityFile:
    def _records(self):
        return [
            BaseProbabilities("a", "m1", (0.1, 0.2, 0.3)),
            BaseProbabilities("b", "m1", (1.0, 0.0, 0.5)),
            BaseProbabilities("a", "m2", (0.9, 0.8, 0.7)),
        ]

    def test_round_trip(self):
        buf = io.StringIO()
        assert write_probability_file(self._records(), buf) == 3
        back = read_probability_file(io.StringIO(buf.getvalue()))
        assert back == self._records()

    def test_full_precision(self):
        value = 1 / 3
        buf = io.StringIO()
        write_probability_file([BaseProbabilities("a", "m", (value, 0.0, 1.0))], buf)
        back = read_probability_file(io.StringIO(buf.getvalue()))
        assert back[0].p[0] == value

    def test_out_of_range_names_row(self):
        text = "id,model,p_P,p_I,p_O\na,m,0.5,0.5,0.5\nb,m,1.3,0.5,0.5\n"
        with pytest.raises(ValidationError, match="row 3"):
            read_probability_file(io.StringIO(text))

    def test_duplicate_id_same_model_rejected(self):
        text = "id,model,p_P,p_I,p_O\na,m,0.5,0.5,0.5\na,m,0.4,0.5,0.5\n"
        with pytest.raises(ValidationError, match="duplicate"):
            read_probability_file(io.StringIO(text))

    def test_same_id_different_models_allowed(self):
        text = "id,model,p_P,p_I,p_O\na,m1,0.5,0.5,0.5\na,m2,0.4,0.5,0.5\n"
        assert len(read_probability_file(io.StringIO(text))) == 2

    def test_bad_header_rejected(self):
        with pytest.raises(ValidationError, match="header"):
            read_probability_file(io.StringIO("id,p_P,p_I,p_O\n"))


class TestVectorsFile:
    def test_round_trip(self):
        ids = ["x", "y"]
        matrix = np.array([[0.1, -2.5, 3.0], [1 / 7, 0.0, 9.9]])
        buf = io.StringIO()
        write_vectors_file(ids, matrix, buf)
        back_ids, back = read_vectors_file(io.StringIO(buf.getvalue()))
        assert back_ids == ids
        assert np.array_equal(back, matrix)

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValidationError, match="duplicate"):
            read_vectors_file(io.StringIO("id,f0\na,1\na,2\n"))


class TestHeadSerialization:
    def test_round_trip(self):
        rng = np.random.default_rng(8)
        head = LinearHead(weights=rng.normal(size=(5, 3)), bias=rng.normal(size=3),
                          loss_history=[2.0, 1.0])
        back, name = head_from_json(head_to_json(head, "linear"))
        assert name == "linear"
        assert np.array_equal(back.weights, head.weights)
        assert np.array_equal(back.bias, head.bias)

    def test_version_mismatch(self):
        head = LinearHead.zeros(2)
        text = head_to_json(head, "m").replace('"version": 1', '"version": 99')
        with pytest.raises(SchemaError, match="version"):
            head_from_json(text)
