import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import class_prob

from lesionlens.errors import DimensionMismatch, FormatError
from lesionlens.fastcav import (
    CavConfig,
    ConceptVector,
    LinearHead,
    concept_sensitivity,
    load_cav,
    save_cav,
    sensitivities,
    softmax,
    tcav_score,
    train_cav,
)
from lesionlens.imgio import Tensor


def clusters(rng, axis=0, dim=2, n=100, sep=3.0, sigma=0.5):
    shift = np.zeros(dim)
    shift[axis] = sep
    return rng.normal(shift, sigma, (n, dim)), rng.normal(-shift, sigma, (n, dim))


def random_head(rng, c=4, f=5):
    return LinearHead(rng.normal(size=(c, f)), rng.normal(size=c))


class TestTrainCav:
    @pytest.mark.parametrize("axis", [0, 1])
    def test_recovers_separating_axis(self, rng, axis):
        pos, neg = clusters(rng, axis)
        cav = train_cav(pos, neg)
        assert cav.v[axis] >= 0.95
        assert cav.train_accuracy >= 0.95
        assert cav.status == "ok"

    def test_higher_dimensional_recovery(self, rng):
        pos, neg = clusters(rng, axis=3, dim=8)
        assert train_cav(pos, neg).v[3] >= 0.95

    def test_identical_sets_are_degenerate(self, rng, caplog):
        x = rng.normal(size=(50, 3))
        cav = train_cav(x, x)
        assert cav.train_accuracy == pytest.approx(0.5, abs=0.1)
        assert cav.status == "degenerate"
        assert "below" in caplog.text

    def test_positives_project_higher(self, rng):
        neg, pos = clusters(rng)  # positives now on the negative side of e1
        cav = train_cav(pos, neg)
        assert pos.mean(axis=0) @ cav.v > neg.mean(axis=0) @ cav.v
        assert cav.v[0] <= -0.95

    @pytest.mark.parametrize("factor", [0.01, 3.0, 250.0])
    def test_common_rescaling_invariance(self, rng, factor):
        pos, neg = clusters(rng, dim=4)
        pos[:, 1:] += rng.normal(size=(len(pos), 3))
        a = train_cav(pos, neg)
        b = train_cav(pos * factor, neg * factor)
        assert a.v @ b.v >= 0.999

    def test_deterministic_under_seed(self, rng):
        pos, neg = clusters(rng)
        cfg = CavConfig(seed=9)
        assert np.array_equal(train_cav(pos, neg, cfg).v, train_cav(pos, neg, cfg).v)

    def test_dimension_mismatch(self, rng):
        with pytest.raises(DimensionMismatch):
            train_cav(rng.normal(size=(5, 3)), rng.normal(size=(5, 4)))

    def test_too_few_examples(self, rng):
        with pytest.raises(ValueError):
            train_cav(rng.normal(size=(1, 3)), rng.normal(size=(5, 3)))


class TestSensitivity:
    def test_hand_value(self):
        head = LinearHead([[1.0, 0.0], [-1.0, 0.0]], [0.0, 0.0])
        v = ConceptVector("c", [1.0, 0.0], 1.0, 0)
        assert concept_sensitivity([0.0, 0.0], head, 0, v) == pytest.approx(0.5)
        assert concept_sensitivity([0.0, 0.0], head, 1, v) == pytest.approx(-0.5)

    def test_orthogonal_vector_gives_zero(self, rng):
        head = LinearHead([[1.0, 0.0, 0.0], [2.0, -1.0, 0.0]], [0.1, 0.2])
        v = ConceptVector("c", [0.0, 0.0, 1.0], 1.0, 0)
        f = rng.normal(size=(10, 3))
        assert np.all(sensitivities(f, head, 0, v) == 0.0)
        score = tcav_score(f, head, 0, v)
        assert score.tcav_fraction == 0.0 and score.mean_sensitivity == 0.0

    def test_matches_central_difference(self, rng):
        h = 1e-4
        for _ in range(100):
            c, f_dim = int(rng.integers(2, 6)), int(rng.integers(2, 7))
            head = random_head(rng, c, f_dim)
            v = ConceptVector("c", rng.normal(size=f_dim), 1.0, 0)
            f = rng.normal(size=f_dim)
            cls = int(rng.integers(c))
            W, b = head.W.tolist(), head.b.tolist()
            fd = (class_prob(W, b, (f + h * v.v).tolist(), cls) - class_prob(W, b, (f - h * v.v).tolist(), cls)) / (2 * h)
            s = concept_sensitivity(f, head, cls, v)
            assert abs(s - fd) <= 1e-4 * max(abs(fd), 1e-8)

    def test_logit_mode(self, rng):
        head = random_head(rng)
        v = ConceptVector("c", rng.normal(size=5), 1.0, 0)
        s = sensitivities(rng.normal(size=(3, 5)), head, 2, v, mode="logit")
        np.testing.assert_allclose(s, head.W[2] @ v.v)

    def test_unknown_mode(self, rng):
        head = random_head(rng)
        with pytest.raises(ValueError):
            sensitivities(np.zeros(5), head, 0, ConceptVector("c", np.ones(5), 1.0, 0), mode="hinge")

    def test_dimension_mismatch(self, rng):
        head = random_head(rng, 3, 4)
        v = ConceptVector("c", np.ones(4), 1.0, 0)
        with pytest.raises(DimensionMismatch):
            concept_sensitivity(np.zeros(5), head, 0, v)
        with pytest.raises(DimensionMismatch):
            concept_sensitivity(np.zeros(4), head, 0, ConceptVector("c", np.ones(3), 1.0, 0))
        with pytest.raises(DimensionMismatch):
            concept_sensitivity(np.zeros(4), head, 3, v)

    def test_linear_in_direction(self, rng):
        # ConceptVector normalizes, so scale the raw direction through the formula directly
        head = random_head(rng)
        f = rng.normal(size=(6, 5))
        u = rng.normal(size=5)
        p = softmax(f @ head.W.T + head.b)
        raw = lambda d: p[:, 1] * (head.W[1] @ d - p @ (head.W @ d))  # noqa: E731
        np.testing.assert_allclose(raw(2.5 * u), 2.5 * raw(u), rtol=1e-12)
        v = ConceptVector("c", u, 1.0, 0)
        np.testing.assert_allclose(sensitivities(f, head, 1, v), raw(u) / np.linalg.norm(u), rtol=1e-10)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_softmax_sums_to_one(self, seed):
        r = np.random.default_rng(seed)
        p = softmax(r.normal(scale=50, size=(7, 6)))
        assert np.all(np.abs(p.sum(axis=1) - 1) <= 1e-9)


class TestTcav:
    def test_all_positive(self):
        head = LinearHead([[1.0, 0.0], [-1.0, 0.0]], [0.0, 0.0])
        v = ConceptVector("c", [1.0, 0.0], 1.0, 0)
        score = tcav_score(np.zeros((4, 2)), head, 0, v)
        assert score.tcav_fraction == 1.0 and score.n_inputs == 4

    def test_sign_count_oracle(self, rng):
        for _ in range(20):
            head = random_head(rng, 3, 4)
            v = ConceptVector("c", rng.normal(size=4), 1.0, 0)
            f = rng.normal(scale=3, size=(25, 4))
            h = 1e-5
            count = 0
            for x in f:
                W, b = head.W.tolist(), head.b.tolist()
                fd = class_prob(W, b, (x + h * v.v).tolist(), 1) - class_prob(W, b, (x - h * v.v).tolist(), 1)
                count += concept_sensitivity(x, head, 1, v) > 0
                assert (fd > 0) == (concept_sensitivity(x, head, 1, v) > 0) or abs(fd) < 1e-12
            score = tcav_score(f, head, 1, v)
            assert score.tcav_fraction == count / 25
            assert score.mean_sensitivity == pytest.approx(np.mean([concept_sensitivity(x, head, 1, v) for x in f]))

    def test_fraction_invariant_to_direction_scale(self, rng):
        head = random_head(rng)
        f = rng.normal(size=(30, 5))
        u = rng.normal(size=5)
        a = tcav_score(f, head, 0, ConceptVector("c", u, 1.0, 0))
        b = tcav_score(f, head, 0, ConceptVector("c", 7.0 * u, 1.0, 0))
        assert a.tcav_fraction == b.tcav_fraction


class TestPersistence:
    def test_round_trip(self, tmp_path, rng):
        cav = train_cav(*clusters(rng), concept_name="asymmetry")
        vec, meta = save_cav(cav, tmp_path / "asym")
        assert vec.name == "asym.mnt" and meta.name == "asym.json"
        back = load_cav(tmp_path / "asym.json")
        assert back.concept_name == "asymmetry" and back.seed == cav.seed
        assert back.train_accuracy == cav.train_accuracy
        np.testing.assert_allclose(back.v, cav.v, atol=1e-7)

    def test_sidecar_missing_field(self, tmp_path):
        save_cav(ConceptVector("c", [1.0, 0.0], 1.0, 0), tmp_path / "c")
        (tmp_path / "c.json").write_text('{"concept_name": "c"}')
        with pytest.raises(FormatError):
            load_cav(tmp_path / "c.mnt")

    def test_head_packing(self, rng):
        head = random_head(rng, 3, 4)
        t = head.to_tensor()
        assert t.dims == (3, 5)
        back = LinearHead.from_tensor(t)
        np.testing.assert_allclose(back.W, head.W, atol=1e-6)
        np.testing.assert_allclose(back.b, head.b, atol=1e-6)

    def test_head_shape_errors(self):
        with pytest.raises(FormatError):
            LinearHead.from_tensor(Tensor.from_array(np.zeros(4)))
        with pytest.raises(DimensionMismatch):
            LinearHead(np.zeros((1, 3)), np.zeros(1))
        with pytest.raises(DimensionMismatch):
            LinearHead(np.zeros((2, 3)), np.zeros(3))
