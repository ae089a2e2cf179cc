import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pclab import numerics as nx
from pclab import oracles
from pclab.errors import ConfigError, ContractError, DegenerateInputError
from pclab.losses import (
    LossConfig,
    LossKind,
    PairedEmbeddings,
    ProjectionHead,
    bce_loss,
    compute_loss,
    fcl_loss,
    info_nce_core,
    lcl_loss,
    ntcl_loss,
    pcl_l2_loss,
    pcl_loss,
    pcl_mse_loss,
    sfcl_loss,
    uniformity_regularizer,
)
from pclab.model import ModelOutputs
from pclab.numerics import Tensor

CFG = LossConfig(kind="PCL", scale=7.0)


def pair(a, b):
    return PairedEmbeddings(Tensor(a), Tensor(b))


def softmax_np(x):
    z = np.exp(x - x.max(axis=1, keepdims=True))
    return z / z.sum(axis=1, keepdims=True)


def random_probs(rng, n, c):
    return softmax_np(rng.standard_normal((n, c)))


class TestLossConfig:
    def test_defaults(self):
        cfg = LossConfig()
        assert cfg.scale == 7.0 and cfg.bce_threshold == 0.95 and cfg.sfcl_threshold == 0.95 and cfg.symmetrize

    @pytest.mark.parametrize(
        "kw", [{"scale": 0.0}, {"bce_threshold": 0.0}, {"sfcl_threshold": 1.5}, {"kind": "SimCLR"}]
    )
    def test_rejects_bad_values(self, kw):
        with pytest.raises(ConfigError):
            LossConfig(**kw)


class TestInfoNCECore:
    def test_single_pair_is_exactly_zero(self):
        rng = np.random.default_rng(0)
        a, b = rng.standard_normal((1, 3)), rng.standard_normal((1, 3))
        assert info_nce_core(Tensor(a), Tensor(b), 7.0).item() == 0.0

    def test_two_one_hot_pairs(self):
        eye = np.eye(2)
        want = oracles.info_nce(eye, eye, 1.0)
        assert want == pytest.approx(-math.log(math.e / (2 + math.e)), abs=1e-15)
        for sym in (True, False):
            got = info_nce_core(Tensor(eye), Tensor(eye), 1.0, symmetrize=sym).item()
            assert got == pytest.approx(want, abs=1e-12)

    @pytest.mark.parametrize("sym", [True, False])
    def test_random_batch_against_loops(self, sym):
        rng = np.random.default_rng(4)
        a, b = rng.standard_normal((4, 5)), rng.standard_normal((4, 5))
        got = info_nce_core(Tensor(a), Tensor(b), 0.7, symmetrize=sym).item()
        assert abs(got - oracles.info_nce(a, b, 0.7, symmetrize=sym)) < 1e-9

    def test_empty_batch(self):
        with pytest.raises(ContractError):
            info_nce_core(Tensor(np.zeros((0, 3))), Tensor(np.zeros((0, 3))), 7.0)
        with pytest.raises(ContractError):
            PairedEmbeddings(Tensor(np.zeros((0, 3))), Tensor(np.zeros((0, 3))))


class TestFCL:
    def test_unit_inputs_skip_normalization(self):
        rng = np.random.default_rng(1)
        a = rng.standard_normal((4, 3))
        b = rng.standard_normal((4, 3))
        a /= np.linalg.norm(a, axis=1, keepdims=True)
        b /= np.linalg.norm(b, axis=1, keepdims=True)
        cfg = LossConfig(kind="FCL")
        assert fcl_loss(pair(a, b), cfg).item() == pytest.approx(info_nce_core(Tensor(a), Tensor(b), 7.0).item(), abs=1e-12)

    def test_scaling_features_by_ten(self):
        rng = np.random.default_rng(2)
        a, b = rng.standard_normal((4, 6)), rng.standard_normal((4, 6))
        cfg = LossConfig(kind="FCL")
        assert abs(fcl_loss(pair(10 * a, 10 * b), cfg).item() - fcl_loss(pair(a, b), cfg).item()) < 1e-10

    def test_against_loops(self):
        rng = np.random.default_rng(3)
        a, b = rng.standard_normal((4, 6)), rng.standard_normal((4, 6))
        assert abs(fcl_loss(pair(a, b), LossConfig(kind="FCL")).item() - oracles.fcl(a, b, 7.0)) < 1e-9

    def test_degenerate_row(self):
        a = np.array([[0.0, 0.0], [1.0, 0.0]])
        with pytest.raises(DegenerateInputError):
            fcl_loss(pair(a, a), LossConfig(kind="FCL"))


class TestPCL:
    def test_single_pair_zero(self):
        p = random_probs(np.random.default_rng(0), 1, 4)
        assert pcl_loss(pair(p, p), CFG).item() == 0.0

    @pytest.mark.parametrize("n,c", [(2, 3), (4, 4), (7, 5)])
    def test_uniform_rows_closed_form(self, n, c):
        u = np.full((n, c), 1.0 / c)
        assert abs(oracles.pcl(u, u, 7.0) - math.log(2 * n - 1)) < 1e-12
        for sym in (True, False):
            got = pcl_loss(pair(u, u), LossConfig(symmetrize=sym)).item()
            assert abs(got - math.log(2 * n - 1)) < 1e-10

    def test_against_loops(self):
        rng = np.random.default_rng(5)
        p, q = random_probs(rng, 4, 5), random_probs(rng, 4, 5)
        assert abs(pcl_loss(pair(p, q), CFG).item() - oracles.pcl(p, q, 7.0)) < 1e-9

    def test_rejects_non_probabilities(self):
        rng = np.random.default_rng(6)
        with pytest.raises(ContractError):
            pcl_loss(pair(rng.standard_normal((3, 4)), random_probs(rng, 3, 4)), CFG)

    def test_no_l2_normalization(self):
        # PCL and PCL-l2 must disagree on non-one-hot input
        rng = np.random.default_rng(7)
        p, q = random_probs(rng, 4, 3), random_probs(rng, 4, 3)
        assert abs(pcl_loss(pair(p, q), CFG).item() - pcl_l2_loss(pair(p, q), CFG).item()) > 1e-3


class TestLCL:
    def test_unit_logits(self):
        rng = np.random.default_rng(8)
        z = rng.standard_normal((3, 4))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        assert lcl_loss(pair(z, z[::-1]), CFG).item() == pytest.approx(
            info_nce_core(Tensor(z), Tensor(z[::-1]), 7.0).item(), abs=1e-12
        )

    def test_identity_classifier_equals_fcl(self):
        rng = np.random.default_rng(9)
        f, g = rng.standard_normal((4, 4)), rng.standard_normal((4, 4))
        logits_a, logits_b = f @ np.eye(4).T, g @ np.eye(4).T
        assert lcl_loss(pair(logits_a, logits_b), CFG).item() == fcl_loss(pair(f, g), CFG).item()

    def test_against_loops(self):
        rng = np.random.default_rng(10)
        a, b = rng.standard_normal((4, 5)), rng.standard_normal((4, 5))
        assert abs(lcl_loss(pair(a, b), CFG).item() - oracles.fcl(a, b, 7.0)) < 1e-9


def _head_by_hand(head, x):
    w1, b1, w2, b2 = (p.data.tolist() for p in head.parameters())
    h = [[max(0.0, v + b) for v, b in zip(row, b1)] for row in oracles.matmul(x, w1)]
    return [[v + b for v, b in zip(row, b2)] for row in oracles.matmul(h, w2)]


class TestNTCL:
    def test_identity_head(self):
        rng = np.random.default_rng(11)
        a, b = rng.standard_normal((4, 3)), rng.standard_normal((4, 3))
        cfg = LossConfig(kind="NTCL")
        assert ntcl_loss(pair(a, b), lambda t: t, cfg).item() == fcl_loss(pair(a, b), cfg).item()

    def test_random_head_against_loops(self):
        rng = np.random.default_rng(12)
        head = ProjectionHead(5, seed=3)
        a, b = rng.standard_normal((4, 5)), rng.standard_normal((4, 5))
        want = oracles.fcl(_head_by_hand(head, a), _head_by_hand(head, b), 7.0)
        assert abs(ntcl_loss(pair(a, b), head, LossConfig(kind="NTCL")).item() - want) < 1e-9

    def test_gradient_reaches_head(self):
        rng = np.random.default_rng(13)
        head = ProjectionHead(4, seed=1)
        a, b = rng.standard_normal((4, 4)), rng.standard_normal((4, 4))
        cfg = LossConfig(kind="NTCL")
        nx.backward(ntcl_loss(pair(a, b), head, cfg))
        assert all(p.grad is not None and np.abs(p.grad).max() > 0 for p in head.parameters())

        w1 = head.w1.data.copy()

        def as_fn_of_w1(w):
            head.w1 = w
            return ntcl_loss(pair(a, b), head, cfg)

        assert nx.finite_diff_check(as_fn_of_w1, w1) < 1e-4


class TestPCLL2:
    def test_one_hot_rows_match_pcl(self):
        p = np.eye(4)[[0, 2, 1, 3]]
        q = np.eye(4)[[0, 1, 1, 3]]
        assert pcl_l2_loss(pair(p, q), CFG).item() == pytest.approx(pcl_loss(pair(p, q), CFG).item(), abs=1e-12)

    def test_uniform_rows(self):
        n = 5
        u = np.full((n, 4), 0.25)
        assert abs(oracles.fcl(u, u, 7.0) - math.log(2 * n - 1)) < 1e-12
        assert abs(pcl_l2_loss(pair(u, u), CFG).item() - math.log(2 * n - 1)) < 1e-10

    def test_against_loops(self):
        rng = np.random.default_rng(14)
        p, q = random_probs(rng, 4, 5), random_probs(rng, 4, 5)
        assert abs(pcl_l2_loss(pair(p, q), CFG).item() - oracles.fcl(p, q, 7.0)) < 1e-9


class TestPCLMSE:
    def test_single_one_hot_pair(self):
        e = np.eye(3)[[1]]
        assert pcl_mse_loss(pair(e, e), CFG).item() == 0.0

    def test_identical_views(self):
        p = random_probs(np.random.default_rng(15), 4, 3)
        want = oracles.pcl_mse(p, p, 7.0)
        assert abs(pcl_mse_loss(pair(p, p), CFG).item() - want) < 1e-9

    def test_against_loops(self):
        rng = np.random.default_rng(16)
        p, q = random_probs(rng, 4, 5), random_probs(rng, 4, 5)
        assert abs(pcl_mse_loss(pair(p, q), CFG).item() - oracles.pcl_mse(p, q, 7.0)) < 1e-9


class TestBCE:
    def test_single_agreeing_one_hot(self):
        e = np.eye(3)[[2]]
        assert bce_loss(Tensor(e), Tensor(e), CFG).item() == 0.0

    def test_orthogonal_samples(self):
        e = np.eye(3)[[0, 1]]
        assert bce_loss(Tensor(e), Tensor(e), CFG).item() == 0.0

    def test_against_loops(self):
        rng = np.random.default_rng(17)
        p, q = random_probs(rng, 4, 5), random_probs(rng, 4, 5)
        assert abs(bce_loss(Tensor(p), Tensor(q), CFG).item() - oracles.bce(p, q, 0.95)) < 1e-9

    def test_threshold_turns_confident_pairs_positive(self):
        # two near-identical confident samples: with t below their similarity
        # the cross pair is a positive, so the loss is far smaller
        p = np.array([[0.98, 0.01, 0.01], [0.97, 0.02, 0.01]])
        low = bce_loss(Tensor(p), Tensor(p), LossConfig(bce_threshold=0.9)).item()
        high = bce_loss(Tensor(p), Tensor(p), LossConfig(bce_threshold=1.0)).item()
        assert low == pytest.approx(oracles.bce(p, p, 0.9), abs=1e-9)
        assert low < high


class TestSFCL:
    def test_threshold_one_equals_fcl(self):
        rng = np.random.default_rng(18)
        a, b = rng.standard_normal((4, 5)), rng.standard_normal((4, 5))
        cfg = LossConfig(kind="SFCL", sfcl_threshold=1.0)
        assert sfcl_loss(pair(a, b), cfg).item() == fcl_loss(pair(a, b), cfg).item()

    def test_duplicate_sample_removed(self):
        rng = np.random.default_rng(19)
        a, b = rng.standard_normal((4, 5)), rng.standard_normal((4, 5))
        a[3], b[3] = a[0], b[0]
        cfg = LossConfig(kind="SFCL")
        s = sfcl_loss(pair(a, b), cfg).item()
        assert s == pytest.approx(oracles.sfcl(a, b, 7.0, 0.95), abs=1e-9)
        assert s < fcl_loss(pair(a, b), cfg).item()

    def test_against_loops(self):
        rng = np.random.default_rng(20)
        for _ in range(10):
            base = rng.standard_normal((2, 3))
            # rows built near each other so some similarities cross 0.95
            a = base[rng.integers(0, 2, 4)] + 0.2 * rng.standard_normal((4, 3))
            b = a + 0.2 * rng.standard_normal((4, 3))
            got = sfcl_loss(pair(a, b), LossConfig(kind="SFCL")).item()
            assert abs(got - oracles.sfcl(a, b, 7.0, 0.95)) < 1e-9


class TestUniformity:
    def test_uniform_row(self):
        assert abs(uniformity_regularizer(Tensor(np.full((1, 4), 0.25))).item() - 1.3862943611198906) < 1e-12

    def test_empty(self):
        assert uniformity_regularizer(Tensor(np.zeros((0, 4)))).item() == 0.0

    def test_against_loops(self):
        p = random_probs(np.random.default_rng(21), 6, 5)
        assert abs(uniformity_regularizer(Tensor(p)).item() - oracles.uniformity(p)) < 1e-12


def _outputs(rng, n=4, c=5, d=6):
    feats = rng.standard_normal((n, d))
    w = rng.standard_normal((c, d))
    logits = feats @ w.T
    return ModelOutputs(Tensor(feats), Tensor(logits), Tensor(softmax_np(logits)))


class TestDispatch:
    def test_every_kind_routes_to_its_oracle(self):
        rng = np.random.default_rng(22)
        oa, ob = _outputs(rng), _outputs(rng)
        head = ProjectionHead(6, seed=0)
        fa, fb = oa.features.data, ob.features.data
        pa, pb = oa.probs.data, ob.probs.data
        want = {
            LossKind.FCL: oracles.fcl(fa, fb, 7.0),
            LossKind.LCL: oracles.fcl(oa.logits.data, ob.logits.data, 7.0),
            LossKind.NTCL: oracles.fcl(_head_by_hand(head, fa), _head_by_hand(head, fb), 7.0),
            LossKind.SFCL: oracles.sfcl(fa, fb, 7.0, 0.95),
            LossKind.PCL: oracles.pcl(pa, pb, 7.0),
            LossKind.PCL_L2: oracles.fcl(pa, pb, 7.0),
            LossKind.PCL_MSE: oracles.pcl_mse(pa, pb, 7.0),
            LossKind.BCE: oracles.bce(pa, pb, 0.95),
        }
        assert set(want) == set(LossKind)
        for kind, value in want.items():
            got = compute_loss(LossConfig(kind=kind), oa, ob, head=head).item()
            assert abs(got - value) < 1e-9, kind

    def test_identity_with_direct_calls(self):
        rng = np.random.default_rng(23)
        oa, ob = _outputs(rng), _outputs(rng)
        assert compute_loss(LossConfig(kind="PCL"), oa, ob).item() == pcl_loss(PairedEmbeddings(oa.probs, ob.probs), CFG).item()
        cfg = LossConfig(kind="FCL")
        assert compute_loss(cfg, oa, ob).item() == fcl_loss(PairedEmbeddings(oa.features, ob.features), cfg).item()

    def test_ntcl_without_head(self):
        rng = np.random.default_rng(24)
        with pytest.raises(ConfigError):
            compute_loss(LossConfig(kind="NTCL"), _outputs(rng), _outputs(rng))


class TestProperties:
    @settings(max_examples=200, deadline=None)
    @given(st.integers(2, 8), st.integers(0, 2**31))
    def test_inner_product_bound(self, c, seed):
        rng = np.random.default_rng(seed)
        p, q = rng.dirichlet(np.ones(c)), rng.dirichlet(np.ones(c))
        assert p @ q <= 1.0 - 1e-9

    @pytest.mark.parametrize("c", [2, 3, 5])
    def test_bound_attained_only_by_equal_one_hots(self, c):
        for k in range(c):
            e = np.eye(c)[k]
            assert e @ e == 1.0
            assert e @ np.eye(c)[(k + 1) % c] == 0.0

    @settings(max_examples=40, deadline=None)
    @given(st.sampled_from(list(LossKind)), st.integers(0, 2**31))
    def test_nonnegative_and_permutation_invariant(self, kind, seed):
        rng = np.random.default_rng(seed)
        oa, ob = _outputs(rng), _outputs(rng)
        head = ProjectionHead(6, seed=seed)
        cfg = LossConfig(kind=kind)
        value = compute_loss(cfg, oa, ob, head=head).item()
        assert value >= -1e-12
        perm = rng.permutation(4)

        def permuted(o):
            return ModelOutputs(*(Tensor(t.data[perm]) for t in (o.features, o.logits, o.probs)))

        assert abs(compute_loss(cfg, permuted(oa), permuted(ob), head=head).item() - value) < 1e-10

    @pytest.mark.parametrize("alpha", [0.1, 1.0, 10.0])
    def test_fcl_scale_invariance(self, alpha):
        rng = np.random.default_rng(25)
        a, b = rng.standard_normal((4, 6)), rng.standard_normal((4, 6))
        cfg = LossConfig(kind="FCL")
        assert abs(fcl_loss(pair(alpha * a, alpha * b), cfg).item() - fcl_loss(pair(a, b), cfg).item()) < 1e-10

    def test_pcl_logit_shift_invariance(self):
        rng = np.random.default_rng(26)
        za, zb = rng.standard_normal((4, 5)), rng.standard_normal((4, 5))
        shift_a, shift_b = rng.normal(0, 5, (4, 1)), rng.normal(0, 5, (4, 1))

        def value(x, y):
            return pcl_loss(PairedEmbeddings(nx.softmax_rows(Tensor(x)), nx.softmax_rows(Tensor(y))), CFG).item()

        assert abs(value(za + shift_a, zb + shift_b) - value(za, zb)) < 1e-10
