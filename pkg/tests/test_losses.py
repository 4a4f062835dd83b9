import math

import numpy as np
import pytest

from freqdistill.autograd import Tensor, backward
from freqdistill.graph import Split, build_graph
from freqdistill.losses import DistillMode, glnn_loss, hfd_loss, label_loss, lfd_loss, total_loss
from freqdistill.training import DistillConfig

from conftest import random_graph
from gradcheck import check_gradients
import oracles


def _instance(rng, n=4, c=3, p=0.6):
    g = random_graph(rng, n, p, num_classes=min(c, n))
    return g, rng.normal(size=(n, c)), rng.normal(size=(n, c))


def _dense_adj(g):
    return g.adjacency.toarray().astype(bool).tolist()


class TestLabelLoss:
    def test_confident(self):
        logits = Tensor(np.eye(3) * 20.0)
        assert label_loss(logits, [0, 1, 2], [0, 1, 2]).item() < 1e-4

    def test_uniform_is_log_c(self):
        assert label_loss(Tensor(np.zeros((4, 5))), [0, 1, 2, 3], [0, 2]).item() == pytest.approx(math.log(5))

    def test_unlabeled_rows_get_no_gradient(self, rng):
        z = Tensor(rng.normal(size=(5, 3)), requires_grad=True)
        backward(label_loss(z, [0, 1, 2, 0, 1], [1, 3]))
        np.testing.assert_array_equal(z.grad[[0, 2, 4]], 0.0)
        assert np.abs(z.grad[[1, 3]]).sum() > 0

    def test_empty_train(self):
        with pytest.raises(ValueError):
            label_loss(Tensor(np.zeros((2, 2))), [0, 1], [])


class TestGlnnLoss:
    def test_equal_is_zero(self, rng):
        z = rng.normal(size=(5, 3))
        assert glnn_loss(Tensor(z), z).item() == pytest.approx(0.0, abs=1e-14)

    def test_single_node_hand_value(self):
        # softmax([ln2, 0]) = [2/3, 1/3] against uniform
        expected = 2 / 3 * math.log(4 / 3) + 1 / 3 * math.log(2 / 3)
        assert glnn_loss(Tensor([[math.log(2), 0.0]]), [[0.0, 0.0]]).item() == pytest.approx(expected, rel=1e-13)
        assert expected == pytest.approx(0.056633, abs=1e-6)

    def test_shift_invariance(self, rng):
        z, h = rng.normal(size=(2, 4, 3))
        base = glnn_loss(Tensor(z), h).item()
        shift = rng.normal(size=(4, 1))
        assert glnn_loss(Tensor(z + shift), h - shift).item() == pytest.approx(base, rel=1e-12)

    def test_matches_oracle(self, rng):
        z, h = rng.normal(size=(2, 6, 3))
        assert glnn_loss(Tensor(z), h).item() == pytest.approx(oracles.glnn_bruteforce(z.tolist(), h.tolist()),
                                                               rel=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            glnn_loss(Tensor(np.zeros((2, 3))), np.zeros((2, 2)))


class TestLowFrequency:
    def test_edgeless_equal_is_zero(self, rng):
        z = rng.normal(size=(3, 2))
        g = build_graph([], np.zeros((3, 1)), [0, 0, 0])
        assert lfd_loss(Tensor(z), z, g).item() == pytest.approx(0.0, abs=1e-14)

    def test_two_node_pair_count(self, edge2, rng):
        z, h = rng.normal(size=(2, 2, 3))
        value = lfd_loss(Tensor(z), h, edge2, 1.0).item()
        terms = [oracles.kl(oracles.softmax(z[j]), oracles.softmax(h[i]))
                 for i, j in [(0, 0), (0, 1), (1, 1), (1, 0)]]
        # closed neighborhoods of one edge: 2 self pairs + 2 directed pairs = 2|E| + N
        assert len(terms) == 2 * edge2.num_edges + edge2.num_nodes
        assert value == pytest.approx(sum(terms) / len(terms), rel=1e-13)

    def test_high_temperature_vanishes(self, rng):
        g, z, h = _instance(rng, 6)
        assert lfd_loss(Tensor(z), h, g, tau1=1e6).item() < 1e-10

    @pytest.mark.parametrize("tau", [0.5, 1.0, 2.0])
    def test_bruteforce(self, rng, tau):
        g, z, h = _instance(rng)
        expected = oracles.lfd_bruteforce(z.tolist(), h.tolist(), _dense_adj(g), tau)
        assert lfd_loss(Tensor(z), h, g, tau).item() == pytest.approx(expected, rel=1e-10)

    def test_literal_denominator(self, rng):
        g, z, h = _instance(rng, 6)
        expected = oracles.lfd_bruteforce(z.tolist(), h.tolist(), _dense_adj(g), 1.0, denominator=g.num_edges)
        assert lfd_loss(Tensor(z), h, g, literal_denominator=True).item() == pytest.approx(expected, rel=1e-10)

    def test_gradient(self, rng):
        g, z, h = _instance(rng, 5)
        zt = Tensor(z, requires_grad=True)
        check_gradients(lambda: lfd_loss(zt, h, g, 0.7), [zt])


class TestHighFrequency:
    def test_equal_is_zero(self, rng):
        g, z, _ = _instance(rng, 6)
        assert hfd_loss(Tensor(z), z, g).item() == pytest.approx(0.0, abs=1e-14)

    def test_row_shift_not_invariant(self, rng):
        g = build_graph([(0, 1), (1, 2), (2, 3), (0, 3)], np.zeros((4, 1)), [0] * 4)
        h = rng.normal(size=(4, 3))
        z = h + rng.normal(size=(4, 1)) * 3
        assert hfd_loss(Tensor(z), h, g).item() > 1e-3
        assert glnn_loss(Tensor(z), h).item() == pytest.approx(0.0, abs=1e-12)

    def test_two_node_hand_value(self, edge2):
        z = np.array([[1.0, 0.0], [0.0, 0.0]])
        h = np.array([[2.0, 0.0], [0.0, 0.0]])
        expected = oracles.kl(oracles.softmax([1.0, 0.0]), oracles.softmax([2.0, 0.0]))
        assert hfd_loss(Tensor(z), h, edge2).item() == pytest.approx(expected, rel=1e-13)

    @pytest.mark.parametrize("tau", [0.5, 1.0, 2.0])
    def test_bruteforce(self, rng, tau):
        g, z, h = _instance(rng)
        expected = oracles.hfd_bruteforce(z.tolist(), h.tolist(), _dense_adj(g), tau)
        assert hfd_loss(Tensor(z), h, g, tau).item() == pytest.approx(expected, rel=1e-10)

    def test_literal_denominator(self, rng):
        g, z, h = _instance(rng, 6)
        expected = oracles.hfd_bruteforce(z.tolist(), h.tolist(), _dense_adj(g), 1.0, denominator=g.num_edges)
        assert hfd_loss(Tensor(z), h, g, literal_denominator=True).item() == pytest.approx(expected, rel=1e-10)

    def test_edgeless_is_zero(self, rng):
        g = build_graph([], np.zeros((3, 1)), [0] * 3)
        assert hfd_loss(Tensor(rng.normal(size=(3, 2))), rng.normal(size=(3, 2)), g).item() == 0.0

    def test_gradient(self, rng):
        g, z, h = _instance(rng, 5)
        zt = Tensor(z, requires_grad=True)
        check_gradients(lambda: hfd_loss(zt, h, g, 1.3), [zt])

    def test_bad_temperature(self, edge2):
        with pytest.raises(ValueError):
            hfd_loss(Tensor(np.zeros((2, 2))), np.zeros((2, 2)), edge2, 0.0)


class TestPermutationInvariance:
    def test_all_losses(self, rng):
        g, z, h = _instance(rng, 7, p=0.4)
        perm = rng.permutation(7)
        gp = g.permuted(perm)
        for fn in (lambda a, b, gr: glnn_loss(Tensor(a), b),
                   lambda a, b, gr: lfd_loss(Tensor(a), b, gr),
                   lambda a, b, gr: hfd_loss(Tensor(a), b, gr)):
            assert fn(z[perm], h[perm], gp).item() == pytest.approx(fn(z, h, g).item(), rel=1e-12)


class TestTotalLoss:
    def _setup(self, rng):
        g, z, h = _instance(rng, 6)
        return g, z, h

    @pytest.mark.parametrize("mode", list(DistillMode))
    def test_lambda_one_is_label_loss(self, rng, mode):
        g, z, h = self._setup(rng)
        total, parts = total_loss(Tensor(z), h, g, g.labels, DistillConfig(mode=mode, lam=1.0))
        assert total.item() == label_loss(Tensor(z), g.labels, g.split.train_ids).item()

    def test_lambda_zero_ff(self, rng):
        g, z, h = self._setup(rng)
        total, _ = total_loss(Tensor(z), h, g, g.labels, DistillConfig(lam=0.0))
        expected = lfd_loss(Tensor(z), h, g).item() + hfd_loss(Tensor(z), h, g).item()
        assert total.item() == pytest.approx(expected, abs=1e-14)

    @pytest.mark.parametrize("lam", [0.2, 0.5, 0.9])
    def test_breakdown_sums(self, rng, lam):
        g, z, h = self._setup(rng)
        total, parts = total_loss(Tensor(z), h, g, g.labels, DistillConfig(lam=lam, tau2=2.0))
        assert abs(parts["total"] - (lam * parts["ce"] + (1 - lam) * (parts["lfd"] + parts["hfd"]))) < 1e-12
        assert parts["total"] == total.item()

    def test_mode_components(self, rng):
        g, z, h = self._setup(rng)
        _, p = total_loss(Tensor(z), h, g, g.labels, DistillConfig(mode="glnn"))
        assert not math.isnan(p["kd"]) and math.isnan(p["lfd"]) and math.isnan(p["hfd"])
        _, p = total_loss(Tensor(z), h, g, g.labels, DistillConfig(mode="hfd"))
        assert math.isnan(p["lfd"]) and p["hfd"] >= 0
        _, p = total_loss(Tensor(z), h, g, g.labels, DistillConfig(mode="label-only"))
        assert p["total"] == p["ce"]

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            DistillConfig(mode="cpf")

    @pytest.mark.parametrize("kw", [dict(lam=1.5), dict(tau1=0.0), dict(tau2=-1.0), dict(epochs=0)])
    def test_config_validation(self, kw):
        with pytest.raises(ValueError):
            DistillConfig(**kw)

    def test_teacher_gets_no_gradient(self, rng):
        g, z, h = self._setup(rng)
        zt = Tensor(z, requires_grad=True)
        ht = Tensor(h)
        total, _ = total_loss(zt, ht, g, g.labels, DistillConfig())
        backward(total)
        assert ht.grad is None and zt.grad is not None

    def test_total_gradient(self, rng):
        g, z, h = self._setup(rng)
        zt = Tensor(z, requires_grad=True)
        check_gradients(lambda: total_loss(zt, h, g, g.labels, DistillConfig(lam=0.3))[0], [zt])

    def test_needs_split(self, rng):
        g = build_graph([(0, 1)], np.zeros((2, 1)), [0, 1])
        with pytest.raises(ValueError):
            total_loss(Tensor(np.zeros((2, 2))), np.zeros((2, 2)), g, g.labels, DistillConfig())
