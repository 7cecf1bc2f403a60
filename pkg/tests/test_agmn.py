"""Tests for the matching network: shapes, loss, gradients and voting."""

from dataclasses import replace

import numpy as np
import pytest
from conftest import labeled_tree, random_tree

from coronary_agmn.core.config import FeatureSpec, ModelConfig, TrainConfig
from coronary_agmn.core.errors import DimensionMismatchError
from coronary_agmn.features.extractor import NormalizationStats
from coronary_agmn.graph.artery_graph import IndividualGraph
from coronary_agmn.matching.agmn import AgmnModel, permutation_loss, vote
from coronary_agmn.matching.association import build_association, ground_truth, stack_associations
from coronary_agmn.matching.runtime import train
from coronary_agmn.nn.tensor_nn import Adam


def _small_pair() -> tuple[IndividualGraph, IndividualGraph]:
    big = labeled_tree(feature_dim=2, seed=1)
    small = labeled_tree(feature_dim=2, seed=2)
    small.nodes = small.nodes[:3]
    small.edges = [(0, 1), (0, 2)]
    return small, big


def test_vote_takes_row_argmax_with_low_column_ties():
    prob = np.array([[0.2, 0.7, 0.7], [0.9, 0.1, 0.3]])
    np.testing.assert_array_equal(vote(prob), [[0, 1, 0], [1, 0, 0]])


def test_permutation_loss():
    """Test the summed binary cross entropy and its positive weighting."""
    assert permutation_loss(np.array([[0.5]]), np.array([[1]])) == pytest.approx(np.log(2))
    assert permutation_loss(np.array([[0.5, 0.5]]), np.array([[1, 0]]), pos_weight=3.0) == pytest.approx(4 * np.log(2))
    assert np.isfinite(permutation_loss(np.array([[0.0, 1.0]]), np.array([[1, 0]])))
    with pytest.raises(DimensionMismatchError):
        permutation_loss(np.zeros((2, 2)), np.zeros((2, 3)))


@pytest.mark.parametrize("share_steps", [True, False])
def test_forward_shapes(share_steps):
    g1, g2 = _small_pair()
    cfg = ModelConfig(hidden=6, depth=2, n_mp=3, share_steps=share_steps)
    model = AgmnModel.build(2, cfg, np.random.default_rng(0))
    assert len(model.phi_e) == (1 if share_steps else 3)
    prob = model.predict(build_association(g1, g2))
    assert prob.shape == (3, 5)
    assert np.all((prob > 0) & (prob < 1))
    assert model.feature_dim == 2 and model.hidden == 6


def test_no_message_passing():
    g1, g2 = _small_pair()
    model = AgmnModel.build(2, ModelConfig(hidden=4, depth=1, n_mp=0), np.random.default_rng(0))
    assert model.phi_e == [] and model.phi_v == []
    assert model.predict(build_association(g1, g2)).shape == (3, 5)


def test_wrong_feature_width():
    g1, g2 = _small_pair()
    model = AgmnModel.build(3, ModelConfig(hidden=4, depth=1, n_mp=1), np.random.default_rng(0))
    with pytest.raises(DimensionMismatchError):
        model.predict(build_association(g1, g2))


def _random_fixture(seed: int, share_steps: bool):
    """Two random pairs with n1 <= n2 <= 4, one-to-one truths and a model with random biases."""
    rng = np.random.default_rng(seed)
    associations, truths = [], []
    for _ in range(2):
        n2 = int(rng.integers(1, 5))
        n1 = int(rng.integers(1, n2 + 1))
        g1, g2 = random_tree(rng, n1), random_tree(rng, n2)
        truth = np.zeros((n1, n2), dtype=np.int64)
        truth[np.arange(n1), rng.permutation(n2)[:n1]] = 1
        associations.append(build_association(g1, g2))
        truths.append(truth)
    cfg = ModelConfig(hidden=3, depth=2, n_mp=2, share_steps=share_steps, pos_weight=2.0)
    model = AgmnModel.build(2, cfg, rng)
    for name, param in model.parameters().items():
        if ".b" in name:
            param[...] = rng.normal(scale=0.5, size=param.shape)
    return model, stack_associations(associations), truths


@pytest.mark.parametrize("share_steps", [True, False])
@pytest.mark.parametrize("seed", range(20))
def test_gradients_match_finite_differences(seed, share_steps):
    """Test every parameter gradient of the batch loss against central differences."""
    model, batch, truths = _random_fixture(seed, share_steps)
    _, grads = model.loss_and_grads(batch, truths)
    eps = 1e-5
    for name, param in model.parameters().items():
        for index in np.ndindex(param.shape):
            saved = param[index]
            param[index] = saved + eps
            up, _ = model.loss_and_grads(batch, truths)
            param[index] = saved - eps
            down, _ = model.loss_and_grads(batch, truths)
            param[index] = saved
            analytic, numeric = grads[name][index], (up - down) / (2 * eps)
            assert abs(analytic - numeric) <= 1e-4 * max(abs(analytic), abs(numeric)) + 1e-7, (name, index)


def test_saturated_outputs_get_no_gradient():
    """Test that probabilities held by the clamp contribute nothing to the gradient."""
    g1, g2 = _small_pair()
    model = AgmnModel.build(2, ModelConfig(hidden=4, depth=2, n_mp=1), np.random.default_rng(0))
    model.phi_d.weights[-1][...] = 0.0
    model.phi_d.biases[-1][...] = 17.0
    batch = stack_associations([build_association(g1, g2)])
    loss, grads = model.loss_and_grads(batch, [np.zeros((3, 5))])
    assert np.isfinite(loss)
    for name, grad in grads.items():
        assert not grad.any(), name


def test_predictions_follow_node_order_of_second_graph():
    """Test that relabeling the second graph's nodes permutes the columns of the prediction."""
    rng = np.random.default_rng(5)
    model = AgmnModel.build(2, ModelConfig(hidden=5, depth=2, n_mp=3), rng)
    for _ in range(10):
        g1, g2 = random_tree(rng, 3), random_tree(rng, 5)
        perm = rng.permutation(5)  # new node k is old node perm[k]
        new_id = {int(old): k for k, old in enumerate(perm)}
        shuffled = g2.copy()
        shuffled.nodes = [replace(g2.nodes[int(old)], id=k) for k, old in enumerate(perm)]
        shuffled.edges = [(new_id[i], new_id[j]) for i, j in g2.edges]
        base = model.predict(build_association(g1, g2))
        moved = model.predict(build_association(g1, shuffled))
        np.testing.assert_allclose(moved, base[:, perm], rtol=0, atol=1e-10)


def test_loss_is_batch_mean():
    """Test that the batch loss is the mean of the per-pair losses."""
    g1, g2 = _small_pair()
    g3 = labeled_tree(feature_dim=2, seed=3)
    model = AgmnModel.build(2, ModelConfig(hidden=4, depth=2, n_mp=1), np.random.default_rng(0))
    first, second = build_association(g1, g2), build_association(g1, g3)
    y2, y3 = ground_truth(g1, g2), ground_truth(g1, g3)
    single_2, _ = model.loss_and_grads(stack_associations([first]), [y2])
    single_3, _ = model.loss_and_grads(stack_associations([second]), [y3])
    both, _ = model.loss_and_grads(stack_associations([first, second]), [y2, y3])
    assert both == pytest.approx((single_2 + single_3) / 2)


def test_apply_gradients_invalidates_caches():
    g1, g2 = _small_pair()
    model = AgmnModel.build(2, ModelConfig(hidden=4, depth=2, n_mp=1), np.random.default_rng(0))
    batch = stack_associations([build_association(g1, g2)])
    truth = [ground_truth(g1, g2)]
    before = model.predict(build_association(g1, g2))
    _, grads = model.loss_and_grads(batch, truth)
    model.apply_gradients(Adam(), grads, 1e-2)
    assert all(mlp.version == 1 for mlp in model.modules().values())
    assert not np.allclose(before, model.predict(build_association(g1, g2)))


@pytest.mark.slow
def test_overfits_three_same_view_pairs():
    """Test that training drives vote accuracy to 100% on three same-view pairs."""
    rng = np.random.default_rng(11)
    base = rng.normal(size=(5, 4))
    graphs = []
    for seed in range(3):
        graph = labeled_tree(feature_dim=4, seed=seed)
        for node in graph.nodes:
            node.features = base[node.id] + rng.normal(scale=0.1, size=4)
        graphs.append(graph)
    stats = NormalizationStats.fit(graphs)
    cfg = TrainConfig(steps=2000, batch_size=3, base_lr=1e-3, log_every=500, seed=3)
    matcher, _ = train(graphs, cfg, ModelConfig(hidden=16, depth=2, n_mp=2), stats, FeatureSpec())
    for first, second in [(0, 1), (0, 2), (1, 2)]:
        g1, g2 = graphs[first], graphs[second]
        picks = vote(matcher.model.predict(build_association(g1, g2)))
        np.testing.assert_array_equal(picks, ground_truth(g1, g2))
