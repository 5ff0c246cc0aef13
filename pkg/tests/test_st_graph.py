import numpy as np
import pytest

from helpers.autodiff import Tape
from helpers.errors import InconsistentSlices, ShapeMismatch
from helpers.st_graph import (
    GCNParams,
    build_spatial_graph,
    build_st_graph,
    feature_width,
    gcn_encode,
    gcn_forward,
    movable_adjacency,
    node_features,
    normalized_adjacency,
    workspace_around,
)


def history_graph(model, steps, all_pairs=False, seed=0):
    rng = np.random.default_rng(seed)
    workspace = workspace_around(model)
    slices = [
        build_spatial_graph(model, rng.uniform(model.lower_limits(), model.upper_limits()), workspace)
        for _ in range(steps)
    ]
    return build_st_graph(slices, all_pairs)


def test_spatial_edges_follow_the_chains(planar, spatial):
    assert movable_adjacency(planar) == ((0, 1), (1, 2), (3, 4), (4, 5))
    assert len(movable_adjacency(spatial)) == 12


def test_node_features_layout(planar):
    theta = np.zeros(6)
    features = node_features(planar, theta, workspace_around(planar))

    assert features.shape == (6, feature_width(planar))
    assert feature_width(planar) == 11
    np.testing.assert_allclose(np.diag(features[:, 3:9]), 0.0)
    np.testing.assert_allclose(features[:, 3:9], features[:, 3:9].T)
    np.testing.assert_array_equal(features[:3, 9:], [[1.0, 0.0]] * 3)
    np.testing.assert_array_equal(features[3:, 9:], [[0.0, 1.0]] * 3)
    assert np.all(np.abs(features[:, :3]) <= 1.0)


def test_st_graph_counts(planar, spatial):
    graph = history_graph(planar, 3)
    assert graph.num_nodes == 18
    assert len(graph.spatial_edges) == 12
    assert len(graph.temporal_edges) == 12
    assert graph.features.shape == (18, 11)

    assert len(history_graph(planar, 3, all_pairs=True).temporal_edges) == 18

    graph = history_graph(spatial, 3)
    assert graph.num_nodes == 42
    assert graph.features.shape[1] == 19
    assert graph.summary()["edges"] == 36 + 28


def test_temporal_edges_link_the_same_joint(planar):
    graph = history_graph(planar, 2)
    assert graph.temporal_edges == tuple((i, 6 + i) for i in range(6))


def test_single_slice_has_no_temporal_edges(planar):
    graph = history_graph(planar, 1)
    assert graph.temporal_edges == ()
    assert graph.num_nodes == 6


def test_inconsistent_slices(planar, spatial):
    workspace = workspace_around(planar)
    a = build_spatial_graph(planar, np.zeros(6), workspace)
    b = build_spatial_graph(spatial, np.zeros(14), workspace_around(spatial))
    with pytest.raises(InconsistentSlices):
        build_st_graph([a, b])
    with pytest.raises(InconsistentSlices):
        build_st_graph([])


def test_normalized_adjacency():
    a_hat = normalized_adjacency(3, ((0, 1), (1, 2)))
    degree = np.array([2.0, 3.0, 2.0])
    expected = (np.eye(3) + np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]])) / np.sqrt(np.outer(degree, degree))
    np.testing.assert_allclose(a_hat, expected)
    np.testing.assert_allclose(a_hat, a_hat.T)


def test_gcn_output_is_permutation_invariant(planar):
    graph = history_graph(planar, 2)
    params = GCNParams.init(np.random.default_rng(0), feature_width(planar), hidden=16, layers=3)
    H = gcn_forward(graph, params).value
    assert H.shape == (16,)

    perm = np.random.default_rng(1).permutation(graph.num_nodes)
    P = np.eye(graph.num_nodes)[perm]
    a_hat = normalized_adjacency(graph.num_nodes, graph.edges)
    tape = Tape()
    permuted = gcn_encode(graph.features[perm], P @ a_hat @ P.T, params.bind(tape)).value
    np.testing.assert_allclose(permuted, H, atol=1e-12)


def test_gcn_batched_matches_single(planar):
    graphs = [history_graph(planar, 2, seed=s) for s in range(3)]
    params = GCNParams.init(np.random.default_rng(0), feature_width(planar), hidden=8, layers=2)
    a_hat = normalized_adjacency(graphs[0].num_nodes, graphs[0].edges)
    batch = gcn_encode(np.stack([g.features for g in graphs]), a_hat, params.bind(Tape())).value
    assert batch.shape == (3, 8)
    for row, graph in zip(batch, graphs):
        np.testing.assert_allclose(row, gcn_forward(graph, params).value, atol=1e-12)


def test_gcn_shape_errors(planar, spatial):
    params = GCNParams.init(np.random.default_rng(0), feature_width(planar), hidden=8, layers=2)
    with pytest.raises(ShapeMismatch):
        gcn_forward(history_graph(spatial, 1), params)
    with pytest.raises(ShapeMismatch):
        gcn_encode(np.zeros((5, 11)), np.eye(6), params.bind(Tape()))
