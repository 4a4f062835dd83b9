import csv

import numpy as np
import pytest

from freqdistill import spectral
from freqdistill.graph import build_graph, graph_laplacian
from freqdistill.spectral import (FilterKind, apply_filter_spatial, apply_filter_spectral, eigendecompose,
                                  neighbor_sum_correspondence, filter_response, fourier, inverse_fourier,
                                  jacobi_eigh, laplacian_spectrum)

from conftest import random_graph


class TestJacobi:
    @pytest.mark.parametrize("n", [1, 2, 3, 7, 16, 33])
    def test_matches_lapack(self, rng, n):
        a = rng.normal(size=(n, n))
        a = a + a.T
        vals, vecs = jacobi_eigh(a)
        np.testing.assert_allclose(np.sort(vals), np.linalg.eigvalsh(a), atol=1e-10)
        np.testing.assert_allclose(vecs.T @ vecs, np.eye(n), atol=1e-10)
        np.testing.assert_allclose((vecs * vals) @ vecs.T, a, atol=1e-10)

    def test_zero_matrix_identity_basis(self):
        dec = eigendecompose(np.zeros((4, 4)))
        np.testing.assert_array_equal(dec.eigenvalues, 0.0)
        np.testing.assert_array_equal(dec.eigenvectors, np.eye(4))

    def test_repeated_eigenvalues(self):
        # complete graph K4: eigenvalues 0 and a triple 4/3... of the normalized Laplacian
        g = build_graph([(i, j) for i in range(4) for j in range(i + 1, 4)], np.zeros((4, 1)), [0] * 4)
        dec = laplacian_spectrum(g)
        np.testing.assert_allclose(dec.eigenvalues, [0.0, 1.0, 1.0, 1.0], atol=1e-12)
        assert np.abs(dec.reconstruct() - graph_laplacian(g)).max() < 1e-12


class TestEigendecompose:
    def test_edge_graph(self, edge2):
        np.testing.assert_allclose(laplacian_spectrum(edge2).eigenvalues, [0.0, 1.0], atol=1e-14)

    def test_random_reconstruction(self, rng):
        g = random_graph(rng, 20, 0.25)
        lap = graph_laplacian(g)
        dec = eigendecompose(lap)
        assert np.abs(dec.reconstruct() - lap).max() < 1e-8
        assert np.abs(dec.eigenvectors.T @ dec.eigenvectors - np.eye(20)).max() < 1e-8
        assert np.all(np.diff(dec.eigenvalues) >= 0)

    def test_asymmetric(self):
        with pytest.raises(ValueError, match="symmetric"):
            eigendecompose(np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_cap(self):
        with pytest.raises(ValueError, match="cap"):
            eigendecompose(np.eye(5), cap=4)

    def test_lapack_path_agrees(self, rng):
        lap = graph_laplacian(random_graph(rng, 30, 0.2))
        a = eigendecompose(lap, method="jacobi")
        b = eigendecompose(lap, method="lapack")
        np.testing.assert_allclose(a.eigenvalues, b.eigenvalues, atol=1e-10)


class TestFourier:
    def test_eigenvector_maps_to_basis(self, rng):
        dec = laplacian_spectrum(random_graph(rng, 10, 0.4))
        u = dec.eigenvectors
        np.testing.assert_allclose(fourier(u, u[:, 3]), np.eye(10)[3], atol=1e-12)

    def test_round_trip_and_parseval(self, rng):
        u = laplacian_spectrum(random_graph(rng, 12, 0.3)).eigenvectors
        x = rng.normal(size=12)
        xh = fourier(u, x)
        np.testing.assert_allclose(inverse_fourier(u, xh), x, atol=1e-8)
        assert np.linalg.norm(xh) == pytest.approx(np.linalg.norm(x), rel=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            fourier(np.eye(3), np.ones(4))
        with pytest.raises(ValueError):
            inverse_fourier(np.eye(3), np.ones(4))


class TestFilterResponse:
    def test_endpoints(self):
        assert filter_response(FilterKind.LOW, 2.0, 1) == 0.0
        assert filter_response(FilterKind.HIGH, 0.0, 1) == 0.0
        assert filter_response(FilterKind.LOW, 0.0, 2) == 4.0
        assert filter_response(FilterKind.IDENTITY, 1.3) == 1.0

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            filter_response(FilterKind.LOW, 2.1)
        with pytest.raises(ValueError):
            filter_response(FilterKind.HIGH, -0.01)
        filter_response(FilterKind.HIGH, -1e-10)  # inside slack

    def test_bad_order(self):
        with pytest.raises(ValueError):
            filter_response(FilterKind.LOW, 1.0, 0)

    def test_low_plus_high_order_one_is_two(self):
        lam = np.linspace(0, 2, 51)
        np.testing.assert_allclose(filter_response(FilterKind.LOW, lam) + filter_response(FilterKind.HIGH, lam),
                                   2.0, rtol=1e-15)


class TestApplyFilter:
    def test_identity_spectral(self, rng):
        g = random_graph(rng, 10, 0.3)
        x = rng.normal(size=(10, 2))
        np.testing.assert_allclose(apply_filter_spectral(laplacian_spectrum(g), FilterKind.IDENTITY, x), x,
                                   atol=1e-8)

    def test_low_edge_graph(self, edge2):
        out = apply_filter_spectral(laplacian_spectrum(edge2), FilterKind.LOW, np.array([1.0, 0.0]))
        np.testing.assert_allclose(out, [1.5, 0.5], atol=1e-12)
        np.testing.assert_allclose(apply_filter_spatial(edge2, FilterKind.LOW, np.eye(2)),
                                   [[1.5, 0.5], [0.5, 1.5]])

    def test_top_eigenvector_suppressed(self):
        # bipartite path has lambda_max = 2 exactly: the low-pass kernel kills it
        g = build_graph([(0, 1)], np.zeros((2, 1)), [0, 0])
        ring = build_graph([(i, (i + 1) % 6) for i in range(6)], np.zeros((6, 1)), [0] * 6)
        for graph in (g, ring):
            dec = laplacian_spectrum(graph)
            top = dec.eigenvectors[:, -1]
            out = apply_filter_spectral(dec, FilterKind.LOW, top, order=3)
            assert np.linalg.norm(out) <= (2 - dec.eigenvalues[-1]) ** 3 + 1e-12

    def test_isolated_graph(self, rng):
        g = build_graph([], np.zeros((4, 1)), [0] * 4)
        x = rng.normal(size=(4, 3))
        np.testing.assert_array_equal(apply_filter_spatial(g, FilterKind.LOW, x), 2 * x)
        np.testing.assert_array_equal(apply_filter_spatial(g, FilterKind.HIGH, x), 0 * x)

    def test_half_sum_is_identity(self, rng):
        g = random_graph(rng, 15, 0.3)
        x = rng.normal(size=(15, 4))
        low = apply_filter_spatial(g, FilterKind.LOW, x)
        high = apply_filter_spatial(g, FilterKind.HIGH, x)
        np.testing.assert_allclose(0.5 * (low + high), x, atol=1e-12)

    @pytest.mark.parametrize("order", [1, 2, 3])
    def test_spectral_equals_spatial(self, rng, order):
        g = random_graph(rng, 25, 0.2)
        dec = laplacian_spectrum(g)
        x = rng.normal(size=(25, 3))
        for kind in (FilterKind.LOW, FilterKind.HIGH):
            np.testing.assert_allclose(apply_filter_spectral(dec, kind, x, order),
                                       apply_filter_spatial(g, kind, x, order), atol=1e-9)

    def test_spatial_row_mismatch(self, edge2):
        with pytest.raises(ValueError):
            apply_filter_spatial(edge2, FilterKind.LOW, np.ones((3, 1)))


class TestNeighborCorrespondence:
    def test_edge_graph(self, edge2):
        low, high = neighbor_sum_correspondence(edge2, np.eye(2))
        np.testing.assert_array_equal(low[0], [1.0, 1.0])
        np.testing.assert_array_equal(high[0], [1.0, -1.0])

    def test_sum_is_twice_signal(self, rng):
        g = random_graph(rng, 12, 0.3)
        x = rng.normal(size=(12, 2))
        low, high = neighbor_sum_correspondence(g, x)
        np.testing.assert_allclose(low + high, 2 * x, atol=1e-14)

    def test_isolated_node_unchanged(self, rng):
        g = build_graph([(0, 1)], np.zeros((3, 1)), [0] * 3)
        x = rng.normal(size=(3, 2))
        low, high = neighbor_sum_correspondence(g, x)
        np.testing.assert_array_equal(low[2], x[2])
        np.testing.assert_array_equal(high[2], x[2])

    def test_brute_force(self, rng):
        g = random_graph(rng, 8, 0.4)
        x = rng.normal(size=(8, 2))
        low, _ = neighbor_sum_correspondence(g, x)
        for i in range(8):
            expected = x[i] + sum(x[j] / np.sqrt(len(g.neighbors(i)) * len(g.neighbors(j)))
                                  for j in g.neighbors(i))
            np.testing.assert_allclose(low[i], expected, atol=1e-14)


class TestSweepAndExport:
    def test_sweep_endpoints(self):
        t = spectral.sweep_table((1, 2, 3), 201)
        assert (t["low_order_1"][0], t["low_order_1"][-1]) == (2.0, 0.0)
        assert (t["high_order_1"][0], t["high_order_1"][-1]) == (0.0, 2.0)
        np.testing.assert_array_equal(t["identity"], 1.0)
        assert len(t["lambda"]) == 201

    def test_two_node_histogram(self, edge2):
        hist = spectral.eigenvalue_histogram(laplacian_spectrum(edge2).eigenvalues, bins=4)
        # eigenvalues {0, 1}: one count in [0, 0.5) and one in [1, 1.5)
        np.testing.assert_array_equal(hist["count"], [1, 0, 1, 0])

    def test_csv_round_trip(self, tmp_path):
        t = spectral.sweep_table((1,), 11)
        path = tmp_path / "s.csv"
        spectral.write_columns_csv(path, t)
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["lambda", "low_order_1", "high_order_1", "identity"]
        np.testing.assert_array_equal([float(r[1]) for r in rows[1:]], t["low_order_1"])
