"""Graph Fourier analysis with low-pass and high-pass kernels.

The low-pass kernel is ``I + A_hat = 2I - L`` with response ``(2 - lambda)^k``
and the high-pass kernel is ``I - A_hat = L`` with response ``lambda^k``.
Their average is the identity, so any signal splits into a low-frequency and
a high-frequency half.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .graph import DENSE_CAP, Graph, graph_laplacian, normalized_adjacency

EIGEN_SLACK = 1e-9


class FilterKind(enum.Enum):
    LOW = "low"
    HIGH = "high"
    IDENTITY = "identity"


@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray  # column l pairs with eigenvalues[l]

    @property
    def size(self) -> int:
        return len(self.eigenvalues)

    def reconstruct(self) -> np.ndarray:
        u = self.eigenvectors
        return (u * self.eigenvalues) @ u.T


def _round_robin(m: int):
    """Yield ``m - 1`` rounds of ``m / 2`` disjoint index pairs covering all pairs."""
    players = list(range(m))
    for _ in range(m - 1):
        half = m // 2
        yield np.array(players[:half]), np.array(players[half:][::-1])
        players = [players[0]] + [players[-1]] + players[1:-1]


def jacobi_eigh(a: np.ndarray, tol: float = 1e-10, max_sweeps: int = 60):
    """Cyclic Jacobi with parallel (round-robin) ordering.

    Each round annihilates ``n/2`` disjoint off-diagonal entries at once;
    rotations on disjoint index pairs commute, so a round is one similarity
    transform. Sweeps repeat until the off-diagonal Frobenius norm is below
    ``tol``.
    """
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    v = np.eye(n)
    if n < 2:
        return np.diag(a).copy(), v
    m = n + (n % 2)
    if m != n:
        a = np.pad(a, ((0, 1), (0, 1)))
        v = np.eye(m)
    rounds = list(_round_robin(m))

    def off_norm(mat):
        off = mat - np.diag(np.diag(mat))
        return np.sqrt(np.sum(off * off))

    for _ in range(max_sweeps):
        if off_norm(a) < tol:
            break
        for p, q in rounds:
            apq = a[p, q]
            active = np.abs(apq) > 1e-300
            if not active.any():
                continue
            p, q, apq = p[active], q[active], apq[active]
            theta = (a[q, q] - a[p, p]) / (2.0 * apq)
            sign = np.where(theta >= 0, 1.0, -1.0)
            big = np.abs(theta) > 1e150
            theta = np.where(big, 1.0, theta)
            t = np.where(big, 0.0, sign / (np.abs(theta) + np.sqrt(theta * theta + 1.0)))
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            ap, aq = a[:, p].copy(), a[:, q].copy()
            a[:, p] = c * ap - s * aq
            a[:, q] = s * ap + c * aq
            ap, aq = a[p, :].copy(), a[q, :].copy()
            a[p, :] = c[:, None] * ap - s[:, None] * aq
            a[q, :] = s[:, None] * ap + c[:, None] * aq
            a[p, q] = 0.0
            a[q, p] = 0.0
            vp, vq = v[:, p].copy(), v[:, q].copy()
            v[:, p] = c * vp - s * vq
            v[:, q] = s * vp + c * vq
    else:
        if off_norm(a) >= tol:
            raise RuntimeError(f"Jacobi did not converge in {max_sweeps} sweeps")
    return np.diag(a)[:n].copy(), v[:n, :n].copy()


def eigendecompose(lap: np.ndarray, cap: int = DENSE_CAP, method: str = "auto",
                   jacobi_limit: int = 256) -> SpectralDecomposition:
    """Eigenvalues (ascending) and orthonormal eigenvectors of a symmetric matrix.

    ``method="auto"`` runs Jacobi up to ``jacobi_limit`` nodes and LAPACK
    (``numpy.linalg.eigh``) above it.
    """
    lap = np.asarray(lap, dtype=np.float64)
    n = lap.shape[0]
    if lap.shape != (n, n):
        raise ValueError("matrix must be square")
    if n > cap:
        raise ValueError(f"matrix size {n} exceeds the eigendecomposition cap {cap}")
    if np.max(np.abs(lap - lap.T), initial=0.0) > 1e-10:
        raise ValueError("matrix is not symmetric")
    if method == "auto":
        method = "jacobi" if n <= jacobi_limit else "lapack"
    if method == "jacobi":
        vals, vecs = jacobi_eigh(lap)
    elif method == "lapack":
        vals, vecs = np.linalg.eigh(lap)
    else:
        raise ValueError(f"unknown method {method!r}")
    order = np.argsort(vals, kind="stable")
    return SpectralDecomposition(vals[order], vecs[:, order])


def laplacian_spectrum(g: Graph, **kwargs) -> SpectralDecomposition:
    return eigendecompose(graph_laplacian(g, cap=kwargs.get("cap", DENSE_CAP)), **kwargs)


def fourier(u: np.ndarray, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != u.shape[0]:
        raise ValueError(f"signal length {x.shape[0]} does not match {u.shape[0]} nodes")
    return u.T @ x


def inverse_fourier(u: np.ndarray, x_hat: np.ndarray) -> np.ndarray:
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x_hat.shape[0] != u.shape[1]:
        raise ValueError(f"spectrum length {x_hat.shape[0]} does not match {u.shape[1]} bases")
    return u @ x_hat


def filter_response(kind: FilterKind, lam, order: int = 1):
    """Amplitude of the order-``order`` kernel at eigenvalue(s) ``lam``."""
    kind = FilterKind(kind)
    if order < 1:
        raise ValueError("filter order must be >= 1")
    lam_arr = np.asarray(lam, dtype=np.float64)
    if np.any(lam_arr < -EIGEN_SLACK) or np.any(lam_arr > 2.0 + EIGEN_SLACK):
        raise ValueError("eigenvalues must lie in [0, 2]")
    if kind is FilterKind.LOW:
        out = (2.0 - lam_arr) ** order
    elif kind is FilterKind.HIGH:
        out = lam_arr ** order
    else:
        out = np.ones_like(lam_arr)
    return float(out) if out.ndim == 0 else out


def apply_filter_spectral(dec: SpectralDecomposition, kind: FilterKind, x, order: int = 1):
    """U diag(g(lambda)) U^T x."""
    u = dec.eigenvectors
    response = filter_response(kind, np.clip(dec.eigenvalues, -EIGEN_SLACK, 2.0 + EIGEN_SLACK), order)
    x_hat = fourier(u, x)
    scaled = x_hat * (response if x_hat.ndim == 1 else response[:, None])
    return inverse_fourier(u, scaled)


def apply_filter_spatial(g: Graph, kind: FilterKind, x, order: int = 1, adj=None):
    """(I +/- A_hat)^order x via repeated sparse products."""
    kind = FilterKind(kind)
    if order < 1:
        raise ValueError("filter order must be >= 1")
    out = np.array(x, dtype=np.float64)
    if out.shape[0] != g.num_nodes:
        raise ValueError(f"signal has {out.shape[0]} rows, graph has {g.num_nodes} nodes")
    if kind is FilterKind.IDENTITY:
        return out
    adj = normalized_adjacency(g) if adj is None else adj
    sign = 1.0 if kind is FilterKind.LOW else -1.0
    for _ in range(order):
        out = out + sign * (adj @ out)
    return out


def neighbor_sum_correspondence(g: Graph, x):
    """Neighbor-sum (low) and neighbor-difference (high) node signals.

    Weights are 1/sqrt(|N_i| |N_j|) with raw degrees (no self-loop) and a
    unit self term. Isolated nodes keep their own signal in both outputs.
    """
    x = np.asarray(x, dtype=np.float64)
    deg = g.degrees.astype(np.float64)
    src, dst = g.directed_pairs
    w = 1.0 / np.sqrt(deg[src] * deg[dst]) if len(src) else np.zeros(0)
    op = sp.csr_matrix((w, (src, dst)), shape=(g.num_nodes, g.num_nodes))
    nbr = op @ x
    return x + nbr, x - nbr


def sweep_table(orders=(1, 2, 3), points: int = 201):
    """Rows of (lambda, low_order_k..., high_order_k..., identity) on [0, 2]."""
    lam = np.linspace(0.0, 2.0, points)
    columns = {"lambda": lam}
    for k in orders:
        columns[f"low_order_{k}"] = filter_response(FilterKind.LOW, lam, k)
    for k in orders:
        columns[f"high_order_{k}"] = filter_response(FilterKind.HIGH, lam, k)
    columns["identity"] = filter_response(FilterKind.IDENTITY, lam)
    return columns


def write_columns_csv(path, columns: dict) -> None:
    names = list(columns)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        cols = [np.asarray(columns[n]) for n in names]
        fmt = [int if np.issubdtype(c.dtype, np.integer) else float for c in cols]
        for row in zip(*cols):
            writer.writerow([repr(f(v)) for f, v in zip(fmt, row)])


def eigenvalue_histogram(eigenvalues, bins: int = 20):
    edges = np.linspace(0.0, 2.0, bins + 1)
    # values a rounding error below an edge (1 - 2e-16 for an exact 1) go to the upper bin
    lam = np.clip(np.asarray(eigenvalues, dtype=np.float64), 0.0, 2.0) + EIGEN_SLACK
    idx = np.minimum((lam * bins / 2.0).astype(np.int64), bins - 1)
    counts = np.bincount(idx, minlength=bins)
    return {"bin_left": edges[:-1], "bin_right": edges[1:], "count": counts}
