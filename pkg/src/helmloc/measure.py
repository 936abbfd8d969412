"""Finite vector measures on mesh nodes and their norms."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .mesh import MeshGrid, hop_distance

DROP_RTOL = 1e-12


@dataclass(frozen=True)
class DiscreteMeasure:
    """Sum of Dirac masses ``sum_j c_j delta_{x_j}`` with ``c_j`` in ``C^N``.

    ``nodes`` holds distinct mesh node ids in ascending order and ``coeffs``
    the matching ``(len(nodes), N)`` complex coefficient rows.
    """

    nodes: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=np.int64).reshape(-1)
        coeffs = np.asarray(self.coeffs, dtype=complex)
        if coeffs.ndim != 2 or coeffs.shape[0] != nodes.size:
            raise ValueError(
                f"coefficient array of shape {coeffs.shape} does not match {nodes.size} nodes"
            )
        order = np.argsort(nodes, kind="stable")
        nodes, coeffs = nodes[order], coeffs[order]
        if nodes.size > 1 and np.any(np.diff(nodes) == 0):
            raise ValueError("measure nodes must be distinct")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def empty(cls, n_freq: int) -> "DiscreteMeasure":
        return cls(np.zeros(0, dtype=np.int64), np.zeros((0, n_freq), dtype=complex))

    @classmethod
    def from_pairs(cls, pairs, n_freq: int | None = None) -> "DiscreteMeasure":
        pairs = list(pairs)
        if not pairs:
            if n_freq is None:
                raise ValueError("n_freq is required for an empty measure")
            return cls.empty(n_freq)
        nodes = [int(p[0]) for p in pairs]
        coeffs = [np.atleast_1d(np.asarray(p[1], dtype=complex)) for p in pairs]
        return cls(np.array(nodes), np.vstack(coeffs))

    @property
    def n_freq(self) -> int:
        return self.coeffs.shape[1]

    def __len__(self) -> int:
        return self.nodes.size

    def magnitudes(self) -> np.ndarray:
        return np.linalg.norm(self.coeffs, axis=1)

    def scaled(self, t) -> "DiscreteMeasure":
        return DiscreteMeasure(self.nodes, t * self.coeffs)

    def normalized(self, rtol: float = DROP_RTOL) -> "DiscreteMeasure":
        """Drop coefficients below ``rtol`` times the largest magnitude."""
        if len(self) == 0:
            return self
        mag = self.magnitudes()
        keep = mag > rtol * mag.max()
        return DiscreteMeasure(self.nodes[keep], self.coeffs[keep])

    def coefficient(self, node: int) -> np.ndarray:
        idx = np.searchsorted(self.nodes, node)
        if idx < len(self) and self.nodes[idx] == node:
            return self.coeffs[idx]
        return np.zeros(self.n_freq, dtype=complex)

    def __add__(self, other: "DiscreteMeasure") -> "DiscreteMeasure":
        nodes = np.union1d(self.nodes, other.nodes)
        coeffs = np.zeros((nodes.size, self.n_freq), dtype=complex)
        coeffs[np.searchsorted(nodes, self.nodes)] += self.coeffs
        coeffs[np.searchsorted(nodes, other.nodes)] += other.coeffs
        return DiscreteMeasure(nodes, coeffs)

    def __sub__(self, other: "DiscreteMeasure") -> "DiscreteMeasure":
        return self + other.scaled(-1.0)


@dataclass(frozen=True)
class PointSourceList:
    positions: np.ndarray
    coeffs: np.ndarray

    def __len__(self) -> int:
        return self.positions.shape[0]


def group_norm(u: DiscreteMeasure) -> float:
    """Total variation ``sum_j |c_j|``."""
    return float(np.sum(u.magnitudes()))


def _weight_rows(u: DiscreteMeasure, weight) -> np.ndarray:
    # (len(u), N) weight values at the support of u
    return weight.at(u.nodes).T


def weighted_norm(u: DiscreteMeasure, weight) -> float:
    """``sum_j |w(x_j) * c_j|`` with the Hadamard product over frequencies."""
    if len(u) == 0:
        return 0.0
    return float(np.sum(np.linalg.norm(_weight_rows(u, weight) * u.coeffs, axis=1)))


def reweight(u: DiscreteMeasure, weight) -> DiscreteMeasure:
    """``v = w u``, the variable of the weighted problem."""
    if len(u) == 0:
        return u
    return DiscreteMeasure(u.nodes, _weight_rows(u, weight) * u.coeffs)


def unweight(v: DiscreteMeasure, weight) -> DiscreteMeasure:
    """``u = v / w``, inverse of :func:`reweight`."""
    if len(v) == 0:
        return v
    return DiscreteMeasure(v.nodes, v.coeffs / _weight_rows(v, weight))


def cluster_merge(u: DiscreteMeasure, mesh: MeshGrid, hop_threshold: int = 2) -> PointSourceList:
    """Merge spikes that are connected by chains of hops ``<= hop_threshold``.

    Each cluster becomes one source at the magnitude-weighted centroid whose
    coefficient is the sum of the cluster's coefficients.
    """
    n = len(u)
    if n == 0:
        return PointSourceList(np.zeros((0, 2)), np.zeros((0, u.n_freq), dtype=complex))
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if find(i) == find(j):
                continue
            if hop_distance(mesh, u.nodes[i], u.nodes[j], hop_threshold) is not None:
                parent[find(j)] = find(i)

    roots = [find(i) for i in range(n)]
    mags = u.magnitudes()
    pos = mesh.nodes[u.nodes]
    positions, coeffs = [], []
    for r in dict.fromkeys(roots):
        members = [i for i in range(n) if roots[i] == r]
        m = mags[members]
        if m.sum() > 0:
            centroid = (m[:, None] * pos[members]).sum(axis=0) / m.sum()
        else:
            centroid = pos[members].mean(axis=0)
        positions.append(centroid)
        coeffs.append(u.coeffs[members].sum(axis=0))
    return PointSourceList(np.array(positions), np.array(coeffs))


def measure_to_csv(u: DiscreteMeasure, mesh: MeshGrid) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = ["node_id", "x", "y"]
    for n in range(u.n_freq):
        header += [f"re_{n}", f"im_{n}"]
    writer.writerow(header)
    for node, c in zip(u.nodes, u.coeffs):
        x, y = mesh.nodes[node]
        row = [int(node), repr(float(x)), repr(float(y))]
        for z in c:
            row += [repr(float(z.real)), repr(float(z.imag))]
        writer.writerow(row)
    return buf.getvalue()


def measure_from_csv(text: str) -> DiscreteMeasure:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    n_freq = (len(header) - 3) // 2
    nodes, coeffs = [], []
    for row in reader:
        if not row:
            continue
        nodes.append(int(row[0]))
        vals = [float(v) for v in row[3:]]
        coeffs.append([complex(vals[2 * i], vals[2 * i + 1]) for i in range(n_freq)])
    if not nodes:
        return DiscreteMeasure.empty(n_freq)
    return DiscreteMeasure(np.array(nodes), np.array(coeffs))


def sources_to_csv(sources: PointSourceList) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    n_freq = sources.coeffs.shape[1] if sources.coeffs.ndim == 2 else 0
    header = ["x", "y", "magnitude"]
    for n in range(n_freq):
        header += [f"re_{n}", f"im_{n}"]
    writer.writerow(header)
    for p, c in zip(sources.positions, sources.coeffs):
        row = [repr(float(p[0])), repr(float(p[1])), repr(float(np.linalg.norm(c)))]
        for z in c:
            row += [repr(float(z.real)), repr(float(z.imag))]
        writer.writerow(row)
    return buf.getvalue()
