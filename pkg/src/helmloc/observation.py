"""Observation operator (mixing matrix), admissible weights and their application."""
from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .fem import FrequencySystem
from .measure import DiscreteMeasure
from .mesh import MeshGrid
from .specfun import phi_free

logger = logging.getLogger(__name__)

WEIGHT_KINDS = ("one", "free", "omega1", "omega2")
WEIGHT_FLOOR = 1e-14
CACHE_MAGIC = b"HLMXMIX1"


class ObservationError(ValueError):
    pass


@dataclass(frozen=True)
class MixingMatrix:
    """Green's function values ``matrix[n, m, j] = G_n^{x_m}(x_j)``.

    Observations are complex arrays of shape ``(N, M)``; adjoint fields are
    complex arrays of shape ``(N, N_c)`` over the control nodes.
    """

    matrix: np.ndarray
    microphones: np.ndarray
    controls: np.ndarray
    wavenumbers: np.ndarray
    level: int = -1
    weighted: bool = False
    weight_kind: str = "one"

    @property
    def n_freq(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_mics(self) -> int:
        return self.matrix.shape[1]

    @property
    def n_controls(self) -> int:
        return self.matrix.shape[2]

    def columns(self, nodes) -> np.ndarray:
        """Column indices of control node ids; rejects nodes outside the control set."""
        nodes = np.asarray(nodes, dtype=np.int64)
        idx = np.searchsorted(self.controls, nodes)
        idx_c = np.minimum(idx, self.n_controls - 1)
        bad = (idx >= self.n_controls) | (self.controls[idx_c] != nodes)
        if np.any(bad):
            raise ObservationError(
                f"nodes {nodes[bad][:5].tolist()} are not in the control set"
            )
        return idx

    def restrict(self, nodes) -> np.ndarray:
        """Sub-matrix ``(N, M, len(nodes))`` for the given control nodes."""
        return self.matrix[:, :, self.columns(nodes)]


def build_mixing(
    systems: Sequence[FrequencySystem],
    microphones: Sequence[int],
    controls: Sequence[int],
) -> MixingMatrix:
    """Assemble the mixing matrix from one adjoint solve per microphone and frequency."""
    if len(systems) == 0:
        raise ObservationError("at least one frequency is required")
    mics = np.asarray(microphones, dtype=np.int64)
    ctrl = np.asarray(controls, dtype=np.int64)
    if mics.size == 0:
        raise ObservationError("at least one microphone is required")
    if np.unique(mics).size != mics.size:
        raise ObservationError("microphone nodes must be distinct")
    if ctrl.size == 0:
        raise ObservationError("control set is empty")
    if np.any(np.diff(ctrl) <= 0):
        raise ObservationError("control node ids must be strictly increasing")
    shared = np.intersect1d(mics, ctrl)
    if shared.size:
        logger.warning(
            "%d microphone node(s) lie in the control set; use a weight that is "
            "large at the microphones",
            shared.size,
        )
    mesh = systems[0].mesh
    n_h = mesh.n_nodes
    rhs = np.zeros((n_h, mics.size), dtype=complex)
    rhs[mics, np.arange(mics.size)] = 1.0
    mat = np.empty((len(systems), mics.size, ctrl.size), dtype=complex)
    for n, system in enumerate(systems):
        if system.mesh is not mesh and system.mesh.n_nodes != n_h:
            raise ObservationError("all frequency systems must share one mesh")
        fields = system.solve_rhs(rhs, adjoint=True)
        mat[n] = np.conj(fields[ctrl, :]).T
    return MixingMatrix(
        matrix=mat,
        microphones=mics,
        controls=ctrl,
        wavenumbers=np.array([s.k for s in systems]),
        level=mesh.level,
    )


@dataclass(frozen=True)
class WeightTable:
    kind: str
    controls: np.ndarray
    values: np.ndarray  # (N, N_c), positive

    def at(self, nodes) -> np.ndarray:
        """Weight values ``(N, len(nodes))`` at control node ids."""
        nodes = np.asarray(nodes, dtype=np.int64)
        idx = np.searchsorted(self.controls, nodes)
        idx_c = np.minimum(idx, self.controls.size - 1)
        if np.any((idx >= self.controls.size) | (self.controls[idx_c] != nodes)):
            raise ObservationError("weight requested outside its control set")
        return self.values[:, idx]


def compute_weight(kind: str, mixing: MixingMatrix, mesh: MeshGrid | None = None, ks=None) -> WeightTable:
    """Admissible weight of the given kind at the control nodes.

    ``free`` sums ``|Phi|`` of the free-space kernel over the microphones; a
    control node on top of a microphone uses the distance ``cell_side / 2``.
    ``omega1`` and ``omega2`` are the l1 and l2 norms of the discrete Green's
    function columns.
    """
    if kind not in WEIGHT_KINDS:
        raise ObservationError(f"unknown weight kind {kind!r}; expected one of {WEIGHT_KINDS}")
    ks = mixing.wavenumbers if ks is None else np.asarray(ks, dtype=float)
    shape = (mixing.n_freq, mixing.n_controls)
    if kind == "one":
        values = np.ones(shape)
    elif kind == "free":
        if mesh is None:
            raise ObservationError("the free-space weight needs the mesh coordinates")
        xc = mesh.nodes[mixing.controls]
        xm = mesh.nodes[mixing.microphones]
        r = np.hypot(xc[:, None, 0] - xm[None, :, 0], xc[:, None, 1] - xm[None, :, 1])
        r = np.where(r < 1e-12 * mesh.cell_side, 0.5 * mesh.cell_side, r)
        values = np.empty(shape)
        # lattice distances repeat heavily; evaluate the kernel once per distance
        _, first, inverse = np.unique(
            np.round(r / mesh.cell_side, 9), return_index=True, return_inverse=True
        )
        radii = r.ravel()[first]
        inverse = inverse.reshape(r.shape)
        for n, k in enumerate(ks):
            kernel = np.array([abs(phi_free(2, k, rr)) for rr in radii])
            values[n] = kernel[inverse].sum(axis=1)
    else:
        if mixing.weighted:
            raise ObservationError("Green's function weights need the unweighted mixing matrix")
        if kind == "omega1":
            values = np.abs(mixing.matrix).sum(axis=1)
        else:
            values = np.linalg.norm(mixing.matrix, axis=1)
    if not np.all(np.isfinite(values)) or values.min() < WEIGHT_FLOOR:
        raise ObservationError(
            f"weight {kind!r} is not admissible: minimum value {values.min():.3e}"
        )
    return WeightTable(kind=kind, controls=mixing.controls.copy(), values=values)


def apply_weight(mixing: MixingMatrix, weight: WeightTable) -> MixingMatrix:
    """Divide column ``j`` of frequency ``n`` by ``w^n(x_j)``."""
    if mixing.weighted:
        raise ObservationError("mixing matrix is already weighted")
    if not np.array_equal(weight.controls, mixing.controls):
        raise ObservationError("weight and mixing matrix use different control sets")
    return replace(
        mixing,
        matrix=mixing.matrix / weight.values[:, None, :],
        weighted=True,
        weight_kind=weight.kind,
    )


def forward(mixing: MixingMatrix, u: DiscreteMeasure) -> np.ndarray:
    """Observations ``(Su)[n, m] = sum_j K[n, m, j] u[n, j]``."""
    if len(u) == 0:
        return np.zeros((mixing.n_freq, mixing.n_mics), dtype=complex)
    if u.n_freq != mixing.n_freq:
        raise ObservationError(f"measure has {u.n_freq} frequencies, mixing has {mixing.n_freq}")
    cols = mixing.columns(u.nodes)
    return np.einsum("nmj,jn->nm", mixing.matrix[:, :, cols], u.coeffs)


def adjoint_field(mixing: MixingMatrix, q: np.ndarray) -> np.ndarray:
    """``xi[n, j] = sum_m conj(K[n, m, j]) q[n, m]`` over all control nodes."""
    q = np.asarray(q, dtype=complex)
    if q.shape != (mixing.n_freq, mixing.n_mics):
        raise ObservationError(
            f"observation has shape {q.shape}, expected {(mixing.n_freq, mixing.n_mics)}"
        )
    out = np.empty((mixing.n_freq, mixing.n_controls), dtype=complex)
    for n in range(mixing.n_freq):
        # conj(conj(q) K) avoids materializing conj(K)
        out[n] = np.conj(np.conj(q[n]) @ mixing.matrix[n])
    return out


def inner(a: np.ndarray, b: np.ndarray) -> float:
    """Real inner product ``Re sum a conj(b)``."""
    return float(np.real(np.vdot(b, a)))


def save_mixing(mixing: MixingMatrix, path) -> None:
    """Binary dump: magic, (N, M, N_c, level) as little-endian int64, then
    row-major little-endian complex128 data.  Metadata goes to a JSON sidecar."""
    path = Path(path)
    header = CACHE_MAGIC + struct.pack("<4q", mixing.n_freq, mixing.n_mics, mixing.n_controls, mixing.level)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(mixing.matrix, dtype="<c16").tobytes())
    meta = {
        "wavenumbers": [float(k) for k in mixing.wavenumbers],
        "microphones": [int(m) for m in mixing.microphones],
        "controls_first": int(mixing.controls[0]),
        "controls_last": int(mixing.controls[-1]),
        "controls_count": int(mixing.controls.size),
        "weighted": mixing.weighted,
        "weight_kind": mixing.weight_kind,
    }
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, indent=2))
    np.save(path.with_suffix(path.suffix + ".controls.npy"), mixing.controls)


def load_mixing(path) -> MixingMatrix:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(len(CACHE_MAGIC))
        if magic != CACHE_MAGIC:
            raise ObservationError(f"{path} is not a mixing-matrix cache")
        head = fh.read(32)
        if len(head) != 32:
            raise ObservationError(f"{path} has a truncated header")
        n, m, nc, level = struct.unpack("<4q", head)
        raw = fh.read()
    if len(raw) != 16 * n * m * nc:
        raise ObservationError(f"{path} holds {len(raw)} data bytes, expected {16 * n * m * nc}")
    data = np.frombuffer(raw, dtype="<c16")
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    controls = np.load(path.with_suffix(path.suffix + ".controls.npy"))
    return MixingMatrix(
        matrix=data.reshape(n, m, nc).astype(complex),
        microphones=np.array(meta["microphones"], dtype=np.int64),
        controls=controls.astype(np.int64),
        wavenumbers=np.array(meta["wavenumbers"]),
        level=int(level),
        weighted=bool(meta["weighted"]),
        weight_kind=meta["weight_kind"],
    )
