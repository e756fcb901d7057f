"""Simplicial immersions: polylines (n=1) and triangle meshes (n=2).

Vertices live in R^{n+d} for any codimension d >= 1.  All functions here are
pure; an immersion is treated as a value and never mutated in place, so
instances are safe to share read-only across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateElement, InvalidImmersion, UnsupportedDimension

#: elements smaller than this fraction of the mean element measure count as
#: collapsed (genuine singularity, not floating-point noise)
DEGENERATE_TOL = 1e-8


@dataclass
class DiscreteImmersion:
    """Vertex positions plus connectivity.

    ``elements`` holds segment pairs for n=1 and oriented triangles for n=2.
    ``closed`` asserts cycle/watertight connectivity and is validated.
    """

    vertices: np.ndarray
    elements: np.ndarray
    intrinsic_dim: int
    closed: bool = True

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float)
        self.elements = np.ascontiguousarray(self.elements, dtype=np.int64)
        validate_immersion(self)

    @property
    def ambient_dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def codim(self) -> int:
        return self.ambient_dim - self.intrinsic_dim

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    def with_vertices(self, vertices: np.ndarray) -> "DiscreteImmersion":
        return replace(self, vertices=vertices)

    def transformed(self, rotation=None, translation=None, scale=1.0):
        x = self.vertices * scale
        if rotation is not None:
            x = x @ np.asarray(rotation, dtype=float).T
        if translation is not None:
            x = x + np.asarray(translation, dtype=float)
        return self.with_vertices(x)


def validate_immersion(imm: DiscreteImmersion) -> None:
    n = imm.intrinsic_dim
    if n not in (1, 2):
        raise UnsupportedDimension(f"intrinsic dimension {n} not supported")
    if imm.vertices.ndim != 2 or imm.vertices.shape[1] < n + 1:
        raise InvalidImmersion("ambient dimension must be at least n+1")
    if not np.isfinite(imm.vertices).all():
        raise InvalidImmersion("non-finite vertex coordinates")
    if imm.elements.ndim != 2 or imm.elements.shape[1] != n + 1:
        raise InvalidImmersion(f"elements must have {n + 1} vertices each")
    nv = imm.num_vertices
    if imm.elements.size == 0:
        raise InvalidImmersion("immersion has no elements")
    if imm.elements.min() < 0 or imm.elements.max() >= nv:
        raise InvalidImmersion("element index out of range")

    referenced = np.zeros(nv, dtype=bool)
    referenced[imm.elements.ravel()] = True
    if not referenced.all():
        raise InvalidImmersion("every vertex must appear in at least one element")

    measures = element_measures(imm)
    small = measures <= DEGENERATE_TOL * measures.mean()
    if small.any():
        raise DegenerateElement(
            f"{int(small.sum())} element(s) below the degeneracy tolerance"
        )

    if n == 1:
        degrees = np.bincount(imm.elements.ravel(), minlength=nv)
        if imm.closed:
            if not (degrees == 2).all():
                raise InvalidImmersion("closed curve must be a union of cycles")
        else:
            if degrees.max() > 2:
                raise InvalidImmersion("polyline vertex with more than two segments")
    else:
        _check_surface_edges(imm)


def _check_surface_edges(imm: DiscreteImmersion) -> None:
    tri = imm.elements
    directed = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
    keys = directed[:, 0] * imm.num_vertices + directed[:, 1]
    if len(np.unique(keys)) != len(keys):
        raise InvalidImmersion("inconsistent orientation: repeated directed edge")
    und = np.sort(directed, axis=1)
    und_keys = und[:, 0] * imm.num_vertices + und[:, 1]
    _, counts = np.unique(und_keys, return_counts=True)
    if imm.closed:
        if not (counts == 2).all():
            raise InvalidImmersion("closed surface edge not shared by exactly 2 triangles")
    else:
        if counts.max() > 2:
            raise InvalidImmersion("non-manifold edge")


def element_measures(imm: DiscreteImmersion) -> np.ndarray:
    """Length of each segment or area of each triangle (any ambient dim)."""
    x = imm.vertices
    el = imm.elements
    if imm.intrinsic_dim == 1:
        return np.linalg.norm(x[el[:, 1]] - x[el[:, 0]], axis=1)
    e1 = x[el[:, 1]] - x[el[:, 0]]
    e2 = x[el[:, 2]] - x[el[:, 0]]
    g11 = np.einsum("ij,ij->i", e1, e1)
    g22 = np.einsum("ij,ij->i", e2, e2)
    g12 = np.einsum("ij,ij->i", e1, e2)
    gram = np.clip(g11 * g22 - g12 ** 2, 0.0, None)
    return 0.5 * np.sqrt(gram)


def measure_weights(imm: DiscreteImmersion) -> np.ndarray:
    """Barycentric lumped vertex measure; sums to total length/area."""
    measures = element_measures(imm)
    small = measures <= DEGENERATE_TOL * measures.mean()
    if small.any():
        raise DegenerateElement("degenerate element in measure computation")
    share = measures / (imm.intrinsic_dim + 1)
    weights = np.zeros(imm.num_vertices)
    np.add.at(weights, imm.elements.ravel(), np.repeat(share, imm.intrinsic_dim + 1))
    return weights


def angle_defects(imm: DiscreteImmersion) -> np.ndarray:
    """2*pi minus the incident triangle angles at each vertex (n=2 only)."""
    if imm.intrinsic_dim != 2:
        raise UnsupportedDimension("angle defect defined for n=2")
    x = imm.vertices
    tri = imm.elements
    defect = np.full(imm.num_vertices, 2.0 * np.pi)
    for corner in range(3):
        i = tri[:, corner]
        j = tri[:, (corner + 1) % 3]
        k = tri[:, (corner + 2) % 3]
        u = x[j] - x[i]
        v = x[k] - x[i]
        cosang = np.einsum("ij,ij->i", u, v) / (
            np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1)
        )
        np.subtract.at(defect, i, np.arccos(np.clip(cosang, -1.0, 1.0)))
    return defect


class MeshTopology:
    """Connectivity caches shared by the curvature and flow pipelines.

    Built once per connectivity; positions are not stored, so one topology
    serves every step of a flow with fixed elements.
    """

    def __init__(self, imm: DiscreteImmersion):
        self.intrinsic_dim = imm.intrinsic_dim
        self.num_vertices = imm.num_vertices
        self.elements = imm.elements
        self._neighbors = _adjacency_lists(imm.elements, imm.num_vertices)
        self._ring_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        if imm.intrinsic_dim == 2:
            und = np.sort(
                np.concatenate(
                    [imm.elements[:, [0, 1]], imm.elements[:, [1, 2]], imm.elements[:, [2, 0]]]
                ),
                axis=1,
            )
            self.edges = np.unique(und, axis=0)
        else:
            self.edges = np.unique(np.sort(imm.elements, axis=1), axis=0)

    def neighbors(self, v: int) -> np.ndarray:
        return self._neighbors[v]

    def ring_neighborhoods(self, ring: int) -> tuple[np.ndarray, np.ndarray]:
        """Padded (V, m) index array and boolean mask of ring-BFS neighborhoods.

        Row v lists v first, then neighbors by increasing graph depth and
        index; padding repeats v with mask False.
        """
        if ring < 1:
            raise ValueError("ring must be >= 1")
        if ring in self._ring_cache:
            return self._ring_cache[ring]
        rows = []
        for v in range(self.num_vertices):
            seen = {v}
            frontier = [v]
            ordered = [v]
            for _ in range(ring):
                nxt = []
                for u in frontier:
                    for w in self._neighbors[u]:
                        if w not in seen:
                            seen.add(w)
                            nxt.append(int(w))
                nxt.sort()
                ordered.extend(nxt)
                frontier = nxt
            rows.append(ordered)
        width = max(len(r) for r in rows)
        idx = np.empty((self.num_vertices, width), dtype=np.int64)
        mask = np.zeros((self.num_vertices, width), dtype=bool)
        for v, row in enumerate(rows):
            idx[v, : len(row)] = row
            idx[v, len(row) :] = v
            mask[v, : len(row)] = True
        self._ring_cache[ring] = (idx, mask)
        return idx, mask

    def cycles(self) -> list[np.ndarray]:
        """Ordered vertex cycles of a closed curve (n=1 only)."""
        if self.intrinsic_dim != 1:
            raise UnsupportedDimension("cycles defined for n=1")
        nxt = {}
        for a, b in self.elements:
            nxt[int(a)] = int(b)
        visited = set()
        out = []
        for start in nxt:
            if start in visited:
                continue
            cyc = [start]
            visited.add(start)
            cur = nxt[start]
            while cur != start:
                cyc.append(cur)
                visited.add(cur)
                cur = nxt[cur]
            out.append(np.asarray(cyc, dtype=np.int64))
        return out


def _adjacency_lists(elements: np.ndarray, nv: int) -> list[np.ndarray]:
    pairs = []
    k = elements.shape[1]
    for a in range(k):
        for b in range(k):
            if a != b:
                pairs.append(elements[:, [a, b]])
    pairs = np.unique(np.concatenate(pairs), axis=0)
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    pairs = pairs[order]
    starts = np.searchsorted(pairs[:, 0], np.arange(nv + 1))
    return [pairs[starts[v] : starts[v + 1], 1] for v in range(nv)]


# ---------------------------------------------------------------------------
# snapshot formats

def write_snapshot(imm: DiscreteImmersion, path, scalars: dict | None = None) -> None:
    """CSV snapshot: x0..x{D-1},H2,A2,Aring2,weight plus a connectivity sidecar."""
    scalars = scalars or {}
    dim = imm.ambient_dim
    header = [f"x{i}" for i in range(dim)] + ["H2", "A2", "Aring2", "weight"]
    cols = [imm.vertices[:, i] for i in range(dim)]
    zeros = np.zeros(imm.num_vertices)
    cols.append(np.asarray(scalars.get("H2", zeros)))
    cols.append(np.asarray(scalars.get("A2", zeros)))
    cols.append(np.asarray(scalars.get("Aring2", zeros)))
    cols.append(np.asarray(scalars.get("weight", measure_weights(imm))))
    data = np.column_stack(cols)
    path = str(path)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in data:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    with open(_sidecar_path(path), "w") as fh:
        for el in imm.elements:
            fh.write(" ".join(str(int(i)) for i in el) + "\n")


def read_snapshot(path, intrinsic_dim: int | None = None):
    """Load a CSV snapshot; returns (immersion, scalar columns dict)."""
    path = str(path)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = np.array(
            [[float(tok) for tok in line.strip().split(",")] for line in fh if line.strip()]
        )
    dim = len(header) - 4
    elements = np.loadtxt(_sidecar_path(path), dtype=np.int64, ndmin=2)
    if intrinsic_dim is None:
        intrinsic_dim = elements.shape[1] - 1
    scalars = {
        "H2": data[:, dim],
        "A2": data[:, dim + 1],
        "Aring2": data[:, dim + 2],
        "weight": data[:, dim + 3],
    }
    imm = DiscreteImmersion(
        vertices=data[:, :dim], elements=elements, intrinsic_dim=intrinsic_dim
    )
    return imm, scalars


def _sidecar_path(path: str) -> str:
    base = path[:-4] if path.endswith(".csv") else path
    return base + ".elements.txt"


def write_obj(imm: DiscreteImmersion, path) -> None:
    """OBJ export, offered only for surfaces in R^3."""
    if imm.intrinsic_dim != 2 or imm.codim != 1:
        raise UnsupportedDimension("OBJ export requires n=2, d=1")
    with open(str(path), "w") as fh:
        for v in imm.vertices:
            fh.write(f"v {v[0]!r} {v[1]!r} {v[2]!r}\n")
        for f in imm.elements:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")
