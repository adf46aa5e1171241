"""Indexed triangle meshes plus the adjacency helpers the pipeline shares."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

UNLABELED = -1


@dataclass
class TriMesh:
    """Triangle mesh: vertices (N, 3) float64, faces (M, 3) int64.

    labels optionally assigns each vertex to a plane id (UNLABELED = none).
    """

    vertices: np.ndarray
    faces: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise ValueError("vertices must be (N, 3)")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise ValueError("faces must be (M, 3)")
        if len(self.faces):
            if self.faces.min() < 0 or self.faces.max() >= len(self.vertices):
                raise ValueError("face index out of range")
            f = self.faces
            if ((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])).any():
                raise ValueError("degenerate face (repeated vertex index)")
        if self.labels is not None:
            self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
            if self.labels.shape != (len(self.vertices),):
                raise ValueError("labels must be (N,)")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def copy(self) -> "TriMesh":
        return TriMesh(
            self.vertices.copy(),
            self.faces.copy(),
            None if self.labels is None else self.labels.copy(),
        )

    def face_normals(self) -> np.ndarray:
        """Unit face normals; zero-area faces get a zero vector."""
        a = self.vertices[self.faces[:, 0]]
        b = self.vertices[self.faces[:, 1]]
        c = self.vertices[self.faces[:, 2]]
        n = np.cross(b - a, c - a)
        length = np.linalg.norm(n, axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(length > 0, n / length, 0.0)
        return unit

    def face_areas(self) -> np.ndarray:
        a = self.vertices[self.faces[:, 0]]
        b = self.vertices[self.faces[:, 1]]
        c = self.vertices[self.faces[:, 2]]
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def vertex_normals(self) -> np.ndarray:
        """Area-weighted vertex normals (zero for vertices on no face)."""
        a = self.vertices[self.faces[:, 0]]
        b = self.vertices[self.faces[:, 1]]
        c = self.vertices[self.faces[:, 2]]
        fn = np.cross(b - a, c - a)  # length 2*area, weights the average
        acc = np.zeros_like(self.vertices)
        for k in range(3):
            np.add.at(acc, self.faces[:, k], fn)
        length = np.linalg.norm(acc, axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(length > 0, acc / length, 0.0)

    def _edge_keys(self) -> np.ndarray:
        f = self.faces
        pairs = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        lo = pairs.min(axis=1).astype(np.int64)
        hi = pairs.max(axis=1).astype(np.int64)
        return lo * self.n_vertices + hi

    def edges(self) -> np.ndarray:
        """Unique undirected edges as (E, 2) with lo < hi, sorted."""
        keys = np.unique(self._edge_keys())
        return np.stack([keys // self.n_vertices, keys % self.n_vertices], axis=1)

    def edge_face_counts(self):
        """(edges (E, 2), counts (E,)): incident-face count per undirected edge."""
        keys, counts = np.unique(self._edge_keys(), return_counts=True)
        edges = np.stack([keys // self.n_vertices, keys % self.n_vertices], axis=1)
        return edges, counts

    def boundary_edges(self) -> np.ndarray:
        """Edges with exactly one incident face."""
        edges, counts = self.edge_face_counts()
        return edges[counts == 1]

    def boundary_loops(self) -> list:
        """Closed boundary loops as ordered vertex-index arrays.

        Each boundary vertex must lie on exactly two boundary edges;
        anything else is a non-manifold boundary and raises.
        """
        be = self.boundary_edges()
        if len(be) == 0:
            return []
        nbrs: dict = {}
        for a, b in be:
            nbrs.setdefault(int(a), []).append(int(b))
            nbrs.setdefault(int(b), []).append(int(a))
        for v, ns in nbrs.items():
            if len(ns) != 2:
                raise ValueError(f"non-manifold boundary at vertex {v}")
            ns.sort()
        loops = []
        visited = set()
        for start in sorted(nbrs):
            if start in visited:
                continue
            loop = [start]
            visited.add(start)
            prev, cur = start, nbrs[start][0]
            while cur != start:
                loop.append(cur)
                visited.add(cur)
                a, b = nbrs[cur]
                prev, cur = cur, (b if a == prev else a)
            loops.append(np.asarray(loop, dtype=np.int64))
        return loops

    def vertex_face_incidence(self):
        """CSR (indptr, face_ids): faces touching each vertex."""
        f = self.faces.ravel()
        face_ids = np.repeat(np.arange(self.n_faces, dtype=np.int64), 3)
        order = np.argsort(f, kind="stable")
        f, face_ids = f[order], face_ids[order]
        indptr = np.zeros(self.n_vertices + 1, dtype=np.int64)
        np.add.at(indptr, f + 1, 1)
        np.cumsum(indptr, out=indptr)
        return indptr, face_ids

    def connected_components(self):
        """(face_labels (M,), n_components): faces joined by shared vertices."""
        parent = np.arange(self.n_vertices, dtype=np.int64)

        def find(x):
            root = x
            while parent[root] != root:
                root = parent[root]
            while parent[x] != root:
                parent[x], x = root, parent[x]
            return root

        for f in self.faces:
            a = find(int(f[0]))
            for k in (1, 2):
                b = find(int(f[k]))
                if a != b:
                    parent[b] = a
        if self.n_faces == 0:
            return np.empty(0, dtype=np.int64), 0
        roots = np.asarray([find(int(v)) for v in self.faces[:, 0]], dtype=np.int64)
        out = np.empty(self.n_faces, dtype=np.int64)
        next_id = 0
        seen: dict = {}
        for i, r in enumerate(roots):
            if r not in seen:
                seen[r] = next_id
                next_id += 1
            out[i] = seen[r]
        return out, next_id

    def submesh(self, face_mask):
        """Extract the faces selected by face_mask with compacted vertices.

        Returns (mesh, vertex_map) where vertex_map[new_index] = old_index.
        """
        face_mask = np.asarray(face_mask)
        if face_mask.dtype == bool:
            faces = self.faces[face_mask]
        else:
            faces = self.faces[np.asarray(face_mask, dtype=np.int64)]
        used = np.unique(faces)
        remap = np.zeros(self.n_vertices, dtype=np.int64)
        remap[used] = np.arange(len(used))
        labels = None if self.labels is None else self.labels[used]
        return TriMesh(self.vertices[used], remap[faces], labels), used


def concatenate(meshes) -> TriMesh:
    """Stack meshes into one; vertex labels kept only if every input has them."""
    meshes = list(meshes)
    if not meshes:
        raise ValueError("nothing to concatenate")
    verts, faces, labels = [], [], []
    offset = 0
    with_labels = all(m.labels is not None for m in meshes)
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.faces + offset)
        if with_labels:
            labels.append(m.labels)
        offset += m.n_vertices
    return TriMesh(
        np.concatenate(verts),
        np.concatenate(faces) if faces else np.empty((0, 3), dtype=np.int64),
        np.concatenate(labels) if with_labels else None,
    )


def merge_duplicate_vertices(mesh: TriMesh, tol: float = 0.0, by_label: bool = False) -> TriMesh:
    """Weld coincident vertices (within tol; tol 0 = exact) and drop faces
    collapsed by the weld.  First occurrence keeps its label.

    by_label restricts welding to vertices with equal labels, so seams
    between differently-labeled parts stay unstitched and every labeled
    region keeps its full vertex set.
    """
    if tol < 0:
        raise ValueError("tol must be >= 0")
    if tol > 0:
        key = np.round(mesh.vertices / tol).astype(np.int64)
    else:
        key = mesh.vertices
    if by_label and mesh.labels is not None:
        key = np.concatenate([key, mesh.labels[:, None].astype(key.dtype)], axis=1)
    _, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")  # keep original vertex order
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    inverse = rank[inverse]
    first = first[order]
    faces = inverse[mesh.faces]
    good = (
        (faces[:, 0] != faces[:, 1])
        & (faces[:, 1] != faces[:, 2])
        & (faces[:, 0] != faces[:, 2])
    )
    labels = None if mesh.labels is None else mesh.labels[first]
    return TriMesh(mesh.vertices[first], faces[good], labels)
