"""Triangulated surface geometry for the scatterer boundary.

Meshes live in the closed upper half-space x3 >= 0: closed polyhedra
(obstacles) or open screens.  Normals are oriented into the exterior
acoustic domain, i.e. away from the obstacle interior.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class PanelGeometry:
    centroid: np.ndarray
    area: float
    normal: np.ndarray
    circumradius: float
    vertices: np.ndarray  # (3, 3) rows


class SurfaceMesh:
    """Immutable triangulated surface.

    vertices : (nv, 3) float array, all x3 >= 0
    triangles: (nt, 3) int array (0-based)
    normals  : (nt, 3) unit normals, oriented into the exterior domain
    parent   : optional (nt,) parent triangle indices after refinement
    """

    def __init__(self, vertices, triangles, flip=False, parent=None,
                 parent_vertex=None):
        vertices = np.asarray(vertices, dtype=float).reshape(-1, 3)
        triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
        if triangles.min(initial=0) < 0 or triangles.max(initial=-1) >= len(vertices):
            raise ValueError("triangle index out of range")
        if np.min(vertices[:, 2]) < -1e-12:
            raise ValueError("vertex with x3 < 0 (mesh must lie in the upper half-space)")
        self.vertices = vertices
        self.triangles = triangles
        self._build_edges()
        v0 = vertices[triangles[:, 0]]
        e1 = vertices[triangles[:, 1]] - v0
        e2 = vertices[triangles[:, 2]] - v0
        cr = np.cross(e1, e2)
        areas = 0.5 * np.linalg.norm(cr, axis=1)
        if np.any(areas < 1e-14):
            raise ValueError("degenerate (zero-area) triangle")
        self.areas = areas
        normals = cr / (2.0 * areas[:, None])
        if self.closed:
            # orient away from the enclosed volume: signed volume positive
            vol = np.einsum('ij,ij->', vertices[triangles[:, 0]], cr) / 6.0
            if vol < 0:
                normals = -normals
        elif flip:
            normals = -normals
        self.normals = normals
        self.centroids = (v0 + vertices[triangles[:, 1]] + vertices[triangles[:, 2]]) / 3.0
        edges = np.stack([np.linalg.norm(e1, axis=1), np.linalg.norm(e2, axis=1),
                          np.linalg.norm(e2 - e1, axis=1)])
        self.h = float(edges.max())
        self.elevated = bool(np.min(vertices[:, 2]) > 1e-12)
        self.parent = parent if parent is None else np.asarray(parent, dtype=np.int64)
        self.parent_vertex = parent_vertex

    def _build_edges(self):
        tri = self.triangles
        e = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
        e = np.sort(e, axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        if np.any(counts > 2):
            raise ValueError("non-manifold edge (shared by more than 2 triangles)")
        boundary_edges = uniq[counts == 1]
        self.boundary_vertices = np.unique(boundary_edges)
        self.closed = len(self.boundary_vertices) == 0

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def interior_vertices(self):
        mask = np.ones(self.n_vertices, dtype=bool)
        mask[self.boundary_vertices] = False
        return np.nonzero(mask)[0]

    def diameter(self):
        v = self.vertices
        return float(np.max(np.linalg.norm(v[:, None, :] - v[None, :, :], axis=-1)))

    def total_area(self):
        return float(self.areas.sum())


def load_mesh(path, flip=False):
    """Read the ASCII mesh format: line 1 `nv nt`, nv vertex lines `x y z`,
    nt triangle lines `i j k` (0-based).  Lines starting with # are comments."""
    with open(path) as f:
        rows = [ln.split('#', 1)[0].strip() for ln in f]
    rows = [r for r in rows if r]
    if not rows:
        raise ValueError(f"{path}: empty mesh file")
    try:
        nv, nt = (int(tok) for tok in rows[0].split())
    except Exception as exc:
        raise ValueError(f"{path}: malformed header line") from exc
    if len(rows) != 1 + nv + nt:
        raise ValueError(f"{path}: expected {1 + nv + nt} data lines, got {len(rows)}")
    try:
        verts = np.array([[float(t) for t in rows[1 + i].split()] for i in range(nv)])
        tris = np.array([[int(t) for t in rows[1 + nv + i].split()] for i in range(nt)])
    except Exception as exc:
        raise ValueError(f"{path}: malformed vertex/triangle line") from exc
    if verts.shape != (nv, 3) or tris.shape != (nt, 3):
        raise ValueError(f"{path}: wrong field count in vertex/triangle line")
    return SurfaceMesh(verts, tris, flip=flip)


def save_mesh(mesh, path):
    with open(path, 'w') as f:
        f.write(f"{mesh.n_vertices} {mesh.n_triangles}\n")
        for v in mesh.vertices:
            f.write(f"{v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        for t in mesh.triangles:
            f.write(f"{t[0]} {t[1]} {t[2]}\n")


def refine_uniform(mesh):
    """Split each triangle into 4 by edge midpoints.  Child panels keep a
    `parent` map and new vertices a `parent_vertex` map (pairs of coarse
    vertex indices), so densities embed exactly across levels."""
    verts = list(map(tuple, mesh.vertices))
    vert_arr = mesh.vertices
    midpoint = {}
    new_verts = list(vert_arr)
    pv = [(i, i) for i in range(len(vert_arr))]

    def mid(i, j):
        key = (min(i, j), max(i, j))
        if key not in midpoint:
            midpoint[key] = len(new_verts)
            new_verts.append(0.5 * (vert_arr[i] + vert_arr[j]))
            pv.append(key)
        return midpoint[key]

    tris = []
    parent = []
    for p, (a, b, c) in enumerate(mesh.triangles):
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        tris.extend([(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)])
        parent.extend([p, p, p, p])
    fine = SurfaceMesh(np.array(new_verts), np.array(tris),
                       parent=parent, parent_vertex=pv)
    # keep the orientation convention aligned with the parent mesh
    if not fine.closed:
        for p in range(mesh.n_triangles):
            if np.dot(fine.normals[4 * p], mesh.normals[p]) < 0:
                fine.normals[4 * p: 4 * p + 4] *= -1.0
    return fine


def panel_geometry(mesh, i):
    if not (0 <= i < mesh.n_triangles):
        raise IndexError(f"triangle index {i} out of range")
    vv = mesh.vertices[mesh.triangles[i]]
    a = np.linalg.norm(vv[1] - vv[2])
    b = np.linalg.norm(vv[0] - vv[2])
    c = np.linalg.norm(vv[0] - vv[1])
    area = mesh.areas[i]
    return PanelGeometry(centroid=mesh.centroids[i], area=float(area),
                         normal=mesh.normals[i],
                         circumradius=float(a * b * c / (4.0 * area)),
                         vertices=vv)


# ---------------------------------------------------------------- builders

def octahedron(center=(0.0, 0.0, 1.0), radius=0.5):
    """Closed octahedron obstacle, elevated when center_z > radius."""
    c = np.asarray(center, dtype=float)
    r = float(radius)
    verts = c + r * np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0],
                              [0, 0, 1], [0, 0, -1]], dtype=float)
    tris = np.array([[0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4],
                     [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5]])
    return SurfaceMesh(verts, tris)


def tetrahedron(center=(0.0, 0.0, 1.0), radius=0.5):
    """Closed regular tetrahedron obstacle."""
    c = np.asarray(center, dtype=float)
    r = float(radius) / np.sqrt(3.0)
    verts = c + r * np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]],
                             dtype=float)
    tris = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
    return SurfaceMesh(verts, tris)


def square_screen(side=1.0, height=0.5):
    """Open unit-square screen parallel to the absorbing plane."""
    s = float(side)
    z = float(height)
    verts = np.array([[0, 0, z], [s, 0, z], [s, s, z], [0, s, z]], dtype=float)
    tris = np.array([[0, 1, 2], [0, 2, 3]])
    return SurfaceMesh(verts, tris)
