"""Conforming triangle meshes: generation, refinement, audit, file I/O.

Triangles are stored counterclockwise with the refinement edge first:
the edge between local vertices 0 and 1 is the one bisected by
newest-vertex bisection, and local vertex 2 is the newest vertex.
Generators put the longest edge first, which keeps bisection shape
quality bounded over arbitrarily many refinement rounds.
"""

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

# edge tag codes (edge_tags array)
INTERIOR = 0
DIRICHLET = 1
NEUMANN = 2

_TAG_TO_STR = {DIRICHLET: "D", NEUMANN: "N"}
_STR_TO_TAG = {"D": DIRICHLET, "N": NEUMANN}

# reference triangle corners, used to map local vertex -> barycentric point
REF_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


class MeshError(Exception):
    """Invalid mesh data or an operation that would produce one."""


class MeshFormatError(MeshError):
    """Malformed mesh file; message carries the offending line number."""


@dataclass(frozen=True)
class ElemGeometry:
    """Affine map data of one triangle: x = v0 + J @ x_ref."""

    vertices: np.ndarray      # (3, 2) corner coordinates
    jacobian: np.ndarray      # (2, 2)
    inv_jacobian_t: np.ndarray  # (2, 2), transpose of J^{-1}
    area: float
    diameter: float


class TriMesh:
    """Immutable conforming triangulation of a polygonal domain.

    Parameters
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, counterclockwise, refinement edge first
    boundary_tags : dict mapping sorted vertex pairs (i, j) to "D" or "N"
    parents : optional (nt,) int array, index of the parent triangle in the
        mesh this one was refined from (-1 for generated meshes)
    validate : when False, skip the boundary-coverage and orientation
        checks so that deliberately broken meshes can be built for audit
    """

    def __init__(self, vertices, triangles, boundary_tags, parents=None,
                 validate=True):
        vertices = np.ascontiguousarray(vertices, dtype=float)
        triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise MeshError(f"vertices must be (nv, 2), got {vertices.shape}")
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise MeshError(f"triangles must be (nt, 3), got {triangles.shape}")
        if triangles.size and (triangles.min() < 0
                               or triangles.max() >= len(vertices)):
            raise MeshError("triangle vertex index out of range")

        self.vertices = vertices
        self.triangles = triangles
        if parents is None:
            parents = np.full(len(triangles), -1, dtype=np.int64)
        self.parents = np.ascontiguousarray(parents, dtype=np.int64)

        self._build_edges(boundary_tags, validate)
        if validate:
            bad = np.flatnonzero(self.signed_areas <= 0.0)
            if bad.size:
                raise MeshError(
                    f"triangles not counterclockwise: {bad.tolist()[:10]}")
            if not np.any(self.edge_tags == DIRICHLET):
                raise MeshError("mesh has no Dirichlet boundary edges")
        for arr in (self.vertices, self.triangles, self.parents,
                    self.edges, self.t2e, self.e2t, self.edge_tags):
            arr.flags.writeable = False

    def _build_edges(self, boundary_tags, validate):
        nt = len(self.triangles)
        # edge opposite local vertex i is (v_{i+1}, v_{i+2})
        raw = np.stack([self.triangles[:, [1, 2]],
                        self.triangles[:, [2, 0]],
                        self.triangles[:, [0, 1]]], axis=1).reshape(-1, 2)
        raw_sorted = np.sort(raw, axis=1)
        self.edges, inv = np.unique(raw_sorted, axis=0, return_inverse=True)
        self.t2e = inv.reshape(nt, 3).astype(np.int64)

        ne = len(self.edges)
        self.e2t = np.full((ne, 2), -1, dtype=np.int64)
        counts = np.zeros(ne, dtype=np.int64)
        order = np.argsort(self.t2e.ravel(), kind="stable")
        flat_tri = np.repeat(np.arange(nt), 3)[order]
        flat_edge = self.t2e.ravel()[order]
        for e, t in zip(flat_edge, flat_tri):
            c = counts[e]
            if c < 2:
                self.e2t[e, c] = t
            counts[e] = c + 1
        if validate and np.any(counts > 2):
            bad = np.flatnonzero(counts > 2)
            raise MeshError(
                f"edges shared by more than two triangles: {bad.tolist()[:10]}")

        self.edge_tags = np.zeros(ne, dtype=np.int8)
        boundary = counts == 1
        seen = np.zeros(ne, dtype=bool)
        for (i, j), tag in boundary_tags.items():
            pair = (int(i), int(j)) if i < j else (int(j), int(i))
            idx = self._find_edge(pair)
            if idx < 0:
                if validate:
                    raise MeshError(f"tagged edge {pair} not present in mesh")
                continue
            if tag not in _STR_TO_TAG:
                raise MeshError(f"unknown boundary tag {tag!r} on edge {pair}")
            if seen[idx]:
                raise MeshError(f"edge {pair} tagged more than once")
            seen[idx] = True
            self.edge_tags[idx] = _STR_TO_TAG[tag]
        if validate:
            missing = boundary & ~seen
            if np.any(missing):
                pairs = [(int(a), int(b)) for a, b in self.edges[missing][:10]]
                raise MeshError(f"untagged boundary edges: {pairs}")
            stray = seen & ~boundary
            if np.any(stray):
                pairs = [(int(a), int(b)) for a, b in self.edges[stray][:10]]
                raise MeshError(f"interior edges carry boundary tags: {pairs}")

    def _find_edge(self, pair):
        """Index of sorted vertex pair in the edge table, -1 if absent."""
        idx = np.searchsorted(self.edges[:, 0], pair[0])
        while idx < len(self.edges) and self.edges[idx, 0] == pair[0]:
            if self.edges[idx, 1] == pair[1]:
                return idx
            idx += 1
        return -1

    # ------------------------------------------------------------------
    # geometry

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_edges(self):
        return len(self.edges)

    @cached_property
    def corner_coords(self):
        """(nt, 3, 2) coordinates of triangle corners."""
        return self.vertices[self.triangles]

    @cached_property
    def jacobians(self):
        """(nt, 2, 2) affine map Jacobians, columns v1-v0 and v2-v0."""
        c = self.corner_coords
        return np.stack([c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]], axis=2)

    @cached_property
    def signed_areas(self):
        J = self.jacobians
        return 0.5 * (J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0])

    @cached_property
    def areas(self):
        return np.abs(self.signed_areas)

    @cached_property
    def inv_jacobians_t(self):
        """(nt, 2, 2) inverse-transpose Jacobians for gradient pushforward."""
        J = self.jacobians
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        out = np.empty_like(J)
        out[:, 0, 0] = J[:, 1, 1]
        out[:, 0, 1] = -J[:, 1, 0]
        out[:, 1, 0] = -J[:, 0, 1]
        out[:, 1, 1] = J[:, 0, 0]
        return out / det[:, None, None]

    @cached_property
    def edge_lengths(self):
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    @cached_property
    def diameters(self):
        """(nt,) longest edge length of each triangle."""
        return self.edge_lengths[self.t2e].max(axis=1)

    def element_geometry(self, k):
        return ElemGeometry(
            vertices=self.corner_coords[k],
            jacobian=self.jacobians[k],
            inv_jacobian_t=self.inv_jacobians_t[k],
            area=float(self.areas[k]),
            diameter=float(self.diameters[k]),
        )

    @cached_property
    def min_angle_deg(self):
        """Smallest interior angle over all triangles, in degrees."""
        c = self.corner_coords
        angles = []
        for i in range(3):
            a = c[:, (i + 1) % 3] - c[:, i]
            b = c[:, (i + 2) % 3] - c[:, i]
            cosang = np.einsum("kd,kd->k", a, b) / (
                np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            angles.append(np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0))))
        return float(np.min(angles))

    def boundary_tag_dict(self):
        """Boundary tags as {(i, j): "D"|"N"} with i < j."""
        out = {}
        for idx in np.flatnonzero(self.edge_tags != INTERIOR):
            i, j = self.edges[idx]
            out[(int(i), int(j))] = _TAG_TO_STR[int(self.edge_tags[idx])]
        return out

    @property
    def has_neumann(self):
        return bool(np.any(self.edge_tags == NEUMANN))

    # ------------------------------------------------------------------
    # refinement

    def refine_uniform(self):
        """Split every triangle into four congruent children.

        Each child again stores its longest edge first, so repeated
        uniform refinement produces only similarity copies of the
        original triangles.
        """
        nv = self.n_vertices
        mid = 0.5 * (self.vertices[self.edges[:, 0]]
                     + self.vertices[self.edges[:, 1]])
        new_vertices = np.vstack([self.vertices, mid])

        t = self.triangles
        # midpoint vertex ids per local edge (opposite vertex 0, 1, 2)
        m0 = nv + self.t2e[:, 0]
        m1 = nv + self.t2e[:, 1]
        m2 = nv + self.t2e[:, 2]
        children = np.stack([
            np.column_stack([t[:, 0], m2, m1]),
            np.column_stack([m2, t[:, 1], m0]),
            np.column_stack([m1, m0, t[:, 2]]),
            np.column_stack([m0, m1, m2]),
        ], axis=1).reshape(-1, 3)
        parents = np.repeat(np.arange(self.n_triangles), 4)

        tags = {}
        for idx in np.flatnonzero(self.edge_tags != INTERIOR):
            i, j = (int(v) for v in self.edges[idx])
            m = int(nv + idx)
            tag = _TAG_TO_STR[int(self.edge_tags[idx])]
            tags[(min(i, m), max(i, m))] = tag
            tags[(min(j, m), max(j, m))] = tag
        return TriMesh(new_vertices, children, tags, parents=parents)

    def refine_marked(self, marked):
        """Newest-vertex bisection of the marked triangles.

        The marked set is first closed: bisecting a triangle's
        refinement edge may create a hanging node in the neighbor, which
        is then forced to bisect as well. The result is conforming and
        every marked triangle is strictly smaller than before.
        """
        marked = np.asarray(marked)
        if marked.dtype == bool:
            marked = np.flatnonzero(marked)
        marked = np.unique(marked.astype(np.int64))
        if marked.size == 0:
            return self
        if marked.min() < 0 or marked.max() >= self.n_triangles:
            raise MeshError("marked triangle index out of range")

        # closure: a triangle with any marked edge must bisect its own
        # refinement edge; iterate to a fixpoint
        edge_marked = np.zeros(self.n_edges, dtype=bool)
        edge_marked[self.t2e[marked, 2]] = True
        while True:
            need = (edge_marked[self.t2e].any(axis=1)
                    & ~edge_marked[self.t2e[:, 2]])
            if not need.any():
                break
            edge_marked[self.t2e[need, 2]] = True

        nv = self.n_vertices
        split_edges = np.flatnonzero(edge_marked)
        midpoint_id = np.full(self.n_edges, -1, dtype=np.int64)
        midpoint_id[split_edges] = nv + np.arange(len(split_edges))
        mid = 0.5 * (self.vertices[self.edges[split_edges, 0]]
                     + self.vertices[self.edges[split_edges, 1]])
        new_vertices = np.vstack([self.vertices, mid])

        tris = []
        parents = []
        for k in range(self.n_triangles):
            v0, v1, v2 = self.triangles[k]
            e0, e1, e2 = self.t2e[k]
            m2 = midpoint_id[e2]
            if m2 < 0:
                tris.append((v0, v1, v2))
                parents.append(k)
                continue
            m0 = midpoint_id[e0]
            m1 = midpoint_id[e1]
            # first bisection through the refinement edge (v0, v1)
            if m1 < 0:
                tris.append((v2, v0, m2))
            else:
                tris.append((m2, v2, m1))
                tris.append((v0, m2, m1))
            if m0 < 0:
                tris.append((v1, v2, m2))
            else:
                tris.append((m2, v1, m0))
                tris.append((v2, m2, m0))
            parents.extend([k] * (len(tris) - len(parents)))

        tags = {}
        for idx in np.flatnonzero(self.edge_tags != INTERIOR):
            i, j = (int(v) for v in self.edges[idx])
            tag = _TAG_TO_STR[int(self.edge_tags[idx])]
            m = int(midpoint_id[idx])
            if m < 0:
                tags[(i, j)] = tag
            else:
                tags[(min(i, m), max(i, m))] = tag
                tags[(min(j, m), max(j, m))] = tag
        return TriMesh(new_vertices, np.array(tris, dtype=np.int64), tags,
                       parents=np.array(parents, dtype=np.int64))

    # ------------------------------------------------------------------
    # audit

    def audit(self, min_angle_deg=10.0):
        """Run structural checks and return an AuditReport.

        Checks orientation, conformity (shared edges, hanging nodes,
        duplicate and unused vertices), boundary tag coverage, and a
        minimum-angle threshold. Runs on meshes built with
        validate=False, so broken inputs are reported instead of
        rejected.
        """
        checks = {}

        bad_orient = np.flatnonzero(self.signed_areas <= 0.0)
        checks["orientation"] = (bad_orient.size == 0,
                                 [f"triangle {k}" for k in bad_orient[:20]])

        conf = []
        counts = np.sum(self.e2t >= 0, axis=1)
        # over-shared edges were counted during construction; recompute
        raw = np.sort(np.stack([self.triangles[:, [1, 2]],
                                self.triangles[:, [2, 0]],
                                self.triangles[:, [0, 1]]],
                               axis=1).reshape(-1, 2), axis=1)
        uniq, full_counts = np.unique(raw, axis=0, return_counts=True)
        for e, c in zip(uniq[full_counts > 2], full_counts[full_counts > 2]):
            conf.append(f"edge {(int(e[0]), int(e[1]))} shared by {c} triangles")

        used = np.zeros(self.n_vertices, dtype=bool)
        used[self.triangles.ravel()] = True
        for v in np.flatnonzero(~used)[:20]:
            conf.append(f"vertex {v} unused")

        order = np.lexsort(self.vertices.T)
        sv = self.vertices[order]
        dup = np.flatnonzero(np.all(np.abs(np.diff(sv, axis=0)) < 1e-12,
                                    axis=1))
        for d in dup[:20]:
            conf.append(f"vertices {order[d]} and {order[d + 1]} coincide")

        conf.extend(self._hanging_nodes())
        checks["conformity"] = (len(conf) == 0, conf[:20])

        tag_issues = []
        boundary = counts == 1
        untagged = boundary & (self.edge_tags == INTERIOR)
        for e in self.edges[untagged][:20]:
            tag_issues.append(f"boundary edge {(int(e[0]), int(e[1]))} untagged")
        stray = ~boundary & (self.edge_tags != INTERIOR)
        for e in self.edges[stray][:20]:
            tag_issues.append(f"interior edge {(int(e[0]), int(e[1]))} carries a tag")
        if not np.any(self.edge_tags == DIRICHLET):
            tag_issues.append("no Dirichlet edges")
        checks["boundary_tags"] = (len(tag_issues) == 0, tag_issues)

        ang = self.min_angle_deg
        checks["min_angle"] = (
            ang >= min_angle_deg,
            [] if ang >= min_angle_deg else
            [f"min angle {ang:.3f} deg below threshold {min_angle_deg}"])
        return AuditReport(checks)

    def _hanging_nodes(self):
        """Vertices lying strictly inside an edge of some triangle."""
        issues = []
        pa = self.vertices[self.edges[:, 0]]
        pb = self.vertices[self.edges[:, 1]]
        d = pb - pa
        L2 = np.einsum("ed,ed->e", d, d)
        scale = math.sqrt(L2.max()) if len(L2) else 1.0
        tol = 1e-9 * scale
        for lo in range(0, self.n_edges, 512):
            hi = min(lo + 512, self.n_edges)
            # distances of all vertices to this chunk of edge segments
            rel = self.vertices[None, :, :] - pa[lo:hi, None, :]
            t = np.einsum("evd,ed->ev", rel, d[lo:hi]) / L2[lo:hi, None]
            perp = rel - t[:, :, None] * d[lo:hi, None, :]
            dist = np.hypot(perp[:, :, 0], perp[:, :, 1])
            on = (dist < tol) & (t > 1e-9) & (t < 1 - 1e-9)
            for e, v in zip(*np.nonzero(on)):
                ei = lo + e
                if v in self.edges[ei]:
                    continue
                issues.append(f"vertex {v} hangs on edge "
                              f"{(int(self.edges[ei, 0]), int(self.edges[ei, 1]))}")
                if len(issues) >= 20:
                    return issues
        return issues

    # ------------------------------------------------------------------
    # file I/O

    def write(self, path):
        """Write the mesh in the plain-text trimesh v1 format."""
        lines = ["trimesh v1", f"vertices {self.n_vertices}"]
        lines.extend(f"{float(x)!r} {float(y)!r}" for x, y in self.vertices)
        lines.append(f"triangles {self.n_triangles}")
        lines.extend(f"{a} {b} {c}" for a, b, c in self.triangles)
        tagged = np.flatnonzero(self.edge_tags != INTERIOR)
        lines.append(f"boundary {len(tagged)}")
        for idx in tagged:
            i, j = self.edges[idx]
            lines.append(f"{i} {j} {_TAG_TO_STR[int(self.edge_tags[idx])]}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    @staticmethod
    def read(path, validate=True):
        """Read a mesh from the plain-text trimesh v1 format.

        validate=False defers structural checking to audit(), letting
        broken meshes be loaded for inspection.
        """
        with open(path) as fh:
            raw = fh.read().splitlines()
        pos = 0

        def next_line():
            nonlocal pos
            while pos < len(raw):
                line = raw[pos].split("#", 1)[0].strip()
                pos += 1
                if line:
                    return pos, line
            return pos, None

        ln, line = next_line()
        if line != "trimesh v1":
            raise MeshFormatError(f"line {ln}: expected 'trimesh v1' header, "
                                  f"got {line!r}")

        def read_count(keyword):
            ln, line = next_line()
            if line is None:
                raise MeshFormatError(f"line {ln}: missing '{keyword} N' line")
            parts = line.split()
            if len(parts) != 2 or parts[0] != keyword:
                raise MeshFormatError(
                    f"line {ln}: expected '{keyword} N', got {line!r}")
            try:
                n = int(parts[1])
            except ValueError:
                raise MeshFormatError(
                    f"line {ln}: bad count {parts[1]!r}") from None
            if n < 0:
                raise MeshFormatError(f"line {ln}: negative count {n}")
            return n

        nv = read_count("vertices")
        vertices = np.empty((nv, 2))
        for k in range(nv):
            ln, line = next_line()
            if line is None:
                raise MeshFormatError(f"line {ln}: expected {nv} vertex "
                                      f"lines, file ended after {k}")
            parts = line.split()
            if len(parts) != 2:
                raise MeshFormatError(
                    f"line {ln}: expected 'x y', got {line!r}")
            try:
                vertices[k] = [float(parts[0]), float(parts[1])]
            except ValueError:
                raise MeshFormatError(
                    f"line {ln}: bad coordinate in {line!r}") from None

        nt = read_count("triangles")
        triangles = np.empty((nt, 3), dtype=np.int64)
        for k in range(nt):
            ln, line = next_line()
            if line is None:
                raise MeshFormatError(f"line {ln}: expected {nt} triangle "
                                      f"lines, file ended after {k}")
            parts = line.split()
            if len(parts) != 3:
                raise MeshFormatError(
                    f"line {ln}: expected 'i j k', got {line!r}")
            try:
                triangles[k] = [int(p) for p in parts]
            except ValueError:
                raise MeshFormatError(
                    f"line {ln}: bad vertex index in {line!r}") from None
            if triangles[k].min() < 0 or triangles[k].max() >= nv:
                raise MeshFormatError(
                    f"line {ln}: vertex index out of range in {line!r}")

        nb = read_count("boundary")
        tags = {}
        for k in range(nb):
            ln, line = next_line()
            if line is None:
                raise MeshFormatError(f"line {ln}: expected {nb} boundary "
                                      f"lines, file ended after {k}")
            parts = line.split()
            if len(parts) != 3:
                raise MeshFormatError(
                    f"line {ln}: expected 'i j TAG', got {line!r}")
            try:
                i, j = int(parts[0]), int(parts[1])
            except ValueError:
                raise MeshFormatError(
                    f"line {ln}: bad vertex index in {line!r}") from None
            if not (0 <= i < nv and 0 <= j < nv):
                raise MeshFormatError(
                    f"line {ln}: vertex index out of range in {line!r}")
            if parts[2] not in _STR_TO_TAG:
                raise MeshFormatError(
                    f"line {ln}: boundary tag must be D or N, "
                    f"got {parts[2]!r}")
            key = (min(i, j), max(i, j))
            if key in tags:
                raise MeshFormatError(f"line {ln}: edge {key} tagged twice")
            tags[key] = parts[2]

        ln, line = next_line()
        if line is not None:
            raise MeshFormatError(f"line {ln}: trailing content {line!r}")
        try:
            return TriMesh(vertices, triangles, tags, validate=validate)
        except MeshError as exc:
            raise MeshFormatError(f"line {ln}: {exc}") from None


class AuditReport:
    """Outcome of TriMesh.audit: named checks with offender lists."""

    def __init__(self, checks):
        self.checks = checks

    @property
    def ok(self):
        return all(passed for passed, _ in self.checks.values())

    def __str__(self):
        lines = []
        for name, (passed, issues) in self.checks.items():
            lines.append(f"{name}: {'ok' if passed else 'FAIL'}")
            lines.extend(f"  {msg}" for msg in issues)
        return "\n".join(lines)


# ----------------------------------------------------------------------
# generators

def _key(a, b):
    return (a, b) if a < b else (b, a)


def _resolve_side_tag(boundary):
    if boundary is None:
        return lambda side: "D"
    if isinstance(boundary, dict):
        unknown = set(boundary) - {"left", "right", "bottom", "top"}
        if unknown:
            raise MeshError(f"unknown boundary side names: {sorted(unknown)}")
        bad = {v for v in boundary.values() if v not in ("D", "N")}
        if bad:
            raise MeshError(f"boundary tags must be D or N, got {sorted(bad)}")
        return lambda side: boundary.get(side, "D")
    raise MeshError("boundary must be None or a side->tag dict")


def unit_square(n, boundary=None):
    """Structured mesh of [0,1]^2 with 2*n^2 triangles.

    Every cell is split along the same diagonal and the diagonal, being
    the longest edge, is stored first. boundary optionally maps side
    names (left/right/bottom/top) to "D" or "N"; default all Dirichlet.
    """
    if n < 1:
        raise MeshError(f"unit_square needs n >= 1, got {n}")
    side_tag = _resolve_side_tag(boundary)
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return i * (n + 1) + j

    tris = []
    for i in range(n):
        for j in range(n):
            a = vid(i, j)
            b = vid(i + 1, j)
            c = vid(i + 1, j + 1)
            d = vid(i, j + 1)
            # diagonal a-c is the longest edge of both triangles
            tris.append((c, a, b))
            tris.append((a, c, d))
    # side naming is in x/y terms: bottom y=0, left x=0
    tags = {}
    for i in range(n):
        tags[_key(vid(i, 0), vid(i + 1, 0))] = side_tag("bottom")
        tags[_key(vid(i, n), vid(i + 1, n))] = side_tag("top")
        tags[_key(vid(0, i), vid(0, i + 1))] = side_tag("left")
        tags[_key(vid(n, i), vid(n, i + 1))] = side_tag("right")
    return TriMesh(vertices, np.array(tris, dtype=np.int64), tags)


def l_shape(n, boundary=None):
    """Structured mesh of [-1,1]^2 minus the open quadrant (0,1]x(0,1].

    n cells per axis direction of the full square, n even so the
    reentrant corner at the origin is a mesh vertex. All boundary parts
    are Dirichlet unless boundary is a callable mapping an edge
    midpoint (x, y) to "D" or "N".
    """
    if n < 2 or n % 2:
        raise MeshError(f"l_shape needs even n >= 2, got {n}")
    if boundary is not None and not callable(boundary):
        raise MeshError("l_shape boundary must be None or a callable")
    xs = np.linspace(-1.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    grid = np.column_stack([X.ravel(), Y.ravel()])

    def gid(i, j):
        return i * (n + 1) + j

    tris = []
    keep = np.zeros(len(grid), dtype=bool)
    for i in range(n):
        for j in range(n):
            xc = 0.5 * (xs[i] + xs[i + 1])
            yc = 0.5 * (xs[j] + xs[j + 1])
            if xc > 0.0 and yc > 0.0:
                continue
            a, b = gid(i, j), gid(i + 1, j)
            c, d = gid(i + 1, j + 1), gid(i, j + 1)
            tris.append((c, a, b))
            tris.append((a, c, d))
            keep[[a, b, c, d]] = True

    remap = np.cumsum(keep) - 1
    vertices = grid[keep]
    triangles = remap[np.array(tris, dtype=np.int64)]

    probe = TriMesh(vertices, triangles, {}, validate=False)
    counts = np.sum(probe.e2t >= 0, axis=1)
    tags = {}
    for idx in np.flatnonzero(counts == 1):
        i, j = (int(v) for v in probe.edges[idx])
        if boundary is None:
            tag = "D"
        else:
            mx, my = 0.5 * (vertices[i] + vertices[j])
            tag = boundary(mx, my)
            if tag not in ("D", "N"):
                raise MeshError(f"boundary callable returned {tag!r}")
        tags[(i, j)] = tag
    return TriMesh(vertices, triangles, tags)


def generate_structured(domain, n, boundary=None):
    """Build a structured mesh of a named domain ("unit_square", "l_shape")."""
    if domain == "unit_square":
        return unit_square(n, boundary)
    if domain == "l_shape":
        return l_shape(n, boundary)
    raise MeshError(f"unknown domain {domain!r}; "
                    "expected unit_square or l_shape")
