"""Triangulations of a 2D domain with a three-way boundary partition.

The boundary of the domain is split into a Dirichlet part (D), a heat/current
exchange part (N), and a contact part (C). Scalar unknowns live in the P1
space vanishing on the D part; vector unknowns use two components per free
node, interleaved (x, y) in node-index order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

VALID_TAGS = ("D", "N", "C")


class MeshError(ValueError):
    """Raised for malformed mesh files or invalid mesh topology."""


@dataclass
class Mesh:
    """Conforming triangulation with tagged boundary edges.

    Attributes
    ----------
    nodes : (N, 2) float array
        Vertex coordinates.
    triangles : (T, 3) int array
        Vertex indices, counterclockwise.
    boundary_edges : (E, 2) int array
        Vertex index pairs; each edge belongs to exactly one triangle.
    edge_tags : (E,) array of str
        One of ``"D"``, ``"N"``, ``"C"`` per boundary edge.
    edge_normals : (E, 2) float array
        Outward unit normal per boundary edge.
    edge_owner : (E,) int array
        Index of the triangle owning each boundary edge.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    edge_tags: np.ndarray
    edge_normals: np.ndarray = field(default=None)  # type: ignore[assignment]
    edge_owner: np.ndarray = field(default=None)  # type: ignore[assignment]

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    def edge_lengths(self) -> np.ndarray:
        p = self.nodes[self.boundary_edges[:, 0]]
        q = self.nodes[self.boundary_edges[:, 1]]
        return np.linalg.norm(q - p, axis=1)

    def edges_with_tag(self, tag: str) -> np.ndarray:
        return np.flatnonzero(self.edge_tags == tag)


@dataclass
class DofMap:
    """Free-degree-of-freedom bookkeeping for one mesh.

    ``scalar_free_nodes`` lists nodes not touching the D part, in node-index
    order; the vector space uses two dofs per free node, interleaved (x, y).
    ``contact_nodes`` are all nodes of C-tagged edges (a node shared with the
    D part stays Dirichlet and simply never moves). Unit normal/tangent pairs
    at contact nodes average the adjacent C-edge normals.
    """

    n_nodes: int
    dirichlet_nodes: np.ndarray
    scalar_free_nodes: np.ndarray
    node_to_free: np.ndarray
    contact_nodes: np.ndarray
    contact_normal: np.ndarray
    contact_tangent: np.ndarray

    @property
    def n_free_scalar(self) -> int:
        return self.scalar_free_nodes.shape[0]

    @property
    def n_free_vector(self) -> int:
        return 2 * self.n_free_scalar

    def vector_free_dofs(self) -> np.ndarray:
        """Global dof ids (2*node + comp) of the free vector dofs, interleaved."""
        out = np.empty(self.n_free_vector, dtype=np.int64)
        out[0::2] = 2 * self.scalar_free_nodes
        out[1::2] = 2 * self.scalar_free_nodes + 1
        return out

    def restrict_scalar(self, mat: sp.spmatrix) -> sp.csr_matrix:
        """Restrict a full (N x N) operator to free scalar dofs."""
        f = self.scalar_free_nodes
        return mat.tocsr()[f][:, f].tocsr()

    def restrict_vector(self, mat: sp.spmatrix) -> sp.csr_matrix:
        """Restrict a full (2N x 2N) operator to free vector dofs."""
        f = self.vector_free_dofs()
        return mat.tocsr()[f][:, f].tocsr()


def triangle_geometry(mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    """Areas and P1 basis gradients for every triangle.

    Returns
    -------
    areas : (T,) array
    grads : (T, 2, 3) array
        ``grads[t, :, a]`` is the constant gradient of the local basis
        function of vertex ``a`` on triangle ``t``.
    """
    tri = mesh.triangles
    p0 = mesh.nodes[tri[:, 0]]
    p1 = mesh.nodes[tri[:, 1]]
    p2 = mesh.nodes[tri[:, 2]]
    d1 = p1 - p0
    d2 = p2 - p0
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    areas = 0.5 * det
    # gradient of barycentric coordinates: rot90 of opposite edge / (2 area)
    grads = np.empty((tri.shape[0], 2, 3))
    e0 = p2 - p1
    e1 = p0 - p2
    e2 = p1 - p0
    for a, e in enumerate((e0, e1, e2)):
        grads[:, 0, a] = -e[:, 1] / det
        grads[:, 1, a] = e[:, 0] / det
    return areas, grads


def _edge_census(triangles: np.ndarray) -> dict[tuple[int, int], list[int]]:
    seen: dict[tuple[int, int], list[int]] = {}
    for t, (a, b, c) in enumerate(triangles):
        for i, j in ((a, b), (b, c), (c, a)):
            key = (min(i, j), max(i, j))
            seen.setdefault(key, []).append(t)
    return seen


def _validate(mesh: Mesh) -> Mesh:
    """Check all Mesh invariants; fill normals and owners. Raises MeshError."""
    nodes, tri = mesh.nodes, mesh.triangles
    n = nodes.shape[0]
    if tri.size and (tri.min() < 0 or tri.max() >= n):
        bad = int(np.flatnonzero((tri < 0) | (tri >= n)).flat[0] // 3)
        raise MeshError(f"triangle {bad}: node index out of range")
    be = mesh.boundary_edges
    if be.size and (be.min() < 0 or be.max() >= n):
        bad = int(np.flatnonzero((be < 0) | (be >= n)).flat[0] // 2)
        raise MeshError(f"boundary edge {bad}: node index out of range")

    areas, _ = triangle_geometry(mesh)
    neg = np.flatnonzero(areas <= 0)
    if neg.size:
        raise MeshError(f"inconsistent orientation: triangle {neg[0]} has non-positive area")

    for tag in mesh.edge_tags:
        if tag not in VALID_TAGS:
            raise MeshError(f"unknown boundary tag {tag!r}")

    census = _edge_census(tri)
    true_boundary = {k for k, owners in census.items() if len(owners) == 1}
    tagged: dict[tuple[int, int], int] = {}
    for e, (i, j) in enumerate(be):
        key = (min(i, j), max(i, j))
        if key in tagged:
            raise MeshError(f"boundary edge {e}: duplicate of edge {tagged[key]}")
        if key not in census:
            raise MeshError(f"boundary edge {e}: ({i},{j}) is not an edge of any triangle")
        if key not in true_boundary:
            raise MeshError(f"boundary edge {e}: ({i},{j}) is interior (two triangles)")
        tagged[key] = e
    missing = true_boundary - set(tagged)
    if missing:
        i, j = sorted(missing)[0]
        raise MeshError(f"boundary edge ({i},{j}) of the triangulation carries no tag")

    if not np.any(mesh.edge_tags == "D"):
        raise MeshError("empty Dirichlet part")

    owner = np.empty(be.shape[0], dtype=np.int64)
    normals = np.empty((be.shape[0], 2))
    for e, (i, j) in enumerate(be):
        t = census[(min(i, j), max(i, j))][0]
        owner[e] = t
        a, b, c = tri[t]
        third = ({a, b, c} - {i, j}).pop()
        tvec = nodes[j] - nodes[i]
        nu = np.array([tvec[1], -tvec[0]])
        nu /= np.linalg.norm(nu)
        mid = 0.5 * (nodes[i] + nodes[j])
        if np.dot(nu, nodes[third] - mid) > 0:
            nu = -nu
        normals[e] = nu
    mesh.edge_owner = owner
    mesh.edge_normals = normals
    return mesh


def load_mesh(path: str) -> Mesh:
    """Read a mesh from the plain-text format.

    Format: header ``nodes <N> triangles <T> edges <E>``; N lines ``x y``;
    T lines ``i j k`` (0-based, counterclockwise); E lines ``i j TAG`` with
    TAG in {D, N, C}. Whitespace-separated; ``#`` starts a comment.
    """
    with open(path) as f:
        raw = f.read()
    tokens: list[str] = []
    lines_of: list[int] = []
    for ln, line in enumerate(raw.splitlines(), start=1):
        body = line.split("#", 1)[0]
        for tok in body.split():
            tokens.append(tok)
            lines_of.append(ln)
    pos = 0

    def take(n: int, what: str) -> list[str]:
        nonlocal pos
        if pos + n > len(tokens):
            raise MeshError(f"unexpected end of file while reading {what}")
        out = tokens[pos:pos + n]
        pos += n
        return out

    head = take(6, "header")
    if head[0] != "nodes" or head[2] != "triangles" or head[4] != "edges":
        raise MeshError("malformed header; expected 'nodes <N> triangles <T> edges <E>'")
    try:
        n_nodes, n_tri, n_edges = int(head[1]), int(head[3]), int(head[5])
    except ValueError as exc:
        raise MeshError(f"malformed header counts: {exc}") from exc

    def ints(vals: list[str], what: str) -> list[int]:
        try:
            return [int(v) for v in vals]
        except ValueError as exc:
            raise MeshError(f"{what}: {exc}") from exc

    try:
        nodes = np.array([[float(v) for v in take(2, f"node {i}")] for i in range(n_nodes)])
    except ValueError as exc:
        raise MeshError(f"node coordinate: {exc}") from exc
    nodes = nodes.reshape(n_nodes, 2) if n_nodes else np.zeros((0, 2))
    triangles = np.array(
        [ints(take(3, f"triangle {i}"), f"triangle {i}") for i in range(n_tri)], dtype=np.int64
    ).reshape(n_tri, 3)
    edges = []
    tags = []
    for e in range(n_edges):
        i, j = ints(take(2, f"edge {e}"), f"edge {e}")
        tag = take(1, f"edge {e} tag")[0]
        if tag not in VALID_TAGS:
            raise MeshError(f"edge {e} (line {lines_of[pos - 1]}): bad tag {tag!r}")
        if not (0 <= i < n_nodes and 0 <= j < n_nodes):
            raise MeshError(f"edge {e}: node index ({i},{j}) out of range")
        edges.append((i, j))
        tags.append(tag)
    if pos != len(tokens):
        raise MeshError(f"trailing data at line {lines_of[pos]}")

    mesh = Mesh(
        nodes=nodes,
        triangles=triangles,
        boundary_edges=np.array(edges, dtype=np.int64).reshape(n_edges, 2),
        edge_tags=np.array(tags, dtype=object),
    )
    return _validate(mesh)


def build_unit_square_mesh(n: int, tags: dict[str, str] | None = None) -> Mesh:
    """Structured criss triangulation of the unit square.

    Parameters
    ----------
    n : int
        Subdivisions per side; the mesh has (n+1)^2 nodes and 2 n^2 triangles.
    tags : dict, optional
        Tag per side, keys "left", "right", "bottom", "top", values in
        {"D", "N", "C"}. Default: left D, bottom C, right and top N.
    """
    if n < 1:
        raise MeshError("n must be >= 1")
    if tags is None:
        tags = {"left": "D", "bottom": "C", "right": "N", "top": "N"}
    for side in ("left", "right", "bottom", "top"):
        if tags.get(side) not in VALID_TAGS:
            raise MeshError(f"side {side!r}: tag must be one of {VALID_TAGS}")

    idx = lambda ix, iy: iy * (n + 1) + ix
    xs = np.linspace(0.0, 1.0, n + 1)
    nodes = np.array([[xs[ix], xs[iy]] for iy in range(n + 1) for ix in range(n + 1)])
    triangles = []
    for iy in range(n):
        for ix in range(n):
            v00, v10 = idx(ix, iy), idx(ix + 1, iy)
            v01, v11 = idx(ix, iy + 1), idx(ix + 1, iy + 1)
            triangles.append((v00, v10, v11))
            triangles.append((v00, v11, v01))
    edges = []
    tag_list = []
    for k in range(n):
        edges.append((idx(k, 0), idx(k + 1, 0)))
        tag_list.append(tags["bottom"])
        edges.append((idx(n, k), idx(n, k + 1)))
        tag_list.append(tags["right"])
        edges.append((idx(k + 1, n), idx(k, n)))
        tag_list.append(tags["top"])
        edges.append((idx(0, k + 1), idx(0, k)))
        tag_list.append(tags["left"])

    mesh = Mesh(
        nodes=nodes,
        triangles=np.array(triangles, dtype=np.int64),
        boundary_edges=np.array(edges, dtype=np.int64),
        edge_tags=np.array(tag_list, dtype=object),
    )
    return _validate(mesh)


def build_dof_maps(mesh: Mesh) -> DofMap:
    """Derive the free-dof sets and contact frames from the boundary tags."""
    n = mesh.n_nodes
    d_edges = mesh.edges_with_tag("D")
    dirichlet = np.unique(mesh.boundary_edges[d_edges].ravel()) if d_edges.size else np.array([], dtype=np.int64)
    mask = np.ones(n, dtype=bool)
    mask[dirichlet] = False
    free = np.flatnonzero(mask)
    node_to_free = np.full(n, -1, dtype=np.int64)
    node_to_free[free] = np.arange(free.size)

    c_edges = mesh.edges_with_tag("C")
    if c_edges.size:
        contact = np.unique(mesh.boundary_edges[c_edges].ravel())
        acc = np.zeros((n, 2))
        for e in c_edges:
            i, j = mesh.boundary_edges[e]
            acc[i] += mesh.edge_normals[e]
            acc[j] += mesh.edge_normals[e]
        nu = acc[contact]
        nu /= np.linalg.norm(nu, axis=1)[:, None]
        tau = np.column_stack([-nu[:, 1], nu[:, 0]])
    else:
        contact = np.array([], dtype=np.int64)
        nu = np.zeros((0, 2))
        tau = np.zeros((0, 2))

    return DofMap(
        n_nodes=n,
        dirichlet_nodes=dirichlet,
        scalar_free_nodes=free,
        node_to_free=node_to_free,
        contact_nodes=contact,
        contact_normal=nu,
        contact_tangent=tau,
    )


# Unit-length P1 edge mass; scale by the edge length when assembling.
EDGE_MASS = np.array([[1.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 1.0 / 3.0]])


def _scalar_stiffness_full(mesh: Mesh) -> sp.csr_matrix:
    areas, grads = triangle_geometry(mesh)
    rows, cols, vals = [], [], []
    for t, tri in enumerate(mesh.triangles):
        loc = areas[t] * grads[t].T @ grads[t]
        for a in range(3):
            for b in range(3):
                rows.append(tri[a])
                cols.append(tri[b])
                vals.append(loc[a, b])
    return sp.csr_matrix((vals, (rows, cols)), shape=(mesh.n_nodes, mesh.n_nodes))


def _boundary_mass_full(mesh: Mesh, edge_ids: np.ndarray) -> sp.csr_matrix:
    n = mesh.n_nodes
    rows, cols, vals = [], [], []
    lengths = mesh.edge_lengths()
    for e in edge_ids:
        i, j = mesh.boundary_edges[e]
        loc = lengths[e] * EDGE_MASS
        for a, ga in enumerate((i, j)):
            for b, gb in enumerate((i, j)):
                rows.append(ga)
                cols.append(gb)
                vals.append(loc[a, b])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _tangential_contact_mass_full(mesh: Mesh) -> sp.csr_matrix:
    """Vector boundary mass on the C part with per-edge tangential projection."""
    n2 = 2 * mesh.n_nodes
    rows, cols, vals = [], [], []
    lengths = mesh.edge_lengths()
    for e in mesh.edges_with_tag("C"):
        i, j = mesh.boundary_edges[e]
        nu = mesh.edge_normals[e]
        proj = np.eye(2) - np.outer(nu, nu)
        loc = np.kron(lengths[e] * EDGE_MASS, proj)
        dofs = [2 * i, 2 * i + 1, 2 * j, 2 * j + 1]
        for a in range(4):
            for b in range(4):
                rows.append(dofs[a])
                cols.append(dofs[b])
                vals.append(loc[a, b])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n2, n2))


def _power_iteration_pencil(
    bmat: sp.csr_matrix,
    kmat: sp.csr_matrix,
    seed: int,
    tol: float,
    max_iter: int,
) -> float:
    """Largest lambda of B x = lambda K x by power iteration on K^{-1} B.

    Convergence is declared on the K-weighted relative eigen-residual
    ||K^{-1} B x - lambda x||_K <= tol * lambda * ||x||_K.
    """
    if bmat.nnz == 0 or abs(bmat).max() == 0.0:
        return 0.0
    lu = spla.splu(kmat.tocsc())
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(kmat.shape[0])
    lam = 0.0
    for _ in range(max_iter):
        y = lu.solve(bmat @ x)
        kx = kmat @ x
        lam = float(x @ (bmat @ x)) / float(x @ kx)
        r = y - lam * x
        res = np.sqrt(max(float(r @ (kmat @ r)), 0.0))
        xnorm = np.sqrt(float(x @ kx))
        if lam > 0 and res <= tol * lam * xnorm:
            return float(np.sqrt(lam))
        nrm = np.sqrt(float(y @ (kmat @ y)))
        if nrm == 0.0:
            return 0.0
        x = y / nrm
    raise RuntimeError(f"trace-norm power iteration did not converge in {max_iter} iterations")


def estimate_trace_norm(
    mesh: Mesh,
    dofs: DofMap,
    seed: int = 0,
    tol: float = 1e-8,
    max_iter: int = 1000,
) -> float:
    """Discrete norm of the tangential contact trace on the vector space.

    The square of the returned value is the largest generalized eigenvalue of
    the tangentially projected boundary mass on the C part against the
    componentwise gradient inner product, both restricted to free vector dofs.
    """
    if not mesh.edges_with_tag("C").size:
        raise MeshError("estimate_trace_norm requires a nonempty contact part")
    btau = dofs.restrict_vector(_tangential_contact_mass_full(mesh))
    ks = _scalar_stiffness_full(mesh)
    kvec = dofs.restrict_vector(sp.kron(ks, sp.eye(2), format="csr"))
    return _power_iteration_pencil(btau, kvec, seed, tol, max_iter)


def estimate_scalar_trace_norm(
    mesh: Mesh,
    dofs: DofMap,
    parts: tuple[str, ...] = ("N", "C"),
    seed: int = 0,
    tol: float = 1e-8,
    max_iter: int = 1000,
) -> float:
    """Discrete norm of the scalar boundary trace onto the given parts.

    Same pencil construction as :func:`estimate_trace_norm` but for the
    scalar space with the plain (unprojected) boundary mass on the edges
    whose tag lies in ``parts``.
    """
    edge_ids = np.flatnonzero(np.isin(mesh.edge_tags, parts))
    if not edge_ids.size:
        return 0.0
    bmat = dofs.restrict_scalar(_boundary_mass_full(mesh, edge_ids))
    kmat = dofs.restrict_scalar(_scalar_stiffness_full(mesh))
    return _power_iteration_pencil(bmat, kmat, seed, tol, max_iter)
