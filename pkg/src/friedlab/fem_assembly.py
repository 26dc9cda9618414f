"""Finite-element matrices on triangle meshes.

Element families: P1 and P2 Lagrange scalars, P2 vectors (Taylor-Hood
velocity) and P1-plus-bubble vectors (MINI velocity, used only as an
independent oracle). Vector dofs are component-major: all x-components
first, then all y-components.

All element integrals go through one vectorised path. A basis function is
stored as its values and its partial derivatives with respect to the
barycentric coordinates at each quadrature point, so that
``grad phi = sum_i dphi/dL_i grad L_i`` on every affine element.
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

KINDS = ("P1_scalar", "P2_scalar", "P2_vector2", "P1B_vector2")

# 6-point degree-4 rule on the triangle; weights sum to 1 (multiply by area).
_A, _WA = 0.4459484909159648863183293, 0.223381589678011465695007
_B, _WB = 0.09157621350977074345957146, 0.1099517436553218676383263
DUNAVANT4 = (
    np.array([[_A, _A, 1 - 2 * _A], [_A, 1 - 2 * _A, _A], [1 - 2 * _A, _A, _A],
              [_B, _B, 1 - 2 * _B], [_B, 1 - 2 * _B, _B], [1 - 2 * _B, _B, _B]]),
    np.array([_WA] * 3 + [_WB] * 3),
)


def collapsed_gauss(n):
    """Conical-product Gauss rule on the triangle, exact to degree ``2n - 2``.

    Returns barycentric points and weights summing to 1.
    """
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1)
    w = 0.5 * w
    u, v = np.meshgrid(x, x, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    s = u.ravel()
    t = (v * (1 - u)).ravel()
    weights = 2.0 * (wu * wv * (1 - u)).ravel()
    return np.column_stack([1 - s - t, s, t]), weights


EDGE_GAUSS3 = (
    0.5 * (1 + np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)])),
    np.array([5.0, 8.0, 5.0]) / 18.0,
)


def _p1(lam):
    vals = lam.copy()
    d = np.broadcast_to(np.eye(3), (len(lam), 3, 3)).copy()
    return vals, d


def _p2(lam):
    L0, L1, L2 = lam.T
    vals = np.column_stack([L0 * (2 * L0 - 1), L1 * (2 * L1 - 1), L2 * (2 * L2 - 1),
                            4 * L0 * L1, 4 * L1 * L2, 4 * L2 * L0])
    z = np.zeros_like(L0)
    d = np.stack([
        np.column_stack([4 * L0 - 1, z, z]),
        np.column_stack([z, 4 * L1 - 1, z]),
        np.column_stack([z, z, 4 * L2 - 1]),
        np.column_stack([4 * L1, 4 * L0, z]),
        np.column_stack([z, 4 * L2, 4 * L1]),
        np.column_stack([4 * L2, z, 4 * L0]),
    ], axis=1)
    return vals, d


def _p1b(lam):
    v1, d1 = _p1(lam)
    L0, L1, L2 = lam.T
    vb = 27 * L0 * L1 * L2
    db = 27 * np.column_stack([L1 * L2, L0 * L2, L0 * L1])
    return np.column_stack([v1, vb]), np.concatenate([d1, db[:, None, :]], axis=1)


def reference_basis(family, lam):
    """Values ``(nq, nb)`` and barycentric derivatives ``(nq, nb, 3)`` at ``lam``."""
    lam = np.atleast_2d(np.asarray(lam, dtype=float))
    return {"P1": _p1, "P2": _p2, "P1B": _p1b}[family](lam)


@dataclass(frozen=True, eq=False)
class DofMap:
    """Degree-of-freedom numbering for one element family on one mesh.

    Scalar nodes are the vertices, then edge midpoints in edge-id order (P2)
    or triangle centroids (P1B bubbles). Vector dof ``c * n_nodes + node``
    is component ``c`` at ``node``.
    """

    mesh: object
    kind: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown dof kind {self.kind!r}; expected one of {KINDS}")

    @property
    def family(self):
        return self.kind.split("_")[0]

    @property
    def ncomp(self):
        return 2 if self.kind.endswith("vector2") else 1

    @cached_property
    def n_nodes(self):
        m = self.mesh
        if self.family == "P1":
            return m.n_vertices
        if self.family == "P2":
            return m.n_vertices + len(m.edges)
        return m.n_vertices + m.n_triangles

    @property
    def ndof(self):
        return self.ncomp * self.n_nodes

    @cached_property
    def element_nodes(self):
        """Scalar node ids per triangle, in reference-basis order."""
        m = self.mesh
        if self.family == "P1":
            return m.triangles
        if self.family == "P2":
            return np.column_stack([m.triangles, m.n_vertices + m.triangle_edges])
        return np.column_stack([m.triangles, m.n_vertices + np.arange(m.n_triangles)])

    @cached_property
    def element_dofs(self):
        en = self.element_nodes
        return np.concatenate([en + c * self.n_nodes for c in range(self.ncomp)], axis=1)

    @cached_property
    def node_coords(self):
        m = self.mesh
        if self.family == "P1":
            return m.vertices
        if self.family == "P2":
            mid = 0.5 * (m.vertices[m.edges[:, 0]] + m.vertices[m.edges[:, 1]])
        else:
            mid = m.vertices[m.triangles].mean(axis=1)
        return np.vstack([m.vertices, mid])

    @cached_property
    def boundary_nodes(self):
        m = self.mesh
        nodes = m.boundary_vertices
        if self.family == "P2":
            nodes = np.concatenate([nodes, m.n_vertices + m.boundary_edge_ids])
        return np.sort(nodes)

    @cached_property
    def interior_nodes(self):
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[self.boundary_nodes] = False
        return np.flatnonzero(mask)

    def _lift(self, nodes):
        return np.concatenate([nodes + c * self.n_nodes for c in range(self.ncomp)])

    @cached_property
    def boundary_dofs(self):
        return self._lift(self.boundary_nodes)

    @cached_property
    def interior_dofs(self):
        return self._lift(self.interior_nodes)

    def interpolate(self, func):
        """Nodal interpolant of ``func(x, y)``; vector kinds expect shape (2, npts)."""
        X = self.node_coords
        vals = np.asarray(func(X[:, 0], X[:, 1]), dtype=float)
        vals = np.broadcast_to(vals, (self.ncomp, len(X)) if self.ncomp > 1 else (len(X),)).copy()
        vals = vals.reshape(self.ncomp, -1)
        if self.family == "P1B":
            nv = self.mesh.n_vertices
            vals[:, nv:] -= vals[:, self.mesh.triangles].mean(axis=2)
        return vals.ravel()


def _geometry(mesh):
    p = mesh.vertices[mesh.triangles]
    area = mesh.signed_areas
    x, y = p[..., 0], p[..., 1]
    gx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    gy = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    grad = np.stack([gx, gy], axis=2) / (2 * area)[:, None, None]
    return area, grad


def _rule(family, quadrature):
    if quadrature is not None:
        return quadrature
    return collapsed_gauss(4) if family == "P1B" else DUNAVANT4


def _tabulate(mesh, family, quadrature=None):
    """Areas, weights, basis values (nq, nb) and gradients (nt, nq, nb, 2)."""
    lam, w = _rule(family, quadrature)
    vals, dvals = reference_basis(family, lam)
    area, gl = _geometry(mesh)
    grads = np.einsum("qbi,tid->tqbd", dvals, gl)
    return area, w, vals, grads


def _scatter(rows, cols, local, shape):
    r = np.broadcast_to(rows[:, :, None], local.shape)
    c = np.broadcast_to(cols[:, None, :], local.shape)
    A = sp.coo_matrix((local.ravel(), (r.ravel(), c.ravel())), shape=shape)
    return A.tocsr()


def _vectorize(dofmap, scalar):
    if dofmap.ncomp == 1:
        return scalar
    return sp.block_diag([scalar] * dofmap.ncomp, format="csr")


def _scalar_stiffness(dofmap, quadrature=None):
    area, w, _, g = _tabulate(dofmap.mesh, dofmap.family, quadrature)
    local = np.einsum("q,t,tqad,tqbd->tab", w, area, g, g)
    en = dofmap.element_nodes
    return _scatter(en, en, local, (dofmap.n_nodes,) * 2)


def _scalar_mass(dofmap, quadrature=None):
    area, w, v, _ = _tabulate(dofmap.mesh, dofmap.family, quadrature)
    ref = np.einsum("q,qa,qb->ab", w, v, v)
    local = area[:, None, None] * ref
    en = dofmap.element_nodes
    return _scatter(en, en, local, (dofmap.n_nodes,) * 2)


def stiffness(mesh, dofmap, quadrature=None):
    """Galerkin matrix of the Dirichlet form ``int grad u : grad v``."""
    _check(mesh, dofmap)
    return _vectorize(dofmap, _scalar_stiffness(dofmap, quadrature))


def mass(mesh, dofmap, quadrature=None):
    """Galerkin matrix of the L2 inner product."""
    _check(mesh, dofmap)
    return _vectorize(dofmap, _scalar_mass(dofmap, quadrature))


def transpose_gradient_form(mesh, dofmap, quadrature=None):
    """Galerkin matrix of ``int (grad u)^T : grad v``.

    For ``u = phi_a e_p`` and ``v = phi_b e_q`` the integrand reduces to
    ``d_q phi_a d_p phi_b``, which fills block ``(q, p)``.
    """
    _check(mesh, dofmap)
    if dofmap.ncomp != 2:
        raise ValueError("transpose_gradient_form needs a vector dofmap")
    area, w, _, g = _tabulate(mesh, dofmap.family, quadrature)
    en = dofmap.element_nodes
    n = dofmap.n_nodes
    blocks = [[None, None], [None, None]]
    for q in range(2):
        for p in range(2):
            # row v = phi_b e_q, column u = phi_a e_p
            local = np.einsum("q,t,tqb,tqa->tba", w, area, g[..., p], g[..., q])
            blocks[q][p] = _scatter(en, en, local, (n, n))
    return sp.bmat(blocks, format="csr")


def divergence(mesh, dofmap_u, dofmap_p, quadrature=None):
    """Coupling ``B[q, u] = int q div u`` with P1 pressure rows."""
    _check(mesh, dofmap_u)
    _check(mesh, dofmap_p)
    if dofmap_u.ncomp != 2 or dofmap_p.kind != "P1_scalar":
        raise ValueError("divergence needs a vector velocity and a P1 pressure dofmap")
    lam, w = _rule(dofmap_u.family, quadrature)
    area, _, _, g = _tabulate(mesh, dofmap_u.family, (lam, w))
    qv, _ = reference_basis("P1", lam)
    en_u, en_p = dofmap_u.element_nodes, dofmap_p.element_nodes
    n = dofmap_u.n_nodes
    blocks = []
    for p in range(2):
        local = np.einsum("q,t,qc,tqa->tca", w, area, qv, g[..., p])
        blocks.append(_scatter(en_p, en_u, local, (dofmap_p.n_nodes, n)))
    return sp.hstack(blocks, format="csr")


def _edge_mass(family):
    """Reference 1D mass on the boundary nodes of one edge, per unit length.

    Local order is (start, end) for P1 and (start, end, midpoint) for P2.
    """
    if family == "P2":
        return np.array([[4.0, -1.0, 2.0], [-1.0, 4.0, 2.0], [2.0, 2.0, 16.0]]) / 30.0
    return np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0


def edge_shape(family, s):
    """1D trace basis on an edge at parameter ``s`` in [0, 1]."""
    s = np.asarray(s, dtype=float)
    if family == "P2":
        return np.stack([(1 - s) * (1 - 2 * s), s * (2 * s - 1), 4 * s * (1 - s)], axis=-1)
    return np.stack([1 - s, s], axis=-1)


def boundary_edge_nodes(dofmap):
    """Positions (into ``boundary_nodes``) of each boundary edge's trace nodes."""
    m = dofmap.mesh
    pos = -np.ones(dofmap.n_nodes, dtype=np.int64)
    pos[dofmap.boundary_nodes] = np.arange(len(dofmap.boundary_nodes))
    nodes = [m.boundary_edges[:, 0], m.boundary_edges[:, 1]]
    if dofmap.family == "P2":
        nodes.append(m.n_vertices + m.boundary_edge_ids)
    return pos[np.column_stack(nodes)]


def boundary_mass_and_trace(mesh, dofmap):
    """Trace selection ``J``, boundary Gram ``Mb`` and normal-flux functional.

    ``J`` is ``k x ndof`` with a single unit entry per boundary dof, in
    ``dofmap.boundary_dofs`` order. ``nu_flux`` satisfies
    ``nu_flux @ phi = int phi . nu`` for boundary vector fields ``phi`` and
    is empty for scalar dofmaps.
    """
    _check(mesh, dofmap)
    bd = dofmap.boundary_dofs
    k = len(bd)
    J = sp.csr_matrix((np.ones(k), (np.arange(k), bd)), shape=(k, dofmap.ndof))
    fam = "P2" if dofmap.family == "P2" else "P1"
    local_nodes = boundary_edge_nodes(dofmap)
    L = mesh.edge_lengths
    local = L[:, None, None] * _edge_mass(fam)
    nb = len(dofmap.boundary_nodes)
    Mb = _vectorize(dofmap, _scatter(local_nodes, local_nodes, local, (nb, nb)))
    if dofmap.ncomp == 1:
        return J, Mb, np.zeros(0)
    s, ws = EDGE_GAUSS3
    integrals = L[:, None] * (ws @ edge_shape(fam, s))[None, :]
    flux = np.zeros(2 * nb)
    for c in range(2):
        np.add.at(flux, c * nb + local_nodes, integrals * mesh.normals[:, c][:, None])
    return J, Mb, flux


def nu_interpolant(mesh, dofmap):
    """Boundary vector field interpolating the outward normal.

    At a corner the value ``v`` solves ``n1 . v = n2 . v = 1`` for the two
    adjacent edge normals, so ``phi . nu = 1`` on every edge.
    """
    nodes = dofmap.boundary_nodes
    nb = len(nodes)
    pos = -np.ones(dofmap.n_nodes, dtype=np.int64)
    pos[nodes] = np.arange(nb)
    val = np.zeros((nb, 2))
    n = mesh.normals
    out_edge = {int(a): i for i, (a, _) in enumerate(mesh.boundary_edges)}
    in_edge = {int(b): i for i, (_, b) in enumerate(mesh.boundary_edges)}
    for v in mesh.boundary_vertices:
        n1, n2 = n[in_edge[int(v)]], n[out_edge[int(v)]]
        if abs(n1[0] * n2[1] - n1[1] * n2[0]) < 1e-12:
            val[pos[v]] = n1
        else:
            val[pos[v]] = np.linalg.solve(np.array([n1, n2]), np.ones(2))
    if dofmap.family == "P2":
        val[pos[mesh.n_vertices + mesh.boundary_edge_ids]] = n
    return val.T.ravel()


def prolongation(dofmap_coarse, dofmap_fine):
    """Interpolation matrix from a mesh to its red refinement.

    Assumes ``dofmap_fine.mesh == refine(dofmap_coarse.mesh)``, whose
    children of triangle ``t`` are ``4t .. 4t+3``. Exact for the coarse
    space since it is nested in the fine one.
    """
    fam = dofmap_coarse.family
    if dofmap_fine.kind != dofmap_coarse.kind or fam == "P1B":
        raise ValueError("prolongation needs matching nodal Lagrange dofmaps")
    v = np.eye(3)
    m01, m12, m20 = (v[0] + v[1]) / 2, (v[1] + v[2]) / 2, (v[2] + v[0]) / 2
    children = [np.array(c) for c in ([v[0], m01, m20], [m01, v[1], m12],
                                      [m20, m12, v[2]], [m01, m12, m20])]
    ref_nodes = np.vstack([np.eye(3), [m01, m12, m20]]) if fam == "P2" else np.eye(3)
    nt = dofmap_coarse.mesh.n_triangles
    en_c = dofmap_coarse.element_nodes
    en_f = dofmap_fine.element_nodes.reshape(nt, 4, -1)
    rows, cols, vals = [], [], []
    for c, corners in enumerate(children):
        lam = ref_nodes @ corners  # child's nodes in parent barycentrics
        phi, _ = reference_basis(fam, lam)
        rows.append(np.broadcast_to(en_f[:, c, :, None], (nt,) + phi.shape))
        cols.append(np.broadcast_to(en_c[:, None, :], (nt,) + phi.shape))
        vals.append(np.broadcast_to(phi, (nt,) + phi.shape))
    rows = np.concatenate([r.ravel() for r in rows])
    cols = np.concatenate([c.ravel() for c in cols])
    vals = np.concatenate([x.ravel() for x in vals])
    # every fine node is visited several times with identical values; keep one
    _, first = np.unique(rows * dofmap_coarse.n_nodes + cols, return_index=True)
    keep = first[np.abs(vals[first]) > 1e-14]
    P = sp.csr_matrix((vals[keep], (rows[keep], cols[keep])),
                      shape=(dofmap_fine.n_nodes, dofmap_coarse.n_nodes))
    return _vectorize(dofmap_coarse, P)


def _check(mesh, dofmap):
    if dofmap.mesh is not mesh:
        raise ValueError("dofmap was built on a different mesh")
