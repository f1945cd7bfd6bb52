"""P1 finite-element assembly for the coupled interior/boundary form.

Builds the sparse matrices realizing

    form(u, v)  =  integral_domain grad(u) . conj(grad(v))
                 + integral_boundary beta * u * conj(v)

together with the Gram matrix G = M + B of the product inner product
(interior L2 plus boundary L2), and the discrete Green-formula normal
derivative. All integrals are exact for P1 data: element stiffness by the
gradient formula, element mass by exact quadratic quadrature (or lumped
row sums), boundary mass by exact 1D quadrature with beta constant per edge.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .linalg import CsrMatrix, lu_factor

__all__ = [
    "BoundaryCoefficient",
    "OperatorBundle",
    "ProductState",
    "BoundaryEdgeInfo",
    "assemble",
    "shifted_form_matrix",
    "discrete_normal_derivative",
    "interior_load",
    "boundary_load",
    "nodal_interior_values",
    "nodal_boundary_values",
    "integration_errors",
]


class BoundaryCoefficient:
    """Complex boundary coefficient, piecewise constant per boundary edge.

    An essentially-bounded coefficient has no pointwise structure worth
    resolving; one value per edge keeps every boundary integral exact and
    matches labeling of the boundary by arcs.
    """

    def __init__(self, mesh, values):
        values = np.asarray(values, dtype=complex)
        if values.shape != (len(mesh.boundary_edges),):
            raise ValueError(
                f"need one value per boundary edge "
                f"({len(mesh.boundary_edges)}), got shape {values.shape}"
            )
        if not np.all(np.isfinite(values.real) & np.isfinite(values.imag)):
            raise ValueError("boundary coefficient values must be finite")
        self.values = values
        self.values.flags.writeable = False

    @classmethod
    def constant(cls, mesh, z):
        return cls(mesh, np.full(len(mesh.boundary_edges), complex(z)))

    @classmethod
    def from_arc_values(cls, mesh, arc_values):
        """Per-arc constants, e.g. {"bottom": 1+2j, "top": 0}."""
        known = set(mesh.arc_labels())
        unknown = set(arc_values) - known
        if unknown:
            raise ValueError(f"unknown arc labels {sorted(unknown)}; "
                             f"mesh has {sorted(known)}")
        missing = known - set(arc_values)
        if missing:
            raise ValueError(f"no value for arcs {sorted(missing)}")
        vals = np.array([complex(arc_values[lab]) for lab in mesh.boundary_labels])
        return cls(mesh, vals)

    @classmethod
    def from_function(cls, mesh, fn):
        """Project a pointwise coefficient by edge-midpoint sampling."""
        mid = mesh.boundary_midpoints()
        return cls(mesh, np.asarray(fn(mid[:, 0], mid[:, 1]), dtype=complex))

    @property
    def ess_inf_re(self):
        return float(self.values.real.min())

    @property
    def sup_abs_im(self):
        return float(np.abs(self.values.imag).max())

    @property
    def sup_abs(self):
        return float(np.abs(self.values).max())

    def is_real(self, tol=0.0):
        return np.abs(self.values.imag).max() <= tol

    def describe(self):
        v = self.values
        if np.all(v == v[0]):
            z = v[0]
            return f"constant {z.real:g}{z.imag:+g}i"
        return (f"per-edge (Re in [{v.real.min():g}, {v.real.max():g}], "
                f"|Im| <= {np.abs(v.imag).max():g})")


@dataclass(frozen=True)
class ProductState:
    """Coefficient vector of a discrete interior/boundary pair.

    In the conforming discretization the boundary component is literally the
    restriction of the nodal vector to boundary nodes, so trace consistency
    holds by construction.
    """

    values: np.ndarray
    boundary_nodes: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values",
                           np.asarray(self.values, dtype=complex))
        self.values.flags.writeable = False

    @property
    def trace(self):
        """Boundary component: the nodal values at boundary nodes."""
        return self.values[self.boundary_nodes]

    def with_values(self, values):
        return ProductState(values, self.boundary_nodes)

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class BoundaryEdgeInfo:
    index: int
    label: str
    normal: np.ndarray
    length: float


def _p1_matrices(mesh):
    """Element-wise stiffness and mass scatter arrays (COO triplets)."""
    tris = mesh.triangles
    verts = mesh.vertices
    p0, p1, p2 = (verts[tris[:, k]] for k in range(3))
    # edge vectors opposite each local vertex
    e = np.stack((p2 - p1, p0 - p2, p1 - p0), axis=1)  # (m, 3, 2)
    areas = mesh.areas

    rows, cols, k_vals, m_vals = [], [], [], []
    for i in range(3):
        for j in range(3):
            rows.append(tris[:, i])
            cols.append(tris[:, j])
            k_vals.append((e[:, i] * e[:, j]).sum(axis=1) / (4.0 * areas))
            m_vals.append(areas * ((2.0 if i == j else 1.0) / 12.0))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    return rows, cols, np.concatenate(k_vals), np.concatenate(m_vals)


def _boundary_mass_triplets(mesh, weights):
    """COO triplets of the boundary-edge mass, weighted edge-wise.

    Consistent variant: per edge of length L the 2x2 block (L/6) [[2,1],[1,2]].
    """
    edges = mesh.boundary_edges
    lengths = mesh.boundary_lengths()
    w = weights * lengths
    a, b = edges[:, 0], edges[:, 1]
    rows = np.concatenate((a, b, a, b))
    cols = np.concatenate((a, b, b, a))
    vals = np.concatenate((w / 3.0, w / 3.0, w / 6.0, w / 6.0))
    return rows, cols, vals


def _lump(rows, cols, vals, n):
    """Row-sum lumping of COO triplets onto the diagonal."""
    diag = np.zeros(n, dtype=vals.dtype)
    np.add.at(diag, rows, vals)
    return CsrMatrix.from_coo(np.arange(n), np.arange(n), diag, (n, n))


class OperatorBundle:
    """Assembled sparse matrices of the coupled form.

    Attributes
    ----------
    K : CsrMatrix
        Stiffness (constants in its kernel).
    M_consistent, M_lumped : CsrMatrix
        Interior mass, both variants.
    B_consistent, B_lumped : CsrMatrix
        Boundary mass, both variants (supported on boundary nodes).
    B_beta : CsrMatrix
        beta-weighted boundary mass, built from the active variant.
    lumped : bool
        Which mass variants M, B, G and B_beta use.
    """

    def __init__(self, mesh, beta, lumped, K, M_consistent, M_lumped,
                 B_consistent, B_lumped, B_beta):
        self.mesh = mesh
        self.beta = beta
        self.lumped = lumped
        self.K = K
        self.M_consistent = M_consistent
        self.M_lumped = M_lumped
        self.B_consistent = B_consistent
        self.B_lumped = B_lumped
        self.B_beta = B_beta
        self.boundary_nodes = mesh.boundary_nodes
        n = mesh.n_vertices
        index_map = -np.ones(n, dtype=np.int64)
        index_map[self.boundary_nodes] = np.arange(len(self.boundary_nodes))
        self.boundary_index_map = index_map

    @property
    def n_total(self):
        return self.mesh.n_vertices

    @property
    def M(self):
        return self.M_lumped if self.lumped else self.M_consistent

    @property
    def B(self):
        return self.B_lumped if self.lumped else self.B_consistent

    @cached_property
    def G(self):
        """Gram matrix of the product inner product: G = M + B."""
        return self.M + self.B

    @cached_property
    def h1_gram(self):
        """Gram matrix of the interior H1 inner product: K + M."""
        return self.K + self.M

    @cached_property
    def B_gamma(self):
        """Boundary-node block of the active boundary mass."""
        return self.B.submatrix(self.boundary_nodes, self.boundary_nodes)

    @cached_property
    def _B_gamma_lu(self):
        return lu_factor(self.B_gamma.astype(complex))

    def state(self, values):
        values = np.asarray(values, dtype=complex)
        if values.shape != (self.n_total,):
            raise ValueError(f"state needs {self.n_total} nodal values")
        return ProductState(values, self.boundary_nodes)

    def constant_state(self, c=1.0):
        return self.state(np.full(self.n_total, complex(c)))

    def random_state(self, rng, kind="complex"):
        n = self.n_total
        if kind == "complex":
            vals = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        elif kind == "real":
            vals = rng.standard_normal(n).astype(complex)
        elif kind == "rademacher":
            vals = rng.choice([-1.0, 1.0], size=n).astype(complex)
        elif kind == "phase":
            vals = np.exp(2j * np.pi * rng.random(n))
        else:
            raise ValueError(f"unknown sample kind '{kind}'")
        return self.state(vals)

    # -- discrete norms pulled back through the nodal basis ------------------

    def mass(self, values):
        """Total product-space mass: ones^T G u."""
        return complex(np.sum(self.G @ np.asarray(values)))

    def sup_norm(self, values):
        return float(np.abs(np.asarray(values)).max())

    def h1_norm(self, values):
        v = np.asarray(values)
        return float(np.sqrt(max(np.vdot(v, self.h1_gram @ v).real, 0.0)))

    def g_norm(self, values):
        v = np.asarray(values)
        return float(np.sqrt(max(np.vdot(v, self.G @ v).real, 0.0)))

    def boundary_lp_norm(self, trace_values, p):
        """Lumped boundary L^p norm of values given on boundary nodes."""
        w = self.B_lumped.diagonal().real[self.boundary_nodes]
        if np.isinf(p):
            return float(np.abs(trace_values).max())
        return float((w @ np.abs(trace_values) ** p) ** (1.0 / p))

    def interior_lp_norm(self, values, p):
        """Lumped interior L^p norm of a nodal vector."""
        w = self.M_lumped.diagonal().real
        if np.isinf(p):
            return float(np.abs(values).max())
        return float((w @ np.abs(values) ** p) ** (1.0 / p))

    def edge_info(self, e):
        return BoundaryEdgeInfo(
            index=int(e),
            label=self.mesh.boundary_labels[e],
            normal=self.mesh.boundary_normals()[e],
            length=float(self.mesh.boundary_lengths()[e]),
        )


def assemble(mesh, beta=None, lumped=False):
    """Assemble the operator bundle for a mesh and boundary coefficient.

    ``beta`` may be a BoundaryCoefficient, a complex constant, or None
    (meaning 0). ``lumped`` selects row-sum lumped interior and boundary
    masses as the active variants; with a non-obtuse mesh this is the
    standard sufficient condition for the discrete maximum principle.
    """
    if beta is None:
        beta = BoundaryCoefficient.constant(mesh, 0.0)
    elif np.isscalar(beta):
        beta = BoundaryCoefficient.constant(mesh, beta)
    elif not isinstance(beta, BoundaryCoefficient):
        raise ValueError("beta must be a BoundaryCoefficient, scalar, or None")
    if beta.values.shape != (len(mesh.boundary_edges),):
        raise ValueError("beta size does not match the mesh boundary")

    n = mesh.n_vertices
    rows, cols, k_vals, m_vals = _p1_matrices(mesh)
    K = CsrMatrix.from_coo(rows, cols, k_vals, (n, n))
    M_cons = CsrMatrix.from_coo(rows, cols, m_vals, (n, n))
    M_lump = _lump(rows, cols, m_vals, n)

    br, bc, bv = _boundary_mass_triplets(mesh, np.ones(len(mesh.boundary_edges)))
    B_cons = CsrMatrix.from_coo(br, bc, bv, (n, n))
    B_lump = _lump(br, bc, bv, n)

    wr, wc, wv = _boundary_mass_triplets(mesh, beta.values)
    if lumped:
        B_beta = _lump(wr, wc, wv, n)
    else:
        B_beta = CsrMatrix.from_coo(wr, wc, wv, (n, n))

    return OperatorBundle(mesh=mesh, beta=beta, lumped=lumped, K=K,
                          M_consistent=M_cons, M_lumped=M_lump,
                          B_consistent=B_cons, B_lumped=B_lump, B_beta=B_beta)


def shifted_form_matrix(bundle, omega):
    """Matrix of the shifted form: S_omega = K + B_beta + omega (M + B)."""
    omega = float(omega)
    S = bundle.K.astype(complex) + bundle.B_beta
    if omega != 0.0:
        S = S + omega * bundle.G.astype(complex)
    return S


def discrete_normal_derivative(bundle, state, laplacian_values):
    """Green-formula flux of a nodal function.

    Given nodal u and the nodal representation f of its Laplacian, returns
    the boundary nodal vector h solving

        B_gamma h = (K u + M f) restricted to boundary nodes,

    which is the weak flux: pairing both sides with boundary test functions
    reproduces the defining integral identity exactly.
    """
    if len(bundle.boundary_nodes) == 0:
        raise RuntimeError("mesh has no boundary nodes; flux is undefined")
    u = state.values if isinstance(state, ProductState) else np.asarray(state)
    f = np.asarray(laplacian_values, dtype=complex)
    residual = bundle.K.astype(complex) @ u + bundle.M.astype(complex) @ f
    return bundle._B_gamma_lu.solve(residual[bundle.boundary_nodes])


# -- load vectors ------------------------------------------------------------

_GAUSS2 = (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0))


def interior_load(mesh, f):
    """Load vector integral_domain f conj(phi_i) by edge-midpoint quadrature.

    The three-midpoint rule is exact for quadratic f, which removes
    quadrature error from manufactured-solution studies.
    """
    tris = mesh.triangles
    verts = mesh.vertices
    p0, p1, p2 = (verts[tris[:, k]] for k in range(3))
    mids = ((p0 + p1) / 2, (p1 + p2) / 2, (p2 + p0) / 2)
    fm = [np.asarray(f(m[:, 0], m[:, 1]), dtype=complex) for m in mids]
    load = np.zeros(mesh.n_vertices, dtype=complex)
    w = mesh.areas / 6.0
    # basis value at an edge midpoint is 1/2 on the edge's two vertices
    contrib = {0: (0, 2), 1: (0, 1), 2: (1, 2)}
    for local, (ma, mb) in contrib.items():
        np.add.at(load, tris[:, local], w * (fm[ma] + fm[mb]))
    return load


def boundary_load(mesh, g):
    """Load vector integral_boundary g conj(phi_i) by 2-point Gauss per edge.

    ``g`` is called per edge as ``g(x, y, edge)`` with a BoundaryEdgeInfo, so
    data involving the outward normal or per-arc coefficients is integrated
    on the edge where those are well defined (no corner ambiguity).
    """
    load = np.zeros(mesh.n_vertices, dtype=complex)
    normals = mesh.boundary_normals()
    lengths = mesh.boundary_lengths()
    verts = mesh.vertices
    for e, (a, b) in enumerate(mesh.boundary_edges):
        info = BoundaryEdgeInfo(index=e, label=mesh.boundary_labels[e],
                                normal=normals[e], length=float(lengths[e]))
        pa, pb = verts[a], verts[b]
        for t in _GAUSS2:
            x, y = pa + t * (pb - pa)
            val = complex(g(x, y, info))
            load[a] += 0.5 * lengths[e] * (1.0 - t) * val
            load[b] += 0.5 * lengths[e] * t * val
    return load


def nodal_interior_values(mesh, f):
    """Sample a function at all mesh vertices."""
    v = mesh.vertices
    return np.asarray(f(v[:, 0], v[:, 1]), dtype=complex)


# 6-point Dunavant rule, exact for quartics: barycentric coordinates and weights
_DUNAVANT4 = []
for _w, _a in ((0.223381589678011, 0.445948490915965),
               (0.109951743655322, 0.091576213509771)):
    _b = 1.0 - 2.0 * _a
    _DUNAVANT4 += [(_w, (_b, _a, _a)), (_w, (_a, _b, _a)), (_w, (_a, _a, _b))]


def integration_errors(mesh, values, exact, exact_grad):
    """L2 and H1 errors of a P1 nodal field against a closed-form function.

    Integrates |u_h - u|^2 with a degree-4 triangle rule and the gradient
    mismatch |grad u_h - grad u|^2 likewise (grad u_h is constant per
    triangle). Returns (l2_error, h1_error) with the full H1 norm.
    """
    values = np.asarray(values, dtype=complex)
    tris = mesh.triangles
    verts = mesh.vertices
    p0, p1, p2 = (verts[tris[:, k]] for k in range(3))
    areas = mesh.areas

    # P1 gradients: sum_i u_i * rot(e_i) / (2A), e_i the opposite edge vector
    e = np.stack((p2 - p1, p0 - p2, p1 - p0), axis=1)
    rot = np.stack((-e[:, :, 1], e[:, :, 0]), axis=2)  # (m, 3, 2)
    u_loc = values[tris]                               # (m, 3)
    grad_h = (u_loc[:, :, None] * rot).sum(axis=1) / (2.0 * areas)[:, None]

    l2_sq = 0.0
    semi_sq = 0.0
    for w, (l0, l1, l2_) in _DUNAVANT4:
        pts = l0 * p0 + l1 * p1 + l2_ * p2
        x, y = pts[:, 0], pts[:, 1]
        u_ex = np.asarray(exact(x, y), dtype=complex)
        u_h = l0 * u_loc[:, 0] + l1 * u_loc[:, 1] + l2_ * u_loc[:, 2]
        l2_sq += w * float(np.sum(areas * np.abs(u_h - u_ex) ** 2))
        gx, gy = exact_grad(x, y)
        dgx = grad_h[:, 0] - np.asarray(gx, dtype=complex)
        dgy = grad_h[:, 1] - np.asarray(gy, dtype=complex)
        semi_sq += w * float(np.sum(areas * (np.abs(dgx) ** 2
                                             + np.abs(dgy) ** 2)))
    return np.sqrt(l2_sq), np.sqrt(l2_sq + semi_sq)


def nodal_boundary_values(bundle, g):
    """Sample edge-aware boundary data at boundary nodes.

    Values at nodes shared by two edges (corners, arc joints) are the
    average of the two adjacent per-edge values, mirroring how the flux is
    quadrature-averaged there.
    """
    mesh = bundle.mesh
    normals = mesh.boundary_normals()
    lengths = mesh.boundary_lengths()
    acc = np.zeros(mesh.n_vertices, dtype=complex)
    cnt = np.zeros(mesh.n_vertices)
    verts = mesh.vertices
    for e, (a, b) in enumerate(mesh.boundary_edges):
        info = BoundaryEdgeInfo(index=e, label=mesh.boundary_labels[e],
                                normal=normals[e], length=float(lengths[e]))
        for node in (a, b):
            acc[node] += complex(g(verts[node, 0], verts[node, 1], info))
            cnt[node] += 1.0
    nodes = bundle.boundary_nodes
    return acc[nodes] / cnt[nodes]
