"""Spectral discretizations of closed manifolds.

Three constructors are provided: flat tori of any dimension (real Fourier
eigenbasis on a uniform lattice), the round 2-sphere (real spherical
harmonics on a Gauss-Legendre x uniform-longitude layout), and generic
closed triangle meshes (cotangent stiffness / lumped mass eigenpairs).

Every built manifold carries quadrature nodes, strictly positive mass
weights, and a truncated eigenbasis of the Laplace-Beltrami operator that is
orthonormal with respect to those weights.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg

from .errors import CapacityError, DomainError, GeometryError, TopologyError

__all__ = [
    "SpectralManifold", "Field", "build_torus", "build_sphere", "build_mesh",
    "geodesic_distance", "pairwise_distances", "eval_modes", "mode_gradients",
    "gram_deviation", "laplace_residual",
]


@dataclass(frozen=True)
class SpectralManifold:
    """Immutable spectral discretization of a closed manifold.

    nodes hold chart coordinates: per-axis positions for the torus,
    (theta, phi) for the sphere, ambient xyz for a mesh. ``eigenvectors``
    is (N, K) with columns orthonormal in the weighted l2 inner product.
    """

    kind: str
    dim: int
    nodes: np.ndarray
    weights: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    curvature_bound: float
    injectivity_radius: float
    meta: dict = field(default_factory=dict, repr=False)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_modes(self) -> int:
        return self.eigenvalues.size

    @property
    def volume(self) -> float:
        return float(self.weights.sum())

    def project(self, values: np.ndarray) -> np.ndarray:
        """Modal coefficients <u, phi_k> of nodal values."""
        return self.eigenvectors.T @ (self.weights * np.asarray(values))

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        return self.eigenvectors @ np.asarray(coeffs)

    def summary(self) -> dict:
        out = {
            "kind": self.kind,
            "dim": self.dim,
            "volume": self.volume,
            "n_nodes": self.n_nodes,
            "n_modes": self.n_modes,
            "curvature_bound": self.curvature_bound,
            "injectivity_radius": self.injectivity_radius,
            "eigenvalues": [float(v) for v in self.eigenvalues],
        }
        for key in ("lengths", "grid", "radius", "l_max", "n_vertices",
                    "n_faces"):
            if key in self.meta:
                v = self.meta[key]
                out[key] = v.tolist() if isinstance(v, np.ndarray) else v
        return out


@dataclass
class Field:
    """Real-valued function sampled at the manifold's nodes."""

    manifold: SpectralManifold
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.manifold.n_nodes,):
            raise DomainError(
                f"field has {self.values.shape} values for "
                f"{self.manifold.n_nodes} nodes")

    def coeffs(self) -> np.ndarray:
        return self.manifold.project(self.values)


# ---------------------------------------------------------------------------
# torus

def _torus_mode_table(grid, lengths, k_max):
    """Real Fourier modes ordered by (eigenvalue, lexicographic index).

    Returns (lams, mvecs, kinds): kind 0 is the constant mode, 1 cosine,
    2 sine. Only canonical representatives (first nonzero component > 0)
    generate a cos/sin pair; |m_j| <= (g_j - 1)//2 keeps the lattice Gram
    exactly diagonal (no aliasing, no Nyquist sine).
    """
    n = len(grid)
    mhalf = [(g - 1) // 2 for g in grid]
    omega = 2.0 * np.pi / np.asarray(lengths)
    entries = []
    for flat in np.ndindex(*[2 * m + 1 for m in mhalf]):
        m = np.array([idx - mh for idx, mh in zip(flat, mhalf)])
        nz = np.nonzero(m)[0]
        if nz.size == 0:
            entries.append((0.0, tuple(m), 0))
            continue
        if m[nz[0]] < 0:
            continue  # canonical representative has positive leading entry
        lam = float(np.sum((omega * m) ** 2))
        entries.append((lam, tuple(m), 1))
        entries.append((lam, tuple(m), 2))
    entries.sort(key=lambda e: (e[0], e[1], e[2]))
    if k_max > len(entries):
        raise CapacityError(
            f"k_max={k_max} exceeds the {len(entries)} representable modes "
            f"for grid {tuple(grid)}")
    entries = entries[:k_max]
    lams = np.array([e[0] for e in entries])
    mvecs = np.array([e[1] for e in entries], dtype=np.int64).reshape(k_max, n)
    kinds = np.array([e[2] for e in entries], dtype=np.int64)
    return lams, mvecs, kinds


def _torus_eval(lengths, volume, mvecs, kinds, points):
    omega = 2.0 * np.pi / np.asarray(lengths)
    phase = points @ (mvecs * omega).T     # (P, K)
    amp = np.sqrt(2.0 / volume)
    out = np.empty_like(phase)
    out[:, kinds == 0] = 1.0 / np.sqrt(volume)
    out[:, kinds == 1] = amp * np.cos(phase[:, kinds == 1])
    out[:, kinds == 2] = amp * np.sin(phase[:, kinds == 2])
    return out


def build_torus(dim: int, lengths, grid, k_max: int) -> SpectralManifold:
    """Flat torus with side lengths ``lengths`` on a uniform lattice.

    Parameters
    ----------
    dim : intrinsic dimension (must match len(lengths) == len(grid)).
    lengths : positive side length per axis.
    grid : points per axis, each >= 4.
    k_max : number of eigenpairs to retain (ordered by eigenvalue, ties by
        lexicographic integer mode index, cosine before sine).
    """
    lengths = np.asarray(lengths, dtype=np.float64)
    grid = [int(g) for g in np.atleast_1d(grid)]
    if dim != lengths.size or dim != len(grid):
        raise DomainError("dim, lengths and grid sizes disagree")
    if np.any(lengths <= 0):
        raise DomainError("torus lengths must be positive")
    if any(g < 4 for g in grid):
        raise DomainError("need at least 4 grid points per axis")
    if k_max < 1:
        raise DomainError("k_max must be >= 1")

    axes = [np.arange(g) * (l / g) for g, l in zip(grid, lengths)]
    mesh = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([m.ravel() for m in mesh], axis=-1)
    volume = float(np.prod(lengths))
    cell = volume / np.prod(grid)
    weights = np.full(nodes.shape[0], cell)

    lams, mvecs, kinds = _torus_mode_table(grid, lengths, k_max)
    vecs = _torus_eval(lengths, volume, mvecs, kinds, nodes)

    return SpectralManifold(
        kind="torus", dim=dim, nodes=nodes, weights=weights,
        eigenvalues=lams, eigenvectors=vecs,
        curvature_bound=0.0,
        injectivity_radius=float(lengths.min()) / 2.0,
        meta={"lengths": lengths, "grid": np.array(grid),
              "modes": mvecs, "mode_kinds": kinds},
    )


# ---------------------------------------------------------------------------
# sphere

def _legendre_table(x: np.ndarray, l_max: int):
    """Fully normalized associated Legendre values and theta-derivatives.

    Returns (P, dPdtheta), each of shape (l_max+1, l_max+1, len(x)) indexed
    [l, m]; normalization makes {P[l,0], sqrt(2) P[l,m] cos/sin(m phi)} an
    orthonormal basis of L2 of the unit sphere. Condon-Shortley phase kept.
    """
    x = np.asarray(x, dtype=np.float64)
    sin_t = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    size = l_max + 1
    P = np.zeros((size, size, x.size))
    P[0, 0] = np.sqrt(1.0 / (4.0 * np.pi))
    for m in range(1, size):
        P[m, m] = -np.sqrt((2.0 * m + 1.0) / (2.0 * m)) * sin_t * P[m - 1, m - 1]
    for m in range(0, size - 1):
        P[m + 1, m] = np.sqrt(2.0 * m + 3.0) * x * P[m, m]
    for m in range(0, size):
        for l in range(m + 2, size):
            a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            c = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            P[l, m] = a * (x * P[l - 1, m] - c * P[l - 2, m])
    # sin(theta) dP/dtheta = l x P_l^m - e_lm P_{l-1}^m
    dP = np.zeros_like(P)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_sin = np.where(sin_t > 0, 1.0 / sin_t, 0.0)
    for m in range(0, size):
        for l in range(m, size):
            e = np.sqrt((l * l - m * m) * (2.0 * l + 1.0) / (2.0 * l - 1.0)) \
                if l > 0 else 0.0
            low = P[l - 1, m] if l - 1 >= m else 0.0
            dP[l, m] = (l * x * P[l, m] - e * low) * inv_sin
    return P, dP


def _sphere_mode_list(l_max):
    return [(l, m) for l in range(l_max + 1) for m in range(-l, l + 1)]


def _sphere_eval(radius, l_max, lm, theta, phi, derivatives=False):
    """Real spherical harmonic basis (and optionally gradients) at points."""
    P, dP = _legendre_table(np.cos(theta), l_max)
    sin_t = np.sin(theta)
    npts = theta.size
    K = len(lm)
    vals = np.empty((npts, K))
    grads = np.empty((npts, K, 2)) if derivatives else None
    sqrt2 = np.sqrt(2.0)
    for k, (l, m) in enumerate(lm):
        am = abs(m)
        if m == 0:
            ang, dang = np.ones(npts), np.zeros(npts)
        elif m > 0:
            ang, dang = sqrt2 * np.cos(m * phi), -m * sqrt2 * np.sin(m * phi)
        else:
            ang, dang = sqrt2 * np.sin(am * phi), am * sqrt2 * np.cos(am * phi)
        vals[:, k] = P[l, am] * ang / radius
        if derivatives:
            grads[:, k, 0] = dP[l, am] * ang / radius ** 2
            grads[:, k, 1] = P[l, am] * dang / (sin_t * radius ** 2)
    return (vals, grads) if derivatives else vals


def build_sphere(radius: float, l_max: int,
                 nodes_per_band: int | None = None) -> SpectralManifold:
    """Round 2-sphere with spherical-harmonic eigenbasis.

    Nodes are Gauss-Legendre in colatitude (l_max + 1 bands) times a uniform
    longitude circle of ``nodes_per_band`` points (default 2 l_max + 1, the
    minimum that keeps the basis Gram exactly diagonal). Eigenvalues are
    l (l + 1) / radius^2 with multiplicity 2 l + 1, ordered by (l, m).
    """
    if radius <= 0:
        raise DomainError("radius must be positive")
    if l_max < 1:
        raise DomainError("l_max must be >= 1")
    n_theta = l_max + 1
    n_phi = 2 * l_max + 1 if nodes_per_band is None else int(nodes_per_band)
    if n_phi < 2 * l_max + 1:
        raise CapacityError(
            f"nodes_per_band={n_phi} cannot integrate products of degree "
            f"{l_max} harmonics; need >= {2 * l_max + 1}")

    x, glw = np.polynomial.legendre.leggauss(n_theta)
    theta_b = np.arccos(x)
    phi_b = 2.0 * np.pi * np.arange(n_phi) / n_phi

    theta = np.repeat(theta_b, n_phi)
    phi = np.tile(phi_b, n_theta)
    weights = np.repeat(glw, n_phi) * (2.0 * np.pi / n_phi) * radius ** 2

    lm = _sphere_mode_list(l_max)
    vals = _sphere_eval(radius, l_max, lm, theta, phi)
    lams = np.array([l * (l + 1) / radius ** 2 for l, _ in lm])

    return SpectralManifold(
        kind="sphere", dim=2,
        nodes=np.stack([theta, phi], axis=-1),
        weights=weights, eigenvalues=lams, eigenvectors=vals,
        curvature_bound=1.0 / radius ** 2,
        injectivity_radius=np.pi * radius,
        meta={"radius": float(radius), "l_max": int(l_max),
              "n_theta": n_theta, "n_phi": n_phi,
              "lm": np.array(lm, dtype=np.int64)},
    )


# ---------------------------------------------------------------------------
# mesh

def _parse_off(text: str):
    lines = [ln.split("#")[0].strip() for ln in io.StringIO(text)]
    lines = [ln for ln in lines if ln]
    if not lines or lines[0].upper() != "OFF":
        raise DomainError("not an OFF file (missing OFF header)")
    nv, nf, _ = (int(tok) for tok in lines[1].split()[:3])
    verts = np.array([[float(t) for t in lines[2 + i].split()[:3]]
                      for i in range(nv)])
    faces = []
    for i in range(nf):
        toks = lines[2 + nv + i].split()
        if int(toks[0]) != 3:
            raise DomainError("only triangle faces are supported")
        faces.append([int(t) for t in toks[1:4]])
    return verts, np.array(faces, dtype=np.int64)


def _cotangent_matrices(verts, faces, min_area):
    """Cotangent stiffness and lumped barycentric mass (diagonal) matrices."""
    i0, i1, i2 = faces[:, 0], faces[:, 1], faces[:, 2]
    e0 = verts[i2] - verts[i1]
    e1 = verts[i0] - verts[i2]
    e2 = verts[i1] - verts[i0]
    normals = np.cross(e1, -e0)
    areas = 0.5 * np.linalg.norm(normals, axis=1)
    if np.any(areas < min_area):
        raise GeometryError(
            f"degenerate triangle (area < {min_area:g}) in mesh")
    # cot at vertex v opposite edge e: dot(adjacent edges)/(2*area)
    cot0 = np.einsum("ij,ij->i", -e1, e2) / (2.0 * areas)
    cot1 = np.einsum("ij,ij->i", -e2, e0) / (2.0 * areas)
    cot2 = np.einsum("ij,ij->i", -e0, e1) / (2.0 * areas)
    n = verts.shape[0]
    rows = np.concatenate([i1, i2, i2, i0, i0, i1])
    cols = np.concatenate([i2, i1, i0, i2, i1, i0])
    vals = 0.5 * np.concatenate([cot0, cot0, cot1, cot1, cot2, cot2])
    W = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    L = sp.diags(np.asarray(W.sum(axis=1)).ravel()) - W
    mass = np.zeros(n)
    np.add.at(mass, faces.ravel(), np.repeat(areas / 3.0, 3))
    return L.tocsr(), mass, areas


def _check_closed(faces, n_verts):
    edges = {}
    for f in faces:
        for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            key = (min(a, b), max(a, b))
            edges[key] = edges.get(key, 0) + 1
    bad = [e for e, c in edges.items() if c != 2]
    if bad:
        raise TopologyError(
            f"{len(bad)} edges without exactly 2 incident faces "
            f"(first: {bad[0]}); mesh is not closed")
    used = np.zeros(n_verts, dtype=bool)
    used[faces.ravel()] = True
    if not used.all():
        raise TopologyError("mesh has unreferenced vertices")


def build_mesh(off_text: str, k_max: int, curvature_bound: float,
               injectivity_radius: float | None = None,
               min_area: float = 1e-12) -> SpectralManifold:
    """Closed triangle mesh from ASCII OFF content.

    Eigenpairs solve the generalized problem L phi = lambda M phi with the
    cotangent stiffness L and lumped (barycentric) mass M; the returned
    basis is re-orthonormalized against the mass weights so the Gram
    deviation is at machine level.
    """
    verts, faces = _parse_off(off_text)
    _check_closed(faces, verts.shape[0])
    L, mass, _areas = _cotangent_matrices(verts, faces, min_area)
    n = verts.shape[0]
    if k_max > n:
        raise CapacityError(f"k_max={k_max} exceeds {n} vertices")

    if n <= 900 or k_max > n // 3:
        lams, vecs = scipy.linalg.eigh(L.toarray(), np.diag(mass))
        lams, vecs = lams[:k_max], vecs[:, :k_max]
    else:
        sigma = -1e-2 * float(np.median(L.diagonal() / mass))
        lams, vecs = scipy.sparse.linalg.eigsh(
            L, k=k_max, M=sp.diags(mass), sigma=sigma, which="LM")
        order = np.argsort(lams)
        lams, vecs = lams[order], vecs[:, order]
    lams = np.maximum(lams, 0.0)
    lams[0] = 0.0

    # enforce the mass-weighted Gram to machine precision
    G = vecs.T @ (mass[:, None] * vecs)
    R = np.linalg.cholesky((G + G.T) / 2.0)
    vecs = scipy.linalg.solve_triangular(R, vecs.T, lower=True).T
    if vecs[0, 0] < 0:
        vecs[:, 0] *= -1.0

    edge_len = np.linalg.norm(
        verts[faces[:, [1, 2, 0]]] - verts[faces], axis=2)
    inj = (3.0 * float(edge_len.mean())
           if injectivity_radius is None else float(injectivity_radius))

    return SpectralManifold(
        kind="mesh", dim=2, nodes=verts, weights=mass,
        eigenvalues=lams, eigenvectors=vecs,
        curvature_bound=float(curvature_bound),
        injectivity_radius=inj,
        meta={"faces": faces, "n_vertices": n, "n_faces": faces.shape[0],
              "stiffness": L, "mass": mass},
    )


# ---------------------------------------------------------------------------
# geometry helpers

def _torus_wrap(dx, lengths):
    return dx - lengths * np.round(dx / lengths)


def _sphere_unit(nodes):
    theta, phi = nodes[..., 0], nodes[..., 1]
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)],
                    axis=-1)


def _mesh_edge_graph(M: SpectralManifold):
    faces = M.meta["faces"]
    verts = M.nodes
    rows = np.concatenate([faces[:, 0], faces[:, 1], faces[:, 2]])
    cols = np.concatenate([faces[:, 1], faces[:, 2], faces[:, 0]])
    lens = np.linalg.norm(verts[rows] - verts[cols], axis=1)
    g = sp.csr_matrix((lens, (rows, cols)), shape=(M.n_nodes, M.n_nodes))
    return g.maximum(g.T)


def geodesic_distance(M: SpectralManifold, p: int, q: int) -> float:
    """Distance between nodes p and q.

    Exact on the torus (minimum over lattice images) and the sphere (great
    circle); on meshes this is graph-Dijkstra over edges, an upper-bound
    approximation.
    """
    if not (0 <= p < M.n_nodes and 0 <= q < M.n_nodes):
        raise DomainError("node index out of range")
    if p == q:
        return 0.0
    if M.kind == "torus":
        dx = _torus_wrap(M.nodes[p] - M.nodes[q], M.meta["lengths"])
        return float(np.linalg.norm(dx))
    if M.kind == "sphere":
        up, uq = _sphere_unit(M.nodes[[p, q]])
        return M.meta["radius"] * float(np.arccos(np.clip(up @ uq, -1, 1)))
    d = csgraph.dijkstra(_mesh_edge_graph(M), indices=[p])[0]
    return float(d[q])


def pairwise_distances(M: SpectralManifold) -> np.ndarray:
    """Full (N, N) geodesic distance matrix (see geodesic_distance)."""
    if M.kind == "torus":
        dx = M.nodes[:, None, :] - M.nodes[None, :, :]
        dx = _torus_wrap(dx, M.meta["lengths"])
        return np.sqrt(np.sum(dx * dx, axis=-1))
    if M.kind == "sphere":
        u = _sphere_unit(M.nodes)
        dots = np.clip(u @ u.T, -1.0, 1.0)
        D = M.meta["radius"] * np.arccos(dots)
        np.fill_diagonal(D, 0.0)
        return D
    return csgraph.dijkstra(_mesh_edge_graph(M))


def pairwise_displacements(M: SpectralManifold) -> np.ndarray:
    """Wrapped chart displacements (N, N, n); torus only."""
    if M.kind != "torus":
        raise DomainError("displacements only defined on the torus chart")
    dx = M.nodes[:, None, :] - M.nodes[None, :, :]
    return _torus_wrap(dx, M.meta["lengths"])


def eval_modes(M: SpectralManifold, points: np.ndarray) -> np.ndarray:
    """Evaluate the retained eigenbasis at arbitrary chart points (P, K)."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if M.kind == "torus":
        return _torus_eval(M.meta["lengths"], M.volume, M.meta["modes"],
                           M.meta["mode_kinds"], points)
    if M.kind == "sphere":
        return _sphere_eval(M.meta["radius"], M.meta["l_max"],
                            [tuple(r) for r in M.meta["lm"]],
                            points[:, 0], points[:, 1])
    raise DomainError("mesh basis cannot be evaluated off the vertex set")


def mode_gradients(M: SpectralManifold, subset=None) -> np.ndarray:
    """Riemannian gradients of the eigenbasis at the nodes, (N, K, c).

    Components are orthonormal-frame coordinates: the chart axes on the
    torus, (e_theta, e_phi) on the sphere, ambient xyz projected to the
    tangent plane (per-vertex area-weighted face gradients) on a mesh.
    ``subset`` restricts to the given mode indices.
    """
    if M.kind == "torus":
        sel = np.arange(M.n_modes) if subset is None else np.asarray(subset)
        lengths = M.meta["lengths"]
        mvecs = M.meta["modes"][sel]
        kinds = M.meta["mode_kinds"][sel]
        omega = mvecs * (2.0 * np.pi / lengths)
        phase = M.nodes @ omega.T
        amp = np.sqrt(2.0 / M.volume)
        out = np.zeros((M.n_nodes, sel.size, M.dim))
        cosm = kinds == 1
        sinm = kinds == 2
        out[:, cosm, :] = (-amp * np.sin(phase[:, cosm]))[..., None] \
            * omega[cosm][None, :, :]
        out[:, sinm, :] = (amp * np.cos(phase[:, sinm]))[..., None] \
            * omega[sinm][None, :, :]
        return out
    if M.kind == "sphere":
        lm = [tuple(r) for r in M.meta["lm"]]
        if subset is not None:
            lm = [lm[k] for k in subset]
        _, grads = _sphere_eval(M.meta["radius"], M.meta["l_max"], lm,
                                M.nodes[:, 0], M.nodes[:, 1],
                                derivatives=True)
        return grads
    out = _mesh_gradients(M)
    return out if subset is None else out[:, subset, :]


def _mesh_gradients(M: SpectralManifold) -> np.ndarray:
    """P1 face gradients of each basis column, area-averaged to vertices."""
    faces = M.meta["faces"]
    verts = M.nodes
    i0, i1, i2 = faces[:, 0], faces[:, 1], faces[:, 2]
    e0 = verts[i2] - verts[i1]
    e1 = verts[i0] - verts[i2]
    e2 = verts[i1] - verts[i0]
    normals = np.cross(e1, -e0)
    na = np.linalg.norm(normals, axis=1)
    areas = 0.5 * na
    nhat = normals / na[:, None]
    out = np.zeros((M.n_nodes, M.n_modes, 3))
    wsum = np.zeros(M.n_nodes)
    np.add.at(wsum, faces.ravel(), np.repeat(areas, 3))
    phi = M.eigenvectors
    # grad of P1 interpolant on a face: sum_v phi_v * (n x e_opp) / (2A)
    for edges, idx in ((e0, i0), (e1, i1), (e2, i2)):
        gv = np.cross(nhat, edges) / (2.0 * areas[:, None])
        contrib = gv[:, None, :] * phi[idx][:, :, None] * areas[:, None, None]
        for v_ids in (i0, i1, i2):
            np.add.at(out, v_ids, contrib)
    return out / wsum[:, None, None]


# ---------------------------------------------------------------------------
# diagnostics

def gram_deviation(M: SpectralManifold) -> float:
    """max |Phi^T diag(w) Phi - Id| over the retained basis."""
    G = M.eigenvectors.T @ (M.weights[:, None] * M.eigenvectors)
    return float(np.max(np.abs(G - np.eye(M.n_modes))))


def laplace_residual(M: SpectralManifold) -> float:
    """Worst-mode residual of the discrete Laplacian eigenproblem.

    torus: spectral (FFT) Laplacian on the lattice vs lambda * phi;
    mesh: ||L phi - lambda M phi|| / ||M phi||;
    sphere: stiffness-form check |<grad phi_j, grad phi_k>_w - lambda_k
    delta_jk| using the analytic basis gradients.
    """
    if M.kind == "torus":
        grid = tuple(M.meta["grid"])
        lengths = M.meta["lengths"]
        ks = [np.fft.fftfreq(g, d=1.0 / g) * (2.0 * np.pi / l)
              for g, l in zip(grid, lengths)]
        mult = np.zeros(grid)
        for ax, kv in enumerate(ks):
            shape = [1] * len(grid)
            shape[ax] = -1
            mult = mult + (kv ** 2).reshape(shape)
        worst = 0.0
        for k in range(M.n_modes):
            f = M.eigenvectors[:, k].reshape(grid)
            lap = np.fft.ifftn(mult * np.fft.fftn(f)).real
            num = np.max(np.abs(lap - M.eigenvalues[k] * f))
            den = max(np.max(np.abs(f)), 1e-300) * max(M.eigenvalues[k], 1.0)
            worst = max(worst, num / den)
        return worst
    if M.kind == "mesh":
        L = M.meta["stiffness"]
        mass = M.meta["mass"]
        worst = 0.0
        for k in range(M.n_modes):
            phi = M.eigenvectors[:, k]
            r = L @ phi - M.eigenvalues[k] * (mass * phi)
            worst = max(worst, np.linalg.norm(r)
                        / max(np.linalg.norm(mass * phi), 1e-300))
        return worst
    grads = mode_gradients(M)
    stiff = np.einsum("n,nkc,njc->kj", M.weights, grads, grads)
    return float(np.max(np.abs(stiff - np.diag(M.eigenvalues)))
                 / max(M.eigenvalues[-1], 1.0))
