"""Curvature estimation on discrete immersions.

The full normal-bundle-valued second fundamental form is recovered by a
moving-least-squares quadratic fit of the neighborhood in a per-vertex
orthonormal frame; this is the only discretization that works uniformly in
arbitrary codimension.  Covariant derivatives come from transporting the
neighbor tensors to the center frame by the smallest rotation between
tangent planes and fitting a linear model, which keeps frame twist out of
the residuals.

Frames are gauge-dependent; every exported quantity is either a
gauge-invariant scalar field or an ambient vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    FitIllConditioned,
    FitUnderdetermined,
    NeighborhoodRankDeficient,
    UnsupportedDimension,
)
from .mesh import DiscreteImmersion, MeshTopology, angle_defects, measure_weights

#: conditioning threshold on the normal equations of the local fits
CONDITION_LIMIT = 1e12

DEFAULT_RING = 2


@dataclass
class FrameField:
    """Per-vertex orthonormal frames: tangent (V, n, D) and normal (V, d, D)."""

    tangent: np.ndarray
    normal: np.ndarray


@dataclass
class FundamentalForms:
    """Second fundamental form and derived curvature fields.

    ``h`` are the components (V, d, n, n) in the frame (the metric is the
    identity there), ``mean_curvature`` the ambient H vectors, ``aring`` the
    tracefree part.  Scalars carry 1/length^2 units.
    """

    h: np.ndarray
    mean_curvature: np.ndarray
    aring: np.ndarray
    a2: np.ndarray
    h2: np.ndarray
    aring2: np.ndarray


@dataclass
class DerivativeData:
    """First covariant derivative components h_k[v, alpha, i, j, k] and norms."""

    h_k: np.ndarray
    grad_a2: np.ndarray
    grad_h2: np.ndarray
    grad_aring2: np.ndarray


def _fix_signs(basis: np.ndarray) -> np.ndarray:
    """Deterministic gauge: first significant component of each vector positive.

    Significance cutoff keeps the convention stable under rotations that
    leave near-zero components in floating-point noise.
    """
    flat = basis.reshape(-1, basis.shape[-1])
    significant = np.abs(flat) > 1e-8
    first = np.argmax(significant, axis=1)
    signs = np.sign(flat[np.arange(flat.shape[0]), first])
    signs[signs == 0] = 1.0
    return (flat * signs[:, None]).reshape(basis.shape)


def build_frames(
    imm: DiscreteImmersion, ring: int = DEFAULT_RING, topo: MeshTopology | None = None
) -> FrameField:
    """Tangent/normal frames from PCA of the centered ring neighborhoods."""
    topo = topo or MeshTopology(imm)
    n = imm.intrinsic_dim
    idx, mask = topo.ring_neighborhoods(ring)
    counts = mask.sum(axis=1)
    if counts.min() < n + 1:
        raise NeighborhoodRankDeficient("neighborhood smaller than n+1 points")

    pts = imm.vertices[idx]
    w = mask[:, :, None].astype(float)
    mean = (pts * w).sum(axis=1) / counts[:, None]
    centered = (pts - mean[:, None, :]) * w
    cov = np.einsum("vmi,vmj->vij", centered, centered) / counts[:, None, None]

    eigvals, eigvecs = np.linalg.eigh(cov)  # ascending
    top = eigvals[:, -1]
    kth = eigvals[:, -n]
    deficient = kth <= 1e-13 * np.maximum(top, 1e-300)
    if deficient.any():
        raise NeighborhoodRankDeficient(
            f"rank-deficient neighborhood at vertex {int(np.argmax(deficient))}"
        )

    dim = imm.ambient_dim
    tangent = np.swapaxes(eigvecs[:, :, dim - n :], 1, 2)[:, ::-1, :]
    normal = np.swapaxes(eigvecs[:, :, : dim - n], 1, 2)[:, ::-1, :]
    return FrameField(
        tangent=np.ascontiguousarray(_fix_signs(tangent)),
        normal=np.ascontiguousarray(_fix_signs(normal)),
    )


def _quadratic_basis(u: np.ndarray, n: int) -> np.ndarray:
    """Design rows [1, u_a, u_a^2/2 (a=a), u_a u_b (a<b)] for u of shape (..., n)."""
    cols = [np.ones(u.shape[:-1])]
    for a in range(n):
        cols.append(u[..., a])
    for a in range(n):
        cols.append(0.5 * u[..., a] ** 2)
    for a in range(n):
        for b in range(a + 1, n):
            cols.append(u[..., a] * u[..., b])
    return np.stack(cols, axis=-1)


def _local_coordinates(imm, frames, idx, mask):
    """Neighbor offsets in each vertex frame, nondimensionalized by the local
    length scale sigma (keeps fits scale-covariant and well conditioned)."""
    delta = imm.vertices[idx] - imm.vertices[:, None, :]
    dist = np.linalg.norm(delta, axis=2)
    others = mask.copy()
    others[:, 0] = False  # exclude the center itself from the scale
    sigma = (dist * others).sum(axis=1) / np.maximum(others.sum(axis=1), 1)
    sigma = np.maximum(sigma, 1e-300)
    u = np.einsum("vnd,vmd->vmn", frames.tangent, delta) / sigma[:, None, None]
    wcoord = np.einsum("vkd,vmd->vmk", frames.normal, delta) / sigma[:, None, None]
    theta = np.exp(-((dist / sigma[:, None]) ** 2)) * mask
    return u, wcoord, theta, sigma


def _weighted_lstsq(design, rhs, theta, what):
    """Batched weighted least squares with conditioning checks.

    design (V, m, K), rhs (V, m, R), theta (V, m) -> coefficients (V, K, R).
    """
    k = design.shape[2]
    counts = (theta > 0).sum(axis=1)
    if counts.min() < k:
        raise FitUnderdetermined(
            f"{what}: vertex {int(np.argmin(counts))} has {int(counts.min())} "
            f"samples for {k} coefficients"
        )
    wd = design * theta[:, :, None]
    gram = np.einsum("vmk,vml->vkl", wd, design)
    eig = np.linalg.eigvalsh(gram)
    lo, hi = eig[:, 0], eig[:, -1]
    bad = (lo <= 0) | (hi > CONDITION_LIMIT * np.maximum(lo, 1e-300))
    if bad.any():
        raise FitIllConditioned(
            f"{what}: normal equations condition number exceeds {CONDITION_LIMIT:g} "
            f"at vertex {int(np.argmax(bad))}"
        )
    moment = np.einsum("vmk,vmr->vkr", wd, rhs)
    return np.linalg.solve(gram, moment)


def second_fundamental_form(
    imm: DiscreteImmersion,
    frames: FrameField,
    ring: int = DEFAULT_RING,
    topo: MeshTopology | None = None,
) -> FundamentalForms:
    """Moving-least-squares quadratic fit of the normal graph at each vertex.

    The quadratic coefficient matrices are the h^alpha components; H is their
    trace assembled on the normal frame, which points toward the center on a
    sphere so that the flow shrinks it.
    """
    topo = topo or MeshTopology(imm)
    n = imm.intrinsic_dim
    d = imm.codim
    idx, mask = topo.ring_neighborhoods(ring)
    u, wcoord, theta, sigma = _local_coordinates(imm, frames, idx, mask)

    design = _quadratic_basis(u, n)
    coeffs = _weighted_lstsq(design, wcoord, theta, "jet fit")

    nv = imm.num_vertices
    h = np.zeros((nv, d, n, n))
    pos = 1 + n
    for a in range(n):
        h[:, :, a, a] = coeffs[:, pos, :]
        pos += 1
    for a in range(n):
        for b in range(a + 1, n):
            h[:, :, a, b] = h[:, :, b, a] = coeffs[:, pos, :]
            pos += 1
    h /= sigma[:, None, None, None]

    trace = np.einsum("vkaa->vk", h)
    mean_curvature = np.einsum("vk,vkd->vd", trace, frames.normal)
    forms = FundamentalForms(
        h=h,
        mean_curvature=mean_curvature,
        aring=np.zeros_like(h),
        a2=np.einsum("vkab,vkab->v", h, h),
        h2=np.einsum("vk,vk->v", trace, trace),
        aring2=np.zeros(nv),
    )
    return tracefree_decompose(forms)


def tracefree_decompose(forms: FundamentalForms) -> FundamentalForms:
    """New forms with the tracefree part aring = h - (trace/n) * identity."""
    n = forms.h.shape[2]
    trace = np.einsum("vkaa->vk", forms.h)
    aring = forms.h - trace[:, :, None, None] * np.eye(n) / n
    return FundamentalForms(
        h=forms.h,
        mean_curvature=forms.mean_curvature,
        aring=aring,
        aring2=np.einsum("vkab,vkab->v", aring, aring),
        a2=np.einsum("vkab,vkab->v", forms.h, forms.h),
        h2=np.einsum("vk,vk->v", trace, trace),
    )


def _minimal_rotation_transport(tan_v, nor_v, tan_j, nor_j):
    """Tangent/normal transition matrices of the smallest rotation taking the
    neighbor tangent plane onto the center tangent plane.

    Returns (tau, nu): tau[l, i] = <R t_i^(j), t_l^(v)>, nu[b, a] likewise for
    the normal frames.
    """
    n, dim = tan_v.shape
    m = tan_v @ tan_j.T  # (n, n)
    uu, sig, vt = np.linalg.svd(m)
    cos = np.clip(sig, -1.0, 1.0)
    p = uu.T @ tan_v  # principal vectors in the center plane, rows (n, D)
    q = vt @ tan_j  # matching principal vectors in the neighbor plane
    rot = np.eye(dim)
    for i in range(n):
        c = cos[i]
        if c > 1.0 - 1e-14:
            continue
        s = np.sqrt(max(1.0 - c * c, 0.0))
        axis = (p[i] - c * q[i]) / s
        qi = q[i]
        rot = rot + (
            s * (np.outer(axis, qi) - np.outer(qi, axis))
            + (c - 1.0) * (np.outer(qi, qi) + np.outer(axis, axis))
        )
    tau = tan_v @ rot @ tan_j.T
    nu = nor_v @ rot @ nor_j.T
    return tau, nu


def derivative_data(
    imm: DiscreteImmersion,
    frames: FrameField,
    forms: FundamentalForms,
    ring: int = DEFAULT_RING,
    topo: MeshTopology | None = None,
) -> DerivativeData:
    """Least-squares estimate of the first covariant derivative of the form.

    Neighbor components are parallel-transported to the center frame before
    fitting an affine model in the tangent coordinates; the slopes are the
    h^alpha_ijk.
    """
    topo = topo or MeshTopology(imm)
    n = imm.intrinsic_dim
    d = imm.codim
    nv = imm.num_vertices
    idx, mask = topo.ring_neighborhoods(ring)
    u, _, theta, sigma = _local_coordinates(imm, frames, idx, mask)
    width = idx.shape[1]

    # transported components, flattened over (alpha, i<=j)
    pairs = [(i, j) for i in range(n) for j in range(i, n)]
    ncomp = d * len(pairs)
    rhs = np.zeros((nv, width, ncomp))
    for v in range(nv):
        tan_v = frames.tangent[v]
        nor_v = frames.normal[v]
        for m_i in range(width):
            if not mask[v, m_i]:
                continue
            j = idx[v, m_i]
            if j == v:
                hj = forms.h[v]
            else:
                tau, nu = _minimal_rotation_transport(
                    tan_v, nor_v, frames.tangent[j], frames.normal[j]
                )
                hj = np.einsum("ba,li,mk,aik->blm", nu, tau, tau, forms.h[j])
            rhs[v, m_i] = np.array(
                [hj[a, i, jj] for a in range(d) for (i, jj) in pairs]
            )

    # affine model in normalized coordinates; slope recovers the derivative
    design = np.concatenate([np.ones((nv, width, 1)), u], axis=2)
    rhs_scaled = rhs * sigma[:, None, None]
    coeffs = _weighted_lstsq(design, rhs_scaled, theta, "derivative fit")
    slopes = coeffs[:, 1:, :] / (sigma ** 2)[:, None, None]

    h_k = np.zeros((nv, d, n, n, n))
    for col, (a, (i, jj)) in enumerate(
        (a, pair) for a in range(d) for pair in pairs
    ):
        for k in range(n):
            h_k[:, a, i, jj, k] = slopes[:, k, col]
            h_k[:, a, jj, i, k] = slopes[:, k, col]

    grad_a2 = np.einsum("vaijk,vaijk->v", h_k, h_k)
    hk_trace = np.einsum("vaiik->vak", h_k)
    grad_h2 = np.einsum("vak,vak->v", hk_trace, hk_trace)
    aring_k = h_k - hk_trace[:, :, None, None, :] * (np.eye(n) / n)[None, None, :, :, None]
    grad_aring2 = np.einsum("vaijk,vaijk->v", aring_k, aring_k)
    return DerivativeData(
        h_k=h_k, grad_a2=grad_a2, grad_h2=grad_h2, grad_aring2=grad_aring2
    )


def codazzi_residual(deriv: DerivativeData) -> np.ndarray:
    """Per-vertex max over alpha,i,j,k of |h_ijk - h_ikj| (zero in the limit)."""
    diff = np.abs(deriv.h_k - np.swapaxes(deriv.h_k, 3, 4))
    return diff.reshape(diff.shape[0], -1).max(axis=1)


def gauss_residual(
    imm: DiscreteImmersion,
    forms: FundamentalForms,
    topo: MeshTopology | None = None,
) -> np.ndarray:
    """Intrinsic sectional curvature minus the extrinsic form product.

    For n=2 the intrinsic side is the angle defect over the barycentric
    vertex area; curves are intrinsically flat and return zeros.
    """
    n = imm.intrinsic_dim
    if n == 1:
        return np.zeros(imm.num_vertices)
    if n != 2:
        raise UnsupportedDimension("structural residual defined for n in {1, 2}")
    intrinsic = angle_defects(imm) / measure_weights(imm)
    h = forms.h
    extrinsic = (h[:, :, 0, 0] * h[:, :, 1, 1] - h[:, :, 0, 1] ** 2).sum(axis=1)
    return intrinsic - extrinsic


def jet_forms(
    imm: DiscreteImmersion,
    ring: int = DEFAULT_RING,
    topo: MeshTopology | None = None,
) -> tuple[FrameField, FundamentalForms]:
    """Convenience pipeline: frames then second fundamental form."""
    topo = topo or MeshTopology(imm)
    frames = build_frames(imm, ring=ring, topo=topo)
    return frames, second_fundamental_form(imm, frames, ring=ring, topo=topo)
