"""Spectral analysis of the information operator and Fisher functionals.

The linearization I acts on interior perturbations; the information operator
I*I is symmetric and positive semidefinite for the weighted discrete inner
product.  This module eigendecomposes it, evaluates the inverse Fisher
quadratic form psi^T (I*I)^{-1} psi either by a direct solve or by spectral
truncation, and builds the degeneracy sequences h_N whose normalized
quotients certify vanishing information.  Divergence verdicts are never
issued from a single grid: `fisher_refinement` sweeps a family of meshes and
classifies the growth of the inverse quadratic form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from ellinfo.grids import Grid, ScalarField, inner_l2, norm_l2
from ellinfo.score import ScoreContext

#: Eigenvalues below this multiple of the top eigenvalue count as kernel.
KERNEL_TOL_FACTOR = 1e-8

#: Residual tolerance (relative to lambda_1) for iterative eigenpairs.
EIG_RESIDUAL_RTOL = 1e-8

#: Refinement-sweep classification thresholds: total growth of the inverse
#: quadratic form marking divergence, total relative variation marking
#: stability, and the kernel mass fraction marking obstruction.
DIVERGENCE_GROWTH = 2.0
STABLE_VARIATION = 0.2
KERNEL_FRACTION_THRESHOLD = 0.5

#: Largest interior dimension for which the refinement sweep computes a full
#: eigendecomposition per grid (for kernel diagnostics).
KERNEL_SWEEP_MAX_DIM = 1500

#: Floor applied to computed eigenvalues, as a multiple of lambda_1, when a
#: singular direct solve is replaced by a certified lower bound: symmetric
#: eigensolvers are backward stable, so true eigenvalues cannot exceed the
#: computed ones by more than a small multiple of eps * lambda_1.
EIG_FLOOR_FACTOR = 10.0 * float(np.finfo(float).eps)

FISHER_VERDICTS = ("in_range", "out_of_range_divergent", "kernel_obstructed",
                   "undetermined")


@dataclass
class SpectralDecomposition:
    """Eigenpairs of the information operator, largest eigenvalue first.

    ``modes[:, k]`` holds the k-th eigenvector on interior nodes,
    orthonormal for the weighted discrete inner product.  Eigenvalues below
    ``kernel_tol`` form the numerical kernel; the projector onto it is
    available through :meth:`kernel_project`.

    ``subspace`` records which perturbation space was decomposed:
    ``interior`` is the full interior nodal space (whose deep spectrum
    contains first-integral near-kernel directions that no admissible
    perturbation can realize), while ``collar_supported`` restricts to
    fields vanishing on the boundary collar -- the discrete tangent space.
    Degeneracy ladders are meaningful on the latter; kernel geometry on the
    former.
    """

    ctx: ScoreContext
    eigenvalues: np.ndarray
    modes: np.ndarray
    kernel_tol: float
    mode: str
    complete: bool
    subspace: str = "interior"
    residuals: np.ndarray | None = None

    @property
    def grid(self) -> Grid:
        return self.ctx.grid

    @property
    def n_modes(self) -> int:
        return len(self.eigenvalues)

    @property
    def kernel_mask(self) -> np.ndarray:
        return self.eigenvalues <= self.kernel_tol

    @property
    def n_kernel(self) -> int:
        return int(np.count_nonzero(self.kernel_mask))

    def eigenfield(self, k: int) -> ScalarField:
        return self.grid.interior_field(self.modes[:, k])

    def coefficients(self, psi: ScalarField) -> np.ndarray:
        """Weighted inner products <e_k, psi> against every computed mode."""
        w = self.grid.weights_interior
        return self.modes.T @ (w * self.grid.restrict(psi))

    def kernel_project(self, psi: ScalarField) -> ScalarField:
        mask = self.kernel_mask
        c = self.coefficients(psi)
        vals = self.modes[:, mask] @ c[mask]
        return self.grid.interior_field(vals)

    def kernel_mass_fraction(self, psi: ScalarField) -> float:
        """Share of the squared norm of psi carried by kernel modes."""
        total = norm_l2(psi) ** 2
        if total == 0.0:
            raise ValueError("psi vanishes identically")
        c = self.coefficients(psi)
        return float(np.sum(c[self.kernel_mask] ** 2) / total)


def eigendecompose(ctx: ScoreContext, n_modes: int | None = None,
                   mode: str = "dense", subspace: str = "interior",
                   kernel_tol_factor: float = KERNEL_TOL_FACTOR) -> SpectralDecomposition:
    """Eigendecompose the information operator.

    Dense mode forms the symmetrized matrix and solves the full symmetric
    eigenproblem (optionally truncated to the top ``n_modes``); iterative
    mode runs implicitly restarted Lanczos on the matrix-free operator and
    residual-checks every returned pair.

    ``subspace='collar_supported'`` (dense only) decomposes the quadratic
    form restricted to fields vanishing on the boundary collar, the discrete
    tangent space of admissible perturbations; the returned modes are padded
    with zeros on the collar and remain orthonormal.
    """
    if subspace not in ("interior", "collar_supported"):
        raise ValueError("subspace must be 'interior' or 'collar_supported'")
    grid = ctx.grid
    m = grid.n_interior
    w = grid.weights_interior
    s = np.sqrt(w)
    if subspace == "collar_supported" and mode != "dense":
        raise ValueError("the collar-restricted decomposition is dense-only")
    if mode == "dense":
        bhat = ctx.dense_linearization_hat()
        gram = bhat.T @ bhat
        gram = 0.5 * (gram + gram.T)
        if subspace == "collar_supported":
            free = np.flatnonzero(~grid.collar_mask[grid.interior_ids])
            vals, vecs_free = np.linalg.eigh(gram[np.ix_(free, free)])
            vecs = np.zeros((m, len(vals)))
            vecs[free, :] = vecs_free
        else:
            vals, vecs = np.linalg.eigh(gram)
        vals, vecs = vals[::-1], vecs[:, ::-1]
        n_avail = len(vals)
        if n_modes is not None:
            vals, vecs = vals[:n_modes], vecs[:, :n_modes]
        residuals = None
        complete = n_modes is None or n_modes >= n_avail
    elif mode == "iterative":
        if n_modes is None:
            raise ValueError("iterative mode needs an explicit mode count")
        if n_modes >= m:
            raise ValueError("iterative mode requires n_modes < interior dimension")

        def matvec(x_hat: np.ndarray) -> np.ndarray:
            return s * ctx._apply_info(x_hat / s)

        op = spla.LinearOperator((m, m), matvec=matvec, dtype=float)
        try:
            vals, vecs = spla.eigsh(op, k=n_modes, which="LM")
        except spla.ArpackNoConvergence as exc:
            raise RuntimeError("Lanczos iteration did not converge") from exc
        vals, vecs = vals[::-1], vecs[:, ::-1]
        residuals = np.array([
            np.linalg.norm(matvec(vecs[:, k]) - vals[k] * vecs[:, k])
            for k in range(len(vals))
        ])
        if np.any(residuals > EIG_RESIDUAL_RTOL * max(vals[0], 1e-300)):
            raise RuntimeError(
                f"eigenpair residuals up to {residuals.max():.3e} exceed the "
                f"tolerance {EIG_RESIDUAL_RTOL:.1e} * lambda_1"
            )
        complete = False
    else:
        raise ValueError(f"unknown mode {mode!r}; choose 'dense' or 'iterative'")
    modes = vecs / s[:, None]
    kernel_tol = kernel_tol_factor * float(vals[0]) if len(vals) else 0.0
    return SpectralDecomposition(ctx=ctx, eigenvalues=np.ascontiguousarray(vals),
                                 modes=np.ascontiguousarray(modes),
                                 kernel_tol=kernel_tol, mode=mode,
                                 complete=complete, subspace=subspace,
                                 residuals=residuals)


def sqrt_apply(decomp: SpectralDecomposition, h: ScalarField) -> ScalarField:
    """Spectral square root: sum_k lambda_k^{1/2} <h, e_k> e_k."""
    c = decomp.coefficients(h)
    vals = decomp.modes @ (np.sqrt(np.clip(decomp.eigenvalues, 0.0, None)) * c)
    return decomp.grid.interior_field(vals)


def range_series(decomp: SpectralDecomposition, psi: ScalarField,
                 n_max: int | None = None) -> tuple[np.ndarray, float]:
    """Partial sums M_N = sum_{k<=N} lambda_k^{-1} <e_k, psi>^2 over the
    non-kernel modes, plus the norm of the kernel component of psi.

    A bounded tail of M_N is the discrete signature of psi lying in the
    range of the adjoint; unbounded growth under refinement signals a
    divergent inverse Fisher form.
    """
    keep = ~decomp.kernel_mask
    c = decomp.coefficients(psi)
    terms = c[keep] ** 2 / decomp.eigenvalues[keep]
    if n_max is not None:
        terms = terms[:n_max]
    p0_norm = math.sqrt(max(float(np.sum(c[decomp.kernel_mask] ** 2)), 0.0))
    return np.cumsum(terms), p0_norm


def kernel_component(decomp: SpectralDecomposition,
                     psi: ScalarField) -> tuple[ScalarField, float]:
    """Projection of psi onto the numerical kernel and its norm."""
    proj = decomp.kernel_project(psi)
    return proj, norm_l2(proj)


def degeneracy_sequence(decomp: SpectralDecomposition, psi: ScalarField,
                        n: int, masked: bool = True) -> tuple[ScalarField, float]:
    """Degeneracy direction h_N and its normalized quotient.

    h_N is the truncated inverse image sum_{k<=N} lambda_k^{-1} <e_k,psi> e_k,
    with the boundary collar zeroed out when ``masked`` (so h_N is admissible
    as a conductivity perturbation).  The quotient ||I h_N||^2 / <psi, h_N>^2
    is the inverse of the Fisher lower-bound candidate generated by h_N; for
    the unmasked sequence it equals 1/M_N exactly by spectral algebra.
    """
    keep = np.flatnonzero(~decomp.kernel_mask)
    if n < 1 or n > len(keep):
        raise ValueError(f"order {n} outside 1..{len(keep)}")
    idx = keep[:n]
    c = decomp.coefficients(psi)
    vals = decomp.modes[:, idx] @ (c[idx] / decomp.eigenvalues[idx])
    h = decomp.grid.interior_field(vals)
    if masked:
        h.values[decomp.grid.collar_mask] = 0.0
    pairing = inner_l2(psi, h)
    image = decomp.ctx.grid.interior_field(
        decomp.ctx._apply_B(decomp.grid.restrict(h)))
    info_norm_sq = norm_l2(image) ** 2
    quotient = info_norm_sq / pairing ** 2 if pairing != 0.0 else math.inf
    return h, quotient


@dataclass
class DegeneracyProfile:
    """Degeneracy quotients along a ladder of truncation orders."""

    orders: np.ndarray
    fisher_partial: np.ndarray      # M_N
    pairing: np.ndarray             # <psi, h_N>
    info_norm_sq: np.ndarray        # ||I h_N||^2
    quotient: np.ndarray            # info_norm_sq / pairing^2
    product: np.ndarray             # quotient * M_N (bounded for honest h_N)
    mask_correction: np.ndarray     # relative pairing shift caused by masking


def degeneracy_profile(decomp: SpectralDecomposition, psi: ScalarField,
                       orders=None, masked: bool = True) -> DegeneracyProfile:
    series, _ = range_series(decomp, psi)
    n_avail = len(series)
    if orders is None:
        orders = np.unique(np.geomspace(1, n_avail, num=min(24, n_avail)).round().astype(int))
    else:
        orders = np.asarray(sorted(set(int(v) for v in orders)))
        if orders[0] < 1 or orders[-1] > n_avail:
            raise ValueError(f"orders must lie in 1..{n_avail}")
    pairing = np.empty(len(orders))
    info_norm_sq = np.empty(len(orders))
    quotient = np.empty(len(orders))
    for i, n in enumerate(orders):
        h, q = degeneracy_sequence(decomp, psi, int(n), masked=masked)
        pairing[i] = inner_l2(psi, h)
        image = decomp.ctx.grid.interior_field(
            decomp.ctx._apply_B(decomp.grid.restrict(h)))
        info_norm_sq[i] = norm_l2(image) ** 2
        quotient[i] = q
    m_n = series[orders - 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        correction = np.abs(pairing - m_n) / np.where(m_n > 0, m_n, 1.0)
    return DegeneracyProfile(orders=orders, fisher_partial=m_n, pairing=pairing,
                             info_norm_sq=info_norm_sq, quotient=quotient,
                             product=quotient * m_n, mask_correction=correction)


@dataclass
class FisherReport:
    """Inverse Fisher quadratic form for one functional on one grid.

    ``lower_bound`` marks values produced by the singular-grid fallback,
    which certifies only that the true quadratic form is at least this
    large (kernel terms are evaluated at an eigenvalue floor).
    """

    psi: ScalarField
    method: str
    i_inverse_full: float
    i_value: float
    m_series: np.ndarray | None = None
    kernel_component_norm: float | None = None
    verdict: str = "undetermined"
    resolution: tuple | None = None
    lower_bound: bool = False

    def __post_init__(self):
        if self.verdict not in FISHER_VERDICTS:
            raise ValueError(f"verdict must be one of {FISHER_VERDICTS}")


def _hat_lu(ctx: ScoreContext):
    cached = getattr(ctx, "_hat_lu_cache", None)
    if cached is None:
        cached = sla.lu_factor(ctx.dense_linearization_hat())
        ctx._hat_lu_cache = cached
    return cached


def fisher_information(ctx: ScoreContext, psi: ScalarField,
                       method: str = "direct_solve",
                       decomp: SpectralDecomposition | None = None,
                       verdict: str = "undetermined") -> FisherReport:
    """Evaluate the inverse Fisher quadratic form psi -> psi^T (I*I)^{-1} psi.

    ``direct_solve`` solves with the transposed symmetrized linearization
    (one triangular pair per functional, no squared conditioning);
    ``spectral_truncation`` sums the series M_K over the computed non-kernel
    modes of ``decomp``.  The verdict field is a pass-through slot filled by
    refinement sweeps; a single grid never certifies divergence.
    """
    grid = ctx.grid
    psi_int = grid.restrict(psi)
    if not np.any(psi_int):
        raise ValueError("psi vanishes identically: Fisher functional undefined")
    m_series = None
    kernel_norm = None
    if decomp is not None:
        m_series, p0 = range_series(decomp, psi)
        kernel_norm = p0
    if method == "direct_solve":
        s = np.sqrt(grid.weights_interior)
        psi_hat = s * psi_int
        x = sla.lu_solve(_hat_lu(ctx), psi_hat, trans=1)
        if not np.all(np.isfinite(x)):
            raise np.linalg.LinAlgError(
                "information matrix numerically singular; use spectral_truncation "
                "with kernel handling")
        bhat = ctx.dense_linearization_hat()
        residual = np.linalg.norm(bhat.T @ x - psi_hat)
        if residual > 1e-6 * np.linalg.norm(psi_hat):
            raise np.linalg.LinAlgError(
                "information matrix numerically singular; use spectral_truncation "
                "with kernel handling")
        i_inverse = float(x @ x)
    elif method == "spectral_truncation":
        if decomp is None:
            decomp = eigendecompose(ctx)
            m_series, kernel_norm = range_series(decomp, psi)
        if m_series is None or len(m_series) == 0:
            raise ValueError("decomposition contains no usable modes")
        i_inverse = float(m_series[-1])
    else:
        raise ValueError(
            f"unknown method {method!r}; choose 'direct_solve' or 'spectral_truncation'")
    i_value = 1.0 / i_inverse if i_inverse > 0 else math.inf
    return FisherReport(psi=psi, method=method, i_inverse_full=i_inverse,
                        i_value=i_value, m_series=m_series,
                        kernel_component_norm=kernel_norm, verdict=verdict,
                        resolution=grid.spec.resolution)


@dataclass
class RefinementSweep:
    """Inverse Fisher values across a family of grids, with classification."""

    fixture: str
    psi_kind: str
    resolutions: tuple
    interior_dims: tuple
    values: np.ndarray
    growth: float                   # coarsest-to-finest ratio
    variation: float                # max/min - 1
    kernel_fractions: list
    verdict: str
    lower_bounds: tuple = ()        # grids where the value is only a bound
    reports: list = field(default_factory=list)


def _singular_grid_bound(ctx: ScoreContext, psi: ScalarField,
                         decomp: SpectralDecomposition) -> FisherReport:
    """Certified lower bound for the inverse quadratic form on a grid where
    the information matrix is singular to working precision.

    Non-kernel terms of the spectral series are reliable as computed; kernel
    terms are bounded from below by flooring their eigenvalues at
    ``EIG_FLOOR_FACTOR * lambda_1`` (backward-stability bound).
    """
    m_series, p0 = range_series(decomp, psi)
    lam = decomp.eigenvalues
    floor = EIG_FLOOR_FACTOR * float(lam[0])
    mask = decomp.kernel_mask
    c = decomp.coefficients(psi)
    kernel_part = float(np.sum(c[mask] ** 2 / np.maximum(lam[mask], floor)))
    value = float(m_series[-1]) + kernel_part
    return FisherReport(psi=psi, method="spectral_truncation",
                        i_inverse_full=value, i_value=1.0 / value,
                        m_series=m_series, kernel_component_norm=p0,
                        resolution=ctx.grid.spec.resolution, lower_bound=True)


def fisher_refinement(fixture: str, psi_kind: str,
                      resolutions=(17, 25, 33), theta_bump=None,
                      psi_params: dict | None = None,
                      kernel_fraction_threshold: float = KERNEL_FRACTION_THRESHOLD,
                      divergence_growth: float = DIVERGENCE_GROWTH,
                      stable_variation: float = STABLE_VARIATION) -> RefinementSweep:
    """Classify a functional by sweeping the inverse Fisher form over grids.

    Any fixed grid reports a finite inverse form, so divergence is read off
    the refinement trend: dominant kernel mass marks ``kernel_obstructed``,
    total growth beyond ``divergence_growth`` marks
    ``out_of_range_divergent``, total variation within ``stable_variation``
    marks ``in_range``, and anything else stays ``undetermined``.

    Grids where the information matrix is singular to working precision fall
    back to a certified lower bound (flagged in ``lower_bounds``).  A lower
    bound can still certify growth -- provided the coarsest value is exact --
    but never stability, so ``in_range`` requires exact values throughout.
    """
    from ellinfo.fixtures import build_context, psi_fixture
    from ellinfo.score import DENSE_OPERATOR_MAX_DIM

    if len(resolutions) < 3:
        raise ValueError("refinement sweeps need at least three grids")
    psi_params = psi_params or {}
    values = []
    dims = []
    fractions = []
    reports = []
    for n in resolutions:
        ctx = build_context(fixture, n, theta_bump=theta_bump)
        psi = psi_fixture(ctx, psi_kind, **psi_params)
        decomp = None
        if ctx.grid.n_interior <= KERNEL_SWEEP_MAX_DIM:
            decomp = eigendecompose(ctx)
        try:
            report = fisher_information(ctx, psi, "direct_solve", decomp=decomp)
        except np.linalg.LinAlgError:
            if decomp is None:
                if ctx.grid.n_interior > DENSE_OPERATOR_MAX_DIM:
                    raise
                decomp = eigendecompose(ctx)
            report = _singular_grid_bound(ctx, psi, decomp)
        values.append(report.i_inverse_full)
        dims.append(ctx.grid.n_interior)
        if decomp is not None:
            fractions.append(decomp.kernel_mass_fraction(psi))
        else:
            fractions.append(None)
        reports.append(report)
    values = np.asarray(values)
    bounds = tuple(report.lower_bound for report in reports)
    growth = float(values[-1] / values[0])
    variation = float(values.max() / values.min() - 1.0)
    known_fractions = [fr for fr in fractions if fr is not None]
    if known_fractions and max(known_fractions) > kernel_fraction_threshold:
        verdict = "kernel_obstructed"
    elif growth >= divergence_growth and not bounds[0]:
        verdict = "out_of_range_divergent"
    elif variation <= stable_variation and not any(bounds):
        verdict = "in_range"
    else:
        verdict = "undetermined"
    for report in reports:
        report.verdict = verdict
    return RefinementSweep(fixture=fixture, psi_kind=psi_kind,
                           resolutions=tuple(resolutions), interior_dims=tuple(dims),
                           values=values, growth=growth, variation=variation,
                           kernel_fractions=fractions, verdict=verdict,
                           lower_bounds=bounds, reports=reports)
