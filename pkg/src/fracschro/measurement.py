"""Local source-to-solution map: sources in a region, measurements of the
solution restricted to the same region, and the exact identities between them.
"""

from __future__ import annotations

import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import linalg

from .forward import OperatorMatrix, Potential, solve_many
from .fractional import Field, _check_s, frac_symbol, synthesize
from .spectral import Region, Spectrum, load_spectrum, save_spectrum

SUPPORT_TOL = 1e-12
RANK_TOL = 1e-10
SYMMETRY_TOL = 1e-10


class SupportError(ValueError):
    pass


def _bump_profile(t: np.ndarray) -> np.ndarray:
    """exp(-1/(1 - t^2)) on |t| < 1, zero outside."""
    t = np.asarray(t, float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1
    out[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
    return out


def _smooth_step(t: np.ndarray) -> np.ndarray:
    """C-infinity transition from 0 (t <= 0) to 1 (t >= 1)."""
    t = np.clip(np.asarray(t, float), 0.0, 1.0)
    a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
    b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def _farthest_points(spectrum: Spectrum, candidates: np.ndarray, m: int) -> np.ndarray:
    """Greedy farthest-point selection among candidate indices, seeded at the first one."""
    pts = spectrum.points
    chosen = [int(candidates[0])]
    dist = spectrum.distance(pts[candidates], pts[chosen[0]])
    for _ in range(m - 1):
        nxt = int(np.argmax(dist))
        chosen.append(int(candidates[nxt]))
        dist = np.minimum(dist, spectrum.distance(pts[candidates], pts[candidates[nxt]]))
    return np.array(sorted(chosen))


def _evenly_spaced(candidates: np.ndarray, m: int) -> np.ndarray:
    # midpoints of m equal cells along the (ordered) candidate list
    pos = np.floor((np.arange(m) + 0.5) * candidates.size / m).astype(int)
    return candidates[pos]


def distance_to_complement(spectrum: Spectrum, region: Region) -> np.ndarray:
    """Distance from every grid point to the nearest point outside the region."""
    pts = spectrum.points
    outside = pts[~region.mask]
    d = np.empty(spectrum.num_points)
    for p in range(spectrum.num_points):
        d[p] = spectrum.distance(outside, pts[p]).min()
    return d


def region_cutoff(spectrum: Spectrum, region: Region, width_fraction: float = 0.3) -> np.ndarray:
    """Smooth cutoff equal to 1 deep inside the region and 0 outside it."""
    d = distance_to_complement(spectrum, region)
    width = width_fraction * d.max()
    return _smooth_step(d / width) * region.mask


@dataclass(frozen=True, eq=False)
class SourceBasis:
    """Region supported source fields, stored as grid samples of shape (m, P)."""

    spectrum: Spectrum
    region: Region
    samples: np.ndarray
    kind: str = "bump"

    def __post_init__(self):
        b = np.array(self.samples, dtype=float)
        if b.ndim != 2 or b.shape[1] != self.spectrum.num_points or b.shape[0] < 1:
            raise ValueError(f"basis samples have shape {b.shape}")
        if np.any(np.abs(b[:, ~self.region.mask]) > 0):
            raise SupportError("basis element does not vanish outside the region")
        b.setflags(write=False)
        object.__setattr__(self, "samples", b)

    @property
    def count(self) -> int:
        return self.samples.shape[0]

    @property
    def elements(self) -> list[Field]:
        return [Field(self.spectrum, values=row) for row in self.samples]

    def smallest_singular_value(self) -> float:
        sw = np.sqrt(self.spectrum.weights)
        return float(np.linalg.svd(self.samples * sw, compute_uv=False).min())

    def mass_matrix(self) -> np.ndarray:
        """L2 Gram matrix (f_i, f_j) of the basis elements."""
        return (self.samples * self.spectrum.weights) @ self.samples.T

    def combine(self, coeffs: np.ndarray) -> Field:
        return Field(self.spectrum, values=np.asarray(coeffs, float) @ self.samples)


def build_source_basis(
    spectrum: Spectrum,
    region: Region,
    kind: str = "bump",
    count: int = 8,
    radius_factor: float = 1.5,
) -> SourceBasis:
    """Independent region supported sources.

    ``bump``: mollified indicators centred at quasi-uniformly spread region
    points, with radius ``radius_factor`` times the centre spacing.
    ``windowed-mode``: the first ``count`` eigenfunctions multiplied by a
    smooth cutoff subordinate to the region.

    Linearly dependent elements are dropped with a warning.
    """
    n_region = region.count
    if count < 1:
        raise ValueError("basis count must be positive")
    if count > n_region:
        raise ValueError(f"basis count {count} exceeds the {n_region} grid points in the region")
    idx = region.indices
    pts = spectrum.points
    if kind == "bump":
        if spectrum.grid.dim == 1:
            centres = _evenly_spaced(idx, count)
        else:
            centres = _farthest_points(spectrum, idx, count)
        region_vol = float(spectrum.weights[region.mask].sum())
        spacing = (region_vol / count) ** (1.0 / spectrum.grid.dim)
        cell = float(np.max(spectrum.weights)) ** (1.0 / spectrum.grid.dim)
        radius = max(radius_factor * spacing, 1.01 * cell)
        rows = []
        for c in centres:
            r = spectrum.distance(pts, pts[c]) / radius
            rows.append(_bump_profile(r) * region.mask)
        samples = np.array(rows)
    elif kind == "windowed-mode":
        if count > spectrum.num_modes:
            raise ValueError(f"windowed-mode basis needs count <= K={spectrum.num_modes}")
        chi = region_cutoff(spectrum, region)
        samples = spectrum.modes[:count] * chi
    else:
        raise ValueError(f"unknown basis kind {kind!r}")
    samples[:, ~region.mask] = 0.0

    sw = np.sqrt(spectrum.weights)
    sv = np.linalg.svd(samples * sw, compute_uv=False)
    if sv.min() <= RANK_TOL * max(sv.max(), 1.0):
        _, _, piv = linalg.qr((samples * sw).T, pivoting=True, mode="economic")
        rank = int(np.sum(sv > RANK_TOL * max(sv.max(), 1.0)))
        keep = np.sort(piv[:rank])
        warnings.warn(
            f"source basis rank deficient ({rank} of {samples.shape[0]}); reducing m to {rank}",
            stacklevel=2,
        )
        samples = samples[keep]
    return SourceBasis(spectrum, region, samples, kind)


def _check_support(values: np.ndarray, region: Region) -> None:
    outside = np.abs(np.asarray(values)[..., ~region.mask])
    if outside.size and outside.max() > SUPPORT_TOL:
        raise SupportError(
            f"source not supported in region: |f| = {outside.max():.3e} outside"
        )


def apply_map(op: OperatorMatrix, f: Field, region: Region) -> np.ndarray:
    """u_f restricted to the region, as samples on the region's grid points."""
    vals = f.grid_values
    _check_support(vals, region)
    cu = solve_many(op, vals[None, :])[0]
    return region.restrict(synthesize(op.spectrum, cu))


@dataclass(frozen=True, eq=False)
class SourceSolutionMap:
    """G_ij = (f_i, L f_j) plus the global solutions it was computed from."""

    matrix: np.ndarray
    basis: SourceBasis
    potential: Potential
    s: float
    solution_coeffs: np.ndarray  # (m, K)

    @property
    def symmetry_residual(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.T)))

    @property
    def solutions(self) -> np.ndarray:
        """Global solution samples u_j, shape (m, P)."""
        return synthesize(self.basis.spectrum, self.solution_coeffs)

    @property
    def restricted_solutions(self) -> np.ndarray:
        return self.basis.region.restrict(self.solutions)


def gram_matrix(op: OperatorMatrix, basis: SourceBasis, threads: int = 1) -> SourceSolutionMap:
    """Measurement Gram matrix; solves are split over ``threads`` workers.

    Each chunk of solves is independent, so the result does not depend on the
    number of threads.
    """
    sp = op.spectrum
    samples = basis.samples
    if threads > 1 and basis.count > 1:
        chunks = np.array_split(np.arange(basis.count), min(threads, basis.count))
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda ix: [solve_many(op, samples[i][None, :])[0] for i in ix], chunks))
        coeffs = np.array([c for part in parts for c in part])
    else:
        coeffs = np.array([solve_many(op, row[None, :])[0] for row in samples])
    sols = synthesize(sp, coeffs)
    g = (samples * sp.weights) @ sols.T
    return SourceSolutionMap(g, basis, op.potential, op.s, coeffs)


def integral_identity_residual(
    op1: OperatorMatrix,
    op2: OperatorMatrix,
    f1: Field,
    f2: Field,
    region: Region,
    return_terms: bool = False,
):
    """|((L1 - L2) f1, f2) + ((V1 - V2) u1^{f1}, u2^{f2})|.

    With ``return_terms`` the two pairings are returned as well.
    """
    if op1.s != op2.s or op1.spectrum.num_modes != op2.spectrum.num_modes:
        raise ValueError("operators must share spectrum and s")
    sp = op1.spectrum
    v1, v2 = f1.grid_values, f2.grid_values
    _check_support(v1, region)
    _check_support(v2, region)
    u11 = synthesize(sp, solve_many(op1, v1[None, :])[0])
    u21 = synthesize(sp, solve_many(op2, v1[None, :])[0])
    u22 = synthesize(sp, solve_many(op2, v2[None, :])[0])
    w = sp.weights
    lhs = float(np.sum((w * v2)[region.mask] * (u11 - u21)[region.mask]))
    dv = op1.potential.values - op2.potential.values
    rhs = float(np.sum(w * dv * u11 * u22))
    res = abs(lhs + rhs)
    if return_terms:
        return res, lhs, -rhs
    return res


def ucp_matrix(spectrum: Spectrum, s: float, region: Region) -> np.ndarray:
    """Matrix of c -> (sqrt(w) u|_O, sqrt(w) ((-Delta)^s u)|_O) on coefficient space."""
    s = _check_s(s)
    phi_o = spectrum.modes[:, region.mask].T
    sw = np.sqrt(spectrum.weights[region.mask])[:, None]
    return np.vstack([sw * phi_o, sw * phi_o * frac_symbol(spectrum, s)])


def discrete_ucp_margin(spectrum: Spectrum, s: float, region: Region) -> float:
    """Smallest singular value of u -> (u|_O, (-Delta)^s u|_O) per unit L2 norm of u."""
    a = ucp_matrix(spectrum, s, region)
    if a.shape[0] < a.shape[1]:
        return 0.0
    return float(np.linalg.svd(a, compute_uv=False).min())


# -- measurement bundles -----------------------------------------------------


@dataclass(frozen=True, eq=False)
class MeasurementBundle:
    """Everything an inverter is allowed to see about one potential."""

    gram: np.ndarray
    restricted_solutions: np.ndarray  # (m, n_region)
    basis: SourceBasis
    s: float

    def __post_init__(self):
        g = np.asarray(self.gram, float)
        r = np.asarray(self.restricted_solutions, float)
        m = self.basis.count
        if g.shape != (m, m) or r.shape != (m, self.region.count):
            raise ValueError("bundle arrays inconsistent with basis and region")
        if np.max(np.abs(g - g.T)) > SYMMETRY_TOL * max(1.0, np.max(np.abs(g))):
            raise ValueError("bundle Gram matrix is not symmetric")
        if np.max(np.abs(self.gram_from_solutions(r) - g)) > SYMMETRY_TOL * max(1.0, np.max(np.abs(g))):
            raise ValueError("restricted solutions inconsistent with Gram matrix")

    @property
    def region(self) -> Region:
        return self.basis.region

    @property
    def spectrum(self) -> Spectrum:
        return self.basis.spectrum

    def gram_from_solutions(self, restricted: np.ndarray) -> np.ndarray:
        w = self.spectrum.weights[self.region.mask]
        return (self.basis.samples[:, self.region.mask] * w) @ np.asarray(restricted).T

    def numerical_rank(self, rtol: float = 1e-12) -> int:
        sv = np.linalg.svd(self.gram, compute_uv=False)
        return int(np.sum(sv > rtol * sv.max())) if sv.max() > 0 else 0


def bundle_from_map(smap: SourceSolutionMap) -> MeasurementBundle:
    return MeasurementBundle(
        gram=smap.matrix.copy(),
        restricted_solutions=smap.restricted_solutions,
        basis=smap.basis,
        s=smap.s,
    )


def _raw(path: Path, arr: np.ndarray) -> None:
    path.write_bytes(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def save_bundle(bundle: MeasurementBundle, directory: str | Path) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    spec_manifest = save_spectrum(bundle.spectrum, d, stem="spectrum")
    _raw(d / "gram.f64", bundle.gram)
    _raw(d / "restricted_solutions.f64", bundle.restricted_solutions)
    _raw(d / "basis.f64", bundle.basis.samples)
    (d / "region_mask.u8").write_bytes(bundle.region.mask.astype(np.uint8).tobytes())
    manifest = {
        "s": bundle.s,
        "spectrum": spec_manifest.name,
        "region_mask": "region_mask.u8",
        "region_name": bundle.region.name,
        "basis_kind": bundle.basis.kind,
        "m": bundle.basis.count,
        "num_region_points": bundle.region.count,
        "gram_file": "gram.f64",
        "restricted_solutions_file": "restricted_solutions.f64",
        "basis_file": "basis.f64",
    }
    path = d / "bundle.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_bundle(path: str | Path) -> MeasurementBundle:
    path = Path(path)
    if path.is_dir():
        path = path / "bundle.json"
    if not path.is_file():
        raise FileNotFoundError(f"measurement bundle {path} not found")
    man = json.loads(path.read_text())
    d = path.parent
    spectrum = load_spectrum(d / man["spectrum"])
    mask = np.frombuffer((d / man["region_mask"]).read_bytes(), dtype=np.uint8).astype(bool)
    region = Region(mask, man.get("region_name", "O"))
    m, n_o, p = int(man["m"]), int(man["num_region_points"]), spectrum.num_points

    def read(key, shape):
        data = np.frombuffer((d / man[key]).read_bytes(), dtype="<f8").astype(float)
        if data.size != int(np.prod(shape)):
            raise ValueError(f"{man[key]}: expected {int(np.prod(shape))} values, got {data.size}")
        return data.reshape(shape)

    basis = SourceBasis(spectrum, region, read("basis_file", (m, p)), man["basis_kind"])
    return MeasurementBundle(
        gram=read("gram_file", (m, m)),
        restricted_solutions=read("restricted_solutions_file", (m, n_o)),
        basis=basis,
        s=float(man["s"]),
    )
