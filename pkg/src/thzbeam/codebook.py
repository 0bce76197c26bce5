"""Hierarchical codebooks for one QUPA.

Stage ``S`` (``N**2 = 2**S``) holds narrow beams placed uniformly in
(sin(phi), cos(theta)); stages ``0 .. S-1`` hold wide beams fitted by least
squares to 0/chi/1 targets on a dense ``4N x 4N`` direction grid.

Grid and coverage indices below are 1-based where they follow the closed-form
index formulas, 0-based everywhere else.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from .geometry import SQRT2, Beamformer, Direction, UpaConfig, boresight, steering, steering_vh

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
_COND_LIMIT = 1e10
# Relative ridge on A A^H. Near-null modes of the Gram matrix radiate mostly into the
# invisible part of the (V, H) square; an unregularized fit spends the weight norm on
# them and narrow-coverage beams lose most of their in-coverage gain.
DEFAULT_RIDGE = 1e-2


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def stages_for(n: int) -> int:
    """S such that N**2 = 2**S; N must be a power of two >= 2."""
    if n < 2 or n & (n - 1):
        raise ValueError(f"N={n} must be a power of two >= 2 (S even)")
    return 2 * (n.bit_length() - 1)


# ------------------------------------------------------------ narrow beams


def narrow_angles(n: int, k: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Azimuths phi_1..phi_N and elevations theta_1..theta_N of the narrow beams."""
    idx = np.arange(1, n + 1)
    u = SQRT2 * (2 * idx - 1 - n) / (2 * n)
    return np.arcsin(u) + boresight(k), np.arccos(u)


def narrow_position(i: int, n: int) -> tuple[int, int]:
    """1-based (azimuth n, elevation p) of narrow codeword ``i``.

    ``mod_N(i) == 0`` wraps to ``N`` so 1..N**2 covers the whole N x N grid.
    """
    if not 1 <= i <= n * n:
        raise IndexError(f"narrow index {i} outside 1..{n * n}")
    col = i % n or n
    return col, _ceil_div(i, n)


def narrow_index(col: int, row: int, n: int) -> int:
    """Inverse of :func:`narrow_position`."""
    return (row - 1) * n + col


def narrow_codeword(i: int, k: int, n: int, cfg: UpaConfig | None = None) -> Beamformer:
    cfg = (cfg or UpaConfig()).for_upa(k)
    col, row = narrow_position(i, n)
    phis, thetas = narrow_angles(n, k)
    return Beamformer(steering(cfg, phis[col - 1], thetas[row - 1]), cfg)


def narrow_directions(n: int, k: int = 1) -> list[Direction]:
    phis, thetas = narrow_angles(n, k)
    return [Direction(phis[c], thetas[r]) for r in range(n) for c in range(n)]


def _narrow_weights(n: int, cfg: UpaConfig) -> np.ndarray:
    phis, thetas = narrow_angles(n, 1)
    PH, TH = np.meshgrid(phis, thetas)  # row-major: elevation outer, azimuth inner
    return steering(cfg.for_upa(1), PH.ravel(), TH.ravel())


# ------------------------------------------------------------- dense grid


def _grid_coords(n: int) -> np.ndarray:
    """The 4N sin/cos coordinates of the grid block centres (same for both axes)."""
    j = np.arange(1, 4 * n + 1, dtype=float)
    outer = 1 - SQRT2 / 2
    return np.where(
        j <= n,
        outer * (2 * j - 1) / (2 * n) - 1,
        np.where(
            j <= 3 * n,
            SQRT2 * (2 * (j - n) - 1) / (4 * n) - SQRT2 / 2,
            outer * (2 * (j - 3 * n) - 1) / (2 * n) + SQRT2 / 2,
        ),
    )


@dataclass(frozen=True, eq=False)
class GridSpec:
    """The 4N x 4N grid of block centres in front of UPA ``k``."""

    n: int
    k: int
    phi: np.ndarray  # (4N,) azimuths, index j-1
    theta: np.ndarray  # (4N,) elevations, index l-1

    @property
    def size(self) -> int:
        return 4 * self.n

    def directions(self) -> tuple[np.ndarray, np.ndarray]:
        """Flattened (azimuth, elevation) in column order of the response matrix (j fastest)."""
        PH, TH = np.meshgrid(self.phi, self.theta)
        return PH.ravel(), TH.ravel()


def dense_grid(n: int, k: int = 1) -> GridSpec:
    stages_for(n)
    c = _grid_coords(n)
    return GridSpec(n, k, np.arcsin(c) + boresight(k), np.arccos(c))


# ------------------------------------------------------------ coverage sets


@dataclass(frozen=True)
class CoverageSet:
    stage: int
    index: int
    nu: int
    delta: int
    mu: int
    J: tuple[int, ...]  # 1-based azimuth grid indices
    L: tuple[int, ...]  # 1-based elevation grid indices

    def blocks(self) -> set[tuple[int, int]]:
        return {(j, l) for j in self.J for l in self.L}


def shape_params(s: int, S: int) -> tuple[int, int, int]:
    """(nu, delta, mu): blocks per row, blocks per column, beams per elevation row."""
    nu = 2 ** (_ceil_div(S - s, 2) + 1)
    delta = 2 ** (_ceil_div(S - s - 1, 2) + 1)
    mu = 2 ** _ceil_div(s - 1, 2)
    return nu, delta, mu


def coverage_set(s: int, i: int, n: int) -> CoverageSet:
    S = stages_for(n)
    if not 0 <= s <= S:
        raise ValueError(f"stage {s} outside 0..{S}")
    if not 1 <= i <= 2**s:
        raise IndexError(f"beam {i} outside 1..{2 ** s} at stage {s}")
    nu, delta, mu = shape_params(s, S)
    a = n + nu * ((i - 1) % mu)
    b = n + delta * (_ceil_div(i, mu) - 1)
    return CoverageSet(s, i, nu, delta, mu, tuple(range(a + 1, a + nu + 1)), tuple(range(b + 1, b + delta + 1)))


def buffer_zone(s: int, i: int, n: int, w: int) -> set[tuple[int, int]]:
    """Blocks within ``w`` of the coverage set but outside it, clipped to the grid."""
    cov = coverage_set(s, i, n)
    size = 4 * n
    J = range(max(1, cov.J[0] - w), min(size, cov.J[-1] + w) + 1)
    L = range(max(1, cov.L[0] - w), min(size, cov.L[-1] + w) + 1)
    return {(j, l) for j in J for l in L} - cov.blocks()


def children(s: int, i: int, n: int) -> tuple[int, int]:
    """Indices of the two stage-(s+1) beams whose coverage tiles beam (s, i).

    Azimuth splits keep the (2i-1, 2i) pairing; elevation splits at stage >= 2 do not,
    so the pair is located from the coverage geometry.
    """
    S = stages_for(n)
    if s >= S:
        raise ValueError("narrow beams have no children")
    parent = coverage_set(s, i, n)
    nu, delta, mu = shape_params(s + 1, S)
    col = (parent.J[0] - n - 1) // nu
    row = (parent.L[0] - n - 1) // delta
    first = row * mu + col + 1
    if nu == parent.nu:  # elevation split: same column, next row
        return first, first + mu
    return first, first + 1


# ------------------------------------------------------------- target matrix


def _block_rows(blocks, n: int) -> np.ndarray:
    """0-based response-matrix rows of 1-based (j, l) blocks."""
    size = 4 * n
    return np.array(sorted(size * (l - 1) + (j - 1) for j, l in blocks), dtype=int)


def target_column(blocks, buffer, n: int, chi: float) -> np.ndarray:
    col = np.zeros(16 * n * n)
    col[_block_rows(buffer, n)] = chi if buffer else 0.0
    col[_block_rows(blocks, n)] = 1.0
    return col


def target_matrix(s: int, n: int, w: int = 1, chi: float = 0.5) -> np.ndarray:
    """Real targets Xi_s: 1 on coverage, chi on the buffer, 0 elsewhere."""
    if not 0 <= chi < 1:
        raise ValueError("chi must lie in [0, 1)")
    if w < 0:
        raise ValueError("buffer width must be non-negative")
    cols = []
    for i in range(1, 2**s + 1):
        cov = coverage_set(s, i, n)
        buf = buffer_zone(s, i, n, w) if w > 0 else set()
        cols.append(target_column(cov.blocks(), buf, n, chi))
    return np.stack(cols, axis=1)


# ---------------------------------------------------------------- synthesis


@lru_cache(maxsize=16)
def _ls_operator(n: int, ny: int, nz: int, ridge: float = DEFAULT_RIDGE) -> np.ndarray:
    """(A A^H + lam I)^-1 A for the dense grid of UPA 1; identical for every UPA in local coordinates.

    ``lam = ridge * trace(A A^H) / N_a``; a floor of 1e-10 is enforced when the
    regularized Gram matrix would still be ill-conditioned.
    """
    phi, theta = dense_grid(n, 1).directions()
    A = steering(UpaConfig(ny, nz, 1), phi, theta).T  # N_a x 16N^2
    gram = A @ A.conj().T
    scale = np.trace(gram).real / gram.shape[0]
    gram = gram + ridge * scale * np.eye(gram.shape[0])
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        lam = 1e-10 * scale
        warnings.warn(f"A A^H ill-conditioned (cond={cond:.3g}); adding Tikhonov floor {lam:.3g}", RuntimeWarning)
        gram = gram + lam * np.eye(gram.shape[0])
    op = np.linalg.solve(gram, A)
    op.setflags(write=False)
    return op


def _normalize_columns(W: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(W, axis=0)
    return W / np.where(norms > 0, norms, 1.0)


def solve_beams(targets: np.ndarray, n: int, cfg: UpaConfig, normalize: bool = True, ridge: float = DEFAULT_RIDGE) -> np.ndarray:
    """Least-squares weights (one per target column) returned as rows."""
    W = _ls_operator(n, cfg.ny, cfg.nz, float(ridge)) @ np.asarray(targets, dtype=complex)
    return (_normalize_columns(W) if normalize else W).T


def synthesize_wide_beams(
    k: int, s: int, n: int, xi: np.ndarray, cfg: UpaConfig | None = None, ridge: float = DEFAULT_RIDGE
) -> list[Beamformer]:
    cfg = (cfg or UpaConfig()).for_upa(k)
    if xi.shape[1] != 2**s:
        raise ValueError(f"stage {s} needs {2**s} target columns, got {xi.shape[1]}")
    return [Beamformer(wv, cfg) for wv in solve_beams(xi, n, cfg, ridge=ridge)]


# -------------------------------------------------------------- worst case


@dataclass(frozen=True)
class WorstCaseBound:
    n: int
    ny: int
    nz: int
    beta: float
    eta_worst: float


def eta_worst(n: int, ny: int = 16, nz: int = 16) -> WorstCaseBound:
    """Closed-form worst-case normalized narrow-beam gain of the proposed placement."""
    beta = 1.0 if n % 2 else math.sin(math.acos(SQRT2 / (2 * n)))
    c = SQRT2 * math.pi / (4 * n)
    num = math.sin(nz * c) * math.sin(beta * ny * c)
    den = ny * nz * math.sin(c) * math.sin(beta * c)
    return WorstCaseBound(n, ny, nz, beta, num / den)


# ------------------------------------------------------------- benchmarks


def benchmark_uniform_real(n: int, k: int = 1, cfg: UpaConfig | None = None) -> list[Beamformer]:
    """N x N response vectors at cell-centred uniform azimuths and elevations of Omega_k."""
    cfg = (cfg or UpaConfig()).for_upa(k)
    t = (2 * np.arange(1, n + 1) - 1) / (2 * n)
    phis = boresight(k) - np.pi / 4 + t * np.pi / 2
    thetas = np.pi / 4 + t * np.pi / 2
    PH, TH = np.meshgrid(phis, thetas)
    return [Beamformer(wv, cfg) for wv in steering(cfg, PH.ravel(), TH.ravel())]


def benchmark_uniform_virtual(n: int, k: int = 1, cfg: UpaConfig | None = None) -> list[Beamformer]:
    """N x N beams uniform in virtual angles over [-sqrt2/2, sqrt2/2] on both axes.

    Centered element indices differ from the 0-based form only by a global phase.
    """
    cfg = (cfg or UpaConfig()).for_upa(k)
    u = SQRT2 * (2 * np.arange(1, n + 1) - 1 - n) / (2 * n)
    H, V = np.meshgrid(u, u)
    return [Beamformer(wv, cfg) for wv in steering_vh(cfg.ny, cfg.nz, V.ravel(), H.ravel())]


# ---------------------------------------------------------- tracking beams


def region_blocks(cols, rows, n: int) -> set[tuple[int, int]]:
    """Grid blocks under the narrow beams at 1-based local (col, row) positions; 2x2 blocks each."""
    J = {n + 2 * (c - 1) + d for c in cols for d in (1, 2)}
    L = {n + 2 * (r - 1) + d for r in rows for d in (1, 2)}
    return {(j, l) for j in J for l in L}


def _rect_buffer(blocks, n: int, w: int) -> set[tuple[int, int]]:
    size = 4 * n
    out = set()
    for j, l in blocks:
        for dj in range(-w, w + 1):
            for dl in range(-w, w + 1):
                jj, ll = j + dj, l + dl
                if 1 <= jj <= size and 1 <= ll <= size:
                    out.add((jj, ll))
    return out - set(blocks)


@lru_cache(maxsize=4096)
def region_beam(n: int, ny: int, nz: int, cols: tuple, rows: tuple, w: int, chi: float, ridge: float) -> np.ndarray:
    """Unit-norm LS beam covering the narrow positions ``cols x rows`` of one UPA (local coordinates)."""
    blocks = region_blocks(cols, rows, n)
    buf = _rect_buffer(blocks, n, w) if w > 0 else set()
    xi = target_column(blocks, buf, n, chi)[:, None]
    wv = solve_beams(xi, n, UpaConfig(ny, nz), ridge=ridge)[0]
    wv.setflags(write=False)
    return wv


def window_rows(row: int, n: int, size: int = 3) -> tuple[int, ...]:
    """``size`` consecutive 1-based rows centred on ``row``, shifted to stay inside 1..N."""
    if n < size:
        raise ValueError(f"N={n} too small for a {size}-row window")
    first = min(max(row - size // 2, 1), n - size + 1)
    return tuple(range(first, first + size))


def neighbour_columns(upa: int, col: int, n: int) -> list[tuple[int, int]]:
    """(upa, col) of the three azimuth neighbours; azimuth is circular across the four UPAs."""
    g = (upa - 1) * n + (col - 1)
    out = []
    for d in (-1, 0, 1):
        gg = (g + d) % (4 * n)
        out.append((gg // n + 1, gg % n + 1))
    return out


@dataclass(frozen=True, eq=False)
class TrackingBeams:
    """Dedicated beams around one narrow position: a 3x3 super-wide beam and three column beams.

    ``superwide`` lists one (upa, weights) per UPA touched by the neighbourhood; the UPAs
    transmit together. ``columns[c]`` is ``((upa, col), weights)`` for the three azimuth
    neighbours, left to right, each covering the shared row window ``rows``.
    """

    superwide: tuple[tuple[int, np.ndarray], ...]
    columns: tuple[tuple[tuple[int, int], np.ndarray], ...]
    rows: tuple[int, ...]


def tracking_codebook(k: int, n: int, center: tuple[int, int], cfg: UpaConfig | None = None, w: int = 1,
                      chi: float = 0.5, ridge: float = DEFAULT_RIDGE) -> TrackingBeams:
    """Tracking beams around the narrow beam at local ``center = (col, row)`` of UPA ``k``."""
    cfg = cfg or UpaConfig()
    col, row = center
    if not (1 <= col <= n and 1 <= row <= n):
        raise IndexError(f"position {center} outside the {n}x{n} narrow grid")
    rows = window_rows(row, n)
    nbrs = neighbour_columns(k, col, n)
    per_upa: dict[int, list[int]] = {}
    for u, c in nbrs:
        per_upa.setdefault(u, []).append(c)
    sw = tuple((u, region_beam(n, cfg.ny, cfg.nz, tuple(cs), rows, w, float(chi), float(ridge))) for u, cs in per_upa.items())
    columns = tuple(((u, c), region_beam(n, cfg.ny, cfg.nz, (c,), rows, w, float(chi), float(ridge))) for u, c in nbrs)
    return TrackingBeams(sw, columns, rows)


# ------------------------------------------------------------ hierarchical


@dataclass(frozen=True, eq=False)
class HierarchicalCodebook:
    """Staged codewords for one UPA; ``stages[s]`` has shape (2**s, N_a)."""

    n: int
    cfg: UpaConfig
    stages: tuple[np.ndarray, ...]
    buffer_width: int = 1
    buffer_gain: float = 0.5
    variant: str = "proposed"
    ridge: float = DEFAULT_RIDGE

    @property
    def S(self) -> int:
        return len(self.stages) - 1

    @property
    def upa(self) -> int:
        return self.cfg.index

    def beam(self, s: int, i: int) -> Beamformer:
        """Codeword i (1-based) of stage s."""
        return Beamformer(self.stages[s][i - 1], self.cfg)

    def narrow(self, i: int) -> Beamformer:
        return self.beam(self.S, i)

    def for_upa(self, k: int) -> "HierarchicalCodebook":
        return replace(self, cfg=self.cfg.for_upa(k))


def build_stages(n: int, cfg: UpaConfig, w: int = 1, chi: float = 0.5, ridge: float = DEFAULT_RIDGE) -> tuple[np.ndarray, ...]:
    S = stages_for(n)
    stages = [solve_beams(target_matrix(s, n, w, chi), n, cfg, ridge=ridge) for s in range(S)]
    stages.append(_narrow_weights(n, cfg))
    for st in stages:
        st.setflags(write=False)
    return tuple(stages)


def build_codebook(
    n: int, k: int = 1, cfg: UpaConfig | None = None, w: int = 1, chi: float = 0.5, ridge: float = DEFAULT_RIDGE
) -> HierarchicalCodebook:
    cfg = (cfg or UpaConfig()).for_upa(k)
    variant = "proposed" if w > 0 else "strict"
    stages = _cached_stages(n, cfg.ny, cfg.nz, int(w), float(chi), float(ridge))
    return HierarchicalCodebook(n, cfg, stages, w, chi, variant, ridge)


@lru_cache(maxsize=32)
def _cached_stages(n, ny, nz, w, chi, ridge):
    return build_stages(n, UpaConfig(ny, nz), w, chi, ridge)


@dataclass(frozen=True, eq=False)
class QupaCodebook:
    """One hierarchical codebook per UPA. Weights are shared: local coordinates are rotation invariant."""

    books: dict[int, HierarchicalCodebook] = field(default_factory=dict)

    def __getitem__(self, k: int) -> HierarchicalCodebook:
        return self.books[k]

    @property
    def n(self) -> int:
        return self.books[1].n

    @property
    def cfg(self) -> UpaConfig:
        return self.books[1].cfg.for_upa(1)

    @classmethod
    def from_book(cls, book: HierarchicalCodebook) -> "QupaCodebook":
        return cls({k: book.for_upa(k) for k in range(1, 5)})


def build_qupa_codebook(
    n: int, cfg: UpaConfig | None = None, w: int = 1, chi: float = 0.5, cache_dir=None, ridge: float = DEFAULT_RIDGE
) -> QupaCodebook:
    cfg = (cfg or UpaConfig()).for_upa(1)
    if cache_dir is not None:
        path = Path(cache_dir) / cache_name(n, cfg, w, chi, ridge)
        if path.exists():
            return load_codebook(path)
        book = build_codebook(n, 1, cfg, w, chi, ridge)
        save_codebook(path, book)
        return QupaCodebook.from_book(book)
    return QupaCodebook.from_book(build_codebook(n, 1, cfg, w, chi, ridge))


# -------------------------------------------------------------------- I/O


def cache_name(n: int, cfg: UpaConfig, w: int, chi: float, ridge: float = DEFAULT_RIDGE) -> str:
    key = json.dumps([n, cfg.ny, cfg.nz, w, float(chi), float(ridge), FORMAT_VERSION])
    return f"codebook_N{n}_{cfg.ny}x{cfg.nz}_w{w}_{hashlib.sha1(key.encode()).hexdigest()[:10]}.npz"


def save_codebook(path, book: HierarchicalCodebook) -> Path:
    """Write an .npz container; weights are stored as little-endian complex128 ('<c16')."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "format": "thzbeam.codebook",
        "version": FORMAT_VERSION,
        "n": book.n,
        "ny": book.cfg.ny,
        "nz": book.cfg.nz,
        "buffer_width": book.buffer_width,
        "buffer_gain": book.buffer_gain,
        "variant": book.variant,
        "ridge": book.ridge,
        "upas": [1, 2, 3, 4],
        "byte_order": "little",
        "dtype": "complex128",
    }
    arrays = {f"stage_{s}": np.ascontiguousarray(st, dtype="<c16") for s, st in enumerate(book.stages)}
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta, sort_keys=True)), **arrays)
    return path


def load_codebook(path) -> QupaCodebook:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("format") != "thzbeam.codebook" or meta.get("version") != FORMAT_VERSION:
            raise ValueError(f"{path}: not a version-{FORMAT_VERSION} codebook file")
        S = stages_for(meta["n"])
        stages = []
        for s in range(S + 1):
            st = np.array(data[f"stage_{s}"], dtype=complex)
            st.setflags(write=False)
            stages.append(st)
    cfg = UpaConfig(meta["ny"], meta["nz"], 1)
    book = HierarchicalCodebook(
        meta["n"], cfg, tuple(stages), meta["buffer_width"], meta["buffer_gain"], meta["variant"], meta["ridge"]
    )
    return QupaCodebook.from_book(book)
