"""Band-limited real fields on the d-torus.

A field is stored as the full array of Fourier coefficients on the cut-off
lattice ``{-N, ..., N}^d``; array index ``i`` along any axis holds the mode
value ``i - N``.  Real fields satisfy ``u[-m] = conj(u[m])``, which in array
terms means that flipping every lattice axis conjugates the array.

The spectral convention is used throughout: the basis ``e_m`` satisfies
``(1 - Laplacian) e_m = <m>^2 e_m`` with ``<m>^2 = 1 + |m|^2`` and the torus
carries the normalized measure, so ``(e_m, e_n) = delta_{m+n, 0}``.

All array-level functions accept leading batch dimensions.  The lattice
occupies the trailing ``d`` axes; pass ``d`` explicitly whenever a batch axis
is present.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence, Union

import numpy as np

ArrayLike = Union[np.ndarray, "FourierField"]

HERMITIAN_TOL = 1e-12


@dataclass(frozen=True)
class ModeLattice:
    """The cut-off lattice ``Z_N^d = {-N, ..., N}^d``.

    Parameters
    ----------
    d : int
        Spatial dimension.  Fields live in ``d >= 2``; ``d = 1`` is
        accepted for the strand sub-lattices ``Z_N^{d-1}`` of ``d = 2``.
    N : int
        Fourier cut-off, non-negative.
    """

    d: int
    N: int

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"d must be a positive integer, got {self.d}")
        if int(self.N) != self.N or self.N < 0:
            raise ValueError(f"N must be a non-negative integer, got {self.N}")

    @property
    def K(self) -> int:
        """Number of modes per axis, ``2N + 1``."""
        return 2 * self.N + 1

    @property
    def shape(self) -> tuple:
        return (self.K,) * self.d

    @property
    def size(self) -> int:
        return self.K ** self.d

    @cached_property
    def axis_modes(self) -> np.ndarray:
        return np.arange(-self.N, self.N + 1)

    @cached_property
    def modes(self) -> np.ndarray:
        """Mode vectors, shape ``(K,)*d + (d,)``, lexicographic layout."""
        grids = np.meshgrid(*([self.axis_modes] * self.d), indexing="ij")
        return np.stack(grids, axis=-1)

    @cached_property
    def norm2(self) -> np.ndarray:
        """``|m|^2`` on the lattice."""
        return np.sum(self.modes.astype(float) ** 2, axis=-1)

    @cached_property
    def bracket2(self) -> np.ndarray:
        """``<m>^2 = 1 + |m|^2`` on the lattice."""
        return 1.0 + self.norm2

    @cached_property
    def linf(self) -> np.ndarray:
        """``|m|_inf`` on the lattice."""
        return np.max(np.abs(self.modes), axis=-1)

    def index(self, m: Sequence[int]) -> tuple:
        """Array index of mode ``m``."""
        m = tuple(int(x) for x in m)
        if len(m) != self.d:
            raise ValueError(f"mode {m} has length {len(m)}, expected {self.d}")
        if max(abs(x) for x in m) > self.N:
            raise ValueError(f"mode {m} lies outside Z_{self.N}^{self.d}")
        return tuple(x + self.N for x in m)

    def contains(self, m: Sequence[int]) -> bool:
        """Projector ``Pi_N(m)``."""
        return max(abs(int(x)) for x in m) <= self.N

    def iter_modes(self):
        """Modes in lexicographic order."""
        return (tuple(int(x) for x in v) for v in self.modes.reshape(-1, self.d))


def bracket(m) -> float:
    """``<m> = sqrt(1 + m.m)``."""
    m = np.asarray(m, dtype=float)
    return float(np.sqrt(1.0 + m @ m))


def check_color(c: int, d: int) -> int:
    """Validate a colour ``c`` in ``[d] = {1, ..., d}``."""
    if int(c) != c or not 1 <= c <= d:
        raise ValueError(f"colour must lie in 1..{d}, got {c}")
    return int(c)


def splice(x, y, c: int) -> np.ndarray:
    """Replace component ``c`` of ``x`` by that of ``y``.

    ``splice(x, y, c)`` is ``chi^c(x, y)``: components ``i != c`` come from
    ``x`` and component ``c`` from ``y``.  Colours are 1-based.

    Examples
    --------
    >>> splice((1, 2, 3), (9, 9, 9), 2).tolist()
    [1, 9, 3]
    """
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    c = check_color(c, x.shape[-1])
    out = x.copy()
    out[..., c - 1] = y[..., c - 1]
    return out


def hat(m, c: int) -> np.ndarray:
    """``m_c-hat``: the vector ``m`` with component ``c`` set to zero."""
    m = np.asarray(m)
    return splice(m, np.zeros_like(m), c)


@dataclass(frozen=True)
class FourierField:
    """A validated real field given by its Fourier coefficients.

    Parameters
    ----------
    lattice : ModeLattice
    coeffs : ndarray
        Complex array of shape ``lattice.shape``.  Hermitian symmetry is
        checked to ``HERMITIAN_TOL`` relative to the largest coefficient.
    """

    lattice: ModeLattice
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = np.asarray(self.coeffs, dtype=complex)
        if a.shape != self.lattice.shape:
            raise ValueError(f"coefficient shape {a.shape} does not match lattice {self.lattice.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("field has non-finite coefficients")
        err = hermitian_defect(a, self.lattice.d)
        if err > HERMITIAN_TOL * max(1.0, float(np.max(np.abs(a), initial=0.0))):
            raise ValueError(f"coefficients are not Hermitian symmetric (defect {err:.3e})")
        a.setflags(write=False)
        object.__setattr__(self, "coeffs", a)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.coeffs, dtype=dtype)

    def __getitem__(self, m):
        return self.coeffs[self.lattice.index(m)]


def as_coeffs(u: ArrayLike) -> np.ndarray:
    """Coefficient array of a field or array."""
    if isinstance(u, FourierField):
        return u.coeffs
    return np.asarray(u)


def _d(u: np.ndarray, d: int | None) -> int:
    return u.ndim if d is None else d


def lattice_of(u: ArrayLike, d: int | None = None) -> ModeLattice:
    a = as_coeffs(u)
    d = _d(a, d)
    K = a.shape[-1]
    if K % 2 == 0 or any(s != K for s in a.shape[a.ndim - d:]):
        raise ValueError(f"array shape {a.shape} is not a cut-off lattice")
    return ModeLattice(d, (K - 1) // 2)


def lattice_axes(u: np.ndarray, d: int | None = None) -> tuple:
    d = _d(u, d)
    return tuple(range(u.ndim - d, u.ndim))


def reflect(u: ArrayLike, d: int | None = None) -> np.ndarray:
    """``m -> u[-m]``, i.e. flip all lattice axes."""
    a = as_coeffs(u)
    return np.flip(a, axis=lattice_axes(a, d))


def hermitian_defect(u: ArrayLike, d: int | None = None) -> float:
    """Max-abs violation of ``u[-m] = conj(u[m])``."""
    a = as_coeffs(u)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - np.conj(reflect(a, d)))))


def hermitian_part(u: ArrayLike, d: int | None = None) -> np.ndarray:
    """Project onto real fields: ``(u[m] + conj(u[-m])) / 2``."""
    a = as_coeffs(u)
    return 0.5 * (a + np.conj(reflect(a, d)))


def same_lattice(*fields: ArrayLike, d: int | None = None) -> None:
    shapes = {as_coeffs(f).shape[-(d or as_coeffs(f).ndim):] for f in fields}
    if len(shapes) != 1:
        raise ValueError(f"lattice mismatch: {sorted(shapes)}")


# ---------------------------------------------------------------------------
# constructors


def zeros(lattice: ModeLattice, batch: tuple = ()) -> np.ndarray:
    return np.zeros(tuple(batch) + lattice.shape, dtype=complex)


def constant(lattice: ModeLattice, value: float = 1.0) -> np.ndarray:
    """The constant field ``value`` (coefficient at ``m = 0`` only)."""
    u = zeros(lattice)
    u[(lattice.N,) * lattice.d] = value
    return u


def cosine_mode(lattice: ModeLattice, m: Sequence[int], amplitude: float = 1.0) -> np.ndarray:
    """``amplitude * (e_m + e_{-m})``; for ``m = 0`` this is ``2 * amplitude``."""
    u = zeros(lattice)
    u[lattice.index(m)] += amplitude
    u[lattice.index([-x for x in m])] += amplitude
    return u


def random_field(lattice: ModeLattice, rng: np.random.Generator, batch: tuple = (),
                 decay: float = 0.0) -> np.ndarray:
    """Real field with independent Gaussian coefficients.

    ``E|u_m|^2 = <m>^{-2 decay}``; used for property tests.
    """
    shape = tuple(batch) + lattice.shape
    z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    z = hermitian_part(z, lattice.d) * np.sqrt(2.0)
    return z * lattice.bracket2 ** (-decay / 2)


def embed(u: ArrayLike, N_new: int, d: int | None = None) -> np.ndarray:
    """Move a field to cut-off ``N_new``: zero-pad or apply ``Pi_{N_new}``."""
    a = as_coeffs(u)
    d = _d(a, d)
    N = (a.shape[-1] - 1) // 2
    batch = a.shape[:a.ndim - d]
    if N_new >= N:
        out = np.zeros(batch + (2 * N_new + 1,) * d, dtype=a.dtype)
        sl = (Ellipsis,) + (slice(N_new - N, N_new + N + 1),) * d
        out[sl] = a
        return out
    sl = (Ellipsis,) + (slice(N - N_new, N + N_new + 1),) * d
    return a[sl].copy()


def project(u: ArrayLike, M: int, d: int | None = None) -> np.ndarray:
    """``Pi_M u`` on the same lattice."""
    a = np.array(as_coeffs(u), copy=True)
    lat = lattice_of(a, d)
    a[..., lat.linf > M] = 0
    return a


# ---------------------------------------------------------------------------
# pairings and norms


def l2_pairing(u: ArrayLike, v: ArrayLike, d: int | None = None):
    """``(u, v) = sum_m u_m v_{-m}``, the L^2 pairing of real fields."""
    a, b = as_coeffs(u), as_coeffs(v)
    same_lattice(a, b, d=d)
    axes = lattice_axes(a, d)
    return np.sum(a * reflect(b, d), axis=axes).real


def sobolev_norm(u: ArrayLike, alpha: float, d: int | None = None):
    """``||u||_{H^alpha} = sqrt(sum_m <m>^{2 alpha} |u_m|^2)``."""
    a = as_coeffs(u)
    lat = lattice_of(a, d)
    w = lat.bracket2 ** alpha
    return np.sqrt(np.sum(w * np.abs(a) ** 2, axis=lattice_axes(a, d)))


def l2_norm(u: ArrayLike, d: int | None = None):
    return sobolev_norm(u, 0.0, d)


def heat_semigroup(u: ArrayLike, t: float, d: int | None = None) -> np.ndarray:
    """``P_t u = exp(-t (1 - Laplacian)) u``."""
    if t < 0:
        raise ValueError(f"heat semigroup needs t >= 0, got {t}")
    a = as_coeffs(u)
    return a * np.exp(-t * lattice_of(a, d).bracket2)


# ---------------------------------------------------------------------------
# direct space


def grid_size(N: int, oversample: int) -> int:
    return oversample * (2 * N + 1)


def to_grid(u: ArrayLike, oversample: int = 2, d: int | None = None) -> np.ndarray:
    """Values on the uniform grid with ``oversample * (2N+1)`` points per axis.

    Grid point ``j`` sits at ``x = 2 pi j / M``.  The imaginary part, which is
    round-off for real fields, is discarded.
    """
    a = as_coeffs(u)
    d = _d(a, d)
    N = (a.shape[-1] - 1) // 2
    M = grid_size(N, oversample)
    full = np.zeros(a.shape[:a.ndim - d] + (M,) * d, dtype=complex)
    idx = np.arange(-N, N + 1) % M
    full[(Ellipsis,) + np.ix_(*([idx] * d))] = a
    vals = np.fft.ifftn(full, axes=lattice_axes(full, d)) * M ** d
    return vals.real


def from_grid(values: np.ndarray, N: int, d: int | None = None) -> np.ndarray:
    """Fourier coefficients on ``Z_N^d`` of grid values (inverse of ``to_grid``)."""
    v = np.asarray(values)
    d = _d(v, d)
    M = v.shape[-1]
    c = np.fft.fftn(v, axes=lattice_axes(v, d)) / M ** d
    idx = np.r_[M - N:M, 0:N + 1]
    return c[(Ellipsis,) + np.ix_(*([idx] * d))]


def grid_mean(values: np.ndarray, d: int | None = None):
    """Normalized integral over the torus."""
    v = np.asarray(values)
    return np.mean(v, axis=lattice_axes(v, d))


# ---------------------------------------------------------------------------
# Besov norms


@dataclass(frozen=True)
class BesovSpec:
    """Regularity ``alpha`` with integrability indices ``p, q`` in ``[1, inf]``."""

    alpha: float
    p: float = 2.0
    q: float = 2.0

    def __post_init__(self):
        for name in ("p", "q"):
            v = getattr(self, name)
            if not (v >= 1):
                raise ValueError(f"Besov index {name} must be >= 1, got {v}")


def lp_block_index(lattice: ModeLattice) -> np.ndarray:
    """Littlewood-Paley block ``j`` of every mode: -1 for ``m = 0``, else
    the ``j >= 0`` with ``2^{j-1} <= |m|_inf < 2^j``."""
    linf = lattice.linf
    j = np.full(linf.shape, -1, dtype=int)
    nz = linf > 0
    j[nz] = np.floor(np.log2(linf[nz])).astype(int) + 1
    return j


def _lp(values, p, axes):
    if np.isinf(p):
        return np.max(np.abs(values), axis=axes)
    return np.mean(np.abs(values) ** p, axis=axes) ** (1.0 / p)


def besov_norm(u: ArrayLike, spec: BesovSpec, oversample: int = 4, d: int | None = None):
    """``||u||_{B^alpha_{p,q}}`` from grid evaluation of the dyadic blocks.

    Block L^p norms use the mean over ``(oversample (2N+1))^d`` grid points;
    ``p = inf`` is the grid maximum.  Blocks are weighted by ``2^{j alpha}``
    and aggregated in ``l^q``.
    """
    if oversample < 2:
        raise ValueError(f"oversample must be >= 2, got {oversample}")
    a = as_coeffs(u)
    d = _d(a, d)
    lat = lattice_of(a, d)
    blocks = lp_block_index(lat)
    axes = lattice_axes(a, d)
    terms = []
    for j in range(-1, int(blocks.max()) + 1):
        piece = np.where(blocks == j, a, 0)
        terms.append(2.0 ** (j * spec.alpha) * _lp(to_grid(piece, oversample, d), spec.p, axes))
    terms = np.stack(terms, axis=-1)
    if np.isinf(spec.q):
        return np.max(terms, axis=-1)
    return np.sum(terms ** spec.q, axis=-1) ** (1.0 / spec.q)


# ---------------------------------------------------------------------------
# tensor (M^p) norms


def gram(u: ArrayLike, c: int, d: int | None = None) -> np.ndarray:
    """Colour-``c`` Gram matrix ``G_ab = sum_k u_(k,a) conj(u_(k,b))``.

    ``k`` runs over the complementary modes ``m_c-hat``; ``G`` is Hermitian
    positive semi-definite with ``Tr G = ||u||^2`` and
    ``Tr G^2 = (N^c(u,u,u), u)``.
    """
    a = as_coeffs(u)
    d = _d(a, d)
    c = check_color(c, d)
    ax = a.ndim - d + c - 1
    a = np.moveaxis(a, ax, -1)
    K = a.shape[-1]
    a = a.reshape(a.shape[:a.ndim - d] + (-1, K))
    return np.einsum("...ka,...kb->...ab", a, np.conj(a))


def _trig_basis(N: int) -> np.ndarray:
    """Unitary map from the exponential basis to a real trigonometric basis.

    Column ``N`` is the constant, column ``N+k`` the cosine and ``N-k`` the
    sine of frequency ``k``.
    """
    K = 2 * N + 1
    U = np.zeros((K, K), dtype=complex)
    U[N, N] = 1.0
    s = 1 / np.sqrt(2)
    for k in range(1, N + 1):
        U[N + k, N + k] = s
        U[N - k, N + k] = s
        U[N + k, N - k] = -1j * s
        U[N - k, N - k] = 1j * s
    return U


def m_operator(u: ArrayLike, c: int, d: int | None = None) -> np.ndarray:
    """Real symmetric PSD matrix ``M_c(u)`` of size ``2N+1``.

    This is the Gram matrix written in the real trigonometric basis (constant
    at the centre index, cosines above and sines below), which is real for
    real fields; its spectrum, trace and powers coincide with those of
    ``gram``.
    """
    G = gram(u, c, d)
    U = _trig_basis((G.shape[-1] - 1) // 2)
    R = np.conj(U.T) @ G @ U
    R = R.real
    return 0.5 * (R + np.swapaxes(R, -1, -2))


def m_norm(u: ArrayLike, c: int, p: int = 4, d: int | None = None):
    """``||u||_{M^p_c} = Tr(M_c(u)^{p/2})^{1/p}`` for even ``p >= 2``."""
    if int(p) != p or p < 2 or p % 2:
        raise ValueError(f"M^p norms need an even integer p >= 2, got {p}")
    lam = np.linalg.eigvalsh(m_operator(u, c, d))
    lam = np.maximum(lam, 0.0)
    return np.sum(lam ** (p // 2), axis=-1) ** (1.0 / p)


def m_norm_total(u: ArrayLike, p: int = 4, d: int | None = None):
    """``(sum_c ||u||_{M^p_c}^p)^{1/p}``."""
    a = as_coeffs(u)
    d = _d(a, d)
    return sum(m_norm(a, c, p, d) ** p for c in range(1, d + 1)) ** (1.0 / p)
