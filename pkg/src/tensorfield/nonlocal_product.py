"""The coloured non-local product and its pairings.

For a colour ``c`` the product is

    N^c(f, g, h)_m = sum_n f_(m_c-hat, n_c) g_{-n} h_(n_c-hat, m_c),

with ``n`` over the cut-off lattice.  It is not a convolution.  Moving axis
``c`` last and flattening the rest turns every field into a
``(K^{d-1}, K)`` matrix, after which

    B = G~^T H,   out = F B,

where ``G~`` is ``g`` reflected.  Cost is ``O(K^{d+1})`` per colour against
``O(K^{2d})`` for the naive sum, which is kept as an oracle together with a
direct-space quadrature.
"""

from __future__ import annotations

import enum

import numpy as np

from .lattice_field import (
    ArrayLike,
    as_coeffs,
    check_color,
    gram,
    lattice_of,
    l2_pairing,
    reflect,
    same_lattice,
    to_grid,
    from_grid,
)


class PairingKind(enum.Enum):
    """Which slot of ``N^c`` is left open for the target field."""

    MELONIC = "melonic"          # N^c(target, a, b)
    NON_MELONIC = "non_melonic"  # N^c(a, b, target)
    EXTERIOR = "exterior"        # N^c(a, target, b)
    FULL = "full"


def _to_matrix(a: np.ndarray, c: int, d: int):
    ax = a.ndim - d + c - 1
    moved = np.moveaxis(a, ax, -1)
    K = moved.shape[-1]
    return moved.reshape(moved.shape[:a.ndim - d] + (-1, K)), moved.shape


def _from_matrix(m: np.ndarray, moved_shape, c: int, d: int):
    out = m.reshape(m.shape[:-2] + tuple(moved_shape[-d:]))
    return np.moveaxis(out, -1, out.ndim - d + c - 1)


def nonlocal_product_c(f: ArrayLike, g: ArrayLike, h: ArrayLike, c: int,
                       d: int | None = None) -> np.ndarray:
    """Colour-``c`` product ``N^c(f, g, h)`` by two staged contractions.

    First ``B(n_c, m_c) = sum_{n_c-hat} g_{-n} h_(n_c-hat, m_c)``, then
    ``out_m = sum_{n_c} f_(m_c-hat, n_c) B(n_c, m_c)``.  Leading batch axes
    broadcast against each other.
    """
    f, g, h = (as_coeffs(x) for x in (f, g, h))
    d = f.ndim if d is None else d
    same_lattice(f, g, h, d=d)
    c = check_color(c, d)
    F, shp = _to_matrix(f, c, d)
    G, _ = _to_matrix(reflect(g, d), c, d)
    H, _ = _to_matrix(h, c, d)
    B = np.matmul(np.swapaxes(G, -1, -2), H)
    return _from_matrix(np.matmul(F, B), shp, c, d)


def nonlocal_product(f: ArrayLike, g: ArrayLike, h: ArrayLike, d: int | None = None) -> np.ndarray:
    """``N(f, g, h) = sum_c N^c(f, g, h)``."""
    a = as_coeffs(f)
    d = a.ndim if d is None else d
    out = nonlocal_product_c(f, g, h, 1, d)
    for c in range(2, d + 1):
        out = out + nonlocal_product_c(f, g, h, c, d)
    return out


def naive_nonlocal_product_c(f: ArrayLike, g: ArrayLike, h: ArrayLike, c: int) -> np.ndarray:
    """Oracle: the literal Fourier triple sum, ``O(K^{2d})``, unbatched.

    The sum runs over explicit index arithmetic, with ``-n`` realised as
    ``2N - i`` rather than by reflecting arrays.
    """
    f, g, h = (np.asarray(as_coeffs(x)) for x in (f, g, h))
    d = f.ndim
    c = check_color(c, d)
    K = f.shape[0]
    ci = c - 1
    # letters: output m -> a.., internal n -> p..
    out_idx = [chr(ord("a") + i) for i in range(d)]
    n_idx = [chr(ord("p") + i) for i in range(d)]
    f_idx = [n_idx[i] if i == ci else out_idx[i] for i in range(d)]
    h_idx = [out_idx[i] if i == ci else n_idx[i] for i in range(d)]
    neg = np.arange(K)[::-1]
    g_neg = g[np.ix_(*([neg] * d))]
    spec = "".join(f_idx) + "," + "".join(n_idx) + "," + "".join(h_idx) + "->" + "".join(out_idx)
    return np.einsum(spec, f, g_neg, h, optimize=False)


def quadrature_nonlocal_product_c(f: ArrayLike, g: ArrayLike, h: ArrayLike, c: int,
                                  oversample: int = 2) -> np.ndarray:
    """Oracle: ``int f(chi^c(x,y)) g(y) h(chibar^c(x,y)) dy`` on a grid.

    The fields are sampled on a uniform grid, the ``y`` integral is the grid
    mean (exact for band-limited integrands when the grid resolves twice the
    cut-off) and the result is transformed back to ``Z_N^d``.
    """
    f, g, h = (np.asarray(as_coeffs(x)) for x in (f, g, h))
    d = f.ndim
    c = check_color(c, d)
    N = (f.shape[0] - 1) // 2
    F, G, H = (to_grid(x, oversample) for x in (f, g, h))
    M = F.shape[0]
    ci = c - 1
    # F[x_chat, y_c], G[y], H[y_chat, x_c]
    x_idx = [chr(ord("a") + i) for i in range(d)]
    y_idx = [chr(ord("p") + i) for i in range(d)]
    f_idx = [y_idx[i] if i == ci else x_idx[i] for i in range(d)]
    h_idx = [x_idx[i] if i == ci else y_idx[i] for i in range(d)]
    spec = "".join(f_idx) + "," + "".join(y_idx) + "," + "".join(h_idx) + "->" + "".join(x_idx)
    vals = np.einsum(spec, F, G, H, optimize=True) / M ** d
    return from_grid(vals, N)


def interaction(phi: ArrayLike, d: int | None = None, check: bool = False):
    """``I(phi) = sum_c Tr(G_c(phi)^2) = ||phi||^4_{M^4}``.

    With ``check=True`` the pairing route ``sum_c (N^c(phi,phi,phi), phi)`` is
    evaluated as well and the two must agree to ``1e-10`` relative.
    """
    a = as_coeffs(phi)
    d = a.ndim if d is None else d
    total = 0.0
    for c in range(1, d + 1):
        G = gram(a, c, d)
        total = total + np.sum(np.abs(G) ** 2, axis=(-2, -1))
    if check:
        other = l2_pairing(nonlocal_product(a, a, a, d), a, d)
        scale = np.maximum(np.abs(total), 1e-300)
        if np.any(np.abs(other - total) > 1e-10 * scale + 1e-14):
            raise ArithmeticError(f"interaction routes disagree: {total} vs {other}")
    return total


def _support_ok(target: np.ndarray, c: int, d: int, where: str) -> bool:
    lat = lattice_of(target, d)
    m = lat.modes
    ci = c - 1
    if where == "line":
        # c-line: m_c-hat = 0
        mask = np.any(np.delete(m, ci, axis=-1) != 0, axis=-1)
    else:
        # c-hat hyperplane: m_c = 0
        mask = m[..., ci] != 0
    return not np.any(np.abs(target[..., mask]) > 0)


def partial_pairing(kind: PairingKind | str, a: ArrayLike, b: ArrayLike, c: int,
                    target: ArrayLike, d: int | None = None, support: str | None = None) -> np.ndarray:
    """``N^c`` with the open slot of ``kind`` filled by ``target``.

    Melonic is ``N^c(target, a, b)``, non-melonic ``N^c(a, b, target)`` and
    exterior ``N^c(a, target, b)``.  ``support`` optionally asserts that the
    target lives on the ``c``-line (``"line"``, melonic only) or on the
    ``c``-hat hyperplane (``"hyperplane"``, non-melonic only).
    """
    kind = PairingKind(kind)
    t = as_coeffs(target)
    d = t.ndim if d is None else d
    if support is not None:
        allowed = {PairingKind.MELONIC: "line", PairingKind.NON_MELONIC: "hyperplane"}
        if allowed.get(kind) != support:
            raise ValueError(f"support request {support!r} is incompatible with {kind.value} pairing")
        if not _support_ok(t, c, d, support):
            raise ValueError(f"target is not supported on the requested {support}")
    if kind is PairingKind.MELONIC:
        return nonlocal_product_c(t, a, b, c, d)
    if kind is PairingKind.NON_MELONIC:
        return nonlocal_product_c(a, b, t, c, d)
    if kind is PairingKind.EXTERIOR:
        return nonlocal_product_c(a, t, b, c, d)
    raise ValueError("FULL pairing has no open slot; call nonlocal_product_c")


def interaction_gradient(phi: ArrayLike, d: int | None = None) -> np.ndarray:
    """L^2 gradient of ``I/4``, which is ``N(phi, phi, phi)``."""
    a = as_coeffs(phi)
    return nonlocal_product(a, a, a, d)


def action_gradient(phi: ArrayLike, counterterm: float, d: int | None = None) -> np.ndarray:
    """Langevin drift ``c phi - (1 - Laplacian) phi - N(phi, phi, phi)``."""
    a = as_coeffs(phi)
    lat = lattice_of(a, d)
    return counterterm * a - lat.bracket2 * a - interaction_gradient(a, d)
