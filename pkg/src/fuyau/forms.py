"""Exterior calculus of (p,q)-forms on the flat torus [0, 2pi)^{2n}.

Coordinates: z_j = x_{2j} + i x_{2j+1} (0-based real axes), so the complex
coordinate z_j pairs real axes 2j and 2j+1.

Storage convention
------------------
A ``FormField`` of bidegree (p, q) stores the *literal* coefficients a_{IJ} of

    sum_{I, J} a_{IJ} dz^I ^ dzbar^J,      dz^I = dz^{i_1} ^ ... ^ dz^{i_p},

with I, J strictly increasing multi-indices.  No sqrt(-1) factors are hidden
in the storage.  A real (1,1)-form written as sqrt(-1) h_{ij} dz^i ^ dzbar^j
with Hermitian h is therefore stored as ``1j * h`` (see :func:`from_hermitian`
and :func:`to_hermitian`).  The only place where powers of sqrt(-1) and the
Lebesgue factor 2^n enter is the conversion of top-degree forms in
:func:`top_ratio` and :func:`integrate`:

    omega^n = n! det(g) (sqrt(-1))^n (-1)^{n(n-1)/2} dz^{1..n} ^ dzbar^{1..n}
            = n! det(g) 2^n dx^1 ^ ... ^ dx^{2n}.

Coefficient arrays have shape ``(ncomp, *s)`` where ``s`` is broadcastable to
the grid shape ``(N,) * 2n``: a field that is constant along a real axis may
keep a singleton axis there.  Spectral derivatives along singleton axes vanish,
and pointwise algebra broadcasts, so compact and full storage give identical
values.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic collocation grid with N points per real axis."""

    n: int
    N: int

    def __post_init__(self):
        if self.n not in (2, 3):
            raise ValueError(f"complex dimension must be 2 or 3, got {self.n}")
        if self.N % 2 or self.N < 8:
            raise ValueError(f"N must be even and >= 8, got {self.N}")

    @property
    def ndim(self) -> int:
        return 2 * self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.ndim

    @property
    def npoints(self) -> int:
        return self.N ** self.ndim

    @property
    def spacing(self) -> float:
        return 2 * np.pi / self.N

    def axis_coords(self) -> np.ndarray:
        return np.arange(self.N) * self.spacing

    def coord(self, axis: int) -> np.ndarray:
        """Coordinate x_axis as an array with a singleton shape on all other axes."""
        shape = [1] * self.ndim
        shape[axis] = self.N
        return self.axis_coords().reshape(shape)

    def coords(self) -> list[np.ndarray]:
        return [self.coord(a) for a in range(self.ndim)]

    def full(self, arr: np.ndarray) -> np.ndarray:
        """Broadcast a compact point array to the full grid (a copy)."""
        return np.array(np.broadcast_to(arr, self.shape))


def make_grid(n: int, N: int) -> GridSpec:
    return GridSpec(n, N)


# ---------------------------------------------------------------------------
# multi-index bookkeeping


@functools.lru_cache(maxsize=None)
def basis(n: int, p: int) -> tuple[tuple[int, ...], ...]:
    return tuple(itertools.combinations(range(n), p))


@functools.lru_cache(maxsize=None)
def basis_index(n: int, p: int) -> dict[tuple[int, ...], int]:
    return {I: k for k, I in enumerate(basis(n, p))}


def ncomp(n: int, p: int, q: int) -> int:
    return math.comb(n, p) * math.comb(n, q)


def _comp(n: int, q: int, iI: int, iJ: int) -> int:
    return iI * math.comb(n, q) + iJ


def _sort_sign(seq: tuple[int, ...]) -> int:
    """Sign of the permutation sorting ``seq`` (distinct entries)."""
    sign = 1
    s = list(seq)
    for i in range(len(s)):
        for j in range(i + 1, len(s)):
            if s[i] > s[j]:
                sign = -sign
    return sign


@functools.lru_cache(maxsize=None)
def _wedge_table(n: int, p1: int, q1: int, p2: int, q2: int):
    """Entries (comp_a, comp_b, comp_out, sign) for the wedge of two basis forms."""
    table = []
    B1, C1 = basis(n, p1), basis(n, q1)
    B2, C2 = basis(n, p2), basis(n, q2)
    out_p, out_q = basis_index(n, p1 + p2), basis_index(n, q1 + q2)
    # dz^I1 dzb^J1 dz^I2 dzb^J2 = (-1)^{q1 p2} dz^I1 dz^I2 dzb^J1 dzb^J2
    base = -1 if (q1 * p2) % 2 else 1
    for (a, I1), (b, J1) in itertools.product(enumerate(B1), enumerate(C1)):
        for (c, I2), (d, J2) in itertools.product(enumerate(B2), enumerate(C2)):
            if set(I1) & set(I2) or set(J1) & set(J2):
                continue
            I, J = I1 + I2, J1 + J2
            sign = base * _sort_sign(I) * _sort_sign(J)
            table.append((
                _comp(n, q1, a, b),
                _comp(n, q2, c, d),
                _comp(n, q1 + q2, out_p[tuple(sorted(I))], out_q[tuple(sorted(J))]),
                sign,
            ))
    return tuple(table)


@functools.lru_cache(maxsize=None)
def _d_table(n: int, p: int, q: int, bar: bool):
    """Entries (comp_in, direction k, comp_out, sign) for d = sum_k dz^k d/dz_k (or the bar version)."""
    table = []
    BI, BJ = basis(n, p), basis(n, q)
    if bar:
        out_p, out_q = basis_index(n, p), basis_index(n, q + 1)
    else:
        out_p, out_q = basis_index(n, p + 1), basis_index(n, q)
    for (a, I), (b, J) in itertools.product(enumerate(BI), enumerate(BJ)):
        for k in range(n):
            if bar:
                if k in J:
                    continue
                # dzb^k ^ dz^I ^ dzb^J = (-1)^p dz^I ^ dzb^k ^ dzb^J
                sign = (-1) ** p * _sort_sign((k,) + J)
                out = _comp(n, q + 1, out_p[I], out_q[tuple(sorted((k,) + J))])
            else:
                if k in I:
                    continue
                sign = _sort_sign((k,) + I)
                out = _comp(n, q, out_p[tuple(sorted((k,) + I))], out_q[J])
            table.append((_comp(n, q, a, b), k, out, sign))
    return tuple(table)


# ---------------------------------------------------------------------------
# fields


def _point_shape(*arrays) -> tuple[int, ...]:
    return np.broadcast_shapes(*(a.shape[1:] for a in arrays))


@dataclass(frozen=True, eq=False)
class FormField:
    """Grid-sampled (p,q)-form; ``coeffs`` has shape (ncomp, *s), s broadcastable to the grid."""

    grid: GridSpec
    p: int
    q: int
    coeffs: np.ndarray
    name: str = field(default="")

    def __post_init__(self):
        n = self.grid.n
        if not (0 <= self.p <= n and 0 <= self.q <= n):
            raise ValueError(f"bidegree ({self.p},{self.q}) out of range for n={n}")
        nc = ncomp(n, self.p, self.q)
        if self.coeffs.ndim != 1 + self.grid.ndim or self.coeffs.shape[0] != nc:
            raise ValueError(
                f"coefficient array of shape {self.coeffs.shape} does not match "
                f"({nc}, *grid) for bidegree ({self.p},{self.q})"
            )
        np.broadcast_shapes(self.coeffs.shape[1:], self.grid.shape)

    @property
    def bidegree(self) -> tuple[int, int]:
        return self.p, self.q

    @property
    def degree(self) -> int:
        return self.p + self.q

    @property
    def point_shape(self) -> tuple[int, ...]:
        return self.coeffs.shape[1:]

    def _like(self, coeffs: np.ndarray, name: str = "") -> "FormField":
        return FormField(self.grid, self.p, self.q, coeffs, name)

    def __add__(self, other: "FormField") -> "FormField":
        _check_same(self, other)
        return self._like(self.coeffs + other.coeffs)

    def __sub__(self, other: "FormField") -> "FormField":
        _check_same(self, other)
        return self._like(self.coeffs - other.coeffs)

    def __neg__(self) -> "FormField":
        return self._like(-self.coeffs)

    def __mul__(self, s) -> "FormField":
        """Multiply by a number or by a scalar point array (broadcastable to the grid)."""
        if np.ndim(s) == 0:
            return self._like(self.coeffs * s)
        return self._like(self.coeffs * np.asarray(s)[None])

    __rmul__ = __mul__

    def conj(self) -> "FormField":
        """Complex conjugate form: conj(a dz^I dzb^J) = conj(a) dzb^I dz^J, reordered."""
        n = self.grid.n
        out = np.zeros((ncomp(n, self.q, self.p),) + self.point_shape, dtype=complex)
        BI, BJ = basis(n, self.p), basis(n, self.q)
        # dzb^I ^ dz^J = (-1)^{pq} dz^J ^ dzb^I
        sign = (-1) ** (self.p * self.q)
        for a, b in itertools.product(range(len(BI)), range(len(BJ))):
            out[_comp(n, self.p, b, a)] = sign * np.conj(self.coeffs[_comp(n, self.q, a, b)])
        return FormField(self.grid, self.q, self.p, out)

    def component(self, I, J) -> np.ndarray:
        n = self.grid.n
        return self.coeffs[_comp(n, self.q, basis_index(n, self.p)[tuple(I)], basis_index(n, self.q)[tuple(J)])]

    def full_coeffs(self) -> np.ndarray:
        return np.array(np.broadcast_to(self.coeffs, (self.coeffs.shape[0],) + self.grid.shape))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.coeffs))) if self.coeffs.size else 0.0


def _check_same(a: FormField, b: FormField):
    if a.grid != b.grid or a.bidegree != b.bidegree:
        raise ValueError(f"incompatible forms {a.bidegree} on {a.grid} and {b.bidegree} on {b.grid}")


def scalar(grid: GridSpec, values, name: str = "") -> FormField:
    """Wrap a point array (or number) as a (0,0)-form."""
    arr = np.asarray(values)
    if arr.ndim == 0:
        arr = arr.reshape((1,) * grid.ndim)
    return FormField(grid, 0, 0, arr[None], name)


def zeros(grid: GridSpec, p: int, q: int, shape=None) -> FormField:
    shape = shape or (1,) * grid.ndim
    return FormField(grid, p, q, np.zeros((ncomp(grid.n, p, q),) + tuple(shape), dtype=complex))


def from_hermitian(grid: GridSpec, h: np.ndarray, name: str = "") -> FormField:
    """Real (1,1)-form sqrt(-1) h_{ij} dz^i ^ dzbar^j from a matrix field h of shape (n, n, *s)."""
    n = grid.n
    h = np.asarray(h)
    return FormField(grid, 1, 1, 1j * h.reshape((n * n,) + h.shape[2:]), name)


def to_hermitian(a: FormField) -> np.ndarray:
    """Matrix field h (shape (n, n, *s)) with a = sqrt(-1) h_{ij} dz^i ^ dzbar^j."""
    if a.bidegree != (1, 1):
        raise ValueError("to_hermitian expects a (1,1)-form")
    n = a.grid.n
    return (-1j * a.coeffs).reshape((n, n) + a.point_shape)


def is_real_11(a: FormField, tol: float = 1e-12) -> bool:
    h = to_hermitian(a)
    return bool(np.max(np.abs(h - np.conj(np.swapaxes(h, 0, 1))), initial=0.0) <= tol * max(1.0, a.sup_norm()))


# ---------------------------------------------------------------------------
# spectral differentiation


def _wavenumbers(N: int) -> np.ndarray:
    k = sfft.fftfreq(N, 1.0 / N)
    k[N // 2] = 0.0  # odd-derivative Nyquist convention: keeps real fields real
    return k


def _dz_symbols(grid: GridSpec, shape: tuple[int, ...], bar: bool) -> list[np.ndarray]:
    """Fourier symbols of d/dz_j (or d/dzbar_j) for arrays with the given (compact) shape."""
    out = []
    for j in range(grid.n):
        ax, ay = 2 * j, 2 * j + 1
        kx = np.zeros([1] * grid.ndim)
        ky = np.zeros([1] * grid.ndim)
        if shape[ax] > 1:
            kx = _wavenumbers(shape[ax]).reshape([-1 if a == ax else 1 for a in range(grid.ndim)])
        if shape[ay] > 1:
            ky = _wavenumbers(shape[ay]).reshape([-1 if a == ay else 1 for a in range(grid.ndim)])
        # d/dz = (d/dx - i d/dy)/2 ; d/dzbar = (d/dx + i d/dy)/2 ; d/dx -> i k
        if bar:
            out.append(0.5 * (1j * kx - ky))
        else:
            out.append(0.5 * (1j * kx + ky))
    return out


def _axes(grid: GridSpec):
    return tuple(range(1, grid.ndim + 1))


def _fft(coeffs: np.ndarray, grid: GridSpec) -> np.ndarray:
    return sfft.fftn(coeffs, axes=_axes(grid))


def _ifft(spec: np.ndarray, grid: GridSpec) -> np.ndarray:
    return sfft.ifftn(spec, axes=_axes(grid))


def differentiate(a: FormField, which: str) -> FormField:
    """Apply d' ('d') or d'' ('dbar') by Fourier collocation differentiation."""
    bar = {"d": False, "dbar": True}.get(which)
    if bar is None:
        raise ValueError(f"which must be 'd' or 'dbar', got {which!r}")
    n, p, q = a.grid.n, a.p, a.q
    if (q if bar else p) + 1 > n:
        raise ValueError(f"degree overflow: cannot apply {which} to a ({p},{q})-form for n={n}")
    op, oq = (p, q + 1) if bar else (p + 1, q)
    shape = a.point_shape
    spec = _fft(a.coeffs, a.grid)
    sym = _dz_symbols(a.grid, shape, bar)
    out_spec = np.zeros((ncomp(n, op, oq),) + shape, dtype=complex)
    for cin, k, cout, sign in _d_table(n, p, q, bar):
        if shape[2 * k] == 1 and shape[2 * k + 1] == 1:
            continue
        out_spec[cout] += sign * sym[k] * spec[cin]
    return FormField(a.grid, op, oq, _ifft(out_spec, a.grid))


def _ddbar_symbols(grid: GridSpec, shape: tuple[int, ...]) -> list[list[np.ndarray]]:
    """Symbols S[k][l] of d^2/dz_k dzbar_l.

    Off-diagonal entries are products of first-derivative symbols (Nyquist
    zeroed).  Diagonal entries use the full second-derivative symbol
    -(kx^2 + ky^2)/4, so that constant-coefficient elliptic operators built
    from them are invertible on mean-zero fields.
    """
    d = _dz_symbols(grid, shape, False)
    db = _dz_symbols(grid, shape, True)
    S = [[d[k] * db[l] for l in range(grid.n)] for k in range(grid.n)]
    for k in range(grid.n):
        lap = np.zeros([1] * grid.ndim)
        for ax in (2 * k, 2 * k + 1):
            if shape[ax] > 1:
                kk = sfft.fftfreq(shape[ax], 1.0 / shape[ax])
                lap = lap - 0.25 * kk.reshape([-1 if a == ax else 1 for a in range(grid.ndim)]) ** 2
        S[k][k] = lap
    return S


@functools.lru_cache(maxsize=None)
def _ddbar_table(n: int, p: int, q: int):
    """Entries (comp_in, k, l, comp_out, sign) for d'd'' = sum dz^k dzbar^l d^2/dz_k dzbar_l."""
    merged = {}
    for cin, l, cmid, s1 in _d_table(n, p, q, True):
        for cm, k, cout, s2 in _d_table(n, p, q + 1, False):
            if cm == cmid:
                key = (cin, k, l, cout)
                merged[key] = merged.get(key, 0) + s1 * s2
    return tuple((cin, k, l, cout, s) for (cin, k, l, cout), s in sorted(merged.items()) if s)


def ddbar(a: FormField) -> FormField:
    """sqrt(-1) d'd'' a, computed in one pass in Fourier space."""
    n, p, q = a.grid.n, a.p, a.q
    if p + 1 > n or q + 1 > n:
        raise ValueError(f"degree overflow: ddbar of a ({p},{q})-form for n={n}")
    shape = a.point_shape
    spec = _fft(a.coeffs, a.grid)
    S = _ddbar_symbols(a.grid, shape)
    out = np.zeros((ncomp(n, p + 1, q + 1),) + shape, dtype=complex)
    for cin, k, l, cout, sign in _ddbar_table(n, p, q):
        out[cout] += sign * S[k][l] * spec[cin]
    return FormField(a.grid, p + 1, q + 1, 1j * _ifft(out, a.grid))


def ddbar_scalar(u: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Complex Hessian u_{i jbar} as a matrix field of shape (n, n, *s) for a point array u."""
    n = grid.n
    u = np.asarray(u)
    if u.ndim == 0:
        return np.zeros((n, n) + (1,) * grid.ndim)
    spec = sfft.fftn(u)
    S = _ddbar_symbols(grid, u.shape)
    out = np.empty((n, n) + u.shape, dtype=complex)
    for i in range(n):
        for j in range(n):
            out[i, j] = sfft.ifftn(S[i][j] * spec)
    return out


def gradient_scalar(u: np.ndarray, grid: GridSpec, bar: bool = False) -> np.ndarray:
    """(du/dz_j)_j (or du/dzbar_j) as an array of shape (n, *s)."""
    u = np.asarray(u)
    spec = sfft.fftn(u)
    sym = _dz_symbols(grid, u.shape, bar)
    return np.stack([sfft.ifftn(s * spec) for s in sym])


# ---------------------------------------------------------------------------
# algebra


def wedge(a: FormField, b: FormField) -> FormField:
    """Pointwise exterior product with shuffle signs."""
    if a.grid != b.grid:
        raise ValueError("forms live on different grids")
    n = a.grid.n
    op, oq = a.p + b.p, a.q + b.q
    if op > n or oq > n:
        raise ValueError(f"degree overflow: ({a.p},{a.q}) ^ ({b.p},{b.q}) exceeds ({n},{n})")
    shape = _point_shape(a.coeffs, b.coeffs)
    dtype = np.result_type(a.coeffs, b.coeffs)
    out = np.zeros((ncomp(n, op, oq),) + shape, dtype=dtype)
    for ca, cb, co, sign in _wedge_table(n, a.p, a.q, b.p, b.q):
        if sign > 0:
            out[co] += a.coeffs[ca] * b.coeffs[cb]
        else:
            out[co] -= a.coeffs[ca] * b.coeffs[cb]
    return FormField(a.grid, op, oq, out)


def wedge_all(*forms: FormField) -> FormField:
    return functools.reduce(wedge, forms)


def power(a: FormField, k: int) -> FormField:
    """k-th exterior power; power(a, 0) is the constant 1."""
    if k == 0:
        return scalar(a.grid, 1.0 + 0j)
    out = a
    for _ in range(k - 1):
        out = wedge(out, a)
    return out


def top_volume_coefficient(n: int) -> complex:
    """omega^n = n! det(g) * this * dz^{1..n} ^ dzbar^{1..n}."""
    return (1j) ** n * (-1) ** (n * (n - 1) // 2)


def top_ratio(t: FormField, detg: np.ndarray) -> np.ndarray:
    """Pointwise t / omega^n for an (n,n)-form t, given det(g) of the metric.

    Returns a complex point array; it is real for real top forms.
    """
    n = t.grid.n
    if t.bidegree != (n, n):
        raise ValueError(f"top_ratio expects an ({n},{n})-form, got {t.bidegree}")
    return t.coeffs[0] / (math.factorial(n) * top_volume_coefficient(n) * detg)


def integrate(u, detg: np.ndarray, grid: GridSpec) -> float:
    """int_M u omega^n/n! by the periodic rectangle rule.

    Equals (2 pi)^{2n} 2^n mean(u det g); the mean runs over the full grid
    (compact axes are implicitly replicated).
    """
    vals = np.real(np.asarray(u) * detg)
    vals = np.broadcast_to(vals, np.broadcast_shapes(vals.shape, (1,) * grid.ndim))
    # mean over the compact array equals the full-grid mean
    return float((2 * np.pi) ** grid.ndim * 2 ** grid.n * np.mean(vals))
