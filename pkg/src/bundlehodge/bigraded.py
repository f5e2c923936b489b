"""Invariant bigraded complex on a trivialized principal bundle over a torus.

An invariant form is a sum of (i, j)-components: degree-i base forms valued
in Lambda^j g*.  Components are stored sparsely per frequency, as
dict[(i, j)] -> dict[k_tuple] -> array of shape (nb, nf) (optionally with a
trailing batch axis), where nb / nf count base / fiber multi-indices.

The exterior derivative splits into a vertical piece, a covariant
horizontal piece and a curvature contraction, with bidegrees (0,1), (1,0)
and (2,-1).  Sign conventions (pinned by the requirement that the total
differential squares to zero and that the degree-1 and degree-3 secondary
forms differentiate onto their characteristic forms):

    vertical        (i,j) -> (i,j+1):   -(-1)^i d_g
    horizontal      (i,j) -> (i+1,j):   d_M + sum_a A^a ^ ad*_a
    contraction     (i,j) -> (i+2,j-1): +(-1)^i sum_a F^a ^ iota_a

where (ad*_a psi)(x_1..x_j) = -sum_l psi(x_1, ..., [e_a, x_l], ..., x_j).
The vertical sign is opposite to the bare fiber differential because the
complex is written in the frame of right-invariant vertical covectors.

Adjoints are assembled as true matrix adjoints of these operators with
respect to the product inner product (base Gram x fiber Gram x volume), so
adjointness holds by construction.

Rescaling by delta^i per base degree turns the total differential into the
polynomial family d_delta = d^(0,1) + delta d^(1,0) + delta^2 d^(2,-1);
DeltaPolynomial holds form-valued polynomials in delta, and all polynomial
operations here are exact (bands grow, nothing is truncated).
"""

import itertools

import numpy as np
import scipy.sparse

from .base_forms import FourierForm, d as base_d, wedge as base_wedge
from .errors import ConfigError, DegreeError
from .multiindex import (
    num_indices,
    wedge_axis_matrix,
    wedge_pair_matrix,
)

# -- small dense helpers ------------------------------------------------------


def _apply_fiber(mat, val):
    if val.ndim == 2:
        return np.einsum("gf,bf->bg", mat, val)
    return np.einsum("gf,bft->bgt", mat, val)


def _apply_base(mat, val):
    if val.ndim == 2:
        return np.einsum("ab,bf->af", mat, val)
    return np.einsum("ab,bft->aft", mat, val)


def _stack_table(table):
    keys = list(table.keys())
    return keys, np.stack([table[k] for k in keys])


def _apply_fiber_stacked(mat, stacked):
    if stacked.ndim == 3:
        return np.einsum("gf,kbf->kbg", mat, stacked)
    return np.einsum("gf,kbft->kbgt", mat, stacked)


def _apply_base_stacked(mat, stacked):
    if stacked.ndim == 3:
        return np.einsum("ab,kbf->kaf", mat, stacked)
    return np.einsum("ab,kbft->kaft", mat, stacked)


def _scatter(dest, keys, stacked, shift=None):
    if shift is None:
        for pos, key in enumerate(keys):
            _acc(dest, key, stacked[pos])
    else:
        for pos, key in enumerate(keys):
            _acc(dest, tuple(ka + qa for ka, qa in zip(key, shift)), stacked[pos])


def _acc(table, key, arr):
    cur = table.get(key)
    table[key] = arr if cur is None else cur + arr


def _fiber_cached(alg, key, builder):
    return alg._cached(("bigraded",) + key, builder)


def _base_cached(geo, key, builder):
    return geo._cached(("bigraded",) + key, builder)


def _coad_adj(alg, a, j):
    def build():
        gram = alg.gram(j)
        return np.linalg.solve(gram, alg.coadjoint_matrix(a, j).T @ gram)

    return _fiber_cached(alg, ("coad_adj", a, j), build)


def _iota_adj(alg, a, j):
    """Adjoint of iota_a : Lambda^(j+1) -> Lambda^j, mapping Lambda^j up."""

    def build():
        return np.linalg.solve(alg.gram(j + 1), alg.iota_matrix(a, j + 1).T @ alg.gram(j))

    return _fiber_cached(alg, ("iota_adj", a, j), build)


def _axis_adj(geo, l, i):
    """Adjoint of dx^l ^ (.) : Lambda^i -> Lambda^(i+1), mapping down."""

    def build():
        return np.linalg.solve(
            geo.gram(i), wedge_axis_matrix(geo.n, i, l).T @ geo.gram(i + 1)
        )

    return _base_cached(geo, ("axis_adj", l, i), build)


def _pair_adj(geo, axes, i):
    def build():
        return np.linalg.solve(
            geo.gram(i), wedge_pair_matrix(geo.n, i, axes).T @ geo.gram(i + 2)
        )

    return _base_cached(geo, ("pair_adj", axes, i), build)


# -- data types ----------------------------------------------------------------


class BigradedForm:
    """Sparse-by-frequency element of the bigraded complex."""

    def __init__(self, geometry, alg, components=None):
        self.geometry = geometry
        self.alg = alg
        self.components = components if components is not None else {}

    @classmethod
    def zero(cls, geometry, alg):
        return cls(geometry, alg)

    def copy(self):
        comps = {
            slot: {k: v.copy() for k, v in table.items()}
            for slot, table in self.components.items()
        }
        return BigradedForm(self.geometry, self.alg, comps)

    def slots(self):
        return sorted(self.components.keys())

    def is_zero(self):
        return all(
            not np.any(v) for table in self.components.values() for v in table.values()
        )

    def set_value(self, slot, key, value):
        i, j = slot
        value = np.asarray(value, dtype=complex)
        nb = num_indices(self.geometry.n, i)
        nf = num_indices(self.alg.dim, j)
        if value.shape[:2] != (nb, nf):
            raise ConfigError(f"value for slot {slot} must start with shape ({nb}, {nf})")
        _acc(self.components.setdefault(slot, {}), tuple(int(x) for x in key), value)

    def value(self, slot, key):
        return self.components.get(slot, {}).get(tuple(key))

    def prune(self, tol=0.0):
        comps = {}
        for slot, table in self.components.items():
            kept = {k: v for k, v in table.items() if np.max(np.abs(v), initial=0.0) > tol}
            if kept:
                comps[slot] = kept
        self.components = comps
        return self

    def __add__(self, other):
        self._check(other)
        out = self.copy()
        for slot, table in other.components.items():
            dest = out.components.setdefault(slot, {})
            for key, val in table.items():
                _acc(dest, key, val)
        return out

    def __sub__(self, other):
        return self + (-1.0) * other

    def __mul__(self, scalar):
        out = BigradedForm(self.geometry, self.alg)
        for slot, table in self.components.items():
            out.components[slot] = {k: scalar * v for k, v in table.items()}
        return out

    __rmul__ = __mul__

    def __neg__(self):
        return (-1.0) * self

    def _check(self, other):
        if self.geometry != other.geometry or self.alg is not other.alg:
            raise ConfigError("bigraded forms live on different bundles")

    def max_band(self):
        reach = 0
        for table in self.components.values():
            for key in table:
                reach = max(reach, max((abs(k) for k in key), default=0))
        return reach


def from_fourier(form, alg, fiber_degree=0, fiber_coeffs=None):
    """Lift a base FourierForm into the bigraded complex.

    With the default fiber degree 0 this is the pullback of a base form;
    otherwise ``fiber_coeffs`` gives the constant Lambda^j value.
    """
    if fiber_coeffs is None:
        if fiber_degree != 0:
            raise ConfigError("fiber coefficients required for positive fiber degree")
        fiber_coeffs = np.ones(1)
    fiber_coeffs = np.asarray(fiber_coeffs, dtype=complex)
    out = BigradedForm(form.geometry, alg)
    slot = (form.degree, fiber_degree)
    from .multiindex import index_position

    pos = index_position(form.geometry.n, form.degree)
    for key, idx, val in form.entries():
        nb = num_indices(form.geometry.n, form.degree)
        arr = np.zeros((nb, fiber_coeffs.size), dtype=complex)
        arr[pos[idx], :] = val * fiber_coeffs
        out.set_value(slot, key, arr)
    return out


def to_fourier(form, i, fiber_slot=0, fiber_index=0):
    """Extract the (i, j)-component along one fiber multi-index as a base form."""
    geo = form.geometry
    table = form.components.get((i, fiber_slot), {})
    reach = [0] * geo.n
    for key in table:
        for a, k in enumerate(key):
            reach[a] = max(reach[a], abs(k))
    out = FourierForm.zero(geo, i, tuple(reach))
    for key, val in table.items():
        if val.ndim != 2:
            raise ConfigError("cannot extract a batched form")
        loc = tuple(k + b for k, b in zip(key, out.bands))
        out.coeffs[loc] += val[:, fiber_index]
    return out


class Connection:
    """Lie-algebra-valued 1-form on the base, plus an optional direct
    curvature override used for abelian bundles with nonzero flux."""

    def __init__(self, alg, a_forms, curvature_override=None):
        self.alg = alg
        a_forms = list(a_forms)
        if len(a_forms) != alg.dim:
            raise ConfigError("need one 1-form per algebra basis element")
        geo = a_forms[0].geometry
        for f in a_forms:
            if f.geometry != geo:
                raise ConfigError("connection components on different tori")
            if f.degree != 1:
                raise DegreeError("connection components must be 1-forms")
        bands = tuple(
            max(f.bands[a] for f in a_forms) for a in range(geo.n)
        )
        self.geometry = geo
        self.a_forms = [f.pad_to(bands) for f in a_forms]
        self.bands = bands
        if curvature_override is not None:
            curvature_override = list(curvature_override)
            for f in curvature_override:
                if f.geometry != geo or f.degree != 2:
                    raise ConfigError("curvature override must be 2-forms on the base")
        self.curvature_override = curvature_override
        self._cache = {}

    @property
    def band(self):
        return max(self.bands) if self.bands else 0

    def curvature_forms(self):
        """F = dA + (1/2)[A ^ A], one 2-form per algebra index."""
        if "curv" not in self._cache:
            if self.curvature_override is not None:
                self._cache["curv"] = self.curvature_override
            else:
                forms = [base_d(f) for f in self.a_forms]
                c = self.alg.c
                for a in range(self.alg.dim):
                    for b in range(self.alg.dim):
                        for k in range(self.alg.dim):
                            if c[a, b, k] != 0.0:
                                forms[k] = forms[k] + 0.5 * c[a, b, k] * base_wedge(
                                    self.a_forms[a], self.a_forms[b]
                                )
                self._cache["curv"] = [f.trim() for f in forms]
        return self._cache["curv"]

    def a_entries(self):
        if "a_entries" not in self._cache:
            entries = []
            for c, f in enumerate(self.a_forms):
                for key, idx, val in f.entries():
                    entries.append((key, idx[0], c, val))
            self._cache["a_entries"] = entries
        return self._cache["a_entries"]

    def f_entries(self):
        if "f_entries" not in self._cache:
            entries = []
            for c, f in enumerate(self.curvature_forms()):
                for key, idx, val in f.entries():
                    entries.append((key, idx, c, val))
            self._cache["f_entries"] = entries
        return self._cache["f_entries"]

    def coupling_bands(self):
        """Widest per-axis frequency shift any operator application makes."""
        reach = [0] * self.geometry.n
        for key, _, _, _ in self.a_entries() + self.f_entries():
            for a, k in enumerate(key):
                reach[a] = max(reach[a], abs(k))
        return tuple(reach)


class DeltaPolynomial:
    """Polynomial in the adiabatic parameter with bigraded coefficients."""

    def __init__(self, coefficients):
        self.coefficients = list(coefficients)
        self._trim()

    def _trim(self):
        while self.coefficients and self.coefficients[-1].is_zero():
            self.coefficients.pop()

    def __len__(self):
        return len(self.coefficients)

    def coefficient(self, m):
        if 0 <= m < len(self.coefficients):
            return self.coefficients[m]
        return None

    def __add__(self, other):
        n = max(len(self.coefficients), len(other.coefficients))
        out = []
        for m in range(n):
            a = self.coefficient(m)
            b = other.coefficient(m)
            if a is None:
                out.append(b.copy())
            elif b is None:
                out.append(a.copy())
            else:
                out.append(a + b)
        return DeltaPolynomial(out)

    def __mul__(self, scalar):
        return DeltaPolynomial([scalar * c for c in self.coefficients])

    __rmul__ = __mul__

    def __sub__(self, other):
        return self + (-1.0) * other

    def shift(self, power):
        """Multiply by delta^power."""
        if not self.coefficients:
            return DeltaPolynomial([])
        zero = BigradedForm.zero(
            self.coefficients[0].geometry, self.coefficients[0].alg
        )
        return DeltaPolynomial([zero.copy() for _ in range(power)] + self.coefficients)

    def evaluate(self, delta):
        if not self.coefficients:
            raise ConfigError("cannot evaluate an identically zero polynomial shape")
        total = BigradedForm.zero(
            self.coefficients[0].geometry, self.coefficients[0].alg
        )
        for m, coeff in enumerate(self.coefficients):
            total = total + (delta**m) * coeff
        return total


# -- inner products -------------------------------------------------------------


def bigraded_inner_product(a, b):
    """Hermitian product: volume-weighted sum of Gram pairings per slot."""
    a._check(b)
    geo = a.geometry
    alg = a.alg
    total = 0.0 + 0.0j
    for slot in sorted(set(a.components) & set(b.components)):
        i, j = slot
        gb = geo.gram(i)
        gf = alg.gram(j)
        ta = a.components[slot]
        tb = b.components[slot]
        for key in sorted(set(ta) & set(tb)):
            u, v = ta[key], tb[key]
            if u.ndim != 2 or v.ndim != 2:
                raise ConfigError("inner product needs unbatched forms")
            total += np.sum(np.conj(u) * (gb @ v @ gf))
    return geo.volume * total


def bigraded_norm(form):
    val = bigraded_inner_product(form, form).real
    return float(np.sqrt(max(val, 0.0)))


def sq_norms_batch(form):
    """Per-batch-slice squared norms of a batched bigraded form."""
    geo = form.geometry
    alg = form.alg
    total = None
    for slot, table in form.components.items():
        i, j = slot
        gb = geo.gram(i)
        gf = alg.gram(j)
        for val in table.values():
            contrib = np.einsum("bft,bc,fg,cgt->t", np.conj(val), gb, gf, val).real
            total = contrib if total is None else total + contrib
    return geo.volume * total if total is not None else None


def poly_norm(poly):
    return float(np.sqrt(sum(bigraded_norm(c) ** 2 for c in poly.coefficients)))


# -- the three differentials and their adjoints ---------------------------------


def _vert_sign(i):
    # vertical operators carry -(-1)^i in the right-invariant frame
    return -1.0 if i % 2 == 0 else 1.0


def vertical_d(form):
    out = BigradedForm(form.geometry, form.alg)
    alg = form.alg
    for (i, j), table in form.components.items():
        if j >= alg.dim or not table:
            continue
        mat = _vert_sign(i) * alg.d_matrix(j)
        if not mat.size:
            continue
        keys, stacked = _stack_table(table)
        dest = out.components.setdefault((i, j + 1), {})
        _scatter(dest, keys, _apply_fiber_stacked(mat, stacked))
    return out.prune()


def vertical_dstar(form):
    out = BigradedForm(form.geometry, form.alg)
    alg = form.alg
    for (i, j), table in form.components.items():
        if j < 1 or not table:
            continue
        mat = _vert_sign(i) * alg.dstar_matrix(j)
        if not mat.size:
            continue
        keys, stacked = _stack_table(table)
        dest = out.components.setdefault((i, j - 1), {})
        _scatter(dest, keys, _apply_fiber_stacked(mat, stacked))
    return out.prune()


def _grouped_entries(entries):
    groups = {}
    for q, pos, c, v in entries:
        groups.setdefault((pos, c), []).append((q, v))
    return groups


def covariant_d(form, conn):
    geo = form.geometry
    alg = form.alg
    n = geo.n
    out = BigradedForm(geo, alg)
    groups = _grouped_entries(conn.a_entries())
    for (i, j), table in form.components.items():
        if i >= n or not table:
            continue
        keys, stacked = _stack_table(table)
        dest = out.components.setdefault((i + 1, j), {})
        axis_mats = [wedge_axis_matrix(n, i, l) for l in range(n)]
        extra = (1,) * (stacked.ndim - 1)
        total = None
        for l in range(n):
            kvals = np.array([key[l] for key in keys], dtype=float)
            if not np.any(kvals):
                continue
            term = (1j * kvals).reshape((-1,) + extra) * _apply_base_stacked(
                axis_mats[l], stacked
            )
            total = term if total is None else total + term
        if total is not None:
            _scatter(dest, keys, total)
        shifted = {}
        for (l, c), qvs in groups.items():
            rc = alg.coadjoint_matrix(c, j)
            if not rc.size:
                continue
            moved = _apply_base_stacked(axis_mats[l], _apply_fiber_stacked(rc, stacked))
            for q, v in qvs:
                cur = shifted.get(q)
                shifted[q] = v * moved if cur is None else cur + v * moved
        for q, arr in shifted.items():
            _scatter(dest, keys, arr, shift=q)
    return out.prune()


def covariant_dstar(form, conn):
    geo = form.geometry
    alg = form.alg
    n = geo.n
    out = BigradedForm(geo, alg)
    groups = _grouped_entries(conn.a_entries())
    for (i, j), table in form.components.items():
        if i < 1 or not table:
            continue
        keys, stacked = _stack_table(table)
        dest = out.components.setdefault((i - 1, j), {})
        adj_mats = [_axis_adj(geo, l, i - 1) for l in range(n)]
        extra = (1,) * (stacked.ndim - 1)
        total = None
        for l in range(n):
            kvals = np.array([key[l] for key in keys], dtype=float)
            if not np.any(kvals):
                continue
            term = (-1j * kvals).reshape((-1,) + extra) * _apply_base_stacked(
                adj_mats[l], stacked
            )
            total = term if total is None else total + term
        if total is not None:
            _scatter(dest, keys, total)
        shifted = {}
        for (l, c), qvs in groups.items():
            rc = _coad_adj(alg, c, j)
            if not rc.size:
                continue
            moved = _apply_base_stacked(adj_mats[l], _apply_fiber_stacked(rc, stacked))
            for q, v in qvs:
                mq = tuple(-x for x in q)
                cur = shifted.get(mq)
                shifted[mq] = np.conj(v) * moved if cur is None else cur + np.conj(v) * moved
        for q, arr in shifted.items():
            _scatter(dest, keys, arr, shift=q)
    return out.prune()


def curvature_contraction(form, f_forms):
    """Contraction against a Lie-algebra-valued curvature 2-form."""
    if isinstance(f_forms, Connection):
        f_forms = f_forms.curvature_forms()
    entries = []
    for c, f in enumerate(f_forms):
        for key, idx, val in f.entries():
            entries.append((key, idx, c, val))
    return _contraction_from_entries(form, entries)


def _contraction_from_entries(form, entries):
    geo = form.geometry
    alg = form.alg
    n = geo.n
    out = BigradedForm(geo, alg)
    groups = _grouped_entries(entries)
    for (i, j), table in form.components.items():
        if j < 1 or i + 2 > n or not table:
            continue
        keys, stacked = _stack_table(table)
        dest = out.components.setdefault((i + 2, j - 1), {})
        sign = _plus_sign(i)
        shifted = {}
        for (axes, c), qvs in groups.items():
            ic = alg.iota_matrix(c, j)
            if not ic.size:
                continue
            moved = sign * _apply_base_stacked(
                wedge_pair_matrix(n, i, axes), _apply_fiber_stacked(ic, stacked)
            )
            for q, v in qvs:
                cur = shifted.get(q)
                shifted[q] = v * moved if cur is None else cur + v * moved
        for q, arr in shifted.items():
            _scatter(dest, keys, arr, shift=q)
    return out.prune()


def curvature_contraction_star(form, f_forms):
    if isinstance(f_forms, Connection):
        f_forms = f_forms.curvature_forms()
    entries = []
    for c, f in enumerate(f_forms):
        for key, idx, val in f.entries():
            entries.append((key, idx, c, val))
    geo = form.geometry
    alg = form.alg
    n = geo.n
    out = BigradedForm(geo, alg)
    groups = _grouped_entries(entries)
    for (i, j), table in form.components.items():
        if i < 2 or j + 1 > alg.dim or not table:
            continue
        keys, stacked = _stack_table(table)
        dest = out.components.setdefault((i - 2, j + 1), {})
        sign = _plus_sign(i - 2)
        shifted = {}
        for (axes, c), qvs in groups.items():
            ic = _iota_adj(alg, c, j)
            if not ic.size:
                continue
            moved = sign * _apply_base_stacked(
                _pair_adj(geo, axes, i - 2), _apply_fiber_stacked(ic, stacked)
            )
            for q, v in qvs:
                mq = tuple(-x for x in q)
                cur = shifted.get(mq)
                shifted[mq] = np.conj(v) * moved if cur is None else cur + np.conj(v) * moved
        for q, arr in shifted.items():
            _scatter(dest, keys, arr, shift=q)
    return out.prune()


def _plus_sign(i):
    # the contraction carries +(-1)^i
    return 1.0 if i % 2 == 0 else -1.0


# -- rescaled polynomial family --------------------------------------------------


def rho_scale(form, delta, inverse=False):
    """Grading isometry: multiply the (i, j)-component by delta^(+-i)."""
    out = BigradedForm(form.geometry, form.alg)
    for (i, j), table in form.components.items():
        factor = float(delta) ** (-i if inverse else i)
        out.components[(i, j)] = {k: factor * v for k, v in table.items()}
    return out


def d_delta(poly, conn):
    """Exact polynomial action of d^(0,1) + delta d^(1,0) + delta^2 d^(2,-1)."""
    f_forms = conn.curvature_forms()
    out = []
    for m in range(len(poly.coefficients) + 2):
        terms = []
        c0 = poly.coefficient(m)
        if c0 is not None:
            terms.append(vertical_d(c0))
        c1 = poly.coefficient(m - 1)
        if c1 is not None:
            terms.append(covariant_d(c1, conn))
        c2 = poly.coefficient(m - 2)
        if c2 is not None:
            terms.append(curvature_contraction(c2, f_forms))
        if terms:
            total = terms[0]
            for t in terms[1:]:
                total = total + t
            out.append(total)
        elif poly.coefficients:
            out.append(
                BigradedForm.zero(poly.coefficients[0].geometry, poly.coefficients[0].alg)
            )
    return DeltaPolynomial(out)


def dstar_delta(poly, conn):
    f_forms = conn.curvature_forms()
    out = []
    for m in range(len(poly.coefficients) + 2):
        terms = []
        c0 = poly.coefficient(m)
        if c0 is not None:
            terms.append(vertical_dstar(c0))
        c1 = poly.coefficient(m - 1)
        if c1 is not None:
            terms.append(covariant_dstar(c1, conn))
        c2 = poly.coefficient(m - 2)
        if c2 is not None:
            terms.append(curvature_contraction_star(c2, f_forms))
        if terms:
            total = terms[0]
            for t in terms[1:]:
                total = total + t
            out.append(total)
        elif poly.coefficients:
            out.append(
                BigradedForm.zero(poly.coefficients[0].geometry, poly.coefficients[0].alg)
            )
    return DeltaPolynomial(out)


def laplacian_delta(poly, conn):
    """d_delta d*_delta + d*_delta d_delta, exactly as polynomials."""
    return d_delta(dstar_delta(poly, conn), conn) + dstar_delta(d_delta(poly, conn), conn)


def apply_d_component(form, conn, which):
    """Single bidegree component: which = 0, 1 or 2."""
    if which == 0:
        return vertical_d(form)
    if which == 1:
        return covariant_d(form, conn)
    if which == 2:
        return curvature_contraction(form, conn.curvature_forms())
    raise ConfigError("component index must be 0, 1 or 2")


def apply_dstar_component(form, conn, which):
    if which == 0:
        return vertical_dstar(form)
    if which == 1:
        return covariant_dstar(form, conn)
    if which == 2:
        return curvature_contraction_star(form, conn.curvature_forms())
    raise ConfigError("component index must be 0, 1 or 2")


# -- random forms -----------------------------------------------------------------


def random_bigraded(geometry, alg, total_degree, bands, rng, batch=None):
    """Real random form spread over every slot with i + j = total_degree."""
    out = BigradedForm(geometry, alg)
    keys = list(itertools.product(*[range(-b, b + 1) for b in bands]))
    for i in range(min(geometry.n, total_degree) + 1):
        j = total_degree - i
        if j < 0 or j > alg.dim:
            continue
        nb = num_indices(geometry.n, i)
        nf = num_indices(alg.dim, j)
        if nb == 0 or nf == 0:
            continue
        shape = (nb, nf) if batch is None else (nb, nf, batch)
        table = {}
        for key in keys:
            table[key] = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        # reality: value at -k is the conjugate of the value at k
        sym = {}
        for key in keys:
            mirror = tuple(-k for k in key)
            sym[key] = 0.5 * (table[key] + np.conj(table[mirror]))
        out.components[(i, j)] = sym
    return out


# -- truncated coordinates and the Galerkin compression ----------------------------


class TruncationLayout:
    """Flat orthonormal coordinates on the band-limited degree-p subspace."""

    def __init__(self, geometry, alg, total_degree, bands):
        self.geometry = geometry
        self.alg = alg
        self.p = int(total_degree)
        self.bands = tuple(int(b) for b in bands)
        self.keys = list(itertools.product(*[range(-b, b + 1) for b in self.bands]))
        self.key_pos = {k: pos for pos, k in enumerate(self.keys)}
        self.slots = []
        offset = 0
        self.offsets = {}
        self.shapes = {}
        for i in range(min(geometry.n, self.p) + 1):
            j = self.p - i
            if j < 0 or j > alg.dim:
                continue
            nb = num_indices(geometry.n, i)
            nf = num_indices(alg.dim, j)
            if nb == 0 or nf == 0:
                continue
            self.slots.append((i, j))
            self.offsets[(i, j)] = offset
            self.shapes[(i, j)] = (nb, nf)
            offset += len(self.keys) * nb * nf
        self.dim = offset
        self._sqrt_vol = np.sqrt(geometry.volume)

    def _transforms(self, slot):
        i, j = slot
        lb = self.geometry.chol(i)
        lf = self.alg.chol(j)
        return lb, lf

    def vector_from_form(self, form, out=None):
        """Orthonormal coordinates of the in-box part; returns (vector, cut norm).

        The cut norm is the norm of the content outside the frequency box,
        reported so truncation is never silent.
        """
        vec = np.zeros(self.dim, dtype=complex) if out is None else out
        cut_sq = 0.0
        for slot, table in form.components.items():
            if slot not in self.offsets:
                if table:
                    extra = BigradedForm(self.geometry, self.alg, {slot: table})
                    cut_sq += bigraded_inner_product(extra, extra).real
                continue
            lb, lf = self._transforms(slot)
            nb, nf = self.shapes[slot]
            base = self.offsets[slot]
            for key, val in table.items():
                if key in self.key_pos:
                    hat = self._sqrt_vol * (lb.T @ val @ lf)
                    start = base + self.key_pos[key] * nb * nf
                    vec[start : start + nb * nf] += hat.reshape(-1)
                else:
                    gb = self.geometry.gram(slot[0])
                    gf = self.alg.gram(slot[1])
                    cut_sq += self.geometry.volume * float(
                        np.sum(np.conj(val) * (gb @ val @ gf)).real
                    )
        return vec, float(np.sqrt(max(cut_sq, 0.0)))

    def form_from_vector(self, vec):
        out = BigradedForm(self.geometry, self.alg)
        for slot in self.slots:
            nb, nf = self.shapes[slot]
            lb, lf = self._transforms(slot)
            lb_invT = np.linalg.inv(lb).T
            lf_inv = np.linalg.inv(lf)
            base = self.offsets[slot]
            table = {}
            for pos, key in enumerate(self.keys):
                start = base + pos * nb * nf
                hat = vec[start : start + nb * nf].reshape(nb, nf)
                if np.any(hat):
                    table[key] = (lb_invT @ hat @ lf_inv) / self._sqrt_vol
            if table:
                out.components[slot] = table
        return out

def galerkin_polynomial(conn, total_degree, bands, sparse=False):
    """Coefficient matrices M_r with compressed L_delta = sum_r delta^r M_r.

    Columns are computed by exact operator application (bands grow through
    the composition) followed by orthogonal projection back to the box.
    """
    bands = tuple(bands)
    entries = conn.a_entries() + conn.f_entries()
    if entries:
        survives = any(
            all(abs(q[a]) <= 2 * bands[a] for a in range(conn.geometry.n))
            for q, _, _, _ in entries
        )
        if not survives:
            raise ConfigError(
                "frequency box too small: every coupling of the connection "
                "would be projected away"
            )
    layout = TruncationLayout(conn.geometry, conn.alg, total_degree, bands)
    n_mat = 5
    if sparse:
        mats = [scipy.sparse.lil_matrix((layout.dim, layout.dim), dtype=complex) for _ in range(n_mat)]
    else:
        mats = [np.zeros((layout.dim, layout.dim), dtype=complex) for _ in range(n_mat)]
    unit = np.zeros(layout.dim, dtype=complex)
    for col in range(layout.dim):
        unit[col] = 1.0
        v = layout.form_from_vector(unit)
        unit[col] = 0.0
        ups = [apply_d_component(v, conn, a) for a in range(3)]
        downs = [apply_dstar_component(v, conn, b) for b in range(3)]
        for a in range(3):
            for b in range(3):
                term = apply_d_component(downs[b], conn, a) + apply_dstar_component(
                    ups[a], conn, b
                )
                colvec, _ = layout.vector_from_form(term)
                if sparse:
                    nz = np.nonzero(colvec)[0]
                    for row in nz:
                        mats[a + b][row, col] += colvec[row]
                else:
                    mats[a + b][:, col] += colvec
    if sparse:
        mats = [m.tocsr() for m in mats]
    return layout, mats


def galerkin_operator(conn, total_degree, delta, bands, sparse=False):
    """Symmetric matrix of the compressed rescaled Laplacian at numeric delta."""
    cache_key = ("galerkin", total_degree, tuple(bands), bool(sparse))
    if cache_key not in conn._cache:
        conn._cache[cache_key] = galerkin_polynomial(conn, total_degree, bands, sparse)
    _, mats = conn._cache[cache_key]
    total = mats[0] * (float(delta) ** 0)
    for r in range(1, 5):
        total = total + (float(delta) ** r) * mats[r]
    return total


# -- serialization ---------------------------------------------------------------


def bigraded_to_dict(form):
    """JSON payload: the (i, j) component map with per-entry fiber indices."""
    comps = []
    for slot in form.slots():
        entries = []
        for key, val in sorted(form.components[slot].items()):
            if val.ndim != 2:
                raise ConfigError("cannot serialize a batched form")
            for b in range(val.shape[0]):
                for f in range(val.shape[1]):
                    z = val[b, f]
                    if z != 0.0:
                        entries.append([list(key), b, f, float(z.real), float(z.imag)])
        comps.append({"i": slot[0], "j": slot[1], "entries": entries})
    return {"components": comps}


def bigraded_from_dict(geometry, alg, data):
    out = BigradedForm(geometry, alg)
    for comp in data.get("components", []):
        slot = (int(comp["i"]), int(comp["j"]))
        nb = num_indices(geometry.n, slot[0])
        nf = num_indices(alg.dim, slot[1])
        staged = {}
        for key, b, f, re, im in comp.get("entries", []):
            key = tuple(int(x) for x in key)
            if len(key) != geometry.n:
                raise ConfigError("frequency vector has wrong length")
            if not (0 <= int(b) < nb and 0 <= int(f) < nf):
                raise ConfigError(f"index out of range for slot {slot}")
            arr = staged.setdefault(key, np.zeros((nb, nf), dtype=complex))
            arr[int(b), int(f)] += complex(float(re), float(im))
        for key, arr in staged.items():
            out.set_value(slot, key, arr)
    return out
