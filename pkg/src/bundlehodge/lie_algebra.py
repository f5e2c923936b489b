"""Finite-dimensional cochain complex of a compact Lie algebra.

Holds the structure constants, an Ad-invariant metric, the graded
differential and its metric adjoint, harmonic subspaces, and the Green
inverse used to build the degree-(1,2) correction term.

Conventions: bases of Lambda^j g* are indexed by strictly increasing
tuples (lex order, see multiindex).  The differential acts on a j-cochain
psi by

    (d psi)(X_0, ..., X_j) = sum_{s<t} (-1)^(s+t) psi([X_s, X_t], ..., ^X_s, ..., ^X_t, ...)

so for su(2) with [e1,e2]=e3 cyclic, d e^1 = -e^2^e^3.
"""

import itertools

import numpy as np

from .errors import ConfigError, DegreeError, NotSemisimple
from .multiindex import gram_matrix, multi_indices, num_indices

_ATOL_STRUCTURE = 1e-12
RANK_RTOL = 1e-10


class LieAlgebraData:
    """Structure constants c[i][j][k] with [e_i, e_j] = sum_k c[i][j][k] e_k,
    plus an Ad-invariant inner product on the algebra."""

    def __init__(self, dim, structure_constants, metric):
        self.dim = int(dim)
        self.c = np.asarray(structure_constants, dtype=float)
        self.metric = np.asarray(metric, dtype=float)
        self._cache = {}
        self._validate()

    def _validate(self):
        if self.dim <= 0:
            raise ConfigError("algebra dimension must be positive")
        if self.c.shape != (self.dim,) * 3:
            raise ConfigError("structure constants must be a dim^3 array")
        if self.metric.shape != (self.dim, self.dim):
            raise ConfigError("metric must be a dim x dim matrix")
        anti = self.c + np.swapaxes(self.c, 0, 1)
        if np.max(np.abs(anti)) > _ATOL_STRUCTURE:
            raise ConfigError("structure constants are not antisymmetric")
        jac = (
            np.einsum("ijm,mkl->ijkl", self.c, self.c)
            + np.einsum("jkm,mil->ijkl", self.c, self.c)
            + np.einsum("kim,mjl->ijkl", self.c, self.c)
        )
        if np.max(np.abs(jac)) > _ATOL_STRUCTURE:
            raise ConfigError("structure constants violate the Jacobi identity")
        if np.max(np.abs(self.metric - self.metric.T)) > _ATOL_STRUCTURE:
            raise ConfigError("metric is not symmetric")
        if np.min(np.linalg.eigvalsh(self.metric)) <= 0:
            raise ConfigError("metric is not positive definite")
        # <[x,a],b> + <a,[x,b]> = 0 on all basis triples
        ad_inv = np.einsum("xam,mb->xab", self.c, self.metric) + np.einsum(
            "xbm,am->xab", self.c, self.metric
        )
        if np.max(np.abs(ad_inv)) > _ATOL_STRUCTURE:
            raise ConfigError("metric is not Ad-invariant")

    def bracket(self, x, y):
        return np.einsum("i,j,ijk->k", x, y, self.c)

    # -- cached linear algebra on the exterior algebra ---------------------

    def _cached(self, key, builder):
        if key not in self._cache:
            self._cache[key] = builder()
        return self._cache[key]

    def gram(self, j):
        """Inner product matrix on Lambda^j g* (Gram determinant extension)."""
        return self._cached(("gram", j), lambda: gram_matrix(np.linalg.inv(self.metric), j))

    def chol(self, j):
        """Lower Cholesky factor of gram(j)."""
        return self._cached(("chol", j), lambda: np.linalg.cholesky(self.gram(j)))

    def d_matrix(self, j):
        return self._cached(("d", j), lambda: _ce_differential_matrix(self, j))

    def dstar_matrix(self, j):
        """Adjoint of d_matrix(j-1) with respect to the graded inner products."""

        def build():
            if j <= 0 or j > self.dim:
                return np.zeros((num_indices(self.dim, j - 1), num_indices(self.dim, j)))
            gram_lo = self.gram(j - 1)
            gram_hi = self.gram(j)
            return np.linalg.solve(gram_lo, self.d_matrix(j - 1).T @ gram_hi)

        return self._cached(("dstar", j), build)

    def coadjoint_matrix(self, a, j):
        """Action of e_a on Lambda^j g* by (ad*_a psi)(x_1..x_j) =
        -sum_l psi(x_1, ..., [e_a, x_l], ..., x_j)."""
        return self._cached(("coad", a, j), lambda: _coadjoint_matrix(self, a, j))

    def iota_matrix(self, a, j):
        """Interior product with e_a: Lambda^j -> Lambda^(j-1)."""
        return self._cached(("iota", a, j), lambda: _iota_matrix(self, a, j))

    def harmonic_basis(self, j):
        return self._cached(("harm", j), lambda: _harmonic_basis(self, j))

    def betti(self, j):
        """Cohomology dimension by rank-nullity on the differential matrices."""
        return self._cached(("betti", j), lambda: _betti_number(self, j))

    def is_semisimple(self):
        return self.harmonic_basis(1).shape[1] == 0


class LieCochain:
    """Element of Lambda^j g*, stored as a dense coefficient vector over the
    sorted multi-index basis."""

    def __init__(self, degree, coefficients):
        self.degree = int(degree)
        self.coefficients = np.asarray(coefficients, dtype=float)

    def check(self, alg):
        expected = num_indices(alg.dim, self.degree)
        if self.coefficients.shape != (expected,):
            raise ConfigError(
                f"degree-{self.degree} cochain needs {expected} coefficients, "
                f"got shape {self.coefficients.shape}"
            )
        return self


# -- constructors ----------------------------------------------------------


def make_su2(scale=1.0):
    """su(2) with [e1,e2]=e3 cyclic and metric scale * identity."""
    c = np.zeros((3, 3, 3))
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        c[i, j, k] = 1.0
        c[j, i, k] = -1.0
    return LieAlgebraData(3, c, scale * np.eye(3))


_SU3_F = (
    (0, 1, 2, 1.0),
    (0, 3, 6, 0.5),
    (0, 4, 5, -0.5),
    (1, 3, 5, 0.5),
    (1, 4, 6, 0.5),
    (2, 3, 4, 0.5),
    (2, 5, 6, -0.5),
    (3, 4, 7, np.sqrt(3.0) / 2.0),
    (5, 6, 7, np.sqrt(3.0) / 2.0),
)


def make_su3(scale=1.0):
    """su(3) in the standard totally antisymmetric basis, metric scale * I."""
    c = np.zeros((8, 8, 8))
    for i, j, k, val in _SU3_F:
        for (a, b, d), sgn in zip(
            itertools.permutations((i, j, k)),
            (1, -1, -1, 1, 1, -1),
        ):
            c[a, b, d] = sgn * val
    return LieAlgebraData(8, c, scale * np.eye(8))


def make_u1(k=1, scale=1.0):
    """Abelian algebra u(1)^k."""
    return LieAlgebraData(k, np.zeros((k, k, k)), scale * np.eye(k))


def direct_sum(a, b):
    dim = a.dim + b.dim
    c = np.zeros((dim,) * 3)
    c[: a.dim, : a.dim, : a.dim] = a.c
    c[a.dim :, a.dim :, a.dim :] = b.c
    metric = np.zeros((dim, dim))
    metric[: a.dim, : a.dim] = a.metric
    metric[a.dim :, a.dim :] = b.metric
    return LieAlgebraData(dim, c, metric)


# -- operations ------------------------------------------------------------


def _sort_sign(args):
    """(sorted tuple, permutation sign), or (None, 0) on a repeated entry."""
    if len(set(args)) != len(args):
        return None, 0
    sign = 1
    seq = list(args)
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return tuple(sorted(seq)), sign


def _ce_differential_matrix(alg, j):
    n = alg.dim
    if j < 0 or j > n:
        raise DegreeError(f"degree {j} out of range for dim-{n} algebra")
    src_pos = {idx: pos for pos, idx in enumerate(multi_indices(n, j))}
    dst = multi_indices(n, j + 1)
    mat = np.zeros((len(dst), len(src_pos)))
    for row, K in enumerate(dst):
        for s in range(len(K)):
            for t in range(s + 1, len(K)):
                rest = tuple(K[u] for u in range(len(K)) if u != s and u != t)
                pre = (-1) ** (s + t)
                for m in np.nonzero(alg.c[K[s], K[t]])[0]:
                    key, sign = _sort_sign((int(m),) + rest)
                    if sign:
                        mat[row, src_pos[key]] += pre * sign * alg.c[K[s], K[t], m]
    return mat


def _coadjoint_matrix(alg, a, j):
    n = alg.dim
    idxs = multi_indices(n, j)
    pos = {idx: p for p, idx in enumerate(idxs)}
    mat = np.zeros((len(idxs), len(idxs)))
    for row, K in enumerate(idxs):
        for l in range(len(K)):
            for m in np.nonzero(alg.c[a, K[l]])[0]:
                key, sign = _sort_sign(K[:l] + (int(m),) + K[l + 1 :])
                if sign:
                    mat[row, pos[key]] -= alg.c[a, K[l], m] * sign
    return mat


def _iota_matrix(alg, a, j):
    n = alg.dim
    src = multi_indices(n, j)
    dst = multi_indices(n, j - 1)
    mat = np.zeros((len(dst), len(src)))
    for col, idx in enumerate(src):
        if a not in idx:
            continue
        pos = idx.index(a)
        rest = idx[:pos] + idx[pos + 1 :]
        row = dst.index(rest)
        mat[row, col] = (-1) ** pos
    return mat


def ce_differential(alg, j):
    """Matrix of the graded differential Lambda^j g* -> Lambda^(j+1) g*."""
    if j < 0 or j > alg.dim:
        raise DegreeError(f"degree {j} out of range for dim-{alg.dim} algebra")
    return alg.d_matrix(j)


def ce_adjoint(alg, j):
    """Matrix of the metric adjoint Lambda^j g* -> Lambda^(j-1) g*."""
    if j < 0 or j > alg.dim:
        raise DegreeError(f"degree {j} out of range for dim-{alg.dim} algebra")
    return alg.dstar_matrix(j)


def _harmonic_basis(alg, j):
    n = alg.dim
    size = num_indices(n, j)
    if size == 0:
        return np.zeros((0, 0))
    lo = alg.chol(j)
    blocks = []
    d_up = alg.d_matrix(j)
    if d_up.shape[0]:
        # L_(j+1)^T D L_j^(-T): the operator in Gram-orthonormal coordinates
        blocks.append(alg.chol(j + 1).T @ np.linalg.solve(lo, d_up.T).T)
    d_down = alg.dstar_matrix(j)
    if d_down.shape[0]:
        blocks.append(alg.chol(j - 1).T @ np.linalg.solve(lo, d_down.T).T)
    if not blocks:
        # both neighbours trivial: everything is harmonic
        kernel = np.eye(size)
    else:
        stacked = np.vstack(blocks)
        u, s, vt = np.linalg.svd(stacked, full_matrices=True)
        tol = RANK_RTOL * (s[0] if s.size else 1.0)
        rank = int(np.sum(s > tol))
        kernel = vt[rank:].T
    # back to coefficient coordinates; columns stay orthonormal in the Gram
    # inner product because kernel columns are orthonormal in hat coordinates
    return np.linalg.solve(lo.T, kernel)


def _betti_number(alg, j):
    d_j = alg.d_matrix(j)
    d_prev = alg.d_matrix(j - 1) if j >= 1 else np.zeros((num_indices(alg.dim, j), 0))

    def rank(mat):
        if mat.size == 0:
            return 0
        s = np.linalg.svd(mat, compute_uv=False)
        return int(np.sum(s > RANK_RTOL * s[0])) if s.size else 0

    return num_indices(alg.dim, j) - rank(d_j) - rank(d_prev)


def harmonic_subspace(alg, j):
    """Orthonormal basis (columns) of the harmonic subspace of Lambda^j g*.

    Harmonic means annihilated by both the differential and its adjoint;
    for an Ad-invariant metric this is exactly the subspace killed by every
    coadjoint operator.
    """
    if j < 0 or j > alg.dim:
        raise DegreeError(f"degree {j} out of range for dim-{alg.dim} algebra")
    return alg.harmonic_basis(j)


def green_inverse(alg, psi):
    """Solve dstar beta = psi with d beta = 0 for a degree-1 cochain psi.

    Needs H^1 of the algebra to vanish; beta lands in the exact part of
    Lambda^2 and is produced by inverting the degree-1 Laplacian.
    """
    psi = psi if isinstance(psi, LieCochain) else LieCochain(1, psi)
    if psi.degree != 1:
        raise DegreeError("green_inverse takes a degree-1 cochain")
    psi.check(alg)
    if not alg.is_semisimple():
        raise NotSemisimple("H^1 of the algebra is nonzero; no Green inverse on g*")
    lap1 = alg.dstar_matrix(2) @ alg.d_matrix(1)
    x = np.linalg.solve(lap1, psi.coefficients)
    return LieCochain(2, alg.d_matrix(1) @ x)


def cs3_fiber_term(alg, pairing=None):
    """Degree-3 cochain (x,y,z) -> -(1/6) sum_sigma sign(sigma) <x,[y,z]>_sigma.

    ``pairing`` defaults to the algebra metric; any Ad-invariant symmetric
    bilinear form may be supplied.  The result is closed and coclosed.
    """
    pair = alg.metric if pairing is None else np.asarray(pairing, dtype=float)
    idxs = multi_indices(alg.dim, 3)
    coeffs = np.zeros(len(idxs))
    for pos, (i, j, k) in enumerate(idxs):
        total = 0.0
        for (x, y, z), sgn in zip(
            itertools.permutations((i, j, k)),
            (1, -1, -1, 1, 1, -1),
        ):
            bracket = alg.c[y, z]  # components of [e_y, e_z]
            total += sgn * float(pair[x] @ bracket)
        coeffs[pos] = -total / 6.0
    return LieCochain(3, coeffs)
