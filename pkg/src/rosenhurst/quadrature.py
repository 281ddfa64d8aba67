"""Series-plus-integral constants of the fourth-chaos and adjusted-variation terms.

The four-dimensional integrals in these constants have integrands of the
form ``prod |lin_j(u, v, u', v') + offset_j|^beta`` with ``beta = 2H' - 2`` in
``(-1/2, 0)``: bounded except on hyperplanes, where they blow up integrably.

Two evaluation routes are provided.

* ``integrate4`` is a general engine: tensor Gauss-Legendre on boxes, with
  dyadic refinement of every box met by a declared singular hyperplane.
* The series terms themselves are 4-cycles ``sum_{XYX'Y'} P_XY R_XX' Q_X'Y' S_YY'``
  once each index pair ``(q, u)`` is flattened into one axis, so each term is a
  trace of a product of small matrices.  ``tau1`` and ``c3`` use this form with
  rules adapted to where their singularities can actually sit.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from functools import lru_cache
from math import sqrt

import numpy as np
from scipy import special

from . import analytic
from .analytic import HurstParam
from .filters import Filter, partial_sums

__all__ = [
    "C1Result",
    "C3Result",
    "ConstantsReport",
    "SingularityError",
    "Tau1Result",
    "TruncationPolicy",
    "F_func",
    "c1",
    "c3",
    "composite_rule",
    "constants_report",
    "gauss_legendre",
    "graded_breaks",
    "integrate4",
    "tau1",
]

# a series is stopped early once its estimated tail is below this fraction
TAIL_EPS = 1e-12


class SingularityError(FloatingPointError):
    """A quadrature node landed on a singularity of the integrand."""

    def __init__(self, msg, location=None):
        super().__init__(msg)
        self.location = location


@dataclass(frozen=True)
class TruncationPolicy:
    k_max: int = 10_000
    rel_tol: float = 5e-3
    nodes_per_dim: int = 16
    max_depth: int = 10

    def __post_init__(self):
        if self.k_max < 1:
            raise ValueError("k_max must be positive")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.nodes_per_dim < 8:
            raise ValueError("nodes_per_dim must be at least 8")
        if self.max_depth < 0:
            raise ValueError("max_depth must be nonnegative")

    def doubled(self, k=True, nodes=True) -> "TruncationPolicy":
        return TruncationPolicy(
            self.k_max * (2 if k else 1), self.rel_tol, self.nodes_per_dim * (2 if nodes else 1), self.max_depth
        )


# ---------------------------------------------------------------- 1-d rules


@lru_cache(maxsize=64)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    x, w = (x + 1.0) / 2.0, w / 2.0
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def composite_rule(breaks, n: int) -> tuple[np.ndarray, np.ndarray]:
    """``n``-point Gauss-Legendre on every panel between consecutive ``breaks``."""
    b = np.asarray(breaks, dtype=float)
    x, w = gauss_legendre(n)
    h = np.diff(b)
    return (b[:-1, None] + h[:, None] * x).ravel(), (h[:, None] * w).ravel()


def graded_breaks(depth: int) -> np.ndarray:
    """Panels on [0, 1] halving in width toward both endpoints, ``depth`` levels."""
    left = [0.0] + [2.0 ** -j for j in range(depth + 1, 1, -1)]
    return np.array(left + [0.5] + [1.0 - t for t in left[::-1]])


# ------------------------------------------------------------ 4-d engine


def _box_hits(lo, hi, forms):
    """Forms whose zero set meets the closed box ``[lo, hi]``."""
    hits = []
    for a, c in forms:
        lo_v = c + np.sum(np.minimum(a * lo, a * hi))
        hi_v = c + np.sum(np.maximum(a * lo, a * hi))
        if lo_v <= 0.0 <= hi_v:
            hits.append(a)
    return hits


def integrate4(
    f,
    policy: TruncationPolicy | None = None,
    singular=(),
    nodes: int | None = None,
    chunk: int = 1 << 18,
    extrapolate: bool = True,
):
    """Integrate ``f`` over the unit 4-cube.

    ``f`` takes an ``(m, 4)`` array of points and returns ``m`` values.
    ``singular`` lists pairs ``(a, c)`` describing hyperplanes ``a . x + c = 0``
    on which ``f`` may blow up.  Boxes met by any of them are bisected along the
    coordinates that the hyperplane involves, level by level down to
    ``policy.max_depth``; every box gets a tensor Gauss-Legendre rule with
    ``nodes`` points per axis (default ``policy.nodes_per_dim``).

    Near an integrable singularity the error of the boxes left at the last
    level shrinks geometrically with depth, so by default the estimates for the
    last three depths are combined by Aitken's delta-squared process.
    """
    policy = policy or TruncationPolicy()
    n = nodes or policy.nodes_per_dim
    # distinct even orders for boxes still crossed by a singular set: Legendre
    # polynomials of different degree share no root but 0, so no node pair
    # lands on a diagonal such as u = v
    m = n + n % 2
    cut_orders = (m, m + 2, m + 4, m + 6)
    forms = [(np.asarray(a, dtype=float), float(c)) for a, c in singular]
    level = [(np.zeros(4), np.ones(4))]
    regular_sum = 0.0
    estimates = []
    for depth in range(policy.max_depth + 1):
        regular, touching = [], []
        for lo, hi in level:
            hits = _box_hits(lo, hi, forms)
            (touching if hits else regular).append((lo, hi, hits))
        regular_sum += _sum_boxes(f, [(lo, hi) for lo, hi, _ in regular], (n,) * 4, chunk)
        if not touching:
            return regular_sum
        if depth >= policy.max_depth - 2:
            estimates.append(regular_sum + _sum_boxes(f, [(lo, hi) for lo, hi, _ in touching], cut_orders, chunk))
        if depth == policy.max_depth:
            break
        level = []
        for lo, hi, hits in touching:
            dims = np.flatnonzero(np.any(np.array(hits) != 0.0, axis=0))
            mid = (lo + hi) / 2.0
            for corner in range(1 << len(dims)):
                nlo, nhi = lo.copy(), hi.copy()
                for bit, d in enumerate(dims):
                    if corner >> bit & 1:
                        nlo[d] = mid[d]
                    else:
                        nhi[d] = mid[d]
                level.append((nlo, nhi))
    if extrapolate and len(estimates) == 3:
        s0, s1, s2 = estimates
        d1, d2 = s1 - s0, s2 - s1
        if d1 != 0.0 and 0.0 < d2 / d1 < 1.0:
            return s2 - d2 * d2 / (d2 - d1)
    return estimates[-1]


def _sum_boxes(f, boxes, orders, chunk):
    if not boxes:
        return 0.0
    rules = [gauss_legendre(k) for k in orders]
    grid = np.stack(np.meshgrid(*(r[0] for r in rules), indexing="ij"), -1).reshape(-1, 4)
    wgrid = np.einsum("i,j,k,l->ijkl", *(r[1] for r in rules)).ravel()
    lo = np.array([b[0] for b in boxes])
    span = np.array([b[1] - b[0] for b in boxes])
    total = 0.0
    per = max(1, chunk // len(grid))
    for s in range(0, len(boxes), per):
        pts = lo[s : s + per, None, :] + span[s : s + per, None, :] * grid[None]
        vals = np.asarray(f(pts.reshape(-1, 4)), dtype=float).reshape(pts.shape[:2])
        if not np.all(np.isfinite(vals)):
            bad = np.argwhere(~np.isfinite(vals))[0]
            loc = pts[bad[0], bad[1]]
            raise SingularityError(f"integrand not finite at {loc.tolist()}", loc)
        total += float(np.sum(vals * (np.prod(span[s : s + per], axis=1)[:, None] * wgrid[None])))
    return total


# ----------------------------------------------------------------- tau_1


@dataclass
class Tau1Result:
    value: float
    converged: bool
    k_last: int
    tail_bound: float
    terms: list = field(default_factory=list)


def _offset_matrix(x, offsets, beta):
    """``M[(a, i), (c, j)] = |x_i - x_j + offsets[a, c]|^beta`` flattened to 2-d."""
    d = x[:, None] - x[None, :]
    m = np.abs(d[None, :, None, :] + offsets[:, None, :, None]) ** beta
    na, n = offsets.shape[0], len(x)
    return m.reshape(na * n, offsets.shape[1] * n)


def _tau1_term(bw, ell, k, x, w, beta):
    """One k-term: all four factors share the offset pattern ``k - a + c``."""
    idx = np.arange(ell)
    m = _offset_matrix(x, k - idx[:, None] + idx[None, :], beta)
    dw = np.kron(bw, w)
    p = dw[:, None] * m * dw[None, :]
    return float(np.sum(p * (m @ p @ m.T)))


def _series_exponent(filt: Filter, h: float) -> float:
    """Decay exponent ``e`` of the terms, ``|term_k| = O(k^-e)``."""
    return 4.0 * filt.order - 4.0 * h


def _tail(term_abs: float, k: int, e: float) -> float:
    # sum_{j>k} C j^-e <= C k^-e * k / (e - 1), padded by a factor 2
    return 2.0 * term_abs * k / (e - 1.0) if e > 1.0 else np.inf


def tau1(filt: Filter, h, policy: TruncationPolicy | None = None) -> Tau1Result:
    """Truncated series of four-fold integrals weighted by partial sums.

    Since ``b_ell = 0`` every factor's argument is at least ``k - ell + 1 + (u - v)``,
    so only the ``k = ell`` term reaches a singularity, and only at boundary
    corners; that term uses a rule graded toward both ends of each axis.
    Terms are added until ``k_max`` or until the tail bound from the known
    decay rate drops below ``TAIL_EPS`` of the running sum.
    """
    policy = policy or TruncationPolicy()
    hv = analytic._h(h)
    if filt.order < 2:
        raise ValueError("tau1 needs a filter of order >= 2")
    beta = 2.0 * (hv + 1.0) / 2.0 - 2.0
    ell = filt.length
    bw = partial_sums(filt).b[:ell]
    e = _series_exponent(filt, hv)
    n = policy.nodes_per_dim
    xg, wg = composite_rule(graded_breaks(policy.max_depth), max(8, n // 2))
    xs, ws = gauss_legendre(n)
    total, terms, tail = 0.0, [], np.inf
    half_val = None
    k = ell
    for k in range(ell, ell + policy.k_max):
        x, w = (xg, wg) if k == ell else (xs, ws)
        t = _tau1_term(bw, ell, k, x, w, beta)
        total += t
        terms.append(t)
        if k - ell + 1 == policy.k_max // 2:
            half_val = total
        if k > 2 * ell + 2:
            tail = _tail(abs(t), k, e)
            if tail < TAIL_EPS * abs(total):
                break
    if half_val is None:
        half_val = total
    converged = tail < TAIL_EPS * abs(total) or abs(total - half_val) < policy.rel_tol * abs(total)
    return Tau1Result(total, bool(converged), k, float(tail), terms)


# ------------------------------------------------------------------- c_1


@dataclass
class C1Result:
    value: float
    converged: bool
    tau1: Tau1Result
    rho_sum: float
    rho_converged: bool
    rho_k_last: int
    tau1_negative: bool

    def to_dict(self, trace=False) -> dict:
        out = {
            "value": self.value,
            "converged": self.converged,
            "tau1": self.tau1.value,
            "tau1_converged": self.tau1.converged,
            "tau1_k_last": self.tau1.k_last,
            "tau1_tail_bound": self.tau1.tail_bound,
            "rho_sq_sum": self.rho_sum,
            "rho_converged": self.rho_converged,
            "rho_k_last": self.rho_k_last,
            "tau1_negative": self.tau1_negative,
        }
        if trace:
            out["tau1_partial_sums"] = np.cumsum(self.tau1.terms).tolist()
        return out


def _rho_square_sum(filt: Filter, hv: float, policy: TruncationPolicy):
    e = _series_exponent(filt, hv)
    ks = np.arange(policy.k_max)
    r2 = analytic.rho_alpha(filt, hv, ks) ** 2
    csum = np.cumsum(r2)
    tails = 2.0 * r2 * np.maximum(ks, 1) / (e - 1.0)
    ok = np.flatnonzero((ks > 2 * filt.length + 2) & (tails < TAIL_EPS * csum))
    last = int(ok[0]) if ok.size else len(ks) - 1
    total = float(csum[last])
    half = float(csum[min(last, policy.k_max // 2 - 1)])
    converged = bool(ok.size) or abs(total - half) < policy.rel_tol * total
    return total, converged, last


def c1(filt: Filter, h, policy: TruncationPolicy | None = None) -> C1Result:
    """Fourth-chaos variance constant ``24 (1 + sum_k rho(k)^2) + tau_1``."""
    policy = policy or TruncationPolicy()
    hv = analytic._h(h)
    rs, rconv, rlast = _rho_square_sum(filt, hv, policy)
    t = tau1(filt, hv, policy)
    val = 24.0 * (1.0 + rs) + t.value
    return C1Result(val, rconv and t.converged, t, rs, rconv, rlast, t.value < 0)


# ------------------------------------------------------------ F and c_3
#
# The bracket of F is read as printed, with the outer factor
# |(u-u'+q2-q1)x+1|^beta multiplying all three bracketed terms:
#
#   F(x) = d^2 a^2 sum_{q1 q2 r1 r2} int G(u-u'+q2-q1) [ A g(u-v-q1+r1) g(u'-v'-q2+r2) G(v-v'-r1+r2)
#                                                      - B g(u-v-q1+r1) G(v-u'-q2+r1)
#                                                      + G(u-u'+q1-q2) ]
#
# with g(s) = |s|^beta, G(s) = |s x + 1|^beta, a = alpha(H), d = d(H),
# A = 128 a^2 d^2 / (c2 c^2), B = 16 d a / (sqrt(c2) c), and no filter weights
# on the four indices.  Indices absent from a term (r2 in the second, r1 and
# r2 in the third) are summed as printed, contributing factors ell + 1.


def _f_coefficients(filt: Filter, hv: float):
    hp = HurstParam(hv)
    c = analytic.c_of_H(filt, hv)
    c2v = analytic.c2(filt, hv)
    a, d = hp.alpha_h, hp.d
    big_a = 128.0 * a**2 * d**2 / (c2v * c**2)
    big_b = 16.0 * d * a / (sqrt(c2v) * c)
    return d**2 * a**2, big_a, big_b, c2v


def _f_integrand(filt: Filter, hv: float, x: float):
    pref, big_a, big_b, _ = _f_coefficients(filt, hv)
    beta = hv - 1.0
    L = filt.length + 1
    q = np.arange(L, dtype=float)
    q1, q2, r1, r2 = np.meshgrid(q, q, q, q, indexing="ij")
    q1, q2, r1, r2 = q1.ravel(), q2.ravel(), r1.ravel(), r2.ravel()

    def f(p):
        u, v, up, vp = (p[:, j : j + 1] for j in range(4))
        with np.errstate(divide="ignore"):
            outer = np.abs((u - up + q2 - q1) * x + 1.0) ** beta
            guv = np.abs(u - v - q1 + r1) ** beta
            t1 = big_a * guv * np.abs(up - vp - q2 + r2) ** beta * np.abs((v - vp - r1 + r2) * x + 1.0) ** beta
            t2 = big_b * guv * np.abs((v - up - q2 + r1) * x + 1.0) ** beta
            t3 = np.abs((u - up + q1 - q2) * x + 1.0) ** beta
            return pref * np.sum(outer * (t1 - t2 + t3), axis=1)

    return f


def _f_singular_forms(ell: int, x: float):
    """Hyperplanes where some factor of the F integrand vanishes inside the cube."""
    forms = []
    span = np.arange(-ell - 1, ell + 2)
    for m in span:
        forms.append(((1, -1, 0, 0), m))
        forms.append(((0, 0, 1, -1), m))
        for a in ((1, 0, -1, 0), (0, 1, 0, -1), (0, 1, -1, 0)):
            # (lin + m) x + 1 = 0  <=>  lin + m + 1/x = 0
            forms.append((a, m + 1.0 / x))
    return [(np.array(a, float), float(c)) for a, c in forms if abs(c) <= 2.0]


def F_func(x: float, filt: Filter, h, policy: TruncationPolicy | None = None, depth: int = 2, nodes: int = 4) -> float:
    """The function F of the adjusted-variation constant, by ``integrate4``.

    This general route refines around every singular hyperplane and is meant
    for spot evaluations; ``c3`` uses a faster structured rule where it can.
    """
    policy = policy or TruncationPolicy()
    x = float(x)
    if not 0.0 < x <= 1.0:
        raise ValueError("F is evaluated on (0, 1]")
    hv = analytic._h(h)
    pol = TruncationPolicy(policy.k_max, policy.rel_tol, policy.nodes_per_dim, depth)
    return integrate4(_f_integrand(filt, hv, x), pol, _f_singular_forms(filt.length, x), nodes=nodes, chunk=1 << 14)


def _lagrange_matrix(nodes, pts):
    """Values of the Lagrange basis on ``nodes`` at ``pts`` (shape len(pts) x len(nodes))."""
    lo, hi = nodes.min(), nodes.max()
    mid, rad = (lo + hi) / 2.0, (hi - lo) / 2.0
    n = len(nodes)
    vn = np.polynomial.legendre.legvander((nodes - mid) / rad, n - 1)
    vp = np.polynomial.legendre.legvander((pts - mid) / rad, n - 1)
    return np.linalg.solve(vn.T, vp.T).T


def _product_weights(breaks, n: int, m: float, beta: float) -> np.ndarray:
    """``W_ij = int int L_i(u) L_j(v) |u - v + m|^beta du dv`` on a composite rule.

    With ``s = u - v + m`` the inner integral over ``v`` is a polynomial of
    degree ``2n - 2`` (exact with ``n`` Gauss points) and piecewise polynomial in
    ``s``; the pieces ending at ``s = 0`` are done by Gauss-Jacobi, so the
    weights are exact up to rounding.
    """
    gx, gw = gauss_legendre(n)
    npan = len(breaks) - 1
    nodes = [breaks[p] + (breaks[p + 1] - breaks[p]) * gx for p in range(npan)]
    W = np.zeros((npan * n, npan * n))
    jx, jw = special.roots_jacobi(n + 2, 0.0, beta)
    jx, jw = (jx + 1.0) / 2.0, jw / 2.0 ** (1.0 + beta)
    sx, sw = gauss_legendre(2 * n + 4)
    for I in range(npan):
        a0, a1 = breaks[I], breaks[I + 1]
        for J in range(npan):
            c0, c1 = breaks[J], breaks[J + 1]
            bps = sorted({a0 - c1 + m, a0 - c0 + m, a1 - c1 + m, a1 - c0 + m})
            lo_s, hi_s = bps[0], bps[-1]
            if lo_s < 0.0 < hi_s:
                bps = sorted(set(bps) | {0.0})
            s_pts, s_wts = [], []
            for sa, sb in zip(bps[:-1], bps[1:]):
                if sb - sa <= 0:
                    continue
                L = sb - sa
                if sa == 0.0:
                    s_pts.append(sa + L * jx)
                    s_wts.append(L ** (1.0 + beta) * jw)
                elif sb == 0.0:
                    s_pts.append(sb - L * jx)
                    s_wts.append(L ** (1.0 + beta) * jw)
                else:
                    pts = sa + L * sx
                    s_pts.append(pts)
                    s_wts.append(L * sw * np.abs(pts) ** beta)
            s = np.concatenate(s_pts)
            ws = np.concatenate(s_wts)
            # v-range for each s: v in J and u = v + s - m in I
            vlo = np.maximum(c0, a0 - s + m)
            vhi = np.minimum(c1, a1 - s + m)
            span = np.clip(vhi - vlo, 0.0, None)
            v = vlo[:, None] + span[:, None] * gx[None, :]
            vw = span[:, None] * gw[None, :]
            u = v + (s - m)[:, None]
            Lu = _lagrange_matrix(nodes[I], u.ravel()).reshape(len(s), n, n)
            Lv = _lagrange_matrix(nodes[J], v.ravel()).reshape(len(s), n, n)
            blk = np.einsum("s,sk,ski,skj->ij", ws, vw, Lu, Lv)
            W[I * n : (I + 1) * n, J * n : (J + 1) * n] = blk
    return W


class _FastF:
    """F(x) for ``x < 1/(ell+1)``, where only the x-free factors are singular.

    The couplings ``|u - v + m|^beta`` are integrated against the Lagrange
    basis of a composite rule (product integration); the remaining factors are
    smooth there and are sampled at the nodes.  All terms are then traces of
    products of matrices indexed by (filter index, node).
    """

    def __init__(self, filt: Filter, hv: float, panels: int, n: int):
        self.hv = hv
        self.beta = hv - 1.0
        self.L = filt.length + 1
        self.pref, self.big_a, self.big_b, _ = _f_coefficients(filt, hv)
        breaks = np.linspace(0.0, 1.0, panels + 1)
        self.x, self.w = composite_rule(breaks, n)
        L, N = self.L, len(self.x)
        blocks = {m: _product_weights(breaks, n, float(m), self.beta) for m in range(-L + 1, L)}
        # Wt[(q1, i), (r1, j)] = W^{(r1 - q1)}_ij
        self.wt = np.block([[blocks[r - q] for r in range(L)] for q in range(L)])
        self.w_full = np.tile(self.w, L)
        idx = np.arange(L)
        self.plus = idx[None, :] - idx[:, None]  # c - a
        self.N = N

    def _g(self, xv, offsets):
        d = self.x[:, None] - self.x[None, :]
        m = np.abs((d[None, :, None, :] + offsets[:, None, :, None]) * xv + 1.0) ** self.beta
        return m.reshape(self.L * self.N, self.L * self.N)

    def __call__(self, xv: float) -> float:
        gp = self._g(xv, self.plus)
        gm = self._g(xv, -self.plus)
        t1 = np.sum(self.wt * (gp @ self.wt @ gp.T))
        t2 = np.sum(self.wt * ((gp * self.w_full[None, :]) @ gm.T))
        t3 = self.w_full @ (gp * gm) @ self.w_full
        return self.pref * (self.big_a * t1 - self.big_b * self.L * t2 + self.L**2 * t3)


@dataclass
class C3Result:
    value: float
    caveat: bool
    k_last: int
    N: int
    partial_sums: list = field(default_factory=list)


def c3(filt: Filter, h, N: int, policy: TruncationPolicy | None = None, progress=None) -> C3Result:
    """Adjusted-variation constant ``c2 * sum_k (N - k - 1) k^{2H} F(1/k)``.

    The sum is truncated at ``min(N - 2, k_max)``; the printed constant keeps
    ``N`` inside, so the result always carries the caveat flag.
    """
    policy = policy or TruncationPolicy()
    hv = analytic._h(h)
    N = int(N)
    kmax = min(N - 2, policy.k_max)
    ell = filt.length
    fast = _FastF(filt, hv, max(2, policy.nodes_per_dim // 8), 8)
    c2v = analytic.c2(filt, hv)
    total, trace = 0.0, []
    for k in range(1, kmax + 1):
        fk = fast(1.0 / k) if k >= ell + 2 else F_func(1.0 / k, filt, hv, policy)
        total += (N - k - 1) * k ** (2.0 * hv) * fk
        trace.append(c2v * total)
        if progress:
            progress(k, kmax)
    return C3Result(c2v * total, True, kmax, N, trace)


# -------------------------------------------------------------- reports


@dataclass
class ConstantsReport:
    filter: str
    H: float
    c: float
    c2: float
    c1: dict | None = None
    c3: dict | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def constants_report(filt: Filter, h, which=("c2",), N: int | None = None, policy=None, trace=False) -> ConstantsReport:
    policy = policy or TruncationPolicy()
    hv = analytic._h(h)
    rep = ConstantsReport(filt.label, hv, analytic.c_of_H(filt, hv), analytic.c2(filt, hv))
    rep.diagnostics["policy"] = asdict(policy)
    if "c1" in which:
        rep.c1 = c1(filt, hv, policy).to_dict(trace)
    if "c3" in which:
        if N is None:
            raise ValueError("c3 needs the sample size N")
        r = c3(filt, hv, N, policy)
        rep.c3 = {"value": r.value, "caveat": r.caveat, "k_last": r.k_last, "N": r.N}
        if trace:
            rep.c3["partial_sums"] = r.partial_sums
    return rep
