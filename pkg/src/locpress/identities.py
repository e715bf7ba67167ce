"""Numerical checks of the sphere integration-by-parts identities.

Each identity has the shape

    avg g(xi) d_{xi_k} F(x + r xi) = r d_r avg h(xi) F + avg q(xi) F,

where ``d_{xi_k}`` differentiates the composite in ``xi`` (so it carries a
factor ``r``).  Left sides use the analytic gradient of the test function.
The ``r d_r`` terms are differentiated under the integral sign (exact for
any quadrature) and, as a cross-check, by central differences with a
Richardson step.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .pressure import PressureSource
from .sphere import SphereRule, build_circle_rule, build_sphere_rule


# --- dual numbers: value plus r-derivative --------------------------------------

class Dual:
    """``v + eps d`` with ``eps^2 = 0``; tracks ``d/dr`` through polynomials."""

    __slots__ = ("v", "d")
    __array_ufunc__ = None  # make ndarray * Dual defer to Dual.__rmul__

    def __init__(self, v, d):
        self.v = np.asarray(v)
        self.d = np.asarray(d)

    def __getitem__(self, idx):
        return Dual(self.v[idx], self.d[idx])

    def _lift(self, o):
        return o if isinstance(o, Dual) else Dual(o, np.zeros_like(np.asarray(o, dtype=float)))

    def __add__(self, o):
        o = self._lift(o)
        return Dual(self.v + o.v, self.d + o.d)

    __radd__ = __add__

    def __sub__(self, o):
        o = self._lift(o)
        return Dual(self.v - o.v, self.d - o.d)

    def __rsub__(self, o):
        return self._lift(o) - self

    def __neg__(self):
        return Dual(-self.v, -self.d)

    def __mul__(self, o):
        o = self._lift(o)
        return Dual(self.v * o.v, self.d * o.v + self.v * o.d)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        return Dual(self.v**n, n * self.v ** (n - 1) * self.d)


def dual_dot(a: Dual, xi: np.ndarray) -> Dual:
    """``a . xi`` over the last axis."""
    return Dual(np.einsum("...d,...d->...", a.v, xi), np.einsum("...d,...d->...", a.d, xi))


def dual_sum(a: Dual, axis=-1) -> Dual:
    return Dual(a.v.sum(axis=axis), a.d.sum(axis=axis))


# --- test functions -----------------------------------------------------------

@dataclass(frozen=True)
class TestFunction:
    """Scalar or vector function with analytic gradient.

    ``eval(y)`` returns ``(value, grad)`` with ``grad[..., j] = d_j f``
    (scalar) or ``grad[..., a, j] = d_j f_a`` (vector).  ``degree`` is the
    polynomial degree, or ``None`` for non-polynomial functions.
    """

    name: str
    eval: Callable
    degree: int | None = None
    vector: bool = False


def monomial(powers) -> TestFunction:
    powers = tuple(int(p) for p in powers)

    def ev(y):
        y = np.asarray(y, dtype=float)
        val = np.ones(y.shape[:-1])
        for j, p in enumerate(powers):
            val = val * y[..., j] ** p
        grad = np.zeros(y.shape)
        for j, p in enumerate(powers):
            if p == 0:
                continue
            g = p * np.ones(y.shape[:-1])
            for i, q in enumerate(powers):
                g = g * y[..., i] ** (q - 1 if i == j else q)
            grad[..., j] = g
        return val, grad

    return TestFunction("y^" + "".join(map(str, powers)), ev, sum(powers))


def constant(c: float = 1.0, dim: int = 3) -> TestFunction:
    def ev(y):
        y = np.asarray(y, dtype=float)
        return np.full(y.shape[:-1], c), np.zeros(y.shape)

    return TestFunction("const", ev, 0)


def gaussian(center=(0.3, -0.2, 0.1), scales=(1.0, 0.7, 1.3)) -> TestFunction:
    """Anisotropic Gaussian ``exp(-sum_j ((y_j - c_j)/s_j)^2)``."""
    c = np.asarray(center, dtype=float)
    s = np.asarray(scales, dtype=float)

    def ev(y):
        z = (np.asarray(y, dtype=float) - c[: np.shape(y)[-1]]) / s[: np.shape(y)[-1]]
        val = np.exp(-np.sum(z * z, axis=-1))
        return val, (-2 * z / s[: np.shape(y)[-1]]) * val[..., None]

    return TestFunction("gaussian", ev, None)


def trig_poly() -> TestFunction:
    """``sin(y_1 + 2 y_2) cos(y_3) + cos(2 y_1 - y_3)`` (2D: drop ``y_3``)."""

    def ev(y):
        y = np.asarray(y, dtype=float)
        if y.shape[-1] == 2:
            a = y[..., 0] + 2 * y[..., 1]
            val = np.sin(a) + np.cos(2 * y[..., 0])
            grad = np.stack([np.cos(a) - 2 * np.sin(2 * y[..., 0]), 2 * np.cos(a)], -1)
            return val, grad
        a = y[..., 0] + 2 * y[..., 1]
        b = 2 * y[..., 0] - y[..., 2]
        c3 = np.cos(y[..., 2])
        val = np.sin(a) * c3 + np.cos(b)
        grad = np.stack([
            np.cos(a) * c3 - 2 * np.sin(b),
            2 * np.cos(a) * c3,
            -np.sin(a) * np.sin(y[..., 2]) + np.sin(b),
        ], -1)
        return val, grad

    return TestFunction("trig", ev, None)


def from_field(vf) -> TestFunction:
    """Wrap a velocity field as a vector test function."""
    deg = 1 if vf.kind in ("constant", "linear_shear") else None
    if vf.kind == "constant":
        deg = 0
    return TestFunction(vf.kind, vf.eval, deg, vector=True)


def scalar_corpus(dim: int = 3) -> list[TestFunction]:
    """Constants, monomials to degree 4, an anisotropic Gaussian, a trig polynomial."""
    if dim == 2:
        mons = [(1, 0), (0, 1), (2, 0), (1, 1), (3, 1), (2, 2), (0, 4)]
        return [constant(dim=2)] + [monomial(p) for p in mons] + [gaussian(), trig_poly()]
    mons = [(1, 0, 0), (2, 0, 0), (1, 1, 0), (0, 1, 2), (1, 1, 1), (4, 0, 0), (2, 1, 1), (0, 2, 2)]
    return [constant()] + [monomial(p) for p in mons] + [gaussian(), trig_poly()]


# --- identity table -----------------------------------------------------------------

@dataclass(frozen=True)
class IdentityCase:
    id: str
    test_function: TestFunction
    x: tuple
    r: float
    fd_step: float = 1e-3
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.r - 2 * self.fd_step <= 0:
            raise ValueError("need r - 2h > 0")
        if self.id not in IDENTITIES:
            raise ValueError(f"unknown identity {self.id!r}")


@dataclass(frozen=True)
class IdentityResidual:
    lhs: float
    rhs: float
    residual: float
    error_budget: float
    rhs_fd: float | None = None

    @property
    def passed(self) -> bool:
        return self.residual <= self.error_budget


@dataclass(frozen=True)
class _Spec:
    """``lhs(xi, U, G, r)``; ``rdr(xi, U)`` under ``r d_r``; ``plain(xi, U)``."""

    dim: int
    lhs: Callable
    rdr: Callable
    plain: Callable
    vector: bool = False
    extra_degree: int = 3  # degree in xi carried by the weights


def _idone(p):
    j = p.get("j", 1) - 1
    return _Spec(
        3,
        lambda xi, U, G, r: xi[:, j] * r * G[:, j],
        lambda xi, U: xi[:, j] ** 2 * U,
        lambda xi, U: (3 * xi[:, j] ** 2 - 1) * U,
        extra_degree=2,
    )


def _idtwo(p):
    i, j = (k - 1 for k in p.get("ij", (1, 2)))
    if i == j:
        raise ValueError("idtwo needs i != j")
    return _Spec(
        3,
        lambda xi, U, G, r: r * (xi[:, i] * G[:, j] + xi[:, j] * G[:, i]),
        lambda xi, U: 2 * xi[:, i] * xi[:, j] * U,
        lambda xi, U: 6 * xi[:, i] * xi[:, j] * U,
        extra_degree=2,
    )


# weight g(xi) multiplying d_{xi_1} f, and the non-derivative weight
_IDMANY = {
    1: (lambda x: x[:, 0] * x[:, 1], lambda x: (4 * x[:, 0] ** 2 - 1) * x[:, 1]),
    2: (lambda x: x[:, 0] * x[:, 2], lambda x: (4 * x[:, 0] ** 2 - 1) * x[:, 2]),
    3: (lambda x: x[:, 0] ** 2, lambda x: (4 * x[:, 0] ** 2 - 2) * x[:, 0]),
    4: (lambda x: x[:, 1] ** 2, lambda x: 4 * x[:, 0] * x[:, 1] ** 2),
    5: (lambda x: x[:, 2] ** 2, lambda x: 4 * x[:, 0] * x[:, 2] ** 2),
    6: (lambda x: x[:, 1] * x[:, 2], lambda x: 4 * x[:, 0] * x[:, 1] * x[:, 2]),
}


def _idmany(p):
    k = int(p.get("k", 1))
    if k not in _IDMANY:
        raise ValueError("idmany index must be 1..6")
    g, q = _IDMANY[k]
    return _Spec(
        3,
        lambda xi, U, G, r: g(xi) * r * G[:, 0],
        lambda xi, U: xi[:, 0] * g(xi) * U,
        lambda xi, U: q(xi) * U,
        extra_degree=3,
    )


def _idthree(p):
    def lhs(xi, U, G, r):
        # xi_i xi_j d_{xi_1}(u_i u_j) = 2 r (xi . u)(xi . d_1 u)
        return 2 * r * np.einsum("kd,kd->k", xi, U) * np.einsum("kd,kd->k", xi, G[:, :, 0])

    def rdr(xi, U):
        return xi[:, 0] * dual_dot(U, xi) ** 2

    def plain(xi, U):
        s = dual_dot(U, xi)
        return 4 * xi[:, 0] * s**2 - 2 * U[:, 0] * s

    return _Spec(3, lhs, rdr, plain, vector=True, extra_degree=3)


def _intdxi1(p):
    return _Spec(
        3,
        lambda xi, U, G, r: 2 * r * np.einsum("kd,kd->k", U, G[:, :, 0]),
        lambda xi, U: xi[:, 0] * dual_sum(U * U),
        lambda xi, U: 2 * xi[:, 0] * dual_sum(U * U),
        vector=True, extra_degree=1,
    )


def _id2done(p):
    j = p.get("j", 1) - 1
    return _Spec(
        2,
        lambda xi, U, G, r: xi[:, j] * r * G[:, j],
        lambda xi, U: xi[:, j] ** 2 * U,
        lambda xi, U: (2 * xi[:, j] ** 2 - 1) * U,
        extra_degree=2,
    )


def _id2two(p):
    # integration by parts on the circle gives 4; ``literal=True`` uses the
    # printed coefficient 2 so the discrepancy can be demonstrated
    c = 2.0 if p.get("literal") else 4.0
    return _Spec(
        2,
        lambda xi, U, G, r: r * (xi[:, 0] * G[:, 1] + xi[:, 1] * G[:, 0]),
        lambda xi, U: 2 * xi[:, 0] * xi[:, 1] * U,
        lambda xi, U: c * xi[:, 0] * xi[:, 1] * U,
        extra_degree=2,
    )


IDENTITIES = {
    "idone": _idone,
    "idtwo": _idtwo,
    "idmany": _idmany,
    "idthree": _idthree,
    "intdxi1": _intdxi1,
    "id2done": _id2done,
    "id2two": _id2two,
}


def _functional(phi, tf: TestFunction, x, r, rule):
    """``(M(r), M'(r))`` for ``M(r) = avg phi(xi, U(x + r xi))``."""
    xi = rule.nodes
    U, G = tf.eval(np.asarray(x, dtype=float) + r * xi)
    dU = np.einsum("kaj,kj->ka", G, xi) if tf.vector else np.einsum("kj,kj->k", G, xi)
    out = phi(xi, Dual(U, dU))
    out = out if isinstance(out, Dual) else Dual(out, np.zeros_like(out))
    return float(rule.weights @ out.v), float(rule.weights @ out.d)


def _sides(spec: _Spec, tf, x, r, rule):
    xi = rule.nodes
    U, G = tf.eval(np.asarray(x, dtype=float) + r * xi)
    lhs = float(rule.weights @ spec.lhs(xi, U, G, r))
    m, dm = _functional(spec.rdr, tf, x, r, rule)
    plain, _ = _functional(spec.plain, tf, x, r, rule)
    return lhs, r * dm, plain


def _rdr_fd(spec: _Spec, tf, x, r, h, rule):
    """``r d_r M`` by central differences at ``h`` and ``2h`` plus Richardson."""
    M = {s: _functional(spec.rdr, tf, x, r + s * h, rule)[0] for s in (-2, -1, 1, 2)}
    d1 = (M[1] - M[-1]) / (2 * h)
    d2 = (M[2] - M[-2]) / (4 * h)
    rich = (4 * d1 - d2) / 3
    return r * d1, r * rich, r * abs(d1 - rich)


def default_rule(spec_dim: int, degree: int) -> SphereRule:
    return build_sphere_rule(degree) if spec_dim == 3 else build_circle_rule(degree)


def verify_identity(case: IdentityCase, rule: SphereRule | None = None,
                    mode: str = "analytic") -> IdentityResidual:
    """Evaluate both sides of one identity.

    ``mode="analytic"`` differentiates the ``r d_r`` term under the integral;
    ``mode="fd"`` uses the Richardson-extrapolated central difference.  The
    budget combines a quadrature estimate (same sides on a rule of higher
    degree) with the finite-difference estimate in ``fd`` mode.
    """
    spec = IDENTITIES[case.id](case.params)
    if spec.vector != case.test_function.vector:
        kind = "vector" if spec.vector else "scalar"
        raise ValueError(f"{case.id} needs a {kind} test function")
    deg = 24 if rule is None else rule.exactness_degree
    rule = rule or default_rule(spec.dim, deg)
    if rule.dim != spec.dim:
        raise ValueError(f"{case.id} needs a {spec.dim}D rule")
    x = np.asarray(case.x, dtype=float)
    lhs, rdr, plain = _sides(spec, case.test_function, x, case.r, rule)
    _, rdr_rich, fd_err = _rdr_fd(spec, case.test_function, x, case.r, case.fd_step, rule)
    rhs_fd = rdr_rich + plain
    if mode == "fd":
        rdr = rdr_rich
    elif mode != "analytic":
        raise ValueError(f"unknown mode {mode!r}")
    rhs = rdr + plain
    # quadrature error estimate from a finer rule
    fine = default_rule(spec.dim, rule.exactness_degree + 16)
    l2, d2, p2 = _sides(spec, case.test_function, x, case.r, fine)
    _, rdr_q, _ = _sides(spec, case.test_function, x, case.r, rule)
    quad = abs(l2 - lhs) + abs(d2 + p2 - (rdr_q + plain))
    scale = max(1.0, abs(lhs), abs(rhs))
    budget = 10 * quad + 1e-13 * scale + (10 * fd_err if mode == "fd" else 0.0)
    return IdentityResidual(lhs, rhs, abs(lhs - rhs), budget, rhs_fd)


def identity_suite(x=(0.4, -0.3, 0.2), r: float = 0.7, h: float = 1e-3, degree: int = 24,
                   vector_fields=None) -> list[tuple[IdentityCase, IdentityResidual, str]]:
    """Every identity over the fixed test-function corpus, in both modes."""
    from .fields import make_field

    rule3 = build_sphere_rule(degree)
    rule2 = build_circle_rule(degree)
    x3 = tuple(x)
    x2 = tuple(x[:2])
    params3 = ([("idone", {"j": j}) for j in (1, 2, 3)]
               + [("idtwo", {"ij": ij}) for ij in ((1, 2), (1, 3), (2, 3))]
               + [("idmany", {"k": k}) for k in range(1, 7)])
    params2 = [("id2done", {"j": 1}), ("id2done", {"j": 2}), ("id2two", {})]
    if vector_fields is None:
        vector_fields = [make_field("linear_shear"), make_field("taylor_green"),
                         make_field("beltrami_abc"), make_field("random_solenoidal", {"seed": 4})]
    out = []
    for ident, p in params3:
        for tf in scalar_corpus(3):
            case = IdentityCase(ident, tf, x3, r, h, p)
            for mode in ("analytic", "fd"):
                out.append((case, verify_identity(case, rule3, mode), mode))
    for ident in ("idthree", "intdxi1"):
        for vf in vector_fields:
            case = IdentityCase(ident, from_field(vf), x3, r, h, {})
            for mode in ("analytic", "fd"):
                out.append((case, verify_identity(case, rule3, mode), mode))
    for ident, p in params2:
        for tf in scalar_corpus(2):
            case = IdentityCase(ident, tf, x2, r, h, p)
            for mode in ("analytic", "fd"):
                out.append((case, verify_identity(case, rule2, mode), mode))
    return out


def suite_records(results) -> list[dict]:
    recs = []
    for case, res, mode in results:
        recs.append({
            "id": case.id,
            "params": {**{k: (list(v) if isinstance(v, tuple) else v) for k, v in case.params.items()},
                       "f": case.test_function.name, "x": list(case.x), "r": case.r,
                       "h": case.fd_step, "mode": mode},
            "lhs": res.lhs, "rhs": res.rhs, "residual": res.residual,
            "budget": res.error_budget, "pass": bool(res.passed),
        })
    return recs


# --- sums of identities --------------------------------------------------------------

def grouped_sum_residual(vf, x, r: float, v, rule: SphereRule | None = None,
                         literal_2d: bool = False) -> IdentityResidual:
    """Sum of the per-index identities against the grouped radial formula.

    With ``w = u - v`` the left side is ``avg xi_i d_{xi_j}(w_i w_j)``; the
    grouped right side is ``r d_r avg (xi . w)^2 + avg [d (xi . w)^2 - |w|^2]``.
    Both are computed independently; in 2D ``literal_2d`` uses the printed
    coefficient of the mixed identity when assembling the per-index sum.
    """
    dim = vf.dim
    rule = rule or default_rule(dim, 24)
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    xi = rule.nodes
    U, G = vf.eval(x + r * xi)
    W = U - v
    dW = np.einsum("kaj,kj->ka", G, xi)
    # per-index assembly: sum_j idone/id2done on w_j^2 plus mixed on w_i w_j
    total = 0.0
    for j in range(dim):
        f = W[:, j] ** 2
        df = 2 * W[:, j] * dW[:, j]
        total += r * (rule.weights @ (xi[:, j] ** 2 * df)) + rule.weights @ ((dim * xi[:, j] ** 2 - 1) * f)
    mixed = 2.0 if (dim == 2 and literal_2d) else 2.0 * dim
    for i in range(dim):
        for j in range(i + 1, dim):
            f = W[:, i] * W[:, j]
            df = dW[:, i] * W[:, j] + W[:, i] * dW[:, j]
            total += r * (rule.weights @ (2 * xi[:, i] * xi[:, j] * df)) + rule.weights @ (mixed * xi[:, i] * xi[:, j] * f)
    # grouped form
    s = np.einsum("kd,kd->k", W, xi)
    ds = np.einsum("kd,kd->k", dW, xi)
    grouped = r * (rule.weights @ (2 * s * ds)) + rule.weights @ (dim * s**2 - np.sum(W * W, axis=1))
    # direct left side: xi_i d_{xi_j}(w_i w_j) = r xi_i (d_j w_i w_j + w_i d_j w_j) = r (xi . (grad w) w)
    lhs = r * (rule.weights @ np.einsum("ka,kaj,kj->k", xi, G, W))
    scale = max(1.0, abs(lhs))
    return IdentityResidual(lhs, total, abs(lhs - total), 1e-12 * scale, grouped)


# --- pressure-gradient chain --------------------------------------------------------

def _chain_terms(vf, x, r, rule):
    xi = rule.nodes
    U = vf.velocity(x + r * xi)
    s = np.einsum("kd,kd->k", U, xi)
    A = rule.weights @ (xi[:, 0] * s**2)
    B = rule.weights @ (U[:, 0] * s)
    C = rule.weights @ (xi[:, 0] * np.sum(U * U, axis=1))
    return np.array([A, B, C])


def _chain(vf, src, x, r, h, rule):
    xi = rule.nodes
    G = {s: rule.weights @ src.gradient(x + (r + s * h) * xi)[:, 0] for s in (-1, 1)}
    lhs = (G[1] - G[-1]) / (2 * h)
    T = {s: _chain_terms(vf, x, r + s * h, rule) for s in (-1, 0, 1)}
    d1 = (T[1] - T[-1]) / (2 * h)
    d2 = (T[1] - 2 * T[0] + T[-1]) / h**2
    A, B, C = T[0]
    rhs = (-(d2[0] + 7 / r * d1[0] + 8 / r**2 * A)
           + 2 / r * (d1[1] + 2 / r * B)
           + 1 / r * (d1[2] + 2 / r * C))
    return lhs, rhs


def verify_grad_pressure_chain(vf, src: PressureSource, x, r: float, h: float = 1e-3,
                               rule: SphereRule | None = None) -> IdentityResidual:
    """``d_r avg d_1 p`` against the three-operator right side.

    All ``r``-derivatives are central differences; the budget is the
    Richardson estimate of their error (from steps ``h`` and ``2h``) plus a
    quadrature floor.
    """
    rule = rule or build_sphere_rule(24)
    if r - 2 * h <= 0:
        raise ValueError("need r - 2h > 0")
    x = np.asarray(x, dtype=float)
    lhs, rhs = _chain(vf, src, x, r, h, rule)
    lhs2, rhs2 = _chain(vf, src, x, r, 2 * h, rule)
    res, res2 = abs(lhs - rhs), abs(lhs2 - rhs2)
    fd_err = abs((lhs - rhs) - (lhs2 - rhs2)) / 3
    scale = max(1.0, abs(lhs))
    return IdentityResidual(lhs, rhs, res, 10 * fd_err + 1e-10 * scale, None)


def gradpgradu_residual(vf, src: PressureSource, x, r: float, h: float = 1e-3,
                        rule: SphereRule | None = None) -> IdentityResidual:
    """First display of the gradient formula:
    ``d_r avg d_1 p = -d_r avg xi_i xi_j d_1(u_i u_j) - (1/r) avg sigma_ij d_1(u_i u_j)``.
    """
    rule = rule or build_sphere_rule(24)
    x = np.asarray(x, dtype=float)
    xi = rule.nodes

    def parts(rho):
        U, G = vf.eval(x + rho * xi)
        d1uu = U[:, :, None] * G[:, None, :, 0] + G[:, :, 0][:, :, None] * U[:, None, :]
        xx = np.einsum("ki,kj,kij->k", xi, xi, d1uu)
        tr = np.einsum("kii->k", d1uu)
        return rule.weights @ xx, rule.weights @ (3 * xx - tr)

    def side(hh):
        G = {s: rule.weights @ src.gradient(x + (r + s * hh) * xi)[:, 0] for s in (-1, 1)}
        lhs = (G[1] - G[-1]) / (2 * hh)
        rhs = -(parts(r + hh)[0] - parts(r - hh)[0]) / (2 * hh) - parts(r)[1] / r
        return lhs, rhs

    lhs, rhs = side(h)
    lhs2, rhs2 = side(2 * h)
    fd_err = abs((lhs - rhs) - (lhs2 - rhs2)) / 3
    return IdentityResidual(lhs, rhs, abs(lhs - rhs), 10 * fd_err + 1e-10 * max(1.0, abs(lhs)))


def verify_2d_pressure(field2d, src2d: PressureSource, x, r: float, v,
                       rule: SphereRule | None = None) -> IdentityResidual:
    """Residual of the two-dimensional representation formula."""
    from .localform import pv_formula

    if field2d.dim != 2:
        raise ValueError("verify_2d_pressure needs a 2D field")
    rule = rule or build_circle_rule(64)
    res = pv_formula(field2d, src2d, x, r, v, rule)
    fine = build_circle_rule(2 * rule.exactness_degree)
    res_fine = pv_formula(field2d, src2d, x, r, v, fine)
    x = np.asarray(x, dtype=float)
    lhs = float(src2d.value(x)) + float(np.sum((field2d.velocity(x) - np.asarray(v)) ** 2)) / 2
    budget = 10 * abs(res - res_fine) + 1e-12 * max(1.0, abs(lhs))
    return IdentityResidual(lhs, lhs + res, abs(res), budget)
