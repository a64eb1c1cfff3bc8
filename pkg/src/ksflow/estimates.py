"""Exact rational checks of the exponent algebra behind the boundedness proof.

Everything except :func:`young_c1` works on :class:`fractions.Fraction` and
never rounds.  Lebesgue exponents may be ``math.inf``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

Q = Fraction
INF = math.inf


def as_rational(x) -> Fraction:
    """Exact conversion; floats go through their decimal repr (``1.2`` is 6/5)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(x)


def _reciprocal(x) -> Fraction:
    if x == INF:
        return Fraction(0)
    return 1 / as_rational(x)


def critical_exponent(N: int) -> Fraction:
    """Diffusion exponent ``2 - 2/N`` separating boundedness from blow-up."""
    if N <= 0:
        raise ValueError(f"dimension must be positive, got {N}")
    return Fraction(2) - Fraction(2, N)


@dataclass(frozen=True)
class GNQuery:
    """Interpolation ``||D^j f||_q <= C ||D^k f||_r^a ||f||_s^(1-a)`` in ``R^N``."""

    j: int
    k: int
    N: int
    q: object
    r: object
    s: object

    def __post_init__(self):
        if self.N not in (2, 3):
            raise ValueError("N must be 2 or 3")
        if not 0 <= self.j <= self.k:
            raise ValueError("need 0 <= j <= k")
        for name in ("q", "r", "s"):
            v = getattr(self, name)
            if v != INF:
                v = as_rational(v)
                if v < 1:
                    raise ValueError(f"{name} must be >= 1 or inf")
                object.__setattr__(self, name, v)


@dataclass(frozen=True)
class GNResult:
    a: Fraction
    admissible: bool
    lower: Fraction


def gn_exponent(query: GNQuery) -> GNResult:
    """Solve ``1/q = j/N + a (1/r - k/N) + (1-a)/s`` for ``a``.

    ``admissible`` is ``j/k <= a <= 1``; out-of-range values are returned,
    not rejected.
    """
    N = Fraction(query.N)
    inv_q, inv_r, inv_s = (_reciprocal(x) for x in (query.q, query.r, query.s))
    coeff = inv_r - query.k / N - inv_s
    if coeff == 0:
        raise ZeroDivisionError("degenerate interpolation balance: coefficient of a is zero")
    a = (inv_q - query.j / N - inv_s) / coeff
    lower = Fraction(query.j, query.k) if query.k else Fraction(0)
    return GNResult(a, lower <= a <= 1, lower)


def gn_balance(query: GNQuery, a: Fraction) -> Fraction:
    """Right-hand side of the balance; equals ``1/q`` at the solution."""
    N = Fraction(query.N)
    inv_r, inv_s = _reciprocal(query.r), _reciprocal(query.s)
    return query.j / N + a * (inv_r - query.k / N) + (1 - a) * inv_s


@dataclass(frozen=True)
class Lemma24Result:
    theta_prime: Fraction
    a: Fraction
    a_tilde: Fraction
    total: Fraction
    holds: bool


def _lemma24_parts(p, theta):
    p, theta = as_rational(p), as_rational(theta)
    if p <= 1 or theta <= 1:
        raise ValueError("need p > 1 and theta > 1")
    theta_prime = theta / (theta - 1)
    den = Fraction(7, 6) - 1 / (p + 1)
    if den == 0:
        raise ZeroDivisionError("7/6 - 1/(p+1) vanishes")
    a = (Fraction(5, 6) - 1 / (theta_prime * (p + 1))) / den
    b = 1 / (theta * (p + 1))
    shift = Fraction(2, 3) - 1 / (p + 1)
    return theta_prime, a, b, shift


def lemma24_check(p, theta, l0) -> Lemma24Result:
    """Evaluate ``a + a_tilde`` and whether it is strictly below one."""
    l0 = as_rational(l0)
    if l0 <= 0:
        raise ValueError("l0 must be positive")
    theta_prime, a, b, shift = _lemma24_parts(p, theta)
    x = 1 / l0
    if x + shift == 0:
        raise ZeroDivisionError("denominator of a_tilde vanishes")
    a_tilde = (x - b) / (x + shift)
    total = a + a_tilde
    return Lemma24Result(theta_prime, a, a_tilde, total, total < 1)


def lemma24_threshold(p, theta) -> Fraction:
    """The ``l0`` at which ``a + a_tilde = 1`` exactly.

    With ``x = 1/l0`` the condition ``(x - b)/(x + shift) = 1 - a`` is linear
    in ``x``: ``x = (b + (1 - a) shift) / a``.
    """
    _, a, b, shift = _lemma24_parts(p, theta)
    if a == 0:
        raise ArithmeticError("a = 0: the balance has no solution")
    x = (b + (1 - a) * shift) / a
    if x <= 0 or x + shift == 0:
        raise ArithmeticError(f"no positive l0 solves the balance (1/l0 = {x})")
    return 1 / x


def young_c1(eps1, p, m, vol) -> float:
    """Young constant ``C_1(eps1, p)`` for absorbing ``int (n+eps)^p``.

    Evaluated in the log domain; exponents can be large near ``m = 1/3``.
    """
    eps1, p, m, vol = (as_rational(x) for x in (eps1, p, m, vol))
    if eps1 <= 0 or vol <= 0:
        raise ValueError("eps1 and vol must be positive")
    if p <= 1:
        raise ValueError("p must exceed 1")
    mu = m - Fraction(1, 3)
    if mu <= 0:
        raise ValueError("m must exceed 1/3")
    big = p + mu
    log_c = (math.log(mu) - math.log(big)
             - float(p / mu) * math.log(eps1 * big / p)
             + float(big / mu) * math.log((p + 1) / p)
             + math.log(vol))
    return math.exp(log_c)


@dataclass(frozen=True)
class Comparison:
    name: str
    lhs: Fraction
    op: str
    rhs: Fraction
    holds: bool


@dataclass(frozen=True)
class ChainReport:
    m: Fraction
    p: Fraction
    comparisons: tuple

    @property
    def holds(self) -> bool:
        return all(c.holds for c in self.comparisons)


def check_pm_exponent_chain(m, p) -> ChainReport:
    """Exponent orderings used when testing the density equation with ``(n+eps)^(p-1)``.

    1. ``p + 1 < p + m - 1/3`` (equivalent to ``m > 4/3``);
    2. the interpolation exponent ``2(3p+2-3m)/(3p+3m-4)`` is positive;
    3. and it does not exceed ``2(p+1-m)/(p+m-1)``.
    """
    m, p = as_rational(m), as_rational(p)
    if m <= 1 or p <= 1:
        raise ValueError("need m > 1 and p > 1")
    comps = [Comparison("p+1 < p+m-1/3", p + 1, "<", p + m - Fraction(1, 3),
                        p + 1 < p + m - Fraction(1, 3))]
    den = 3 * p + 3 * m - 4
    upper = 2 * (p + 1 - m) / (p + m - 1)
    if den == 0:
        comps.append(Comparison("gn exponent defined", den, "!=", Fraction(0), False))
    else:
        e = 2 * (3 * p + 2 - 3 * m) / den
        comps.append(Comparison("gn exponent > 0", e, ">", Fraction(0), e > 0))
        comps.append(Comparison("gn exponent <= 2(p+1-m)/(p+m-1)", e, "<=", upper, e <= upper))
    return ChainReport(m, p, tuple(comps))


# ---------------------------------------------------------------------------
# The audit table printed by ``ksflow check-estimates``.

REF_P = Fraction(25, 16)
REF_THETA = Fraction(8, 7)
REF_THRESHOLD = Fraction(1737, 582)


@dataclass(frozen=True)
class AuditRow:
    check: str
    inputs: str
    result: str
    status: str  # "ok", "FAIL" or "WARN"


def audit_rows() -> list:
    rows = []

    def add(check, inputs, result, ok, warn=False):
        rows.append(AuditRow(check, inputs, result, "ok" if ok else ("WARN" if warn else "FAIL")))

    for N, expected in ((3, Fraction(4, 3)), (2, Fraction(1))):
        ce = critical_exponent(N)
        add(f"critical_exponent({N}) = {ce}", f"N={N}", str(ce), ce == expected)

    p, th = REF_P, REF_THETA
    add("1/(p+1)", f"p={p}", str(1 / (p + 1)), 1 / (p + 1) == Fraction(16, 41))
    thr = lemma24_threshold(p, th)
    add(f"lemma24 threshold = {thr}", f"p={p}, theta={th}", f"{thr} (1737/582 = {REF_THRESHOLD})",
        thr == REF_THRESHOLD)
    at = lemma24_check(p, th, thr)
    add("lemma24 at threshold (sum = 1, not < 1)", f"l0={thr}",
        f"sum={at.total}, holds={at.holds}", at.total == 1 and not at.holds)
    for l0 in (Fraction(299, 100), Fraction(3)):
        r = lemma24_check(p, th, l0)
        add("lemma24 sum < 1", f"l0={l0}", f"a={r.a}, a_tilde={r.a_tilde}, sum={r.total}", r.holds)
    r3 = lemma24_check(p, th, 3)
    add(f"a_tilde = {r3.a_tilde} in (0,1)", "l0=3", f"a_tilde={r3.a_tilde}",
        0 < r3.a_tilde < 1, warn=True)

    g = gn_exponent(GNQuery(1, 2, 3, Fraction(41, 2), Fraction(41, 16), 2))
    add(f"gn a = {g.a} in (0,1)", "j=1,k=2,N=3,q=41/2,r=41/16,s=2",
        f"a={g.a}, admissible={g.admissible}", g.admissible and 0 < g.a < 1, warn=True)
    g2 = gn_exponent(GNQuery(0, 1, 3, Fraction(9, 2), 2, 1))
    add("gn a, 3a/2 = 7/5", "j=0,k=1,N=3,q=9/2,r=2,s=1",
        f"a={g2.a}, 3a/2={Fraction(3, 2) * g2.a}",
        g2.admissible and Fraction(3, 2) * g2.a == Fraction(7, 5))
    chain = check_pm_exponent_chain(Fraction(3, 2), p)
    add("pm exponent chain", f"m=3/2, p={p}",
        "; ".join(f"{c.lhs} {c.op} {c.rhs}" for c in chain.comparisons), chain.holds)
    c1 = young_c1(1, p, Fraction(3, 2), 1)
    add("young C1", f"eps1=1, p={p}, m=3/2, |Omega|=1", f"{c1:.12g}", math.isfinite(c1) and c1 > 0)
    return rows


def format_table(rows) -> str:
    headers = ("check", "inputs", "result", "status")
    cells = [headers] + [(r.check, r.inputs, r.result, r.status) for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(4)]
    lines = []
    for i, row in enumerate(cells):
        lines.append("  ".join(col.ljust(w) for col, w in zip(row, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)
