"""Baker-Campbell-Hausdorff coefficients and their bundle counterparts.

a_k is normalized so that log(exp(tX) exp(tY)) = sum_k (t^k / k!) a_k(X, Y):
a_1 = X + Y, a_2 = [X, Y], a_3 = 1/2 [X, [X, Y]] + 1/2 [[X, Y], Y].

Polynomials live in the free associative algebra on the letters X < Y as
dicts word -> sympy.Rational, words being tuples over {0, 1}. Lie elements
are stored over the Lyndon basis with standard bracketing.
"""
import logging
from functools import lru_cache
from math import factorial
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import sympy
from scipy.linalg import expm

from cartan_kill.bundle import CartanChart, omega_constant_field, vector_field_bracket, zeta
from cartan_kill.config import settings
from cartan_kill.curvature import curvature_at
from cartan_kill.exceptions import IllConditionedFitError
from cartan_kill.liealg import LieAlgebraSpec
from cartan_kill.schemas import BchReport, BchTermReport, NumpyModel

logger = logging.getLogger(__name__)

LETTERS = "XY"
MAX_ORDER = 8
MAX_VANDERMONDE_CONDITION = 1e12
FLAT_TOL = 1e-9
FIT_ODE_TOL = 1e-12

Word = Tuple[int, ...]
Series = Dict[Word, sympy.Rational]


# -------------------------------------------------- free associative algebra

def _add(target: Series, word: Word, coefficient) -> None:
    value = target.get(word, sympy.Integer(0)) + coefficient
    if value == 0:
        target.pop(word, None)
    else:
        target[word] = value


def multiply(a: Series, b: Series, max_degree: int) -> Series:
    out: Series = {}
    for u, cu in a.items():
        for v, cv in b.items():
            if len(u) + len(v) <= max_degree:
                _add(out, u + v, cu * cv)
    return out


def exp_letter(letter: int, max_degree: int) -> Series:
    return {(letter,) * n: sympy.Rational(1, factorial(n)) for n in range(max_degree + 1)}


def log_series(series: Series, max_degree: int) -> Series:
    """log(1 + Z) for a series with constant term 1"""
    Z = {w: c for w, c in series.items() if w}
    out: Series = {}
    power: Series = {(): sympy.Integer(1)}
    for n in range(1, max_degree + 1):
        power = multiply(power, Z, max_degree)
        for w, c in power.items():
            _add(out, w, sympy.Rational((-1) ** (n + 1), n) * c)
    return out


def commutator(a: Series, b: Series) -> Series:
    degree = max((len(w) for w in a), default=0) + max((len(w) for w in b), default=0)
    out = multiply(a, b, degree)
    for w, c in multiply(b, a, degree).items():
        _add(out, w, -c)
    return out


# ------------------------------------------------------------ Lyndon basis

def is_lyndon(word: Word) -> bool:
    """Strictly smaller than each of its proper suffixes"""
    return len(word) > 0 and all(word < word[i:] for i in range(1, len(word)))


def standard_bracketing(word: Word):
    """Nested pairs: a letter, or (left, right) for [left, right]"""
    if len(word) == 1:
        return word[0]
    for i in range(1, len(word)):
        if is_lyndon(word[i:]):
            return (standard_bracketing(word[:i]), standard_bracketing(word[i:]))
    raise ValueError(f"{word} is not a Lyndon word")


def expand_tree(tree) -> Series:
    if isinstance(tree, int):
        return {(tree,): sympy.Integer(1)}
    return commutator(expand_tree(tree[0]), expand_tree(tree[1]))


def tree_to_str(tree) -> str:
    if isinstance(tree, int):
        return LETTERS[tree]
    return f"[{tree_to_str(tree[0])}, {tree_to_str(tree[1])}]"


@lru_cache(maxsize=None)
def _lyndon_expansion(word: Word) -> Tuple[Tuple[Word, sympy.Rational], ...]:
    return tuple(expand_tree(standard_bracketing(word)).items())


def reduce_to_lyndon(series: Series) -> Dict[Word, sympy.Rational]:
    """Coordinates of a Lie element over standard-bracketed Lyndon words.

    The bracketing of a Lyndon word l expands to l plus lexicographically
    larger words, so peeling off the smallest word in the support is exact.
    """
    remainder = dict(series)
    coords: Dict[Word, sympy.Rational] = {}
    while remainder:
        word = min(remainder)
        if not is_lyndon(word):
            raise ValueError(f"Series is not a Lie element (leading word {word})")
        c = remainder[word]
        coords[word] = c
        for w, cw in _lyndon_expansion(word):
            _add(remainder, w, -c * cw)
    return coords


def dynkin_bracketing(series: Series) -> Series:
    """Lie projection (1/k) [[..[w1, w2], ..], wk] of a homogeneous series"""
    out: Series = {}
    for word, c in series.items():
        tree = word[0]
        for letter in word[1:]:
            tree = (tree, letter)
        for w, cw in expand_tree(tree).items():
            _add(out, w, c * cw / len(word))
    return out


class BracketPolynomial:
    """Rational combination of standard-bracketed Lyndon words in X, Y"""

    def __init__(self, terms: Dict[Word, sympy.Rational]):
        self.terms = {tuple(w): sympy.Rational(c) for w, c in terms.items() if c != 0}

    @classmethod
    def from_series(cls, series: Series) -> "BracketPolynomial":
        return cls(reduce_to_lyndon(series))

    @property
    def order(self) -> int:
        return max((len(w) for w in self.terms), default=0)

    def __eq__(self, other) -> bool:
        return isinstance(other, BracketPolynomial) and self.terms == other.terms

    def __neg__(self) -> "BracketPolynomial":
        return BracketPolynomial({w: -c for w, c in self.terms.items()})

    def __mul__(self, scalar) -> "BracketPolynomial":
        return BracketPolynomial({w: c * sympy.Rational(scalar) for w, c in self.terms.items()})

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"BracketPolynomial({str(self)!r})"

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for word in sorted(self.terms, key=lambda w: (len(w), w)):
            c = self.terms[word]
            body = tree_to_str(standard_bracketing(word))
            sign = "-" if c < 0 else "+"
            magnitude = abs(c)
            text = body if magnitude == 1 else f"{magnitude}*{body}"
            parts.append((sign, text))
        first_sign, first = parts[0]
        out = ("-" if first_sign == "-" else "") + first
        for sign, text in parts[1:]:
            out += f" {sign} {text}"
        return out

    def to_associative(self) -> Series:
        out: Series = {}
        for word, c in self.terms.items():
            for w, cw in _lyndon_expansion(word):
                _add(out, w, c * cw)
        return out

    def evaluate(self, bracket: Callable, X, Y, combine: Optional[Callable] = None):
        """Substitute X, Y and a bracket; combine(coefficients, values) sums the terms"""
        letters = (X, Y)
        cache = {}

        def walk(tree):
            key = repr(tree)
            if key not in cache:
                cache[key] = letters[tree] if isinstance(tree, int) else bracket(walk(tree[0]), walk(tree[1]))
            return cache[key]

        words = sorted(self.terms)
        values = [walk(standard_bracketing(w)) for w in words]
        coefficients = [float(self.terms[w]) for w in words]
        if combine is not None:
            return combine(coefficients, values)
        return sum((c * v for c, v in zip(coefficients, values)), 0.0 * np.asarray(X, dtype=float))


@lru_cache(maxsize=None)
def _bch_table(k_max: int) -> Tuple[BracketPolynomial, ...]:
    product = multiply(exp_letter(0, k_max), exp_letter(1, k_max), k_max)
    logarithm = log_series(product, k_max)
    terms = []
    for k in range(1, k_max + 1):
        homogeneous = {w: c for w, c in logarithm.items() if len(w) == k}
        lie = dynkin_bracketing(homogeneous)
        terms.append(BracketPolynomial.from_series(lie) * factorial(k))
    return tuple(terms)


def bch_terms(k_max: int) -> List[BracketPolynomial]:
    """a_1, ..., a_{k_max} with exact rational coefficients"""
    if not 1 <= k_max <= MAX_ORDER:
        raise ValueError(f"k_max must lie in 1..{MAX_ORDER}, got {k_max}")
    return list(_bch_table(k_max))


def swap_letters(poly: BracketPolynomial) -> BracketPolynomial:
    """The polynomial with X and Y exchanged, back over the Lyndon basis"""
    swapped = {tuple(1 - letter for letter in w): c for w, c in poly.to_associative().items()}
    return BracketPolynomial.from_series(swapped)


def evaluate_in_algebra(poly: BracketPolynomial, lie: LieAlgebraSpec, X, Y) -> np.ndarray:
    return poly.evaluate(lie.bracket, np.asarray(X, dtype=float), np.asarray(Y, dtype=float))


def evaluate_on_fields(
    poly: BracketPolynomial,
    chart: CartanChart,
    b,
    X,
    Y,
    h: float = 1e-3,
) -> np.ndarray:
    """omega_b(a(X~, Y~)) with numerical vector-field brackets"""
    b = np.asarray(b, dtype=float)

    def combine(coefficients, fields):
        return chart.omega(b) @ sum(c * field(b) for c, field in zip(coefficients, fields))

    def bracket(F, G):
        return vector_field_bracket(F, G, h=h)

    return poly.evaluate(bracket, omega_constant_field(chart, X), omega_constant_field(chart, Y), combine=combine)


def series_composition(lie: LieAlgebraSpec, X, Y, k_max: int, ts: Sequence[float]) -> Tuple[List[float], float]:
    """Errors of exp(sum_k t^k/k! a_k) against exp(tX) exp(tY), and their log-log slope"""
    terms = bch_terms(k_max)
    errors = []
    for t in ts:
        Z = sum(t**k / factorial(k) * evaluate_in_algebra(a, lie, X, Y) for k, a in enumerate(terms, start=1))
        exact = expm(lie.hat(t * np.asarray(X))) @ expm(lie.hat(t * np.asarray(Y)))
        errors.append(float(np.max(np.abs(expm(lie.hat(Z)) - exact))))
    slope = float(np.polyfit(np.log(ts), np.log(errors), 1)[0])
    return errors, slope


# -------------------------------------------------------------- Taylor fit

class TaylorFit(NumpyModel):
    coefficients: np.ndarray
    errors: np.ndarray
    step: float
    condition_number: float


def taylor_fit_zeta(
    chart: CartanChart,
    b,
    X,
    Y,
    k_max: int,
    h: Optional[float] = None,
    tol: Optional[float] = None,
    points: int = 6,
) -> TaylorFit:
    """z_1..z_{k_max} from a least-squares fit of zeta_b(tX, tY) on t = +-{1..points} h"""
    h = settings.TAYLOR_STEP if h is None else h
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    ts = np.concatenate([-h * np.arange(points, 0, -1), h * np.arange(1, points + 1)])
    degree = k_max + 2
    V = np.column_stack([ts**j / factorial(j) for j in range(1, degree + 1)])
    condition = float(np.linalg.cond(V))
    if ts.size <= degree or condition > MAX_VANDERMONDE_CONDITION:
        logger.error(f"Taylor fit ill conditioned: cond = {condition:.3e} for h = {h}")
        raise IllConditionedFitError(
            "Vandermonde system is ill conditioned", {"condition_number": condition, "step": h}
        )

    samples = np.array([zeta(chart, b, t * X, t * Y, tol=tol) for t in ts])
    coefficients, _, _, _ = np.linalg.lstsq(V, samples, rcond=None)
    residual = samples - V @ coefficients
    dof = ts.size - degree
    variance = np.sum(residual**2, axis=0) / dof
    covariance_diag = np.diag(np.linalg.inv(V.T @ V))
    errors = np.sqrt(np.outer(covariance_diag, variance))
    return TaylorFit(
        coefficients=coefficients[:k_max],
        errors=errors[:k_max],
        step=h,
        condition_number=condition,
    )


def verify_prop_bch(
    chart: CartanChart,
    b,
    X,
    Y,
    k_max: int,
    tol: float = 1e-5,
    h: Optional[float] = None,
    ode_tol: Optional[float] = None,
    bracket_step: float = 1e-3,
) -> BchReport:
    """Fitted z_k against omega_b(a_k(X~, Y~)) for k = 1..k_max"""
    b = np.asarray(b, dtype=float)
    ode_tol = min(settings.TOL_ODE, FIT_ODE_TOL) if ode_tol is None else ode_tol
    fit = taylor_fit_zeta(chart, b, X, Y, k_max, h=h, tol=ode_tol)
    flat = float(np.max(np.abs(curvature_at(chart, b)), initial=0.0)) <= FLAT_TOL
    terms = []
    for k, a in enumerate(bch_terms(k_max), start=1):
        fitted = fit.coefficients[k - 1]
        if flat:
            predicted = evaluate_in_algebra(a, chart.lie, X, Y)
        elif k <= 3:
            predicted = evaluate_on_fields(a, chart, b, X, Y, h=bracket_step)
        else:
            terms.append(BchTermReport(order=k, expansion=str(a), fitted=fitted.tolist()))
            continue
        error = float(np.max(np.abs(fitted - predicted))) / max(float(np.max(np.abs(predicted))), 1.0)
        terms.append(
            BchTermReport(
                order=k,
                expansion=str(a),
                fitted=fitted.tolist(),
                predicted=np.asarray(predicted).tolist(),
                error=error,
                passed=error <= tol,
            )
        )
    decided = [t.passed for t in terms if t.passed is not None]
    passed = all(decided) if decided else None
    logger.info(f"{chart.name}: BCH check at {b.tolist()} {'passed' if passed else 'failed'}")
    return BchReport(terms=terms, passed=passed)
