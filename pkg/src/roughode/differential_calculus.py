"""Jet calculus for iterated differential operators of driving vector fields.

All derivative bookkeeping runs through truncated Taylor polynomials at a
point (multi-index -> coefficient dicts).  Word operators compose first-order
operators, bracket fields realize nested commutators, and tree/forest
operators realize the elementary differentials indexed by labelled rooted
trees, normalized so that a tree contributes its raw nested derivative
divided by its symmetry factor.
"""

from __future__ import annotations

import json
import math
from itertools import product as iter_product

import numpy as np

from .tree_hopf import (
    Forest,
    LabeledTree,
    convolution,
    dual_basis,
    multiplicity_factorial,
)


class JetOrderError(ValueError):
    """Requested derivative data beyond the declared jet order."""


def _factorial_multi(alpha):
    out = 1
    for a in alpha:
        out *= math.factorial(a)
    return out


class TaylorPoly:
    """Truncated Taylor expansion around a point.

    coeffs maps exponent multi-indices alpha (tuples of length dim) to the
    Taylor coefficient d^alpha f(x) / alpha!; only |alpha| <= order terms are
    meaningful, and products truncate to the smaller order of the factors.
    """

    __slots__ = ("dim", "order", "coeffs")

    def __init__(self, dim, order, coeffs=None):
        self.dim = int(dim)
        self.order = int(order)
        self.coeffs = coeffs if coeffs is not None else {}

    @classmethod
    def constant(cls, dim, order, value):
        coeffs = {}
        if value != 0.0:
            coeffs[(0,) * dim] = float(value)
        return cls(dim, order, coeffs)

    @classmethod
    def coordinate(cls, dim, axis, center, order):
        coeffs = {(0,) * dim: float(center[axis])}
        if order >= 1:
            alpha = [0] * dim
            alpha[axis] = 1
            coeffs[tuple(alpha)] = 1.0
        return cls(dim, order, coeffs)

    @classmethod
    def from_tensors(cls, tensors, order):
        """Build from [f(x), Df(x), D2f(x), ...] symmetric derivative arrays."""
        dim = None
        coeffs = {}
        for m, tensor in enumerate(tensors[: order + 1]):
            if m == 0:
                coeffs[()] = float(tensor)
                continue
            tensor = np.asarray(tensor, dtype=float)
            if dim is None:
                dim = tensor.shape[0]
                zero = (0,) * dim
                value = coeffs.pop(())
                if value != 0.0:
                    coeffs[zero] = value
            seen = set()
            for idx in iter_product(range(dim), repeat=m):
                alpha = [0] * dim
                for i in idx:
                    alpha[i] += 1
                alpha = tuple(alpha)
                if alpha in seen:
                    continue
                seen.add(alpha)
                value = float(tensor[idx]) / _factorial_multi(alpha)
                if value != 0.0:
                    coeffs[alpha] = value
        if dim is None:
            raise ValueError("from_tensors needs at least the gradient to fix dim")
        return cls(dim, order, coeffs)

    def value(self):
        return self.coeffs.get((0,) * self.dim, 0.0)

    def gradient(self):
        out = np.zeros(self.dim)
        for axis in range(self.dim):
            alpha = [0] * self.dim
            alpha[axis] = 1
            out[axis] = self.coeffs.get(tuple(alpha), 0.0)
        return out

    def derivative_tensor(self, m):
        """Dense symmetric array of order-m derivatives."""
        if m > self.order:
            raise JetOrderError(f"tensor of order {m} beyond jet order {self.order}")
        if m == 0:
            return np.array(self.value())
        out = np.zeros((self.dim,) * m)
        for idx in iter_product(range(self.dim), repeat=m):
            alpha = [0] * self.dim
            for i in idx:
                alpha[i] += 1
            alpha = tuple(alpha)
            c = self.coeffs.get(alpha)
            if c is not None:
                out[idx] = c * _factorial_multi(alpha)
        return out

    def diff(self, axis):
        """Taylor data of the partial derivative; order drops by one."""
        coeffs = {}
        for alpha, c in self.coeffs.items():
            k = alpha[axis]
            if k == 0:
                continue
            beta = list(alpha)
            beta[axis] = k - 1
            if sum(beta) <= self.order - 1:
                coeffs[tuple(beta)] = c * k
        return TaylorPoly(self.dim, self.order - 1, coeffs)

    def mul(self, other):
        order = min(self.order, other.order)
        coeffs = {}
        for alpha, ca in self.coeffs.items():
            if sum(alpha) > order:
                continue
            for beta, cb in other.coeffs.items():
                total = sum(alpha) + sum(beta)
                if total > order:
                    continue
                gamma = tuple(a + b for a, b in zip(alpha, beta))
                value = coeffs.get(gamma, 0.0) + ca * cb
                coeffs[gamma] = value
        return TaylorPoly(self.dim, order, {k: v for k, v in coeffs.items() if v != 0.0})

    def add(self, other):
        order = min(self.order, other.order)
        coeffs = dict(self.coeffs)
        for alpha, c in other.coeffs.items():
            coeffs[alpha] = coeffs.get(alpha, 0.0) + c
        return TaylorPoly(self.dim, order, {k: v for k, v in coeffs.items()
                                            if v != 0.0 and sum(k) <= order})

    def scale(self, c):
        c = float(c)
        return TaylorPoly(self.dim, self.order,
                          {k: c * v for k, v in self.coeffs.items()} if c else {})


# -- polynomial maps --------------------------------------------------------------


class PolynomialMap:
    """Polynomial map R^d -> R^k with exact derivatives of every order.

    Coefficients map exponent multi-indices to output vectors.  Derivative
    polynomials are precomputed once, so Taylor data at a point is an exact
    monomial evaluation.
    """

    def __init__(self, dim, coeffs, out_dim=None):
        self.dim = int(dim)
        clean = {}
        degree = 0
        for alpha, value in coeffs.items():
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != self.dim:
                raise ValueError("multi-index length must equal dim")
            value = np.atleast_1d(np.asarray(value, dtype=float))
            clean[alpha] = value
            degree = max(degree, sum(alpha))
        if not clean:
            if out_dim is None:
                raise ValueError("empty polynomial needs an explicit out_dim")
            clean[(0,) * self.dim] = np.zeros(out_dim)
        self.coeffs = clean
        self.out_dim = len(next(iter(clean.values())))
        for value in clean.values():
            if len(value) != self.out_dim:
                raise ValueError("inconsistent output dimensions")
        self.degree = degree
        self._jet_coeffs = self._build_jet_coeffs()

    def _build_jet_coeffs(self):
        # For each alpha, the polynomial of x giving d^alpha p(x) / alpha!.
        table = {}
        for beta, value in self.coeffs.items():
            for alpha in iter_product(*(range(b + 1) for b in beta)):
                rest = tuple(b - a for a, b in zip(alpha, beta))
                binom = 1.0
                for a, b in zip(alpha, beta):
                    binom *= math.comb(b, a)
                entry = table.setdefault(tuple(alpha), {})
                if rest in entry:
                    entry[rest] = entry[rest] + binom * value
                else:
                    entry[rest] = binom * value
        return table

    def value(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(self.out_dim)
        for alpha, value in self.coeffs.items():
            out += value * _monomial(x, alpha)
        return out

    def __call__(self, x):
        return self.value(x)

    def taylor(self, x, order):
        """Per-component Taylor polynomials at x, exact at any order."""
        x = np.asarray(x, dtype=float)
        polys = [TaylorPoly(self.dim, order, {}) for _ in range(self.out_dim)]
        for alpha, monomials in self._jet_coeffs.items():
            if sum(alpha) > order:
                continue
            coeff = np.zeros(self.out_dim)
            for rest, value in monomials.items():
                coeff += value * _monomial(x, rest)
            for j in range(self.out_dim):
                if coeff[j] != 0.0:
                    polys[j].coeffs[alpha] = coeff[j]
        return polys

    def to_json_dict(self):
        return {
            "d": self.dim,
            "degree": self.degree,
            "coeffs": {
                ",".join(str(a) for a in alpha): value.tolist()
                for alpha, value in sorted(self.coeffs.items())
            },
        }

    @classmethod
    def from_json_dict(cls, data):
        dim = int(data["d"])
        coeffs = {}
        for key, value in data["coeffs"].items():
            alpha = tuple(int(a) for a in key.split(",")) if key else ()
            coeffs[alpha] = value
        pmap = cls(dim, coeffs)
        if "degree" in data and int(data["degree"]) != pmap.degree:
            raise ValueError("declared degree does not match coefficients")
        return pmap

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))

    @classmethod
    def random(cls, dim, out_dim, degree, rng, scale=0.3):
        coeffs = {}
        for alpha in _multi_indices(dim, degree):
            coeffs[alpha] = scale * rng.standard_normal(out_dim) / (1.0 + sum(alpha))
        return cls(dim, coeffs)


def _monomial(x, alpha):
    out = 1.0
    for xi, a in zip(x, alpha):
        if a:
            out *= xi**a
    return out


def _multi_indices(dim, max_total):
    return [
        alpha
        for alpha in iter_product(range(max_total + 1), repeat=dim)
        if sum(alpha) <= max_total
    ]


# -- test functions and field systems ----------------------------------------------


class TestFunction:
    """Scalar observable with Taylor data up to a declared order (None = any)."""

    def __init__(self, dim, taylor_fn, max_order=None, name=None):
        self.dim = int(dim)
        self._taylor_fn = taylor_fn
        self.max_order = max_order
        self.name = name or "f"

    def taylor(self, x, order):
        if self.max_order is not None and order > self.max_order:
            raise JetOrderError(
                f"{self.name}: jets available to order {self.max_order}, "
                f"requested {order}"
            )
        return self._taylor_fn(np.asarray(x, dtype=float), order)

    def __call__(self, x):
        return self.taylor(x, 0).value()

    @classmethod
    def coordinate(cls, dim, axis):
        def fn(x, order):
            return TaylorPoly.coordinate(dim, axis, x, order)

        return cls(dim, fn, name=f"coord_{axis + 1}")

    @classmethod
    def from_polynomial(cls, pmap, component=0, name=None):
        def fn(x, order):
            return pmap.taylor(x, order)[component]

        return cls(pmap.dim, fn, name=name or "poly")

    @classmethod
    def squared_norm(cls, dim):
        coeffs = {}
        for axis in range(dim):
            alpha = [0] * dim
            alpha[axis] = 2
            coeffs[tuple(alpha)] = np.array([1.0])
        pmap = PolynomialMap(dim, coeffs)
        return cls.from_polynomial(pmap, name="sumsq")

    @classmethod
    def exponential(cls, weights, name="expfn"):
        weights = np.asarray(weights, dtype=float)
        dim = weights.size

        def fn(x, order):
            base = math.exp(float(weights @ x))
            coeffs = {}
            for alpha in _multi_indices(dim, order):
                c = base
                for w, a in zip(weights, alpha):
                    c *= w**a
                c /= _factorial_multi(alpha)
                if c != 0.0:
                    coeffs[alpha] = c
            return TaylorPoly(dim, order, coeffs)

        return cls(dim, fn, name=name)

    @classmethod
    def sinusoid(cls, weights, phase=0.0, name="sinfn"):
        weights = np.asarray(weights, dtype=float)
        dim = weights.size

        def fn(x, order):
            theta = float(weights @ x) + phase
            coeffs = {}
            for alpha in _multi_indices(dim, order):
                m = sum(alpha)
                c = math.sin(theta + m * math.pi / 2.0)
                for w, a in zip(weights, alpha):
                    c *= w**a
                c /= _factorial_multi(alpha)
                if c != 0.0:
                    coeffs[alpha] = c
            return TaylorPoly(dim, order, coeffs)

        return cls(dim, fn, name=name)


class VectorFieldSystem:
    """Driving fields V_1..V_ell on R^d with jets up to a declared order.

    Each field supplies per-component Taylor data; PolynomialMap is the exact
    reference implementation.  ``regularity`` is metadata used only in
    reports.
    """

    def __init__(self, dim, fields, max_order=6, regularity=None):
        self.dim = int(dim)
        self.width = len(fields)
        self.fields = list(fields)
        self.max_order = max_order
        self.regularity = regularity
        for field in self.fields:
            if getattr(field, "out_dim", dim) != dim:
                raise ValueError("driving fields must map R^d to R^d")

    def taylor(self, letter, x, order, cache=None):
        """Component jets of V_letter at x (letters are 1-based)."""
        if self.max_order is not None and order > self.max_order:
            raise JetOrderError(
                f"field jets available to order {self.max_order}, requested {order}"
            )
        if cache is not None:
            key = (letter, order)
            hit = cache.get(key)
            if hit is not None:
                return hit
        polys = self.fields[letter - 1].taylor(x, order)
        if cache is not None:
            cache[(letter, order)] = polys
        return polys

    def value(self, letter, x):
        return self.fields[letter - 1].value(x)

    @classmethod
    def from_polynomials(cls, pmaps, max_order=6, regularity=None):
        dims = {p.dim for p in pmaps}
        if len(dims) != 1:
            raise ValueError("all fields must share the state dimension")
        return cls(dims.pop(), pmaps, max_order=max_order, regularity=regularity)

    def to_json_dict(self):
        return {
            "d": self.dim,
            "width": self.width,
            "fields": [f.to_json_dict() for f in self.fields],
        }

    @classmethod
    def from_json_dict(cls, data):
        fields = [PolynomialMap.from_json_dict(f) for f in data["fields"]]
        system = cls.from_polynomials(fields)
        if system.dim != int(data["d"]) or system.width != int(data["width"]):
            raise ValueError("field file header does not match its contents")
        return system

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


# -- word operators ----------------------------------------------------------------


def _apply_letter(system, letter, poly, x, cache):
    # V_i g = sum_j (d_j g) V_i^j, one order lower than g.
    comps = system.taylor(letter, x, poly.order - 1, cache)
    out = TaylorPoly(system.dim, poly.order - 1, {})
    for j in range(system.dim):
        out = out.add(poly.diff(j).mul(comps[j]))
    return out


def word_operator_apply(system, word, f, x, order=0):
    """Value (or jet) of V_I f at x, with V_I = V_{i_1} ... V_{i_k}.

    The rightmost letter acts first.  Needs f-jets of order |I| + order and
    field jets one order lower.
    """
    x = np.asarray(x, dtype=float)
    cache = {}
    poly = f.taylor(x, order + len(word))
    for letter in reversed(word):
        poly = _apply_letter(system, letter, poly, x, cache)
    return poly if order > 0 else poly.value()


def word_operator_vector(system, word, x):
    """V_I applied to the coordinate functions: the vector V_I(x)."""
    x = np.asarray(x, dtype=float)
    cache = {}
    out = np.empty(system.dim)
    for axis in range(system.dim):
        poly = TaylorPoly.coordinate(system.dim, axis, x, len(word))
        for letter in reversed(word):
            poly = _apply_letter(system, letter, poly, x, cache)
        out[axis] = poly.value()
    return out


# -- derived vector fields ------------------------------------------------------------


class ZeroField:
    def __init__(self, dim):
        self.dim = dim

    def taylor(self, x, order, cache=None):
        return [TaylorPoly(self.dim, order, {}) for _ in range(self.dim)]

    def value(self, x):
        return np.zeros(self.dim)

    def __call__(self, x):
        return self.value(x)


class LetterField:
    """The driving field V_a as a standalone evaluator."""

    def __init__(self, system, letter):
        self.system = system
        self.letter = letter
        self.dim = system.dim

    def taylor(self, x, order, cache=None):
        return self.system.taylor(self.letter, x, order, cache)

    def value(self, x):
        return self.system.value(self.letter, x)

    def __call__(self, x):
        return self.value(x)


class BracketField:
    """Right-nested commutator field V_[w] = [V_{w_1}, [V_{w_2}, [...]]].

    Jets propagate through the Leibniz rule, one order lost per nesting.
    """

    def __init__(self, system, word):
        if not word:
            raise ValueError("bracket field needs a nonempty word")
        self.system = system
        self.word = tuple(word)
        self.dim = system.dim
        self._inner = BracketField(system, self.word[1:]) if len(self.word) > 1 else None

    def taylor(self, x, order, cache=None):
        if cache is None:
            cache = {}
        key = ("bracket", self.word, order)
        hit = cache.get(key)
        if hit is not None:
            return hit
        if self._inner is None:
            out = self.system.taylor(self.word[0], x, order, cache)
        else:
            v = self.system.taylor(self.word[0], x, order + 1, cache)
            w = self._inner.taylor(x, order + 1, cache)
            out = []
            for j in range(self.dim):
                poly = TaylorPoly(self.dim, order, {})
                for k in range(self.dim):
                    poly = poly.add(v[k].mul(w[j].diff(k)))
                    poly = poly.add(w[k].mul(v[j].diff(k)).scale(-1.0))
                out.append(poly)
        cache[key] = out
        return out

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return np.array([p.value() for p in self.taylor(x, 0)])

    def __call__(self, x):
        return self.value(x)


class TreeField:
    """Elementary differential of a labelled tree, weighted by 1/sigma.

    The recursion applies the inverse multiplicity factorial at each node and
    keeps children normalized, which composes to the full symmetry factor of
    the tree; this is the normalization under which the forest expansion of a
    smooth flow carries plain tree coefficients.
    """

    def __init__(self, system, tree):
        self.system = system
        self.tree = tree
        self.dim = system.dim
        self._children = [TreeField(system, c) for c in tree.children]
        self._norm = 1.0 / multiplicity_factorial(tree.children)

    def taylor(self, x, order, cache=None):
        if cache is None:
            cache = {}
        key = ("tree", self.tree, order)
        hit = cache.get(key)
        if hit is not None:
            return hit
        n = len(self._children)
        if n == 0:
            out = self.system.taylor(self.tree.label, x, order, cache)
        else:
            root = self.system.taylor(self.tree.label, x, order + n, cache)
            kids = [child.taylor(x, order, cache) for child in self._children]
            out = []
            for j in range(self.dim):
                poly = TaylorPoly(self.dim, order, {})
                for ks in iter_product(range(self.dim), repeat=n):
                    term = root[j]
                    for k in ks:
                        term = term.diff(k)
                    if not term.coeffs:
                        continue
                    for child, k in zip(kids, ks):
                        term = term.mul(child[k])
                        if not term.coeffs:
                            break
                    poly = poly.add(term)
                out.append(poly.scale(self._norm))
        cache[key] = out
        return out

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return np.array([p.value() for p in self.taylor(x, 0)])

    def __call__(self, x):
        return self.value(x)


class CombinationField:
    """Linear combination of jet-capable vector fields (shared jet cache)."""

    def __init__(self, dim, terms):
        self.dim = dim
        self.terms = [(float(c), field) for c, field in terms if c != 0.0]

    def taylor(self, x, order, cache=None):
        if cache is None:
            cache = {}
        out = [TaylorPoly(self.dim, order, {}) for _ in range(self.dim)]
        for c, field in self.terms:
            polys = field.taylor(x, order, cache)
            for j in range(self.dim):
                out[j] = out[j].add(polys[j].scale(c))
        return out

    def value(self, x):
        x = np.asarray(x, dtype=float)
        cache = {}
        out = np.zeros(self.dim)
        for c, field in self.terms:
            polys = field.taylor(x, 0, cache)
            for j in range(self.dim):
                out[j] += c * polys[j].value()
        return out

    def __call__(self, x):
        return self.value(x)


def bracket_field(system, word):
    """First-order field for the nested commutator of a word."""
    return BracketField(system, word)


def tree_field(system, tree):
    """Elementary-differential field of a single labelled tree."""
    return TreeField(system, tree)


# -- forest operators ----------------------------------------------------------------


def forest_operator_apply(system, forest, f, x, order=0):
    """Apply the differential operator of a dual forest to f at x.

    The empty forest acts as the identity (counit pairing); a forest of n
    trees contracts D^n f with the normalized tree fields and divides by the
    multiplicity factorial of the forest.
    """
    x = np.asarray(x, dtype=float)
    n = len(forest)
    poly = f.taylor(x, order + n)
    if n == 0:
        return poly if order > 0 else poly.value()
    cache = {}
    kids = [TreeField(system, tree).taylor(x, order, cache) for tree in forest.trees]
    out = TaylorPoly(system.dim, order, {})
    for ks in iter_product(range(system.dim), repeat=n):
        term = poly
        for k in ks:
            term = term.diff(k)
        if not term.coeffs:
            continue
        for child, k in zip(kids, ks):
            term = term.mul(child[k])
            if not term.coeffs:
                break
        out = out.add(term)
    out = out.scale(1.0 / multiplicity_factorial(forest.trees))
    return out if order > 0 else out.value()


def series_operator_apply(system, series, f, x, order=0):
    """Linear extension of forest operators over a tree series."""
    x = np.asarray(x, dtype=float)
    if order > 0:
        acc = TaylorPoly(system.dim, order, {})
        for forest, c in series.coeffs.items():
            acc = acc.add(forest_operator_apply(system, forest, f, x, order).scale(c))
        return acc
    total = 0.0
    for forest, c in series.coeffs.items():
        total += c * forest_operator_apply(system, forest, f, x)
    return total


class AppliedOperator:
    """The scalar function x -> (V(phi*) f)(x), exposed with its own jets."""

    def __init__(self, system, forest, f):
        self.system = system
        self.forest = forest
        self.f = f
        self.dim = system.dim
        self.name = f"V({forest!r})[{getattr(f, 'name', 'f')}]"

    def taylor(self, x, order):
        out = forest_operator_apply(self.system, self.forest, self.f, x, order)
        if order == 0 and not isinstance(out, TaylorPoly):
            return TaylorPoly.constant(self.dim, 0, out)
        return out

    def __call__(self, x):
        return forest_operator_apply(self.system, self.forest, self.f, x)


def morphism_defect(system, phi, psi, f, x, grade_cap=None):
    """|V(phi*) V(psi*) f - V((phi* star psi*)) f| at x.

    The right-hand side expands the dual product through the coproduct table,
    so this pins both the Hopf convolution and the operator normalization.
    """
    x = np.asarray(x, dtype=float)
    if grade_cap is None:
        grade_cap = phi.grade + psi.grade
    width = max([1] + [t.label for t in phi.trees] + [t.label for t in psi.trees])
    width = max(width, system.width)
    inner = AppliedOperator(system, psi, f)
    left = forest_operator_apply(system, phi, inner, x)
    prod = convolution(
        dual_basis(phi, width, grade_cap), dual_basis(psi, width, grade_cap)
    )
    right = series_operator_apply(system, prod, f, x)
    return abs(left - right)
