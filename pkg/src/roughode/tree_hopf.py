"""Labelled rooted trees, forests, and the associated Hopf-algebra layer.

Trees are interned canonical values (children sorted by a recursive key), so
equality and hashing are structural.  ``TreeSeries`` holds finitely supported
real coefficients on forests up to a grade cap; the convolution realizes the
truncated dual product, with ``exp_star``/``log_star`` and the antipode giving
the character-group operations.
"""

from __future__ import annotations

import itertools
import math

#: Forests with at least two trees; used as group-likeness defect support.
GROUPLIKE_TOL = 1e-10


class LabeledTree:
    """Rooted tree with integer labels >= 1; children stored in canonical order."""

    __slots__ = ("label", "children", "key", "size", "sigma", "_hash")

    def __init__(self, label, children=()):
        label = int(label)
        if label < 1:
            raise ValueError("labels start at 1")
        children = tuple(sorted(children, key=lambda t: t.key))
        self.label = label
        self.children = children
        self.key = (label, tuple(c.key for c in children))
        self.size = 1 + sum(c.size for c in children)
        self.sigma = _sigma_of_children(children)
        self._hash = hash(self.key)

    def __eq__(self, other):
        return isinstance(other, LabeledTree) and self.key == other.key

    def __hash__(self):
        return self._hash

    def __lt__(self, other):
        return self.key < other.key

    def __repr__(self):
        return format_tree(self)


def _sigma_of_children(children):
    # sigma([tau_1^{n_1} ... tau_k^{n_k}]_a) = prod n_i! * sigma(tau_i)^{n_i};
    # independent of the root label.  children must already be sorted.
    sigma = 1
    i = 0
    while i < len(children):
        j = i
        while j < len(children) and children[j] == children[i]:
            j += 1
        n = j - i
        sigma *= math.factorial(n) * children[i].sigma**n
        i = j
    return sigma


def multiplicity_factorial(trees):
    """Product of multiplicity factorials of a sorted tree multiset."""
    trees = tuple(sorted(trees, key=lambda t: t.key))
    out = 1
    i = 0
    while i < len(trees):
        j = i
        while j < len(trees) and trees[j] == trees[i]:
            j += 1
        out *= math.factorial(j - i)
        i = j
    return out


class Forest:
    """Multiset of labelled trees in sorted normal form; the empty forest is the unit."""

    __slots__ = ("trees", "key", "grade", "_hash")

    def __init__(self, trees=()):
        trees = tuple(sorted(trees, key=lambda t: t.key))
        self.trees = trees
        self.key = tuple(t.key for t in trees)
        self.grade = sum(t.size for t in trees)
        self._hash = hash(self.key)

    def __eq__(self, other):
        return isinstance(other, Forest) and self.key == other.key

    def __hash__(self):
        return self._hash

    def __lt__(self, other):
        return self.key < other.key

    def __len__(self):
        return len(self.trees)

    def __mul__(self, other):
        return Forest(self.trees + other.trees)

    def append(self, tree):
        return Forest(self.trees + (tree,))

    @property
    def sigma(self):
        """Symmetry factor of the forest, sigma([tau_1...tau_n]_a) for any root label."""
        sigma = multiplicity_factorial(self.trees)
        for t in self.trees:
            sigma *= t.sigma
        return sigma

    def __repr__(self):
        return format_forest(self)


EMPTY_FOREST = Forest()


def sigma(tree):
    """Symmetry factor of a labelled rooted tree."""
    return tree.sigma


# -- text format ---------------------------------------------------------------


def format_tree(tree):
    if not tree.children:
        return str(tree.label)
    return f"{tree.label}[{','.join(format_tree(c) for c in tree.children)}]"


def format_forest(forest):
    return f"[{','.join(format_tree(t) for t in forest.trees)}]"


def parse_tree(text):
    tree, pos = _parse_tree_at(text, 0)
    if pos != len(text):
        raise ValueError(f"trailing input in tree literal: {text[pos:]!r}")
    return tree


def parse_forest(text):
    text = text.strip()
    if not (text.startswith("[") and text.endswith("]")):
        raise ValueError("forest literal must be bracketed, e.g. [1,2[1]]")
    body = text[1:-1].strip()
    if not body:
        return EMPTY_FOREST
    trees = []
    pos = 0
    while True:
        tree, pos = _parse_tree_at(body, pos)
        trees.append(tree)
        if pos == len(body):
            break
        if body[pos] != ",":
            raise ValueError(f"expected ',' at position {pos} in forest literal")
        pos += 1
    return Forest(trees)


def _parse_tree_at(text, pos):
    start = pos
    while pos < len(text) and text[pos].isdigit():
        pos += 1
    if pos == start:
        raise ValueError(f"expected label at position {start} in {text!r}")
    label = int(text[start:pos])
    children = []
    if pos < len(text) and text[pos] == "[":
        pos += 1
        while True:
            child, pos = _parse_tree_at(text, pos)
            children.append(child)
            if pos >= len(text):
                raise ValueError("unterminated '[' in tree literal")
            if text[pos] == ",":
                pos += 1
                continue
            if text[pos] == "]":
                pos += 1
                break
            raise ValueError(f"unexpected character {text[pos]!r} in tree literal")
    return LabeledTree(label, children), pos


# -- enumeration ---------------------------------------------------------------


def _multisets_with_total(trees, total):
    """Non-decreasing tree tuples (by list position) with sizes summing to total."""
    out = []
    acc = []

    def rec(start, remaining):
        if remaining == 0:
            out.append(tuple(acc))
            return
        for i in range(start, len(trees)):
            if trees[i].size <= remaining:
                acc.append(trees[i])
                rec(i, remaining - trees[i].size)
                acc.pop()

    rec(0, total)
    return out


def enumerate_trees(max_nodes, width):
    """All labelled rooted trees with up to max_nodes nodes, in canonical order."""
    if max_nodes < 1:
        return []
    by_size = {1: [LabeledTree(a) for a in range(1, width + 1)]}
    smaller = list(by_size[1])
    for n in range(2, max_nodes + 1):
        level = []
        for combo in _multisets_with_total(smaller, n - 1):
            for a in range(1, width + 1):
                level.append(LabeledTree(a, combo))
        by_size[n] = sorted(set(level), key=lambda t: t.key)
        smaller.extend(by_size[n])
    result = []
    for n in range(1, max_nodes + 1):
        result.extend(sorted(by_size[n], key=lambda t: t.key))
    return result


def enumerate_forests(max_grade, width):
    """All forests of grade up to max_grade (the empty forest first)."""
    trees = enumerate_trees(max_grade, width) if max_grade >= 1 else []
    forests = []
    for total in range(0, max_grade + 1):
        combos = _multisets_with_total(trees, total)
        forests.extend(sorted((Forest(c) for c in combos), key=lambda f: f.key))
    return forests


# -- coproduct and antipode ------------------------------------------------------

_CUTS_MEMO = {}
_ANTIPODE_MEMO = {}


def _root_cuts(tree):
    """Pairs (pruned forest, kept subtree) over nonempty rooted subtrees.

    Repeated pairs encode multiplicities.  Each child is either cut whole
    (joining the pruned forest) or kept through one of its own root cuts.
    """
    cached = _CUTS_MEMO.get(tree)
    if cached is not None:
        return cached
    options = []
    for child in tree.children:
        opts = [((child,), None)]
        opts.extend((pf.trees, kt) for pf, kt in _root_cuts(child))
        options.append(opts)
    results = []
    for choice in itertools.product(*options):
        pruned = []
        kept_children = []
        for trees_part, kept_tree in choice:
            pruned.extend(trees_part)
            if kept_tree is not None:
                kept_children.append(kept_tree)
        results.append((Forest(pruned), LabeledTree(tree.label, kept_children)))
    _CUTS_MEMO[tree] = results
    return results


def coproduct(tree):
    """Coproduct of a tree as {(pruned forest, kept forest): multiplicity}.

    Includes the empty rooted subtree (term tree x unit) and the full tree
    (term unit x tree).
    """
    terms = {(Forest((tree,)), EMPTY_FOREST): 1}
    for pruned, kept in _root_cuts(tree):
        key = (pruned, Forest((kept,)))
        terms[key] = terms.get(key, 0) + 1
    return terms


def coproduct_forest(forest):
    """Multiplicative extension of the coproduct to forests."""
    terms = {(EMPTY_FOREST, EMPTY_FOREST): 1}
    for tree in forest.trees:
        tree_terms = coproduct(tree)
        new_terms = {}
        for (l1, r1), c1 in terms.items():
            for (l2, r2), c2 in tree_terms.items():
                key = (l1 * l2, r1 * r2)
                new_terms[key] = new_terms.get(key, 0) + c1 * c2
        terms = new_terms
    return terms


def antipode_tree(tree):
    """Antipode of a single tree as a formal integer sum of forests."""
    cached = _ANTIPODE_MEMO.get(tree)
    if cached is not None:
        return cached
    acc = {Forest((tree,)): -1}
    for pruned, kept in _root_cuts(tree):
        if kept == tree:
            continue
        for psi, c in antipode(pruned).items():
            key = psi.append(kept)
            val = acc.get(key, 0) - c
            if val:
                acc[key] = val
            elif key in acc:
                del acc[key]
    _ANTIPODE_MEMO[tree] = acc
    return acc


def antipode(forest):
    """Antipode of a forest (multiplicative over trees)."""
    acc = {EMPTY_FOREST: 1}
    for tree in forest.trees:
        tree_sum = antipode_tree(tree)
        new_acc = {}
        for f1, c1 in acc.items():
            for f2, c2 in tree_sum.items():
                key = f1 * f2
                val = new_acc.get(key, 0) + c1 * c2
                if val:
                    new_acc[key] = val
                elif key in new_acc:
                    del new_acc[key]
        acc = new_acc
    return acc


# -- dual series -----------------------------------------------------------------


class TreeSeries:
    """Finitely supported real coefficients on forests of grade <= grade_cap."""

    __slots__ = ("width", "grade_cap", "coeffs")

    def __init__(self, width, grade_cap, coeffs=None):
        self.width = int(width)
        self.grade_cap = int(grade_cap)
        clean = {}
        for forest, value in (coeffs or {}).items():
            if not isinstance(forest, Forest):
                raise TypeError("TreeSeries keys must be Forest values")
            if forest.grade > self.grade_cap:
                raise ValueError(
                    f"forest of grade {forest.grade} above cap {self.grade_cap}"
                )
            value = float(value)
            if value != 0.0:
                clean[forest] = value
        self.coeffs = clean

    def coefficient(self, forest):
        return self.coeffs.get(forest, 0.0)

    @property
    def unit_coefficient(self):
        return self.coeffs.get(EMPTY_FOREST, 0.0)

    def _require_same_shape(self, other):
        if self.width != other.width or self.grade_cap != other.grade_cap:
            raise ValueError("mixed (width, grade_cap) series are rejected")

    def __add__(self, other):
        self._require_same_shape(other)
        coeffs = dict(self.coeffs)
        for forest, value in other.coeffs.items():
            coeffs[forest] = coeffs.get(forest, 0.0) + value
        return TreeSeries(self.width, self.grade_cap, coeffs)

    def __sub__(self, other):
        return self + other.scale(-1.0)

    def scale(self, c):
        c = float(c)
        return TreeSeries(
            self.width, self.grade_cap, {f: c * v for f, v in self.coeffs.items()}
        )

    def support(self):
        return sorted(self.coeffs, key=lambda f: (f.grade, f.key))

    def max_abs_diff(self, other):
        self._require_same_shape(other)
        keys = set(self.coeffs) | set(other.coeffs)
        if not keys:
            return 0.0
        return max(abs(self.coefficient(k) - other.coefficient(k)) for k in keys)

    def proper_forest_mass(self):
        """Max absolute coefficient on forests with at least two trees."""
        mass = 0.0
        for forest, value in self.coeffs.items():
            if len(forest) >= 2:
                mass = max(mass, abs(value))
        return mass

    def tree_coefficients(self):
        return {
            forest.trees[0]: value
            for forest, value in self.coeffs.items()
            if len(forest) == 1
        }

    def __repr__(self):
        parts = [f"{v:+g}*{f!r}" for f, v in sorted(
            self.coeffs.items(), key=lambda kv: (kv[0].grade, kv[0].key))]
        body = " ".join(parts) if parts else "0"
        return f"TreeSeries({self.width}, {self.grade_cap}: {body})"


def unit_series(width, grade_cap):
    return TreeSeries(width, grade_cap, {EMPTY_FOREST: 1.0})


def dual_basis(forest, width, grade_cap):
    """Dual basis series of a forest (or of a single tree)."""
    if isinstance(forest, LabeledTree):
        forest = Forest((forest,))
    return TreeSeries(width, grade_cap, {forest: 1.0})


_TABLE_CACHE = {}


def _convolution_table(width, grade_cap):
    key = (width, grade_cap)
    cached = _TABLE_CACHE.get(key)
    if cached is not None:
        return cached
    table = []
    for forest in enumerate_forests(grade_cap, width):
        entries = [
            (left, right, float(c))
            for (left, right), c in coproduct_forest(forest).items()
        ]
        table.append((forest, entries))
    _TABLE_CACHE[key] = table
    return table


def convolution(first, second):
    """Truncated convolution product; the first factor reads the pruned part.

    This ordering makes the dual product match operator composition with the
    first factor outermost.
    """
    first._require_same_shape(second)
    a, b = first.coeffs, second.coeffs
    coeffs = {}
    for forest, entries in _convolution_table(first.width, first.grade_cap):
        total = 0.0
        for left, right, c in entries:
            va = a.get(left)
            if va is None:
                continue
            vb = b.get(right)
            if vb is None:
                continue
            total += c * va * vb
        if total != 0.0:
            coeffs[forest] = total
    return TreeSeries(first.width, first.grade_cap, coeffs)


def dual_inverse(series):
    """Inverse of a unit-normalized series via the dual antipode."""
    if series.unit_coefficient != 1.0:
        raise ValueError("dual_inverse requires unit coefficient exactly 1")
    coeffs = {}
    for forest, _ in _convolution_table(series.width, series.grade_cap):
        total = 0.0
        for psi, c in antipode(forest).items():
            if psi.grade <= series.grade_cap:
                value = series.coeffs.get(psi)
                if value is not None:
                    total += c * value
        if total != 0.0:
            coeffs[forest] = total
    return TreeSeries(series.width, series.grade_cap, coeffs)


def exp_star(series):
    """Star exponential of a series with vanishing unit coefficient."""
    if series.unit_coefficient != 0.0:
        raise ValueError("exp_star requires unit coefficient exactly 0")
    acc = unit_series(series.width, series.grade_cap) + series
    power = series
    factorial = 1.0
    for n in range(2, series.grade_cap + 1):
        power = convolution(power, series)
        factorial *= n
        acc = acc + power.scale(1.0 / factorial)
    return acc


def log_star(series):
    """Star logarithm of a series with unit coefficient one."""
    if series.unit_coefficient != 1.0:
        raise ValueError("log_star requires unit coefficient exactly 1")
    c = series - unit_series(series.width, series.grade_cap)
    acc = c
    power = c
    sign = 1.0
    for n in range(2, series.grade_cap + 1):
        power = convolution(power, c)
        sign = -sign
        acc = acc + power.scale(sign / n)
    return acc


def grouplike_check(series, tol=GROUPLIKE_TOL):
    """Group-likeness test: log_star must be supported on single trees.

    Returns (is_grouplike, max deviation), the deviation being the unit-
    coefficient error or the largest proper-forest coefficient of the log.
    """
    unit_err = abs(series.unit_coefficient - 1.0)
    if unit_err > tol:
        return False, unit_err
    normalized = TreeSeries(series.width, series.grade_cap, dict(series.coeffs))
    normalized.coeffs[EMPTY_FOREST] = 1.0
    defect = log_star(normalized).proper_forest_mass()
    return defect <= tol, defect


class BranchedGroupElement(TreeSeries):
    """Character of the forest algebra: multiplicative coefficients, unit one."""

    __slots__ = ()

    def __init__(self, width, grade_cap, coeffs):
        super().__init__(width, grade_cap, coeffs)
        if self.unit_coefficient != 1.0:
            raise ValueError("characters must have unit coefficient exactly 1")

    @classmethod
    def from_tree_values(cls, width, grade_cap, tree_values):
        """Multiplicative extension of per-tree values to all stored forests."""
        coeffs = {}
        for forest in enumerate_forests(grade_cap, width):
            value = 1.0
            for tree in forest.trees:
                value *= tree_values.get(tree, 0.0)
                if value == 0.0:
                    break
            coeffs[forest] = value
        return cls(width, grade_cap, coeffs)

    @classmethod
    def from_series(cls, series):
        return cls(series.width, series.grade_cap, series.coeffs)

    def character_defect(self):
        """Max deviation of stored forest coefficients from tree products."""
        defect = 0.0
        for forest in enumerate_forests(self.grade_cap, self.width):
            if len(forest) < 2:
                continue
            product = 1.0
            for tree in forest.trees:
                product *= self.coefficient(Forest((tree,)))
            defect = max(defect, abs(self.coefficient(forest) - product))
        return defect
