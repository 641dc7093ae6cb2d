"""Truncated tensor algebra over R^ell: products, brackets, exp/log, norms.

Elements are graded coefficient stacks indexed by words over the alphabet
{1, ..., ell}, truncated at a fixed level.  Level k is a flat array of
length ell**k in row-major word order, level 0 is a scalar.  All operations
are pure and close over a fixed (width, depth) shape.
"""

from __future__ import annotations

import numpy as np

#: Default tolerance for certifying Lie membership via Dynkin idempotence.
LIE_TOL = 1e-9


class ShapeMismatchError(ValueError):
    """Operands belong to different truncated algebras."""


def word_index(word, width):
    """Row-major index of a word (i_1, ..., i_k) with letters in 1..width."""
    idx = 0
    for letter in word:
        if not 1 <= letter <= width:
            raise ValueError(f"letter {letter} outside 1..{width}")
        idx = idx * width + (letter - 1)
    return idx


def index_word(index, length, width):
    """Inverse of :func:`word_index` for words of the given length."""
    letters = []
    for _ in range(length):
        index, rem = divmod(index, width)
        letters.append(rem + 1)
    return tuple(reversed(letters))


def all_words(length, width):
    """All words of the given length in row-major index order."""
    return [index_word(i, length, width) for i in range(width**length)]


class TruncatedTensor:
    """Element of the level-``depth`` truncated tensor algebra over R^``width``."""

    __slots__ = ("width", "depth", "levels")

    def __init__(self, width, depth, levels):
        self.width = int(width)
        self.depth = int(depth)
        if self.width < 1 or self.depth < 1:
            raise ValueError("width and depth must be positive")
        levels = [np.asarray(lvl, dtype=float).reshape(-1) for lvl in levels]
        if len(levels) != self.depth + 1:
            raise ShapeMismatchError(
                f"expected {self.depth + 1} levels, got {len(levels)}"
            )
        for k, lvl in enumerate(levels):
            if lvl.size != self.width**k:
                raise ShapeMismatchError(
                    f"level {k} has {lvl.size} entries, expected {self.width**k}"
                )
        self.levels = levels

    # -- basic structure ---------------------------------------------------

    @property
    def scalar(self):
        return float(self.levels[0][0])

    def level(self, k):
        return self.levels[k]

    def coefficient(self, word):
        """Coefficient of the given word (empty tuple for the scalar level)."""
        k = len(word)
        if k > self.depth:
            raise ValueError(f"word longer than depth {self.depth}")
        return float(self.levels[k][word_index(word, self.width)])

    def copy(self):
        return TruncatedTensor(self.width, self.depth, [lvl.copy() for lvl in self.levels])

    def same_shape(self, other):
        return self.width == other.width and self.depth == other.depth

    def _require_same_shape(self, other):
        if not isinstance(other, TruncatedTensor) or not self.same_shape(other):
            raise ShapeMismatchError("mixed (width, depth) shapes are rejected")

    # -- linear structure ----------------------------------------------------

    def __add__(self, other):
        self._require_same_shape(other)
        return TruncatedTensor(
            self.width, self.depth,
            [a + b for a, b in zip(self.levels, other.levels)],
        )

    def __sub__(self, other):
        self._require_same_shape(other)
        return TruncatedTensor(
            self.width, self.depth,
            [a - b for a, b in zip(self.levels, other.levels)],
        )

    def __neg__(self):
        return self.scale(-1.0)

    def scale(self, c):
        c = float(c)
        return TruncatedTensor(self.width, self.depth, [c * lvl for lvl in self.levels])

    def max_abs_diff(self, other):
        self._require_same_shape(other)
        return max(
            float(np.max(np.abs(a - b))) for a, b in zip(self.levels, other.levels)
        )

    def allclose(self, other, tol=1e-12):
        return self.max_abs_diff(other) <= tol

    def __repr__(self):
        return (
            f"TruncatedTensor(width={self.width}, depth={self.depth}, "
            f"scalar={self.scalar:g}, |level1|={np.linalg.norm(self.levels[1]):g})"
        )


class GroupTensor(TruncatedTensor):
    """Truncated tensor with unit scalar part; carrier for signature increments.

    The scalar invariant is enforced exactly; the Lie-log membership test is
    tolerance-based and available via :func:`lie_defect` on the log.
    """

    def __init__(self, width, depth, levels):
        super().__init__(width, depth, levels)
        if self.levels[0][0] != 1.0:
            raise ValueError("group tensor must have scalar part exactly 1")


class LieTensor(TruncatedTensor):
    """Truncated tensor with vanishing scalar part, fixed by the Dynkin map."""

    def __init__(self, width, depth, levels):
        super().__init__(width, depth, levels)
        if self.levels[0][0] != 0.0:
            raise ValueError("Lie tensor must have scalar part exactly 0")


# -- constructors -------------------------------------------------------------


def zero(width, depth):
    return TruncatedTensor(width, depth, [np.zeros(width**k) for k in range(depth + 1)])


def unit(width, depth):
    levels = [np.zeros(width**k) for k in range(depth + 1)]
    levels[0][0] = 1.0
    return GroupTensor(width, depth, levels)


def from_level1(vec, depth):
    """Tensor with the given level-1 part and all other levels zero."""
    vec = np.asarray(vec, dtype=float).reshape(-1)
    width = vec.size
    levels = [np.zeros(width**k) for k in range(depth + 1)]
    levels[1][:] = vec
    return TruncatedTensor(width, depth, levels)


def basis_word(word, width, depth):
    """Basis tensor e_w for the given word."""
    levels = [np.zeros(width**k) for k in range(depth + 1)]
    levels[len(word)][word_index(word, width)] = 1.0
    return TruncatedTensor(width, depth, levels)


# -- algebra operations --------------------------------------------------------


def tensor_mul(a, b):
    """Graded concatenation product, levels above the depth discarded."""
    a._require_same_shape(b)
    w, n = a.width, a.depth
    levels = [np.zeros(w**k) for k in range(n + 1)]
    for i in range(n + 1):
        ai = a.levels[i]
        if not np.any(ai):
            continue
        for j in range(n + 1 - i):
            bj = b.levels[j]
            if not np.any(bj):
                continue
            levels[i + j] += np.outer(ai, bj).reshape(-1)
    return TruncatedTensor(w, n, levels)


def bracket(a, b):
    """Lie bracket [a, b] = ab - ba."""
    return tensor_mul(a, b) - tensor_mul(b, a)


def exp_trunc(a):
    """Truncated exponential; requires vanishing scalar part.

    The series is finite because a is nilpotent at the truncation level, so
    exp and log are exact mutual inverses up to floating error.
    """
    if a.levels[0][0] != 0.0:
        raise ValueError("exp_trunc requires scalar part exactly 0")
    out = unit(a.width, a.depth)
    term = unit(a.width, a.depth)
    result = TruncatedTensor(out.width, out.depth, [lvl.copy() for lvl in out.levels])
    for k in range(1, a.depth + 1):
        term = tensor_mul(term, a).scale(1.0 / k)
        result = result + term
    result.levels[0][0] = 1.0
    return GroupTensor(result.width, result.depth, result.levels)


def log_trunc(g):
    """Truncated logarithm; requires unit scalar part."""
    if g.levels[0][0] != 1.0:
        raise ValueError("log_trunc requires scalar part exactly 1")
    c = g - unit(g.width, g.depth)
    power = c
    result = c.copy()
    sign = 1.0
    for k in range(2, g.depth + 1):
        power = tensor_mul(power, c)
        sign = -sign
        result = result + power.scale(sign / k)
    result.levels[0][0] = 0.0
    return TruncatedTensor(result.width, result.depth, result.levels)


def group_inverse(g):
    """Inverse in the group of unit-scalar tensors: exp(-log g)."""
    return exp_trunc(log_trunc(g).scale(-1.0))


def homogeneous_norm(a):
    """Graded norm sum_i |a^i|^(1/i) with Euclidean level norms."""
    total = 0.0
    for k in range(1, a.depth + 1):
        nk = float(np.linalg.norm(a.levels[k]))
        if nk > 0.0:
            total += nk ** (1.0 / k)
    return total


def dilate(a, lam):
    """Dilation: level k scaled by lam**k."""
    lam = float(lam)
    return TruncatedTensor(
        a.width, a.depth, [(lam**k) * a.levels[k] for k in range(a.depth + 1)]
    )


def _right_nested_bracket(vec, k, width):
    # Maps a level-k coefficient vector a_w onto sum_w a_w [e_{w_1}, [..., e_{w_k}]].
    if k == 1:
        return vec.copy()
    rows = vec.reshape(width, width ** (k - 1))
    out = np.zeros(width**k)
    left = out.reshape(width, width ** (k - 1))
    right = out.reshape(width ** (k - 1), width)
    for i in range(width):
        if not np.any(rows[i]):
            continue
        r = _right_nested_bracket(rows[i], k - 1, width)
        left[i] += r
        right[:, i] -= r
    return out


def dynkin_project(a):
    """Projection onto Lie elements: word w of length k maps to e_[w] / k.

    Here e_[w] is the right-nested bracket [e_{w_1}, [e_{w_2}, [...]]], so the
    map fixes Lie elements and is idempotent; it doubles as the membership
    test for the free nilpotent Lie algebra.
    """
    if a.levels[0][0] != 0.0:
        raise ValueError("dynkin_project requires scalar part exactly 0")
    levels = [np.zeros(a.width**k) for k in range(a.depth + 1)]
    for k in range(1, a.depth + 1):
        levels[k] = _right_nested_bracket(a.levels[k], k, a.width) / k
    return LieTensor(a.width, a.depth, levels)


def lie_defect(a):
    """Max coefficient deviation between a and its Dynkin projection."""
    return a.max_abs_diff(dynkin_project(a))


def is_lie(a, tol=LIE_TOL):
    return lie_defect(a) <= tol


# -- serialization --------------------------------------------------------------


def to_json_dict(a):
    return {
        "width": a.width,
        "depth": a.depth,
        "levels": [lvl.tolist() for lvl in a.levels],
    }


def from_json_dict(data):
    return TruncatedTensor(data["width"], data["depth"], data["levels"])
