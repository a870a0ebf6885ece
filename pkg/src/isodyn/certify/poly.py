"""Exact multivariate polynomials and Bernstein positivity certificates.

Polynomials carry Fraction coefficients over a fixed ordered variable
tuple; evaluation and all ring operations are exact.  Positivity of a
polynomial over a rational box is certified through its Bernstein
expansion: the coefficients bound the range, subdivision refines, and a
negative value at a rational point refutes.  Faces of the box may be
marked open; a leaf touching an open face is accepted when all its
Bernstein coefficients are nonnegative and some basis row that vanishes
only on that face is strictly positive.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product

__all__ = ["PolyQ", "IntervalBox", "Certificate", "certify_positive"]


def _as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    raise TypeError(f"exact coefficient required, got {type(x)}")


class PolyQ:
    """Polynomial over Q in named variables, stored sparsely."""

    __slots__ = ("vars", "terms")

    def __init__(self, variables, terms=None):
        self.vars = tuple(variables)
        clean = {}
        for exp, c in (terms or {}).items():
            c = _as_fraction(c)
            if c != 0:
                clean[tuple(int(e) for e in exp)] = c
        self.terms = clean

    # -- constructors ------------------------------------------------
    @classmethod
    def zero(cls, variables):
        return cls(variables, {})

    @classmethod
    def const(cls, variables, c):
        z = tuple(0 for _ in variables)
        return cls(variables, {z: _as_fraction(c)})

    @classmethod
    def var(cls, variables, name):
        variables = tuple(variables)
        e = [0] * len(variables)
        e[variables.index(name)] = 1
        return cls(variables, {tuple(e): Fraction(1)})

    # -- ring operations ----------------------------------------------
    def _check(self, other):
        if self.vars != other.vars:
            raise ValueError("variable mismatch")

    def __add__(self, other):
        if not isinstance(other, PolyQ):
            other = PolyQ.const(self.vars, other)
        self._check(other)
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, Fraction(0)) + c
        return PolyQ(self.vars, out)

    __radd__ = __add__

    def __neg__(self):
        return PolyQ(self.vars, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        if not isinstance(other, PolyQ):
            other = PolyQ.const(self.vars, other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, PolyQ):
            c = _as_fraction(other)
            return PolyQ(self.vars, {e: v * c for e, v in self.terms.items()})
        self._check(other)
        out = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, Fraction(0)) + c1 * c2
        return PolyQ(self.vars, out)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        if n < 0:
            raise ValueError("negative power")
        out = PolyQ.const(self.vars, 1)
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    def __eq__(self, other):
        if isinstance(other, PolyQ):
            return self.vars == other.vars and self.terms == other.terms
        return self == PolyQ.const(self.vars, other)

    def __hash__(self):
        return hash((self.vars, tuple(sorted(self.terms.items()))))

    def is_zero(self) -> bool:
        return not self.terms

    # -- queries -------------------------------------------------------
    def degree(self, name: str) -> int:
        i = self.vars.index(name)
        return max((e[i] for e in self.terms), default=0)

    def evaluate(self, point: dict) -> Fraction:
        vals = [_as_fraction(point[v]) for v in self.vars]
        total = Fraction(0)
        for e, c in self.terms.items():
            t = c
            for x, k in zip(vals, e):
                if k:
                    t *= x**k
            total += t
        return total

    def subs(self, name: str, repl) -> "PolyQ":
        """Substitute a polynomial (or exact scalar) for one variable."""
        if not isinstance(repl, PolyQ):
            repl = PolyQ.const(self.vars, repl)
        i = self.vars.index(name)
        out = PolyQ.zero(self.vars)
        powers = {0: PolyQ.const(self.vars, 1)}

        def rp(k):
            if k not in powers:
                powers[k] = rp(k - 1) * repl
            return powers[k]

        for e, c in self.terms.items():
            rest = list(e)
            k = rest[i]
            rest[i] = 0
            out = out + PolyQ(self.vars, {tuple(rest): c}) * rp(k)
        return out

    def drop_var(self, name: str) -> "PolyQ":
        """Remove an unused variable from the signature."""
        i = self.vars.index(name)
        if self.degree(name) != 0:
            raise ValueError(f"{name} still occurs")
        newvars = self.vars[:i] + self.vars[i + 1:]
        return PolyQ(newvars, {e[:i] + e[i + 1:]: c for e, c in self.terms.items()})

    def even_part_as(self, name: str, newname: str) -> "PolyQ":
        """Rewrite an even dependence on ``name`` in terms of name^2."""
        i = self.vars.index(name)
        out = {}
        for e, c in self.terms.items():
            if e[i] % 2:
                raise ValueError(f"odd power of {name}")
            out[e[:i] + (e[i] // 2,) + e[i + 1:]] = c
        newvars = self.vars[:i] + (newname,) + self.vars[i + 1:]
        return PolyQ(newvars, out)

    def content_checksum(self) -> str:
        items = sorted(self.terms.items())
        blob = repr((self.vars, items)).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def __repr__(self):
        n = len(self.terms)
        return f"PolyQ({self.vars}, {n} terms)"

    # -- dense coefficient tensor (for the Bernstein transform) --------
    def coeff_tensor(self):
        degs = [self.degree(v) for v in self.vars]
        shape = [d + 1 for d in degs]
        flat = [Fraction(0)] * math.prod(shape)
        strides = []
        acc = 1
        for s in reversed(shape):
            strides.append(acc)
            acc *= s
        strides = list(reversed(strides))
        for e, c in self.terms.items():
            idx = sum(k * st for k, st in zip(e, strides))
            flat[idx] = c
        return flat, shape


@dataclass(frozen=True)
class IntervalBox:
    """Closed rational box; some faces may be flagged as open (excluded)."""

    bounds: tuple  # tuple of (name, lo, hi)
    open_faces: frozenset = frozenset()  # of (name, 'lo'|'hi')

    @classmethod
    def make(cls, bounds: dict, open_faces=()):
        bs = tuple((k, _as_fraction(v[0]), _as_fraction(v[1])) for k, v in bounds.items())
        for k, lo, hi in bs:
            if lo >= hi:
                raise ValueError(f"empty interval for {k}")
        return cls(bounds=bs, open_faces=frozenset(open_faces))

    def names(self):
        return tuple(k for k, _, _ in self.bounds)

    def widths(self):
        return [(hi - lo) for _, lo, hi in self.bounds]

    def split(self, axis: int):
        k, lo, hi = self.bounds[axis]
        mid = (lo + hi) / 2
        left = list(self.bounds)
        right = list(self.bounds)
        left[axis] = (k, lo, mid)
        right[axis] = (k, mid, hi)
        # interior faces created by the split are closed
        keep_l = frozenset(f for f in self.open_faces if f != (k, "hi"))
        keep_r = frozenset(f for f in self.open_faces if f != (k, "lo"))
        return (
            IntervalBox(tuple(left), keep_l),
            IntervalBox(tuple(right), keep_r),
        )


@dataclass
class Certificate:
    claim: str
    status: str                      # proved | refuted | inconclusive
    witness: dict | None = None      # rational point with a negative value
    boxes_used: int = 0
    depth_reached: int = 0
    note: str = ""

    @property
    def proved(self) -> bool:
        return self.status == "proved"


# ---------------------------------------------------------------------------
# Bernstein machinery
# ---------------------------------------------------------------------------

def _axis_apply(flat, shape, axis, fn):
    """Apply fn(list) -> list along one axis of the dense tensor."""
    n = shape[axis]
    stride = math.prod(shape[axis + 1:])
    block = stride * n
    out = list(flat)
    for start in range(0, len(flat), block):
        for off in range(stride):
            idx = [start + off + k * stride for k in range(n)]
            col = [out[i] for i in idx]
            col = fn(col)
            for i, v in zip(idx, col):
                out[i] = v
    return out


def _power_to_bernstein_1d(col):
    n = len(col) - 1
    out = []
    for i in range(n + 1):
        s = Fraction(0)
        for j in range(i + 1):
            s += Fraction(math.comb(i, j), math.comb(n, j)) * col[j]
        out.append(s)
    return out


def _shift_scale_1d(col, lo, hi):
    """Coefficients of p(lo + (hi-lo) u) in the power basis of u."""
    n = len(col) - 1
    w = hi - lo
    out = [Fraction(0)] * (n + 1)
    # Horner-style: p(x) = sum c_k x^k with x = lo + w u
    for c in reversed(col):
        # multiply current polynomial (in u) by (lo + w u), then add c
        nxt = [Fraction(0)] * (n + 1)
        for k in range(n):
            if out[k] != 0:
                nxt[k] += lo * out[k]
                nxt[k + 1] += w * out[k]
        if out[n] != 0:
            nxt[n] += lo * out[n]
        nxt[0] += c
        out = nxt
    return out


def bernstein_tensor(poly: PolyQ, box: IntervalBox):
    """Bernstein coefficient tensor of the polynomial over the box."""
    if poly.vars != box.names():
        raise ValueError("box variables must match polynomial variables")
    flat, shape = poly.coeff_tensor()
    for axis, (_, lo, hi) in enumerate(box.bounds):
        flat = _axis_apply(flat, shape, axis, lambda col: _shift_scale_1d(col, lo, hi))
    for axis in range(len(shape)):
        flat = _axis_apply(flat, shape, axis, _power_to_bernstein_1d)
    return flat, shape


def _leaf_test(flat, shape, box: IntervalBox) -> str:
    """'pos' if the leaf certifies strict positivity on its (partially
    open) box, 'nonneg-open' for the open-face argument, 'fail' otherwise."""
    if all(c > 0 for c in flat):
        return "pos"
    if any(c < 0 for c in flat):
        return "fail"
    # all coefficients >= 0 with some zeros: acceptable only if every open
    # face of the box accounts for the zeros, i.e. there is a strictly
    # positive basis slab vanishing only on open faces
    open_axes = {}
    for k, side in box.open_faces:
        names = box.names()
        open_axes.setdefault(names.index(k), set()).add(side)
    if not open_axes:
        return "fail"
    # look for a strictly positive slice: indices i_axis in a range such
    # that the basis function is positive everywhere except on open faces
    ranges = []
    for axis, n in enumerate(s - 1 for s in shape):
        lo_open = (axis in open_axes) and ("lo" in open_axes[axis])
        hi_open = (axis in open_axes) and ("hi" in open_axes[axis])
        start = 1 if lo_open else 0
        stop = n - 1 if hi_open else n
        if stop < start:
            return "fail"
        ranges.append((axis, start, stop))
    # test whether some index combination within the inner ranges has a
    # strictly positive coefficient while all coefficients are >= 0: then
    # P >= (that coefficient) * basis > 0 away from the open faces
    strides = []
    acc = 1
    for s in reversed(shape):
        strides.append(acc)
        acc *= s
    strides = list(reversed(strides))
    for combo in product(*[range(st, sp + 1) for _, st, sp in ranges]):
        idx = sum(k * st for k, st in zip(combo, strides))
        if flat[idx] > 0:
            return "nonneg-open"
    return "fail"


def _corner_values(poly: PolyQ, box: IntervalBox):
    pts = []
    for combo in product(*[(lo, hi, (lo + hi) / 2) for _, lo, hi in box.bounds]):
        pts.append({k: v for (k, _, _), v in zip(box.bounds, combo)})
    return pts


def certify_positive(poly: PolyQ, box: IntervalBox, max_depth: int = 24,
                     claim: str | None = None) -> Certificate:
    """Certify poly > 0 on the box (strict on closed parts, with open faces
    excluded from the claim) by Bernstein subdivision.

    Proved status relies only on exact rational Bernstein coefficients;
    Refuted carries an exact rational witness point with a negative value.
    """
    claim = claim or f"positive on {[(k, str(lo), str(hi)) for k, lo, hi in box.bounds]}"
    stack = [(box, 0)]
    boxes = 0
    deepest = 0
    while stack:
        bx, depth = stack.pop()
        boxes += 1
        deepest = max(deepest, depth)
        flat, shape = bernstein_tensor(poly, bx)
        verdict = _leaf_test(flat, shape, bx)
        if verdict in ("pos", "nonneg-open"):
            continue
        # refutation scan at rational sample points of this box
        for pt in _corner_values(poly, bx):
            on_open = any(
                (pt[k] == lo and (k, "lo") in bx.open_faces)
                or (pt[k] == hi and (k, "hi") in bx.open_faces)
                for k, lo, hi in bx.bounds
            )
            if not on_open and poly.evaluate(pt) < 0:
                return Certificate(claim=claim, status="refuted",
                                   witness={k: str(v) for k, v in pt.items()},
                                   boxes_used=boxes, depth_reached=depth)
        if depth >= max_depth:
            return Certificate(claim=claim, status="inconclusive",
                               boxes_used=boxes, depth_reached=depth,
                               note=f"undecided sub-box {bx.bounds}")
        widths = bx.widths()
        axis = max(range(len(widths)), key=lambda i: widths[i])
        a, b = bx.split(axis)
        stack.extend([(a, depth + 1), (b, depth + 1)])
    return Certificate(claim=claim, status="proved", boxes_used=boxes,
                       depth_reached=deepest)
