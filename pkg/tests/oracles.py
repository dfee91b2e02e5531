"""Brute-force reference implementations, written from the definitions.

Everything is computed with exact fractions and plain counting so that the
production code (floating point, confusion counters, coincidence matrices)
is checked against something structurally different.
"""
from __future__ import annotations

from fractions import Fraction
from itertools import permutations


def _div(num, den) -> Fraction:
    return Fraction(num, den) if den else Fraction(0)


def _f1(p: Fraction, r: Fraction) -> Fraction:
    return 2 * p * r / (p + r) if p + r else Fraction(0)


def detection(pairs):
    """``pairs`` = [(gold_bool, pred_bool), ...] -> (P, R, ACC, F1)."""
    both = sum(1 for g, p in pairs if g and p)
    said_yes = sum(1 for _, p in pairs if p)
    is_yes = sum(1 for g, _ in pairs if g)
    correct = sum(1 for g, p in pairs if g == p)
    prec, rec = _div(both, said_yes), _div(both, is_yes)
    return prec, rec, Fraction(correct, len(pairs)), _f1(prec, rec)


def manipulator(pairs):
    """``pairs`` = [(gold_role, pred_role_or_none), ...] for gold-manipulative items."""
    n = len(pairs)
    if n == 0:
        return (Fraction(0),) * 4
    prec = rec = f1 = Fraction(0)
    for cls in sorted({g for g, _ in pairs}, key=str):
        tp = sum(1 for g, p in pairs if g == cls and p == cls)
        pred_cls = sum(1 for _, p in pairs if p == cls)
        gold_cls = sum(1 for g, _ in pairs if g == cls)
        weight = Fraction(gold_cls, n)
        pc, rc = _div(tp, pred_cls), _div(tp, gold_cls)
        prec += weight * pc
        rec += weight * rc
        f1 += weight * _f1(pc, rc)
    acc = Fraction(sum(1 for g, p in pairs if g == p), n)
    return prec, rec, acc, f1


def technique_instance(gold: frozenset, pred: frozenset):
    if not gold and not pred:
        return Fraction(1), Fraction(1), Fraction(1), Fraction(1)
    inter = len(gold & pred)
    p, r = _div(inter, len(pred)), _div(inter, len(gold))
    return p, r, _f1(p, r), Fraction(inter, len(gold | pred))


def techniques(pairs):
    """``pairs`` = [(gold_set, pred_set), ...] -> (P, R, ACC, F1, Jc)."""
    n = len(pairs)
    if n == 0:
        return (Fraction(0),) * 5
    sums = [Fraction(0)] * 4
    exact = 0
    for g, p in pairs:
        for k, v in enumerate(technique_instance(g, p)):
            sums[k] += v
        exact += g == p
    prec, rec, f1, jc = (s / n for s in sums)
    return prec, rec, Fraction(exact, n), f1, jc


def kappa(a, b):
    n = len(a)
    p_o = Fraction(sum(1 for x, y in zip(a, b) if x == y), n)
    cats = set(a) | set(b)
    p_e = sum(Fraction(a.count(c), n) * Fraction(b.count(c), n) for c in cats)
    if p_e == 1:
        return Fraction(1) if p_o == 1 else Fraction(0)
    return (p_o - p_e) / (1 - p_e)


def alpha_pairwise(units, delta):
    """Alpha from explicit pair enumeration.

    ``units`` is a list of value lists (missing values already dropped).
    Observed disagreement averages delta over ordered within-unit pairs,
    each unit weighted by 1/(m_u - 1); expected disagreement averages delta
    over every ordered pair of distinct positions in the pooled values.
    """
    units = [u for u in units if len(u) >= 2]
    pooled = [v for u in units for v in u]
    n = len(pooled)
    d_o = Fraction(0)
    for u in units:
        d_o += sum(Fraction(delta(x, y)) for x, y in permutations(u, 2)) / (len(u) - 1)
    d_o /= n
    d_e = sum(Fraction(delta(x, y)) for x, y in permutations(pooled, 2)) / (n * (n - 1))
    if d_e == 0:
        return Fraction(1)
    return 1 - d_o / d_e
