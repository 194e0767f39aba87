"""Shipped scenarios."""
from fractions import Fraction

from .toric_geometry import ModelManifold
from .torus_action import ActionSpec


def s1():
    """CP^1 with the weight-(0,1) circle and shift 1/2; the zero set is the equator."""
    model = ModelManifold(((1, 1),))
    return model, ActionSpec(model, [[0, 1]], (Fraction(1, 2),))


def s2():
    """CP^1 x CP^1 with the circle of weights (0,1),(0,1) and shift 1/2."""
    model = ModelManifold(((1, 1), (1, 1)))
    return model, ActionSpec(model, [[0, 1, 0, 1]], (Fraction(1, 2),))


def diagonal_zero():
    """Diagonal circle on CP^1 x CP^1 with shift 0; its zero set is a fixed point."""
    model = ModelManifold(((1, 1), (1, 1)))
    return model, ActionSpec(model, [[0, 1, 0, 1]], (Fraction(0),))


SCENARIOS = {"S1": s1, "S2": s2}
