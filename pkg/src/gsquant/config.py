"""Scenario configuration files: JSON with rationals written as [num, den]."""
import hashlib
import json
from dataclasses import dataclass, replace
from fractions import Fraction

from .errors import StructuralError
from .toric_geometry import ModelManifold
from .torus_action import ActionSpec


def _rational(x, what):
    if isinstance(x, bool):
        raise StructuralError(f"{what}: expected a rational, got {x!r}")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, (list, tuple)) and len(x) == 2 and all(isinstance(v, int) and not isinstance(v, bool)
                                                             for v in x):
        if x[1] == 0:
            raise StructuralError(f"{what}: zero denominator")
        return Fraction(x[0], x[1])
    raise StructuralError(f"{what}: rationals are integers or [num, den] pairs, got {x!r}")


def _int_list(x, what):
    if not isinstance(x, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in x):
        raise StructuralError(f"{what}: expected a list of integers")
    return [int(v) for v in x]


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    factors: tuple
    weights: tuple
    shift: tuple
    k: tuple
    k_corrected: tuple = ()
    quad_level: int | None = None
    density_nodes: int = 8
    observables: tuple = ("moment_sum",)
    output: str = "out"

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise StructuralError("config must be a JSON object")
        known = {"name", "factors", "weights", "shift", "k", "k_corrected", "quad_level",
                 "density_nodes", "observables", "output"}
        missing = {"name", "factors", "weights", "shift", "k"} - set(d)
        if missing:
            raise StructuralError(f"config is missing {sorted(missing)}")
        unknown = set(d) - known
        if unknown:
            raise StructuralError(f"unknown config keys {sorted(unknown)}")
        factors = tuple(tuple(_int_list(f, "factors")) for f in d["factors"])
        if any(len(f) != 2 for f in factors):
            raise StructuralError("factors are [dimension, scale] pairs")
        weights = tuple(tuple(_int_list(row, "weights")) for row in d["weights"])
        shift = tuple(_rational(x, "shift") for x in d["shift"])
        ks = tuple(_int_list(d["k"], "k"))
        kc = tuple(_int_list(d.get("k_corrected", []), "k_corrected"))
        if any(k < 1 for k in ks + kc):
            raise StructuralError("k values must be positive")
        ql = d.get("quad_level")
        if ql is not None and (not isinstance(ql, int) or ql < 0):
            raise StructuralError("quad_level must be a non-negative integer or null")
        nodes = d.get("density_nodes", 8)
        if not isinstance(nodes, int) or nodes < 1:
            raise StructuralError("density_nodes must be a positive integer")
        obs = d.get("observables", ["moment_sum"])
        if not isinstance(obs, list) or not all(isinstance(t, str) for t in obs):
            raise StructuralError("observables must be a list of tags")
        return cls(str(d["name"]), factors, weights, shift, ks, kc, ql, nodes, tuple(obs),
                   str(d.get("output", "out")))

    def to_dict(self):
        return {
            "name": self.name,
            "factors": [list(f) for f in self.factors],
            "weights": [list(r) for r in self.weights],
            "shift": [[x.numerator, x.denominator] for x in self.shift],
            "k": list(self.k),
            "k_corrected": list(self.k_corrected),
            "quad_level": self.quad_level,
            "density_nodes": self.density_nodes,
            "observables": list(self.observables),
            "output": self.output,
        }

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def loads(cls, text):
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as e:
            raise StructuralError(f"config is not valid JSON: {e}") from None

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.loads(fh.read())
        except OSError as e:
            raise StructuralError(f"cannot read config {path}: {e}") from None

    def with_overrides(self, k=None, quad_level=None, output=None):
        out = self
        if k is not None:
            out = replace(out, k=tuple(k))
        if quad_level is not None:
            out = replace(out, quad_level=quad_level)
        if output is not None:
            out = replace(out, output=output)
        return out

    @property
    def hash(self):
        """sha256 of the canonical config, output directory excluded."""
        d = self.to_dict()
        d.pop("output")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def build(self):
        model = ModelManifold(self.factors)
        return model, ActionSpec(model, [list(r) for r in self.weights], self.shift)
