"""Run configuration: JSON schema, defaults, and construction of the fields.

Fields are specified as Fourier-coefficient tables
``{"k": [...], "trig": "cos"|"sin"|"const", "amp": a, ...}`` so configs are
resolution independent; a base metric may also be given per point.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from functools import cached_property

import jsonschema
import numpy as np

from .action import FieldModel, Slot
from .clifford import build_gamma_rep
from .errors import ConfigError, SchemaError
from .fields import build_deformation, spin_connection_B
from .grid import TorusGrid
from .heat import QuadratureSpec
from .riemann import MetricField, conformal_metric, flat_metric

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_INT_VEC = {"type": "array", "items": {"type": "integer"}}
_MATRIX = {"type": "array", "items": {"type": "array", "items": _NUM}}

GENERATOR = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "identity": {"type": "boolean"},
        "gamma": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "re": _MATRIX,
        "im": _MATRIX,
    },
}

TERM = {
    "type": "object",
    "additionalProperties": False,
    "required": ["amp"],
    "properties": {
        "k": _INT_VEC,
        "trig": {"enum": ["const", "cos", "sin"], "default": "const"},
        "amp": _NUM,
        "mu": {"type": "integer", "minimum": 0, "default": 0},
        "generator": GENERATOR,
    },
}

SLOT = {
    "type": "object",
    "additionalProperties": False,
    "required": ["target"],
    "properties": {
        "target": {"enum": ["log_volume", "sigma", "alpha", "phi", "B"]},
        "k": _INT_VEC,
        "trig": {"enum": ["const", "cos", "sin"], "default": "const"},
        "mu": {"type": "integer", "minimum": 0, "default": 0},
        "generator": GENERATOR,
        "bounds": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
        "init": {"type": "number", "default": 0.0},
    },
}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "additionalProperties": False, "properties": props, "required": list(required),
            "default": {}}


SCHEMA = _obj(
    {
        "manifold": _obj(
            {
                "n": {"type": "integer", "minimum": 1, "maximum": 6},
                "sizes": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "lengths": {"type": "array", "items": _POS},
            },
            required=["n", "sizes"],
        ),
        "representation": _obj(
            {
                "n_clifford": {"type": "integer", "minimum": 1},
                "twist": {"type": "array", "items": _NUM},
            }
        ),
        "base_metric": _obj(
            {
                "kind": {"enum": ["flat", "conformal", "explicit"], "default": "flat"},
                "g0": _MATRIX,
                "sigma": {"type": "array", "items": TERM, "default": []},
                "g": {"type": "array"},
            }
        ),
        "deformation": _obj(
            {
                "kappa": {"type": "number", "default": 0.0},
                "alpha": {"type": "array", "items": TERM, "default": []},
                "phi": {"type": "array", "items": TERM, "default": []},
                "B": {"type": "array", "items": TERM, "default": []},
                "spin_connection": {"type": "boolean", "default": True},
                "rho_mode": {"enum": ["deformation", "eta"], "default": "deformation"},
                "eps_pd": {"type": "number", "exclusiveMinimum": 0, "default": 1e-6},
            }
        ),
        "quadrature": _obj(
            {
                "hermite_order": {"type": "integer", "minimum": 4, "default": 24},
                "tau_order": {"type": "integer", "minimum": 4, "default": 16},
                "stencil_order": {"enum": [2, 4, 6], "default": 4},
                "eig_degeneracy_tol": {"type": "number", "exclusiveMinimum": 0, "default": 1e-9},
                "path": {"enum": ["fast", "reference"], "default": "fast"},
            }
        ),
        "command_params": _obj(
            {
                "clifford": _obj({"dim": {"type": "integer", "minimum": 1, "maximum": 10},
                                  "check": {"type": "boolean", "default": True}}),
                "riemann": _obj({"Lambda": {"type": "number", "default": 0.0}}),
                "spectrum": _obj(
                    {
                        "K": {"type": "integer", "minimum": 1, "default": 40},
                        "t": {"type": "array", "items": _POS, "default": [0.01, 0.05, 0.1]},
                        "cap": {"type": "integer", "minimum": 1, "default": 8192},
                    }
                ),
                "invariants": _obj(
                    {
                        "t_list": {"type": "array", "items": _POS, "default": [0.002, 0.003, 0.004, 0.005]},
                        "density": {"enum": ["a0", "a1"], "default": "a1"},
                        "with_a1": {"type": "boolean", "default": True},
                        "cap": {"type": "integer", "minimum": 1, "default": 8192},
                    }
                ),
                "finsler": _obj(
                    {
                        "directions": {"type": "integer", "minimum": 1, "default": 64},
                        "points": {"type": "integer", "minimum": 1, "default": 16},
                        "fd_step": {"type": "number", "exclusiveMinimum": 0, "default": 1e-4},
                    }
                ),
                "extremize": _obj(
                    {
                        "G": {"type": "number", "exclusiveMinimum": 0, "default": 1.0},
                        "Lambda": {"type": "number", "default": 1.0},
                        "max_iters": {"type": "integer", "minimum": 0, "default": 200},
                        "penalty_mu": {"type": "number", "minimum": 0, "default": 0.0},
                        "fd_step": {"type": "number", "exclusiveMinimum": 0, "default": 1e-3},
                        "tol_g": {"type": "number", "exclusiveMinimum": 0},
                        "slots": {"type": "array", "items": SLOT, "default": []},
                    }
                ),
            }
        ),
        "seed": {"type": "integer", "minimum": 0, "default": 0},
    },
    required=["manifold"],
)


def _fill_defaults(schema: dict, inst):
    if schema.get("type") == "object" and isinstance(inst, dict):
        for key, sub in schema.get("properties", {}).items():
            if key not in inst and "default" in sub:
                inst[key] = copy.deepcopy(sub["default"])
            if key in inst:
                _fill_defaults(sub, inst[key])
    elif schema.get("type") == "array" and isinstance(inst, list) and "items" in schema:
        for item in inst:
            _fill_defaults(schema["items"], item)
    return inst


def _pointer(path) -> str:
    return "".join(f"/{p}" for p in path)


def _message(err) -> str:
    if err.validator == "additionalProperties":
        extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
        return "unknown key " + ", ".join(repr(k) for k in extra)
    return err.message


def validate(raw: dict) -> dict:
    """Schema check, defaults and cross-field checks; raises SchemaError."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        raise SchemaError([(_pointer(e.absolute_path), _message(e)) for e in errors])
    cfg = _fill_defaults(SCHEMA, copy.deepcopy(raw))
    problems = []
    man = cfg["manifold"]
    n = man["n"]
    if len(man["sizes"]) not in (1, n):
        problems.append(("/manifold/sizes", f"expected 1 or {n} entries"))
    if "lengths" in man and len(man["lengths"]) not in (1, n):
        problems.append(("/manifold/lengths", f"expected 1 or {n} entries"))
    rep = cfg["representation"]
    if rep.get("n_clifford", n) != n:
        problems.append(("/representation/n_clifford", "must equal the manifold dimension"))
    if "twist" in rep and len(rep["twist"]) != n:
        problems.append(("/representation/twist", f"expected {n} entries"))
    N = 2 ** (n // 2)
    for name in ("alpha", "phi", "B"):
        for i, term in enumerate(cfg["deformation"][name]):
            where = f"/deformation/{name}/{i}"
            if "generator" not in term:
                problems.append((where, "generator required"))
            problems += _check_term(term, n, N, where)
    for i, term in enumerate(cfg["base_metric"]["sigma"]):
        problems += _check_term(term, n, N, f"/base_metric/sigma/{i}")
    base = cfg["base_metric"]
    if base["kind"] == "explicit" and "g" not in base:
        problems.append(("/base_metric/g", "explicit metric needs per-point values"))
    if "g0" in base and np.shape(base["g0"]) != (n, n):
        problems.append(("/base_metric/g0", f"expected a {n}x{n} matrix"))
    for i, slot in enumerate(cfg["command_params"]["extremize"]["slots"]):
        where = f"/command_params/extremize/slots/{i}"
        if slot["target"] in ("alpha", "phi", "B") and "generator" not in slot:
            problems.append((where, "generator required"))
        problems += _check_term(slot, n, N, where)
    if problems:
        raise SchemaError(problems)
    return cfg


def _check_term(term: dict, n: int, N: int, where: str) -> list:
    out = []
    if "k" in term and len(term["k"]) != n:
        out.append((where + "/k", f"expected {n} wave numbers"))
    if term.get("mu", 0) >= n:
        out.append((where + "/mu", f"component must be < {n}"))
    gen = term.get("generator")
    if gen:
        kinds = [k for k in ("identity", "gamma", "re") if k in gen]
        if len(kinds) != 1:
            out.append((where + "/generator", "give exactly one of identity, gamma, re/im"))
        for a in gen.get("gamma", []):
            if a > n:
                out.append((where + "/generator/gamma", f"index {a} outside 1..{n}"))
        for part in ("re", "im"):
            if part in gen and np.shape(gen[part]) != (N, N):
                out.append((where + f"/generator/{part}", f"expected a {N}x{N} matrix"))
    return out


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


@dataclass(frozen=True, eq=False)
class RunConfig:
    data: dict

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        return cls(validate(raw))

    @cached_property
    def digest(self) -> str:
        return hashlib.sha256(canonical_json(self.data).encode()).hexdigest()

    @property
    def n(self) -> int:
        return self.data["manifold"]["n"]

    def params(self, command: str) -> dict:
        return self.data["command_params"].get(command, {})

    @cached_property
    def grid(self) -> TorusGrid:
        man = self.data["manifold"]
        n = man["n"]
        sizes = man["sizes"] * n if len(man["sizes"]) == 1 else man["sizes"]
        lengths = man.get("lengths", [1.0])
        lengths = lengths * n if len(lengths) == 1 else lengths
        return TorusGrid(n, tuple(sizes), tuple(float(v) for v in lengths))

    @cached_property
    def rep(self):
        return build_gamma_rep(self.n)

    @property
    def twist(self):
        tw = self.data["representation"].get("twist")
        return None if tw is None else tuple(tw)

    def generator(self, gen: dict) -> np.ndarray:
        N = self.rep.N
        if gen.get("identity"):
            return np.eye(N, dtype=complex)
        if "gamma" in gen:
            X = np.eye(N, dtype=complex)
            for a in gen["gamma"]:
                X = X @ self.rep.gammas[a - 1]
            return X if np.allclose(X, X.conj().T) else 1j * X
        X = np.asarray(gen["re"], float) + 1j * np.asarray(gen.get("im", np.zeros((N, N))), float)
        return 0.5 * (X + X.conj().T)

    def _profile(self, term: dict) -> np.ndarray:
        slot = Slot("sigma", tuple(term.get("k", ())), term.get("trig", "const"))
        return term["amp"] * slot.profile(self.grid)

    @cached_property
    def base_metric(self) -> MetricField:
        base = self.data["base_metric"]
        grid = self.grid
        if base["kind"] == "explicit":
            g = np.asarray(base["g"], float)
            return MetricField(grid, g.reshape(grid.sizes + (grid.n, grid.n)))
        if base["kind"] == "flat" and not base["sigma"]:
            return flat_metric(grid, base.get("g0"))
        sigma = sum((self._profile(t) for t in base["sigma"]), np.zeros(grid.sizes))
        metric = conformal_metric(grid, sigma)
        if "g0" in base:
            metric = MetricField(grid, np.exp(2 * sigma)[..., None, None] * np.asarray(base["g0"], float))
        return metric

    def _matrix_field(self, terms: list, vector: bool) -> np.ndarray:
        grid, N = self.grid, self.rep.N
        shape = grid.sizes + ((grid.n,) if vector else ()) + (N, N)
        out = np.zeros(shape, complex)
        for t in terms:
            val = self._profile(t)[..., None, None] * self.generator(t["generator"])
            if vector:
                out[..., t.get("mu", 0), :, :] += val
            else:
                out += val
        return out

    @cached_property
    def fields(self):
        d = self.data["deformation"]
        base = self.base_metric
        B = 1j * self._matrix_field(d["B"], vector=True)
        if d["spin_connection"]:
            B = B + spin_connection_B(base, self.rep, self.quadrature.stencil_order)
        return build_deformation(
            base,
            self.rep,
            d["kappa"],
            alpha=self._matrix_field(d["alpha"], vector=True),
            phi=self._matrix_field(d["phi"], vector=False),
            B=B,
            twist=self.twist,
            eps_pd=d["eps_pd"],
            rho_mode=d["rho_mode"],
        )

    @cached_property
    def quadrature(self) -> QuadratureSpec:
        return QuadratureSpec(**self.data["quadrature"])

    def field_model(self) -> tuple:
        """(FieldModel over the extremize slots, initial parameter vector).

        The configured conformal factor and deformation terms form the fixed
        background; explicit and non-conformal base metrics are not supported.
        """
        if self.data["base_metric"]["kind"] == "explicit" or "g0" in self.data["base_metric"]:
            raise ConfigError("extremize needs a flat or conformal base metric")
        p = self.params("extremize")
        slots, theta0 = [], []
        for s in p["slots"]:
            gen = self.generator(s["generator"]) if "generator" in s else None
            if gen is not None and s["target"] == "B":
                gen = 1j * gen
            bounds = tuple(s.get("bounds", (-np.inf, np.inf)))
            slots.append(Slot(s["target"], tuple(s.get("k", ())), s["trig"], s["mu"], gen, bounds))
            theta0.append(s["init"])
        d = self.data["deformation"]
        grid = self.grid
        background = {
            "sigma": sum((self._profile(t) for t in self.data["base_metric"]["sigma"]), np.zeros(grid.sizes)),
            "alpha": self._matrix_field(d["alpha"], vector=True),
            "phi": self._matrix_field(d["phi"], vector=False),
            "B": 1j * self._matrix_field(d["B"], vector=True),
        }
        model = FieldModel(
            self.grid,
            self.rep,
            tuple(slots),
            kappa=self.data["deformation"]["kappa"],
            order=self.quadrature.stencil_order,
            with_spin_connection=d["spin_connection"],
            background=background,
        )
        return model, np.asarray(theta0, float)


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError([("", f"invalid JSON: {exc}")]) from exc
    except OSError as exc:
        raise SchemaError([("", f"cannot read config: {exc}")]) from exc
    if not isinstance(raw, dict):
        raise SchemaError([("", "top level must be an object")])
    return RunConfig.from_dict(raw)


parse_config = load_config
