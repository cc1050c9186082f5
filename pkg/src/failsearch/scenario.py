"""Scenario schemas, configurations, repair and numeric encoding.

A :class:`FeatureSchema` is an ordered list of :class:`Feature` descriptors.
A :class:`ScenarioConfig` is an immutable mapping from feature name to value.
Values are plain Python scalars or tuples so configs hash and compare by value:

=================  =====================================================
kind               value
=================  =====================================================
``real``           ``float`` (``size == 1``) or tuple of floats
``integer``        ``int`` (``size == 1``) or tuple of ints
``binary``         ``bool``
``categorical``    ``int`` in ``[0, n_categories)``
``variable-list``  sorted tuple of ints (membership encoding) or tuple of
                   ``(command, value)`` pairs (positional encoding)
=================  =====================================================
"""

from __future__ import annotations

import json
import math
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidConfig, InvalidSchema, ParseError

KINDS = ("real", "integer", "binary", "categorical", "variable-list")
LIST_ENCODINGS = ("membership", "positional")


@dataclass(frozen=True)
class Feature:
    """One feature descriptor.

    ``low``/``high`` bound real and integer features (scalars or one entry per
    component when ``size > 1``) and the command values of positional lists.
    ``domain`` is the element count of a membership list (elements are
    ``0..domain-1``); ``commands`` is the command count of a positional list.
    """

    name: str
    kind: str
    low: float | tuple | None = None
    high: float | tuple | None = None
    size: int = 1
    n_categories: int | None = None
    domain: int | None = None
    max_length: int | None = None
    encoding: str = "membership"
    commands: int | None = None
    _lo: tuple = field(default=(), init=False, repr=False, compare=False)
    _hi: tuple = field(default=(), init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind in ("real", "integer"):
            lo = np.broadcast_to(np.asarray(self.low, dtype=float), (self.size,))
            hi = np.broadcast_to(np.asarray(self.high, dtype=float), (self.size,))
            object.__setattr__(self, "_lo", tuple(float(x) for x in lo))
            object.__setattr__(self, "_hi", tuple(float(x) for x in hi))
        if self.kind not in KINDS:
            raise InvalidSchema(f"feature {self.name!r}: unknown kind {self.kind!r}")
        if self.kind in ("real", "integer"):
            if self.size < 1:
                raise InvalidSchema(f"feature {self.name!r}: size must be >= 1")
            lo, hi = self.bounds()
            if np.any(lo >= hi):
                raise InvalidSchema(f"feature {self.name!r}: need low < high")
        elif self.kind == "categorical":
            if self.n_categories is None or self.n_categories < 2:
                raise InvalidSchema(f"feature {self.name!r}: need n_categories >= 2")
        elif self.kind == "variable-list":
            if self.max_length is None or self.max_length < 1:
                raise InvalidSchema(f"feature {self.name!r}: need max_length >= 1")
            if self.encoding == "membership":
                if self.domain is None or self.domain < 1:
                    raise InvalidSchema(f"feature {self.name!r}: need domain >= 1")
            elif self.encoding == "positional":
                if self.commands is None or self.commands < 1:
                    raise InvalidSchema(f"feature {self.name!r}: need commands >= 1")
                if self.low is None or self.high is None or not self.low < self.high:
                    raise InvalidSchema(f"feature {self.name!r}: need value low < high")
            else:
                raise InvalidSchema(f"feature {self.name!r}: unknown encoding {self.encoding!r}")

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array(self._lo), np.array(self._hi)

    @property
    def width(self) -> int:
        if self.kind in ("real", "integer"):
            return self.size
        if self.kind == "binary":
            return 1
        if self.kind == "categorical":
            return self.n_categories
        if self.encoding == "membership":
            return self.domain
        return self.max_length * (self.commands + 1)

    def to_json(self) -> dict:
        out = {"name": self.name, "kind": self.kind}
        if self.kind in ("real", "integer"):
            out.update(low=_jsonable(self.low), high=_jsonable(self.high), size=self.size)
        elif self.kind == "categorical":
            out["n_categories"] = self.n_categories
        elif self.kind == "variable-list":
            out.update(max_length=self.max_length, encoding=self.encoding)
            if self.encoding == "membership":
                out["domain"] = self.domain
            else:
                out.update(commands=self.commands, low=self.low, high=self.high)
        return out


def _jsonable(v):
    return list(v) if isinstance(v, tuple) else v


@dataclass(frozen=True)
class Exclusion:
    """Domain constraint: the value of a categorical feature may not appear in a list.

    Used by the parking schema: the goal lane is never occupied.
    """

    value_of: str
    from_list: str


@dataclass(frozen=True)
class FeatureSchema:
    features: tuple[Feature, ...]
    constraints: tuple[Exclusion, ...] = ()
    name: str = "custom"
    _offsets: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        object.__setattr__(self, "constraints", tuple(self.constraints))
        names = [f.name for f in self.features]
        if not names:
            raise InvalidSchema("schema has no features")
        if len(set(names)) != len(names):
            raise InvalidSchema("feature names must be unique")
        by_name = {f.name: f for f in self.features}
        for c in self.constraints:
            src, dst = by_name.get(c.value_of), by_name.get(c.from_list)
            if src is None or dst is None:
                raise InvalidSchema(f"constraint references unknown feature: {c}")
            if src.kind != "categorical" or dst.kind != "variable-list" or dst.encoding != "membership":
                raise InvalidSchema("exclusion needs a categorical source and a membership list")
        offsets, pos = {}, 0
        for f in self.features:
            offsets[f.name] = (pos, pos + f.width)
            pos += f.width
        object.__setattr__(self, "_offsets", offsets)

    def __len__(self):
        return len(self.features)

    def __iter__(self):
        return iter(self.features)

    def __getitem__(self, name: str) -> Feature:
        for f in self.features:
            if f.name == name:
                return f
        raise KeyError(name)

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    @property
    def width(self) -> int:
        return sum(f.width for f in self.features)

    def block(self, name: str) -> slice:
        """Slice of the encoded vector occupied by feature ``name``."""
        start, stop = self._offsets[name]
        return slice(start, stop)

    def blocks(self) -> list[slice]:
        return [self.block(n) for n in self.names]

    # validation -----------------------------------------------------------------

    def check(self, config: Mapping) -> None:
        """Raise :class:`InvalidConfig` unless ``config`` is valid under this schema."""
        for f in self.features:
            if f.name not in config:
                raise InvalidConfig(f"missing feature {f.name!r}")
            problem = _value_problem(f, config[f.name])
            if problem:
                raise InvalidConfig(f"feature {f.name!r}: {problem}")
        extra = set(config) - set(self.names)
        if extra:
            raise InvalidConfig(f"unknown features {sorted(extra)}")
        for c in self.constraints:
            if config[c.value_of] in config[c.from_list]:
                raise InvalidConfig(f"{c.from_list!r} contains the value of {c.value_of!r}")

    def is_valid(self, config: Mapping) -> bool:
        try:
            self.check(config)
        except InvalidConfig:
            return False
        return True

    # serialization --------------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "features": [f.to_json() for f in self.features],
            "constraints": [{"exclude": {"value_of": c.value_of, "from_list": c.from_list}}
                            for c in self.constraints],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "FeatureSchema":
        try:
            feats = []
            for d in doc["features"]:
                d = dict(d)
                for key in ("low", "high"):
                    if isinstance(d.get(key), list):
                        d[key] = tuple(d[key])
                feats.append(Feature(**d))
            cons = [Exclusion(**c["exclude"]) for c in doc.get("constraints", [])]
        except (KeyError, TypeError) as exc:
            raise InvalidSchema(f"malformed schema document: {exc}") from exc
        return cls(tuple(feats), tuple(cons), name=doc.get("name", "custom"))


def _value_problem(f: Feature, v) -> str | None:
    if f.kind in ("real", "integer"):
        comps = (v,) if f.size == 1 else v
        if f.size > 1 and (not isinstance(v, tuple) or len(v) != f.size):
            return f"expected a tuple of {f.size} numbers"
        lo, hi = f._lo, f._hi
        for i, c in enumerate(comps):
            if isinstance(c, bool) or not isinstance(c, (int, float)):
                return f"non-numeric value {c!r}"
            if f.kind == "integer" and not float(c).is_integer():
                return f"non-integer value {c!r}"
            if not math.isfinite(c) or c < lo[i] or c > hi[i]:
                return f"value {c!r} outside [{lo[i]}, {hi[i]}]"
        return None
    if f.kind == "binary":
        return None if isinstance(v, bool) else f"expected bool, got {v!r}"
    if f.kind == "categorical":
        if isinstance(v, bool) or not isinstance(v, int) or not 0 <= v < f.n_categories:
            return f"category {v!r} outside [0, {f.n_categories})"
        return None
    if not isinstance(v, tuple):
        return "expected a tuple"
    if len(v) > f.max_length:
        return f"length {len(v)} exceeds {f.max_length}"
    if len(set(v)) != len(v):
        return "duplicate elements"
    if f.encoding == "membership":
        for e in v:
            if isinstance(e, bool) or not isinstance(e, int) or not 0 <= e < f.domain:
                return f"element {e!r} outside [0, {f.domain})"
        if list(v) != sorted(v):
            return "membership list not sorted"
    else:
        for e in v:
            if not (isinstance(e, tuple) and len(e) == 2):
                return f"element {e!r} is not a (command, value) pair"
            cmd, val = e
            if isinstance(cmd, bool) or not isinstance(cmd, int) or not 0 <= cmd < f.commands:
                return f"command {cmd!r} outside [0, {f.commands})"
            if not f.low <= val <= f.high:
                return f"value {val!r} outside [{f.low}, {f.high}]"
    return None


class ScenarioConfig(Mapping):
    """Immutable mapping feature name -> value."""

    __slots__ = ("_data", "_hash")

    def __init__(self, data=(), **kwargs):
        d = dict(data, **kwargs)
        for k, v in d.items():
            if isinstance(v, list):
                d[k] = tuple(tuple(e) if isinstance(e, list) else e for e in v)
        object.__setattr__(self, "_data", d)
        object.__setattr__(self, "_hash", None)

    def __setattr__(self, key, value):
        raise AttributeError("ScenarioConfig is immutable")

    def __getitem__(self, key):
        return self._data[key]

    def __iter__(self):
        return iter(self._data)

    def __len__(self):
        return len(self._data)

    def __hash__(self):
        if self._hash is None:
            object.__setattr__(self, "_hash", hash(tuple(sorted(self._data.items()))))
        return self._hash

    def __eq__(self, other):
        if isinstance(other, ScenarioConfig):
            return self._data == other._data
        return NotImplemented

    def __repr__(self):
        return f"ScenarioConfig({self._data!r})"

    def replace(self, **changes) -> "ScenarioConfig":
        return ScenarioConfig({**self._data, **changes})


# encoding ---------------------------------------------------------------------


def _encode_into(row: np.ndarray, config: Mapping, schema: FeatureSchema) -> None:
    pos = 0
    for f in schema.features:
        v = config[f.name]
        if f.kind in ("real", "integer"):
            comps = (v,) if f.size == 1 else v
            for j, (c, lo, hi) in enumerate(zip(comps, f._lo, f._hi)):
                row[pos + j] = (c - lo) / (hi - lo)
        elif f.kind == "binary":
            row[pos] = float(v)
        elif f.kind == "categorical":
            row[pos + v] = 1.0
        elif f.encoding == "membership":
            for e in v:
                row[pos + e] = 1.0
        else:
            stride = f.commands + 1
            for j, (cmd, val) in enumerate(v):
                base = pos + j * stride
                row[base + cmd] = 1.0
                row[base + f.commands] = (val - f.low) / (f.high - f.low)
        pos += f.width


def encode(config: Mapping, schema: FeatureSchema) -> np.ndarray:
    """Fixed-width numeric encoding of one config.

    Reals and integers are min-max scaled to ``[0, 1]``, categoricals one-hot,
    membership lists become a binary occupancy block over the element domain and
    positional lists become zero-padded ``(command one-hot, scaled value)`` slots.
    """
    schema.check(config)
    row = np.zeros(schema.width)
    _encode_into(row, config, schema)
    return row


def encode_batch(configs, schema: FeatureSchema, check: bool = True) -> np.ndarray:
    out = np.zeros((len(configs), schema.width))
    for i, c in enumerate(configs):
        if check:
            schema.check(c)
        _encode_into(out[i], c, schema)
    return out


# repair -----------------------------------------------------------------------


def _clamp_numeric(f: Feature, v):
    comps = (v,) if f.size == 1 or np.ndim(v) == 0 else tuple(v)
    vals = []
    for c, lo, hi in zip(comps, f._lo, f._hi):
        c = float(c)
        c = lo if math.isnan(c) else min(max(c, lo), hi)
        if f.kind == "integer":
            c = int(min(max(round(c), math.ceil(lo)), math.floor(hi)))
        vals.append(c)
    return vals[0] if f.size == 1 else tuple(vals)


def _dedupe(seq):
    seen, out = set(), []
    for e in seq:
        if e not in seen:
            seen.add(e)
            out.append(e)
    return out


def validate_repair(config: Mapping, schema: FeatureSchema, rng: np.random.Generator) -> ScenarioConfig:
    """Return a schema-valid version of a structurally complete ``config``.

    Out-of-range numbers are clamped, list duplicates dropped, exclusion
    constraints enforced, and over-long lists truncated by removing uniformly
    random elements. A valid config comes back unchanged without touching ``rng``.
    """
    missing = [n for n in schema.names if n not in config]
    if missing:
        raise InvalidConfig(f"missing features {missing}")
    out = {}
    for f in schema.features:
        v = config[f.name]
        if f.kind in ("real", "integer"):
            out[f.name] = _clamp_numeric(f, v)
        elif f.kind == "binary":
            out[f.name] = bool(v)
        elif f.kind == "categorical":
            out[f.name] = int(min(max(int(round(v)), 0), f.n_categories - 1))
        elif f.encoding == "membership":
            out[f.name] = [int(e) for e in _dedupe(v) if 0 <= int(e) < f.domain]
        else:
            items = []
            for cmd, val in v:
                cmd = int(min(max(int(cmd), 0), f.commands - 1))
                items.append((cmd, float(min(max(val, f.low), f.high))))
            out[f.name] = _dedupe(items)
    for c in schema.constraints:
        out[c.from_list] = [e for e in out[c.from_list] if e != out[c.value_of]]
    for f in schema.features:
        if f.kind != "variable-list":
            continue
        items = out[f.name]
        excess = len(items) - f.max_length
        if excess > 0:
            drop = set(rng.choice(len(items), size=excess, replace=False).tolist())
            items = [e for i, e in enumerate(items) if i not in drop]
        out[f.name] = tuple(sorted(items)) if f.encoding == "membership" else tuple(items)
    return ScenarioConfig(out)


# sampling ---------------------------------------------------------------------


def sample_config(schema: FeatureSchema, rng: np.random.Generator) -> ScenarioConfig:
    """Uniform random valid config (list lengths uniform in ``0..max_length``)."""
    out = {}
    for f in schema.features:
        if f.kind == "real":
            lo, hi = f.bounds()
            vals = tuple(float(x) for x in rng.uniform(lo, hi))
            out[f.name] = vals[0] if f.size == 1 else vals
        elif f.kind == "integer":
            lo, hi = f.bounds()
            vals = tuple(int(rng.integers(math.ceil(a), math.floor(b) + 1)) for a, b in zip(lo, hi))
            out[f.name] = vals[0] if f.size == 1 else vals
        elif f.kind == "binary":
            out[f.name] = bool(rng.integers(2))
        elif f.kind == "categorical":
            out[f.name] = int(rng.integers(f.n_categories))
        elif f.encoding == "membership":
            n = int(rng.integers(0, min(f.max_length, f.domain) + 1))
            out[f.name] = tuple(rng.choice(f.domain, size=n, replace=False).tolist())
        else:
            n = int(rng.integers(0, f.max_length + 1))
            out[f.name] = tuple((int(rng.integers(f.commands)), float(rng.uniform(f.low, f.high)))
                                for _ in range(n))
    # route through repair so constraints hold and membership lists are canonical
    return validate_repair(out, schema, rng)


# JSON -------------------------------------------------------------------------


def config_to_json(config: Mapping, schema: FeatureSchema) -> dict:
    doc = {}
    for f in schema.features:
        v = config[f.name]
        if f.kind == "variable-list" and f.encoding == "positional":
            doc[f.name] = [[cmd, val] for cmd, val in v]
        elif isinstance(v, tuple):
            doc[f.name] = list(v)
        else:
            doc[f.name] = v
    return doc


def config_from_json(doc, schema: FeatureSchema) -> ScenarioConfig:
    if not isinstance(doc, dict):
        raise ParseError("scenario document must be a JSON object")
    if "env_config" in doc and isinstance(doc["env_config"], dict):
        doc = doc["env_config"]
    values = {}
    for f in schema.features:
        if f.name not in doc:
            raise ParseError(f"missing key {f.name!r}", key=f.name)
        values[f.name] = _coerce(f, doc[f.name])
    extra = sorted(set(doc) - set(schema.names))
    if extra:
        raise ParseError(f"unknown key {extra[0]!r}", key=extra[0])
    config = ScenarioConfig(values)
    schema.check(config)
    return config


def _coerce(f: Feature, raw):
    def num(x, integer=False):
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise ParseError(f"key {f.name!r}: expected a number, got {x!r}", key=f.name)
        if integer:
            if not float(x).is_integer():
                raise ParseError(f"key {f.name!r}: expected an integer, got {x!r}", key=f.name)
            return int(x)
        return float(x)

    if f.kind in ("real", "integer"):
        integer = f.kind == "integer"
        if f.size == 1:
            return num(raw, integer)
        if not isinstance(raw, list):
            raise ParseError(f"key {f.name!r}: expected an array", key=f.name)
        return tuple(num(x, integer) for x in raw)
    if f.kind == "binary":
        if not isinstance(raw, bool):
            raise ParseError(f"key {f.name!r}: expected true/false", key=f.name)
        return raw
    if f.kind == "categorical":
        return num(raw, integer=True)
    if not isinstance(raw, list):
        raise ParseError(f"key {f.name!r}: expected an array", key=f.name)
    if f.encoding == "membership":
        return tuple(sorted(num(x, integer=True) for x in raw))
    pairs = []
    for item in raw:
        if not isinstance(item, list) or len(item) != 2:
            raise ParseError(f"key {f.name!r}: expected [command, value] pairs", key=f.name)
        pairs.append((num(item[0], integer=True), num(item[1])))
    return tuple(pairs)


def parse_config(text: str | bytes, schema: FeatureSchema) -> ScenarioConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from exc
    return config_from_json(doc, schema)


def serialize_config(config: Mapping, schema: FeatureSchema) -> str:
    return json.dumps(config_to_json(config, schema))


def load_schema(path) -> FeatureSchema:
    with open(path) as fh:
        return FeatureSchema.from_json(json.load(fh))


def save_schema(schema: FeatureSchema, path) -> None:
    with open(path, "w") as fh:
        json.dump(schema.to_json(), fh, indent=2)


# built-in schemas -------------------------------------------------------------

N_PARKING_LANES = 20


def parking_schema() -> FeatureSchema:
    """Parking scenario: same keys as the highway-env parking ``env_config``."""
    return FeatureSchema(
        (
            Feature("goal_lane_idx", "categorical", n_categories=N_PARKING_LANES),
            Feature("heading_ego", "real", low=0.0, high=2 * math.pi),
            Feature("parked_vehicles_lane_indices", "variable-list",
                    domain=N_PARKING_LANES, max_length=N_PARKING_LANES),
            Feature("position_ego", "real", low=(-10.0, -5.0), high=(10.0, 5.0), size=2),
        ),
        (Exclusion("goal_lane_idx", "parked_vehicles_lane_indices"),),
        name="parking",
    )


def walker_schema(d: int = 4) -> FeatureSchema:
    half = d // 2
    return FeatureSchema(
        (
            Feature("qpos", "real", low=-1.0, high=1.0, size=half),
            Feature("qvel", "real", low=-1.0, high=1.0, size=d - half),
        ),
        name="walker",
    )


def command_list_schema(max_length: int = 12) -> FeatureSchema:
    """Ordered road-command list (straight/left/right, segment length) as in SDC tests."""
    return FeatureSchema(
        (Feature("road", "variable-list", max_length=max_length, encoding="positional",
                 commands=3, low=1.0, high=50.0),),
        name="command-list",
    )


BUILTIN_SCHEMAS = {
    "parking": parking_schema,
    "walker": walker_schema,
    "command-list": command_list_schema,
}
