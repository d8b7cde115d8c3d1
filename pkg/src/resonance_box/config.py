"""INI-style run configuration: parsing, validation and canonical serialization.

The format is ``[section]`` headers followed by ``key = value`` lines; ``#``
and ``;`` start comment lines.  Every error carries the offending line number.
Serialization writes every field, defaults included, in a fixed order with
shortest round-trip floats, so ``serialize(parse(serialize(c)))`` is stable.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, fields

from .errors import ConfigError, ResonanceBoxError
from .potential import (
    FAMILIES,
    Geometry,
    PotentialModel,
    family_parameters,
    interior_in_forbidden_region,
    make_potential,
    required_parameters,
)
from .semiclassics import OBSERVABLES

SECTIONS = ("potential", "geometry", "numerics", "sweep", "study")
WELL_FAMILIES = tuple(k for k in FAMILIES if k.endswith("_barriers"))


def _float(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"non-finite value {text!r}")
    return value


def _int(text: str) -> int:
    return int(text)


def _float_list(text: str) -> tuple[float, ...]:
    items = [t.strip() for t in text.split(",") if t.strip()]
    if not items:
        raise ValueError("empty list")
    return tuple(_float(t) for t in items)


def _choice(options):
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text

    return parse


# section -> key -> (parser, default); a default of ... marks a required key
_SCHEMA = {
    "geometry": {
        "omega_minus": (_float, -1.0),
        "omega_plus": (_float, 1.0),
    },
    "numerics": {
        "hbar": (_float, ...),
        "hbar_list": (_float_list, (0.14, 0.12, 0.1, 0.08)),
        "points_per_wavelength": (_float, 20.0),
        "refine_rtol": (_float, 1e-10),
        "refine_budget": (_int, 80),
        "seed": (_int, 20240611),
        "delta_c": (_float, 1.0),
        "delta_n": (_float, 4.0),
    },
    "sweep": {
        "ell_min": (_float, None),
        "ell_max": (_float, None),
        "n_ell": (_int, 400),
        "k": (_int, 10),
        "spacing": (_choice(("uniform", "geometric")), "uniform"),
    },
    "study": {
        "observable": (_choice(OBSERVABLES), "gap_right"),
        "interior_index": (_int, 0),
        "side": (_choice(("left", "right")), "right"),
        "max_interior_levels": (_int, 3),
        "wkb_levels": (_int, 4),
        "tunneling_omega_minus": (_float, None),
        "tunneling_omega_plus": (_float, None),
    },
}


@dataclass(frozen=True)
class RunConfig:
    kind: str
    params: tuple[tuple[str, float], ...]
    omega_minus: float
    omega_plus: float
    hbar: float
    hbar_list: tuple[float, ...]
    points_per_wavelength: float
    refine_rtol: float
    refine_budget: int
    seed: int
    delta_c: float
    delta_n: float
    ell_min: float
    ell_max: float
    n_ell: int
    k: int
    spacing: str
    observable: str
    interior_index: int
    side: str
    max_interior_levels: int
    wkb_levels: int
    tunneling_omega_minus: float | None = None
    tunneling_omega_plus: float | None = None
    _model: PotentialModel | None = field(default=None, compare=False, repr=False)

    def model(self) -> PotentialModel:
        return self._model if self._model is not None else make_potential(self.kind, **dict(self.params))

    def geometry(self, ell: float | None = None) -> Geometry:
        return Geometry(self.omega_minus, self.omega_plus, ell)

    def tunneling_geometry(self) -> Geometry:
        if self.tunneling_omega_minus is None:
            return self.geometry()
        return Geometry(self.tunneling_omega_minus, self.tunneling_omega_plus)

    def serialize(self) -> str:
        return serialize_config(self)

    def config_hash(self) -> str:
        return hashlib.sha256(self.serialize().encode("utf-8")).hexdigest()[:16]


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    return str(value)


def serialize_config(config: RunConfig) -> str:
    lines = ["[potential]", f"kind = {config.kind}"]
    lines += [f"{k} = {_fmt(v)}" for k, v in config.params]
    for section in ("geometry", "numerics", "sweep", "study"):
        lines += ["", f"[{section}]"]
        for key in _SCHEMA[section]:
            value = getattr(config, key)
            if value is not None:
                lines.append(f"{key} = {_fmt(value)}")
    return "\n".join(lines) + "\n"


def parse_config(text: str) -> RunConfig:
    """Parse and validate a configuration; raises :class:`ConfigError` with a line number."""
    raw: dict[str, dict[str, tuple[str, int]]] = {}
    headers: dict[str, int] = {}
    section = None
    last_line = 1
    for lineno, line in enumerate(text.splitlines(), start=1):
        last_line = lineno
        stripped = line.strip()
        if not stripped or stripped[0] in "#;":
            continue
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ConfigError(f"malformed section header {stripped!r}", lineno)
            section = stripped[1:-1].strip()
            if section not in SECTIONS:
                raise ConfigError(f"unknown section [{section}]", lineno)
            if section in raw:
                raise ConfigError(f"duplicate section [{section}]", lineno)
            raw[section] = {}
            headers[section] = lineno
            continue
        if section is None:
            raise ConfigError("key outside of any section", lineno)
        key, sep, value = stripped.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"expected 'key = value', got {stripped!r}", lineno)
        if key in raw[section]:
            raise ConfigError(f"duplicate key {key!r} in [{section}]", lineno)
        raw[section][key] = (value, lineno)

    values = {}
    kind, params = _parse_potential(raw, headers, last_line)
    for name, schema in _SCHEMA.items():
        entries = raw.get(name, {})
        for key, (value, lineno) in entries.items():
            if key not in schema:
                raise ConfigError(f"unknown key {key!r} in [{name}]", lineno)
        for key, (parser, default) in schema.items():
            if key in entries:
                value, lineno = entries[key]
                try:
                    values[key] = parser(value)
                except ValueError as exc:
                    raise ConfigError(f"bad value for {key!r}: {value!r} ({exc})", lineno) from None
            elif default is ...:
                raise ConfigError(
                    f"missing required key {key!r} in [{name}]", headers.get(name, last_line)
                )
            else:
                values[key] = default
    lines = {key: ln for sec in raw.values() for key, (_, ln) in sec.items()}
    model = _validate(kind, params, values, lines, headers, last_line)
    return RunConfig(kind=kind, params=params, _model=model, **values)


def _parse_potential(raw, headers, last_line):
    if "potential" not in raw:
        raise ConfigError("missing required section [potential]", last_line)
    entries = dict(raw["potential"])
    if "kind" not in entries:
        raise ConfigError("missing required key 'kind' in [potential]", headers["potential"])
    kind, kind_line = entries.pop("kind")
    if kind not in FAMILIES:
        raise ConfigError(f"unknown potential kind {kind!r}; choose from {', '.join(FAMILIES)}", kind_line)
    allowed = family_parameters(kind)
    parsed = {}
    for key, (value, lineno) in entries.items():
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} for potential kind {kind}", lineno)
        try:
            parsed[key] = _float(value)
        except ValueError:
            raise ConfigError(f"non-numeric value for {key!r}: {value!r}", lineno) from None
    for key in required_parameters(kind):
        if key not in parsed:
            raise ConfigError(f"missing required key {key!r} for kind {kind}", headers["potential"])
    params = tuple((k, parsed[k]) for k in allowed if k in parsed)
    return kind, params


def _validate(kind, params, values, lines, headers, last_line) -> PotentialModel:
    def fail(message, key):
        raise ConfigError(message, lines.get(key, last_line))

    if not values["hbar"] > 0:
        fail(f"hbar must be positive, got {values['hbar']!r}", "hbar")
    if any(h <= 0 for h in values["hbar_list"]):
        fail("hbar_list entries must be positive", "hbar_list")
    if values["points_per_wavelength"] < 20:
        fail("points_per_wavelength must be at least 20", "points_per_wavelength")
    for key in ("refine_rtol", "delta_c", "delta_n"):
        if not values[key] > 0:
            fail(f"{key} must be positive", key)
    for key in ("refine_budget", "n_ell", "k", "max_interior_levels"):
        minimum = 2 if key == "n_ell" else 1
        if values[key] < minimum:
            fail(f"{key} must be at least {minimum}", key)
    if values["interior_index"] < 0 or values["wkb_levels"] < 0:
        fail("interior_index and wkb_levels must be non-negative", "interior_index")
    try:
        model = make_potential(kind, **dict(params))
        geometry = Geometry(values["omega_minus"], values["omega_plus"])
    except ResonanceBoxError as exc:
        raise ConfigError(str(exc), headers.get("geometry", last_line)) from None
    if kind in WELL_FAMILIES and not interior_in_forbidden_region(model, geometry):
        fail("the interior region must lie in the forbidden region J(v0)", "omega_plus")
    t_keys = ("tunneling_omega_minus", "tunneling_omega_plus")
    if (values[t_keys[0]] is None) != (values[t_keys[1]] is None):
        fail("give both tunneling_omega_minus and tunneling_omega_plus or neither", t_keys[0])
    if values[t_keys[0]] is not None:
        try:
            Geometry(values[t_keys[0]], values[t_keys[1]])
        except ResonanceBoxError as exc:
            fail(str(exc), t_keys[0])
    if values["ell_min"] is None:
        values["ell_min"] = 2.0 * geometry.min_ell
    if values["ell_max"] is None:
        values["ell_max"] = values["ell_min"] + 1.0
    if not values["ell_min"] > geometry.min_ell:
        fail("ell_min must exceed max(|omega_minus|, omega_plus)", "ell_min")
    if not values["ell_max"] > values["ell_min"]:
        fail("ell_max must exceed ell_min", "ell_max")
    return model


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def config_fields() -> tuple[str, ...]:
    return tuple(f.name for f in fields(RunConfig) if not f.name.startswith("_"))
