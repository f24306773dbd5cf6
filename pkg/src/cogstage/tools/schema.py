"""Small JSON-schema-subset checker for tool I/O contracts.

Supports exactly what the tool registry needs: type (object / number /
integer / string / boolean / array), properties, required,
additionalProperties, enum, minimum / maximum / exclusiveMinimum, and
items.  Two entry points: :func:`check_schema` rejects self-contradictory
schemas at registration time, :func:`validate_value` checks payloads and
parameters against a schema and returns violation strings.
"""

from __future__ import annotations

from typing import Any

_KNOWN_TYPES = {"object", "number", "integer", "string", "boolean", "array"}


class InvalidSchema(ValueError):
    pass


def check_schema(schema: Any, path: str = "$") -> None:
    """Raise :class:`InvalidSchema` unless ``schema`` is well-formed."""
    if not isinstance(schema, dict):
        raise InvalidSchema(f"{path}: schema node must be an object")
    stype = schema.get("type")
    if stype is not None and stype not in _KNOWN_TYPES:
        raise InvalidSchema(f"{path}: unknown type {stype!r}")

    props = schema.get("properties", {})
    if not isinstance(props, dict):
        raise InvalidSchema(f"{path}: properties must be an object")
    for name, sub in props.items():
        check_schema(sub, f"{path}.{name}")

    requires_any = schema.get("requiresAny")
    if requires_any is not None:
        if not isinstance(requires_any, list) or not requires_any:
            raise InvalidSchema(f"{path}: requiresAny must be a non-empty list")
        if schema.get("additionalProperties") is False:
            missing = [r for r in requires_any if r not in props]
            if missing:
                raise InvalidSchema(
                    f"{path}: requiresAny names {missing} absent from properties"
                )

    required = schema.get("required", [])
    if not isinstance(required, list):
        raise InvalidSchema(f"{path}: required must be a list")
    if schema.get("additionalProperties") is False:
        missing = [r for r in required if r not in props]
        if missing:
            raise InvalidSchema(
                f"{path}: required names {missing} absent from properties while "
                "additionalProperties is false (unsatisfiable)"
            )

    lo, hi = schema.get("minimum"), schema.get("maximum")
    if lo is not None and hi is not None and lo > hi:
        raise InvalidSchema(f"{path}: minimum {lo} exceeds maximum {hi}")
    xlo = schema.get("exclusiveMinimum")
    if xlo is not None and hi is not None and xlo >= hi:
        raise InvalidSchema(f"{path}: exclusiveMinimum {xlo} >= maximum {hi}")

    enum = schema.get("enum")
    if enum is not None and (not isinstance(enum, list) or not enum):
        raise InvalidSchema(f"{path}: enum must be a non-empty list")

    items = schema.get("items")
    if items is not None:
        check_schema(items, f"{path}[]")


def _type_ok(value: Any, stype: str) -> bool:
    if stype == "object":
        return isinstance(value, dict)
    if stype == "array":
        return isinstance(value, list)
    if stype == "string":
        return isinstance(value, str)
    if stype == "boolean":
        return isinstance(value, bool)
    if stype == "integer":
        return isinstance(value, int) and not isinstance(value, bool)
    if stype == "number":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    return True


def validate_value(value: Any, schema: dict, path: str = "$") -> list[str]:
    """Check ``value`` against ``schema``; returns violations (empty = valid)."""
    violations: list[str] = []
    stype = schema.get("type")
    if stype is not None and not _type_ok(value, stype):
        return [f"{path}: expected {stype}, got {type(value).__name__}"]

    if "enum" in schema and value not in schema["enum"]:
        violations.append(f"{path}: {value!r} not in enum {schema['enum']}")

    if isinstance(value, (int, float)) and not isinstance(value, bool):
        if "minimum" in schema and value < schema["minimum"]:
            violations.append(f"{path}: {value} below minimum {schema['minimum']}")
        if "exclusiveMinimum" in schema and value <= schema["exclusiveMinimum"]:
            violations.append(
                f"{path}: {value} not above exclusiveMinimum {schema['exclusiveMinimum']}"
            )
        if "maximum" in schema and value > schema["maximum"]:
            violations.append(f"{path}: {value} above maximum {schema['maximum']}")

    if isinstance(value, dict):
        props = schema.get("properties", {})
        for name in schema.get("required", []):
            if name not in value:
                violations.append(f"{path}.{name}: required property missing")
        for name, sub in value.items():
            if name in props:
                violations.extend(validate_value(sub, props[name], f"{path}.{name}"))
            elif schema.get("additionalProperties") is False:
                violations.append(f"{path}.{name}: unexpected property")

    if isinstance(value, list) and "items" in schema:
        for i, item in enumerate(value):
            violations.extend(validate_value(item, schema["items"], f"{path}[{i}]"))

    return violations
