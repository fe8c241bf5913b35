"""Validate CLI JSON outputs against the schemas shipped in the package."""

import importlib.resources
import json

from jsonschema import Draft202012Validator
from referencing import Registry, Resource
from referencing.jsonschema import DRAFT202012

_SCHEMAS = {}
for entry in (importlib.resources.files("adcloud") / "schemas").iterdir():
    if entry.name.endswith(".schema.json"):
        _SCHEMAS[entry.name.removesuffix(".schema.json")] = json.loads(entry.read_text())

_REGISTRY = Registry().with_resources(
    (schema["$id"], Resource(contents=schema, specification=DRAFT202012))
    for schema in _SCHEMAS.values()
)


def validate(name: str, data) -> None:
    Draft202012Validator(_SCHEMAS[name], registry=_REGISTRY).validate(data)
