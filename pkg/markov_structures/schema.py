"""JSON Schema (draft-07) export of the scenario config schemas."""
import json
from inspect import isclass

from marshmallow import INCLUDE, Schema, fields, missing, validate
from marshmallow.class_registry import get_class
from marshmallow.decorators import post_dump

from .compat import field_default
from .config import ScenarioSchema
from .exceptions import UnsupportedValueError
from .validation import handle_length, handle_one_of, handle_range

__all__ = ("ConfigJSONSchema", "scenario_json_schema")

TYPE_MAP = {
    dict: {"type": "object"},
    list: {"type": "array"},
    str: {"type": "string"},
    float: {"type": "number"},
    int: {"type": "integer"},
    bool: {"type": "boolean"},
}

FIELD_MAPPING = (
    (fields.Nested, "_from_nested_schema"),
    (fields.Dict, "_from_dict"),
    (fields.List, list),
    (fields.Boolean, bool),
    (fields.Integer, int),
    (fields.Number, float),
    (fields.String, str),
)

FIELD_VALIDATORS = {
    validate.Length: handle_length,
    validate.OneOf: handle_one_of,
    validate.Range: handle_range,
}

JSON_DEFAULTS = (str, int, float, bool, list)

DRAFT_07 = "http://json-schema.org/draft-07/schema#"
DEFINITIONS = "#/definitions/"


def _accepts_unknown_keys(schema):
    """Tables reject keys they do not declare unless their schema INCLUDEs them."""
    return schema.unknown == INCLUDE


class ConfigJSONSchema(Schema):
    """Dumps a marshmallow schema instance as a draft-07 JSON Schema.

    Nested schemas become entries of ``definitions`` referenced by ``$ref``.
    """

    properties = fields.Method("get_properties")
    type = fields.Constant("object")
    required = fields.Method("get_required")

    def __init__(self, *args, **kwargs):
        self._definitions = {}
        self.nested = kwargs.pop("nested", False)
        super(ConfigJSONSchema, self).__init__(*args, **kwargs)

    def get_properties(self, obj):
        return {
            field.data_key or name: self._get_schema_for_field(obj, field)
            for name, field in sorted(obj.fields.items())
        }

    def get_required(self, obj):
        required = [
            field.data_key or name
            for name, field in sorted(obj.fields.items())
            if field.required
        ]
        return required or missing

    def _annotate(self, json_schema, field):
        default = field_default(field)
        if isinstance(default, JSON_DEFAULTS):
            json_schema["default"] = default
        for key, value in field.metadata.items():
            json_schema[key] = value
        return json_schema

    def _from_python_type(self, obj, field, pytype):
        json_schema = dict(TYPE_MAP[pytype])
        if field.allow_none:
            json_schema["type"] = [json_schema["type"], "null"]
        self._annotate(json_schema, field)
        if isinstance(field, fields.List):
            json_schema["items"] = self._get_schema_for_field(obj, field.inner)
        return json_schema

    def _from_dict(self, obj, field):
        json_schema = {"type": "object"}
        if field.value_field is not None:
            json_schema["additionalProperties"] = self._get_schema_for_field(
                obj, field.value_field
            )
        return self._annotate(json_schema, field)

    def _get_pytype(self, field):
        for field_class, pytype in FIELD_MAPPING:
            if isinstance(field, field_class):
                return pytype
        raise UnsupportedValueError("unsupported field type %s" % field)

    def _get_schema_for_field(self, obj, field):
        pytype = self._get_pytype(field)
        if isinstance(pytype, str):
            schema = getattr(self, pytype)(obj, field)
        else:
            schema = self._from_python_type(obj, field, pytype)
        for validator in field.validators:
            handler = FIELD_VALIDATORS.get(validator.__class__)
            if handler is not None:
                schema = handler(schema, field, validator, obj)
        return schema

    def _from_nested_schema(self, obj, field):
        nested = field.nested
        if isinstance(nested, str):
            nested = get_class(nested)
        if isclass(nested) and issubclass(nested, Schema):
            table = nested(only=field.only, exclude=field.exclude)
        else:
            table = nested
        name = type(table).__name__

        if name not in self._definitions and name != type(obj).__name__:
            exporter = type(self)(nested=True)
            definition = exporter.dump(table)
            definition["additionalProperties"] = _accepts_unknown_keys(table)
            self._definitions[name] = definition
            self._definitions.update(exporter._definitions)

        ref = dict(field.metadata, **{"$ref": DEFINITIONS + name})
        if getattr(field, "many", False):
            return {"type": "array", "items": ref}
        if field.allow_none:
            return {"oneOf": [ref, {"type": "null"}]}
        return ref

    def dump(self, obj, **kwargs):
        self.obj = obj
        return super(ConfigJSONSchema, self).dump(obj, **kwargs)

    @post_dump
    def _as_document(self, data, **_):
        """Top level: the root table joins ``definitions`` and is referenced by ``$ref``."""
        if self.nested:
            return data
        root = type(self.obj).__name__
        data["additionalProperties"] = _accepts_unknown_keys(self.obj)
        self._definitions[root] = data
        return {
            "$schema": DRAFT_07,
            "$ref": DEFINITIONS + root,
            "definitions": self._definitions,
        }


def scenario_json_schema(indent=2):
    """The scenario file JSON Schema as text."""
    return json.dumps(ConfigJSONSchema().dump(ScenarioSchema()), indent=indent, sort_keys=True)
