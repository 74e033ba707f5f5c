from marshmallow import fields

from .exceptions import UnsupportedValueError


def handle_length(schema, field, validator, parent_schema):
    """Export ``validate.Length`` as string or array bounds.

    Schedules use it for non-empty ``values`` lists and the scenario name
    for a non-empty string. An ``equal`` length pins both bounds.

    Raises:
        UnsupportedValueError: For fields that are neither strings nor
            collections.
    """
    if isinstance(field, fields.String):
        min_key, max_key = "minLength", "maxLength"
    elif isinstance(field, (fields.List, fields.Nested)):
        min_key, max_key = "minItems", "maxItems"
    else:
        raise UnsupportedValueError(
            "Length is only exported for List, Nested and String fields, not %s"
            % field.__class__.__name__
        )

    if validator.equal is not None:
        schema[min_key] = schema[max_key] = validator.equal
        return schema
    if validator.min is not None:
        schema[min_key] = validator.min
    if validator.max is not None:
        schema[max_key] = validator.max
    return schema


def handle_one_of(schema, field, validator, parent_schema):
    """Export ``validate.OneOf`` choices as ``enum``."""
    schema["enum"] = list(validator.choices)
    return schema


def handle_range(schema, field, validator, parent_schema):
    """Export ``validate.Range`` as inclusive or exclusive numeric bounds."""
    if not isinstance(field, fields.Number):
        raise UnsupportedValueError(
            "Range is only exported for number fields, not %s"
            % field.__class__.__name__
        )

    if validator.min is not None:
        key = "minimum" if validator.min_inclusive else "exclusiveMinimum"
        schema[key] = validator.min
    if validator.max is not None:
        key = "maximum" if validator.max_inclusive else "exclusiveMaximum"
        schema[key] = validator.max
    return schema
