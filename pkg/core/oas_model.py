"""
OAS Model - Parse OpenAPI 3.x documents into an immutable API model
Resolves local references, normalizes parameter identities and validates values against schemas
"""

import re
import json
import math
import logging
import datetime
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import yaml

logger = logging.getLogger(__name__)

METHOD_ORDER = ("GET", "POST", "PUT", "PATCH", "DELETE")
KINDS = ("string", "integer", "number", "boolean", "array", "object")
LOCATIONS = ("path", "query", "header", "body-field")

_PLACEHOLDER = re.compile(r"\{([^{}]+)\}")
_DROPPED_COMBINATORS = ("oneOf", "anyOf", "not")


class MalformedDocument(ValueError):
    """Document is not parseable YAML/JSON or violates the model invariants"""


class UnsupportedVersion(ValueError):
    """Document is not an OpenAPI 3.x document"""


class EmptyApi(ValueError):
    """Document declares no usable operation"""


@dataclass(frozen=True)
class Schema:
    """Constraint model of one value"""
    kind: str
    format: Optional[str] = None
    minimum: Optional[float] = None
    maximum: Optional[float] = None
    min_length: Optional[int] = None
    max_length: Optional[int] = None
    min_items: Optional[int] = None
    max_items: Optional[int] = None
    enum_values: Optional[Tuple[Any, ...]] = None
    default_value: Any = None
    example_values: Tuple[Any, ...] = ()
    items: Optional['Schema'] = None
    # name -> (schema, required)
    properties: Dict[str, Tuple['Schema', bool]] = field(default_factory=dict)

    @property
    def is_numeric(self) -> bool:
        return self.kind in ("integer", "number")

    @property
    def has_bounds(self) -> bool:
        return self.minimum is not None or self.maximum is not None


@dataclass(frozen=True)
class ParameterSpec:
    name: str
    normalized_name: str
    location: str
    required: bool
    schema: Schema
    description: Optional[str] = None

    @property
    def key(self) -> str:
        """Identity of the parameter inside its operation"""
        return f"{self.location}:{self.name}"


@dataclass(frozen=True)
class OperationSpec:
    index: int
    operation_id: str
    method: str
    path: str
    parameters: Tuple[ParameterSpec, ...] = ()
    request_body: Optional[Schema] = None
    description: Optional[str] = None

    def parameter(self, key: str) -> Optional[ParameterSpec]:
        for param in self.parameters:
            if param.key == key:
                return param
        return None

    @property
    def placeholders(self) -> List[str]:
        return _PLACEHOLDER.findall(self.path)


@dataclass(frozen=True)
class ApiModel:
    title: str
    base_url: str
    operations: Tuple[OperationSpec, ...]
    warnings: Tuple[str, ...] = field(default=(), compare=False)

    @property
    def size(self) -> int:
        return len(self.operations)

    def find_operation(self, method: str, path: str) -> Optional[OperationSpec]:
        """Look up an operation by method and path template"""
        for op in self.operations:
            if op.method == method.upper() and op.path == path:
                return op
        return None

    def by_id(self, operation_id: str) -> Optional[OperationSpec]:
        for op in self.operations:
            if op.operation_id == operation_id:
                return op
        return None


@dataclass
class ValidationResult:
    violations: List[str] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.violations


def normalize_name(raw: str) -> str:
    """Lowercase and strip separators so that productId, product_id and Product-ID collide"""
    lowered = raw.lower()
    stripped = "".join(ch for ch in lowered if ch.isalnum())
    return stripped or lowered


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def matches_kind(value: Any, kind: str) -> bool:
    """Whether a JSON-like value has the given schema kind"""
    if kind == "string":
        return isinstance(value, str)
    if kind == "integer":
        return isinstance(value, int) and not isinstance(value, bool)
    if kind == "number":
        return (isinstance(value, (int, float)) and not isinstance(value, bool)
                and math.isfinite(value))
    if kind == "boolean":
        return isinstance(value, bool)
    if kind == "array":
        return isinstance(value, (list, tuple))
    if kind == "object":
        return isinstance(value, dict)
    return False


def validate_against_schema(value: Any, schema: Schema, path: str = "value") -> ValidationResult:
    """Check a value against every constraint present in the schema"""
    result = ValidationResult()
    _validate(value, schema, path, result.violations)
    return result


def _validate(value: Any, schema: Schema, path: str, out: List[str]):
    if not matches_kind(value, schema.kind):
        out.append(f"{path}: wrong type, expected {schema.kind} got {type(value).__name__}")
        return

    if schema.enum_values is not None and value not in schema.enum_values:
        out.append(f"{path}: {value!r} not in enum")

    if schema.is_numeric:
        if schema.minimum is not None and value < schema.minimum:
            out.append(f"{path}: {value} below minimum {schema.minimum}")
        if schema.maximum is not None and value > schema.maximum:
            out.append(f"{path}: {value} above maximum {schema.maximum}")
    elif schema.kind == "string":
        if schema.min_length is not None and len(value) < schema.min_length:
            out.append(f"{path}: length {len(value)} below min_length {schema.min_length}")
        if schema.max_length is not None and len(value) > schema.max_length:
            out.append(f"{path}: length {len(value)} above max_length {schema.max_length}")
    elif schema.kind == "array":
        if schema.min_items is not None and len(value) < schema.min_items:
            out.append(f"{path}: {len(value)} items below min_items {schema.min_items}")
        if schema.max_items is not None and len(value) > schema.max_items:
            out.append(f"{path}: {len(value)} items above max_items {schema.max_items}")
        if schema.items is not None:
            for i, item in enumerate(value):
                _validate(item, schema.items, f"{path}[{i}]", out)
    elif schema.kind == "object":
        for name, (prop_schema, required) in schema.properties.items():
            if name not in value:
                if required:
                    out.append(f"{path}.{name}: missing required property")
                continue
            _validate(value[name], prop_schema, f"{path}.{name}", out)


def validate_request(operation: OperationSpec, assignments: Mapping[str, Any]) -> List[str]:
    """Violations of a parameter assignment (keyed by ParameterSpec.key) against an operation"""
    violations: List[str] = []
    known = set()
    for param in operation.parameters:
        known.add(param.key)
        if param.key not in assignments:
            if param.required:
                violations.append(f"{param.key}: missing required parameter")
            continue
        violations.extend(validate_against_schema(assignments[param.key], param.schema, param.key).violations)
    for key in assignments:
        if key not in known:
            violations.append(f"{key}: unknown parameter")
    return violations


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

def parse_spec(document: Union[bytes, str], format_hint: str = "auto") -> ApiModel:
    """
    Parse an OpenAPI 3.x document into an ApiModel

    Args:
        document: Raw YAML or JSON document
        format_hint: "yaml", "json" or "auto"

    Returns:
        ApiModel: Reference-resolved model with stable operation indices

    Raises:
        MalformedDocument: Document is not parseable or breaks a model invariant
        UnsupportedVersion: Document is not OpenAPI 3.x
        EmptyApi: Document has no operations
    """
    data = _load_document(document, format_hint)
    return _SpecParser(data).parse()


def load_spec(file_path: str) -> ApiModel:
    """Read and parse an OAS file, guessing the format from its extension"""
    with open(file_path, 'rb') as f:
        raw = f.read()
    hint = "json" if file_path.endswith(".json") else "yaml" if file_path.endswith((".yaml", ".yml")) else "auto"
    model = parse_spec(raw, hint)
    logger.info(f"Loaded OAS '{model.title}' with {model.size} operations from {file_path}")
    return model


def _load_document(document: Union[bytes, str], format_hint: str) -> Dict[str, Any]:
    if isinstance(document, bytes):
        try:
            document = document.decode("utf-8-sig")
        except UnicodeDecodeError as e:
            raise MalformedDocument(f"Document is not UTF-8: {e}") from e

    if format_hint not in ("yaml", "json", "auto"):
        raise ValueError(f"Unknown format hint: {format_hint}")

    try:
        if format_hint == "json" or (format_hint == "auto" and document.lstrip().startswith("{")):
            data = json.loads(document)
        else:
            data = yaml.safe_load(document)
    except (ValueError, yaml.YAMLError) as e:
        raise MalformedDocument(f"Document is not well-formed {format_hint}: {e}") from e

    if not isinstance(data, dict):
        raise MalformedDocument("Document root must be a mapping")
    return data


def _plain(value: Any) -> Any:
    """YAML may produce dates; keep model values JSON-compatible"""
    if isinstance(value, (datetime.date, datetime.datetime)):
        return value.isoformat()
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_plain(v) for v in value]
    return value


class _SpecParser:
    """Single-use converter from a loaded document to an ApiModel"""

    def __init__(self, document: Dict[str, Any]):
        self.doc = document
        self.warnings: List[str] = []

    def warn(self, message: str):
        self.warnings.append(message)
        logger.warning(f"OAS: {message}")

    def parse(self) -> ApiModel:
        version = self.doc.get("openapi")
        if version is None:
            found = self.doc.get("swagger", "unknown")
            raise UnsupportedVersion(f"Only OpenAPI 3.x is supported (found version {found})")
        if not str(version).startswith("3."):
            raise UnsupportedVersion(f"Only OpenAPI 3.x is supported (found version {version})")

        info = self.doc.get("info") or {}
        title = str(info.get("title", "Untitled API"))
        servers = self.doc.get("servers") or []
        base_url = ""
        if servers and isinstance(servers[0], dict):
            base_url = str(servers[0].get("url", ""))

        paths = self.doc.get("paths") or {}
        if not isinstance(paths, dict):
            raise MalformedDocument("'paths' must be a mapping")

        operations: List[OperationSpec] = []
        seen_ids = set()
        for path, path_item in paths.items():
            path_item = self._deref(path_item, f"paths.{path}")
            if not isinstance(path_item, dict):
                continue
            for key in path_item:
                if key.upper() in ("HEAD", "OPTIONS", "TRACE"):
                    self.warn(f"{key.upper()} {path}: method not supported, dropped")
            for method in METHOD_ORDER:
                raw_op = path_item.get(method.lower())
                if raw_op is None:
                    continue
                op = self._operation(len(operations), method, str(path), raw_op, path_item.get("parameters") or [])
                if op.operation_id in seen_ids:
                    unique = f"{op.operation_id}_{op.index}"
                    self.warn(f"duplicate operationId '{op.operation_id}' renamed to '{unique}'")
                    op = replace(op, operation_id=unique)
                seen_ids.add(op.operation_id)
                operations.append(op)

        if not operations:
            raise EmptyApi("Document declares no operations")

        return ApiModel(title=title, base_url=base_url, operations=tuple(operations),
                        warnings=tuple(self.warnings))

    # ---- References ----
    def _pointer(self, ref: str) -> Any:
        node: Any = self.doc
        for token in ref[2:].split("/"):
            token = token.replace("~1", "/").replace("~0", "~")
            if isinstance(node, dict) and token in node:
                node = node[token]
            elif isinstance(node, list) and token.isdigit() and int(token) < len(node):
                node = node[int(token)]
            else:
                return None
        return node

    def _deref(self, node: Any, where: str, seen: Tuple[str, ...] = ()) -> Any:
        """Follow $ref chains; None when the reference cannot be used"""
        while isinstance(node, dict) and "$ref" in node:
            ref = str(node["$ref"])
            if not ref.startswith("#/"):
                self.warn(f"{where}: remote $ref '{ref}' not supported, dropped")
                return None
            if ref in seen:
                self.warn(f"{where}: cyclic $ref '{ref}', replaced with empty object")
                return None
            seen = seen + (ref,)
            target = self._pointer(ref)
            if target is None:
                self.warn(f"{where}: unresolvable $ref '{ref}', dropped")
                return None
            node = target
        return node

    # ---- Operations ----
    def _operation(self, index: int, method: str, path: str, raw: Any, path_params: List[Any]) -> OperationSpec:
        where = f"{method} {path}"
        if not isinstance(raw, dict):
            raise MalformedDocument(f"{where}: operation must be a mapping")
        if "callbacks" in raw:
            self.warn(f"{where}: callbacks not supported, dropped")
        for status, response in (raw.get("responses") or {}).items():
            response = self._deref(response, f"{where} response {status}")
            if isinstance(response, dict) and "links" in response:
                self.warn(f"{where}: response {status} links not supported, dropped")

        merged: Dict[Tuple[str, str], ParameterSpec] = {}
        for source, raw_params in (("path-level", path_params), ("operation", raw.get("parameters") or [])):
            local: Dict[Tuple[str, str], ParameterSpec] = {}
            for raw_param in raw_params:
                param = self._parameter(raw_param, where)
                if param is None:
                    continue
                ident = (param.location, param.name)
                if ident in local:
                    self.warn(f"{where}: duplicate {source} parameter '{param.name}' in {param.location}, last one kept")
                local[ident] = param
            merged.update(local)

        placeholders = _PLACEHOLDER.findall(path)
        for ident in list(merged):
            if ident[0] == "path" and ident[1] not in placeholders:
                self.warn(f"{where}: path parameter '{ident[1]}' has no placeholder, dropped")
                del merged[ident]
        for name in placeholders:
            if ("path", name) not in merged:
                self.warn(f"{where}: placeholder '{{{name}}}' undocumented, synthesized as string")
                merged[("path", name)] = ParameterSpec(name, normalize_name(name), "path", True, Schema(kind="string", min_length=1))

        request_body = None
        if "requestBody" in raw:
            request_body = self._request_body(raw["requestBody"], where)
            if request_body is not None:
                for name, (prop_schema, required) in request_body.properties.items():
                    merged[("body-field", name)] = ParameterSpec(
                        name=name,
                        normalized_name=normalize_name(name),
                        location="body-field",
                        required=required,
                        schema=prop_schema,
                        description=None,
                    )

        description = raw.get("description") or raw.get("summary")
        operation_id = raw.get("operationId") or f"{method}_{path}"
        return OperationSpec(
            index=index,
            operation_id=str(operation_id),
            method=method,
            path=path,
            parameters=tuple(merged.values()),
            request_body=request_body,
            description=str(description) if description else None,
        )

    def _parameter(self, raw: Any, where: str) -> Optional[ParameterSpec]:
        raw = self._deref(raw, where)
        if not isinstance(raw, dict) or "name" not in raw:
            self.warn(f"{where}: parameter without name, dropped")
            return None
        name = str(raw["name"])
        location = raw.get("in", "query")
        if location not in ("path", "query", "header"):
            self.warn(f"{where}: parameter '{name}' in {location} not supported, dropped")
            return None

        raw_schema = raw.get("schema")
        if raw_schema is None and "content" in raw:
            content = self._content(raw["content"], f"{where} parameter '{name}'")
            if content:
                raw_schema = next(iter(content.values())).get("schema")
        if raw_schema is None:
            self.warn(f"{where}: parameter '{name}' has no schema, treated as string")
            schema = Schema(kind="string")
        else:
            schema = self._schema(raw_schema, f"{where} parameter '{name}'")

        examples = list(schema.example_values)
        if "example" in raw:
            examples.append(_plain(raw["example"]))
        if isinstance(raw.get("examples"), dict):
            for example in raw["examples"].values():
                example = self._deref(example, where)
                if isinstance(example, dict) and "value" in example:
                    examples.append(_plain(example["value"]))
        examples = [e for e in examples if matches_kind(e, schema.kind)]
        if tuple(examples) != schema.example_values:
            schema = replace(schema, example_values=tuple(examples))

        required = bool(raw.get("required", False))
        if location == "path" and not required:
            self.warn(f"{where}: path parameter '{name}' not marked required, forced")
            required = True

        description = raw.get("description")
        return ParameterSpec(name, normalize_name(name), location, required, schema,
                             str(description) if description else None)

    def _content(self, raw: Any, where: str) -> Dict[str, Dict[str, Any]]:
        """
        Media-type map of a parameter or request body

        Raises:
            MalformedDocument: content or one of its media-type entries is not a mapping
        """
        if raw is None:
            return {}
        if not isinstance(raw, dict):
            raise MalformedDocument(f"{where}: 'content' must be a mapping of media types")
        content: Dict[str, Dict[str, Any]] = {}
        for media_type, entry in raw.items():
            entry = self._deref(entry, where)
            if entry is None:
                entry = {}
            if not isinstance(entry, dict):
                raise MalformedDocument(f"{where}: media type '{media_type}' must be a mapping")
            content[str(media_type)] = entry
        return content

    def _request_body(self, raw: Any, where: str) -> Optional[Schema]:
        raw = self._deref(raw, f"{where} requestBody")
        if not isinstance(raw, dict):
            return None
        content = self._content(raw.get("content"), f"{where} requestBody")
        media = None
        for content_type, candidate in content.items():
            if content_type == "application/json" or content_type.endswith("+json"):
                media = candidate
                break
        if media is None:
            if content:
                self.warn(f"{where}: request body types {', '.join(content)} not supported, dropped")
            return None
        schema = self._schema(media.get("schema") or {}, f"{where} requestBody")
        if schema.kind != "object":
            self.warn(f"{where}: non-object JSON request body not supported, dropped")
            return None
        return schema

    # ---- Schemas ----
    def _schema(self, raw: Any, where: str, seen: Tuple[str, ...] = ()) -> Schema:
        if isinstance(raw, dict) and "$ref" in raw:
            ref = str(raw["$ref"])
            target = self._deref(raw, where, seen)
            if target is None:
                return Schema(kind="object")
            return self._schema(target, where, seen + (ref,))
        if not isinstance(raw, dict):
            self.warn(f"{where}: schema is not a mapping, treated as string")
            return Schema(kind="string")

        for combinator in _DROPPED_COMBINATORS:
            if combinator in raw:
                self.warn(f"{where}: {combinator} not supported, dropped")
        if "allOf" in raw:
            raw = self._merge_all_of(raw, where, seen)

        kind = raw.get("type")
        if isinstance(kind, list):
            kind = next((k for k in kind if k != "null"), None)
        if kind is None:
            if "properties" in raw:
                kind = "object"
            elif "items" in raw:
                kind = "array"
            elif raw.get("enum"):
                kind = _kind_of(raw["enum"][0])
            else:
                kind = "string"
                if not any(c in raw for c in _DROPPED_COMBINATORS):
                    self.warn(f"{where}: schema without type, treated as string")
        if kind not in KINDS:
            self.warn(f"{where}: type '{kind}' not supported, treated as string")
            kind = "string"

        for flag in ("exclusiveMinimum", "exclusiveMaximum"):
            if flag in raw:
                self.warn(f"{where}: {flag} not supported, ignored")

        enum_values = None
        if "enum" in raw and isinstance(raw["enum"], list):
            kept = [_plain(v) for v in raw["enum"] if matches_kind(_plain(v), kind)]
            if len(kept) != len(raw["enum"]):
                self.warn(f"{where}: enum values not of type {kind} dropped")
            enum_values = tuple(kept) if kept else None

        default_value = _plain(raw.get("default"))
        if default_value is not None and not matches_kind(default_value, kind):
            self.warn(f"{where}: default {default_value!r} not of type {kind}, dropped")
            default_value = None

        examples: List[Any] = []
        if "example" in raw:
            examples.append(_plain(raw["example"]))
        if isinstance(raw.get("examples"), list):
            examples.extend(_plain(v) for v in raw["examples"])
        examples = [e for e in examples if matches_kind(e, kind)]

        items = None
        properties: Dict[str, Tuple[Schema, bool]] = {}
        if kind == "array":
            if "items" in raw:
                items = self._schema(raw["items"], f"{where}[]", seen)
            else:
                self.warn(f"{where}: array without items, items treated as string")
                items = Schema(kind="string")
        elif kind == "object":
            required = set(raw.get("required") or [])
            for prop_name, prop_raw in (raw.get("properties") or {}).items():
                properties[str(prop_name)] = (self._schema(prop_raw, f"{where}.{prop_name}", seen),
                                              prop_name in required)

        schema = Schema(
            kind=kind,
            format=raw.get("format"),
            minimum=_number(raw.get("minimum")),
            maximum=_number(raw.get("maximum")),
            min_length=_count(raw.get("minLength")),
            max_length=_count(raw.get("maxLength")),
            min_items=_count(raw.get("minItems")),
            max_items=_count(raw.get("maxItems")),
            enum_values=enum_values,
            default_value=default_value,
            example_values=tuple(examples),
            items=items,
            properties=properties,
        )
        _check_schema(schema, where)
        return schema

    def _merge_all_of(self, raw: Dict[str, Any], where: str, seen: Tuple[str, ...]) -> Dict[str, Any]:
        merged: Dict[str, Any] = {k: v for k, v in raw.items() if k != "allOf"}
        properties = dict(merged.get("properties") or {})
        required = list(merged.get("required") or [])
        for part in raw.get("allOf") or []:
            part = self._deref(part, where, seen)
            if not isinstance(part, dict):
                continue
            if "allOf" in part:
                part = self._merge_all_of(part, where, seen)
            properties.update(part.get("properties") or {})
            required.extend(r for r in part.get("required") or [] if r not in required)
            for key, value in part.items():
                if key not in ("properties", "required"):
                    merged.setdefault(key, value)
        if properties:
            merged["properties"] = properties
            merged.setdefault("type", "object")
        if required:
            merged["required"] = required
        return merged


def _kind_of(value: Any) -> str:
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, int):
        return "integer"
    if isinstance(value, float):
        return "number"
    if isinstance(value, list):
        return "array"
    if isinstance(value, dict):
        return "object"
    return "string"


def _number(value: Any) -> Optional[float]:
    if value is None or isinstance(value, bool):
        return None
    if isinstance(value, (int, float)):
        return value
    raise MalformedDocument(f"numeric bound expected, got {value!r}")


def _count(value: Any) -> Optional[int]:
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise MalformedDocument(f"non-negative integer expected, got {value!r}")
    return value


def _check_schema(schema: Schema, where: str):
    pairs = (
        ("minimum", schema.minimum, "maximum", schema.maximum),
        ("minLength", schema.min_length, "maxLength", schema.max_length),
        ("minItems", schema.min_items, "maxItems", schema.max_items),
    )
    for low_name, low, high_name, high in pairs:
        if low is not None and high is not None and low > high:
            raise MalformedDocument(f"{where}: {low_name} {low} greater than {high_name} {high}")
