"""
Interaction Handler - Turn parameter assignments into concrete HTTP requests,
execute them against a backend, classify outcomes and harvest test data
"""

import json
import time
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, asdict
from datetime import datetime, timezone
from enum import Enum
from typing import TYPE_CHECKING, Any, Dict, List, Mapping, Optional, Tuple, Union
from urllib.parse import quote, urlencode

import requests

from .oas_model import OperationSpec, normalize_name
from utils import iter_jsonl, to_jsonable

if TYPE_CHECKING:
    from .input_generator import ValueDictionaries

logger = logging.getLogger(__name__)

LOG_SCHEMA_VERSION = 1
MAX_BODY_BYTES = 64 * 1024
DEFAULT_TIMEOUT = 10.0


class OutcomeClass(str, Enum):
    SUCCESS = "Success2xx"
    CLIENT_ERROR = "ClientError4xx"
    SERVER_ERROR = "ServerError5xx"
    TRANSPORT_ERROR = "TransportError"


class MissingPathParameter(ValueError):
    """A path placeholder has no assigned value"""


class TransportFailure(RuntimeError):
    """The backend produced no HTTP response"""


def classify_status(status: Optional[int]) -> OutcomeClass:
    """2xx success, 4xx client error, 5xx server error, no response transport error; anything else counts as 4xx"""
    if status is None:
        return OutcomeClass.TRANSPORT_ERROR
    family = status // 100
    if family == 2:
        return OutcomeClass.SUCCESS
    if family == 5:
        return OutcomeClass.SERVER_ERROR
    return OutcomeClass.CLIENT_ERROR


@dataclass
class ConcreteRequest:
    """A fully materialized HTTP request plus where its values came from"""
    method: str
    path: str
    query: List[Tuple[str, str]] = field(default_factory=list)
    headers: List[Tuple[str, str]] = field(default_factory=list)
    body: Optional[Dict[str, Any]] = None
    operation_id: Optional[str] = None
    path_template: str = ""
    parameters: Dict[str, Any] = field(default_factory=dict)   # ParameterSpec.key -> value
    provenance: Dict[str, Dict[str, Any]] = field(default_factory=dict)

    @property
    def target(self) -> str:
        """Path plus percent-encoded query string"""
        if not self.query:
            return self.path
        return f"{self.path}?{urlencode(self.query, quote_via=quote)}"

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["query"] = [list(pair) for pair in self.query]
        data["headers"] = [list(pair) for pair in self.headers]
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'ConcreteRequest':
        return cls(
            method=data["method"],
            path=data["path"],
            query=[(k, v) for k, v in data.get("query", [])],
            headers=[(k, v) for k, v in data.get("headers", [])],
            body=data.get("body"),
            operation_id=data.get("operation_id"),
            path_template=data.get("path_template", ""),
            parameters=dict(data.get("parameters", {})),
            provenance=dict(data.get("provenance", {})),
        )


@dataclass
class BackendResponse:
    status: int
    headers: Dict[str, str] = field(default_factory=dict)
    body: str = ""


@dataclass
class Interaction:
    """One executed request with its response and outcome"""
    sequence: int
    timestamp: str
    request: ConcreteRequest
    status: Optional[int]
    outcome: OutcomeClass
    elapsed_ms: float
    response_headers: Dict[str, str] = field(default_factory=dict)
    response_body: str = ""
    transport_error: Optional[str] = None
    origin: str = "explorer"            # explorer, nominal-mutant, error-mutant
    mutation: Optional[str] = None

    @property
    def operation_id(self) -> Optional[str]:
        return self.request.operation_id

    def to_dict(self) -> Dict[str, Any]:
        return {
            "v": LOG_SCHEMA_VERSION,
            "sequence": self.sequence,
            "timestamp": self.timestamp,
            "origin": self.origin,
            "mutation": self.mutation,
            "request": self.request.to_dict(),
            "status": self.status,
            "outcome": self.outcome.value,
            "transport_error": self.transport_error,
            "elapsed_ms": self.elapsed_ms,
            "response_headers": self.response_headers,
            "response_body": self.response_body,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'Interaction':
        version = data.get("v")
        if version != LOG_SCHEMA_VERSION:
            raise ValueError(f"Unsupported interaction log schema version: {version}")
        return cls(
            sequence=int(data["sequence"]),
            timestamp=data.get("timestamp", ""),
            request=ConcreteRequest.from_dict(data["request"]),
            status=data.get("status"),
            outcome=OutcomeClass(data["outcome"]),
            elapsed_ms=float(data.get("elapsed_ms", 0.0)),
            response_headers=dict(data.get("response_headers") or {}),
            response_body=data.get("response_body") or "",
            transport_error=data.get("transport_error"),
            origin=data.get("origin", "explorer"),
            mutation=data.get("mutation"),
        )


# ---------------------------------------------------------------------------
# Backends
# ---------------------------------------------------------------------------

class Backend(ABC):
    """Something that answers concrete requests"""

    simulated = False

    @abstractmethod
    def execute(self, request: ConcreteRequest) -> BackendResponse:
        """Send one request; raise TransportFailure (or a requests exception) when nothing answers"""

    def reset(self):
        """Restore the initial API state; real targets cannot be reset"""

    def close(self):
        pass


def wire_headers(headers: List[Tuple[str, str]]) -> Dict[str, Union[str, bytes]]:
    """Header values that latin-1 cannot carry are sent as UTF-8 bytes"""
    wire: Dict[str, Union[str, bytes]] = {}
    for name, value in headers:
        try:
            value.encode("latin-1")
        except UnicodeEncodeError:
            wire[name] = value.encode("utf-8")
        else:
            wire[name] = value
    return wire


class HttpBackend(Backend):
    """Plain HTTP/1.1 client backend"""

    def __init__(self, base_url: str, timeout: float = DEFAULT_TIMEOUT):
        if not base_url:
            raise ValueError("HTTP backend needs a base URL")
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.session = requests.Session()

    def url_for(self, request: ConcreteRequest) -> str:
        return self.base_url + request.target

    def execute(self, request: ConcreteRequest) -> BackendResponse:
        kwargs: Dict[str, Any] = {
            "headers": wire_headers(request.headers),
            "timeout": self.timeout,
            "allow_redirects": False,
        }
        if request.body is not None:
            kwargs["json"] = request.body
        response = self.session.request(request.method, self.url_for(request), **kwargs)
        return BackendResponse(
            status=response.status_code,
            headers=dict(response.headers),
            body=response.text,
        )

    def probe(self):
        """Raise requests.ConnectionError/Timeout when the base URL does not answer at all"""
        self.session.get(self.base_url, timeout=self.timeout, allow_redirects=False)

    def close(self):
        self.session.close()


# ---------------------------------------------------------------------------
# Request building
# ---------------------------------------------------------------------------

def _scalar_text(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return ""
    if isinstance(value, (dict, list)):
        return json.dumps(value, separators=(",", ":"))
    return str(value)


def build_request(operation: OperationSpec, assignments: Mapping[str, Any],
                  auth_headers: Optional[Mapping[str, str]] = None,
                  provenance: Optional[Mapping[str, Dict[str, Any]]] = None,
                  allow_missing_path: bool = False) -> ConcreteRequest:
    """
    Materialize an assignment (keyed by ParameterSpec.key) into a ConcreteRequest

    Args:
        operation: Operation being exercised
        assignments: Parameter values
        auth_headers: Static headers attached to every request
        provenance: Value source and decisions per parameter
        allow_missing_path: Substitute an empty segment for unassigned path parameters

    Raises:
        MissingPathParameter: A placeholder has no value and allow_missing_path is False
    """
    path = operation.path
    query: List[Tuple[str, str]] = []
    headers: List[Tuple[str, str]] = []
    body: Optional[Dict[str, Any]] = {} if operation.request_body is not None else None

    for name in operation.placeholders:
        key = f"path:{name}"
        if key in assignments:
            segment = quote(_scalar_text(assignments[key]), safe="")
        elif allow_missing_path:
            segment = ""
        else:
            raise MissingPathParameter(f"{operation.operation_id}: no value for path parameter '{name}'")
        path = path.replace("{" + name + "}", segment)

    for param in operation.parameters:
        if param.key not in assignments or param.location == "path":
            continue
        value = to_jsonable(assignments[param.key])
        if param.location == "query":
            if isinstance(value, (list, tuple)):
                query.extend((param.name, _scalar_text(item)) for item in value)
            else:
                query.append((param.name, _scalar_text(value)))
        elif param.location == "header":
            if isinstance(value, (list, tuple)):
                headers.append((param.name, ",".join(_scalar_text(item) for item in value)))
            else:
                headers.append((param.name, _scalar_text(value)))
        elif param.location == "body-field":
            if body is None:
                body = {}
            body[param.name] = value

    for name, value in (auth_headers or {}).items():
        headers = [(k, v) for k, v in headers if k.lower() != name.lower()]
        headers.append((name, value))

    return ConcreteRequest(
        method=operation.method,
        path=path,
        query=query,
        headers=headers,
        body=body,
        operation_id=operation.operation_id,
        path_template=operation.path,
        parameters={k: to_jsonable(v) for k, v in assignments.items()},
        provenance=dict(provenance or {}),
    )


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------

def _truncate(text: str) -> str:
    raw = text.encode("utf-8")
    if len(raw) <= MAX_BODY_BYTES:
        return text
    return raw[:MAX_BODY_BYTES].decode("utf-8", errors="ignore")


def execute(request: ConcreteRequest, backend: Backend, sequence: int = 0) -> Interaction:
    """Send a request and encode the result, including transport failures, in an Interaction"""
    timestamp = datetime.now(timezone.utc).isoformat()
    start = time.perf_counter()
    try:
        response = backend.execute(request)
    # ValueError: the client could not encode the request (header value, body)
    except (requests.RequestException, TransportFailure, OSError, ValueError) as e:
        elapsed = (time.perf_counter() - start) * 1000.0
        logger.warning(f"#{sequence} {request.method} {request.target}: transport error: {str(e)}")
        return Interaction(
            sequence=sequence,
            timestamp=timestamp,
            request=request,
            status=None,
            outcome=OutcomeClass.TRANSPORT_ERROR,
            elapsed_ms=elapsed,
            transport_error=str(e),
        )

    elapsed = (time.perf_counter() - start) * 1000.0
    outcome = classify_status(response.status)
    if response.status // 100 in (1, 3):
        logger.warning(f"#{sequence} {request.method} {request.target}: status {response.status} counted as client error")
    logger.debug(f"#{sequence} {request.method} {request.target} -> {response.status}")
    return Interaction(
        sequence=sequence,
        timestamp=timestamp,
        request=request,
        status=response.status,
        outcome=outcome,
        elapsed_ms=elapsed,
        response_headers=dict(response.headers),
        response_body=_truncate(response.body or ""),
    )


# ---------------------------------------------------------------------------
# Harvesting
# ---------------------------------------------------------------------------

def flatten_leaves(obj: Any, key: Optional[str] = None) -> List[Tuple[str, Any]]:
    """(leaf key, scalar) pairs of a JSON value; list items inherit their parent's key"""
    if isinstance(obj, dict):
        pairs: List[Tuple[str, Any]] = []
        for child_key, child in obj.items():
            pairs.extend(flatten_leaves(child, str(child_key)))
        return pairs
    if isinstance(obj, list):
        pairs = []
        for item in obj:
            pairs.extend(flatten_leaves(item, key))
        return pairs
    if obj is None or key is None:
        return []
    return [(key, obj)]


def harvest(interaction: Interaction, dictionaries: 'ValueDictionaries',
            include_request: bool = True) -> 'ValueDictionaries':
    """Store response leaves and request values of a successful interaction"""
    if interaction.outcome is not OutcomeClass.SUCCESS:
        return dictionaries

    body = interaction.response_body.strip()
    if body:
        try:
            payload = json.loads(body)
        except ValueError:
            logger.warning(f"#{interaction.sequence}: response body is not JSON, skipped harvesting")
        else:
            for key, value in flatten_leaves(payload):
                dictionaries.add_response(normalize_name(key), value)

    if include_request:
        for param_key, value in interaction.request.parameters.items():
            name = param_key.split(":", 1)[1] if ":" in param_key else param_key
            for key, leaf in flatten_leaves(value, name):
                dictionaries.add_request(normalize_name(key), leaf)
    return dictionaries


# ---------------------------------------------------------------------------
# Log
# ---------------------------------------------------------------------------

class InteractionLog:
    """Append-only JSON Lines interaction log"""

    def __init__(self, path: str):
        self.path = path
        self._file = open(path, 'w', encoding='utf-8')

    def append(self, interaction: Interaction):
        self._file.write(json.dumps(interaction.to_dict(), ensure_ascii=False) + "\n")
        self._file.flush()

    def close(self):
        if not self._file.closed:
            self._file.close()

    def __enter__(self) -> 'InteractionLog':
        return self

    def __exit__(self, *exc):
        self.close()


def read_interactions(path: str) -> List[Interaction]:
    """Load an interaction log written by InteractionLog"""
    interactions = [Interaction.from_dict(entry) for entry in iter_jsonl(path)]
    for previous, current in zip(interactions, interactions[1:]):
        if current.sequence <= previous.sequence:
            raise ValueError(f"{path}: sequence numbers not strictly increasing at {current.sequence}")
    return interactions
