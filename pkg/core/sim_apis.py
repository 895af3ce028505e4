"""
Simulated APIs - Deterministic stateful REST APIs with undocumented ordering constraints
Usable in-process behind the Backend interface or over localhost HTTP
"""

import re
import json
import uuid
import logging
import threading
from abc import ABC, abstractmethod
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Callable, Dict, List, Optional, Tuple
from urllib.parse import parse_qs, urlsplit

import numpy as np
import yaml

from config.settings import SIM_KINDS
from .interaction import Backend, BackendResponse, ConcreteRequest

logger = logging.getLogger(__name__)

_INTEGER = re.compile(r"^-?\d+$")
INT64_MAX = 2 ** 63 - 1

QueryArgs = Dict[str, List[str]]
Handler = Callable[[QueryArgs, Any], BackendResponse]


class _BadRequest(ValueError):
    pass


def _json_response(status: int, payload: Any) -> BackendResponse:
    return BackendResponse(
        status=status,
        headers={"Content-Type": "application/json"},
        body=json.dumps(payload),
    )


def _int_arg(query: QueryArgs, name: str, required: bool = True, default: Optional[int] = None) -> Optional[int]:
    values = query.get(name)
    if not values:
        if required:
            raise _BadRequest(f"missing required parameter '{name}'")
        return default
    raw = values[-1]
    if not _INTEGER.match(raw):
        raise _BadRequest(f"parameter '{name}' must be an integer")
    return int(raw)


def _str_arg(query: QueryArgs, name: str) -> str:
    values = query.get(name)
    if values is None:
        raise _BadRequest(f"missing required parameter '{name}'")
    return values[-1]


class SimApi(ABC):
    """Route table plus state; handle() is a pure function of (seed, request sequence)"""

    title = "Simulated API"

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.routes: Dict[str, Dict[str, Handler]] = {}
        self._register_routes()
        self.reset()

    @abstractmethod
    def _register_routes(self):
        pass

    @abstractmethod
    def reset(self):
        """Return to the freshly constructed state"""

    @abstractmethod
    def openapi(self) -> Dict[str, Any]:
        """OAS 3.0 document that leaves out the ordering constraints"""

    def handle(self, method: str, target: str, body: Any = None) -> BackendResponse:
        """Answer one request; unknown paths give 404, known paths with another method 405"""
        parts = urlsplit(target)
        path_routes = self.routes.get(parts.path)
        if path_routes is None:
            return _json_response(404, {"message": f"no route for {parts.path}"})
        handler = path_routes.get(method.upper())
        if handler is None:
            response = _json_response(405, {"message": f"method {method.upper()} not allowed"})
            response.headers["Allow"] = ", ".join(sorted(path_routes))
            return response
        query = parse_qs(parts.query, keep_blank_values=True)
        try:
            return handler(query, body)
        except _BadRequest as e:
            return _json_response(400, {"message": str(e)})

    def openapi_yaml(self) -> str:
        return yaml.safe_dump(self.openapi(), sort_keys=False, allow_unicode=True)

    def _document(self, paths: Dict[str, Any]) -> Dict[str, Any]:
        return {
            "openapi": "3.0.3",
            "info": {"title": self.title, "version": "1.0.0"},
            "servers": [{"url": "http://localhost:8080"}],
            "paths": paths,
        }


class SimEComm(SimApi):
    """Product search, cart and checkout; checkout needs a non-empty cart"""

    title = "Simple eComm"
    CATALOG: Tuple[Tuple[int, str, float], ...] = (
        (5817, "Iliad", 9.5),
        (7342, "Odyssey", 11.0),
        (2291, "Aeneid", 8.25),
        (9064, "Metamorphoses", 12.4),
        (6610, "Theogony", 7.8),
    )

    def _register_routes(self):
        self.routes = {
            "/products/search": {"GET": self._search},
            "/addProductToCart": {"POST": self._add_to_cart},
            "/checkout": {"POST": self._checkout},
        }

    def reset(self):
        self.cart: List[Tuple[int, int]] = []
        self.purchases = 0

    def _product(self, product_id: int) -> Optional[Tuple[int, str, float]]:
        for product in self.CATALOG:
            if product[0] == product_id:
                return product
        return None

    def _search(self, query: QueryArgs, body: Any) -> BackendResponse:
        keyword = _str_arg(query, "keyword").lower()
        results = [
            {"productId": pid, "name": name, "price": price}
            for pid, name, price in self.CATALOG if keyword in name.lower()
        ]
        return _json_response(200, results)

    def _add_to_cart(self, query: QueryArgs, body: Any) -> BackendResponse:
        product_id = _int_arg(query, "productId")
        quantity = _int_arg(query, "quantity", required=False, default=1)
        if not 1 <= quantity <= 100:
            raise _BadRequest("quantity must be between 1 and 100")
        if self._product(product_id) is None:
            return _json_response(404, {"message": f"product {product_id} not found"})
        self.cart.append((product_id, quantity))
        return _json_response(200, {"productId": product_id, "quantity": quantity, "cartSize": len(self.cart)})

    def _checkout(self, query: QueryArgs, body: Any) -> BackendResponse:
        if not self.cart:
            return _json_response(422, {"message": "cannot checkout an empty cart"})
        total = sum(self._product(pid)[2] * qty for pid, qty in self.cart)
        items = sum(qty for _, qty in self.cart)
        self.cart = []
        self.purchases += 1
        return _json_response(200, {"orderId": self.purchases, "items": items, "total": round(total, 2)})

    def openapi(self) -> Dict[str, Any]:
        product = {
            "type": "object",
            "properties": {
                "productId": {"type": "integer", "format": "int64"},
                "name": {"type": "string"},
                "price": {"type": "number"},
            },
        }
        return self._document({
            "/products/search": {
                "get": {
                    "operationId": "productSearch",
                    "description": "Search products whose name contains the keyword",
                    "parameters": [{
                        "name": "keyword", "in": "query", "required": True,
                        "description": "Part of the product name",
                        "example": "odyssey",
                        "schema": {"type": "string"},
                    }],
                    "responses": {"200": {
                        "description": "Matching products",
                        "content": {"application/json": {"schema": {"type": "array", "items": product}}},
                    }},
                },
            },
            "/addProductToCart": {
                "post": {
                    "operationId": "addProductToCart",
                    "description": "Add a product to the shopping cart",
                    "parameters": [
                        {"name": "productId", "in": "query", "required": True,
                         "schema": {"type": "integer", "format": "int64"}},
                        {"name": "quantity", "in": "query", "required": False,
                         "schema": {"type": "integer", "minimum": 1, "maximum": 100, "default": 1}},
                    ],
                    "responses": {"200": {"description": "Product added"}, "400": {"description": "Invalid input"}},
                },
            },
            "/checkout": {
                "post": {
                    "operationId": "checkout",
                    "description": "Finalize the purchase of the cart",
                    "responses": {"200": {"description": "Order placed"}},
                },
            },
        })


class SimChain(SimApi):
    """Stages that must be created in order; each stage needs an id issued by the previous one"""

    title = "Chained Resources"

    def __init__(self, length: int = 4, seed: int = 0):
        if length < 1:
            raise ValueError("SimChain needs at least one stage")
        self.length = length
        super().__init__(seed)

    def _register_routes(self):
        self.routes = {f"/stage{k}": {"POST": self._creator(k)} for k in range(self.length)}

    def reset(self):
        self.rng = np.random.default_rng(self.seed)
        self.issued: List[set] = [set() for _ in range(self.length)]

    def _creator(self, stage: int) -> Handler:
        def create(query: QueryArgs, body: Any) -> BackendResponse:
            if stage > 0:
                parent_id = _int_arg(query, f"stage{stage - 1}Id")
                if parent_id not in self.issued[stage - 1]:
                    return _json_response(404, {"message": f"stage{stage - 1} resource {parent_id} not found"})
            new_id = int(self.rng.integers(1, INT64_MAX, dtype=np.int64))
            self.issued[stage].add(new_id)
            return _json_response(201, {f"stage{stage}Id": new_id})
        return create

    def openapi(self) -> Dict[str, Any]:
        paths = {}
        for k in range(self.length):
            parameters = []
            if k > 0:
                parameters.append({
                    "name": f"stage{k - 1}Id", "in": "query", "required": True,
                    "schema": {"type": "integer", "format": "int64"},
                })
            paths[f"/stage{k}"] = {"post": {
                "operationId": f"createStage{k}",
                "description": f"Create a stage {k} resource",
                "parameters": parameters,
                "responses": {"201": {
                    "description": "Created",
                    "content": {"application/json": {"schema": {
                        "type": "object",
                        "properties": {f"stage{k}Id": {"type": "integer", "format": "int64"}},
                    }}},
                }},
            }}
        return self._document(paths)


class SimFlaky5xx(SimApi):
    """One computation that crashes above a hidden threshold"""

    title = "Flaky Compute"
    FAILURE_THRESHOLD = 900

    def _register_routes(self):
        self.routes = {"/compute": {"GET": self._compute}}

    def reset(self):
        self.rng = np.random.default_rng(self.seed)

    def _compute(self, query: QueryArgs, body: Any) -> BackendResponse:
        value = _int_arg(query, "value")
        if not 0 <= value <= 1000:
            raise _BadRequest("value must be between 0 and 1000")
        if value > self.FAILURE_THRESHOLD:
            request_id = uuid.UUID(bytes=self.rng.bytes(16), version=4)
            return _json_response(500, {
                "error": "Internal Server Error",
                "message": f"accumulator overflow at step {value * 7} (limit {self.FAILURE_THRESHOLD * 7})",
                "requestId": str(request_id),
            })
        return _json_response(200, {"value": value, "result": value * value})

    def openapi(self) -> Dict[str, Any]:
        return self._document({
            "/compute": {"get": {
                "operationId": "compute",
                "description": "Square a number",
                "parameters": [{
                    "name": "value", "in": "query", "required": True,
                    "schema": {"type": "integer", "minimum": 0, "maximum": 1000},
                }],
                "responses": {"200": {"description": "Result"}},
            }},
        })


def make_sim(kind: str, chain_length: int = 4, seed: int = 0) -> SimApi:
    """Construct a sim by its selector (ecomm, chain, flaky)"""
    if kind == "ecomm":
        return SimEComm(seed)
    if kind == "chain":
        return SimChain(chain_length, seed)
    if kind == "flaky":
        return SimFlaky5xx(seed)
    raise ValueError(f"Unknown sim '{kind}', expected one of {', '.join(SIM_KINDS)}")


def sim_openapi(kind: str, chain_length: int = 4) -> Dict[str, Any]:
    return make_sim(kind, chain_length).openapi()


class SimBackend(Backend):
    """In-process backend around a sim"""

    simulated = True

    def __init__(self, sim: SimApi):
        self.sim = sim

    def execute(self, request: ConcreteRequest) -> BackendResponse:
        return self.sim.handle(request.method, request.target, request.body)

    def reset(self):
        self.sim.reset()


# ---------------------------------------------------------------------------
# Localhost server
# ---------------------------------------------------------------------------

class _SimRequestHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def _serve(self):
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        try:
            body = json.loads(raw) if raw else None
        except ValueError:
            response = _json_response(400, {"message": "request body is not JSON"})
        else:
            with self.server.lock:
                response = self.server.sim.handle(self.command, self.path, body)

        payload = response.body.encode("utf-8")
        self.send_response(response.status)
        for name, value in response.headers.items():
            self.send_header(name, value)
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    do_GET = _serve
    do_POST = _serve
    do_PUT = _serve
    do_PATCH = _serve
    do_DELETE = _serve

    def log_message(self, format, *args):
        logger.debug("%s - %s", self.address_string(), format % args)


class SimServer:
    """A sim served over plain HTTP/1.1 from a background thread"""

    def __init__(self, sim: SimApi, host: str = "127.0.0.1", port: int = 0):
        self.sim = sim
        self.httpd = ThreadingHTTPServer((host, port), _SimRequestHandler)
        self.httpd.sim = sim
        self.httpd.lock = threading.Lock()
        self._thread: Optional[threading.Thread] = None

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> 'SimServer':
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._thread.start()
        logger.info(f"Serving '{self.sim.title}' at {self.url}")
        return self

    def serve_forever(self):
        logger.info(f"Serving '{self.sim.title}' at {self.url}")
        self.httpd.serve_forever()

    def shutdown(self):
        if self._thread is not None:
            self.httpd.shutdown()
            self._thread.join()
            self._thread = None
        self.httpd.server_close()

    def __enter__(self) -> 'SimServer':
        return self

    def __exit__(self, *exc):
        self.shutdown()


def start_sim_server(sim: SimApi, host: str = "127.0.0.1", port: int = 0) -> SimServer:
    """Start serving a sim in the background; port 0 picks a free port"""
    return SimServer(sim, host, port).start()
