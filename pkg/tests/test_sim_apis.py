"""
Simulated API tests
"""

import itertools
import json
import unittest

import requests

from core.interaction import ConcreteRequest, HttpBackend
from core.oas_model import parse_spec
from core.sim_apis import SimBackend, SimChain, SimEComm, SimFlaky5xx, make_sim, start_sim_server


def payload(response):
    return json.loads(response.body)


class TestSimEComm(unittest.TestCase):
    """Test the shopping sim"""

    def setUp(self):
        self.sim = SimEComm()

    def test_search(self):
        """Test keyword search is case-insensitive"""
        response = self.sim.handle("GET", "/products/search?keyword=ODYSSEY")
        self.assertEqual(response.status, 200)
        self.assertEqual(payload(response), [{"productId": 7342, "name": "Odyssey", "price": 11.0}])
        self.assertEqual(payload(self.sim.handle("GET", "/products/search?keyword=zzz")), [])
        self.assertEqual(self.sim.handle("GET", "/products/search").status, 400)

    def test_add_to_cart(self):
        """Test only catalog ids and quantities in range are accepted"""
        self.assertEqual(self.sim.handle("POST", "/addProductToCart?productId=42").status, 404)
        self.assertEqual(self.sim.handle("POST", "/addProductToCart?productId=5817&quantity=0").status, 400)
        self.assertEqual(self.sim.handle("POST", "/addProductToCart?productId=abc").status, 400)
        self.assertEqual(self.sim.handle("POST", "/addProductToCart").status, 400)
        response = self.sim.handle("POST", "/addProductToCart?productId=5817&quantity=2")
        self.assertEqual(response.status, 200)
        self.assertEqual(payload(response), {"productId": 5817, "quantity": 2, "cartSize": 1})

    def test_checkout_needs_cart(self):
        """Test checkout fails on an empty cart and empties a full one"""
        self.assertEqual(self.sim.handle("POST", "/checkout").status, 422)
        self.sim.handle("POST", "/addProductToCart?productId=2291&quantity=2")
        response = self.sim.handle("POST", "/checkout")
        self.assertEqual(response.status, 200)
        self.assertEqual(payload(response), {"orderId": 1, "items": 2, "total": 16.5})
        self.assertEqual(self.sim.handle("POST", "/checkout").status, 422)

    def test_reset(self):
        """Test reset empties the cart"""
        self.sim.handle("POST", "/addProductToCart?productId=2291")
        self.sim.reset()
        self.assertEqual(self.sim.handle("POST", "/checkout").status, 422)

    def test_every_short_request_sequence(self):
        """Test checkout succeeds exactly when an item was added since the last checkout or reset"""
        actions = {
            "add-iliad": ("/addProductToCart?productId=5817", 1, 9.5),
            "add-odyssey": ("/addProductToCart?productId=7342&quantity=2", 2, 11.0),
            "add-unknown": ("/addProductToCart?productId=42", 0, 0.0),
            "checkout": None,
            "reset": None,
        }
        for size in range(1, 6):
            for sequence in itertools.product(sorted(actions), repeat=size):
                sim = SimEComm()
                cart = []
                orders = 0
                for name in sequence:
                    if name == "reset":
                        sim.reset()
                        cart, orders = [], 0
                    elif name == "checkout":
                        response = sim.handle("POST", "/checkout")
                        if cart:
                            orders += 1
                            self.assertEqual(response.status, 200, sequence)
                            self.assertEqual(payload(response), {
                                "orderId": orders,
                                "items": sum(qty for qty, _ in cart),
                                "total": round(sum(qty * price for qty, price in cart), 2),
                            })
                            cart = []
                        else:
                            self.assertEqual(response.status, 422, sequence)
                    else:
                        target, quantity, price = actions[name]
                        response = sim.handle("POST", target)
                        if quantity:
                            cart.append((quantity, price))
                            self.assertEqual(response.status, 200, sequence)
                            self.assertEqual(payload(response)["cartSize"], len(cart))
                        else:
                            self.assertEqual(response.status, 404, sequence)

    def test_unknown_route_and_method(self):
        """Test 404 for unknown paths and 405 with Allow for wrong methods"""
        self.assertEqual(self.sim.handle("GET", "/nowhere").status, 404)
        response = self.sim.handle("GET", "/checkout")
        self.assertEqual(response.status, 405)
        self.assertEqual(response.headers["Allow"], "POST")

    def test_document_parses(self):
        """Test the published document omits the ordering constraint but parses"""
        api = parse_spec(self.sim.openapi_yaml(), "yaml")
        self.assertEqual([op.operation_id for op in api.operations],
                         ["productSearch", "addProductToCart", "checkout"])
        keyword = api.by_id("productSearch").parameter("query:keyword")
        self.assertEqual(keyword.schema.example_values, ("odyssey",))
        quantity = api.by_id("addProductToCart").parameter("query:quantity")
        self.assertEqual((quantity.schema.minimum, quantity.schema.maximum), (1, 100))


class TestSimChain(unittest.TestCase):
    """Test the chained resource sim"""

    def test_stages_need_issued_ids(self):
        """Test each stage accepts only ids issued by the previous one"""
        sim = SimChain(length=3, seed=5)
        first = payload(sim.handle("POST", "/stage0"))["stage0Id"]
        self.assertEqual(sim.handle("POST", f"/stage1?stage0Id={first + 1}").status, 404)
        self.assertEqual(sim.handle("POST", "/stage1").status, 400)
        response = sim.handle("POST", f"/stage1?stage0Id={first}")
        self.assertEqual(response.status, 201)
        second = payload(response)["stage1Id"]
        self.assertEqual(sim.handle("POST", f"/stage2?stage1Id={second}").status, 201)

    def test_ids_are_seeded(self):
        """Test the same seed issues the same ids, and reset forgets them"""
        a, b = SimChain(seed=9), SimChain(seed=9)
        first = payload(a.handle("POST", "/stage0"))
        self.assertEqual(first, payload(b.handle("POST", "/stage0")))
        self.assertGreater(first["stage0Id"], 1000)
        a.reset()
        self.assertEqual(a.handle("POST", f"/stage1?stage0Id={first['stage0Id']}").status, 404)
        self.assertEqual(payload(a.handle("POST", "/stage0")), first)

    def test_document(self):
        """Test one operation per stage with the parent id parameter"""
        api = parse_spec(SimChain(length=4).openapi_yaml(), "yaml")
        self.assertEqual(api.size, 4)
        self.assertEqual(api.operations[0].parameters, ())
        param = api.by_id("createStage3").parameter("query:stage2Id")
        self.assertTrue(param.required)
        self.assertEqual(param.normalized_name, "stage2id")

    def test_every_short_request_sequence(self):
        """Test stage k is created exactly when stage k-1 was created since the last reset"""
        reset = -1
        checked = 0
        for length in (1, 2, 3):
            alphabet = list(range(length)) + [reset]
            for size in range(1, 6):
                for sequence in itertools.product(alphabet, repeat=size):
                    sim = SimChain(length=length, seed=3)
                    created = set()
                    latest = {}
                    for step in sequence:
                        if step == reset:
                            sim.reset()
                            created.clear()
                            continue
                        if step == 0:
                            target = "/stage0"
                        else:
                            target = f"/stage{step}?stage{step - 1}Id={latest.get(step - 1, 7)}"
                        response = sim.handle("POST", target)
                        expected = step == 0 or step - 1 in created
                        self.assertEqual(response.status, 201 if expected else 404, f"{sequence} at {target}")
                        if expected:
                            created.add(step)
                            latest[step] = payload(response)[f"stage{step}Id"]
                    checked += 1
        self.assertEqual(checked, sum(n ** k for n in (2, 3, 4) for k in range(1, 6)))

    def test_needs_a_stage(self):
        """Test a chain without stages is refused"""
        with self.assertRaises(ValueError):
            SimChain(length=0)


class TestSimFlaky(unittest.TestCase):
    """Test the crashing sim"""

    def test_threshold(self):
        """Test values above the threshold crash with a varying request id"""
        sim = SimFlaky5xx()
        ok = sim.handle("GET", "/compute?value=900")
        self.assertEqual(ok.status, 200)
        self.assertEqual(payload(ok), {"value": 900, "result": 810000})
        first = payload(sim.handle("GET", "/compute?value=901"))
        second = payload(sim.handle("GET", "/compute?value=950"))
        self.assertEqual(first["message"], "accumulator overflow at step 6307 (limit 6300)")
        self.assertNotEqual(first["requestId"], second["requestId"])
        self.assertEqual(sim.handle("GET", "/compute?value=1001").status, 400)

    def test_make_sim(self):
        """Test sim selection by name"""
        self.assertIsInstance(make_sim("ecomm"), SimEComm)
        self.assertEqual(make_sim("chain", chain_length=2).length, 2)
        self.assertIsInstance(make_sim("flaky"), SimFlaky5xx)
        with self.assertRaises(ValueError):
            make_sim("petstore")


class TestSimTransport(unittest.TestCase):
    """Test the in-process backend and the localhost server"""

    def test_backend(self):
        """Test SimBackend answers concrete requests and resets its sim"""
        backend = SimBackend(SimEComm())
        request = ConcreteRequest(method="POST", path="/addProductToCart", query=[("productId", "6610")])
        self.assertEqual(backend.execute(request).status, 200)
        backend.reset()
        self.assertEqual(backend.execute(ConcreteRequest(method="POST", path="/checkout")).status, 422)
        self.assertTrue(backend.simulated)

    def test_served_over_http(self):
        """Test the sim behaves the same over HTTP"""
        with start_sim_server(SimEComm()) as server:
            backend = HttpBackend(server.url, timeout=5)
            try:
                backend.probe()
                request = ConcreteRequest(method="GET", path="/products/search", query=[("keyword", "iliad")])
                response = backend.execute(request)
                self.assertEqual(response.status, 200)
                self.assertEqual(json.loads(response.body)[0]["productId"], 5817)
                bad = requests.post(server.url + "/checkout", data="{not json",
                                    headers={"Content-Type": "application/json"}, timeout=5)
                self.assertEqual(bad.status_code, 400)
            finally:
                backend.close()


if __name__ == '__main__':
    unittest.main()
