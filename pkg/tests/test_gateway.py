import json

import pytest
from fastapi.testclient import TestClient

from viz.billing import period_bounds
from viz.gateway import create_app

from test_marketplace import MARCH, bad_manifest, good_manifest, make_bundle

TOKENS = {
    "admin": "tok-admin-2024",
    "alice": "tok-alice-2024",
    "bob": "tok-bob-2024",
    "carol": "tok-carol-2024",
    "dave": "tok-dave-2024",
}


@pytest.fixture
def client(market):
    return TestClient(create_app(market), raise_server_exceptions=False)


def auth(who):
    return {"Authorization": f"Bearer {TOKENS[who]}"}


def draft(mode="metered", per_1k=5000, perf=0.9, domain="legal", **extra):
    terms = {"mode": mode, "outright_price": 0, "monthly_fee": 0,
             "per_1k_units": per_1k, **extra}
    return {"category": {"domain": domain, "language": "en", "perf_score": perf},
            "terms": terms}


def publish_http(client, market, adapter_id="adp-x", who="alice", d=None, seed=0,
                 manifest=None):
    files = {
        "bundle": ("bundle", make_bundle(market, adapter_id=adapter_id, seed=seed),
                   "application/octet-stream"),
        "manifest": ("manifest.json",
                     json.dumps((manifest or good_manifest()).to_doc()),
                     "application/json"),
    }
    return client.post("/v1/adapters", headers=auth(who), files=files,
                       data={"listing": json.dumps(d or draft())})


class TestAuth:
    def test_missing_token_rejected(self, client):
        assert client.get("/v1/adapters").status_code == 403

    def test_unknown_token_rejected(self, client):
        r = client.get("/v1/adapters", headers={"Authorization": "Bearer nope"})
        assert r.status_code == 403

    def test_healthz_is_open(self, client):
        r = client.get("/v1/healthz")
        assert r.status_code == 200 and r.json()["status"] == "ok"


class TestPublishEndpoint:
    def test_happy_path_returns_listing_id(self, client, market):
        r = publish_http(client, market)
        assert r.status_code == 200
        assert r.json()["listing_id"].startswith("lst-")

    def test_refused_manifest_carries_violation_rows(self, client, market):
        r = publish_http(client, market, manifest=bad_manifest())
        assert r.status_code == 422
        assert r.json()["violations"] == [
            {"source_index": 1, "license_id": "proprietary"}
        ]

    def test_corrupt_bundle_is_400(self, client, market):
        data = bytearray(make_bundle(market))
        data[-1] ^= 0x01
        files = {
            "bundle": ("bundle", bytes(data), "application/octet-stream"),
            "manifest": ("m.json", json.dumps(good_manifest().to_doc()),
                         "application/json"),
        }
        r = client.post("/v1/adapters", headers=auth("alice"), files=files,
                        data={"listing": json.dumps(draft())})
        assert r.status_code == 400

    def test_consumer_cannot_publish(self, client, market):
        r = publish_http(client, market, who="carol")
        assert r.status_code == 403


class TestCatalogEndpoints:
    def test_search_filters(self, client, market):
        publish_http(client, market, adapter_id="adp-1",
                     d=draft(domain="legal", perf=0.95))
        publish_http(client, market, adapter_id="adp-2",
                     d=draft(domain="medical", perf=0.5), seed=1)
        r = client.get("/v1/adapters", headers=auth("carol"),
                       params={"domain": "legal"})
        rows = r.json()
        assert [x["category"]["domain"] for x in rows] == ["legal"]
        r = client.get("/v1/adapters", headers=auth("carol"),
                       params={"min_perf": 0.9})
        assert len(r.json()) == 1

    def test_price_update_and_suggestion(self, client, market):
        lid = publish_http(client, market).json()["listing_id"]
        r = client.put(f"/v1/adapters/{lid}/price", headers=auth("alice"),
                       json={"mode": "metered", "per_1k_units": 8000})
        assert r.status_code == 200
        assert r.json()["terms"]["per_1k_units"] == 8000
        r = client.get(f"/v1/adapters/{lid}/price-suggestion", headers=auth("alice"))
        assert r.json()["suggested_per_1k_units"] == 8000  # no demand yet

    def test_price_update_wrong_provider_403(self, client, market):
        lid = publish_http(client, market).json()["listing_id"]
        r = client.put(f"/v1/adapters/{lid}/price", headers=auth("bob"),
                       json={"mode": "metered", "per_1k_units": 1})
        assert r.status_code == 403

    def test_price_suggestion_not_applicable_409(self, client, market):
        lid = publish_http(
            client, market,
            d=draft(mode="outright", per_1k=0, outright_price=1_000_000),
        ).json()["listing_id"]
        r = client.get(f"/v1/adapters/{lid}/price-suggestion", headers=auth("alice"))
        assert r.status_code == 409


class TestConsumerFlow:
    def test_license_infer_usage_invoice_payout(self, client, market):
        lid = publish_http(client, market).json()["listing_id"]
        r = client.post("/v1/licenses", headers=auth("carol"),
                        json={"listing_id": lid, "kind": "subscription"})
        assert r.status_code == 200
        assert r.json()["license_key"].startswith("lic-")

        x = [0.1] * 8
        r = client.post("/v1/infer", headers=auth("carol"),
                        json={"model_id": "base-8x4", "adapter_ids": ["adp-x"],
                              "inputs": [x, x, x]})
        assert r.status_code == 200
        body = r.json()
        assert body["units"] == 3
        assert body["charges"] == [15]  # 3 * 5000 / 1000
        assert body["usage_seq"] == 0
        assert len(body["outputs"]) == 3

        r = client.get("/v1/usage", headers=auth("carol"),
                       params={"period": MARCH})
        assert len(r.json()) == 1

        # close out the month through the admin clock
        seconds = period_bounds(MARCH)[1] - market.now() + 1
        r = client.post("/v1/admin/advance-clock", headers=auth("admin"),
                        json={"seconds": seconds})
        assert r.status_code == 200

        r = client.get(f"/v1/invoices/{MARCH}", headers=auth("carol"))
        assert r.status_code == 200
        assert r.json()["total"] == 15

        r = client.get(f"/v1/payouts/{MARCH}", headers=auth("alice"))
        assert r.status_code == 200
        line = r.json()["lines"][0]
        assert line["gross"] == 15 and line["platform_cut"] == 4
        assert line["net"] == 11

        r = client.get("/v1/leaderboard", headers=auth("carol"),
                       params={"period": MARCH, "n": 5})
        assert r.json() == [{"listing_id": lid, "units": 3}]

    def test_unlicensed_infer_402_no_event(self, client, market):
        publish_http(client, market)
        r = client.post("/v1/infer", headers=auth("carol"),
                        json={"model_id": "base-8x4", "adapter_ids": ["adp-x"],
                              "inputs": [[0.1] * 8]})
        assert r.status_code == 402
        assert market.usage_events == []

    def test_base_only_infer_has_zero_charges(self, client, market):
        r = client.post("/v1/infer", headers=auth("carol"),
                        json={"model_id": "base-8x4", "adapter_ids": [],
                              "inputs": [[0.1] * 8]})
        assert r.status_code == 200
        assert r.json()["charges"] == []
        assert len(market.usage_events) == 1

    def test_invoice_too_early_409(self, client, market):
        r = client.get(f"/v1/invoices/{MARCH}", headers=auth("carol"))
        assert r.status_code == 409

    def test_bad_input_shape_400(self, client, market):
        r = client.post("/v1/infer", headers=auth("carol"),
                        json={"model_id": "base-8x4", "adapter_ids": [],
                              "inputs": [[0.1] * 3]})
        assert r.status_code == 400

    def test_unknown_model_404(self, client, market):
        r = client.post("/v1/infer", headers=auth("carol"),
                        json={"model_id": "ghost", "adapter_ids": [],
                              "inputs": [[0.1] * 8]})
        assert r.status_code == 404


class TestMalformedRequests:
    def test_bad_mode_token_is_400(self, client, market):
        r = client.get("/v1/adapters", headers=auth("carol"),
                       params={"mode": "subscription metered"})
        assert r.status_code == 400

    def test_bad_license_kind_is_400(self, client, market):
        lid = publish_http(client, market).json()["listing_id"]
        r = client.post("/v1/licenses", headers=auth("carol"),
                        json={"listing_id": lid, "kind": "rent-to-own"})
        assert r.status_code == 400

    def test_missing_body_field_is_400(self, client, market):
        r = client.post("/v1/infer", headers=auth("carol"),
                        json={"adapter_ids": []})
        assert r.status_code == 400

    def test_ragged_inputs_are_400(self, client, market):
        r = client.post("/v1/infer", headers=auth("carol"),
                        json={"model_id": "base-8x4", "adapter_ids": [],
                              "inputs": [[0.1] * 8, "bogus"]})
        assert r.status_code == 400

    def test_bad_period_is_400(self, client, market):
        r = client.get("/v1/invoices/March-2026", headers=auth("carol"))
        assert r.status_code == 400


class TestAdminEndpoints:
    def test_clock_advance_requires_admin(self, client, market):
        r = client.post("/v1/admin/advance-clock", headers=auth("carol"),
                        json={"seconds": 10})
        assert r.status_code == 403

    def test_time_endpoint(self, client, market):
        r = client.get("/v1/time", headers=auth("carol"))
        assert r.json()["mode"] == "manual"
        before = r.json()["now"]
        client.post("/v1/admin/advance-clock", headers=auth("admin"),
                    json={"seconds": 60})
        r = client.get("/v1/time", headers=auth("carol"))
        assert r.json()["now"] == before + 60
