"""Scripted end-to-end run against a live gateway.

Publish -> subscribe -> infer three vectors -> advance past the month ->
invoice and payout, all over HTTP, with the expected numbers computed by hand:
3 units at 5000 micro-USD per 1k is a 15 micro-USD charge; the 30/100 platform
share floors to 4, leaving the provider 11.
"""

from __future__ import annotations

import json
import sys
import tempfile
import threading
import time

import httpx
import numpy as np
import uvicorn

from viz.billing import period_bounds
from viz.bundles import build_adapter_bundle
from viz.compliance import DataSource, LicenseManifest
from viz.gateway import create_app
from viz.lora import LoraAdapter
from viz.marketplace import Marketplace, MarketplaceConfig, init_data_dir

START = 1772323200  # 2026-03-01 UTC
PERIOD = "2026-03"


def start_gateway(market, port=8741):
    config = uvicorn.Config(create_app(market), host="127.0.0.1", port=port,
                            log_level="error")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    while not server.started:
        time.sleep(0.02)
    return server, thread


def main():
    data_dir = tempfile.mkdtemp(prefix="viz-e2e-")
    init_data_dir(data_dir, clock_mode="manual", clock_start=START)
    market = Marketplace(MarketplaceConfig.load(data_dir))
    server, thread = start_gateway(market)
    base = f"http://127.0.0.1:{server.config.port}"

    def client(token):
        return httpx.Client(base_url=base,
                            headers={"Authorization": f"Bearer {token}"})

    model = market.models["base-8x4"]
    rng = np.random.default_rng(4)
    adapter = LoraAdapter(
        adapter_id="adp-demo", target_layer=0, rank=2, alpha=4.0,
        down=rng.normal(size=(2, model.layer_dims[0])) * 0.1,
        up=rng.normal(size=(model.layer_dims[1], 2)) * 0.1,
    )
    bundle = build_adapter_bundle(adapter, "base-8x4", block_size=16,
                                  use_dq=True, chunk_size=8)
    manifest = LicenseManifest(
        sources=(DataSource("https://corpus.example/demo", "CC0-1.0", "0" * 64),),
        data_usage_disclosure="public-domain demo corpus",
    )

    with client("tok-alice-2024") as alice, client("tok-carol-2024") as carol, \
            client("tok-admin-2024") as admin:
        r = alice.post(
            "/v1/adapters",
            files={
                "bundle": ("bundle", bundle, "application/octet-stream"),
                "manifest": ("manifest.json", json.dumps(manifest.to_doc()),
                             "application/json"),
            },
            data={"listing": json.dumps({
                "category": {"domain": "demo", "language": "en",
                             "perf_score": 0.9},
                "terms": {"mode": "metered", "outright_price": 0,
                          "monthly_fee": 0, "per_1k_units": 5000},
            })},
        )
        r.raise_for_status()
        listing_id = r.json()["listing_id"]
        print(f"published: {listing_id}")

        r = carol.post("/v1/licenses",
                       json={"listing_id": listing_id, "kind": "subscription"})
        r.raise_for_status()
        print(f"licensed:  {r.json()['license_key']}")

        x = [0.1] * model.layer_dims[0]
        r = carol.post("/v1/infer", json={"model_id": "base-8x4",
                                          "adapter_ids": ["adp-demo"],
                                          "inputs": [x, x, x]})
        r.raise_for_status()
        receipt = r.json()
        print(f"inferred:  units={receipt['units']} charges={receipt['charges']} "
              f"seq={receipt['usage_seq']}")
        assert receipt["units"] == 3, receipt
        assert receipt["charges"] == [15], receipt  # rhe(3 * 5000 / 1000)

        seconds = period_bounds(PERIOD)[1] - market.now() + 1
        admin.post("/v1/admin/advance-clock", json={"seconds": seconds}) \
             .raise_for_status()

        invoice = carol.get(f"/v1/invoices/{PERIOD}").json()
        print(f"invoice:   total={invoice['total']}")
        assert invoice["total"] == 15, invoice

        payout = alice.get(f"/v1/payouts/{PERIOD}").json()
        line = payout["lines"][0]
        print(f"payout:    gross={line['gross']} cut={line['platform_cut']} "
              f"net={line['net']}")
        assert (line["gross"], line["platform_cut"], line["net"]) == (15, 4, 11)

    server.should_exit = True
    thread.join(timeout=5)
    print("e2e scenario complete: hand-computed charges, invoice and payout match")
    return 0


if __name__ == "__main__":
    sys.exit(main())
