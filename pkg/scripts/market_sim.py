"""Randomized multi-day marketplace simulation with exact settlement checks.

Builds a manual-clock deployment, lets providers publish priced adapters,
drives consumers through licensing and metered inference for a month of
simulated days, then closes the period and checks the books:

  sum(provider nets) + sum(platform cuts) == sum(consumer invoice totals)

as exact integers, and a replay of the event log must reproduce every invoice
and payout statement byte for byte.

Run directly for a one-off audit:  python scripts/market_sim.py --seed 7
"""

from __future__ import annotations

import argparse
import json
import random

import numpy as np

from viz.billing import LicenseKind, period_bounds
from viz.bundles import build_adapter_bundle
from viz.compliance import DataSource, LicenseManifest
from viz.errors import PaymentRequiredError
from viz.lora import LoraAdapter
from viz.marketplace import (
    Account,
    Marketplace,
    MarketplaceConfig,
    ModelSpec,
    Role,
)
from viz.registry import Category, PricingMode, PricingTerms

SIM_START = 1772323200  # 2026-03-01 00:00:00 UTC
SIM_PERIOD = "2026-03"
DAY = 86400

DOMAINS = ["legal", "medical", "finance", "code", "poetry"]
LANGUAGES = ["en", "de", "fr"]


def canonical(doc: dict) -> bytes:
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()


def sim_config(data_dir: str, n_providers: int, n_consumers: int,
               seed: int) -> MarketplaceConfig:
    accounts = [Account("admin", Role.ADMIN, "Operator", "tok-admin")]
    accounts += [
        Account(f"prov-{i:02d}", Role.PROVIDER, f"Provider {i}", f"tok-prov-{i:02d}")
        for i in range(n_providers)
    ]
    accounts += [
        Account(f"con-{i:02d}", Role.CONSUMER, f"Consumer {i}", f"tok-con-{i:02d}")
        for i in range(n_consumers)
    ]
    config = MarketplaceConfig(
        data_dir=data_dir,
        accounts=accounts,
        models=[
            ModelSpec("base-a", seed, (8, 16, 4)),
            ModelSpec("base-b", seed + 1, (6, 12, 12, 3)),
        ],
        clock_mode="manual",
        clock_start=SIM_START,
    )
    config.save()
    return config


def random_terms(rng: random.Random) -> PricingTerms:
    roll = rng.random()
    if roll < 0.15:
        return PricingTerms(mode=PricingMode.OUTRIGHT,
                            outright_price=rng.randrange(1, 20) * 500_000)
    if roll < 0.35:
        return PricingTerms(mode=PricingMode.SUBSCRIPTION,
                            monthly_fee=rng.randrange(1, 40) * 25_000)
    if roll < 0.70:
        return PricingTerms(mode=PricingMode.METERED,
                            per_1k_units=rng.randrange(1, 50) * 1_000)
    return PricingTerms(
        mode=PricingMode.SUBSCRIPTION_METERED,
        monthly_fee=rng.randrange(1, 20) * 25_000,
        per_1k_units=rng.randrange(1, 30) * 1_000,
    )


def publish_catalog(market: Marketplace, rng: random.Random,
                    providers: list[str]) -> list:
    np_rng = np.random.default_rng(rng.randrange(2**32))
    listings = []
    counter = 0
    for provider in providers:
        for _ in range(rng.randrange(1, 4)):
            model_id = rng.choice(list(market.models))
            model = market.models[model_id]
            layer = rng.randrange(model.num_layers)
            d_in = model.layer_dims[layer]
            d_out = model.layer_dims[layer + 1]
            rank = rng.randrange(1, min(d_in, d_out) + 1)
            adapter = LoraAdapter(
                adapter_id=f"adp-{counter:04d}",
                target_layer=layer,
                rank=rank,
                alpha=float(rng.randrange(1, 4) * rank),
                down=np_rng.normal(size=(rank, d_in)) * 0.1,
                up=np_rng.normal(size=(d_out, rank)) * 0.1,
            )
            counter += 1
            bundle = build_adapter_bundle(adapter, model_id, block_size=16,
                                          use_dq=True, chunk_size=8)
            manifest = LicenseManifest(
                sources=(
                    DataSource(
                        uri=f"https://corpus.example/{adapter.adapter_id}",
                        license_id=rng.choice(["CC0-1.0", "MIT", "Apache-2.0"]),
                        content_hash=f"{counter:064d}"[:64],
                    ),
                ),
                data_usage_disclosure="synthetic corpus",
            )
            listing = market.publish(
                provider_id=provider,
                bundle_bytes=bundle,
                manifest=manifest,
                category=Category(domain=rng.choice(DOMAINS),
                                  language=rng.choice(LANGUAGES),
                                  perf_score=round(rng.random(), 2)),
                terms=random_terms(rng),
            )
            listings.append(listing)
    return listings


def ensure_license(market: Marketplace, rng: random.Random, licensed: set,
                   account: str, listing) -> bool:
    key = (account, listing.listing_id)
    if key in licensed:
        return True
    kind = (LicenseKind.OUTRIGHT if listing.terms.mode == PricingMode.OUTRIGHT
            else LicenseKind.SUBSCRIPTION)
    market.grant_license(account, listing.listing_id, kind)
    licensed.add(key)
    return True


def run_simulation(
    data_dir: str,
    seed: int = 7,
    n_providers: int = 5,
    n_consumers: int = 20,
    min_requests: int = 1000,
    days: int = 30,
) -> dict:
    rng = random.Random(seed)
    config = sim_config(data_dir, n_providers, n_consumers, seed)
    market = Marketplace(config)
    providers = [a.account_id for a in config.accounts if a.role == Role.PROVIDER]
    consumers = [a.account_id for a in config.accounts if a.role == Role.CONSUMER]

    listings = publish_catalog(market, rng, providers)
    by_model: dict[str, list] = {}
    for l in listings:
        by_model.setdefault(l.base_model_id, []).append(l)

    licensed: set[tuple[str, str]] = set()
    requests = refused = 0
    per_day = max(1, min_requests // days + 1)
    for _ in range(days):
        for _ in range(per_day):
            account = rng.choice(consumers)
            model_id = rng.choice(list(by_model))
            stack = [l for l in by_model[model_id] if rng.random() < 0.4]
            rng.shuffle(stack)
            stack = stack[:3]
            for l in stack:
                if rng.random() < 0.9:
                    ensure_license(market, rng, licensed, account, l)
            units = rng.randrange(1, 6)
            x = np.linspace(-1.0, 1.0, market.models[model_id].input_dim)
            inputs = [(x * rng.random()).tolist() for _ in range(units)]
            try:
                market.infer(account, model_id, [l.adapter_id for l in stack],
                             inputs)
                requests += 1
            except PaymentRequiredError:
                refused += 1
        market.clock.advance(DAY)

    # top up on the last day of the month until the request quota is met
    while requests < min_requests:
        account = rng.choice(consumers)
        model_id = rng.choice(list(by_model))
        stack = by_model[model_id][:2]
        for l in stack:
            ensure_license(market, rng, licensed, account, l)
        x = np.linspace(-1.0, 1.0, market.models[model_id].input_dim)
        market.infer(account, model_id, [l.adapter_id for l in stack], [x.tolist()])
        requests += 1

    # let March elapse fully, then settle
    market.clock.advance(max(0, period_bounds(SIM_PERIOD)[1] - market.now()) + 1)

    all_accounts = [a.account_id for a in config.accounts]
    invoices = {a: market.close_invoice(a, SIM_PERIOD) for a in all_accounts}
    payouts = {p: market.payout(p, SIM_PERIOD) for p in providers}

    total_invoiced = sum(i.total for i in invoices.values())
    total_net = sum(p.total_net for p in payouts.values())
    total_cut = sum(l.platform_cut for p in payouts.values() for l in p.lines)

    # full replay from the persisted event log
    reborn = Marketplace(MarketplaceConfig.load(data_dir))
    replay_invoices_equal = all(
        canonical(invoices[a].to_doc())
        == canonical(reborn.close_invoice(a, SIM_PERIOD).to_doc())
        for a in all_accounts
    )
    replay_payouts_equal = all(
        canonical(payouts[p].to_doc())
        == canonical(reborn.payout(p, SIM_PERIOD).to_doc())
        for p in providers
    )

    return {
        "providers": len(providers),
        "consumers": len(consumers),
        "listings": len(listings),
        "requests": requests,
        "refused": refused,
        "events": len(market.log.entries),
        "total_invoiced": total_invoiced,
        "total_net": total_net,
        "total_cut": total_cut,
        "conserved": total_net + total_cut == total_invoiced,
        "replay_invoices_equal": replay_invoices_equal,
        "replay_payouts_equal": replay_payouts_equal,
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--data-dir", default=None,
                        help="defaults to a temp directory")
    parser.add_argument("--requests", type=int, default=1000)
    args = parser.parse_args()

    data_dir = args.data_dir
    if data_dir is None:
        import tempfile

        data_dir = tempfile.mkdtemp(prefix="viz-sim-")
    summary = run_simulation(data_dir, seed=args.seed, min_requests=args.requests)
    print(json.dumps(summary, indent=2))
    if not (summary["conserved"] and summary["replay_invoices_equal"]
            and summary["replay_payouts_equal"]):
        raise SystemExit(1)
    print(f"books balance: {summary['total_net']} + {summary['total_cut']} "
          f"== {summary['total_invoiced']} micro-USD")


if __name__ == "__main__":
    main()
