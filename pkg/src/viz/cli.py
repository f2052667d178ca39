"""Operator CLI: serve the gateway, drive it as a client, audit the logs.

Client subcommands talk HTTP to a running gateway on localhost; `serve`,
`verify-log` and `init` operate on the data directory.  --format machine
prints raw JSON for scripting.
"""

from __future__ import annotations

import json
import sys

import click
import httpx

from .billing import fmt_money
from .errors import RefuseStartError, VizError
from .marketplace import Marketplace, MarketplaceConfig, init_data_dir


class Ctx:
    def __init__(self, data_dir, port, token, fmt):
        self.data_dir = data_dir
        self.port = port
        self.token = token
        self.fmt = fmt

    def client(self) -> httpx.Client:
        headers = {"Authorization": f"Bearer {self.token}"} if self.token else {}
        return httpx.Client(
            base_url=f"http://127.0.0.1:{self.port}", headers=headers, timeout=30.0
        )

    def emit(self, doc, text_fn=None):
        if self.fmt == "machine":
            click.echo(json.dumps(doc, sort_keys=True, separators=(",", ":")))
        elif text_fn is not None:
            text_fn(doc)
        else:
            click.echo(json.dumps(doc, indent=2, sort_keys=True))


def _fail(resp: httpx.Response):
    try:
        doc = resp.json()
        detail = doc.get("detail", resp.text)
    except json.JSONDecodeError:
        detail = resp.text
    click.echo(f"error {resp.status_code}: {detail}", err=True)
    sys.exit(1)


def _call(ctx: Ctx, method: str, path: str, **kwargs) -> dict | list:
    with ctx.client() as client:
        resp = client.request(method, path, **kwargs)
    if resp.status_code >= 400:
        _fail(resp)
    return resp.json()


@click.group()
@click.option("--data-dir", envvar="VIZ_DATA_DIR", default="./viz-data",
              show_default=True, help="Marketplace data directory.")
@click.option("--port", default=8080, show_default=True, type=int)
@click.option("--token", default="", help="Bearer token for client commands.")
@click.option("--format", "fmt", type=click.Choice(["text", "machine"]),
              default="text", show_default=True)
@click.pass_context
def main(ctx, data_dir, port, token, fmt):
    """viz -- adapter marketplace gateway and client."""
    ctx.obj = Ctx(data_dir, port, token, fmt)


@main.command()
@click.option("--clock", type=click.Choice(["real", "manual"]), default="real")
@click.option("--clock-start", type=int, default=0,
              help="Epoch seconds for manual clock.")
@click.option("--seed", type=int, default=2024)
@click.pass_obj
def init(ctx: Ctx, clock, clock_start, seed):
    """Scaffold a data directory with default accounts and models."""
    config = init_data_dir(ctx.data_dir, clock_mode=clock, clock_start=clock_start,
                           seed=seed)
    ctx.emit(
        {"data_dir": ctx.data_dir,
         "accounts": [
             {"account_id": a.account_id, "role": a.role.value, "token": a.token}
             for a in config.accounts
         ],
         "models": [m.model_id for m in config.models]},
        lambda doc: click.echo(
            "initialized " + ctx.data_dir + "\n" + "\n".join(
                f"  {a['account_id']:12s} {a['role']:9s} token={a['token']}"
                for a in doc["accounts"]
            )
        ),
    )


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--static", "static_dir", type=click.Path(exists=True), default=None,
              help="Directory of console assets to serve at / (e.g. frontend/).")
@click.pass_obj
def serve(ctx: Ctx, host, static_dir):
    """Run the gateway (replays the event log at startup)."""
    from .gateway import serve as run_gateway

    try:
        config = MarketplaceConfig.load(ctx.data_dir)
        market = Marketplace(config)
    except RefuseStartError as exc:
        click.echo(f"refusing to start: {exc}", err=True)
        sys.exit(1)
    click.echo(f"serving on http://{host}:{ctx.port} (data: {ctx.data_dir})")
    run_gateway(market, host=host, port=ctx.port, static_dir=static_dir)


@main.command("verify-log")
@click.pass_obj
def verify_log(ctx: Ctx):
    """Verify the event and provenance chains; exit 1 on any corruption."""
    try:
        config = MarketplaceConfig.load(ctx.data_dir)
        market = Marketplace(config)
        ok = market.verify_logs()
    except (RefuseStartError, VizError) as exc:
        ctx.emit({"ok": False, "detail": str(exc)},
                 lambda d: click.echo(f"corrupt: {d['detail']}"))
        sys.exit(1)
    ctx.emit(
        {"ok": ok, "events": len(market.log.entries),
         "provenance_records": len(market.provenance.records)},
        lambda d: click.echo(
            f"ok: {d['events']} events, {d['provenance_records']} provenance records"
        ),
    )
    if not ok:
        sys.exit(1)


@main.command()
@click.argument("bundle_file", type=click.Path(exists=True))
@click.argument("manifest_file", type=click.Path(exists=True))
@click.option("--domain", required=True)
@click.option("--language", default="en", show_default=True)
@click.option("--perf", type=float, required=True, help="Declared score in [0,1].")
@click.option("--mode", required=True,
              type=click.Choice(["outright", "subscription", "metered",
                                 "subscription+metered"]))
@click.option("--outright-price", type=int, default=0, help="micro-USD")
@click.option("--monthly-fee", type=int, default=0, help="micro-USD")
@click.option("--per-1k-units", type=int, default=0, help="micro-USD")
@click.pass_obj
def publish(ctx: Ctx, bundle_file, manifest_file, domain, language, perf, mode,
            outright_price, monthly_fee, per_1k_units):
    """Publish an adapter bundle with its license manifest."""
    with open(manifest_file, encoding="utf-8") as f:
        manifest_doc = f.read()
    draft = {
        "category": {"domain": domain, "language": language, "perf_score": perf},
        "terms": {
            "mode": mode,
            "outright_price": outright_price,
            "monthly_fee": monthly_fee,
            "per_1k_units": per_1k_units,
        },
    }
    with open(bundle_file, "rb") as f:
        doc = _call(
            ctx, "POST", "/v1/adapters",
            files={
                "bundle": ("bundle", f, "application/octet-stream"),
                "manifest": ("manifest.json", manifest_doc, "application/json"),
            },
            data={"listing": json.dumps(draft)},
        )
    ctx.emit(doc, lambda d: click.echo(d["listing_id"]))


@main.command("list")
@click.option("--domain", default=None)
@click.option("--language", default=None)
@click.option("--min-perf", type=float, default=None)
@click.option("--mode", default=None)
@click.pass_obj
def list_cmd(ctx: Ctx, domain, language, min_perf, mode):
    """Search the catalog."""
    params = {
        k: v
        for k, v in [("domain", domain), ("language", language),
                     ("min_perf", min_perf), ("mode", mode)]
        if v is not None
    }
    doc = _call(ctx, "GET", "/v1/adapters", params=params)

    def text(rows):
        if not rows:
            click.echo("no listings")
            return
        for l in rows:
            t = l["terms"]
            click.echo(
                f"{l['listing_id']}  {l['adapter_id']:20s} "
                f"{l['category']['domain']:10s} perf={l['category']['perf_score']:.2f} "
                f"{t['mode']} out={fmt_money(t['outright_price'])} "
                f"fee={fmt_money(t['monthly_fee'])}/mo "
                f"metered={fmt_money(t['per_1k_units'])}/1k"
            )

    ctx.emit(doc, text)


@main.command()
@click.argument("listing_id")
@click.pass_obj
def subscribe(ctx: Ctx, listing_id):
    """Take a subscription license on a listing."""
    doc = _call(ctx, "POST", "/v1/licenses",
                json={"listing_id": listing_id, "kind": "subscription"})
    ctx.emit(doc, lambda d: click.echo(d["license_key"]))


@main.command()
@click.argument("listing_id")
@click.pass_obj
def buy(ctx: Ctx, listing_id):
    """Buy a listing outright."""
    doc = _call(ctx, "POST", "/v1/licenses",
                json={"listing_id": listing_id, "kind": "outright"})
    ctx.emit(doc, lambda d: click.echo(d["license_key"]))


@main.command()
@click.argument("model_id")
@click.option("--adapter", "adapters", multiple=True, help="Adapter id (repeatable).")
@click.option("--inputs-file", type=click.Path(exists=True), required=True,
              help="JSON file: list of input vectors.")
@click.pass_obj
def infer(ctx: Ctx, model_id, adapters, inputs_file):
    """Run inference through the gateway and print the receipt."""
    with open(inputs_file, encoding="utf-8") as f:
        inputs = json.load(f)
    doc = _call(
        ctx, "POST", "/v1/infer",
        json={"model_id": model_id, "adapter_ids": list(adapters), "inputs": inputs},
    )

    def text(d):
        click.echo(f"units: {d['units']}")
        click.echo("charges: " + ", ".join(fmt_money(c) for c in d["charges"]))
        click.echo(f"usage_seq: {d['usage_seq']}")
        for row in d["outputs"]:
            click.echo("  " + " ".join(f"{v:+.6f}" for v in row))

    ctx.emit(doc, text)


@main.command()
@click.option("--period", default=None, help="YYYY-MM")
@click.pass_obj
def usage(ctx: Ctx, period):
    """List this account's usage events."""
    params = {"period": period} if period else {}
    doc = _call(ctx, "GET", "/v1/usage", params=params)

    def text(rows):
        for e in rows:
            click.echo(
                f"seq={e['seq']} ts={e['timestamp']} units={e['units']} "
                f"adapters={','.join(e['adapter_ids']) or '-'} "
                f"charges={','.join(str(c) for c in e['charges']) or '-'}"
            )
        click.echo(f"{len(rows)} events")

    ctx.emit(doc, text)


@main.command()
@click.argument("period")
@click.pass_obj
def invoice(ctx: Ctx, period):
    """Close (idempotently) and print this account's invoice for a period."""
    doc = _call(ctx, "GET", f"/v1/invoices/{period}")

    def text(d):
        for l in d["lines"]:
            click.echo(
                f"{l['listing_id']}: units={l['units']} "
                f"metered={fmt_money(l['metered_charge'])} "
                f"fees={fmt_money(l['subscription_fee'])} "
                f"outright={fmt_money(l['outright_purchases'])} "
                f"total={fmt_money(l['line_total'])}"
            )
        click.echo(f"total {fmt_money(d['total'])}")

    ctx.emit(doc, text)


@main.command()
@click.argument("period")
@click.pass_obj
def payouts(ctx: Ctx, period):
    """Print this provider's payout statement for a period."""
    doc = _call(ctx, "GET", f"/v1/payouts/{period}")

    def text(d):
        for l in d["lines"]:
            click.echo(
                f"{l['listing_id']}: gross={fmt_money(l['gross'])} "
                f"cut={fmt_money(l['platform_cut'])} net={fmt_money(l['net'])}"
            )
        click.echo(f"total net {fmt_money(d['total_net'])} "
                   f"(share {d['revenue_share']})")

    ctx.emit(doc, text)


if __name__ == "__main__":
    main()
