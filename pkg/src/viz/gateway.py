"""HTTP gateway exposing the marketplace over the documented v1 endpoints.

Authentication is a static bearer token per account from the deployment
config.  Domain errors map onto HTTP statuses; refused publications carry
their violation rows so consoles can render them inline.
"""

from __future__ import annotations

import json

from fastapi import Depends, FastAPI, File, Form, Header, Query, Request, UploadFile
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .billing import LicenseKind
from .compliance import LicenseManifest
from .errors import (
    ConflictError,
    CorruptBundleError,
    CorruptTensorError,
    ForbiddenError,
    GoneError,
    InvalidManifestError,
    InvalidShapeError,
    NotApplicableError,
    NotFoundError,
    PaymentRequiredError,
    PublicationRefusedError,
    TooEarlyError,
    VizError,
)
from .marketplace import Marketplace
from .registry import Category, PricingTerms

_STATUS = {
    InvalidShapeError: 400,
    CorruptBundleError: 400,
    CorruptTensorError: 400,
    ForbiddenError: 403,
    NotFoundError: 404,
    PaymentRequiredError: 402,
    GoneError: 410,
    ConflictError: 409,
    TooEarlyError: 409,
    NotApplicableError: 409,
    InvalidManifestError: 422,
    PublicationRefusedError: 422,
}


def _error_response(exc: VizError) -> JSONResponse:
    status = _STATUS.get(type(exc), 500)
    body = {"error": type(exc).__name__, "detail": str(exc)}
    if isinstance(exc, PublicationRefusedError):
        body["violations"] = [
            {"source_index": i, "license_id": lic} for i, lic in exc.violations
        ]
    return JSONResponse(status_code=status, content=body)


def create_app(market: Marketplace) -> FastAPI:
    app = FastAPI(title="viz marketplace gateway")

    @app.exception_handler(VizError)
    async def viz_error_handler(request: Request, exc: VizError):
        return _error_response(exc)

    @app.exception_handler(ValueError)
    async def value_error_handler(request: Request, exc: ValueError):
        # bad enum tokens, malformed numbers, json decode failures
        return JSONResponse(status_code=400,
                            content={"error": "BadRequest", "detail": str(exc)})

    @app.exception_handler(KeyError)
    async def key_error_handler(request: Request, exc: KeyError):
        return JSONResponse(
            status_code=400,
            content={"error": "BadRequest", "detail": f"missing field {exc}"},
        )

    def authenticate(authorization: str = Header(default="")):
        if not authorization.startswith("Bearer "):
            raise ForbiddenError("missing bearer token")
        return market.account_by_token(authorization.removeprefix("Bearer "))

    @app.get("/v1/healthz")
    def healthz():
        return {
            "status": "ok",
            "listings": len(market.listings),
            "events": len(market.log.entries),
        }

    @app.post("/v1/adapters")
    async def publish(
        account=Depends(authenticate),
        bundle: UploadFile = File(...),
        manifest: UploadFile = File(...),
        listing: str = Form(...),
    ):
        bundle_bytes = await bundle.read()
        manifest_doc = json.loads(await manifest.read())
        draft = json.loads(listing)
        result = market.publish(
            provider_id=account.account_id,
            bundle_bytes=bundle_bytes,
            manifest=LicenseManifest.from_doc(manifest_doc),
            category=Category(
                domain=draft["category"]["domain"],
                language=draft["category"]["language"],
                perf_score=draft["category"]["perf_score"],
            ),
            terms=PricingTerms.from_doc(draft["terms"]),
        )
        return {"listing_id": result.listing_id}

    @app.get("/v1/adapters")
    def search(
        account=Depends(authenticate),
        domain: str | None = Query(default=None),
        language: str | None = Query(default=None),
        min_perf: float | None = Query(default=None),
        mode: str | None = Query(default=None),
    ):
        results = market.search(
            domain=domain, language=language, min_perf=min_perf, mode=mode
        )
        return [l.to_doc() for l in results]

    @app.put("/v1/adapters/{listing_id}/price")
    async def update_price(listing_id: str, request: Request,
                           account=Depends(authenticate)):
        terms = PricingTerms.from_doc(await request.json())
        listing = market.update_price(account.account_id, listing_id, terms)
        return listing.to_doc()

    @app.get("/v1/adapters/{listing_id}/price-suggestion")
    def price_suggestion(listing_id: str, account=Depends(authenticate)):
        return {
            "listing_id": listing_id,
            "suggested_per_1k_units": market.price_suggestion(listing_id),
        }

    @app.post("/v1/licenses")
    async def grant_license(request: Request, account=Depends(authenticate)):
        body = await request.json()
        lic = market.grant_license(
            account.account_id, body["listing_id"], LicenseKind(body["kind"])
        )
        return {
            "license_key": lic.license_key,
            "listing_id": lic.listing_id,
            "kind": lic.kind.value,
            "granted_at": lic.granted_at,
            "price_paid": lic.price_paid,
            "monthly_fee": lic.monthly_fee,
            "period_start": lic.period_start,
            "period_end": lic.period_end,
        }

    @app.post("/v1/infer")
    async def infer(request: Request, account=Depends(authenticate)):
        body = await request.json()
        result = market.infer(
            account.account_id,
            body["model_id"],
            body.get("adapter_ids", []),
            body["inputs"],
        )
        return {
            "outputs": result.outputs,
            "units": result.units,
            "charges": list(result.charges),
            "usage_seq": result.usage_seq,
        }

    @app.get("/v1/usage")
    def usage(period: str | None = Query(default=None),
              account=Depends(authenticate)):
        events = market.usage_for(account.account_id, period)
        return [e.to_doc() for e in events]

    @app.get("/v1/invoices/{period}")
    def invoice(period: str, account=Depends(authenticate)):
        return market.close_invoice(account.account_id, period).to_doc()

    @app.get("/v1/payouts/{period}")
    def payouts(period: str, account=Depends(authenticate)):
        return market.payout(account.account_id, period).to_doc()

    @app.get("/v1/leaderboard")
    def get_leaderboard(
        period: str = Query(...),
        n: int = Query(default=10, ge=0),
        account=Depends(authenticate),
    ):
        ranked = market.get_leaderboard(period, n)
        return [{"listing_id": lid, "units": units} for lid, units in ranked]

    @app.post("/v1/admin/advance-clock")
    async def advance_clock(request: Request, account=Depends(authenticate)):
        body = await request.json()
        now = market.advance_clock(account.account_id, int(body["seconds"]))
        return {"now": now}

    @app.get("/v1/time")
    def get_time(account=Depends(authenticate)):
        return {"now": market.now(), "mode": market.clock.mode}

    return app


def serve(market: Marketplace, host: str = "127.0.0.1",
          port: int | None = None, static_dir: str | None = None) -> None:
    """Run the gateway with uvicorn (blocking)."""
    import uvicorn

    app = create_app(market)
    if static_dir:
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="console")
    uvicorn.run(app, host=host, port=port or market.config.port, log_level="warning")
