"""The event-sourced marketplace core shared by the HTTP gateway and the CLI.

Every state change is exactly one event-log append; startup replays the log
(and cross-checks the provenance chain) to rebuild listings, licenses, usage
and closed periods.  All writes funnel through one lock; reads see a
consistent snapshot.  A manual clock mode makes billing periods drivable in
tests and simulations.
"""

from __future__ import annotations

import datetime as dt
import json
import os
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

from . import billing
from .billing import (
    License,
    LicenseKind,
    Invoice,
    PayoutStatement,
    UsageEvent,
    subscription_window,
)
from .bundles import read_adapter_bundle
from .compliance import (
    DEFAULT_LICENSE_ALLOWLIST,
    LicenseManifest,
    ProvenanceLog,
    validate_manifest,
)
from .errors import (
    ConflictError,
    ForbiddenError,
    GoneError,
    InvalidShapeError,
    NotFoundError,
    PublicationRefusedError,
    RefuseStartError,
    TooEarlyError,
)
from .events import EventKind, EventLog
from .models import BaseModel, forward, generate_base_model
from .registry import (
    AdapterListing,
    Category,
    DemandWindow,
    ListingStatus,
    PricingTerms,
    search_listings,
    suggest_price,
)

EVENTS_FILE = "events.log"
PROVENANCE_FILE = "provenance.log"
CONFIG_FILE = "config.json"
BUNDLES_DIR = "bundles"


class Role(str, Enum):
    PROVIDER = "provider"
    CONSUMER = "consumer"
    ADMIN = "admin"


@dataclass(frozen=True)
class Account:
    account_id: str
    role: Role
    display_name: str
    token: str


@dataclass(frozen=True)
class ModelSpec:
    model_id: str
    seed: int
    layer_dims: tuple[int, ...]


@dataclass
class MarketplaceConfig:
    data_dir: str
    port: int = 8080
    allowlist: frozenset = DEFAULT_LICENSE_ALLOWLIST
    revenue_share: Fraction = billing.PLATFORM_SHARE
    accounts: list[Account] = field(default_factory=list)
    models: list[ModelSpec] = field(default_factory=list)
    clock_mode: str = "real"  # "real" | "manual"
    clock_start: int = 0

    @classmethod
    def load(cls, data_dir: str) -> "MarketplaceConfig":
        path = os.path.join(data_dir, CONFIG_FILE)
        try:
            with open(path, encoding="utf-8") as f:
                doc = json.load(f)
        except FileNotFoundError:
            raise RefuseStartError(f"no {CONFIG_FILE} in {data_dir}; run 'viz init' first")
        except json.JSONDecodeError as exc:
            raise RefuseStartError(f"unreadable {path}: {exc}")
        clock = doc.get("clock", {"mode": "real"})
        share = doc.get("revenue_share", [30, 100])
        return cls(
            data_dir=data_dir,
            port=doc.get("port", 8080),
            allowlist=frozenset(doc.get("allowlist", sorted(DEFAULT_LICENSE_ALLOWLIST))),
            revenue_share=Fraction(share[0], share[1]),
            accounts=[
                Account(a["account_id"], Role(a["role"]), a.get("display_name", ""),
                        a["token"])
                for a in doc.get("accounts", [])
            ],
            models=[
                ModelSpec(m["model_id"], m["seed"], tuple(m["layer_dims"]))
                for m in doc.get("models", [])
            ],
            clock_mode=clock.get("mode", "real"),
            clock_start=clock.get("start", 0),
        )

    def save(self) -> None:
        doc = {
            "port": self.port,
            "allowlist": sorted(self.allowlist),
            "revenue_share": [self.revenue_share.numerator,
                              self.revenue_share.denominator],
            "clock": (
                {"mode": "manual", "start": self.clock_start}
                if self.clock_mode == "manual"
                else {"mode": "real"}
            ),
            "accounts": [
                {
                    "account_id": a.account_id,
                    "role": a.role.value,
                    "display_name": a.display_name,
                    "token": a.token,
                }
                for a in self.accounts
            ],
            "models": [
                {"model_id": m.model_id, "seed": m.seed, "layer_dims": list(m.layer_dims)}
                for m in self.models
            ],
        }
        os.makedirs(self.data_dir, exist_ok=True)
        with open(os.path.join(self.data_dir, CONFIG_FILE), "w", encoding="utf-8") as f:
            json.dump(doc, f, indent=2, sort_keys=True)
            f.write("\n")


class Clock:
    """Real or manually advanced time source, in whole UTC seconds."""

    def __init__(self, mode: str = "real", start: int = 0):
        if mode not in ("real", "manual"):
            raise ValueError(f"unknown clock mode {mode!r}")
        self.mode = mode
        self._now = int(start)

    def now(self) -> int:
        if self.mode == "real":
            return int(time.time())
        return self._now

    def advance(self, seconds: int) -> int:
        if self.mode != "manual":
            raise ForbiddenError("clock can only be advanced in manual mode")
        if seconds < 0:
            raise InvalidShapeError("clock only moves forward")
        self._now += int(seconds)
        return self._now


@dataclass(frozen=True)
class InferenceResult:
    outputs: list[list[float]]
    units: int
    charges: tuple[int, ...]
    usage_seq: int


class Marketplace:
    """Replayable marketplace state plus the command surface that mutates it."""

    def __init__(self, config: MarketplaceConfig):
        self.config = config
        self._lock = threading.RLock()
        os.makedirs(os.path.join(config.data_dir, BUNDLES_DIR), exist_ok=True)

        self.models: dict[str, BaseModel] = {
            m.model_id: generate_base_model(m.model_id, m.seed, m.layer_dims)
            for m in config.models
        }
        self.accounts: dict[str, Account] = {a.account_id: a for a in config.accounts}
        self._by_token = {a.token: a for a in config.accounts}

        # state rebuilt by replay
        self.listings: dict[str, AdapterListing] = {}
        self.adapter_to_listing: dict[str, str] = {}
        self.adapters: dict[str, object] = {}  # adapter_id -> LoraAdapter
        self.licenses: dict[str, License] = {}
        self.usage_events: list[UsageEvent] = []
        self.price_journal: list[dict] = []
        self.closed_periods: set[tuple[str, str]] = set()

        self.provenance = self._load_provenance()
        self.log = EventLog.load(os.path.join(config.data_dir, EVENTS_FILE))
        for entry in self.log.entries:
            self._apply(entry)
        self._check_consistency()

        start = config.clock_start
        if self.log.entries:
            start = max(start, self.log.entries[-1].timestamp)
        self.clock = Clock(config.clock_mode, start)

    # -- startup helpers ------------------------------------------------------

    def _load_provenance(self) -> ProvenanceLog:
        path = os.path.join(self.config.data_dir, PROVENANCE_FILE)
        if not os.path.exists(path):
            return ProvenanceLog()
        with open(path, "rb") as f:
            try:
                log = ProvenanceLog.from_lines(
                    line.decode("utf-8") for line in f
                )
            except (json.JSONDecodeError, KeyError, ValueError, TypeError,
                    UnicodeDecodeError) as exc:
                raise RefuseStartError(f"{path}: unreadable provenance record: {exc}")
        if not log.verify():
            raise RefuseStartError(f"{path}: provenance chain fails verification")
        return log

    def _check_consistency(self) -> None:
        """Every active listing must trace to a verified provenance record."""
        recorded = {(r.adapter_id, r.manifest_hash) for r in self.provenance.records}
        for listing in self.listings.values():
            key = (listing.adapter_id, listing.manifest_hash)
            if key not in recorded:
                raise RefuseStartError(
                    f"listing {listing.listing_id} has no provenance record"
                )

    def _persist_provenance(self) -> None:
        path = os.path.join(self.config.data_dir, PROVENANCE_FILE)
        with open(path, "a", encoding="utf-8") as f:
            f.write(self.provenance.to_lines()[-1] + "\n")
            f.flush()
            os.fsync(f.fileno())

    def _bundle_path(self, adapter_id: str) -> str:
        return os.path.join(self.config.data_dir, BUNDLES_DIR, f"{adapter_id}.bundle")

    # -- time -----------------------------------------------------------------

    def now(self) -> int:
        return self.clock.now()

    def advance_clock(self, account_id: str, seconds: int) -> int:
        account = self._account(account_id)
        if account.role != Role.ADMIN:
            raise ForbiddenError("only admin accounts may advance the clock")
        with self._lock:
            return self.clock.advance(seconds)

    # -- lookups ---------------------------------------------------------------

    def account_by_token(self, token: str) -> Account:
        account = self._by_token.get(token)
        if account is None:
            raise ForbiddenError("unknown bearer token")
        return account

    def _account(self, account_id: str) -> Account:
        account = self.accounts.get(account_id)
        if account is None:
            raise NotFoundError(f"unknown account {account_id}")
        return account

    def _listing(self, listing_id: str) -> AdapterListing:
        listing = self.listings.get(listing_id)
        if listing is None:
            raise NotFoundError(f"unknown listing {listing_id}")
        return listing

    def _covering_license(self, account_id: str, listing_id: str, ts: int):
        for lic in self.licenses.values():
            if (
                lic.account_id == account_id
                and lic.listing_id == listing_id
                and lic.covers(ts)
            ):
                return lic
        return None

    # -- commands ---------------------------------------------------------------

    def publish(
        self,
        provider_id: str,
        bundle_bytes: bytes,
        manifest: LicenseManifest,
        category: Category,
        terms: PricingTerms,
    ) -> AdapterListing:
        account = self._account(provider_id)
        if account.role != Role.PROVIDER:
            raise ForbiddenError(f"account {provider_id} is not a provider")
        violations = validate_manifest(manifest, self.config.allowlist)
        if violations:
            raise PublicationRefusedError(violations)

        bundle = read_adapter_bundle(bundle_bytes)  # verifies the payload hash
        adapter_id = bundle.manifest["adapter_id"]
        base_model_id = bundle.manifest["base_model_id"]
        model = self.models.get(base_model_id)
        if model is None:
            raise NotFoundError(f"unknown base model {base_model_id}")

        layer = bundle.manifest["target_layer"]
        if not 0 <= layer < model.num_layers:
            raise InvalidShapeError(
                f"target layer {layer} outside model with {model.num_layers} layers"
            )
        d_in, d_out = model.layer_dims[layer], model.layer_dims[layer + 1]
        if tuple(bundle.manifest["down_shape"])[1] != d_in or tuple(
            bundle.manifest["up_shape"]
        )[0] != d_out:
            raise InvalidShapeError(
                f"adapter shapes do not fit layer {layer} ({d_in}->{d_out})"
            )

        with self._lock:
            if adapter_id in self.adapter_to_listing:
                raise ConflictError(f"adapter {adapter_id} is already published")
            ts = self.now()
            manifest_hash = manifest.digest()
            listing_id = f"lst-{len(self.listings) + 1:06d}"
            listing = AdapterListing(
                listing_id=listing_id,
                adapter_id=adapter_id,
                provider_id=provider_id,
                base_model_id=base_model_id,
                category=category,
                terms=terms,
                manifest_hash=manifest_hash,
                status=ListingStatus.ACTIVE,
            )
            with open(self._bundle_path(adapter_id), "wb") as f:
                f.write(bundle_bytes)
            self.provenance.append(adapter_id, base_model_id, manifest_hash, ts)
            self._persist_provenance()
            entry = self.log.append(
                EventKind.PUBLISH,
                ts,
                {
                    "listing": listing.to_doc(),
                    "manifest": manifest.to_doc(),
                    "bundle_sha256": bundle.manifest["payload_sha256"],
                },
            )
            self._apply(entry, bundle=bundle)
            return self.listings[listing_id]

    def update_price(
        self, provider_id: str, listing_id: str, terms: PricingTerms
    ) -> AdapterListing:
        listing = self._listing(listing_id)
        if listing.status == ListingStatus.DELISTED:
            raise GoneError(f"listing {listing_id} is delisted")
        if listing.provider_id != provider_id:
            raise ForbiddenError(f"listing {listing_id} belongs to another provider")
        with self._lock:
            entry = self.log.append(
                EventKind.PRICE_UPDATE,
                self.now(),
                {
                    "listing_id": listing_id,
                    "old_terms": listing.terms.to_doc(),
                    "new_terms": terms.to_doc(),
                },
            )
            self._apply(entry)
            return self.listings[listing_id]

    def grant_license(self, account_id: str, listing_id: str,
                      kind: LicenseKind) -> License:
        self._account(account_id)
        listing = self._listing(listing_id)
        if listing.status == ListingStatus.DELISTED:
            raise GoneError(f"listing {listing_id} is delisted")
        kind = LicenseKind(kind)
        mode = listing.terms.mode
        if kind == LicenseKind.OUTRIGHT and mode.value != "outright":
            raise ConflictError(f"listing {listing_id} is not sold outright")
        if kind == LicenseKind.SUBSCRIPTION and mode.value == "outright":
            raise ConflictError(f"listing {listing_id} is outright-only")
        with self._lock:
            ts = self.now()
            license_key = f"lic-{len(self.licenses) + 1:06d}"
            if kind == LicenseKind.OUTRIGHT:
                doc = {
                    "license_key": license_key,
                    "account_id": account_id,
                    "listing_id": listing_id,
                    "kind": kind.value,
                    "granted_at": ts,
                    "price_paid": listing.terms.outright_price,
                    "monthly_fee": 0,
                    "period_start": None,
                    "period_end": None,
                }
            else:
                start, end = subscription_window(ts)
                doc = {
                    "license_key": license_key,
                    "account_id": account_id,
                    "listing_id": listing_id,
                    "kind": kind.value,
                    "granted_at": ts,
                    "price_paid": 0,
                    "monthly_fee": listing.terms.monthly_fee,
                    "period_start": start,
                    "period_end": end,
                }
            entry = self.log.append(EventKind.LICENSE_GRANT, ts, doc)
            self._apply(entry)
            return self.licenses[license_key]

    def infer(
        self, account_id: str, model_id: str, adapter_ids, inputs
    ) -> InferenceResult:
        self._account(account_id)
        model = self.models.get(model_id)
        if model is None:
            raise NotFoundError(f"unknown model {model_id}")
        adapter_ids = list(adapter_ids)
        if len(set(adapter_ids)) != len(adapter_ids):
            raise InvalidShapeError("duplicate adapter ids in stack")
        if not inputs:
            raise InvalidShapeError("inputs must be non-empty")

        listings = []
        for adapter_id in adapter_ids:
            lid = self.adapter_to_listing.get(adapter_id)
            if lid is None:
                raise NotFoundError(f"unknown adapter {adapter_id}")
            listing = self.listings[lid]
            if listing.status == ListingStatus.DELISTED:
                raise GoneError(f"listing {lid} is delisted")
            if listing.base_model_id != model_id:
                raise InvalidShapeError(
                    f"adapter {adapter_id} targets model {listing.base_model_id}"
                )
            listings.append(listing)

        with self._lock:
            ts = self.now()
            licensed = {}
            for listing in listings:
                lic = self._covering_license(account_id, listing.listing_id, ts)
                if lic is not None:
                    licensed[listing.listing_id] = lic
            charges = billing.charge_for_request(
                listings, len(inputs), licensed, ts
            )

            stacks: dict[int, list] = {}
            for adapter_id in adapter_ids:
                adapter = self.adapters[adapter_id]
                stacks.setdefault(adapter.target_layer, []).append(adapter)
            outputs = [forward(model, stacks, x).tolist() for x in inputs]

            seq = len(self.usage_events)
            doc = UsageEvent(
                seq=seq,
                timestamp=ts,
                account_id=account_id,
                model_id=model_id,
                adapter_ids=tuple(adapter_ids),
                units=len(inputs),
                charges=tuple(charges),
            ).to_doc()
            entry = self.log.append(EventKind.USAGE, ts, doc)
            self._apply(entry)
            return InferenceResult(
                outputs=outputs, units=len(inputs), charges=tuple(charges),
                usage_seq=seq,
            )

    def close_invoice(self, account_id: str, period: str) -> Invoice:
        self._account(account_id)
        _validate_period(period)
        with self._lock:
            now = self.now()
            if not billing.period_elapsed(period, now):
                raise TooEarlyError(f"period {period} has not elapsed yet")
            invoice = billing.build_invoice(
                account_id,
                period,
                self.usage_events,
                list(self.licenses.values()),
                self.adapter_to_listing,
            )
            if (account_id, period) not in self.closed_periods:
                entry = self.log.append(
                    EventKind.PERIOD_CLOSE,
                    now,
                    {"account_id": account_id, "period": period,
                     "total": invoice.total},
                )
                self._apply(entry)
            return invoice

    def payout(self, provider_id: str, period: str) -> PayoutStatement:
        account = self._account(provider_id)
        if account.role != Role.PROVIDER:
            raise NotFoundError(f"account {provider_id} is not a provider")
        _validate_period(period)
        with self._lock:
            if not billing.period_elapsed(period, self.now()):
                raise TooEarlyError(f"period {period} has not elapsed yet")
            return billing.build_payout(
                provider_id,
                period,
                self.usage_events,
                list(self.licenses.values()),
                self.listings,
                self.config.revenue_share,
            )

    # -- queries -----------------------------------------------------------------

    def search(self, domain=None, language=None, min_perf=None, mode=None):
        with self._lock:
            return search_listings(
                self.listings.values(), domain=domain, language=language,
                min_perf=min_perf, mode=mode,
            )

    def usage_for(self, account_id: str, period: str | None = None):
        self._account(account_id)
        with self._lock:
            events = [e for e in self.usage_events if e.account_id == account_id]
            if period:
                _validate_period(period)
                start, end = billing.period_bounds(period)
                events = [e for e in events if start <= e.timestamp < end]
            return events

    def get_leaderboard(self, period: str, n: int):
        _validate_period(period)
        with self._lock:
            return billing.leaderboard(
                self.usage_events, period, n, self.adapter_to_listing
            )

    def demand_history(self, listing_id: str) -> list[DemandWindow]:
        listing = self._listing(listing_id)
        per_day: dict[dt.date, int] = {}
        with self._lock:
            for ev in self.usage_events:
                if listing.adapter_id in ev.adapter_ids:
                    day = dt.datetime.fromtimestamp(
                        ev.timestamp, dt.timezone.utc
                    ).date()
                    per_day[day] = per_day.get(day, 0) + ev.units
        return [
            DemandWindow(listing_id=listing_id, day=day, units_billed=units)
            for day, units in sorted(per_day.items())
        ]

    def price_suggestion(self, listing_id: str) -> int:
        listing = self._listing(listing_id)
        return suggest_price(listing.terms, self.demand_history(listing_id))

    def verify_logs(self) -> bool:
        with self._lock:
            return self.log.verify() and self.provenance.verify()

    # -- replay ---------------------------------------------------------------

    def _apply(self, entry, bundle=None) -> None:
        payload = entry.payload
        if entry.kind == EventKind.PUBLISH:
            doc = payload["listing"]
            listing = AdapterListing(
                listing_id=doc["listing_id"],
                adapter_id=doc["adapter_id"],
                provider_id=doc["provider_id"],
                base_model_id=doc["base_model_id"],
                category=Category(
                    domain=doc["category"]["domain"],
                    language=doc["category"]["language"],
                    perf_score=doc["category"]["perf_score"],
                ),
                terms=PricingTerms.from_doc(doc["terms"]),
                manifest_hash=doc["manifest_hash"],
                status=ListingStatus(doc["status"]),
            )
            if bundle is None:
                path = self._bundle_path(listing.adapter_id)
                try:
                    with open(path, "rb") as f:
                        bundle = read_adapter_bundle(f.read())
                except Exception as exc:
                    raise RefuseStartError(
                        f"cannot restore bundle for {listing.adapter_id}: {exc}"
                    )
                if bundle.manifest["payload_sha256"] != payload["bundle_sha256"]:
                    raise RefuseStartError(
                        f"bundle for {listing.adapter_id} does not match the log"
                    )
            self.listings[listing.listing_id] = listing
            self.adapter_to_listing[listing.adapter_id] = listing.listing_id
            self.adapters[listing.adapter_id] = bundle.to_adapter()
        elif entry.kind == EventKind.PRICE_UPDATE:
            listing_id = payload["listing_id"]
            old = self.listings[listing_id]
            self.listings[listing_id] = AdapterListing(
                listing_id=old.listing_id,
                adapter_id=old.adapter_id,
                provider_id=old.provider_id,
                base_model_id=old.base_model_id,
                category=old.category,
                terms=PricingTerms.from_doc(payload["new_terms"]),
                manifest_hash=old.manifest_hash,
                status=old.status,
            )
            self.price_journal.append(
                {"timestamp": entry.timestamp, **payload}
            )
        elif entry.kind == EventKind.LICENSE_GRANT:
            lic = License(
                license_key=payload["license_key"],
                account_id=payload["account_id"],
                listing_id=payload["listing_id"],
                kind=LicenseKind(payload["kind"]),
                granted_at=payload["granted_at"],
                price_paid=payload["price_paid"],
                monthly_fee=payload["monthly_fee"],
                period_start=payload["period_start"],
                period_end=payload["period_end"],
            )
            self.licenses[lic.license_key] = lic
        elif entry.kind == EventKind.USAGE:
            self.usage_events.append(
                UsageEvent(
                    seq=payload["seq"],
                    timestamp=payload["timestamp"],
                    account_id=payload["account_id"],
                    model_id=payload["model_id"],
                    adapter_ids=tuple(payload["adapter_ids"]),
                    units=payload["units"],
                    charges=tuple(payload["charges"]),
                )
            )
        elif entry.kind == EventKind.PERIOD_CLOSE:
            self.closed_periods.add((payload["account_id"], payload["period"]))


def _validate_period(period: str) -> None:
    try:
        billing.period_bounds(period)
    except (ValueError, IndexError):
        raise InvalidShapeError(f"period must be YYYY-MM, got {period!r}")


def init_data_dir(
    data_dir: str,
    clock_mode: str = "real",
    clock_start: int = 0,
    seed: int = 2024,
) -> MarketplaceConfig:
    """Scaffold a data directory with default accounts and two toy models."""
    config = MarketplaceConfig(
        data_dir=data_dir,
        accounts=[
            Account("admin", Role.ADMIN, "Operator", f"tok-admin-{seed}"),
            Account("prov-alice", Role.PROVIDER, "Alice", f"tok-alice-{seed}"),
            Account("prov-bob", Role.PROVIDER, "Bob", f"tok-bob-{seed}"),
            Account("con-carol", Role.CONSUMER, "Carol", f"tok-carol-{seed}"),
            Account("con-dave", Role.CONSUMER, "Dave", f"tok-dave-{seed}"),
        ],
        models=[
            ModelSpec("base-16x8", seed, (16, 32, 16, 8)),
            ModelSpec("base-8x4", seed + 1, (8, 16, 4)),
        ],
        clock_mode=clock_mode,
        clock_start=clock_start,
    )
    config.save()
    return config
