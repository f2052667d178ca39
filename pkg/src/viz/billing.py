"""Metering, licensing, invoicing and revenue-share settlement.

Every amount is a signed integer count of micro-USD; no floats touch money.
Metered charges round half-to-even on exact integer arithmetic; the platform's
cut floors (remainders favor the provider), which makes period conservation an
exact integer identity:  sum of provider nets + platform cuts == sum of
consumer invoice totals.

Billing periods are UTC calendar months written "YYYY-MM".  A subscription
license runs from its grant to the end of the grant's calendar month and bills
that month's fee at the terms in force when granted.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

from .errors import NotFoundError, PaymentRequiredError
from .registry import AdapterListing

Money = int  # micro-USD

PLATFORM_SHARE = Fraction(30, 100)


def div_round_half_even(num: int, den: int) -> int:
    """Exact integer division rounding halves to the even quotient."""
    if den <= 0:
        raise ValueError("denominator must be positive")
    q, r = divmod(num, den)
    if 2 * r > den or (2 * r == den and q % 2 == 1):
        q += 1
    return q


def platform_cut(gross: Money, share: Fraction = PLATFORM_SHARE) -> Money:
    """floor(share * gross); the remainder stays with the provider."""
    return (gross * share.numerator) // share.denominator


def fmt_money(amount: Money) -> str:
    sign = "-" if amount < 0 else ""
    whole, micros = divmod(abs(amount), 1_000_000)
    return f"{sign}${whole}.{micros:06d}"


# -- billing periods ---------------------------------------------------------

def period_of_timestamp(ts: int) -> str:
    d = dt.datetime.fromtimestamp(ts, dt.timezone.utc)
    return f"{d.year:04d}-{d.month:02d}"


def period_bounds(period: str) -> tuple[int, int]:
    """[start, end) UTC seconds of a calendar-month period."""
    year, month = (int(p) for p in period.split("-"))
    start = dt.datetime(year, month, 1, tzinfo=dt.timezone.utc)
    if month == 12:
        end = dt.datetime(year + 1, 1, 1, tzinfo=dt.timezone.utc)
    else:
        end = dt.datetime(year, month + 1, 1, tzinfo=dt.timezone.utc)
    return int(start.timestamp()), int(end.timestamp())


def period_elapsed(period: str, now: int) -> bool:
    return now >= period_bounds(period)[1]


# -- licenses ----------------------------------------------------------------

class LicenseKind(str, Enum):
    OUTRIGHT = "outright"
    SUBSCRIPTION = "subscription"


@dataclass(frozen=True)
class License:
    """A grant pinning the prices in force at purchase time."""

    license_key: str
    account_id: str
    listing_id: str
    kind: LicenseKind
    granted_at: int
    price_paid: Money = 0  # outright price at grant
    monthly_fee: Money = 0  # subscription fee locked at grant
    period_start: int | None = None
    period_end: int | None = None

    def covers(self, ts: int) -> bool:
        if self.kind == LicenseKind.OUTRIGHT:
            return True
        return self.period_start <= ts < self.period_end


def subscription_window(granted_at: int) -> tuple[int, int]:
    """Grant time to the end of the grant's calendar month."""
    return granted_at, period_bounds(period_of_timestamp(granted_at))[1]


# -- usage -------------------------------------------------------------------

@dataclass(frozen=True)
class UsageEvent:
    seq: int
    timestamp: int
    account_id: str
    model_id: str
    adapter_ids: tuple[str, ...]
    units: int
    charges: tuple[Money, ...]  # aligned 1:1 with adapter_ids

    def __post_init__(self):
        if len(self.charges) != len(self.adapter_ids):
            raise ValueError("charges must align 1:1 with adapter_ids")

    def to_doc(self) -> dict:
        return {
            "seq": self.seq,
            "timestamp": self.timestamp,
            "account_id": self.account_id,
            "model_id": self.model_id,
            "adapter_ids": list(self.adapter_ids),
            "units": self.units,
            "charges": list(self.charges),
        }


def charge_for_request(
    listings: list[AdapterListing],
    units: int,
    licenses_by_listing: dict[str, License],
    now: int,
) -> list[Money]:
    """Per-adapter charges for one request; every listing must be licensed.

    Metered listings bill round-half-even(units * per_1k / 1000); outright
    licenses use at no per-request cost.  Charges are independent across the
    stack.
    """
    charges = []
    for listing in listings:
        lic = licenses_by_listing.get(listing.listing_id)
        if lic is None or not lic.covers(now):
            raise PaymentRequiredError(
                f"no valid license for listing {listing.listing_id}"
            )
        if lic.kind == LicenseKind.OUTRIGHT:
            charges.append(0)
        else:
            charges.append(div_round_half_even(units * listing.terms.per_1k_units, 1000))
    return charges


# -- period documents --------------------------------------------------------

@dataclass(frozen=True)
class InvoiceLine:
    listing_id: str
    units: int
    metered_charge: Money
    subscription_fee: Money
    outright_purchases: Money

    @property
    def line_total(self) -> Money:
        return self.metered_charge + self.subscription_fee + self.outright_purchases


@dataclass(frozen=True)
class Invoice:
    account_id: str
    period: str
    lines: tuple[InvoiceLine, ...]
    total: Money

    def to_doc(self) -> dict:
        return {
            "account_id": self.account_id,
            "period": self.period,
            "lines": [
                {
                    "listing_id": l.listing_id,
                    "units": l.units,
                    "metered_charge": l.metered_charge,
                    "subscription_fee": l.subscription_fee,
                    "outright_purchases": l.outright_purchases,
                    "line_total": l.line_total,
                }
                for l in self.lines
            ],
            "total": self.total,
        }


@dataclass(frozen=True)
class PayoutLine:
    listing_id: str
    gross: Money
    platform_cut: Money
    net: Money


@dataclass(frozen=True)
class PayoutStatement:
    provider_id: str
    period: str
    lines: tuple[PayoutLine, ...]
    total_net: Money
    revenue_share: str  # exact rational, e.g. "30/100"

    def to_doc(self) -> dict:
        return {
            "provider_id": self.provider_id,
            "period": self.period,
            "revenue_share": self.revenue_share,
            "lines": [
                {
                    "listing_id": l.listing_id,
                    "gross": l.gross,
                    "platform_cut": l.platform_cut,
                    "net": l.net,
                }
                for l in self.lines
            ],
            "total_net": self.total_net,
        }


def _accrue(
    period: str,
    events,
    licenses,
    adapter_to_listing: dict[str, str],
    account_id: str | None = None,
):
    """Accumulate {listing_id: [units, metered, fees, outright]} for a period."""
    start, end = period_bounds(period)
    acc: dict[str, list[int]] = {}

    def bucket(listing_id: str) -> list[int]:
        return acc.setdefault(listing_id, [0, 0, 0, 0])

    for ev in events:
        if not start <= ev.timestamp < end:
            continue
        if account_id is not None and ev.account_id != account_id:
            continue
        for adapter_id, charge in zip(ev.adapter_ids, ev.charges):
            b = bucket(adapter_to_listing[adapter_id])
            b[0] += ev.units
            b[1] += charge

    for lic in licenses:
        if account_id is not None and lic.account_id != account_id:
            continue
        if lic.kind == LicenseKind.SUBSCRIPTION:
            if period_of_timestamp(lic.period_start) == period:
                bucket(lic.listing_id)[2] += lic.monthly_fee
        elif start <= lic.granted_at < end:
            bucket(lic.listing_id)[3] += lic.price_paid
    return acc


def build_invoice(
    account_id: str,
    period: str,
    events,
    licenses,
    adapter_to_listing: dict[str, str],
) -> Invoice:
    """Aggregate one account's activity in a period; deterministic and idempotent."""
    acc = _accrue(period, events, licenses, adapter_to_listing, account_id=account_id)
    lines = tuple(
        InvoiceLine(
            listing_id=lid,
            units=vals[0],
            metered_charge=vals[1],
            subscription_fee=vals[2],
            outright_purchases=vals[3],
        )
        for lid, vals in sorted(acc.items())
    )
    return Invoice(
        account_id=account_id,
        period=period,
        lines=lines,
        total=sum(l.line_total for l in lines),
    )


def build_payout(
    provider_id: str,
    period: str,
    events,
    licenses,
    listings_by_id: dict[str, AdapterListing],
    share: Fraction = PLATFORM_SHARE,
) -> PayoutStatement:
    """Settle one provider's listings for a period under the revenue share."""
    owned = sorted(
        lid for lid, l in listings_by_id.items() if l.provider_id == provider_id
    )
    if not owned:
        raise NotFoundError(f"provider {provider_id} has no listings")
    adapter_to_listing = {
        l.adapter_id: lid for lid, l in listings_by_id.items()
    }
    acc = _accrue(period, events, licenses, adapter_to_listing)
    lines = []
    for lid in owned:
        vals = acc.get(lid, [0, 0, 0, 0])
        gross = vals[1] + vals[2] + vals[3]
        cut = platform_cut(gross, share)
        lines.append(PayoutLine(listing_id=lid, gross=gross, platform_cut=cut,
                                net=gross - cut))
    return PayoutStatement(
        provider_id=provider_id,
        period=period,
        lines=tuple(lines),
        total_net=sum(l.net for l in lines),
        revenue_share=f"{share.numerator}/{share.denominator}",
    )


def leaderboard(
    events,
    period: str,
    n: int,
    adapter_to_listing: dict[str, str],
) -> list[tuple[str, int]]:
    """Top-n (listing_id, units) by units billed, ties broken by listing id."""
    start, end = period_bounds(period)
    units: dict[str, int] = {}
    for ev in events:
        if not start <= ev.timestamp < end:
            continue
        for adapter_id in ev.adapter_ids:
            lid = adapter_to_listing[adapter_id]
            units[lid] = units.get(lid, 0) + ev.units
    ranked = sorted(units.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:n]
