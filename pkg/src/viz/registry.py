"""Marketplace catalog types, search, and the demand-driven price suggestion.

All money fields are integer micro-USD.  Suggestions compare an exponential
moving average of daily billed units against the trailing 30-day mean and
scale the current metered price by a clamped multiplier; they are advisory
and never auto-applied.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from enum import Enum

from .errors import InvalidShapeError, NotApplicableError

EMA_WEIGHT = 0.3
SENSITIVITY = 0.5
MULTIPLIER_FLOOR = 0.5
MULTIPLIER_CEIL = 2.0
TRAILING_DAYS = 30
PRICE_STEP = 1000  # micro-USD granularity of suggestions


class PricingMode(str, Enum):
    OUTRIGHT = "outright"
    SUBSCRIPTION = "subscription"
    METERED = "metered"
    SUBSCRIPTION_METERED = "subscription+metered"

    @property
    def has_metered(self) -> bool:
        return self in (PricingMode.METERED, PricingMode.SUBSCRIPTION_METERED)

    @property
    def has_subscription(self) -> bool:
        return self in (PricingMode.SUBSCRIPTION, PricingMode.SUBSCRIPTION_METERED)


@dataclass(frozen=True)
class PricingTerms:
    mode: PricingMode
    outright_price: int = 0
    monthly_fee: int = 0
    per_1k_units: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mode", PricingMode(self.mode))
        for name in ("outright_price", "monthly_fee", "per_1k_units"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 0:
                raise InvalidShapeError(f"{name} must be a non-negative integer, got {v!r}")
        # fields irrelevant to the mode stay zero
        if self.mode != PricingMode.OUTRIGHT and self.outright_price != 0:
            raise InvalidShapeError("outright_price only applies to outright mode")
        if not self.mode.has_subscription and self.monthly_fee != 0:
            raise InvalidShapeError("monthly_fee only applies to subscription modes")
        if not self.mode.has_metered and self.per_1k_units != 0:
            raise InvalidShapeError("per_1k_units only applies to metered modes")

    def to_doc(self) -> dict:
        return {
            "mode": self.mode.value,
            "outright_price": self.outright_price,
            "monthly_fee": self.monthly_fee,
            "per_1k_units": self.per_1k_units,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "PricingTerms":
        return cls(
            mode=PricingMode(doc["mode"]),
            outright_price=doc.get("outright_price", 0),
            monthly_fee=doc.get("monthly_fee", 0),
            per_1k_units=doc.get("per_1k_units", 0),
        )


class ListingStatus(str, Enum):
    ACTIVE = "active"
    DELISTED = "delisted"


@dataclass(frozen=True)
class Category:
    domain: str
    language: str
    perf_score: float  # provider-declared, 0..1

    def __post_init__(self):
        if not 0.0 <= self.perf_score <= 1.0:
            raise InvalidShapeError(f"perf_score must be in [0, 1], got {self.perf_score}")


@dataclass(frozen=True)
class AdapterListing:
    listing_id: str
    adapter_id: str
    provider_id: str
    base_model_id: str
    category: Category
    terms: PricingTerms
    manifest_hash: str
    status: ListingStatus = ListingStatus.ACTIVE

    def to_doc(self) -> dict:
        return {
            "listing_id": self.listing_id,
            "adapter_id": self.adapter_id,
            "provider_id": self.provider_id,
            "base_model_id": self.base_model_id,
            "category": {
                "domain": self.category.domain,
                "language": self.category.language,
                "perf_score": self.category.perf_score,
            },
            "terms": self.terms.to_doc(),
            "manifest_hash": self.manifest_hash,
            "status": self.status.value,
        }


@dataclass(frozen=True)
class DemandWindow:
    listing_id: str
    day: dt.date
    units_billed: int

    def __post_init__(self):
        if self.units_billed < 0:
            raise InvalidShapeError("units_billed must be >= 0")


def search_listings(
    listings,
    domain: str | None = None,
    language: str | None = None,
    min_perf: float | None = None,
    mode: PricingMode | None = None,
) -> list[AdapterListing]:
    """Active listings matching every supplied predicate, perf desc then id asc."""
    if mode is not None:
        mode = PricingMode(mode)
    results = [
        l
        for l in listings
        if l.status == ListingStatus.ACTIVE
        and (domain is None or l.category.domain == domain)
        and (language is None or l.category.language == language)
        and (min_perf is None or l.category.perf_score >= min_perf)
        and (mode is None or l.terms.mode == mode)
    ]
    results.sort(key=lambda l: (-l.category.perf_score, l.listing_id))
    return results


def round_to_step_half_even(value: float, step: int = PRICE_STEP) -> int:
    """Round to the nearest multiple of step, halves to even."""
    # Python's round() is round-half-even on the quotient
    return int(round(value / step)) * step


def suggest_price(terms: PricingTerms, history) -> int:
    """Advisory metered price from demand history (DemandWindows, any order).

    EMA of daily units (weight on the newest observation) over the whole
    history against the plain mean of the trailing 30 days; the current price
    scales by clamp(1 + 0.5*(ema - ref)/ref, 0.5, 2.0) and snaps to a
    1000-micro-USD grid.  Flat or absent demand returns the price untouched.
    """
    if not terms.mode.has_metered:
        raise NotApplicableError(f"no metered component in mode {terms.mode.value}")
    current = terms.per_1k_units
    windows = sorted(history, key=lambda w: w.day)
    if not windows:
        return current

    ema = float(windows[0].units_billed)
    for w in windows[1:]:
        ema = EMA_WEIGHT * w.units_billed + (1.0 - EMA_WEIGHT) * ema

    trailing = windows[-TRAILING_DAYS:]
    ref = sum(w.units_billed for w in trailing) / len(trailing)
    if ref == 0:
        return current

    multiplier = 1.0 + SENSITIVITY * (ema - ref) / ref
    multiplier = min(max(multiplier, MULTIPLIER_FLOOR), MULTIPLIER_CEIL)
    if multiplier == 1.0:
        return current
    return round_to_step_half_even(current * multiplier)
