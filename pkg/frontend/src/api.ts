/**
 * Typed client for the marketplace gateway.
 *
 * Every call returns the parsed body together with the raw response text so
 * views can render gateway numbers verbatim; the console never recomputes
 * money. The only configuration is the endpoint URL plus the session token.
 */

export interface PricingTermsDoc {
  mode: "outright" | "subscription" | "metered" | "subscription+metered";
  outright_price: number;
  monthly_fee: number;
  per_1k_units: number;
}

export interface CategoryDoc {
  domain: string;
  language: string;
  perf_score: number;
}

export interface ListingDoc {
  listing_id: string;
  adapter_id: string;
  provider_id: string;
  base_model_id: string;
  category: CategoryDoc;
  terms: PricingTermsDoc;
  manifest_hash: string;
  status: "active" | "delisted";
}

export interface ViolationRow {
  source_index: number;
  license_id: string;
}

export interface LicenseDoc {
  license_key: string;
  listing_id: string;
  kind: "outright" | "subscription";
  granted_at: number;
  price_paid: number;
  monthly_fee: number;
  period_start: number | null;
  period_end: number | null;
}

export interface InferResponse {
  outputs: number[][];
  units: number;
  charges: number[];
  usage_seq: number;
}

export interface UsageEventDoc {
  seq: number;
  timestamp: number;
  account_id: string;
  model_id: string;
  adapter_ids: string[];
  units: number;
  charges: number[];
}

export interface InvoiceLineDoc {
  listing_id: string;
  units: number;
  metered_charge: number;
  subscription_fee: number;
  outright_purchases: number;
  line_total: number;
}

export interface InvoiceDoc {
  account_id: string;
  period: string;
  lines: InvoiceLineDoc[];
  total: number;
}

export interface PayoutLineDoc {
  listing_id: string;
  gross: number;
  platform_cut: number;
  net: number;
}

export interface PayoutDoc {
  provider_id: string;
  period: string;
  revenue_share: string;
  lines: PayoutLineDoc[];
  total_net: number;
}

export interface LeaderboardRow {
  listing_id: string;
  units: number;
}

export interface SearchFilter {
  domain?: string;
  language?: string;
  min_perf?: number;
  mode?: string;
}

/** Parsed body plus the exact bytes the gateway sent. */
export interface Enveloped<T> {
  data: T;
  raw: string;
}

export class GatewayError extends Error {
  constructor(
    readonly status: number,
    readonly errorName: string,
    readonly detail: string,
    readonly violations: ViolationRow[] = [],
    readonly raw: string = "",
  ) {
    super(`${status} ${errorName}: ${detail}`);
  }
}

/** Operator-facing hints keyed by status; shown next to the verbatim error. */
export function remediationHint(status: number): string {
  switch (status) {
    case 402:
      return "License the listing (subscribe or buy) before using it.";
    case 403:
      return "Check the session token and make sure the account role allows this.";
    case 404:
      return "The id does not exist on this gateway; refresh the catalog.";
    case 409:
      return "State conflict: the period may not have elapsed, or the operation does not apply to this listing.";
    case 410:
      return "The listing was delisted; search the catalog for a replacement.";
    case 422:
      return "Fix the license manifest: every source must carry an allowlisted license.";
    default:
      return "Inspect the error detail; the gateway reports refusals verbatim.";
  }
}

export class GatewayClient {
  constructor(
    readonly baseUrl: string,
    readonly token: string,
  ) {}

  private headers(): Record<string, string> {
    return { Authorization: `Bearer ${this.token}` };
  }

  private async request<T>(
    method: string,
    path: string,
    init: RequestInit = {},
  ): Promise<Enveloped<T>> {
    const response = await fetch(this.baseUrl + path, {
      method,
      ...init,
      headers: { ...this.headers(), ...(init.headers ?? {}) },
    });
    const raw = await response.text();
    if (!response.ok) {
      let name = "GatewayError";
      let detail = raw;
      let violations: ViolationRow[] = [];
      try {
        const body = JSON.parse(raw);
        name = body.error ?? name;
        detail = body.detail ?? detail;
        violations = body.violations ?? [];
      } catch {
        // non-JSON error body stays verbatim in detail
      }
      throw new GatewayError(response.status, name, detail, violations, raw);
    }
    return { data: JSON.parse(raw) as T, raw };
  }

  private json(body: unknown): RequestInit {
    return {
      body: JSON.stringify(body),
      headers: { "Content-Type": "application/json" },
    };
  }

  health(): Promise<Enveloped<{ status: string }>> {
    return this.request("GET", "/v1/healthz");
  }

  searchListings(filter: SearchFilter = {}): Promise<Enveloped<ListingDoc[]>> {
    const params = new URLSearchParams();
    if (filter.domain) params.set("domain", filter.domain);
    if (filter.language) params.set("language", filter.language);
    if (filter.min_perf !== undefined) params.set("min_perf", String(filter.min_perf));
    if (filter.mode) params.set("mode", filter.mode);
    const qs = params.toString();
    return this.request("GET", `/v1/adapters${qs ? "?" + qs : ""}`);
  }

  publish(
    bundle: Uint8Array | Blob,
    manifestJson: string,
    draft: { category: CategoryDoc; terms: PricingTermsDoc },
  ): Promise<Enveloped<{ listing_id: string }>> {
    const form = new FormData();
    const blob = bundle instanceof Blob
      ? bundle
      : new Blob([bundle as BlobPart], { type: "application/octet-stream" });
    form.append("bundle", blob, "bundle");
    form.append(
      "manifest",
      new Blob([manifestJson], { type: "application/json" }),
      "manifest.json",
    );
    form.append("listing", JSON.stringify(draft));
    return this.request("POST", "/v1/adapters", { body: form });
  }

  updatePrice(
    listingId: string,
    terms: PricingTermsDoc,
  ): Promise<Enveloped<ListingDoc>> {
    return this.request("PUT", `/v1/adapters/${listingId}/price`, this.json(terms));
  }

  priceSuggestion(
    listingId: string,
  ): Promise<Enveloped<{ listing_id: string; suggested_per_1k_units: number }>> {
    return this.request("GET", `/v1/adapters/${listingId}/price-suggestion`);
  }

  grantLicense(
    listingId: string,
    kind: "outright" | "subscription",
  ): Promise<Enveloped<LicenseDoc>> {
    return this.request("POST", "/v1/licenses",
                        this.json({ listing_id: listingId, kind }));
  }

  infer(
    modelId: string,
    adapterIds: string[],
    inputs: number[][],
  ): Promise<Enveloped<InferResponse>> {
    return this.request(
      "POST",
      "/v1/infer",
      this.json({ model_id: modelId, adapter_ids: adapterIds, inputs }),
    );
  }

  usage(period?: string): Promise<Enveloped<UsageEventDoc[]>> {
    const qs = period ? `?period=${encodeURIComponent(period)}` : "";
    return this.request("GET", `/v1/usage${qs}`);
  }

  invoice(period: string): Promise<Enveloped<InvoiceDoc>> {
    return this.request("GET", `/v1/invoices/${period}`);
  }

  payouts(period: string): Promise<Enveloped<PayoutDoc>> {
    return this.request("GET", `/v1/payouts/${period}`);
  }

  leaderboard(period: string, n: number): Promise<Enveloped<LeaderboardRow[]>> {
    return this.request("GET", `/v1/leaderboard?period=${period}&n=${n}`);
  }

  advanceClock(seconds: number): Promise<Enveloped<{ now: number }>> {
    return this.request("POST", "/v1/admin/advance-clock", this.json({ seconds }));
  }

  time(): Promise<Enveloped<{ now: number; mode: string }>> {
    return this.request("GET", "/v1/time");
  }
}
