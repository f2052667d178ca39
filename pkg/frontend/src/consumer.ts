/**
 * Consumer console view-models: catalog browsing, licensing, the inference
 * playground receipt, and usage/invoice views. Pure functions from gateway
 * responses to display rows; all figures pass through verbatim.
 */

import type {
  InferResponse,
  InvoiceDoc,
  ListingDoc,
  UsageEventDoc,
} from "./api.js";
import { formatOutputVector, microUsd, verbatim } from "./format.js";

export interface CatalogRow {
  listingId: string;
  adapterId: string;
  model: string;
  domain: string;
  language: string;
  perf: string;
  mode: string;
  outrightPrice: string;
  monthlyFee: string;
  per1kUnits: string;
  licensed: boolean;
}

export function catalogRows(
  listings: ListingDoc[],
  isLicensed: (listingId: string) => boolean,
): CatalogRow[] {
  return listings.map((l) => ({
    listingId: l.listing_id,
    adapterId: l.adapter_id,
    model: l.base_model_id,
    domain: l.category.domain,
    language: l.category.language,
    perf: l.category.perf_score.toFixed(2),
    mode: l.terms.mode,
    outrightPrice: verbatim(l.terms.outright_price),
    monthlyFee: verbatim(l.terms.monthly_fee),
    per1kUnits: verbatim(l.terms.per_1k_units),
    licensed: isLicensed(l.listing_id),
  }));
}

export interface ReceiptView {
  units: string;
  charges: string[];
  chargeLines: string[]; // "adapter-id: N micro-USD", itemized per adapter
  usageSeq: string;
  outputRows: string[];
}

/** The playground receipt: units, itemized charges and raw outputs. */
export function receiptView(
  response: InferResponse,
  adapterIds: string[],
): ReceiptView {
  return {
    units: verbatim(response.units),
    charges: response.charges.map(verbatim),
    chargeLines: response.charges.map(
      (c, i) => `${adapterIds[i] ?? `adapter ${i}`}: ${microUsd(c)}`,
    ),
    usageSeq: verbatim(response.usage_seq),
    outputRows: response.outputs.map(formatOutputVector),
  };
}

export interface UsageRow {
  seq: string;
  timestamp: number;
  adapterIds: string;
  units: string;
  charges: string;
}

export function usageRows(events: UsageEventDoc[]): UsageRow[] {
  return events.map((e) => ({
    seq: verbatim(e.seq),
    timestamp: e.timestamp,
    adapterIds: e.adapter_ids.join(", ") || "(base model)",
    units: verbatim(e.units),
    charges: e.charges.map(verbatim).join(", ") || "0",
  }));
}

export interface InvoiceView {
  period: string;
  lines: {
    listingId: string;
    units: string;
    meteredCharge: string;
    subscriptionFee: string;
    outrightPurchases: string;
    lineTotal: string;
  }[];
  total: string;
  totalLabel: string;
}

export function invoiceView(invoice: InvoiceDoc): InvoiceView {
  return {
    period: invoice.period,
    lines: invoice.lines.map((l) => ({
      listingId: l.listing_id,
      units: verbatim(l.units),
      meteredCharge: verbatim(l.metered_charge),
      subscriptionFee: verbatim(l.subscription_fee),
      outrightPurchases: verbatim(l.outright_purchases),
      lineTotal: verbatim(l.line_total),
    })),
    total: verbatim(invoice.total),
    totalLabel: microUsd(invoice.total),
  };
}

/** Parse playground input text: one JSON vector per line, or a JSON array. */
export function parseInputVectors(
  text: string,
): { ok: true; inputs: number[][] } | { ok: false; error: string } {
  const trimmed = text.trim();
  if (!trimmed) return { ok: false, error: "enter at least one input vector" };
  try {
    if (trimmed.startsWith("[[")) {
      const parsed = JSON.parse(trimmed);
      if (!Array.isArray(parsed) || !parsed.every(Array.isArray)) {
        return { ok: false, error: "expected a JSON array of vectors" };
      }
      return { ok: true, inputs: parsed };
    }
    const inputs = trimmed.split("\n").map((line) => JSON.parse(line.trim()));
    if (!inputs.every((v) => Array.isArray(v) && v.every(Number.isFinite))) {
      return { ok: false, error: "each line must be a JSON vector of numbers" };
    }
    return { ok: true, inputs };
  } catch (exc) {
    return { ok: false, error: `unparseable vectors: ${exc}` };
  }
}
