/**
 * Provider console view-models: publication with inline validation feedback,
 * price management with one-click suggestion apply, payout statements, and
 * leaderboard position. No money arithmetic; gateway numbers verbatim.
 */

import type {
  GatewayError,
  LeaderboardRow,
  ListingDoc,
  PayoutDoc,
  PricingTermsDoc,
} from "./api.js";
import { microUsd, verbatim } from "./format.js";
import { remediationHint } from "./api.js";

export interface ManifestDraftCheck {
  ok: boolean;
  sourceCount: number;
  problems: string[];
}

/** Local pre-flight on the manifest document before upload. */
export function checkManifestDraft(text: string): ManifestDraftCheck {
  let doc: unknown;
  try {
    doc = JSON.parse(text);
  } catch (exc) {
    return { ok: false, sourceCount: 0, problems: [`not valid JSON: ${exc}`] };
  }
  const problems: string[] = [];
  const sources = (doc as { sources?: unknown }).sources;
  if (!Array.isArray(sources) || sources.length === 0) {
    problems.push("manifest must declare at least one data source");
    return { ok: false, sourceCount: 0, problems };
  }
  sources.forEach((s, i) => {
    const row = s as Record<string, unknown>;
    for (const field of ["uri", "license_id", "content_hash"]) {
      if (typeof row[field] !== "string" || row[field] === "") {
        problems.push(`source[${i}]: missing ${field}`);
      }
    }
  });
  return { ok: problems.length === 0, sourceCount: sources.length, problems };
}

export interface RejectionRow {
  sourceIndex: number;
  licenseId: string;
  message: string;
}

/** The offending source rows from a refused publication, shown inline. */
export function rejectionRows(error: GatewayError): RejectionRow[] {
  return error.violations.map((v) => ({
    sourceIndex: v.source_index,
    licenseId: v.license_id,
    message: `source[${v.source_index}]: license "${v.license_id}" is not allowlisted`,
  }));
}

export interface ErrorSurface {
  status: number;
  errorName: string;
  detail: string; // gateway text verbatim
  hint: string;
  rejections: RejectionRow[];
}

export function surfaceError(error: GatewayError): ErrorSurface {
  return {
    status: error.status,
    errorName: error.errorName,
    detail: error.detail,
    hint: remediationHint(error.status),
    rejections: rejectionRows(error),
  };
}

export interface SuggestionView {
  listingId: string;
  currentPer1k: string;
  suggestedPer1k: string;
  changed: boolean;
  /** Body for the one-click apply PUT; only the metered price moves. */
  applyTerms: PricingTermsDoc;
}

export function suggestionView(
  listing: ListingDoc,
  suggestedPer1k: number,
): SuggestionView {
  return {
    listingId: listing.listing_id,
    currentPer1k: verbatim(listing.terms.per_1k_units),
    suggestedPer1k: verbatim(suggestedPer1k),
    changed: suggestedPer1k !== listing.terms.per_1k_units,
    applyTerms: { ...listing.terms, per_1k_units: suggestedPer1k },
  };
}

export interface PayoutView {
  period: string;
  revenueShare: string;
  lines: {
    listingId: string;
    gross: string;
    platformCut: string;
    net: string;
  }[];
  totalNet: string;
  totalNetLabel: string;
}

export function payoutView(payout: PayoutDoc): PayoutView {
  return {
    period: payout.period,
    revenueShare: payout.revenue_share,
    lines: payout.lines.map((l) => ({
      listingId: l.listing_id,
      gross: verbatim(l.gross),
      platformCut: verbatim(l.platform_cut),
      net: verbatim(l.net),
    })),
    totalNet: verbatim(payout.total_net),
    totalNetLabel: microUsd(payout.total_net),
  };
}

export interface LeaderboardPosition {
  rows: { rank: number; listingId: string; units: string; mine: boolean }[];
  myBest: number | null; // best rank among my listings, 1-based
}

export function leaderboardPosition(
  rows: LeaderboardRow[],
  myListingIds: Set<string>,
): LeaderboardPosition {
  const viewRows = rows.map((r, i) => ({
    rank: i + 1,
    listingId: r.listing_id,
    units: verbatim(r.units),
    mine: myListingIds.has(r.listing_id),
  }));
  const mine = viewRows.filter((r) => r.mine);
  return { rows: viewRows, myBest: mine.length ? mine[0]!.rank : null };
}
