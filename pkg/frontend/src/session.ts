/**
 * Per-tab session state: role, token, selected base model, and the composed
 * adapter stack. The stack invariant (consumers compose only licensed
 * listings) is enforced here so the run button can never submit an
 * unlicensed stack; everything else reloads from the gateway on refresh.
 */

import type { LicenseDoc, ListingDoc } from "./api.js";

export type Role = "provider" | "consumer" | "admin";

export interface StackEntry {
  listingId: string;
  adapterId: string;
}

export class SessionView {
  readonly stack: StackEntry[] = [];
  private readonly licensedListings = new Set<string>();
  selectedModel: string | null = null;

  constructor(
    readonly role: Role,
    readonly token: string,
  ) {}

  noteLicense(license: Pick<LicenseDoc, "listing_id">): void {
    this.licensedListings.add(license.listing_id);
  }

  isLicensed(listingId: string): boolean {
    return this.licensedListings.has(listingId);
  }

  selectModel(modelId: string): void {
    if (this.selectedModel !== modelId) {
      this.selectedModel = modelId;
      this.stack.length = 0; // stacks are per base model
    }
  }

  /** Add to the stack; consumers may only stack licensed listings. */
  addToStack(listing: ListingDoc): { ok: true } | { ok: false; reason: string } {
    if (this.role === "consumer" && !this.isLicensed(listing.listing_id)) {
      return {
        ok: false,
        reason: `payment-required: no license for ${listing.listing_id}; ` +
          "subscribe or buy it first",
      };
    }
    if (this.selectedModel && listing.base_model_id !== this.selectedModel) {
      return {
        ok: false,
        reason: `listing targets ${listing.base_model_id}, ` +
          `session model is ${this.selectedModel}`,
      };
    }
    if (this.stack.some((e) => e.listingId === listing.listing_id)) {
      return { ok: false, reason: "already in the stack" };
    }
    if (!this.selectedModel) this.selectedModel = listing.base_model_id;
    this.stack.push({
      listingId: listing.listing_id,
      adapterId: listing.adapter_id,
    });
    return { ok: true };
  }

  removeFromStack(listingId: string): void {
    const i = this.stack.findIndex((e) => e.listingId === listingId);
    if (i >= 0) this.stack.splice(i, 1);
  }

  adapterIds(): string[] {
    return this.stack.map((e) => e.adapterId);
  }
}

/**
 * Run-button state for the inference playground: disabled with a
 * payment-required explanation whenever any stacked listing is unlicensed.
 */
export function runButtonState(
  session: SessionView,
): { enabled: boolean; blockedBy: string[]; explanation: string } {
  const blockedBy = session.stack
    .filter((e) => !session.isLicensed(e.listingId))
    .map((e) => e.listingId);
  if (session.role === "consumer" && blockedBy.length > 0) {
    return {
      enabled: false,
      blockedBy,
      explanation:
        "payment-required: license these listings to run: " + blockedBy.join(", "),
    };
  }
  if (!session.selectedModel) {
    return { enabled: false, blockedBy: [], explanation: "select a base model" };
  }
  return { enabled: true, blockedBy: [], explanation: "" };
}
