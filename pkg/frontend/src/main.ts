/**
 * Browser bootstrap: one page, two consoles (provider / consumer), all state
 * reconstructed from the gateway on every refresh. The endpoint URL and the
 * session token are the only configuration.
 */

import { GatewayClient, GatewayError, type ListingDoc } from "./api.js";
import {
  catalogRows,
  invoiceView,
  parseInputVectors,
  receiptView,
  usageRows,
} from "./consumer.js";
import { formatTimestamp } from "./format.js";
import {
  checkManifestDraft,
  leaderboardPosition,
  payoutView,
  suggestionView,
  surfaceError,
} from "./provider.js";
import { SessionView, runButtonState, type Role } from "./session.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function text(parent: HTMLElement, tag: string, content: string,
              className = ""): HTMLElement {
  const node = document.createElement(tag);
  node.textContent = content;
  if (className) node.className = className;
  parent.appendChild(node);
  return node;
}

let client: GatewayClient | null = null;
let session: SessionView | null = null;
let catalogCache: ListingDoc[] = [];

function requireClient(): GatewayClient {
  if (!client) throw new Error("connect first");
  return client;
}

function showError(target: HTMLElement, exc: unknown): void {
  target.innerHTML = "";
  if (exc instanceof GatewayError) {
    const surface = surfaceError(exc);
    text(target, "div", `${surface.status} ${surface.errorName}: ${surface.detail}`,
         "error");
    text(target, "div", `hint: ${surface.hint}`, "hint");
    for (const row of surface.rejections) {
      text(target, "div", row.message, "violation-row");
    }
  } else {
    text(target, "div", String(exc), "error");
  }
}

async function connect(): Promise<void> {
  const url = (el<HTMLInputElement>("endpoint-url")).value.replace(/\/+$/, "");
  const token = el<HTMLInputElement>("session-token").value;
  const role = el<HTMLSelectElement>("session-role").value as Role;
  client = new GatewayClient(url, token);
  session = new SessionView(role, token);
  const status = el("connection-status");
  try {
    const health = await client.health();
    status.textContent = `connected: ${health.data.status}`;
    el("provider-console").hidden = role === "consumer";
    el("consumer-console").hidden = role === "provider";
    await refreshCatalog();
  } catch (exc) {
    status.textContent = "";
    showError(status, exc);
  }
}

async function refreshCatalog(): Promise<void> {
  const gateway = requireClient();
  const domain = el<HTMLInputElement>("filter-domain").value || undefined;
  const language = el<HTMLInputElement>("filter-language").value || undefined;
  const minPerfRaw = el<HTMLInputElement>("filter-min-perf").value;
  const mode = el<HTMLSelectElement>("filter-mode").value || undefined;
  try {
    const result = await gateway.searchListings({
      domain,
      language,
      min_perf: minPerfRaw ? Number(minPerfRaw) : undefined,
      mode,
    });
    catalogCache = result.data;
    renderCatalog();
  } catch (exc) {
    showError(el("catalog-table"), exc);
  }
}

function renderCatalog(): void {
  const table = el("catalog-table");
  table.innerHTML = "";
  const rows = catalogRows(catalogCache,
                           (lid) => session?.isLicensed(lid) ?? false);
  for (const row of rows) {
    const div = text(table, "div",
      `${row.listingId} ${row.adapterId} [${row.model}] ${row.domain}/` +
      `${row.language} perf=${row.perf} ${row.mode} ` +
      `out=${row.outrightPrice} fee=${row.monthlyFee} per1k=${row.per1kUnits}` +
      (row.licensed ? "  (licensed)" : ""),
      "catalog-row");
    const listing = catalogCache.find((l) => l.listing_id === row.listingId)!;
    const subscribe = document.createElement("button");
    subscribe.textContent = listing.terms.mode === "outright" ? "buy" : "subscribe";
    subscribe.onclick = () => license(listing);
    div.appendChild(subscribe);
    const stack = document.createElement("button");
    stack.textContent = "stack";
    stack.onclick = () => addToStack(listing);
    div.appendChild(stack);
  }
  renderStack();
}

async function license(listing: ListingDoc): Promise<void> {
  const gateway = requireClient();
  const kind = listing.terms.mode === "outright" ? "outright" : "subscription";
  try {
    const result = await gateway.grantLicense(listing.listing_id, kind);
    session?.noteLicense(result.data);
    renderCatalog();
  } catch (exc) {
    showError(el("consumer-errors"), exc);
  }
}

function addToStack(listing: ListingDoc): void {
  if (!session) return;
  const outcome = session.addToStack(listing);
  if (!outcome.ok) {
    el("consumer-errors").textContent = outcome.reason;
  }
  renderStack();
}

function renderStack(): void {
  if (!session) return;
  const target = el("stack-view");
  target.innerHTML = "";
  text(target, "div", `model: ${session.selectedModel ?? "(pick via stack)"}`);
  for (const entry of session.stack) {
    const row = text(target, "div", `${entry.listingId} (${entry.adapterId}) `);
    const remove = document.createElement("button");
    remove.textContent = "remove";
    remove.onclick = () => {
      session?.removeFromStack(entry.listingId);
      renderStack();
    };
    row.appendChild(remove);
  }
  const state = runButtonState(session);
  const run = el<HTMLButtonElement>("run-button");
  run.disabled = !state.enabled;
  el("run-blocked").textContent = state.explanation;
}

async function runInference(): Promise<void> {
  const gateway = requireClient();
  if (!session?.selectedModel) return;
  const parsed = parseInputVectors(el<HTMLTextAreaElement>("inputs-text").value);
  const target = el("receipt-view");
  if (!parsed.ok) {
    target.textContent = parsed.error;
    return;
  }
  try {
    const result = await gateway.infer(session.selectedModel,
                                       session.adapterIds(), parsed.inputs);
    const view = receiptView(result.data, session.adapterIds());
    target.innerHTML = "";
    text(target, "div", `units: ${view.units}   usage seq: ${view.usageSeq}`);
    for (const line of view.chargeLines) text(target, "div", line);
    for (const row of view.outputRows) text(target, "div", row, "output-row");
  } catch (exc) {
    showError(target, exc);
  }
}

async function loadUsageAndInvoice(): Promise<void> {
  const gateway = requireClient();
  const period = el<HTMLInputElement>("consumer-period").value;
  const usageTarget = el("usage-view");
  const invoiceTarget = el("invoice-view");
  try {
    const events = await gateway.usage(period || undefined);
    usageTarget.innerHTML = "";
    for (const row of usageRows(events.data)) {
      text(usageTarget, "div",
           `#${row.seq} ${formatTimestamp(row.timestamp)} ${row.adapterIds} ` +
           `units=${row.units} charges=${row.charges}`);
    }
    if (period) {
      const invoice = await gateway.invoice(period);
      const view = invoiceView(invoice.data);
      invoiceTarget.innerHTML = "";
      for (const line of view.lines) {
        text(invoiceTarget, "div",
             `${line.listingId}: units=${line.units} metered=${line.meteredCharge} ` +
             `fees=${line.subscriptionFee} outright=${line.outrightPurchases} ` +
             `total=${line.lineTotal}`);
      }
      text(invoiceTarget, "div", `total: ${view.totalLabel}`, "total-row");
    }
  } catch (exc) {
    showError(invoiceTarget, exc);
  }
}

async function publishBundle(): Promise<void> {
  const gateway = requireClient();
  const feedback = el("publish-feedback");
  feedback.innerHTML = "";
  const manifestText = el<HTMLTextAreaElement>("manifest-text").value;
  const check = checkManifestDraft(manifestText);
  if (!check.ok) {
    for (const problem of check.problems) text(feedback, "div", problem, "error");
    return;
  }
  const fileInput = el<HTMLInputElement>("bundle-file");
  const file = fileInput.files?.[0];
  if (!file) {
    text(feedback, "div", "choose a bundle file", "error");
    return;
  }
  const draft = {
    category: {
      domain: el<HTMLInputElement>("pub-domain").value,
      language: el<HTMLInputElement>("pub-language").value,
      perf_score: Number(el<HTMLInputElement>("pub-perf").value),
    },
    terms: {
      mode: el<HTMLSelectElement>("pub-mode").value as
        "outright" | "subscription" | "metered" | "subscription+metered",
      outright_price: Number(el<HTMLInputElement>("pub-outright").value || 0),
      monthly_fee: Number(el<HTMLInputElement>("pub-fee").value || 0),
      per_1k_units: Number(el<HTMLInputElement>("pub-per1k").value || 0),
    },
  };
  try {
    const result = await gateway.publish(file, manifestText, draft);
    text(feedback, "div", `published: ${result.data.listing_id}`, "success");
    await refreshProviderViews();
  } catch (exc) {
    showError(feedback, exc);
  }
}

async function refreshProviderViews(): Promise<void> {
  const gateway = requireClient();
  const target = el("provider-listings");
  try {
    const result = await gateway.searchListings({});
    target.innerHTML = "";
    for (const listing of result.data) {
      const row = text(target, "div",
        `${listing.listing_id} ${listing.adapter_id} ${listing.terms.mode} ` +
        `per1k=${listing.terms.per_1k_units}`);
      const suggest = document.createElement("button");
      suggest.textContent = "suggest price";
      suggest.onclick = () => showSuggestion(listing);
      row.appendChild(suggest);
    }
  } catch (exc) {
    showError(target, exc);
  }
}

async function showSuggestion(listing: ListingDoc): Promise<void> {
  const gateway = requireClient();
  const target = el("suggestion-view");
  try {
    const result = await gateway.priceSuggestion(listing.listing_id);
    const view = suggestionView(listing, result.data.suggested_per_1k_units);
    target.innerHTML = "";
    text(target, "div",
         `${view.listingId}: current=${view.currentPer1k} ` +
         `suggested=${view.suggestedPer1k}`);
    const apply = document.createElement("button");
    apply.textContent = "apply suggestion";
    apply.disabled = !view.changed;
    apply.onclick = async () => {
      try {
        await gateway.updatePrice(view.listingId, view.applyTerms);
        await refreshProviderViews();
        text(target, "div", "applied", "success");
      } catch (exc) {
        showError(target, exc);
      }
    };
    target.appendChild(apply);
  } catch (exc) {
    showError(target, exc);
  }
}

async function loadPayouts(): Promise<void> {
  const gateway = requireClient();
  const period = el<HTMLInputElement>("provider-period").value;
  const target = el("payout-view");
  if (!period) return;
  try {
    const payout = await gateway.payouts(period);
    const view = payoutView(payout.data);
    target.innerHTML = "";
    text(target, "div", `revenue share: ${view.revenueShare}`);
    for (const line of view.lines) {
      text(target, "div",
           `${line.listingId}: gross=${line.gross} cut=${line.platformCut} ` +
           `net=${line.net}`);
    }
    text(target, "div", `total net: ${view.totalNetLabel}`, "total-row");

    const board = await gateway.leaderboard(period, 10);
    const mine = new Set(view.lines.map((l) => l.listingId));
    const position = leaderboardPosition(board.data, mine);
    const boardTarget = el("leaderboard-view");
    boardTarget.innerHTML = "";
    for (const row of position.rows) {
      text(boardTarget, "div",
           `#${row.rank} ${row.listingId} units=${row.units}` +
           (row.mine ? "  (yours)" : ""));
    }
    if (position.myBest !== null) {
      text(boardTarget, "div", `your best position: #${position.myBest}`,
           "total-row");
    }
  } catch (exc) {
    showError(target, exc);
  }
}

export function wireUp(): void {
  el("connect-button").onclick = () => void connect();
  el("refresh-catalog").onclick = () => void refreshCatalog();
  el("run-button").onclick = () => void runInference();
  el("load-usage").onclick = () => void loadUsageAndInvoice();
  el("publish-button").onclick = () => void publishBundle();
  el("load-payouts").onclick = () => void loadPayouts();
}

if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", wireUp);
}
