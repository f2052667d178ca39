/**
 * Verbatim rendering helpers.
 *
 * The consoles display every gateway number exactly as received: integers
 * stringify without transformation, and no money arithmetic happens here.
 * Labels only add units ("micro-USD") around the untouched digits.
 */

/** Integer from the gateway, rendered with no reformatting. */
export function verbatim(value: number): string {
  if (!Number.isSafeInteger(value)) {
    throw new Error(`expected a gateway integer, got ${value}`);
  }
  return String(value);
}

export function microUsd(value: number): string {
  return `${verbatim(value)} micro-USD`;
}

/** Extract the raw token for a JSON key, for byte-equality checks/tests. */
export function rawToken(rawJson: string, key: string): string | null {
  const match = rawJson.match(
    new RegExp(`"${key}"\\s*:\\s*(-?\\d+|"[^"]*"|\\[[^\\]]*\\])`),
  );
  return match ? match[1]! : null;
}

export function formatOutputVector(row: number[]): string {
  return row.map((v) => v.toPrecision(6)).join("  ");
}

export function formatTimestamp(utcSeconds: number): string {
  return new Date(utcSeconds * 1000).toISOString().replace(".000Z", "Z");
}
