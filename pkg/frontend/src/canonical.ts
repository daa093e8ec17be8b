/** Canonical JSON helpers mirroring the server's conventions: sorted keys,
 * two-space indent, trailing newline.  Numeric formatting differs between
 * Python and JS (4.0 vs 4), so document equality is always judged on the
 * normalized structure, never on bytes. */

type Json = null | boolean | number | string | Json[] | { [k: string]: Json };

function sortValue(value: Json): Json {
  if (Array.isArray(value)) {
    return value.map(sortValue);
  }
  if (value !== null && typeof value === "object") {
    const out: { [k: string]: Json } = {};
    for (const key of Object.keys(value).sort()) {
      out[key] = sortValue((value as { [k: string]: Json })[key]!);
    }
    return out;
  }
  return value;
}

export function canonicalStringify(value: unknown): string {
  return JSON.stringify(sortValue(value as Json), null, 2) + "\n";
}

/** Structural equality after key ordering and number normalization. */
export function docEqual(a: unknown, b: unknown): boolean {
  return canonicalStringify(a) === canonicalStringify(b);
}

export function deepCopy<T>(value: T): T {
  return JSON.parse(JSON.stringify(value)) as T;
}
