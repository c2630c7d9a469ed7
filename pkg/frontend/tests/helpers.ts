import type { FetchLike } from "../src/api.js";

export interface RecordedCall {
  url: string;
  method: string;
  body: unknown;
}

/** Fetch stub that records traffic and answers from a route table. */
export function mockFetch(
  routes: Record<string, unknown | ((body: unknown) => unknown)>,
): { fetch: FetchLike; calls: RecordedCall[] } {
  const calls: RecordedCall[] = [];
  const impl: FetchLike = async (url, init) => {
    const body = init?.body ? JSON.parse(init.body as string) : null;
    calls.push({ url, method: init?.method ?? "GET", body });
    const route = routes[url];
    if (route === undefined) {
      return new Response(JSON.stringify({ error: `no route for ${url}` }), {
        status: 404,
        headers: { "content-type": "application/json" },
      });
    }
    const payload = typeof route === "function" ? route(body) : route;
    return new Response(JSON.stringify(payload), {
      status: 200,
      headers: { "content-type": "application/json" },
    });
  };
  return { fetch: impl, calls };
}

/** Every number reachable in a JSON tree (for field-provenance checks). */
export function collectNumbers(value: unknown, into = new Set<number>()): Set<number> {
  if (typeof value === "number") {
    into.add(value);
  } else if (Array.isArray(value)) {
    for (const item of value) collectNumbers(item, into);
  } else if (value !== null && typeof value === "object") {
    for (const item of Object.values(value)) collectNumbers(item, into);
  }
  return into;
}
