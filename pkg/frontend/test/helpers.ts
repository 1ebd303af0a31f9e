import type { FetchLike } from "../src/api.js";
import type { PolicyView } from "../src/types.js";

export function makePolicy(overrides: Partial<PolicyView> = {}): PolicyView {
  return {
    schema: "policy.v1",
    household_id: "household-1",
    version: 1,
    members: [
      { member_id: "child-1", role: "child", display_name: "Casey", avatar_choice: "fox" },
      { member_id: "parent-1", role: "custodian", display_name: "Pat", avatar_choice: null },
    ],
    parental: { level: "L1", l2_selections: [], set_at: null, expires_at: null },
    backend: { level: "L1", l2_selections: [], anonymize: true, set_at: null, expires_at: null },
    cybersafety: {
      level: "L1",
      enabled_mechanisms: [],
      enforce_mechanisms: [],
      set_at: null,
      expires_at: null,
    },
    consents: [],
    ...overrides,
  };
}

export interface RecordedCall {
  url: string;
  init?: RequestInit;
  body: unknown;
}

/**
 * fetch stub driven by a routing function; records every call. Return a
 * [status, body] tuple from the route, or throw to simulate network failure.
 */
export function mockFetch(
  route: (url: string, init?: RequestInit) => [number, unknown],
): { fetch: FetchLike; calls: RecordedCall[] } {
  const calls: RecordedCall[] = [];
  const fetch: FetchLike = async (url, init) => {
    const body = typeof init?.body === "string" ? JSON.parse(init.body) : undefined;
    calls.push({ url, init, body });
    const [status, doc] = route(url, init);
    return new Response(JSON.stringify(doc), {
      status,
      headers: { "Content-Type": "application/json" },
    });
  };
  return { fetch, calls };
}
