import type { FlagSubmission, OptionDoc, PolicyView } from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Error carrying the server's `{"error": ...}` detail for inline display. */
export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

async function asJson<T>(res: Response): Promise<T> {
  const body = (await res.json().catch(() => ({}))) as Record<string, unknown>;
  if (!res.ok) {
    throw new ApiError(res.status, typeof body.error === "string" ? body.error : res.statusText);
  }
  return body as T;
}

/** Client for the IWP's local HTTP API. All UI mutations go through here. */
export class IwpClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  get base(): string {
    return this.baseUrl;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.fetchImpl(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    }).then((res) => asJson<T>(res));
  }

  getPolicy(): Promise<PolicyView> {
    return this.fetchImpl(`${this.baseUrl}/policy`).then((res) => asJson<PolicyView>(res));
  }

  proposeOption(custodianId: string, option: OptionDoc): Promise<{ record_id: string }> {
    return this.post("/policy/options", { custodian_id: custodianId, option });
  }

  decideConsent(memberId: string, recordId: string, approve: boolean): Promise<PolicyView> {
    return this.post("/policy/consent", {
      member_id: memberId,
      record_id: recordId,
      approve,
    });
  }

  submitFlag(flag: FlagSubmission): Promise<{ flag_id: string }> {
    return this.post("/notify/flag", flag);
  }

  heartbeat(memberId: string): Promise<{ ok: boolean }> {
    return this.post("/heartbeat", { member_id: memberId });
  }

  fetchEvidence(evidenceUrl: string): Promise<Record<string, unknown>> {
    return this.fetchImpl(`${this.baseUrl}${evidenceUrl}`).then((res) =>
      asJson<Record<string, unknown>>(res),
    );
  }
}

/**
 * Back-end fallback client: when the IWP push stream is unreachable the
 * overlay posts outbound events straight to the back-end for analysis.
 */
export class FallbackClient {
  constructor(
    private readonly backendUrl: string,
    private readonly token: string,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  analyze(eventDoc: Record<string, unknown>): Promise<Record<string, unknown>> {
    return this.fetchImpl(`${this.backendUrl}/fallback/analyze`, {
      method: "POST",
      headers: {
        "Content-Type": "application/json",
        Authorization: `Bearer ${this.token}`,
      },
      body: JSON.stringify(eventDoc),
    }).then((res) => asJson<Record<string, unknown>>(res));
  }
}
