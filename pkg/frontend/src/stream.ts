import type { StreamEvent } from "./types.js";

export interface StreamHandlers {
  onEvent: (ev: StreamEvent) => void;
  /** Called once per (re)connection, after the socket is established. */
  onOpen?: () => void;
  onError?: (err: unknown) => void;
}

/** Anything that can be subscribed/closed; lets tests inject mock streams. */
export interface EventSource {
  close(): void;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/**
 * NDJSON push-stream subscription against GET /notify/stream?member=...
 *
 * The server sends one JSON object per line and blank keep-alive lines.
 * Reconnects with a fixed backoff until close() is called; queued server-side
 * backlog is drained on each connect, so no client cursor is needed beyond
 * processing events in arrival order.
 */
export class NotifyStream implements EventSource {
  private closed = false;
  private controller: AbortController | null = null;

  constructor(
    private readonly baseUrl: string,
    private readonly memberId: string,
    private readonly handlers: StreamHandlers,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
    private readonly reconnectDelayMs = 500,
  ) {
    void this.run();
  }

  close(): void {
    this.closed = true;
    this.controller?.abort();
  }

  private async run(): Promise<void> {
    while (!this.closed) {
      this.controller = new AbortController();
      try {
        const res = await this.fetchImpl(
          `${this.baseUrl}/notify/stream?member=${encodeURIComponent(this.memberId)}`,
          { signal: this.controller.signal },
        );
        if (!res.ok || !res.body) {
          throw new Error(`stream connect failed: HTTP ${res.status}`);
        }
        this.handlers.onOpen?.();
        await this.pump(res.body);
      } catch (err) {
        if (!this.closed) {
          this.handlers.onError?.(err);
        }
      }
      if (!this.closed) {
        await new Promise((resolve) => setTimeout(resolve, this.reconnectDelayMs));
      }
    }
  }

  private async pump(body: ReadableStream<Uint8Array>): Promise<void> {
    const reader = body.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    for (;;) {
      const { done, value } = await reader.read();
      if (done) {
        return;
      }
      buffer += decoder.decode(value, { stream: true });
      let newline: number;
      while ((newline = buffer.indexOf("\n")) >= 0) {
        const line = buffer.slice(0, newline).trim();
        buffer = buffer.slice(newline + 1);
        if (!line) {
          continue; // keep-alive
        }
        this.handlers.onEvent(JSON.parse(line) as StreamEvent);
      }
    }
  }
}
