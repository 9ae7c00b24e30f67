import type { Alert } from "./types.js";
import type { FetchLike } from "./api.js";

export interface AlertStreamHandlers {
  onAlert: (alert: Alert) => void;
  /** Stream is connected and delivering. */
  onOpen: () => void;
  /** Stream dropped; a reconnect attempt is scheduled. */
  onDrop: () => void;
}

export interface AlertStreamOptions {
  fetchImpl?: FetchLike;
  /** Delay before a reconnect attempt, milliseconds. */
  retryMs?: number;
  setTimeoutImpl?: (fn: () => void, ms: number) => unknown;
}

/**
 * Subscriber for the edge's alert push stream (server-sent events on
 * GET /v1/alerts/stream). Parses the text/event-stream framing by hand
 * from a streamed fetch body, which works the same in the browser and
 * under node test runners where EventSource is not a global.
 *
 * Only `event: alert` messages carry data; comment lines (": connected")
 * are keepalives. On any error or stream end the subscriber reports a
 * drop and retries after a fixed delay until close() is called.
 */
export class AlertStream {
  private readonly fetchImpl: FetchLike;
  private readonly retryMs: number;
  private readonly setTimeoutImpl: (fn: () => void, ms: number) => unknown;
  private controller: AbortController | null = null;
  private closed = false;

  constructor(
    private readonly url: string,
    private readonly handlers: AlertStreamHandlers,
    options: AlertStreamOptions = {},
  ) {
    this.fetchImpl = options.fetchImpl ?? ((input, init) => fetch(input, init));
    this.retryMs = options.retryMs ?? 2000;
    this.setTimeoutImpl =
      options.setTimeoutImpl ?? ((fn, ms) => setTimeout(fn, ms));
  }

  start(): void {
    void this.run();
  }

  close(): void {
    this.closed = true;
    this.controller?.abort();
  }

  private async run(): Promise<void> {
    while (!this.closed) {
      try {
        await this.consumeOnce();
      } catch {
        // fall through to the drop/retry path below
      }
      if (this.closed) {
        return;
      }
      this.handlers.onDrop();
      await new Promise<void>((resolve) =>
        this.setTimeoutImpl(resolve, this.retryMs),
      );
    }
  }

  private async consumeOnce(): Promise<void> {
    this.controller = new AbortController();
    const resp = await this.fetchImpl(this.url, {
      signal: this.controller.signal,
      headers: { Accept: "text/event-stream" },
    });
    if (!resp.ok || resp.body === null) {
      throw new Error(`stream unavailable: HTTP ${resp.status}`);
    }
    this.handlers.onOpen();

    const reader = resp.body.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    for (;;) {
      const { done, value } = await reader.read();
      if (done) {
        return; // server closed; treat as a drop
      }
      buffer += decoder.decode(value, { stream: true });
      // events are blocks separated by a blank line
      let sep: number;
      while ((sep = buffer.indexOf("\n\n")) !== -1) {
        const block = buffer.slice(0, sep);
        buffer = buffer.slice(sep + 2);
        this.handleBlock(block);
      }
    }
  }

  private handleBlock(block: string): void {
    let eventName = "message";
    const dataLines: string[] = [];
    for (const rawLine of block.split("\n")) {
      const line = rawLine.endsWith("\r") ? rawLine.slice(0, -1) : rawLine;
      if (line.startsWith(":")) {
        continue; // comment / keepalive
      }
      if (line.startsWith("event:")) {
        eventName = line.slice("event:".length).trim();
      } else if (line.startsWith("data:")) {
        dataLines.push(line.slice("data:".length).trimStart());
      }
    }
    if (eventName !== "alert" || dataLines.length === 0) {
      return;
    }
    const alert = JSON.parse(dataLines.join("\n")) as Alert;
    this.handlers.onAlert(alert);
  }
}
