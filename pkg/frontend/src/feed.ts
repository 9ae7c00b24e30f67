import type { Alert } from "./types.js";

// How the feed is currently receiving alerts. "live" means the push
// stream is up; "polling" means the fallback loop is doing the work;
// "reconnecting" means neither has delivered since a connection loss.
export type FeedConnection = "connecting" | "live" | "polling" | "reconnecting";

/**
 * The alert feed model: newest first, each alert exactly once, and an
 * ordering that never shuffles what the operator is already looking at.
 *
 * Alerts may arrive twice (push and poll overlap after a reconnect) and
 * out of order (a delayed push after a poll). Dedup is by alert_id.
 * Ordering is by created_ms descending, maintained by stable insertion:
 * a late arrival slides into its slot without moving any existing
 * alerts relative to each other.
 */
export class AlertFeed {
  private readonly seen = new Set<string>();
  private readonly ordered: Alert[] = [];
  private cursorMs = -1;
  connection: FeedConnection = "connecting";

  /** Add a batch from any source; returns only the genuinely new ones. */
  ingest(alerts: Alert[]): Alert[] {
    const added: Alert[] = [];
    // process oldest-first so a multi-alert batch lands in desc order
    const incoming = [...alerts].sort((a, b) => a.created_ms - b.created_ms);
    for (const alert of incoming) {
      if (this.seen.has(alert.alert_id)) {
        continue;
      }
      this.seen.add(alert.alert_id);
      this.insert(alert);
      if (alert.created_ms > this.cursorMs) {
        this.cursorMs = alert.created_ms;
      }
      added.push(alert);
    }
    return added;
  }

  private insert(alert: Alert): void {
    // first index whose alert is strictly older: insert there, keeping
    // existing elements in their relative order
    let index = this.ordered.length;
    for (let i = 0; i < this.ordered.length; i++) {
      const current = this.ordered[i];
      if (current !== undefined && current.created_ms < alert.created_ms) {
        index = i;
        break;
      }
    }
    this.ordered.splice(index, 0, alert);
  }

  /** Newest first. The returned array is a snapshot copy. */
  get alerts(): Alert[] {
    return [...this.ordered];
  }

  get isEmpty(): boolean {
    return this.ordered.length === 0;
  }

  /**
   * Cursor for the polling fallback: GET /v1/alerts?since_ms=N returns
   * strictly newer alerts, so polling with this value never re-fetches
   * what the feed already holds (and the dedup set covers races).
   */
  get sinceMs(): number {
    return this.cursorMs;
  }
}
