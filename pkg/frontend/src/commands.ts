import { EdgeApiError, type EdgeApi } from "./api.js";
import type { CommandRecord, CommandState } from "./types.js";

export interface DecideResult {
  ok: boolean;
  /** Set when the edge had already decided the command (HTTP 409). */
  conflict: boolean;
  /** Skipped because a decision for this command was already in flight. */
  duplicate: boolean;
  error?: EdgeApiError | Error;
}

/**
 * Mirror of the edge's actuation queue with optimistic decisions.
 *
 * The edge owns command state; this tracker is a display cache that
 * may briefly run ahead of it. decide() flips the local state
 * immediately, rolls back if the request fails, and adopts the edge's
 * answer on conflict (someone else decided first). A second decide()
 * for the same command while one is in flight is dropped locally, so
 * a double-click produces a single transition.
 */
export class CommandTracker {
  private readonly byId = new Map<string, CommandRecord>();
  private readonly inFlight = new Set<string>();

  constructor(private readonly client: EdgeApi) {}

  /** Reconcile from a poll. Edge state wins except mid-flight rows. */
  sync(commands: CommandRecord[]): void {
    for (const command of commands) {
      if (this.inFlight.has(command.command_id)) {
        continue; // our optimistic state is newer than this poll
      }
      this.byId.set(command.command_id, command);
    }
  }

  get pending(): CommandRecord[] {
    return [...this.byId.values()]
      .filter((c) => c.state === "pending")
      .sort((a, b) => a.created_ms - b.created_ms);
  }

  get all(): CommandRecord[] {
    return [...this.byId.values()].sort((a, b) => a.created_ms - b.created_ms);
  }

  get(commandId: string): CommandRecord | undefined {
    return this.byId.get(commandId);
  }

  async decide(
    commandId: string,
    decision: "approve" | "reject",
  ): Promise<DecideResult> {
    const current = this.byId.get(commandId);
    if (current === undefined) {
      return {
        ok: false,
        conflict: false,
        duplicate: false,
        error: new Error(`unknown command: ${commandId}`),
      };
    }
    if (this.inFlight.has(commandId)) {
      return { ok: false, conflict: false, duplicate: true };
    }

    this.inFlight.add(commandId);
    const optimistic: CommandState =
      decision === "approve" ? "approved" : "rejected";
    this.byId.set(commandId, { ...current, state: optimistic });
    try {
      const settled = await this.client.decideCommand(commandId, decision);
      this.byId.set(commandId, settled);
      return { ok: true, conflict: false, duplicate: false };
    } catch (err) {
      if (err instanceof EdgeApiError && err.status === 409) {
        // already decided on the edge: surface it and refresh the row
        await this.refresh(commandId, current);
        return { ok: false, conflict: true, duplicate: false, error: err };
      }
      this.byId.set(commandId, current); // roll the optimistic flip back
      return {
        ok: false,
        conflict: false,
        duplicate: false,
        error: err instanceof Error ? err : new Error(String(err)),
      };
    } finally {
      this.inFlight.delete(commandId);
    }
  }

  private async refresh(
    commandId: string,
    fallback: CommandRecord,
  ): Promise<void> {
    try {
      const commands = await this.client.listCommands();
      const fresh = commands.find((c) => c.command_id === commandId);
      this.byId.set(commandId, fresh ?? fallback);
    } catch {
      this.byId.set(commandId, fallback);
    }
  }
}
