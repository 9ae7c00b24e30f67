import type { EdgeApi } from "./api.js";
import { AlertFeed } from "./feed.js";
import { ChatSession } from "./chat.js";
import { CommandTracker } from "./commands.js";
import type { Alert, ObservationDetail, StatusSnapshot } from "./types.js";

/**
 * Everything the dashboard shows, in one place.
 *
 * The edge is the source of truth; this state is rebuilt from the API
 * on every page load, so a refresh can never lose or invent authority.
 * A poll cycle refreshes status and commands together and then checks
 * that the local pending count agrees with what the edge reported,
 * which catches a desynced cache before the operator acts on it.
 */
export class ViewState {
  readonly feed = new AlertFeed();
  readonly chat: ChatSession;
  readonly commands: CommandTracker;
  status: StatusSnapshot | null = null;
  selected: ObservationDetail | null = null;
  selectedAlert: Alert | null = null;

  constructor(private readonly client: EdgeApi) {
    this.chat = new ChatSession(client);
    this.commands = new CommandTracker(client);
  }

  /** One poll cycle: status + command reconciliation + invariant check. */
  async poll(): Promise<void> {
    const [status, commands] = await Promise.all([
      this.client.status(),
      this.client.listCommands(),
    ]);
    this.commands.sync(commands);
    this.status = status;
    const localPending = this.commands.pending.length;
    if (localPending !== status.pending_commands) {
      throw new Error(
        `pending command count out of sync: dashboard has ${localPending}, ` +
          `edge reports ${status.pending_commands}`,
      );
    }
  }

  /** Pull any alerts the push stream may have missed. */
  async pollAlerts(): Promise<Alert[]> {
    const since = this.feed.sinceMs;
    const alerts = await this.client.listAlerts(since >= 0 ? since : undefined);
    return this.feed.ingest(alerts);
  }

  /** Open an alert: load its observation and point the chat at it. */
  async selectAlert(alert: Alert): Promise<ObservationDetail> {
    const detail = await this.client.getObservation(alert.obs_id);
    this.selectedAlert = alert;
    this.selected = detail;
    this.chat.focus(alert.obs_id);
    return detail;
  }
}
