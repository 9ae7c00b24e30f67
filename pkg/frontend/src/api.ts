import type {
  Alert,
  CommandRecord,
  ObservationDetail,
  QueryResponse,
  StatusSnapshot,
} from "./types.js";

// Every endpoint reports failures as {"error": {"code", "detail"}};
// this carries that envelope plus the HTTP status.
export class EdgeApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    readonly detail: string,
  ) {
    super(`${code}: ${detail}`);
    this.name = "EdgeApiError";
  }
}

export type FetchLike = (
  input: string,
  init?: RequestInit,
) => Promise<Response>;

/** What the dashboard needs from an edge node. */
export interface EdgeApi {
  status(): Promise<StatusSnapshot>;
  listAlerts(sinceMs?: number): Promise<Alert[]>;
  getObservation(obsId: string): Promise<ObservationDetail>;
  listCommands(): Promise<CommandRecord[]>;
  query(text: string, obsId?: string): Promise<QueryResponse>;
  decideCommand(
    commandId: string,
    decision: "approve" | "reject",
  ): Promise<CommandRecord>;
}

export class EdgeApiClient implements EdgeApi {
  private readonly fetchImpl: FetchLike;

  constructor(
    readonly baseUrl: string,
    fetchImpl?: FetchLike,
  ) {
    // bind lazily so the browser's fetch keeps its window receiver
    this.fetchImpl = fetchImpl ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.body = JSON.stringify(body);
      init.headers = { "Content-Type": "application/json" };
    }
    const resp = await this.fetchImpl(this.baseUrl + path, init);
    let doc: unknown = null;
    try {
      doc = await resp.json();
    } catch {
      // fall through; missing body handled below
    }
    if (!resp.ok) {
      const envelope = (doc as { error?: { code?: string; detail?: string } })
        ?.error;
      throw new EdgeApiError(
        resp.status,
        envelope?.code ?? "http_error",
        envelope?.detail ?? `HTTP ${resp.status}`,
      );
    }
    return doc as T;
  }

  status(): Promise<StatusSnapshot> {
    return this.request<StatusSnapshot>("GET", "/v1/status");
  }

  async listAlerts(sinceMs?: number): Promise<Alert[]> {
    const query = sinceMs === undefined ? "" : `?since_ms=${sinceMs}`;
    const doc = await this.request<{ alerts: Alert[] }>(
      "GET",
      `/v1/alerts${query}`,
    );
    return doc.alerts;
  }

  getObservation(obsId: string): Promise<ObservationDetail> {
    return this.request<ObservationDetail>(
      "GET",
      `/v1/observations/${encodeURIComponent(obsId)}`,
    );
  }

  async listCommands(): Promise<CommandRecord[]> {
    const doc = await this.request<{ commands: CommandRecord[] }>(
      "GET",
      "/v1/commands",
    );
    return doc.commands;
  }

  query(text: string, obsId?: string): Promise<QueryResponse> {
    const body: { text: string; obs_id?: string } = { text };
    if (obsId !== undefined) {
      body.obs_id = obsId;
    }
    return this.request<QueryResponse>("POST", "/v1/query", body);
  }

  async decideCommand(
    commandId: string,
    decision: "approve" | "reject",
  ): Promise<CommandRecord> {
    const doc = await this.request<{ command: CommandRecord }>(
      "POST",
      `/v1/commands/${encodeURIComponent(commandId)}/${decision}`,
    );
    return doc.command;
  }

  postObservation(
    observation: unknown,
  ): Promise<{ queued: boolean; obs_id: string }> {
    return this.request("POST", "/v1/observations", observation);
  }
}
