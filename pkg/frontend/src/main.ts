import { EdgeApiClient, EdgeApiError } from "./api.js";
import { AlertStream } from "./sse.js";
import { ViewState } from "./view.js";
import {
  alertCard,
  commandRow,
  diagnosisPanel,
  feedStatus,
  imageGrid,
  sensorPanel,
  toast,
  transcriptList,
} from "./render.js";
import type { Alert } from "./types.js";

const POLL_INTERVAL_MS = 2000;

/**
 * Wire the dashboard to one edge node and start the UI loop.
 *
 * Alerts arrive over the push stream when it is up; a 2 s poll against
 * the same since_ms cursor covers stream outages, and the feed's dedup
 * makes the overlap harmless. All rendering happens in one place
 * (render below), driven by state changes, so the DOM never holds
 * truth the models don't.
 */
export function bootstrap(doc: Document, edgeUrl: string): () => void {
  const client = new EdgeApiClient(edgeUrl);
  const state = new ViewState(client);

  const el = (id: string): HTMLElement => {
    const node = doc.getElementById(id);
    if (node === null) {
      throw new Error(`dashboard markup is missing #${id}`);
    }
    return node;
  };
  const feedBox = el("feed");
  const feedState = el("feed-state");
  const detailBox = el("detail");
  const chatBox = el("chat");
  const chatForm = el("chat-form") as HTMLFormElement;
  const chatInput = el("chat-input") as HTMLInputElement;
  const commandsBox = el("commands");
  const statusBox = el("edge-status");
  const toastBox = el("toasts");

  const showToast = (message: string): void => {
    const node = toast(doc, message);
    toastBox.appendChild(node);
    setTimeout(() => node.remove(), 6000);
  };

  const render = (): void => {
    feedState.replaceChildren(
      feedStatus(doc, state.feed.connection, state.feed.isEmpty),
    );
    feedBox.replaceChildren(
      ...state.feed.alerts.map((alert) =>
        alertCard(doc, alert, {
          selected: alert.alert_id === state.selectedAlert?.alert_id,
          onSelect: selectAlert,
        }),
      ),
    );

    if (state.selected !== null && state.selectedAlert !== null) {
      const { observation, diagnosis } = state.selected;
      detailBox.replaceChildren(
        imageGrid(doc, observation.image),
        sensorPanel(doc, observation.sensors),
        diagnosisPanel(doc, diagnosis, state.selectedAlert.class_name),
      );
    }

    chatBox.replaceChildren(transcriptList(doc, state.chat.transcript));
    commandsBox.replaceChildren(
      ...state.commands.all.map((command) =>
        commandRow(doc, command, { onDecide: decide }),
      ),
    );
    if (state.status !== null) {
      statusBox.textContent =
        `edge ${state.status.edge_id} · model ${state.status.model_version ?? "none"} ` +
        `· ${state.status.alerts_total} alerts · ` +
        `${state.status.pending_commands} pending commands`;
    }
  };

  const selectAlert = (alert: Alert): void => {
    state
      .selectAlert(alert)
      .then(render)
      .catch((err) => showToast(`could not load observation: ${err}`));
  };

  const decide = (commandId: string, decision: "approve" | "reject"): void => {
    render(); // paint the optimistic state the tracker just set
    void state.commands.decide(commandId, decision).then((result) => {
      if (result.conflict) {
        showToast("command was already decided on the edge");
      } else if (!result.ok && !result.duplicate) {
        showToast(`${decision} failed: ${result.error?.message ?? "unknown"}`);
      }
      render();
    });
  };

  chatForm.addEventListener("submit", (event) => {
    event.preventDefault();
    const question = chatInput.value.trim();
    if (question === "") {
      return;
    }
    state.chat
      .ask(question)
      .then(() => {
        chatInput.value = "";
        render();
      })
      .catch((err) => {
        // transcript is untouched on failure; just tell the operator
        if (err instanceof EdgeApiError && err.status === 503) {
          showToast("edge has no model loaded yet; try again shortly");
        } else {
          showToast(`query failed: ${err instanceof Error ? err.message : err}`);
        }
      });
  });

  const stream = new AlertStream(`${edgeUrl}/v1/events`, {
    onAlert: (alert) => {
      state.feed.ingest([alert]);
      render();
    },
    onOpen: () => {
      state.feed.connection = "live";
      render();
    },
    onDrop: () => {
      state.feed.connection = "reconnecting";
      render();
    },
  });
  stream.start();

  const pollOnce = async (): Promise<void> => {
    try {
      // the poll also backfills alerts whenever the stream is not live
      if (state.feed.connection !== "live") {
        await state.pollAlerts();
        if (state.feed.connection === "connecting") {
          state.feed.connection = "polling";
        }
      }
      await state.poll();
      render();
    } catch (err) {
      showToast(`poll failed: ${err instanceof Error ? err.message : err}`);
    }
  };
  void pollOnce();
  const timer = setInterval(() => void pollOnce(), POLL_INTERVAL_MS);

  return () => {
    clearInterval(timer);
    stream.close();
  };
}
