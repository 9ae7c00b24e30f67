import type {
  Alert,
  CommandRecord,
  Diagnosis,
  PatchImage,
  SensorReading,
} from "./types.js";
import type { ChatTurn } from "./chat.js";
import type { FeedConnection } from "./feed.js";

/**
 * DOM builders. Every function takes the Document explicitly and
 * returns a detached element, so they run identically in the browser
 * and under a DOM test environment. No function here talks to the
 * network or mutates state outside the element it returns.
 */

export function imageGrid(doc: Document, image: PatchImage): HTMLElement {
  const grid = doc.createElement("div");
  grid.className = "image-grid";
  grid.style.display = "grid";
  grid.style.gridTemplateColumns = `repeat(${image.width}, 1fr)`;
  grid.setAttribute("role", "img");
  grid.setAttribute("aria-label", `${image.width}x${image.height} crop image`);
  for (const value of image.pixels) {
    const cell = doc.createElement("div");
    cell.className = "px";
    // pixels are grayscale floats in [0,1]
    const level = Math.round(Math.min(1, Math.max(0, value)) * 255);
    cell.style.backgroundColor = `rgb(${level}, ${level}, ${level})`;
    grid.appendChild(cell);
  }
  return grid;
}

export function alertCard(
  doc: Document,
  alert: Alert,
  options: { selected?: boolean; onSelect?: (alert: Alert) => void } = {},
): HTMLElement {
  const card = doc.createElement("article");
  card.className = options.selected ? "alert-card selected" : "alert-card";
  card.dataset["alertId"] = alert.alert_id;

  const badge = doc.createElement("span");
  badge.className = `urgency urgency-${alert.urgency}`;
  badge.textContent = alert.urgency;
  card.appendChild(badge);

  const title = doc.createElement("strong");
  title.className = "alert-class";
  title.textContent = alert.class_name;
  card.appendChild(title);

  const meta = doc.createElement("span");
  meta.className = "alert-meta";
  meta.textContent =
    `${alert.sensor_id} · ${(alert.confidence * 100).toFixed(0)}% · ` +
    new Date(alert.created_ms).toLocaleTimeString();
  card.appendChild(meta);

  if (options.onSelect) {
    const onSelect = options.onSelect;
    card.addEventListener("click", () => onSelect(alert));
  }
  return card;
}

export function feedStatus(
  doc: Document,
  connection: FeedConnection,
  isEmpty: boolean,
): HTMLElement {
  const wrap = doc.createElement("div");
  wrap.className = `feed-status feed-${connection}`;
  const labels: Record<FeedConnection, string> = {
    connecting: "connecting…",
    live: "live",
    polling: "polling",
    reconnecting: "reconnecting…",
  };
  const badge = doc.createElement("span");
  badge.className = "conn-badge";
  badge.textContent = labels[connection];
  wrap.appendChild(badge);
  if (isEmpty) {
    const empty = doc.createElement("p");
    empty.className = "feed-empty";
    empty.textContent = "No alerts yet. All monitored crops look healthy.";
    wrap.appendChild(empty);
  }
  return wrap;
}

export function sensorPanel(doc: Document, sensors: SensorReading): HTMLElement {
  const rows: Array<[string, string]> = [
    ["pH", sensors.ph.toFixed(2)],
    ["Temperature", `${sensors.temperature_c.toFixed(1)} °C`],
    ["Humidity", `${sensors.humidity_pct.toFixed(1)} %`],
    ["Light", `${sensors.light_klux.toFixed(1)} klx`],
    ["Sensor", sensors.sensor_id],
  ];
  const dl = doc.createElement("dl");
  dl.className = "sensor-panel";
  for (const [label, value] of rows) {
    const dt = doc.createElement("dt");
    dt.textContent = label;
    const dd = doc.createElement("dd");
    dd.textContent = value;
    dl.appendChild(dt);
    dl.appendChild(dd);
  }
  return dl;
}

export function diagnosisPanel(
  doc: Document,
  diagnosis: Diagnosis,
  className: string,
): HTMLElement {
  const panel = doc.createElement("div");
  panel.className = "diagnosis-panel";

  const headline = doc.createElement("p");
  headline.className = "diagnosis-class";
  headline.textContent =
    `${className} (${(diagnosis.confidence * 100).toFixed(1)}% confidence)`;
  panel.appendChild(headline);

  const rec = doc.createElement("p");
  rec.className = "diagnosis-rec";
  rec.textContent = `Recommended: ${diagnosis.recommendation}`;
  panel.appendChild(rec);

  const version = doc.createElement("p");
  version.className = "diagnosis-version";
  version.textContent = `model ${diagnosis.model_version}`;
  panel.appendChild(version);
  return panel;
}

export function transcriptList(doc: Document, turns: ChatTurn[]): HTMLElement {
  const list = doc.createElement("ol");
  list.className = "transcript";
  for (const turn of turns) {
    const item = doc.createElement("li");
    item.className = `turn turn-${turn.role}`;
    const text = doc.createElement("p");
    text.textContent = turn.text;
    item.appendChild(text);
    if (turn.role === "assistant" && turn.promptText) {
      // show the exact prompt the model answered, not a paraphrase
      const details = doc.createElement("details");
      const summary = doc.createElement("summary");
      summary.textContent = "prompt sent to model";
      details.appendChild(summary);
      const pre = doc.createElement("pre");
      pre.className = "prompt-text";
      pre.textContent = turn.promptText;
      details.appendChild(pre);
      item.appendChild(details);
    }
    list.appendChild(item);
  }
  return list;
}

export function commandRow(
  doc: Document,
  command: CommandRecord,
  handlers: {
    onDecide?: (commandId: string, decision: "approve" | "reject") => void;
  } = {},
): HTMLElement {
  const row = doc.createElement("div");
  row.className = `command-row state-${command.state}`;
  row.dataset["commandId"] = command.command_id;

  const desc = doc.createElement("span");
  desc.className = "command-desc";
  desc.textContent = `${command.action} @ ${command.target_sensor_id}`;
  row.appendChild(desc);

  const state = doc.createElement("span");
  state.className = "command-state";
  state.textContent = command.state;
  row.appendChild(state);

  const decidable = command.state === "pending";
  for (const decision of ["approve", "reject"] as const) {
    const button = doc.createElement("button");
    button.className = `cmd-${decision}`;
    button.textContent = decision;
    button.disabled = !decidable;
    if (handlers.onDecide) {
      const onDecide = handlers.onDecide;
      button.addEventListener("click", () =>
        onDecide(command.command_id, decision),
      );
    }
    row.appendChild(button);
  }
  return row;
}

export function toast(doc: Document, message: string): HTMLElement {
  const el = doc.createElement("div");
  el.className = "toast";
  el.setAttribute("role", "alert");
  el.textContent = message;
  return el;
}
